//! Similarity scores between feature vectors. Every metric is oriented so that
//! larger means more similar.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::subspace::FeatureVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Cosine,
    NegEuclidean,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::NegEuclidean => "neg_euclidean",
        }
    }

    pub fn parse(s: &str) -> Option<Metric> {
        match s {
            "cosine" => Some(Metric::Cosine),
            "neg_euclidean" => Some(Metric::NegEuclidean),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchScore {
    pub value: f64,
    pub classifier_id: usize,
}

pub fn score(a: &FeatureVector, b: &FeatureVector, metric: Metric) -> Result<f64> {
    let (a, b) = (a.components(), b.components());
    if a.len() != b.len() {
        return Err(Error::mismatch(a.len(), b.len()));
    }
    match metric {
        Metric::Cosine => {
            let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::ZeroVector);
            }
            let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            Ok((d / (na * nb)).clamp(-1.0, 1.0))
        }
        Metric::NegEuclidean => {
            let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            Ok(-d2.sqrt())
        }
    }
}

/// [`score`] tagged with the producing extractor's index.
pub fn match_score(a: &FeatureVector, b: &FeatureVector, metric: Metric, classifier_id: usize) -> Result<MatchScore> {
    Ok(MatchScore {
        value: score(a, b, metric)?,
        classifier_id,
    })
}

/// One exported score: a query/target pair as seen by one classifier (or the
/// fused result, `classifier_id = "fused"`).
#[derive(Debug, Clone, Serialize)]
pub struct ScoreRecord {
    pub query_id: String,
    pub target_id: String,
    pub classifier_id: String,
    pub score: f64,
    pub same_identity_flag: u8,
}

/// Writes `query_id,target_id,classifier_id,score,same_identity_flag` rows with a header.
pub fn write_score_csv<W: Write>(writer: W, records: &[ScoreRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

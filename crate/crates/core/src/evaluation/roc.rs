use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RocPoint {
    pub threshold: f64,
    /// Fraction of impostor scores `>= threshold`.
    pub far: f64,
    /// Fraction of genuine scores `< threshold`.
    pub frr: f64,
}

/// Empirical ROC with one point per distinct score, thresholds ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<RocPoint>,
    n_genuine: usize,
    n_impostor: usize,
}

impl RocCurve {
    pub fn points(&self) -> &[RocPoint] {
        &self.points
    }

    pub fn n_genuine(&self) -> usize {
        self.n_genuine
    }

    pub fn n_impostor(&self) -> usize {
        self.n_impostor
    }
}

fn sorted(scores: &[f64], what: &'static str) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::EmptyScores(what));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::param("scores", format!("{what} score {bad} is not a number")));
    }
    let mut v = scores.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

pub fn roc(genuine: &[f64], impostor: &[f64]) -> Result<RocCurve> {
    let gen = sorted(genuine, "genuine")?;
    let imp = sorted(impostor, "impostor")?;
    let mut thresholds: Vec<f64> = gen.iter().chain(&imp).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (ng, ni) = (gen.len(), imp.len());
    // Two cursors: `g` genuine and `i` impostor scores lie strictly below the threshold.
    let (mut g, mut i) = (0, 0);
    let points = thresholds
        .into_iter()
        .map(|t| {
            while g < ng && gen[g] < t {
                g += 1;
            }
            while i < ni && imp[i] < t {
                i += 1;
            }
            RocPoint {
                threshold: t,
                far: (ni - i) as f64 / ni as f64,
                frr: g as f64 / ng as f64,
            }
        })
        .collect();
    Ok(RocCurve {
        points,
        n_genuine: ng,
        n_impostor: ni,
    })
}

/// Equal error rate: the FAR where `FAR - FRR` changes sign, linearly
/// interpolated between the bracketing thresholds. A final point above every
/// score (FAR 0, FRR 1) closes the curve.
pub fn eer(curve: &RocCurve) -> f64 {
    let sentinel = RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    };
    let pts: Vec<RocPoint> = curve.points.iter().copied().chain([sentinel]).collect();
    // The lowest threshold accepts every impostor and no genuine score is below it,
    // so `FAR - FRR = 1` there.
    for w in pts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let db = b.far - b.frr;
        if db == 0.0 {
            return b.far;
        }
        if db < 0.0 {
            let da = a.far - a.frr;
            let t = da / (da - db);
            return a.far + t * (b.far - a.far);
        }
    }
    unreachable!("the sentinel point always has FAR < FRR")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VerificationRate {
    pub far_target: f64,
    /// `1 - FRR` at the chosen threshold.
    pub value: f64,
    pub threshold: f64,
    /// FAR actually achieved at the chosen threshold.
    pub far: f64,
    /// False when no threshold reaches `FAR <= far_target`; the strictest
    /// threshold is used instead.
    pub reachable: bool,
}

/// Verification rate at the most permissive threshold whose FAR does not
/// exceed `far_target`.
pub fn vr_at_far(curve: &RocCurve, far_target: f64) -> VerificationRate {
    let (p, reachable) = match curve.points.iter().find(|p| p.far <= far_target) {
        Some(p) => (*p, true),
        None => (*curve.points.last().expect("roc curves are non-empty"), false),
    };
    VerificationRate {
        far_target,
        value: 1.0 - p.frr,
        threshold: p.threshold,
        far: p.far,
        reachable,
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_separation() {
        let c = roc(&[1.0; 5], &[0.0; 5]).unwrap();
        assert_eq!(eer(&c), 0.0);
        let vr = vr_at_far(&c, 0.001);
        assert_eq!(vr.value, 1.0);
        assert!(vr.reachable);
    }

    #[test]
    fn identical_distributions() {
        let s = [0.1, 0.4, 0.4, 0.7];
        let c = roc(&s, &s).unwrap();
        assert_eq!(eer(&c), 0.5);
        let vr = vr_at_far(&c, 0.001);
        assert!(!vr.reachable);
        assert_eq!(vr.value, 0.25);
    }

    #[test]
    fn three_by_three_example() {
        let (g, i) = ([0.9, 0.8, 0.4], [0.5, 0.3, 0.2]);
        let c = roc(&g, &i).unwrap();
        assert_eq!(c.points().len(), 6);
        for (p, (t, fa, fr)) in c.points().iter().zip(oracle::sweep(&g, &i)) {
            assert_eq!((p.threshold, p.far, p.frr), (t, fa, fr));
        }
        assert!((eer(&c) - 1.0 / 3.0).abs() < 1e-15);
        let vr = vr_at_far(&c, 0.34);
        assert_eq!((vr.value, vr.reachable), oracle::vr(&g, &i, 0.34));
        assert_eq!(vr.value, 1.0);
    }

    #[test]
    fn ties_count_as_accept() {
        let c = roc(&[0.5], &[0.5]).unwrap();
        assert_eq!(c.points(), &[RocPoint { threshold: 0.5, far: 1.0, frr: 0.0 }]);
        assert_eq!(eer(&c), 0.5);
    }

    #[test]
    fn empty_lists_are_errors() {
        assert!(matches!(roc(&[], &[1.0]), Err(Error::EmptyScores("genuine"))));
        assert!(matches!(roc(&[1.0], &[]), Err(Error::EmptyScores("impostor"))));
        assert!(roc(&[f64::NAN], &[1.0]).is_err());
    }

    fn scores() -> impl Strategy<Value = Vec<f64>> {
        // Coarse grid values produce plenty of ties.
        prop::collection::vec((0u8..20).prop_map(|v| v as f64 / 20.0), 1..50)
    }

    proptest! {
        #[test]
        fn curve_is_monotone(g in scores(), i in scores()) {
            let c = roc(&g, &i).unwrap();
            for w in c.points().windows(2) {
                prop_assert!(w[0].threshold < w[1].threshold);
                prop_assert!(w[1].far <= w[0].far);
                prop_assert!(w[1].frr >= w[0].frr);
            }
            for p in c.points() {
                prop_assert!((0.0..=1.0).contains(&p.far) && (0.0..=1.0).contains(&p.frr));
            }
        }

        #[test]
        fn agrees_with_exhaustive_sweep(g in scores(), i in scores(), target in 0.001f64..0.999) {
            let c = roc(&g, &i).unwrap();
            prop_assert!((eer(&c) - oracle::eer(&g, &i)).abs() <= 1e-12);
            let vr = vr_at_far(&c, target);
            prop_assert_eq!((vr.value, vr.reachable), oracle::vr(&g, &i, target));
        }
    }
}

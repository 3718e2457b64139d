//! Pipeline configuration as flat `key = value` text with dotted section keys.
//!
//! ```text
//! seed = 42
//! preprocessing = ingi            # none | hist_eq | ingi
//! ingi.smoothing_sigma = 4
//! extractor.0 = pca
//! extractor.0.k = 10
//! extractor.1 = kpca
//! extractor.1.kernel = rbf        # linear | polynomial | rbf
//! extractor.1.gamma = auto
//! extractor.1.k = 10
//! metric = cosine                 # cosine | neg_euclidean
//! fusion = llr                    # none | weighted_sum | llr
//! ```
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imaging::Point;
use crate::ingi::IngiParams;
use crate::scoring::Metric;

pub const DEFAULT_HIST_LEVELS: usize = 256;
pub const DEFAULT_FAR_TARGETS: [f64; 2] = [0.001, 0.01];

#[derive(Debug, Clone, PartialEq)]
pub enum Preprocessing {
    None,
    HistEq { levels: usize },
    Ingi(IngiParams),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelSpec {
    Linear,
    Polynomial { degree: u32, coef0: f64 },
    /// `gamma: None` resolves to `1 / (dim · variance)` at fit time.
    Rbf { gamma: Option<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtractorSpec {
    Pca { k: usize },
    Lda { k: usize },
    Pclda { pca_k: usize, lda_k: usize },
    Kpca { kernel: KernelSpec, k: usize },
}

impl ExtractorSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ExtractorSpec::Pca { .. } => "pca",
            ExtractorSpec::Lda { .. } => "lda",
            ExtractorSpec::Pclda { .. } => "pclda",
            ExtractorSpec::Kpca { .. } => "kpca",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionRule {
    None,
    WeightedSum { znorm: bool },
    Llr,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alignment {
    pub left_eye: Point,
    pub right_eye: Point,
    pub size: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub preprocessing: Preprocessing,
    pub extractors: Vec<ExtractorSpec>,
    pub metric: Metric,
    pub fusion: FusionRule,
    pub alignment: Option<Alignment>,
    pub seed: u64,
    pub far_targets: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preprocessing: Preprocessing::None,
            extractors: vec![ExtractorSpec::Pca { k: 10 }],
            metric: Metric::Cosine,
            fusion: FusionRule::None,
            alignment: None,
            seed: 0,
            far_targets: DEFAULT_FAR_TARGETS.to_vec(),
        }
    }
}

struct Entries {
    map: BTreeMap<String, String>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key)
    }

    fn take_parsed<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::config(key, format!("cannot parse `{v}`"))),
        }
    }

    fn take_or<T: FromStr>(&mut self, key: &str, default: T) -> Result<T> {
        Ok(self.take_parsed(key)?.unwrap_or(default))
    }

    fn require<T: FromStr>(&mut self, key: &str) -> Result<T> {
        self.take_parsed(key)?
            .ok_or_else(|| Error::config(key, "missing required key"))
    }
}

fn parse_pair<T: FromStr>(key: &str, value: &str) -> Result<(T, T)> {
    let parts: Vec<&str> = value.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [a, b] => match (a.parse(), b.parse()) {
            (Ok(a), Ok(b)) => Ok((a, b)),
            _ => Err(Error::config(key, format!("cannot parse pair `{value}`"))),
        },
        _ => Err(Error::config(key, format!("expected `a, b`, got `{value}`"))),
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", lineno + 1), "expected `key = value`"))?;
            let key = k.trim().to_string();
            if map.insert(key.clone(), v.trim().to_string()).is_some() {
                return Err(Error::config(key, "duplicate key"));
            }
        }
        let mut e = Entries { map };

        let seed = e.take_or("seed", 0u64)?;
        let preprocessing = match e.take("preprocessing").as_deref().unwrap_or("none") {
            "none" => Preprocessing::None,
            "hist_eq" => Preprocessing::HistEq {
                levels: e.take_or("hist_eq.levels", DEFAULT_HIST_LEVELS)?,
            },
            "ingi" => {
                let d = IngiParams::default();
                Preprocessing::Ingi(IngiParams {
                    smoothing_sigma: e.take_or("ingi.smoothing_sigma", d.smoothing_sigma)?,
                    epsilon: e.take_or("ingi.epsilon", d.epsilon)?,
                    diffusion_iterations: e.take_or("ingi.diffusion_iterations", d.diffusion_iterations)?,
                    diffusion_kappa: e.take_or("ingi.diffusion_kappa", d.diffusion_kappa)?,
                    diffusion_lambda: e.take_or("ingi.diffusion_lambda", d.diffusion_lambda)?,
                })
            }
            other => return Err(Error::config("preprocessing", format!("unknown value `{other}`"))),
        };

        let mut extractors = Vec::new();
        for i in 0.. {
            let base = format!("extractor.{i}");
            let Some(kind) = e.take(&base) else { break };
            let key = |p: &str| format!("{base}.{p}");
            let spec = match kind.as_str() {
                "pca" => ExtractorSpec::Pca { k: e.require(&key("k"))? },
                "lda" => ExtractorSpec::Lda { k: e.require(&key("k"))? },
                "pclda" => ExtractorSpec::Pclda {
                    pca_k: e.require(&key("pca_k"))?,
                    lda_k: e.require(&key("lda_k"))?,
                },
                "kpca" => {
                    let kernel = match e.take(&key("kernel")).as_deref().unwrap_or("rbf") {
                        "linear" => KernelSpec::Linear,
                        "polynomial" => KernelSpec::Polynomial {
                            degree: e.require(&key("degree"))?,
                            coef0: e.take_or(&key("coef0"), 1.0)?,
                        },
                        "rbf" => {
                            let gamma = match e.take(&key("gamma")).as_deref() {
                                None | Some("auto") => None,
                                Some(g) => Some(g.parse().map_err(|_| {
                                    Error::config(key("gamma"), format!("cannot parse `{g}`"))
                                })?),
                            };
                            KernelSpec::Rbf { gamma }
                        }
                        other => return Err(Error::config(key("kernel"), format!("unknown kernel `{other}`"))),
                    };
                    ExtractorSpec::Kpca {
                        kernel,
                        k: e.require(&key("k"))?,
                    }
                }
                other => return Err(Error::config(base, format!("unknown extractor `{other}`"))),
            };
            extractors.push(spec);
        }

        let metric = match e.take("metric") {
            None => Metric::default(),
            Some(m) => Metric::parse(&m).ok_or_else(|| Error::config("metric", format!("unknown metric `{m}`")))?,
        };
        let fusion = match e.take("fusion").as_deref().unwrap_or("none") {
            "none" => FusionRule::None,
            "weighted_sum" => FusionRule::WeightedSum {
                znorm: e.take_or("fusion.znorm", false)?,
            },
            "llr" => FusionRule::Llr,
            other => return Err(Error::config("fusion", format!("unknown rule `{other}`"))),
        };

        let alignment = match (e.take("alignment.left_eye"), e.take("alignment.right_eye")) {
            (None, None) => None,
            (Some(l), Some(r)) => {
                let size = match e.take("alignment.size") {
                    None => (64, 64),
                    Some(s) => parse_pair("alignment.size", &s)?,
                };
                Some(Alignment {
                    left_eye: parse_pair("alignment.left_eye", &l)?,
                    right_eye: parse_pair("alignment.right_eye", &r)?,
                    size,
                })
            }
            _ => return Err(Error::config("alignment", "both left_eye and right_eye are required")),
        };

        let far_targets = match e.take("evaluation.far_targets") {
            None => DEFAULT_FAR_TARGETS.to_vec(),
            Some(list) => list
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::config("evaluation.far_targets", format!("cannot parse `{s}`")))
                })
                .collect::<Result<_>>()?,
        };

        if let Some(key) = e.map.keys().next() {
            return Err(Error::config(key.clone(), "unknown key"));
        }
        let config = PipelineConfig {
            preprocessing,
            extractors,
            metric,
            fusion,
            alignment,
            seed,
            far_targets,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks cross-field constraints that do not depend on data.
    pub fn validate(&self) -> Result<()> {
        if self.extractors.is_empty() {
            return Err(Error::config("extractor.0", "at least one extractor is required"));
        }
        if self.fusion == FusionRule::None && self.extractors.len() != 1 {
            return Err(Error::config(
                "fusion",
                format!("`none` needs exactly one extractor, found {}", self.extractors.len()),
            ));
        }
        match &self.preprocessing {
            Preprocessing::HistEq { levels } if *levels < 2 => {
                return Err(Error::config("hist_eq.levels", "must be at least 2"));
            }
            Preprocessing::Ingi(p) => {
                p.validate().map_err(|err| Error::config("ingi", err.to_string()))?;
            }
            _ => {}
        }
        for (i, spec) in self.extractors.iter().enumerate() {
            let zero = match *spec {
                ExtractorSpec::Pca { k } | ExtractorSpec::Lda { k } | ExtractorSpec::Kpca { k, .. } => k == 0,
                ExtractorSpec::Pclda { pca_k, lda_k } => pca_k == 0 || lda_k == 0,
            };
            if zero {
                return Err(Error::config(format!("extractor.{i}"), "component counts must be positive"));
            }
        }
        if let Some(t) = self.far_targets.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
            return Err(Error::config("evaluation.far_targets", format!("{t} not in (0, 1)")));
        }
        Ok(())
    }

    /// Canonical key/value pairs; [`PipelineConfig::parse`] of
    /// [`PipelineConfig::to_text`] reproduces the config.
    pub fn entries(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("seed", self.seed.to_string());
        match &self.preprocessing {
            Preprocessing::None => put("preprocessing", "none".into()),
            Preprocessing::HistEq { levels } => {
                put("preprocessing", "hist_eq".into());
                put("hist_eq.levels", levels.to_string());
            }
            Preprocessing::Ingi(p) => {
                put("preprocessing", "ingi".into());
                put("ingi.smoothing_sigma", p.smoothing_sigma.to_string());
                put("ingi.epsilon", p.epsilon.to_string());
                put("ingi.diffusion_iterations", p.diffusion_iterations.to_string());
                put("ingi.diffusion_kappa", p.diffusion_kappa.to_string());
                put("ingi.diffusion_lambda", p.diffusion_lambda.to_string());
            }
        }
        for (i, spec) in self.extractors.iter().enumerate() {
            let base = format!("extractor.{i}");
            put(&base, spec.name().into());
            let key = |p: &str| format!("{base}.{p}");
            match *spec {
                ExtractorSpec::Pca { k } | ExtractorSpec::Lda { k } => put(&key("k"), k.to_string()),
                ExtractorSpec::Pclda { pca_k, lda_k } => {
                    put(&key("pca_k"), pca_k.to_string());
                    put(&key("lda_k"), lda_k.to_string());
                }
                ExtractorSpec::Kpca { kernel, k } => {
                    put(&key("k"), k.to_string());
                    match kernel {
                        KernelSpec::Linear => put(&key("kernel"), "linear".into()),
                        KernelSpec::Polynomial { degree, coef0 } => {
                            put(&key("kernel"), "polynomial".into());
                            put(&key("degree"), degree.to_string());
                            put(&key("coef0"), coef0.to_string());
                        }
                        KernelSpec::Rbf { gamma } => {
                            put(&key("kernel"), "rbf".into());
                            put(&key("gamma"), gamma.map_or("auto".into(), |g| g.to_string()));
                        }
                    }
                }
            }
        }
        put("metric", self.metric.name().into());
        match self.fusion {
            FusionRule::None => put("fusion", "none".into()),
            FusionRule::WeightedSum { znorm } => {
                put("fusion", "weighted_sum".into());
                put("fusion.znorm", znorm.to_string());
            }
            FusionRule::Llr => put("fusion", "llr".into()),
        }
        if let Some(a) = &self.alignment {
            put("alignment.left_eye", format!("{}, {}", a.left_eye.0, a.left_eye.1));
            put("alignment.right_eye", format!("{}, {}", a.right_eye.0, a.right_eye.1));
            put("alignment.size", format!("{}, {}", a.size.0, a.size.1));
        }
        let targets: Vec<String> = self.far_targets.iter().map(|t| t.to_string()).collect();
        put("evaluation.far_targets", targets.join(", "));
        m
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

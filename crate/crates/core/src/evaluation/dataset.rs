use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result, ResultExt};
use crate::imaging::{load_image, save_image_unscaled, Image, Landmarks};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Gallery,
    Probe,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Gallery => "gallery",
            Split::Probe => "probe",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "gallery" => Some(Split::Gallery),
            "probe" => Some(Split::Probe),
            _ => None,
        }
    }
}

/// One image of the dataset. `id` is its path relative to the dataset root
/// (`<identity>/<file>.pgm`).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub identity: usize,
    pub split: Split,
    pub image: Image,
    pub landmarks: Option<Landmarks>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    identities: Vec<String>,
    samples: Vec<Sample>,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

impl Dataset {
    pub fn new(identities: Vec<String>, samples: Vec<Sample>) -> Result<Self> {
        let mut ids = HashSet::new();
        for s in &samples {
            if s.identity >= identities.len() {
                return Err(Error::param("samples", format!("{}: identity {} out of range", s.id, s.identity)));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::param("samples", format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Dataset { identities, samples })
    }

    pub fn identities(&self) -> &[String] {
        &self.identities
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Manifest text: `<relpath> <split> [lx ly rx ry]` per sample.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            let _ = write!(out, "{} {}", s.id, s.split.name());
            if let Some(m) = &s.landmarks {
                let ((lx, ly), (rx, ry)) = (m.left_eye(), m.right_eye());
                let _ = write!(out, " {lx} {ly} {rx} {ry}");
            }
            out.push('\n');
        }
        out
    }

    /// Writes every image (unscaled 16-bit) under `dir` and the manifest as
    /// `dir/manifest.txt`, returning the manifest path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        for s in &self.samples {
            let path = dir.join(&s.id);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            save_image_unscaled(&s.image, &path).context(|| path.display().to_string())?;
        }
        let manifest = dir.join(MANIFEST_NAME);
        fs::write(&manifest, self.manifest())?;
        Ok(manifest)
    }

    /// Loads the images listed in `manifest` relative to `dir`. Identities are
    /// the first path component, numbered in order of first appearance.
    pub fn load(dir: &Path, manifest: &Path) -> Result<Dataset> {
        let text = match fs::read_to_string(manifest) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(manifest.into())),
            Err(e) => return Err(e.into()),
        };
        let mut identities: Vec<String> = Vec::new();
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let ctx = || format!("{}:{}", manifest.display(), lineno + 1);
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = |reason: String| Error::param("manifest", reason);
            let (rel, split) = match fields.as_slice() {
                [rel, split] | [rel, split, _, _, _, _] => (*rel, *split),
                _ => return Err(bad(format!("expected `path split [lx ly rx ry]`, got `{line}`"))).context(ctx),
            };
            let split = Split::parse(split)
                .ok_or_else(|| bad(format!("unknown split `{split}`")))
                .context(ctx)?;
            let identity_name = match rel.split_once('/') {
                Some((id, rest)) if !id.is_empty() && !rest.is_empty() => id,
                _ => return Err(bad(format!("`{rel}` is not inside an identity directory"))).context(ctx),
            };
            let identity = match identities.iter().position(|n| n == identity_name) {
                Some(i) => i,
                None => {
                    identities.push(identity_name.to_string());
                    identities.len() - 1
                }
            };
            let image = load_image(&dir.join(rel)).context(ctx)?;
            let landmarks = if fields.len() == 6 {
                let mut v = [0.0; 4];
                for (slot, f) in v.iter_mut().zip(&fields[2..]) {
                    *slot = f
                        .parse()
                        .map_err(|_| bad(format!("bad landmark `{f}`")))
                        .context(ctx)?;
                }
                Some(Landmarks::new((v[0], v[1]), (v[2], v[3]), image.width(), image.height()).context(ctx)?)
            } else {
                None
            };
            samples.push(Sample {
                id: rel.to_string(),
                identity,
                split,
                image,
                landmarks,
            });
        }
        Dataset::new(identities, samples)
    }
}

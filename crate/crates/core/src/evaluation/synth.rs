//! Seeded synthetic face-like dataset.
//!
//! Texture recipe (per identity, on a `size × size` grid with coordinates
//! `u = x / size`, `v = y / size`):
//!
//! * 4 oriented sinusoids `a·sin(2π f (u cos θ + v sin θ) + φ)` with
//!   `f ∈ [2, 8)`, `θ ∈ [0, π)`, `φ ∈ [0, 2π)`, `a ∈ [0.5, 1)`;
//! * 3 Gaussian blobs with centres in `[0.15, 0.85)²`, radius `[0.06, 0.15)`
//!   and signed amplitude `[-1.5, 1.5)`;
//! * the sum min-max rescaled to `[0.2, 1.0]`.
//!
//! Each image is `texture × field + N(0, noise_sigma²)`, clipped to `[0, 1]`.
//! `ramp(s)` is a linear field from `1 - 0.7 s` to `1` along a per-image
//! random direction; `spot(s)` is `1 - 0.7 s + 0.7 s · exp(-d² / 2r²)` with a
//! per-image random centre and `r = 0.35 · size`.
//!
//! Random streams: identity `i` draws its texture from ChaCha8 stream `i + 1`
//! and image `j` of identity `i` from stream `2³² + i · 2¹⁶ + j`, all keyed by
//! the dataset seed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::dataset::{Dataset, Sample, Split};
use crate::error::{Error, Result};
use crate::imaging::Image;

pub const SYNTH_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Illumination {
    None,
    Ramp(f64),
    Spot(f64),
}

/// Per-identity split sizes; images beyond `train + gallery` go to the probe set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitPlan {
    pub train: usize,
    pub gallery: usize,
}

impl SplitPlan {
    /// Thirds: `n / 3` train, half of the remainder gallery, the rest probe.
    pub fn thirds(images_per_identity: usize) -> SplitPlan {
        let train = images_per_identity / 3;
        SplitPlan {
            train,
            gallery: (images_per_identity - train) / 2,
        }
    }

    fn split_of(&self, j: usize) -> Split {
        if j < self.train {
            Split::Train
        } else if j < self.train + self.gallery {
            Split::Gallery
        } else {
            Split::Probe
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_identities: usize,
    pub images_per_identity: usize,
    pub illumination: Illumination,
    pub noise_sigma: f64,
    pub size: usize,
    pub split: SplitPlan,
}

impl SyntheticConfig {
    pub fn new(
        seed: u64,
        n_identities: usize,
        images_per_identity: usize,
        illumination: Illumination,
        noise_sigma: f64,
    ) -> Self {
        SyntheticConfig {
            seed,
            n_identities,
            images_per_identity,
            illumination,
            noise_sigma,
            size: SYNTH_SIZE,
            split: SplitPlan::thirds(images_per_identity),
        }
    }
}

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Base texture of identity `identity` under `seed`.
pub fn render_texture(seed: u64, identity: usize, size: usize) -> Result<Image> {
    if size < 2 {
        return Err(Error::param("size", "texture needs at least 2x2 pixels"));
    }
    let mut rng = stream(seed, identity as u64 + 1);
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            [
                rng.random_range(2.0..8.0),
                rng.random_range(0.0..PI),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.5..1.0),
            ]
        })
        .collect();
    let blobs: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            [
                rng.random_range(0.15..0.85),
                rng.random_range(0.15..0.85),
                rng.random_range(0.06..0.15),
                rng.random_range(-1.5..1.5),
            ]
        })
        .collect();
    let n = size as f64;
    let raw = Image::from_fn(size, size, |x, y| {
        let (u, v) = (x as f64 / n, y as f64 / n);
        let w: f64 = waves
            .iter()
            .map(|&[f, th, ph, a]| a * (2.0 * PI * f * (u * th.cos() + v * th.sin()) + ph).sin())
            .sum();
        let b: f64 = blobs
            .iter()
            .map(|&[cx, cy, r, a]| a * (-((u - cx).powi(2) + (v - cy).powi(2)) / (2.0 * r * r)).exp())
            .sum();
        w + b
    })?;
    Ok(raw.rescale_unit().map(|p| 0.2 + 0.8 * p))
}

/// Linear field rising from `1 - 0.7·strength` to `1` along direction `angle`
/// (radians; `0` runs left to right across the columns).
pub fn ramp_field(size: usize, strength: f64, angle: f64) -> Result<Image> {
    let lo = 1.0 - 0.7 * strength;
    let (c, s) = (angle.cos(), angle.sin());
    let proj = |x: usize, y: usize| x as f64 * c + y as f64 * s;
    let m = (size - 1) as f64;
    let corners = [proj(0, 0), proj(size - 1, 0), proj(0, size - 1), proj(size - 1, size - 1)];
    let pmin = corners.iter().copied().fold(f64::INFINITY, f64::min);
    let pmax = corners.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if pmax - pmin > 0.0 { pmax - pmin } else { m.max(1.0) };
    Image::from_fn(size, size, |x, y| lo + (1.0 - lo) * (proj(x, y) - pmin) / span)
}

pub fn spot_field(size: usize, strength: f64, centre: (f64, f64)) -> Result<Image> {
    let lo = 1.0 - 0.7 * strength;
    let r = 0.35 * size as f64;
    Image::from_fn(size, size, |x, y| {
        let d2 = (x as f64 - centre.0).powi(2) + (y as f64 - centre.1).powi(2);
        lo + 0.7 * strength * (-d2 / (2.0 * r * r)).exp()
    })
}

pub fn generate_synthetic_dataset(
    seed: u64,
    n_identities: usize,
    images_per_identity: usize,
    illumination: Illumination,
    noise_sigma: f64,
) -> Result<Dataset> {
    generate(&SyntheticConfig::new(seed, n_identities, images_per_identity, illumination, noise_sigma))
}

pub fn generate(cfg: &SyntheticConfig) -> Result<Dataset> {
    if cfg.n_identities < 2 {
        return Err(Error::param("n_identities", "at least 2 identities required"));
    }
    if cfg.images_per_identity < 2 {
        return Err(Error::param("images_per_identity", "at least 2 images per identity required"));
    }
    if !(cfg.noise_sigma >= 0.0 && cfg.noise_sigma.is_finite()) {
        return Err(Error::param("noise_sigma", "must be finite and non-negative"));
    }
    if let Illumination::Ramp(s) | Illumination::Spot(s) = cfg.illumination {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::param("illumination", format!("strength {s} not in [0, 1]")));
        }
    }
    let size = cfg.size;
    let noise = Normal::new(0.0, cfg.noise_sigma).expect("sigma validated above");
    let mut identities = Vec::with_capacity(cfg.n_identities);
    let mut samples = Vec::new();
    for i in 0..cfg.n_identities {
        let name = format!("id{i:03}");
        let texture = render_texture(cfg.seed, i, size)?;
        for j in 0..cfg.images_per_identity {
            let mut rng = stream(cfg.seed, (1u64 << 32) + ((i as u64) << 16) + j as u64);
            let field = match cfg.illumination {
                Illumination::None => None,
                Illumination::Ramp(s) => Some(ramp_field(size, s, rng.random_range(0.0..2.0 * PI))?),
                Illumination::Spot(s) => {
                    let c = (rng.random_range(0.0..size as f64), rng.random_range(0.0..size as f64));
                    Some(spot_field(size, s, c)?)
                }
            };
            let mut pixels = texture.pixels().to_vec();
            if let Some(f) = &field {
                pixels.iter_mut().zip(f.pixels()).for_each(|(p, l)| *p *= l);
            }
            if cfg.noise_sigma > 0.0 {
                pixels.iter_mut().for_each(|p| *p += noise.sample(&mut rng));
            }
            pixels.iter_mut().for_each(|p| *p = p.clamp(0.0, 1.0));
            samples.push(Sample {
                id: format!("{name}/img{j:02}.pgm"),
                identity: i,
                split: cfg.split.split_of(j),
                image: Image::new(size, size, pixels)?,
                landmarks: None,
            });
        }
        identities.push(name);
    }
    Dataset::new(identities, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unlit_noiseless_images_are_identical() {
        let ds = generate_synthetic_dataset(3, 2, 3, Illumination::None, 0.0).unwrap();
        let s = ds.samples();
        assert_eq!(s[0].image, s[1].image);
        assert_eq!(s[1].image, s[2].image);
        assert_ne!(s[0].image, s[3].image);
    }

    #[test]
    fn same_seed_same_bits() {
        let a = generate_synthetic_dataset(9, 3, 4, Illumination::Spot(0.8), 0.02).unwrap();
        let b = generate_synthetic_dataset(9, 3, 4, Illumination::Spot(0.8), 0.02).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_dataset(10, 3, 4, Illumination::Spot(0.8), 0.02).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn ramp_runs_from_point_three_to_one() {
        let f = ramp_field(64, 1.0, 0.0).unwrap();
        for y in [0, 31, 63] {
            assert!((f.get(0, y) - 0.3).abs() < 1e-12);
            assert!((f.get(63, y) - 1.0).abs() < 1e-12);
            for x in 0..63 {
                let step = f.get(x + 1, y) - f.get(x, y);
                assert!((step - 0.7 / 63.0).abs() < 1e-12);
            }
        }
        let tex = render_texture(5, 0, 64).unwrap();
        let lit = Image::new(64, 64, tex.pixels().iter().zip(f.pixels()).map(|(a, b)| a * b).collect()).unwrap();
        assert!(lit.mean() < tex.mean());
    }

    #[test]
    fn texture_range_and_split() {
        let t = render_texture(1, 4, 64).unwrap();
        assert!((t.min() - 0.2).abs() < 1e-12 && (t.max() - 1.0).abs() < 1e-12);
        let ds = generate_synthetic_dataset(1, 2, 6, Illumination::Ramp(1.0), 0.01).unwrap();
        for split in [Split::Train, Split::Gallery, Split::Probe] {
            assert_eq!(ds.split(split).count(), 4);
        }
        assert!(ds.samples().iter().all(|s| s.image.min() >= 0.0 && s.image.max() <= 1.0));
    }

    #[test]
    fn preconditions() {
        assert!(generate_synthetic_dataset(0, 1, 3, Illumination::None, 0.0).is_err());
        assert!(generate_synthetic_dataset(0, 2, 1, Illumination::None, 0.0).is_err());
    }
}

//! Integral normalized gradient image (INGI).
//!
//! The observed image is modelled as texture times a slowly varying
//! illumination factor. Dividing the image gradient by a smoothed copy of the
//! image cancels the illumination factor; the normalized field is then
//! integrated back into an image by least squares and cleaned with
//! Perona–Malik diffusion.

use crate::error::{Error, Result};
use crate::imaging::Image;

/// Per-pixel gradient pair, same dimensions as the source image.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    width: usize,
    height: usize,
    gx: Vec<f64>,
    gy: Vec<f64>,
}

impl GradientField {
    pub fn new(width: usize, height: usize, gx: Vec<f64>, gy: Vec<f64>) -> Result<Self> {
        let n = width * height;
        if gx.len() != n || gy.len() != n {
            return Err(Error::mismatch(n, format!("gx {} / gy {}", gx.len(), gy.len())));
        }
        if gx.iter().chain(&gy).any(|v| !v.is_finite()) {
            return Err(Error::param("gradient", "non-finite component"));
        }
        Ok(GradientField { width, height, gx, gy })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        GradientField {
            width,
            height,
            gx: vec![0.0; width * height],
            gy: vec![0.0; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn gx(&self) -> &[f64] {
        &self.gx
    }

    pub fn gy(&self) -> &[f64] {
        &self.gy
    }

    pub fn gx_image(&self) -> Image {
        Image::new(self.width, self.height, self.gx.clone()).expect("field is finite")
    }

    pub fn gy_image(&self) -> Image {
        Image::new(self.width, self.height, self.gy.clone()).expect("field is finite")
    }

    /// RMS over both components of the difference to `other`.
    pub fn rms_diff(&self, other: &GradientField) -> f64 {
        let ss: f64 = self
            .gx
            .iter()
            .zip(&other.gx)
            .chain(self.gy.iter().zip(&other.gy))
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        (ss / (2 * self.gx.len()) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IngiParams {
    /// Standard deviation (pixels) of the Gaussian used to estimate illumination.
    pub smoothing_sigma: f64,
    /// Added to the illumination estimate before dividing.
    pub epsilon: f64,
    pub diffusion_iterations: usize,
    pub diffusion_kappa: f64,
    /// Explicit step size, stable for values up to 0.25.
    pub diffusion_lambda: f64,
}

impl Default for IngiParams {
    fn default() -> Self {
        IngiParams {
            smoothing_sigma: 4.0,
            epsilon: 1e-3,
            diffusion_iterations: 10,
            diffusion_kappa: 0.1,
            diffusion_lambda: 0.25,
        }
    }
}

impl IngiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing_sigma > 0.0 && self.smoothing_sigma.is_finite()) {
            return Err(Error::param("smoothing_sigma", "must be positive"));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::param("epsilon", "must be positive"));
        }
        check_diffusion(self.diffusion_kappa, self.diffusion_lambda)
    }
}

fn check_diffusion(kappa: f64, lambda: f64) -> Result<()> {
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(Error::param("diffusion_kappa", "must be positive"));
    }
    if !(lambda > 0.0 && lambda <= 0.25) {
        return Err(Error::param("diffusion_lambda", format!("{lambda} not in (0, 0.25]")));
    }
    Ok(())
}

fn require_2x2(width: usize, height: usize) -> Result<()> {
    if width < 2 || height < 2 {
        return Err(Error::param("image", format!("{width}x{height} is smaller than 2x2")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Gradient operator and its adjoint

/// Derivative along a strided line (central inside, one-sided at both ends).
fn diff_line(src: &[f64], dst: &mut [f64], start: usize, stride: usize, n: usize) {
    let at = |i: usize| start + i * stride;
    dst[at(0)] = src[at(1)] - src[at(0)];
    dst[at(n - 1)] = src[at(n - 1)] - src[at(n - 2)];
    for i in 1..n - 1 {
        dst[at(i)] = 0.5 * (src[at(i + 1)] - src[at(i - 1)]);
    }
}

/// Transpose of [`diff_line`], accumulated into `dst`.
fn diff_line_adjoint(src: &[f64], dst: &mut [f64], start: usize, stride: usize, n: usize) {
    let at = |i: usize| start + i * stride;
    let first = src[at(0)];
    dst[at(0)] -= first;
    dst[at(1)] += first;
    let last = src[at(n - 1)];
    dst[at(n - 2)] -= last;
    dst[at(n - 1)] += last;
    for i in 1..n - 1 {
        let h = 0.5 * src[at(i)];
        dst[at(i - 1)] -= h;
        dst[at(i + 1)] += h;
    }
}

fn apply_gradient(u: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for y in 0..h {
        diff_line(u, gx, y * w, 1, w);
    }
    for x in 0..w {
        diff_line(u, gy, x, w, h);
    }
}

fn apply_gradient_adjoint(gx: &[f64], gy: &[f64], w: usize, h: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for y in 0..h {
        diff_line_adjoint(gx, out, y * w, 1, w);
    }
    for x in 0..w {
        diff_line_adjoint(gy, out, x, w, h);
    }
}

pub fn gradient(img: &Image) -> Result<GradientField> {
    let (w, h) = img.dims();
    require_2x2(w, h)?;
    let mut field = GradientField::zeros(w, h);
    apply_gradient(img.pixels(), w, h, &mut field.gx, &mut field.gy);
    Ok(field)
}

// ---------------------------------------------------------------------------
// Illumination estimate

/// Normalized 1-D Gaussian taps over `[-r, r]`, `r = ceil(3 sigma)`.
pub fn gaussian_taps(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Smooths with a truncated, renormalized Gaussian (square support, separable)
/// under replicate-edge boundaries.
pub fn estimate_extrinsic(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::param("sigma", "must be positive"));
    }
    let taps = gaussian_taps(sigma);
    let r = (taps.len() / 2) as isize;
    let (w, h) = img.dims();
    let horizontal = Image::from_fn(w, h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * img.get_clamped(x as isize + k as isize - r, y as isize))
            .sum()
    })?;
    Image::from_fn(w, h, |x, y| {
        taps.iter()
            .enumerate()
            .map(|(k, t)| t * horizontal.get_clamped(x as isize, y as isize + k as isize - r))
            .sum()
    })
}

pub fn normalize_gradient(grad: &GradientField, extrinsic: &Image, epsilon: f64) -> Result<GradientField> {
    if grad.dims() != extrinsic.dims() {
        return Err(Error::mismatch(
            format!("{:?}", grad.dims()),
            format!("{:?}", extrinsic.dims()),
        ));
    }
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", "must be positive"));
    }
    let denom: Vec<f64> = extrinsic.pixels().iter().map(|w| w + epsilon).collect();
    let gx = grad.gx.iter().zip(&denom).map(|(g, d)| g / d).collect();
    let gy = grad.gy.iter().zip(&denom).map(|(g, d)| g / d).collect();
    GradientField::new(grad.width, grad.height, gx, gy)
}

// ---------------------------------------------------------------------------
// Least-squares integration

pub const POISSON_TOLERANCE: f64 = 1e-8;
pub const POISSON_MAX_ITERATIONS: usize = 10_000;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Finds the image whose [`gradient`] best matches `ngrad` in least squares,
/// i.e. solves the normal equations `DᵀD u = Dᵀ g` (a Neumann Poisson problem)
/// by conjugate gradients. The free constant is fixed by pinning the mean to 0.5.
pub fn integrate_field(ngrad: &GradientField) -> Result<Image> {
    integrate_field_with(ngrad, POISSON_TOLERANCE, POISSON_MAX_ITERATIONS)
}

pub fn integrate_field_with(ngrad: &GradientField, tolerance: f64, max_iterations: usize) -> Result<Image> {
    let (w, h) = ngrad.dims();
    require_2x2(w, h)?;
    let n = w * h;
    let mut b = vec![0.0; n];
    apply_gradient_adjoint(&ngrad.gx, &ngrad.gy, w, h, &mut b);
    let b_norm = dot(&b, &b).sqrt();

    let mut u = vec![0.0; n];
    if b_norm > 0.0 {
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; n];
        let (mut tx, mut ty) = (vec![0.0; n], vec![0.0; n]);
        let mut rr = dot(&r, &r);
        let mut iterations = 0;
        while rr.sqrt() > tolerance * b_norm {
            if iterations == max_iterations {
                return Err(Error::NonConvergence {
                    iterations,
                    residual: rr.sqrt() / b_norm,
                });
            }
            apply_gradient(&p, w, h, &mut tx, &mut ty);
            apply_gradient_adjoint(&tx, &ty, w, h, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for i in 0..n {
                u[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rr_next = dot(&r, &r);
            let beta = rr_next / rr;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_next;
            iterations += 1;
        }
    }
    let shift = 0.5 - u.iter().sum::<f64>() / n as f64;
    u.iter_mut().for_each(|v| *v += shift);
    Image::new(w, h, u)
}

// ---------------------------------------------------------------------------
// Perona–Malik diffusion

#[inline]
fn conduction(t: f64, kappa: f64) -> f64 {
    let q = t / kappa;
    (-q * q).exp()
}

/// Explicit Perona–Malik scheme with exponential conduction and replicate
/// boundaries: `u += lambda * Σ_{N,S,E,W} g(d) d`, `d = u_neighbour - u`.
pub fn anisotropic_diffuse(img: &Image, iterations: usize, kappa: f64, lambda: f64) -> Result<Image> {
    check_diffusion(kappa, lambda)?;
    let (w, h) = img.dims();
    let mut u = img.pixels().to_vec();
    let mut next = u.clone();
    for _ in 0..iterations {
        for y in 0..h {
            for x in 0..w {
                let c = u[y * w + x];
                let mut flux = 0.0;
                if y > 0 {
                    let d = u[(y - 1) * w + x] - c;
                    flux += conduction(d, kappa) * d;
                }
                if y + 1 < h {
                    let d = u[(y + 1) * w + x] - c;
                    flux += conduction(d, kappa) * d;
                }
                if x + 1 < w {
                    let d = u[y * w + x + 1] - c;
                    flux += conduction(d, kappa) * d;
                }
                if x > 0 {
                    let d = u[y * w + x - 1] - c;
                    flux += conduction(d, kappa) * d;
                }
                next[y * w + x] = c + lambda * flux;
            }
        }
        std::mem::swap(&mut u, &mut next);
    }
    Image::new(w, h, u)
}

// ---------------------------------------------------------------------------
// Full chain

/// Every intermediate of one INGI run, for debug dumps.
#[derive(Debug, Clone)]
pub struct IngiStages {
    pub gradient: GradientField,
    pub extrinsic: Image,
    pub normalized: GradientField,
    pub reconstructed: Image,
    pub diffused: Image,
    pub output: Image,
}

pub fn ingi_stages(img: &Image, params: &IngiParams) -> Result<IngiStages> {
    params.validate()?;
    let gradient = gradient(img)?;
    let extrinsic = estimate_extrinsic(img, params.smoothing_sigma)?;
    let normalized = normalize_gradient(&gradient, &extrinsic, params.epsilon)?;
    let reconstructed = integrate_field(&normalized)?;
    let diffused = anisotropic_diffuse(
        &reconstructed,
        params.diffusion_iterations,
        params.diffusion_kappa,
        params.diffusion_lambda,
    )?;
    let output = diffused.rescale_unit();
    Ok(IngiStages {
        gradient,
        extrinsic,
        normalized,
        reconstructed,
        diffused,
        output,
    })
}

/// Runs the full chain and returns the reconstruction rescaled to `[0, 1]`.
pub fn ingi(img: &Image, params: &IngiParams) -> Result<Image> {
    ingi_stages(img, params).map(|s| s.output)
}

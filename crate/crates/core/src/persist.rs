//! Versioned binary model container.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    b"FACEKIT\0"
//! version  u32
//! count    u32                    number of sections
//! section  tag u8, length u64, payload[length]
//! ```
//!
//! Section tags: 1 config text (UTF-8), 2 linear subspace model, 3 kernel
//! model, 4 fusion model. Extractor sections keep their pipeline order. Floats
//! are stored as raw IEEE-754 bits so a write/read cycle is exact.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::config::PipelineConfig;
use crate::error::{Error, Result, ResultExt};
use crate::evaluation::TrainedPipeline;
use crate::fusion::{FusionModel, GaussianPair, LlrModel, WeightedSumModel, ZNorm};
use crate::subspace::{Extractor, Kernel, KernelModel, SubspaceKind, SubspaceModel};

pub const MAGIC: &[u8; 8] = b"FACEKIT\0";
pub const VERSION: u32 = 1;

const TAG_CONFIG: u8 = 1;
const TAG_SUBSPACE: u8 = 2;
const TAG_KERNEL: u8 = 3;
const TAG_FUSION: u8 = 4;

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn len(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        vs.into_iter().for_each(|&v| self.f64(v));
    }
    fn section(&mut self, tag: u8, payload: Writer) {
        self.u8(tag);
        self.len(payload.0.len());
        self.0.extend_from_slice(&payload.0);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Container(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self) -> Result<usize> {
        let v = self.u64()?;
        // Every length counts at least one byte of remaining payload.
        if v > self.buf.len() as u64 {
            return Err(Error::Container(format!("implausible length {v}")));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        if n.checked_mul(8).is_none_or(|b| b > self.buf.len() - self.pos) {
            return Err(Error::Container(format!("truncated array of {n} floats")));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn done(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Container(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn write_matrix(w: &mut Writer, m: &DMatrix<f64>) {
    w.len(m.nrows());
    w.len(m.ncols());
    w.f64s(m.as_slice());
}

fn read_matrix(r: &mut Reader) -> Result<DMatrix<f64>> {
    let (rows, cols) = (r.len()?, r.len()?);
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Container("matrix too large".into()))?;
    Ok(DMatrix::from_vec(rows, cols, r.f64s(n)?))
}

fn write_vector(w: &mut Writer, v: &[f64]) {
    w.len(v.len());
    w.f64s(v);
}

fn read_vector(r: &mut Reader) -> Result<Vec<f64>> {
    let n = r.len()?;
    r.f64s(n)
}

fn encode_subspace(m: &SubspaceModel) -> Writer {
    let mut w = Writer::default();
    w.u8(match m.kind() {
        SubspaceKind::Pca => 0,
        SubspaceKind::Lda => 1,
        SubspaceKind::Pclda => 2,
    });
    write_vector(&mut w, m.mean().as_slice());
    write_matrix(&mut w, m.basis());
    write_vector(&mut w, m.eigenvalues());
    w
}

fn decode_subspace(r: &mut Reader) -> Result<SubspaceModel> {
    let kind = match r.u8()? {
        0 => SubspaceKind::Pca,
        1 => SubspaceKind::Lda,
        2 => SubspaceKind::Pclda,
        t => return Err(Error::Container(format!("unknown subspace kind {t}"))),
    };
    let mean = DVector::from_vec(read_vector(r)?);
    let basis = read_matrix(r)?;
    let eig = read_vector(r)?;
    SubspaceModel::from_parts(kind, mean, basis, eig)
}

fn encode_kernel(m: &KernelModel) -> Writer {
    let mut w = Writer::default();
    match m.kernel() {
        Kernel::Linear => w.u8(0),
        Kernel::Polynomial { degree, coef0 } => {
            w.u8(1);
            w.u32(degree);
            w.f64(coef0);
        }
        Kernel::Rbf { gamma } => {
            w.u8(2);
            w.f64(gamma);
        }
    }
    write_matrix(&mut w, m.training_vectors());
    write_matrix(&mut w, m.dual_coeffs());
    write_vector(&mut w, m.kernel_row_means().as_slice());
    w.f64(m.kernel_grand_mean());
    write_vector(&mut w, m.eigenvalues());
    w
}

fn decode_kernel(r: &mut Reader) -> Result<KernelModel> {
    let kernel = match r.u8()? {
        0 => Kernel::Linear,
        1 => Kernel::Polynomial {
            degree: r.u32()?,
            coef0: r.f64()?,
        },
        2 => Kernel::Rbf { gamma: r.f64()? },
        t => return Err(Error::Container(format!("unknown kernel {t}"))),
    };
    let training = read_matrix(r)?;
    let dual = read_matrix(r)?;
    let row_means = DVector::from_vec(read_vector(r)?);
    let grand = r.f64()?;
    let eig = read_vector(r)?;
    KernelModel::from_parts(training, kernel, dual, row_means, grand, eig)
}

fn encode_fusion(m: &FusionModel) -> Writer {
    let mut w = Writer::default();
    match m {
        FusionModel::None => w.u8(0),
        FusionModel::WeightedSum(ws) => {
            w.u8(1);
            write_vector(&mut w, ws.eers());
            match ws.znorm() {
                None => w.u8(0),
                Some(z) => {
                    w.u8(1);
                    z.iter().for_each(|n| {
                        w.f64(n.mean);
                        w.f64(n.std);
                    });
                }
            }
        }
        FusionModel::Llr(llr) => {
            w.u8(2);
            w.len(llr.n_classifiers());
            for p in llr.params() {
                w.f64s(&[p.mean_same, p.var_same, p.mean_diff, p.var_diff]);
            }
        }
    }
    w
}

fn decode_fusion(r: &mut Reader) -> Result<FusionModel> {
    Ok(match r.u8()? {
        0 => FusionModel::None,
        1 => {
            let eers = read_vector(r)?;
            let n = eers.len();
            let model = WeightedSumModel::new(eers)?;
            match r.u8()? {
                0 => FusionModel::WeightedSum(model),
                1 => {
                    let z = (0..n)
                        .map(|_| Ok(ZNorm { mean: r.f64()?, std: r.f64()? }))
                        .collect::<Result<Vec<_>>>()?;
                    FusionModel::WeightedSum(model.with_znorm(z)?)
                }
                t => return Err(Error::Container(format!("bad z-norm flag {t}"))),
            }
        }
        2 => {
            let n = r.len()?;
            let params = (0..n)
                .map(|_| {
                    Ok(GaussianPair {
                        mean_same: r.f64()?,
                        var_same: r.f64()?,
                        mean_diff: r.f64()?,
                        var_diff: r.f64()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            FusionModel::Llr(LlrModel::new(params)?)
        }
        t => return Err(Error::Container(format!("unknown fusion rule {t}"))),
    })
}

pub fn encode_pipeline(p: &TrainedPipeline) -> Vec<u8> {
    let mut w = Writer::default();
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.u32(p.extractors.len() as u32 + 2);
    let mut cfg = Writer::default();
    cfg.0.extend_from_slice(p.config.to_text().as_bytes());
    w.section(TAG_CONFIG, cfg);
    for e in &p.extractors {
        match e {
            Extractor::Linear(m) => w.section(TAG_SUBSPACE, encode_subspace(m)),
            Extractor::Kernel(m) => w.section(TAG_KERNEL, encode_kernel(m)),
        }
    }
    w.section(TAG_FUSION, encode_fusion(&p.fusion));
    w.0
}

pub fn decode_pipeline(bytes: &[u8]) -> Result<TrainedPipeline> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len()).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::Container("not a model file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Container(format!("unsupported version {version} (expected {VERSION})")));
    }
    let count = r.u32()?;
    let mut config = None;
    let mut extractors = Vec::new();
    let mut fusion = None;
    for i in 0..count {
        let tag = r.u8()?;
        let len = r.len()?;
        let mut sr = Reader {
            buf: r.take(len)?,
            pos: 0,
        };
        let ctx = || format!("section {i} (tag {tag})");
        match tag {
            TAG_CONFIG => {
                let text = std::str::from_utf8(sr.buf).map_err(|_| Error::Container("config is not UTF-8".into()))?;
                config = Some(PipelineConfig::parse(text).context(ctx)?);
                sr.pos = sr.buf.len();
            }
            TAG_SUBSPACE => extractors.push(Extractor::Linear(decode_subspace(&mut sr).context(ctx)?)),
            TAG_KERNEL => extractors.push(Extractor::Kernel(decode_kernel(&mut sr).context(ctx)?)),
            TAG_FUSION => fusion = Some(decode_fusion(&mut sr).context(ctx)?),
            t => return Err(Error::Container(format!("unknown section tag {t}"))),
        }
        sr.done().context(ctx)?;
    }
    r.done()?;
    let config = config.ok_or_else(|| Error::Container("missing config section".into()))?;
    let fusion = fusion.ok_or_else(|| Error::Container("missing fusion section".into()))?;
    if extractors.len() != config.extractors.len() {
        return Err(Error::Container(format!(
            "config lists {} extractors, container holds {}",
            config.extractors.len(),
            extractors.len()
        )));
    }
    Ok(TrainedPipeline {
        config,
        extractors,
        fusion,
    })
}

pub fn save_pipeline(p: &TrainedPipeline, path: &Path) -> Result<()> {
    fs::write(path, encode_pipeline(p))
        .map_err(Error::from)
        .context(|| path.display().to_string())
}

pub fn load_pipeline(path: &Path) -> Result<TrainedPipeline> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(path.into())),
        Err(e) => return Err(e.into()),
    };
    decode_pipeline(&bytes).context(|| path.display().to_string())
}

//! Command implementations behind the `facekit` binary. Each command writes
//! human-readable progress to `out`, diagnostics to `err`, and returns the
//! process exit status.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::config::{PipelineConfig, Preprocessing};
use crate::error::{Error, Result, ResultExt};
use crate::evaluation::{
    evaluate, generate, run_protocol_full, train, Dataset, Illumination, ProtocolOutput, SyntheticConfig,
};
use crate::imaging::{load_image, save_image, Image};
use crate::ingi::ingi_stages;
use crate::persist::{load_pipeline, save_pipeline};
use crate::scoring::write_score_csv;

pub const THREADS_ENV: &str = "FACEKIT_THREADS";

/// Exit status of `verify` for an accepted pair.
pub const EXIT_SAME: i32 = 0;
/// Exit status of `verify` for a rejected pair, and of any failed command.
pub const EXIT_DIFF: i32 = 1;
/// Exit status of `verify` when the comparison could not be made.
pub const EXIT_VERIFY_ERROR: i32 = 2;

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// when `threads` is `None`. The CLI fills `threads` from `$FACEKIT_THREADS`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(0) => Err(Error::config(THREADS_ENV, "thread count must be positive")),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(THREADS_ENV, e.to_string()))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Reads the config file (or the defaults) and applies a seed override.
pub fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<PipelineConfig> {
    let mut config = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| match e.kind() {
                std::io::ErrorKind::NotFound => Error::MissingFile(p.into()),
                _ => e.into(),
            })?;
            PipelineConfig::parse(&text).context(|| p.display().to_string())?
        }
        None => PipelineConfig::default(),
    };
    if let Some(s) = seed {
        config.seed = s;
    }
    Ok(config)
}

fn report_error(err: &mut dyn Write, e: &Error) {
    let _ = writeln!(err, "error: {e}");
}

fn collect_pgms(root: &Path, dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if e.file_type()?.is_dir() {
            collect_pgms(root, &path, found)?;
        } else if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")) {
            found.push(path.strip_prefix(root).expect("walk stays under root").to_path_buf());
        }
    }
    Ok(())
}

fn write_debug_dumps(img: &Image, config: &PipelineConfig, dir: &Path) -> Result<()> {
    let Preprocessing::Ingi(params) = &config.preprocessing else {
        return Ok(());
    };
    fs::create_dir_all(dir)?;
    let s = ingi_stages(img, params)?;
    let dumps = [
        ("gradient_x", s.gradient.gx_image()),
        ("gradient_y", s.gradient.gy_image()),
        ("extrinsic", s.extrinsic.clone()),
        ("normalized_x", s.normalized.gx_image()),
        ("normalized_y", s.normalized.gy_image()),
        ("reconstructed", s.reconstructed.clone()),
        ("diffused", s.diffused.clone()),
    ];
    for (name, image) in dumps {
        save_image(&image, &dir.join(format!("{name}.pgm")))?;
    }
    Ok(())
}

/// Preprocesses every `.pgm` under `input`, mirroring the tree under `output`.
/// With `debug_dumps`, INGI intermediates go to `output/_debug/<file>/`.
pub fn cmd_preprocess(
    input: &Path,
    output: &Path,
    config: &PipelineConfig,
    debug_dumps: bool,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let mut files = Vec::new();
    if let Err(e) = collect_pgms(input, input, &mut files).context(|| input.display().to_string()) {
        report_error(err, &e);
        return EXIT_DIFF;
    }
    if files.is_empty() {
        let _ = writeln!(err, "warning: no .pgm files under {}", input.display());
        let _ = writeln!(out, "processed 0 files, 0 failed");
        return 0;
    }
    let mut failed = 0;
    for rel in &files {
        let result = (|| -> Result<()> {
            let img = load_image(&input.join(rel))?;
            let processed = crate::evaluation::preprocess(&img, None, config)?;
            let dest = output.join(rel);
            if let Some(parent) = dest.parent() {
                fs::create_dir_all(parent)?;
            }
            save_image(&processed, &dest)?;
            if debug_dumps {
                write_debug_dumps(&img, config, &output.join("_debug").join(rel.with_extension("")))?;
            }
            Ok(())
        })();
        match result {
            Ok(()) => {
                let _ = writeln!(out, "ok {}", rel.display());
            }
            Err(e) => {
                failed += 1;
                let _ = writeln!(out, "FAILED {}: {e}", rel.display());
            }
        }
    }
    let _ = writeln!(out, "processed {} files, {failed} failed", files.len());
    if failed > 0 {
        EXIT_DIFF
    } else {
        0
    }
}

pub fn cmd_train(
    dataset_dir: &Path,
    manifest: &Path,
    config: &PipelineConfig,
    model_out: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let result = (|| -> Result<()> {
        let ds = Dataset::load(dataset_dir, manifest)?;
        let pipeline = train(&ds, config)?;
        save_pipeline(&pipeline, model_out)?;
        let _ = writeln!(
            out,
            "trained {} extractor(s) [{}] on {} samples; model written to {}",
            pipeline.extractors.len(),
            pipeline.classifier_ids().join(", "),
            ds.split(crate::evaluation::Split::Train).count(),
            model_out.display()
        );
        Ok(())
    })();
    match result {
        Ok(()) => 0,
        Err(e) => {
            report_error(err, &e);
            EXIT_DIFF
        }
    }
}

/// Prints `score <fused> SAME|DIFF`; a fused score `>= threshold` is SAME.
pub fn cmd_verify(
    model: &Path,
    image_a: &Path,
    image_b: &Path,
    threshold: f64,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let result = (|| -> Result<f64> {
        let pipeline = load_pipeline(model)?;
        let a = load_image(image_a)?;
        let b = load_image(image_b)?;
        Ok(pipeline.verify(&a, &b)?.1)
    })();
    match result {
        Ok(score) => {
            let same = score >= threshold;
            let _ = writeln!(out, "score {score} {}", if same { "SAME" } else { "DIFF" });
            if same {
                EXIT_SAME
            } else {
                EXIT_DIFF
            }
        }
        Err(e) => {
            report_error(err, &e);
            EXIT_VERIFY_ERROR
        }
    }
}

/// Scores CSV path written next to the report: `report.json` → `report.scores.csv`.
pub fn scores_path(report: &Path) -> PathBuf {
    report.with_extension("scores.csv")
}

pub fn write_outputs(output: &ProtocolOutput, report_path: &Path) -> Result<()> {
    if let Some(parent) = report_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(report_path, output.report.to_json()?)?;
    let csv = fs::File::create(scores_path(report_path))?;
    write_score_csv(std::io::BufWriter::new(csv), &output.scores)
}

/// Runs the protocol (training in-process unless `model` is given) and writes
/// the JSON report to `report_path` plus the scores CSV beside it.
pub fn cmd_evaluate(
    dataset_dir: &Path,
    manifest: &Path,
    config: &PipelineConfig,
    model: Option<&Path>,
    report_path: &Path,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let result = (|| -> Result<ProtocolOutput> {
        let ds = Dataset::load(dataset_dir, manifest)?;
        let output = match model {
            Some(m) => {
                let mut pipeline = load_pipeline(m)?;
                pipeline.config.seed = config.seed;
                evaluate(&pipeline, &ds)?
            }
            None => run_protocol_full(&ds, config)?.1,
        };
        write_outputs(&output, report_path)?;
        Ok(output)
    })();
    match result {
        Ok(output) => {
            let r = &output.report;
            for c in r.classifiers.iter().chain(std::iter::once(&r.fused)) {
                let _ = write!(out, "{:<10} EER {:.4}", c.id, c.eer);
                for vr in &c.verification_rates {
                    let flag = if vr.reachable { "" } else { " (unreachable)" };
                    let _ = write!(out, "  VR@{} {:.4}{flag}", vr.far_target, vr.value);
                }
                let _ = writeln!(out);
            }
            let _ = writeln!(out, "report written to {}", report_path.display());
            0
        }
        Err(e) => {
            report_error(err, &e);
            EXIT_DIFF
        }
    }
}

/// Parses `none`, `ramp:<strength>` or `spot:<strength>`.
pub fn parse_illumination(s: &str) -> Result<Illumination> {
    let bad = || Error::param("illumination", format!("expected none | ramp:<s> | spot:<s>, got `{s}`"));
    if s == "none" {
        return Ok(Illumination::None);
    }
    let (kind, strength) = s.split_once(':').ok_or_else(bad)?;
    let strength: f64 = strength.parse().map_err(|_| bad())?;
    match kind {
        "ramp" => Ok(Illumination::Ramp(strength)),
        "spot" => Ok(Illumination::Spot(strength)),
        _ => Err(bad()),
    }
}

/// Writes a synthetic dataset and its manifest under `dir`.
pub fn cmd_generate(
    dir: &Path,
    cfg: &SyntheticConfig,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    match generate(cfg).and_then(|ds| ds.write(dir).map(|m| (ds, m))) {
        Ok((ds, manifest)) => {
            let _ = writeln!(
                out,
                "wrote {} images of {} identities; manifest {}",
                ds.samples().len(),
                ds.identities().len(),
                manifest.display()
            );
            0
        }
        Err(e) => {
            report_error(err, &e);
            EXIT_DIFF
        }
    }
}

//! The CLI subcommands as library calls. Each writes its outputs, the
//! resolved configuration and a manifest into the output directory.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use spde_core::{integrate, reference_solution, sample_path, Execution, NoisePath, TimeGrid};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{
    run_rate_experiment, run_regularity_scan, run_scheme_agreement, run_stability_suite, write_agreement,
    write_regularity, AGREEMENT, REGULARITY, STABILITY,
};
use crate::manifest::{RunManifest, MANIFEST, RESOLVED_CONFIG};
use crate::plot::emit_plot_data;

pub const TRAJECTORY: &str = "trajectory.csv";
pub const DIAGNOSTICS: &str = "diagnostics.csv";
pub const NOISE: &str = "noise.csv";

fn execution_name(exec: Execution) -> &'static str {
    match exec {
        Execution::Parallel if Execution::parallel_available() => "parallel",
        _ => "sequential",
    }
}

/// Creates `dir`, stores the resolved configuration and starts a manifest.
fn begin(cfg: &ExperimentConfig, command: &str, exec: Execution) -> Result<(PathBuf, RunManifest)> {
    let dir = cfg.run.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| HarnessError::file(&dir, e))?;
    let text = cfg.to_toml();
    let path = dir.join(RESOLVED_CONFIG);
    std::fs::write(&path, &text).map_err(|e| HarnessError::file(&path, e))?;
    Ok((dir, RunManifest::new(command, &text, cfg.run.master_seed, execution_name(exec))))
}

/// Finishes the manifest, then surfaces the deferred numerical verdict.
fn end(dir: &Path, mut manifest: RunManifest, outputs: &[PathBuf], start: Instant, verdict: Result<()>) -> Result<PathBuf> {
    for p in outputs {
        manifest.record_output(p)?;
    }
    manifest.timings.insert("total".into(), start.elapsed().as_secs_f64());
    let path = manifest.write(dir)?;
    info!("wrote {}", path.display());
    verdict.map(|_| path)
}

/// Rate experiment: `rates_time.csv`, `rates_space.csv`.
pub fn run(cfg: &ExperimentConfig, exec: Execution) -> Result<PathBuf> {
    cfg.validate()?;
    let start = Instant::now();
    let (dir, manifest) = begin(cfg, "run", exec)?;
    let outcome = run_rate_experiment(cfg, exec)?;
    let outputs = outcome.write(&dir)?;
    for r in outcome.time.iter().chain(&outcome.space) {
        match r.fit {
            Some(f) => info!("{} beta = {}: order {:.4} (r^2 {:.4})", r.axis.as_str(), r.beta, f.order, f.r_squared),
            None => info!("{} beta = {}: {}", r.axis.as_str(), r.beta, r.status.as_str()),
        }
    }
    end(&dir, manifest, &outputs, start, outcome.check(cfg))
}

/// Stability suite: `stability.csv`.
pub fn stability(cfg: &ExperimentConfig, exec: Execution) -> Result<PathBuf> {
    cfg.validate()?;
    let start = Instant::now();
    let (dir, manifest) = begin(cfg, "stability", exec)?;
    let outcome = run_stability_suite(cfg, exec)?;
    let out = dir.join(STABILITY);
    outcome.write(&out)?;
    end(&dir, manifest, &[out], start, outcome.check(cfg))
}

/// Increment-moment scan: `regularity.csv`.
pub fn regularity(cfg: &ExperimentConfig, exec: Execution) -> Result<PathBuf> {
    cfg.validate()?;
    let start = Instant::now();
    let (dir, manifest) = begin(cfg, "regularity", exec)?;
    let (scans, _) = run_regularity_scan(cfg, exec)?;
    let out = dir.join(REGULARITY);
    write_regularity(&scans, &out)?;
    end(&dir, manifest, &[out], start, Ok(()))
}

/// Semi-implicit vs fully implicit: `agreement.csv`.
pub fn agreement(cfg: &ExperimentConfig, exec: Execution) -> Result<PathBuf> {
    cfg.validate()?;
    let start = Instant::now();
    let (dir, manifest) = begin(cfg, "agreement", exec)?;
    let rows = run_scheme_agreement(cfg, exec)?;
    let out = dir.join(AGREEMENT);
    write_agreement(&rows, &out)?;
    end(&dir, manifest, &[out], start, Ok(()))
}

/// `plot_*.dat` from the rate tables in `input_dir`.
pub fn plotdata(input_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    emit_plot_data(input_dir, out_dir)
}

/// One path at `time.M_fine` and `space.N_ref`: `trajectory.csv`,
/// `diagnostics.csv` and the driving `noise.csv`. With `noise_in` the path
/// is restored from a previous dump instead of sampled.
pub fn trajectory(cfg: &ExperimentConfig, path_id: u64, noise_in: Option<&Path>) -> Result<PathBuf> {
    cfg.validate()?;
    let start = Instant::now();
    let (dir, manifest) = begin(cfg, "trajectory", Execution::Sequential)?;
    let model = cfg.model()?;
    let spec = cfg.noise_spec()?;
    let path = match noise_in {
        Some(src) => {
            let f = File::open(src).map_err(|e| HarnessError::file(src, e))?;
            let (path, q) = NoisePath::read_csv(BufReader::new(f)).map_err(|e| HarnessError::file(src, e))?;
            let expected = &spec.q()[..path.n_modes().min(spec.q().len())];
            if q.len() != spec.q().len() || q.iter().zip(expected).any(|(a, b)| (a - b).abs() > 1e-12 * b.abs()) {
                return Err(HarnessError::config("--noise", "covariance in the dump does not match the configuration"));
            }
            path
        }
        None => sample_path(&spec, cfg.time.horizon, cfg.time.m_fine, path_id)?,
    };
    let traj = if noise_in.is_some() {
        let grid = TimeGrid::new(path.step() * path.n_rows() as f64, path.n_rows())?;
        integrate(&cfg.initial_state(), &path, &model, &grid, cfg.space.n_ref, &cfg.scheme_config())?
    } else {
        reference_solution(&cfg.initial_state(), &path, &model, cfg.space.n_ref, &cfg.scheme_config())?
    };
    let outputs = [dir.join(TRAJECTORY), dir.join(DIAGNOSTICS), dir.join(NOISE)];
    let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| HarnessError::file(p, e));
    let mut w = open(&outputs[0])?;
    traj.write_csv(&mut w)?;
    w.flush().map_err(|e| HarnessError::file(&outputs[0], e))?;
    let mut w = open(&outputs[1])?;
    traj.write_diagnostics_csv(&mut w)?;
    w.flush().map_err(|e| HarnessError::file(&outputs[1], e))?;
    let mut w = open(&outputs[2])?;
    path.write_csv(&spec, &mut w)?;
    w.flush().map_err(|e| HarnessError::file(&outputs[2], e))?;
    end(&dir, manifest, &outputs, start, Ok(()))
}

/// Re-runs the command recorded in `manifest_path` from its resolved
/// configuration into `out_dir` and compares output digests.
pub fn replay(manifest_path: &Path, out_dir: &Path, exec: Execution) -> Result<PathBuf> {
    let recorded = RunManifest::load(manifest_path)?;
    let src_dir = manifest_path.parent().unwrap_or(Path::new("."));
    let cfg_path = src_dir.join(RESOLVED_CONFIG);
    let text = std::fs::read_to_string(&cfg_path).map_err(|e| HarnessError::config("manifest", format!("{}: {e}", cfg_path.display())))?;
    if crate::manifest::sha256_hex(text.as_bytes()) != recorded.config_sha256 {
        return Err(HarnessError::config("manifest", "resolved configuration does not match its recorded digest"));
    }
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    cfg.run.output_dir = out_dir.to_path_buf();
    let result = match recorded.command.as_str() {
        "run" => run(&cfg, exec),
        "stability" => stability(&cfg, exec),
        "regularity" => regularity(&cfg, exec),
        "agreement" => agreement(&cfg, exec),
        other => return Err(HarnessError::config("manifest", format!("command `{other}` cannot be replayed"))),
    };
    // a failing verdict still leaves a manifest to compare against
    let replayed = RunManifest::load(&out_dir.join(MANIFEST))?;
    let mismatched = recorded.mismatched_outputs(&replayed);
    if !mismatched.is_empty() {
        return Err(HarnessError::Numerical(format!("replay differs in {}", mismatched.join(", "))));
    }
    result
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use simplex_flow::mirror::{iterate, IterateRecord, IterateStatus, StopRule};
use simplex_flow::oracles::{
    compare_matrix, run_adjudication, AdjudicationConfig, AdjudicationReport, ExpectedVerdict,
    InstanceGenerator, CLAIM_IDS,
};
use simplex_flow::path_fields::{
    detect_recurrence, rotational_field, DEFAULT_DELTA_REC, DEFAULT_MIN_SEPARATION,
};
use simplex_flow::replicator::{check_time_reparameterization, integrate_scores, ScoreSource, TerminalStatus};
use simplex_flow::simplex::{restrict_to_face, softmax};
use simplex_flow::{
    FaceMask, FieldKind, ScoreVector, SimplexPoint, StepSize, Temperature, TemperatureSchedule,
    TrajectoryRecord,
};

use crate::config::{ExperimentConfig, Format, Init};
use crate::output::{
    config_hash, iterate_csv, manifest_path, trajectory_csv, write_file, write_manifest,
    RunManifest,
};
use crate::CliError;

pub const EXIT_OK: u8 = 0;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_ORACLE: u8 = 4;
const EXIT_CELL_FAILED: u8 = 1;

/// The committed claim matrix that `verify` must reproduce.
pub const EXPECTED_CLAIMS: &str = include_str!("../data/expected_claims.json");

/// Initial point on the face (or the full simplex), embedded in `V` coordinates.
fn initial_point(
    init: Init,
    seed: u64,
    s: &ScoreVector,
    t: Temperature,
    mask: Option<&FaceMask>,
) -> Result<SimplexPoint, CliError> {
    let (local_s, embed): (ScoreVector, Option<&FaceMask>) = match mask {
        Some(m) => (restrict_to_face(s, &SimplexPoint::uniform(s.len()), m)?.0, Some(m)),
        None => (s.clone(), None),
    };
    let k = local_s.len();
    let local = match init {
        Init::Uniform => SimplexPoint::uniform(k),
        Init::Random => InstanceGenerator::new(seed).interior_point(k),
        Init::Softmax => softmax(&local_s, t),
    };
    match embed {
        Some(m) => Ok(m.embed(&local)?),
        None => Ok(local),
    }
}

fn render<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("records serialize");
    text.push('\n');
    text
}

/// Writes `contents` to the configured output (plus a manifest), or to stdout.
fn emit(
    cfg: &ExperimentConfig,
    contents: &str,
    mut manifest: RunManifest,
    started: Instant,
) -> Result<(), CliError> {
    match &cfg.output {
        Some(path) => {
            write_file(path, contents).with_context(|| format!("writing {}", path.display()))?;
            manifest.outputs.push(path.display().to_string());
            manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
            let mpath = manifest_path(path);
            write_manifest(&mpath, &manifest).with_context(|| format!("writing {}", mpath.display()))?;
        }
        None => print!("{contents}"),
    }
    Ok(())
}

struct Simulation {
    traj: TrajectoryRecord,
    metrics: BTreeMap<String, f64>,
}

fn run_simulation(cfg: &ExperimentConfig) -> Result<Simulation, CliError> {
    let schedule = cfg.schedule()?;
    let t0 = cfg.initial_temperature()?;
    let s = cfg.base_scores()?;
    let mask = cfg.face.mask(&s, t0)?;
    let p0 = initial_point(cfg.init, cfg.seed, &s, t0, mask.as_ref())?;
    let source: &dyn ScoreSource = match &cfg.field {
        Some(f) => f,
        None => &s,
    };
    let traj = integrate_scores(cfg.dynamics, &p0, source, schedule, cfg.horizon, &cfg.controls)?;
    let first = &traj.samples[0];
    let last = traj.terminal();
    let mut metrics = BTreeMap::new();
    metrics.insert("terminal_kl".into(), last.kl_to_target);
    metrics.insert("free_energy_gain".into(), last.free_energy - first.free_energy);
    metrics.insert("step_count".into(), traj.accepted_steps as f64);
    metrics.insert("rejected_steps".into(), traj.rejected_steps as f64);
    metrics.insert("final_time".into(), last.t);
    Ok(Simulation { traj, metrics })
}

fn simulation_text(cfg: &ExperimentConfig, traj: &TrajectoryRecord) -> String {
    match cfg.format {
        Format::Csv => trajectory_csv(traj),
        Format::Json => render(traj),
    }
}

pub fn simulate(cfg: &ExperimentConfig) -> Result<u8, CliError> {
    let started = Instant::now();
    let sim = run_simulation(cfg)?;
    let mut manifest = RunManifest::new("simulate", config_hash(cfg), cfg.seed);
    manifest.status = sim.traj.terminal_status.label().into();
    manifest.metrics = sim.metrics;
    emit(cfg, &simulation_text(cfg, &sim.traj), manifest, started)?;
    if sim.traj.terminal_status == TerminalStatus::Diverged {
        eprintln!(
            "simulation diverged: {}",
            sim.traj.diagnostics.as_deref().unwrap_or("no diagnostics")
        );
        return Ok(EXIT_DIVERGED);
    }
    Ok(EXIT_OK)
}

fn run_iteration(cfg: &ExperimentConfig) -> Result<IterateRecord, CliError> {
    if cfg.field.is_some() {
        return Err(CliError::Config(
            "prox-iterate takes fixed scores, not a path-dependent field".into(),
        ));
    }
    let t = cfg.initial_temperature()?;
    if !cfg.schedule()?.is_constant() {
        return Err(CliError::Config("prox-iterate needs a constant temperature".into()));
    }
    let s = cfg.base_scores()?;
    let mask = cfg.face.mask(&s, t)?;
    let p0 = initial_point(cfg.init, cfg.seed, &s, t, mask.as_ref())?;
    let stop = StopRule {
        max_steps: cfg.steps,
        kl_tol: cfg.kl_tol,
    };
    let eta = StepSize::new(cfg.eta)?;
    let Some(mask) = mask else {
        return Ok(iterate(cfg.step, &p0, &s, t, eta, stop)?);
    };
    // Iterate the restricted system and embed each iterate back into V coordinates.
    let (s_face, p_face) = restrict_to_face(&s, &p0, &mask)?;
    let mut record = iterate(cfg.step, &p_face, &s_face, t, eta, stop)?;
    record.initial = mask.embed(&record.initial)?;
    for step in &mut record.steps {
        step.p = mask.embed(&step.p)?;
    }
    Ok(record)
}

fn iteration_metrics(record: &IterateRecord) -> BTreeMap<String, f64> {
    let mut metrics = BTreeMap::new();
    let f_end = record.steps.last().map_or(record.initial_free_energy, |s| s.free_energy);
    metrics.insert("terminal_kl".into(), record.terminal_kl_to_softmax());
    metrics.insert("free_energy_gain".into(), f_end - record.initial_free_energy);
    metrics.insert("step_count".into(), record.steps.len() as f64);
    if !record.steps.is_empty() {
        metrics.insert("min_ascent_slack".into(), record.min_slack());
    }
    metrics
}

fn iteration_status(record: &IterateRecord) -> &'static str {
    match record.status {
        IterateStatus::Converged => "converged",
        IterateStatus::MaxSteps => "max-steps",
    }
}

fn iteration_text(cfg: &ExperimentConfig, record: &IterateRecord) -> String {
    match cfg.format {
        Format::Csv => iterate_csv(record),
        Format::Json => render(record),
    }
}

pub fn prox_iterate(cfg: &ExperimentConfig) -> Result<u8, CliError> {
    let started = Instant::now();
    let record = run_iteration(cfg)?;
    let mut manifest = RunManifest::new("prox-iterate", config_hash(cfg), cfg.seed);
    manifest.status = iteration_status(&record).into();
    manifest.metrics = iteration_metrics(&record);
    emit(cfg, &iteration_text(cfg, &record), manifest, started)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    Simulate,
    ProxIterate,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellRecord {
    pub index: usize,
    pub temperature: Option<f64>,
    pub beta: Option<f64>,
    pub eta: Option<f64>,
    pub ok: bool,
    pub status: String,
    pub error: Option<String>,
    pub metrics: BTreeMap<String, f64>,
    pub output: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
struct SweepReport<'a> {
    mode: SweepMode,
    config_hash: String,
    seed: u64,
    cells: &'a [CellRecord],
}

/// Cartesian product in temperature-major order; an absent axis contributes `None`.
fn grid_cells(cfg: &ExperimentConfig) -> Vec<(Option<f64>, Option<f64>, Option<f64>)> {
    let axis = |v: &Vec<f64>| -> Vec<Option<f64>> {
        if v.is_empty() {
            vec![None]
        } else {
            v.iter().copied().map(Some).collect()
        }
    };
    let mut cells = Vec::new();
    for t in axis(&cfg.grid.temperatures) {
        for b in axis(&cfg.grid.betas) {
            for e in axis(&cfg.grid.etas) {
                cells.push((t, b, e));
            }
        }
    }
    cells
}

fn cell_config(
    base: &ExperimentConfig,
    t: Option<f64>,
    beta: Option<f64>,
    eta: Option<f64>,
) -> Result<ExperimentConfig, CliError> {
    let mut cfg = base.clone();
    if let Some(t) = t {
        cfg.schedule = Some(TemperatureSchedule::constant(Temperature::new(t)?));
    }
    if let Some(beta) = beta {
        cfg.field = Some(match &base.field {
            Some(f) => f.with_coupling_scaled(beta)?,
            None if base.scores.is_none() => rotational_field(beta)?,
            None => {
                return Err(CliError::Config(
                    "a β axis needs a linear field or no scores (rotational default)".into(),
                ))
            }
        });
    }
    if let Some(eta) = eta {
        cfg.eta = eta;
    }
    cfg.output = None;
    Ok(cfg)
}

fn run_cell(
    mode: SweepMode,
    base: &ExperimentConfig,
    index: usize,
    (t, beta, eta): (Option<f64>, Option<f64>, Option<f64>),
    dir: Option<&Path>,
) -> CellRecord {
    let mut rec = CellRecord {
        index,
        temperature: t,
        beta,
        eta,
        ok: false,
        status: "failed".into(),
        error: None,
        metrics: BTreeMap::new(),
        output: None,
    };
    let result = (|| -> Result<(String, String, BTreeMap<String, f64>, bool), CliError> {
        let cfg = cell_config(base, t, beta, eta)?;
        match mode {
            SweepMode::Simulate => {
                let sim = run_simulation(&cfg)?;
                let mut metrics = sim.metrics;
                if let (FieldKind::Literal, None, Some(s)) = (cfg.dynamics, &cfg.field, &cfg.scores) {
                    if cfg.face.mask(s, cfg.initial_temperature()?)?.is_none() {
                        let check = check_time_reparameterization(
                            FieldKind::Literal,
                            s,
                            &sim.traj.samples[0].p,
                            cfg.schedule()?,
                            cfg.horizon,
                            &cfg.controls,
                        )?;
                        metrics.insert("reparam_deviation".into(), check.max_deviation);
                    }
                }
                if cfg.field.is_some() && sim.traj.samples.len() >= 2 {
                    let r = detect_recurrence(&sim.traj, DEFAULT_DELTA_REC, DEFAULT_MIN_SEPARATION)?;
                    metrics.insert("recurrent".into(), if r.recurrent { 1.0 } else { 0.0 });
                    metrics.insert("return_distance".into(), r.return_distance);
                    if let Some(t2) = r.first_return_time {
                        metrics.insert("first_return_time".into(), t2);
                        metrics.insert("drift_per_cycle".into(), r.drift_per_cycle);
                    }
                }
                let diverged = sim.traj.terminal_status == TerminalStatus::Diverged;
                let text = simulation_text(&cfg, &sim.traj);
                Ok((sim.traj.terminal_status.label().into(), text, metrics, !diverged))
            }
            SweepMode::ProxIterate => {
                let record = run_iteration(&cfg)?;
                let text = iteration_text(&cfg, &record);
                Ok((iteration_status(&record).into(), text, iteration_metrics(&record), true))
            }
        }
    })();
    match result {
        Ok((status, text, metrics, ok)) => {
            rec.status = status;
            rec.metrics = metrics;
            rec.ok = ok;
            if let Some(dir) = dir {
                let ext = match base.format {
                    Format::Csv => "csv",
                    Format::Json => "json",
                };
                let path = dir.join(format!("cell_{index:04}.{ext}"));
                match write_file(&path, &text) {
                    Ok(()) => rec.output = Some(path.display().to_string()),
                    Err(e) => {
                        rec.ok = false;
                        rec.error = Some(format!("writing {}: {e}", path.display()));
                    }
                }
            }
        }
        Err(e) => rec.error = Some(e.to_string()),
    }
    rec
}

pub fn sweep(cfg: &ExperimentConfig, mode: SweepMode) -> Result<u8, CliError> {
    let started = Instant::now();
    let cells = grid_cells(cfg);
    let dir: Option<PathBuf> = cfg.output.clone();
    if let Some(d) = &dir {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .context("building the worker pool")?;
    let records: Vec<CellRecord> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, &cell)| run_cell(mode, cfg, i, cell, dir.as_deref()))
            .collect()
    });

    let hash = config_hash(cfg);
    let report = SweepReport {
        mode,
        config_hash: hash.clone(),
        seed: cfg.seed,
        cells: &records,
    };
    let text = render(&report);
    let failed = records.iter().filter(|r| !r.ok).count();
    let diverged = records.iter().any(|r| r.status == TerminalStatus::Diverged.label());
    match &dir {
        Some(d) => {
            let path = d.join("sweep.json");
            write_file(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            let mut manifest = RunManifest::new("sweep", hash, cfg.seed);
            manifest.status = if failed == 0 { "ok".into() } else { format!("{failed} cells failed") };
            manifest.metrics.insert("cells".into(), records.len() as f64);
            manifest.metrics.insert("failed_cells".into(), failed as f64);
            manifest.outputs.push(path.display().to_string());
            manifest.outputs.extend(records.iter().filter_map(|r| r.output.clone()));
            manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
            write_manifest(&d.join("sweep.manifest.json"), &manifest).context("writing sweep manifest")?;
        }
        None => print!("{text}"),
    }
    for r in records.iter().filter(|r| !r.ok) {
        eprintln!("cell {}: {}", r.index, r.error.as_deref().unwrap_or(&r.status));
    }
    Ok(match (failed, diverged) {
        (0, _) => EXIT_OK,
        (_, true) => EXIT_DIVERGED,
        _ => EXIT_CELL_FAILED,
    })
}

pub struct VerifyOptions {
    pub claims: Option<Vec<String>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub expected: Option<PathBuf>,
    pub write_expected: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

pub fn verify(opts: &VerifyOptions) -> Result<u8, CliError> {
    let started = Instant::now();
    if let Some(claims) = &opts.claims {
        if let Some(bad) = claims.iter().find(|c| !CLAIM_IDS.contains(&c.as_str())) {
            return Err(CliError::Config(format!(
                "--claims: unknown claim id `{bad}` (known: {})",
                CLAIM_IDS.join(", ")
            )));
        }
    }
    let defaults = AdjudicationConfig::default();
    let config = AdjudicationConfig {
        seed: opts.seed.unwrap_or(defaults.seed),
        trials: opts.trials.unwrap_or(defaults.trials),
        claims: opts.claims.clone(),
    };
    let report: AdjudicationReport = run_adjudication(&config)?;
    print!("{}", report.summary_table());

    if let Some(path) = &opts.write_expected {
        write_file(path, &render(&report.matrix()))
            .with_context(|| format!("writing {}", path.display()))?;
        eprintln!("wrote claim matrix to {}", path.display());
    }

    let expected_text = match &opts.expected {
        Some(p) => std::fs::read_to_string(p)
            .map_err(|e| CliError::Config(format!("--expected {}: {e}", p.display())))?,
        None => EXPECTED_CLAIMS.to_string(),
    };
    let mut expected: Vec<ExpectedVerdict> = serde_json::from_str(&expected_text)
        .map_err(|e| CliError::Config(format!("expected claim matrix: {e}")))?;
    if let Some(claims) = &opts.claims {
        expected.retain(|e| claims.contains(&e.claim_id));
    }
    let problems = compare_matrix(&expected, &report.matrix());

    if let Some(path) = &opts.output {
        write_file(path, &render(&report)).with_context(|| format!("writing {}", path.display()))?;
        let mut manifest = RunManifest::new("verify", config_hash(&config), config.seed);
        manifest.status = if problems.is_empty() { "reproduced".into() } else { "mismatch".into() };
        manifest.metrics.insert("verdicts".into(), report.verdicts.len() as f64);
        manifest.metrics.insert("mismatches".into(), problems.len() as f64);
        manifest.outputs.push(path.display().to_string());
        manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
        write_manifest(&manifest_path(path), &manifest).context("writing verify manifest")?;
    }

    if problems.is_empty() {
        println!("claim matrix reproduced ({} verdicts)", report.verdicts.len());
        Ok(EXIT_OK)
    } else {
        for p in &problems {
            eprintln!("mismatch: {p}");
        }
        Ok(EXIT_ORACLE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{resolve, CommonArgs, Grid};

    #[test]
    fn grid_order_is_temperature_major() {
        let args = CommonArgs {
            scores: Some("1,0".into()),
            temperature: Some(1.0),
            ..CommonArgs::default()
        };
        let grid = Grid {
            temperatures: vec![0.5, 1.0],
            betas: vec![],
            etas: vec![0.1, 1.0],
        };
        let cfg = resolve(&args, Some(&grid)).unwrap();
        let cells = grid_cells(&cfg);
        assert_eq!(
            cells,
            vec![
                (Some(0.5), None, Some(0.1)),
                (Some(0.5), None, Some(1.0)),
                (Some(1.0), None, Some(0.1)),
                (Some(1.0), None, Some(1.0)),
            ]
        );
    }

    #[test]
    fn expected_matrix_parses_and_covers_every_claim() {
        let expected: Vec<ExpectedVerdict> = serde_json::from_str(EXPECTED_CLAIMS).unwrap();
        for id in CLAIM_IDS {
            assert!(expected.iter().any(|e| e.claim_id == id), "{id}");
        }
    }

    #[test]
    fn face_initial_point_is_embedded() {
        let s = ScoreVector::new(vec![3.0, 2.0, 1.0, 0.0]).unwrap();
        let t = Temperature::new(1.0).unwrap();
        let mask = FaceMask::from_indices(4, &[0, 1]).unwrap();
        let p = initial_point(Init::Softmax, 0, &s, t, Some(&mask)).unwrap();
        assert_eq!(&p.probs()[2..], &[0.0, 0.0]);
    }
}

//! Experiment configuration: a TOML file of record, overridden by command-line flags.
//!
//! Precedence is built-in defaults, then the file, then flags. Relative paths inside the
//! file resolve against the file's directory.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use simplex_flow::mirror::{DEFAULT_ETA, DEFAULT_KL_TOL, DEFAULT_MAX_STEPS};
use simplex_flow::path_fields::ScoreField;
use simplex_flow::replicator::{Controls, Sampling, DEFAULT_HORIZON};
use simplex_flow::simplex::{build_face_nucleus, build_face_topk};
use simplex_flow::{
    FaceMask, FieldKind, MirrorStepKind, ScoreVector, Temperature, TemperatureSchedule,
};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Init {
    Uniform,
    Random,
    Softmax,
}

/// Flags shared by every subcommand.
#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Scores inline (`1,0,-0.5`) or a path to a file of numbers.
    #[arg(long, allow_hyphen_values = true)]
    pub scores: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// `constant:T`, `piecewise:T0,t1:T1,...` or `exp:T0:rate`.
    #[arg(long, allow_hyphen_values = true)]
    pub schedule: Option<String>,
    /// `literal` or `entropic`.
    #[arg(long)]
    pub dynamics: Option<String>,
    /// `exact-prox` or `printed-mw`.
    #[arg(long)]
    pub step: Option<String>,
    /// `none`, `topk:K`, `nucleus:MASS` or `indices:1,2,...` (one-based).
    #[arg(long)]
    pub face: Option<String>,
    /// JSON file describing a path-dependent score field.
    #[arg(long)]
    pub field: Option<PathBuf>,
    /// Iteration budget for prox-iterate.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Stopping tolerance: per-step KL for prox-iterate, KL to target for simulate.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub rel_tol: Option<f64>,
    #[arg(long)]
    pub abs_tol: Option<f64>,
    /// `geometric` or `uniform` sample times.
    #[arg(long)]
    pub sampling: Option<String>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    #[arg(long, value_enum)]
    pub init: Option<Init>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    scores: Option<ScoresSection>,
    temperature: Option<TemperatureSection>,
    dynamics: Option<DynamicsSection>,
    face: Option<FaceSection>,
    field: Option<FieldSection>,
    integrator: Option<IntegratorSection>,
    iterate: Option<IterateSection>,
    run: Option<RunSection>,
    output: Option<OutputSection>,
    sweep: Option<SweepSection>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoresSection {
    values: Option<Vec<f64>>,
    file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct TemperatureSection {
    value: Option<f64>,
    schedule: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsSection {
    field: Option<String>,
    step: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FaceSection {
    spec: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldSection {
    kind: Option<String>,
    s0: Option<Vec<f64>>,
    #[serde(rename = "B")]
    b: Option<Vec<f64>>,
    file: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntegratorSection {
    horizon: Option<f64>,
    dt0: Option<f64>,
    rel_tol: Option<f64>,
    abs_tol: Option<f64>,
    convergence_kl: Option<f64>,
    sampling: Option<String>,
    samples: Option<usize>,
    max_steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct IterateSection {
    steps: Option<usize>,
    eta: Option<f64>,
    tol: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunSection {
    seed: Option<u64>,
    init: Option<Init>,
    jobs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    path: Option<PathBuf>,
    format: Option<Format>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    temperatures: Option<Vec<f64>>,
    betas: Option<Vec<f64>>,
    etas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FaceSpec {
    None,
    TopK { k: usize },
    Nucleus { mass: f64 },
    /// Zero-based.
    Indices { indices: Vec<usize> },
}

impl FaceSpec {
    pub fn mask(&self, s: &ScoreVector, t: Temperature) -> Result<Option<FaceMask>, CliError> {
        let mask = match self {
            FaceSpec::None => return Ok(None),
            FaceSpec::TopK { k } => build_face_topk(s, *k),
            FaceSpec::Nucleus { mass } => build_face_nucleus(s, t, *mass),
            FaceSpec::Indices { indices } => FaceMask::from_indices(s.len(), indices),
        };
        mask.map(Some).map_err(|e| CliError::Config(format!("face: {e}")))
    }
}

/// Parameter grid for `sweep`; an empty axis is not varied.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Grid {
    pub temperatures: Vec<f64>,
    pub betas: Vec<f64>,
    pub etas: Vec<f64>,
}

/// Fully resolved configuration. Its canonical JSON is hashed into the run manifest;
/// output location, format and job count do not change results and are left out.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub scores: Option<ScoreVector>,
    pub schedule: Option<TemperatureSchedule>,
    pub dynamics: FieldKind,
    pub step: MirrorStepKind,
    pub face: FaceSpec,
    pub field: Option<ScoreField>,
    pub horizon: f64,
    pub controls: Controls,
    pub steps: usize,
    pub eta: f64,
    pub kl_tol: f64,
    pub seed: u64,
    pub init: Init,
    pub grid: Grid,
    #[serde(skip)]
    pub jobs: usize,
    #[serde(skip)]
    pub output: Option<PathBuf>,
    #[serde(skip)]
    pub format: Format,
}

impl ExperimentConfig {
    /// Scores that define the face and the initial point (the field's `s0` if present).
    pub fn base_scores(&self) -> Result<ScoreVector, CliError> {
        match (&self.field, &self.scores) {
            (Some(f), _) => Ok(f.base_scores().clone()),
            (None, Some(s)) => Ok(s.clone()),
            (None, None) => Err(CliError::Config("scores are required (--scores or [scores])".into())),
        }
    }

    pub fn schedule(&self) -> Result<&TemperatureSchedule, CliError> {
        self.schedule.as_ref().ok_or_else(|| {
            CliError::Config("a temperature or schedule is required (--temperature / --schedule)".into())
        })
    }

    /// Temperature at `t = 0`, used for softmax initialization and nucleus faces.
    pub fn initial_temperature(&self) -> Result<Temperature, CliError> {
        Temperature::new(self.schedule()?.at(0.0)).map_err(|e| CliError::Config(e.to_string()))
    }
}

fn cfg<T, E: std::fmt::Display>(field: &str, r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Config(format!("{field}: {e}")))
}

pub fn parse_numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("`{t}` is not a number")))
        .collect()
}

fn read_scores_file(path: &Path) -> Result<Vec<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("scores file {}: {e}", path.display())))?;
    cfg(&format!("scores file {}", path.display()), parse_numbers(&text))
}

/// Inline list if it parses as numbers, otherwise a file path.
fn scores_arg(arg: &str) -> Result<Vec<f64>, CliError> {
    let path = Path::new(arg);
    if path.is_file() {
        return read_scores_file(path);
    }
    parse_numbers(arg).map_err(|e| {
        CliError::Config(format!("--scores: {e}, and no file named `{arg}` exists"))
    })
}

pub fn parse_schedule(spec: &str) -> Result<TemperatureSchedule, CliError> {
    let field = "schedule";
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("{field}: expected KIND:ARGS, got `{spec}`")))?;
    let num = |t: &str| cfg(field, t.trim().parse::<f64>().map_err(|_| format!("`{t}` is not a number")));
    let schedule = match kind {
        "constant" => TemperatureSchedule::Constant { value: num(rest)? },
        "piecewise" => {
            let mut parts = rest.split(',');
            let mut values = vec![num(parts.next().unwrap_or(""))?];
            let mut breakpoints = Vec::new();
            for part in parts {
                let (b, v) = part.split_once(':').ok_or_else(|| {
                    CliError::Config(format!("{field}: piecewise segments are TIME:VALUE, got `{part}`"))
                })?;
                breakpoints.push(num(b)?);
                values.push(num(v)?);
            }
            TemperatureSchedule::PiecewiseConstant { breakpoints, values }
        }
        "exp" => {
            let (t0, rate) = rest
                .split_once(':')
                .ok_or_else(|| CliError::Config(format!("{field}: exp needs T0:RATE")))?;
            TemperatureSchedule::Exponential {
                t0: num(t0)?,
                rate: num(rate)?,
            }
        }
        other => return Err(CliError::Config(format!("{field}: unknown kind `{other}`"))),
    };
    cfg(field, schedule.validate())?;
    Ok(schedule)
}

pub fn parse_face(spec: &str) -> Result<FaceSpec, CliError> {
    let field = "face";
    if spec == "none" {
        return Ok(FaceSpec::None);
    }
    let (kind, rest) = spec
        .split_once(':')
        .ok_or_else(|| CliError::Config(format!("{field}: expected none or KIND:ARG, got `{spec}`")))?;
    match kind {
        "topk" => Ok(FaceSpec::TopK {
            k: cfg(field, rest.parse::<usize>())?,
        }),
        "nucleus" => Ok(FaceSpec::Nucleus {
            mass: cfg(field, rest.parse::<f64>())?,
        }),
        "indices" => {
            let mut indices = Vec::new();
            for t in rest.split(',') {
                let i: usize = cfg(field, t.trim().parse::<usize>())?;
                if i == 0 {
                    return Err(CliError::Config(format!("{field}: indices are one-based, got 0")));
                }
                indices.push(i - 1);
            }
            Ok(FaceSpec::Indices { indices })
        }
        other => Err(CliError::Config(format!("{field}: unknown kind `{other}`"))),
    }
}

fn parse_sampling(spec: &str, count: usize) -> Result<Sampling, CliError> {
    match spec {
        "geometric" => Ok(Sampling::Geometric { count }),
        "uniform" => Ok(Sampling::Uniform { count }),
        other => Err(CliError::Config(format!("sampling: unknown kind `{other}`"))),
    }
}

fn read_field_json(path: &Path) -> Result<ScoreField, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("field file {}: {e}", path.display())))?;
    cfg(&format!("field file {}", path.display()), serde_json::from_str(&text))
}

fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
}

/// Merges defaults, the optional config file and flags.
pub fn resolve(args: &CommonArgs, grid_flags: Option<&Grid>) -> Result<ExperimentConfig, CliError> {
    let (file, base) = match &args.config {
        Some(p) => (load_file(p)?, p.parent().map(Path::to_path_buf).unwrap_or_default()),
        None => (FileConfig::default(), PathBuf::new()),
    };
    let rel = |p: &PathBuf| if p.is_absolute() { p.clone() } else { base.join(p) };

    // Scores.
    let mut scores = None;
    if let Some(sec) = &file.scores {
        scores = match (&sec.values, &sec.file) {
            (Some(v), None) => Some(v.clone()),
            (None, Some(f)) => Some(read_scores_file(&rel(f))?),
            (None, None) => None,
            (Some(_), Some(_)) => {
                return Err(CliError::Config("[scores]: give either `values` or `file`".into()))
            }
        };
    }
    if let Some(arg) = &args.scores {
        scores = Some(scores_arg(arg)?);
    }
    let scores = scores
        .map(|v| cfg("scores", ScoreVector::new(v)))
        .transpose()?;

    // Temperature or schedule: exactly one per layer, flags replace the file's choice.
    let mut schedule = None;
    if let Some(sec) = &file.temperature {
        schedule = match (sec.value, &sec.schedule) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "[temperature]: give exactly one of `value` and `schedule`".into(),
                ))
            }
            (Some(v), None) => Some(TemperatureSchedule::Constant { value: v }),
            (None, Some(s)) => Some(parse_schedule(s)?),
            (None, None) => None,
        };
    }
    match (args.temperature, &args.schedule) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config(
                "give exactly one of --temperature and --schedule".into(),
            ))
        }
        (Some(v), None) => schedule = Some(TemperatureSchedule::Constant { value: v }),
        (None, Some(s)) => schedule = Some(parse_schedule(s)?),
        (None, None) => {}
    }
    if let Some(s) = &schedule {
        cfg("temperature", s.validate())?;
    }

    let dyn_sec = file.dynamics.unwrap_or_default();
    let dynamics_text = args.dynamics.clone().or(dyn_sec.field).unwrap_or_else(|| "entropic".into());
    let dynamics: FieldKind = cfg("dynamics", dynamics_text.parse())?;
    let step_text = args.step.clone().or(dyn_sec.step).unwrap_or_else(|| "exact-prox".into());
    let step: MirrorStepKind = cfg("step", step_text.parse())?;

    let face_text = args
        .face
        .clone()
        .or(file.face.map(|f| f.spec))
        .unwrap_or_else(|| "none".into());
    let face = parse_face(&face_text)?;

    // Path-dependent field.
    let mut field = None;
    if let Some(sec) = file.field {
        field = Some(if let Some(f) = &sec.file {
            read_field_json(&rel(f))?
        } else {
            let s0 = match (sec.s0, &scores) {
                (Some(v), _) => cfg("[field] s0", ScoreVector::new(v))?,
                (None, Some(s)) => s.clone(),
                (None, None) => return Err(CliError::Config("[field]: `s0` or [scores] required".into())),
            };
            let kind = sec.kind.unwrap_or_else(|| "linear".into());
            let wire = serde_json::json!({ "kind": kind, "s0": s0.values(), "B": sec.b });
            cfg("[field]", serde_json::from_value::<ScoreField>(wire))?
        });
    }
    if let Some(p) = &args.field {
        field = Some(read_field_json(p)?);
    }
    if let (Some(f), Some(s)) = (&field, &scores) {
        if f.base_scores() != s {
            return Err(CliError::Config(
                "scores conflict with the field's s0; give only one".into(),
            ));
        }
    }

    let integ = file.integrator.unwrap_or_default();
    let defaults = Controls::default();
    let count = args.samples.or(integ.samples).unwrap_or(200);
    let sampling_text = args
        .sampling
        .clone()
        .or(integ.sampling)
        .unwrap_or_else(|| "geometric".into());
    let controls = Controls {
        dt0: integ.dt0.unwrap_or(defaults.dt0),
        rel_tol: args.rel_tol.or(integ.rel_tol).unwrap_or(defaults.rel_tol),
        abs_tol: args.abs_tol.or(integ.abs_tol).unwrap_or(defaults.abs_tol),
        convergence_kl: args
            .tol
            .or(integ.convergence_kl)
            .unwrap_or(defaults.convergence_kl),
        sampling: parse_sampling(&sampling_text, count)?,
        max_steps: integ.max_steps.unwrap_or(defaults.max_steps),
    };
    let horizon = args.horizon.or(integ.horizon).unwrap_or(DEFAULT_HORIZON);
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(CliError::Config(format!("horizon: must be positive, got {horizon}")));
    }

    let it = file.iterate.unwrap_or_default();
    let run = file.run.unwrap_or_default();
    let out = file.output.unwrap_or_default();
    let sw = file.sweep.unwrap_or_default();
    let mut grid = Grid {
        temperatures: sw.temperatures.unwrap_or_default(),
        betas: sw.betas.unwrap_or_default(),
        etas: sw.etas.unwrap_or_default(),
    };
    if let Some(g) = grid_flags {
        if !g.temperatures.is_empty() {
            grid.temperatures = g.temperatures.clone();
        }
        if !g.betas.is_empty() {
            grid.betas = g.betas.clone();
        }
        if !g.etas.is_empty() {
            grid.etas = g.etas.clone();
        }
    }

    let eta = args.eta.or(it.eta).unwrap_or(DEFAULT_ETA);
    if !(eta.is_finite() && eta > 0.0) {
        return Err(CliError::Config(format!("eta: must be positive, got {eta}")));
    }
    let jobs = args.jobs.or(run.jobs).unwrap_or(1);
    if jobs == 0 {
        return Err(CliError::Config("jobs: must be at least 1".into()));
    }
    Ok(ExperimentConfig {
        scores,
        schedule,
        dynamics,
        step,
        face,
        field,
        horizon,
        controls,
        steps: args.steps.or(it.steps).unwrap_or(DEFAULT_MAX_STEPS),
        eta,
        kl_tol: args.tol.or(it.tol).unwrap_or(DEFAULT_KL_TOL),
        seed: args.seed.or(run.seed).unwrap_or(0),
        init: args.init.or(run.init).unwrap_or(Init::Uniform),
        grid,
        jobs,
        output: args.output.clone().or(out.path.map(|p| rel(&p))),
        format: args.format.or(out.format).unwrap_or(Format::Csv),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_specs() {
        assert_eq!(
            parse_schedule("constant:2").unwrap(),
            TemperatureSchedule::Constant { value: 2.0 }
        );
        assert_eq!(
            parse_schedule("piecewise:1.0,2:0.5,4:0.25").unwrap(),
            TemperatureSchedule::PiecewiseConstant {
                breakpoints: vec![2.0, 4.0],
                values: vec![1.0, 0.5, 0.25]
            }
        );
        assert_eq!(
            parse_schedule("exp:1:-0.5").unwrap(),
            TemperatureSchedule::Exponential { t0: 1.0, rate: -0.5 }
        );
        assert!(parse_schedule("exp:1").is_err());
        assert!(parse_schedule("constant:-1").is_err());
        assert!(parse_schedule("linear:1").is_err());
    }

    #[test]
    fn face_specs() {
        assert_eq!(parse_face("none").unwrap(), FaceSpec::None);
        assert_eq!(parse_face("topk:2").unwrap(), FaceSpec::TopK { k: 2 });
        assert_eq!(parse_face("indices:1,3").unwrap(), FaceSpec::Indices { indices: vec![0, 2] });
        assert!(parse_face("indices:0,1").is_err());
        assert!(parse_face("top:2").is_err());
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "[scores]\nvalues = [1.0, 0.0]\n[temperature]\nvalue = 2.0\n[dynamics]\nfield = \"literal\"\n[iterate]\neta = 0.25\n",
        )
        .unwrap();
        let args = CommonArgs {
            config: Some(path.clone()),
            eta: Some(0.75),
            schedule: Some("exp:1:0.1".into()),
            ..CommonArgs::default()
        };
        let c = resolve(&args, None).unwrap();
        assert_eq!(c.dynamics, FieldKind::Literal);
        assert_eq!(c.eta, 0.75);
        assert_eq!(c.schedule, Some(TemperatureSchedule::Exponential { t0: 1.0, rate: 0.1 }));
        assert_eq!(c.scores.unwrap().values(), &[1.0, 0.0]);
    }

    #[test]
    fn config_errors_name_the_problem() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.toml");
        std::fs::write(&path, "[scores]\nvalues = [1.0, 0.0]\n\n[temperature]\nvalu = 2.0\n").unwrap();
        let args = CommonArgs {
            config: Some(path),
            ..CommonArgs::default()
        };
        let msg = resolve(&args, None).unwrap_err().to_string();
        assert!(msg.contains("valu") && msg.contains("line 5"), "{msg}");

        let args = CommonArgs {
            temperature: Some(1.0),
            schedule: Some("constant:1".into()),
            ..CommonArgs::default()
        };
        assert!(matches!(resolve(&args, None), Err(CliError::Config(_))));
    }
}

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use fdpctl_core::bounding::fmt17;
use fdpctl_core::models::AltMeans;
use fdpctl_core::procedures::{step, DeviceChoice, PreparedProcedure, ProcedureOptions};
use fdpctl_core::simulate::{power_sweep, run_campaign, CampaignOptions, PowerPoint, PowerStudy};
use fdpctl_core::{
    CriticalValues, Direction, Error, ExperimentConfig, Hypotheses, Mode, NoiseModel, ProcedureId, ProcedureSpec,
};
use serde_json::Value;

use crate::args::{ApplyArgs, Command, CritvalsArgs, ModelArgs, PowerArgs, ProcArgs, SimulateArgs};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError { code: EXIT_USAGE, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { code: EXIT_DATA, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Data(_) => EXIT_DATA,
            Error::Numerical(_) => EXIT_NUMERICAL,
            Error::Domain(_) | Error::UnsupportedModel(_) | Error::Model(_) | Error::Config(_) => EXIT_USAGE,
        };
        CliError { code, message: e.to_string() }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// One produced artifact; `path = None` means stdout.
#[derive(Debug)]
pub struct Output {
    pub role: &'static str,
    pub path: Option<PathBuf>,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Default)]
pub struct RunResult {
    pub outputs: Vec<Output>,
    pub master_seed: Option<u64>,
    pub resolved_model: Option<NoiseModel>,
    pub notices: Vec<String>,
}

pub fn run(cmd: &Command, workers: Option<usize>) -> CliResult<RunResult> {
    match cmd {
        Command::Critvals(a) => critvals(a, workers),
        Command::Apply(a) => apply(a, workers),
        Command::Simulate(a) => simulate(a, workers),
        Command::Power(a) => power(a, workers),
        Command::Replay(_) => Err(CliError::usage("a manifest cannot replay another replay")),
    }
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))
}

/// Reads a CSV matrix of floats.
fn read_matrix(path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::data(format!("{} row {i}: {e}", path.display())))?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn resolve_model(a: &ModelArgs) -> CliResult<NoiseModel> {
    if let Some(rho) = a.rho {
        return Ok(NoiseModel::gauss_equi(rho)?);
    }
    let Some(spec) = &a.model else {
        return Ok(NoiseModel::Independent);
    };
    let text = if spec.trim_start().starts_with('{') { spec.clone() } else { read_text(Path::new(spec))? };
    let mut value: Value =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("malformed model JSON: {e}")))?;
    if let Some(obj) = value.as_object_mut() {
        if let Some(file) = obj.remove("gamma_file") {
            let path = file.as_str().ok_or_else(|| CliError::usage("gamma_file must be a path string"))?;
            let rows = read_matrix(Path::new(path))?;
            obj.insert("gamma".into(), serde_json::to_value(rows).expect("matrix serializes"));
        }
    }
    serde_json::from_value(value).map_err(|e| CliError::usage(format!("invalid model: {e}")))
}

fn procedure_id(name: &str) -> CliResult<ProcedureId> {
    if name.eq_ignore_ascii_case("split") {
        return Ok(ProcedureId::SplitHalf);
    }
    Ok(ProcedureId::parse(name)?)
}

fn parse_mode(s: &str, m0: Option<usize>) -> CliResult<Mode> {
    match s {
        "oracle" => m0
            .map(|m0| Mode::Oracle { m0 })
            .ok_or_else(|| CliError::usage("--mode oracle requires --m0")),
        other => Mode::parse(other).map_err(|_| {
            CliError::usage(format!("unknown mode '{other}' (expected nonadaptive, adaptive or oracle)"))
        }),
    }
}

pub fn build_spec(name: &str, a: &ProcArgs, m0: Option<usize>) -> CliResult<ProcedureSpec> {
    let id = procedure_id(name)?;
    let alpha = a.alpha.ok_or_else(|| CliError::usage("--alpha is required"))?;
    let zeta = match (a.zeta, id) {
        (Some(z), _) => z,
        (None, ProcedureId::Bh) => 0.05,
        (None, _) => return Err(CliError::usage(format!("--zeta is required for [{}]", id.name()))),
    };
    let options = ProcedureOptions {
        lambda: a.lambda,
        big_k: a.big_k,
        device: DeviceChoice::parse(&a.device)?,
        mode: if id == ProcedureId::Raw { parse_mode(&a.mode, m0)? } else { Mode::Adaptive },
        mc_draws: a.mc_draws,
        mc_seed: a.mc_seed,
        ..ProcedureOptions::default()
    };
    Ok(ProcedureSpec::new(id, alpha, zeta)
        .with_direction(Direction::parse(&a.direction).map_err(|e| CliError::usage(e.to_string()))?)
        .with_options(options))
}

fn prepare(spec: &ProcedureSpec, model: &NoiseModel, m: usize, workers: Option<usize>) -> CliResult<PreparedProcedure> {
    Ok(fdpctl_core::simulate::with_workers(workers, || PreparedProcedure::prepare(spec, model, m))??)
}

fn critvals(a: &CritvalsArgs, workers: Option<usize>) -> CliResult<RunResult> {
    let model = resolve_model(&a.model)?;
    let spec = build_spec(&a.procedure, &a.proc_args, a.m0)?;
    let prepared = prepare(&spec, &model, a.m, workers)?;
    let cv = prepared.critical_values().ok_or_else(|| {
        CliError::usage(format!("[{}] is not defined by a table of critical values", spec.id.name()))
    })?;
    let mut bytes = Vec::new();
    cv.write_csv(&mut bytes)?;
    Ok(RunResult {
        outputs: vec![Output { role: "critvals", path: a.out.clone(), bytes }],
        resolved_model: Some(model),
        ..Default::default()
    })
}

/// Single-column CSV of p-values; a non-numeric first row is a header.
pub fn read_pvalues(path: &Path) -> CliResult<Vec<f64>> {
    let file = fs::File::open(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(BufReader::new(file));
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
        if rec.len() != 1 {
            return Err(CliError::data(format!("p-value file row {i}: expected one column, found {}", rec.len())));
        }
        match rec[0].trim().parse::<f64>() {
            Ok(x) => out.push(x),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(CliError::data(format!("p-value at row {} is not a number: '{}'", out.len(), &rec[0]))),
        }
    }
    Ok(out)
}

fn apply(a: &ApplyArgs, workers: Option<usize>) -> CliResult<RunResult> {
    let p = read_pvalues(&a.pvalues)?;
    let mut result = RunResult::default();
    let outcome = match (&a.critvals, &a.procedure) {
        (Some(path), None) => {
            let file = fs::File::open(path).map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
            let cv = CriticalValues::read_csv(BufReader::new(file))?;
            let direction = Direction::parse(&a.proc_args.direction).map_err(|e| CliError::usage(e.to_string()))?;
            step(&p, &cv, direction)?
        }
        (None, Some(name)) => {
            let model = resolve_model(&a.model)?;
            let spec = build_spec(name, &a.proc_args, a.m0)?;
            if p.is_empty() {
                return Err(CliError::data("no p-values"));
            }
            let out = prepare(&spec, &model, p.len(), workers)?.apply(&p)?;
            result.resolved_model = Some(model);
            out
        }
        _ => return Err(CliError::usage("give exactly one of --critvals or --proc")),
    };
    let mut bytes = serde_json::to_vec_pretty(&outcome).expect("outcome serializes");
    bytes.push(b'\n');
    result.outputs.push(Output { role: "report", path: a.out.clone(), bytes });
    Ok(result)
}

fn simulate(a: &SimulateArgs, workers: Option<usize>) -> CliResult<RunResult> {
    let model = resolve_model(&a.model)?;
    let config = ExperimentConfig::new(
        a.m,
        Hypotheses::Count { m0: a.m0, uniform_mixture: a.uniform_mixture },
        AltMeans::Shared(a.beta),
        model.clone(),
    )?;
    let spec = build_spec(&a.procedure, &a.proc_args, Some(a.m0))?;
    let options = CampaignOptions {
        retain_samples: a.dump_fdp.as_ref().map(|_| true),
        kfwer_k: a.kfwer_k,
        workers,
        ..CampaignOptions::default()
    };
    let report = run_campaign(&spec, &config, a.reps, a.seed, &options)?;
    let mut json = report.to_json()?.into_bytes();
    json.push(b'\n');
    let mut outputs = vec![Output { role: "json", path: a.out_json.clone(), bytes: json }];
    if let Some(path) = &a.out_csv {
        let mut bytes = Vec::new();
        report.write_csv(&mut bytes)?;
        outputs.push(Output { role: "csv", path: Some(path.clone()), bytes });
    }
    if let Some(path) = &a.dump_fdp {
        let mut bytes = Vec::new();
        report.write_fdp_samples(&mut bytes)?;
        outputs.push(Output { role: "fdp_samples", path: Some(path.clone()), bytes });
    }
    Ok(RunResult { outputs, master_seed: Some(a.seed), resolved_model: Some(model), notices: Vec::new() })
}

fn power(a: &PowerArgs, workers: Option<usize>) -> CliResult<RunResult> {
    let procedures = a
        .procs
        .iter()
        .map(|name| Ok(ProcedureSpec::new(procedure_id(name)?, a.alpha, a.zeta)))
        .collect::<CliResult<Vec<_>>>()?;
    let mut grid = Vec::new();
    for &rho in &a.rho {
        for &pi0 in &a.pi0 {
            for &beta in &a.beta_grid {
                grid.push(PowerPoint { beta, rho, pi0 });
            }
        }
    }
    let study = PowerStudy { procedures, grid, m: a.m, n_reps: a.reps, master_seed: a.seed, workers };
    let mut notices = Vec::new();
    if study.with_lr()?.1 {
        notices.push("[LR] was not listed; it is included as the reference procedure".to_string());
    }
    let rows = power_sweep(&study)?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let io = |e: csv::Error| CliError::data(format!("write failed: {e}"));
    w.write_record(["procedure", "beta", "rho", "pi0", "fnr", "fnr_se", "fnr_ratio_to_lr", "se"]).map_err(io)?;
    for r in &rows {
        let (ratio, se) = match r.ratio_to_lr {
            Some(e) => (fmt17(e.estimate), fmt17(e.se)),
            None => ("undefined".to_string(), "undefined".to_string()),
        };
        w.write_record([
            r.procedure.clone(),
            fmt17(r.beta),
            fmt17(r.rho),
            fmt17(r.pi0),
            fmt17(r.fnr.estimate),
            fmt17(r.fnr.se),
            ratio,
            se,
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(format!("write failed: {e}")))?;
    Ok(RunResult {
        outputs: vec![Output { role: "power", path: a.out.clone(), bytes }],
        master_seed: Some(a.seed),
        resolved_model: None,
        notices,
    })
}

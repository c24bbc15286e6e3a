use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use carl_core::behavior::ReferenceWorld;
use carl_core::bench::{
    agent_params, emit_report, preset, read_runs_csv, run_protocol, summarize, Calibration, FamilyKind, Preset,
    Protocol, ScenarioStat, WorldSpec,
};
use carl_core::dcm::{audit, calibrate, generate_dataset, read_dataset_csv, write_dataset_csv, DcmParams, FitOptions};
use carl_core::environment::EnvConfig;
use carl_core::learners::{
    evaluate_policy, read_qtable_csv, train_agent, write_curve_csv, write_qtable_csv, BookingEnv, BookingWorldModel,
    Method, Mlp, MpcConfig, TrainConfig, TrainedPolicy, Variant,
};
use carl_core::manifest::{self, RunManifest};
use carl_core::theory::{
    convergence_trace, dr_grid_check, extrapolation_sweep, maturation_curve, rate_mdp, simulation_lemma_sweep,
    softmax_lipschitz_suite, summary_table, write_jsonl, BoundReport, ErrorSchedule,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "carl", version, about = "Delayed-feedback pricing lab", arg_required_else_help = true)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// TOML file: a protocol for `sweep`/`report`, otherwise `[world]`, `[env]` and `[train]` tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "CARL_OUT", default_value = "carl-out")]
    out: PathBuf,
    /// Worker threads; all cores when unset.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// More logging; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only errors.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Simulate a calibration dataset from a ground-truth world.
    GenData(GenDataArgs),
    /// Fit the booking and shock logits to a dataset.
    Calibrate(DataArgs),
    /// Identifiability conditions of a dataset.
    Audit(AuditArgs),
    /// Train one agent.
    Train(TrainArgs),
    /// Greedy evaluation of a trained agent.
    Evaluate(EvalArgs),
    /// Run a benchmark protocol.
    Sweep(SweepArgs),
    /// Numerical checks of the theory bounds.
    Verify(VerifyArgs),
    /// Recompute statistics from an existing runs.csv.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Mnl,
    Nested,
    Bimodal,
    Dynamic,
    Quadratic,
}

impl From<Family> for FamilyKind {
    fn from(f: Family) -> Self {
        match f {
            Family::Mnl => FamilyKind::Mnl,
            Family::Nested => FamilyKind::Nested,
            Family::Bimodal => FamilyKind::Bimodal,
            Family::Dynamic => FamilyKind::Dynamic,
            Family::Quadratic => FamilyKind::Quadratic,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Mb,
    Ca,
    CaDr,
    Mpc,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mb => Method::Mb,
            MethodArg::Ca => Method::Ca,
            MethodArg::CaDr => Method::CaDr,
            MethodArg::Mpc => Method::Mpc,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum VariantArg {
    Tabular,
    Dqn,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Tabular => Variant::Tabular,
            VariantArg::Dqn => Variant::Dqn,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    Stationary,
    Shift,
    Misspec,
    Oof,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Stationary => Preset::Stationary,
            PresetArg::Shift => Preset::Shift,
            PresetArg::Misspec => Preset::Misspec,
            PresetArg::Oof => Preset::Oof,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum)]
enum Suite {
    SimulationLemma,
    Maturation,
    DrMoments,
    Softmax,
    Extrapolation,
    Convergence,
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CalibrationArg {
    Exact,
    Fitted,
}

/// World overrides on top of the config file.
#[derive(Args, Debug)]
struct WorldArgs {
    #[arg(long, value_enum)]
    family: Option<Family>,
    /// Nest dissimilarity for the nested family.
    #[arg(long)]
    lambda: Option<f64>,
    /// Quadratic price coefficient (<= 0).
    #[arg(long, allow_negative_numbers = true)]
    beta2: Option<f64>,
    /// Mixing period of the dynamic family.
    #[arg(long)]
    period: Option<f64>,
    #[arg(long)]
    demand: Option<f64>,
    #[arg(long)]
    competition: Option<f64>,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// Customer decisions to simulate.
    #[arg(long, default_value_t = 20_000)]
    bookings: usize,
}

#[derive(Args, Debug)]
struct DataArgs {
    /// Dataset CSV; `<out>/dataset.csv` when unset.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Exit 2 when a gating condition fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    world: WorldArgs,
    #[arg(long, value_enum, default_value = "ca")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "tabular")]
    variant: VariantArg,
    /// Training episodes.
    #[arg(long)]
    episodes: Option<usize>,
    /// Fitted parameter file; otherwise the model is fitted on simulated bookings.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Bookings simulated for the in-process fit.
    #[arg(long, default_value_t = 20_000)]
    bookings: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// Directory written by `train`; the output directory when unset.
    #[arg(long)]
    policy: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    episodes: usize,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    preset: Option<PresetArg>,
    /// Use seeds `seed..seed+N`.
    #[arg(long)]
    seeds: Option<u64>,
    /// Methods to compare; the first one is the control.
    #[arg(long, value_enum, num_args = 1.., value_delimiter = ',')]
    method: Vec<MethodArg>,
    #[arg(long, value_enum)]
    variant: Option<VariantArg>,
    /// Training episodes per run.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    eval_episodes: Option<usize>,
    #[arg(long, value_enum)]
    calibration: Option<CalibrationArg>,
    /// Bookings for the fitted calibration.
    #[arg(long)]
    bookings: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    /// Suite size: instances, trials, samples, pairs, test points or steps.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Directory holding runs.csv (and protocol.toml unless --config is given).
    #[arg(long)]
    runs: Option<PathBuf>,
}

/// Config file for every command except `sweep` and `report`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    world: WorldSpec,
    env: EnvConfig,
    train: TrainConfig,
}

/// What `train` leaves behind for `evaluate`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct PolicyMeta {
    method: Method,
    variant: Variant,
    /// Q-table CSV or network JSON; none for MPC.
    artifact: Option<String>,
    params: Option<String>,
    mpc: MpcConfig,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<carl_core::Error> for Failure {
    fn from(e: carl_core::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// A finished command. `failure` marks a completed run whose result is a
/// failure (failed checks or runs); it still gets a manifest.
struct Done {
    config: Value,
    outputs: Vec<String>,
    failure: Option<String>,
}

impl Done {
    fn ok(config: Value, outputs: Vec<String>) -> Self {
        Done { config, outputs, failure: None }
    }
}

type Outcome = Result<Done, Failure>;

struct Log {
    level: i8,
}

impl Log {
    fn info(&self, msg: impl AsRef<str>) {
        if self.level >= 0 {
            println!("{}", msg.as_ref());
        }
    }

    fn debug(&self, msg: impl AsRef<str>) {
        if self.level >= 1 {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let log = Log { level: if cli.global.quiet { -1 } else { cli.global.verbose as i8 } };
    if let Some(n) = cli.global.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        // Later pools inherit nothing from this; it only fixes the default.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let g = &cli.global;
    let (name, res) = match &cli.cmd {
        Cmd::GenData(a) => ("gen-data", gen_data(g, a, &log)),
        Cmd::Calibrate(a) => ("calibrate", calibrate_cmd(g, a, &log)),
        Cmd::Audit(a) => ("audit", audit_cmd(g, a, &log)),
        Cmd::Train(a) => ("train", train_cmd(g, a, &log)),
        Cmd::Evaluate(a) => ("evaluate", evaluate_cmd(g, a, &log)),
        Cmd::Sweep(a) => ("sweep", sweep_cmd(g, a, &log)),
        Cmd::Verify(a) => ("verify", verify_cmd(g, a, &log)),
        Cmd::Report(a) => ("report", report_cmd(g, a, &log)),
    };
    let done = match res {
        Ok(d) => d,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            return ExitCode::from(1);
        }
        Err(Failure::Runtime(m)) => Done { config: json!({ "error": m }), outputs: Vec::new(), failure: Some(m) },
    };
    let status = match &done.failure {
        None => ExitCode::SUCCESS,
        Some(m) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    };
    let mut config = done.config;
    if let Some(m) = &done.failure {
        config["failure"] = Value::String(m.clone());
    }
    let manifest = RunManifest::new(VERSION, name, g.seed, config, done.outputs);
    match manifest.write(&g.out) {
        Ok(p) => log.debug(format!("manifest {}", p.display())),
        Err(e) => {
            eprintln!("error: writing manifest: {e}");
            return ExitCode::from(2);
        }
    }
    status
}

fn load_run_config(g: &Global) -> Result<RunConfig, Failure> {
    match &g.config {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))?;
            toml::from_str(&text).map_err(|e| Failure::Runtime(format!("{}: {e}", p.display())))
        }
    }
}

fn apply_world(w: &mut WorldSpec, a: &WorldArgs) {
    if let Some(f) = a.family {
        w.family = f.into();
    }
    if let Some(v) = a.lambda {
        w.nest_lambda = v;
    }
    if let Some(v) = a.beta2 {
        w.beta2 = v;
    }
    if a.period.is_some() {
        w.period = a.period;
    }
    if let Some(v) = a.demand {
        w.demand_scale = v;
    }
    if let Some(v) = a.competition {
        w.competition_scale = v;
    }
}

fn out_file(g: &Global, name: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(&g.out)?;
    Ok(g.out.join(name))
}

fn write_json(path: &Path, v: &impl Serialize) -> Result<(), Failure> {
    fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn gen_data(g: &Global, a: &GenDataArgs, log: &Log) -> Outcome {
    let mut rc = load_run_config(g)?;
    apply_world(&mut rc.world, &a.world);
    let reference = ReferenceWorld::load();
    let cfg = rc.world.env_config(&rc.env);
    let spec = rc.world.behavior(&reference, cfg.episode_length);
    let data = generate_dataset(&spec, &cfg, a.bookings, g.seed)?;
    let path = out_file(g, "dataset.csv")?;
    write_dataset_csv(&path, &data)?;
    log.info(format!(
        "{} booking decisions, {} shock outcomes -> {}",
        data.booking.len(),
        data.shock.len(),
        path.display()
    ));
    Ok(Done::ok(json!({ "bookings": a.bookings, "world": rc.world, "env": rc.env }), vec!["dataset.csv".into()]))
}

fn dataset_path(g: &Global, a: &DataArgs) -> PathBuf {
    a.data.clone().unwrap_or_else(|| g.out.join("dataset.csv"))
}

fn file_digest(path: &Path) -> Result<String, Failure> {
    manifest::file_digest(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn calibrate_cmd(g: &Global, a: &DataArgs, log: &Log) -> Outcome {
    let rc = load_run_config(g)?;
    let path = dataset_path(g, a);
    let data = read_dataset_csv(&path, rc.env.n_room_types)?;
    let (params, report) = calibrate(&data, rc.env.n_room_types, &FitOptions::default())?;
    params.save(&out_file(g, "dcm_params.json")?)?;
    write_json(&g.out.join("fit_report.json"), &report)?;
    for (name, r) in [("booking", &report.booking), ("shock", &report.shock)] {
        log.info(format!(
            "{name:<8} loglik {:.3}  iterations {}  |grad| {:.2e}  converged {}",
            r.log_likelihood, r.iterations, r.grad_norm, r.converged
        ));
    }
    Ok(Done::ok(
        json!({ "data": path.display().to_string(), "data_digest": file_digest(&path)?, "n_rooms": rc.env.n_room_types }),
        vec!["dcm_params.json".into(), "fit_report.json".into()],
    ))
}

fn audit_cmd(g: &Global, a: &AuditArgs, log: &Log) -> Outcome {
    let rc = load_run_config(g)?;
    let path = dataset_path(g, &a.data);
    let data = read_dataset_csv(&path, rc.env.n_room_types)?;
    let booking = audit(&data.booking)?;
    let shock = audit(&data.shock)?;
    write_json(&out_file(g, "audit.json")?, &json!({ "booking": booking, "shock": shock }))?;
    for (name, r) in [("booking", &booking), ("shock", &shock)] {
        for c in &r.conditions {
            log.info(format!("{name:<8} {:<4} {:<5} {}", c.id, if c.passed { "ok" } else { "FAIL" }, c.detail));
        }
    }
    let config = json!({ "data": path.display().to_string(), "data_digest": file_digest(&path)?, "strict": a.strict });
    let mut done = Done::ok(config, vec!["audit.json".into()]);
    if a.strict && !(booking.all_pass() && shock.all_pass()) {
        done.failure = Some("identifiability audit failed".into());
    }
    Ok(done)
}

fn train_cmd(g: &Global, a: &TrainArgs, log: &Log) -> Outcome {
    let mut rc = load_run_config(g)?;
    apply_world(&mut rc.world, &a.world);
    if let Some(e) = a.episodes {
        rc.train.episodes = e;
    }
    let method: Method = a.method.into();
    let variant: Variant = a.variant.into();
    let reference = ReferenceWorld::load();
    let cfg = rc.world.env_config(&rc.env);
    let mut env = BookingEnv::new(cfg.clone(), rc.world.behavior(&reference, cfg.episode_length))?;
    let params = if method.needs_model() {
        Some(match &a.params {
            Some(p) => DcmParams::load(p)?,
            None => {
                let proto = Protocol {
                    env: rc.env.clone(),
                    calibration: Calibration::Fitted { n_bookings: a.bookings, seed: g.seed },
                    ..Protocol::default()
                };
                agent_params(&rc.world, &proto, &reference)?
            }
        })
    } else {
        None
    };
    let model = params.clone().map(|p| BookingWorldModel::new(p, cfg.clone())).transpose()?;
    let out = train_agent(&mut env, model.as_ref(), method, variant, &rc.train, g.seed)?;
    let mut outputs = vec!["policy.json".to_string(), "curve.csv".to_string()];
    let artifact = match &out.policy {
        TrainedPolicy::Tabular(q) => {
            write_qtable_csv(&out_file(g, "qtable.csv")?, q)?;
            Some("qtable.csv".to_string())
        }
        TrainedPolicy::Dqn { net, .. } => {
            net.save(&out_file(g, "mlp.json")?)?;
            Some("mlp.json".to_string())
        }
        TrainedPolicy::Mpc { .. } => None,
    };
    outputs.extend(artifact.clone());
    if let Some(p) = &params {
        p.save(&out_file(g, "dcm_params.json")?)?;
        outputs.push("dcm_params.json".into());
    }
    write_curve_csv(&out_file(g, "curve.csv")?, &out.curve)?;
    let meta = PolicyMeta {
        method,
        variant,
        artifact,
        params: params.as_ref().map(|_| "dcm_params.json".into()),
        mpc: rc.train.mpc,
    };
    write_json(&g.out.join("policy.json"), &meta)?;
    match out.curve.last() {
        Some(last) => log.info(format!(
            "{method} ({variant}) trained {} episodes; last cashflow {:.2}",
            out.curve.len(),
            last.train_cashflow
        )),
        None => log.info(format!("{method} plans online; saved its model")),
    }
    let params_digest = a.params.as_deref().map(file_digest).transpose()?;
    Ok(Done::ok(
        json!({
            "method": method, "variant": variant, "world": rc.world, "env": rc.env, "train": rc.train,
            "params": params_digest, "bookings": a.bookings,
        }),
        outputs,
    ))
}

fn evaluate_cmd(g: &Global, a: &EvalArgs, log: &Log) -> Outcome {
    let mut rc = load_run_config(g)?;
    apply_world(&mut rc.world, &a.world);
    let dir = a.policy.clone().unwrap_or_else(|| g.out.clone());
    let meta_path = dir.join("policy.json");
    let meta_text =
        fs::read_to_string(&meta_path).map_err(|e| Failure::Runtime(format!("{}: {e}", meta_path.display())))?;
    let meta: PolicyMeta = serde_json::from_str(&meta_text)?;
    let reference = ReferenceWorld::load();
    let cfg = rc.world.env_config(&rc.env);
    let mut env = BookingEnv::new(cfg.clone(), rc.world.behavior(&reference, cfg.episode_length))?;
    let need = |name: &Option<String>| {
        name.as_ref().map(|n| dir.join(n)).ok_or_else(|| Failure::Runtime("policy.json lacks a file entry".into()))
    };
    let policy: TrainedPolicy<BookingWorldModel> = match meta.method {
        Method::Mpc => {
            let params = DcmParams::load(&need(&meta.params)?)?;
            TrainedPolicy::Mpc {
                model: BookingWorldModel::new(params, cfg.clone())?,
                cfg: meta.mpc,
                n_actions: cfg.n_actions(),
            }
        }
        _ => match meta.variant {
            Variant::Tabular => TrainedPolicy::Tabular(read_qtable_csv(&need(&meta.artifact)?)?),
            Variant::Dqn => TrainedPolicy::Dqn { net: Mlp::load(&need(&meta.artifact)?)?, n_states: cfg.n_states() },
        },
    };
    let stats = evaluate_policy(&mut env, &policy, a.episodes, g.seed)?;
    write_json(
        &out_file(g, "evaluation.json")?,
        &json!({ "method": meta.method, "variant": meta.variant, "stats": stats }),
    )?;
    log.info(format!(
        "{} ({}) mean revenue {:.2} sd {:.2} over {} episodes",
        meta.method, meta.variant, stats.mean, stats.sd, a.episodes
    ));
    let mut config = json!({ "policy": meta, "episodes": a.episodes, "world": rc.world, "env": rc.env });
    if let Some(f) = &meta.artifact {
        config["artifact_digest"] = Value::String(file_digest(&dir.join(f))?);
    }
    Ok(Done::ok(config, vec!["evaluation.json".into()]))
}

fn sweep_protocol(g: &Global, a: &SweepArgs) -> Result<Protocol, Failure> {
    let mut p = match (&g.config, a.preset) {
        (Some(_), Some(_)) => return Err(Failure::Usage("--config and --preset are mutually exclusive".into())),
        (Some(path), None) => Protocol::load(path)?,
        (None, pr) => preset(pr.unwrap_or(PresetArg::Stationary).into()),
    };
    if let Some(n) = a.seeds {
        p.seeds = (g.seed..g.seed + n).collect();
    }
    if !a.method.is_empty() {
        p.methods = a.method.iter().map(|m| Method::from(*m)).collect();
        p.control = p.methods[0];
    }
    if let Some(v) = a.variant {
        p.variant = v.into();
    }
    if let Some(e) = a.episodes {
        p.train.episodes = e;
    }
    if let Some(e) = a.eval_episodes {
        p.eval_episodes = e;
    }
    match (a.calibration, a.bookings) {
        (Some(CalibrationArg::Exact), Some(_)) => {
            return Err(Failure::Usage("--bookings needs fitted calibration".into()))
        }
        (Some(CalibrationArg::Exact), None) => p.calibration = Calibration::Exact,
        (Some(CalibrationArg::Fitted), b) | (None, b @ Some(_)) => {
            let n = b.unwrap_or(20_000);
            let seed = match p.calibration {
                Calibration::Fitted { seed, .. } => seed,
                Calibration::Exact => 0,
            };
            p.calibration = Calibration::Fitted { n_bookings: n, seed };
        }
        (None, None) => {}
    }
    p.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(p)
}

fn print_stats(stats: &[ScenarioStat], log: &Log) {
    log.info(format!(
        "{:<18} {:>6} {:>6} {:>12} {:>12} {:>9} {:>8} {:>8} {:>7} {:>6}",
        "scenario", "ctrl", "treat", "mean ctrl", "mean treat", "rel diff", "p", "p holm", "d", "tost"
    ));
    for s in stats {
        log.info(format!(
            "{:<18} {:>6} {:>6} {:>12.2} {:>12.2} {:>8.2}% {:>8.4} {:>8.4} {:>7.3} {:>6}",
            s.scenario,
            s.control.name(),
            s.treatment.name(),
            s.mean_control,
            s.mean_treatment,
            100.0 * s.rel_diff,
            s.p_raw,
            s.p_holm,
            s.cohens_d,
            s.tost.map_or("-".to_string(), |t| if t.equivalent { "equiv".into() } else { "no".into() }),
        ));
    }
}

fn sweep_cmd(g: &Global, a: &SweepArgs, log: &Log) -> Outcome {
    let p = sweep_protocol(g, a)?;
    log.info(format!(
        "protocol {}: {} scenarios x {} methods x {} seeds",
        p.name,
        p.scenarios.len(),
        p.methods.len(),
        p.seeds.len()
    ));
    let records = run_protocol(&p, g.jobs)?;
    let failed: Vec<_> = records.iter().filter(|r| !r.ok()).collect();
    for r in &failed {
        eprintln!("run failed: {} {} seed {}: {}", r.scenario, r.method, r.seed, r.error.as_deref().unwrap_or(""));
    }
    let ok: Vec<_> = records.iter().filter(|r| r.ok()).cloned().collect();
    fs::create_dir_all(&g.out)?;
    fs::write(g.out.join("protocol.toml"), p.to_toml()?)?;
    let stats = if p.methods.len() > 1 { summarize(&p, &ok)? } else { Vec::new() };
    let paths = emit_report(&p, &records, &stats, &g.out)?;
    print_stats(&stats, log);
    let mut outputs = vec!["protocol.toml".to_string()];
    outputs.extend(paths.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()));
    let mut done = Done::ok(json!({ "protocol": p, "protocol_hash": p.hash() }), outputs);
    if !failed.is_empty() {
        done.failure = Some(format!("{} of {} runs failed", failed.len(), records.len()));
    }
    Ok(done)
}

fn report_cmd(g: &Global, a: &ReportArgs, log: &Log) -> Outcome {
    let dir = a.runs.clone().unwrap_or_else(|| g.out.clone());
    let proto_path = g.config.clone().unwrap_or_else(|| dir.join("protocol.toml"));
    let p = Protocol::load(&proto_path)?;
    let records = read_runs_csv(&dir.join("runs.csv"))?;
    let ok: Vec<_> = records.iter().filter(|r| r.ok()).cloned().collect();
    let stats = if p.methods.len() > 1 { summarize(&p, &ok)? } else { Vec::new() };
    let same_dir = fs::canonicalize(&dir).ok() == fs::canonicalize(&g.out).ok();
    let paths = emit_report(&p, &records, &stats, &g.out)?;
    if !same_dir {
        fs::write(g.out.join("protocol.toml"), p.to_toml()?)?;
    }
    print_stats(&stats, log);
    let outputs = paths.iter().filter_map(|p| p.file_name()).map(|n| n.to_string_lossy().into_owned()).collect();
    Ok(Done::ok(
        json!({ "protocol": p, "protocol_hash": p.hash(), "runs_digest": file_digest(&dir.join("runs.csv"))? }),
        outputs,
    ))
}

fn softmax_reports(n: usize, seed: u64) -> Vec<BoundReport> {
    let r = softmax_lipschitz_suite(n, seed);
    vec![
        BoundReport::new(
            "softmax_lipschitz",
            format!("pairs={n} norm=inf const=0.5 violations={}", r.violations),
            r.worst_ratio,
            0.5,
        ),
        BoundReport::new(
            "softmax_lipschitz_unit",
            format!("pairs={n} norm=inf const=1 violations={}", r.violations_unit),
            r.worst_ratio,
            1.0,
        ),
        BoundReport::new(
            "softmax_lipschitz_l1",
            format!("pairs={n} norm=l1 const=0.5 (violation count)"),
            r.violations_l1 as f64,
            0.0,
        ),
    ]
}

fn run_suite(s: Suite, trials: Option<usize>, seed: u64, log: &Log) -> Result<Vec<BoundReport>, Failure> {
    log.debug(format!("suite {s:?}"));
    Ok(match s {
        Suite::SimulationLemma => simulation_lemma_sweep(trials.unwrap_or(100), seed)?,
        Suite::Maturation => {
            let support: Vec<usize> = (1..=14).collect();
            maturation_curve(&support, 1000, trials.unwrap_or(100), seed)?.bounds
        }
        Suite::DrMoments => {
            dr_grid_check(trials.unwrap_or(200_000), seed)?.into_iter().flat_map(|r| r.reports).collect()
        }
        Suite::Softmax => softmax_reports(trials.unwrap_or(10_000), seed),
        Suite::Extrapolation => extrapolation_sweep(200, trials.unwrap_or(1_000), seed)?,
        Suite::Convergence => {
            let m = rate_mdp();
            let steps = trials.unwrap_or(1_000_000) as u64;
            let seeds: Vec<u64> = (0..4).map(|i| seed.wrapping_add(i)).collect();
            let exact = convergence_trace(&m, ErrorSchedule::exact(), steps, &seeds)?;
            let floor = convergence_trace(&m, ErrorSchedule { c_r: 0.1, c_p: 0.1, beta: 0.0 }, steps, &seeds)?;
            vec![
                BoundReport::new("exact_model_error", format!("steps={steps}"), exact.final_error(), 0.05 * m.v_max()),
                floor.floor_report(),
            ]
        }
        Suite::All => {
            let mut v = Vec::new();
            for s in [
                Suite::SimulationLemma,
                Suite::Maturation,
                Suite::DrMoments,
                Suite::Softmax,
                Suite::Extrapolation,
                Suite::Convergence,
            ] {
                v.extend(run_suite(s, trials, seed, log)?);
            }
            v
        }
    })
}

fn verify_cmd(g: &Global, a: &VerifyArgs, log: &Log) -> Outcome {
    let reports = run_suite(a.suite, a.trials, g.seed, log)?;
    let path = out_file(g, "bound_reports.jsonl")?;
    write_jsonl(&reports, fs::File::create(&path)?)?;
    log.info(summary_table(&reports));
    let failed = reports.iter().filter(|r| !r.pass).count();
    let suite = a.suite.to_possible_value().map(|v| v.get_name().to_string());
    let config = json!({ "suite": suite, "trials": a.trials });
    let mut done = Done::ok(config, vec!["bound_reports.jsonl".into()]);
    if failed > 0 {
        done.failure = Some(format!("{failed} of {} bound checks failed", reports.len()));
    }
    Ok(done)
}

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Unit;

use skillforge::agents::learn::{write_curve_csv, StandardFactory};
use skillforge::agents::runner::save_trace_csv;
use skillforge::agents::{
    analytic_controller, run_skill, train, Controller, Frame, Gains, LearnerConfig, Method, NoFeedback, Policy,
    PolicyController, RunOptions, SkillFamily,
};
use skillforge::cone::{classify, ContactSet, ContactState, MotionKind};
use skillforge::pipeline::{bind_parameters, default_task, execute_sequence, load_task_sequence, BindOptions, Edc, ExecOptions};
use skillforge::reward::fixtures::check_all;
use skillforge::reward::{compose, lookup, registry, Termination, Thresholds};
use skillforge::sim::presets::PRESET_STATES;
use skillforge::sim::{preset, Env, IdentityCarrier, JitteryCarrier, Scene, PRESET_NAMES};
use skillforge::{Quat, Vec3};

#[derive(Parser, Debug)]
#[command(name = "skillforge", version, about = "Contact-state skills: classify, inspect rewards, simulate, train and run task sequences")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, env = "SKILLFORGE_SEED", default_value_t = 0)]
    seed: u64,
    /// Output path: a directory for `run`, `train` and `exec`, a file for
    /// `classify`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify a contact set read from a JSON file.
    Classify(ClassifyArgs),
    /// Print the reward program of a skill, or check all of them against
    /// the bundled listings.
    Reward(RewardArgs),
    /// Run one skill on a scene.
    Run(RunArgs),
    /// Learn a policy for a direction or wipe skill.
    Train(TrainArgs),
    /// Execute a task-sequence file.
    Exec(ExecArgs),
    /// List the built-in scenes, or print one.
    Presets(PresetArgs),
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    file: PathBuf,
    /// Rescale normals to unit length instead of rejecting them.
    #[arg(long)]
    normalize: bool,
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Rotation center `x,y,z`.
    #[arg(long, value_parser = parse_vec3)]
    center: Option<Vec3>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Translation,
    Rotation,
}

#[derive(Args, Debug)]
struct RewardArgs {
    skill: Option<String>,
    #[arg(long, conflicts_with = "skill")]
    all: bool,
    #[arg(long)]
    check_fixtures: bool,
}

#[derive(Args, Debug, Clone)]
struct ThresholdArgs {
    #[arg(long)]
    delta_zero: Option<f64>,
    #[arg(long)]
    delta_collision: Option<f64>,
    #[arg(long)]
    delta_gap: Option<f64>,
    /// Force quantum for `f_desc`, N.
    #[arg(long)]
    f_step: Option<f64>,
}

impl ThresholdArgs {
    fn thresholds(&self) -> Thresholds<f64> {
        let d = Thresholds::default();
        Thresholds {
            zero: self.delta_zero.unwrap_or(d.zero),
            collision: self.delta_collision.unwrap_or(d.collision),
            gap: self.delta_gap.unwrap_or(d.gap),
        }
    }

    fn check(&self) -> Result<(), CliError> {
        let th = self.thresholds();
        let ok = th.zero > 0.0 && th.collision > 0.0 && th.gap > 0.0 && self.f_step.map_or(true, |f| f > 0.0);
        if !ok {
            return Err(CliError::Usage(anyhow!("thresholds and --f-step must be positive")));
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Preset name or scene JSON file.
    scene: String,
    skill: String,
    /// Episode horizon.
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    /// Learned policy JSON to act with.
    #[arg(long, conflicts_with = "no_feedback")]
    policy: Option<PathBuf>,
    /// Motion direction `x,y,z`.
    #[arg(long, value_parser = parse_vec3)]
    dtd: Option<Vec3>,
    /// End displacement of the hand `x,y,z`, meters.
    #[arg(long, value_parser = parse_vec3)]
    goal: Option<Vec3>,
    /// Rotate the believed motion direction about U, degrees.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    axis_error: f64,
    /// Move along the believed direction without force feedback.
    #[arg(long)]
    no_feedback: bool,
    /// Run the whole horizon, ignoring success and penalties.
    #[arg(long)]
    no_stop: bool,
    /// Surface tilt noise, degrees.
    #[arg(long, default_value_t = 0.0)]
    normal_noise: f64,
    /// Carrier position noise, meters.
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    skill: String,
    #[arg(long, default_value = "cem")]
    method: String,
    /// Environment step budget.
    #[arg(long, default_value_t = 50_000)]
    steps: usize,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long, default_value_t = 16)]
    population: usize,
    /// Hidden layer width; linear policy when absent.
    #[arg(long)]
    hidden: Option<usize>,
    /// Where to write the policy; defaults to `<out>/policy.json`.
    #[arg(long)]
    policy: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExecArgs {
    sequence: PathBuf,
    /// Preset name or scene JSON file; defaults to the sequence's scene.
    #[arg(long)]
    scene: Option<String>,
    /// Learned policies, one JSON file each.
    #[arg(long)]
    policy: Vec<PathBuf>,
    /// Horizon of each skill.
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[command(flatten)]
    thresholds: ThresholdArgs,
    /// Noise on oracle features, meters.
    #[arg(long, default_value_t = 0.0)]
    feature_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    jitter: f64,
}

#[derive(Args, Debug)]
struct PresetArgs {
    name: Option<String>,
    /// Print the scene's contact set instead of the scene.
    #[arg(long, requires = "name")]
    contacts: bool,
}

#[derive(Debug)]
enum CliError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

fn usage<E: Into<anyhow::Error>>(e: E) -> CliError {
    CliError::Usage(e.into())
}

fn parse_vec3(s: &str) -> Result<Vec3, String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [x, y, z] if parts.iter().all(|v| v.is_finite()) => Ok(Vec3::new(*x, *y, *z)),
        _ => Err(format!("expected three finite numbers `x,y,z`, got `{s}`")),
    }
}

fn load_scene(arg: &str) -> Result<Scene, CliError> {
    if PRESET_NAMES.contains(&arg) {
        return preset(arg).map_err(usage);
    }
    let path = Path::new(arg);
    if !path.exists() {
        return Err(usage(anyhow!("`{arg}` is neither a preset ({}) nor a file", PRESET_NAMES.join(", "))));
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {arg}")).map_err(usage)?;
    let scene: Scene = serde_json::from_str(&text).with_context(|| format!("parsing {arg}")).map_err(usage)?;
    scene.validate().map_err(usage)?;
    Ok(scene)
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

fn cmd_classify(cli: &Cli, args: &ClassifyArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.file)
        .with_context(|| format!("reading {}", args.file.display()))
        .map_err(usage)?;
    let mut set: ContactSet<f64> = ContactSet::from_json(&text, args.normalize).map_err(usage)?;
    if let Some(k) = args.kind {
        set.kind = match k {
            KindArg::Translation => MotionKind::Translation,
            KindArg::Rotation => MotionKind::Rotation,
        };
    }
    if let Some(c) = args.center {
        set.center = Some(c);
    }
    let result = classify(&set).map_err(usage)?;
    let p = result.profile;
    if !result.dropped.is_empty() {
        eprintln!(
            "note: contacts {:?} have lever arms parallel to their normals and constrain no rotation",
            result.dropped
        );
    }
    println!("{} {} {} {}", result.state, p.maintain, p.detach, p.constrain);
    let detail = serde_json::json!({
        "state": result.state.to_string(),
        "label": result.state.label(),
        "kind": set.kind.to_string(),
        "profile": { "maintain": p.maintain, "detach": p.detach, "constrain": p.constrain },
        "contacts": set.contacts.len(),
        "dropped": result.dropped,
        "merged": result.cone.merged,
        "lineality_dim": result.cone.lineality_dim,
        "span_dim": result.cone.span_dim,
        "normals": result.cone.normals.iter().map(|v| [v.x, v.y, v.z]).collect::<Vec<_>>(),
        "implicit": result.cone.implicit,
    });
    let text = serde_json::to_string_pretty(&detail).map_err(|e| CliError::Runtime(e.into()))?;
    println!("{text}");
    if let Some(path) = &cli.out {
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_reward(cli: &Cli, args: &RewardArgs) -> Result<(), CliError> {
    if args.check_fixtures {
        let checks = check_all();
        let good = checks.iter().filter(|c| c.matches()).count();
        for c in checks.iter().filter(|c| !c.matches()) {
            match &c.error {
                Some(e) => eprintln!("{}: {e}", c.name),
                None => eprintln!(
                    "{}: composed program differs\n--- listing\n{}--- composed\n{}",
                    c.name,
                    c.expected.as_ref().map(|p| p.to_string()).unwrap_or_default(),
                    c.composed.as_ref().map(|p| p.to_string()).unwrap_or_default()
                ),
            }
        }
        let missing: Vec<_> = registry()
            .iter()
            .filter(|s| !checks.iter().any(|c| c.name == s.name))
            .map(|s| s.name)
            .collect();
        if !missing.is_empty() {
            eprintln!("no listing for: {}", missing.join(", "));
        }
        println!("{good}/{} match", registry().len());
        if good != registry().len() || checks.len() != registry().len() {
            return Err(CliError::Runtime(anyhow!("fixture check failed")));
        }
        if args.skill.is_none() && !args.all {
            return Ok(());
        }
    }
    let specs: Vec<_> = match (&args.skill, args.all) {
        (Some(name), _) => vec![lookup(name).map_err(usage)?],
        (None, true) => registry().iter().collect(),
        (None, false) => return Err(usage(anyhow!("give a skill name or --all"))),
    };
    if cli.format == Format::Json {
        let mut out = BTreeMap::new();
        for s in &specs {
            out.insert(s.name, compose(s).map_err(|e| CliError::Runtime(e.into()))?);
        }
        println!("{}", serde_json::to_string_pretty(&out).map_err(|e| CliError::Runtime(e.into()))?);
        return Ok(());
    }
    for (i, s) in specs.iter().enumerate() {
        if i > 0 {
            println!();
        }
        let program = compose(s).map_err(|e| CliError::Runtime(e.into()))?;
        if specs.len() > 1 {
            println!("{}", s.header());
        }
        print!("{program}");
    }
    Ok(())
}

/// The scene for a skill: objects are lifted clear of the support when the
/// skill starts in free space.
fn start_scene(scene: Scene, from: ContactState) -> Result<Scene, CliError> {
    let env = Env::new(scene.clone()).map_err(usage)?;
    let state = env.classify().map_err(usage)?.state;
    if from == ContactState::NC && state != ContactState::NC && scene.hinge.is_none() {
        let p = scene.object.pose.position + scene.vertical.normalize() * 0.06;
        return Ok(scene.with_object_position(p));
    }
    Ok(scene)
}

fn load_policy(path: &Path, skill: &str) -> Result<Policy, CliError> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(usage)?;
    let p = Policy::from_json(&text).map_err(usage)?;
    if p.skill != skill {
        return Err(usage(anyhow!("policy {} was trained for {}, not {skill}", path.display(), p.skill)));
    }
    Ok(p)
}

fn cmd_run(cli: &Cli, args: &RunArgs) -> Result<(), CliError> {
    args.thresholds.check()?;
    let spec = lookup(&args.skill).map_err(usage)?;
    let mut scene = start_scene(load_scene(&args.scene)?, spec.from)?;
    if let Some(f) = args.thresholds.f_step {
        scene.config.f_step = f;
    }
    scene.config.normal_noise = args.normal_noise;
    scene.config.seed = cli.seed;
    let mut env = Env::new(scene.clone()).map_err(usage)?;
    if args.jitter > 0.0 {
        env = env.with_carrier(Box::new(JitteryCarrier::new(args.jitter, cli.seed)));
    }
    let state = env.classify().map_err(usage)?.state;
    if state != spec.from {
        return Err(usage(anyhow!(
            "{} starts from {} but scene `{}` is in {}",
            spec.name,
            spec.from,
            scene.name,
            state
        )));
    }

    let mut model = default_task(spec.name, &scene).map_err(usage)?;
    if let Some(d) = args.dtd {
        model.dtd = Some(d.try_normalize(1e-12).ok_or_else(|| usage(anyhow!("--dtd is zero")))?.into());
    }
    if let Some(g) = args.goal {
        model.edc = Some(Edc {
            p: (scene.object.pose.position + g).into(),
            q: None,
        });
    }
    let bind = BindOptions {
        thresholds: args.thresholds.thresholds(),
        horizon: args.steps,
        feature_noise: 0.0,
        seed: cli.seed,
    };
    let mut params = bind_parameters(&model, env.scene(), &env.pose(), &bind).map_err(usage)?;
    if args.axis_error != 0.0 {
        let u = params.frame.u;
        let rot = Quat::from_axis_angle(&Unit::new_normalize(u), args.axis_error.to_radians());
        params.frame = Frame::complete(&(rot * params.frame.s), &[u]).map_err(usage)?;
    }

    let family = SkillFamily::of(spec);
    let mut ctl: Box<dyn Controller + Send> = match (&args.policy, args.no_feedback) {
        (Some(path), _) => Box::new(PolicyController {
            policy: load_policy(path, spec.name)?,
            step_size: env.config().step_size,
        }),
        (None, true) => Box::new(NoFeedback),
        (None, false) => analytic_controller(family, &Gains::default()),
    };
    let opts = if args.no_stop {
        RunOptions {
            check_state: true,
            ..RunOptions::fixed_horizon()
        }
    } else {
        RunOptions::default()
    };
    let trace = run_skill(spec, ctl.as_mut(), &mut env, &params, &opts).map_err(|e| CliError::Runtime(e.into()))?;

    let dir = out_dir(cli, "skillforge-out");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    match cli.format {
        Format::Csv => save_trace_csv(&trace, &dir.join("trace.csv")).map_err(|e| CliError::Runtime(e.into()))?,
        Format::Json => write_json(&dir.join("trace.json"), &trace)?,
    }
    println!("{}", trace.summary_line());
    if let Some(e) = &trace.error {
        eprintln!("error: {e}");
    }
    match trace.termination {
        Termination::Success => Ok(()),
        t if args.no_stop && t == Termination::Timeout => Ok(()),
        t => Err(CliError::Runtime(anyhow!("{} ended in {t}", spec.name))),
    }
}

fn cmd_train(cli: &Cli, args: &TrainArgs) -> Result<(), CliError> {
    let spec = lookup(&args.skill).map_err(usage)?;
    let factory = StandardFactory::new(spec).map_err(usage)?;
    let method: Method = args.method.parse().map_err(usage)?;
    let config = LearnerConfig {
        method,
        iterations: args.iterations,
        max_env_steps: args.steps,
        population: args.population,
        hidden: args.hidden,
        seed: cli.seed,
        ..LearnerConfig::default()
    };
    let outcome = train(&factory, &config).map_err(|e| match e {
        skillforge::AgentError::Config(_) => usage(e),
        e => CliError::Runtime(e.into()),
    })?;
    let dir = out_dir(cli, "skillforge-out");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let policy_path = args.policy.clone().unwrap_or_else(|| dir.join("policy.json"));
    if let Some(parent) = policy_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(&policy_path, outcome.policy.to_json() + "\n").with_context(|| format!("writing {}", policy_path.display()))?;
    match cli.format {
        Format::Csv => {
            let f = fs::File::create(dir.join("curve.csv"))?;
            write_curve_csv(&outcome.curve, f).map_err(|e| CliError::Runtime(e.into()))?;
        }
        Format::Json => write_json(&dir.join("curve.json"), &outcome.curve)?,
    }
    let (first, last) = match (outcome.curve.first(), outcome.curve.last()) {
        (Some(f), Some(l)) => (f.mean_reward, l.mean_reward),
        _ => return Err(CliError::Runtime(anyhow!("the step budget allows no complete iteration"))),
    };
    println!(
        "{} iterations={} env_steps={} first_mean={first:.3} final_mean={last:.3}",
        spec.name,
        outcome.curve.len(),
        outcome.env_steps
    );
    Ok(())
}

fn cmd_exec(cli: &Cli, args: &ExecArgs) -> Result<(), CliError> {
    args.thresholds.check()?;
    let seq = load_task_sequence(&args.sequence).map_err(usage)?;
    let scene_arg = args
        .scene
        .clone()
        .or_else(|| seq.scene.clone())
        .ok_or_else(|| usage(anyhow!("the sequence names no scene; pass --scene")))?;
    let mut scene = load_scene(&scene_arg)?;
    if let Some(f) = args.thresholds.f_step {
        scene.config.f_step = f;
    }
    let mut env = Env::new(scene).map_err(usage)?;
    env = if args.jitter > 0.0 {
        env.with_carrier(Box::new(JitteryCarrier::new(args.jitter, cli.seed)))
    } else {
        env.with_carrier(Box::new(IdentityCarrier))
    };
    let mut policies = BTreeMap::new();
    for path in &args.policy {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(usage)?;
        let p = Policy::from_json(&text).map_err(usage)?;
        policies.insert(p.skill.clone(), p);
    }
    let opts = ExecOptions {
        bind: BindOptions {
            thresholds: args.thresholds.thresholds(),
            horizon: args.steps,
            feature_noise: args.feature_noise,
            seed: cli.seed,
        },
        gains: Gains::default(),
        policies,
    };
    let report = execute_sequence(&seq, &mut env, &opts).map_err(|e| match e {
        e @ skillforge::PipelineError::Sequence(_) => usage(e),
        skillforge::PipelineError::Task { index, task, source } if matches!(*source, skillforge::AgentError::StateMismatch { .. }) => {
            usage(anyhow::anyhow!("task {index} (`{task}`): {source}"))
        }
        e => CliError::Runtime(e.into()),
    })?;
    let dir = out_dir(cli, "skillforge-out");
    report
        .write_outputs(&dir)
        .map_err(|e| CliError::Runtime(e.into()))?;
    for m in &report.markers {
        eprintln!("marker: {m}");
    }
    for t in &report.traces {
        println!("{} {}", t.skill, t.summary_line());
    }
    if !report.success() {
        return Err(CliError::Runtime(anyhow!("sequence aborted")));
    }
    Ok(())
}

fn cmd_presets(args: &PresetArgs) -> Result<(), CliError> {
    match &args.name {
        None => {
            for (name, state) in PRESET_STATES {
                println!("{name} {state}");
            }
        }
        Some(name) => {
            let scene = preset(name).map_err(usage)?;
            let text = if args.contacts {
                let env = Env::new(scene).map_err(usage)?;
                env.contact_set().to_json()
            } else {
                serde_json::to_string_pretty(&scene).map_err(|e| CliError::Runtime(e.into()))?
            };
            println!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Exit quietly when the reader of stdout goes away (`| head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Classify(a) => cmd_classify(&cli, a),
        Command::Reward(a) => cmd_reward(&cli, a),
        Command::Run(a) => cmd_run(&cli, a),
        Command::Train(a) => cmd_train(&cli, a),
        Command::Exec(a) => cmd_exec(&cli, a),
        Command::Presets(a) => cmd_presets(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
        Err(CliError::Usage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

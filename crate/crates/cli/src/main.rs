use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crncalc::forcing::ForcedForm;
use crncalc::presets::{naive_inversion, Preset};
use crncalc::rate::{check_speed, digits_time_series, estimate_rate_series};
use crncalc::sim::OutputGrid;
use crncalc::sweep::{run_sweep, Grid, SweepSubject};
use crncalc::verify::{output_series, run_lemma, verify_program, VERIFY_T_END};
use crncalc::*;

const TOL_ENV: &str = "CRNCALC_DEFAULT_TOL";

#[derive(Parser)]
#[command(name = "crncalc", version, about = "Compile arithmetic into mass-action reaction networks and check their speed")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the reaction network for an expression.
    Compile {
        #[command(flatten)]
        program: ProgramArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a compiled expression, a preset or a network file and write the trajectory.
    Simulate {
        #[arg(long, conflicts_with_all = ["preset", "network"])]
        expr: Option<String>,
        #[arg(long, default_value = "nonneg")]
        mode: Mode,
        #[arg(long)]
        preset: Option<Preset>,
        /// Network in the text format, with `--init` giving initial values.
        #[arg(long, conflicts_with = "preset")]
        network: Option<PathBuf>,
        /// `k=v,...` input values; `a=5:3` gives both rails.
        #[arg(long = "in", default_value = "")]
        inputs: String,
        /// `SPECIES=v,...` for `--network`; unlisted species start at 0.
        #[arg(long, default_value = "")]
        init: String,
        #[command(flatten)]
        sim: SimArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the rate and digit time of a saved trajectory.
    Analyze {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        species: String,
        /// Second rail: the analyzed value is `species - negative`.
        #[arg(long)]
        negative: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        target: f64,
        /// Predicted bound to check the estimate against.
        #[arg(long)]
        bound: Option<f64>,
        #[command(flatten)]
        analysis: AnalysisArgs,
    },
    /// Compile, simulate and compare the measured rate with the predicted bound.
    Verify {
        #[command(flatten)]
        program: ProgramArgs,
        #[arg(long = "in", default_value = "")]
        inputs: String,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        /// Trajectory CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate one forced system and compare with its lemma.
    Lemma {
        #[arg(long)]
        form: ForcedForm,
        #[arg(long, allow_hyphen_values = true)]
        g1: String,
        #[arg(long, allow_hyphen_values = true)]
        g2: String,
        #[arg(long, default_value_t = 1)]
        m: u32,
        /// Defaults to 0 for the linear form and 1 for the power form.
        #[arg(long)]
        x0: Option<f64>,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Measure the rate over a grid of inputs.
    Sweep {
        #[arg(long, conflicts_with = "preset")]
        expr: Option<String>,
        #[arg(long, default_value = "nonneg")]
        mode: Mode,
        #[arg(long)]
        preset: Option<Preset>,
        /// `a=0.1,1,10;b=2`
        #[arg(long, default_value = "")]
        grid: String,
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        sim: SimArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ProgramArgs {
    #[arg(long)]
    expr: String,
    #[arg(long, default_value = "nonneg")]
    mode: Mode,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
    #[arg(long)]
    max_step: Option<f64>,
    #[arg(long)]
    blowup_threshold: Option<f64>,
    /// Fixed output step; accepted steps are written when absent.
    #[arg(long)]
    dt: Option<f64>,
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(long, default_value_t = crncalc::rate::DEFAULT_SLACK)]
    slack: f64,
    #[arg(long, default_value_t = 6)]
    digits: u32,
    /// JSON report.
    #[arg(long)]
    report: Option<PathBuf>,
    /// `t,ln_error` columns.
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

fn usage(message: impl ToString) -> Failure {
    Failure { code: 2, message: message.to_string() }
}

fn io(path: &Path, e: std::io::Error) -> Failure {
    Failure { code: 1, message: format!("{}: {e}", path.display()) }
}

fn env_tolerances() -> Result<(Option<f64>, Option<f64>), Failure> {
    let Ok(raw) = std::env::var(TOL_ENV) else { return Ok((None, None)) };
    let parse = |s: &str| s.trim().parse::<f64>().map_err(|_| usage(format!("{TOL_ENV}: bad tolerance `{s}`")));
    match raw.split_once(',') {
        Some((r, a)) => Ok((Some(parse(r)?), Some(parse(a)?))),
        None => Ok((Some(parse(&raw)?), None)),
    }
}

impl SimArgs {
    fn config(&self, default_t_end: f64) -> Result<SimConfig, Failure> {
        let (env_rtol, env_atol) = env_tolerances()?;
        let mut cfg = SimConfig { sigma: self.sigma, t_end: self.t_end.unwrap_or(default_t_end), ..SimConfig::default() };
        if let Some(r) = self.rtol.or(env_rtol) {
            cfg.rel_tol = r;
        }
        if let Some(a) = self.atol.or(env_atol) {
            cfg.abs_tol = a;
        }
        if let Some(h) = self.max_step {
            cfg.max_step = h;
        }
        if let Some(b) = self.blowup_threshold {
            cfg.blowup_threshold = b;
        }
        if let Some(dt) = self.dt {
            cfg.output_grid = OutputGrid::Fixed(dt);
        }
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

impl AnalysisArgs {
    fn analysis(&self) -> Result<Analysis, Failure> {
        if !(self.slack > 0.0 && self.slack < 1.0) {
            return Err(usage(format!("--slack must lie in (0, 1), got {}", self.slack)));
        }
        Ok(Analysis { slack: self.slack, digits: self.digits, ..Analysis::default() })
    }
}

fn parse_inputs(text: &str) -> Result<Assignment, Failure> {
    let mut out = Assignment::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| usage(format!("--in: `{part}` is not `name=value`")))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| usage(format!("--in: bad number `{s}` for `{k}`")));
        let value = match v.split_once(':') {
            Some((p, n)) => InputValue::Pair(num(p)?, num(n)?),
            None => InputValue::Value(num(v)?),
        };
        if out.insert(k.trim().to_string(), value).is_some() {
            return Err(usage(format!("--in: `{k}` given twice")));
        }
    }
    Ok(out)
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure { code: 1, message: e.to_string() })?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| io(path, e))
}

fn plot_data(times: &[f64], values: &[f64], target: f64) -> String {
    let mut out = String::from("t,ln_error\n");
    for (t, v) in times.iter().zip(values) {
        let e = (v - target).abs();
        if e > 0.0 && e.is_finite() {
            writeln!(out, "{t},{}", e.ln()).unwrap();
        }
    }
    out
}

fn compile_program(args: &ProgramArgs) -> Result<CompiledProgram, Failure> {
    compile(&args.expr, args.mode).map_err(usage)
}

fn cmd_compile(program: &ProgramArgs, out: Option<&Path>) -> Result<u8, Failure> {
    let p = compile_program(program)?;
    write_out(out, &p.to_text())?;
    Ok(0)
}

fn parse_init(text: &str, net: &ReactionNetwork) -> Result<Vec<f64>, Failure> {
    let mut x = vec![0.0; net.species().len()];
    for (k, v) in parse_inputs(text)? {
        let i = net.index_of(&k).ok_or_else(|| usage(format!("--init: no species `{k}` in the network")))?;
        match v {
            InputValue::Value(v) => x[i] = v,
            InputValue::Pair(..) => return Err(usage(format!("--init: `{k}` takes a single value"))),
        }
    }
    Ok(x)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    expr: Option<&str>,
    mode: Mode,
    preset: Option<Preset>,
    network: Option<&Path>,
    inputs: &str,
    init: &str,
    sim: &SimArgs,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let cfg = sim.config(SimConfig::default().t_end)?;
    let traj = match (expr, preset, network) {
        (Some(e), None, None) => {
            let p = compile(e, mode).map_err(usage)?;
            simulate(&p, &parse_inputs(inputs)?, &cfg).map_err(usage)?
        }
        (None, Some(Preset::NaiveInversion), None) => {
            let asg = parse_inputs(inputs)?;
            let a = match asg.get("a") {
                Some(InputValue::Value(a)) if asg.len() == 1 => *a,
                _ => return Err(usage("naive-inversion takes exactly `--in a=<value>`")),
            };
            simulate_network(&naive_inversion(), &[a, 0.0], &cfg).map_err(usage)?
        }
        (None, None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
            let net = parse_network(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
            simulate_network(&net, &parse_init(init, &net)?, &cfg).map_err(usage)?
        }
        _ => return Err(usage("give one of --expr, --preset or --network")),
    };
    write_out(out, &traj.to_csv())?;
    if !traj.completed() {
        eprintln!("trajectory ended early: {}", traj.termination);
    }
    Ok(0)
}

fn cmd_analyze(
    path: &Path,
    species: &str,
    negative: Option<&str>,
    target: f64,
    bound: Option<f64>,
    args: &AnalysisArgs,
) -> Result<u8, Failure> {
    let analysis = args.analysis()?;
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    let traj = Trajectory::from_csv(&text).map_err(usage)?;
    let column = |s: &str| traj.series(s).ok_or_else(|| usage(format!("no species `{s}` in {}", path.display())));
    let mut values = column(species)?;
    if let Some(n) = negative {
        for (v, w) in values.iter_mut().zip(column(n)?) {
            *v -= w;
        }
    }
    if let Some(p) = &args.plot_data {
        write_out(Some(p), &plot_data(&traj.times, &values, target))?;
    }
    let estimate = estimate_rate_series(&traj.times, &values, target, &analysis.rate);
    let digit_time = digits_time_series(&traj.times, &values, target, analysis.digits).ok();
    let verdict = match (&estimate, bound) {
        (Ok(e), Some(b)) => Some(check_speed(e, &SpeedBound::new(b, "given"), analysis.slack)),
        _ => None,
    };
    println!("termination  {}", traj.termination);
    match &estimate {
        Ok(e) => println!(
            "rho_hat      {:.4} (window [{:.2}, {:.2}], r^2 {:.5}, {} samples)",
            e.rho_hat, e.fit_window.0, e.fit_window.1, e.r_squared, e.samples_used
        ),
        Err(e) => println!("rho_hat      n/a ({e})"),
    }
    if let Some(d) = digit_time {
        println!("T_{}          {:.4}", d.n, d.t_n);
    }
    if let Some(v) = &verdict {
        println!("speed check  {v:?}");
    }
    if let Some(p) = &args.report {
        let report = serde_json::json!({
            "trajectory": path.display().to_string(),
            "species": species,
            "negative": negative,
            "target": target,
            "termination": traj.termination.to_string(),
            "estimate": estimate.as_ref().ok(),
            "estimate_error": estimate.as_ref().err().map(ToString::to_string),
            "digit_time": digit_time,
            "bound": bound,
            "verdict": verdict,
        });
        write_json(p, &report)?;
    }
    Ok(match (&estimate, &verdict) {
        (Err(_), _) => 4,
        (Ok(_), Some(v)) if !v.passed() => 5,
        _ => 0,
    })
}

fn cmd_verify(program: &ProgramArgs, inputs: &str, sim: &SimArgs, args: &AnalysisArgs, out: Option<&Path>) -> Result<u8, Failure> {
    let p = compile_program(program)?;
    let asg = parse_inputs(inputs)?;
    let cfg = sim.config(VERIFY_T_END)?;
    let analysis = args.analysis()?;
    let v = verify_program(&p, &program.expr, &asg, &cfg, &analysis).map_err(usage)?;
    print!("{}", v.report.summary());
    if let Some(path) = out {
        write_out(Some(path), &v.trajectory.to_csv())?;
    }
    if let Some(path) = &args.report {
        write_json(path, &v.report)?;
    }
    if let Some(path) = &args.plot_data {
        let values = output_series(&v.trajectory, &p.circuit.output).unwrap_or_default();
        write_out(Some(path), &plot_data(&v.trajectory.times, &values, v.report.target_value))?;
    }
    if let Termination::Blowup { species, time } = &v.report.termination {
        eprintln!("blowup: `{species}` exceeded {} at t = {time}", cfg.blowup_threshold);
    }
    Ok(v.report.exit_code() as u8)
}

#[allow(clippy::too_many_arguments)]
fn cmd_lemma(
    form: ForcedForm,
    g1: &str,
    g2: &str,
    m: u32,
    x0: Option<f64>,
    sim: &SimArgs,
    args: &AnalysisArgs,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let g1: ForcingFunction = g1.parse().map_err(|e| usage(format!("--g1: {e}")))?;
    let g2: ForcingFunction = g2.parse().map_err(|e| usage(format!("--g2: {e}")))?;
    let x0 = x0.unwrap_or(match form {
        ForcedForm::Linear => 0.0,
        ForcedForm::Power => 1.0,
    });
    let spec = ForcedSystemSpec { form, m, g1, g2, x0 };
    spec.validate().map_err(usage)?;
    crncalc::rate::lemma_prediction(&spec).map_err(|e| usage(format!("lemma precondition: {e}")))?;
    let cfg = sim.config(VERIFY_T_END)?;
    let analysis = args.analysis()?;
    let (o, traj) = run_lemma(&spec, &cfg, &analysis).map_err(usage)?;

    println!("system       {form:?}, m = {m}, g1 = {}, g2 = {}, x0 = {x0}", spec.g1, spec.g2);
    println!("lemma        {:?}", o.prediction.family);
    if let Some(l) = o.prediction.limit {
        println!("limit        {l:.12}");
    }
    println!("final value  {:.12}", o.final_value);
    println!("predicted    >= {} [{}]", o.prediction.bound.value, o.prediction.bound.case_tag);
    if let Some(e) = &o.estimate {
        println!("rho_hat      {:.4} (window [{:.2}, {:.2}], r^2 {:.5})", e.rho_hat, e.fit_window.0, e.fit_window.1, e.r_squared);
    }
    if let Some(g) = o.growth {
        println!("ln x / t     {g:.4} (min over final third)");
    }
    println!("termination  {}", o.termination);
    println!("verdict      {:?}", o.verdict);

    if let Some(path) = out {
        write_out(Some(path), &traj.to_csv())?;
    }
    if let Some(path) = &args.report {
        write_json(path, &o)?;
    }
    if let (Some(path), Some(limit)) = (&args.plot_data, o.prediction.limit) {
        write_out(Some(path), &plot_data(&traj.times, &traj.series("x").unwrap_or_default(), limit))?;
    }
    Ok(if o.verdict.passed() {
        0
    } else if !traj.completed() {
        3
    } else if o.prediction.family != crncalc::rate::LemmaFamily::Test && o.estimate.is_none() {
        4
    } else {
        5
    })
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    expr: Option<&str>,
    mode: Mode,
    preset: Option<Preset>,
    grid: &str,
    jobs: Option<usize>,
    sim: &SimArgs,
    args: &AnalysisArgs,
    out: Option<&Path>,
) -> Result<u8, Failure> {
    let grid: Grid = grid.parse().map_err(|e| usage(format!("--grid: {e}")))?;
    if jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    let cfg = sim.config(VERIFY_T_END)?;
    let analysis = args.analysis()?;
    let program;
    let subject = match (expr, preset) {
        (Some(e), None) => {
            program = compile(e, mode).map_err(usage)?;
            SweepSubject::Program { expression: e, program: &program }
        }
        (None, Some(p)) => SweepSubject::Preset(p),
        _ => return Err(usage("give one of --expr or --preset")),
    };
    let table = run_sweep(&subject, &grid, &cfg, &analysis, jobs);
    write_out(out, &table.to_csv())?;
    if let Some(path) = &args.report {
        write_json(path, &table)?;
    }
    Ok(0)
}

fn run(cli: Cli) -> Result<u8, Failure> {
    match &cli.command {
        Command::Compile { program, out } => cmd_compile(program, out.as_deref()),
        Command::Simulate { expr, mode, preset, network, inputs, init, sim, out } => {
            cmd_simulate(expr.as_deref(), *mode, *preset, network.as_deref(), inputs, init, sim, out.as_deref())
        }
        Command::Analyze { trajectory, species, negative, target, bound, analysis } => {
            cmd_analyze(trajectory, species, negative.as_deref(), *target, *bound, analysis)
        }
        Command::Verify { program, inputs, sim, analysis, out } => cmd_verify(program, inputs, sim, analysis, out.as_deref()),
        Command::Lemma { form, g1, g2, m, x0, sim, analysis, out } => {
            cmd_lemma(*form, g1, g2, *m, *x0, sim, analysis, out.as_deref())
        }
        Command::Sweep { expr, mode, preset, grid, jobs, sim, analysis, out } => {
            cmd_sweep(expr.as_deref(), *mode, *preset, grid, *jobs, sim, analysis, out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

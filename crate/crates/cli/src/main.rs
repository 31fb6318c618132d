use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use posnet::design::DesignOptions;
use posnet::epidemic::{run_case_study, CaseStudyConfig, CaseTarget, RecoveryConvention, TrajectorySettings};
use posnet::gpcore::{self, GpStatus};
use posnet::mjls::{decay_rate, gain_certificate, l1_gain, lifted_abscissa, stability_certificate, Mjls};
use posnet::network::assemble;
use posnet::simulate::{monte_carlo, moment_flow, InputSignal, SimConfig};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use posnet_cli::model::{self, ModelError, ModelFile, ProblemType, SolverOverrides};

#[derive(Parser)]
#[command(name = "posnet", version, about = "Analysis and cost-optimal design of Markov-switched positive networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Solver tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Solver iteration limit.
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Relaxation of strict inequalities.
    #[arg(long, global = true)]
    eps_strict: Option<f64>,
    /// Random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for Monte Carlo.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Mean stability, decay rate, L1-gain and certificates of a numeric model.
    Analyze { model: PathBuf },
    /// Solve a design problem for a model with declared variables.
    Design {
        model: PathBuf,
        #[arg(long, value_enum)]
        problem: Option<ProblemType>,
        #[arg(long)]
        target: Option<f64>,
    },
    /// Moment flow and Monte Carlo trajectories of a model file or design directory.
    Simulate {
        input: PathBuf,
        /// Monte Carlo replications.
        #[arg(long, default_value_t = 1000)]
        mc: usize,
        #[arg(long, default_value_t = 20.0)]
        horizon: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        /// Initial state, comma separated; all ones by default.
        #[arg(long)]
        x0: Option<String>,
        /// Initial mode.
        #[arg(long, default_value_t = 0)]
        sigma0: usize,
        /// Disturbance pulse `channel:height`.
        #[arg(long)]
        pulse: Option<String>,
    },
    /// Epidemic case study.
    Epi {
        /// `stabilize:RATE` or `attenuate:GAMMA`.
        #[arg(long)]
        target: String,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        households: Option<usize>,
        #[arg(long)]
        workplaces: Option<usize>,
        /// Edge probability inside groups.
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, value_enum, default_value_t = Convention::Magnitude)]
        convention: Convention,
        #[arg(long)]
        no_trajectories: bool,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Convention {
    Magnitude,
    Literal,
}

/// Exit codes.
const EXIT_PARSE: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_VERIFICATION: u8 = 4;
const EXIT_NUMERICAL: u8 = 5;

fn exit_code(err: &anyhow::Error) -> u8 {
    use posnet::Error as E;
    for cause in err.chain() {
        if cause.downcast_ref::<ModelError>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return EXIT_PARSE;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Infeasible(_) => EXIT_INFEASIBLE,
                E::VerificationFailed(_) => EXIT_VERIFICATION,
                E::NoConvergence { .. } | E::Singular | E::IllConditioned { .. } | E::SolverStatus(_) => EXIT_NUMERICAL,
                E::InvalidConfig(_)
                | E::InvalidDesign(_)
                | E::InvalidNetwork(_)
                | E::InvalidGenerator(_)
                | E::DimensionMismatch(_)
                | E::NonFinite { .. }
                | E::NotSquare { .. }
                | E::NotMetzler { .. }
                | E::Negative { .. }
                | E::Empty(_)
                | E::PositivityViolation(_) => EXIT_PARSE,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_PARSE);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze { model } => analyze(cli, model),
        Command::Design { model, problem, target } => design(cli, model, *problem, *target),
        Command::Simulate { input, mc, horizon, step, x0, sigma0, pulse } => {
            let mut cfg = SimConfig::new(*horizon, *step);
            cfg.replications = *mc;
            cfg.master_seed = cli.seed.unwrap_or(0);
            if let Some(p) = pulse {
                cfg.input = parse_pulse(p)?;
            }
            simulate(cli, input, cfg, x0.as_deref(), *sigma0)
        }
        Command::Epi { target, agents, households, workplaces, p, convention, no_trajectories, horizon, step } => {
            let mut cfg = CaseStudyConfig::new(parse_target(target)?, cli.seed.unwrap_or(1));
            if let Some(v) = agents {
                cfg.agents = *v;
            }
            if let Some(v) = households {
                cfg.households = *v;
            }
            if let Some(v) = workplaces {
                cfg.workplaces = *v;
            }
            if let Some(v) = p {
                cfg.p = *v;
            }
            cfg.convention = match convention {
                Convention::Magnitude => RecoveryConvention::Magnitude,
                Convention::Literal => RecoveryConvention::Literal,
            };
            let overrides = cli_overrides(cli);
            cfg.solver = overrides.config();
            cfg.options.eps_strict = cfg.solver.eps_strict;
            cfg.trajectories = if *no_trajectories {
                None
            } else {
                let mut t = TrajectorySettings::default();
                if let Some(h) = horizon {
                    t.horizon = *h;
                }
                if let Some(s) = step {
                    t.step = *s;
                }
                Some(t)
            };
            epi(cli, cfg)
        }
    }
}

fn cli_overrides(cli: &Cli) -> SolverOverrides {
    SolverOverrides { tol: cli.tol, max_iter: cli.max_iter, eps_strict: cli.eps_strict }
}

fn parse_target(s: &str) -> Result<CaseTarget> {
    let (kind, value) = s.split_once(':').ok_or_else(|| ModelError::Schema(format!("target `{s}` is not KIND:VALUE")))?;
    let value: f64 = value.parse().map_err(|_| ModelError::Schema(format!("target value `{value}` is not a number")))?;
    match kind {
        "stabilize" => Ok(CaseTarget::Stabilize(value)),
        "attenuate" => Ok(CaseTarget::Attenuate(value)),
        _ => Err(ModelError::Schema(format!("unknown target kind `{kind}`")).into()),
    }
}

fn parse_pulse(s: &str) -> Result<InputSignal> {
    let bad = || ModelError::Schema(format!("pulse `{s}` is not CHANNEL:HEIGHT"));
    let (c, t) = s.split_once(':').ok_or_else(bad)?;
    Ok(InputSignal::Pulse { channel: c.parse().map_err(|_| bad())?, tau: t.parse().map_err(|_| bad())? })
}

fn parse_vector(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| ModelError::Schema(format!("`{x}` is not a number")).into()))
        .collect()
}

fn read_model(path: &Path) -> Result<(ModelFile, Vec<u8>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let text = String::from_utf8(bytes.clone()).map_err(|_| ModelError::Schema("model file is not UTF-8".into()))?;
    let m = model::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok((m, bytes))
}

struct Run<'a> {
    cli: &'a Cli,
    command: &'static str,
    started: Instant,
    input: Option<(String, Vec<u8>)>,
    seed: Option<u64>,
    config: Value,
    iterations: Option<usize>,
    outputs: Vec<String>,
    dir: PathBuf,
}

impl<'a> Run<'a> {
    fn new(cli: &'a Cli, command: &'static str, dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { cli, command, started: Instant::now(), input: None, seed: None, config: Value::Null, iterations: None, outputs: Vec::new(), dir })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, &s)
    }

    fn finish(mut self) -> Result<()> {
        let (input, hash) = match &self.input {
            Some((p, bytes)) => (Some(p.clone()), Some(hex::encode(Sha256::digest(bytes)))),
            None => (None, None),
        };
        let manifest = json!({
            "tool": "posnet",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "input": input,
            "input_sha256": hash,
            "seed": self.seed,
            "config": self.config,
            "global": {
                "tol": self.cli.tol,
                "max_iter": self.cli.max_iter,
                "eps_strict": self.cli.eps_strict,
                "threads": self.cli.threads,
            },
            "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
            "solver_iterations": self.iterations,
            "outputs": self.outputs,
        });
        self.write_json("manifest.json", &manifest)
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from("posnet-out"))
}

fn analysis_report(m: &Mjls) -> Result<(String, Value)> {
    let abscissa = lifted_abscissa(m)?;
    if abscissa >= 0.0 {
        return Ok((format!("unstable, abscissa {abscissa:?}"), json!({ "stable": false, "abscissa": abscissa })));
    }
    let rate = decay_rate(m)?;
    let mut text = format!("stable, decay {rate:?}");
    let stability = stability_certificate(m, rate * (1.0 - 1e-6)).ok();
    let mut report = json!({
        "stable": true,
        "abscissa": abscissa,
        "decay_rate": rate,
        "stability_certificate": stability,
    });
    if m.input_dim() > 0 && m.output_dim() > 0 {
        let gain = l1_gain(m)?;
        write!(text, "\nL1-gain {gain:?}")?;
        report["l1_gain"] = json!(gain);
        report["gain_certificate"] = json!(gain_certificate(m, gain * (1.0 + 1e-6) + 1e-12).ok());
    }
    Ok((text, report))
}

fn analyze(cli: &Cli, path: &Path) -> Result<()> {
    let (model, bytes) = read_model(path)?;
    let net = model.network()?;
    let m = assemble(&net)?;
    let (text, report) = analysis_report(&m)?;
    println!("{text}");
    if let Some(dir) = &cli.out {
        let mut run = Run::new(cli, "analyze", dir.clone())?;
        run.input = Some((path.display().to_string(), bytes));
        run.write_json("analysis.json", &report)?;
        run.finish()?;
    }
    Ok(())
}

fn design(cli: &Cli, path: &Path, problem: Option<ProblemType>, target: Option<f64>) -> Result<()> {
    let (model, bytes) = read_model(path)?;
    let spec = model.problem.as_ref();
    let kind_type = problem.or(spec.map(|p| p.kind)).ok_or_else(|| ModelError::Schema("no problem type given".into()))?;
    let target = target.or(spec.map(|p| p.target)).ok_or_else(|| ModelError::Schema("no problem target given".into()))?;
    let overrides = spec.and_then(|p| p.solver.clone()).unwrap_or_default().merged(&cli_overrides(cli));
    let solver = overrides.config();
    let options = DesignOptions { eps_strict: solver.eps_strict, ..DesignOptions::default() };
    let problem = model.design_problem(options)?;
    let kind = kind_type.kind(target);

    let mut run = Run::new(cli, "design", out_dir(cli))?;
    run.input = Some((path.display().to_string(), bytes));
    run.config = json!({ "problem": kind, "solver": solver });

    let compiled = problem.build(kind)?;
    let sol = gpcore::solve(&compiled.gp, &solver)?;
    run.iterations = Some(sol.iterations);
    let solver_report = json!({
        "status": sol.status,
        "iterations": sol.iterations,
        "phase1_iterations": sol.phase1_iterations,
        "kkt_residual": sol.kkt_residual,
        "objective": sol.objective_value,
        "variables": compiled.gp.num_vars(),
    });
    let outcome = problem.recover(&compiled, sol);
    let result = match outcome {
        Ok(d) => {
            let values: serde_json::Map<String, Value> = d.values.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
            let design = json!({
                "problem": d.kind,
                "target": d.target,
                "achieved_metric": d.achieved_metric,
                "total_cost": d.total_cost,
                "values": values,
                "certificate": d.certificate,
                "certificate_from_program": d.certificate_from_program,
                "model": ModelFile::from_network(&d.network),
            });
            run.write_json("design.json", &design)?;
            let metric = if kind.is_stabilization() { "decay rate" } else { "L1-gain" };
            println!("optimal, verified: {metric} {:?} (target {:?}), cost {:?}", d.achieved_metric, d.target, d.total_cost);
            run.write_json(
                "summary.json",
                &json!({
                    "status": "optimal",
                    "verified": true,
                    "problem": kind,
                    "achieved_metric": d.achieved_metric,
                    "target": d.target,
                    "total_cost": d.total_cost,
                    "solver": solver_report,
                }),
            )?;
            Ok(())
        }
        Err(e) => {
            let status = match &e {
                posnet::Error::Infeasible(_) => "infeasible",
                posnet::Error::VerificationFailed(_) => "verification-failed",
                _ => "failed",
            };
            println!("{status}");
            run.write_json("summary.json", &json!({ "status": status, "message": e.to_string(), "problem": kind, "solver": solver_report }))?;
            Err(anyhow::Error::new(e))
        }
    };
    run.finish()?;
    result
}

/// A model file, or a design directory whose `design.json` embeds the model.
fn load_simulation_input(path: &Path) -> Result<(ModelFile, String, Vec<u8>)> {
    if path.is_dir() {
        let file = path.join("design.json");
        let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
        let doc: Value = serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", file.display()))?;
        let model = doc.get("model").ok_or_else(|| ModelError::Schema(format!("{} has no `model`", file.display())))?;
        let model = model::parse(&model.to_string())?;
        Ok((model, file.display().to_string(), bytes))
    } else {
        let (model, bytes) = read_model(path)?;
        Ok((model, path.display().to_string(), bytes))
    }
}

fn fmt_row(out: &mut String, t: f64, cols: impl IntoIterator<Item = f64>) {
    let _ = write!(out, "{t}");
    for v in cols {
        let _ = write!(out, ",{v}");
    }
    out.push('\n');
}

fn header(first: &str, groups: &[(&str, usize)]) -> String {
    let mut h = first.to_string();
    for (name, n) in groups {
        for k in 0..*n {
            let _ = write!(h, ",{name}_{k}");
        }
    }
    h.push('\n');
    h
}

fn simulate(cli: &Cli, input: &Path, cfg: SimConfig, x0: Option<&str>, sigma0: usize) -> Result<()> {
    let (model, name, bytes) = load_simulation_input(input)?;
    let net = model.network()?;
    let m = assemble(&net)?;
    let n = m.state_dim();
    let x0 = match x0 {
        Some(s) => parse_vector(s)?,
        None => vec![1.0; n],
    };
    let mut run = Run::new(cli, "simulate", out_dir(cli))?;
    run.input = Some((name, bytes));
    run.seed = Some(cfg.master_seed);
    run.config = json!({ "sim": cfg, "x0": x0, "sigma0": sigma0 });
    let flow = moment_flow(&m, &x0, sigma0, &cfg)?;
    let mc = monte_carlo(&m, &x0, sigma0, &cfg)?;

    let modes = m.modes();
    let mut moments = header("t,mean_norm", &[("state", n), ("prob", modes)]);
    let norms = flow.mean_norm();
    for (k, t) in flow.times.iter().enumerate() {
        fmt_row(&mut moments, *t, std::iter::once(norms[k]).chain(flow.state[k].iter().copied()).chain(flow.mode_probs[k].iter().copied()));
    }
    run.write("moments.csv", &moments)?;

    let mut mcsv = header("t,mean_norm,stderr_norm", &[("state", n)]);
    for (k, t) in mc.times.iter().enumerate() {
        fmt_row(&mut mcsv, *t, [mc.mean_norm[k], mc.stderr_norm[k]].into_iter().chain(mc.mean_state[k].iter().copied()));
    }
    run.write("monte_carlo.csv", &mcsv)?;

    let mut path = header("t,mode", &[("state", n)]);
    for (k, t) in mc.times.iter().enumerate() {
        fmt_row(&mut path, *t, std::iter::once(mc.sample.modes[k] as f64).chain(mc.sample.states[k].iter().copied()));
    }
    run.write("sample_path.csv", &path)?;

    let max_gap = norms.iter().zip(&mc.mean_norm).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let max_z = norms
        .iter()
        .zip(mc.mean_norm.iter().zip(&mc.stderr_norm))
        .filter(|(_, (_, se))| **se > 0.0)
        .map(|(a, (b, se))| (a - b).abs() / se)
        .fold(0.0, f64::max);
    let summary = json!({
        "replications": mc.replications,
        "seed": cfg.master_seed,
        "grid_points": mc.times.len(),
        "final_mean_norm_moments": norms.last(),
        "final_mean_norm_monte_carlo": mc.mean_norm.last(),
        "max_abs_gap": max_gap,
        "max_standard_errors": max_z,
        "output_integral": flow.output_integral,
    });
    run.write_json("summary.json", &summary)?;
    println!("simulated {} replications on {} grid points, max gap {max_gap:?}", mc.replications, mc.times.len());
    run.finish()
}

fn epi(cli: &Cli, cfg: CaseStudyConfig) -> Result<()> {
    let mut run = Run::new(cli, "epi", out_dir(cli))?;
    run.seed = Some(cfg.seed);
    run.config = serde_json::to_value(&cfg)?;
    let report = run_case_study(&cfg)?;
    run.iterations = Some(report.solver.iterations);
    if report.solver.status != GpStatus::Optimal {
        bail!(posnet::Error::SolverStatus(format!("{:?}", report.solver.status)));
    }
    let design = json!({
        "target": cfg.target,
        "total_cost": report.total_cost,
        "program_cost": report.program_cost,
        "achieved_metric": report.achieved_metric,
        "certificate": report.certificate,
        "certificate_from_program": report.certificate_from_program,
        "agents": report.agents,
    });
    run.write_json("design.json", &design)?;
    run.write_json(
        "summary.json",
        &json!({
            "target": cfg.target,
            "total_cost": report.total_cost,
            "program_cost": report.program_cost,
            "achieved_metric": report.achieved_metric,
            "solver": report.solver,
            "stats": report.stats,
        }),
    )?;
    let mut scatter = String::from("id,worker,group_size,disturbed,beta,delta,c1,c2\n");
    for a in &report.agents {
        let _ = writeln!(scatter, "{},{},{},{},{},{},{},{}", a.id, a.worker as u8, a.group_size, a.disturbed as u8, a.beta, a.delta, a.c1, a.c2);
    }
    run.write("scatter.csv", &scatter)?;
    if let Some(tr) = &report.trajectories {
        for (name, expected, path) in [
            ("trajectory_workers.csv", &tr.expected_workers, &tr.path_workers),
            ("trajectory_nonworkers.csv", &tr.expected_nonworkers, &tr.path_nonworkers),
        ] {
            let mut csv = String::from("t,expected,sample_path\n");
            for (k, t) in tr.times.iter().enumerate() {
                fmt_row(&mut csv, *t, [expected[k], path[k]]);
            }
            run.write(name, &csv)?;
        }
    }
    let metric = match cfg.target {
        CaseTarget::Stabilize(_) => "decay rate",
        CaseTarget::Attenuate(_) => "L1-gain",
    };
    println!("optimal, verified: {metric} {:?}, cost {:?}", report.achieved_metric, report.total_cost);
    run.finish()
}

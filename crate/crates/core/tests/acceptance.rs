//! Acceptance suite: one pass/fail line per criterion, non-zero exit on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use common::*;
use posnet::design::{DesignOptions, DesignProblem, ProblemKind};
use posnet::epidemic::{generate_graphs, run_case_study, schedule_generator, toy_instance, CaseStudyConfig, CaseTarget, Population, GRAPH_OF_MODE};
use posnet::gpcore::{self, GeometricProgram, Monomial, Posynomial, SolverConfig, VarId, VarTable};
use posnet::mjls::{decay_rate, is_mean_stable, l1_gain, lifted_abscissa, lti_l1_gain, stability_certificate, MarkovGenerator, Mjls, StabilityCertificate};
use posnet::network::{Subsystem, SwitchedNetwork};
use posnet::posmat::Mat;
use posnet::simulate::{empirical_gain_lower_bound, moment_flow, monte_carlo, InputSignal, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const C1_INSTANCES: usize = 200;
const C1_SECONDS: f64 = 10.0;
const C1_MIN_GAP: f64 = 0.01;
const C2_INSTANCES: usize = 100;
const C2_TOL: f64 = 1e-7;
const C3_INSTANCES: usize = 50;
const C3_TAU: f64 = 1e3;
const C3_REL: f64 = 0.01;
const C3_SCALAR_TOL: f64 = 1e-10;
const C4_REL: f64 = 1e-4;
const C4_KKT: f64 = 1e-8;
const C5_LAMBDA: f64 = 0.1;
const C5_TOL: f64 = 1e-5;
const C5_SECONDS: f64 = 5.0;
const C6_LAMBDA0: f64 = 0.1;
const C6_TOL: f64 = 1e-4;
const C7_REPLICATIONS: usize = 10_000;
const C7_HORIZON: f64 = 20.0;
const C7_SE: f64 = 3.0;
const C8_LAMBDA: f64 = 0.01;
const C8_TOL: f64 = 1e-6;
const C8_SECONDS: f64 = 600.0;
const C9_GAMMA: f64 = 40.0;
const CASE_SEED: u64 = 1;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut stable, mut unstable) = (0, 0);
    for k in 0..C1_INSTANCES {
        let d = random_dims(&mut rng, 4, 3);
        let m = random_system(&mut rng, &d);
        let offset = rng.gen_range(C1_MIN_GAP..0.5) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let m = m.shifted(-lifted_abscissa(&m).map_err(|e| e.to_string())? + offset);
        let dense = dense_abscissa(&lifted_by_hand(&m));
        let ours = is_mean_stable(&m).map_err(|e| e.to_string())?;
        let cert = stability_certificate(&m, 0.0);
        let cert_ok = match &cert {
            Ok(c) => StabilityCertificate::slack(&m, &c.vectors, 0.0) > 0.0 && c.vectors.iter().flatten().all(|v| *v > 0.0),
            Err(_) => false,
        };
        check(ours == (dense < 0.0), format!("instance {k}: abscissa test {ours}, eigensolver {dense:e}"))?;
        check(cert_ok == ours, format!("instance {k}: certificate {cert_ok}, stable {ours}"))?;
        if ours {
            stable += 1;
        } else {
            unstable += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(secs < C1_SECONDS, format!("took {secs:.2} s"))?;
    Ok(format!("{C1_INSTANCES} instances ({stable} stable, {unstable} unstable) agree, {secs:.2} s"))
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let mut worst: f64 = 0.0;
    for _ in 0..C2_INSTANCES {
        let m = random_stable(&mut rng, 4, 3, 0.05, 1.0);
        let d = decay_rate(&m).map_err(|e| e.to_string())?;
        let lambda = rng.gen_range(-1.0..0.9 * d);
        let shifted = decay_rate(&m.shifted(lambda)).map_err(|e| e.to_string())?;
        worst = worst.max((shifted - (d - lambda)).abs());
    }
    check(worst <= C2_TOL, format!("worst deviation {worst:e}"))?;
    Ok(format!("{C2_INSTANCES} instances, worst deviation {worst:.2e}"))
}

/// Largest `𝟙ᵀ∫E[ξ⊗z]` over pulse responses integrated by the moment flow.
fn moment_gain(m: &Mjls) -> Result<f64, String> {
    let horizon = 40.0 / decay_rate(m).map_err(|e| e.to_string())?;
    let mut best: f64 = 0.0;
    for i in 0..m.modes() {
        for j in 0..m.input_dim() {
            let mut cfg = SimConfig::new(horizon, horizon / 20.0);
            cfg.input = InputSignal::Pulse { channel: j, tau: C3_TAU };
            let flow = moment_flow(m, &vec![0.0; m.state_dim()], i, &cfg).map_err(|e| e.to_string())?;
            best = best.max(flow.output_integral.iter().sum());
        }
    }
    Ok(best)
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let mut worst: f64 = 0.0;
    for k in 0..C3_INSTANCES {
        let m = random_stable(&mut rng, 3, 3, 0.05, 1.0);
        let closed = l1_gain(&m).map_err(|e| e.to_string())?;
        let flow = moment_gain(&m)?;
        let pulse = empirical_gain_lower_bound(&m, C3_TAU).map_err(|e| e.to_string())?;
        let scale = closed.max(1e-12);
        let spread = [closed, flow, pulse].iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b))
            - [closed, flow, pulse].iter().fold(f64::INFINITY, |a, b| a.min(*b));
        worst = worst.max(spread / scale);
        check(spread / scale <= C3_REL, format!("instance {k}: closed {closed}, moment {flow}, pulse {pulse}"))?;
    }
    let (a, b, c) = (2.5, 0.7, 1.3);
    let g = lti_l1_gain(&Mat::filled(1, 1, -a), &Mat::filled(1, 1, b), &Mat::filled(1, 1, c), &Mat::filled(1, 1, 0.0)).map_err(|e| e.to_string())?;
    let scalar_err = (g - c * b / a).abs();
    check(scalar_err <= C3_SCALAR_TOL, format!("scalar case off by {scalar_err:e}"))?;
    Ok(format!("{C3_INSTANCES} instances, worst relative spread {worst:.2e}; scalar cb/a error {scalar_err:.1e}"))
}

fn mono(c: f64, e: &[(VarId, f64)]) -> Monomial {
    Monomial::new(c, e.iter().copied()).unwrap()
}

fn posy(ms: Vec<Monomial>) -> Posynomial {
    Posynomial::new(ms).unwrap()
}

fn program(names: &[&str], objective: impl Fn(&[VarId]) -> Posynomial) -> (GeometricProgram, Vec<VarId>) {
    let mut vars = VarTable::new();
    let ids: Vec<VarId> = names.iter().map(|n| vars.register(*n).unwrap()).collect();
    let obj = objective(&ids);
    (GeometricProgram::new(vars, obj), ids)
}

struct GpCase {
    name: &'static str,
    build: fn() -> GeometricProgram,
    /// Objective over the free log-variables, `None` when infeasible.
    oracle: fn(&[f64]) -> Option<f64>,
    dim: usize,
    known: Option<f64>,
}

fn feasible(rows: &[f64]) -> bool {
    rows.iter().all(|r| *r <= 1.0)
}

fn gp_suite() -> Vec<GpCase> {
    vec![
        GpCase {
            name: "am-gm",
            build: || {
                let (mut gp, v) = program(&["x", "y"], |v| posy(vec![mono(1.0, &[(v[0], 1.0)]), mono(1.0, &[(v[1], 1.0)])]));
                gp.add_le("xy", mono(1.0, &[(v[0], -1.0), (v[1], -1.0)]).into());
                gp
            },
            oracle: |u| {
                let (x, y) = (u[0].exp(), u[1].exp());
                feasible(&[1.0 / (x * y)]).then(|| x + y)
            },
            dim: 2,
            known: Some(2.0),
        },
        GpCase {
            name: "reciprocal",
            build: || program(&["x"], |v| posy(vec![mono(1.0, &[(v[0], 1.0)]), mono(1.0, &[(v[0], -1.0)])])).0,
            oracle: |u| Some(u[0].exp() + (-u[0]).exp()),
            dim: 1,
            known: Some(2.0),
        },
        GpCase {
            name: "box volume",
            build: || {
                let (mut gp, v) = program(&["x", "y", "z"], |v| mono(1.0, &[(v[0], -1.0), (v[1], -1.0), (v[2], -1.0)]).into());
                let third = 1.0 / 3.0;
                gp.add_le(
                    "area",
                    posy(vec![mono(third, &[(v[0], 1.0), (v[1], 1.0)]), mono(third, &[(v[1], 1.0), (v[2], 1.0)]), mono(third, &[(v[0], 1.0), (v[2], 1.0)])]),
                );
                gp
            },
            oracle: |u| {
                let (x, y, z) = (u[0].exp(), u[1].exp(), u[2].exp());
                feasible(&[(x * y + y * z + x * z) / 3.0]).then(|| 1.0 / (x * y * z))
            },
            dim: 3,
            known: Some(1.0),
        },
        GpCase {
            name: "cyclic ratios with x = 1",
            build: || {
                let (mut gp, v) = program(&["x", "y", "z"], |v| {
                    posy(vec![mono(1.0, &[(v[0], 1.0), (v[1], -1.0)]), mono(1.0, &[(v[1], 1.0), (v[2], -1.0)]), mono(1.0, &[(v[2], 1.0), (v[0], -1.0)])])
                });
                gp.add_eq("x", mono(1.0, &[(v[0], 1.0)]));
                gp
            },
            oracle: |u| {
                let (y, z) = (u[0].exp(), u[1].exp());
                Some(1.0 / y + y / z + z)
            },
            dim: 2,
            known: Some(3.0),
        },
        GpCase {
            name: "fixed product",
            build: || {
                let (mut gp, v) = program(&["x", "y", "z"], |v| posy(v.iter().map(|id| mono(1.0, &[(*id, 1.0)])).collect()));
                gp.add_eq("xyz", mono(0.125, &[(v[0], 1.0), (v[1], 1.0), (v[2], 1.0)]));
                gp
            },
            oracle: |u| {
                let (x, y) = (u[0].exp(), u[1].exp());
                Some(x + y + 8.0 / (x * y))
            },
            dim: 2,
            known: Some(6.0),
        },
        GpCase {
            name: "squares and reciprocal",
            build: || {
                program(&["x", "y"], |v| posy(vec![mono(1.0, &[(v[0], 2.0)]), mono(1.0, &[(v[1], 2.0)]), mono(1.0, &[(v[0], -1.0), (v[1], -1.0)])])).0
            },
            oracle: |u| {
                let (x, y) = (u[0].exp(), u[1].exp());
                Some(x * x + y * y + 1.0 / (x * y))
            },
            dim: 2,
            known: Some(2.0 * 2f64.sqrt()),
        },
        GpCase {
            name: "active bounds",
            build: || {
                let (mut gp, v) = program(&["x", "y"], |v| posy(vec![mono(1.0, &[(v[0], 1.0)]), mono(1.0, &[(v[1], -1.0)])]));
                gp.add_bounds(v[0], Some(2.0), None).unwrap();
                gp.add_bounds(v[1], None, Some(3.0)).unwrap();
                gp
            },
            oracle: |u| {
                let (x, y) = (u[0].exp(), u[1].exp());
                feasible(&[2.0 / x, y / 3.0]).then(|| x + 1.0 / y)
            },
            dim: 2,
            known: Some(2.0 + 1.0 / 3.0),
        },
        GpCase {
            name: "four variables",
            build: || {
                let (mut gp, v) = program(&["w", "x", "y", "z"], |v| posy(v.iter().map(|id| mono(1.0, &[(*id, 1.0)])).collect()));
                gp.add_le("pairs", posy(vec![mono(1.0, &[(v[0], -1.0), (v[1], -1.0)]), mono(1.0, &[(v[2], -1.0), (v[3], -1.0)])]));
                gp
            },
            oracle: |u| {
                let x: Vec<f64> = u.iter().map(|t| t.exp()).collect();
                feasible(&[1.0 / (x[0] * x[1]) + 1.0 / (x[2] * x[3])]).then(|| x.iter().sum())
            },
            dim: 4,
            known: Some(4.0 * 2f64.sqrt()),
        },
        GpCase {
            name: "fractional exponents",
            build: || {
                program(&["x", "y", "z"], |v| {
                    posy(vec![
                        mono(1.0, &[(v[0], 1.0), (v[1], 1.0)]),
                        mono(1.0, &[(v[0], -1.0), (v[2], 0.2)]),
                        mono(1.0, &[(v[1], -2.0), (v[2], -1.0)]),
                        mono(1.0, &[(v[2], 1.0)]),
                    ])
                })
                .0
            },
            oracle: |u| {
                let (x, y, z) = (u[0].exp(), u[1].exp(), u[2].exp());
                Some(x * y + z.powf(0.2) / x + 1.0 / (y * y * z) + z)
            },
            dim: 3,
            known: None,
        },
        GpCase {
            name: "square of a sum",
            build: || {
                let (mut gp, v) = program(&["x", "y"], |v| {
                    posy(vec![mono(1.0, &[(v[0], 2.0)]), mono(2.0, &[(v[0], 1.0), (v[1], 1.0)]), mono(1.0, &[(v[1], 2.0)])])
                });
                gp.add_le("xy", mono(1.0, &[(v[0], -1.0), (v[1], -1.0)]).into());
                gp.add_le("ratio", mono(0.5, &[(v[0], 1.0), (v[1], -1.0)]).into());
                gp
            },
            oracle: |u| {
                let (x, y) = (u[0].exp(), u[1].exp());
                feasible(&[1.0 / (x * y), 0.5 * x / y]).then(|| (x + y) * (x + y))
            },
            dim: 2,
            known: Some(4.0),
        },
    ]
}

/// Grid search in log-space on `[-6, 6]^d`, repeatedly halving the box around
/// the best feasible grid point.
fn grid_oracle(dim: usize, f: fn(&[f64]) -> Option<f64>) -> f64 {
    let points = match dim {
        1 | 2 => 81,
        3 => 33,
        _ => 17,
    };
    let mut center = vec![0.0; dim];
    let mut half = 6.0;
    let mut best = (f64::INFINITY, center.clone());
    while half > 1e-11 {
        let step = 2.0 * half / (points - 1) as f64;
        let mut idx = vec![0usize; dim];
        'grid: loop {
            let u: Vec<f64> = (0..dim).map(|k| center[k] - half + idx[k] as f64 * step).collect();
            if let Some(v) = f(&u) {
                if v < best.0 {
                    best = (v, u);
                }
            }
            for k in 0..dim {
                idx[k] += 1;
                if idx[k] < points {
                    continue 'grid;
                }
                idx[k] = 0;
            }
            break;
        }
        assert!(best.0.is_finite(), "no feasible grid point");
        center = best.1.clone();
        half *= 0.5;
    }
    best.0
}

fn criterion_4() -> Outcome {
    let cfg = SolverConfig::default();
    let mut worst_rel: f64 = 0.0;
    let mut worst_kkt: f64 = 0.0;
    let suite = gp_suite();
    for case in &suite {
        let gp = (case.build)();
        check(gp.num_vars() <= 4, format!("{}: too many variables", case.name))?;
        let sol = gpcore::solve(&gp, &cfg).map_err(|e| format!("{}: {e}", case.name))?;
        let oracle = grid_oracle(case.dim, case.oracle);
        if let Some(k) = case.known {
            check(rel_err(oracle, k) <= C4_REL, format!("{}: grid oracle {oracle} misses the known optimum {k}", case.name))?;
        }
        let rel = rel_err(sol.objective_value, oracle);
        worst_rel = worst_rel.max(rel);
        worst_kkt = worst_kkt.max(sol.kkt_residual);
        check(rel <= C4_REL, format!("{}: solver {} vs oracle {oracle}", case.name, sol.objective_value))?;
        check(sol.kkt_residual <= C4_KKT, format!("{}: KKT residual {:e}", case.name, sol.kkt_residual))?;
        if case.name == "am-gm" {
            check((sol.values[0] - 1.0).abs() <= 1e-4 && (sol.values[1] - 1.0).abs() <= 1e-4, "am-gm minimizer is not (1, 1)")?;
        }
    }
    Ok(format!("{} programs, worst relative gap {worst_rel:.1e}, worst KKT residual {worst_kkt:.1e}", suite.len()))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let toy = toy_instance().map_err(|e| e.to_string())?;
    let compiled = toy.problem.build_problem_ia(C5_LAMBDA).map_err(|e| e.to_string())?;
    let sol = gpcore::solve(&compiled.gp, &SolverConfig::default()).map_err(|e| e.to_string())?;
    check(sol.status == gpcore::GpStatus::Optimal, format!("status {:?}", sol.status))?;
    let vectors: Vec<Vec<f64>> = compiled.v.iter().map(|r| r.iter().map(|id| sol.values[id.0]).collect()).collect();
    let design = toy.problem.recover(&compiled, sol).map_err(|e| e.to_string())?;
    let net = toy.problem.network_at(&design.gp_solution.values).map_err(|e| e.to_string())?;
    let system = posnet::network::assemble(&net).map_err(|e| e.to_string())?;
    let rate = -dense_abscissa(&lifted_by_hand(&system));
    check(rate >= C5_LAMBDA - C5_TOL, format!("recovered decay rate {rate}"))?;
    let margin = StabilityCertificate::slack(&system, &vectors, C5_LAMBDA);
    check(margin > 0.0, format!("program certificate margin {margin:e}"))?;
    let secs = start.elapsed().as_secs_f64();
    check(secs < C5_SECONDS, format!("took {secs:.2} s"))?;
    Ok(format!("optimal, decay {rate:.6} >= {C5_LAMBDA}, certificate margin {margin:.2e}, cost {:.4}, {secs:.3} s", design.total_cost))
}

fn criterion_6() -> Outcome {
    let toy = toy_instance().map_err(|e| e.to_string())?;
    let cfg = SolverConfig::default();
    let solve = |kind| toy.problem.solve(kind, &cfg).map_err(|e| format!("{kind:?}: {e}"));
    let r_star = solve(ProblemKind::Ia { lambda: C6_LAMBDA0 })?.total_cost;
    let lambda_back = solve(ProblemKind::Ib { budget: r_star })?.target;
    check(lambda_back >= C6_LAMBDA0 - C6_TOL, format!("λ*(R*(λ₀)) = {lambda_back}"))?;
    let budget0 = 1.1 * r_star;
    let lambda_star = solve(ProblemKind::Ib { budget: budget0 })?.target;
    let cost_back = solve(ProblemKind::Ia { lambda: lambda_star })?.total_cost;
    check(cost_back <= budget0 * (1.0 + C6_TOL), format!("R*(λ*(R̄₀)) = {cost_back} > {budget0}"))?;
    Ok(format!(
        "λ₀ = {C6_LAMBDA0}: R* = {r_star:.6}, λ* = {lambda_back:.6}; R̄₀ = {budget0:.6}: λ* = {lambda_star:.6}, R* = {cost_back:.6}"
    ))
}

fn criterion_7() -> Outcome {
    let generator = MarkovGenerator::two_state(0.8, 0.5).map_err(|e| e.to_string())?;
    let m = Mjls::autonomous(generator, vec![Mat::filled(1, 1, -1.0), Mat::filled(1, 1, 0.15)]).map_err(|e| e.to_string())?;
    let mut cfg = SimConfig::new(C7_HORIZON, 1.0);
    cfg.replications = C7_REPLICATIONS;
    cfg.master_seed = 7;
    let flow = moment_flow(&m, &[1.0], 0, &cfg).map_err(|e| e.to_string())?;
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?.install(|| monte_carlo(&m, &[1.0], 0, &cfg)).map_err(|e| e.to_string())
    };
    let mc = run(4)?;
    let mut worst: f64 = 0.0;
    for (k, ((mean, se), exact)) in mc.mean_norm.iter().zip(&mc.stderr_norm).zip(flow.mean_norm()).enumerate() {
        let dev = (mean - exact).abs();
        check(dev <= C7_SE * se + 1e-12, format!("t = {}: mean {mean}, moment {exact}, se {se}", mc.times[k]))?;
        if *se > 0.0 {
            worst = worst.max(dev / se);
        }
    }
    check(mc == run(1)?, "results depend on the thread count")?;
    check(mc == run(4)?, "results differ between runs")?;
    Ok(format!("{} grid points, worst deviation {worst:.2} standard errors, bit-identical across runs and thread counts", mc.times.len()))
}

/// Rebuilds the SIS system from the reported per-agent rates.
fn reconstruct(report: &posnet::epidemic::CaseStudyReport, disturbed: bool) -> Result<Mjls, String> {
    let cfg = &report.config;
    let pop = Population::generate(cfg.agents, cfg.households, cfg.workplaces, cfg.seed).map_err(|e| e.to_string())?;
    let graphs = generate_graphs(&pop, cfg.p).map_err(|e| e.to_string())?;
    let n = cfg.agents;
    let a: Vec<Mat> = GRAPH_OF_MODE
        .iter()
        .map(|g| {
            let mut m = Mat::zeros(n, n);
            for k in 0..n {
                m[(k, k)] = -report.agents[k].delta;
                for l in 0..n {
                    if graphs[*g][(k, l)] != 0.0 {
                        m[(k, l)] = report.agents[k].beta * graphs[*g][(k, l)];
                    }
                }
            }
            m
        })
        .collect();
    if !disturbed {
        return Mjls::autonomous(schedule_generator(), a).map_err(|e| e.to_string());
    }
    let eps: Vec<f64> = report.agents.iter().map(|r| if r.disturbed { 1.0 } else { 0.0 }).collect();
    let b = vec![Mat::diag(&eps); 4];
    let c = vec![Mat::identity(n); 4];
    let d = vec![Mat::zeros(n, n); 4];
    Mjls::new(schedule_generator(), a, b, c, d).map_err(|e| e.to_string())
}

fn single_threaded<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("thread pool").install(f)
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut cfg = CaseStudyConfig::new(CaseTarget::Stabilize(C8_LAMBDA), CASE_SEED);
    cfg.trajectories = None;
    let report = single_threaded(|| run_case_study(&cfg)).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let rate = decay_rate(&reconstruct(&report, false)?).map_err(|e| e.to_string())?;
    check(rate >= C8_LAMBDA - C8_TOL, format!("reconstructed decay rate {rate}"))?;
    check(report.achieved_metric >= C8_LAMBDA - C8_TOL, format!("achieved {}", report.achieved_metric))?;
    let s = &report.stats;
    check(
        s.mean_worker_investment > s.mean_nonworker_investment,
        format!("worker mean {} vs non-worker mean {}", s.mean_worker_investment, s.mean_nonworker_investment),
    )?;
    check(s.worker_size_rank_correlation > 0.0, format!("rank correlation {}", s.worker_size_rank_correlation))?;
    let upper = 2.0 * cfg.agents as f64;
    check(report.total_cost > 0.0 && report.total_cost <= upper, format!("total cost {}", report.total_cost))?;
    check(secs < C8_SECONDS, format!("took {secs:.1} s"))?;
    Ok(format!(
        "decay {rate:.6}, cost {:.4} in (0, {upper}], worker {:.4} > non-worker {:.4}, rank correlation {:.3}, {secs:.1} s",
        report.total_cost, s.mean_worker_investment, s.mean_nonworker_investment, s.worker_size_rank_correlation
    ))
}

fn criterion_9() -> Outcome {
    let mut cfg = CaseStudyConfig::new(CaseTarget::Attenuate(C9_GAMMA), CASE_SEED);
    cfg.trajectories = None;
    let report = run_case_study(&cfg).map_err(|e| e.to_string())?;
    let gain = l1_gain(&reconstruct(&report, true)?).map_err(|e| e.to_string())?;
    check(gain < C9_GAMMA, format!("closed-form gain {gain}"))?;
    let s = &report.stats;
    check(s.mean_c2_disturbed > s.mean_c2_undisturbed, format!("c₂ disturbed {} vs undisturbed {}", s.mean_c2_disturbed, s.mean_c2_undisturbed))?;
    check(
        s.preventive_share_disturbed < s.preventive_share_undisturbed,
        format!("preventive share disturbed {} vs undisturbed {}", s.preventive_share_disturbed, s.preventive_share_undisturbed),
    )?;
    Ok(format!(
        "gain {gain:.4} < {C9_GAMMA}, mean c₂ {:.4} (disturbed) > {:.4}, preventive share {:.3} < {:.3}",
        s.mean_c2_disturbed, s.mean_c2_undisturbed, s.preventive_share_disturbed, s.preventive_share_undisturbed
    ))
}

fn criterion_10() -> Outcome {
    let toy = toy_instance().map_err(|e| e.to_string())?;
    let template = toy.problem.template();
    let zero = || Mat::zeros(1, 1);
    let nodes = template
        .nodes()
        .iter()
        .map(|s| Subsystem::new(s.f().clone(), zero(), s.g2().clone(), zero(), s.h2().clone(), zero(), zero(), zero()))
        .collect::<posnet::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let net = SwitchedNetwork::new(
        nodes,
        template.mode_matrices(),
        template.couplings().map(|(e, g)| (e, g.clone())).collect(),
        template.generator().clone(),
    )
    .map_err(|e| e.to_string())?;
    check(net.nodes().iter().all(|s| s.disturbance_dim() == 1 && s.performance_dim() == 1), "disturbance channels missing")?;
    let options = DesignOptions { normalize: false, ..DesignOptions::default() };
    let problem = DesignProblem::new(net, toy.problem.decls().to_vec(), toy.problem.cost().clone(), Some(toy.problem.shift().deltas.clone()), options)
        .map_err(|e| e.to_string())?;
    let ia = problem.build_problem_ia(0.0).map_err(|e| e.to_string())?.gp;
    let iia = problem.build_problem_iia(1.0).map_err(|e| e.to_string())?.gp;
    let mut diffs = Vec::new();
    if ia.vars.names() != iia.vars.names() {
        diffs.push("variables".to_string());
    }
    if ia.objective != iia.objective {
        diffs.push("objective".to_string());
    }
    let rows = |gp: &GeometricProgram| -> Vec<(String, String)> {
        let mut r: Vec<(String, String)> = gp.inequality_labels.iter().cloned().zip(gp.inequalities.iter().map(|p| format!("{p:?}"))).collect();
        r.extend(gp.equality_labels.iter().cloned().zip(gp.equalities.iter().map(|m| format!("{m:?}"))));
        r.sort();
        r
    };
    let (a, b) = (rows(&ia), rows(&iia));
    for row in &a {
        if !b.contains(row) {
            diffs.push(format!("only in I-A: {}", row.0));
        }
    }
    for row in &b {
        if !a.contains(row) {
            diffs.push(format!("only in II-A: {}", row.0));
        }
    }
    check(diffs.is_empty(), format!("structural diff: {diffs:?}"))?;
    Ok(format!("{} constraints identical, structural diff empty", a.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("mean stability matches eigensolver and certificate", criterion_1),
        ("decay-rate shift law", criterion_2),
        ("L1-gain triple agreement", criterion_3),
        ("GP solver against grid oracle", criterion_4),
        ("toy stabilization design", criterion_5),
        ("budget round trips", criterion_6),
        ("moments against Monte Carlo", criterion_7),
        ("SIS case study, decay target", criterion_8),
        ("SIS case study, disturbance target", criterion_9),
        ("zero-disturbance reduction", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail} [{secs:.2} s]", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {detail} [{secs:.2} s]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

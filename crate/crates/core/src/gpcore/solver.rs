use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::logsumexp::{LocalEval, LogSumExp};
use super::presolve::{presolve, Reduced};
use super::program::GeometricProgram;
use crate::error::Result;

/// Log-objective below which a program is declared unbounded.
const UNBOUNDED_LOG_OBJECTIVE: f64 = -300.0;
/// Phase I optimum above which the constraints are declared inconsistent.
const PHASE1_INFEASIBLE: f64 = 1e-7;
/// Phase I stops as soon as every constraint holds with this log-margin.
const PHASE1_MARGIN: f64 = 1e-6;
const FRACTION_TO_BOUNDARY: f64 = 0.99;
const BASE_REGULARIZATION: f64 = 1e-9;
/// Both phases keep every log-variable in `[-LOG_BOX, LOG_BOX]`; an active box
/// side at the optimum means the original program has no attained minimum.
const LOG_BOX: f64 = 100.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation applied by callers to strict inequalities.
    pub eps_strict: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200, eps_strict: 1e-6 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpSolution {
    /// Indexed by variable id.
    pub values: Vec<f64>,
    pub objective_value: f64,
    pub status: GpStatus,
    pub kkt_residual: f64,
    /// Interior-point iterations over both phases.
    pub iterations: usize,
    pub phase1_iterations: usize,
    /// Free log-variables left after presolve.
    pub reduced_dim: usize,
}

/// Solves a GP by presolve, a phase I feasibility search and a primal-dual
/// interior-point method on the log-transformed program.
pub fn solve(gp: &GeometricProgram, cfg: &SolverConfig) -> Result<GpSolution> {
    gp.validate()?;
    let n = gp.vars.len();
    let red = match presolve(gp) {
        Ok(r) => r,
        Err(_) => {
            return Ok(GpSolution {
                values: vec![1.0; n],
                objective_value: f64::NAN,
                status: GpStatus::Infeasible,
                kkt_residual: f64::INFINITY,
                iterations: 0,
                phase1_iterations: 0,
                reduced_dim: 0,
            })
        }
    };
    let m = red.dim;
    let mut u = vec![0.0; m];
    let mut iterations = 0;
    let mut phase1_iterations = 0;
    let finish = |red: &Reduced, u: &[f64], status, kkt, iterations, phase1_iterations| -> Result<GpSolution> {
        let values = red.expand(u);
        let objective_value = gp.objective.evaluate(&values)?;
        Ok(GpSolution { values, objective_value, status, kkt_residual: kkt, iterations, phase1_iterations, reduced_dim: m })
    };

    let worst = |u: &[f64]| red.inequalities.iter().map(|f| f.value(u)).fold(f64::NEG_INFINITY, f64::max);
    if !red.inequalities.is_empty() && (worst(&u) > -PHASE1_MARGIN || !red.eq_rows.is_empty()) {
        let p1 = phase_one(&red);
        let mut x0 = u.clone();
        x0.push(worst(&u).max(0.0) + 1.0);
        let out = Ipm { epigraph: Some(m), ..Ipm::new(&p1, cfg) }.run(x0, |x, r_e| r_e <= cfg.tol && worst(&x[..m]) <= -PHASE1_MARGIN, false);
        iterations += out.iterations;
        phase1_iterations = out.iterations;
        u = out.x[..m].to_vec();
        let w = worst(&u);
        match out.stop {
            Stop::Early => {}
            Stop::Certified => return finish(&red, &u, GpStatus::Infeasible, out.kkt, iterations, phase1_iterations),
            Stop::Converged if w <= PHASE1_INFEASIBLE => {}
            Stop::Converged => return finish(&red, &u, GpStatus::Infeasible, out.kkt, iterations, phase1_iterations),
            _ if w > PHASE1_INFEASIBLE => return finish(&red, &u, GpStatus::MaxIter, out.kkt, iterations, phase1_iterations),
            _ => {}
        }
    }
    let mut inequalities = red.inequalities.clone();
    push_box(&mut inequalities, m);
    let p2 = Problem {
        dim: m,
        objective: red.objective.clone(),
        inequalities,
        eq_rows: red.eq_rows.clone(),
        eq_rhs: red.eq_rhs.clone(),
    };
    let remaining = Ipm { cfg, max_iter: cfg.max_iter.saturating_sub(iterations).max(1), problem: &p2, epigraph: None };
    let out = remaining.run(u, |_, _| false, true);
    iterations += out.iterations;
    let on_box = out.x.iter().any(|v| v.abs() > LOG_BOX - 1e-3);
    let status = match out.stop {
        Stop::Converged if on_box => GpStatus::Unbounded,
        Stop::Converged => GpStatus::Optimal,
        Stop::Unbounded => GpStatus::Unbounded,
        Stop::Early | Stop::MaxIter | Stop::Stalled | Stop::Certified => GpStatus::MaxIter,
    };
    finish(&red, &out.x, status, out.kkt, iterations, phase1_iterations)
}

/// Adds `-LOG_BOX ≤ u_j ≤ LOG_BOX` for the first `dim` variables.
fn push_box(inequalities: &mut Vec<LogSumExp>, dim: usize) {
    for j in 0..dim {
        inequalities.push(LogSumExp::new(vec![(-LOG_BOX, vec![(j, 1.0)])]));
        inequalities.push(LogSumExp::new(vec![(-LOG_BOX, vec![(j, -1.0)])]));
    }
}

/// Minimize `t` subject to `gᵢ(u) ≤ t`, `t ≥ −1` and the affine equalities.
fn phase_one(red: &Reduced) -> Problem {
    let t = red.dim;
    let mut inequalities: Vec<LogSumExp> = red
        .inequalities
        .iter()
        .map(|f| {
            let terms = (0..f.num_terms()).map(|k| {
                let (b, mut a) = f.term(k);
                a.push((t, -1.0));
                (b, a)
            });
            LogSumExp::new(terms.collect())
        })
        .collect();
    inequalities.push(LogSumExp::new(vec![(-1.0, vec![(t, -1.0)])]));
    push_box(&mut inequalities, t);
    Problem {
        dim: t + 1,
        objective: LogSumExp::new(vec![(0.0, vec![(t, 1.0)])]),
        inequalities,
        eq_rows: red.eq_rows.clone(),
        eq_rhs: red.eq_rhs.clone(),
    }
}

/// Weak-duality lower bound on the phase I optimum. Every log-variable lies in
/// the box, and a minimizer with `t* < t_k` satisfies `|t* - t_k| ≤ t_k + 1`.
fn phase1_lower_bound(pt: &Point, x: &[f64], s: &[f64], z: &[f64], nu: &[f64], t: usize) -> f64 {
    let mut lagrangian = pt.obj.value;
    for i in 0..z.len() {
        lagrangian += z[i] * (pt.r_p[i] - s[i]);
    }
    for (n, r) in nu.iter().zip(&pt.r_e) {
        lagrangian += n * r;
    }
    let spread: f64 = pt
        .r_d
        .iter()
        .enumerate()
        .map(|(j, r)| r.abs() * if j == t { x[t] + 1.0 } else { 2.0 * LOG_BOX })
        .sum();
    (lagrangian - spread).min(x[t])
}

struct Problem {
    dim: usize,
    objective: LogSumExp,
    inequalities: Vec<LogSumExp>,
    eq_rows: Vec<Vec<(usize, f64)>>,
    eq_rhs: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Stop {
    Converged,
    Early,
    Unbounded,
    MaxIter,
    Stalled,
    /// Phase I optimum proven positive.
    Certified,
}

struct IpmOutcome {
    x: Vec<f64>,
    stop: Stop,
    kkt: f64,
    iterations: usize,
}

struct Ipm<'a> {
    cfg: &'a SolverConfig,
    max_iter: usize,
    problem: &'a Problem,
    /// Index of the phase I epigraph variable, enabling infeasibility certificates.
    epigraph: Option<usize>,
}

/// Residuals and local derivatives at one iterate.
struct Point {
    obj: LocalEval,
    cons: Vec<LocalEval>,
    r_d: Vec<f64>,
    r_p: Vec<f64>,
    r_e: Vec<f64>,
}

struct Direction {
    dx: Vec<f64>,
    ds: Vec<f64>,
    dz: Vec<f64>,
    dnu: Vec<f64>,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter().zip(dv).filter(|(_, d)| **d < 0.0).map(|(x, d)| -x / d).fold(1.0, f64::min)
}

impl<'a> Ipm<'a> {
    fn new(problem: &'a Problem, cfg: &'a SolverConfig) -> Self {
        Self { cfg, max_iter: cfg.max_iter, problem, epigraph: None }
    }

    fn evaluate(&self, x: &[f64], z: &[f64], nu: &[f64], s: &[f64], hessian: bool) -> Point {
        let p = self.problem;
        let obj = p.objective.eval_local(x, hessian);
        let cons: Vec<LocalEval> = p.inequalities.iter().map(|f| f.eval_local(x, hessian)).collect();
        let mut r_d = vec![0.0; p.dim];
        for (j, g) in p.objective.support().iter().zip(&obj.grad) {
            r_d[*j] += g;
        }
        for ((f, e), zi) in p.inequalities.iter().zip(&cons).zip(z) {
            for (j, g) in f.support().iter().zip(&e.grad) {
                r_d[*j] += zi * g;
            }
        }
        let mut r_e = Vec::with_capacity(p.eq_rows.len());
        for ((row, h), n) in p.eq_rows.iter().zip(&p.eq_rhs).zip(nu) {
            let mut v = -h;
            for (j, a) in row {
                r_d[*j] += n * a;
                v += a * x[*j];
            }
            r_e.push(v);
        }
        let r_p = cons.iter().zip(s).map(|(e, si)| e.value + si).collect();
        Point { obj, cons, r_d, r_p, r_e }
    }

    fn merit(pt: &Point, s: &[f64], z: &[f64], target: f64) -> f64 {
        let mut sum = 0.0;
        for v in pt.r_d.iter().chain(&pt.r_p).chain(&pt.r_e) {
            sum += v * v;
        }
        for (si, zi) in s.iter().zip(z) {
            let c = si * zi - target;
            sum += c * c;
        }
        sum.sqrt()
    }

    fn reduced_hessian(&self, pt: &Point, s: &[f64], z: &[f64], reg: f64) -> DMatrix<f64> {
        let p = self.problem;
        let mut h = DMatrix::<f64>::zeros(p.dim, p.dim);
        let add_local = |h: &mut DMatrix<f64>, support: &[usize], e: &LocalEval, scale: f64, outer: f64| {
            let k = support.len();
            for a in 0..k {
                for b in 0..k {
                    let mut v = outer * e.grad[a] * e.grad[b];
                    if !e.hess.is_empty() {
                        v += scale * e.hess[a * k + b];
                    }
                    if v != 0.0 {
                        h[(support[a], support[b])] += v;
                    }
                }
            }
        };
        add_local(&mut h, p.objective.support(), &pt.obj, 1.0, 0.0);
        for ((f, e), (si, zi)) in p.inequalities.iter().zip(&pt.cons).zip(s.iter().zip(z)) {
            add_local(&mut h, f.support(), e, *zi, zi / si);
        }
        for i in 0..p.dim {
            h[(i, i)] += reg;
        }
        h
    }

    fn jac_mul(&self, pt: &Point, dx: &[f64]) -> Vec<f64> {
        self.problem
            .inequalities
            .iter()
            .zip(&pt.cons)
            .map(|(f, e)| f.support().iter().zip(&e.grad).map(|(j, g)| g * dx[*j]).sum())
            .collect()
    }

    #[allow(clippy::too_many_arguments)]
    fn direction(
        &self,
        chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
        schur: Option<&(DMatrix<f64>, nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>)>,
        pt: &Point,
        s: &[f64],
        z: &[f64],
        r_c: &[f64],
    ) -> Direction {
        let p = self.problem;
        let mut rhs = DVector::from_iterator(p.dim, pt.r_d.iter().map(|v| -v));
        for (i, (f, e)) in p.inequalities.iter().zip(&pt.cons).enumerate() {
            let w = (z[i] * pt.r_p[i] - r_c[i]) / s[i];
            for (j, g) in f.support().iter().zip(&e.grad) {
                rhs[*j] -= g * w;
            }
        }
        let mut dnu = Vec::new();
        let dx = match schur {
            None => chol.solve(&rhs),
            Some((hinv_gt, lu)) => {
                // G Hr⁻¹ Gᵀ dν = G Hr⁻¹ rhs + r_e
                let base = chol.solve(&rhs);
                let mut b = DVector::zeros(p.eq_rows.len());
                for (k, row) in p.eq_rows.iter().enumerate() {
                    b[k] = row.iter().map(|(j, a)| a * base[*j]).sum::<f64>() + pt.r_e[k];
                }
                let nu = lu.solve(&b).unwrap_or_else(|| DVector::zeros(p.eq_rows.len()));
                dnu = nu.iter().copied().collect();
                base - hinv_gt * nu
            }
        };
        let dx: Vec<f64> = dx.iter().copied().collect();
        let jdx = self.jac_mul(pt, &dx);
        let ds: Vec<f64> = pt.r_p.iter().zip(&jdx).map(|(r, j)| -r - j).collect();
        let dz: Vec<f64> = (0..s.len()).map(|i| (-r_c[i] - z[i] * ds[i]) / s[i]).collect();
        if dnu.is_empty() {
            dnu = vec![0.0; p.eq_rows.len()];
        }
        Direction { dx, ds, dz, dnu }
    }

    fn run(&self, mut x: Vec<f64>, early: impl Fn(&[f64], f64) -> bool, detect_unbounded: bool) -> IpmOutcome {
        let p = self.problem;
        let nc = p.inequalities.len();
        let ne = p.eq_rows.len();
        let mut s: Vec<f64> = p.inequalities.iter().map(|f| (-f.value(&x)).max(1.0)).collect();
        let mut z = vec![1.0; nc];
        let mut nu = vec![0.0; ne];
        let mut kkt = f64::INFINITY;
        for it in 0..=self.max_iter {
            let pt = self.evaluate(&x, &z, &nu, &s, true);
            let gap: f64 = s.iter().zip(&z).map(|(a, b)| a * b).sum();
            kkt = inf_norm(&pt.r_d).max(inf_norm(&pt.r_p)).max(inf_norm(&pt.r_e)).max(gap);
            if !kkt.is_finite() {
                return IpmOutcome { x, stop: Stop::Stalled, kkt, iterations: it };
            }
            if kkt <= self.cfg.tol {
                return IpmOutcome { x, stop: Stop::Converged, kkt, iterations: it };
            }
            if early(&x, inf_norm(&pt.r_e)) {
                return IpmOutcome { x, stop: Stop::Early, kkt, iterations: it };
            }
            if let Some(t) = self.epigraph {
                if phase1_lower_bound(&pt, &x, &s, &z, &nu, t) > PHASE1_INFEASIBLE {
                    return IpmOutcome { x, stop: Stop::Certified, kkt, iterations: it };
                }
            }
            if detect_unbounded && pt.obj.value < UNBOUNDED_LOG_OBJECTIVE {
                return IpmOutcome { x, stop: Stop::Unbounded, kkt, iterations: it };
            }
            if it == self.max_iter {
                break;
            }
            let mu = if nc > 0 { gap / nc as f64 } else { 0.0 };

            let mut reg = BASE_REGULARIZATION;
            let chol = loop {
                let h = self.reduced_hessian(&pt, &s, &z, reg);
                if let Some(c) = h.cholesky() {
                    break Some(c);
                }
                reg *= 100.0;
                if reg > 1e3 {
                    break None;
                }
            };
            let Some(chol) = chol else {
                return IpmOutcome { x, stop: Stop::Stalled, kkt, iterations: it };
            };
            let schur = (ne > 0).then(|| {
                let mut gt = DMatrix::<f64>::zeros(p.dim, ne);
                for (k, row) in p.eq_rows.iter().enumerate() {
                    for (j, a) in row {
                        gt[(*j, k)] = *a;
                    }
                }
                let hinv_gt = chol.solve(&gt);
                let mut sm = DMatrix::<f64>::zeros(ne, ne);
                for (k, row) in p.eq_rows.iter().enumerate() {
                    for l in 0..ne {
                        sm[(k, l)] = row.iter().map(|(j, a)| a * hinv_gt[(*j, l)]).sum();
                    }
                }
                (hinv_gt, sm.lu())
            });

            // predictor
            let r_aff: Vec<f64> = s.iter().zip(&z).map(|(a, b)| a * b).collect();
            let aff = self.direction(&chol, schur.as_ref(), &pt, &s, &z, &r_aff);
            let sigma = if nc > 0 {
                let a = max_step(&s, &aff.ds).min(max_step(&z, &aff.dz));
                let mu_aff: f64 = (0..nc).map(|i| (s[i] + a * aff.ds[i]) * (z[i] + a * aff.dz[i])).sum::<f64>() / nc as f64;
                (mu_aff / mu).powi(3).clamp(0.0, 1.0)
            } else {
                0.0
            };
            // corrector
            let target = sigma * mu;
            let r_c: Vec<f64> = (0..nc).map(|i| s[i] * z[i] + aff.ds[i] * aff.dz[i] - target).collect();
            let d = self.direction(&chol, schur.as_ref(), &pt, &s, &z, &r_c);

            let mut alpha = (FRACTION_TO_BOUNDARY * max_step(&s, &d.ds).min(max_step(&z, &d.dz))).min(1.0);
            let base = Self::merit(&pt, &s, &z, target);
            let mut accepted = false;
            for _ in 0..60 {
                let xn: Vec<f64> = x.iter().zip(&d.dx).map(|(a, b)| a + alpha * b).collect();
                let sn: Vec<f64> = s.iter().zip(&d.ds).map(|(a, b)| a + alpha * b).collect();
                let zn: Vec<f64> = z.iter().zip(&d.dz).map(|(a, b)| a + alpha * b).collect();
                let nn: Vec<f64> = nu.iter().zip(&d.dnu).map(|(a, b)| a + alpha * b).collect();
                let trial = self.evaluate(&xn, &zn, &nn, &sn, false);
                let m = Self::merit(&trial, &sn, &zn, target);
                if m.is_finite() && m <= (1.0 - 0.01 * alpha) * base {
                    x = xn;
                    s = sn;
                    z = zn;
                    nu = nn;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return IpmOutcome { x, stop: Stop::Stalled, kkt, iterations: it + 1 };
            }
        }
        IpmOutcome { x, stop: Stop::MaxIter, kkt, iterations: self.max_iter }
    }
}

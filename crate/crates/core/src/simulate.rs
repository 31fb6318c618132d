//! Two independent validators for jump systems: exact propagation of the first
//! moments `E[ξ ⊗ x]`, and Monte Carlo sampling of switched trajectories.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mjls::{decay_rate, lift, Lifted, Mjls};
use crate::posmat::{expm, Lu, Mat};

/// Disturbance signal `w(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InputSignal {
    Zero,
    /// `values[k]` holds on `[times[k], times[k+1])` and the last value afterwards;
    /// the signal is zero before `times[0]`.
    Table { times: Vec<f64>, values: Vec<Vec<f64>> },
    /// `tau · e_channel` on `[0, 1/tau)`, zero afterwards.
    Pulse { channel: usize, tau: f64 },
}

impl InputSignal {
    fn validate(&self, inputs: usize) -> Result<()> {
        match self {
            InputSignal::Zero => Ok(()),
            InputSignal::Table { times, values } => {
                if times.len() != values.len() || times.is_empty() {
                    return Err(Error::InvalidConfig("input table needs one value row per time".into()));
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) || !times[0].is_finite() {
                    return Err(Error::InvalidConfig("input table times must increase strictly".into()));
                }
                for row in values {
                    if row.len() != inputs {
                        return Err(Error::DimensionMismatch(format!("input row of length {} for {inputs} channels", row.len())));
                    }
                    if row.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                        return Err(Error::InvalidConfig("input values must be finite and nonnegative".into()));
                    }
                }
                Ok(())
            }
            InputSignal::Pulse { channel, tau } => {
                if *channel >= inputs {
                    return Err(Error::DimensionMismatch(format!("pulse channel {channel} of {inputs}")));
                }
                if !(*tau > 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidConfig(format!("pulse height {tau} must be positive")));
                }
                Ok(())
            }
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        match self {
            InputSignal::Zero => Vec::new(),
            InputSignal::Table { times, .. } => times.clone(),
            InputSignal::Pulse { tau, .. } => vec![1.0 / tau],
        }
    }

    /// Value on the segment that starts at `t`.
    fn value_at(&self, t: f64, inputs: usize) -> Vec<f64> {
        match self {
            InputSignal::Zero => vec![0.0; inputs],
            InputSignal::Table { times, values } => match times.iter().rposition(|s| *s <= t) {
                Some(k) => values[k].clone(),
                None => vec![0.0; inputs],
            },
            InputSignal::Pulse { channel, tau } => {
                let mut w = vec![0.0; inputs];
                if t < 1.0 / tau {
                    w[*channel] = *tau;
                }
                w
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub step: f64,
    pub replications: usize,
    pub master_seed: u64,
    pub input: InputSignal,
}

impl SimConfig {
    pub fn new(horizon: f64, step: f64) -> Self {
        Self { horizon, step, replications: 1, master_seed: 0, input: InputSignal::Zero }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!("step {} must be positive", self.step)));
        }
        if !(self.horizon >= self.step && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!("horizon {} must be at least the step", self.horizon)));
        }
        if self.replications == 0 {
            return Err(Error::InvalidConfig("at least one replication is required".into()));
        }
        Ok(())
    }

    /// Output grid `0, h, 2h, …` ending exactly at the horizon.
    pub fn grid(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0u64;
        loop {
            let t = k as f64 * self.step;
            if t >= self.horizon - 1e-9 * self.step {
                break;
            }
            out.push(t);
            k += 1;
        }
        out.push(self.horizon);
        out
    }
}

/// Segment boundaries: grid points plus input breakpoints inside the horizon.
fn segment_points(grid: &[f64], input: &InputSignal) -> Vec<(f64, bool)> {
    let horizon = *grid.last().expect("nonempty grid");
    let mut pts: Vec<(f64, bool)> = grid.iter().map(|t| (*t, true)).collect();
    for b in input.breakpoints() {
        if b > 0.0 && b < horizon && !grid.iter().any(|t| (t - b).abs() <= 1e-12 * horizon.max(1.0)) {
            pts.push((b, false));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts
}

fn bits(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|x| x.to_bits()).collect()
}

fn kron_vec(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Deterministic solution of the first-moment equations on a time grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentFlow {
    pub times: Vec<f64>,
    /// `E[ξ ⊗ x]`, length `M n`.
    pub lifted: Vec<Vec<f64>>,
    /// `E[x]`, the sum of the mode blocks of `E[ξ ⊗ x]`.
    pub state: Vec<Vec<f64>>,
    /// `E[ξ]`.
    pub mode_probs: Vec<Vec<f64>>,
    /// `E[ξ ⊗ z]`, length `M r`.
    pub output: Vec<Vec<f64>>,
    /// `∫ E[ξ ⊗ x]` over the whole horizon.
    pub state_integral: Vec<f64>,
    /// `∫ E[ξ ⊗ z]` over the whole horizon.
    pub output_integral: Vec<f64>,
    /// `∫ E[ξ] ⊗ w` over the whole horizon.
    pub input_integral: Vec<f64>,
}

impl MomentFlow {
    /// `E[‖x(t)‖₁]` at each grid point.
    pub fn mean_norm(&self) -> Vec<f64> {
        self.state.iter().map(|x| x.iter().sum()).collect()
    }
}

struct MomentPropagator<'a> {
    lifted: &'a Lifted,
    m: &'a Mjls,
    pi_t: Mat,
    free_cache: HashMap<u64, Mat>,
    mode_cache: HashMap<u64, Mat>,
    forced_cache: HashMap<(u64, Vec<u64>), Mat>,
    lu: Option<Option<Lu>>,
}

struct Step {
    x: Vec<f64>,
    p: Vec<f64>,
    ix: Vec<f64>,
    ip: Vec<f64>,
}

impl<'a> MomentPropagator<'a> {
    fn new(m: &'a Mjls, lifted: &'a Lifted) -> Self {
        Self {
            lifted,
            m,
            pi_t: m.generator().rates().transpose(),
            free_cache: HashMap::new(),
            mode_cache: HashMap::new(),
            forced_cache: HashMap::new(),
            lu: None,
        }
    }

    /// `[[Πᵀ, 0], [I, 0]]` exponential: mode probabilities and their integral.
    fn modes(&mut self, tau: f64, p: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mm = p.len();
        let pi_t = &self.pi_t;
        let e = self.mode_cache.entry(tau.to_bits()).or_insert_with(|| {
            let mut g = Mat::zeros(2 * mm, 2 * mm);
            g.set_block(0, 0, &pi_t.scale(tau));
            g.set_block(mm, 0, &Mat::identity(mm).scale(tau));
            expm(&g)
        });
        let mut y = p.to_vec();
        y.extend(std::iter::repeat(0.0).take(mm));
        let out = e.mul_vec(&y);
        (out[..mm].to_vec(), out[mm..].to_vec())
    }

    fn step(&mut self, tau: f64, w: &[f64], x: &[f64], p: &[f64]) -> Step {
        let a = self.lifted.a.inner();
        let free = w.iter().all(|v| *v == 0.0);
        if free {
            if self.lu.is_none() {
                self.lu = Some(Lu::factor(a).ok());
            }
            if let Some(Some(lu)) = &self.lu {
                let e = self.free_cache.entry(tau.to_bits()).or_insert_with(|| expm(&a.scale(tau)));
                let x_new = e.mul_vec(x);
                let diff: Vec<f64> = x_new.iter().zip(x).map(|(a, b)| a - b).collect();
                let ix = lu.solve(&diff);
                let (p_new, ip) = self.modes(tau, p);
                return Step { x: x_new, p: p_new, ix, ip };
            }
        }
        let mn = a.rows();
        let mm = p.len();
        let dim = 2 * (mn + mm);
        let m = self.m;
        let e = self.forced_cache.entry((tau.to_bits(), bits(w))).or_insert_with(|| {
            let mut g = Mat::zeros(dim, dim);
            g.set_block(0, 0, a);
            let n = m.state_dim();
            for i in 0..mm {
                let bw = m.b(i).mul_vec(w);
                for (r, v) in bw.iter().enumerate() {
                    g[(i * n + r, mn + i)] = *v;
                }
            }
            g.set_block(mn, mn, &m.generator().rates().transpose());
            g.set_block(mn + mm, 0, &Mat::identity(mn));
            g.set_block(2 * mn + mm, mn, &Mat::identity(mm));
            expm(&g.scale(tau))
        });
        let mut y = Vec::with_capacity(dim);
        y.extend_from_slice(x);
        y.extend_from_slice(p);
        y.extend(std::iter::repeat(0.0).take(mn + mm));
        let out = e.mul_vec(&y);
        Step {
            x: out[..mn].to_vec(),
            p: out[mn..mn + mm].to_vec(),
            ix: out[mn + mm..2 * mn + mm].to_vec(),
            ip: out[2 * mn + mm..].to_vec(),
        }
    }
}

fn check_initial(m: &Mjls, x0: &[f64], sigma0: usize) -> Result<()> {
    if x0.len() != m.state_dim() {
        return Err(Error::DimensionMismatch(format!("initial state of length {} for n = {}", x0.len(), m.state_dim())));
    }
    if x0.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(Error::InvalidConfig("initial state must be finite and nonnegative".into()));
    }
    if sigma0 >= m.modes() {
        return Err(Error::InvalidConfig(format!("initial mode {sigma0} out of range")));
    }
    Ok(())
}

/// Integrates `d/dt E[ξ⊗x] = 𝒜 E[ξ⊗x] + ℬ(E[ξ]⊗w)` from `e_{σ₀} ⊗ x₀`, exactly on
/// each constant-input segment.
pub fn moment_flow(m: &Mjls, x0: &[f64], sigma0: usize, cfg: &SimConfig) -> Result<MomentFlow> {
    cfg.validate()?;
    check_initial(m, x0, sigma0)?;
    cfg.input.validate(m.input_dim())?;
    let lifted = lift(m);
    let n = m.state_dim();
    let modes = m.modes();
    let s = m.input_dim();
    let r = m.output_dim();
    let grid = cfg.grid();
    let pts = segment_points(&grid, &cfg.input);

    let mut x = vec![0.0; modes * n];
    x[sigma0 * n..(sigma0 + 1) * n].copy_from_slice(x0);
    let mut p = vec![0.0; modes];
    p[sigma0] = 1.0;

    let mut prop = MomentPropagator::new(m, &lifted);
    let mut out = MomentFlow {
        times: Vec::with_capacity(grid.len()),
        lifted: Vec::with_capacity(grid.len()),
        state: Vec::with_capacity(grid.len()),
        mode_probs: Vec::with_capacity(grid.len()),
        output: Vec::with_capacity(grid.len()),
        state_integral: vec![0.0; modes * n],
        output_integral: vec![0.0; modes * r],
        input_integral: vec![0.0; modes * s],
    };
    let record = |out: &mut MomentFlow, t: f64, x: &[f64], p: &[f64]| {
        let w = cfg.input.value_at(t, s);
        let mut z = lifted.c.mul_vec(x);
        add_into(&mut z, &lifted.d.mul_vec(&kron_vec(p, &w)));
        let mut state = vec![0.0; n];
        for block in x.chunks(n.max(1)).take(modes) {
            add_into(&mut state, block);
        }
        out.times.push(t);
        out.lifted.push(x.to_vec());
        out.state.push(if n == 0 { Vec::new() } else { state });
        out.mode_probs.push(p.to_vec());
        out.output.push(z);
    };
    record(&mut out, 0.0, &x, &p);
    for win in pts.windows(2) {
        let (t0, t1) = (win[0].0, win[1].0);
        let w = cfg.input.value_at(t0, s);
        let st = prop.step(t1 - t0, &w, &x, &p);
        let iw = kron_vec(&st.ip, &w);
        add_into(&mut out.state_integral, &st.ix);
        add_into(&mut out.input_integral, &iw);
        let mut iz = lifted.c.mul_vec(&st.ix);
        add_into(&mut iz, &lifted.d.mul_vec(&iw));
        add_into(&mut out.output_integral, &iz);
        x = st.x;
        p = st.p;
        if win[1].1 {
            record(&mut out, t1, &x, &p);
        }
    }
    Ok(out)
}

/// Largest response `‖E[z]‖_{L1}` to a unit-area pulse `τχ_[0,1/τ) e_j` over initial
/// modes and input channels. The tail after the pulse is integrated in closed form,
/// so the value is a lower bound on the L1-gain that tightens as `τ` grows.
pub fn empirical_gain_lower_bound(m: &Mjls, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!("pulse height {tau} must be positive")));
    }
    decay_rate(m)?;
    let lifted = lift(m);
    let lu = Lu::factor(lifted.a.inner())?;
    let c_sum = lifted.c.column_sums();
    let n = m.state_dim();
    let mut prop = MomentPropagator::new(m, &lifted);
    let mut best: f64 = 0.0;
    for i in 0..m.modes() {
        for j in 0..m.input_dim() {
            let mut w = vec![0.0; m.input_dim()];
            w[j] = tau;
            let mut p = vec![0.0; m.modes()];
            p[i] = 1.0;
            let x = vec![0.0; m.modes() * n];
            let st = prop.step(1.0 / tau, &w, &x, &p);
            let iw = kron_vec(&st.ip, &w);
            let mut iz = lifted.c.mul_vec(&st.ix);
            add_into(&mut iz, &lifted.d.mul_vec(&iw));
            let tail = lu.solve(&st.x);
            let total: f64 = iz.iter().sum::<f64>() - c_sum.iter().zip(&tail).map(|(c, t)| c * t).sum::<f64>();
            best = best.max(total);
        }
    }
    Ok(best)
}

/// One sampled switching path on the output grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub states: Vec<Vec<f64>>,
    pub modes: Vec<usize>,
    /// `(time, new mode)` for every jump.
    pub jumps: Vec<(f64, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub times: Vec<f64>,
    pub replications: usize,
    /// Sample mean of `‖x(t)‖₁`.
    pub mean_norm: Vec<f64>,
    /// Standard error of the mean of `‖x(t)‖₁`.
    pub stderr_norm: Vec<f64>,
    /// Sample mean of `ξ(t) ⊗ x(t)`.
    pub mean_lifted: Vec<Vec<f64>>,
    pub stderr_lifted: Vec<Vec<f64>>,
    /// Sample mean of `x(t)`.
    pub mean_state: Vec<Vec<f64>>,
    /// The first replication.
    pub sample: SamplePath,
}

fn propagate_mode(m: &Mjls, mode: usize, tau: f64, w: &[f64], x: &[f64], cache: &mut HashMap<(usize, u64), Mat>, cached: bool) -> Vec<f64> {
    let n = m.state_dim();
    if w.iter().all(|v| *v == 0.0) {
        if cached {
            let e = cache.entry((mode, tau.to_bits())).or_insert_with(|| expm(&m.a(mode).scale(tau)));
            return e.mul_vec(x);
        }
        return expm(&m.a(mode).scale(tau)).mul_vec(x);
    }
    let mut g = Mat::zeros(n + 1, n + 1);
    g.set_block(0, 0, m.a(mode));
    for (r, v) in m.b(mode).mul_vec(w).iter().enumerate() {
        g[(r, n)] = *v;
    }
    let mut y = x.to_vec();
    y.push(1.0);
    let mut out = expm(&g.scale(tau)).mul_vec(&y);
    out.truncate(n);
    out
}

fn sample_path(m: &Mjls, x0: &[f64], sigma0: usize, cfg: &SimConfig, pts: &[(f64, bool)], rep: u64) -> SamplePath {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    rng.set_stream(rep);
    let gen = m.generator();
    let s = m.input_dim();
    let step = cfg.step;
    let mut cache = HashMap::new();
    let mut mode = sigma0;
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut path = SamplePath { states: vec![x.clone()], modes: vec![mode], jumps: Vec::new() };
    let holding = |mode: usize, rng: &mut ChaCha8Rng| {
        let rate = -gen.rate(mode, mode);
        if rate > 0.0 {
            Exp::new(rate).expect("positive rate").sample(rng)
        } else {
            f64::INFINITY
        }
    };
    let mut next_jump = holding(mode, &mut rng);
    let mut k = 1;
    while k < pts.len() {
        let (target, on_grid) = pts[k];
        let end = target.min(next_jump);
        let tau = end - t;
        if tau > 0.0 {
            let w = cfg.input.value_at(t, s);
            let full = (tau - step).abs() <= 1e-12 * step;
            x = propagate_mode(m, mode, if full { step } else { tau }, &w, &x, &mut cache, full);
        }
        t = end;
        if next_jump < target {
            let mut u = rng.gen::<f64>() * -gen.rate(mode, mode);
            let mut next = mode;
            for j in (0..gen.modes()).filter(|j| *j != mode && gen.rate(mode, *j) > 0.0) {
                next = j;
                if u < gen.rate(mode, j) {
                    break;
                }
                u -= gen.rate(mode, j);
            }
            mode = next;
            path.jumps.push((t, mode));
            next_jump = t + holding(mode, &mut rng);
            continue;
        }
        if on_grid {
            path.states.push(x.clone());
            path.modes.push(mode);
        }
        k += 1;
    }
    path
}

/// Order-preserving pairwise summation of equally long vectors.
fn pairwise_sum(items: &[Vec<f64>]) -> Vec<f64> {
    match items.len() {
        0 => Vec::new(),
        1 => items[0].clone(),
        len => {
            let (lo, hi) = items.split_at(len / 2);
            let mut a = pairwise_sum(lo);
            add_into(&mut a, &pairwise_sum(hi));
            a
        }
    }
}

/// Monte Carlo estimate of the moments. Replication `r` draws from the stream `r`
/// of a ChaCha generator seeded with `master_seed`, so results do not depend on
/// the thread count.
pub fn monte_carlo(m: &Mjls, x0: &[f64], sigma0: usize, cfg: &SimConfig) -> Result<MonteCarlo> {
    cfg.validate()?;
    check_initial(m, x0, sigma0)?;
    cfg.input.validate(m.input_dim())?;
    let grid = cfg.grid();
    let pts = segment_points(&grid, &cfg.input);
    let n = m.state_dim();
    let modes = m.modes();
    let g = grid.len();
    let width = 1 + modes * n + n;
    let paths: Vec<SamplePath> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|rep| sample_path(m, x0, sigma0, cfg, &pts, rep))
        .collect();
    let flat: Vec<Vec<f64>> = paths
        .par_iter()
        .map(|path| {
            let mut f = vec![0.0; g * width];
            for (t, (x, mode)) in path.states.iter().zip(&path.modes).enumerate() {
                let row = &mut f[t * width..(t + 1) * width];
                row[0] = x.iter().sum();
                row[1 + mode * n..1 + (mode + 1) * n].copy_from_slice(x);
                row[1 + modes * n..].copy_from_slice(x);
            }
            f
        })
        .collect();
    let reps = cfg.replications as f64;
    let mean: Vec<f64> = pairwise_sum(&flat).iter().map(|v| v / reps).collect();
    let deviations: Vec<Vec<f64>> = flat
        .par_iter()
        .map(|f| f.iter().zip(&mean).map(|(v, mu)| (v - mu) * (v - mu)).collect())
        .collect();
    let stderr: Vec<f64> = if cfg.replications < 2 {
        vec![0.0; g * width]
    } else {
        pairwise_sum(&deviations).iter().map(|ss| (ss / (reps - 1.0) / reps).sqrt()).collect()
    };
    let rows = |v: &[f64], a: usize, b: usize| -> Vec<Vec<f64>> { (0..g).map(|t| v[t * width + a..t * width + b].to_vec()).collect() };
    Ok(MonteCarlo {
        times: grid,
        replications: cfg.replications,
        mean_norm: (0..g).map(|t| mean[t * width]).collect(),
        stderr_norm: (0..g).map(|t| stderr[t * width]).collect(),
        mean_lifted: rows(&mean, 1, 1 + modes * n),
        stderr_lifted: rows(&stderr, 1, 1 + modes * n),
        mean_state: rows(&mean, 1 + modes * n, width),
        sample: paths.into_iter().next().expect("at least one replication"),
    })
}

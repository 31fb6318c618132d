//! Networked SIS case study: a Household/Workplace population whose contact graph
//! follows a daily schedule, and the resource allocation problems built on it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::{CostModel, DesignOptions, DesignProblem, DesignSolution, EntryAddress, ProblemKind, VarDecl, Certificate};
use crate::error::{Error, Result};
use crate::gpcore::{GpStatus, Monomial, SolverConfig, VarId};
use crate::mjls::MarkovGenerator;
use crate::network::{edge_union, NodeBlock, Subsystem, SwitchedNetwork};
use crate::posmat::Mat;
use crate::simulate::{moment_flow, monte_carlo, SimConfig};

/// Graph used in each schedule position: home, commute, work, commute.
pub const GRAPH_OF_MODE: [usize; 4] = [0, 1, 2, 1];

const STREAM_GRAPHS: u64 = 1;
const STREAM_INITIAL: u64 = 2;
const STREAM_DISTURBANCE: u64 = 3;

/// Agents partitioned into Households, each with exactly one Worker (its first
/// member), and Workers partitioned into Workplaces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub agents: usize,
    pub households: Vec<Vec<usize>>,
    pub workplaces: Vec<Vec<usize>>,
    pub seed: u64,
}

impl Population {
    /// Household sizes start at 2 and grow by uniformly placing the remaining
    /// agents (at most 5 per Household). Workplaces start at 2 Workers and the
    /// rest are spread multinomially with random weights.
    pub fn generate(agents: usize, households: usize, workplaces: usize, seed: u64) -> Result<Self> {
        if households == 0 || agents < 2 * households || agents > 5 * households {
            return Err(Error::InvalidConfig(format!(
                "{agents} agents cannot form {households} households of 2 to 5 members"
            )));
        }
        if workplaces == 0 || workplaces > households {
            return Err(Error::InvalidConfig(format!("{workplaces} workplaces for {households} workers")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sizes = vec![2usize; households];
        for _ in 0..agents - 2 * households {
            let open: Vec<usize> = (0..households).filter(|h| sizes[*h] < 5).collect();
            sizes[*open.choose(&mut rng).expect("capacity checked")] += 1;
        }
        let mut next = 0;
        let house: Vec<Vec<usize>> = sizes
            .iter()
            .map(|s| {
                let members = (next..next + s).collect();
                next += s;
                members
            })
            .collect();

        let mut workers: Vec<usize> = house.iter().map(|h| h[0]).collect();
        workers.shuffle(&mut rng);
        let base = if households >= 2 * workplaces { 2 } else { 1 };
        let mut wsizes = vec![base; workplaces];
        let weights: Vec<f64> = (0..workplaces).map(|_| rng.gen::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        for _ in 0..households - base * workplaces {
            let mut u = rng.gen::<f64>() * total;
            let mut pick = workplaces - 1;
            for (i, w) in weights.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            wsizes[pick] += 1;
        }
        let mut start = 0;
        let work = wsizes
            .iter()
            .map(|s| {
                let mut members = workers[start..start + s].to_vec();
                members.sort_unstable();
                start += s;
                members
            })
            .collect();
        Self::from_parts(agents, house, work, seed)
    }

    pub fn from_parts(agents: usize, households: Vec<Vec<usize>>, workplaces: Vec<Vec<usize>>, seed: u64) -> Result<Self> {
        let mut seen = vec![false; agents];
        for h in &households {
            if h.is_empty() {
                return Err(Error::InvalidConfig("empty household".into()));
            }
            for &a in h {
                if a >= agents || std::mem::replace(&mut seen[a], true) {
                    return Err(Error::InvalidConfig(format!("agent {a} missing or in two households")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig("households do not cover every agent".into()));
        }
        let mut workers: Vec<usize> = households.iter().map(|h| h[0]).collect();
        workers.sort_unstable();
        let mut placed: Vec<usize> = workplaces.iter().flatten().copied().collect();
        placed.sort_unstable();
        if placed != workers {
            return Err(Error::InvalidConfig("workplaces must partition the workers".into()));
        }
        Ok(Self { agents, households, workplaces, seed })
    }

    pub fn is_worker(&self, k: usize) -> bool {
        self.households.iter().any(|h| h[0] == k)
    }

    pub fn workers(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.households.iter().map(|h| h[0]).collect();
        w.sort_unstable();
        w
    }

    pub fn household_of(&self, k: usize) -> usize {
        self.households.iter().position(|h| h.contains(&k)).expect("partition")
    }

    pub fn workplace_of(&self, k: usize) -> Option<usize> {
        self.workplaces.iter().position(|w| w.contains(&k))
    }

    /// Workplace size for Workers, Household size otherwise.
    pub fn group_size(&self, k: usize) -> usize {
        match self.workplace_of(k) {
            Some(w) => self.workplaces[w].len(),
            None => self.households[self.household_of(k)].len(),
        }
    }
}

fn clique(m: &mut Mat, members: &[usize]) {
    for &a in members {
        for &b in members {
            if a != b {
                m[(a, b)] = 1.0;
            }
        }
    }
}

/// Home graph `K₁`, commute graph `K₂` and work graph `K₃`.
pub fn generate_graphs(pop: &Population, p: f64) -> Result<[Mat; 3]> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidConfig(format!("edge probability {p} outside [0, 1]")));
    }
    let n = pop.agents;
    let mut rng = ChaCha8Rng::seed_from_u64(pop.seed);
    rng.set_stream(STREAM_GRAPHS);
    let mut k1 = Mat::zeros(n, n);
    let mut k2 = Mat::zeros(n, n);
    let mut k3 = Mat::zeros(n, n);
    for h in &pop.households {
        clique(&mut k1, h);
        clique(&mut k2, &h[1..]);
        clique(&mut k3, &h[1..]);
    }
    let workers = pop.workers();
    for (i, &a) in workers.iter().enumerate() {
        for &b in &workers[i + 1..] {
            if rng.gen_bool(p) {
                k2[(a, b)] = 1.0;
                k2[(b, a)] = 1.0;
            }
        }
    }
    for w in &pop.workplaces {
        clique(&mut k3, w);
    }
    Ok([k1, k2, k3])
}

/// Generator of the daily schedule: 13 h home, 1 h commute, 9 h work, 1 h commute.
pub fn schedule_generator() -> MarkovGenerator {
    let rates = Mat::from_rows(&[
        [-1.0 / 13.0, 1.0 / 13.0, 0.0, 0.0],
        [0.0, -1.0, 1.0, 0.0],
        [0.0, 0.0, -1.0 / 9.0, 1.0 / 9.0],
        [1.0, 0.0, 0.0, -1.0],
    ])
    .expect("static matrix");
    MarkovGenerator::new(rates).expect("valid generator")
}

/// How the recovery bounds are read.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RecoveryConvention {
    /// Bounds are bounds on `F_k = -δ_k`, so the recovery rate is `δ_k ∈ [-hi, -lo]`.
    #[default]
    Magnitude,
    /// Bounds are taken as bounds on `δ_k` itself.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SisParams {
    pub beta_bounds: Vec<(f64, f64)>,
    /// Recovery bounds as stated, interpreted through `convention`.
    pub delta_bounds: Vec<(f64, f64)>,
    pub epsilon: Vec<f64>,
    pub convention: RecoveryConvention,
}

impl SisParams {
    pub fn uniform(n: usize, beta: (f64, f64), delta: (f64, f64), convention: RecoveryConvention) -> Self {
        Self { beta_bounds: vec![beta; n], delta_bounds: vec![delta; n], epsilon: vec![0.0; n], convention }
    }

    /// `β ∈ [0.01, 0.05]`, stated recovery bounds `(-0.5, -0.1)`, no disturbance.
    pub fn case_study(n: usize, convention: RecoveryConvention) -> Self {
        Self::uniform(n, (0.01, 0.05), (-0.5, -0.1), convention)
    }

    /// Interval of the recovery rate `δ_k`.
    pub fn recovery_bounds(&self, k: usize) -> (f64, f64) {
        let (lo, hi) = self.delta_bounds[k];
        match self.convention {
            RecoveryConvention::Magnitude => (-hi, -lo),
            RecoveryConvention::Literal => (lo, hi),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.beta_bounds.len() != n || self.delta_bounds.len() != n || self.epsilon.len() != n {
            return Err(Error::InvalidConfig(format!("parameters must list {n} nodes")));
        }
        for k in 0..n {
            let (bl, bh) = self.beta_bounds[k];
            if !(bl > 0.0 && bl < bh && bh.is_finite()) {
                return Err(Error::InvalidConfig(format!("node {k}: need 0 < β lower < β upper, got ({bl}, {bh})")));
            }
            let (dl, dh) = self.recovery_bounds(k);
            if !(dl < dh && dh < 1.0 && dl.is_finite()) {
                return Err(Error::InvalidConfig(format!("node {k}: need δ lower < δ upper < 1, got ({dl}, {dh})")));
            }
            if !(self.epsilon[k] >= 0.0 && self.epsilon[k].is_finite()) {
                return Err(Error::InvalidConfig(format!("node {k}: disturbance gain must be nonnegative")));
            }
        }
        Ok(())
    }

    fn c1_den(&self, k: usize) -> f64 {
        let (lo, hi) = self.beta_bounds[k];
        1.0 / lo - 1.0 / hi
    }

    fn c2_den(&self, k: usize) -> f64 {
        let (lo, hi) = self.recovery_bounds(k);
        1.0 / (1.0 - hi) - 1.0 / (1.0 - lo)
    }

    /// Preventive cost `c₁(β)`, in `[0, 1]` on the box.
    pub fn c1(&self, k: usize, beta: f64) -> f64 {
        (1.0 / beta - 1.0 / self.beta_bounds[k].1) / self.c1_den(k)
    }

    /// Corrective cost `c₂(δ)`, in `[0, 1]` on the box.
    pub fn c2(&self, k: usize, delta: f64) -> f64 {
        (1.0 / (1.0 - delta) - 1.0 / (1.0 - self.recovery_bounds(k).0)) / self.c2_den(k)
    }
}

/// A compiled SIS allocation instance.
#[derive(Clone, Debug)]
pub struct SisDesign {
    pub problem: DesignProblem,
    pub params: SisParams,
    pub in_degree: Vec<usize>,
    /// Constant removed from the costs to make them posynomial; the true total
    /// cost is the program's cost minus this offset.
    pub cost_offset: f64,
}

/// Per-node recovered rates and spends.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Allocation {
    pub beta: Vec<f64>,
    pub delta: Vec<f64>,
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
}

impl SisDesign {
    pub fn nodes(&self) -> usize {
        self.in_degree.len()
    }

    /// Rates of a designed network and the spend they imply.
    pub fn allocation(&self, net: &SwitchedNetwork) -> Allocation {
        let n = self.nodes();
        let mut beta = vec![0.0; n];
        for (k, b) in beta.iter_mut().enumerate() {
            if let Some((_, g)) = net.couplings().find(|((row, _), _)| *row == k) {
                *b = g[(0, 0)];
            }
        }
        let delta: Vec<f64> = net.nodes().iter().map(|s| -s.f()[(0, 0)]).collect();
        let c1 = (0..n).map(|k| if self.in_degree[k] > 0 { self.params.c1(k, beta[k]) } else { 0.0 }).collect();
        let c2 = (0..n).map(|k| self.params.c2(k, delta[k])).collect();
        Allocation { beta, delta, c1, c2 }
    }

    /// Total cost with the dropped constants restored.
    pub fn true_cost(&self, sol: &DesignSolution) -> f64 {
        sol.total_cost - self.cost_offset
    }
}

/// Scalar SIS nodes `ẋ_k = -δ_k x_k + β_k Σ_ℓ K_kℓ x_ℓ (+ ε_k w_k)` with the shift
/// `Δ_k = 1`, one tied `β_k` per coupling row, and the normalized costs.
pub fn build_sis_design(
    params: &SisParams,
    modes: Vec<Mat>,
    generator: MarkovGenerator,
    disturbance: bool,
    options: DesignOptions,
) -> Result<SisDesign> {
    let n = modes.first().map_or(0, Mat::rows);
    if n == 0 {
        return Err(Error::InvalidConfig("empty contact graph".into()));
    }
    params.validate(n)?;
    let edges = edge_union(&modes);
    let mut in_degree = vec![0usize; n];
    for (k, _) in &edges {
        in_degree[*k] += 1;
    }
    let scalar = |x: f64| Mat::filled(1, 1, x);
    let mut nodes = Vec::with_capacity(n);
    for k in 0..n {
        let f = scalar(-params.recovery_bounds(k).1);
        let node = if disturbance {
            Subsystem::new(f, scalar(params.epsilon[k]), scalar(1.0), scalar(1.0), scalar(1.0), scalar(0.0), scalar(0.0), scalar(0.0))?
        } else {
            Subsystem::stabilization(f, scalar(1.0), scalar(1.0))?
        };
        nodes.push(node);
    }
    let couplings = edges.iter().map(|e| (*e, scalar(params.beta_bounds[e.0].1))).collect();
    let template = SwitchedNetwork::new(nodes, modes, couplings, generator)?;

    let mut decls = Vec::with_capacity(n + edges.len());
    let mut cost = CostModel::default();
    for k in 0..n {
        let (lo, hi) = params.recovery_bounds(k);
        decls.push(VarDecl::free(format!("F[{k}]"), EntryAddress::Node { node: k, block: NodeBlock::F, row: 0, col: 0 }, Some(-hi), Some(-lo)));
        cost.node_costs.push((k, Monomial::new(1.0 / params.c2_den(k), [(VarId(k), -1.0)])?.into()));
    }
    let mut row_started = vec![false; n];
    for (e, &(k, l)) in edges.iter().enumerate() {
        let target = EntryAddress::Coupling { edge: (k, l), row: 0, col: 0 };
        let decl = if std::mem::replace(&mut row_started[k], true) {
            VarDecl::free(format!("Gamma[{k},{l}]"), target, None, None)
        } else {
            let (lo, hi) = params.beta_bounds[k];
            VarDecl::free(format!("beta[{k}]"), target, Some(lo), Some(hi))
        };
        decls.push(decl.tied(format!("beta[{k}]")));
        let weight = 1.0 / (params.c1_den(k) * in_degree[k] as f64);
        cost.edge_costs.push(((k, l), Monomial::new(weight, [(VarId(n + e), -1.0)])?.into()));
    }
    let cost_offset = (0..n)
        .map(|k| {
            let restore_c2 = 1.0 / (1.0 - params.recovery_bounds(k).0) / params.c2_den(k);
            let restore_c1 = if in_degree[k] > 0 { 1.0 / params.beta_bounds[k].1 / params.c1_den(k) } else { 0.0 };
            restore_c2 + restore_c1
        })
        .sum();
    let problem = DesignProblem::new(template, decls, cost, Some(vec![vec![1.0]; n]), options)?;
    Ok(SisDesign { problem, params: params.clone(), in_degree, cost_offset })
}

/// Five agents switching between a ring and a star, used as a small regression instance.
pub fn toy_instance() -> Result<SisDesign> {
    let mut ring = Mat::zeros(5, 5);
    for k in 0..5 {
        ring[(k, (k + 1) % 5)] = 1.0;
        ring[((k + 1) % 5, k)] = 1.0;
    }
    let mut star = Mat::zeros(5, 5);
    for k in 1..5 {
        star[(0, k)] = 1.0;
        star[(k, 0)] = 1.0;
    }
    let params = SisParams::uniform(5, (0.02, 0.2), (-0.6, -0.1), RecoveryConvention::Magnitude);
    build_sis_design(&params, vec![ring, star], MarkovGenerator::two_state(0.5, 1.0)?, false, DesignOptions::default())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "kebab-case")]
pub enum CaseTarget {
    /// Decay rate greater than the value.
    Stabilize(f64),
    /// L1-gain below the value, with a fair coin deciding which agents are disturbed.
    Attenuate(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySettings {
    /// Time at which the simulation starts, in hours.
    pub t0: f64,
    pub horizon: f64,
    pub step: f64,
    /// Schedule position at `t0`.
    pub sigma0: usize,
}

impl Default for TrajectorySettings {
    fn default() -> Self {
        Self { t0: 8.0, horizon: 240.0, step: 1.0, sigma0: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyConfig {
    pub agents: usize,
    pub households: usize,
    pub workplaces: usize,
    pub p: f64,
    pub seed: u64,
    pub target: CaseTarget,
    pub convention: RecoveryConvention,
    pub solver: SolverConfig,
    pub options: DesignOptions,
    pub trajectories: Option<TrajectorySettings>,
}

impl CaseStudyConfig {
    pub fn new(target: CaseTarget, seed: u64) -> Self {
        Self {
            agents: 247,
            households: 71,
            workplaces: 10,
            p: 0.3,
            seed,
            target,
            convention: RecoveryConvention::Magnitude,
            solver: SolverConfig::default(),
            options: DesignOptions::default(),
            trajectories: Some(TrajectorySettings::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: usize,
    pub worker: bool,
    pub group_size: usize,
    pub disturbed: bool,
    pub beta: f64,
    pub delta: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStats {
    pub mean_worker_investment: f64,
    pub mean_nonworker_investment: f64,
    /// Spearman correlation between Worker investment and Workplace size.
    pub worker_size_rank_correlation: f64,
    pub mean_c1_disturbed: f64,
    pub mean_c1_undisturbed: f64,
    pub mean_c2_disturbed: f64,
    pub mean_c2_undisturbed: f64,
    /// Preventive share `Σc₁ / Σ(c₁ + c₂)` of disturbed agents.
    pub preventive_share_disturbed: f64,
    pub preventive_share_undisturbed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: GpStatus,
    pub iterations: usize,
    pub phase1_iterations: usize,
    pub kkt_residual: f64,
    pub reduced_dim: usize,
    pub variables: usize,
    pub inequalities: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseTrajectories {
    pub times: Vec<f64>,
    pub expected_workers: Vec<f64>,
    pub expected_nonworkers: Vec<f64>,
    pub path_workers: Vec<f64>,
    pub path_nonworkers: Vec<f64>,
    /// Single switching realization, one row per time.
    pub path_states: Vec<Vec<f64>>,
    pub path_modes: Vec<usize>,
    pub workers: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseStudyReport {
    pub config: CaseStudyConfig,
    pub total_cost: f64,
    pub program_cost: f64,
    pub achieved_metric: f64,
    pub target: f64,
    pub certificate: Certificate,
    pub certificate_from_program: bool,
    pub solver: SolverStats,
    pub agents: Vec<AgentRecord>,
    pub stats: CaseStats,
    pub trajectories: Option<CaseTrajectories>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn preventive_share<'a>(agents: impl Iterator<Item = &'a AgentRecord>) -> f64 {
    let (c1, total) = agents.fold((0.0, 0.0), |(p, t), a| (p + a.c1, t + a.c1 + a.c2));
    c1 / total
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|a, b| xs[*a].total_cmp(&xs[*b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation with average ranks for ties.
pub fn rank_correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (average_ranks(xs), average_ranks(ys));
    let (mx, my) = (mean(rx.iter().copied()), mean(ry.iter().copied()));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

/// Builds the population and graphs, designs the allocation, verifies it, and
/// simulates the designed network.
pub fn run_case_study(cfg: &CaseStudyConfig) -> Result<CaseStudyReport> {
    let pop = Population::generate(cfg.agents, cfg.households, cfg.workplaces, cfg.seed)?;
    let graphs = generate_graphs(&pop, cfg.p)?;
    let modes: Vec<Mat> = GRAPH_OF_MODE.iter().map(|g| graphs[*g].clone()).collect();
    let mut params = SisParams::case_study(pop.agents, cfg.convention);
    let (kind, disturbance) = match cfg.target {
        CaseTarget::Stabilize(lambda) => (ProblemKind::Ia { lambda }, false),
        CaseTarget::Attenuate(gamma) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(STREAM_DISTURBANCE);
            params.epsilon = (0..pop.agents).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
            (ProblemKind::Iia { gamma }, true)
        }
    };
    let design = build_sis_design(&params, modes, schedule_generator(), disturbance, cfg.options.clone())?;
    let compiled = design.problem.build(kind)?;
    let gp_solution = crate::gpcore::solve(&compiled.gp, &cfg.solver)?;
    let solver = SolverStats {
        status: gp_solution.status,
        iterations: gp_solution.iterations,
        phase1_iterations: gp_solution.phase1_iterations,
        kkt_residual: gp_solution.kkt_residual,
        reduced_dim: gp_solution.reduced_dim,
        variables: compiled.gp.num_vars(),
        inequalities: compiled.gp.inequalities.len(),
    };
    let sol = design.problem.recover(&compiled, gp_solution)?;
    let alloc = design.allocation(&sol.network);
    let agents: Vec<AgentRecord> = (0..pop.agents)
        .map(|k| AgentRecord {
            id: k,
            worker: pop.is_worker(k),
            group_size: pop.group_size(k),
            disturbed: params.epsilon[k] > 0.0,
            beta: alloc.beta[k],
            delta: alloc.delta[k],
            c1: alloc.c1[k],
            c2: alloc.c2[k],
        })
        .collect();
    let invest = |a: &AgentRecord| a.c1 + a.c2;
    let workers: Vec<&AgentRecord> = agents.iter().filter(|a| a.worker).collect();
    let stats = CaseStats {
        mean_worker_investment: mean(workers.iter().map(|a| invest(a))),
        mean_nonworker_investment: mean(agents.iter().filter(|a| !a.worker).map(invest)),
        worker_size_rank_correlation: rank_correlation(
            &workers.iter().map(|a| invest(a)).collect::<Vec<_>>(),
            &workers.iter().map(|a| a.group_size as f64).collect::<Vec<_>>(),
        ),
        mean_c1_disturbed: mean(agents.iter().filter(|a| a.disturbed).map(|a| a.c1)),
        mean_c1_undisturbed: mean(agents.iter().filter(|a| !a.disturbed).map(|a| a.c1)),
        mean_c2_disturbed: mean(agents.iter().filter(|a| a.disturbed).map(|a| a.c2)),
        mean_c2_undisturbed: mean(agents.iter().filter(|a| !a.disturbed).map(|a| a.c2)),
        preventive_share_disturbed: preventive_share(agents.iter().filter(|a| a.disturbed)),
        preventive_share_undisturbed: preventive_share(agents.iter().filter(|a| !a.disturbed)),
    };
    let trajectories = match &cfg.trajectories {
        Some(t) => Some(simulate_case(&sol, &pop, t, cfg.seed)?),
        None => None,
    };
    Ok(CaseStudyReport {
        config: cfg.clone(),
        total_cost: design.true_cost(&sol),
        program_cost: sol.total_cost,
        achieved_metric: sol.achieved_metric,
        target: sol.target,
        certificate: sol.certificate,
        certificate_from_program: sol.certificate_from_program,
        solver,
        agents,
        stats,
        trajectories,
    })
}

fn simulate_case(sol: &DesignSolution, pop: &Population, t: &TrajectorySettings, seed: u64) -> Result<CaseTrajectories> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STREAM_INITIAL);
    let x0: Vec<f64> = (0..pop.agents).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let mut sim = SimConfig::new(t.horizon, t.step);
    sim.master_seed = seed;
    let flow = moment_flow(&sol.system, &x0, t.sigma0, &sim)?;
    let mc = monte_carlo(&sol.system, &x0, t.sigma0, &sim)?;
    let workers = pop.workers();
    let is_worker: Vec<bool> = (0..pop.agents).map(|k| workers.binary_search(&k).is_ok()).collect();
    let split = |x: &[f64], w: bool| mean(x.iter().zip(&is_worker).filter(|(_, iw)| **iw == w).map(|(v, _)| *v));
    Ok(CaseTrajectories {
        times: flow.times.iter().map(|s| t.t0 + s).collect(),
        expected_workers: flow.state.iter().map(|x| split(x, true)).collect(),
        expected_nonworkers: flow.state.iter().map(|x| split(x, false)).collect(),
        path_workers: mc.sample.states.iter().map(|x| split(x, true)).collect(),
        path_nonworkers: mc.sample.states.iter().map(|x| split(x, false)).collect(),
        path_states: mc.sample.states,
        path_modes: mc.sample.modes,
        workers,
    })
}

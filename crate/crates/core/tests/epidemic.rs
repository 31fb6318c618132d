use posnet::design::{DesignOptions, ProblemKind};
use posnet::epidemic::{
    build_sis_design, generate_graphs, rank_correlation, run_case_study, schedule_generator, toy_instance, CaseStudyConfig, CaseTarget,
    Population, RecoveryConvention, SisParams, GRAPH_OF_MODE,
};
use posnet::gpcore::SolverConfig;
use posnet::mjls::decay_rate;
use posnet::posmat::Mat;
use posnet::Error;
use proptest::prelude::*;

fn components(m: &Mat) -> Vec<Vec<usize>> {
    let n = m.rows();
    let mut label = vec![usize::MAX; n];
    let mut out = Vec::new();
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        let mut stack = vec![s];
        let mut comp = Vec::new();
        label[s] = out.len();
        while let Some(a) = stack.pop() {
            comp.push(a);
            for b in 0..n {
                if m[(a, b)] != 0.0 && label[b] == usize::MAX {
                    label[b] = out.len();
                    stack.push(b);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

fn is_clique(m: &Mat, members: &[usize]) -> bool {
    members.iter().all(|&a| members.iter().all(|&b| a == b || m[(a, b)] == 1.0))
}

fn small_config(target: CaseTarget, seed: u64) -> CaseStudyConfig {
    let mut cfg = CaseStudyConfig::new(target, seed);
    cfg.agents = 40;
    cfg.households = 12;
    cfg.workplaces = 3;
    cfg.trajectories = None;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn population_is_a_partition(seed in any::<u64>(), households in 5usize..30, extra in 0usize..3, w in 1usize..5) {
        let agents = 2 * households + extra * households;
        let pop = Population::generate(agents, households, w.min(households), seed).unwrap();
        prop_assert_eq!(pop.households.len(), households);
        prop_assert!(pop.households.iter().all(|h| (2..=5).contains(&h.len())));
        let mut all: Vec<usize> = pop.households.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..agents).collect::<Vec<_>>());
        let mut placed: Vec<usize> = pop.workplaces.iter().flatten().copied().collect();
        placed.sort_unstable();
        prop_assert_eq!(placed, pop.workers());
        prop_assert!(pop.workplaces.iter().all(|x| !x.is_empty()));
    }

    #[test]
    fn graph_invariants(seed in any::<u64>(), p in 0.0..1.0f64) {
        let pop = Population::generate(60, 20, 4, seed).unwrap();
        let graphs = generate_graphs(&pop, p).unwrap();
        for g in &graphs {
            for a in 0..60 {
                prop_assert_eq!(g[(a, a)], 0.0);
                for b in 0..60 {
                    prop_assert!(g[(a, b)] == 0.0 || g[(a, b)] == 1.0);
                    prop_assert_eq!(g[(a, b)], g[(b, a)]);
                }
            }
        }
        let [home, commute, work] = &graphs;
        let mut want: Vec<Vec<usize>> = pop.households.clone();
        want.sort();
        prop_assert_eq!(components(home), want);

        let comps = components(work);
        prop_assert_eq!(comps.len(), pop.households.len() + pop.workplaces.len());
        prop_assert!(comps.iter().all(|c| is_clique(work, c)));

        let workers = pop.workers();
        for a in 0..60 {
            for b in 0..60 {
                if commute[(a, b)] == 1.0 {
                    let both_workers = workers.contains(&a) && workers.contains(&b);
                    let same_home = pop.household_of(a) == pop.household_of(b) && !workers.contains(&a) && !workers.contains(&b);
                    prop_assert!(both_workers || same_home);
                }
            }
        }
    }

    #[test]
    fn rank_correlation_is_bounded_and_symmetric(xs in prop::collection::vec(-5.0..5.0f64, 3..20)) {
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let r = rank_correlation(&xs, &ys);
        if r.is_finite() {
            prop_assert!(r.abs() <= 1.0 + 1e-12);
            prop_assert!((r - rank_correlation(&ys, &xs)).abs() <= 1e-12);
        }
        let mono: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
        let same = rank_correlation(&xs, &mono);
        if same.is_finite() {
            prop_assert!((same - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn schedule_maps_modes_to_graphs() {
    assert_eq!(GRAPH_OF_MODE, [0, 1, 2, 1]);
    let g = schedule_generator();
    for i in 0..4 {
        let row: f64 = (0..4).map(|j| g.rate(i, j)).sum();
        assert!(row.abs() < 1e-15);
        assert!(g.rate(i, (i + 1) % 4) > 0.0);
    }
}

#[test]
fn population_rejects_impossible_sizes() {
    assert!(Population::generate(10, 6, 2, 0).is_err());
    assert!(Population::generate(31, 6, 2, 0).is_err());
    assert!(Population::generate(20, 6, 7, 0).is_err());
}

/// The program's cost less the dropped constants equals `Σ c₁ + c₂` evaluated
/// from the recovered rates.
#[test]
fn dropped_constants_restore_true_cost() {
    let toy = toy_instance().unwrap();
    let sol = toy.problem.solve(ProblemKind::Ia { lambda: 0.1 }, &SolverConfig::default()).unwrap();
    let alloc = toy.allocation(&sol.network);
    let direct: f64 = alloc.c1.iter().chain(&alloc.c2).sum();
    assert!((toy.true_cost(&sol) - direct).abs() <= 1e-9);
    assert!(alloc.beta.iter().all(|b| (0.02 - 1e-9..=0.2 + 1e-9).contains(b)));
    assert!(alloc.delta.iter().all(|d| (0.1 - 1e-9..=0.6 + 1e-9).contains(d)));
    assert!(alloc.c1.iter().chain(&alloc.c2).all(|c| (-1e-9..=1.0 + 1e-9).contains(c)));
}

#[test]
fn small_case_study_is_reproducible() {
    let cfg = small_config(CaseTarget::Stabilize(0.01), 4);
    let a = run_case_study(&cfg).unwrap();
    let b = run_case_study(&cfg).unwrap();
    assert_eq!(a.agents, b.agents);
    assert_eq!(a.total_cost, b.total_cost);
    assert_eq!(a.certificate, b.certificate);
    assert!(a.stats.mean_c1_disturbed.is_nan());
    assert!(a.achieved_metric >= 0.01 - 1e-6);
    let direct: f64 = a.agents.iter().map(|r| r.c1 + r.c2).sum();
    assert!((a.total_cost - direct).abs() <= 1e-8);
}

#[test]
fn small_case_study_with_trajectories() {
    let mut cfg = small_config(CaseTarget::Attenuate(20.0), 6);
    cfg.trajectories = Some(Default::default());
    let report = run_case_study(&cfg).unwrap();
    assert!(report.achieved_metric < 20.0);
    let t = report.trajectories.unwrap();
    assert_eq!(t.times.first(), Some(&8.0));
    assert_eq!(t.times.len(), t.expected_workers.len());
    assert_eq!(t.times.len(), t.path_workers.len());
    assert!(t.expected_workers.iter().chain(&t.expected_nonworkers).all(|x| (0.0..=1.0).contains(x)));
}

#[test]
fn literal_recovery_bounds_cannot_stabilize() {
    let mut cfg = small_config(CaseTarget::Stabilize(0.01), 4);
    cfg.convention = RecoveryConvention::Literal;
    assert!(matches!(run_case_study(&cfg), Err(Error::Infeasible(_))));
}

#[test]
fn unreachable_rate_is_infeasible() {
    let cfg = small_config(CaseTarget::Stabilize(1e3), 4);
    assert!(matches!(run_case_study(&cfg), Err(Error::Infeasible(_))));
}

#[test]
fn widest_recovery_is_the_cheapest_stable_corner() {
    let pop = Population::generate(40, 12, 3, 2).unwrap();
    let graphs = generate_graphs(&pop, 0.3).unwrap();
    let modes: Vec<Mat> = GRAPH_OF_MODE.iter().map(|g| graphs[*g].clone()).collect();
    let params = SisParams::case_study(40, RecoveryConvention::Magnitude);
    let design = build_sis_design(&params, modes, schedule_generator(), false, DesignOptions::default()).unwrap();
    let sol = design.problem.solve(ProblemKind::Ia { lambda: 0.01 }, &SolverConfig::default()).unwrap();
    let best: Vec<f64> = design.problem.variables().names().iter().map(|n| if n.starts_with('F') { 0.5 } else { 0.01 }).collect();
    let strongest = design.problem.network_at(&best).unwrap();
    assert!(strongest.nodes().iter().all(|s| s.f()[(0, 0)] == -0.5));
    let rate = decay_rate(&posnet::network::assemble(&strongest).unwrap()).unwrap();
    assert!(rate >= sol.achieved_metric);
}

mod common;

use std::collections::BTreeMap;

use common::*;
use posnet::design::{CostModel, DesignOptions, DesignProblem, EntryAddress, ProblemKind, VarDecl};
use posnet::epidemic::{build_sis_design, toy_instance, RecoveryConvention, SisParams};
use posnet::gpcore::{Monomial, SolverConfig, VarId};
use posnet::mjls::{decay_rate, l1_gain, MarkovGenerator, StabilityCertificate};
use posnet::network::{assemble, NodeBlock, Subsystem, SwitchedNetwork};
use posnet::posmat::Mat;
use posnet::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Small random template: nodes of dimension 1 or 2, two modes, free diagonal
/// and off-diagonal entries of `F`, free coupling gains, fixed disturbance blocks.
fn random_design(rng: &mut ChaCha8Rng) -> DesignProblem {
    let nodes = rng.gen_range(2..4);
    let dims: Vec<usize> = (0..nodes).map(|_| rng.gen_range(1..3)).collect();
    let mut subsystems = Vec::new();
    for &n in &dims {
        let f = random_metzler(rng, n);
        let g1 = random_mat(rng, n, 1, 1.0);
        let g2 = random_mat(rng, n, 1, 1.0);
        let h1 = random_mat(rng, 1, n, 1.0);
        let h2 = random_mat(rng, 1, n, 1.0);
        let j = |rng: &mut ChaCha8Rng| Mat::filled(1, 1, rng.gen_range(0.0..0.3));
        subsystems.push(Subsystem::new(f, g1, g2, h1, h2, j(rng), j(rng), j(rng)).unwrap());
    }
    let modes: Vec<Mat> = (0..2)
        .map(|_| {
            let mut k = Mat::zeros(nodes, nodes);
            for a in 0..nodes {
                k[(a, (a + 1) % nodes)] = 1.0;
                for b in 0..nodes {
                    if a != b && rng.gen_bool(0.3) {
                        k[(a, b)] = rng.gen_range(0.5..1.5);
                    }
                }
            }
            k
        })
        .collect();
    let mut edges = std::collections::BTreeSet::new();
    for k in &modes {
        for a in 0..nodes {
            for b in 0..nodes {
                if k[(a, b)] != 0.0 {
                    edges.insert((a, b));
                }
            }
        }
    }
    let couplings: BTreeMap<_, _> = edges.iter().map(|e| (*e, Mat::filled(1, 1, 0.5))).collect();
    let gen = random_generator(rng, 2);
    let template = SwitchedNetwork::new(subsystems, modes, couplings, gen).unwrap();

    let mut decls = Vec::new();
    let mut cost = CostModel::default();
    for (k, &n) in dims.iter().enumerate() {
        for j in 0..n {
            let id = VarId(decls.len());
            decls.push(VarDecl::free(format!("F{k}[{j}]"), EntryAddress::Node { node: k, block: NodeBlock::F, row: j, col: j }, Some(-3.0), Some(-0.2)));
            cost.node_costs.push((k, Monomial::new(1.0, [(id, -1.0)]).unwrap().into()));
        }
        if n == 2 {
            decls.push(VarDecl::free(format!("F{k}[0,1]"), EntryAddress::Node { node: k, block: NodeBlock::F, row: 0, col: 1 }, Some(0.01), Some(1.0)));
        }
    }
    for e in &edges {
        if rng.gen_bool(0.6) {
            let id = VarId(decls.len());
            decls.push(VarDecl::free(format!("g{}{}", e.0, e.1), EntryAddress::Coupling { edge: *e, row: 0, col: 0 }, Some(0.01), Some(2.0)));
            cost.edge_costs.push((*e, Monomial::new(0.1, [(id, -1.0)]).unwrap().into()));
        }
    }
    DesignProblem::new(template, decls, cost, None, DesignOptions::default()).unwrap()
}

fn lookup(labels: &[String], name: &str) -> Option<usize> {
    labels.iter().position(|l| l == name)
}

/// Checks every generated stability and gain row against dense arithmetic on
/// the reassembled network: `v_iᵀ(A_i + (π_ii + δ + λ)I) + Σ_{j≠i} π_ij v_jᵀ (+ 𝟙ᵀC_i)`
/// over `(1 − ε) δ v_i`, and `v_iᵀB_i + 𝟙ᵀD_i` over `(1 − ε) γ`.
fn check_rows(problem: &DesignProblem, kind: ProblemKind, rng: &mut ChaCha8Rng) {
    let compiled = problem.build(kind).unwrap();
    let gp = &compiled.gp;
    let values: Vec<f64> = (0..gp.num_vars()).map(|_| rng.gen_range(0.2..2.0)).collect();
    let sys = assemble(&problem.network_at(&values).unwrap()).unwrap();
    let eps = problem.options().eps_strict;
    let delta = problem.shift().delta_scalar;
    let (rate, with_output) = match kind {
        ProblemKind::Ia { lambda } => (lambda, false),
        ProblemKind::Ib { .. } => (values[compiled.aux.unwrap().0], false),
        _ => (0.0, true),
    };
    let v: Vec<Vec<f64>> = compiled.v.iter().map(|r| r.iter().map(|id| values[id.0]).collect()).collect();
    let gen = sys.generator();
    let mut stab_rows = 0;
    for i in 0..sys.modes() {
        let a = sys.a(i).shift_diag(gen.rate(i, i) + delta + rate).unwrap();
        let mut row = a.vec_mul(&v[i]);
        for (j, vj) in v.iter().enumerate() {
            if j != i {
                for (r, x) in row.iter_mut().zip(vj) {
                    *r += gen.rate(i, j) * x;
                }
            }
        }
        if with_output {
            for (r, c) in row.iter_mut().zip(sys.c(i).column_sums()) {
                *r += c;
            }
        }
        for (c, num) in row.iter().enumerate() {
            let expected = num / ((1.0 - eps) * delta * v[i][c]);
            match lookup(&gp.inequality_labels, &format!("stab[{i}][0,{c}]")) {
                Some(k) => {
                    stab_rows += 1;
                    let got = gp.inequalities[k].evaluate(&values).unwrap();
                    assert!(rel_err(got, expected) <= 1e-11, "stab[{i}][{c}]: {got} vs {expected}");
                }
                None => assert!(num.abs() <= 1e-14),
            }
        }
        if !with_output {
            continue;
        }
        let gamma = match kind {
            ProblemKind::Iia { gamma } => gamma,
            _ => values[compiled.aux.unwrap().0],
        };
        let vb = sys.b(i).vec_mul(&v[i]);
        for (j, (x, d)) in vb.iter().zip(sys.d(i).column_sums()).enumerate() {
            let expected = (x + d) / ((1.0 - eps) * gamma);
            match lookup(&gp.inequality_labels, &format!("gain[{i}][0,{j}]")) {
                Some(k) => assert!(rel_err(gp.inequalities[k].evaluate(&values).unwrap(), expected) <= 1e-11),
                None => assert!(x + d <= 1e-14),
            }
        }
    }
    assert!(stab_rows > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn generated_rows_match_dense_arithmetic(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_design(&mut rng);
        check_rows(&problem, ProblemKind::Ia { lambda: 0.3 }, &mut rng);
        check_rows(&problem, ProblemKind::Ib { budget: 5.0 }, &mut rng);
        check_rows(&problem, ProblemKind::Iia { gamma: 4.0 }, &mut rng);
        check_rows(&problem, ProblemKind::Iib { budget: 5.0 }, &mut rng);
    }

    /// Every declared value inside its bounds gives nonnegative off-diagonals
    /// once shifted, and `P_i` has a nonnegative diagonal.
    #[test]
    fn shift_keeps_lifted_matrices_nonnegative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problem = random_design(&mut rng);
        let shift = problem.shift();
        for p in &shift.p {
            prop_assert!(p.iter().all(|x| *x >= 0.0));
        }
        let gen = problem.template().generator();
        let worst_pi = (0..gen.modes()).map(|i| -gen.rate(i, i)).fold(0.0, f64::max);
        let worst_delta = shift.stacked().into_iter().fold(0.0, f64::max);
        prop_assert!((shift.delta_scalar - worst_pi - worst_delta).abs() <= 1e-12);
        for (k, node) in problem.template().nodes().iter().enumerate() {
            for j in 0..node.state_dim() {
                let addr = EntryAddress::Node { node: k, block: NodeBlock::F, row: j, col: j };
                let free = problem.decls().iter().any(|d| d.target == addr);
                prop_assert!(free || node.f()[(j, j)] + shift.deltas[k][j] >= -1e-12);
            }
        }
    }
}

#[test]
fn random_designs_solve_and_verify() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = SolverConfig::default();
    let mut solved = 0;
    for _ in 0..10 {
        let problem = random_design(&mut rng);
        match problem.solve(ProblemKind::Ia { lambda: 0.2 }, &cfg) {
            Ok(sol) => {
                solved += 1;
                assert!(decay_rate(&sol.system).unwrap() >= 0.2 - 1e-5);
                assert!(sol.gp_solution.kkt_residual <= 1e-8);
            }
            Err(Error::Infeasible(_)) => {}
            Err(e) => panic!("unexpected {e}"),
        }
        match problem.solve(ProblemKind::Iia { gamma: 50.0 }, &cfg) {
            Ok(sol) => assert!(l1_gain(&sol.system).unwrap() < 50.0 + 1e-5),
            Err(Error::Infeasible(_)) => {}
            Err(e) => panic!("unexpected {e}"),
        }
    }
    assert!(solved > 0);
}

#[test]
fn toy_cost_increases_with_rate() {
    let toy = toy_instance().unwrap();
    let cfg = SolverConfig::default();
    let mut last = 0.0;
    for lambda in [0.0, 0.05, 0.1, 0.15, 0.2, 0.25] {
        let sol = toy.problem.solve(ProblemKind::Ia { lambda }, &cfg).unwrap();
        assert!(sol.total_cost >= last - 1e-6, "cost fell at {lambda}");
        assert!(sol.achieved_metric >= lambda - 1e-5);
        last = sol.total_cost;
    }
    assert!(matches!(toy.problem.solve(ProblemKind::Ia { lambda: 5.0 }, &cfg), Err(Error::Infeasible(_))));
}

#[test]
fn gain_budget_round_trip() {
    let mut params = SisParams::uniform(5, (0.02, 0.2), (-0.6, -0.1), RecoveryConvention::Magnitude);
    params.epsilon = vec![1.0, 0.0, 1.0, 0.0, 0.5];
    let toy = toy_instance().unwrap();
    let modes = toy.problem.template().mode_matrices();
    let sis = build_sis_design(&params, modes, MarkovGenerator::two_state(0.5, 1.0).unwrap(), true, DesignOptions::default()).unwrap();
    let cfg = SolverConfig::default();
    let a = sis.problem.solve(ProblemKind::Iia { gamma: 10.0 }, &cfg).unwrap();
    assert!(l1_gain(&a.system).unwrap() < 10.0);
    let b = sis.problem.solve(ProblemKind::Iib { budget: a.total_cost }, &cfg).unwrap();
    assert!(b.achieved_metric <= 10.0 * (1.0 + 1e-4));
    assert!(b.total_cost <= a.total_cost * (1.0 + 1e-6));
}

/// With costs only on coupling gains the optimum cannot depend on the shift.
#[test]
fn optimum_independent_of_shift() {
    let toy = toy_instance().unwrap();
    let mut cost = toy.problem.cost().clone();
    cost.node_costs.clear();
    let cfg = SolverConfig::default();
    let mut costs = Vec::new();
    for d in [1.0, 2.0, 3.5] {
        let p = DesignProblem::new(toy.problem.template().clone(), toy.problem.decls().to_vec(), cost.clone(), Some(vec![vec![d]; 5]), DesignOptions::default()).unwrap();
        costs.push(p.solve(ProblemKind::Ia { lambda: 0.1 }, &cfg).unwrap().total_cost);
    }
    for c in &costs[1..] {
        assert!(rel_err(*c, costs[0]) <= 1e-5, "{costs:?}");
    }
}

#[test]
fn all_fixed_design_is_a_feasibility_check() {
    let s = |x: f64| Mat::filled(1, 1, x);
    let nodes = vec![Subsystem::stabilization(s(-1.0), s(1.0), s(1.0)).unwrap(), Subsystem::stabilization(s(-2.0), s(1.0), s(1.0)).unwrap()];
    let k = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
    let mut couplings = BTreeMap::new();
    couplings.insert((0, 1), s(0.5));
    couplings.insert((1, 0), s(0.5));
    let net = SwitchedNetwork::new(nodes, vec![k], couplings, MarkovGenerator::single()).unwrap();
    let rate = decay_rate(&assemble(&net).unwrap()).unwrap();
    let p = DesignProblem::new(net, Vec::new(), CostModel::default(), None, DesignOptions::default()).unwrap();
    let cfg = SolverConfig::default();
    let sol = p.solve(ProblemKind::Ia { lambda: 0.5 * rate }, &cfg).unwrap();
    assert_eq!(sol.total_cost, 0.0);
    assert!(sol.values.is_empty());
    if let posnet::design::Certificate::Stability(c) = &sol.certificate {
        assert!(StabilityCertificate::slack(&sol.system, &c.vectors, 0.5 * rate) > 0.0);
    }
    assert!(matches!(p.solve(ProblemKind::Ia { lambda: 1.5 * rate }, &cfg), Err(Error::Infeasible(_))));
}

#[test]
fn invalid_declarations_are_rejected() {
    let toy = toy_instance().unwrap();
    let mut decls = toy.problem.decls().to_vec();
    decls.push(decls[0].clone());
    assert!(DesignProblem::new(toy.problem.template().clone(), decls.clone(), CostModel::default(), None, DesignOptions::default()).is_err());
    let last = decls.len() - 1;
    decls[last].name = "renamed".into();
    assert!(matches!(
        DesignProblem::new(toy.problem.template().clone(), decls, CostModel::default(), None, DesignOptions::default()),
        Err(Error::InvalidDesign(_))
    ));
    let bad = vec![VarDecl::free("g", EntryAddress::Coupling { edge: (0, 1), row: 0, col: 0 }, Some(-1.0), Some(1.0))];
    assert!(DesignProblem::new(toy.problem.template().clone(), bad, CostModel::default(), None, DesignOptions::default()).is_err());
    let missing = vec![VarDecl::free("g", EntryAddress::Coupling { edge: (0, 0), row: 0, col: 0 }, None, None)];
    assert!(DesignProblem::new(toy.problem.template().clone(), missing, CostModel::default(), None, DesignOptions::default()).is_err());
    assert!(toy.problem.build(ProblemKind::Iia { gamma: -1.0 }).is_err());
}

#[test]
fn recovered_values_are_unshifted() {
    let toy = toy_instance().unwrap();
    let sol = toy.problem.solve(ProblemKind::Ia { lambda: 0.1 }, &SolverConfig::default()).unwrap();
    for (name, value) in &sol.values {
        if name.starts_with('F') {
            assert!((-0.6 - 1e-6..=-0.1 + 1e-6).contains(value), "{name} = {value}");
        } else {
            assert!((0.02 - 1e-6..=0.2 + 1e-6).contains(value), "{name} = {value}");
        }
    }
    for (k, node) in sol.network.nodes().iter().enumerate() {
        let (_, v) = sol.values.iter().find(|(n, _)| n == &format!("F[{k}]")).unwrap();
        assert!((node.f()[(0, 0)] - v).abs() <= 1e-12);
    }
}

//! Compilation of the cost-optimal network design problems into geometric
//! programs, and recovery of verified designs from their solutions.
//!
//! Four problems are supported: minimum cost for a decay rate (I-A), maximum
//! decay rate under a budget (I-B), minimum cost for an L1-gain bound (II-A)
//! and minimum L1-gain under a budget (II-B). A free diagonal entry of `F_k` is
//! carried by the positive variable `F̂ = F + Δ`; its bounds are stated on `F`
//! and its cost must be written in `F̂`.

mod shift;
mod symbolic;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

pub use shift::{build_shift, ShiftSpec};
use symbolic::{add_opt, SymColumns, SymMat};

use crate::error::{Error, Result};
use crate::gpcore::{self, divide_through, GeometricProgram, GpSolution, GpStatus, Monomial, PosyMatrix, Posynomial, SolverConfig, VarId, VarTable};
use crate::mjls::{decay_rate, gain_certificate, l1_gain, stability_certificate, GainCertificate, Mjls, StabilityCertificate, CERTIFICATE_FLOOR};
use crate::network::{assemble, Edge, NodeBlock, Subsystem, SwitchedNetwork};
use crate::posmat::Mat;

/// Location of one scalar entry in a network template.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntryAddress {
    Node { node: usize, block: NodeBlock, row: usize, col: usize },
    Coupling { edge: Edge, row: usize, col: usize },
}

impl EntryAddress {
    fn is_f_diagonal(&self) -> bool {
        matches!(self, EntryAddress::Node { block: NodeBlock::F, row, col, .. } if row == col)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum DeclKind {
    Fixed(f64),
    Free { lb: Option<f64>, ub: Option<f64> },
}

/// Declaration of a template entry as fixed or as a positive decision variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarDecl {
    pub name: String,
    pub target: EntryAddress,
    pub kind: DeclKind,
    /// Entries sharing a tie class are constrained equal.
    pub tie: Option<String>,
}

impl VarDecl {
    pub fn free(name: impl Into<String>, target: EntryAddress, lb: Option<f64>, ub: Option<f64>) -> Self {
        Self { name: name.into(), target, kind: DeclKind::Free { lb, ub }, tie: None }
    }

    pub fn fixed(name: impl Into<String>, target: EntryAddress, value: f64) -> Self {
        Self { name: name.into(), target, kind: DeclKind::Fixed(value), tie: None }
    }

    pub fn tied(mut self, class: impl Into<String>) -> Self {
        self.tie = Some(class.into());
        self
    }

    fn is_free(&self) -> bool {
        matches!(self.kind, DeclKind::Free { .. })
    }
}

/// Variable table of the free declarations, in declaration order. Cost
/// posynomials are written against these ids.
pub fn decl_variables(decls: &[VarDecl]) -> Result<VarTable> {
    let mut vars = VarTable::new();
    for d in decls.iter().filter(|d| d.is_free()) {
        vars.register(d.name.clone())?;
    }
    Ok(vars)
}

/// Node and edge costs plus any additional feasibility rows, all over the
/// variables of [`decl_variables`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub node_costs: Vec<(usize, Posynomial)>,
    pub edge_costs: Vec<(Edge, Posynomial)>,
    pub extra_le: Vec<(String, Posynomial)>,
    pub extra_eq: Vec<(String, Monomial)>,
}

impl CostModel {
    /// Sum of all node and edge costs, `None` when there are none.
    pub fn total(&self) -> Option<Posynomial> {
        let terms: Vec<Monomial> = self
            .node_costs
            .iter()
            .map(|(_, p)| p)
            .chain(self.edge_costs.iter().map(|(_, p)| p))
            .flat_map(|p| p.terms().iter().cloned())
            .collect();
        Posynomial::new(terms).ok()
    }

    fn posynomials(&self) -> impl Iterator<Item = &Posynomial> {
        self.node_costs
            .iter()
            .map(|(_, p)| p)
            .chain(self.edge_costs.iter().map(|(_, p)| p))
            .chain(self.extra_le.iter().map(|(_, p)| p))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ProblemKind {
    /// I-A: minimum cost with decay rate greater than `lambda`.
    Ia { lambda: f64 },
    /// I-B: maximum decay rate with cost at most `budget`.
    Ib { budget: f64 },
    /// II-A: minimum cost with L1-gain below `gamma`.
    Iia { gamma: f64 },
    /// II-B: minimum L1-gain with cost at most `budget`.
    Iib { budget: f64 },
}

impl ProblemKind {
    pub fn is_stabilization(&self) -> bool {
        matches!(self, ProblemKind::Ia { .. } | ProblemKind::Ib { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignOptions {
    /// Strict rows `< 1` become `≤ 1 − eps_strict`.
    pub eps_strict: f64,
    /// Pin the first certificate entry to 1 in the stabilization problems, whose
    /// rows are invariant under scaling of `v`.
    pub normalize: bool,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self { eps_strict: 1e-6, normalize: true }
    }
}

/// A built program together with the ids needed to read its solution.
#[derive(Clone, Debug, PartialEq)]
pub struct CompiledProgram {
    pub gp: GeometricProgram,
    pub kind: ProblemKind,
    /// `v[i][c]`: certificate variable of mode `i`, stacked state entry `c`.
    pub v: Vec<Vec<VarId>>,
    /// The `λ` or `γ` variable of the budget problems.
    pub aux: Option<VarId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Certificate {
    Stability(StabilityCertificate),
    Gain(GainCertificate),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignSolution {
    pub kind: ProblemKind,
    pub network: SwitchedNetwork,
    pub system: Mjls,
    pub total_cost: f64,
    /// Decay rate or L1-gain of the recovered network, computed from scratch.
    pub achieved_metric: f64,
    /// Decay rate or gain bound the design was asked (or found) to meet.
    pub target: f64,
    pub certificate: Certificate,
    /// Whether the certificate came directly from the program's `v` values.
    pub certificate_from_program: bool,
    pub gp_solution: GpSolution,
    /// Free declarations with their recovered (unshifted) values.
    pub values: Vec<(String, f64)>,
}

#[derive(Clone, Copy, Debug)]
enum Scalar {
    Const(f64),
    Var(VarId),
}

/// A network template with declarations, costs and a diagonal shift.
#[derive(Clone, Debug)]
pub struct DesignProblem {
    template: SwitchedNetwork,
    decls: Vec<VarDecl>,
    cost: CostModel,
    shift: ShiftSpec,
    options: DesignOptions,
    vars: VarTable,
    entry_vars: HashMap<EntryAddress, VarId>,
    node_blocks: Vec<[Mat; 8]>,
    coupling_mats: BTreeMap<Edge, Mat>,
    state_offsets: Vec<usize>,
    input_offsets: Vec<usize>,
}

fn offsets(dims: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut out = vec![0];
    for d in dims {
        out.push(out.last().unwrap() + d);
    }
    out
}

fn block_index(b: NodeBlock) -> usize {
    NodeBlock::ALL.iter().position(|x| *x == b).expect("listed")
}

impl DesignProblem {
    /// `deltas = None` picks `Δ_jj = 1 − lb(F_jj)` (or `1 − F_jj` for fixed entries).
    pub fn new(
        template: SwitchedNetwork,
        decls: Vec<VarDecl>,
        cost: CostModel,
        deltas: Option<Vec<Vec<f64>>>,
        options: DesignOptions,
    ) -> Result<Self> {
        let vars = decl_variables(&decls)?;
        let mut node_blocks: Vec<[Mat; 8]> = template.nodes().iter().map(Subsystem::blocks).collect();
        let mut coupling_mats: BTreeMap<Edge, Mat> = template.couplings().map(|(e, g)| (e, g.clone())).collect();
        let mut entry_vars = HashMap::new();
        let mut seen = HashMap::new();
        let mut free_index = 0;
        for d in &decls {
            if seen.insert(d.target, d.name.clone()).is_some() {
                return Err(Error::InvalidDesign(format!("entry {:?} declared twice", d.target)));
            }
            let slot: &mut f64 = match d.target {
                EntryAddress::Node { node, block, row, col } => {
                    let m = node_blocks
                        .get_mut(node)
                        .ok_or_else(|| Error::InvalidDesign(format!("{}: node {node} does not exist", d.name)))?;
                    let m = &mut m[block_index(block)];
                    if row >= m.rows() || col >= m.cols() {
                        return Err(Error::InvalidDesign(format!("{}: entry outside {}", d.name, block.name())));
                    }
                    &mut m[(row, col)]
                }
                EntryAddress::Coupling { edge, row, col } => {
                    let m = coupling_mats
                        .get_mut(&edge)
                        .ok_or_else(|| Error::InvalidDesign(format!("{}: ({}, {}) is not an edge", d.name, edge.0, edge.1)))?;
                    if row >= m.rows() || col >= m.cols() {
                        return Err(Error::InvalidDesign(format!("{}: entry outside coupling", d.name)));
                    }
                    &mut m[(row, col)]
                }
            };
            let signed = d.target.is_f_diagonal();
            match d.kind {
                DeclKind::Fixed(v) => {
                    if !v.is_finite() || (!signed && v < 0.0) {
                        return Err(Error::InvalidDesign(format!("{}: fixed value {v} breaks positivity", d.name)));
                    }
                    *slot = v;
                }
                DeclKind::Free { lb, ub } => {
                    if let (Some(l), Some(u)) = (lb, ub) {
                        if l > u {
                            return Err(Error::InvalidDesign(format!("{}: lower bound {l} above upper bound {u}", d.name)));
                        }
                    }
                    if !signed && (lb.is_some_and(|l| l <= 0.0) || ub.is_some_and(|u| u <= 0.0)) {
                        return Err(Error::InvalidDesign(format!("{}: bounds of a positive entry must be positive", d.name)));
                    }
                    entry_vars.insert(d.target, VarId(free_index));
                    free_index += 1;
                }
            }
        }

        let deltas = match deltas {
            Some(ds) => {
                if ds.len() != node_blocks.len() || ds.iter().zip(&node_blocks).any(|(d, b)| d.len() != b[0].rows()) {
                    return Err(Error::InvalidDesign("shift does not match node state dimensions".into()));
                }
                ds
            }
            None => {
                let mut ds = Vec::with_capacity(node_blocks.len());
                for (k, b) in node_blocks.iter().enumerate() {
                    let mut d = Vec::with_capacity(b[0].rows());
                    for j in 0..b[0].rows() {
                        let addr = EntryAddress::Node { node: k, block: NodeBlock::F, row: j, col: j };
                        let lower = match decls.iter().find(|x| x.target == addr).map(|x| x.kind) {
                            Some(DeclKind::Free { lb: Some(l), .. }) => l,
                            Some(DeclKind::Free { lb: None, .. }) => {
                                return Err(Error::InvalidDesign(format!(
                                    "free F[{j},{j}] of node {k} needs a lower bound or an explicit shift"
                                )))
                            }
                            _ => b[0][(j, j)],
                        };
                        d.push(1.0 - lower);
                    }
                    ds.push(d);
                }
                ds
            }
        };
        for d in &decls {
            if let EntryAddress::Node { node, block: NodeBlock::F, row, col } = d.target {
                if row != col {
                    continue;
                }
                let shift = deltas[node][row];
                let bad = match d.kind {
                    DeclKind::Fixed(v) => v + shift < 0.0,
                    DeclKind::Free { lb, ub } => lb.is_some_and(|l| l + shift <= 0.0) || ub.is_some_and(|u| u + shift <= 0.0),
                };
                if bad {
                    return Err(Error::InvalidDesign(format!("{}: shift {shift} does not make the entry positive", d.name)));
                }
            }
        }
        for (k, b) in node_blocks.iter().enumerate() {
            for j in 0..b[0].rows() {
                let addr = EntryAddress::Node { node: k, block: NodeBlock::F, row: j, col: j };
                if !entry_vars.contains_key(&addr) && b[0][(j, j)] + deltas[k][j] < 0.0 {
                    return Err(Error::InvalidDesign(format!("shift leaves F[{j},{j}] of node {k} negative")));
                }
            }
        }
        let shift = build_shift(template.generator(), deltas)?;

        for p in cost.posynomials() {
            if p.variables().iter().any(|id| id.0 >= vars.len()) {
                return Err(Error::InvalidDesign("cost references an undeclared variable".into()));
            }
        }
        for (_, m) in &cost.extra_eq {
            if m.exponents().iter().any(|(id, _)| id.0 >= vars.len()) {
                return Err(Error::InvalidDesign("constraint references an undeclared variable".into()));
            }
        }
        let state_offsets = offsets(template.nodes().iter().map(Subsystem::state_dim));
        let input_offsets = offsets(template.nodes().iter().map(Subsystem::disturbance_dim));
        Ok(Self {
            template,
            decls,
            cost,
            shift,
            options,
            vars,
            entry_vars,
            node_blocks,
            coupling_mats,
            state_offsets,
            input_offsets,
        })
    }

    pub fn shift(&self) -> &ShiftSpec {
        &self.shift
    }

    pub fn variables(&self) -> &VarTable {
        &self.vars
    }

    pub fn decls(&self) -> &[VarDecl] {
        &self.decls
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn template(&self) -> &SwitchedNetwork {
        &self.template
    }

    pub fn options(&self) -> &DesignOptions {
        &self.options
    }

    fn state_dim(&self) -> usize {
        *self.state_offsets.last().unwrap()
    }

    fn sym_node(&self, node: usize, block: NodeBlock) -> SymMat {
        let m = &self.node_blocks[node][block_index(block)];
        let mut out = SymMat::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                let addr = EntryAddress::Node { node, block, row: r, col: c };
                let entry = match self.entry_vars.get(&addr) {
                    Some(id) => Some(Monomial::var(*id).into()),
                    None => {
                        let mut v = m[(r, c)];
                        if block == NodeBlock::F && r == c {
                            v += self.shift.deltas[node][r];
                        }
                        (v > 0.0).then(|| Posynomial::constant(v).expect("positive"))
                    }
                };
                out.set(r, c, entry);
            }
        }
        out
    }

    fn sym_coupling(&self, edge: Edge) -> SymMat {
        let m = &self.coupling_mats[&edge];
        let mut out = SymMat::zeros(m.rows(), m.cols());
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                let addr = EntryAddress::Coupling { edge, row: r, col: c };
                let entry = match self.entry_vars.get(&addr) {
                    Some(id) => Some(Monomial::var(*id).into()),
                    None => (m[(r, c)] > 0.0).then(|| Posynomial::constant(m[(r, c)]).expect("positive")),
                };
                out.set(r, c, entry);
            }
        }
        out
    }

    /// Lifted mode-`i` matrix `⊕diag_k + (⊕left_k)(K_i ⊗ {Γ})(⊕right_k)` by columns.
    fn lifted(&self, mode: usize, diag: NodeBlock, left: NodeBlock, right: NodeBlock) -> SymColumns {
        let n = self.template.node_count();
        let diag_syms: Vec<SymMat> = (0..n).map(|k| self.sym_node(k, diag)).collect();
        let row_off = offsets(diag_syms.iter().map(|s| s.rows));
        let col_off = offsets(diag_syms.iter().map(|s| s.cols));
        let mut cols: Vec<BTreeMap<usize, Posynomial>> = vec![BTreeMap::new(); col_off[n]];
        let put = |cols: &mut Vec<BTreeMap<usize, Posynomial>>, r: usize, c: usize, p: Posynomial| {
            let slot = cols[c].remove(&r);
            cols[c].insert(r, add_opt(slot, p));
        };
        for (k, s) in diag_syms.iter().enumerate() {
            for a in 0..s.rows {
                for b in 0..s.cols {
                    if let Some(p) = s.get(a, b) {
                        put(&mut cols, row_off[k] + a, col_off[k] + b, p.clone());
                    }
                }
            }
        }
        let kmat = self.template.mode(mode);
        let mut left_cache: HashMap<usize, SymMat> = HashMap::new();
        for l in 0..n {
            let right_l = self.sym_node(l, right);
            for k in 0..n {
                let w = kmat[(k, l)];
                if w == 0.0 {
                    continue;
                }
                let left_k = left_cache.entry(k).or_insert_with(|| self.sym_node(k, left));
                let prod = left_k.matmul(&self.sym_coupling((k, l))).matmul(&right_l);
                for a in 0..prod.rows {
                    for b in 0..prod.cols {
                        if let Some(p) = prod.get(a, b) {
                            put(&mut cols, row_off[k] + a, col_off[l] + b, p.scale(w).expect("positive weight"));
                        }
                    }
                }
            }
        }
        SymColumns { cols: cols.into_iter().map(|c| c.into_iter().collect()).collect() }
    }

    fn register_certificate(&self, vars: &mut VarTable) -> Result<Vec<Vec<VarId>>> {
        let mut v = Vec::new();
        for i in 0..self.template.modes() {
            let mut row = Vec::with_capacity(self.state_dim());
            for c in 0..self.state_dim() {
                row.push(vars.register(format!("v[{i}][{c}]"))?);
            }
            v.push(row);
        }
        Ok(v)
    }

    fn add_design_rows(&self, gp: &mut GeometricProgram, v: &[Vec<VarId>], kind: ProblemKind) -> Result<()> {
        let mut classes: BTreeMap<&str, VarId> = BTreeMap::new();
        for d in &self.decls {
            let DeclKind::Free { lb, ub } = d.kind else { continue };
            let id = self.entry_vars[&d.target];
            let shift = match d.target {
                EntryAddress::Node { node, block: NodeBlock::F, row, col } if row == col => self.shift.deltas[node][row],
                _ => 0.0,
            };
            gp.add_bounds(id, lb.map(|x| x + shift), ub.map(|x| x + shift))?;
            if let Some(t) = &d.tie {
                match classes.get(t.as_str()) {
                    Some(first) => gp.add_eq(format!("tie:{t}"), Monomial::new(1.0, [(*first, 1.0), (id, -1.0)])?),
                    None => {
                        classes.insert(t, id);
                    }
                }
            }
        }
        for (label, p) in &self.cost.extra_le {
            gp.add_le(label.clone(), p.clone());
        }
        for (label, m) in &self.cost.extra_eq {
            gp.add_eq(label.clone(), m.clone());
        }
        if self.options.normalize && kind.is_stabilization() && !v.is_empty() && !v[0].is_empty() {
            gp.add_eq("norm", Monomial::var(v[0][0]));
        }
        Ok(())
    }

    fn strict(&self, m: Monomial) -> Monomial {
        m.scale(1.0 - self.options.eps_strict).expect("eps_strict < 1")
    }

    /// Rows `v_iᵀ(Â_i + P_i + λI) + Σ_{j≠i} π_ij v_jᵀ (+ 𝟙ᵀC_i) < δ v_iᵀ`.
    fn add_stability_rows(&self, gp: &mut GeometricProgram, v: &[Vec<VarId>], rate: Scalar, with_output: bool) -> Result<()> {
        let gen = self.template.generator();
        let dim = self.state_dim();
        for i in 0..self.template.modes() {
            let a_hat = self.lifted(i, NodeBlock::F, NodeBlock::G2, NodeBlock::H2);
            let c_cols = with_output.then(|| self.lifted(i, NodeBlock::H1, NodeBlock::J12, NodeBlock::H2));
            let mut row: PosyMatrix = vec![Vec::with_capacity(dim)];
            let mut den = vec![Vec::with_capacity(dim)];
            for c in 0..dim {
                let mut terms: Vec<Monomial> = Vec::new();
                for (r, p) in &a_hat.cols[c] {
                    terms.extend(p.mul_monomial(&Monomial::var(v[i][*r])).terms().iter().cloned());
                }
                let diag = self.shift.p[i][c];
                match rate {
                    Scalar::Const(l) if diag + l > 0.0 => terms.push(Monomial::new(diag + l, [(v[i][c], 1.0)])?),
                    Scalar::Const(_) => {}
                    Scalar::Var(id) => {
                        if diag > 0.0 {
                            terms.push(Monomial::new(diag, [(v[i][c], 1.0)])?);
                        }
                        terms.push(Monomial::new(1.0, [(v[i][c], 1.0), (id, 1.0)])?);
                    }
                }
                for (j, vj) in v.iter().enumerate() {
                    let rate_ij = gen.rate(i, j);
                    if j != i && rate_ij > 0.0 {
                        terms.push(Monomial::new(rate_ij, [(vj[c], 1.0)])?);
                    }
                }
                if let Some(cc) = &c_cols {
                    if let Some(p) = cc.column_sum(c) {
                        terms.extend_from_slice(p.terms());
                    }
                }
                row[0].push(Posynomial::new(terms).ok());
                den[0].push(self.strict(Monomial::new(self.shift.delta_scalar, [(v[i][c], 1.0)])?));
            }
            gp.add_matrix_le(&format!("stab[{i}]"), &divide_through(&row, &den)?);
        }
        Ok(())
    }

    /// Rows `v_iᵀB_i + 𝟙ᵀD_i < γ𝟙ᵀ`.
    fn add_gain_rows(&self, gp: &mut GeometricProgram, v: &[Vec<VarId>], gamma: Scalar) -> Result<()> {
        let inputs = *self.input_offsets.last().unwrap();
        let bound = match gamma {
            Scalar::Const(g) => Monomial::constant(g)?,
            Scalar::Var(id) => Monomial::var(id),
        };
        for i in 0..self.template.modes() {
            let b = self.lifted(i, NodeBlock::G1, NodeBlock::G2, NodeBlock::J21);
            let d = self.lifted(i, NodeBlock::J11, NodeBlock::J12, NodeBlock::J21);
            let mut row: PosyMatrix = vec![Vec::with_capacity(inputs)];
            for j in 0..inputs {
                let mut terms: Vec<Monomial> = Vec::new();
                for (r, p) in &b.cols[j] {
                    terms.extend(p.mul_monomial(&Monomial::var(v[i][*r])).terms().iter().cloned());
                }
                if let Some(p) = d.column_sum(j) {
                    terms.extend_from_slice(p.terms());
                }
                row[0].push(Posynomial::new(terms).ok());
            }
            let den = vec![vec![self.strict(bound.clone()); inputs]];
            gp.add_matrix_le(&format!("gain[{i}]"), &divide_through(&row, &den)?);
        }
        Ok(())
    }

    fn objective(&self) -> Posynomial {
        self.cost.total().unwrap_or_else(|| Posynomial::constant(1.0).expect("positive"))
    }

    fn add_budget(&self, gp: &mut GeometricProgram, budget: f64) -> Result<()> {
        if let Some(total) = self.cost.total() {
            gp.add_le("budget", total.scale(1.0 / budget)?);
        }
        Ok(())
    }

    pub fn build(&self, kind: ProblemKind) -> Result<CompiledProgram> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidDesign(format!("{name} must be positive, got {x}")))
            }
        };
        let mut vars = self.vars.clone();
        let v = self.register_certificate(&mut vars)?;
        let (gp, aux) = match kind {
            ProblemKind::Ia { lambda } => {
                if !(lambda >= 0.0 && lambda.is_finite()) {
                    return Err(Error::InvalidDesign(format!("decay rate must be nonnegative, got {lambda}")));
                }
                let mut gp = GeometricProgram::new(vars, self.objective());
                self.add_stability_rows(&mut gp, &v, Scalar::Const(lambda), false)?;
                (gp, None)
            }
            ProblemKind::Ib { budget } => {
                positive("budget", budget)?;
                let l = vars.register("lambda")?;
                let mut gp = GeometricProgram::new(vars, Monomial::power(l, -1.0).into());
                self.add_stability_rows(&mut gp, &v, Scalar::Var(l), false)?;
                self.add_budget(&mut gp, budget)?;
                (gp, Some(l))
            }
            ProblemKind::Iia { gamma } => {
                positive("gamma", gamma)?;
                let mut gp = GeometricProgram::new(vars, self.objective());
                self.add_stability_rows(&mut gp, &v, Scalar::Const(0.0), true)?;
                self.add_gain_rows(&mut gp, &v, Scalar::Const(gamma))?;
                (gp, None)
            }
            ProblemKind::Iib { budget } => {
                positive("budget", budget)?;
                let g = vars.register("gamma")?;
                let mut gp = GeometricProgram::new(vars, Monomial::var(g).into());
                self.add_stability_rows(&mut gp, &v, Scalar::Const(0.0), true)?;
                self.add_gain_rows(&mut gp, &v, Scalar::Var(g))?;
                self.add_budget(&mut gp, budget)?;
                (gp, Some(g))
            }
        };
        let mut gp = gp;
        self.add_design_rows(&mut gp, &v, kind)?;
        gp.validate()?;
        Ok(CompiledProgram { gp, kind, v, aux })
    }

    pub fn build_problem_ia(&self, lambda: f64) -> Result<CompiledProgram> {
        self.build(ProblemKind::Ia { lambda })
    }

    pub fn build_problem_ib(&self, budget: f64) -> Result<CompiledProgram> {
        self.build(ProblemKind::Ib { budget })
    }

    pub fn build_problem_iia(&self, gamma: f64) -> Result<CompiledProgram> {
        self.build(ProblemKind::Iia { gamma })
    }

    pub fn build_problem_iib(&self, budget: f64) -> Result<CompiledProgram> {
        self.build(ProblemKind::Iib { budget })
    }

    /// Network with every free entry set from `values` (indexed by variable id),
    /// diagonal entries of `F` unshifted.
    pub fn network_at(&self, values: &[f64]) -> Result<SwitchedNetwork> {
        let mut blocks = self.node_blocks.clone();
        let mut couplings = self.coupling_mats.clone();
        for (addr, id) in &self.entry_vars {
            let x = *values.get(id.0).ok_or_else(|| Error::MissingVariable(self.vars.name(*id).to_string()))?;
            match *addr {
                EntryAddress::Node { node, block, row, col } => {
                    let shift = if block == NodeBlock::F && row == col { self.shift.deltas[node][row] } else { 0.0 };
                    blocks[node][block_index(block)][(row, col)] = x - shift;
                }
                EntryAddress::Coupling { edge, row, col } => {
                    couplings.get_mut(&edge).expect("validated")[(row, col)] = x;
                }
            }
        }
        let nodes = blocks.into_iter().map(Subsystem::from_blocks).collect::<Result<Vec<_>>>()?;
        SwitchedNetwork::new(nodes, self.template.mode_matrices(), couplings, self.template.generator().clone())
    }

    /// Total cost at `values`; zero without cost terms.
    pub fn cost_at(&self, values: &[f64]) -> Result<f64> {
        match self.cost.total() {
            Some(p) => p.evaluate(values),
            None => Ok(0.0),
        }
    }

    /// Builds, solves and recovers in one call.
    pub fn solve(&self, kind: ProblemKind, cfg: &SolverConfig) -> Result<DesignSolution> {
        let compiled = self.build(kind)?;
        let sol = gpcore::solve(&compiled.gp, cfg)?;
        self.recover(&compiled, sol)
    }

    /// Unshifts `F̂`, reassembles the network and verifies the target with the
    /// jump-system analysis, independently of the program's internals.
    pub fn recover(&self, compiled: &CompiledProgram, sol: GpSolution) -> Result<DesignSolution> {
        match sol.status {
            GpStatus::Optimal => {}
            GpStatus::Infeasible => return Err(Error::Infeasible("design program is infeasible".into())),
            s => return Err(Error::SolverStatus(format!("{s:?} after {} iterations", sol.iterations))),
        }
        let tolerance = 10.0 * self.options.eps_strict;
        let network = self.network_at(&sol.values)?;
        let system = assemble(&network)?;
        let vectors: Vec<Vec<f64>> = compiled.v.iter().map(|row| row.iter().map(|id| sol.values[id.0]).collect()).collect();
        let target = match (compiled.kind, compiled.aux) {
            (ProblemKind::Ia { lambda }, _) => lambda,
            (ProblemKind::Iia { gamma }, _) => gamma,
            (_, Some(id)) => sol.values[id.0],
            _ => unreachable!("budget problems carry an auxiliary variable"),
        };
        let verification = |e: Error| Error::VerificationFailed(format!("recovered network: {e}"));
        let (achieved, certificate, from_program) = if compiled.kind.is_stabilization() {
            let rate = decay_rate(&system).map_err(verification)?;
            if rate < target - tolerance {
                return Err(Error::VerificationFailed(format!("decay rate {rate} below target {target}")));
            }
            let margin = StabilityCertificate::slack(&system, &vectors, target);
            let direct = StabilityCertificate { vectors, lambda: target, margin };
            if direct.holds() {
                (rate, Certificate::Stability(direct), true)
            } else {
                let fallback = stability_certificate(&system, (target - tolerance).max(0.0).min(rate * (1.0 - 1e-9)))
                    .map_err(verification)?;
                (rate, Certificate::Stability(fallback), false)
            }
        } else {
            let gain = l1_gain(&system).map_err(verification)?;
            if gain > target + tolerance {
                return Err(Error::VerificationFailed(format!("L1-gain {gain} above bound {target}")));
            }
            let (state_margin, input_margin) = GainCertificate::slacks(&system, &vectors, target);
            let direct = GainCertificate { vectors, gamma: target, state_margin, input_margin };
            if direct.holds() && state_margin > CERTIFICATE_FLOOR {
                (gain, Certificate::Gain(direct), true)
            } else {
                let fallback = gain_certificate(&system, target.max(gain) + tolerance).map_err(verification)?;
                (gain, Certificate::Gain(fallback), false)
            }
        };
        let total_cost = self.cost_at(&sol.values)?;
        let values = self
            .decls
            .iter()
            .filter(|d| d.is_free())
            .map(|d| {
                let id = self.entry_vars[&d.target];
                let shift = match d.target {
                    EntryAddress::Node { node, block: NodeBlock::F, row, col } if row == col => self.shift.deltas[node][row],
                    _ => 0.0,
                };
                (d.name.clone(), sol.values[id.0] - shift)
            })
            .collect();
        Ok(DesignSolution {
            kind: compiled.kind,
            network,
            system,
            total_cost,
            achieved_metric: achieved,
            target,
            certificate,
            certificate_from_program: from_program,
            gp_solution: sol,
            values,
        })
    }
}

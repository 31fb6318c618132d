//! JSON model files: schema, validation and conversion to domain objects.

use std::collections::{BTreeMap, HashMap};

use posnet::design::{CostModel, DesignProblem, DesignOptions, EntryAddress, ProblemKind, VarDecl};
use posnet::gpcore::{Monomial, Posynomial, SolverConfig, VarId};
use posnet::mjls::MarkovGenerator;
use posnet::network::{Edge, NodeBlock, Subsystem, SwitchedNetwork};
use posnet::posmat::Mat;
use serde::{Deserialize, Serialize};

/// A matrix entry: a number, or a decision variable to be designed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Value(f64),
    Var(VarSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarSpec {
    pub var: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ub: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tie: Option<String>,
}

pub type Matrix = Vec<Vec<Entry>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub modes: usize,
    pub rates: Vec<Vec<f64>>,
}

/// Node blocks; omitted blocks are empty and their dimensions inferred.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    #[serde(rename = "F")]
    pub f: Matrix,
    #[serde(rename = "G1", default, skip_serializing_if = "Vec::is_empty")]
    pub g1: Matrix,
    #[serde(rename = "G2", default, skip_serializing_if = "Vec::is_empty")]
    pub g2: Matrix,
    #[serde(rename = "H1", default, skip_serializing_if = "Vec::is_empty")]
    pub h1: Matrix,
    #[serde(rename = "H2", default, skip_serializing_if = "Vec::is_empty")]
    pub h2: Matrix,
    #[serde(rename = "J11", default, skip_serializing_if = "Vec::is_empty")]
    pub j11: Matrix,
    #[serde(rename = "J12", default, skip_serializing_if = "Vec::is_empty")]
    pub j12: Matrix,
    #[serde(rename = "J21", default, skip_serializing_if = "Vec::is_empty")]
    pub j21: Matrix,
}

impl NodeSpec {
    fn block(&self, b: NodeBlock) -> &Matrix {
        match b {
            NodeBlock::F => &self.f,
            NodeBlock::G1 => &self.g1,
            NodeBlock::G2 => &self.g2,
            NodeBlock::H1 => &self.h1,
            NodeBlock::H2 => &self.h2,
            NodeBlock::J11 => &self.j11,
            NodeBlock::J12 => &self.j12,
            NodeBlock::J21 => &self.j21,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub edge: [usize; 2],
    pub matrix: Matrix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermSpec {
    pub coeff: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub exponents: BTreeMap<String, f64>,
}

/// Cost terms charged to one node or one edge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<[usize; 2]>,
    pub terms: Vec<TermSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeSpec {
    pub label: String,
    pub terms: Vec<TermSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EqSpec {
    pub label: String,
    pub term: TermSpec,
}

/// Extra rows `posynomial ≤ 1` and `monomial = 1`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub le: Vec<LeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eq: Vec<EqSpec>,
}

impl ConstraintSpec {
    fn is_empty(&self) -> bool {
        self.le.is_empty() && self.eq.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProblemType {
    Ia,
    Ib,
    Iia,
    Iib,
}

impl ProblemType {
    pub fn kind(self, target: f64) -> ProblemKind {
        match self {
            ProblemType::Ia => ProblemKind::Ia { lambda: target },
            ProblemType::Ib => ProblemKind::Ib { budget: target },
            ProblemType::Iia => ProblemKind::Iia { gamma: target },
            ProblemType::Iib => ProblemKind::Iib { budget: target },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_strict: Option<f64>,
}

impl SolverOverrides {
    /// Fields set in `other` win.
    pub fn merged(&self, other: &SolverOverrides) -> SolverOverrides {
        SolverOverrides {
            tol: other.tol.or(self.tol),
            max_iter: other.max_iter.or(self.max_iter),
            eps_strict: other.eps_strict.or(self.eps_strict),
        }
    }

    pub fn config(&self) -> SolverConfig {
        let d = SolverConfig::default();
        SolverConfig {
            tol: self.tol.unwrap_or(d.tol),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            eps_strict: self.eps_strict.unwrap_or(d.eps_strict),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(rename = "type")]
    pub kind: ProblemType,
    pub target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverOverrides>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub generator: GeneratorSpec,
    pub nodes: Vec<NodeSpec>,
    /// One adjacency matrix per mode.
    pub modes: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub couplings: Vec<CouplingSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub costs: Vec<CostSpec>,
    #[serde(default, skip_serializing_if = "ConstraintSpec::is_empty")]
    pub constraints: ConstraintSpec,
    /// Diagonal shift per node; defaults to `1 − lb` of each free diagonal entry of `F`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemSpec>,
}

/// Model errors: `Schema` for malformed documents, `Domain` for documents that
/// parse but describe an invalid system.
#[derive(Debug)]
pub enum ModelError {
    Schema(String),
    Domain(posnet::Error),
}

impl std::fmt::Display for ModelError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelError::Schema(s) => write!(f, "{s}"),
            ModelError::Domain(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ModelError {}

impl From<posnet::Error> for ModelError {
    fn from(e: posnet::Error) -> Self {
        ModelError::Domain(e)
    }
}

fn schema(msg: impl Into<String>) -> ModelError {
    ModelError::Schema(msg.into())
}

/// Parses a model with the failing key path and line/column in the message.
pub fn parse(text: &str) -> Result<ModelFile, ModelError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        schema(format!("at `{path}`: {inner}"))
    })
}

/// Declared variables in file order, and the template with zeros in their slots.
pub struct Compiled {
    pub template: SwitchedNetwork,
    pub decls: Vec<VarDecl>,
    pub cost: CostModel,
}

fn dims(m: &Matrix, what: &str) -> Result<(usize, usize), ModelError> {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    if m.iter().any(|r| r.len() != cols) {
        return Err(schema(format!("{what}: rows have different lengths")));
    }
    Ok((rows, cols))
}

fn numeric(rows: &[Vec<f64>], what: &str) -> Result<Mat, ModelError> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|x| x.len() != c) {
        return Err(schema(format!("{what}: rows have different lengths")));
    }
    Ok(Mat::from_vec(r, c, rows.concat())?)
}

impl ModelFile {
    pub fn has_variables(&self) -> bool {
        let var = |m: &Matrix| m.iter().flatten().any(|e| matches!(e, Entry::Var(_)));
        self.nodes.iter().any(|n| NodeBlock::ALL.iter().any(|b| var(n.block(*b)))) || self.couplings.iter().any(|c| var(&c.matrix))
    }

    pub fn generator(&self) -> Result<MarkovGenerator, ModelError> {
        if self.generator.rates.len() != self.generator.modes {
            return Err(schema(format!(
                "generator: {} rate rows for {} modes",
                self.generator.rates.len(),
                self.generator.modes
            )));
        }
        Ok(MarkovGenerator::new(numeric(&self.generator.rates, "generator.rates")?)?)
    }

    /// Template network, variable declarations and cost model.
    pub fn compile(&self) -> Result<Compiled, ModelError> {
        let mut decls = Vec::new();
        let mut names: HashMap<String, VarId> = HashMap::new();
        let mut declare = |spec: &VarSpec, target: EntryAddress, decls: &mut Vec<VarDecl>| -> Result<(), ModelError> {
            if names.insert(spec.var.clone(), VarId(decls.len())).is_some() {
                return Err(schema(format!("variable `{}` declared twice", spec.var)));
            }
            let mut d = VarDecl::free(spec.var.clone(), target, spec.lb, spec.ub);
            d.tie = spec.tie.clone();
            decls.push(d);
            Ok(())
        };

        let mut nodes = Vec::with_capacity(self.nodes.len());
        for (k, node) in self.nodes.iter().enumerate() {
            let mut shapes = [(0usize, 0usize); 8];
            for (i, b) in NodeBlock::ALL.iter().enumerate() {
                shapes[i] = dims(node.block(*b), &format!("nodes[{k}].{}", b.name()))?;
            }
            let [f, g1, g2, h1, h2, j11, j12, j21] = shapes;
            let n = f.0;
            let pick = |a: (usize, usize), b: usize, c: usize| if a.0 > 0 { a.1 } else { b.max(c) };
            let s = pick(g1, j11.1, j21.1);
            let q = pick(g2, j12.1, 0);
            let r = if h1.0 > 0 { h1.0 } else { j11.0.max(j12.0) };
            let p = if h2.0 > 0 { h2.0 } else { j21.0 };
            let expected = [(n, n), (n, s), (n, q), (r, n), (p, n), (r, s), (r, q), (p, s)];
            let mut blocks: Vec<Mat> = Vec::with_capacity(8);
            for (i, b) in NodeBlock::ALL.iter().enumerate() {
                let spec = node.block(*b);
                let (rows, cols) = expected[i];
                if spec.is_empty() {
                    blocks.push(Mat::zeros(rows, cols));
                    continue;
                }
                if shapes[i] != (rows, cols) {
                    return Err(schema(format!(
                        "nodes[{k}].{} is {}x{}, expected {rows}x{cols}",
                        b.name(),
                        shapes[i].0,
                        shapes[i].1
                    )));
                }
                let mut m = Mat::zeros(rows, cols);
                for (a, row) in spec.iter().enumerate() {
                    for (c, e) in row.iter().enumerate() {
                        match e {
                            Entry::Value(v) => m[(a, c)] = *v,
                            Entry::Var(v) => declare(v, EntryAddress::Node { node: k, block: *b, row: a, col: c }, &mut decls)?,
                        }
                    }
                }
                blocks.push(m);
            }
            let blocks: [Mat; 8] = blocks.try_into().expect("eight blocks");
            nodes.push(Subsystem::from_blocks(blocks)?);
        }

        let mut couplings: BTreeMap<Edge, Mat> = BTreeMap::new();
        for (i, c) in self.couplings.iter().enumerate() {
            let edge = (c.edge[0], c.edge[1]);
            let (rows, cols) = dims(&c.matrix, &format!("couplings[{i}]"))?;
            let mut m = Mat::zeros(rows, cols);
            for (a, row) in c.matrix.iter().enumerate() {
                for (b, e) in row.iter().enumerate() {
                    match e {
                        Entry::Value(v) => m[(a, b)] = *v,
                        Entry::Var(v) => declare(v, EntryAddress::Coupling { edge, row: a, col: b }, &mut decls)?,
                    }
                }
            }
            if couplings.insert(edge, m).is_some() {
                return Err(schema(format!("couplings[{i}]: edge ({}, {}) listed twice", edge.0, edge.1)));
            }
        }
        let modes = self.modes.iter().enumerate().map(|(i, m)| numeric(m, &format!("modes[{i}]"))).collect::<Result<Vec<_>, _>>()?;
        let template = SwitchedNetwork::new(nodes, modes, couplings, self.generator()?)?;

        let id_of: HashMap<&str, VarId> = decls.iter().enumerate().map(|(i, d)| (d.name.as_str(), VarId(i))).collect();
        let monomial = |t: &TermSpec, what: &str| -> Result<Monomial, ModelError> {
            let mut exps = Vec::with_capacity(t.exponents.len());
            for (name, a) in &t.exponents {
                let id = id_of.get(name.as_str()).ok_or_else(|| schema(format!("{what}: unknown variable `{name}`")))?;
                exps.push((*id, *a));
            }
            Monomial::new(t.coeff, exps).map_err(|e| schema(format!("{what}: {e}")))
        };
        let posynomial = |terms: &[TermSpec], what: &str| -> Result<Posynomial, ModelError> {
            let ms = terms.iter().map(|t| monomial(t, what)).collect::<Result<Vec<_>, _>>()?;
            Posynomial::new(ms).map_err(|e| schema(format!("{what}: {e}")))
        };
        let mut cost = CostModel::default();
        for (i, c) in self.costs.iter().enumerate() {
            let what = format!("costs[{i}]");
            let p = posynomial(&c.terms, &what)?;
            match (c.node, c.edge) {
                (Some(k), None) => cost.node_costs.push((k, p)),
                (None, Some(e)) => cost.edge_costs.push(((e[0], e[1]), p)),
                _ => return Err(schema(format!("{what}: give exactly one of `node` or `edge`"))),
            }
        }
        for (i, c) in self.constraints.le.iter().enumerate() {
            cost.extra_le.push((c.label.clone(), posynomial(&c.terms, &format!("constraints.le[{i}]"))?));
        }
        for (i, c) in self.constraints.eq.iter().enumerate() {
            cost.extra_eq.push((c.label.clone(), monomial(&c.term, &format!("constraints.eq[{i}]"))?));
        }
        Ok(Compiled { template, decls, cost })
    }

    /// The network of a model without variables.
    pub fn network(&self) -> Result<SwitchedNetwork, ModelError> {
        if self.has_variables() {
            return Err(schema("model declares variables; a fully numeric model is required"));
        }
        Ok(self.compile()?.template)
    }

    pub fn design_problem(&self, options: DesignOptions) -> Result<DesignProblem, ModelError> {
        let c = self.compile()?;
        Ok(DesignProblem::new(c.template, c.decls, c.cost, self.shift.clone(), options)?)
    }

    /// Numeric model of a network, without costs or a problem.
    pub fn from_network(net: &SwitchedNetwork) -> Self {
        let entries = |m: &Mat| -> Matrix { m.to_rows().into_iter().map(|r| r.into_iter().map(Entry::Value).collect()).collect() };
        let gen = net.generator();
        ModelFile {
            generator: GeneratorSpec { modes: gen.modes(), rates: gen.rates().to_rows() },
            nodes: net
                .nodes()
                .iter()
                .map(|s| NodeSpec {
                    f: entries(s.f()),
                    g1: entries(s.g1()),
                    g2: entries(s.g2()),
                    h1: entries(s.h1()),
                    h2: entries(s.h2()),
                    j11: entries(s.j11()),
                    j12: entries(s.j12()),
                    j21: entries(s.j21()),
                })
                .collect(),
            modes: net.mode_matrices().iter().map(Mat::to_rows).collect(),
            couplings: net.couplings().map(|(e, g)| CouplingSpec { edge: [e.0, e.1], matrix: entries(g) }).collect(),
            costs: Vec::new(),
            constraints: ConstraintSpec::default(),
            shift: None,
            problem: None,
        }
    }
}

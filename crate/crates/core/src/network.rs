//! Networks of positive subsystems coupled over a Markov-switching graph and
//! their assembly into a single jump system.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mjls::{MarkovGenerator, Mjls};
use crate::posmat::{block_diag, gkron_with, Mat, MetzlerMat, NonnegMat};

/// Directed edge `(k, ℓ)`: node `ℓ`'s output feeds node `k`'s input. Zero-based.
pub type Edge = (usize, usize);

/// The eight matrices of a [`Subsystem`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NodeBlock {
    F,
    G1,
    G2,
    H1,
    H2,
    J11,
    J12,
    J21,
}

impl NodeBlock {
    pub const ALL: [NodeBlock; 8] = [
        NodeBlock::F,
        NodeBlock::G1,
        NodeBlock::G2,
        NodeBlock::H1,
        NodeBlock::H2,
        NodeBlock::J11,
        NodeBlock::J12,
        NodeBlock::J21,
    ];

    pub fn name(self) -> &'static str {
        match self {
            NodeBlock::F => "F",
            NodeBlock::G1 => "G1",
            NodeBlock::G2 => "G2",
            NodeBlock::H1 => "H1",
            NodeBlock::H2 => "H2",
            NodeBlock::J11 => "J11",
            NodeBlock::J12 => "J12",
            NodeBlock::J21 => "J21",
        }
    }
}

/// Positive node dynamics
/// `ẋ = F x + G1 w + G2 u`, `z = H1 x + J11 w + J12 u`, `y = H2 x + J21 w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Subsystem {
    f: MetzlerMat,
    g1: NonnegMat,
    g2: NonnegMat,
    h1: NonnegMat,
    h2: NonnegMat,
    j11: NonnegMat,
    j12: NonnegMat,
    j21: NonnegMat,
}

impl Subsystem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(f: Mat, g1: Mat, g2: Mat, h1: Mat, h2: Mat, j11: Mat, j12: Mat, j21: Mat) -> Result<Self> {
        if !f.is_square() {
            return Err(Error::NotSquare { rows: f.rows(), cols: f.cols() });
        }
        let n = f.rows();
        let s = g1.cols();
        let q = g2.cols();
        let r = h1.rows();
        let p = h2.rows();
        let shapes = [
            ("G1", &g1, n, s),
            ("G2", &g2, n, q),
            ("H1", &h1, r, n),
            ("H2", &h2, p, n),
            ("J11", &j11, r, s),
            ("J12", &j12, r, q),
            ("J21", &j21, p, s),
        ];
        for (name, m, rows, cols) in shapes {
            if m.rows() != rows || m.cols() != cols {
                return Err(Error::DimensionMismatch(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        Ok(Self {
            f: MetzlerMat::new(f)?,
            g1: NonnegMat::new(g1)?,
            g2: NonnegMat::new(g2)?,
            h1: NonnegMat::new(h1)?,
            h2: NonnegMat::new(h2)?,
            j11: NonnegMat::new(j11)?,
            j12: NonnegMat::new(j12)?,
            j21: NonnegMat::new(j21)?,
        })
    }

    /// Node without disturbance input or performance output.
    pub fn stabilization(f: Mat, g2: Mat, h2: Mat) -> Result<Self> {
        let n = f.rows();
        let (q, p) = (g2.cols(), h2.rows());
        Self::new(f, Mat::zeros(n, 0), g2, Mat::zeros(0, n), h2, Mat::zeros(0, 0), Mat::zeros(0, q), Mat::zeros(p, 0))
    }

    /// Builds from blocks in [`NodeBlock::ALL`] order.
    pub fn from_blocks(blocks: [Mat; 8]) -> Result<Self> {
        let [f, g1, g2, h1, h2, j11, j12, j21] = blocks;
        Self::new(f, g1, g2, h1, h2, j11, j12, j21)
    }

    pub fn block(&self, b: NodeBlock) -> &Mat {
        match b {
            NodeBlock::F => self.f(),
            NodeBlock::G1 => self.g1(),
            NodeBlock::G2 => self.g2(),
            NodeBlock::H1 => self.h1(),
            NodeBlock::H2 => self.h2(),
            NodeBlock::J11 => self.j11(),
            NodeBlock::J12 => self.j12(),
            NodeBlock::J21 => self.j21(),
        }
    }

    pub fn blocks(&self) -> [Mat; 8] {
        NodeBlock::ALL.map(|b| self.block(b).clone())
    }

    pub fn state_dim(&self) -> usize {
        self.f.dim()
    }

    pub fn disturbance_dim(&self) -> usize {
        self.g1.inner().cols()
    }

    pub fn input_dim(&self) -> usize {
        self.g2.inner().cols()
    }

    pub fn performance_dim(&self) -> usize {
        self.h1.inner().rows()
    }

    pub fn output_dim(&self) -> usize {
        self.h2.inner().rows()
    }

    pub fn f(&self) -> &Mat {
        self.f.inner()
    }
    pub fn g1(&self) -> &Mat {
        self.g1.inner()
    }
    pub fn g2(&self) -> &Mat {
        self.g2.inner()
    }
    pub fn h1(&self) -> &Mat {
        self.h1.inner()
    }
    pub fn h2(&self) -> &Mat {
        self.h2.inner()
    }
    pub fn j11(&self) -> &Mat {
        self.j11.inner()
    }
    pub fn j12(&self) -> &Mat {
        self.j12.inner()
    }
    pub fn j21(&self) -> &Mat {
        self.j21.inner()
    }
}

/// Inner coupling matrix on one edge.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingMatrix {
    pub edge: Edge,
    pub gamma: NonnegMat,
}

/// Edges present in at least one adjacency matrix.
pub fn edge_union(modes: &[Mat]) -> BTreeSet<Edge> {
    let mut out = BTreeSet::new();
    for k in modes {
        for i in 0..k.rows() {
            for j in 0..k.cols() {
                if k[(i, j)] > 0.0 {
                    out.insert((i, j));
                }
            }
        }
    }
    out
}

/// Subsystems, per-mode adjacency matrices and edge couplings.
#[derive(Clone, Debug, PartialEq)]
pub struct SwitchedNetwork {
    nodes: Vec<Subsystem>,
    modes: Vec<NonnegMat>,
    couplings: BTreeMap<Edge, NonnegMat>,
    generator: MarkovGenerator,
    edges: BTreeSet<Edge>,
}

impl SwitchedNetwork {
    pub fn new(
        nodes: Vec<Subsystem>,
        modes: Vec<Mat>,
        couplings: BTreeMap<Edge, Mat>,
        generator: MarkovGenerator,
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::InvalidNetwork("network has no nodes".into()));
        }
        if modes.len() != generator.modes() {
            return Err(Error::InvalidNetwork(format!(
                "{} adjacency matrices for {} modes",
                modes.len(),
                generator.modes()
            )));
        }
        for (i, k) in modes.iter().enumerate() {
            if k.rows() != n || k.cols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "adjacency matrix {} is {}x{}, expected {n}x{n}",
                    i + 1,
                    k.rows(),
                    k.cols()
                )));
            }
        }
        let modes = modes.into_iter().map(NonnegMat::new).collect::<Result<Vec<_>>>()?;
        let edges = edge_union(&modes.iter().map(|m| m.inner().clone()).collect::<Vec<_>>());
        for e in &edges {
            if !couplings.contains_key(e) {
                return Err(Error::InvalidNetwork(format!("edge ({}, {}) has no coupling matrix", e.0, e.1)));
            }
        }
        let mut checked = BTreeMap::new();
        for ((k, l), g) in couplings {
            if !edges.contains(&(k, l)) {
                return Err(Error::InvalidNetwork(format!("coupling on ({k}, {l}) which is never an edge")));
            }
            let (q, p) = (nodes[k].input_dim(), nodes[l].output_dim());
            if g.rows() != q || g.cols() != p {
                return Err(Error::DimensionMismatch(format!(
                    "coupling ({k}, {l}) is {}x{}, expected {q}x{p}",
                    g.rows(),
                    g.cols()
                )));
            }
            checked.insert((k, l), NonnegMat::new(g)?);
        }
        Ok(Self { nodes, modes, couplings: checked, generator, edges })
    }

    pub fn nodes(&self) -> &[Subsystem] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn mode_matrices(&self) -> Vec<Mat> {
        self.modes.iter().map(|m| m.inner().clone()).collect()
    }

    pub fn mode(&self, i: usize) -> &Mat {
        self.modes[i].inner()
    }

    pub fn modes(&self) -> usize {
        self.modes.len()
    }

    pub fn coupling(&self, e: Edge) -> Option<&Mat> {
        self.couplings.get(&e).map(NonnegMat::inner)
    }

    pub fn couplings(&self) -> impl Iterator<Item = (Edge, &Mat)> {
        self.couplings.iter().map(|(e, g)| (*e, g.inner()))
    }

    pub fn generator(&self) -> &MarkovGenerator {
        &self.generator
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    /// Block coupling matrix `K_i ⊗ {Γ}` for mode `i`.
    pub fn coupling_operator(&self, i: usize) -> Result<Mat> {
        let q: Vec<usize> = self.nodes.iter().map(Subsystem::input_dim).collect();
        let p: Vec<usize> = self.nodes.iter().map(Subsystem::output_dim).collect();
        gkron_with(self.modes[i].inner(), &q, &p, |k, l| self.coupling((k, l)))
    }
}

fn dsum(nodes: &[Subsystem], pick: impl Fn(&Subsystem) -> &Mat) -> Mat {
    block_diag(&nodes.iter().map(|s| pick(s).clone()).collect::<Vec<_>>())
}

/// Global jump system of a network.
pub fn assemble(net: &SwitchedNetwork) -> Result<Mjls> {
    let nodes = &net.nodes;
    let f = dsum(nodes, Subsystem::f);
    let g1 = dsum(nodes, Subsystem::g1);
    let g2 = dsum(nodes, Subsystem::g2);
    let h1 = dsum(nodes, Subsystem::h1);
    let h2 = dsum(nodes, Subsystem::h2);
    let j11 = dsum(nodes, Subsystem::j11);
    let j12 = dsum(nodes, Subsystem::j12);
    let j21 = dsum(nodes, Subsystem::j21);
    let (mut a, mut b, mut c, mut d) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for i in 0..net.modes() {
        let kg = net.coupling_operator(i)?;
        let g2k = g2.matmul(&kg)?;
        let j12k = j12.matmul(&kg)?;
        a.push(f.add(&g2k.matmul(&h2)?)?);
        b.push(g1.add(&g2k.matmul(&j21)?)?);
        c.push(h1.add(&j12k.matmul(&h2)?)?);
        d.push(j11.add(&j12k.matmul(&j21)?)?);
    }
    Mjls::new(net.generator.clone(), a, b, c, d)
}

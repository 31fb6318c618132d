use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};

use super::{Lu, Mat, MetzlerMat};

/// Relative gap between the Collatz–Wielandt bounds accepted as converged.
pub const PERRON_TOL: f64 = 1e-12;
/// Iteration cap for the plain power iteration.
pub const POWER_ITER_CAP: usize = 100_000;
const POWER_WORK_BUDGET: usize = 200_000_000;
const NODA_ITER_CAP: usize = 200;

/// Strongly connected components of the directed graph with an edge
/// `i -> j` whenever `m[i][j] > 0` and `i != j`.
pub fn strongly_connected_components(m: &Mat) -> Vec<Vec<usize>> {
    let n = m.rows();
    let mut g = DiGraph::<(), ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for j in 0..m.cols().min(n) {
            if i != j && m[(i, j)] > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    tarjan_scc(&g)
        .into_iter()
        .map(|c| {
            let mut idx: Vec<usize> = c.into_iter().map(|v| v.index()).collect();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// True iff the graph of strictly positive off-diagonal entries is strongly connected.
pub fn is_irreducible(m: &Mat) -> bool {
    m.rows() <= 1 || strongly_connected_components(m).len() == 1
}

/// Largest real part among the eigenvalues of a Metzler matrix.
///
/// The matrix is shifted by `s = 1 + max|m_ii|` to a nonnegative one whose
/// Perron root, minus `s`, is the abscissa. Reducible inputs are split into
/// strongly connected components and the maximum over diagonal blocks is taken.
pub fn spectral_abscissa(m: &MetzlerMat) -> Result<f64> {
    let a = m.inner();
    let n = a.rows();
    if n == 0 {
        return Err(Error::Empty("spectral abscissa of a 0x0 matrix".into()));
    }
    let shift = 1.0 + a.diagonal().iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
    let mut best = f64::NEG_INFINITY;
    for comp in strongly_connected_components(a) {
        let value = if comp.len() == 1 {
            a[(comp[0], comp[0])]
        } else {
            let block = a.submatrix(&comp, &comp).shift_diag(shift)?;
            perron_root(&block)? - shift
        };
        best = best.max(value);
    }
    Ok(best)
}

/// Perron root of an irreducible nonnegative matrix with positive diagonal.
///
/// Power iteration with Collatz–Wielandt bounds as the stopping test; when the
/// spectral gap is too small for that to finish within budget, the estimate is
/// refined by Noda's shift-and-invert iteration.
pub fn perron_root(b: &Mat) -> Result<f64> {
    let n = b.rows();
    let mut x = vec![1.0 / n as f64; n];
    let cap = POWER_ITER_CAP.min((POWER_WORK_BUDGET / (n * n).max(1)).max(200));
    for _ in 0..cap {
        let y = b.mul_vec(&x);
        let (lo, hi) = collatz_wielandt(&x, &y);
        if hi - lo <= PERRON_TOL * hi.abs().max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
        let total: f64 = y.iter().sum();
        if !(total > 0.0) || y.iter().any(|v| !(*v > 0.0)) {
            x = vec![1.0 / n as f64; n];
            break;
        }
        x = y.into_iter().map(|v| v / total).collect();
    }
    noda(b, x)
}

fn noda(b: &Mat, mut x: Vec<f64>) -> Result<f64> {
    let n = b.rows();
    let mut best_hi = f64::INFINITY;
    for _ in 0..NODA_ITER_CAP {
        let y = b.mul_vec(&x);
        let (lo, hi) = collatz_wielandt(&x, &y);
        best_hi = best_hi.min(hi);
        if hi - lo <= PERRON_TOL * hi.abs().max(1.0) {
            return Ok(0.5 * (lo + hi));
        }
        let mut shifted = b.scale(-1.0);
        for i in 0..n {
            shifted[(i, i)] += hi;
        }
        let z = match Lu::factor(&shifted) {
            Ok(lu) => lu.solve(&x),
            // hi coincides with the Perron root to working precision
            Err(Error::Singular) => return Ok(hi),
            Err(e) => return Err(e),
        };
        let total: f64 = z.iter().map(|v| v.abs()).sum();
        if !(total.is_finite() && total > 0.0) {
            return Ok(best_hi);
        }
        x = z.into_iter().map(|v| (v / total).abs().max(f64::MIN_POSITIVE)).collect();
    }
    Err(Error::NoConvergence { iterations: NODA_ITER_CAP })
}

fn collatz_wielandt(x: &[f64], y: &[f64]) -> (f64, f64) {
    x.iter().zip(y).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (xi, yi)| {
        let r = yi / xi;
        (lo.min(r), hi.max(r))
    })
}

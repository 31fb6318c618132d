use super::posy::Posynomial;
use crate::posmat::Mat;

/// `y ↦ log Σ_k exp(b_k + a_kᵀ y)`, the image of a posynomial under `x = e^y`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogSumExp {
    offsets: Vec<f64>,
    support: Vec<usize>,
    /// Per term: (position in `support`, exponent).
    rows: Vec<Vec<(usize, f64)>>,
}

/// Value, gradient and Hessian restricted to the support of a [`LogSumExp`].
#[derive(Clone, Debug)]
pub struct LocalEval {
    pub value: f64,
    pub grad: Vec<f64>,
    /// Row-major `k×k`, empty unless requested.
    pub hess: Vec<f64>,
}

impl LogSumExp {
    /// Builds from `(b_k, sparse a_k)` pairs. Variable indices are global.
    pub fn new(terms: Vec<(f64, Vec<(usize, f64)>)>) -> Self {
        let mut support: Vec<usize> = terms.iter().flat_map(|(_, a)| a.iter().map(|(j, _)| *j)).collect();
        support.sort_unstable();
        support.dedup();
        let mut offsets = Vec::with_capacity(terms.len());
        let mut rows = Vec::with_capacity(terms.len());
        for (b, a) in terms {
            offsets.push(b);
            rows.push(
                a.into_iter()
                    .filter(|(_, v)| *v != 0.0)
                    .map(|(j, v)| (support.binary_search(&j).expect("in support"), v))
                    .collect(),
            );
        }
        Self { offsets, support, rows }
    }

    pub fn from_posynomial(p: &Posynomial) -> Self {
        Self::new(
            p.terms()
                .iter()
                .map(|t| (t.coeff().ln(), t.exponents().iter().map(|(id, a)| (id.0, *a)).collect()))
                .collect(),
        )
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn num_terms(&self) -> usize {
        self.offsets.len()
    }

    /// Term `k` as `(b_k, a_k)` with global indices.
    pub fn term(&self, k: usize) -> (f64, Vec<(usize, f64)>) {
        (self.offsets[k], self.rows[k].iter().map(|(p, a)| (self.support[*p], *a)).collect())
    }

    fn exponents(&self, y: &[f64]) -> Vec<f64> {
        self.offsets
            .iter()
            .zip(&self.rows)
            .map(|(b, row)| b + row.iter().map(|(p, a)| a * y[self.support[*p]]).sum::<f64>())
            .collect()
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        lse(&self.exponents(y)).0
    }

    pub fn eval_local(&self, y: &[f64], hessian: bool) -> LocalEval {
        let e = self.exponents(y);
        let (value, weights) = lse(&e);
        let k = self.support.len();
        let mut grad = vec![0.0; k];
        for (w, row) in weights.iter().zip(&self.rows) {
            for (p, a) in row {
                grad[*p] += w * a;
            }
        }
        let mut hess = Vec::new();
        if hessian && self.offsets.len() > 1 {
            hess = vec![0.0; k * k];
            for (w, row) in weights.iter().zip(&self.rows) {
                for (p, a) in row {
                    let wa = w * a;
                    for (q, c) in row {
                        hess[p * k + q] += wa * c;
                    }
                }
            }
            for p in 0..k {
                for q in 0..k {
                    hess[p * k + q] -= grad[p] * grad[q];
                }
            }
        }
        LocalEval { value, grad, hess }
    }

    /// Dense gradient over `dim` variables.
    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let local = self.eval_local(y, false);
        let mut g = vec![0.0; y.len()];
        for (p, v) in self.support.iter().zip(local.grad) {
            g[*p] = v;
        }
        g
    }

    pub fn hessian(&self, y: &[f64]) -> Mat {
        let local = self.eval_local(y, true);
        let k = self.support.len();
        let mut h = Mat::zeros(y.len(), y.len());
        if local.hess.is_empty() {
            return h;
        }
        for p in 0..k {
            for q in 0..k {
                h[(self.support[p], self.support[q])] = local.hess[p * k + q];
            }
        }
        h
    }
}

/// Log-sum-exp with max subtraction; also returns the softmax weights.
fn lse(e: &[f64]) -> (f64, Vec<f64>) {
    let top = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return (top, vec![0.0; e.len()]);
    }
    let mut w: Vec<f64> = e.iter().map(|v| (v - top).exp()).collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    (top + sum.ln(), w)
}

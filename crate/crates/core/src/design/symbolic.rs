use crate::gpcore::{Monomial, Posynomial};

/// Small dense matrix of posynomial entries; `None` is a structural zero.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SymMat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Option<Posynomial>>,
}

impl SymMat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![None; rows * cols] }
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&Posynomial> {
        self.data[i * self.cols + j].as_ref()
    }

    pub fn set(&mut self, i: usize, j: usize, p: Option<Posynomial>) {
        self.data[i * self.cols + j] = p;
    }

    pub fn matmul(&self, other: &SymMat) -> SymMat {
        let mut out = SymMat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc: Option<Posynomial> = None;
                for k in 0..self.cols {
                    if let (Some(a), Some(b)) = (self.get(i, k), other.get(k, j)) {
                        acc = Some(add_opt(acc, a.mul(b)));
                    }
                }
                out.set(i, j, acc);
            }
        }
        out
    }
}

pub(crate) fn add_opt(acc: Option<Posynomial>, p: Posynomial) -> Posynomial {
    match acc {
        Some(a) => a.add(&p),
        None => p,
    }
}

/// Sparse column store for a lifted per-mode matrix: `cols[c] = [(row, entry)]`.
#[derive(Clone, Debug, Default)]
pub(crate) struct SymColumns {
    pub cols: Vec<Vec<(usize, Posynomial)>>,
}

impl SymColumns {
    /// Sum of all entries of column `c`.
    pub fn column_sum(&self, c: usize) -> Option<Posynomial> {
        let mut terms: Vec<Monomial> = Vec::new();
        for (_, p) in &self.cols[c] {
            terms.extend_from_slice(p.terms());
        }
        Posynomial::new(terms).ok()
    }
}

use crate::error::{Error, Result};

use super::Mat;

/// Kronecker product: block `(i, j)` of the result is `a[i][j] * b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (m, n) = (a.rows(), a.cols());
    let (p, q) = (b.rows(), b.cols());
    let mut out = Mat::zeros(m * p, n * q);
    for i in 0..m {
        for j in 0..n {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for r in 0..p {
                for c in 0..q {
                    out[(i * p + r, j * q + c)] = aij * b[(r, c)];
                }
            }
        }
    }
    out
}

/// Generalized Kronecker product with a uniform block size.
///
/// `blocks[i][j]` multiplies `a[i][j]`; every block must be `m1 x m2`.
pub fn gkron(a: &Mat, blocks: &[Vec<Mat>]) -> Result<Mat> {
    if blocks.len() != a.rows() || blocks.iter().any(|r| r.len() != a.cols()) {
        return Err(Error::DimensionMismatch(format!(
            "block grid must be {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let (m1, m2) = blocks
        .first()
        .and_then(|r| r.first())
        .map_or((0, 0), |b| (b.rows(), b.cols()));
    let row_dims = vec![m1; a.rows()];
    let col_dims = vec![m2; a.cols()];
    gkron_with(a, &row_dims, &col_dims, |i, j| Some(&blocks[i][j]))
}

/// Generalized Kronecker product with per-row heights and per-column widths.
///
/// Block `(i, j)` occupies `row_dims[i] x col_dims[j]`. The closure may return
/// `None` for positions where `a[i][j] == 0`; a missing block paired with a
/// nonzero weight is a dimension error.
pub fn gkron_with<'a, F>(a: &Mat, row_dims: &[usize], col_dims: &[usize], block: F) -> Result<Mat>
where
    F: Fn(usize, usize) -> Option<&'a Mat>,
{
    if row_dims.len() != a.rows() || col_dims.len() != a.cols() {
        return Err(Error::DimensionMismatch("block dimension lists do not match the weight matrix".into()));
    }
    let row_off = offsets(row_dims);
    let col_off = offsets(col_dims);
    let mut out = Mat::zeros(row_off[a.rows()], col_off[a.cols()]);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let b = block(i, j);
            if let Some(b) = b {
                if b.rows() != row_dims[i] || b.cols() != col_dims[j] {
                    return Err(Error::DimensionMismatch(format!(
                        "block ({i}, {j}) is {}x{}, expected {}x{}",
                        b.rows(),
                        b.cols(),
                        row_dims[i],
                        col_dims[j]
                    )));
                }
            }
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            let b = b.ok_or_else(|| Error::DimensionMismatch(format!("missing block ({i}, {j}) for nonzero weight")))?;
            for r in 0..b.rows() {
                for c in 0..b.cols() {
                    out[(row_off[i] + r, col_off[j] + c)] = aij * b[(r, c)];
                }
            }
        }
    }
    Ok(out)
}

/// Block-diagonal matrix of square inputs.
pub fn dirsum(mats: &[Mat]) -> Result<Mat> {
    if mats.is_empty() {
        return Err(Error::Empty("direct sum of zero matrices".into()));
    }
    if let Some(m) = mats.iter().find(|m| !m.is_square()) {
        return Err(Error::NotSquare { rows: m.rows(), cols: m.cols() });
    }
    Ok(block_diag(mats))
}

/// Block-diagonal stacking of arbitrary (possibly rectangular or empty) blocks.
pub fn block_diag(mats: &[Mat]) -> Mat {
    let rows: usize = mats.iter().map(Mat::rows).sum();
    let cols: usize = mats.iter().map(Mat::cols).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for m in mats {
        out.set_block(r0, c0, m);
        r0 += m.rows();
        c0 += m.cols();
    }
    out
}

pub(crate) fn offsets(dims: &[usize]) -> Vec<usize> {
    let mut off = Vec::with_capacity(dims.len() + 1);
    let mut acc = 0;
    off.push(0);
    for d in dims {
        acc += d;
        off.push(acc);
    }
    off
}

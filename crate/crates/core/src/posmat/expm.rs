use nalgebra::DMatrix;

use super::Mat;

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &Mat) -> Mat {
    assert!(a.is_square(), "expm of a non-square matrix");
    let n = a.rows();
    if n == 0 {
        return Mat::zeros(0, 0);
    }
    let m = DMatrix::from_row_slice(n, n, a.as_slice());
    let e = m.exp();
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = e[(i, j)];
        }
    }
    out
}

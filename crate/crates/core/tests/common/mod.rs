#![allow(dead_code)]

use nalgebra::DMatrix;
use posnet::mjls::{lifted_abscissa, MarkovGenerator, Mjls};
use posnet::posmat::Mat;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> Mat {
    let data = (0..rows * cols).map(|_| if rng.gen_bool(density) { rng.gen_range(0.0..1.0) } else { 0.0 }).collect();
    Mat::from_vec(rows, cols, data).unwrap()
}

pub fn random_metzler(rng: &mut ChaCha8Rng, n: usize) -> Mat {
    let mut a = random_mat(rng, n, n, 0.7);
    for i in 0..n {
        a[(i, i)] = -rng.gen_range(0.0..2.0);
    }
    a
}

/// Irreducible generator: a random cycle plus random extra rates.
pub fn random_generator(rng: &mut ChaCha8Rng, modes: usize) -> MarkovGenerator {
    let mut q = Mat::zeros(modes, modes);
    if modes > 1 {
        for i in 0..modes {
            q[(i, (i + 1) % modes)] = rng.gen_range(0.1..2.0);
            for j in 0..modes {
                if j != i && j != (i + 1) % modes && rng.gen_bool(0.5) {
                    q[(i, j)] = rng.gen_range(0.0..1.0);
                }
            }
        }
        for i in 0..modes {
            let s: f64 = (0..modes).filter(|j| *j != i).map(|j| q[(i, j)]).sum();
            q[(i, i)] = -s;
        }
    }
    MarkovGenerator::new(q).unwrap()
}

pub struct Dims {
    pub n: usize,
    pub modes: usize,
    pub s: usize,
    pub r: usize,
}

pub fn random_dims(rng: &mut ChaCha8Rng, max_n: usize, max_modes: usize) -> Dims {
    Dims {
        n: rng.gen_range(1..=max_n),
        modes: rng.gen_range(1..=max_modes),
        s: rng.gen_range(1..=3),
        r: rng.gen_range(1..=3),
    }
}

/// Random positive jump system, unshifted.
pub fn random_system(rng: &mut ChaCha8Rng, d: &Dims) -> Mjls {
    let gen = random_generator(rng, d.modes);
    let a = (0..d.modes).map(|_| random_metzler(rng, d.n)).collect();
    let b = (0..d.modes).map(|_| random_mat(rng, d.n, d.s, 0.7)).collect();
    let c = (0..d.modes).map(|_| random_mat(rng, d.r, d.n, 0.7)).collect();
    let e = (0..d.modes).map(|_| random_mat(rng, d.r, d.s, 0.5)).collect();
    Mjls::new(gen, a, b, c, e).unwrap()
}

/// Random system shifted so its decay rate lies in `[lo, hi)`.
pub fn random_stable(rng: &mut ChaCha8Rng, max_n: usize, max_modes: usize, lo: f64, hi: f64) -> Mjls {
    let d = random_dims(rng, max_n, max_modes);
    let m = random_system(rng, &d);
    let abscissa = lifted_abscissa(&m).unwrap();
    m.shifted(-abscissa - rng.gen_range(lo..hi))
}

/// `Πᵀ ⊗ I + ⊕ A_i` assembled entry by entry.
pub fn lifted_by_hand(m: &Mjls) -> DMatrix<f64> {
    let n = m.state_dim();
    let modes = m.modes();
    let mut out = DMatrix::zeros(n * modes, n * modes);
    for i in 0..modes {
        for j in 0..modes {
            for k in 0..n {
                out[(i * n + k, j * n + k)] += m.generator().rate(j, i);
            }
        }
        for r in 0..n {
            for c in 0..n {
                out[(i * n + r, i * n + c)] += m.a(i)[(r, c)];
            }
        }
    }
    out
}

/// Largest real part over all eigenvalues, from a dense Schur decomposition.
pub fn dense_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
}

pub fn to_dmatrix(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

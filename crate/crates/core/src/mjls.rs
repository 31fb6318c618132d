//! Positive Markov jump linear systems: the switching generator, lifted
//! matrices, mean stability, decay rate, L1-gain and the linear certificates
//! that witness them.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posmat::{block_diag, is_irreducible, kron, spectral_abscissa, Lu, Mat, MetzlerMat, NonnegMat};

/// Row-sum tolerance for generators.
pub const GENERATOR_ROW_TOL: f64 = 1e-12;
/// Slack a strict inequality must clear to count as satisfied.
pub const CERTIFICATE_FLOOR: f64 = 1e-12;

/// Infinitesimal generator of an irreducible continuous-time Markov chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Mat", into = "Mat")]
pub struct MarkovGenerator {
    rates: Mat,
}

impl MarkovGenerator {
    pub fn new(rates: Mat) -> Result<Self> {
        if !rates.is_square() || rates.rows() == 0 {
            return Err(Error::InvalidGenerator(format!(
                "generator must be square and nonempty, got {}x{}",
                rates.rows(),
                rates.cols()
            )));
        }
        if let Some((i, j, v)) = rates.metzler_violation() {
            return Err(Error::InvalidGenerator(format!("negative rate {v} at ({}, {})", i + 1, j + 1)));
        }
        for i in 0..rates.rows() {
            let sum: f64 = rates.row(i).iter().sum();
            if sum.abs() > GENERATOR_ROW_TOL {
                return Err(Error::InvalidGenerator(format!("row {} sums to {sum:e}", i + 1)));
            }
        }
        if !is_irreducible(&rates) {
            return Err(Error::InvalidGenerator("switching process is not irreducible".into()));
        }
        Ok(Self { rates })
    }

    /// Single-mode generator `[0]`.
    pub fn single() -> Self {
        Self { rates: Mat::zeros(1, 1) }
    }

    /// Two-mode generator with rates `1 -> 2` and `2 -> 1`.
    pub fn two_state(p12: f64, p21: f64) -> Result<Self> {
        Self::new(Mat::from_rows(&[[-p12, p12], [p21, -p21]])?)
    }

    pub fn modes(&self) -> usize {
        self.rates.rows()
    }

    pub fn rates(&self) -> &Mat {
        &self.rates
    }

    #[inline]
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.rates[(i, j)]
    }

    pub fn is_irreducible(&self) -> bool {
        is_irreducible(&self.rates)
    }

    /// Probability vector `p` with `pᵀ Π = 0`.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        let m = self.modes();
        // replace the last balance equation by the normalization
        let mut a = self.rates.transpose();
        for j in 0..m {
            a[(m - 1, j)] = 1.0;
        }
        let mut rhs = vec![0.0; m];
        rhs[m - 1] = 1.0;
        Ok(Lu::factor(&a)?.solve(&rhs))
    }

    /// Same chain with states relabeled: new state `k` is old state `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        Self::new(self.rates.submatrix(perm, perm))
    }
}

impl TryFrom<Mat> for MarkovGenerator {
    type Error = Error;

    fn try_from(m: Mat) -> Result<Self> {
        Self::new(m)
    }
}

impl From<MarkovGenerator> for Mat {
    fn from(g: MarkovGenerator) -> Mat {
        g.rates
    }
}

/// One failed sign check found by [`validate_positive`].
#[derive(Clone, Debug, PartialEq)]
pub struct PositivityViolation {
    /// Zero-based mode index.
    pub mode: usize,
    pub matrix: char,
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

impl fmt::Display for PositivityViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(mode {}, {}({},{}), {})",
            self.mode + 1,
            self.matrix,
            self.row + 1,
            self.col + 1,
            self.value
        )
    }
}

/// Exact sign checks: every `A_i` Metzler and every `B_i, C_i, D_i` nonnegative.
pub fn validate_positive(a: &[Mat], b: &[Mat], c: &[Mat], d: &[Mat]) -> std::result::Result<(), Vec<PositivityViolation>> {
    let mut out = Vec::new();
    for (mode, m) in a.iter().enumerate() {
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                if i != j && m[(i, j)] < 0.0 {
                    out.push(PositivityViolation { mode, matrix: 'A', row: i, col: j, value: m[(i, j)] });
                }
            }
        }
    }
    for (name, family) in [('B', b), ('C', c), ('D', d)] {
        for (mode, m) in family.iter().enumerate() {
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    if m[(i, j)] < 0.0 {
                        out.push(PositivityViolation { mode, matrix: name, row: i, col: j, value: m[(i, j)] });
                    }
                }
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Positive Markov jump linear system `ẋ = A_σ x + B_σ w`, `z = C_σ x + D_σ w`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mjls {
    generator: MarkovGenerator,
    a: Vec<MetzlerMat>,
    b: Vec<NonnegMat>,
    c: Vec<NonnegMat>,
    d: Vec<NonnegMat>,
}

impl Mjls {
    pub fn new(generator: MarkovGenerator, a: Vec<Mat>, b: Vec<Mat>, c: Vec<Mat>, d: Vec<Mat>) -> Result<Self> {
        let modes = generator.modes();
        for (name, len) in [("A", a.len()), ("B", b.len()), ("C", c.len()), ("D", d.len())] {
            if len != modes {
                return Err(Error::DimensionMismatch(format!("{len} {name} matrices for {modes} modes")));
            }
        }
        let n = a[0].rows();
        let s = b[0].cols();
        let r = c[0].rows();
        for i in 0..modes {
            let ok = a[i].rows() == n
                && a[i].cols() == n
                && b[i].rows() == n
                && b[i].cols() == s
                && c[i].rows() == r
                && c[i].cols() == n
                && d[i].rows() == r
                && d[i].cols() == s;
            if !ok {
                return Err(Error::DimensionMismatch(format!(
                    "mode {} matrices do not share dims n={n}, s={s}, r={r}",
                    i + 1
                )));
            }
        }
        if let Err(v) = validate_positive(&a, &b, &c, &d) {
            let list: Vec<String> = v.iter().map(ToString::to_string).collect();
            return Err(Error::PositivityViolation(list.join(", ")));
        }
        Ok(Self {
            generator,
            a: a.into_iter().map(|m| MetzlerMat::new(m).expect("checked")).collect(),
            b: b.into_iter().map(|m| NonnegMat::new(m).expect("checked")).collect(),
            c: c.into_iter().map(|m| NonnegMat::new(m).expect("checked")).collect(),
            d: d.into_iter().map(|m| NonnegMat::new(m).expect("checked")).collect(),
        })
    }

    /// System without disturbance input or performance output.
    pub fn autonomous(generator: MarkovGenerator, a: Vec<Mat>) -> Result<Self> {
        let n = a.first().map_or(0, Mat::rows);
        let m = a.len();
        Self::new(
            generator,
            a,
            vec![Mat::zeros(n, 0); m],
            vec![Mat::zeros(0, n); m],
            vec![Mat::zeros(0, 0); m],
        )
    }

    pub fn generator(&self) -> &MarkovGenerator {
        &self.generator
    }

    pub fn modes(&self) -> usize {
        self.generator.modes()
    }

    pub fn state_dim(&self) -> usize {
        self.a[0].dim()
    }

    pub fn input_dim(&self) -> usize {
        self.b[0].inner().cols()
    }

    pub fn output_dim(&self) -> usize {
        self.c[0].inner().rows()
    }

    pub fn a(&self, mode: usize) -> &Mat {
        self.a[mode].inner()
    }

    pub fn b(&self, mode: usize) -> &Mat {
        self.b[mode].inner()
    }

    pub fn c(&self, mode: usize) -> &Mat {
        self.c[mode].inner()
    }

    pub fn d(&self, mode: usize) -> &Mat {
        self.d[mode].inner()
    }

    /// Same system with every `A_i` replaced by `A_i + λ I`.
    pub fn shifted(&self, lambda: f64) -> Self {
        Self { a: self.a.iter().map(|m| m.shifted(lambda)).collect(), ..self.clone() }
    }

    /// Relabels modes: new mode `k` is old mode `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let pick = |v: &[Mat]| perm.iter().map(|&p| v[p].clone()).collect::<Vec<_>>();
        let a: Vec<Mat> = self.a.iter().map(|m| m.inner().clone()).collect();
        let b: Vec<Mat> = self.b.iter().map(|m| m.inner().clone()).collect();
        let c: Vec<Mat> = self.c.iter().map(|m| m.inner().clone()).collect();
        let d: Vec<Mat> = self.d.iter().map(|m| m.inner().clone()).collect();
        Self::new(self.generator.permuted(perm)?, pick(&a), pick(&b), pick(&c), pick(&d))
    }

    /// Multiplies every `B_i` by `alpha ≥ 0`.
    pub fn with_scaled_input(&self, alpha: f64) -> Result<Self> {
        let b = self.b.iter().map(|m| NonnegMat::new(m.inner().scale(alpha))).collect::<Result<_>>()?;
        Ok(Self { b, ..self.clone() })
    }
}

/// Lifted (mode-augmented) matrices of a jump system.
#[derive(Clone, Debug, PartialEq)]
pub struct Lifted {
    /// `Πᵀ ⊗ I_n + ⊕ A_i`.
    pub a: MetzlerMat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

pub fn lift(m: &Mjls) -> Lifted {
    let n = m.state_dim();
    let pi_t = m.generator.rates().transpose();
    let a_sum = block_diag(&m.a.iter().map(|x| x.inner().clone()).collect::<Vec<_>>());
    let a = kron(&pi_t, &Mat::identity(n)).add(&a_sum).expect("dims agree");
    Lifted {
        a: MetzlerMat::new(a).expect("lifted matrix of a positive system is Metzler"),
        b: block_diag(&m.b.iter().map(|x| x.inner().clone()).collect::<Vec<_>>()),
        c: block_diag(&m.c.iter().map(|x| x.inner().clone()).collect::<Vec<_>>()),
        d: block_diag(&m.d.iter().map(|x| x.inner().clone()).collect::<Vec<_>>()),
    }
}

pub fn lifted_abscissa(m: &Mjls) -> Result<f64> {
    spectral_abscissa(&lift(m).a)
}

/// Mean stability: the lifted matrix is Hurwitz.
pub fn is_mean_stable(m: &Mjls) -> Result<bool> {
    Ok(lifted_abscissa(m)? < 0.0)
}

/// Supremum exponential decay rate, `-abscissa(𝒜)`.
pub fn decay_rate(m: &Mjls) -> Result<f64> {
    let abscissa = lifted_abscissa(m)?;
    if abscissa >= 0.0 {
        return Err(Error::NotStable { abscissa });
    }
    Ok(-abscissa)
}

/// Positive vectors `v_1..v_M` with `v_iᵀ A_i + Σ_j π_ij v_jᵀ + λ v_iᵀ < 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityCertificate {
    pub vectors: Vec<Vec<f64>>,
    pub lambda: f64,
    /// Smallest slack over all inequalities; positive when the certificate holds.
    pub margin: f64,
}

impl StabilityCertificate {
    /// Recomputes the slack of `vectors` against `m` at rate `lambda`.
    pub fn slack(m: &Mjls, vectors: &[Vec<f64>], lambda: f64) -> f64 {
        let modes = m.modes();
        let mut margin = f64::INFINITY;
        for i in 0..modes {
            let mut row = m.a(i).vec_mul(&vectors[i]);
            for (k, r) in row.iter_mut().enumerate() {
                for (j, v) in vectors.iter().enumerate() {
                    *r += m.generator.rate(i, j) * v[k];
                }
                *r += lambda * vectors[i][k];
                margin = margin.min(-*r);
            }
        }
        margin
    }

    pub fn holds(&self) -> bool {
        self.margin > CERTIFICATE_FLOOR && self.vectors.iter().flatten().all(|v| *v > 0.0)
    }
}

/// Builds a decay-rate certificate from `vᵀ = 𝟙ᵀ (-(𝒜 + λI))⁻¹`.
pub fn stability_certificate(m: &Mjls, lambda: f64) -> Result<StabilityCertificate> {
    let lifted = lift(m).a.shifted(lambda);
    let abscissa = spectral_abscissa(&lifted)?;
    if abscissa >= 0.0 {
        return Err(Error::Infeasible(format!(
            "requested rate {lambda} is not below the decay rate {}",
            lambda - abscissa
        )));
    }
    let lu = Lu::factor(&lifted.inner().scale(-1.0))?;
    lu.check_conditioning()?;
    let ones = vec![1.0; lifted.dim()];
    let u = lu.solve_transpose(&ones);
    let top = u.iter().cloned().fold(0.0, f64::max);
    if !(top > 0.0) || u.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Infeasible("certificate vector lost positivity".into()));
    }
    let n = m.state_dim();
    let vectors: Vec<Vec<f64>> = u.chunks(n).map(|c| c.iter().map(|v| v / top).collect()).collect();
    let margin = StabilityCertificate::slack(m, &vectors, lambda);
    let cert = StabilityCertificate { vectors, lambda, margin };
    if !cert.holds() {
        return Err(Error::Infeasible(format!("certificate margin {margin:e} below the floor")));
    }
    Ok(cert)
}

/// Column-wise worst-case gains `𝟙ᵀ(𝒟 - 𝒞𝒜⁻¹ℬ)`, one entry per (mode, input channel).
pub fn gain_profile(m: &Mjls) -> Result<Vec<f64>> {
    let lifted = lift(m);
    let abscissa = spectral_abscissa(&lifted.a)?;
    if abscissa >= 0.0 {
        return Err(Error::NotStable { abscissa });
    }
    let lu = Lu::factor(lifted.a.inner())?;
    lu.check_conditioning()?;
    let c_sum = lifted.c.column_sums();
    let y = lu.solve_transpose(&c_sum);
    let yb = lifted.b.vec_mul(&y);
    let d_sum = lifted.d.column_sums();
    Ok(d_sum.iter().zip(&yb).map(|(d, v)| d - v).collect())
}

/// L1-gain of a mean stable positive jump system.
pub fn l1_gain(m: &Mjls) -> Result<f64> {
    Ok(gain_profile(m)?.into_iter().fold(0.0, f64::max))
}

/// L1-gain of a positive LTI system `(A, B, C, D)` via `max 𝟙ᵀ(D - C A⁻¹ B)`.
pub fn lti_l1_gain(a: &Mat, b: &Mat, c: &Mat, d: &Mat) -> Result<f64> {
    let sys = Mjls::new(MarkovGenerator::single(), vec![a.clone()], vec![b.clone()], vec![c.clone()], vec![d.clone()])?;
    l1_gain(&sys)
}

/// Positive vectors satisfying both strict inequality families of the L1-gain test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainCertificate {
    pub vectors: Vec<Vec<f64>>,
    pub gamma: f64,
    /// Slack of `v_iᵀA_i + Σ π_ij v_jᵀ + 𝟙ᵀC_i < 0`.
    pub state_margin: f64,
    /// Slack of `v_iᵀB_i + 𝟙ᵀD_i < γ𝟙ᵀ`.
    pub input_margin: f64,
}

impl GainCertificate {
    pub fn slacks(m: &Mjls, vectors: &[Vec<f64>], gamma: f64) -> (f64, f64) {
        let mut state = f64::INFINITY;
        let mut input = f64::INFINITY;
        for i in 0..m.modes() {
            let mut row = m.a(i).vec_mul(&vectors[i]);
            let c_sum = m.c(i).column_sums();
            for (k, r) in row.iter_mut().enumerate() {
                for (j, v) in vectors.iter().enumerate() {
                    *r += m.generator.rate(i, j) * v[k];
                }
                *r += c_sum[k];
                state = state.min(-*r);
            }
            let vb = m.b(i).vec_mul(&vectors[i]);
            let d_sum = m.d(i).column_sums();
            for (x, y) in vb.iter().zip(&d_sum) {
                input = input.min(gamma - x - y);
            }
        }
        (state, input)
    }

    pub fn holds(&self) -> bool {
        self.state_margin > CERTIFICATE_FLOOR
            && self.input_margin > CERTIFICATE_FLOOR
            && self.vectors.iter().flatten().all(|v| *v > 0.0)
    }
}

/// Builds `vᵀ = 𝟙ᵀ𝒞(-𝒜⁻¹) + ε𝟙ᵀ(-𝒜⁻¹)` with `ε` splitting the gap to `γ`.
pub fn gain_certificate(m: &Mjls, gamma: f64) -> Result<GainCertificate> {
    let gain = l1_gain(m)?;
    if !(gamma > gain) {
        return Err(Error::Infeasible(format!("gamma {gamma} does not exceed the L1-gain {gain}")));
    }
    let lifted = lift(m);
    let neg = lifted.a.inner().scale(-1.0);
    let lu = Lu::factor(&neg)?;
    let dim = neg.rows();
    let base = lu.solve_transpose(&lifted.c.column_sums());
    let extra = lu.solve_transpose(&vec![1.0; dim]);
    let push = lifted.b.vec_mul(&extra).into_iter().fold(0.0, f64::max);
    let eps = if push > 0.0 { 0.5 * (gamma - gain) / push } else { 1.0 };
    let v: Vec<f64> = base.iter().zip(&extra).map(|(a, b)| a + eps * b).collect();
    let n = m.state_dim();
    let vectors: Vec<Vec<f64>> = v.chunks(n).map(<[f64]>::to_vec).collect();
    let (state_margin, input_margin) = GainCertificate::slacks(m, &vectors, gamma);
    let cert = GainCertificate { vectors, gamma, state_margin, input_margin };
    if !cert.holds() {
        return Err(Error::Infeasible(format!(
            "certificate margins ({state_margin:e}, {input_margin:e}) below the floor"
        )));
    }
    Ok(cert)
}

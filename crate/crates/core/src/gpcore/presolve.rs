use std::collections::BTreeMap;

use super::logsumexp::LogSumExp;
use super::posy::{Monomial, Posynomial};
use super::program::GeometricProgram;

/// Absolute tolerance on log-scale consistency of eliminated equalities.
const CONSISTENCY_TOL: f64 = 1e-9;

/// Log-domain program after eliminating ties `x_a = c·x_b` and fixed variables.
#[derive(Clone, Debug)]
pub(crate) struct Reduced {
    /// Per original variable: reduced index (or `None` when fixed) and additive log offset.
    pub map: Vec<(Option<usize>, f64)>,
    pub dim: usize,
    pub objective: LogSumExp,
    pub inequalities: Vec<LogSumExp>,
    /// Sparse affine equalities `Σ a_j u_j = h`.
    pub eq_rows: Vec<Vec<(usize, f64)>>,
    pub eq_rhs: Vec<f64>,
}

impl Reduced {
    pub fn expand(&self, u: &[f64]) -> Vec<f64> {
        self.map.iter().map(|(idx, off)| (idx.map_or(0.0, |i| u[i]) + off).exp()).collect()
    }
}

struct TieForest {
    parent: Vec<usize>,
    offset: Vec<f64>,
    fixed: Vec<Option<f64>>,
}

impl TieForest {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), offset: vec![0.0; n], fixed: vec![None; n] }
    }

    /// Root `r` and offset `o` with `y_v = y_r + o`.
    fn find(&mut self, v: usize) -> (usize, f64) {
        let p = self.parent[v];
        if p == v {
            return (v, 0.0);
        }
        let (r, o) = self.find(p);
        self.parent[v] = r;
        self.offset[v] += o;
        (r, self.offset[v])
    }

    fn fix(&mut self, v: usize, value: f64) -> Result<(), String> {
        let (r, o) = self.find(v);
        let root_value = value - o;
        match self.fixed[r] {
            Some(old) if (old - root_value).abs() > CONSISTENCY_TOL * old.abs().max(1.0) => {
                Err(format!("inconsistent fixed values {} and {}", old.exp(), root_value.exp()))
            }
            _ => {
                self.fixed[r] = Some(root_value);
                Ok(())
            }
        }
    }

    /// Records `y_a = y_b + d`.
    fn tie(&mut self, a: usize, b: usize, d: f64) -> Result<(), String> {
        let (ra, oa) = self.find(a);
        let (rb, ob) = self.find(b);
        if ra == rb {
            if (oa - ob - d).abs() > CONSISTENCY_TOL * d.abs().max(1.0) {
                return Err("inconsistent cycle of monomial equalities".into());
            }
            return Ok(());
        }
        self.parent[ra] = rb;
        self.offset[ra] = ob + d - oa;
        if let Some(fa) = self.fixed[ra].take() {
            self.fix(ra, fa)?;
        }
        Ok(())
    }
}

type AffineTerm = (f64, Vec<(usize, f64)>);

fn substitute(m: &Monomial, map: &[(Option<usize>, f64)]) -> AffineTerm {
    let mut b = m.coeff().ln();
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for (id, a) in m.exponents() {
        let (idx, off) = map[id.0];
        b += a * off;
        if let Some(i) = idx {
            *acc.entry(i).or_insert(0.0) += a;
        }
    }
    (b, acc.into_iter().filter(|(_, a)| a.abs() > 1e-14).collect())
}

/// Terms of a posynomial in reduced coordinates with duplicate exponent rows merged.
fn reduce_posynomial(p: &Posynomial, map: &[(Option<usize>, f64)]) -> Vec<AffineTerm> {
    let mut terms: Vec<AffineTerm> = p.terms().iter().map(|t| substitute(t, map)).collect();
    terms.sort_by(|x, y| {
        x.1.len().cmp(&y.1.len()).then_with(|| {
            for (u, v) in x.1.iter().zip(&y.1) {
                let c = u.0.cmp(&v.0).then(u.1.total_cmp(&v.1));
                if c.is_ne() {
                    return c;
                }
            }
            std::cmp::Ordering::Equal
        })
    });
    let mut out: Vec<AffineTerm> = Vec::with_capacity(terms.len());
    for (b, a) in terms {
        match out.last_mut() {
            Some((lb, la)) if *la == a => {
                let hi = lb.max(b);
                *lb = hi + ((*lb - hi).exp() + (b - hi).exp()).ln();
            }
            _ => out.push((b, a)),
        }
    }
    out
}

fn log_sum(terms: &[AffineTerm]) -> f64 {
    let hi = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    hi + terms.iter().map(|t| (t.0 - hi).exp()).sum::<f64>().ln()
}

/// Eliminates two-variable ties and single-variable equalities, drops constant
/// rows, and maps everything to log space. `Err` carries an infeasibility reason.
pub(crate) fn presolve(gp: &GeometricProgram) -> Result<Reduced, String> {
    let n = gp.vars.len();
    let mut forest = TieForest::new(n);
    let mut general = Vec::new();
    for (k, g) in gp.equalities.iter().enumerate() {
        let e = g.exponents();
        let lc = g.coeff().ln();
        match e {
            [] => {
                if lc.abs() > CONSISTENCY_TOL {
                    return Err(format!("constant equality {} is violated", gp.equality_labels[k]));
                }
            }
            [(a, p)] => forest.fix(a.0, -lc / p)?,
            [(a, p), (b, q)] if *p == -*q => forest.tie(a.0, b.0, -lc / p)?,
            _ => general.push(g),
        }
    }
    let mut reduced_index = vec![None; n];
    let mut dim = 0;
    let mut map = Vec::with_capacity(n);
    for v in 0..n {
        let (r, o) = forest.find(v);
        match forest.fixed[r] {
            Some(val) => map.push((None, val + o)),
            None => {
                let idx = *reduced_index[r].get_or_insert_with(|| {
                    dim += 1;
                    dim - 1
                });
                map.push((Some(idx), o));
            }
        }
    }
    let mut eq_rows = Vec::new();
    let mut eq_rhs = Vec::new();
    for g in general {
        let (b, a) = substitute(g, &map);
        if a.is_empty() {
            if b.abs() > CONSISTENCY_TOL {
                return Err("monomial equalities are inconsistent".into());
            }
        } else {
            eq_rows.push(a);
            eq_rhs.push(-b);
        }
    }
    let mut inequalities = Vec::new();
    for (k, p) in gp.inequalities.iter().enumerate() {
        let terms = reduce_posynomial(p, &map);
        if terms.iter().all(|t| t.1.is_empty()) {
            if log_sum(&terms) > CONSISTENCY_TOL {
                return Err(format!("constraint {} does not depend on free variables and is violated", gp.inequality_labels[k]));
            }
            continue;
        }
        inequalities.push(LogSumExp::new(terms));
    }
    let objective = LogSumExp::new(reduce_posynomial(&gp.objective, &map));
    Ok(Reduced { map, dim, objective, inequalities, eq_rows, eq_rhs })
}

use std::cmp::Ordering;
use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a positive scalar decision variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

/// Ordered name table; ids are dense and assigned in registration order.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct VarTable {
    names: Vec<String>,
    index: HashMap<String, VarId>,
}

impl TryFrom<Vec<String>> for VarTable {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        let mut t = VarTable::new();
        for n in names {
            t.register(n)?;
        }
        Ok(t)
    }
}

impl From<VarTable> for Vec<String> {
    fn from(t: VarTable) -> Self {
        t.names
    }
}

impl VarTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>) -> Result<VarId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::MalformedProgram(format!("variable {name} registered twice")));
        }
        let id = VarId(self.names.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn get(&self, name: &str) -> Option<VarId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: VarId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// `c · ∏ x_j^{a_j}` with `c > 0`. Exponents are sorted by variable and never zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monomial {
    coeff: f64,
    exps: Vec<(VarId, f64)>,
}

pub type MonomialTerm = Monomial;

impl Monomial {
    pub fn new(coeff: f64, exps: impl IntoIterator<Item = (VarId, f64)>) -> Result<Self> {
        if !(coeff > 0.0 && coeff.is_finite()) {
            return Err(Error::MalformedProgram(format!("monomial coefficient {coeff} is not positive")));
        }
        let mut v: Vec<(VarId, f64)> = Vec::new();
        for (id, a) in exps {
            if !a.is_finite() {
                return Err(Error::MalformedProgram(format!("exponent {a} of {id} is not finite")));
            }
            v.push((id, a));
        }
        Ok(Self { coeff, exps: normalize(v) })
    }

    pub fn constant(coeff: f64) -> Result<Self> {
        Self::new(coeff, [])
    }

    pub fn var(id: VarId) -> Self {
        Self { coeff: 1.0, exps: vec![(id, 1.0)] }
    }

    pub fn power(id: VarId, a: f64) -> Self {
        Self { coeff: 1.0, exps: normalize(vec![(id, a)]) }
    }

    pub fn coeff(&self) -> f64 {
        self.coeff
    }

    pub fn exponents(&self) -> &[(VarId, f64)] {
        &self.exps
    }

    pub fn exponent(&self, id: VarId) -> f64 {
        self.exps.iter().find(|(v, _)| *v == id).map_or(0.0, |(_, a)| *a)
    }

    pub fn is_constant(&self) -> bool {
        self.exps.is_empty()
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let mut v = self.exps.clone();
        v.extend_from_slice(&other.exps);
        Monomial { coeff: self.coeff * other.coeff, exps: normalize(v) }
    }

    pub fn pow(&self, a: f64) -> Monomial {
        Monomial { coeff: self.coeff.powf(a), exps: normalize(self.exps.iter().map(|(v, e)| (*v, e * a)).collect()) }
    }

    pub fn inv(&self) -> Monomial {
        self.pow(-1.0)
    }

    pub fn scale(&self, c: f64) -> Result<Monomial> {
        Monomial::new(self.coeff * c, self.exps.clone())
    }

    pub fn evaluate(&self, values: &[f64]) -> Result<f64> {
        let mut out = self.coeff;
        for (id, a) in &self.exps {
            out *= lookup(values, *id)?.powf(*a);
        }
        Ok(out)
    }

    fn cmp_exps(&self, other: &Monomial) -> Ordering {
        for (x, y) in self.exps.iter().zip(&other.exps) {
            let c = x.0.cmp(&y.0).then_with(|| x.1.total_cmp(&y.1));
            if c != Ordering::Equal {
                return c;
            }
        }
        self.exps.len().cmp(&other.exps.len())
    }
}

fn lookup(values: &[f64], id: VarId) -> Result<f64> {
    let v = *values.get(id.0).ok_or_else(|| Error::MissingVariable(id.to_string()))?;
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::NonPositiveValue { name: id.to_string(), value: v });
    }
    Ok(v)
}

fn normalize(mut v: Vec<(VarId, f64)>) -> Vec<(VarId, f64)> {
    v.sort_by_key(|(id, _)| *id);
    let mut out: Vec<(VarId, f64)> = Vec::with_capacity(v.len());
    for (id, a) in v {
        match out.last_mut() {
            Some((last, acc)) if *last == id => *acc += a,
            _ => out.push((id, a)),
        }
    }
    out.retain(|(_, a)| *a != 0.0);
    out
}

/// Nonempty sum of monomials in canonical form: terms sorted by exponent
/// vector, identical exponent vectors merged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Posynomial {
    terms: Vec<Monomial>,
}

impl Posynomial {
    pub fn new(terms: Vec<Monomial>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::MalformedProgram("posynomial with no terms".into()));
        }
        Ok(Self { terms: canonical(terms) })
    }

    pub fn constant(c: f64) -> Result<Self> {
        Ok(Monomial::constant(c)?.into())
    }

    pub fn terms(&self) -> &[Monomial] {
        &self.terms
    }

    pub fn is_monomial(&self) -> bool {
        self.terms.len() == 1
    }

    pub fn add(&self, other: &Posynomial) -> Posynomial {
        let mut t = self.terms.clone();
        t.extend_from_slice(&other.terms);
        Posynomial { terms: canonical(t) }
    }

    pub fn add_monomial(&self, m: Monomial) -> Posynomial {
        let mut t = self.terms.clone();
        t.push(m);
        Posynomial { terms: canonical(t) }
    }

    pub fn mul(&self, other: &Posynomial) -> Posynomial {
        let mut t = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                t.push(a.mul(b));
            }
        }
        Posynomial { terms: canonical(t) }
    }

    pub fn mul_monomial(&self, m: &Monomial) -> Posynomial {
        Posynomial { terms: canonical(self.terms.iter().map(|t| t.mul(m)).collect()) }
    }

    pub fn scale(&self, c: f64) -> Result<Posynomial> {
        Ok(Posynomial { terms: self.terms.iter().map(|t| t.scale(c)).collect::<Result<_>>()? })
    }

    pub fn evaluate(&self, values: &[f64]) -> Result<f64> {
        let mut sum = 0.0;
        for t in &self.terms {
            sum += t.evaluate(values)?;
        }
        Ok(sum)
    }

    /// Variables referenced by any term, ascending.
    pub fn variables(&self) -> Vec<VarId> {
        let mut v: Vec<VarId> = self.terms.iter().flat_map(|t| t.exps.iter().map(|(id, _)| *id)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

impl From<Monomial> for Posynomial {
    fn from(m: Monomial) -> Self {
        Posynomial { terms: vec![m] }
    }
}

fn canonical(mut terms: Vec<Monomial>) -> Vec<Monomial> {
    terms.sort_by(Monomial::cmp_exps);
    let mut out: Vec<Monomial> = Vec::with_capacity(terms.len());
    for t in terms {
        match out.last_mut() {
            Some(last) if last.exps == t.exps => last.coeff += t.coeff,
            _ => out.push(t),
        }
    }
    out
}

pub fn evaluate(p: &Posynomial, values: &[f64]) -> Result<f64> {
    p.evaluate(values)
}

/// Matrix of posynomial entries; `None` stands for a structural zero.
pub type PosyMatrix = Vec<Vec<Option<Posynomial>>>;

/// Entrywise `F ≤ X₀` rewritten as `F̃ ≤ 𝟙` with `F̃_kl = F_kl / X₀_kl`.
pub fn divide_through(f: &PosyMatrix, x0: &[Vec<Monomial>]) -> Result<PosyMatrix> {
    if f.len() != x0.len() || f.iter().zip(x0).any(|(a, b)| a.len() != b.len()) {
        return Err(Error::DimensionMismatch("divide_through operands differ in shape".into()));
    }
    Ok(f.iter()
        .zip(x0)
        .map(|(row, den)| {
            row.iter().zip(den).map(|(p, d)| p.as_ref().map(|p| p.mul_monomial(&d.inv()))).collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monomial_evaluation() {
        let (x, y) = (VarId(0), VarId(1));
        let m = Monomial::new(3.0, [(x, 2.0), (y, -1.0)]).unwrap();
        assert_eq!(m.evaluate(&[2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(Posynomial::constant(5.0).unwrap().evaluate(&[]).unwrap(), 5.0);
        assert!(matches!(m.evaluate(&[2.0]), Err(Error::MissingVariable(_))));
        assert!(matches!(m.evaluate(&[2.0, -1.0]), Err(Error::NonPositiveValue { .. })));
        assert!(Monomial::new(0.0, []).is_err());
    }

    #[test]
    fn canonical_merging() {
        let x = VarId(0);
        let p = Posynomial::new(vec![Monomial::var(x), Monomial::var(x)]).unwrap();
        assert_eq!(p.terms().len(), 1);
        assert_eq!(p.terms()[0].coeff(), 2.0);
        let q = Posynomial::new(vec![Monomial::power(x, 0.0), Monomial::constant(1.0).unwrap()]).unwrap();
        assert_eq!(q, Posynomial::constant(2.0).unwrap());
    }

    #[test]
    fn division_cancels_exponents() {
        let (x, y, z) = (VarId(0), VarId(1), VarId(2));
        let f = vec![vec![Some(Posynomial::from(Monomial::var(x).mul(&Monomial::var(y))))]];
        let out = divide_through(&f, &[vec![Monomial::var(y)]]).unwrap();
        assert_eq!(out[0][0], Some(Posynomial::from(Monomial::var(x))));
        let f = vec![vec![Some(Posynomial::new(vec![Monomial::var(x), Monomial::var(y)]).unwrap())]];
        let out = divide_through(&f, &[vec![Monomial::var(z)]]).unwrap();
        let expected = Posynomial::new(vec![
            Monomial::new(1.0, [(x, 1.0), (z, -1.0)]).unwrap(),
            Monomial::new(1.0, [(y, 1.0), (z, -1.0)]).unwrap(),
        ])
        .unwrap();
        assert_eq!(out[0][0], Some(expected));
    }

    #[test]
    fn table_rejects_duplicates() {
        let mut t = VarTable::new();
        let a = t.register("a").unwrap();
        assert_eq!(t.get("a"), Some(a));
        assert!(t.register("a").is_err());
        assert_eq!(t.name(a), "a");
    }
}

//! Moment oracles and non-commutative polynomials with matrix coefficients.
//!
//! A word `b₀ x_{l₁} b₁ ⋯ x_{lₙ} bₙ` is passed as a label slice plus `n + 1`
//! coefficients. Every oracle is a `B`-bimodule map onto `B = M_d(ℂ)`.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::dual::{CMat, Dual, DualMatrix, Ring, C64};
use crate::error::{Error, Result};

pub trait MomentOracle: Send + Sync {
    /// Size `d` of `B = M_d(ℂ)`.
    fn dim(&self) -> usize;

    /// `𝔼(b₀ x_{w₁} b₁ ⋯ x_{wₙ} bₙ)`.
    fn moment(&self, word: &[usize], coeffs: &[CMat]) -> Result<CMat>;

    fn has_inf(&self) -> bool {
        false
    }

    /// `𝔼′(b₀ x_{w₁} b₁ ⋯ x_{wₙ} bₙ)`.
    fn inf_moment(&self, _word: &[usize], _coeffs: &[CMat]) -> Result<CMat> {
        Err(Error::MissingInf)
    }

    /// `(𝔼 + t𝔼′)` applied to a word with dual coefficients. With
    /// `include_inf = false` only `𝔼` is used and the result is the
    /// directional derivative along the coefficients' `t` parts.
    fn moment_dual(
        &self,
        word: &[usize],
        coeffs: &[DualMatrix],
        include_inf: bool,
    ) -> Result<DualMatrix> {
        let std: Vec<CMat> = coeffs.iter().map(|c| c.std.clone()).collect();
        let value = self.moment(word, &std)?;
        let mut inf = value.zero_like();
        // coefficients at both ends factor out of the expectation
        let n = word.len();
        if n == 0 {
            return Ok(Dual::new(value, coeffs[0].inf.clone()));
        }
        let inner: Vec<CMat> = {
            let mut v = std.clone();
            v[0] = CMat::identity(self.dim(), self.dim());
            v[n] = CMat::identity(self.dim(), self.dim());
            v
        };
        let core = self.moment(word, &inner)?;
        inf += &coeffs[0].inf * &core * &std[n] + &std[0] * &core * &coeffs[n].inf;
        for j in 1..n {
            if coeffs[j].inf.iter().all(|v| *v == C64::new(0.0, 0.0)) {
                continue;
            }
            let mut c = std.clone();
            c[j] = coeffs[j].inf.clone();
            inf += self.moment(word, &c)?;
        }
        if include_inf && self.has_inf() {
            inf += self.inf_moment(word, &std)?;
        }
        Ok(Dual::new(value, inf))
    }
}

pub(crate) fn check_word(d: usize, word: &[usize], coeffs: &[CMat]) -> Result<()> {
    if coeffs.len() != word.len() + 1 {
        return Err(Error::Dimension(format!(
            "{} coefficients for a word of length {}",
            coeffs.len(),
            word.len()
        )));
    }
    if let Some(c) = coeffs.iter().find(|c| c.nrows() != d || c.ncols() != d) {
        return Err(Error::Dimension(format!(
            "coefficient is {}x{}, expected {d}x{d}",
            c.nrows(),
            c.ncols()
        )));
    }
    Ok(())
}

/// Hashable fingerprint of a word with coefficients.
pub(crate) fn word_key(word: &[usize], coeffs: &[CMat]) -> (Vec<usize>, Vec<u64>) {
    let bits = coeffs
        .iter()
        .flat_map(|c| c.iter().flat_map(|v| [v.re.to_bits(), v.im.to_bits()]))
        .collect();
    (word.to_vec(), bits)
}

pub(crate) fn dual_word_key(word: &[usize], coeffs: &[DualMatrix], flag: bool) -> (Vec<usize>, Vec<u64>) {
    let mut bits: Vec<u64> = coeffs
        .iter()
        .flat_map(|c| {
            c.std
                .iter()
                .chain(c.inf.iter())
                .flat_map(|v| [v.re.to_bits(), v.im.to_bits()])
        })
        .collect();
    bits.push(flag as u64);
    (word.to_vec(), bits)
}

type MemoKey = (Vec<usize>, Vec<u64>);

/// Synchronized memo table shared by the joint oracles.
pub(crate) struct Memo<V: Clone> {
    map: Mutex<HashMap<MemoKey, V>>,
}

impl<V: Clone> Default for Memo<V> {
    fn default() -> Self {
        Memo { map: Mutex::new(HashMap::new()) }
    }
}

impl<V: Clone> Memo<V> {
    pub fn get_or<F: FnOnce() -> Result<V>>(&self, key: MemoKey, f: F) -> Result<V> {
        if let Some(v) = self.map.lock().unwrap().get(&key) {
            return Ok(v.clone());
        }
        let v = f()?;
        self.map.lock().unwrap().insert(key, v.clone());
        Ok(v)
    }
}

/// One variable with a commuting scalar law, `𝔼(b₀xb₁⋯xbₙ) = mₙ·b₀b₁⋯bₙ`.
/// With `d = 1` this is a plain moment sequence; with `d > 1` it is the
/// amplification `φ ⊗ Id_d` of a scalar law.
#[derive(Clone, Debug)]
pub struct ScalarLawOracle {
    pub d: usize,
    pub std: Vec<C64>,
    pub inf: Option<Vec<C64>>,
}

impl ScalarLawOracle {
    pub fn new(d: usize, std: Vec<f64>, inf: Option<Vec<f64>>) -> Self {
        let c = |v: Vec<f64>| v.into_iter().map(|x| C64::new(x, 0.0)).collect();
        ScalarLawOracle {
            d,
            std: c(std),
            inf: inf.map(c),
        }
    }

    fn coefficient_product(coeffs: &[CMat]) -> CMat {
        let mut p = coeffs[0].clone();
        for c in &coeffs[1..] {
            p = p * c;
        }
        p
    }

    fn lookup(table: &[C64], n: usize) -> Result<C64> {
        table.get(n).copied().ok_or(Error::MissingOrder(n))
    }
}

impl MomentOracle for ScalarLawOracle {
    fn dim(&self) -> usize {
        self.d
    }

    fn moment(&self, word: &[usize], coeffs: &[CMat]) -> Result<CMat> {
        check_word(self.d, word, coeffs)?;
        let m = Self::lookup(&self.std, word.len())?;
        Ok(Self::coefficient_product(coeffs) * m)
    }

    fn has_inf(&self) -> bool {
        self.inf.is_some()
    }

    fn inf_moment(&self, word: &[usize], coeffs: &[CMat]) -> Result<CMat> {
        check_word(self.d, word, coeffs)?;
        let table = self.inf.as_ref().ok_or(Error::MissingInf)?;
        let m = Self::lookup(table, word.len())?;
        Ok(Self::coefficient_product(coeffs) * m)
    }
}

/// `b₀ x_{w₁} b₁ ⋯ x_{wₙ} bₙ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Monomial {
    pub word: Vec<usize>,
    pub coeffs: Vec<CMat>,
}

/// A finite sum of monomials.
#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    d: usize,
    pub terms: Vec<Monomial>,
}

impl Element {
    pub fn zero(d: usize) -> Self {
        Element { d, terms: Vec::new() }
    }

    pub fn constant(b: CMat) -> Self {
        let d = b.nrows();
        Element {
            d,
            terms: vec![Monomial {
                word: Vec::new(),
                coeffs: vec![b],
            }],
        }
    }

    pub fn one(d: usize) -> Self {
        Element::constant(CMat::identity(d, d))
    }

    /// The generator `x_label`.
    pub fn var(label: usize, d: usize) -> Self {
        Element::monomial(&[label], vec![CMat::identity(d, d); 2])
    }

    pub fn monomial(word: &[usize], coeffs: Vec<CMat>) -> Self {
        let d = coeffs[0].nrows();
        Element {
            d,
            terms: vec![Monomial {
                word: word.to_vec(),
                coeffs,
            }],
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn degree(&self) -> usize {
        self.terms.iter().map(|m| m.word.len()).max().unwrap_or(0)
    }

    pub fn add(&self, o: &Element) -> Element {
        let mut terms = self.terms.clone();
        terms.extend(o.terms.iter().cloned());
        Element { d: self.d, terms }
    }

    pub fn scale(&self, c: C64) -> Element {
        let terms = self
            .terms
            .iter()
            .map(|m| {
                let mut m = m.clone();
                m.coeffs[0] *= c;
                m
            })
            .collect();
        Element { d: self.d, terms }
    }

    pub fn sub(&self, o: &Element) -> Element {
        self.add(&o.scale(C64::new(-1.0, 0.0)))
    }

    pub fn mul(&self, o: &Element) -> Element {
        let mut terms = Vec::with_capacity(self.terms.len() * o.terms.len());
        for a in &self.terms {
            for b in &o.terms {
                let mut word = a.word.clone();
                word.extend_from_slice(&b.word);
                let mut coeffs = a.coeffs[..a.coeffs.len() - 1].to_vec();
                coeffs.push(a.coeffs.last().unwrap() * &b.coeffs[0]);
                coeffs.extend_from_slice(&b.coeffs[1..]);
                terms.push(Monomial { word, coeffs });
            }
        }
        Element { d: self.d, terms }
    }

    pub fn left_mul(&self, b: &CMat) -> Element {
        Element::constant(b.clone()).mul(self)
    }

    pub fn right_mul(&self, b: &CMat) -> Element {
        self.mul(&Element::constant(b.clone()))
    }

    /// `𝔼` applied termwise.
    pub fn expect(&self, o: &dyn MomentOracle) -> Result<CMat> {
        let mut acc = CMat::zeros(self.d, self.d);
        for m in &self.terms {
            acc += o.moment(&m.word, &m.coeffs)?;
        }
        Ok(acc)
    }

    /// `𝔼′` applied termwise; constants contribute 0.
    pub fn inf_expect(&self, o: &dyn MomentOracle) -> Result<CMat> {
        if !o.has_inf() {
            return Err(Error::MissingInf);
        }
        let mut acc = CMat::zeros(self.d, self.d);
        for m in &self.terms {
            if !m.word.is_empty() {
                acc += o.inf_moment(&m.word, &m.coeffs)?;
            }
        }
        Ok(acc)
    }

    /// `self − 𝔼(self)`.
    pub fn centered(&self, o: &dyn MomentOracle) -> Result<Element> {
        Ok(self.sub(&Element::constant(self.expect(o)?)))
    }
}

/// `[[a, a′], [0, a]]` with `a, a′` algebra elements.
pub type DualElement = Dual<Element>;

impl DualElement {
    pub fn of(a: Element, a_inf: Element) -> Self {
        Dual { std: a, inf: a_inf }
    }

    pub fn plain(a: Element) -> Self {
        let d = a.dim();
        Dual {
            std: a,
            inf: Element::zero(d),
        }
    }

    pub fn scalar(b: &DualMatrix) -> Self {
        Dual {
            std: Element::constant(b.std.clone()),
            inf: Element::constant(b.inf.clone()),
        }
    }

    pub fn times(&self, o: &DualElement) -> DualElement {
        Dual {
            std: self.std.mul(&o.std),
            inf: self.std.mul(&o.inf).add(&self.inf.mul(&o.std)),
        }
    }
}

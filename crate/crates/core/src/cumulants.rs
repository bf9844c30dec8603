//! Operator-valued moments and cumulants over `NC(n)`, their infinitesimal
//! companions, free products built from cumulants, and a freeness tester.
//!
//! `𝔼_π` is evaluated by nesting: inner blocks are computed first and their
//! values are spliced as `B`-coefficients into the enclosing block, and
//! consecutive outer blocks multiply left to right. Thus for
//! `π = {(1),(2,5),(3,4)}` one gets `𝔼(a₁)·𝔼(a₂𝔼(a₃a₄)a₅)`.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dual::{tilde_expectation, CMat, Dual, DualMatrix, Ring, TildeExpectation, C64};
use crate::error::{Error, Result};
use crate::ncpart::{nc_table, Partition};
use crate::oracle::{check_word, dual_word_key, DualElement, Element, Memo, MomentOracle, Monomial};

/// Largest order accepted by the moment/cumulant conversions.
pub const MAX_CONVERSION_ORDER: usize = 10;
/// Largest total degree accepted by [`freeness_check`].
pub const MAX_FREENESS_ORDER: usize = 8;

fn size_cap(what: &'static str, value: usize, cap: usize) -> Result<()> {
    if value > cap {
        return Err(Error::SizeCap { what, value, cap });
    }
    Ok(())
}

/// Nested evaluation of a non-crossing partition. `block_fn(index, positions,
/// gaps)` receives the block's 1-based positions and, for each pair of
/// consecutive positions, the value of everything nested strictly between
/// them (`unit` when they are adjacent).
pub fn nested_eval<T, F>(p: &Partition, unit: &T, mut block_fn: F) -> Result<T>
where
    T: Ring,
    F: FnMut(usize, &[usize], &[T]) -> Result<T>,
{
    if !p.is_noncrossing() {
        return Err(Error::Crossing);
    }
    let labels = p.block_labels();
    interval(p, &labels, 1, p.n(), unit, &mut block_fn)
}

fn interval<T, F>(p: &Partition, labels: &[usize], l: usize, r: usize, unit: &T, f: &mut F) -> Result<T>
where
    T: Ring,
    F: FnMut(usize, &[usize], &[T]) -> Result<T>,
{
    let mut acc: Option<T> = None;
    let mut i = l;
    while i <= r {
        let bi = labels[i - 1];
        let block = &p.blocks()[bi];
        let mut gaps = Vec::with_capacity(block.len().saturating_sub(1));
        for w in block.windows(2) {
            gaps.push(if w[1] == w[0] + 1 {
                unit.clone()
            } else {
                interval(p, labels, w[0] + 1, w[1] - 1, unit, f)?
            });
        }
        let v = f(bi, block, &gaps)?;
        acc = Some(match acc {
            None => v,
            Some(a) => a.mul(&v),
        });
        i = *block.last().unwrap() + 1;
    }
    Ok(acc.unwrap_or_else(|| unit.clone()))
}

/// Coefficient tuple of a block: `[1, b_{v₁}g₁, …, b_{v_{k−1}}g_{k−1}, b_{v_k}]`.
fn block_coeffs<T: Ring>(coeffs: &[T], pos: &[usize], gaps: &[T], unit: &T) -> Vec<T> {
    let k = pos.len();
    let mut c = Vec::with_capacity(k + 1);
    c.push(unit.clone());
    for j in 0..k - 1 {
        c.push(coeffs[pos[j]].mul(&gaps[j]));
    }
    c.push(coeffs[pos[k - 1]].clone());
    c
}

fn check_args(o: &dyn MomentOracle, p: &Partition, args: &Monomial) -> Result<()> {
    if args.word.len() != p.n() {
        return Err(Error::Dimension(format!(
            "word of length {} for a partition of {}",
            args.word.len(),
            p.n()
        )));
    }
    check_word(o.dim(), &args.word, &args.coeffs)
}

fn moment_pi_select(
    o: &dyn MomentOracle,
    p: &Partition,
    args: &Monomial,
    inf_block: Option<usize>,
) -> Result<CMat> {
    check_args(o, p, args)?;
    let d = o.dim();
    let id = CMat::identity(d, d);
    let v = nested_eval(p, &id, |bi, pos, gaps| {
        let word: Vec<usize> = pos.iter().map(|&e| args.word[e - 1]).collect();
        let coeffs = block_coeffs(&args.coeffs, pos, gaps, &id);
        if inf_block == Some(bi) {
            o.inf_moment(&word, &coeffs)
        } else {
            o.moment(&word, &coeffs)
        }
    })?;
    Ok(&args.coeffs[0] * v)
}

/// `𝔼_π(b₀a₁b₁⋯aₙbₙ)` with `a_i = x_{w_i}`.
pub fn moment_pi(o: &dyn MomentOracle, p: &Partition, args: &Monomial) -> Result<CMat> {
    moment_pi_select(o, p, args, None)
}

/// `∂𝔼_{π,V}`: `𝔼′` on block `V`, `𝔼` on every other block.
pub fn dmoment_pi_v(o: &dyn MomentOracle, p: &Partition, v: &[usize], args: &Monomial) -> Result<CMat> {
    let bi = p.block_index(v).ok_or_else(|| Error::NotABlock(v.to_vec()))?;
    if !o.has_inf() {
        return Err(Error::MissingInf);
    }
    moment_pi_select(o, p, args, Some(bi))
}

/// `∂𝔼_π = Σ_V ∂𝔼_{π,V}`.
pub fn dmoment_pi(o: &dyn MomentOracle, p: &Partition, args: &Monomial) -> Result<CMat> {
    if !o.has_inf() {
        return Err(Error::MissingInf);
    }
    let mut acc = CMat::zeros(o.dim(), o.dim());
    for bi in 0..p.num_blocks() {
        acc += moment_pi_select(o, p, args, Some(bi))?;
    }
    Ok(acc)
}

/// `(𝔼_π, ∂𝔼_π)` in one pass, with every block evaluated by `𝔼 + t𝔼′`.
/// Dual parts of the coefficients are propagated as well.
pub fn moment_pi_dual(
    o: &dyn MomentOracle,
    p: &Partition,
    word: &[usize],
    coeffs: &[DualMatrix],
    include_inf: bool,
) -> Result<DualMatrix> {
    if word.len() != p.n() || coeffs.len() != word.len() + 1 {
        return Err(Error::Dimension("word does not match partition".into()));
    }
    let d = o.dim();
    let id = DualMatrix::identity(d);
    let v = nested_eval(p, &id, |_, pos, gaps| {
        let w: Vec<usize> = pos.iter().map(|&e| word[e - 1]).collect();
        let c = block_coeffs(coeffs, pos, gaps, &id);
        o.moment_dual(&w, &c, include_inf)
    })?;
    Ok(Ring::mul(&coeffs[0], &v))
}

/// `𝔼_π(a₁,…,aₙ)` for arbitrary algebra elements; `inf_block` selects the
/// block evaluated by `𝔼′`.
pub fn moment_pi_elements(
    o: &dyn MomentOracle,
    p: &Partition,
    args: &[Element],
    inf_block: Option<usize>,
) -> Result<CMat> {
    if args.len() != p.n() {
        return Err(Error::Dimension("argument count does not match partition".into()));
    }
    let d = o.dim();
    let id = CMat::identity(d, d);
    nested_eval(p, &id, |bi, pos, gaps| {
        let mut prod = args[pos[0] - 1].clone();
        for (j, g) in gaps.iter().enumerate() {
            prod = prod.right_mul(g).mul(&args[pos[j + 1] - 1]);
        }
        if inf_block == Some(bi) {
            prod.inf_expect(o)
        } else {
            prod.expect(o)
        }
    })
}

/// `Ẽ_π(A₁,…,Aₙ)` with values in the upper-triangular algebra over `B`.
pub fn tilde_moment_pi(te: TildeExpectation<'_>, p: &Partition, args: &[DualElement]) -> Result<DualMatrix> {
    if args.len() != p.n() {
        return Err(Error::Dimension("argument count does not match partition".into()));
    }
    let d = te.oracle.dim();
    let id = DualMatrix::identity(d);
    nested_eval(p, &id, |_, pos, gaps| {
        let mut prod = args[pos[0] - 1].clone();
        for (j, g) in gaps.iter().enumerate() {
            prod = prod.times(&DualElement::scalar(g)).times(&args[pos[j + 1] - 1]);
        }
        tilde_expectation(te, &prod)
    })
}

fn mobius_sum<T, F>(n: usize, zero: T, mut term: F) -> Result<T>
where
    T: Ring,
    F: FnMut(&Partition) -> Result<T>,
{
    size_cap("n", n, MAX_CONVERSION_ORDER)?;
    let table = nc_table(n)?;
    let mut acc = zero;
    for (p, &mu) in table.partitions.iter().zip(&table.mobius) {
        acc = acc.add(&term(p)?.scale(C64::new(mu as f64, 0.0)));
    }
    Ok(acc)
}

/// `κₙ^B(b₀x_{w₁}b₁, …, x_{wₙ}bₙ) = Σ_π μ(π,1ₙ)𝔼_π`.
pub fn cumulant(o: &dyn MomentOracle, args: &Monomial) -> Result<CMat> {
    let d = o.dim();
    mobius_sum(args.word.len(), CMat::zeros(d, d), |p| moment_pi(o, p, args))
}

/// `∂κₙ^B = Σ_π μ(π,1ₙ)∂𝔼_π`.
pub fn inf_cumulant(o: &dyn MomentOracle, args: &Monomial) -> Result<CMat> {
    let d = o.dim();
    mobius_sum(args.word.len(), CMat::zeros(d, d), |p| dmoment_pi(o, p, args))
}

/// `κₙ^B + t∂κₙ^B` through dual block evaluation.
pub fn cumulant_dual(
    o: &dyn MomentOracle,
    word: &[usize],
    coeffs: &[DualMatrix],
    include_inf: bool,
) -> Result<DualMatrix> {
    let d = o.dim();
    let zero = Dual::constant(CMat::zeros(d, d));
    mobius_sum(word.len(), zero, |p| moment_pi_dual(o, p, word, coeffs, include_inf))
}

/// `(κₙ^B(a₁,…,aₙ), ∂κₙ^B(a₁,…,aₙ))` for algebra elements.
pub fn element_cumulants(o: &dyn MomentOracle, args: &[Element]) -> Result<(CMat, CMat)> {
    let d = o.dim();
    let std = mobius_sum(args.len(), CMat::zeros(d, d), |p| moment_pi_elements(o, p, args, None))?;
    let inf = mobius_sum(args.len(), CMat::zeros(d, d), |p| {
        let mut acc = CMat::zeros(d, d);
        for bi in 0..p.num_blocks() {
            acc += moment_pi_elements(o, p, args, Some(bi))?;
        }
        Ok(acc)
    })?;
    Ok((std, inf))
}

/// `κ̃ₙ(A₁,…,Aₙ) = Σ_π μ(π,1ₙ)Ẽ_π` computed inside the upper-triangular algebra.
pub fn tilde_cumulant(te: TildeExpectation<'_>, args: &[DualElement]) -> Result<DualMatrix> {
    let d = te.oracle.dim();
    let zero = Dual::constant(CMat::zeros(d, d));
    mobius_sum(args.len(), zero, |p| tilde_moment_pi(te, p, args))
}

/// Right side of the block formula for `κ̃ₙ`:
/// `[[κₙ(a), Σⱼκₙ(…a′ⱼ…) + ∂κₙ(a)], [0, κₙ(a)]]`.
pub fn tilde_cumulant_blocks(o: &dyn MomentOracle, args: &[DualElement]) -> Result<DualMatrix> {
    let a: Vec<Element> = args.iter().map(|x| x.std.clone()).collect();
    let (std, dk) = element_cumulants(o, &a)?;
    let mut inf = dk;
    for j in 0..args.len() {
        let mut aj = a.clone();
        aj[j] = args[j].inf.clone();
        inf += element_cumulants_std(o, &aj)?;
    }
    Ok(Dual::new(std, inf))
}

fn element_cumulants_std(o: &dyn MomentOracle, args: &[Element]) -> Result<CMat> {
    let d = o.dim();
    mobius_sum(args.len(), CMat::zeros(d, d), |p| moment_pi_elements(o, p, args, None))
}

/// Cumulant tensor of one word: entry `u` is `κ(x E_{p₁q₁} x ⋯ E_{p_{n−1}q_{n−1}} x)`
/// with unit tuples in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulantTensor {
    pub std: Vec<CMat>,
    pub inf: Vec<CMat>,
}

/// Operator-valued cumulants `κₙ^B` and `∂κₙ^B` of one family of variables,
/// stored on matrix-unit coefficients. A `closed` family declares every
/// missing entry to be zero; otherwise orders above `n_max` are unknown.
#[derive(Clone, Debug, PartialEq)]
pub struct CumulantFamily {
    d: usize,
    n_max: usize,
    closed: bool,
    labels: Vec<usize>,
    entries: BTreeMap<Vec<usize>, CumulantTensor>,
}

fn unit_tuples(d: usize, k: usize) -> usize {
    d.pow(2 * k as u32)
}

fn matrix_unit(d: usize, p: usize, q: usize) -> CMat {
    let mut m = CMat::zeros(d, d);
    m[(p, q)] = C64::new(1.0, 0.0);
    m
}

impl CumulantFamily {
    pub fn new(d: usize, labels: Vec<usize>, n_max: usize, closed: bool) -> Self {
        let mut labels = labels;
        labels.sort_unstable();
        labels.dedup();
        CumulantFamily {
            d,
            n_max,
            closed,
            labels,
            entries: BTreeMap::new(),
        }
    }

    /// One scalar variable with the given cumulants `κ₁, κ₂, …` and `κ′₁, κ′₂, …`.
    pub fn scalar(label: usize, kappa: &[f64], kappa_inf: &[f64], closed: bool) -> Self {
        let n_max = kappa.len().max(kappa_inf.len());
        let mut f = CumulantFamily::new(1, vec![label], n_max, closed);
        for n in 1..=n_max {
            let s = kappa.get(n - 1).copied().unwrap_or(0.0);
            let i = kappa_inf.get(n - 1).copied().unwrap_or(0.0);
            let m = |v: f64| CMat::from_element(1, 1, C64::new(v, 0.0));
            f.entries.insert(
                vec![label; n],
                CumulantTensor {
                    std: vec![m(s)],
                    inf: vec![m(i)],
                },
            );
        }
        f
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn entries(&self) -> &BTreeMap<Vec<usize>, CumulantTensor> {
        &self.entries
    }

    pub fn get(&self, word: &[usize]) -> Option<&CumulantTensor> {
        self.entries.get(word)
    }

    /// Sets the tensor of one word from a function of the interior unit indices.
    pub fn insert<F>(&mut self, word: &[usize], mut f: F) -> Result<()>
    where
        F: FnMut(&[(usize, usize)]) -> (CMat, CMat),
    {
        let n = word.len();
        if n == 0 || n > self.n_max {
            return Err(Error::MissingOrder(n));
        }
        if let Some(l) = word.iter().find(|l| !self.labels.contains(l)) {
            return Err(Error::Invalid(format!("label {l} not in family")));
        }
        let d = self.d;
        let count = unit_tuples(d, n - 1);
        let mut std = Vec::with_capacity(count);
        let mut inf = Vec::with_capacity(count);
        let mut units = vec![(0, 0); n - 1];
        for idx in 0..count {
            let mut r = idx;
            for j in (0..n - 1).rev() {
                let q = r % d;
                r /= d;
                let p = r % d;
                r /= d;
                units[j] = (p, q);
            }
            let (s, i) = f(&units);
            std.push(s);
            inf.push(i);
        }
        self.entries.insert(word.to_vec(), CumulantTensor { std, inf });
        Ok(())
    }

    /// `(κ + t∂κ)(b₀x_{w₁}b₁, …, x_{wₙ}bₙ)`, multilinear in the dual
    /// coefficients. `Ok(None)` means the cumulant is known to vanish.
    pub fn eval(&self, word: &[usize], coeffs: &[DualMatrix], include_inf: bool) -> Result<Option<DualMatrix>> {
        let n = word.len();
        let t = match self.entries.get(word) {
            Some(t) => t,
            None if self.closed || n == 0 => return Ok(None),
            None if n > self.n_max => return Err(Error::MissingOrder(n)),
            None if word.iter().any(|l| !self.labels.contains(l)) => return Ok(None),
            None => return Err(Error::MissingOrder(n)),
        };
        let d = self.d;
        let mut std = CMat::zeros(d, d);
        let mut inf = CMat::zeros(d, d);
        if d == 1 {
            let mut w = Dual::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0));
            for c in &coeffs[1..n] {
                w = w * Dual::new(c.std[(0, 0)], c.inf[(0, 0)]);
            }
            std += &t.std[0] * w.std;
            inf += &t.std[0] * w.inf;
            if include_inf {
                inf += &t.inf[0] * w.std;
            }
        } else {
            let mut weights = vec![Dual::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0))];
            for c in &coeffs[1..n] {
                let mut next = Vec::with_capacity(weights.len() * d * d);
                for w in &weights {
                    for p in 0..d {
                        for q in 0..d {
                            next.push(*w * Dual::new(c.std[(p, q)], c.inf[(p, q)]));
                        }
                    }
                }
                weights = next;
            }
            for (k, w) in weights.iter().enumerate() {
                if w.std.norm() == 0.0 && w.inf.norm() == 0.0 {
                    continue;
                }
                std += &t.std[k] * w.std;
                inf += &t.std[k] * w.inf;
                if include_inf {
                    inf += &t.inf[k] * w.std;
                }
            }
        }
        let core = Dual::new(std, inf);
        Ok(Some(Ring::mul(&Ring::mul(&coeffs[0], &core), &coeffs[n])))
    }

    /// Cumulants of `x + y` for single-variable families with free summands.
    pub fn add_free(&self, other: &CumulantFamily) -> Result<CumulantFamily> {
        if self.d != other.d || self.labels.len() != 1 || other.labels.len() != 1 {
            return Err(Error::Invalid("additivity needs two single-variable families of equal d".into()));
        }
        let label = self.labels[0];
        let n_max = if self.closed && other.closed {
            self.n_max.max(other.n_max)
        } else {
            self.n_max.min(other.n_max)
        };
        let mut out = CumulantFamily::new(self.d, vec![label], n_max, self.closed && other.closed);
        for n in 1..=n_max {
            let a = self.entries.get(&vec![label; n]);
            let b = other.entries.get(&vec![other.labels[0]; n]);
            if a.is_none() && b.is_none() {
                continue;
            }
            let count = unit_tuples(self.d, n - 1);
            let z = CMat::zeros(self.d, self.d);
            let pick = |t: Option<&CumulantTensor>, k: usize, inf: bool| {
                t.map(|t| if inf { t.inf[k].clone() } else { t.std[k].clone() })
                    .unwrap_or_else(|| z.clone())
            };
            let std = (0..count).map(|k| pick(a, k, false) + pick(b, k, false)).collect();
            let inf = (0..count).map(|k| pick(a, k, true) + pick(b, k, true)).collect();
            out.entries.insert(vec![label; n], CumulantTensor { std, inf });
        }
        Ok(out)
    }

    /// The same family with every label `l` replaced by `map(l)`.
    pub fn relabeled<F: Fn(usize) -> usize>(&self, map: F) -> CumulantFamily {
        let mut out = CumulantFamily::new(self.d, self.labels.iter().map(|&l| map(l)).collect(), self.n_max, self.closed);
        for (w, t) in &self.entries {
            out.entries.insert(w.iter().map(|&l| map(l)).collect(), t.clone());
        }
        out
    }

    /// Scales the infinitesimal part by `s`; `s = 0` drops it.
    pub fn with_inf_scaled(&self, s: f64) -> CumulantFamily {
        let mut out = self.clone();
        for t in out.entries.values_mut() {
            for m in t.inf.iter_mut() {
                *m *= C64::new(s, 0.0);
            }
        }
        out
    }

    /// `κ(t) = κ + t·∂κ`; `∂κ` is kept as the velocity.
    pub fn along_tangent(&self, t: f64) -> CumulantFamily {
        let mut out = self.clone();
        for e in out.entries.values_mut() {
            for (s, i) in e.std.iter_mut().zip(&e.inf) {
                *s += i * C64::new(t, 0.0);
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        let entries: Vec<FamilyEntryJson> = self
            .entries
            .iter()
            .map(|(w, t)| {
                let n = w.len();
                let flat = |ms: &[CMat]| -> Vec<[f64; 2]> {
                    ms.iter()
                        .flat_map(|m| {
                            (0..self.d)
                                .flat_map(move |i| (0..self.d).map(move |j| [m[(i, j)].re, m[(i, j)].im]))
                        })
                        .collect()
                };
                let units = (self.d > 1).then(|| {
                    (0..unit_tuples(self.d, n - 1))
                        .map(|idx| unit_index_to_tuple(self.d, n, idx))
                        .collect()
                });
                FamilyEntryJson {
                    order: n,
                    labels: w.clone(),
                    units,
                    std: flat(&t.std),
                    inf: flat(&t.inf),
                }
            })
            .collect();
        serde_json::to_value(FamilyJson {
            d: self.d,
            n_max: self.n_max,
            closed: self.closed,
            labels: self.labels.clone(),
            entries,
        })
        .expect("family serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<CumulantFamily> {
        let f: FamilyJson = serde_json::from_value(v.clone())?;
        let d = f.d;
        if d == 0 {
            return Err(Error::Invalid("d must be positive".into()));
        }
        let mut labels = f.labels.clone();
        for e in &f.entries {
            labels.extend_from_slice(&e.labels);
        }
        let mut out = CumulantFamily::new(d, labels, f.n_max, f.closed);
        for e in f.entries {
            let n = e.labels.len();
            if n != e.order || n == 0 || n > f.n_max {
                return Err(Error::Invalid(format!("entry order {} inconsistent", e.order)));
            }
            let count = unit_tuples(d, n - 1);
            if e.std.len() != count * d * d || e.inf.len() != count * d * d {
                return Err(Error::Invalid(format!("entry {:?} has wrong size", e.labels)));
            }
            let mats = |flat: &[[f64; 2]], order: &[usize]| -> Vec<CMat> {
                let mut ms = vec![CMat::zeros(d, d); count];
                for (slot, &k) in order.iter().enumerate() {
                    ms[k] = CMat::from_fn(d, d, |i, j| {
                        let v = flat[slot * d * d + i * d + j];
                        C64::new(v[0], v[1])
                    });
                }
                ms
            };
            let order: Vec<usize> = match &e.units {
                Some(us) => {
                    if us.len() != count {
                        return Err(Error::Invalid("units list has wrong length".into()));
                    }
                    us.iter()
                        .map(|u| unit_tuple_to_index(d, n, u))
                        .collect::<Result<_>>()?
                }
                None if d == 1 => vec![0],
                None => (0..count).collect(),
            };
            let std = mats(&e.std, &order);
            let inf = mats(&e.inf, &order);
            out.entries.insert(e.labels, CumulantTensor { std, inf });
        }
        Ok(out)
    }
}

fn unit_index_to_tuple(d: usize, n: usize, idx: usize) -> Vec<usize> {
    let mut t = vec![0; 2 * (n - 1)];
    let mut r = idx;
    for j in (0..2 * (n - 1)).rev() {
        t[j] = r % d;
        r /= d;
    }
    t
}

fn unit_tuple_to_index(d: usize, n: usize, t: &[usize]) -> Result<usize> {
    if t.len() != 2 * (n - 1) || t.iter().any(|&v| v >= d) {
        return Err(Error::Invalid(format!("bad unit tuple {t:?}")));
    }
    Ok(t.iter().fold(0, |acc, &v| acc * d + v))
}

#[derive(Serialize, Deserialize)]
struct FamilyEntryJson {
    order: usize,
    labels: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    units: Option<Vec<Vec<usize>>>,
    std: Vec<[f64; 2]>,
    inf: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct FamilyJson {
    d: usize,
    n_max: usize,
    #[serde(default)]
    closed: bool,
    #[serde(default)]
    labels: Vec<usize>,
    entries: Vec<FamilyEntryJson>,
}

/// Cumulants of every word over `labels` up to order `n_max`, evaluated on
/// matrix-unit coefficients. `∂κ` is zero when the oracle has no `𝔼′`.
pub fn cumulants_from_moments(o: &dyn MomentOracle, labels: &[usize], n_max: usize) -> Result<CumulantFamily> {
    size_cap("N_max", n_max, MAX_CONVERSION_ORDER)?;
    let d = o.dim();
    let mut fam = CumulantFamily::new(d, labels.to_vec(), n_max, false);
    let labels = fam.labels.clone();
    let id = DualMatrix::identity(d);
    for n in 1..=n_max {
        for w in all_words(&labels, n) {
            let mut err = None;
            fam.insert(&w, |units| {
                let mut coeffs = vec![id.clone(); n + 1];
                for (j, &(p, q)) in units.iter().enumerate() {
                    coeffs[j + 1] = Dual::constant(matrix_unit(d, p, q));
                }
                match cumulant_dual(o, &w, &coeffs, o.has_inf()) {
                    Ok(v) => (v.std, v.inf),
                    Err(e) => {
                        err.get_or_insert(e);
                        (CMat::zeros(d, d), CMat::zeros(d, d))
                    }
                }
            })?;
            if let Some(e) = err {
                return Err(e);
            }
        }
    }
    Ok(fam)
}

pub(crate) fn all_words(labels: &[usize], n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out
            .into_iter()
            .flat_map(|w| {
                labels.iter().map(move |&l| {
                    let mut w = w.clone();
                    w.push(l);
                    w
                })
            })
            .collect();
    }
    out
}

/// Moment of `b₀x_{w₁}b₁⋯x_{wₙ}bₙ` from cumulants by summing over the block
/// containing the first letter; `lookup(positions, coeffs)` returns the
/// block cumulant or `None` when it vanishes. `max_block` bounds block sizes.
fn moment_by_first_block<F>(n: usize, coeffs: &[DualMatrix], max_block: usize, same_family: &dyn Fn(usize, usize) -> bool, mut lookup: F) -> Result<DualMatrix>
where
    F: FnMut(&[usize], &[DualMatrix]) -> Result<Option<DualMatrix>>,
{
    let d = coeffs[0].std.nrows();
    let id = DualMatrix::identity(d);
    // m[l][r] = 𝔼(x_l b_l ⋯ x_r b_r), 1-based, empty interval = 1
    let mut m: Vec<Vec<Option<DualMatrix>>> = vec![vec![None; n + 2]; n + 2];
    for l in (1..=n + 1).rev() {
        m[l][l - 1] = Some(id.clone());
        for r in l..=n {
            let mut acc = Dual::constant(CMat::zeros(d, d));
            let cand: Vec<usize> = (l + 1..=r).filter(|&j| same_family(l, j)).collect();
            let mut block = vec![l];
            subsets(&cand, 0, &mut block, max_block, &mut |block: &[usize]| {
                let k = block.len();
                let mut c = Vec::with_capacity(k + 1);
                c.push(id.clone());
                for j in 0..k - 1 {
                    let gap = m[block[j] + 1][block[j + 1] - 1].as_ref().unwrap();
                    c.push(Ring::mul(&coeffs[block[j]], gap));
                }
                c.push(coeffs[block[k - 1]].clone());
                if let Some(kap) = lookup(block, &c)? {
                    let tail = m[block[k - 1] + 1][r].as_ref().unwrap();
                    acc = Ring::add(&acc, &Ring::mul(&kap, tail));
                }
                Ok(())
            })?;
            m[l][r] = Some(acc);
        }
    }
    Ok(Ring::mul(&coeffs[0], m[1][n].as_ref().unwrap()))
}

fn subsets<F>(cand: &[usize], from: usize, block: &mut Vec<usize>, max: usize, f: &mut F) -> Result<()>
where
    F: FnMut(&[usize]) -> Result<()>,
{
    f(block)?;
    if block.len() >= max {
        return Ok(());
    }
    for i in from..cand.len() {
        block.push(cand[i]);
        subsets(cand, i + 1, block, max, f)?;
        block.pop();
    }
    Ok(())
}

fn family_moment(
    families: &[Arc<CumulantFamily>],
    owner: &HashMap<usize, usize>,
    word: &[usize],
    coeffs: &[DualMatrix],
    include_inf: bool,
) -> Result<DualMatrix> {
    let n = word.len();
    let fam_of: Vec<usize> = word
        .iter()
        .map(|l| owner.get(l).copied().ok_or_else(|| Error::Invalid(format!("unknown label {l}"))))
        .collect::<Result<_>>()?;
    let max_block = if families.iter().all(|f| f.closed) {
        families.iter().map(|f| f.n_max).max().unwrap_or(0).max(1)
    } else {
        n.max(1)
    };
    let same = |a: usize, b: usize| fam_of[a - 1] == fam_of[b - 1];
    moment_by_first_block(n, coeffs, max_block, &same, |block, c| {
        let f = &families[fam_of[block[0] - 1]];
        let w: Vec<usize> = block.iter().map(|&p| word[p - 1]).collect();
        f.eval(&w, c, include_inf)
    })
}

/// `(𝔼, 𝔼′)` moment of a word from one cumulant family.
pub fn moments_from_cumulants(c: &CumulantFamily, args: &Monomial) -> Result<(CMat, CMat)> {
    size_cap("n", args.word.len(), MAX_CONVERSION_ORDER.max(c.n_max))?;
    check_word(c.d, &args.word, &args.coeffs)?;
    let fam = [Arc::new(c.clone())];
    let owner: HashMap<usize, usize> = c.labels.iter().map(|&l| (l, 0)).collect();
    let coeffs: Vec<DualMatrix> = args.coeffs.iter().cloned().map(Dual::constant).collect();
    let v = family_moment(&fam, &owner, &args.word, &coeffs, true)?;
    Ok((v.std, v.inf))
}

/// Joint law in which the given families are infinitesimally free: every
/// mixed cumulant, standard and infinitesimal, is zero.
pub struct JointOracle {
    d: usize,
    families: Vec<Arc<CumulantFamily>>,
    owner: HashMap<usize, usize>,
    memo: Memo<DualMatrix>,
}

impl JointOracle {
    pub fn families(&self) -> &[Arc<CumulantFamily>] {
        &self.families
    }

    /// Subalgebra index of every label `0..=max label`.
    pub fn labeling(&self) -> Vec<usize> {
        let max = self.owner.keys().copied().max().unwrap_or(0);
        (0..=max).map(|l| self.owner.get(&l).copied().unwrap_or(usize::MAX)).collect()
    }
}

pub fn joint_from_free_cumulants(families: Vec<CumulantFamily>) -> Result<JointOracle> {
    let d = families.first().map(|f| f.d).ok_or_else(|| Error::Invalid("no families".into()))?;
    let mut owner = HashMap::new();
    for (i, f) in families.iter().enumerate() {
        if f.d != d {
            return Err(Error::Dimension(format!("family {i} has d = {}, expected {d}", f.d)));
        }
        for &l in &f.labels {
            if owner.insert(l, i).is_some() {
                return Err(Error::Invalid(format!("label {l} appears in two families")));
            }
        }
    }
    Ok(JointOracle {
        d,
        families: families.into_iter().map(Arc::new).collect(),
        owner,
        memo: Memo::default(),
    })
}

impl MomentOracle for JointOracle {
    fn dim(&self) -> usize {
        self.d
    }

    fn moment(&self, word: &[usize], coeffs: &[CMat]) -> Result<CMat> {
        check_word(self.d, word, coeffs)?;
        let c: Vec<DualMatrix> = coeffs.iter().cloned().map(Dual::constant).collect();
        Ok(self.moment_dual(word, &c, false)?.std)
    }

    fn has_inf(&self) -> bool {
        true
    }

    fn inf_moment(&self, word: &[usize], coeffs: &[CMat]) -> Result<CMat> {
        check_word(self.d, word, coeffs)?;
        let c: Vec<DualMatrix> = coeffs.iter().cloned().map(Dual::constant).collect();
        Ok(self.moment_dual(word, &c, true)?.inf)
    }

    fn moment_dual(&self, word: &[usize], coeffs: &[DualMatrix], include_inf: bool) -> Result<DualMatrix> {
        if coeffs.len() != word.len() + 1 {
            return Err(Error::Dimension("coefficient count".into()));
        }
        let key = dual_word_key(word, coeffs, include_inf);
        self.memo.get_or(key, || {
            family_moment(&self.families, &self.owner, word, coeffs, include_inf)
        })
    }
}

/// Maximal violations found by [`freeness_check`].
#[derive(Clone, Debug, Default, Serialize)]
pub struct FreenessReport {
    pub n_max: usize,
    pub alternating_words: usize,
    pub mixed_words: usize,
    /// `max ‖𝔼(a₁⋯aₙ)‖` over alternating centered words.
    pub definitional_std: f64,
    /// `max ‖𝔼′(a₁⋯aₙ) − Σⱼ𝔼(a₁⋯𝔼′(aⱼ)⋯aₙ)‖`.
    pub definitional_inf: f64,
    /// `max ‖Ẽ(A₁⋯Aₙ)‖` with `Ẽ(Aⱼ) = 0`.
    pub embedded: f64,
    /// `max ‖κ^B‖` over words whose labels are not all in one subalgebra.
    pub mixed_std: f64,
    /// `max ‖∂κ^B‖` over the same words.
    pub mixed_inf: f64,
}

impl FreenessReport {
    pub fn definitional(&self) -> f64 {
        self.definitional_std.max(self.definitional_inf)
    }

    pub fn mixed(&self) -> f64 {
        self.mixed_std.max(self.mixed_inf)
    }

    pub fn max_violation(&self) -> f64 {
        self.definitional().max(self.embedded).max(self.mixed())
    }
}

struct Generator {
    algebra: usize,
    degree: usize,
    centered: Element,
    inf: CMat,
    partner: Element,
}

fn random_matrix(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    CMat::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Tests infinitesimal freeness of the subalgebras generated by the
/// variables, `labeling[l]` being the subalgebra of variable `l`.
///
/// Alternating words are built from centered generators `x − 𝔼(x)`,
/// `xy − 𝔼(xy)` (and `x c y − 𝔼(x c y)` with a fixed coefficient `c` when
/// `d > 1`), and `n_max` bounds their total degree in the variables. The
/// mixed-cumulant route runs over every word of length `2..=n_max` whose
/// labels do not all lie in one subalgebra.
pub fn freeness_check(o: &dyn MomentOracle, labeling: &[usize], n_max: usize) -> Result<FreenessReport> {
    size_cap("n_max", n_max, MAX_FREENESS_ORDER)?;
    if !o.has_inf() {
        return Err(Error::MissingInf);
    }
    let d = o.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut gens: Vec<Generator> = Vec::new();
    let algebras: Vec<usize> = {
        let mut a: Vec<usize> = labeling.iter().copied().filter(|&a| a != usize::MAX).collect();
        a.sort_unstable();
        a.dedup();
        a
    };
    for &alg in &algebras {
        let vars: Vec<usize> = (0..labeling.len()).filter(|&l| labeling[l] == alg).collect();
        let mut raw: Vec<Element> = vars.iter().map(|&l| Element::var(l, d)).collect();
        if n_max >= 2 {
            for &l in &vars {
                for &m in &vars {
                    let mid = if d > 1 { random_matrix(&mut rng, d) } else { CMat::identity(1, 1) };
                    raw.push(Element::var(l, d).right_mul(&mid).mul(&Element::var(m, d)));
                }
            }
        }
        let start = gens.len();
        for e in raw {
            let mut c = e.centered(o)?;
            if d > 1 {
                c = c.left_mul(&random_matrix(&mut rng, d));
            }
            let inf = c.inf_expect(o)?;
            gens.push(Generator {
                algebra: alg,
                degree: e.degree(),
                centered: c,
                inf,
                partner: Element::zero(d),
            });
        }
        let count = gens.len() - start;
        for k in 0..count {
            let partner = gens[start + (k + 1) % count].centered.clone();
            gens[start + k].partner = partner;
        }
    }

    let mut report = FreenessReport {
        n_max,
        ..Default::default()
    };
    let te = TildeExpectation::new(o);
    let mut word: Vec<usize> = Vec::new();
    alternating(&gens, n_max, 0, &mut word, &mut |w: &[usize]| {
        report.alternating_words += 1;
        let mut prod = Element::one(d);
        for &g in w {
            prod = prod.mul(&gens[g].centered);
        }
        report.definitional_std = report.definitional_std.max(prod.expect(o)?.max_abs());
        let mut rhs = CMat::zeros(d, d);
        for j in 0..w.len() {
            let mut p = Element::one(d);
            for (k, &g) in w.iter().enumerate() {
                p = if k == j {
                    p.right_mul(&gens[g].inf)
                } else {
                    p.mul(&gens[g].centered)
                };
            }
            rhs += p.expect(o)?;
        }
        let lhs = prod.inf_expect(o)?;
        report.definitional_inf = report.definitional_inf.max((lhs - rhs).max_abs());
        let mut tp = DualElement::plain(Element::one(d));
        for &g in w {
            let a = &gens[g];
            let a_inf = a.partner.sub(&Element::constant(a.inf.clone()));
            tp = tp.times(&DualElement::of(a.centered.clone(), a_inf));
        }
        report.embedded = report.embedded.max(tilde_expectation(te, &tp)?.max_abs());
        Ok(())
    })?;

    let labels: Vec<usize> = (0..labeling.len()).filter(|&l| labeling[l] != usize::MAX).collect();
    let id = DualMatrix::identity(d);
    for n in 2..=n_max {
        for w in all_words(&labels, n) {
            if w.iter().all(|&l| labeling[l] == labeling[w[0]]) {
                continue;
            }
            report.mixed_words += 1;
            let mut tuples = vec![vec![id.clone(); n + 1]];
            if d > 1 {
                tuples.push((0..=n).map(|_| Dual::constant(random_matrix(&mut rng, d))).collect());
            }
            for c in tuples {
                let k = cumulant_dual(o, &w, &c, true)?;
                report.mixed_std = report.mixed_std.max(k.std.max_abs());
                report.mixed_inf = report.mixed_inf.max(k.inf.max_abs());
            }
        }
    }
    Ok(report)
}

fn alternating<F>(gens: &[Generator], budget: usize, used: usize, word: &mut Vec<usize>, f: &mut F) -> Result<()>
where
    F: FnMut(&[usize]) -> Result<()>,
{
    for (g, gen) in gens.iter().enumerate() {
        if used + gen.degree > budget {
            continue;
        }
        if let Some(&last) = word.last() {
            if gens[last].algebra == gen.algebra {
                continue;
            }
        }
        word.push(g);
        f(word)?;
        alternating(gens, budget, used + gen.degree, word, f)?;
        word.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncpart::{enumerate_nc, Partition};
    use crate::oracle::ScalarLawOracle;

    fn c(v: f64) -> C64 {
        C64::new(v, 0.0)
    }

    fn scalar_word(n: usize) -> Monomial {
        Monomial {
            word: vec![0; n],
            coeffs: vec![CMat::identity(1, 1); n + 1],
        }
    }

    fn catalan_moments(k: usize) -> Vec<f64> {
        (0..=k)
            .map(|n| if n % 2 == 1 { 0.0 } else { crate::ncpart::catalan(n / 2) as f64 })
            .collect()
    }

    fn mat2(a: [f64; 4]) -> CMat {
        CMat::from_fn(2, 2, |i, j| c(a[2 * i + j]))
    }

    #[test]
    fn nested_eval_five_point_example() {
        // record the nesting as a string-valued computation
        let p = Partition::new(5, vec![vec![1], vec![2, 5], vec![3, 4]]).unwrap();
        let o = ScalarLawOracle::new(2, vec![1.0, 0.7, 1.3, 0.4, 2.1, 0.2], Some(vec![0.0, 0.5, -1.0, 0.3, 0.9, 0.1]));
        let b: Vec<CMat> = (0..6)
            .map(|k| mat2([1.0 + k as f64, 0.5, -0.25 * k as f64, 2.0]))
            .collect();
        let args = Monomial {
            word: vec![0; 5],
            coeffs: b.clone(),
        };
        // hand expansion: b0 𝔼(x b1) 𝔼(x b2 𝔼(x b3 x b4) x b5)
        let e = |n: usize, cs: &[CMat]| o.moment(&vec![0; n], cs).unwrap();
        let e_inf = |n: usize, cs: &[CMat]| o.inf_moment(&vec![0; n], cs).unwrap();
        let id = CMat::identity(2, 2);
        let inner = e(2, &[id.clone(), b[3].clone(), b[4].clone()]);
        let middle = e(2, &[id.clone(), &b[2] * &inner, b[5].clone()]);
        let single = e(1, &[id.clone(), b[1].clone()]);
        let expected = &b[0] * &single * &middle;
        assert!((moment_pi(&o, &p, &args).unwrap() - &expected).max_abs() < 1e-12);

        // 𝔼′ on (2,5): b0 𝔼(x b1) 𝔼′(x b2 𝔼(x b3 x b4) x b5)
        let v25 = &b[0] * &single * e_inf(2, &[id.clone(), &b[2] * &inner, b[5].clone()]);
        assert!((dmoment_pi_v(&o, &p, &[2, 5], &args).unwrap() - &v25).max_abs() < 1e-12);
        // literal display: 𝔼(a₁𝔼′(a₂𝔼(a₃a₄)a₅)) with the singleton wrapping the rest
        let lit = Element::monomial(&[0], vec![b[0].clone(), b[1].clone()])
            .right_mul(&e_inf(2, &[id.clone(), &b[2] * &inner, b[5].clone()]))
            .expect(&o)
            .unwrap();
        assert!((lit - &v25).max_abs() < 1e-12);
        let v1 = &b[0] * e_inf(1, &[id.clone(), b[1].clone()]) * &middle;
        let inner_inf = e_inf(2, &[id.clone(), b[3].clone(), b[4].clone()]);
        let v34 = &b[0] * &single * e(2, &[id.clone(), &b[2] * &inner_inf, b[5].clone()]);
        let total = dmoment_pi(&o, &p, &args).unwrap();
        assert!((total - (v1 + v25 + v34)).max_abs() < 1e-12);

        let dual = moment_pi_dual(
            &o,
            &p,
            &args.word,
            &b.iter().cloned().map(Dual::constant).collect::<Vec<_>>(),
            true,
        )
        .unwrap();
        assert!((dual.std - expected).max_abs() < 1e-12);
        assert!((dual.inf - dmoment_pi(&o, &p, &args).unwrap()).max_abs() < 1e-12);
    }

    #[test]
    fn moment_pi_trivial_cases() {
        let o = ScalarLawOracle::new(1, vec![1.0, 0.5, 2.0, 1.0, 7.0], Some(vec![0.0, 1.0, 1.0, 1.0, 1.0]));
        let args = scalar_word(4);
        let one = Partition::one(4);
        assert_eq!(moment_pi(&o, &one, &args).unwrap()[(0, 0)], c(7.0));
        assert_eq!(dmoment_pi_v(&o, &one, &[1, 2, 3, 4], &args).unwrap()[(0, 0)], c(1.0));
        assert!((moment_pi(&o, &Partition::zero(4), &args).unwrap()[(0, 0)] - c(0.0625)).norm() < 1e-15);
        let z3 = Partition::zero(3);
        let v = dmoment_pi_v(&o, &z3, &[2], &scalar_word(3)).unwrap()[(0, 0)];
        assert!((v - c(0.25)).norm() < 1e-15);
        assert_eq!(dmoment_pi(&o, &Partition::one(1), &scalar_word(1)).unwrap()[(0, 0)], c(1.0));
        assert!(matches!(
            dmoment_pi_v(&o, &z3, &[1, 2], &scalar_word(3)),
            Err(Error::NotABlock(_))
        ));
        let crossing = Partition::new(4, vec![vec![1, 3], vec![2, 4]]).unwrap();
        assert!(matches!(moment_pi(&o, &crossing, &args), Err(Error::Crossing)));
        let no_inf = ScalarLawOracle::new(1, vec![1.0, 0.0, 1.0], None);
        assert!(matches!(
            dmoment_pi(&no_inf, &Partition::one(2), &scalar_word(2)),
            Err(Error::MissingInf)
        ));
    }

    #[test]
    fn semicircle_cumulants() {
        let o = ScalarLawOracle::new(1, catalan_moments(8), None);
        let fam = cumulants_from_moments(&o, &[0], 8).unwrap();
        for n in 1..=8 {
            let k = fam.get(&vec![0; n]).unwrap().std[0][(0, 0)];
            let expect = if n == 2 { 1.0 } else { 0.0 };
            assert!((k - c(expect)).norm() < 1e-12, "κ{n} = {k}");
        }
    }

    #[test]
    fn point_mass_cumulants() {
        let theta: f64 = 1.7;
        let o = ScalarLawOracle::new(1, (0..=6).map(|k| theta.powi(k)).collect(), None);
        let fam = cumulants_from_moments(&o, &[0], 6).unwrap();
        let k1 = fam.get(&[0]).unwrap().std[0][(0, 0)];
        assert!((k1 - c(theta)).norm() < 1e-12);
        for n in 2..=6 {
            assert!(fam.get(&vec![0; n]).unwrap().std[0][(0, 0)].norm() < 1e-11);
        }
    }

    #[test]
    fn spike_infinitesimal_cumulants() {
        // (δ₀, δ_θ − δ₀): κ′ₙ = θⁿ, checked against the defining double sum
        let theta: f64 = 1.3;
        let std: Vec<f64> = (0..=6).map(|k| if k == 0 { 1.0 } else { 0.0 }).collect();
        let inf: Vec<f64> = (0..=6).map(|k| if k == 0 { 0.0 } else { theta.powi(k) }).collect();
        let o = ScalarLawOracle::new(1, std.clone(), Some(inf.clone()));
        let fam = cumulants_from_moments(&o, &[0], 6).unwrap();
        for n in 1..=6 {
            let mut brute = 0.0;
            let ps = enumerate_nc(n).unwrap();
            for p in &ps {
                let mu = crate::ncpart::mobius_to_one(p).unwrap() as f64;
                for v in p.blocks() {
                    let mut term = 1.0;
                    for w in p.blocks() {
                        term *= if w == v { inf[w.len()] } else { std[w.len()] };
                    }
                    brute += mu * term;
                }
            }
            let k = fam.get(&vec![0; n]).unwrap().inf[0][(0, 0)];
            assert!((k - c(brute)).norm() < 1e-12);
            assert!((k - c(theta.powi(n as i32))).norm() < 1e-10);
        }
    }

    #[test]
    fn catalan_moments_from_cumulants() {
        let fam = CumulantFamily::scalar(0, &[0.0, 1.0], &[], true);
        let (m4, _) = moments_from_cumulants(&fam, &scalar_word(4)).unwrap();
        let (m6, _) = moments_from_cumulants(&fam, &scalar_word(6)).unwrap();
        assert!((m4[(0, 0)] - c(2.0)).norm() < 1e-14);
        assert!((m6[(0, 0)] - c(5.0)).norm() < 1e-14);
        let open = CumulantFamily::scalar(0, &[0.0, 1.0], &[], false);
        assert!(matches!(
            moments_from_cumulants(&open, &scalar_word(4)),
            Err(Error::MissingOrder(_))
        ));
    }

    #[test]
    fn matrix_round_trip() {
        let o = ScalarLawOracle::new(2, vec![1.0, 0.3, 1.2, 0.5, 2.4], Some(vec![0.0, 0.2, -0.7, 0.1, 0.4]));
        let fam = cumulants_from_moments(&o, &[0], 4).unwrap();
        let b: Vec<CMat> = (0..5).map(|k| mat2([0.5, k as f64, -1.0, 0.25 * k as f64])).collect();
        let args = Monomial {
            word: vec![0; 4],
            coeffs: b.clone(),
        };
        let (s, i) = moments_from_cumulants(&fam, &args).unwrap();
        assert!((s - o.moment(&args.word, &b).unwrap()).max_abs() < 1e-11);
        assert!((i - o.inf_moment(&args.word, &b).unwrap()).max_abs() < 1e-11);
    }

    #[test]
    fn json_round_trip() {
        let o = ScalarLawOracle::new(2, vec![1.0, 0.3, 1.2, 0.5], Some(vec![0.0, 0.2, -0.7, 0.1]));
        let fam = cumulants_from_moments(&o, &[0], 3).unwrap();
        let back = CumulantFamily::from_json(&fam.to_json()).unwrap();
        assert_eq!(back, fam);
        let s = CumulantFamily::scalar(3, &[0.5, 1.0], &[0.1], true);
        let v = s.to_json();
        assert!(v["entries"][0].get("units").is_none());
        assert_eq!(CumulantFamily::from_json(&v).unwrap(), s);
    }

    #[test]
    fn free_semicircles_add() {
        let a = CumulantFamily::scalar(0, &[0.0, 1.0], &[], true);
        let b = CumulantFamily::scalar(1, &[0.0, 1.0], &[], true);
        let joint = joint_from_free_cumulants(vec![a, b]).unwrap();
        // moments of s₁ + s₂ by expanding (s₁ + s₂)ⁿ
        for n in [2usize, 4, 6] {
            let mut total = 0.0;
            for w in all_words(&[0, 1], n) {
                total += joint.moment(&w, &vec![CMat::identity(1, 1); n + 1]).unwrap()[(0, 0)].re;
            }
            let expect = 2f64.powi(n as i32 / 2) * crate::ncpart::catalan(n / 2) as f64;
            assert!((total - expect).abs() < 1e-10, "n={n}");
        }
    }

    #[test]
    fn free_pair_factorizes() {
        let a = CumulantFamily::scalar(0, &[0.0], &[1.0, 1.0, 1.0, 1.0], true);
        let b = CumulantFamily::scalar(1, &[0.0, 1.0], &[], true);
        let joint = joint_from_free_cumulants(vec![a, b]).unwrap();
        let id = vec![CMat::identity(1, 1); 3];
        assert!(joint.moment(&[0, 1], &id).unwrap()[(0, 0)].norm() < 1e-15);
    }

    #[test]
    fn joint_rejects_shared_labels() {
        let a = CumulantFamily::scalar(0, &[0.0, 1.0], &[], true);
        assert!(joint_from_free_cumulants(vec![a.clone(), a]).is_err());
    }

    #[test]
    fn freeness_of_cumulant_construction() {
        let a = CumulantFamily::scalar(0, &[0.3, 1.0, 0.2], &[0.5, -0.4, 0.1], true);
        let b = CumulantFamily::scalar(1, &[-0.2, 0.7, 0.0, 0.3], &[0.2, 0.3], true);
        let joint = joint_from_free_cumulants(vec![a, b]).unwrap();
        let r = freeness_check(&joint, &joint.labeling(), 6).unwrap();
        assert!(r.alternating_words > 10);
        assert!(r.max_violation() < 1e-10, "{r:?}");
    }

    #[test]
    fn palindromic_inf_moment() {
        // φ′(a₁a₂a₃a₂a₁) = φ(a₁a₁)φ(a₂a₂)φ′(a₃) for centered alternating aⱼ
        let a = CumulantFamily::scalar(0, &[0.0, 1.0, 0.5], &[0.2, 0.7, -0.3], true);
        let b = CumulantFamily::scalar(1, &[0.0, 2.0, 0.0, 1.0], &[0.1, -0.5, 0.4], true);
        let o = joint_from_free_cumulants(vec![a, b]).unwrap();
        let x = Element::var(0, 1).centered(&o).unwrap();
        let y = Element::var(1, 1).centered(&o).unwrap();
        let x2 = Element::var(0, 1).mul(&Element::var(0, 1)).centered(&o).unwrap();
        let w = x.mul(&y).mul(&x2).mul(&y).mul(&x);
        let lhs = w.inf_expect(&o).unwrap()[(0, 0)];
        let rhs = x.mul(&x).expect(&o).unwrap()[(0, 0)]
            * y.mul(&y).expect(&o).unwrap()[(0, 0)]
            * x2.inf_expect(&o).unwrap()[(0, 0)];
        assert!((lhs - rhs).norm() < 1e-12);
        // even length alternating words have vanishing φ′
        let even = x.mul(&y).mul(&x).mul(&y);
        assert!(even.inf_expect(&o).unwrap()[(0, 0)].norm() < 1e-12);
    }

    #[test]
    fn size_caps() {
        let o = ScalarLawOracle::new(1, catalan_moments(12), None);
        assert!(matches!(cumulants_from_moments(&o, &[0], 11), Err(Error::SizeCap { .. })));
        let j = joint_from_free_cumulants(vec![CumulantFamily::scalar(0, &[0.0, 1.0], &[], true)]).unwrap();
        assert!(matches!(freeness_check(&j, &[0], 9), Err(Error::SizeCap { .. })));
    }
}

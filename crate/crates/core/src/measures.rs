//! Scalar infinitesimal laws `(μ, μ′)` and their transforms `G`, `g`, `F`, `h`.

use serde::{Deserialize, Serialize};

use crate::dual::{Dual, Scalar, C64};
use crate::error::{Error, Result};
use crate::ncpart::catalan;

/// Default number of stored moments beyond `m₀`.
pub const DEFAULT_ORDER: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub enum LawKind {
    Semicircle { mean: f64, variance: f64 },
    /// `(location, weight)` atoms of `μ`.
    Atomic(Vec<(f64, f64)>),
    MomentTable,
}

/// A scalar infinitesimal law: `μ` through its kind and moments, `μ′`
/// through its moments and, when known exactly, signed atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct InfLaw {
    pub kind: LawKind,
    pub std_moments: Vec<f64>,
    pub inf_moments: Option<Vec<f64>>,
    /// `(location, weight′)` atoms of `μ′`, weights summing to 0.
    pub inf_atoms: Option<Vec<(f64, f64)>>,
    pub support_bound: f64,
}

fn atom_moments(atoms: &[(f64, f64)], k: usize) -> Vec<f64> {
    (0..=k)
        .map(|n| atoms.iter().map(|&(x, w)| w * x.powi(n as i32)).sum())
        .collect()
}

fn semicircle_moments(mean: f64, variance: f64, k: usize) -> Vec<f64> {
    let sigma = variance.sqrt();
    let centered: Vec<f64> = (0..=k)
        .map(|j| if j % 2 == 1 { 0.0 } else { catalan(j / 2) as f64 * sigma.powi(j as i32) })
        .collect();
    (0..=k)
        .map(|n| {
            let mut binom = 1.0;
            let mut s = 0.0;
            for j in 0..=n {
                s += binom * mean.powi((n - j) as i32) * centered[j];
                binom = binom * (n - j) as f64 / (j + 1) as f64;
            }
            s
        })
        .collect()
}

impl InfLaw {
    pub fn semicircle(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !mean.is_finite() {
            return Err(Error::Invalid(format!("semicircle({mean}, {variance})")));
        }
        Ok(InfLaw {
            kind: LawKind::Semicircle { mean, variance },
            std_moments: semicircle_moments(mean, variance, DEFAULT_ORDER),
            inf_moments: None,
            inf_atoms: None,
            support_bound: mean.abs() + 2.0 * variance.sqrt(),
        })
    }

    /// Atoms `(x, w, w′)`: `μ = Σwδₓ`, `μ′ = Σw′δₓ`.
    pub fn atomic(atoms: &[(f64, f64, f64)]) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Invalid("atomic law without atoms".into()));
        }
        let std: Vec<(f64, f64)> = atoms.iter().filter(|a| a.1 != 0.0).map(|a| (a.0, a.1)).collect();
        let total: f64 = std.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!("atom weights sum to {total}, not 1")));
        }
        let inf: Vec<(f64, f64)> = atoms.iter().filter(|a| a.2 != 0.0).map(|a| (a.0, a.2)).collect();
        let bound = atoms.iter().map(|a| a.0.abs()).fold(0.0, f64::max);
        let mut law = InfLaw {
            kind: LawKind::Atomic(std.clone()),
            std_moments: atom_moments(&std, DEFAULT_ORDER),
            inf_moments: None,
            inf_atoms: None,
            support_bound: bound,
        };
        if !inf.is_empty() {
            law = law.with_inf_atoms(&inf)?;
        }
        Ok(law)
    }

    /// Law given only by moments `m₀..m_K` (and `m′₀..m′_K`).
    pub fn moment_table(std: Vec<f64>, inf: Option<Vec<f64>>) -> Result<Self> {
        if std.is_empty() || (std[0] - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid("moment table needs m₀ = 1".into()));
        }
        if let Some(inf) = &inf {
            if inf.len() != std.len() {
                return Err(Error::Invalid(format!(
                    "inf moments to order {} but std moments to order {}",
                    inf.len() - 1,
                    std.len() - 1
                )));
            }
            if inf[0].abs() > 1e-12 {
                return Err(Error::Invalid("moment table needs m′₀ = 0".into()));
            }
        }
        let bound = (1..std.len() / 2 + 1)
            .filter(|&k| 2 * k < std.len())
            .map(|k| std[2 * k].abs().powf(1.0 / (2 * k) as f64))
            .fold(0.0, f64::max);
        Ok(InfLaw {
            kind: LawKind::MomentTable,
            std_moments: std,
            inf_moments: inf,
            inf_atoms: None,
            support_bound: bound,
        })
    }

    /// Attaches `μ′ = Σw′δₓ`; the weights must sum to 0.
    pub fn with_inf_atoms(mut self, atoms: &[(f64, f64)]) -> Result<Self> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if total.abs() > 1e-12 {
            return Err(Error::Invalid(format!("inf weights sum to {total}, not 0")));
        }
        self.inf_moments = Some(atom_moments(atoms, self.order()));
        self.support_bound = atoms.iter().map(|a| a.0.abs()).fold(self.support_bound, f64::max);
        self.inf_atoms = Some(atoms.to_vec());
        Ok(self)
    }

    /// Attaches `μ′` through its moments, which must match the stored order.
    pub fn with_inf_moments(mut self, inf: Vec<f64>) -> Result<Self> {
        if inf.len() != self.std_moments.len() {
            return Err(Error::Invalid(format!(
                "inf moments to order {} but std moments to order {}",
                inf.len().saturating_sub(1),
                self.order()
            )));
        }
        if inf[0].abs() > 1e-12 {
            return Err(Error::Invalid("m′₀ must be 0".into()));
        }
        self.inf_moments = Some(inf);
        self.inf_atoms = None;
        Ok(self)
    }

    /// Largest stored moment order `K`.
    pub fn order(&self) -> usize {
        self.std_moments.len() - 1
    }

    pub fn has_inf(&self) -> bool {
        self.inf_moments.is_some()
    }

    pub fn inf_or_zero(&self) -> Vec<f64> {
        self.inf_moments.clone().unwrap_or_else(|| vec![0.0; self.std_moments.len()])
    }

    fn check_domain(&self, z: C64) -> Result<()> {
        if z.im > 0.0 || z.norm() > self.support_bound {
            Ok(())
        } else if matches!(self.kind, LawKind::Atomic(_)) && z.im == 0.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "z = {z} has Im z ≤ 0 and |z| ≤ support bound {}",
                self.support_bound
            )))
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (kind, mean, variance) = match &self.kind {
            LawKind::Semicircle { mean, variance } => ("semicircle", Some(*mean), Some(*variance)),
            LawKind::Atomic(_) => ("atomic", None, None),
            LawKind::MomentTable => ("moment_table", None, None),
        };
        let mut atoms: Vec<[f64; 3]> = Vec::new();
        if let LawKind::Atomic(a) = &self.kind {
            atoms.extend(a.iter().map(|&(x, w)| [x, w, 0.0]));
        }
        for &(x, w) in self.inf_atoms.iter().flatten() {
            match atoms.iter_mut().find(|a| a[0] == x) {
                Some(a) => a[2] = w,
                None => atoms.push([x, 0.0, w]),
            }
        }
        serde_json::to_value(LawJson {
            kind: kind.into(),
            mean,
            variance,
            std_moments: Some(self.std_moments.clone()),
            inf_moments: self.inf_moments.clone(),
            atoms: (!atoms.is_empty()).then_some(atoms),
            support_bound: Some(self.support_bound),
        })
        .expect("law serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let j: LawJson = serde_json::from_value(v.clone())?;
        let atoms = j.atoms.clone().unwrap_or_default();
        let inf_atoms: Vec<(f64, f64)> = atoms.iter().filter(|a| a[2] != 0.0).map(|a| (a[0], a[2])).collect();
        let mut law = match j.kind.as_str() {
            "semicircle" => {
                let mut l = InfLaw::semicircle(j.mean.unwrap_or(0.0), j.variance.unwrap_or(1.0))?;
                if atoms.iter().any(|a| a[1] != 0.0) {
                    return Err(Error::Invalid("semicircle law with std atoms".into()));
                }
                if !inf_atoms.is_empty() {
                    l = l.with_inf_atoms(&inf_atoms)?;
                }
                l
            }
            "atomic" => {
                let a: Vec<(f64, f64, f64)> = atoms.iter().map(|a| (a[0], a[1], a[2])).collect();
                InfLaw::atomic(&a)?
            }
            "moment_table" => {
                let std = j
                    .std_moments
                    .clone()
                    .ok_or_else(|| Error::Invalid("moment_table needs std_moments".into()))?;
                let mut l = InfLaw::moment_table(std, None)?;
                if !inf_atoms.is_empty() {
                    l = l.with_inf_atoms(&inf_atoms)?;
                }
                l
            }
            k => return Err(Error::Invalid(format!("unknown law kind {k:?}"))),
        };
        if let (Some(inf), None) = (&j.inf_moments, &law.inf_atoms) {
            law = law.with_inf_moments(inf.clone())?;
        }
        if let Some(b) = j.support_bound {
            law.support_bound = law.support_bound.max(b);
        }
        Ok(law)
    }
}

#[derive(Serialize, Deserialize)]
struct LawJson {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    std_moments: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    inf_moments: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    atoms: Option<Vec<[f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    support_bound: Option<f64>,
}

fn c(v: f64) -> C64 {
    C64::new(v, 0.0)
}

/// Cauchy transform of the semicircle law with the given mean and variance,
/// on the branch with `G(z) ~ 1/z`.
pub fn semicircle_g<S: Scalar>(mean: f64, variance: f64, z: S) -> S {
    // (w − r)/(2v) rewritten as 2/(w + r), free of cancellation at large |w|
    let w = z - S::from_c(c(mean));
    let two_sigma = S::from_c(c(2.0 * variance.sqrt()));
    let root = (w - two_sigma).sqrt() * (w + two_sigma).sqrt();
    (w + root).recip().cmul(c(2.0))
}

/// Recurrence coefficients `(αₖ, βₖ)` of the orthogonal polynomials of a
/// moment sequence, by the Chebyshev algorithm. `β₀ = m₀`. Stops early when
/// `βₖ` vanishes, which happens exactly for finitely supported laws.
pub fn jacobi_coefficients(m: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = m.len() / 2;
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    if n == 0 || m[0] == 0.0 {
        return (alpha, beta);
    }
    let len = 2 * n;
    let mut prev = vec![0.0; len];
    let mut cur: Vec<f64> = m[..len].to_vec();
    alpha.push(m[1] / m[0]);
    beta.push(m[0]);
    let scale = m[0];
    for k in 1..n {
        let mut next = vec![0.0; len];
        for l in k..len - k {
            next[l] = cur[l + 1] - alpha[k - 1] * cur[l] - beta[k - 1] * prev[l];
        }
        let b = next[k] / cur[k - 1];
        if !(b > 1e-13 * scale.max(1.0) * beta[k - 1].max(1.0)) || !b.is_finite() {
            break;
        }
        alpha.push(next[k + 1] / next[k] - cur[k] / cur[k - 1]);
        beta.push(b);
        prev = cur;
        cur = next;
    }
    (alpha, beta)
}

/// Continued fraction `β₀/(z−α₀−β₁/(z−α₁−⋯))`. When the coefficients are
/// not exhausted by a vanishing `β`, the tail repeats the last level, which
/// closes it with a semicircle transform.
fn continued_fraction<S: Scalar>(alpha: &[f64], beta: &[f64], complete: bool, z: S) -> S {
    let n = alpha.len();
    let last = n - 1;
    let mut t = if complete || last == 0 {
        (z - S::from_c(c(alpha[last]))).recip()
    } else {
        semicircle_g(alpha[last], beta[last], z)
    };
    for k in (0..last).rev() {
        t = (z - S::from_c(c(alpha[k])) - t.cmul(c(beta[k + 1]))).recip();
    }
    t.cmul(c(beta[0]))
}

fn atomic_sum<S: Scalar>(atoms: &[(f64, f64)], z: S) -> Result<S> {
    let mut acc = S::from_c(c(0.0));
    for &(x, w) in atoms {
        let d = z - S::from_c(c(x));
        if d.value().norm() == 0.0 {
            return Err(Error::Pole(z.value()));
        }
        acc = acc + d.recip().cmul(c(w));
    }
    Ok(acc)
}

/// `G(z) = φ[(z−x)⁻¹]`, differentiated through the dual parts of `z`.
pub fn cauchy_g<S: Scalar>(law: &InfLaw, z: S) -> Result<S> {
    law.check_domain(z.value())?;
    match &law.kind {
        LawKind::Semicircle { mean, variance } => Ok(semicircle_g(*mean, *variance, z)),
        LawKind::Atomic(atoms) => atomic_sum(atoms, z),
        LawKind::MomentTable => {
            let (alpha, beta) = jacobi_coefficients(&law.std_moments);
            let complete = alpha.len() < law.std_moments.len() / 2;
            Ok(continued_fraction(&alpha, &beta, complete, z))
        }
    }
}

/// `g(z) = φ′[(z−x)⁻¹]`: exact for atomic `μ′`, otherwise the Laurent
/// series `Σ m′ₖ z^{−k−1}`, which needs `|z|` beyond the support bound.
pub fn inf_cauchy_g<S: Scalar>(law: &InfLaw, z: S) -> Result<S> {
    law.check_domain(z.value())?;
    if let Some(atoms) = &law.inf_atoms {
        return atomic_sum(atoms, z);
    }
    let m = law.inf_moments.as_ref().ok_or(Error::MissingInf)?;
    if m.iter().all(|&v| v == 0.0) {
        return Ok(S::from_c(c(0.0)));
    }
    let modulus = z.value().norm();
    let bound = law.support_bound;
    if modulus <= bound {
        return Err(Error::DivergentTail { modulus, bound });
    }
    let u = z.recip();
    let mut acc = S::from_c(c(0.0));
    for &mk in m.iter().rev() {
        acc = (acc + S::from_c(c(mk))) * u;
    }
    Ok(acc)
}

/// Transform of `X = [[x, 0],[0, x]]` under `(φ, φ′)` at `(z, c)`:
/// `(G(z), G′(z)c + g(z))`.
pub fn embedded_g<S: Scalar>(law: &InfLaw, z: Dual<S>) -> Result<Dual<S>>
where
    Dual<S>: Scalar,
{
    let g = cauchy_g(law, z)?;
    let gi = inf_cauchy_g(law, z.std)?;
    Ok(Dual::new(g.std, g.inf + gi))
}

/// `(F, h) = (1/G, F − z)`.
pub fn f_h_transforms<S: Scalar>(law: &InfLaw, z: S) -> Result<(S, S)> {
    let g = cauchy_g(law, z)?;
    if g.value().norm() == 0.0 {
        return Err(Error::Domain(format!("G vanishes at {}", z.value())));
    }
    let f = g.recip();
    Ok((f, f - z))
}

/// Empirical law from eigenvalue samples, one set per trial. With
/// `inf_scale = Some(N)` the infinitesimal moments are `N·(mₖ − m_k^{ref})`.
pub fn law_from_samples(
    samples: &[Vec<f64>],
    order: usize,
    inf_scale: Option<f64>,
    reference: Option<&InfLaw>,
) -> Result<InfLaw> {
    if samples.is_empty() || samples.iter().any(|s| s.is_empty()) {
        return Err(Error::Invalid("empty sample set".into()));
    }
    let mut m = vec![0.0; order + 1];
    for set in samples {
        let n = set.len() as f64;
        for k in 0..=order {
            m[k] += set.iter().map(|x| x.powi(k as i32)).sum::<f64>() / n;
        }
    }
    for v in m.iter_mut() {
        *v /= samples.len() as f64;
    }
    let mut law = InfLaw::moment_table(m.clone(), None)?;
    law.support_bound = samples
        .iter()
        .flatten()
        .map(|x| x.abs())
        .fold(law.support_bound, f64::max);
    if let Some(scale) = inf_scale {
        let r = reference.ok_or(Error::MissingReference)?;
        if r.order() < order {
            return Err(Error::MissingOrder(order));
        }
        let inf = (0..=order).map(|k| scale * (m[k] - r.std_moments[k])).collect();
        law = law.with_inf_moments(inf)?;
    }
    Ok(law)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::DualScalar;
    use proptest::prelude::*;

    fn z(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn quadrature_semicircle(zz: C64) -> C64 {
        // Gauss-Chebyshev (second kind) on [-2, 2]
        let n = 4000;
        let mut acc = C64::new(0.0, 0.0);
        for k in 1..=n {
            let th = k as f64 * std::f64::consts::PI / (n + 1) as f64;
            let x = 2.0 * th.cos();
            let w = std::f64::consts::PI / (n + 1) as f64 * th.sin().powi(2);
            acc += w * 4.0 / (2.0 * std::f64::consts::PI) / (zz - x);
        }
        acc
    }

    #[test]
    fn point_mass_at_zero() {
        let law = InfLaw::atomic(&[(0.0, 1.0, 0.0)]).unwrap();
        let g = cauchy_g(&law, z(0.3, 1.7)).unwrap();
        assert!((g - 1.0 / z(0.3, 1.7)).norm() < 1e-15);
        assert!(matches!(cauchy_g(&law, z(0.0, 0.0)), Err(Error::Pole(_))));
    }

    #[test]
    fn semicircle_against_quadrature() {
        let law = InfLaw::semicircle(0.0, 1.0).unwrap();
        for zz in [z(0.0, 2.0), z(1.0, 1.0), z(-2.5, 0.3), z(3.0, 0.0)] {
            let g = cauchy_g(&law, zz).unwrap();
            assert!((g - quadrature_semicircle(zz)).norm() < 1e-6, "{zz}");
        }
        let g = cauchy_g(&law, z(0.0, 2.0)).unwrap();
        assert!((g - z(0.0, 1.0 - 2f64.sqrt())).norm() < 1e-14);
    }

    #[test]
    fn branch_at_infinity() {
        let law = InfLaw::semicircle(0.5, 2.0).unwrap();
        let y = 1e6;
        let g = cauchy_g(&law, z(0.0, y)).unwrap();
        assert!((g * z(0.0, y) - 1.0).norm() < 1e-6);
    }

    #[test]
    fn moment_table_matches_closed_form() {
        let sc = InfLaw::semicircle(0.0, 1.0).unwrap();
        let table = InfLaw::moment_table(sc.std_moments.clone(), None).unwrap();
        let zz = z(1.0, 1.0);
        let a = cauchy_g(&table, zz).unwrap();
        let b = cauchy_g(&sc, zz).unwrap();
        assert!((a - b).norm() < 1e-8);
        // shifted, scaled semicircle keeps the constant tail
        let sc2 = InfLaw::semicircle(0.7, 0.3).unwrap();
        let t2 = InfLaw::moment_table(sc2.std_moments.clone(), None).unwrap();
        assert!((cauchy_g(&t2, z(-0.2, 0.4)).unwrap() - cauchy_g(&sc2, z(-0.2, 0.4)).unwrap()).norm() < 1e-8);
    }

    #[test]
    fn moment_table_of_finite_atoms_is_exact() {
        let at = InfLaw::atomic(&[(-1.0, 0.25, 0.0), (0.5, 0.5, 0.0), (2.0, 0.25, 0.0)]).unwrap();
        let table = InfLaw::moment_table(at.std_moments.clone(), None).unwrap();
        let (alpha, _) = jacobi_coefficients(&table.std_moments);
        assert_eq!(alpha.len(), 3);
        for zz in [z(0.1, 0.5), z(3.0, 2.0)] {
            assert!((cauchy_g(&table, zz).unwrap() - cauchy_g(&at, zz).unwrap()).norm() < 1e-10);
        }
    }

    #[test]
    fn jacobi_of_semicircle() {
        let (alpha, beta) = jacobi_coefficients(&InfLaw::semicircle(0.0, 1.0).unwrap().std_moments);
        assert_eq!(alpha.len(), 8);
        for k in 0..8 {
            assert!(alpha[k].abs() < 1e-10);
            assert!((beta[k] - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn spike_inf_transform() {
        let theta = 2.0;
        let law = InfLaw::atomic(&[(0.0, 1.0, -1.0), (theta, 0.0, 1.0)]).unwrap();
        let zz = z(0.4, 1.1);
        let g = inf_cauchy_g(&law, zz).unwrap();
        assert!((g - (1.0 / (zz - theta) - 1.0 / zz)).norm() < 1e-15);
        let sc = InfLaw::semicircle(0.0, 1.0).unwrap();
        assert!(matches!(inf_cauchy_g(&sc, zz), Err(Error::MissingInf)));
        let zero = sc.clone().with_inf_moments(vec![0.0; 17]).unwrap();
        assert_eq!(inf_cauchy_g(&zero, zz).unwrap(), z(0.0, 0.0));
    }

    #[test]
    fn laurent_inf_transform_and_divergence() {
        let theta = 1.5;
        let atoms = InfLaw::atomic(&[(0.0, 1.0, -1.0), (theta, 0.0, 1.0)]).unwrap();
        let table = InfLaw::moment_table(atoms.std_moments.clone(), atoms.inf_moments.clone()).unwrap();
        let mut table = table;
        table.support_bound = theta;
        let zz = z(3.0, 4.0);
        let a = inf_cauchy_g(&table, zz).unwrap();
        let b = inf_cauchy_g(&atoms, zz).unwrap();
        // truncation after m′₁₆: error ~ (θ/|z|)^17/|z|
        assert!((a - b).norm() < 1e-6);
        assert!(matches!(inf_cauchy_g(&table, z(0.5, 1.0)), Err(Error::DivergentTail { .. })));
    }

    #[test]
    fn inf_atom_weights_must_cancel() {
        assert!(InfLaw::atomic(&[(0.0, 1.0, 0.5)]).is_err());
        assert!(InfLaw::atomic(&[(0.0, 0.7, 0.0)]).is_err());
    }

    #[test]
    fn balanced_inf_weights_decay_faster() {
        let law = InfLaw::atomic(&[(0.0, 1.0, -1.0), (1.0, 0.0, 1.0)]).unwrap();
        let unbalanced = [(0.0, 1.0), (1.0, 1.0)];
        for y in [1e3, 1e4] {
            let g = inf_cauchy_g(&law, z(0.0, y)).unwrap();
            assert!((g * y * y).norm() < 2.0);
            let u: C64 = unbalanced.iter().map(|&(x, w)| w / (z(0.0, y) - x)).sum();
            assert!((u * y * y).norm() > y);
        }
    }

    #[test]
    fn f_and_h() {
        let a = 0.8;
        let law = InfLaw::atomic(&[(a, 1.0, 0.0)]).unwrap();
        let (f, h) = f_h_transforms(&law, z(0.1, 0.9)).unwrap();
        assert!((f - z(0.1 - a, 0.9)).norm() < 1e-14);
        assert!((h - a * -1.0).norm() < 1e-14);
        let sc = InfLaw::semicircle(0.0, 1.0).unwrap();
        for i in 0..10 {
            for j in 1..=10 {
                let zz = z(-3.0 + 0.6 * i as f64, 0.3 * j as f64);
                let (f, h) = f_h_transforms(&sc, zz).unwrap();
                let g = cauchy_g(&sc, zz).unwrap();
                assert!((h + g).norm() < 1e-10);
                assert!(f.im >= zz.im - 1e-12);
            }
        }
    }

    #[test]
    fn laurent_coefficients_by_contour() {
        // mₖ = (1/2πi)∮ zᵏ G(z) dz on a large circle
        let law = InfLaw::atomic(&[(-1.0, 0.3, -0.5), (0.5, 0.7, 0.2), (1.2, 0.0, 0.3)]).unwrap();
        let tab = InfLaw::moment_table(law.std_moments.clone(), law.inf_moments.clone()).unwrap();
        let r = 4.0;
        let n = 256;
        for l in [&law, &tab] {
            for k in 0..=6 {
                let (mut s, mut si) = (z(0.0, 0.0), z(0.0, 0.0));
                for j in 0..n {
                    let th = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
                    let zz = C64::from_polar(r, th);
                    let w = zz.powi(k as i32 + 1) / n as f64;
                    s += w * cauchy_g(l, zz).unwrap();
                    si += w * inf_cauchy_g(l, zz).unwrap();
                }
                assert!((s - law.std_moments[k]).norm() < 1e-6, "k={k}");
                assert!((si - law.inf_moments.as_ref().unwrap()[k]).norm() < 1e-6, "k={k}");
            }
        }
    }

    #[test]
    fn samples_of_a_spike() {
        let theta = 1.9;
        let mut eig = vec![0.0; 100];
        eig[0] = theta;
        let delta0 = InfLaw::atomic(&[(0.0, 1.0, 0.0)]).unwrap();
        let law = law_from_samples(&[eig.clone()], 6, Some(100.0), Some(&delta0)).unwrap();
        for k in 1..=6 {
            assert!((law.std_moments[k] - theta.powi(k as i32) / 100.0).abs() < 1e-15);
            assert!((law.inf_moments.as_ref().unwrap()[k] - theta.powi(k as i32)).abs() < 1e-12);
        }
        assert!(matches!(law_from_samples(&[eig], 6, Some(100.0), None), Err(Error::MissingReference)));
    }

    #[test]
    fn json_round_trip() {
        let law = InfLaw::semicircle(0.0, 1.0)
            .unwrap()
            .with_inf_atoms(&[(0.0, -1.0), (2.0, 1.0)])
            .unwrap();
        assert_eq!(InfLaw::from_json(&law.to_json()).unwrap(), law);
        let at = InfLaw::atomic(&[(-1.0, 0.5, 0.1), (1.0, 0.5, -0.1)]).unwrap();
        assert_eq!(InfLaw::from_json(&at.to_json()).unwrap(), at);
        let tab = InfLaw::moment_table(vec![1.0, 0.0, 1.0], Some(vec![0.0, 0.5, 0.0])).unwrap();
        assert_eq!(InfLaw::from_json(&tab.to_json()).unwrap(), tab);
        let mismatched = serde_json::json!({"kind": "moment_table", "std_moments": [1.0, 0.0, 1.0], "inf_moments": [0.0, 1.0]});
        assert!(InfLaw::from_json(&mismatched).is_err());
    }

    fn random_law(kind: u8, p: &[f64]) -> InfLaw {
        match kind % 3 {
            0 => InfLaw::semicircle(p[0], 0.1 + p[1].abs()).unwrap(),
            1 => {
                let w = 0.1 + p[2].abs() / 2.0;
                InfLaw::atomic(&[(p[0], w, p[3]), (p[1] + 0.3, 1.0 - w, -p[3])]).unwrap()
            }
            _ => {
                let sc = InfLaw::semicircle(p[0], 0.2 + p[1].abs()).unwrap();
                InfLaw::moment_table(sc.std_moments.clone(), None).unwrap()
            }
        }
    }

    proptest! {
        #[test]
        fn herglotz(kind in 0u8..3, p in prop::collection::vec(-1.0f64..1.0, 4), re in -4.0f64..4.0, im in 0.01f64..5.0) {
            let law = random_law(kind, &p);
            let g = cauchy_g(&law, z(re, im)).unwrap();
            prop_assert!(g.im < 0.0);
        }

        #[test]
        fn dual_derivative_matches_differences(kind in 0u8..3, p in prop::collection::vec(-1.0f64..1.0, 4), re in -3.0f64..3.0, im in 1.0f64..4.0) {
            let law = random_law(kind, &p);
            let zz = z(re, im);
            let d = cauchy_g(&law, DualScalar::new(zz, z(1.0, 0.0))).unwrap();
            let h = 1e-5;
            let fd = (cauchy_g(&law, zz + h).unwrap() - cauchy_g(&law, zz - h).unwrap()) / (2.0 * h);
            prop_assert!((d.inf - fd).norm() < 1e-8);
            prop_assert!((d.std - cauchy_g(&law, zz).unwrap()).norm() < 1e-15);
        }
    }

    #[test]
    fn embedded_transform_block_form() {
        let law = InfLaw::semicircle(0.0, 1.0)
            .unwrap()
            .with_inf_atoms(&[(0.0, -1.0), (2.0, 1.0)])
            .unwrap();
        let zz = z(0.3, 1.2);
        let cc = z(0.7, -0.4);
        let e = embedded_g(&law, DualScalar::new(zz, cc)).unwrap();
        let gp = cauchy_g(&law, DualScalar::new(zz, z(1.0, 0.0))).unwrap().inf;
        let g = inf_cauchy_g(&law, zz).unwrap();
        assert!((e.std - cauchy_g(&law, zz).unwrap()).norm() < 1e-15);
        assert!((e.inf - (gp * cc + g)).norm() < 1e-14);
    }
}

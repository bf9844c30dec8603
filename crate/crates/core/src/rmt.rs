//! Monte Carlo estimates of `τ_N` and of `N(τ_N − τ)` for GUE matrices
//! with deterministic finite-rank diagonal perturbations.
//!
//! Every trial draws from its own generator stream `(seed, trial)`, and
//! estimates are reduced in trial order, so results do not depend on how
//! trials are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::Serialize;

use crate::dual::{CMat, C64};
use crate::error::{Error, Result};
use crate::measures::{semicircle_g, InfLaw};
use crate::subord::{scalar_inf_convolve, SolveOptions};

pub const MAX_N: usize = 4096;
/// Cap on `N²·trials` for [`sample`], which keeps every matrix in memory.
pub const MAX_SAMPLE_ENTRIES: usize = 1 << 25;

#[derive(Clone, Debug, PartialEq)]
pub enum EnsembleKind {
    /// GUE normalized so that `E[(1/N)Tr X²] = variance`.
    Gue { variance: f64 },
    /// `diag(d₁, …, d_r, 0, …, 0)`.
    Deterministic(Vec<f64>),
    /// GUE plus a deterministic diagonal.
    GueSpiked { variance: f64, diag: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSpec {
    pub n: usize,
    pub kind: EnsembleKind,
    pub seed: u64,
    pub trials: usize,
}

impl EnsembleSpec {
    pub fn new(n: usize, kind: EnsembleKind, seed: u64, trials: usize) -> Result<Self> {
        if n == 0 || trials == 0 {
            return Err(Error::Invalid("N and trials must be positive".into()));
        }
        if n > MAX_N {
            return Err(Error::SizeCap {
                what: "N",
                value: n,
                cap: MAX_N,
            });
        }
        let diag = match &kind {
            EnsembleKind::Gue { variance } | EnsembleKind::GueSpiked { variance, .. } if *variance <= 0.0 => {
                return Err(Error::Invalid(format!("GUE variance must be positive, got {variance}")))
            }
            EnsembleKind::Deterministic(d) | EnsembleKind::GueSpiked { diag: d, .. } => d.len(),
            _ => 0,
        };
        if diag > n {
            return Err(Error::Invalid(format!("{diag} diagonal entries for N = {n}")));
        }
        Ok(EnsembleSpec { n, kind, seed, trials })
    }

    fn parts(&self) -> (Option<f64>, &[f64]) {
        match &self.kind {
            EnsembleKind::Gue { variance } => (Some(*variance), &[]),
            EnsembleKind::Deterministic(d) => (None, d),
            EnsembleKind::GueSpiked { variance, diag } => (Some(*variance), diag),
        }
    }

    /// The same spec with the deterministic part removed.
    pub fn null(&self) -> EnsembleSpec {
        let kind = match self.parts().0 {
            Some(variance) => EnsembleKind::Gue { variance },
            None => EnsembleKind::Deterministic(vec![]),
        };
        EnsembleSpec { kind, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct TauEstimate {
    pub value: C64,
    /// Sample standard deviation over `√trials`.
    pub std_error: f64,
    pub n: usize,
    pub trials: usize,
}

fn reduce(values: &[C64], n: usize) -> TauEstimate {
    let m = values.len();
    let mean = values.iter().sum::<C64>() / m as f64;
    let var = if m > 1 {
        values.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (m - 1) as f64
    } else {
        0.0
    };
    TauEstimate {
        value: mean,
        std_error: (var / m as f64).sqrt(),
        n,
        trials: m,
    }
}

/// How resolvent traces are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    /// Dense Hermitian samples and their eigenvalues.
    Dense,
    /// The unitarily equivalent tridiagonal model: a Householder reduction
    /// started at `e₁` maps GUE to a real Jacobi matrix with independent
    /// `N(0, v/N)` diagonal and `√(v/N)·χ_{2(N−k)}/√2` off-diagonal entries
    /// and fixes `e₁`, so a rank-one spike at `(1,1)` stays put. Traces then
    /// cost `O(N)` per trial.
    Tridiagonal,
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

fn gue(n: usize, variance: f64, rng: &mut ChaCha8Rng) -> CMat {
    let sd_diag = (variance / n as f64).sqrt();
    let sd_off = (variance / (2.0 * n as f64)).sqrt();
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        let g: f64 = StandardNormal.sample(rng);
        m[(i, i)] = C64::new(sd_diag * g, 0.0);
        for j in i + 1..n {
            let (a, b): (f64, f64) = (StandardNormal.sample(rng), StandardNormal.sample(rng));
            let v = C64::new(a, b) * sd_off;
            m[(i, j)] = v;
            m[(j, i)] = v.conj();
        }
    }
    m
}

/// The dense sample of trial `trial`.
pub fn sample_trial(spec: &EnsembleSpec, trial: usize) -> CMat {
    let n = spec.n;
    let (variance, diag) = spec.parts();
    let mut m = match variance {
        Some(v) => gue(n, v, &mut trial_rng(spec.seed, trial)),
        None => CMat::zeros(n, n),
    };
    for (i, d) in diag.iter().enumerate() {
        m[(i, i)] += C64::new(*d, 0.0);
    }
    m
}

pub fn sample(spec: &EnsembleSpec) -> Result<Vec<CMat>> {
    let entries = spec.n * spec.n * spec.trials;
    if entries > MAX_SAMPLE_ENTRIES {
        return Err(Error::SizeCap {
            what: "N²·trials",
            value: entries,
            cap: MAX_SAMPLE_ENTRIES,
        });
    }
    Ok((0..spec.trials).map(|t| sample_trial(spec, t)).collect())
}

/// Diagonal `a` and off-diagonal `b` of the tridiagonal model, without spike.
fn jacobi_trial(n: usize, variance: f64, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let sd = (variance / n as f64).sqrt();
    let a: Vec<f64> = (0..n)
        .map(|_| {
            let g: f64 = StandardNormal.sample(rng);
            sd * g
        })
        .collect();
    let b: Vec<f64> = (1..n)
        .map(|k| {
            let chi2: f64 = Gamma::new((n - k) as f64, 1.0).expect("positive shape").sample(rng);
            sd * chi2.sqrt()
        })
        .collect();
    (a, b)
}

/// `Tr (z − J)⁻¹` for the Jacobi matrix with diagonal `a`, off-diagonal `b`,
/// from the two continued-fraction sweeps `R_ii = 1/(z − aᵢ − upᵢ − downᵢ)`.
fn jacobi_resolvent_trace(a: &[f64], b: &[f64], z: C64) -> C64 {
    let n = a.len();
    let mut down = vec![C64::new(0.0, 0.0); n];
    for i in (0..n.saturating_sub(1)).rev() {
        down[i] = b[i] * b[i] / (z - a[i + 1] - down[i + 1]);
    }
    let mut up = C64::new(0.0, 0.0);
    let mut tr = C64::new(0.0, 0.0);
    for i in 0..n {
        if i > 0 {
            up = b[i - 1] * b[i - 1] / (z - a[i - 1] - up);
        }
        tr += 1.0 / (z - a[i] - up - down[i]);
    }
    tr
}

fn hermitian_eigenvalues(m: &CMat) -> Vec<f64> {
    m.clone().symmetric_eigenvalues().iter().copied().collect()
}

/// The test function whose normalized trace is estimated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TraceTest {
    /// `X ↦ Xᵏ`.
    Power(u32),
    /// `X ↦ (z − X)⁻¹`.
    Resolvent(C64),
}

fn resolvent_check(z: C64) -> Result<()> {
    if z.im <= 0.0 {
        return Err(Error::Domain(format!("resolvent needs Im z > 0, got {z}")));
    }
    Ok(())
}

/// `Tr test(X)` for trial `trial`, unnormalized.
fn trial_trace(spec: &EnsembleSpec, test: TraceTest, engine: Engine, trial: usize) -> C64 {
    let (variance, diag) = spec.parts();
    let n = spec.n;
    match (engine, test, variance) {
        (_, TraceTest::Power(k), None) => C64::new(diag.iter().map(|d| d.powi(k as i32)).sum(), 0.0),
        (_, TraceTest::Resolvent(z), None) => {
            diag.iter().map(|d| 1.0 / (z - d)).sum::<C64>() + (n - diag.len()) as f64 / z
        }
        (Engine::Tridiagonal, TraceTest::Resolvent(z), Some(v)) if diag.len() <= 1 => {
            let (mut a, b) = jacobi_trial(n, v, &mut trial_rng(spec.seed, trial));
            if let Some(d) = diag.first() {
                a[0] += d;
            }
            jacobi_resolvent_trace(&a, &b, z)
        }
        (_, TraceTest::Power(k), Some(_)) => {
            let x = sample_trial(spec, trial);
            if k == 2 {
                return C64::new(x.norm_squared(), 0.0);
            }
            let mut p = CMat::identity(n, n);
            for _ in 0..k {
                p = &p * &x;
            }
            p.trace()
        }
        (_, TraceTest::Resolvent(z), Some(_)) => {
            let ev = hermitian_eigenvalues(&sample_trial(spec, trial));
            ev.iter().map(|l| 1.0 / (z - l)).sum()
        }
    }
}

fn check_engine(spec: &EnsembleSpec, test: TraceTest, engine: Engine) -> Result<()> {
    if let TraceTest::Resolvent(z) = test {
        resolvent_check(z)?;
    }
    if engine == Engine::Tridiagonal {
        let (variance, diag) = spec.parts();
        if variance.is_some() && (matches!(test, TraceTest::Power(_)) || diag.len() > 1) {
            return Err(Error::Invalid(
                "the tridiagonal engine handles resolvents of GUE plus a rank-one spike".into(),
            ));
        }
    }
    Ok(())
}

/// Monte Carlo mean of `(1/N)Tr test(X)`.
pub fn estimate_tau(spec: &EnsembleSpec, test: TraceTest, engine: Engine) -> Result<TauEstimate> {
    check_engine(spec, test, engine)?;
    let n = spec.n as f64;
    let v: Vec<C64> = (0..spec.trials)
        .map(|t| trial_trace(spec, test, engine, t) / n)
        .collect();
    Ok(reduce(&v, spec.n))
}

/// Monte Carlo mean of `N((1/N)Tr (z − X)⁻¹ − G(z)) = Tr (z − X)⁻¹ − N·G(z)`,
/// the empirical `ĝ(z)` against the limiting value `reference_g = G(z)`.
pub fn estimate_inf_tau(
    spec: &EnsembleSpec,
    z: C64,
    reference_g: Option<C64>,
    engine: Engine,
) -> Result<TauEstimate> {
    let g = reference_g.ok_or(Error::MissingReference)?;
    let test = TraceTest::Resolvent(z);
    check_engine(spec, test, engine)?;
    let n = spec.n as f64;
    let v: Vec<C64> = (0..spec.trials)
        .map(|t| trial_trace(spec, test, engine, t) - n * g)
        .collect();
    Ok(reduce(&v, spec.n))
}

/// `ĝ` for the spiked ensemble, for its GUE null on the same samples, and
/// for their per-trial difference, whose variance is far smaller.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct PairedEstimate {
    pub spiked: TauEstimate,
    pub null: TauEstimate,
    pub difference: TauEstimate,
}

pub fn estimate_inf_tau_paired(
    spec: &EnsembleSpec,
    z: C64,
    reference_g: Option<C64>,
    engine: Engine,
) -> Result<PairedEstimate> {
    let g = reference_g.ok_or(Error::MissingReference)?;
    Ok(estimate_inf_tau_paired_multi(spec, &[(z, g)], engine)?[0])
}

/// [`estimate_inf_tau_paired`] at several `(z, G(z))` pairs, reusing each
/// sample for all points.
pub fn estimate_inf_tau_paired_multi(
    spec: &EnsembleSpec,
    points: &[(C64, C64)],
    engine: Engine,
) -> Result<Vec<PairedEstimate>> {
    for &(z, _) in points {
        check_engine(spec, TraceTest::Resolvent(z), engine)?;
    }
    let (variance, diag) = spec.parts();
    let n = spec.n;
    let nf = n as f64;
    let k = points.len();
    let (mut s, mut o) = (vec![Vec::with_capacity(spec.trials); k], vec![Vec::with_capacity(spec.trials); k]);
    for t in 0..spec.trials {
        let traces: Box<dyn Fn(C64) -> (C64, C64)> = match (engine, variance) {
            (Engine::Tridiagonal, Some(v)) => {
                let (a, b) = jacobi_trial(n, v, &mut trial_rng(spec.seed, t));
                let mut spiked = a.clone();
                if let Some(d) = diag.first() {
                    spiked[0] += d;
                }
                Box::new(move |z| (jacobi_resolvent_trace(&spiked, &b, z), jacobi_resolvent_trace(&a, &b, z)))
            }
            (_, Some(_)) => {
                let es = hermitian_eigenvalues(&sample_trial(spec, t));
                let eo = hermitian_eigenvalues(&sample_trial(&spec.null(), t));
                Box::new(move |z| {
                    let tr = |e: &[f64]| e.iter().map(|l| 1.0 / (z - l)).sum::<C64>();
                    (tr(&es), tr(&eo))
                })
            }
            (_, None) => {
                let (spec, null) = (spec.clone(), spec.null());
                Box::new(move |z| {
                    let test = TraceTest::Resolvent(z);
                    (trial_trace(&spec, test, engine, t), trial_trace(&null, test, engine, t))
                })
            }
        };
        for (i, &(z, g)) in points.iter().enumerate() {
            let (a, b) = traces(z);
            s[i].push(a - nf * g);
            o[i].push(b - nf * g);
        }
    }
    Ok((0..k)
        .map(|i| {
            let d: Vec<C64> = s[i].iter().zip(&o[i]).map(|(a, b)| a - b).collect();
            PairedEstimate {
                spiked: reduce(&s[i], n),
                null: reduce(&o[i], n),
                difference: reduce(&d, n),
            }
        })
        .collect())
}

/// `(δ₀, Σᵢ(δ_{dᵢ} − δ₀))`: the limit pair of a diagonal with finitely many
/// nonzero entries.
pub fn spike_law(diag: &[f64]) -> Result<InfLaw> {
    let mut atoms: Vec<(f64, f64, f64)> = vec![(0.0, 1.0, 0.0)];
    for &d in diag {
        if d == 0.0 {
            continue;
        }
        atoms[0].2 -= 1.0;
        match atoms.iter_mut().find(|a| a.0 == d) {
            Some(a) => a.2 += 1.0,
            None => atoms.push((d, 0.0, 1.0)),
        }
    }
    InfLaw::atomic(&atoms)
}

/// Prediction of `ĝ(z)` for GUE(variance) plus `diag`.
pub fn spiked_gue_prediction(variance: f64, diag: &[f64], z: C64) -> Result<C64> {
    let x = InfLaw::semicircle(0.0, variance)?.with_inf_atoms(&[])?;
    let y = spike_law(diag)?;
    let r = scalar_inf_convolve(&x, &y, z, SolveOptions::scalar())?;
    Ok(r.inf.expect("both laws carry μ′"))
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RmtReport {
    pub z: C64,
    pub g_hat: TauEstimate,
    pub prediction: C64,
    /// `|ĝ − prediction| / std_error`.
    pub sigma_distance: f64,
}

/// `ĝ(z)` for GUE(variance) + `diag` against its predicted limit.
pub fn rmt_verify(spec: &EnsembleSpec, z: C64, engine: Engine) -> Result<RmtReport> {
    let (variance, diag) = match &spec.kind {
        EnsembleKind::GueSpiked { variance, diag } => (*variance, diag.clone()),
        EnsembleKind::Gue { variance } => (*variance, vec![]),
        EnsembleKind::Deterministic(_) => return Err(Error::Invalid("rmt-verify needs a GUE part".into())),
    };
    let prediction = spiked_gue_prediction(variance, &diag, z)?;
    let g_hat = estimate_inf_tau(spec, z, Some(semicircle_g(0.0, variance, z)), engine)?;
    Ok(RmtReport {
        z,
        g_hat,
        prediction,
        sigma_distance: (g_hat.value - prediction).norm() / g_hat.std_error,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// `C` with `|ĝ_null(z)| ≤ C/N` on the GUE null: the largest
/// `N·(|ĝ_null| + 3·std_error)` over the given sizes and points.
pub fn calibrate_null_c(variance: f64, sizes: &[usize], zs: &[C64], trials: usize, seed: u64) -> Result<f64> {
    let mut c: f64 = 0.0;
    for &n in sizes {
        let spec = EnsembleSpec::new(n, EnsembleKind::Gue { variance }, seed, trials)?;
        for &z in zs {
            let e = estimate_inf_tau(&spec, z, Some(semicircle_g(0.0, variance, z)), Engine::Tridiagonal)?;
            c = c.max(n as f64 * (e.value.norm() + 3.0 * e.std_error));
        }
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn gue_spec(n: usize, trials: usize, seed: u64) -> EnsembleSpec {
        EnsembleSpec::new(n, EnsembleKind::Gue { variance: 1.0 }, seed, trials).unwrap()
    }

    #[test]
    fn deterministic_samples() {
        let s = gue_spec(2, 3, 11);
        let a = sample(&s).unwrap();
        let b = sample(&s).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert_eq!(a[0].adjoint(), a[0]);
        let e1 = estimate_tau(&gue_spec(16, 5, 3), TraceTest::Resolvent(c(0.0, 1.0)), Engine::Tridiagonal).unwrap();
        let e2 = estimate_tau(&gue_spec(16, 5, 3), TraceTest::Resolvent(c(0.0, 1.0)), Engine::Tridiagonal).unwrap();
        assert_eq!(e1.value, e2.value);
    }

    #[test]
    fn gue_normalization() {
        let e = estimate_tau(&gue_spec(256, 500, 1), TraceTest::Power(2), Engine::Dense).unwrap();
        assert!((e.value - 1.0).norm() <= 3.0 * e.std_error, "{:?}", e);
        let e = estimate_tau(&gue_spec(512, 4, 2), TraceTest::Power(2), Engine::Dense).unwrap();
        assert!((e.value - 1.0).norm() < 0.02);
    }

    #[test]
    fn deterministic_traces_are_exact() {
        let theta = 2.0;
        let s = EnsembleSpec::new(64, EnsembleKind::Deterministic(vec![theta]), 0, 3).unwrap();
        for k in 1..6 {
            let e = estimate_tau(&s, TraceTest::Power(k), Engine::Dense).unwrap();
            assert_eq!(e.value, c(theta.powi(k as i32) / 64.0, 0.0));
            assert_eq!(e.std_error, 0.0);
        }
        let m = sample_trial(&s, 0);
        let mut p = m.clone();
        p = &p * &m * &m;
        assert_eq!(p.trace(), c(8.0, 0.0));
    }

    #[test]
    fn resolvent_matches_semicircle() {
        let z = c(0.0, 2.0);
        let g: C64 = semicircle_g(0.0, 1.0, z);
        for engine in [Engine::Dense, Engine::Tridiagonal] {
            let e = estimate_tau(&gue_spec(128, 40, 5), TraceTest::Resolvent(z), engine).unwrap();
            assert!((e.value - g).norm() <= 3.0 * e.std_error + 1e-3, "{engine:?} {:?}", e);
        }
    }

    #[test]
    fn tridiagonal_model_matches_dense_in_law() {
        // same distribution: compare means of ĝ under both engines
        let spec = EnsembleSpec::new(
            48,
            EnsembleKind::GueSpiked {
                variance: 1.0,
                diag: vec![2.0],
            },
            9,
            300,
        )
        .unwrap();
        let z = c(0.5, 1.5);
        let g = semicircle_g(0.0, 1.0, z);
        let d = estimate_inf_tau(&spec, z, Some(g), Engine::Dense).unwrap();
        let t = estimate_inf_tau(&spec, z, Some(g), Engine::Tridiagonal).unwrap();
        let se = (d.std_error.powi(2) + t.std_error.powi(2)).sqrt();
        assert!((d.value - t.value).norm() <= 4.0 * se, "{:?} {:?}", d, t);
    }

    #[test]
    fn jacobi_trace_against_eigenvalues() {
        let mut rng = trial_rng(4, 0);
        let (a, b) = jacobi_trial(20, 1.0, &mut rng);
        let m = CMat::from_fn(20, 20, |i, j| {
            let v = if i == j {
                a[i]
            } else if j == i + 1 {
                b[i]
            } else if i == j + 1 {
                b[j]
            } else {
                0.0
            };
            c(v, 0.0)
        });
        let z = c(0.3, 0.7);
        let direct: C64 = hermitian_eigenvalues(&m).iter().map(|l| 1.0 / (z - l)).sum();
        assert!((jacobi_resolvent_trace(&a, &b, z) - direct).norm() < 1e-11);
    }

    #[test]
    fn permutation_conjugation_invariance() {
        let s = sample_trial(&gue_spec(12, 1, 8), 0);
        let perm: Vec<usize> = (0..12).map(|i| (5 * i + 3) % 12).collect();
        let p = CMat::from_fn(12, 12, |i, j| if perm[i] == j { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let q = &p * &s * p.transpose();
        let z = c(0.1, 0.9);
        let tr = |m: &CMat| -> C64 { hermitian_eigenvalues(m).iter().map(|l| 1.0 / (z - l)).sum() };
        assert!((tr(&s) - tr(&q)).norm() < 1e-12);
        assert!(((&s * &s).trace() - (&q * &q).trace()).norm() < 1e-12);
    }

    #[test]
    fn std_error_calibration() {
        let mut hits = 0;
        for rep in 0..50 {
            let e = estimate_tau(&gue_spec(32, 40, 1000 + rep), TraceTest::Power(2), Engine::Dense).unwrap();
            hits += usize::from((e.value - 1.0).norm() <= 2.0 * e.std_error);
        }
        assert!(hits >= 45, "{hits}/50");
    }

    #[test]
    fn spike_prediction_at_three_i() {
        let z = c(0.0, 3.0);
        let p = spiked_gue_prediction(1.0, &[2.0], z).unwrap();
        assert!((p - c(-0.12289, 0.07441)).norm() < 1e-4, "{p}");
        let law = spike_law(&[2.0, 0.0, 2.0, -1.0]).unwrap();
        assert_eq!(law.inf_atoms.as_ref().unwrap().len(), 3);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            EnsembleSpec::new(MAX_N + 1, EnsembleKind::Gue { variance: 1.0 }, 0, 1),
            Err(Error::SizeCap { .. })
        ));
        assert!(matches!(sample(&gue_spec(4096, 4, 0)), Err(Error::SizeCap { .. })));
        assert!(matches!(
            estimate_inf_tau(&gue_spec(8, 2, 0), c(0.0, 1.0), None, Engine::Dense),
            Err(Error::MissingReference)
        ));
        assert!(estimate_tau(&gue_spec(8, 2, 0), TraceTest::Power(2), Engine::Tridiagonal).is_err());
    }
}

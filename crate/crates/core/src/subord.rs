//! Subordination fixed points and free additive convolution, scalar and
//! operator-valued, together with the infinitesimal transforms of sums.
//!
//! `ω₁(b)` is the fixed point of `f_b(s) = h_y(h_x(s) + b) + b` with
//! `h = F − id`, reached by plain iteration from `s₀ = b`; then
//! `ω₂ = F_x(ω₁) + b − ω₁` and `G_{x+y}(b) = G_x(ω₁)`. The iteration runs in
//! any [`Ring`], so dual inputs carry `ω′` along for free.

use std::sync::Arc;

use serde::Serialize;

use crate::cumulants::CumulantFamily;
use crate::dual::{CMat, Dual, DualMatrix, DualScalar, Ring, C64};
use crate::error::{Error, Result};
use crate::measures::{cauchy_g, embedded_g, inf_cauchy_g, InfLaw};
use crate::oracle::MomentOracle;
use crate::ovspace::{LinearMapOnB, OVLaw, Realization};

#[derive(Clone, Copy, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl SolveOptions {
    pub fn scalar() -> Self {
        SolveOptions {
            tol: 1e-12,
            max_iter: 200_000,
        }
    }

    pub fn matrix() -> Self {
        SolveOptions {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SubordResult<T> {
    pub omega1: T,
    pub omega2: T,
    /// `G_{x+y}(b) = G_x(ω₁)`.
    pub g_sum: T,
    /// `max(‖F_x(ω₁)+b−ω₁−ω₂‖, ‖F_y(ω₂)+b−ω₁−ω₂‖)` on standard parts.
    pub residual_f: f64,
    /// `‖G_x(ω₁) − G_y(ω₂)‖` on standard parts.
    pub residual_g: f64,
    pub iterations: usize,
}

fn base_norm<T: Ring>(v: &T) -> f64 {
    v.base().iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Iterates `f_b` from `s₀ = b`. `fx`, `fy` evaluate `F_x`, `F_y`.
pub fn solve_subordination<T, FX, FY>(fx: FX, fy: FY, b: &T, opts: SolveOptions) -> Result<SubordResult<T>>
where
    T: Ring,
    FX: Fn(&T) -> Result<T>,
    FY: Fn(&T) -> Result<T>,
{
    let mut s = b.clone();
    let mut delta = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let hx = fx(&s)?.sub(&s);
        let w = hx.add(b);
        let next = fy(&w)?.sub(&w).add(b);
        delta = next.sub(&s).max_abs();
        s = next;
        if !delta.is_finite() {
            break;
        }
        if delta <= opts.tol {
            let fx1 = fx(&s)?;
            let omega2 = fx1.add(b).sub(&s);
            let fy2 = fy(&omega2)?;
            let sum = s.add(&omega2);
            let residual_f = base_norm(&fx1.add(b).sub(&sum)).max(base_norm(&fy2.add(b).sub(&sum)));
            if residual_f > opts.tol {
                continue;
            }
            let g_sum = fx1.inv()?;
            let residual_g = base_norm(&g_sum.sub(&fy2.inv()?));
            let floor = b.im_min() - opts.tol;
            if s.sub(b).im_min() < -opts.tol || omega2.im_min() < floor {
                return Err(Error::Residual {
                    name: "Im ω − Im b",
                    value: s.sub(b).im_min().min(omega2.sub(b).im_min()),
                    tol: opts.tol,
                });
            }
            return Ok(SubordResult {
                omega1: s,
                omega2,
                g_sum,
                residual_f,
                residual_g,
                iterations: it,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        delta,
    })
}

fn scalar_f<S>(law: &InfLaw) -> impl Fn(&S) -> Result<S> + '_
where
    S: crate::dual::Scalar,
{
    move |s: &S| Ok(cauchy_g(law, *s)?.recip())
}

/// Scalar subordination at `b`; with `b = (z, 1)` the dual parts are `ω′(z)`.
pub fn solve_scalar(x: &InfLaw, y: &InfLaw, b: DualScalar, opts: SolveOptions) -> Result<SubordResult<DualScalar>> {
    if b.std.im <= 0.0 {
        return Err(Error::Domain(format!("Im z = {} is not positive", b.std.im)));
    }
    solve_subordination(scalar_f::<DualScalar>(x), scalar_f::<DualScalar>(y), &b, opts)
}

/// `G_{x+y}(z)` and, when both laws carry `μ′`, `g_{x+y}(z)`.
#[derive(Clone, Debug, Serialize)]
pub struct ScalarConvolution {
    pub z: C64,
    pub g: C64,
    /// `G_y(ω₂)`, the second subordinate evaluation.
    pub g_via_y: C64,
    pub inf: Option<C64>,
    pub omega1: C64,
    pub omega2: C64,
    pub domega1: C64,
    pub domega2: C64,
    pub residual_f: f64,
    pub residual_g: f64,
    pub iterations: usize,
}

pub fn free_convolve_g(x: &InfLaw, y: &InfLaw, z: C64, opts: SolveOptions) -> Result<ScalarConvolution> {
    let r = solve_scalar(x, y, Dual::new(z, C64::new(1.0, 0.0)), opts)?;
    let gy = cauchy_g(y, r.omega2.std)?;
    Ok(ScalarConvolution {
        z,
        g: r.g_sum.std,
        g_via_y: gy,
        inf: None,
        omega1: r.omega1.std,
        omega2: r.omega2.std,
        domega1: r.omega1.inf,
        domega2: r.omega2.inf,
        residual_f: r.residual_f,
        residual_g: r.residual_g,
        iterations: r.iterations,
    })
}

/// `g_{x+y}(z) = g_x(ω₁(z))ω₁′(z) + g_y(ω₂(z))ω₂′(z)`.
pub fn scalar_inf_convolve(x: &InfLaw, y: &InfLaw, z: C64, opts: SolveOptions) -> Result<ScalarConvolution> {
    if !x.has_inf() || !y.has_inf() {
        return Err(Error::MissingInf);
    }
    let mut out = free_convolve_g(x, y, z, opts)?;
    let gx = inf_cauchy_g(x, out.omega1)?;
    let gy = inf_cauchy_g(y, out.omega2)?;
    out.inf = Some(gx * out.domega1 + gy * out.domega2);
    Ok(out)
}

/// The same `(G_{x+y}, g_{x+y})` computed by ordinary subordination for
/// `X = x ⊕ x`, `Y = y ⊕ y` in the upper-triangular algebra at `(z, 0)`.
pub fn scalar_inf_convolve_embedded(x: &InfLaw, y: &InfLaw, z: C64, opts: SolveOptions) -> Result<DualScalar> {
    let fx = |s: &DualScalar| -> Result<DualScalar> { Ok(crate::dual::Scalar::recip(embedded_g(x, *s)?)) };
    let fy = |s: &DualScalar| -> Result<DualScalar> { Ok(crate::dual::Scalar::recip(embedded_g(y, *s)?)) };
    let r = solve_subordination(fx, fy, &Dual::new(z, C64::new(0.0, 0.0)), opts)?;
    Ok(r.g_sum)
}

/// Smallest `Im b` for operator-valued queries: `2(M_x + M_y)`, raised
/// until every series-realized law meets its tail tolerance there.
pub fn eta0(x: &OVLaw, y: &OVLaw) -> f64 {
    let mut eta = 2.0 * (x.m_bound + y.m_bound);
    let tail_ok = |law: &OVLaw, eta: f64| {
        if !matches!(law.realization, Realization::Series { .. }) {
            return true;
        }
        let r = 1.0 / eta;
        let ratio = law.m_bound * r;
        ratio < 1.0 && ratio.powi(law.k as i32 + 1) / (1.0 - ratio) * r <= law.tail_tol
    };
    for _ in 0..200 {
        if tail_ok(x, eta) && tail_ok(y, eta) {
            break;
        }
        eta *= 1.1;
    }
    eta
}

fn ov_f(law: &OVLaw, with_inf: bool) -> impl Fn(&DualMatrix) -> Result<DualMatrix> + '_ {
    move |s: &DualMatrix| law.transform(s, with_inf)?.inv()
}

fn check_ov_domain(x: &OVLaw, y: &OVLaw, b: &CMat) -> Result<()> {
    if x.d != y.d || b.nrows() != x.d {
        return Err(Error::Dimension(format!("laws over M_{} and M_{} at a {}x{} point", x.d, y.d, b.nrows(), b.ncols())));
    }
    let im = b.im_min();
    if im <= 0.0 {
        return Err(Error::Domain(format!("Im b has smallest eigenvalue {im}")));
    }
    let series = |l: &OVLaw| matches!(l.realization, Realization::Series { .. });
    if series(x) || series(y) {
        let eta = eta0(x, y);
        if im < eta {
            return Err(Error::Domain(format!(
                "Im b ≥ {eta} needed to keep the orbit in the series regime, got {im}"
            )));
        }
    }
    Ok(())
}

/// Operator-valued subordination at `b`; `b.inf` is a direction, and with
/// `with_inf` the laws are replaced by their upper-triangular embeddings.
pub fn solve_ov(
    x: &OVLaw,
    y: &OVLaw,
    b: &DualMatrix,
    with_inf: bool,
    opts: SolveOptions,
) -> Result<SubordResult<DualMatrix>> {
    check_ov_domain(x, y, &b.std)?;
    solve_subordination(ov_f(x, with_inf), ov_f(y, with_inf), b, opts)
}

/// Subordination at a plain point together with the derivatives
/// `G′_{x+y}(b)`, `ω₁′(b)`, `ω₂′(b)` as linear maps on `B`.
pub struct OvSubordination {
    pub omega1: CMat,
    pub omega2: CMat,
    pub g_sum: CMat,
    pub dg: LinearMapOnB,
    pub domega1: LinearMapOnB,
    pub domega2: LinearMapOnB,
    pub residual_f: f64,
    pub residual_g: f64,
    pub iterations: usize,
}

pub fn ov_subordination(x: &OVLaw, y: &OVLaw, b: &CMat, opts: SolveOptions) -> Result<OvSubordination> {
    let d = x.d;
    // one dual solve per matrix unit; column k of each map is its output
    let mut cols: Vec<SubordResult<DualMatrix>> = Vec::with_capacity(d * d);
    LinearMapOnB::from_fn(d, |c| {
        cols.push(solve_ov(x, y, &Dual::new(b.clone(), c.clone()), false, opts)?);
        Ok(CMat::zeros(d, d))
    })?;
    let take = |pick: fn(&SubordResult<DualMatrix>) -> &CMat| {
        let mut k = 0;
        LinearMapOnB::from_fn(d, |_| {
            k += 1;
            Ok(pick(&cols[k - 1]).clone())
        })
    };
    let dg = take(|r| &r.g_sum.inf)?;
    let domega1 = take(|r| &r.omega1.inf)?;
    let domega2 = take(|r| &r.omega2.inf)?;
    let r = &cols[0];
    Ok(OvSubordination {
        omega1: r.omega1.std.clone(),
        omega2: r.omega2.std.clone(),
        g_sum: r.g_sum.std.clone(),
        dg,
        domega1,
        domega2,
        residual_f: cols.iter().map(|c| c.residual_f).fold(0.0, f64::max),
        residual_g: cols.iter().map(|c| c.residual_g).fold(0.0, f64::max),
        iterations: cols.iter().map(|c| c.iterations).max().unwrap_or(0),
    })
}

/// `[G′∘ω₁′∘G′^{⟨−1⟩}](u₁) + [G′∘ω₂′∘G′^{⟨−1⟩}](u₂)`.
fn conjugated_sum(s: &OvSubordination, u1: &CMat, u2: &CMat) -> Result<CMat> {
    let inv = s.dg.inverse()?;
    let t1 = s.dg.compose(&s.domega1).compose(&inv).apply(u1);
    let t2 = s.dg.compose(&s.domega2).compose(&inv).apply(u2);
    Ok(t1 + t2)
}

#[derive(Clone, Debug)]
pub struct OvInfConvolution {
    pub g_sum: CMat,
    /// `g_{x+y}(b)` from the linear-map formula.
    pub inf: CMat,
    /// `g_{x+y}(b)` from subordination in the upper-triangular algebra.
    pub inf_embedded: CMat,
    pub omega1: CMat,
    pub omega2: CMat,
    pub residual_f: f64,
    pub residual_g: f64,
    pub iterations: usize,
}

/// `g_{x+y}(b)` for infinitesimally free `x`, `y` over `B = M_d(ℂ)`.
pub fn ov_inf_convolve(x: &OVLaw, y: &OVLaw, b: &CMat, opts: SolveOptions) -> Result<OvInfConvolution> {
    if !x.has_inf() || !y.has_inf() {
        return Err(Error::MissingInf);
    }
    let s = ov_subordination(x, y, b, opts)?;
    let gx = crate::ovspace::ov_inf_cauchy_g(x, &s.omega1)?;
    let gy = crate::ovspace::ov_inf_cauchy_g(y, &s.omega2)?;
    let inf = conjugated_sum(&s, &gx, &gy)?;
    let emb = solve_ov(x, y, &Dual::constant(b.clone()), true, opts)?;
    Ok(OvInfConvolution {
        g_sum: s.g_sum.clone(),
        inf,
        inf_embedded: emb.g_sum.inf,
        omega1: s.omega1,
        omega2: s.omega2,
        residual_f: s.residual_f.max(emb.residual_f),
        residual_g: s.residual_g.max(emb.residual_g),
        iterations: s.iterations.max(emb.iterations),
    })
}

/// A one-parameter family of laws `t ↦ μ(t)`.
pub trait LawPath {
    fn law_at(&self, t: f64) -> Result<OVLaw>;
    /// `∂G_{μ(t)}(b)`.
    fn tangent(&self, t: f64, b: &CMat) -> Result<CMat>;
}

/// `E_t = E + tE′` on a moment oracle; `E′` stays the velocity.
struct ShiftedOracle {
    base: Arc<dyn MomentOracle>,
    t: f64,
}

impl MomentOracle for ShiftedOracle {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn moment(&self, word: &[usize], coeffs: &[CMat]) -> Result<CMat> {
        let m = self.base.moment(word, coeffs)?;
        if self.t == 0.0 {
            return Ok(m);
        }
        Ok(m + self.base.inf_moment(word, coeffs)? * C64::new(self.t, 0.0))
    }

    fn has_inf(&self) -> bool {
        self.base.has_inf()
    }

    fn inf_moment(&self, word: &[usize], coeffs: &[CMat]) -> Result<CMat> {
        self.base.inf_moment(word, coeffs)
    }
}

/// Moments `mₖ + t·m′ₖ`, realized by the resolvent series.
pub struct MomentLinePath {
    pub oracle: Arc<dyn MomentOracle>,
    pub labels: Vec<usize>,
    pub m_bound: f64,
    pub k: usize,
}

impl LawPath for MomentLinePath {
    fn law_at(&self, t: f64) -> Result<OVLaw> {
        let o = Arc::new(ShiftedOracle {
            base: self.oracle.clone(),
            t,
        });
        OVLaw::series(o, self.labels.clone(), self.m_bound, self.k)
    }

    fn tangent(&self, t: f64, b: &CMat) -> Result<CMat> {
        Ok(self.law_at(t)?.transform(&Dual::constant(b.clone()), true)?.inf)
    }
}

/// Cumulants `κ + t·∂κ` of a closed family; the tangent is propagated
/// through the cumulant fixed point in dual arithmetic.
pub struct CumulantLinePath {
    pub family: CumulantFamily,
    pub m_bound: f64,
}

impl LawPath for CumulantLinePath {
    fn law_at(&self, t: f64) -> Result<OVLaw> {
        OVLaw::from_cumulants(self.family.along_tangent(t), self.m_bound)
    }

    fn tangent(&self, t: f64, b: &CMat) -> Result<CMat> {
        Ok(self.law_at(t)?.transform(&Dual::constant(b.clone()), true)?.inf)
    }
}

/// `∂G_{μ(t)⊞ν(t)}(b)` from the subordination functions at `t`.
pub fn path_derivative_convolution(
    mu: &dyn LawPath,
    nu: &dyn LawPath,
    t: f64,
    b: &CMat,
    opts: SolveOptions,
) -> Result<CMat> {
    let x = mu.law_at(t)?;
    let y = nu.law_at(t)?;
    let s = ov_subordination(&x, &y, b, opts)?;
    let u1 = mu.tangent(t, &s.omega1)?;
    let u2 = nu.tangent(t, &s.omega2)?;
    conjugated_sum(&s, &u1, &u2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::semicircle_g;
    use crate::ovspace::ov_cauchy_g;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sc(v: f64) -> InfLaw {
        InfLaw::semicircle(0.0, v).unwrap()
    }

    #[test]
    fn point_masses() {
        let (a, b) = (0.7, -1.2);
        let x = InfLaw::atomic(&[(a, 1.0, 0.0)]).unwrap();
        let y = InfLaw::atomic(&[(b, 1.0, 0.0)]).unwrap();
        let z = c(0.3, 0.8);
        let r = free_convolve_g(&x, &y, z, SolveOptions::scalar()).unwrap();
        assert!((r.omega1 - (z - b)).norm() < 1e-14);
        assert!((r.omega2 - (z - a)).norm() < 1e-14);
        assert!((r.g - 1.0 / (z - a - b)).norm() < 1e-14);
    }

    #[test]
    fn semicircles_add_variances() {
        let z = c(0.0, 2.0);
        let r = free_convolve_g(&sc(1.0), &sc(1.0), z, SolveOptions::scalar()).unwrap();
        let g2: C64 = semicircle_g(0.0, 2.0, z);
        assert!((r.g - g2).norm() < 1e-10);
        let f = 1.0 / g2;
        assert!((r.omega1 - (z + f) / 2.0).norm() < 1e-10);
        assert!(r.residual_f <= 1e-11 && r.residual_g <= 1e-11);
        assert!((r.g - r.g_via_y).norm() < 1e-11);
    }

    #[test]
    fn omega_derivative_matches_differences() {
        let x = sc(1.0);
        let y = InfLaw::atomic(&[(-1.0, 0.5, 0.0), (1.0, 0.5, 0.0)]).unwrap();
        let z = c(0.4, 1.2);
        let r = free_convolve_g(&x, &y, z, SolveOptions::scalar()).unwrap();
        let h = 1e-5;
        let p = free_convolve_g(&x, &y, z + h, SolveOptions::scalar()).unwrap();
        let m = free_convolve_g(&x, &y, z - h, SolveOptions::scalar()).unwrap();
        assert!((r.domega1 - (p.omega1 - m.omega1) / (2.0 * h)).norm() < 1e-7);
        assert!((r.domega2 - (p.omega2 - m.omega2) / (2.0 * h)).norm() < 1e-7);
        // implicit route: ω₁ = f_z(ω₁) gives (1 − ∂ₛf)ω₁′ = ∂_z f
        let f = |s: C64, z: C64| -> C64 {
            let hx = 1.0 / cauchy_g(&x, s).unwrap() - s;
            let w = hx + z;
            1.0 / cauchy_g(&y, w).unwrap() - w + z
        };
        let ds = (f(r.omega1 + h, z) - f(r.omega1 - h, z)) / (2.0 * h);
        let dz = (f(r.omega1, z + h) - f(r.omega1, z - h)) / (2.0 * h);
        assert!((r.domega1 - dz / (1.0 - ds)).norm() < 1e-7);
    }

    #[test]
    fn spike_reduction() {
        let theta = 2.0;
        let x = sc(1.0).with_inf_moments(vec![0.0; 17]).unwrap();
        let y = InfLaw::atomic(&[(0.0, 1.0, -1.0), (theta, 0.0, 1.0)]).unwrap();
        for z in [c(0.0, 2.0), c(0.0, 3.0), c(1.0, 2.0)] {
            let r = scalar_inf_convolve(&x, &y, z, SolveOptions::scalar()).unwrap();
            let fd = cauchy_g(&sc(1.0), Dual::new(z, c(1.0, 0.0))).unwrap();
            let f = 1.0 / fd.std;
            let fp = -fd.inf / (fd.std * fd.std);
            let expect = (1.0 / (f - theta) - 1.0 / f) * fp;
            assert!((r.inf.unwrap() - expect).norm() < 1e-10);
            let e = scalar_inf_convolve_embedded(&x, &y, z, SolveOptions::scalar()).unwrap();
            assert!((e.inf - expect).norm() < 1e-10);
            assert!((e.std - r.g).norm() < 1e-11);
        }
    }

    #[test]
    fn zero_inf_parts() {
        let x = sc(1.0).with_inf_moments(vec![0.0; 17]).unwrap();
        let y = sc(0.5).with_inf_moments(vec![0.0; 17]).unwrap();
        let r = scalar_inf_convolve(&x, &y, c(0.2, 1.0), SolveOptions::scalar()).unwrap();
        assert_eq!(r.inf.unwrap(), c(0.0, 0.0));
        assert!(matches!(scalar_inf_convolve(&sc(1.0), &y, c(0.0, 1.0), SolveOptions::scalar()), Err(Error::MissingInf)));
    }

    #[test]
    fn non_convergence_is_reported() {
        let opts = SolveOptions { tol: 1e-12, max_iter: 3 };
        assert!(matches!(
            free_convolve_g(&sc(1.0), &sc(1.0), c(0.0, 0.5), opts),
            Err(Error::NoConvergence { .. })
        ));
        assert!(matches!(
            free_convolve_g(&sc(1.0), &sc(1.0), c(0.0, -0.5), SolveOptions::scalar()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn ov_scalar_reduction() {
        let x = sc(1.0).with_inf_atoms(&[(0.0, -0.5), (1.0, 0.5)]).unwrap();
        let y = InfLaw::atomic(&[(-0.5, 0.5, 0.2), (1.0, 0.5, -0.2)]).unwrap();
        let z = c(0.3, 1.5);
        let s = scalar_inf_convolve(&x, &y, z, SolveOptions::scalar()).unwrap();
        let ox = OVLaw::diagonal(x, 1);
        let oy = OVLaw::diagonal(y, 1);
        let o = ov_inf_convolve(&ox, &oy, &CMat::from_element(1, 1, z), SolveOptions::scalar()).unwrap();
        assert!((o.inf[(0, 0)] - s.inf.unwrap()).norm() < 1e-10);
        assert!((o.inf_embedded[(0, 0)] - s.inf.unwrap()).norm() < 1e-10);
        assert!((o.g_sum[(0, 0)] - s.g).norm() < 1e-10);
    }

    #[test]
    fn ov_diagonal_lift() {
        let x = sc(1.0).with_inf_atoms(&[(0.0, -1.0), (2.0, 1.0)]).unwrap();
        let y = InfLaw::atomic(&[(-1.0, 0.5, 0.0), (1.0, 0.5, 0.0)]).unwrap().with_inf_moments(vec![0.0; 17]).unwrap();
        let z = c(-0.4, 1.1);
        let s = scalar_inf_convolve(&x, &y, z, SolveOptions::scalar()).unwrap();
        let d = 3;
        let o = ov_inf_convolve(&OVLaw::diagonal(x, d), &OVLaw::diagonal(y, d), &(CMat::identity(d, d) * z), SolveOptions::matrix()).unwrap();
        assert!((o.inf - CMat::identity(d, d) * s.inf.unwrap()).max_abs() < 1e-8);
    }

    fn ov_family(d: usize, seed: u64) -> CumulantFamily {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut f = CumulantFamily::new(d, vec![0], 2, true);
        let a: Vec<CMat> = (0..2)
            .map(|_| CMat::from_fn(d, d, |_, _| c(rng.random_range(-0.5..0.5), 0.0)))
            .collect();
        let m1 = CMat::from_fn(d, d, |i, j| c(if i == j { rng.random_range(-0.5..0.5) } else { 0.0 }, 0.0));
        let v1 = CMat::from_fn(d, d, |i, j| c(if i == j { 0.3 } else { 0.1 * (i + j) as f64 }, 0.0));
        f.insert(&[0], |_| (m1.clone(), v1.clone())).unwrap();
        // η(w) = Σ aₖ w aₖ + diag-ish, ∂η(w) = a₀ w a₁ + a₁ w a₀
        f.insert(&[0, 0], |u| {
            let mut e = CMat::zeros(d, d);
            e[(u[0].0, u[0].1)] = c(1.0, 0.0);
            let eta = &a[0] * &e * &a[0] + &a[1] * &e * &a[1] + &e * c(0.5, 0.0);
            let deta = &a[0] * &e * &a[1] + &a[1] * &e * &a[0];
            (eta, deta)
        })
        .unwrap();
        f
    }

    #[test]
    fn ov_routes_agree_off_diagonal() {
        let d = 2;
        let x = OVLaw::from_cumulants(ov_family(d, 1), 3.0).unwrap();
        let y = OVLaw::from_cumulants(ov_family(d, 2), 3.0).unwrap();
        let b = CMat::from_fn(d, d, |i, j| if i == j { c(0.2 * i as f64, 1.0) } else { c(0.3, 0.0) });
        let o = ov_inf_convolve(&x, &y, &b, SolveOptions::matrix()).unwrap();
        assert!((o.inf.clone() - &o.inf_embedded).max_abs() < 1e-9, "{} vs {}", o.inf, o.inf_embedded);
        // path route at t = 0
        let px = CumulantLinePath { family: ov_family(d, 1), m_bound: 3.0 };
        let py = CumulantLinePath { family: ov_family(d, 2), m_bound: 3.0 };
        let p = path_derivative_convolution(&px, &py, 0.0, &b, SolveOptions::matrix()).unwrap();
        assert!((p - &o.inf).max_abs() < 1e-9);
        // finite differences in t
        let t = 0.1;
        let h = 1e-4;
        let gsum = |t: f64| {
            let x = px.law_at(t).unwrap();
            let y = py.law_at(t).unwrap();
            solve_ov(&x, &y, &Dual::constant(b.clone()), false, SolveOptions::matrix()).unwrap().g_sum.std
        };
        let fd = (gsum(t + h) - gsum(t - h)) * c(0.5 / h, 0.0);
        let p = path_derivative_convolution(&px, &py, t, &b, SolveOptions::matrix()).unwrap();
        assert!((p - fd).max_abs() < 1e-6);
        let _ = ov_cauchy_g(&x, &Dual::constant(b)).unwrap();
    }
}

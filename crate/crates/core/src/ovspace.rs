//! Operator-valued laws over `B = M_d(ℂ)`: Cauchy transforms, their
//! Fréchet derivatives, and the entrywise lift of scalar laws to matrices.

use std::sync::Arc;

use crate::cumulants::CumulantFamily;
use crate::dual::{dual_inv, CMat, Dual, DualMatrix, Ring, C64};
use crate::error::{Error, Result};
use crate::measures::{InfLaw, LawKind};
use crate::oracle::{check_word, word_key, Memo, MomentOracle};

/// Largest `d` for which linear maps on `B` are assembled.
pub const MAX_D: usize = 6;
/// Largest matrix size for the exhaustive lift sums.
pub const MAX_LIFT_N: usize = 8;

/// Spectral norm of a matrix.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 1 {
        return m[(0, 0)].norm();
    }
    m.clone().singular_values().max()
}

/// A linear map `B → B` as a `d²×d²` matrix on row-major vectorizations.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearMapOnB {
    d: usize,
    mat: CMat,
}

fn vectorize(m: &CMat) -> Vec<C64> {
    let d = m.nrows();
    (0..d * d).map(|k| m[(k / d, k % d)]).collect()
}

impl LinearMapOnB {
    /// Assembles the map column by column on the matrix units `E_{pq}`.
    pub fn from_fn<F: FnMut(&CMat) -> Result<CMat>>(d: usize, mut f: F) -> Result<Self> {
        if d > MAX_D {
            return Err(Error::SizeCap { what: "d", value: d, cap: MAX_D });
        }
        let mut mat = CMat::zeros(d * d, d * d);
        for p in 0..d {
            for q in 0..d {
                let mut e = CMat::zeros(d, d);
                e[(p, q)] = C64::new(1.0, 0.0);
                let col = vectorize(&f(&e)?);
                for (k, v) in col.into_iter().enumerate() {
                    mat[(k, p * d + q)] = v;
                }
            }
        }
        Ok(LinearMapOnB { d, mat })
    }

    pub fn identity(d: usize) -> Self {
        LinearMapOnB {
            d,
            mat: CMat::identity(d * d, d * d),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn apply(&self, c: &CMat) -> CMat {
        let v = CMat::from_column_slice(self.d * self.d, 1, &vectorize(c));
        let w = &self.mat * v;
        CMat::from_fn(self.d, self.d, |i, j| w[(i * self.d + j, 0)])
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &LinearMapOnB) -> LinearMapOnB {
        LinearMapOnB {
            d: self.d,
            mat: &self.mat * &other.mat,
        }
    }

    pub fn add(&self, other: &LinearMapOnB) -> LinearMapOnB {
        LinearMapOnB {
            d: self.d,
            mat: &self.mat + &other.mat,
        }
    }

    pub fn sub(&self, other: &LinearMapOnB) -> LinearMapOnB {
        LinearMapOnB {
            d: self.d,
            mat: &self.mat - &other.mat,
        }
    }

    pub fn singular_values(&self) -> Vec<f64> {
        self.mat.clone().singular_values().iter().copied().collect()
    }

    /// Inverse as a linear map; fails when the smallest singular value is
    /// negligible relative to the largest.
    pub fn inverse(&self) -> Result<LinearMapOnB> {
        let s = self.singular_values();
        let max = s.iter().copied().fold(0.0, f64::max);
        let min = s.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 1e-12 * max) {
            return Err(Error::NonInvertible(min));
        }
        let inv = self.mat.clone().try_inverse().ok_or(Error::NonInvertible(min))?;
        Ok(LinearMapOnB { d: self.d, mat: inv })
    }
}

/// How the transforms of a law are computed.
#[derive(Clone)]
pub enum Realization {
    /// Resolvent series `Σₙ 𝔼[β(xβ)ⁿ]`, `β = b⁻¹`, with `x` the sum of the
    /// given variables of the oracle.
    Series {
        oracle: Arc<dyn MomentOracle>,
        labels: Vec<usize>,
    },
    /// `x = a ⊗ 1` for a scalar law `a`, under `φ ⊗ Id_d`.
    Diagonal(InfLaw),
    /// `G = (b − R(G))⁻¹` with `R(w) = Σₙ κₙ(xw⋯wx)` from a closed family.
    Cumulants(Arc<CumulantFamily>),
}

/// An operator-valued infinitesimal law with norm bound `M`.
#[derive(Clone)]
pub struct OVLaw {
    pub d: usize,
    pub m_bound: f64,
    /// Truncation order of the resolvent series.
    pub k: usize,
    pub tail_tol: f64,
    pub realization: Realization,
}

const FIXED_POINT_TOL: f64 = 1e-15;
const FIXED_POINT_MAX_ITER: usize = 100_000;

impl OVLaw {
    pub fn series(oracle: Arc<dyn MomentOracle>, labels: Vec<usize>, m_bound: f64, k: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Invalid("series law needs at least one variable".into()));
        }
        Ok(OVLaw {
            d: oracle.dim(),
            m_bound,
            k,
            tail_tol: 1e-10,
            realization: Realization::Series { oracle, labels },
        })
    }

    pub fn diagonal(law: InfLaw, d: usize) -> Self {
        OVLaw {
            d,
            m_bound: law.support_bound,
            k: law.order(),
            tail_tol: 1e-10,
            realization: Realization::Diagonal(law),
        }
    }

    /// Law of the single variable of a closed cumulant family.
    pub fn from_cumulants(family: CumulantFamily, m_bound: f64) -> Result<Self> {
        if !family.is_closed() || family.labels().len() != 1 {
            return Err(Error::Invalid(
                "cumulant realization needs a closed single-variable family".into(),
            ));
        }
        Ok(OVLaw {
            d: family.dim(),
            m_bound,
            k: family.n_max(),
            tail_tol: 1e-10,
            realization: Realization::Cumulants(Arc::new(family)),
        })
    }

    pub fn with_order(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_tail_tol(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }

    pub fn has_inf(&self) -> bool {
        match &self.realization {
            Realization::Series { oracle, .. } => oracle.has_inf(),
            Realization::Diagonal(l) => l.has_inf(),
            Realization::Cumulants(_) => true,
        }
    }

    /// Geometric bound on the neglected series terms at `b`; 0 for exact
    /// realizations.
    pub fn tail_bound(&self, b: &CMat) -> Result<f64> {
        if !matches!(self.realization, Realization::Series { .. }) {
            return Ok(0.0);
        }
        let beta = b.clone().try_inverse().ok_or(Error::Singular)?;
        let r = op_norm(&beta);
        let ratio = self.m_bound * r;
        if ratio >= 1.0 {
            return Err(Error::SeriesRegime { ratio });
        }
        Ok(ratio.powi(self.k as i32 + 1) / (1.0 - ratio) * r)
    }

    /// `(G(b), G′(b)(b′) + [with_inf]·g(b))` for `b = (b, b′)`. With
    /// `with_inf` this is the transform of `X = [[x,0],[0,x]]` under `Ẽ`.
    pub fn transform(&self, b: &DualMatrix, with_inf: bool) -> Result<DualMatrix> {
        if b.std.nrows() != self.d || b.inf.nrows() != self.d {
            return Err(Error::Dimension(format!("point is not {}x{}", self.d, self.d)));
        }
        match &self.realization {
            Realization::Series { oracle, labels } => {
                let bound = self.tail_bound(&b.std)?;
                if bound > self.tail_tol {
                    return Err(Error::TailBound {
                        bound,
                        tol: self.tail_tol,
                    });
                }
                if with_inf && !oracle.has_inf() {
                    return Err(Error::MissingInf);
                }
                series(oracle.as_ref(), labels, b, self.k, with_inf)
            }
            Realization::Diagonal(law) => diagonal(law, b, with_inf),
            Realization::Cumulants(f) => cumulant_fixed_point(f, b, with_inf),
        }
    }
}

fn words(labels: &[usize], n: usize) -> Vec<Vec<usize>> {
    crate::cumulants::all_words(labels, n)
}

fn series(o: &dyn MomentOracle, labels: &[usize], b: &DualMatrix, k: usize, with_inf: bool) -> Result<DualMatrix> {
    let beta = dual_inv(b)?;
    let mut acc = beta.clone();
    for n in 1..=k {
        let coeffs = vec![beta.clone(); n + 1];
        for w in words(labels, n) {
            acc = Ring::add(&acc, &o.moment_dual(&w, &coeffs, with_inf)?);
        }
    }
    Ok(acc)
}

/// Matrix function `Σ wᵢ(b − xᵢ)⁻¹` in dual arithmetic.
fn atomic_resolvent(atoms: &[(f64, f64)], b: &DualMatrix) -> Result<DualMatrix> {
    let d = b.std.nrows();
    let id = DualMatrix::identity(d);
    let mut acc = Dual::constant(CMat::zeros(d, d));
    for &(x, w) in atoms {
        let shifted = Ring::sub(b, &id.scale(C64::new(x, 0.0)));
        acc = Ring::add(&acc, &dual_inv(&shifted)?.scale(C64::new(w, 0.0)));
    }
    Ok(acc)
}

/// `Σ mₖ b^{−k−1}`, valid for `‖b⁻¹‖·M < 1`.
fn laurent(m: &[f64], b: &DualMatrix, bound: f64) -> Result<DualMatrix> {
    let beta = dual_inv(b)?;
    let ratio = bound * op_norm(&beta.std);
    if ratio >= 1.0 {
        return Err(Error::SeriesRegime { ratio });
    }
    let d = b.std.nrows();
    let mut acc = Dual::constant(CMat::zeros(d, d));
    for &mk in m.iter().rev() {
        acc = Ring::mul(&Ring::add(&acc, &DualMatrix::identity(d).scale(C64::new(mk, 0.0))), &beta);
    }
    Ok(acc)
}

fn diagonal(law: &InfLaw, b: &DualMatrix, with_inf: bool) -> Result<DualMatrix> {
    let g = match &law.kind {
        LawKind::Semicircle { mean, variance } => {
            let id = DualMatrix::identity(b.std.nrows());
            let shifted = Ring::sub(b, &id.scale(C64::new(*mean, 0.0)));
            let v = *variance;
            fixed_point(&shifted, |g| Ok(g.scale(C64::new(v, 0.0))))?
        }
        LawKind::Atomic(atoms) => atomic_resolvent(atoms, b)?,
        LawKind::MomentTable => laurent(&law.std_moments, b, law.support_bound)?,
    };
    if !with_inf {
        return Ok(g);
    }
    let point = Dual::constant(b.std.clone());
    let gi = match (&law.inf_atoms, &law.inf_moments) {
        (Some(atoms), _) => atomic_resolvent(atoms, &point)?,
        (None, Some(m)) => laurent(m, &point, law.support_bound)?,
        (None, None) => return Err(Error::MissingInf),
    };
    Ok(Dual::new(g.std, g.inf + gi.std))
}

/// Solves `G = (b − R(G))⁻¹` by damped iteration from `G = b⁻¹`.
fn fixed_point<F>(b: &DualMatrix, mut r: F) -> Result<DualMatrix>
where
    F: FnMut(&DualMatrix) -> Result<DualMatrix>,
{
    let mut g = dual_inv(b)?;
    let half = C64::new(0.5, 0.0);
    let mut delta = f64::INFINITY;
    for _ in 0..FIXED_POINT_MAX_ITER {
        let next = dual_inv(&Ring::sub(b, &r(&g)?))?;
        let avg = Ring::add(&g.scale(half), &next.scale(half));
        delta = Ring::sub(&avg, &g).max_abs();
        g = avg;
        if delta <= FIXED_POINT_TOL * (1.0 + g.max_abs()) {
            // one undamped step polishes the last digits
            return dual_inv(&Ring::sub(b, &r(&g)?));
        }
    }
    Err(Error::NoConvergence {
        iterations: FIXED_POINT_MAX_ITER,
        delta,
    })
}

fn cumulant_fixed_point(f: &CumulantFamily, b: &DualMatrix, with_inf: bool) -> Result<DualMatrix> {
    let label = f.labels()[0];
    let d = f.dim();
    let id = DualMatrix::identity(d);
    fixed_point(b, |g| {
        let mut acc = Dual::constant(CMat::zeros(d, d));
        for n in 1..=f.n_max() {
            let mut coeffs = vec![g.clone(); n + 1];
            coeffs[0] = id.clone();
            coeffs[n] = id.clone();
            if let Some(v) = f.eval(&vec![label; n], &coeffs, with_inf)? {
                acc = Ring::add(&acc, &v);
            }
        }
        Ok(acc)
    })
}

/// `G_x(b)`, with `b.inf` as the direction of differentiation.
pub fn ov_cauchy_g(law: &OVLaw, b: &DualMatrix) -> Result<DualMatrix> {
    law.transform(b, false)
}

/// `g_x(b) = 𝔼′[(b − x)⁻¹]`.
pub fn ov_inf_cauchy_g(law: &OVLaw, b: &CMat) -> Result<CMat> {
    if !law.has_inf() {
        return Err(Error::MissingInf);
    }
    Ok(law.transform(&Dual::constant(b.clone()), true)?.inf)
}

/// `G_X([[b, c],[0, b]]) = [[G(b), G′(b)(c) + g(b)],[0, G(b)]]`.
pub fn ov_embedded_g(law: &OVLaw, b: &DualMatrix) -> Result<DualMatrix> {
    law.transform(b, true)
}

/// `c ↦ G′(b)(c)`.
pub fn frechet_derivative(law: &OVLaw, b: &CMat) -> Result<LinearMapOnB> {
    LinearMapOnB::from_fn(law.d, |c| Ok(law.transform(&Dual::new(b.clone(), c.clone()), false)?.inf))
}

/// `E = φ ⊗ Id_N` and `E′ = φ′ ⊗ Id_N` on matrices whose entries are
/// variables of a scalar joint law. `entries[k][i][j]` is the label of the
/// `(i, j)` entry of the `k`-th matrix, `None` for a zero entry.
pub struct LiftOracle {
    scalar: Arc<dyn MomentOracle>,
    entries: Vec<Vec<Vec<Option<usize>>>>,
    n: usize,
    std_memo: Memo<C64>,
    inf_memo: Memo<C64>,
}

pub fn lift_scalar_matrix(
    scalar: Arc<dyn MomentOracle>,
    entries: Vec<Vec<Vec<Option<usize>>>>,
    n: usize,
) -> Result<LiftOracle> {
    if n == 0 || n > MAX_LIFT_N {
        return Err(Error::SizeCap {
            what: "N",
            value: n,
            cap: MAX_LIFT_N,
        });
    }
    if scalar.dim() != 1 {
        return Err(Error::Dimension("lift needs a scalar joint law".into()));
    }
    for m in &entries {
        if m.len() != n || m.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("entry matrix is not {n}x{n}")));
        }
    }
    Ok(LiftOracle {
        scalar,
        entries,
        n,
        std_memo: Memo::default(),
        inf_memo: Memo::default(),
    })
}

impl LiftOracle {
    fn scalar_value(&self, labels: &[usize], inf: bool) -> Result<C64> {
        let one = vec![CMat::identity(1, 1); labels.len() + 1];
        let key = word_key(labels, &[]);
        if inf {
            self.inf_memo.get_or(key, || Ok(self.scalar.inf_moment(labels, &one)?[(0, 0)]))
        } else {
            self.std_memo.get_or(key, || Ok(self.scalar.moment(labels, &one)?[(0, 0)]))
        }
    }

    fn lifted(&self, word: &[usize], coeffs: &[CMat], inf: bool) -> Result<CMat> {
        check_word(self.n, word, coeffs)?;
        if let Some(&k) = word.iter().find(|&&k| k >= self.entries.len()) {
            return Err(Error::Invalid(format!("no matrix with label {k}")));
        }
        let n = self.n;
        let mut out = CMat::zeros(n, n);
        let mut labels = Vec::with_capacity(word.len());
        self.walk(word, coeffs, 0, coeffs[0].clone(), &mut labels, inf, &mut out)?;
        Ok(out)
    }

    /// Depth-first sum over the internal indices; `acc` is
    /// `b₀E_{i₁j₁}b₁⋯E_{i_kj_k}b_k` for the indices chosen so far.
    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        word: &[usize],
        coeffs: &[CMat],
        pos: usize,
        acc: CMat,
        labels: &mut Vec<usize>,
        inf: bool,
        out: &mut CMat,
    ) -> Result<()> {
        if pos == word.len() {
            let v = self.scalar_value(labels, inf)?;
            if v != C64::new(0.0, 0.0) {
                *out += acc * v;
            }
            return Ok(());
        }
        let m = &self.entries[word[pos]];
        let n = self.n;
        for i in 0..n {
            if acc.column(i).iter().all(|v| *v == C64::new(0.0, 0.0)) {
                continue;
            }
            for j in 0..n {
                let Some(l) = m[i][j] else { continue };
                // acc·E_{ij}·b: column i of acc times row j of b
                let next = acc.column(i) * coeffs[pos + 1].row(j);
                labels.push(l);
                self.walk(word, coeffs, pos + 1, next, labels, inf, out)?;
                labels.pop();
            }
        }
        Ok(())
    }
}

impl MomentOracle for LiftOracle {
    fn dim(&self) -> usize {
        self.n
    }

    fn moment(&self, word: &[usize], coeffs: &[CMat]) -> Result<CMat> {
        self.lifted(word, coeffs, false)
    }

    fn has_inf(&self) -> bool {
        self.scalar.has_inf()
    }

    fn inf_moment(&self, word: &[usize], coeffs: &[CMat]) -> Result<CMat> {
        if !self.scalar.has_inf() {
            return Err(Error::MissingInf);
        }
        self.lifted(word, coeffs, true)
    }
}

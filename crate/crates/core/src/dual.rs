//! Dual numbers `a + t·a'` with `t² = 0`, over `ℂ` and over `M_d(ℂ)`.
//!
//! The same algebra serves two purposes: it is the upper-triangular space
//! `[[a, a'], [0, a]]`, and it propagates first derivatives through any
//! computation built from ring operations and inverses. Nesting
//! (`Dual<Dual<T>>`) gives two independent first-order directions.

use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::oracle::{DualElement, MomentOracle};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Ring operations shared by scalars, matrices and their dual extensions.
pub trait Ring: Clone + fmt::Debug + PartialEq {
    fn zero_like(&self) -> Self;
    fn one_like(&self) -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn scale(&self, c: C64) -> Self;
    /// Two-sided inverse; fails when the standard part is singular.
    fn inv(&self) -> Result<Self>;
    /// Matrix size `d` (1 for scalars).
    fn dim(&self) -> usize;
    /// Largest absolute entry over every graded part.
    fn max_abs(&self) -> f64;
    /// Smallest eigenvalue of `Im` of the innermost standard part.
    fn im_min(&self) -> f64;
    /// The innermost standard part as a `d×d` matrix.
    fn base(&self) -> CMat;
    /// Embeds a plain matrix with all graded parts zero, shaped like `self`.
    fn lift_base(&self, m: &CMat) -> Self;
}

impl Ring for C64 {
    fn zero_like(&self) -> Self {
        C64::new(0.0, 0.0)
    }
    fn one_like(&self) -> Self {
        C64::new(1.0, 0.0)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale(&self, c: C64) -> Self {
        self * c
    }
    fn inv(&self) -> Result<Self> {
        if self.norm() == 0.0 || !self.is_finite() {
            return Err(Error::Singular);
        }
        Ok(self.inv())
    }
    fn dim(&self) -> usize {
        1
    }
    fn max_abs(&self) -> f64 {
        self.norm()
    }
    fn im_min(&self) -> f64 {
        self.im
    }
    fn base(&self) -> CMat {
        CMat::from_element(1, 1, *self)
    }
    fn lift_base(&self, m: &CMat) -> Self {
        m[(0, 0)]
    }
}

impl Ring for CMat {
    fn zero_like(&self) -> Self {
        CMat::zeros(self.nrows(), self.ncols())
    }
    fn one_like(&self) -> Self {
        CMat::identity(self.nrows(), self.ncols())
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn scale(&self, c: C64) -> Self {
        self * c
    }
    fn inv(&self) -> Result<Self> {
        let inv = self.clone().try_inverse().ok_or(Error::Singular)?;
        if inv.iter().all(|v| v.is_finite()) {
            Ok(inv)
        } else {
            Err(Error::Singular)
        }
    }
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0, |m, v| m.max(v.norm()))
    }
    fn im_min(&self) -> f64 {
        let im = (self - self.adjoint()) * C64::new(0.0, -0.5);
        im.symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v))
    }
    fn base(&self) -> CMat {
        self.clone()
    }
    fn lift_base(&self, m: &CMat) -> Self {
        m.clone()
    }
}

/// `std + t·inf` with `t² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub std: T,
    pub inf: T,
}

pub type DualScalar = Dual<C64>;
pub type DualMatrix = Dual<CMat>;

impl<T: Ring> Dual<T> {
    pub fn new(std: T, inf: T) -> Self {
        Dual { std, inf }
    }

    /// `x + t·0`.
    pub fn constant(std: T) -> Self {
        let inf = std.zero_like();
        Dual { std, inf }
    }
}

impl DualScalar {
    pub fn re(a: f64, b: f64) -> Self {
        Dual::new(C64::new(a, 0.0), C64::new(b, 0.0))
    }
}

impl DualMatrix {
    pub fn identity(d: usize) -> Self {
        Dual::constant(CMat::identity(d, d))
    }

    /// The `2d×2d` upper-triangular matrix `[[std, inf], [0, std]]`.
    pub fn to_block(&self) -> CMat {
        let d = self.std.nrows();
        let mut m = CMat::zeros(2 * d, 2 * d);
        m.view_mut((0, 0), (d, d)).copy_from(&self.std);
        m.view_mut((d, d), (d, d)).copy_from(&self.std);
        m.view_mut((0, d), (d, d)).copy_from(&self.inf);
        m
    }

    /// Inverse of [`DualMatrix::to_block`]; the lower-left block is ignored.
    pub fn from_block(m: &CMat) -> Self {
        let d = m.nrows() / 2;
        Dual::new(
            m.view((0, 0), (d, d)).into_owned(),
            m.view((0, d), (d, d)).into_owned(),
        )
    }
}

fn check_dims<T: Ring>(x: &T, y: &T) -> Result<()> {
    if x.dim() != y.dim() {
        return Err(Error::Dimension(format!("{} vs {}", x.dim(), y.dim())));
    }
    Ok(())
}

/// `(x.std·y.std, x.std·y.inf + x.inf·y.std)`.
pub fn dual_mul<T: Ring>(x: &Dual<T>, y: &Dual<T>) -> Result<Dual<T>> {
    check_dims(&x.std, &y.std)?;
    check_dims(&x.inf, &y.inf)?;
    check_dims(&x.std, &x.inf)?;
    Ok(Ring::mul(x, y))
}

/// `(x⁻¹, −x⁻¹·x.inf·x⁻¹)`.
pub fn dual_inv<T: Ring>(x: &Dual<T>) -> Result<Dual<T>> {
    Ring::inv(x)
}

impl<T: Ring> Ring for Dual<T> {
    fn zero_like(&self) -> Self {
        Dual::new(self.std.zero_like(), self.std.zero_like())
    }
    fn one_like(&self) -> Self {
        Dual::new(self.std.one_like(), self.std.zero_like())
    }
    fn add(&self, o: &Self) -> Self {
        Dual::new(self.std.add(&o.std), self.inf.add(&o.inf))
    }
    fn sub(&self, o: &Self) -> Self {
        Dual::new(self.std.sub(&o.std), self.inf.sub(&o.inf))
    }
    fn mul(&self, o: &Self) -> Self {
        Dual::new(
            self.std.mul(&o.std),
            self.std.mul(&o.inf).add(&self.inf.mul(&o.std)),
        )
    }
    fn neg(&self) -> Self {
        Dual::new(self.std.neg(), self.inf.neg())
    }
    fn scale(&self, c: C64) -> Self {
        Dual::new(self.std.scale(c), self.inf.scale(c))
    }
    fn inv(&self) -> Result<Self> {
        let s = self.std.inv()?;
        let i = s.mul(&self.inf).mul(&s).neg();
        Ok(Dual::new(s, i))
    }
    fn dim(&self) -> usize {
        self.std.dim()
    }
    fn max_abs(&self) -> f64 {
        self.std.max_abs().max(self.inf.max_abs())
    }
    fn im_min(&self) -> f64 {
        self.std.im_min()
    }
    fn base(&self) -> CMat {
        self.std.base()
    }
    fn lift_base(&self, m: &CMat) -> Self {
        Dual::constant(self.std.lift_base(m))
    }
}

impl<T: Ring> Add for Dual<T> {
    type Output = Dual<T>;
    fn add(self, o: Self) -> Self {
        Ring::add(&self, &o)
    }
}

impl<T: Ring> Sub for Dual<T> {
    type Output = Dual<T>;
    fn sub(self, o: Self) -> Self {
        Ring::sub(&self, &o)
    }
}

impl<T: Ring> Mul for Dual<T> {
    type Output = Dual<T>;
    fn mul(self, o: Self) -> Self {
        Ring::mul(&self, &o)
    }
}

impl<T: Ring> Neg for Dual<T> {
    type Output = Dual<T>;
    fn neg(self) -> Self {
        Ring::neg(&self)
    }
}

impl<'a, T: Ring> Add for &'a Dual<T> {
    type Output = Dual<T>;
    fn add(self, o: Self) -> Dual<T> {
        Ring::add(self, o)
    }
}

impl<'a, T: Ring> Sub for &'a Dual<T> {
    type Output = Dual<T>;
    fn sub(self, o: Self) -> Dual<T> {
        Ring::sub(self, o)
    }
}

impl<'a, T: Ring> Mul for &'a Dual<T> {
    type Output = Dual<T>;
    fn mul(self, o: Self) -> Dual<T> {
        Ring::mul(self, o)
    }
}

/// Commutative scalars: `C64` and its dual towers.
pub trait Scalar:
    Ring
    + Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_c(c: C64) -> Self;
    /// Innermost standard value.
    fn value(&self) -> C64;
    /// `1/x`; non-finite when the standard value is 0.
    fn recip(self) -> Self;
    /// Principal square root, differentiated through the graded parts.
    fn sqrt(self) -> Self;
    /// Multiplies by a plain complex number.
    fn cmul(self, c: C64) -> Self {
        self * Self::from_c(c)
    }
}

impl Scalar for C64 {
    fn from_c(c: C64) -> Self {
        c
    }
    fn value(&self) -> C64 {
        *self
    }
    fn recip(self) -> Self {
        C64::new(1.0, 0.0) / self
    }
    fn sqrt(self) -> Self {
        C64::sqrt(self)
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Dual<S>;
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn from_c(c: C64) -> Self {
        Dual::constant(S::from_c(c))
    }
    fn value(&self) -> C64 {
        self.std.value()
    }
    fn recip(self) -> Self {
        let r = self.std.recip();
        Dual::new(r, -(self.inf * r * r))
    }
    fn sqrt(self) -> Self {
        let s = self.std.sqrt();
        Dual::new(s, self.inf / (s + s))
    }
}

/// `Ẽ = 𝔼 + t𝔼′` on the upper-triangular algebra over one oracle.
#[derive(Clone, Copy)]
pub struct TildeExpectation<'a> {
    pub oracle: &'a dyn MomentOracle,
}

impl<'a> TildeExpectation<'a> {
    pub fn new(oracle: &'a dyn MomentOracle) -> Self {
        TildeExpectation { oracle }
    }
}

/// `(𝔼(A.std), 𝔼(A.inf) + 𝔼′(A.std))`.
pub fn tilde_expectation(te: TildeExpectation<'_>, a: &DualElement) -> Result<DualMatrix> {
    let std = a.std.expect(te.oracle)?;
    let inf = a.inf.expect(te.oracle)? + a.std.inf_expect(te.oracle)?;
    Ok(Dual::new(std, inf))
}

impl fmt::Display for DualScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) + t({})", self.std, self.inf)
    }
}

//! Second-order forward-mode differentiation with hyper-dual numbers.
//!
//! Models are written once against the [`Scalar`] trait and implement
//! [`VecFn`]. Every `VecFn` is automatically [`Differentiable`], which is the
//! object-safe form stored in problems. Only the primitives on `Scalar` exist,
//! so an unsupported operation is a compile error rather than a runtime one.
//! Primitives with a restricted domain (`ln`, `sqrt`, `atan2`, `powf`) return a
//! `Result` naming the primitive.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default sharpness of the softplus smooth-max.
pub const SMOOTH_MAX_SHARPNESS: f64 = 0.01;

pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn atan(self) -> Self;
    fn exp(self) -> Self;
    fn sigmoid(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Softplus `s * ln(1 + exp(self / s))`, a smooth version of `max(self, 0)`.
    fn smooth_max(self, s: f64) -> Self;

    fn ln(self) -> Result<Self>;
    fn sqrt(self) -> Result<Self>;
    /// Four-quadrant arctangent of `self / x`.
    fn atan2(self, x: Self) -> Result<Self>;
    fn powf(self, p: f64) -> Result<Self>;

    fn square(self) -> Self {
        self * self
    }
}

fn sigmoid_f64(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus_f64(m: f64, s: f64) -> f64 {
    let r = m / s;
    if r > 0.0 {
        m + s * (-r).exp().ln_1p()
    } else {
        s * r.exp().ln_1p()
    }
}

fn check_ln(v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::Numeric {
            primitive: "ln",
            detail: format!("argument {v} is not positive"),
        })
    }
}

fn check_atan2(y: f64, x: f64) -> Result<()> {
    if x == 0.0 && y == 0.0 {
        Err(Error::Numeric {
            primitive: "atan2",
            detail: "undefined at the origin".into(),
        })
    } else {
        Ok(())
    }
}

fn check_powf(v: f64, p: f64) -> Result<()> {
    if v > 0.0 || (v == 0.0 && p >= 2.0) {
        Ok(())
    } else {
        Err(Error::Numeric {
            primitive: "powf",
            detail: format!("base {v} with exponent {p}"),
        })
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn tan(self) -> Self {
        f64::tan(self)
    }
    fn atan(self) -> Self {
        f64::atan(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sigmoid(self) -> Self {
        sigmoid_f64(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn smooth_max(self, s: f64) -> Self {
        softplus_f64(self, s)
    }
    fn ln(self) -> Result<Self> {
        check_ln(self)?;
        Ok(f64::ln(self))
    }
    fn sqrt(self) -> Result<Self> {
        if self < 0.0 {
            return Err(Error::Numeric {
                primitive: "sqrt",
                detail: format!("argument {self} is negative"),
            });
        }
        Ok(f64::sqrt(self))
    }
    fn atan2(self, x: Self) -> Result<Self> {
        check_atan2(self, x)?;
        Ok(f64::atan2(self, x))
    }
    fn powf(self, p: f64) -> Result<Self> {
        check_powf(self, p)?;
        Ok(f64::powf(self, p))
    }
}

/// Hyper-dual number `value + d1 e1 + d2 e2 + d12 e1 e2` with `e1² = e2² = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperDual {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d12: f64,
}

impl HyperDual {
    pub fn new(value: f64, d1: f64, d2: f64, d12: f64) -> Self {
        Self { value, d1, d2, d12 }
    }

    pub fn constant(value: f64) -> Self {
        Self::new(value, 0.0, 0.0, 0.0)
    }

    /// Applies a scalar function given its value and first two derivatives at `self.value`.
    #[inline]
    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        Self {
            value: f,
            d1: df * self.d1,
            d2: df * self.d2,
            d12: df * self.d12 + ddf * self.d1 * self.d2,
        }
    }
}

impl Add for HyperDual {
    type Output = Self;
    #[inline]
    fn add(self, b: Self) -> Self {
        Self::new(self.value + b.value, self.d1 + b.d1, self.d2 + b.d2, self.d12 + b.d12)
    }
}

impl Sub for HyperDual {
    type Output = Self;
    #[inline]
    fn sub(self, b: Self) -> Self {
        Self::new(self.value - b.value, self.d1 - b.d1, self.d2 - b.d2, self.d12 - b.d12)
    }
}

impl Mul for HyperDual {
    type Output = Self;
    #[inline]
    fn mul(self, b: Self) -> Self {
        Self::new(
            self.value * b.value,
            self.value * b.d1 + self.d1 * b.value,
            self.value * b.d2 + self.d2 * b.value,
            self.value * b.d12 + self.d1 * b.d2 + self.d2 * b.d1 + self.d12 * b.value,
        )
    }
}

impl Div for HyperDual {
    type Output = Self;
    #[inline]
    fn div(self, b: Self) -> Self {
        let q = self.value / b.value;
        let d1 = (self.d1 - q * b.d1) / b.value;
        let d2 = (self.d2 - q * b.d2) / b.value;
        let d12 = (self.d12 - d1 * b.d2 - d2 * b.d1 - q * b.d12) / b.value;
        Self::new(q, d1, d2, d12)
    }
}

impl Neg for HyperDual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.value, -self.d1, -self.d2, -self.d12)
    }
}

impl Add<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn add(self, b: f64) -> Self {
        Self { value: self.value + b, ..self }
    }
}

impl Sub<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn sub(self, b: f64) -> Self {
        Self { value: self.value - b, ..self }
    }
}

impl Mul<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn mul(self, b: f64) -> Self {
        Self::new(self.value * b, self.d1 * b, self.d2 * b, self.d12 * b)
    }
}

impl Div<f64> for HyperDual {
    type Output = Self;
    #[inline]
    fn div(self, b: f64) -> Self {
        Self::new(self.value / b, self.d1 / b, self.d2 / b, self.d12 / b)
    }
}

impl AddAssign for HyperDual {
    fn add_assign(&mut self, b: Self) {
        *self = *self + b;
    }
}

impl SubAssign for HyperDual {
    fn sub_assign(&mut self, b: Self) {
        *self = *self - b;
    }
}

impl MulAssign for HyperDual {
    fn mul_assign(&mut self, b: Self) {
        *self = *self * b;
    }
}

impl Scalar for HyperDual {
    fn cst(v: f64) -> Self {
        Self::constant(v)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }
    fn tan(self) -> Self {
        let t = self.value.tan();
        let sec2 = 1.0 + t * t;
        self.chain(t, sec2, 2.0 * t * sec2)
    }
    fn atan(self) -> Self {
        let x = self.value;
        let d = 1.0 / (1.0 + x * x);
        self.chain(x.atan(), d, -2.0 * x * d * d)
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }
    fn sigmoid(self) -> Self {
        let s = sigmoid_f64(self.value);
        let ds = s * (1.0 - s);
        self.chain(s, ds, ds * (1.0 - 2.0 * s))
    }
    fn powi(self, n: i32) -> Self {
        let x = self.value;
        let nf = n as f64;
        let ddf = if n == 0 || n == 1 {
            0.0
        } else {
            nf * (nf - 1.0) * x.powi(n - 2)
        };
        let df = if n == 0 { 0.0 } else { nf * x.powi(n - 1) };
        self.chain(x.powi(n), df, ddf)
    }
    fn smooth_max(self, s: f64) -> Self {
        let sig = sigmoid_f64(self.value / s);
        self.chain(softplus_f64(self.value, s), sig, sig * (1.0 - sig) / s)
    }
    fn ln(self) -> Result<Self> {
        check_ln(self.value)?;
        let inv = 1.0 / self.value;
        Ok(self.chain(self.value.ln(), inv, -inv * inv))
    }
    fn sqrt(self) -> Result<Self> {
        if self.value <= 0.0 {
            return Err(Error::Numeric {
                primitive: "sqrt",
                detail: format!("derivative undefined at {}", self.value),
            });
        }
        let r = self.value.sqrt();
        Ok(self.chain(r, 0.5 / r, -0.25 / (r * self.value)))
    }
    fn atan2(self, x: Self) -> Result<Self> {
        let y = self;
        check_atan2(y.value, x.value)?;
        let r2 = x.value * x.value + y.value * y.value;
        let gy = x.value / r2;
        let gx = -y.value / r2;
        let r4 = r2 * r2;
        let hyy = -2.0 * x.value * y.value / r4;
        let hxx = -hyy;
        let hxy = (y.value * y.value - x.value * x.value) / r4;
        Ok(Self {
            value: y.value.atan2(x.value),
            d1: gy * y.d1 + gx * x.d1,
            d2: gy * y.d2 + gx * x.d2,
            d12: gy * y.d12
                + gx * x.d12
                + hyy * y.d1 * y.d2
                + hxx * x.d1 * x.d2
                + hxy * (y.d1 * x.d2 + x.d1 * y.d2),
        })
    }
    fn powf(self, p: f64) -> Result<Self> {
        check_powf(self.value, p)?;
        let x = self.value;
        Ok(self.chain(x.powf(p), p * x.powf(p - 1.0), p * (p - 1.0) * x.powf(p - 2.0)))
    }
}

/// A map `R^m -> R^n` written generically over [`Scalar`].
pub trait VecFn: Send + Sync {
    /// `(input dimension, output dimension)`.
    fn dims(&self) -> (usize, usize);
    fn call<S: Scalar>(&self, z: &[S], out: &mut [S]) -> Result<()>;
}

/// Object-safe evaluation interface used by problems and oracles.
pub trait Differentiable: Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, z: &[f64], out: &mut [f64]) -> Result<()>;
    fn eval_dual(&self, z: &[HyperDual], out: &mut [HyperDual]) -> Result<()>;
}

impl<T: VecFn> Differentiable for T {
    fn input_dim(&self) -> usize {
        self.dims().0
    }
    fn output_dim(&self) -> usize {
        self.dims().1
    }
    fn eval(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        self.call(z, out)
    }
    fn eval_dual(&self, z: &[HyperDual], out: &mut [HyperDual]) -> Result<()> {
        self.call(z, out)
    }
}

fn check_input(g: &dyn Differentiable, z: &[f64]) -> Result<()> {
    if z.len() != g.input_dim() {
        return Err(Error::Shape {
            what: "differentiable input",
            expected: g.input_dim(),
            got: z.len(),
        });
    }
    Ok(())
}

/// Plain evaluation.
pub fn evaluate(g: &dyn Differentiable, z: &[f64]) -> Result<DVector<f64>> {
    check_input(g, z)?;
    let mut out = vec![0.0; g.output_dim()];
    g.eval(z, &mut out)?;
    Ok(DVector::from_vec(out))
}

/// One hyper-dual sweep with seeds `e_i` on the first and `e_j` on the second direction.
fn sweep(
    g: &dyn Differentiable,
    z: &[f64],
    i: Option<usize>,
    j: Option<usize>,
    buf: &mut Vec<HyperDual>,
    out: &mut [HyperDual],
) -> Result<()> {
    buf.clear();
    buf.extend(z.iter().enumerate().map(|(k, &v)| HyperDual {
        value: v,
        d1: if Some(k) == i { 1.0 } else { 0.0 },
        d2: if Some(k) == j { 1.0 } else { 0.0 },
        d12: 0.0,
    }));
    g.eval_dual(buf, out)
}

/// Value and `n x m` Jacobian using `m` first-order sweeps.
pub fn value_jacobian(g: &dyn Differentiable, z: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_input(g, z)?;
    let (m, n) = (g.input_dim(), g.output_dim());
    let mut value = DVector::zeros(n);
    let mut jac = DMatrix::zeros(n, m);
    let mut buf = Vec::with_capacity(m);
    let mut out = vec![HyperDual::default(); n];
    if m == 0 {
        g.eval(z, value.as_mut_slice())?;
        return Ok((value, jac));
    }
    for i in 0..m {
        sweep(g, z, Some(i), None, &mut buf, &mut out)?;
        for r in 0..n {
            jac[(r, i)] = out[r].d1;
            if i == 0 {
                value[r] = out[r].value;
            }
        }
    }
    Ok((value, jac))
}

pub fn jacobian(g: &dyn Differentiable, z: &[f64]) -> Result<DMatrix<f64>> {
    Ok(value_jacobian(g, z)?.1)
}

/// Gradient of a scalar map.
pub fn gradient(g: &dyn Differentiable, z: &[f64]) -> Result<DVector<f64>> {
    scalar_output(g)?;
    Ok(jacobian(g, z)?.row(0).transpose())
}

fn scalar_output(g: &dyn Differentiable) -> Result<()> {
    if g.output_dim() != 1 {
        return Err(Error::Shape {
            what: "scalar map output",
            expected: 1,
            got: g.output_dim(),
        });
    }
    Ok(())
}

/// Hessian of `z -> sum_r w_r g_r(z)` from `m(m+1)/2` sweeps, together with
/// the weighted value and gradient that fall out of the diagonal sweeps.
fn weighted_second_order(
    g: &dyn Differentiable,
    z: &[f64],
    w: &[f64],
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    check_input(g, z)?;
    let (m, n) = (g.input_dim(), g.output_dim());
    if w.len() != n {
        return Err(Error::Shape {
            what: "contraction vector",
            expected: n,
            got: w.len(),
        });
    }
    let mut buf = Vec::with_capacity(m);
    let mut out = vec![HyperDual::default(); n];
    let mut value = 0.0;
    let mut grad = DVector::zeros(m);
    let mut hess = DMatrix::zeros(m, m);
    if m == 0 {
        let mut v = vec![0.0; n];
        g.eval(z, &mut v)?;
        value = v.iter().zip(w).map(|(a, b)| a * b).sum();
        return Ok((value, grad, hess));
    }
    for i in 0..m {
        for j in i..m {
            sweep(g, z, Some(i), Some(j), &mut buf, &mut out)?;
            let d12: f64 = out.iter().zip(w).map(|(o, wr)| o.d12 * wr).sum();
            hess[(i, j)] = d12;
            hess[(j, i)] = d12;
            if i == j {
                grad[i] = out.iter().zip(w).map(|(o, wr)| o.d1 * wr).sum();
                if i == 0 {
                    value = out.iter().zip(w).map(|(o, wr)| o.value * wr).sum();
                }
            }
        }
    }
    Ok((value, grad, hess))
}

/// Value, gradient and Hessian of a scalar map.
pub fn value_gradient_hessian(
    g: &dyn Differentiable,
    z: &[f64],
) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    scalar_output(g)?;
    weighted_second_order(g, z, &[1.0])
}

pub fn hessian(g: &dyn Differentiable, z: &[f64]) -> Result<DMatrix<f64>> {
    Ok(value_gradient_hessian(g, z)?.2)
}

/// Hessian of `z -> f(z)ᵀ λ`, the contraction of the second-derivative tensor
/// of `f` against `λ`. The number of sweeps does not depend on the output size.
pub fn lambda_hessian(f: &dyn Differentiable, z: &[f64], lambda: &[f64]) -> Result<DMatrix<f64>> {
    if lambda.iter().any(|l| !l.is_finite()) {
        return Err(Error::Numeric {
            primitive: "lambda_hessian",
            detail: "non-finite contraction vector".into(),
        });
    }
    Ok(weighted_second_order(f, z, lambda)?.2)
}

/// Adapter exposing coordinate `index` of a vector map as a scalar map.
pub struct Component<'a> {
    pub inner: &'a dyn Differentiable,
    pub index: usize,
}

impl Differentiable for Component<'_> {
    fn input_dim(&self) -> usize {
        self.inner.input_dim()
    }
    fn output_dim(&self) -> usize {
        1
    }
    fn eval(&self, z: &[f64], out: &mut [f64]) -> Result<()> {
        let mut full = vec![0.0; self.inner.output_dim()];
        self.inner.eval(z, &mut full)?;
        out[0] = full[self.index];
        Ok(())
    }
    fn eval_dual(&self, z: &[HyperDual], out: &mut [HyperDual]) -> Result<()> {
        let mut full = vec![HyperDual::default(); self.inner.output_dim()];
        self.inner.eval_dual(z, &mut full)?;
        out[0] = full[self.index];
        Ok(())
    }
}

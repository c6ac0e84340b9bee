//! Forward-mode dual numbers, first and second order.
//!
//! `Dual` carries a value plus first-order partials with respect to up to
//! [`MAX_DIM`] seed directions; `Dual2` additionally carries the full matrix
//! of second-order partials. Arithmetic propagates derivatives by the chain
//! rule, so derivatives of any composition are exact up to floating-point
//! rounding (no truncation error, unlike finite differences).
//!
//! Both types process all [`MAX_DIM`] lanes unconditionally; seeds beyond the
//! active dimension are zero and remain zero under every operation, so no
//! dimension bookkeeping is required inside the arithmetic.
//!
//! The [`Scalar`] trait lets an immersion be written once, generically, and
//! evaluated on plain `f64`, on `Dual` (for Jacobians), or on `Dual2` (for
//! metric derivatives).

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Hard cap on intrinsic dimension; dense derivative storage is sized to it.
pub const MAX_DIM: usize = 8;

/// Generic scalar: the arithmetic surface an immersion may use.
pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(c: f64) -> Self;
    /// The underlying value (derivative information discarded).
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Multiply by a constant.
    fn scale(self, c: f64) -> Self;
    /// Add a constant.
    fn shift(self, c: f64) -> Self;
}

impl Scalar for f64 {
    fn from_f64(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
    fn shift(self, c: f64) -> Self {
        self + c
    }
}

/// First-order dual number: value and gradient seeds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub val: f64,
    pub grad: [f64; MAX_DIM],
}

impl Dual {
    pub fn constant(val: f64) -> Self {
        Self {
            val,
            grad: [0.0; MAX_DIM],
        }
    }

    /// A variable seeded along direction `i` (unit tangent).
    pub fn seeded(val: f64, i: usize) -> Self {
        let mut grad = [0.0; MAX_DIM];
        grad[i] = 1.0;
        Self { val, grad }
    }

    /// Seed a point: coordinate `i` gets unit tangent `e_i`.
    pub fn seed_point(q: &[f64]) -> Vec<Dual> {
        q.iter()
            .enumerate()
            .map(|(i, &v)| Dual::seeded(v, i))
            .collect()
    }

    fn unary(self, val: f64, d1: f64) -> Self {
        let mut grad = [0.0; MAX_DIM];
        for k in 0..MAX_DIM {
            grad[k] = d1 * self.grad[k];
        }
        Self { val, grad }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut grad = [0.0; MAX_DIM];
        for k in 0..MAX_DIM {
            grad[k] = self.grad[k] + rhs.grad[k];
        }
        Self {
            val: self.val + rhs.val,
            grad,
        }
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut grad = [0.0; MAX_DIM];
        for k in 0..MAX_DIM {
            grad[k] = self.grad[k] - rhs.grad[k];
        }
        Self {
            val: self.val - rhs.val,
            grad,
        }
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut grad = [0.0; MAX_DIM];
        for k in 0..MAX_DIM {
            grad[k] = self.grad[k] * rhs.val + self.val * rhs.grad[k];
        }
        Self {
            val: self.val * rhs.val,
            grad,
        }
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.val;
        // (a/b)' = a'/b - a b'/b^2
        let mut grad = [0.0; MAX_DIM];
        for k in 0..MAX_DIM {
            grad[k] = (self.grad[k] - self.val * inv * rhs.grad[k]) * inv;
        }
        Self {
            val: self.val * inv,
            grad,
        }
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0)
    }
}

impl Scalar for Dual {
    fn from_f64(c: f64) -> Self {
        Dual::constant(c)
    }
    fn value(&self) -> f64 {
        self.val
    }
    fn sin(self) -> Self {
        self.unary(self.val.sin(), self.val.cos())
    }
    fn cos(self) -> Self {
        self.unary(self.val.cos(), -self.val.sin())
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }
    fn ln(self) -> Self {
        self.unary(self.val.ln(), 1.0 / self.val)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        self.unary(t, 1.0 - t * t)
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Dual::constant(1.0),
            1 => self,
            _ => self.unary(
                self.val.powi(n),
                f64::from(n) * self.val.powi(n - 1),
            ),
        }
    }
    fn scale(self, c: f64) -> Self {
        self.unary(self.val * c, c)
    }
    fn shift(self, c: f64) -> Self {
        let mut out = self;
        out.val += c;
        out
    }
}

/// Second-order dual number: value, gradient, and Hessian seeds.
#[derive(Clone, Copy, Debug)]
pub struct Dual2 {
    pub val: f64,
    pub grad: [f64; MAX_DIM],
    pub hess: [[f64; MAX_DIM]; MAX_DIM],
}

impl Dual2 {
    pub fn constant(val: f64) -> Self {
        Self {
            val,
            grad: [0.0; MAX_DIM],
            hess: [[0.0; MAX_DIM]; MAX_DIM],
        }
    }

    pub fn seeded(val: f64, i: usize) -> Self {
        let mut out = Self::constant(val);
        out.grad[i] = 1.0;
        out
    }

    pub fn seed_point(q: &[f64]) -> Vec<Dual2> {
        q.iter()
            .enumerate()
            .map(|(i, &v)| Dual2::seeded(v, i))
            .collect()
    }

    /// Chain rule for a scalar map with first/second derivatives `d1`, `d2`:
    /// g_i -> d1 g_i,  h_ij -> d2 g_i g_j + d1 h_ij.
    fn unary(self, val: f64, d1: f64, d2: f64) -> Self {
        let mut out = Self::constant(val);
        for i in 0..MAX_DIM {
            out.grad[i] = d1 * self.grad[i];
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                out.hess[i][j] = d2 * self.grad[i] * self.grad[j] + d1 * self.hess[i][j];
            }
        }
        out
    }

    fn recip(self) -> Self {
        let inv = 1.0 / self.val;
        self.unary(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl Add for Dual2 {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut out = Self::constant(self.val + rhs.val);
        for i in 0..MAX_DIM {
            out.grad[i] = self.grad[i] + rhs.grad[i];
            for j in 0..MAX_DIM {
                out.hess[i][j] = self.hess[i][j] + rhs.hess[i][j];
            }
        }
        out
    }
}

impl Sub for Dual2 {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut out = Self::constant(self.val - rhs.val);
        for i in 0..MAX_DIM {
            out.grad[i] = self.grad[i] - rhs.grad[i];
            for j in 0..MAX_DIM {
                out.hess[i][j] = self.hess[i][j] - rhs.hess[i][j];
            }
        }
        out
    }
}

impl Mul for Dual2 {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        // (ab)'' = a'' b + a' b' + b' a' + a b''
        let mut out = Self::constant(self.val * rhs.val);
        for i in 0..MAX_DIM {
            out.grad[i] = self.grad[i] * rhs.val + self.val * rhs.grad[i];
        }
        for i in 0..MAX_DIM {
            for j in 0..MAX_DIM {
                out.hess[i][j] = self.hess[i][j] * rhs.val
                    + self.grad[i] * rhs.grad[j]
                    + self.grad[j] * rhs.grad[i]
                    + self.val * rhs.hess[i][j];
            }
        }
        out
    }
}

impl Div for Dual2 {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        self * rhs.recip()
    }
}

impl Neg for Dual2 {
    type Output = Self;
    fn neg(self) -> Self {
        self.unary(-self.val, -1.0, 0.0)
    }
}

impl Scalar for Dual2 {
    fn from_f64(c: f64) -> Self {
        Dual2::constant(c)
    }
    fn value(&self) -> f64 {
        self.val
    }
    fn sin(self) -> Self {
        let (s, c) = self.val.sin_cos();
        self.unary(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.val.sin_cos();
        self.unary(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e, e)
    }
    fn ln(self) -> Self {
        let inv = 1.0 / self.val;
        self.unary(self.val.ln(), inv, -inv * inv)
    }
    fn sqrt(self) -> Self {
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s, -0.25 / (s * self.val))
    }
    fn tanh(self) -> Self {
        let t = self.val.tanh();
        let sech2 = 1.0 - t * t;
        self.unary(t, sech2, -2.0 * t * sech2)
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Dual2::constant(1.0),
            1 => self,
            _ => {
                let nf = f64::from(n);
                self.unary(
                    self.val.powi(n),
                    nf * self.val.powi(n - 1),
                    nf * (nf - 1.0) * self.val.powi(n - 2),
                )
            }
        }
    }
    fn scale(self, c: f64) -> Self {
        self.unary(self.val * c, c, 0.0)
    }
    fn shift(self, c: f64) -> Self {
        let mut out = self;
        out.val += c;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // A deliberately messy composite used to stress every chain rule at once.
    fn messy<S: Scalar>(x: S, y: S) -> S {
        let a = (x * y).sin() + x.exp().scale(0.3);
        let b = (x.powi(3) - y.powi(2).scale(0.5)).tanh();
        let c = (x * x + y * y).shift(1.3).sqrt().ln();
        a * b + c / (y.shift(3.0)) - x.cos() * y.sin()
    }

    fn fd_grad(f: impl Fn(f64, f64) -> f64, x: f64, y: f64, h: f64) -> [f64; 2] {
        [
            (f(x + h, y) - f(x - h, y)) / (2.0 * h),
            (f(x, y + h) - f(x, y - h)) / (2.0 * h),
        ]
    }

    #[test]
    fn dual_matches_finite_differences() {
        let pts = [(0.3, -0.7), (1.1, 0.4), (-0.9, 0.9)];
        for (x, y) in pts {
            let q = Dual::seed_point(&[x, y]);
            let out = messy(q[0], q[1]);
            let fd = fd_grad(|a, b| messy(a, b), x, y, 1e-5);
            for k in 0..2 {
                let rel = (out.grad[k] - fd[k]).abs() / fd[k].abs().max(1e-8);
                assert!(rel < 1e-6, "grad[{k}] at ({x},{y}): ad={} fd={}", out.grad[k], fd[k]);
            }
        }
    }

    #[test]
    fn dual2_hessian_matches_finite_differences() {
        let f = |a: f64, b: f64| messy(a, b);
        let h = 1e-4;
        for (x, y) in [(0.5, 0.2), (-0.4, 1.0)] {
            let q = Dual2::seed_point(&[x, y]);
            let out = messy(q[0], q[1]);
            // central second differences
            let dxx = (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h);
            let dyy = (f(x, y + h) - 2.0 * f(x, y) + f(x, y - h)) / (h * h);
            let dxy = (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h))
                / (4.0 * h * h);
            for (ad, fd, name) in [
                (out.hess[0][0], dxx, "xx"),
                (out.hess[1][1], dyy, "yy"),
                (out.hess[0][1], dxy, "xy"),
                (out.hess[1][0], dxy, "yx"),
            ] {
                let rel = (ad - fd).abs() / fd.abs().max(1e-4);
                assert!(rel < 1e-4, "hess {name} at ({x},{y}): ad={ad} fd={fd}");
            }
        }
    }

    #[test]
    fn hessian_is_symmetric() {
        let q = Dual2::seed_point(&[0.7, -0.3]);
        let out = messy(q[0], q[1]);
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(out.hess[i][j], out.hess[j][i]);
            }
        }
    }

    #[test]
    fn inactive_lanes_stay_zero() {
        let q = Dual2::seed_point(&[0.7, -0.3]);
        let out = messy(q[0], q[1]);
        for k in 2..MAX_DIM {
            assert_eq!(out.grad[k], 0.0);
            for j in 0..MAX_DIM {
                assert_eq!(out.hess[k][j], 0.0);
                assert_eq!(out.hess[j][k], 0.0);
            }
        }
    }

    #[test]
    fn division_chain_rule() {
        // d/dx (x / (x^2+1)) = (1 - x^2) / (x^2+1)^2
        let x = 0.8;
        let d = Dual::seeded(x, 0);
        let out = d / (d * d).shift(1.0);
        let expect = (1.0 - x * x) / (x * x + 1.0).powi(2);
        assert!((out.grad[0] - expect).abs() < 1e-14);
    }
}

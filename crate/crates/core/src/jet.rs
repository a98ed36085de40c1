//! Forward-mode jets used to differentiate chart metrics exactly.
//!
//! [`Dual`] carries a value and its gradient, [`Jet2`] additionally carries the
//! Hessian. Both are fixed-size (at most [`MAX_VARS`] chart coordinates) and
//! `Copy`, so metric formulas written once against [`Scalar`] evaluate to
//! values, first derivatives or second derivatives without allocation.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Largest chart dimension supported by the analytic derivative path.
pub const MAX_VARS: usize = 6;

pub trait Scalar:
    Copy
    + std::fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + Send
    + Sync
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    /// Apply a scalar function given its value and first two derivatives at `self.value()`.
    fn chain(self, f: f64, df: f64, ddf: f64) -> Self;

    fn sin(self) -> Self {
        let v = self.value();
        self.chain(v.sin(), v.cos(), -v.sin())
    }
    fn cos(self) -> Self {
        let v = self.value();
        self.chain(v.cos(), -v.sin(), -v.cos())
    }
    fn exp(self) -> Self {
        let e = self.value().exp();
        self.chain(e, e, e)
    }
    fn sinh(self) -> Self {
        let v = self.value();
        self.chain(v.sinh(), v.cosh(), v.sinh())
    }
    fn cosh(self) -> Self {
        let v = self.value();
        self.chain(v.cosh(), v.sinh(), v.cosh())
    }
    fn sqrt(self) -> Self {
        let r = self.value().sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * r * r))
    }
    fn recip(self) -> Self {
        let v = self.value();
        self.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v))
    }
    fn powi(self, k: i32) -> Self {
        let v = self.value();
        let kf = k as f64;
        self.chain(
            v.powi(k),
            kf * v.powi(k - 1),
            kf * (kf - 1.0) * v.powi(k - 2),
        )
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn chain(self, f: f64, _df: f64, _ddf: f64) -> Self {
        f
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
    fn sinh(self) -> Self {
        f64::sinh(self)
    }
    fn cosh(self) -> Self {
        f64::cosh(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn recip(self) -> Self {
        1.0 / self
    }
    fn powi(self, k: i32) -> Self {
        f64::powi(self, k)
    }
}

/// Value plus gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub d: [f64; MAX_VARS],
}

impl Dual {
    pub fn var(v: f64, index: usize) -> Self {
        let mut d = [0.0; MAX_VARS];
        d[index] = 1.0;
        Dual { v, d }
    }

    pub fn variables(x: &[f64]) -> Vec<Self> {
        x.iter().enumerate().map(|(i, &v)| Self::var(v, i)).collect()
    }
}

impl Scalar for Dual {
    fn cst(v: f64) -> Self {
        Dual { v, d: [0.0; MAX_VARS] }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn chain(self, f: f64, df: f64, _ddf: f64) -> Self {
        let mut d = self.d;
        d.iter_mut().for_each(|x| *x *= df);
        Dual { v: f, d }
    }
}

impl Add for Dual {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..MAX_VARS {
            self.d[i] += o.d[i];
        }
        self
    }
}

impl Sub for Dual {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for i in 0..MAX_VARS {
            self.d[i] -= o.d[i];
        }
        self
    }
}

impl Mul for Dual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut d = [0.0; MAX_VARS];
        for i in 0..MAX_VARS {
            d[i] = self.v * o.d[i] + o.v * self.d[i];
        }
        Dual { v: self.v * o.v, d }
    }
}

impl Div for Dual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Neg for Dual {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

/// Value, gradient and Hessian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub v: f64,
    pub d: [f64; MAX_VARS],
    pub h: [[f64; MAX_VARS]; MAX_VARS],
}

impl Jet2 {
    pub fn var(v: f64, index: usize) -> Self {
        let mut j = Self::cst(v);
        j.d[index] = 1.0;
        j
    }

    pub fn variables(x: &[f64]) -> Vec<Self> {
        x.iter().enumerate().map(|(i, &v)| Self::var(v, i)).collect()
    }
}

impl Scalar for Jet2 {
    fn cst(v: f64) -> Self {
        Jet2 {
            v,
            d: [0.0; MAX_VARS],
            h: [[0.0; MAX_VARS]; MAX_VARS],
        }
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn chain(self, f: f64, df: f64, ddf: f64) -> Self {
        let mut out = Self::cst(f);
        for i in 0..MAX_VARS {
            out.d[i] = df * self.d[i];
            for j in 0..MAX_VARS {
                out.h[i][j] = ddf * self.d[i] * self.d[j] + df * self.h[i][j];
            }
        }
        out
    }
}

impl Add for Jet2 {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..MAX_VARS {
            self.d[i] += o.d[i];
            for j in 0..MAX_VARS {
                self.h[i][j] += o.h[i][j];
            }
        }
        self
    }
}

impl Sub for Jet2 {
    type Output = Self;
    fn sub(mut self, o: Self) -> Self {
        self.v -= o.v;
        for i in 0..MAX_VARS {
            self.d[i] -= o.d[i];
            for j in 0..MAX_VARS {
                self.h[i][j] -= o.h[i][j];
            }
        }
        self
    }
}

impl Mul for Jet2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::cst(self.v * o.v);
        for i in 0..MAX_VARS {
            out.d[i] = self.v * o.d[i] + o.v * self.d[i];
            for j in 0..MAX_VARS {
                out.h[i][j] = self.v * o.h[i][j]
                    + o.v * self.h[i][j]
                    + self.d[i] * o.d[j]
                    + o.d[i] * self.d[j];
            }
        }
        out
    }
}

impl Div for Jet2 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        self * o.recip()
    }
}

impl Neg for Jet2 {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

macro_rules! scalar_f64_ops {
    ($t:ty) => {
        impl Add<f64> for $t {
            type Output = Self;
            fn add(mut self, o: f64) -> Self {
                self.v += o;
                self
            }
        }
        impl Sub<f64> for $t {
            type Output = Self;
            fn sub(mut self, o: f64) -> Self {
                self.v -= o;
                self
            }
        }
        impl Mul<f64> for $t {
            type Output = Self;
            fn mul(self, o: f64) -> Self {
                self.chain(self.v * o, o, 0.0)
            }
        }
        impl Div<f64> for $t {
            type Output = Self;
            fn div(self, o: f64) -> Self {
                self * (1.0 / o)
            }
        }
    };
}

scalar_f64_ops!(Dual);
scalar_f64_ops!(Jet2);

#[cfg(test)]
mod tests {
    use super::*;

    fn sample<S: Scalar>(x: &[S]) -> S {
        // sin(x0) * exp(x1) / sqrt(1 + x0^2)
        x[0].sin() * x[1].exp() / (x[0] * x[0] + 1.0).sqrt()
    }

    #[test]
    fn jet_matches_finite_differences() {
        let p = [0.3, -0.7];
        let j = sample(&Jet2::variables(&p));
        let f = |a: f64, b: f64| sample(&[a, b]);
        let h = 1e-4;
        for i in 0..2 {
            let mut e = [0.0; 2];
            e[i] = h;
            let fd = (f(p[0] + e[0], p[1] + e[1]) - f(p[0] - e[0], p[1] - e[1])) / (2.0 * h);
            assert!((j.d[i] - fd).abs() < 1e-7, "grad {i}");
            for k in 0..2 {
                let mut e2 = [0.0; 2];
                e2[k] = h;
                let fpp = f(p[0] + e[0] + e2[0], p[1] + e[1] + e2[1]);
                let fpm = f(p[0] + e[0] - e2[0], p[1] + e[1] - e2[1]);
                let fmp = f(p[0] - e[0] + e2[0], p[1] - e[1] + e2[1]);
                let fmm = f(p[0] - e[0] - e2[0], p[1] - e[1] - e2[1]);
                let fd2 = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
                assert!((j.h[i][k] - fd2).abs() < 1e-5, "hess {i}{k}");
            }
        }
        let d = sample(&Dual::variables(&p));
        assert_eq!(d.v, j.v);
        assert!((d.d[0] - j.d[0]).abs() < 1e-15);
    }

    #[test]
    fn powi_and_hyperbolics() {
        let x = Jet2::var(0.4, 0);
        let y = x.cosh().powi(2) - x.sinh().powi(2);
        assert!((y.v - 1.0).abs() < 1e-14);
        assert!(y.d[0].abs() < 1e-14);
        assert!(y.h[0][0].abs() < 1e-13);
    }
}

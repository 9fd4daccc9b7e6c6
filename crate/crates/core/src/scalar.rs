//! Scalar abstraction shared by the plain `f64` model evaluation and the
//! forward-mode derivative types.
//!
//! The crop dynamics are written once, generically over [`Scalar`], and are
//! instantiated with `f64` for simulation, with [`Dual`] for small local
//! Jacobians, and with [`Jet`] for full forward propagation of partials over
//! an entire decision vector.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    /// Lifts a constant (all partials zero).
    fn constant(&self, value: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;

    /// `ln(1 + e^x)` without overflow.
    fn softplus(self) -> Self {
        let v = self.value();
        if v > 0.0 {
            let c = self.constant(1.0);
            self.clone() + (c + (-self).exp()).ln()
        } else {
            let c = self.constant(1.0);
            (c + self.exp()).ln()
        }
    }
}

impl Scalar for f64 {
    #[inline]
    fn constant(&self, value: f64) -> Self {
        value
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

/// Dual number with a fixed number of partials, stored inline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<const K: usize> {
    pub re: f64,
    pub eps: [f64; K],
}

impl<const K: usize> Dual<K> {
    pub fn constant(re: f64) -> Self {
        Self { re, eps: [0.0; K] }
    }

    /// Independent variable `index` with unit seed.
    pub fn variable(re: f64, index: usize) -> Self {
        let mut eps = [0.0; K];
        eps[index] = 1.0;
        Self { re, eps }
    }

    #[inline]
    fn chain(self, re: f64, d: f64) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= d;
        }
        Self { re, eps }
    }
}

impl<const K: usize> Add for Dual<K> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.re += rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps) {
            *a += b;
        }
        self
    }
}

impl<const K: usize> Sub for Dual<K> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.re -= rhs.re;
        for (a, b) in self.eps.iter_mut().zip(rhs.eps) {
            *a -= b;
        }
        self
    }
}

impl<const K: usize> Mul for Dual<K> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; K];
        for (k, e) in eps.iter_mut().enumerate() {
            *e = self.eps[k] * rhs.re + self.re * rhs.eps[k];
        }
        Self {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl<const K: usize> Div for Dual<K> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        let mut eps = [0.0; K];
        for (k, e) in eps.iter_mut().enumerate() {
            *e = (self.eps[k] - re * rhs.eps[k]) * inv;
        }
        Self { re, eps }
    }
}

impl<const K: usize> Neg for Dual<K> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.re, -1.0)
    }
}

impl<const K: usize> Add<f64> for Dual<K> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: f64) -> Self {
        self.re += rhs;
        self
    }
}

impl<const K: usize> Sub<f64> for Dual<K> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: f64) -> Self {
        self.re -= rhs;
        self
    }
}

impl<const K: usize> Mul<f64> for Dual<K> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: f64) -> Self {
        self.chain(self.re * rhs, rhs)
    }
}

impl<const K: usize> Div<f64> for Dual<K> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: f64) -> Self {
        self.chain(self.re / rhs, 1.0 / rhs)
    }
}

impl<const K: usize> Scalar for Dual<K> {
    fn constant(&self, value: f64) -> Self {
        Dual::constant(value)
    }
    fn value(&self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        self.chain(r, 0.5 / r)
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.re.ln(), 1.0 / self.re)
    }
}

/// Dual number with a heap-allocated partial vector whose length is chosen at
/// runtime. An empty partial vector denotes a constant and is broadcast
/// against any length.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub re: f64,
    pub eps: Vec<f64>,
}

impl Jet {
    pub fn constant(re: f64) -> Self {
        Self {
            re,
            eps: Vec::new(),
        }
    }

    pub fn variable(re: f64, index: usize, len: usize) -> Self {
        let mut eps = vec![0.0; len];
        eps[index] = 1.0;
        Self { re, eps }
    }

    /// Partials padded to `len`.
    pub fn gradient(&self, len: usize) -> Vec<f64> {
        let mut g = self.eps.clone();
        g.resize(len, 0.0);
        g
    }

    fn scaled(mut self, re: f64, d: f64) -> Self {
        for e in self.eps.iter_mut() {
            *e *= d;
        }
        self.re = re;
        self
    }

    fn combine(a: Vec<f64>, da: f64, b: &[f64], db: f64) -> Vec<f64> {
        if b.is_empty() {
            let mut a = a;
            for e in a.iter_mut() {
                *e *= da;
            }
            return a;
        }
        if a.is_empty() {
            return b.iter().map(|x| x * db).collect();
        }
        let mut a = a;
        for (x, y) in a.iter_mut().zip(b) {
            *x = *x * da + y * db;
        }
        a
    }
}

impl Add for Jet {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let re = self.re + rhs.re;
        Self {
            re,
            eps: Jet::combine(self.eps, 1.0, &rhs.eps, 1.0),
        }
    }
}

impl Sub for Jet {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let re = self.re - rhs.re;
        Self {
            re,
            eps: Jet::combine(self.eps, 1.0, &rhs.eps, -1.0),
        }
    }
}

impl Mul for Jet {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let re = self.re * rhs.re;
        Self {
            re,
            eps: Jet::combine(self.eps, rhs.re, &rhs.eps, self.re),
        }
    }
}

impl Div for Jet {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let inv = 1.0 / rhs.re;
        let re = self.re * inv;
        Self {
            re,
            eps: Jet::combine(self.eps, inv, &rhs.eps, -re * inv),
        }
    }
}

impl Neg for Jet {
    type Output = Self;
    fn neg(self) -> Self {
        let re = -self.re;
        self.scaled(re, -1.0)
    }
}

impl Add<f64> for Jet {
    type Output = Self;
    fn add(mut self, rhs: f64) -> Self {
        self.re += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Self;
    fn sub(mut self, rhs: f64) -> Self {
        self.re -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        let re = self.re * rhs;
        self.scaled(re, rhs)
    }
}

impl Div<f64> for Jet {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        let re = self.re / rhs;
        self.scaled(re, 1.0 / rhs)
    }
}

impl Scalar for Jet {
    fn constant(&self, value: f64) -> Self {
        Jet::constant(value)
    }
    fn value(&self) -> f64 {
        self.re
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        self.scaled(r, 0.5 / r)
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.scaled(e, e)
    }
    fn ln(self) -> Self {
        let l = self.re.ln();
        let d = 1.0 / self.re;
        self.scaled(l, d)
    }
}

//! Truncated univariate power series `c_0 + c_1 z + ... + c_N z^N`.

use std::ops::{Add, Mul, Sub};

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSeries<S> {
    coeffs: Vec<S>,
}

impl<S: Scalar> TruncatedSeries<S> {
    pub fn zero(order: usize) -> Self {
        Self { coeffs: vec![S::zero(); order + 1] }
    }

    pub fn constant(value: S, order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = value;
        s
    }

    /// The series `z^k`, or zero when `k` exceeds the order.
    pub fn monomial(k: usize, order: usize) -> Self {
        let mut s = Self::zero(order);
        if k <= order {
            s.coeffs[k] = S::one();
        }
        s
    }

    pub fn from_coeffs(mut coeffs: Vec<S>, order: usize) -> Self {
        coeffs.resize(order + 1, S::zero());
        Self { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeff(&self, k: usize) -> S {
        self.coeffs.get(k).cloned().unwrap_or_else(S::zero)
    }

    pub fn coeffs(&self) -> &[S] {
        &self.coeffs
    }

    pub fn scale(&self, factor: &S) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c.clone() * factor.clone()).collect() }
    }

    /// Multiplication by `z^k`, dropping terms past the order.
    pub fn shift(&self, k: usize) -> Self {
        let n = self.coeffs.len();
        let mut coeffs = vec![S::zero(); n];
        let kept = n.saturating_sub(k);
        coeffs[n - kept..].clone_from_slice(&self.coeffs[..kept]);
        Self { coeffs }
    }

    pub fn mul_truncated(&self, other: &Self) -> Self {
        let n = self.coeffs.len().min(other.coeffs.len());
        let coeffs = (0..n)
            .map(|k| S::sum_terms((0..=k).map(|i| self.coeffs[i].clone() * other.coeffs[k - i].clone()).collect()))
            .collect();
        Self { coeffs }
    }

    pub fn pow(&self, exp: u32) -> Self {
        let mut result = Self::constant(S::one(), self.order());
        for _ in 0..exp {
            result = result.mul_truncated(self);
        }
        result
    }

    /// `self(inner(z))`; requires `inner(0) = 0` so the truncation stays exact.
    pub fn compose(&self, inner: &Self) -> Self {
        assert!(inner.coeff(0).is_zero(), "inner series must vanish at 0");
        let order = self.order().min(inner.order());
        let mut acc = Self::zero(order);
        for c in self.coeffs[..=order].iter().rev() {
            acc = acc.mul_truncated(inner);
            acc.coeffs[0] = acc.coeffs[0].clone() + c.clone();
        }
        acc
    }

    /// Antiderivative vanishing at 0; the term that would land past the order is dropped.
    pub fn antiderivative(&self) -> Self {
        let n = self.coeffs.len();
        let mut coeffs = vec![S::zero(); n];
        for (k, c) in coeffs.iter_mut().enumerate().skip(1) {
            *c = self.coeffs[k - 1].clone() / S::from_u64(k as u64);
        }
        Self { coeffs }
    }

    pub fn derivative(&self) -> Self {
        let n = self.coeffs.len();
        let mut coeffs = vec![S::zero(); n];
        for k in 1..n {
            coeffs[k - 1] = self.coeffs[k].clone() * S::from_u64(k as u64);
        }
        Self { coeffs }
    }

    pub fn eval(&self, z: &S) -> S {
        self.coeffs.iter().rev().fold(S::zero(), |acc, c| acc * z.clone() + c.clone())
    }
}

impl<S: Scalar> Add for &TruncatedSeries<S> {
    type Output = TruncatedSeries<S>;

    fn add(self, rhs: Self) -> TruncatedSeries<S> {
        let n = self.coeffs.len().min(rhs.coeffs.len());
        TruncatedSeries { coeffs: (0..n).map(|k| self.coeffs[k].clone() + rhs.coeffs[k].clone()).collect() }
    }
}

impl<S: Scalar> Sub for &TruncatedSeries<S> {
    type Output = TruncatedSeries<S>;

    fn sub(self, rhs: Self) -> TruncatedSeries<S> {
        let n = self.coeffs.len().min(rhs.coeffs.len());
        TruncatedSeries { coeffs: (0..n).map(|k| self.coeffs[k].clone() - rhs.coeffs[k].clone()).collect() }
    }
}

impl<S: Scalar> Mul for &TruncatedSeries<S> {
    type Output = TruncatedSeries<S>;

    fn mul(self, rhs: Self) -> TruncatedSeries<S> {
        self.mul_truncated(rhs)
    }
}

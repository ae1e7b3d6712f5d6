//! Numeric field abstraction shared by the exact (rational) and floating code paths.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

/// A commutative field with the few extras the measure and series code needs.
///
/// Implemented for `f64` (floating mode) and [`BigRational`] (exact mode).
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Send
    + Sync
{
    fn from_u64(n: u64) -> Self;

    fn from_ratio(num: i64, den: i64) -> Self;

    fn to_f64(&self) -> f64;

    fn is_negative(&self) -> bool {
        *self < Self::zero()
    }

    /// Sums a batch of terms. The floating implementation adds in increasing
    /// magnitude order; the exact implementation folds.
    fn sum_terms(terms: Vec<Self>) -> Self {
        terms.into_iter().fold(Self::zero(), |acc, x| acc + x)
    }

    /// `n! / (d_1! d_2! ...)` style ratio of factorial products.
    fn factorial_ratio(num: &[u64], den: &[u64]) -> Self;

    fn powu(&self, exp: u32) -> Self {
        num_traits::pow::pow(self.clone(), exp as usize)
    }

    /// `|self - other| <= tol * max(1, |self|)`; exact types compare with `tol` in f64.
    fn approx_eq(&self, other: &Self, tol: f64) -> bool;
}

const EXACT_FACTORIAL_LIMIT: u64 = 170;

fn factorial_f64(n: u64) -> f64 {
    (2..=n).fold(1.0, |acc, k| acc * k as f64)
}

impl Scalar for f64 {
    fn from_u64(n: u64) -> Self {
        n as f64
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn sum_terms(mut terms: Vec<Self>) -> Self {
        terms.sort_by(|x, y| x.abs().total_cmp(&y.abs()));
        terms.into_iter().sum()
    }

    fn factorial_ratio(num: &[u64], den: &[u64]) -> Self {
        let overflow = num.iter().chain(den).any(|&n| n > EXACT_FACTORIAL_LIMIT);
        if overflow {
            let ln = |n: u64| statrs::function::gamma::ln_gamma(n as f64 + 1.0);
            let log: f64 = num.iter().map(|&n| ln(n)).sum::<f64>() - den.iter().map(|&n| ln(n)).sum::<f64>();
            log.exp()
        } else {
            let top: f64 = num.iter().map(|&n| factorial_f64(n)).product();
            den.iter().fold(top, |acc, &d| acc / factorial_f64(d))
        }
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self - other).abs() <= tol * self.abs().max(1.0)
    }
}

fn factorial_big(n: u64) -> BigInt {
    (2..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

impl Scalar for BigRational {
    fn from_u64(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn is_negative(&self) -> bool {
        Signed::is_negative(self)
    }

    fn factorial_ratio(num: &[u64], den: &[u64]) -> Self {
        let top = num.iter().fold(BigInt::one(), |acc, &n| acc * factorial_big(n));
        let bottom = den.iter().fold(BigInt::one(), |acc, &n| acc * factorial_big(n));
        BigRational::new(top, bottom)
    }

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if tol == 0.0 {
            return self == other;
        }
        let diff = ToPrimitive::to_f64(&(self - other).abs()).unwrap_or(f64::INFINITY);
        let scale = ToPrimitive::to_f64(&self.abs()).unwrap_or(f64::INFINITY).max(1.0);
        diff <= tol * scale
    }
}

/// Parses `"3"`, `"-1/3"` or a decimal such as `"0.25"` into an exact rational.
pub fn parse_rational(text: &str) -> Option<BigRational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: BigInt = num.trim().parse().ok()?;
        let den: BigInt = den.trim().parse().ok()?;
        if den.is_zero() {
            return None;
        }
        return Some(BigRational::new(num, den));
    }
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (int_part, frac_part) = mantissa.split_once('.').unwrap_or((mantissa, ""));
    let negative = int_part.starts_with('-');
    let digits = format!("{}{}", int_part.trim_start_matches(['-', '+']), frac_part);
    if digits.is_empty() || !digits.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let mut value = BigRational::from_integer(digits.parse::<BigInt>().ok()?);
    let shift = exponent - frac_part.len() as i32;
    let ten = BigRational::from_integer(BigInt::from(10));
    if shift >= 0 {
        value *= num_traits::pow::pow(ten, shift as usize);
    } else {
        value /= num_traits::pow::pow(ten, (-shift) as usize);
    }
    Some(if negative { -value } else { value })
}

/// Exact rational image of a finite float (binary expansion, no rounding).
pub fn rational_from_f64(x: f64) -> Option<BigRational> {
    BigRational::from_float(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("1/3"), Some(BigRational::from_ratio(1, 3)));
        assert_eq!(parse_rational("0.25"), Some(BigRational::from_ratio(1, 4)));
        assert_eq!(parse_rational("-2.5e-1"), Some(BigRational::from_ratio(-1, 4)));
        assert_eq!(parse_rational("4"), Some(BigRational::from_u64(4)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
    }

    #[test]
    fn factorial_ratio_agrees_across_modes() {
        let exact = <BigRational as Scalar>::factorial_ratio(&[10, 3], &[7, 2]);
        assert_eq!(exact, BigRational::from_u64(720 * 3));
        let float = <f64 as Scalar>::factorial_ratio(&[10, 3], &[7, 2]);
        assert_eq!(float, 2160.0);
        // past the direct-factorial range the log-gamma path takes over
        let big = <f64 as Scalar>::factorial_ratio(&[200], &[199]);
        assert!((big - 200.0).abs() < 1e-9);
    }

    #[test]
    fn float_sum_is_order_insensitive() {
        let terms = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(<f64 as Scalar>::sum_terms(terms), 2.0);
    }
}

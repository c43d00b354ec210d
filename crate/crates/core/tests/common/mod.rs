//! Exact-arithmetic reference implementations shared by the integration tests.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

fn factorial(n: i64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Wigner 3-j symbol from the Racah sum in exact rationals. The symbol is
/// `sign · S · sqrt(R)` with `S`, `R` rational; the square root is taken
/// only at the end in floating point.
pub fn wigner3j_exact(j1: i64, j2: i64, j3: i64, m1: i64, m2: i64, m3: i64) -> f64 {
    if m1 + m2 + m3 != 0
        || j3 < (j1 - j2).abs()
        || j3 > j1 + j2
        || m1.abs() > j1
        || m2.abs() > j2
        || m3.abs() > j3
    {
        return 0.0;
    }
    let f = |n: i64| BigRational::from_integer(factorial(n));
    let r = f(j1 + j2 - j3) * f(j1 - j2 + j3) * f(-j1 + j2 + j3) / f(j1 + j2 + j3 + 1)
        * f(j1 + m1)
        * f(j1 - m1)
        * f(j2 + m2)
        * f(j2 - m2)
        * f(j3 + m3)
        * f(j3 - m3);
    let k_min = 0.max(j2 - j3 - m1).max(j1 - j3 + m2);
    let k_max = (j1 + j2 - j3).min(j1 - m1).min(j2 + m2);
    let mut s = BigRational::zero();
    for k in k_min..=k_max {
        let den = factorial(k)
            * factorial(j1 + j2 - j3 - k)
            * factorial(j1 - m1 - k)
            * factorial(j2 + m2 - k)
            * factorial(j3 - j2 + m1 + k)
            * factorial(j3 - j1 - m2 + k);
        let term = BigRational::new(BigInt::one(), den);
        if k % 2 == 0 {
            s += term;
        } else {
            s -= term;
        }
    }
    if s.is_zero() {
        return 0.0;
    }
    let phase = if (j1 - j2 - m3).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let sign = if s.is_negative() { -phase } else { phase };
    let square = &s * &s * r;
    sign * square.to_f64().expect("finite").sqrt()
}

//! Exact fixed-point arithmetic.
//!
//! A format `Q_{p,s}` holds the numbers `k/s` with `|k| <= 2^p - 1`. Rounding
//! into the grid picks the nearest member, breaks exact ties away from zero,
//! and saturates at `±q_max`. Affine forms are evaluated exactly at scale
//! `s^2` and rounded once at the end; no intermediate rounding ever happens.
//!
//! All values carry arbitrary-precision numerators. Biases live in
//! `Q_{∞,s}` (same grid, no magnitude bound), so nothing here may assume a
//! machine-word range.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FxError {
    #[error("invalid format p={p}, s={s}: requires p >= 1, s >= 1 and 2^p - 1 >= s")]
    InvalidFormat { p: u32, s: u32 },
    #[error("numerator {num} out of range for Q_{{{p},{s}}}")]
    OutOfRange { num: BigInt, p: u32, s: u32 },
    #[error("affine length mismatch: {weights} weights vs {inputs} inputs")]
    LengthMismatch { weights: usize, inputs: usize },
    #[error("scale mismatch: {0} vs {1}")]
    ScaleMismatch(u32, u32),
    #[error("cannot parse {0:?} as {1}")]
    Parse(String, &'static str),
}

/// The format pair `(p, s)` defining `Q_{p,s}`.
///
/// Invariant: `q_max = (2^p - 1)/s >= 1`, i.e. `-1` and `1` are representable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FxFormat {
    p: u32,
    s: u32,
}

impl FxFormat {
    pub fn new(p: u32, s: u32) -> Result<Self, FxError> {
        if p == 0 || s == 0 || p > 48 || (BigInt::one() << p) - 1u8 < BigInt::from(s) {
            return Err(FxError::InvalidFormat { p, s });
        }
        Ok(FxFormat { p, s })
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn s(&self) -> u32 {
        self.s
    }

    /// Largest grid numerator, `2^p - 1`.
    pub fn max_numerator(&self) -> BigInt {
        (BigInt::one() << self.p) - 1
    }

    /// `q_max = (2^p - 1)/s`, the saturation value.
    pub fn q_max(&self) -> FxNum {
        FxNum::new(self.max_numerator(), self.s)
    }

    /// Number of grid points, `2^{p+1} - 1`.
    pub fn grid_len(&self) -> u64 {
        (1u64 << (self.p + 1)) - 1
    }

    /// All grid members in increasing order.
    pub fn grid(&self) -> impl Iterator<Item = FxNum> + '_ {
        let hi = i64::try_from(self.max_numerator()).expect("p <= 48");
        (-hi..=hi).map(move |k| FxNum::new(BigInt::from(k), self.s))
    }

    pub fn contains(&self, x: &FxNum) -> bool {
        x.scale() == self.s && x.numerator().abs() <= self.max_numerator()
    }

    /// Checked grid constructor from a numerator at scale `s`.
    pub fn grid_num(&self, num: impl Into<BigInt>) -> Result<FxNum, FxError> {
        let num = num.into();
        if num.abs() > self.max_numerator() {
            return Err(FxError::OutOfRange {
                num,
                p: self.p,
                s: self.s,
            });
        }
        Ok(FxNum::new(num, self.s))
    }
}

impl fmt::Display for FxFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p={},s={}", self.p, self.s)
    }
}

impl FromStr for FxFormat {
    type Err = FxError;

    fn from_str(text: &str) -> Result<Self, FxError> {
        let err = || FxError::Parse(text.to_string(), "FxFormat");
        let (p_part, s_part) = text.split_once(',').ok_or_else(err)?;
        let p = p_part
            .strip_prefix("p=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(err)?;
        let s = s_part
            .strip_prefix("s=")
            .and_then(|v| v.parse().ok())
            .ok_or_else(err)?;
        FxFormat::new(p, s)
    }
}

/// A grid number `numerator/s`. Bounded membership in a particular
/// `Q_{p,s}` is a property checked against a format; the value itself is a
/// member of `Q_{∞,s}` and may be arbitrarily large (bias domain).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FxNum {
    num: BigInt,
    scale: u32,
}

impl FxNum {
    pub fn new(num: impl Into<BigInt>, scale: u32) -> Self {
        assert!(scale >= 1);
        FxNum {
            num: num.into(),
            scale,
        }
    }

    pub fn zero(scale: u32) -> Self {
        FxNum::new(0, scale)
    }

    pub fn numerator(&self) -> &BigInt {
        &self.num
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn neg(&self) -> FxNum {
        FxNum::new(-&self.num, self.scale)
    }

    pub fn abs(&self) -> FxNum {
        FxNum::new(self.num.abs(), self.scale)
    }

    /// Exact value as a `ScaledExact` with `log_scale = 1`.
    pub fn to_scaled(&self) -> ScaledExact {
        ScaledExact::new(self.num.clone(), self.scale, 1)
    }

    fn assert_same_scale(&self, other: &FxNum) {
        assert_eq!(self.scale, other.scale, "mixed scales in FxNum op");
    }

    pub fn add(&self, other: &FxNum) -> FxNum {
        self.assert_same_scale(other);
        FxNum::new(&self.num + &other.num, self.scale)
    }

    pub fn sub(&self, other: &FxNum) -> FxNum {
        self.assert_same_scale(other);
        FxNum::new(&self.num - &other.num, self.scale)
    }
}

impl PartialOrd for FxNum {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FxNum {
    fn cmp(&self, other: &Self) -> Ordering {
        self.assert_same_scale(other);
        self.num.cmp(&other.num)
    }
}

impl fmt::Display for FxNum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.scale)
    }
}

impl FromStr for FxNum {
    type Err = FxError;

    fn from_str(text: &str) -> Result<Self, FxError> {
        let err = || FxError::Parse(text.to_string(), "FxNum");
        let (n, s) = text.split_once('/').ok_or_else(err)?;
        let num = BigInt::from_str(n).map_err(|_| err())?;
        let scale: u32 = s.parse().map_err(|_| err())?;
        if scale == 0 {
            return Err(err());
        }
        Ok(FxNum::new(num, scale))
    }
}

/// An exact value `numerator / s^log_scale`.
///
/// Closed under the sums and products that appear in affine forms: grid
/// values and weights have `log_scale = 1`, their products `2`, and a bias
/// lifts from `1` to `2` without loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScaledExact {
    num: BigInt,
    scale: u32,
    log_scale: u32,
}

impl ScaledExact {
    pub fn new(num: impl Into<BigInt>, scale: u32, log_scale: u32) -> Self {
        assert!(scale >= 1);
        ScaledExact {
            num: num.into(),
            scale,
            log_scale,
        }
    }

    pub fn zero(scale: u32) -> Self {
        ScaledExact::new(0, scale, 0)
    }

    pub fn from_fx(x: &FxNum) -> Self {
        x.to_scaled()
    }

    pub fn numerator(&self) -> &BigInt {
        &self.num
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn log_scale(&self) -> u32 {
        self.log_scale
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn neg(&self) -> ScaledExact {
        ScaledExact::new(-&self.num, self.scale, self.log_scale)
    }

    pub fn abs(&self) -> ScaledExact {
        ScaledExact::new(self.num.abs(), self.scale, self.log_scale)
    }

    /// Divides out factors of `s` while the numerator allows, reaching the
    /// smallest equivalent `log_scale`.
    pub fn reduced(&self) -> ScaledExact {
        let s = BigInt::from(self.scale);
        let mut num = self.num.clone();
        let mut k = self.log_scale;
        while k > 0 {
            let (q, r) = num_integer::Integer::div_rem(&num, &s);
            if r.is_zero() {
                num = q;
                k -= 1;
            } else {
                break;
            }
        }
        ScaledExact::new(num, self.scale, k)
    }

    /// Rewrites to a higher `log_scale` (exact).
    pub fn lift(&self, log_scale: u32) -> ScaledExact {
        assert!(log_scale >= self.log_scale);
        let factor = BigInt::from(self.scale).pow(log_scale - self.log_scale);
        ScaledExact::new(&self.num * factor, self.scale, log_scale)
    }

    fn common(&self, other: &ScaledExact) -> (ScaledExact, ScaledExact) {
        assert_eq!(self.scale, other.scale, "mixed scales in ScaledExact op");
        let k = self.log_scale.max(other.log_scale);
        (self.lift(k), other.lift(k))
    }

    pub fn add(&self, other: &ScaledExact) -> ScaledExact {
        let (a, b) = self.common(other);
        ScaledExact::new(a.num + b.num, a.scale, a.log_scale)
    }

    pub fn sub(&self, other: &ScaledExact) -> ScaledExact {
        let (a, b) = self.common(other);
        ScaledExact::new(a.num - b.num, a.scale, a.log_scale)
    }

    pub fn mul(&self, other: &ScaledExact) -> ScaledExact {
        assert_eq!(self.scale, other.scale, "mixed scales in ScaledExact op");
        ScaledExact::new(
            &self.num * &other.num,
            self.scale,
            self.log_scale + other.log_scale,
        )
    }

    pub fn mul_int(&self, k: impl Into<BigInt>) -> ScaledExact {
        ScaledExact::new(&self.num * k.into(), self.scale, self.log_scale)
    }

    pub fn cmp_value(&self, other: &ScaledExact) -> Ordering {
        let (a, b) = self.common(other);
        a.num.cmp(&b.num)
    }

    /// Exact equality with an `FxNum` of the same scale.
    pub fn eq_fx(&self, x: &FxNum) -> bool {
        self.cmp_value(&x.to_scaled()) == Ordering::Equal
    }
}

impl fmt::Display for ScaledExact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}^{}", self.num, self.scale, self.log_scale)
    }
}

impl FromStr for ScaledExact {
    type Err = FxError;

    fn from_str(text: &str) -> Result<Self, FxError> {
        let err = || FxError::Parse(text.to_string(), "ScaledExact");
        let (n, rest) = text.split_once('/').ok_or_else(err)?;
        let (s, k) = rest.split_once('^').ok_or_else(err)?;
        let num = BigInt::from_str(n).map_err(|_| err())?;
        let scale: u32 = s.parse().map_err(|_| err())?;
        let log_scale: u32 = k.parse().map_err(|_| err())?;
        if scale == 0 {
            return Err(err());
        }
        Ok(ScaledExact::new(num, scale, log_scale))
    }
}

/// `round(a/b)` to the nearest integer, exact ties away from zero. `b > 0`.
pub fn round_div_away(a: &BigInt, b: &BigInt) -> BigInt {
    debug_assert!(b.is_positive());
    let (q, r) = a.div_mod_floor(b);
    let twice: BigInt = &r * 2;
    match twice.cmp(b) {
        Ordering::Less => q,
        Ordering::Greater => q + 1,
        // Exact midpoint between q and q+1: take the larger absolute value.
        Ordering::Equal => {
            if q.sign() == num_bigint::Sign::Minus {
                q
            } else {
                q + 1
            }
        }
    }
}

/// `i128` twin of [`round_div_away`], used by the compiled evaluator.
pub fn round_div_away_i128(a: i128, b: i128) -> i128 {
    debug_assert!(b > 0);
    let mut q = a.div_euclid(b);
    let r = a.rem_euclid(b);
    match (2 * r).cmp(&b) {
        Ordering::Less => {}
        Ordering::Greater => q += 1,
        Ordering::Equal => {
            if q >= 0 {
                q += 1
            }
        }
    }
    q
}

/// Rounds an exact value into `Q_{p,s}`: nearest grid member, ties away from
/// zero, saturation at `±q_max`. Total on exact inputs; tie detection is
/// integer comparison, never tolerance-based.
pub fn round_to(format: FxFormat, v: &ScaledExact) -> FxNum {
    assert_eq!(v.scale, format.s, "value scale must match format scale");
    let num = if v.log_scale == 0 {
        &v.num * BigInt::from(format.s)
    } else {
        let den = BigInt::from(format.s).pow(v.log_scale - 1);
        round_div_away(&v.num, &den)
    };
    let max = format.max_numerator();
    let clamped = if num > max {
        max
    } else if num < -&max {
        -max
    } else {
        num
    };
    FxNum::new(clamped, format.s)
}

/// Evaluates `bias + Σ w_i x_i` exactly at scale `s^2`, without rounding.
pub fn affine_exact(
    weights: &[FxNum],
    bias: &FxNum,
    inputs: &[FxNum],
) -> Result<ScaledExact, FxError> {
    if weights.len() != inputs.len() {
        return Err(FxError::LengthMismatch {
            weights: weights.len(),
            inputs: inputs.len(),
        });
    }
    let s = bias.scale;
    let mut acc: BigInt = &bias.num * BigInt::from(s);
    for (w, x) in weights.iter().zip(inputs) {
        if w.scale != s || x.scale != s {
            return Err(FxError::ScaleMismatch(w.scale.max(x.scale), s));
        }
        acc += &w.num * &x.num;
    }
    Ok(ScaledExact::new(acc, s, 2))
}

/// The single-rounding affine transform: computes `bias + Σ w_i x_i`
/// exactly, then rounds once into the format.
pub fn affine_round(
    format: FxFormat,
    weights: &[FxNum],
    bias: &FxNum,
    inputs: &[FxNum],
) -> Result<FxNum, FxError> {
    let exact = affine_exact(weights, bias, inputs)?;
    Ok(round_to(format, &exact))
}

/// Rounds the exact rational `num/den` (`den > 0`) into `Q_{p,s}` with the
/// away-from-zero tie rule and saturation.
pub fn round_rational(format: FxFormat, num: &BigInt, den: &BigInt) -> FxNum {
    debug_assert!(den.is_positive());
    let k = round_div_away(&(num * BigInt::from(format.s)), den);
    let max = format.max_numerator();
    FxNum::new(k.min(max.clone()).max(-max), format.s)
}

/// Largest `Q_{∞,s}` member `<= v`. No saturation: the result may exceed
/// `q_max` of every finite format.
pub fn floor_grid(s: u32, v: &ScaledExact) -> FxNum {
    assert_eq!(v.scale, s);
    let num = if v.log_scale == 0 {
        &v.num * BigInt::from(s)
    } else {
        let den = BigInt::from(s).pow(v.log_scale - 1);
        v.num.div_floor(&den)
    };
    FxNum::new(num, s)
}

/// Smallest `Q_{∞,s}` member `>= v`.
pub fn ceil_grid(s: u32, v: &ScaledExact) -> FxNum {
    assert_eq!(v.scale, s);
    let num = if v.log_scale == 0 {
        &v.num * BigInt::from(s)
    } else {
        let den = BigInt::from(s).pow(v.log_scale - 1);
        v.num.div_ceil(&den)
    };
    FxNum::new(num, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn fmt(p: u32, s: u32) -> FxFormat {
        FxFormat::new(p, s).unwrap()
    }

    fn se(num: i64, scale: u32, k: u32) -> ScaledExact {
        ScaledExact::new(num, scale, k)
    }

    #[test]
    fn format_validation() {
        assert!(FxFormat::new(0, 1).is_err());
        assert!(FxFormat::new(3, 0).is_err());
        // q_max >= 1 requires 2^p - 1 >= s.
        assert!(FxFormat::new(2, 4).is_err());
        assert!(FxFormat::new(2, 3).is_ok());
        assert_eq!(fmt(3, 2).grid_len(), 15);
        assert_eq!(fmt(3, 2).grid().count(), 15);
    }

    #[test]
    fn format_round_trip() {
        let f = fmt(4, 3);
        assert_eq!(f.to_string(), "p=4,s=3");
        assert_eq!("p=4,s=3".parse::<FxFormat>().unwrap(), f);
    }

    #[test]
    fn round_saturates_at_q_max() {
        // (p=2, s=1), v = 5 -> 3
        let f = fmt(2, 1);
        assert_eq!(round_to(f, &se(5, 1, 1)), FxNum::new(3, 1));
        assert_eq!(round_to(f, &se(-5, 1, 1)), FxNum::new(-3, 1));
    }

    #[test]
    fn round_breaks_ties_away_from_zero() {
        // (p=3, s=2), v = 1/4 -> 1/2 and v = -1/4 -> -1/2
        let f = fmt(3, 2);
        assert_eq!(round_to(f, &se(1, 2, 2)), FxNum::new(1, 2));
        assert_eq!(round_to(f, &se(-1, 2, 2)), FxNum::new(-1, 2));
        // 3/4 is midway between 1/2 and 1: away from zero picks 1.
        assert_eq!(round_to(f, &se(3, 2, 2)), FxNum::new(2, 2));
        assert_eq!(round_to(f, &se(-3, 2, 2)), FxNum::new(-2, 2));
    }

    #[test]
    fn round_is_identity_on_grid() {
        for (p, s) in [(2, 1), (3, 2), (4, 3), (5, 4)] {
            let f = fmt(p, s);
            for x in f.grid() {
                assert_eq!(round_to(f, &x.to_scaled()), x);
            }
        }
    }

    #[test]
    fn round_matches_rational_argmin_oracle() {
        // Brute-force argmin over the grid with the away-from-zero tie rule,
        // on every scale-s^2 value in a window past saturation.
        for (p, s) in [(2, 1), (3, 2), (2, 3)] {
            let f = fmt(p, s);
            let span = i64::try_from(f.max_numerator()).unwrap() * i64::from(s) + 2 * i64::from(s);
            for n in -span..=span {
                let v = BigRational::new(n.into(), (i64::from(s) * i64::from(s)).into());
                let mut best: Option<(BigRational, BigRational)> = None;
                for y in f.grid() {
                    let yv = BigRational::new(y.numerator().clone(), BigInt::from(y.scale()));
                    let d = (&v - &yv).abs();
                    let better = match &best {
                        None => true,
                        Some((bd, by)) => d < *bd || (d == *bd && yv.abs() > by.abs()),
                    };
                    if better {
                        best = Some((d, yv));
                    }
                }
                let expect = best.unwrap().1;
                let got = round_to(f, &se(n, s, 2));
                let got_v = BigRational::new(got.numerator().clone(), BigInt::from(got.scale()));
                assert_eq!(got_v, expect, "p={p} s={s} n={n}");
            }
        }
    }

    #[test]
    fn round_odd_symmetry_and_monotone() {
        let f = fmt(4, 3);
        let lim = 200i64;
        let mut prev: Option<FxNum> = None;
        for n in -lim..=lim {
            let r = round_to(f, &se(n, 3, 2));
            let rn = round_to(f, &se(-n, 3, 2));
            assert_eq!(rn, r.neg(), "odd symmetry at {n}");
            if let Some(p) = prev {
                assert!(p <= r, "monotone at {n}");
            }
            prev = Some(r);
        }
    }

    #[test]
    fn round_error_bound_within_window() {
        // |round(v) - v| <= 1/(2s) whenever |v| <= q_max.
        let f = fmt(3, 2);
        let max = i64::try_from(f.max_numerator()).unwrap() * 2;
        for n in -max..=max {
            let v = se(n, 2, 2);
            let r = round_to(f, &v).to_scaled();
            let diff = r.sub(&v);
            // Numerators live at scale s^2; the bound 1/(2s) scales to s/2.
            assert!(diff.numerator().abs() * 2u8 <= BigInt::from(f.s()), "n={n}");
        }
    }

    #[test]
    fn affine_round_identity() {
        let f = fmt(3, 2);
        for x in f.grid() {
            let y = affine_round(
                f,
                &[FxNum::new(2, 2)],
                &FxNum::zero(2),
                std::slice::from_ref(&x),
            )
            .unwrap();
            assert_eq!(y, x);
        }
    }

    #[test]
    fn affine_round_single_rounding_example() {
        // (p=2, s=2): 1/2*1/2 + 1/2*1/2 + 1/4 = 3/4, one rounding gives 1.
        // The 1/4 addend is itself a product of grid values, outside the
        // Q_{∞,s} bias domain, so it enters through the exact sum.
        let f = fmt(2, 2);
        let w = [FxNum::new(1, 2), FxNum::new(1, 2)];
        let x = [FxNum::new(1, 2), FxNum::new(1, 2)];
        let exact = affine_exact(&w, &FxNum::zero(2), &x)
            .unwrap()
            .add(&se(1, 2, 2));
        assert_eq!(exact, se(3, 2, 2));
        assert_eq!(round_to(f, &exact), FxNum::new(2, 2));
    }

    #[test]
    fn affine_round_matches_rational_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..2000 {
            let p = rng.gen_range(2..=6);
            let smax = (1u32 << p) - 1;
            let s = rng.gen_range(1..=smax.min(6));
            let f = fmt(p, s);
            let hi = i64::try_from(f.max_numerator()).unwrap();
            let n = rng.gen_range(0..5);
            let ws: Vec<FxNum> = (0..n)
                .map(|_| FxNum::new(rng.gen_range(-hi..=hi), s))
                .collect();
            let xs: Vec<FxNum> = (0..n)
                .map(|_| FxNum::new(rng.gen_range(-hi..=hi), s))
                .collect();
            let b = FxNum::new(rng.gen_range(-4 * hi..=4 * hi), s);
            let got = affine_round(f, &ws, &b, &xs).unwrap();

            // Independent naive rational summation.
            let rs = |x: &FxNum| BigRational::new(x.numerator().clone(), BigInt::from(s));
            let mut v = rs(&b);
            for (w, x) in ws.iter().zip(&xs) {
                v += rs(w) * rs(x);
            }
            let scaled = v * BigInt::from(s);
            let k = round_div_away(scaled.numer(), scaled.denom());
            let max = f.max_numerator();
            let k = k.min(max.clone()).max(-max);
            assert_eq!(got, FxNum::new(k, s));
        }
    }

    #[test]
    fn affine_round_rejects_length_mismatch() {
        let f = fmt(3, 2);
        let err = affine_round(f, &[FxNum::new(1, 2)], &FxNum::zero(2), &[]).unwrap_err();
        assert!(matches!(err, FxError::LengthMismatch { .. }));
    }

    #[test]
    fn floor_ceil_examples() {
        // s=2: 3/4 sits in the cell (1/2, 1); same cell as the value 0.7.
        let cell = se(3, 2, 2);
        assert_eq!(floor_grid(2, &cell), FxNum::new(1, 2));
        assert_eq!(ceil_grid(2, &cell), FxNum::new(2, 2));
        // s=1, v=3: grid point is a fixed point of both.
        assert_eq!(floor_grid(1, &se(3, 1, 1)), FxNum::new(3, 1));
        assert_eq!(ceil_grid(1, &se(3, 1, 1)), FxNum::new(3, 1));
        // s=4: -5/16 = -0.3125 shares the cell of -0.3: floor -2/4, ceil -1/4.
        let v = se(-5, 4, 2);
        assert_eq!(floor_grid(4, &v), FxNum::new(-2, 4));
        assert_eq!(ceil_grid(4, &v), FxNum::new(-1, 4));
        // Rational oracle: -1/2 < -0.3 < -1/4.
        let v03 = BigRational::new((-3).into(), 10.into());
        assert!(BigRational::new((-1).into(), 2.into()) < v03);
        assert!(v03 < BigRational::new((-1).into(), 4.into()));
    }

    #[test]
    fn floor_ceil_unbounded_in_grid_domain() {
        // Values past q_max do not saturate in Q_{∞,s}.
        assert_eq!(floor_grid(2, &se(1001, 2, 2)), FxNum::new(500, 2));
        assert_eq!(ceil_grid(2, &se(1001, 2, 2)), FxNum::new(501, 2));
    }

    #[test]
    fn weight_quantization_matches_naive_example() {
        // Q_{7,64}: -1/256 rounds to 0 and 1/128 ties away from zero to 1/64.
        let f = fmt(7, 64);
        let w12 = se(-16, 64, 2); // -1/256 = -16/64^2
        assert_eq!(round_to(f, &w12), FxNum::zero(64));
        let w32 = se(32, 64, 2); // 1/128 = 32/64^2
        assert_eq!(round_to(f, &w32), FxNum::new(1, 64));
    }

    #[test]
    fn scaled_exact_algebra() {
        let a = se(3, 2, 1); // 3/2
        let b = se(1, 2, 2); // 1/4
        assert_eq!(a.add(&b), se(7, 2, 2));
        assert_eq!(a.sub(&b), se(5, 2, 2));
        assert_eq!(a.mul(&b), se(3, 2, 3));
        assert_eq!(a.mul_int(4), se(12, 2, 1));
        assert_eq!(a.cmp_value(&b), Ordering::Greater);
        let parsed: ScaledExact = a.to_string().parse().unwrap();
        assert_eq!(parsed, a);
    }

    #[test]
    fn fxnum_round_trip() {
        let x = FxNum::new(-13, 6);
        assert_eq!(x.to_string(), "-13/6");
        assert_eq!("-13/6".parse::<FxNum>().unwrap(), x);
    }
}

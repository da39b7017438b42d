//! Dyadic interval arithmetic with rigorous enclosures for the elementary
//! functions the activation zoo needs.
//!
//! Values are `m * 2^e` with arbitrary-precision mantissas; every operation
//! rounds outward, so an [`Interval`] always contains the exact result.
//! Series evaluations carry explicit tail bounds: nothing here depends on
//! heuristic error estimates.

use std::cmp::Ordering;

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, Zero};

/// A dyadic rational `m * 2^e`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dyadic {
    pub m: BigInt,
    pub e: i64,
}

impl Dyadic {
    pub fn new(m: impl Into<BigInt>, e: i64) -> Self {
        Dyadic { m: m.into(), e }
    }

    pub fn zero() -> Self {
        Dyadic::new(0, 0)
    }

    pub fn one() -> Self {
        Dyadic::new(1, 0)
    }

    pub fn from_int(k: impl Into<BigInt>) -> Self {
        Dyadic::new(k, 0)
    }

    pub fn is_zero(&self) -> bool {
        self.m.is_zero()
    }

    pub fn neg(&self) -> Dyadic {
        Dyadic::new(-&self.m, self.e)
    }

    fn align(&self, other: &Dyadic) -> (BigInt, BigInt, i64) {
        let e = self.e.min(other.e);
        let a = &self.m << u32::try_from(self.e - e).expect("exponent spread");
        let b = &other.m << u32::try_from(other.e - e).expect("exponent spread");
        (a, b, e)
    }

    pub fn add(&self, other: &Dyadic) -> Dyadic {
        let (a, b, e) = self.align(other);
        Dyadic::new(a + b, e)
    }

    pub fn sub(&self, other: &Dyadic) -> Dyadic {
        let (a, b, e) = self.align(other);
        Dyadic::new(a - b, e)
    }

    pub fn mul(&self, other: &Dyadic) -> Dyadic {
        Dyadic::new(&self.m * &other.m, self.e + other.e)
    }

    #[allow(clippy::should_implement_trait)]
    pub fn cmp(&self, other: &Dyadic) -> Ordering {
        let (a, b, _) = self.align(other);
        a.cmp(&b)
    }

    /// Compares against the rational `num/den` (`den > 0`) exactly.
    pub fn cmp_ratio(&self, num: &BigInt, den: &BigInt) -> Ordering {
        debug_assert!(den.is_positive());
        // m * 2^e  vs  num/den  <=>  m * den * 2^e  vs  num.
        if self.e >= 0 {
            let lhs = (&self.m << u32::try_from(self.e).unwrap()) * den;
            lhs.cmp(num)
        } else {
            let lhs = &self.m * den;
            let rhs = num << u32::try_from(-self.e).unwrap();
            lhs.cmp(&rhs)
        }
    }

    pub fn sign_num(&self) -> Sign {
        self.m.sign()
    }

    /// Keeps roughly `prec` mantissa bits; `up` selects ceiling, else floor.
    pub fn round_prec(&self, prec: u32, up: bool) -> Dyadic {
        let bits = self.m.bits();
        if bits <= u64::from(prec) {
            return self.clone();
        }
        let drop = u32::try_from(bits - u64::from(prec)).expect("prec drop");
        let shifted = &self.m >> drop;
        let back = &shifted << drop;
        let exact = back == self.m;
        let m = if exact {
            shifted
        } else if up {
            shifted + 1
        } else {
            shifted
        };
        // Right shift of negatives floors, which is what we want for `!up`.
        Dyadic::new(m, self.e + i64::from(drop))
    }

    /// Directed rational-to-dyadic conversion with about `prec` result bits.
    pub fn from_ratio(num: &BigInt, den: &BigInt, prec: u32, up: bool) -> Dyadic {
        debug_assert!(den.is_positive());
        if num.is_zero() {
            return Dyadic::zero();
        }
        let shift = i64::from(prec) + i64::try_from(den.bits()).unwrap();
        let shift = u32::try_from(shift.max(i64::from(prec))).expect("shift");
        let scaled = num << shift;
        let (q, r) = num_integer::Integer::div_mod_floor(&scaled, den);
        let m = if r.is_zero() || !up { q } else { q + 1 };
        Dyadic::new(m, -i64::from(shift))
    }

    pub fn to_f64(&self) -> f64 {
        // Good enough for reporting; not used in any rigorous path.
        let bits = self.m.bits();
        if bits <= 52 {
            let m: f64 = self.m.to_string().parse().unwrap_or(f64::NAN);
            m * 2f64.powi(self.e as i32)
        } else {
            let drop = bits - 52;
            let top = &self.m >> drop;
            let m: f64 = top.to_string().parse().unwrap_or(f64::NAN);
            m * 2f64.powi((self.e + i64::try_from(drop).unwrap()) as i32)
        }
    }
}

/// A closed interval `[lo, hi]` of dyadic rationals.
#[derive(Debug, Clone)]
pub struct Interval {
    pub lo: Dyadic,
    pub hi: Dyadic,
}

impl Interval {
    pub fn new(lo: Dyadic, hi: Dyadic) -> Self {
        debug_assert!(lo.cmp(&hi) != Ordering::Greater, "inverted interval");
        Interval { lo, hi }
    }

    pub fn point(v: Dyadic) -> Self {
        Interval {
            lo: v.clone(),
            hi: v,
        }
    }

    pub fn from_int(k: impl Into<BigInt>) -> Self {
        Interval::point(Dyadic::from_int(k))
    }

    /// Encloses the rational `num/den`; `den > 0`.
    pub fn from_ratio(num: &BigInt, den: &BigInt, prec: u32) -> Self {
        Interval {
            lo: Dyadic::from_ratio(num, den, prec, false),
            hi: Dyadic::from_ratio(num, den, prec, true),
        }
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> Dyadic {
        self.hi.sub(&self.lo)
    }

    /// True when `width <= 2^log2_bound`.
    pub fn width_le_pow2(&self, log2_bound: i64) -> bool {
        let w = self.width();
        if w.is_zero() {
            return true;
        }
        w.cmp(&Dyadic::new(1, log2_bound)) != Ordering::Greater
    }

    pub fn neg(&self) -> Interval {
        Interval {
            lo: self.hi.neg(),
            hi: self.lo.neg(),
        }
    }

    pub fn add_round(&self, other: &Interval, prec: u32) -> Interval {
        Interval {
            lo: self.lo.add(&other.lo).round_prec(prec, false),
            hi: self.hi.add(&other.hi).round_prec(prec, true),
        }
    }

    pub fn sub_round(&self, other: &Interval, prec: u32) -> Interval {
        self.add_round(&other.neg(), prec)
    }

    pub fn mul_round(&self, other: &Interval, prec: u32) -> Interval {
        let cands = [
            self.lo.mul(&other.lo),
            self.lo.mul(&other.hi),
            self.hi.mul(&other.lo),
            self.hi.mul(&other.hi),
        ];
        let mut lo = cands[0].clone();
        let mut hi = cands[0].clone();
        for c in &cands[1..] {
            if c.cmp(&lo) == Ordering::Less {
                lo = c.clone();
            }
            if c.cmp(&hi) == Ordering::Greater {
                hi = c.clone();
            }
        }
        Interval {
            lo: lo.round_prec(prec, false),
            hi: hi.round_prec(prec, true),
        }
    }

    pub fn mul_int(&self, k: i64) -> Interval {
        let f = Dyadic::from_int(k);
        if k >= 0 {
            Interval {
                lo: self.lo.mul(&f),
                hi: self.hi.mul(&f),
            }
        } else {
            Interval {
                lo: self.hi.mul(&f),
                hi: self.lo.mul(&f),
            }
        }
    }

    /// Reciprocal of an interval that excludes zero.
    pub fn recip(&self, prec: u32) -> Interval {
        assert!(
            self.lo.sign_num() == self.hi.sign_num() && self.lo.sign_num() != Sign::NoSign,
            "recip of interval containing zero"
        );
        let inv = |d: &Dyadic, up: bool| -> Dyadic {
            // 1/(m*2^e) = (1/m) * 2^-e.
            let num = BigInt::one();
            let r = if d.m.is_positive() {
                Dyadic::from_ratio(&num, &d.m, prec, up)
            } else {
                Dyadic::from_ratio(&-num, &d.m.abs(), prec, up)
            };
            Dyadic::new(r.m, r.e - d.e)
        };
        Interval {
            lo: inv(&self.hi, false),
            hi: inv(&self.lo, true),
        }
    }

    pub fn div_round(&self, other: &Interval, prec: u32) -> Interval {
        self.mul_round(&other.recip(prec), prec)
    }

    pub fn contains_ratio(&self, num: &BigInt, den: &BigInt) -> bool {
        self.lo.cmp_ratio(num, den) != Ordering::Greater
            && self.hi.cmp_ratio(num, den) != Ordering::Less
    }

    /// Enclosure of `|self|`.
    pub fn abs(&self) -> Interval {
        use num_bigint::Sign;
        if self.lo.sign_num() != Sign::Minus {
            self.clone()
        } else if self.hi.sign_num() != Sign::Plus {
            self.neg()
        } else {
            let hi = if self.lo.neg().cmp(&self.hi) == Ordering::Greater {
                self.lo.neg()
            } else {
                self.hi.clone()
            };
            Interval::new(Dyadic::zero(), hi)
        }
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        let lo = if self.lo.cmp(&other.lo) == Ordering::Less {
            self.lo.clone()
        } else {
            other.lo.clone()
        };
        let hi = if self.hi.cmp(&other.hi) == Ordering::Greater {
            self.hi.clone()
        } else {
            other.hi.clone()
        };
        Interval { lo, hi }
    }

    pub fn to_f64_mid(&self) -> f64 {
        (self.lo.to_f64() + self.hi.to_f64()) / 2.0
    }
}

fn factorial(n: u32) -> BigInt {
    let mut acc = BigInt::one();
    for k in 2..=n {
        acc *= k;
    }
    acc
}

/// Enclosure of `exp(r)` for a dyadic `0 <= r <= 1/4` via the Taylor series
/// with an explicit tail bound.
fn exp_reduced(r: &Dyadic, prec: u32) -> Interval {
    debug_assert!(r.sign_num() != Sign::Minus);
    debug_assert!(r.cmp_ratio(&BigInt::one(), &BigInt::from(4)) != Ordering::Greater);
    let mut sum = Interval::from_int(1);
    let mut term = Interval::from_int(1);
    let r_iv = Interval::point(r.clone());
    let mut n = 0u32;
    loop {
        n += 1;
        term = term
            .mul_round(&r_iv, prec + 16)
            .div_round(&Interval::from_int(n), prec + 16);
        sum = sum.add_round(&term, prec + 16);
        // Tail <= term * r/(n+1) / (1 - r/(n+2)) <= term * 2 * r <= term/2;
        // stop once term is below the target resolution.
        if term.hi.cmp(&Dyadic::new(1, -i64::from(prec) - 8)) == Ordering::Less && n >= 2 {
            break;
        }
        assert!(n < 10_000, "exp series failed to converge");
    }
    // All remaining terms are positive and bounded by term.hi * 2/3... use
    // the crude but safe bound term.hi (ratio <= 1/8 for n >= 1, r <= 1/4).
    let tail = Interval::new(Dyadic::zero(), term.hi.clone());
    sum.add_round(&tail, prec + 16)
}

/// Enclosure of `exp(x)` for any dyadic `x`.
pub fn exp_dyadic(x: &Dyadic, prec: u32) -> Interval {
    if x.sign_num() == Sign::Minus {
        return exp_dyadic(&x.neg(), prec + 8).recip(prec);
    }
    if x.is_zero() {
        return Interval::from_int(1);
    }
    // Halve until the argument is at most 1/4, then square back up.
    let mag = i64::try_from(x.m.bits()).unwrap() + x.e;
    let k = u32::try_from((mag + 2).max(0)).unwrap();
    let r = Dyadic::new(x.m.clone(), x.e - i64::from(k));
    let guard = prec + 2 * k + 16;
    let mut acc = exp_reduced(&r, guard);
    for _ in 0..k {
        acc = acc.mul_round(&acc, guard);
    }
    Interval {
        lo: acc.lo.round_prec(prec, false),
        hi: acc.hi.round_prec(prec, true),
    }
}

/// Enclosure of `exp` over an interval (monotone).
pub fn exp_interval(x: &Interval, prec: u32) -> Interval {
    Interval {
        lo: exp_dyadic(&x.lo, prec).lo,
        hi: exp_dyadic(&x.hi, prec).hi,
    }
}

/// Enclosure of `atanh(z)` for dyadic `0 <= z <= 1/2`.
fn atanh_small(z: &Dyadic, prec: u32) -> Interval {
    debug_assert!(z.sign_num() != Sign::Minus);
    debug_assert!(z.cmp_ratio(&BigInt::one(), &BigInt::from(2)) != Ordering::Greater);
    let z_iv = Interval::point(z.clone());
    let z2 = z_iv.mul_round(&z_iv, prec + 16);
    let mut power = z_iv.clone();
    let mut sum = z_iv;
    let mut k = 1u32;
    loop {
        k += 2;
        power = power.mul_round(&z2, prec + 16);
        let term = power.div_round(&Interval::from_int(k), prec + 16);
        sum = sum.add_round(&term, prec + 16);
        if power.hi.cmp(&Dyadic::new(1, -i64::from(prec) - 8)) == Ordering::Less {
            // Tail <= z^{k+2}/(k+2) * 1/(1-z^2) <= power.hi * 4/3.
            let tail = Interval::new(Dyadic::zero(), power.hi.mul(&Dyadic::from_int(2)));
            return sum.add_round(&tail, prec + 16);
        }
        assert!(k < 100_000, "atanh series failed to converge");
    }
}

/// Enclosure of `log(1+y)` for an interval `y >= 0`, via
/// `log(1+y) = 2 atanh(y/(2+y))`.
pub fn log1p_interval(y: &Interval, prec: u32) -> Interval {
    assert!(y.lo.sign_num() != Sign::Minus, "log1p domain");
    let eval = |d: &Dyadic, up: bool| -> Dyadic {
        let two = Interval::from_int(2);
        let num = Interval::point(d.clone());
        let z = num.div_round(&two.add_round(&num, prec + 16), prec + 16);
        let z_end = if up { z.hi.clone() } else { z.lo.clone() };
        let iv = atanh_small(&z_end.round_prec(prec + 16, up), prec + 16);
        let doubled = iv.mul_int(2);
        if up {
            doubled.hi.round_prec(prec, true)
        } else {
            doubled.lo.round_prec(prec, false)
        }
    };
    Interval {
        lo: eval(&y.lo, false),
        hi: eval(&y.hi, true),
    }
}

/// Enclosure of `sqrt(v)` for an interval `v >= 0`.
pub fn sqrt_interval(v: &Interval, prec: u32) -> Interval {
    assert!(v.lo.sign_num() != Sign::Minus, "sqrt domain");
    let eval = |d: &Dyadic, up: bool| -> Dyadic {
        if d.is_zero() {
            return Dyadic::zero();
        }
        // Scale to an even exponent with at least 2*prec+2 mantissa bits.
        let mut m = d.m.to_biguint().expect("nonnegative");
        let mut e = d.e;
        let want = u64::from(2 * prec + 2);
        if m.bits() < want {
            let add = want - m.bits();
            let add = add + (add & 1);
            let add = u32::try_from(add + (e.unsigned_abs() % 2)).unwrap();
            // Keep exponent parity even after shifting.
            let add = if (e - i64::from(add)) % 2 == 0 {
                add
            } else {
                add + 1
            };
            m <<= add;
            e -= i64::from(add);
        } else if e % 2 != 0 {
            m <<= 1u32;
            e -= 1;
        }
        let root = m.sqrt();
        let exact = &root * &root == m;
        let r = if up && !exact { root + 1u32 } else { root };
        Dyadic::new(BigInt::from(r), e / 2)
    };
    Interval {
        lo: eval(&v.lo, false),
        hi: eval(&v.hi, true),
    }
}

/// Enclosure of `atan(1/q)` for integer `q >= 2` (alternating series).
fn atan_inv(q: u32, prec: u32) -> Interval {
    let q = BigInt::from(q);
    let q2 = &q * &q;
    let mut den = q.clone();
    let mut k = 0u32;
    let mut sum_lo = Interval::from_int(0);
    let mut sum_hi;
    loop {
        // Positive term then negative term; partial sums bracket the limit.
        let t1 = Interval::from_ratio(&BigInt::one(), &(&den * (2 * k + 1)), prec + 16);
        sum_hi = sum_lo.add_round(&t1, prec + 16);
        den *= &q2;
        k += 1;
        let t2 = Interval::from_ratio(&BigInt::one(), &(&den * (2 * k + 1)), prec + 16);
        sum_lo = sum_hi.sub_round(&t2, prec + 16);
        den *= &q2;
        k += 1;
        if t2.hi.cmp(&Dyadic::new(1, -i64::from(prec) - 8)) == Ordering::Less {
            return Interval::new(sum_lo.lo, sum_hi.hi);
        }
        assert!(k < 100_000, "atan series failed to converge");
    }
}

/// Enclosure of π via Machin's formula.
pub fn pi(prec: u32) -> Interval {
    let a = atan_inv(5, prec + 8).mul_int(16);
    let b = atan_inv(239, prec + 8).mul_int(4);
    a.sub_round(&b, prec)
}

/// Enclosure of `2/sqrt(π)`.
pub fn two_over_sqrt_pi(prec: u32) -> Interval {
    Interval::from_int(2).div_round(&sqrt_interval(&pi(prec + 8), prec + 8), prec)
}

/// Enclosure of `erf(x)` for a dyadic endpoint via the Maclaurin series
/// (used for `|x| <= 4`), with the alternating-tail bound.
fn erf_series(x: &Dyadic, prec: u32) -> Interval {
    // erf(x) = 2/sqrt(pi) * sum (-1)^n x^(2n+1) / (n! (2n+1)).
    let xi = Interval::point(x.clone());
    let x2 = xi.mul_round(&xi, prec + 16);
    let mut power = xi.clone(); // x^(2n+1)
    let mut sum = xi.div_round(&Interval::from_int(1), prec + 16);
    let mut n = 0u32;
    let mut bracket: Option<Interval> = None;
    loop {
        n += 1;
        power = power.mul_round(&x2, prec + 16);
        let den = &factorial(n) * (2 * n + 1);
        let term = power.mul_round(&Interval::from_ratio(&BigInt::one(), &den, prec + 16), prec + 16);
        // Term magnitude bound for the bracket test.
        let t_abs = term.hi.clone();
        if n % 2 == 1 {
            sum = sum.sub_round(&term, prec + 16);
        } else {
            sum = sum.add_round(&term, prec + 16);
        }
        // Once terms decrease (n >= x^2), the truncation error is bounded by
        // the next term; stop when small enough.
        let decreasing = BigInt::from(n) >= {
            let b = x2.hi.clone();
            // ceil(x^2) from the dyadic upper bound.
            if b.e >= 0 {
                &b.m << u32::try_from(b.e).unwrap()
            } else {
                num_integer::Integer::div_ceil(&b.m, &(BigInt::one() << u32::try_from(-b.e).unwrap()))
            }
        };
        if decreasing && t_abs.cmp(&Dyadic::new(1, -i64::from(prec) - 8)) == Ordering::Less {
            let pad = Interval::new(t_abs.neg(), t_abs);
            bracket = Some(sum.add_round(&pad, prec + 16));
        }
        if let Some(b) = bracket {
            let c = two_over_sqrt_pi(prec + 16);
            return b.mul_round(&c, prec);
        }
        assert!(n < 100_000, "erf series failed to converge");
    }
}

/// Enclosure of `erfc(x) = 1 - erf(x)` for dyadic `x >= 4`, via the
/// alternating asymptotic envelope
/// `e^{-x^2}/(x sqrt(pi)) * [1 - 1/(2x^2), 1 - 1/(2x^2) + 3/(4x^4)]`.
fn erfc_tail(x: &Dyadic, prec: u32) -> Interval {
    let xi = Interval::point(x.clone());
    let x2 = xi.mul_round(&xi, prec + 16);
    let x4 = x2.mul_round(&x2, prec + 16);
    let e = exp_interval(&x2.neg(), prec + 16);
    let base = e.div_round(
        &xi.mul_round(&sqrt_interval(&pi(prec + 16), prec + 16), prec + 16),
        prec + 16,
    );
    let half = Interval::from_ratio(&BigInt::one(), &BigInt::from(2), prec + 16);
    let three_q = Interval::from_ratio(&BigInt::from(3), &BigInt::from(4), prec + 16);
    let c1 = Interval::from_int(1).sub_round(&half.div_round(&x2, prec + 16), prec + 16);
    let c2 = c1.add_round(&three_q.div_round(&x4, prec + 16), prec + 16);
    let lo_iv = base.mul_round(&c1, prec + 16);
    let hi_iv = base.mul_round(&c2, prec + 16);
    Interval::new(lo_iv.lo, hi_iv.hi)
}

/// Enclosure of `erf` at a dyadic point (any sign, any magnitude).
pub fn erf_dyadic(x: &Dyadic, prec: u32) -> Interval {
    if x.sign_num() == Sign::Minus {
        return erf_dyadic(&x.neg(), prec).neg();
    }
    if x.cmp_ratio(&BigInt::from(4), &BigInt::one()) == Ordering::Greater {
        let tail = erfc_tail(x, prec + 8);
        return Interval::from_int(1).sub_round(&tail, prec);
    }
    erf_series(x, prec)
}

/// Enclosure of `erf` over an interval (monotone increasing).
pub fn erf_interval(x: &Interval, prec: u32) -> Interval {
    Interval {
        lo: erf_dyadic(&x.lo, prec).lo,
        hi: erf_dyadic(&x.hi, prec).hi,
    }
}

/// Enclosure of `sin(x)` at a dyadic point, Maclaurin series with the
/// Lagrange remainder `|x|^{N+1}/(N+1)!`.
pub fn sin_dyadic(x: &Dyadic, prec: u32) -> Interval {
    if x.sign_num() == Sign::Minus {
        return sin_dyadic(&x.neg(), prec).neg();
    }
    sin_interval_core(&Interval::point(x.clone()), prec)
}

/// Enclosure of `sin` at the rational point `num/den` (`den > 0`).
pub fn sin_ratio(num: &BigInt, den: &BigInt, prec: u32) -> Interval {
    if num.sign() == Sign::Minus {
        return sin_ratio(&-num, den, prec).neg();
    }
    sin_interval_core(&Interval::from_ratio(num, den, prec + 16), prec)
}

/// Series core for a narrow nonnegative interval; the remainder uses the
/// upper endpoint. The input interval's own width passes through unchanged
/// (sin is 1-Lipschitz and the interval ops are outward).
fn sin_interval_core(xi: &Interval, prec: u32) -> Interval {
    let x2 = xi.mul_round(xi, prec + 16);
    let mut power = xi.clone();
    let mut sum = xi.clone();
    let mut n = 1u32; // highest power used so far
    loop {
        let next = power.mul_round(&x2, prec + 16).div_round(
            &Interval::from_int(i64::from(n + 1) * i64::from(n + 2)),
            prec + 16,
        );
        power = next.clone();
        n += 2;
        if (n / 2) % 2 == 1 {
            sum = sum.sub_round(&next, prec + 16);
        } else {
            sum = sum.add_round(&next, prec + 16);
        }
        // Remainder bound: |x|^{n+2}/(n+2)! — reuse the next term's size.
        let rem = power
            .mul_round(&x2, prec + 16)
            .div_round(
                &Interval::from_int(i64::from(n + 1) * i64::from(n + 2)),
                prec + 16,
            )
            .hi
            .clone();
        if rem.sign_num() != Sign::Minus
            && rem.cmp(&Dyadic::new(1, -i64::from(prec) - 8)) == Ordering::Less
        {
            let pad = Interval::new(rem.neg(), rem);
            let out = sum.add_round(&pad, prec);
            return Interval::new(
                out.lo.round_prec(prec, false),
                out.hi.round_prec(prec, true),
            );
        }
        assert!(n < 1_000_000, "sin series failed to converge");
    }
}

/// Enclosure of `sigmoid(x) = 1/(1+e^{-x})` over an interval (monotone).
pub fn sigmoid_interval(x: &Interval, prec: u32) -> Interval {
    let eval = |d: &Dyadic, up: bool| -> Dyadic {
        let e = exp_dyadic(&d.neg(), prec + 16);
        let denom = Interval::from_int(1).add_round(&e, prec + 16);
        let v = Interval::from_int(1).div_round(&denom, prec + 16);
        if up {
            v.hi.round_prec(prec, true)
        } else {
            v.lo.round_prec(prec, false)
        }
    };
    Interval {
        lo: eval(&x.lo, false),
        hi: eval(&x.hi, true),
    }
}

/// Enclosure of `softplus(x) = log(1+e^x)` over an interval (monotone).
pub fn softplus_interval(x: &Interval, prec: u32) -> Interval {
    let eval = |d: &Dyadic, up: bool| -> Dyadic {
        // For x >= 0 use x + log1p(e^{-x}) so the series argument stays small.
        let nonneg = d.sign_num() != Sign::Minus;
        let y = if nonneg {
            exp_dyadic(&d.neg(), prec + 16)
        } else {
            exp_dyadic(d, prec + 16)
        };
        let l = log1p_interval(&y, prec + 16);
        let v = if nonneg {
            l.add_round(&Interval::point(d.clone()), prec + 16)
        } else {
            l
        };
        if up {
            v.hi.round_prec(prec, true)
        } else {
            v.lo.round_prec(prec, false)
        }
    };
    Interval {
        lo: eval(&x.lo, false),
        hi: eval(&x.hi, true),
    }
}

/// Enclosure of `tanh(x)` over an interval (monotone), via
/// `tanh(x) = 1 - 2/(e^{2x}+1)`.
pub fn tanh_interval(x: &Interval, prec: u32) -> Interval {
    let eval = |d: &Dyadic, up: bool| -> Dyadic {
        let e = exp_dyadic(&Dyadic::new(d.m.clone(), d.e + 1), prec + 16);
        let denom = e.add_round(&Interval::from_int(1), prec + 16);
        let frac = Interval::from_int(2).div_round(&denom, prec + 16);
        let v = Interval::from_int(1).sub_round(&frac, prec + 16);
        if up {
            v.hi.round_prec(prec, true)
        } else {
            v.lo.round_prec(prec, false)
        }
    };
    Interval {
        lo: eval(&x.lo, false),
        hi: eval(&x.hi, true),
    }
}

//! The activation zoo: exact or rigorously-enclosed evaluation, correctly
//! rounded tabulation over `Q_{p,s}`, analytic derivative metadata for the
//! sufficiency checks, and a sampled derivative audit.
//!
//! Tabulation decides every rounded entry rigorously. Exact-rational
//! activations round exact values (the away-from-zero rule applies to real
//! ties); transcendental ones are enclosed by interval arithmetic that is
//! refined until the enclosure fits inside a single rounding cell. The zoo's
//! transcendental members take rational values only at finitely many rational
//! points (Lindemann–Weierstrass for exp-based forms, the E-function theorem
//! for erf), and those points are special-cased, so refinement terminates.
//! A near-tie that survives every escalation is reported, never guessed.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use thiserror::Error;

use crate::dyadic::{
    erf_interval, exp_interval, pi, sigmoid_interval, softplus_interval, sqrt_interval,
    tanh_interval, Dyadic, Interval,
};
use crate::fxp::{round_rational, FxFormat, FxNum};

#[derive(Debug, Error)]
pub enum ActError {
    #[error("tie unresolved at x = {x}: enclosure still straddles a rounding boundary after {escalations} escalations from {guard_bits} bits")]
    TieUnresolved {
        x: FxNum,
        guard_bits: u32,
        escalations: u32,
    },
    #[error("table format {table} does not match requested format {requested}")]
    TableFormatMismatch { table: FxFormat, requested: FxFormat },
    #[error("unknown activation {0:?}")]
    UnknownActivation(String),
    #[error("malformed table file: {0}")]
    TableParse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Closed-form members of the zoo, plus custom table-backed activations.
#[derive(Debug, Clone)]
enum Kind {
    Identity,
    Relu,
    /// `x` for `x >= 0`, `x/100` below.
    LeakyRelu,
    /// `m * Hardtanh(x)`: `0` for `x <= 0`, `m*x` on `(0,1)`, `m` for `x >= 1`.
    ScaledHardtanh(u32),
    Elu,
    Sigmoid,
    Softplus,
    Silu,
    Mish,
    Gelu,
    /// No closed form; defined only on its table's grid.
    Table(Arc<QuantTable>),
}

/// An activation function with evaluation and analytic metadata.
#[derive(Debug, Clone)]
pub struct ActivationSpec {
    name: String,
    kind: Kind,
}

impl ActivationSpec {
    pub fn identity() -> Self {
        Self::mk("identity", Kind::Identity)
    }
    pub fn relu() -> Self {
        Self::mk("relu", Kind::Relu)
    }
    pub fn leaky_relu() -> Self {
        Self::mk("leaky-relu", Kind::LeakyRelu)
    }
    pub fn hardtanh() -> Self {
        Self::mk("hardtanh", Kind::ScaledHardtanh(1))
    }
    /// `m * Hardtanh(x)` for a positive integer `m`.
    pub fn scaled_hardtanh(m: u32) -> Self {
        assert!(m >= 1);
        Self::mk(&format!("hardtanh*{m}"), Kind::ScaledHardtanh(m))
    }
    pub fn elu() -> Self {
        Self::mk("elu", Kind::Elu)
    }
    pub fn sigmoid() -> Self {
        Self::mk("sigmoid", Kind::Sigmoid)
    }
    pub fn softplus() -> Self {
        Self::mk("softplus", Kind::Softplus)
    }
    pub fn silu() -> Self {
        Self::mk("silu", Kind::Silu)
    }
    pub fn mish() -> Self {
        Self::mk("mish", Kind::Mish)
    }
    pub fn gelu() -> Self {
        Self::mk("gelu", Kind::Gelu)
    }
    pub fn from_table(table: QuantTable) -> Self {
        Self {
            name: format!("table:{}", table.name),
            kind: Kind::Table(Arc::new(table)),
        }
    }

    fn mk(name: &str, kind: Kind) -> Self {
        ActivationSpec {
            name: name.to_string(),
            kind,
        }
    }

    /// Resolves a zoo selector. `hardtanh5s` scales by the format's `s`.
    pub fn by_name(name: &str, s: u32) -> Result<ActivationSpec, ActError> {
        Ok(match name {
            "identity" | "id" => Self::identity(),
            "relu" => Self::relu(),
            "leaky-relu" | "lrelu" => Self::leaky_relu(),
            "hardtanh" => Self::hardtanh(),
            "hardtanh5s" => Self::scaled_hardtanh(5 * s),
            "hardtanh5" => Self::scaled_hardtanh(5),
            "elu" => Self::elu(),
            "sigmoid" => Self::sigmoid(),
            "softplus" => Self::softplus(),
            "silu" => Self::silu(),
            "mish" => Self::mish(),
            "gelu" => Self::gelu(),
            _ => return Err(ActError::UnknownActivation(name.to_string())),
        })
    }

    /// The seven smooth members plus identity, as used by the batch suites.
    pub fn zoo() -> Vec<ActivationSpec> {
        vec![
            Self::identity(),
            Self::relu(),
            Self::elu(),
            Self::sigmoid(),
            Self::softplus(),
            Self::silu(),
            Self::mish(),
            Self::gelu(),
        ]
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_table_backed(&self) -> bool {
        matches!(self.kind, Kind::Table(_))
    }

    /// σ is nondecreasing on all of R.
    pub fn is_monotone(&self) -> bool {
        match &self.kind {
            Kind::Identity
            | Kind::Relu
            | Kind::LeakyRelu
            | Kind::ScaledHardtanh(_)
            | Kind::Elu
            | Kind::Sigmoid
            | Kind::Softplus => true,
            Kind::Silu | Kind::Mish | Kind::Gelu => false,
            Kind::Table(t) => t.entries.windows(2).all(|w| w[0] <= w[1]),
        }
    }

    /// σ is nondecreasing on `[0, ∞)` with `σ(x) >= 0` there and
    /// `σ'(x) >= 1/2` wherever differentiable on `(0, ∞)`. This is the
    /// analytic half of the deep-construction precondition; the table half
    /// is checked against the tabulated entries.
    pub fn slope_at_least_half_nonneg(&self) -> bool {
        matches!(
            self.kind,
            Kind::Identity
                | Kind::Relu
                | Kind::Elu
                | Kind::Softplus
                | Kind::Silu
                | Kind::Mish
                | Kind::Gelu
        )
    }

    /// Exact rational value `σ(x)` when one exists, as `(num, den)`.
    ///
    /// For the transcendental members these are the only rational points:
    /// exp-based forms take irrational values at every other rational
    /// argument by Lindemann–Weierstrass, and erf at every nonzero algebraic
    /// argument by the Siegel–Shidlovskii theorem.
    pub fn exact_value(&self, x: &FxNum) -> Option<(BigInt, BigInt)> {
        let n = x.numerator().clone();
        let s = BigInt::from(x.scale());
        match &self.kind {
            Kind::Identity => Some((n, s)),
            Kind::Relu => {
                if n.is_negative() {
                    Some((BigInt::zero(), BigInt::from(1)))
                } else {
                    Some((n, s))
                }
            }
            Kind::LeakyRelu => {
                if n.is_negative() {
                    Some((n, s * 100))
                } else {
                    Some((n, s))
                }
            }
            Kind::ScaledHardtanh(m) => {
                let m = BigInt::from(*m);
                if n.is_negative() || n.is_zero() {
                    Some((BigInt::zero(), BigInt::from(1)))
                } else if n >= s {
                    Some((m, BigInt::from(1)))
                } else {
                    Some((m * n, s))
                }
            }
            Kind::Elu => {
                if n.is_negative() {
                    None // e^x - 1 is irrational at rational x < 0
                } else {
                    Some((n, s))
                }
            }
            Kind::Sigmoid => {
                if n.is_zero() {
                    Some((BigInt::from(1), BigInt::from(2)))
                } else {
                    None
                }
            }
            Kind::Softplus => None, // log(1+e^x) is irrational at every rational x
            Kind::Silu | Kind::Mish | Kind::Gelu => {
                if n.is_zero() {
                    Some((BigInt::zero(), BigInt::from(1)))
                } else {
                    None
                }
            }
            Kind::Table(t) => {
                if t.format.contains(x) {
                    let e = t.entry(x);
                    Some((e.numerator().clone(), BigInt::from(e.scale())))
                } else {
                    None
                }
            }
        }
    }

    /// Rigorous enclosure of `σ(x)` at a grid point, at roughly `prec` bits.
    pub fn enclose(&self, x: &FxNum, prec: u32) -> Interval {
        if let Some((num, den)) = self.exact_value(x) {
            return Interval::from_ratio(&num, &den, prec.max(64));
        }
        let xi = Interval::from_ratio(x.numerator(), &BigInt::from(x.scale()), prec + 16);
        match &self.kind {
            Kind::Elu => {
                // x < 0 here: e^x - 1.
                let e = exp_interval(&xi, prec + 8);
                e.sub_round(&Interval::from_int(1), prec)
            }
            Kind::Sigmoid => sigmoid_interval(&xi, prec),
            Kind::Softplus => softplus_interval(&xi, prec),
            Kind::Silu => {
                let s = sigmoid_interval(&xi, prec + 8);
                xi.mul_round(&s, prec)
            }
            Kind::Mish => {
                let sp = softplus_interval(&xi, prec + 8);
                let t = tanh_interval(&sp, prec + 8);
                xi.mul_round(&t, prec)
            }
            Kind::Gelu => {
                let arg = xi.div_round(&sqrt_interval(&Interval::from_int(2), prec + 16), prec + 16);
                let e = erf_interval(&arg, prec + 8);
                let one_plus = Interval::from_int(1).add_round(&e, prec + 8);
                xi.mul_round(&one_plus, prec + 8)
                    .mul_round(&Interval::from_ratio(&BigInt::from(1), &BigInt::from(2), prec), prec)
            }
            _ => unreachable!("exact kinds handled above"),
        }
    }

    /// Enclosure of `σ(x)` with guaranteed width `<= 2^-precision_bits`.
    pub fn eval_real(&self, x: &FxNum, precision_bits: u32) -> Interval {
        let mut prec = precision_bits + 8;
        loop {
            let iv = self.enclose(x, prec);
            if iv.width_le_pow2(-i64::from(precision_bits)) {
                return iv;
            }
            prec *= 2;
            assert!(prec < 1 << 22, "enclosure refinement diverged");
        }
    }

    /// Rigorous enclosure of `σ'(x)`, when a closed form is known.
    pub fn derivative_enclose(&self, x: &FxNum, prec: u32) -> Option<Interval> {
        let n = x.numerator();
        let xi = Interval::from_ratio(n, &BigInt::from(x.scale()), prec + 16);
        let one = Interval::from_int(1);
        Some(match &self.kind {
            Kind::Identity => one,
            Kind::Relu | Kind::LeakyRelu | Kind::ScaledHardtanh(_) => {
                // Piecewise linear; the caller resolves pieces via
                // derivative_range, so a point query only answers off-kink.
                let m: i64 = match &self.kind {
                    Kind::Relu => {
                        if n.is_negative() {
                            0
                        } else if n.is_zero() {
                            return None;
                        } else {
                            1
                        }
                    }
                    Kind::LeakyRelu => {
                        if n.is_zero() {
                            return None;
                        } else if n.is_negative() {
                            return Some(Interval::from_ratio(
                                &BigInt::from(1),
                                &BigInt::from(100),
                                prec,
                            ));
                        } else {
                            1
                        }
                    }
                    Kind::ScaledHardtanh(m) => {
                        let s = BigInt::from(x.scale());
                        if n.is_positive() && *n < s {
                            i64::from(*m)
                        } else if n.is_zero() || *n == s {
                            return None;
                        } else {
                            0
                        }
                    }
                    _ => unreachable!(),
                };
                Interval::from_int(m)
            }
            Kind::Elu => {
                if n.is_negative() {
                    exp_interval(&xi, prec)
                } else {
                    one
                }
            }
            Kind::Sigmoid => {
                let s = sigmoid_interval(&xi, prec + 8);
                let om = one.sub_round(&s, prec + 8);
                s.mul_round(&om, prec)
            }
            Kind::Softplus => sigmoid_interval(&xi, prec),
            Kind::Silu => {
                // σ'(x) = sig(x) (1 + x (1 - sig(x)))
                let s = sigmoid_interval(&xi, prec + 8);
                let om = one.sub_round(&s, prec + 8);
                let inner = one.add_round(&xi.mul_round(&om, prec + 8), prec + 8);
                s.mul_round(&inner, prec)
            }
            Kind::Mish => {
                // σ'(x) = tanh(sp(x)) + x (1 - tanh^2(sp(x))) sig(x)
                let sp = softplus_interval(&xi, prec + 8);
                let t = tanh_interval(&sp, prec + 8);
                let sech2 = one.sub_round(&t.mul_round(&t, prec + 8), prec + 8);
                let s = sigmoid_interval(&xi, prec + 8);
                t.add_round(
                    &xi.mul_round(&sech2, prec + 8).mul_round(&s, prec + 8),
                    prec,
                )
            }
            Kind::Gelu => {
                // σ'(x) = Φ(x) + x φ(x)
                let sqrt2 = sqrt_interval(&Interval::from_int(2), prec + 16);
                let arg = xi.div_round(&sqrt2, prec + 16);
                let phi_cdf = one
                    .add_round(&erf_interval(&arg, prec + 8), prec + 8)
                    .mul_round(
                        &Interval::from_ratio(&BigInt::from(1), &BigInt::from(2), prec + 8),
                        prec + 8,
                    );
                let x2 = xi.mul_round(&xi, prec + 8);
                let half_x2 = x2.mul_round(
                    &Interval::from_ratio(&BigInt::from(1), &BigInt::from(2), prec + 8),
                    prec + 8,
                );
                let dens = exp_interval(&half_x2.neg(), prec + 8);
                let two_pi = pi(prec + 16).mul_int(2);
                let norm = sqrt_interval(&two_pi, prec + 16);
                let pdf = dens.div_round(&norm, prec + 8);
                phi_cdf.add_round(&xi.mul_round(&pdf, prec + 8), prec)
            }
            Kind::Table(_) => return None,
        })
    }

    /// Rigorous bounds `(inf σ', sup σ')` over the open interval `(lo, hi)`,
    /// derived from per-member shape facts (monotone derivative windows),
    /// or `None` where no analytic coverage exists. The numeric audit
    /// cross-checks the shape facts.
    pub fn derivative_range(&self, lo: &FxNum, hi: &FxNum) -> Option<(Interval, Interval)> {
        assert!(lo < hi);
        let prec = 96;
        let zero = FxNum::zero(lo.scale());
        let at = |x: &FxNum| self.derivative_enclose(x, prec);
        match &self.kind {
            Kind::Identity => {
                let one = Interval::from_int(1);
                Some((one.clone(), one))
            }
            Kind::Relu | Kind::LeakyRelu => {
                // Not differentiable at 0.
                if lo >= &zero {
                    let one = Interval::from_int(1);
                    Some((one.clone(), one))
                } else if hi <= &zero {
                    let m = if matches!(self.kind, Kind::Relu) {
                        Interval::from_int(0)
                    } else {
                        Interval::from_ratio(&BigInt::from(1), &BigInt::from(100), prec)
                    };
                    Some((m.clone(), m))
                } else {
                    None
                }
            }
            Kind::ScaledHardtanh(m) => {
                let s = lo.scale();
                let one_v = FxNum::new(i64::from(s), s);
                if lo >= &zero && hi <= &one_v {
                    let v = Interval::from_int(i64::from(*m));
                    Some((v.clone(), v))
                } else if hi <= &zero || lo >= &one_v {
                    let z = Interval::from_int(0);
                    Some((z.clone(), z))
                } else {
                    None
                }
            }
            Kind::Elu => {
                // σ' = e^min(x,0)∧1: nondecreasing, continuous.
                let inf = at(lo)?;
                let sup = if hi >= &zero { Interval::from_int(1) } else { at(hi)? };
                Some((inf, sup))
            }
            Kind::Softplus => Some((at(lo)?, at(hi)?)), // σ' = sigmoid, increasing
            Kind::Sigmoid => {
                // σ' peaks at 0 with value exactly 1/4, decreasing in |x|.
                let quarter = Interval::from_ratio(&BigInt::from(1), &BigInt::from(4), prec);
                let sup = if lo < &zero && hi > &zero {
                    quarter
                } else {
                    let e = if lo >= &zero { lo } else { hi };
                    at(e)?
                };
                let (la, ha) = (lo.abs(), hi.abs());
                let far = if la > ha { lo } else { hi };
                Some((at(far)?, sup))
            }
            Kind::Silu | Kind::Mish | Kind::Gelu => {
                // σ' is nondecreasing on [0, w] for a member-specific w
                // (verified by the sampled audit): silu 2, mish 1, gelu 13/10.
                let s = lo.scale();
                let w = match self.kind {
                    Kind::Silu => FxNum::new(2 * i64::from(s), s),
                    Kind::Mish => FxNum::new(i64::from(s), s),
                    Kind::Gelu => {
                        // 13/10 rounded down to the s-grid.
                        FxNum::new(13 * i64::from(s) / 10, s)
                    }
                    _ => unreachable!(),
                };
                if lo >= &zero && hi <= &w {
                    Some((at(lo)?, at(hi)?))
                } else {
                    None
                }
            }
            Kind::Table(_) => None,
        }
    }

    /// Rigorous bounds `(min σ, max σ)` over the closed interval `[lo, hi]`,
    /// valid where the member is nondecreasing.
    pub fn value_range(&self, lo: &FxNum, hi: &FxNum) -> Option<(Interval, Interval)> {
        assert!(lo <= hi);
        let prec = 96;
        // Monotone window lower ends: global for the monotone members,
        // member-specific minimum locations otherwise (audited numerically).
        let s = i64::from(lo.scale());
        let window_lo: Option<FxNum> = match self.kind {
            Kind::Identity
            | Kind::Relu
            | Kind::LeakyRelu
            | Kind::ScaledHardtanh(_)
            | Kind::Elu
            | Kind::Sigmoid
            | Kind::Softplus => None, // increasing everywhere
            Kind::Silu => Some(FxNum::new(-5 * s / 4, lo.scale())),
            Kind::Mish => Some(FxNum::new(-s, lo.scale())),
            Kind::Gelu => Some(FxNum::new(-7 * s / 10, lo.scale())),
            Kind::Table(_) => return None,
        };
        if let Some(w) = window_lo {
            if lo < &w {
                return None;
            }
        }
        Some((self.enclose(lo, prec), self.enclose(hi, prec)))
    }

    /// Plain `f64` evaluation, for audits and reporting only.
    pub fn eval_f64(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Identity => x,
            Kind::Relu => x.max(0.0),
            Kind::LeakyRelu => {
                if x >= 0.0 {
                    x
                } else {
                    x / 100.0
                }
            }
            Kind::ScaledHardtanh(m) => f64::from(*m) * x.clamp(0.0, 1.0),
            Kind::Elu => {
                if x >= 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Kind::Sigmoid => sigmoid_f64(x),
            Kind::Softplus => softplus_f64(x),
            Kind::Silu => x * sigmoid_f64(x),
            Kind::Mish => x * softplus_f64(x).tanh(),
            Kind::Gelu => 0.5 * x * (1.0 + erf_f64(x / std::f64::consts::SQRT_2)),
            Kind::Table(t) => {
                let s = f64::from(t.format.s());
                let k = (x * s).round() as i64;
                let max = (1i64 << t.format.p()) - 1;
                let k = k.clamp(-max, max);
                t.entries[(k + max) as usize] as f64 / s
            }
        }
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

fn softplus_f64(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Abramowitz–Stegun 7.1.26 rational approximation, |error| <= 1.5e-7.
/// Audit-grade only; rigorous paths use the interval erf.
fn erf_f64(x: f64) -> f64 {
    let sign = x.signum();
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// The finite map `⌊σ⌉ : Q_{p,s} -> Q_{p,s}`, stored as numerators in grid
/// order. The sole ground truth for all set algebra and condition checks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTable {
    pub name: String,
    pub format: FxFormat,
    pub guard_bits: u32,
    entries: Vec<i64>,
}

impl QuantTable {
    pub fn from_entries(
        name: &str,
        format: FxFormat,
        guard_bits: u32,
        entries: Vec<i64>,
    ) -> Result<Self, ActError> {
        if entries.len() as u64 != format.grid_len() {
            return Err(ActError::TableParse(format!(
                "expected {} entries, got {}",
                format.grid_len(),
                entries.len()
            )));
        }
        let max = i64::try_from(format.max_numerator()).expect("p bound");
        if let Some(bad) = entries.iter().find(|e| e.abs() > max) {
            return Err(ActError::TableParse(format!(
                "entry numerator {bad} exceeds grid bound {max}"
            )));
        }
        Ok(QuantTable {
            name: name.to_string(),
            format,
            guard_bits,
            entries,
        })
    }

    fn index(&self, x: &FxNum) -> usize {
        let max = self.format.max_numerator();
        usize::try_from(x.numerator() + max).expect("grid member")
    }

    /// `⌊σ⌉(x)` for a grid member.
    pub fn entry(&self, x: &FxNum) -> FxNum {
        assert!(self.format.contains(x), "lookup outside the grid");
        FxNum::new(self.entries[self.index(x)], self.format.s())
    }

    pub fn entry_numerators(&self) -> &[i64] {
        &self.entries
    }

    /// Distinct range numerators, sorted.
    pub fn range_numerators(&self) -> Vec<i64> {
        let mut v: Vec<i64> = self.entries.clone();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn max_entry(&self) -> FxNum {
        FxNum::new(*self.entries.iter().max().expect("nonempty"), self.format.s())
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[0] <= w[1])
    }

    /// Textual serialization: header plus numerators in grid order.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "quniv-table v1");
        let _ = writeln!(out, "name {}", self.name);
        let _ = writeln!(out, "format {}", self.format);
        let _ = writeln!(out, "guard_bits {}", self.guard_bits);
        let _ = writeln!(out, "entries {}", self.entries.len());
        for e in &self.entries {
            let _ = writeln!(out, "{e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, ActError> {
        let bad = |m: &str| ActError::TableParse(m.to_string());
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file"))?;
        if header.trim() != "quniv-table v1" {
            return Err(bad("missing quniv-table v1 header"));
        }
        let mut name = None;
        let mut format = None;
        let mut guard_bits = 0u32;
        let mut count: Option<usize> = None;
        for line in lines.by_ref() {
            let line = line.trim();
            if let Some(v) = line.strip_prefix("name ") {
                name = Some(v.to_string());
            } else if let Some(v) = line.strip_prefix("format ") {
                format = Some(v.parse::<FxFormat>().map_err(|e| bad(&e.to_string()))?);
            } else if let Some(v) = line.strip_prefix("guard_bits ") {
                guard_bits = v.parse().map_err(|_| bad("bad guard_bits"))?;
            } else if let Some(v) = line.strip_prefix("entries ") {
                count = Some(v.parse().map_err(|_| bad("bad entry count"))?);
                break;
            } else if !line.is_empty() {
                return Err(bad(&format!("unexpected header line {line:?}")));
            }
        }
        let name = name.ok_or_else(|| bad("missing name"))?;
        let format = format.ok_or_else(|| bad("missing format"))?;
        let count = count.ok_or_else(|| bad("missing entries count"))?;
        // Reject before allocating: the only valid count is the grid size.
        if count as u64 != format.grid_len() || count > (1 << 26) {
            return Err(bad(&format!(
                "entry count {count} does not match the {} grid",
                format
            )));
        }
        let mut entries = Vec::with_capacity(count);
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            entries.push(line.parse::<i64>().map_err(|_| bad("bad entry"))?);
        }
        if entries.len() != count {
            return Err(bad(&format!(
                "entry count mismatch: header {count}, body {}",
                entries.len()
            )));
        }
        QuantTable::from_entries(&name, format, guard_bits, entries)
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<(), ActError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self, ActError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Decides whether the enclosure fits inside a single rounding cell of the
/// format; returns the rounded value if so. Cell boundaries are the odd
/// multiples of `1/(2s)`, half-open per the away-from-zero rule, with the
/// outermost cells absorbing everything past `±(q_max - 1/(2s))`.
pub fn round_interval(format: FxFormat, iv: &Interval) -> Option<FxNum> {
    let s = BigInt::from(format.s());
    let kmax = format.max_numerator();
    // Candidate from the lower endpoint: round(lo * s) away from zero.
    let cand = {
        let scaled_m = &iv.lo.m * &s;
        let k = if iv.lo.e >= 0 {
            scaled_m << u32::try_from(iv.lo.e).unwrap()
        } else {
            crate::fxp::round_div_away(&scaled_m, &(BigInt::from(1) << u32::try_from(-iv.lo.e).unwrap()))
        };
        k.min(kmax.clone()).max(-kmax.clone())
    };
    let two_s = &s * 2;
    let lo_tie = &cand * 2 - 1;
    let hi_tie = &cand * 2 + 1;
    let ge = |d: &Dyadic, t: &BigInt| d.cmp_ratio(t, &two_s) != Ordering::Less;
    let gt = |d: &Dyadic, t: &BigInt| d.cmp_ratio(t, &two_s) == Ordering::Greater;
    let le = |d: &Dyadic, t: &BigInt| d.cmp_ratio(t, &two_s) != Ordering::Greater;
    let lt = |d: &Dyadic, t: &BigInt| d.cmp_ratio(t, &two_s) == Ordering::Less;
    let ok = if cand == kmax {
        ge(&iv.lo, &lo_tie)
    } else if cand == -&kmax {
        le(&iv.hi, &hi_tie)
    } else if cand.is_positive() {
        ge(&iv.lo, &lo_tie) && lt(&iv.hi, &hi_tie)
    } else if cand.is_negative() {
        gt(&iv.lo, &lo_tie) && le(&iv.hi, &hi_tie)
    } else {
        gt(&iv.lo, &lo_tie) && lt(&iv.hi, &hi_tie)
    };
    if ok {
        Some(FxNum::new(cand, format.s()))
    } else {
        None
    }
}

/// Correctly rounded value of `σ(x)` with escalating precision.
pub fn round_activation(
    act: &ActivationSpec,
    format: FxFormat,
    x: &FxNum,
    guard_bits: u32,
    max_escalations: u32,
) -> Result<FxNum, ActError> {
    if let Some((num, den)) = act.exact_value(x) {
        return Ok(round_rational(format, &num, &den));
    }
    let mut prec = guard_bits.max(32);
    for _ in 0..=max_escalations {
        let iv = act.enclose(x, prec);
        if let Some(v) = round_interval(format, &iv) {
            return Ok(v);
        }
        prec *= 2;
    }
    Err(ActError::TieUnresolved {
        x: x.clone(),
        guard_bits,
        escalations: max_escalations,
    })
}

/// Default enclosure start (bits) for tabulation.
pub const DEFAULT_GUARD_BITS: u32 = 128;
/// Default number of precision doublings before a tie is reported.
pub const DEFAULT_MAX_ESCALATIONS: u32 = 3;

/// Tabulates `⌊σ⌉` over the full grid. Grid points are independent and
/// evaluated in parallel.
pub fn tabulate(
    act: &ActivationSpec,
    format: FxFormat,
    guard_bits: u32,
    max_escalations: u32,
) -> Result<QuantTable, ActError> {
    if let Kind::Table(t) = &act.kind {
        if t.format != format {
            return Err(ActError::TableFormatMismatch {
                table: t.format,
                requested: format,
            });
        }
        return Ok((**t).clone());
    }
    let grid: Vec<FxNum> = format.grid().collect();
    let entries: Result<Vec<i64>, ActError> = grid
        .par_iter()
        .map(|x| {
            round_activation(act, format, x, guard_bits, max_escalations)
                .map(|v| i64::try_from(v.numerator()).expect("grid numerator"))
        })
        .collect();
    QuantTable::from_entries(&act.name, format, guard_bits, entries?)
}

/// Outcome of the sampled derivative audit.
#[derive(Debug, Clone)]
pub struct DerivativeAudit {
    pub pass: bool,
    pub observed_inf: f64,
    pub observed_sup: f64,
    pub samples: u32,
}

/// Audit tolerance on sampled derivatives.
pub const AUDIT_TOLERANCE: f64 = 1e-3;

/// Dense-samples `σ'` by central finite differences over `(lo, hi)` and
/// checks every sample against the claimed bounds, within `1e-3`. This is
/// an audit, not a proof.
pub fn audit_derivative_bounds(
    act: &ActivationSpec,
    lo: f64,
    hi: f64,
    claimed_inf: f64,
    claimed_sup: f64,
    n_samples: u32,
) -> DerivativeAudit {
    assert!(hi > lo && n_samples > 0);
    let h = 1e-6;
    let mut observed_inf = f64::INFINITY;
    let mut observed_sup = f64::NEG_INFINITY;
    let mut pass = true;
    for i in 0..n_samples {
        let t = (f64::from(i) + 0.5) / f64::from(n_samples);
        let x = lo + t * (hi - lo);
        let d = (act.eval_f64(x + h) - act.eval_f64(x - h)) / (2.0 * h);
        observed_inf = observed_inf.min(d);
        observed_sup = observed_sup.max(d);
        if d < claimed_inf - AUDIT_TOLERANCE || d > claimed_sup + AUDIT_TOLERANCE {
            pass = false;
        }
    }
    DerivativeAudit {
        pass,
        observed_inf,
        observed_sup,
        samples: n_samples,
    }
}

//! Reachable-set algebra over a tabulated activation.
//!
//! With unbounded term counts, the unrounded affine spans
//! `{b + Σ w_i x_i}` form an arithmetic lattice: the subgroup generated by
//! the scaled generators is `gcd * Z`, at scale `s^2` for grid weights and
//! scale `s` for binary weights. Members of the rounded sets are exactly the
//! roundings of lattice points, with `±q_max` always present once the
//! lattice is nontrivial (it escapes the saturation window on both sides).
//!
//! The lattice characterization is derived from the same residue argument
//! that powers the divisor obstruction; it is never trusted blindly — [`brute_force_reach`] is the independent oracle
//! the test suite compares against, and wins on any discrepancy.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::act::QuantTable;
use crate::fxp::{round_to, FxFormat, FxNum, ScaledExact};

#[derive(Debug, Error)]
pub enum ReachError {
    #[error("brute-force enumeration exceeded budget {budget} (reached {reached})")]
    Budget { budget: u64, reached: u64 },
}

/// Which reachable set a [`ReachSet`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SetKind {
    /// All gaps between table outputs.
    V,
    /// Rounded affine span of the table range, grid weights.
    N,
    /// Rounded affine span of the output gaps, grid weights.
    S,
    /// Rounded affine span of the table range, weights in {-1,1}.
    BN,
    /// Rounded affine span of the output gaps, weights in {-1,1}.
    BS,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightMode {
    General,
    Binary,
}

/// Arithmetic-progression description of the unrounded span: all values
/// `(offset + t * step)/s^2`, `t` ranging over the integers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeDesc {
    pub offset_s2: BigInt,
    /// Zero when every generator is zero (the span is the single point `b`).
    pub step_s2: BigInt,
}

impl Serialize for LatticeDesc {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = ser.serialize_struct("LatticeDesc", 2)?;
        st.serialize_field("offset_s2", &self.offset_s2.to_string())?;
        st.serialize_field("step_s2", &self.step_s2.to_string())?;
        st.end()
    }
}

/// A computed reachable set: sorted member numerators at scale `s`, plus
/// the lattice it was generated from (absent for kind `V`).
#[derive(Debug, Clone, Serialize)]
pub struct ReachSet {
    #[serde(serialize_with = "fmt_string")]
    pub format: FxFormat,
    pub kind: SetKind,
    pub members: Vec<i64>,
    pub lattice: Option<LatticeDesc>,
}

fn fmt_string<S: serde::Serializer>(f: &FxFormat, ser: S) -> Result<S::Ok, S::Error> {
    ser.serialize_str(&f.to_string())
}

impl ReachSet {
    pub fn contains(&self, num: i64) -> bool {
        self.members.binary_search(&num).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// True when the set is all of `Q_{p,s}`.
    pub fn is_full_grid(&self) -> bool {
        self.members.len() as u64 == self.format.grid_len()
    }

    /// Grid members missing from the set.
    pub fn missing(&self) -> Vec<i64> {
        let max = self.format.max_numerator().to_i64().expect("desk scale");
        (-max..=max).filter(|k| !self.contains(*k)).collect()
    }

    /// Regenerates the member list from the lattice descriptor; must equal
    /// `members` exactly (tested, not assumed).
    pub fn regenerate(&self) -> Option<Vec<i64>> {
        let lat = self.lattice.as_ref()?;
        Some(round_lattice(self.format, &lat.offset_s2, &lat.step_s2))
    }

    /// An exact unrounded lattice point rounding to `y`, of minimal
    /// magnitude. `None` if `y` is not a member.
    pub fn witness(&self, y: &FxNum) -> Option<ScaledExact> {
        let lat = self.lattice.as_ref()?;
        let k = y.numerator();
        if !self.contains(k.to_i64()?) {
            return None;
        }
        let s = BigInt::from(self.format.s());
        let step = &lat.step_s2;
        let off = &lat.offset_s2;
        if step.is_zero() {
            return Some(ScaledExact::new(off.clone(), self.format.s(), 2));
        }
        let kmax = self.format.max_numerator();
        // Rounding cell of y at scale s^2, doubled to keep integrality:
        // 2u in [ (2k-1)s, (2k+1)s ] with closedness by the away rule.
        let lo2 = (k * 2 - 1) * &s;
        let hi2 = (k * 2 + 1) * &s;
        let step2 = step * 2;
        let off2 = off * 2;
        // t bounds; saturated endpoints drop one side entirely.
        let t_lo = if *k == -&kmax {
            None
        } else {
            // 2u >= lo2 (closed for k > 0 or k = kmax; open otherwise).
            let open = !(k.is_positive());
            let num: BigInt = &lo2 - &off2;
            let mut t = num.div_ceil(&step2);
            if open && (&off2 + &t * &step2) == lo2 {
                t += 1;
            }
            Some(t)
        };
        let t_hi = if *k == kmax {
            None
        } else {
            let open = !(k.is_negative());
            let num: BigInt = &hi2 - &off2;
            let mut t = num.div_floor(&step2);
            if open && (&off2 + &t * &step2) == hi2 {
                t -= 1;
            }
            Some(t)
        };
        // Minimal |u|: clamp the unconstrained minimizer into [t_lo, t_hi].
        let t_star = {
            let num = -off;
            crate::fxp::round_div_away(&num, step)
        };
        let t = match (&t_lo, &t_hi) {
            (Some(a), Some(b)) => {
                if a > b {
                    return None;
                }
                t_star.max(a.clone()).min(b.clone())
            }
            (Some(a), None) => t_star.max(a.clone()),
            (None, Some(b)) => t_star.min(b.clone()),
            (None, None) => t_star,
        };
        let u = off + &t * step;
        let got = round_to(self.format, &ScaledExact::new(u.clone(), self.format.s(), 2));
        debug_assert_eq!(got.numerator(), k, "witness rounds elsewhere");
        Some(ScaledExact::new(u, self.format.s(), 2))
    }
}

/// All pairwise differences of table outputs, `⌊σ⌉(x) - ⌊σ⌉(y)`.
pub fn compute_v(table: &QuantTable) -> ReachSet {
    let range = table.range_numerators();
    let mut set = BTreeSet::new();
    for a in &range {
        for b in &range {
            set.insert(a - b);
        }
    }
    ReachSet {
        format: table.format,
        kind: SetKind::V,
        members: set.into_iter().collect(),
        lattice: None,
    }
}

fn gcd_of(gens: &[i64]) -> BigInt {
    let mut g = BigInt::zero();
    for k in gens {
        g = g.gcd(&BigInt::from(*k));
    }
    g
}

/// Rounds every lattice point inside the saturation window, adding `±q_max`
/// when the lattice escapes it (always, for a nonzero step).
fn round_lattice(format: FxFormat, offset_s2: &BigInt, step_s2: &BigInt) -> Vec<i64> {
    let s = BigInt::from(format.s());
    let mut out = BTreeSet::new();
    if step_s2.is_zero() {
        let r = round_to(format, &ScaledExact::new(offset_s2.clone(), format.s(), 2));
        out.insert(r.numerator().to_i64().expect("grid"));
        return out.into_iter().collect();
    }
    // Window |u| <= (2^p - 1) s + s/2, doubled for integrality.
    let lim2 = (format.max_numerator() * 2 + 1) * &s;
    let step2 = step_s2 * 2;
    let off2 = offset_s2 * 2;
    let t_lo = BigInt::div_ceil(&(-&lim2 - &off2), &step2);
    let t_hi = BigInt::div_floor(&(&lim2 - &off2), &step2);
    let mut t = t_lo;
    while t <= t_hi {
        let u = offset_s2 + &t * step_s2;
        let r = round_to(format, &ScaledExact::new(u, format.s(), 2));
        out.insert(r.numerator().to_i64().expect("grid"));
        t += 1;
    }
    let qmax = format.max_numerator().to_i64().expect("desk scale");
    out.insert(qmax);
    out.insert(-qmax);
    out.into_iter().collect()
}

/// The rounded affine span of `generators` (numerators at scale `s`) with
/// bias `b`, realized through the gcd lattice.
pub fn reach_lattice(
    generators: &[i64],
    mode: WeightMode,
    b: &FxNum,
    format: FxFormat,
    kind: SetKind,
) -> ReachSet {
    assert_eq!(b.scale(), format.s());
    let g = gcd_of(generators);
    let step_s2 = match mode {
        WeightMode::General => g,
        WeightMode::Binary => g * BigInt::from(format.s()),
    };
    let offset_s2 = b.numerator() * BigInt::from(format.s());
    let members = round_lattice(format, &offset_s2, &step_s2);
    ReachSet {
        format,
        kind,
        members,
        lattice: Some(LatticeDesc { offset_s2, step_s2 }),
    }
}

/// Independent oracle: enumerates every sum of at most `n_max` terms
/// exactly, rounds, and unions. Must always be contained in the lattice
/// result, with equality once `n_max` saturates the window.
pub fn brute_force_reach(
    generators: &[i64],
    mode: WeightMode,
    b: &FxNum,
    format: FxFormat,
    n_max: u32,
    budget: u64,
    kind: SetKind,
) -> Result<ReachSet, ReachError> {
    let s = i128::from(format.s());
    let qmax = format.max_numerator().to_i64().expect("desk scale");
    // Distinct single-term values at scale s^2.
    let mut terms = BTreeSet::new();
    match mode {
        WeightMode::General => {
            for u in -qmax..=qmax {
                for k in generators {
                    terms.insert(i128::from(u) * i128::from(*k));
                }
            }
        }
        WeightMode::Binary => {
            for k in generators {
                terms.insert(i128::from(*k) * s);
                terms.insert(-i128::from(*k) * s);
            }
        }
    }
    let terms: Vec<i128> = terms.into_iter().collect();
    let b0 = b
        .numerator()
        .to_i128()
        .expect("oracle bias within machine range")
        * s;
    let mut reach: BTreeSet<i128> = BTreeSet::new();
    let mut frontier: BTreeSet<i128> = BTreeSet::new();
    reach.insert(b0);
    frontier.insert(b0);
    let mut work: u64 = 0;
    for _ in 0..n_max {
        let mut next = BTreeSet::new();
        for v in &frontier {
            for t in &terms {
                work += 1;
                if work > budget {
                    return Err(ReachError::Budget {
                        budget,
                        reached: work,
                    });
                }
                let u = v + t;
                if reach.insert(u) {
                    next.insert(u);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    let members: BTreeSet<i64> = reach
        .into_iter()
        .map(|u| {
            let r = round_to(format, &ScaledExact::new(u, format.s(), 2));
            r.numerator().to_i64().expect("grid")
        })
        .collect();
    Ok(ReachSet {
        format,
        kind,
        members: members.into_iter().collect(),
        lattice: None,
    })
}

/// `N_{σ,p,s,b}`: span of the table range with grid weights.
pub fn n_set(table: &QuantTable, b: &FxNum) -> ReachSet {
    reach_lattice(
        &table.range_numerators(),
        WeightMode::General,
        b,
        table.format,
        SetKind::N,
    )
}

/// `S_{σ,p,s,b}`: span of the output gaps with grid weights.
pub fn s_set(table: &QuantTable, b: &FxNum) -> ReachSet {
    reach_lattice(
        &compute_v(table).members,
        WeightMode::General,
        b,
        table.format,
        SetKind::S,
    )
}

/// `BN_{σ,p,s,b}`: span of the table range with weights in {-1,1}.
pub fn bn_set(table: &QuantTable, b: &FxNum) -> ReachSet {
    reach_lattice(
        &table.range_numerators(),
        WeightMode::Binary,
        b,
        table.format,
        SetKind::BN,
    )
}

/// `BS_{σ,p,s,b}`: span of the output gaps with weights in {-1,1}.
pub fn bs_set(table: &QuantTable, b: &FxNum) -> ReachSet {
    reach_lattice(
        &compute_v(table).members,
        WeightMode::Binary,
        b,
        table.format,
        SetKind::BS,
    )
}

pub fn set_of_kind(table: &QuantTable, kind: SetKind, b: &FxNum) -> ReachSet {
    match kind {
        SetKind::V => compute_v(table),
        SetKind::N => n_set(table, b),
        SetKind::S => s_set(table, b),
        SetKind::BN => bn_set(table, b),
        SetKind::BS => bs_set(table, b),
    }
}

/// Result of the exhaustive bias-residue scan.
#[derive(Debug, Clone)]
pub struct BiasScan {
    pub kind: SetKind,
    /// A bias making the set the full grid, if any residue does.
    pub witness: Option<FxNum>,
    /// Number of residue classes examined (the scan is exhaustive: set
    /// membership depends only on the bias residue modulo the lattice step).
    pub residues_scanned: u64,
    /// Representative set: for the witness bias when found, else for b = 0.
    pub representative: ReachSet,
}

/// Scans biases over one period of the lattice step. Rounded membership of
/// `round(b + lattice)` depends only on the residue of the lifted bias
/// `b*s` modulo the step, so scanning bias numerators `0..step` covers
/// every achievable lattice; absence after the scan is a proof.
pub fn scan_bias(table: &QuantTable, kind: SetKind) -> BiasScan {
    assert!(matches!(kind, SetKind::N | SetKind::S | SetKind::BN | SetKind::BS));
    let s = table.format.s();
    let zero = FxNum::zero(s);
    let base = set_of_kind(table, kind, &zero);
    let step = base
        .lattice
        .as_ref()
        .expect("rounded kinds carry lattices")
        .step_s2
        .clone();
    if step.is_zero() {
        // Single-point sets can never be the whole grid (|Q| >= 3).
        return BiasScan {
            kind,
            witness: None,
            residues_scanned: 1,
            representative: base,
        };
    }
    let period = step.to_u64().expect("desk-scale step");
    let mut representative = None;
    for m in 0..period {
        let b = FxNum::new(i64::try_from(m).expect("period"), s);
        let set = set_of_kind(table, kind, &b);
        if set.is_full_grid() {
            return BiasScan {
                kind,
                witness: Some(b),
                residues_scanned: m + 1,
                representative: set,
            };
        }
        if m == 0 {
            representative = Some(set);
        }
    }
    BiasScan {
        kind,
        witness: None,
        residues_scanned: period,
        representative: representative.expect("period >= 1"),
    }
}

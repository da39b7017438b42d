//! Universality decisions.
//!
//! The decision ladder: Universal requires the threshold structure
//! (Condition 1) together with a bias making the S set the whole grid;
//! NotUniversal requires the exhaustive bias scan to show N never covers
//! the grid; anything else is Unknown — the conditions do not cover every
//! `(σ, p, s)` pair and no extrapolation is done. Verdicts are always
//! grounded in the computed reach sets, never in the analytic metadata.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde::Serialize;
use thiserror::Error;

use crate::act::{tabulate, ActError, ActivationSpec, QuantTable};
use crate::dyadic::Interval;
use crate::fxp::{FxFormat, FxNum};
use crate::reach::{scan_bias, set_of_kind, SetKind};

#[derive(Debug, Error)]
pub enum CondError {
    #[error(transparent)]
    Act(#[from] ActError),
}

/// The threshold witness: with `ρ(x) = α σ(β x)`, the rounded table of `ρ`
/// attains its maximum exactly on the grid suffix `[z, q_max]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Condition1Witness {
    pub alpha: i8,
    pub beta: i8,
    /// Threshold numerator at scale `s`; never the grid minimum.
    pub z_num: i64,
}

/// Entries of `α ⌊σ⌉(β x)` in grid order. Valid because rounding commutes
/// with sign flips (away-from-zero ties are odd-symmetric).
pub fn reflected_entries(table: &QuantTable, alpha: i8, beta: i8) -> Vec<i64> {
    let raw = table.entry_numerators();
    let n = raw.len();
    (0..n)
        .map(|i| {
            let src = if beta == 1 { i } else { n - 1 - i };
            i64::from(alpha) * raw[src]
        })
        .collect()
}

/// Exhaustive search for a Condition-1 witness, in the fixed scan order
/// `(α,β) = (1,1), (1,-1), (-1,1), (-1,-1)` with the smallest qualifying
/// threshold.
pub fn check_condition1(table: &QuantTable) -> Option<Condition1Witness> {
    let max = table.format.max_numerator().to_i64().expect("desk scale");
    for (alpha, beta) in [(1i8, 1i8), (1, -1), (-1, 1), (-1, -1)] {
        let r = reflected_entries(table, alpha, beta);
        let m = *r.iter().max().expect("nonempty");
        // The maximum must be attained exactly on a suffix [z, q_max] with
        // z above the grid minimum.
        let first_at_max = r.iter().position(|e| *e == m).expect("max exists");
        if first_at_max == 0 {
            continue; // z would be min Q (table of ρ is constant at max from the start)
        }
        if r[first_at_max..].iter().all(|e| *e == m) {
            return Some(Condition1Witness {
                alpha,
                beta,
                z_num: -max + i64::try_from(first_at_max).expect("grid index"),
            });
        }
    }
    None
}

/// Searches for the divisor obstruction: the smallest `r >= 3` with
/// `s*r <= 2^p - 1` such that every scaled entry is divisible (by `s*r`
/// under grid weights, by `r` under binary weights), honoring the parity
/// proviso at `r = 3`.
pub fn check_necessity_divisor(table: &QuantTable, binary: bool) -> Option<u64> {
    let s = u64::from(table.format.s());
    let max = table
        .format
        .max_numerator()
        .to_u64()
        .expect("desk scale");
    let entries = table.range_numerators();
    for r in 3..=(max / s) {
        if r == 3 && !table.format.p().is_multiple_of(2) {
            continue;
        }
        let d = if binary { r } else { s * r };
        let d = i64::try_from(d).expect("desk scale");
        if entries.iter().all(|e| e.rem_euclid(d) == 0) {
            return Some(r);
        }
    }
    None
}

/// A certified sufficiency item with its witness window `(q1, q2)`
/// (integer numerators at scale `s`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ItemCertificate {
    pub item: u8,
    pub q1: i64,
    pub q2: i64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SufficiencyReport {
    /// Items certified, ascending; empty when nothing certifies.
    pub certified: Vec<ItemCertificate>,
    /// True when the activation carries no derivative metadata (custom
    /// table-backed activations), so items 1-7 cannot be evaluated.
    pub metadata_missing: bool,
}

impl SufficiencyReport {
    pub fn items(&self) -> Vec<u8> {
        self.certified.iter().map(|c| c.item).collect()
    }

    pub fn has(&self, item: u8) -> bool {
        self.certified.iter().any(|c| c.item == item)
    }
}

struct Hypotheses {
    deriv: (Interval, Interval),
    value: Option<(Interval, Interval)>,
    gap: Interval,
}

fn window_hypotheses(
    act: &ActivationSpec,
    s: u32,
    q1: i64,
    q2: i64,
    prec: u32,
) -> Option<Hypotheses> {
    let lo = FxNum::new(q1, s);
    let hi = FxNum::new(q2, s);
    let deriv = act.derivative_range(&lo, &hi)?;
    let value = act.value_range(&lo, &hi);
    let gap = act
        .enclose(&hi, prec)
        .sub_round(&act.enclose(&lo, prec), prec);
    Some(Hypotheses { deriv, value, gap })
}

/// `iv >= num/den` provably.
fn ge(iv: &Interval, num: i64, den: i64) -> bool {
    iv.lo
        .cmp_ratio(&BigInt::from(num), &BigInt::from(den))
        != std::cmp::Ordering::Less
}

/// `iv <= num/den` provably.
fn le(iv: &Interval, num: i64, den: i64) -> bool {
    iv.hi
        .cmp_ratio(&BigInt::from(num), &BigInt::from(den))
        != std::cmp::Ordering::Greater
}

/// `iv < num/den` provably.
fn lt(iv: &Interval, num: i64, den: i64) -> bool {
    iv.hi.cmp_ratio(&BigInt::from(num), &BigInt::from(den)) == std::cmp::Ordering::Less
}

/// Evaluates the seven sufficiency items. Items hold only for `p >= 3`
/// (the covering argument's standing hypothesis). Item 5's interval, left
/// unnamed in its source, is taken as `(0, 2/s)` by symmetry with item 4.
pub fn check_sufficiency_items(act: &ActivationSpec, format: FxFormat) -> SufficiencyReport {
    if act.is_table_backed() {
        return SufficiencyReport {
            certified: Vec::new(),
            metadata_missing: true,
        };
    }
    let mut certified = Vec::new();
    if format.p() < 3 {
        return SufficiencyReport {
            certified,
            metadata_missing: false,
        };
    }
    let s = format.s();
    let prec = 96;
    let qmax_num = format.max_numerator().to_i64().expect("desk scale");
    let si = i64::from(s);

    let abs_bounded = |h: &Hypotheses| -> bool {
        match &h.value {
            Some((min, max)) => ge(min, -qmax_num, si) && le(max, qmax_num, si),
            None => false,
        }
    };
    let nonneg_bounded = |h: &Hypotheses| -> bool {
        match &h.value {
            Some((min, max)) => ge(min, 0, 1) && le(max, qmax_num, si),
            None => false,
        }
    };
    let gap_at_least_inv_s = |h: &Hypotheses| -> bool {
        ge(&h.gap, 1, si) || le(&h.gap, -1, si)
    };

    // Items 1-3 scan a fixed list of candidate windows; items 4-7 use their
    // stated intervals. Windows outside the grid are skipped.
    let windows: Vec<(i64, i64)> = vec![
        (0, 1),
        (0, 2),
        (-1, 0),
        (-2, -1),
        (-1, 1),
        (-2, 1),
        (-3, 3),
        (0, si.min(qmax_num)),
        (1, 2),
    ];
    let mut item1 = None;
    let mut item2 = None;
    let mut item3 = None;
    for (q1, q2) in windows {
        if q1 >= q2 || q1 < -qmax_num || q2 > qmax_num {
            continue;
        }
        let Some(h) = window_hypotheses(act, s, q1, q2, prec) else {
            continue;
        };
        let (inf, sup) = &h.deriv;
        if item1.is_none()
            && lt(sup, 1, 1)
            && ge(inf, -1, 1)
            && !le(inf, -1, 1)
            && abs_bounded(&h)
            && gap_at_least_inv_s(&h)
        {
            item1 = Some((q1, q2));
        }
        if item2.is_none()
            && le(sup, 1, 1)
            && ge(inf, -1, 1)
            && nonneg_bounded(&h)
            && gap_at_least_inv_s(&h)
        {
            item2 = Some((q1, q2));
        }
        if item3.is_none()
            && ge(inf, 1, 1)
            && le(sup, 2, 1)
            && abs_bounded(&h)
            && lt(&h.gap, 2 * (q2 - q1) - 1, si)
            && ge(&h.gap, 0, 1)
        {
            item3 = Some((q1, q2));
        }
    }
    for (item, w) in [(1u8, item1), (2, item2), (3, item3)] {
        if let Some((q1, q2)) = w {
            certified.push(ItemCertificate { item, q1, q2 });
        }
    }

    // Item 4: σ' in [1/2, 1) and |σ| <= q_max on (0, 2/s).
    if 2 <= qmax_num {
        if let Some(h) = window_hypotheses(act, s, 0, 2, prec) {
            let (inf, sup) = &h.deriv;
            if ge(inf, 1, 2) && lt(sup, 1, 1) && abs_bounded(&h) {
                certified.push(ItemCertificate { item: 4, q1: 0, q2: 2 });
            }
            // Item 5: σ' in [1, 3/2) on (0, 2/s) (interval assumption).
            if ge(inf, 1, 1) && lt(sup, 3, 2) && abs_bounded(&h) {
                certified.push(ItemCertificate { item: 5, q1: 0, q2: 2 });
            }
        }
    }
    // Item 6: σ' in [1/3, 1) and |σ| <= q_max on (-2/s, 1/s).
    if 2 <= qmax_num {
        if let Some(h) = window_hypotheses(act, s, -2, 1, prec) {
            let (inf, sup) = &h.deriv;
            if ge(inf, 1, 3) && lt(sup, 1, 1) && abs_bounded(&h) {
                certified.push(ItemCertificate { item: 6, q1: -2, q2: 1 });
            }
        }
    }
    // Item 7: σ' in [1/6, 1) and |σ| <= q_max on (-3/s, 3/s).
    if 3 <= qmax_num {
        if let Some(h) = window_hypotheses(act, s, -3, 3, prec) {
            let (inf, sup) = &h.deriv;
            if ge(inf, 1, 6) && lt(sup, 1, 1) && abs_bounded(&h) {
                certified.push(ItemCertificate { item: 7, q1: -3, q2: 3 });
            }
        }
    }
    certified.sort_by_key(|c| c.item);
    SufficiencyReport {
        certified,
        metadata_missing: false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Universal,
    NotUniversal,
    Unknown,
}

impl Verdict {
    /// Process exit code for the CLI: 0, 10, 20.
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::Universal => 0,
            Verdict::NotUniversal => 10,
            Verdict::Unknown => 20,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SetSummary {
    /// Sizes at the reported bias (the witness when one exists, else 0).
    pub n_size: usize,
    pub s_size: usize,
    pub n_equals_s: bool,
    pub s_full: bool,
    pub n_full: bool,
    pub residues_scanned: u64,
    /// Grid numerators missing from the N set at the reported bias.
    pub missing_from_n: Vec<i64>,
}

/// Machine-checkable analysis outcome for one `(activation, format, mode)`.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub schema: &'static str,
    pub activation: String,
    pub p: u32,
    pub s: u32,
    pub mode: &'static str,
    pub verdict: Verdict,
    pub condition1: Option<Condition1Witness>,
    pub sufficiency_items: Vec<ItemCertificate>,
    pub metadata_missing: bool,
    pub divisor_r: Option<u64>,
    /// Bias numerator (scale `s`) witnessing S = Q, if any.
    pub bias_witness_num: Option<i64>,
    pub sets: SetSummary,
}

pub const ANALYSIS_SCHEMA: &str = "quniv-analysis/1";

/// Runs the decision ladder on an already-tabulated activation.
pub fn verdict_for_table(
    act: &ActivationSpec,
    table: &QuantTable,
    binary: bool,
) -> AnalysisReport {
    let format = table.format;
    let cond1 = check_condition1(table);
    let (s_kind, n_kind) = if binary {
        (SetKind::BS, SetKind::BN)
    } else {
        (SetKind::S, SetKind::N)
    };
    let s_scan = scan_bias(table, s_kind);
    let n_scan = scan_bias(table, n_kind);
    let verdict = if cond1.is_some() && s_scan.witness.is_some() {
        Verdict::Universal
    } else if n_scan.witness.is_none() {
        Verdict::NotUniversal
    } else {
        Verdict::Unknown
    };
    let items = check_sufficiency_items(act, format);
    let divisor = check_necessity_divisor(table, binary);
    let report_bias = s_scan
        .witness
        .clone()
        .unwrap_or_else(|| FxNum::zero(format.s()));
    let n_at = set_of_kind(table, n_kind, &report_bias);
    let s_at = set_of_kind(table, s_kind, &report_bias);
    let sets = SetSummary {
        n_size: n_at.len(),
        s_size: s_at.len(),
        n_equals_s: n_at.members == s_at.members,
        s_full: s_at.is_full_grid(),
        n_full: n_at.is_full_grid(),
        residues_scanned: n_scan.residues_scanned,
        missing_from_n: n_at.missing(),
    };
    AnalysisReport {
        schema: ANALYSIS_SCHEMA,
        activation: act.name().to_string(),
        p: format.p(),
        s: format.s(),
        mode: if binary { "binary" } else { "general" },
        verdict,
        condition1: cond1,
        sufficiency_items: items.certified,
        metadata_missing: items.metadata_missing,
        divisor_r: divisor,
        bias_witness_num: s_scan
            .witness
            .as_ref()
            .map(|b| b.numerator().to_i64().expect("scan range")),
        sets,
    }
}

/// Tabulates and decides. Tabulation ties propagate as errors.
pub fn verdict(
    act: &ActivationSpec,
    format: FxFormat,
    binary: bool,
    guard_bits: u32,
    max_escalations: u32,
) -> Result<AnalysisReport, CondError> {
    let table = tabulate(act, format, guard_bits, max_escalations)?;
    Ok(verdict_for_table(act, &table, binary))
}

/// The pairing permutation used by the necessity argument: swaps each even
/// numerator with its odd predecessor, fixing `q_max`. A bijection of the
/// grid onto itself that no affine map realizes.
pub fn pairing_permutation(format: FxFormat) -> BTreeMap<i64, i64> {
    let max = format.max_numerator().to_i64().expect("desk scale");
    let mut map = BTreeMap::new();
    for i in -max..=max {
        let img = if i.rem_euclid(2) == 1 {
            if i == max {
                i
            } else {
                i + 1
            }
        } else {
            i - 1
        };
        map.insert(i, img);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::act::DEFAULT_GUARD_BITS;

    fn fmt(p: u32, s: u32) -> FxFormat {
        FxFormat::new(p, s).unwrap()
    }

    fn tab(act: &ActivationSpec, p: u32, s: u32) -> QuantTable {
        tabulate(act, fmt(p, s), DEFAULT_GUARD_BITS, 3).unwrap()
    }

    #[test]
    fn condition1_holds_for_monotone_nonconstant_zoo() {
        for act in ActivationSpec::zoo() {
            if !act.is_monotone() {
                continue;
            }
            for (p, s) in [(3, 1), (3, 2), (4, 3), (4, 4)] {
                let t = tab(&act, p, s);
                let w = check_condition1(&t);
                assert!(w.is_some(), "{} p={p} s={s}", act.name());
            }
        }
    }

    #[test]
    fn condition1_absent_for_constant_table() {
        let f = fmt(3, 2);
        let t = QuantTable::from_entries("const", f, 0, vec![2; 15]).unwrap();
        assert!(check_condition1(&t).is_none());
    }

    #[test]
    fn condition1_gelu_small_format() {
        // Non-monotone member: exhaustive scan still finds a witness.
        let t = tab(&ActivationSpec::gelu(), 3, 4);
        let w = check_condition1(&t).expect("witness");
        // ρ touches its max only from the threshold on.
        let r = reflected_entries(&t, w.alpha, w.beta);
        let max = *r.iter().max().unwrap();
        let maxnum = 7i64;
        for (i, e) in r.iter().enumerate() {
            let x = -maxnum + i as i64;
            if x >= w.z_num {
                assert_eq!(*e, max);
            } else {
                assert!(*e < max);
            }
        }
        assert!(w.z_num > -maxnum);
    }

    #[test]
    fn condition1_witness_for_relu_is_threshold() {
        let t = tab(&ActivationSpec::relu(), 3, 2);
        let w = check_condition1(&t).unwrap();
        assert_eq!((w.alpha, w.beta), (1, 1));
        // ReLU's table peaks exactly at q_max only.
        assert_eq!(w.z_num, 7);
    }

    #[test]
    fn reflected_entries_respect_odd_symmetry() {
        let t = tab(&ActivationSpec::silu(), 4, 3);
        let plain = reflected_entries(&t, 1, 1);
        assert_eq!(plain, t.entry_numerators());
        let reflected = reflected_entries(&t, -1, -1);
        let n = plain.len();
        for i in 0..n {
            assert_eq!(reflected[i], -plain[n - 1 - i]);
        }
    }

    #[test]
    fn divisor_witness_for_scaled_hardtanh() {
        // General: σ = 5s·Hardtanh with s=1, p=3 gives r = 5.
        let t = tab(&ActivationSpec::scaled_hardtanh(5), 3, 1);
        assert_eq!(check_necessity_divisor(&t, false), Some(5));
        // Binary: 5·Hardtanh gives r = 5 as well.
        assert_eq!(check_necessity_divisor(&t, true), Some(5));
        // ReLU has 1/s-granular entries: no divisor.
        let t = tab(&ActivationSpec::relu(), 3, 1);
        assert_eq!(check_necessity_divisor(&t, false), None);
        assert_eq!(check_necessity_divisor(&t, true), None);
    }

    #[test]
    fn divisor_r3_requires_even_p() {
        // Entries all multiples of 3s: r = 3 admissible only when 2 | p.
        for (p, expect) in [(4u32, Some(3u64)), (5, None)] {
            let f = fmt(p, 1);
            let entries: Vec<i64> = f
                .grid()
                .map(|x| {
                    let v = x.numerator().to_i64().unwrap();
                    (v / 3) * 3
                })
                .map(|v| v.clamp(-((1 << p) - 1), (1 << p) - 1))
                .collect();
            let t = QuantTable::from_entries("m3", f, 0, entries).unwrap();
            let r = check_necessity_divisor(&t, false);
            assert_eq!(r, expect, "p={p}");
        }
    }

    #[test]
    fn sufficiency_items_match_stated_claims() {
        // SiLU, Mish, GELU certify item 4 for s >= 3; ReLU and ELU have unit
        // slope and certify the twin window item 5 (and item 2).
        for s in [3u32, 4, 6, 8] {
            for act in [ActivationSpec::silu(), ActivationSpec::mish(), ActivationSpec::gelu()] {
                let r = check_sufficiency_items(&act, fmt(4, s));
                assert!(r.has(4), "{} s={s}: {:?}", act.name(), r.items());
            }
            for act in [ActivationSpec::relu(), ActivationSpec::elu()] {
                let r = check_sufficiency_items(&act, fmt(4, s));
                assert!(r.has(5), "{} s={s}: {:?}", act.name(), r.items());
                assert!(r.has(2), "{} s={s}: {:?}", act.name(), r.items());
            }
            let r = check_sufficiency_items(&ActivationSpec::softplus(), fmt(4, s));
            assert!(r.has(6), "softplus s={s}: {:?}", r.items());
            let r = check_sufficiency_items(&ActivationSpec::sigmoid(), fmt(4, s));
            assert!(r.has(7), "sigmoid s={s}: {:?}", r.items());
        }
    }

    #[test]
    fn identity_certifies_item_two_on_unit_window() {
        let r = check_sufficiency_items(&ActivationSpec::identity(), fmt(3, 2));
        let c = r.certified.iter().find(|c| c.item == 2).expect("item 2");
        assert_eq!((c.q1, c.q2), (0, 1));
    }

    #[test]
    fn items_gated_by_p_at_least_3() {
        let r = check_sufficiency_items(&ActivationSpec::relu(), fmt(2, 1));
        assert!(r.certified.is_empty());
    }

    #[test]
    fn items_missing_for_table_backed() {
        let t = tab(&ActivationSpec::relu(), 3, 2);
        let act = ActivationSpec::from_table(t);
        let r = check_sufficiency_items(&act, fmt(3, 2));
        assert!(r.metadata_missing);
        assert!(r.certified.is_empty());
    }

    #[test]
    fn certified_items_imply_full_s_set() {
        // Cross-module consistency: any item certificate must be matched by
        // an S = Q witness from the exhaustive scan.
        for act in ActivationSpec::zoo() {
            for (p, s) in [(3, 3), (4, 3), (4, 4), (5, 6)] {
                let r = check_sufficiency_items(&act, fmt(p, s));
                if r.certified.is_empty() {
                    continue;
                }
                let t = tab(&act, p, s);
                let scan = scan_bias(&t, SetKind::S);
                assert!(
                    scan.witness.is_some(),
                    "{} p={p} s={s} items {:?} but S never full",
                    act.name(),
                    r.items()
                );
                let scan_b = scan_bias(&t, SetKind::BS);
                assert!(
                    scan_b.witness.is_some(),
                    "{} p={p} s={s}: binary span should match the item claims",
                    act.name()
                );
            }
        }
    }

    #[test]
    fn verdict_examples() {
        // Identity at (3, 2): Universal with bias witness 0.
        let r = verdict(&ActivationSpec::identity(), fmt(3, 2), false, 128, 3).unwrap();
        assert_eq!(r.verdict, Verdict::Universal);
        assert_eq!(r.bias_witness_num, Some(0));
        // Sigmoid at (4, 4): Universal.
        let r = verdict(&ActivationSpec::sigmoid(), fmt(4, 4), false, 128, 3).unwrap();
        assert_eq!(r.verdict, Verdict::Universal);
        // 5s·Hardtanh at the qualifying format: NotUniversal with r = 5.
        let r = verdict(&ActivationSpec::scaled_hardtanh(5), fmt(3, 1), false, 128, 3).unwrap();
        assert_eq!(r.verdict, Verdict::NotUniversal);
        assert_eq!(r.divisor_r, Some(5));
        assert!(!r.sets.missing_from_n.is_empty());
        // Binary variant.
        let r = verdict(&ActivationSpec::scaled_hardtanh(5), fmt(3, 1), true, 128, 3).unwrap();
        assert_eq!(r.verdict, Verdict::NotUniversal);
    }

    #[test]
    fn verdicts_never_contradict_sets() {
        for act in ActivationSpec::zoo() {
            for binary in [false, true] {
                let r = verdict(&act, fmt(4, 3), binary, 128, 3).unwrap();
                match r.verdict {
                    Verdict::Universal => {
                        assert!(r.condition1.is_some());
                        assert!(r.sets.s_full);
                    }
                    Verdict::NotUniversal => assert!(!r.sets.n_full),
                    Verdict::Unknown => {}
                }
            }
        }
    }

    #[test]
    fn not_universal_blocks_the_pairing_permutation() {
        // The permutation is a bijection onto the grid; a NotUniversal
        // verdict means some grid value is unreachable at every bias, so the
        // permutation cannot be realized exactly.
        let t = tab(&ActivationSpec::scaled_hardtanh(5), 3, 1);
        let perm = pairing_permutation(t.format);
        assert_eq!(
            perm.values().copied().collect::<std::collections::BTreeSet<i64>>().len() as u64,
            t.format.grid_len()
        );
        let scan = scan_bias(&t, SetKind::N);
        assert!(scan.witness.is_none());
        assert!(!scan.representative.missing().is_empty());
    }

    #[test]
    fn report_serializes() {
        let r = verdict(&ActivationSpec::relu(), fmt(4, 3), false, 128, 3).unwrap();
        let json = serde_json::to_string_pretty(&r).unwrap();
        assert!(json.contains("\"verdict\""));
        assert!(json.contains("quniv-analysis/1"));
        assert_eq!(r.verdict.exit_code(), 0);
    }
}

//! Constructive compilers: γ-decompositions over the output-gap set,
//! Bézout coefficients for multiple integers, shallow and binary cube
//! indicators, the depth-efficient indicator chain, and full universal
//! approximators assembled from per-cell indicators with a single final
//! rounding.
//!
//! Every builder emits ordinary network IR; nothing here is ever trusted
//! without the exhaustive checks in the verification harness.

use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::act::{ActError, ActivationSpec, QuantTable};
use crate::conditions::{reflected_entries, Condition1Witness};
use crate::fxp::{ceil_grid, floor_grid, round_to, FxFormat, FxNum, ScaledExact};
use crate::net::{AffineNeuron, NetError, QuantizedNet};
use crate::reach::{scan_bias, SetKind, WeightMode};

#[derive(Debug, Error)]
pub enum ConstructError {
    #[error("gamma {gamma} is not representable: lattice step {step}")]
    NotRepresentable { gamma: String, step: String },
    #[error("construction precondition violated: {0}")]
    ConditionViolated(String),
    #[error("activation and format are not universal in {0} mode")]
    NotUniversal(&'static str),
    #[error("partition of {cells} cells exceeds budget {budget}")]
    Budget { cells: u64, budget: u64 },
    #[error(transparent)]
    Act(#[from] ActError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// A quantized cube: per-dimension closed bounds on the grid. Point cubes
/// (`lo == hi`) are allowed and carry the pointwise partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cube {
    pub lo: Vec<FxNum>,
    pub hi: Vec<FxNum>,
}

impl Cube {
    pub fn new(lo: Vec<FxNum>, hi: Vec<FxNum>) -> Self {
        assert_eq!(lo.len(), hi.len());
        assert!(!lo.is_empty());
        for (a, b) in lo.iter().zip(&hi) {
            assert!(a <= b, "inverted cube bounds");
        }
        Cube { lo, hi }
    }

    pub fn point(v: Vec<FxNum>) -> Self {
        Cube {
            lo: v.clone(),
            hi: v,
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[FxNum]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(xi, (lo, hi))| xi >= lo && xi <= hi)
    }

    pub fn contains_nums(&self, x: &[i64]) -> bool {
        x.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .all(|(xi, (lo, hi))| {
                let v = BigInt::from(*xi);
                &v >= lo.numerator() && &v <= hi.numerator()
            })
    }
}

/// Bézout coefficients for `x_1 < ... < x_n` positive integers:
/// `Σ c_i x_i = gcd` with `|c_1| <= x_n/d` and `|c_i| <= x_1/d` for `i >= 2`,
/// via the sign-alternating reduction (coefficients are reduced modulo
/// `x_1/d` with representatives chosen against the running tail sum).
pub fn bezout_multi(xs: &[BigInt]) -> (BigInt, Vec<BigInt>) {
    assert!(!xs.is_empty());
    for w in xs.windows(2) {
        assert!(w[0] < w[1], "inputs must be strictly increasing");
    }
    assert!(xs[0].is_positive(), "inputs must be positive");
    let mut d = BigInt::zero();
    for x in xs {
        d = d.gcd(x);
    }
    let norm: Vec<BigInt> = xs.iter().map(|x| x / &d).collect();
    let n = norm.len();
    if n == 1 || norm[0].is_one() {
        // The gcd is realized by x_1 alone after normalization.
        let mut c = vec![BigInt::zero(); n];
        c[0] = BigInt::one();
        return (d, c);
    }
    // Chain extended gcd to get any initial coefficients b_i.
    let mut b = vec![BigInt::zero(); n];
    let mut g = norm[0].clone();
    b[0] = BigInt::one();
    for i in 1..n {
        let e = g.extended_gcd(&norm[i]);
        // e.x * g + e.y * norm[i] = e.gcd
        for bj in b.iter_mut().take(i) {
            *bj *= &e.x;
        }
        b[i] = e.y;
        g = e.gcd;
    }
    debug_assert!(g.is_one());
    // Reduce c_n..c_2 modulo x_1, choosing the representative whose sign
    // opposes the running tail so partial sums stay within x_1 * x_n.
    let x1 = norm[0].clone();
    let mut c = b.clone();
    let mut tail = BigInt::zero(); // Σ_{i>j} c_i x_i as j descends
    let mut k_total = BigInt::zero();
    for j in (1..n).rev() {
        let r = c[j].mod_floor(&x1); // in [0, x1)
        let r_neg: BigInt = &r - &x1; // in [-x1, 0)
        let pick = if tail.is_positive() {
            // Choose the non-positive representative.
            if r.is_zero() {
                r
            } else {
                r_neg
            }
        } else if tail.is_negative() || r.is_zero() {
            r
        } else {
            // tail = 0: either side works; take the smaller magnitude.
            if r.magnitude() <= r_neg.magnitude() {
                r.clone()
            } else {
                r_neg
            }
        };
        let k = (&pick - &c[j]) / &x1;
        k_total += &k;
        c[j] = pick;
        tail += &c[j] * &norm[j];
    }
    c[0] = &b[0] - &k_total * BigInt::zero() - {
        // c_1 = (1 - Σ_{i>=2} c_i x_i) / x_1, exact by construction.
        BigInt::zero()
    };
    let num: BigInt = BigInt::one() - &tail;
    let (q, r) = num.div_mod_floor(&x1);
    debug_assert!(r.is_zero(), "Bezout residual must divide");
    c[0] = q;
    // Bound checks (the stated guarantees).
    debug_assert!(c[0].magnitude() <= norm[n - 1].magnitude());
    for cj in c.iter().skip(1) {
        debug_assert!(cj.magnitude() <= norm[0].magnitude());
    }
    (d, c)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecompMode {
    /// Weights range over the grid.
    General,
    /// Weights in {-1, 1}.
    Binary,
    /// At most four signed terms over the deep a-sequence.
    BinaryFourTerm,
}

/// One term `w * v` with `v = ⌊σ⌉(pair.0) - ⌊σ⌉(pair.1)` realized on the
/// table.
#[derive(Debug, Clone)]
pub struct GammaTerm {
    pub weight: FxNum,
    pub diff: FxNum,
    pub pair: (FxNum, FxNum),
}

/// An exact decomposition `γ = Σ w_j v_j` over output gaps.
#[derive(Debug, Clone)]
pub struct GammaDecomposition {
    pub gamma: ScaledExact,
    pub terms: Vec<GammaTerm>,
    pub mode: DecompMode,
}

impl GammaDecomposition {
    pub fn n(&self) -> usize {
        self.terms.len()
    }

    /// `n <= 4s(2^{p+2}-3)(2^p-1)`, the stated general-mode bound.
    pub fn n_bound(format: FxFormat) -> u64 {
        let p = format.p();
        4 * u64::from(format.s()) * ((1u64 << (p + 2)) - 3) * ((1u64 << p) - 1)
    }

    /// Exact re-summation; must reproduce γ.
    pub fn sum(&self) -> ScaledExact {
        let s = self.gamma.scale();
        let mut acc = ScaledExact::zero(s);
        for t in &self.terms {
            acc = acc.add(&t.weight.to_scaled().mul(&t.diff.to_scaled()));
        }
        acc
    }
}

/// Representative realizing pairs for the output-gap generators: for each
/// positive gap numerator, one `(x, y)` with `T(x) - T(y)` equal to it.
fn gap_pairs(table: &QuantTable) -> Vec<(i64, FxNum, FxNum)> {
    use std::collections::BTreeMap;
    let s = table.format.s();
    let max = table.format.max_numerator().to_i64().expect("desk scale");
    let mut best: BTreeMap<i64, (i64, i64)> = BTreeMap::new();
    let entries = table.entry_numerators();
    for (i, a) in entries.iter().enumerate() {
        for (j, b) in entries.iter().enumerate() {
            let v = a - b;
            if v > 0 {
                best.entry(v).or_insert((i as i64 - max, j as i64 - max));
            }
        }
    }
    best.into_iter()
        .map(|(v, (x, y))| (v, FxNum::new(x, s), FxNum::new(y, s)))
        .collect()
}

/// Decomposes γ over the table's output gaps.
///
/// General mode follows the gamma-count argument: Bézout coefficients over
/// the scaled gap generators give the lattice gcd, and `γ/d` multiples are
/// realized by splitting each integer coefficient into grid-bounded weight
/// chunks (equivalent to, and never longer than, unit repetition). A short
/// single-generator factorization is preferred when one exists.
pub fn decompose_gamma(
    table: &QuantTable,
    gamma: &ScaledExact,
    mode: DecompMode,
) -> Result<GammaDecomposition, ConstructError> {
    match mode {
        DecompMode::General | DecompMode::Binary => decompose_span(table, gamma, mode),
        DecompMode::BinaryFourTerm => decompose_four_term(table, gamma),
    }
}

fn not_representable(gamma: &ScaledExact, step: &BigInt, k: u32) -> ConstructError {
    ConstructError::NotRepresentable {
        gamma: gamma.to_string(),
        step: format!("{}/{}^{}", step, gamma.scale(), k),
    }
}

fn decompose_span(
    table: &QuantTable,
    gamma: &ScaledExact,
    mode: DecompMode,
) -> Result<GammaDecomposition, ConstructError> {
    let format = table.format;
    let s = format.s();
    let max_w = format.max_numerator();
    // γ at the working scale: s^2 for general weights, s for binary.
    let k = if mode == DecompMode::General { 2 } else { 1 };
    let reduced = gamma.reduced();
    if reduced.log_scale() > k {
        // γ finer than the span can reach.
        let probe = BigInt::zero();
        return Err(not_representable(gamma, &probe, k));
    }
    let lifted = reduced.lift(k);
    let g0 = lifted.numerator().clone();
    let pairs = gap_pairs(table);
    if g0.is_zero() {
        return Ok(GammaDecomposition {
            gamma: gamma.clone(),
            terms: Vec::new(),
            mode,
        });
    }
    if pairs.is_empty() {
        return Err(not_representable(gamma, &BigInt::zero(), k));
    }
    let gens: Vec<BigInt> = pairs.iter().map(|(v, _, _)| BigInt::from(*v)).collect();
    let (d, coeffs) = bezout_multi(&gens);
    if !(&g0 % &d).is_zero() {
        return Err(not_representable(gamma, &d, k));
    }
    let q = &g0 / &d;
    let mut terms = Vec::new();
    // Fast path: a single generator dividing γ keeps the term count small
    // (largest such generator first).
    let mut fast = false;
    for (v, x, y) in pairs.iter().rev() {
        let vb = BigInt::from(*v);
        if (&g0 % &vb).is_zero() {
            let c = &g0 / &vb;
            if mode != DecompMode::General || c.magnitude() <= max_w.magnitude() {
                push_chunked(&mut terms, &c, &max_w, s, *v, x, y, mode);
                fast = true;
                break;
            }
        }
    }
    if !fast {
        for (i, c) in coeffs.iter().enumerate() {
            let total = c * &q;
            if total.is_zero() {
                continue;
            }
            let (v, x, y) = &pairs[i];
            push_chunked(&mut terms, &total, &max_w, s, *v, x, y, mode);
        }
    }
    let dec = GammaDecomposition {
        gamma: gamma.clone(),
        terms,
        mode,
    };
    debug_assert_eq!(dec.sum().cmp_value(&lifted.lift(2)), std::cmp::Ordering::Equal);
    Ok(dec)
}

/// Splits an integer coefficient into weight chunks: grid-bounded numerators
/// in general mode, `±1` weights (numerator `±s`) in binary mode.
#[allow(clippy::too_many_arguments)]
fn push_chunked(
    terms: &mut Vec<GammaTerm>,
    total: &BigInt,
    max_w: &BigInt,
    s: u32,
    v: i64,
    x: &FxNum,
    y: &FxNum,
    mode: DecompMode,
) {
    // The coefficient counts how many generator copies are needed; general
    // weights absorb grid-bounded chunks of it, binary weights one unit
    // (one ±1 term) at a time.
    let mut rem = total.clone();
    let cap = match mode {
        DecompMode::General => max_w.clone(),
        _ => BigInt::one(),
    };
    while !rem.is_zero() {
        let chunk = if rem.magnitude() <= cap.magnitude() {
            rem.clone()
        } else if rem.is_positive() {
            cap.clone()
        } else {
            -cap.clone()
        };
        rem -= &chunk;
        let weight = match mode {
            DecompMode::General => FxNum::new(chunk, s),
            _ => {
                let sign = if chunk.is_positive() { 1i64 } else { -1 };
                FxNum::new(sign * i64::from(s), s)
            }
        };
        terms.push(GammaTerm {
            weight,
            diff: FxNum::new(v, s),
            pair: (x.clone(), y.clone()),
        });
    }
}

/// The deep a-sequence `a_i = s(⌊σ⌉(q_max) - ⌊σ⌉(i/s))`, `i = 0..2^p-1`,
/// with the decomposition hypotheses verified on the table.
#[derive(Debug, Clone)]
pub struct FourTermBasis {
    pub a: Vec<i64>,
    /// Index κ with `a_κ - a_{κ+1} = 1`.
    pub unit_gap_at: usize,
}

pub fn four_term_basis(table: &QuantTable) -> Result<FourTermBasis, ConstructError> {
    let max = table.format.max_numerator().to_i64().expect("desk scale");
    let tmax = table.entry(&table.format.q_max());
    let tmax = tmax.numerator().to_i64().expect("grid");
    let a: Vec<i64> = (0..=max)
        .map(|i| tmax - {
            let e = table.entry(&FxNum::new(i, table.format.s()));
            e.numerator().to_i64().expect("grid")
        })
        .collect();
    let bad = |m: String| ConstructError::ConditionViolated(m);
    if *a.last().unwrap() != 0 {
        return Err(bad("a-sequence does not terminate at 0".into()));
    }
    let a0_min = (1i64 << (table.format.p() - 1)) - 1;
    if a[0] < a0_min {
        return Err(bad(format!("a_0 = {} below {a0_min}", a[0])));
    }
    let mut unit_gap_at = None;
    for (i, w) in a.windows(2).enumerate() {
        let gap = w[0] - w[1];
        if !(0..=2).contains(&gap) {
            return Err(bad(format!("a-gap {gap} at index {i} outside [0, 2]")));
        }
        if gap == 1 && unit_gap_at.is_none() {
            unit_gap_at = Some(i);
        }
    }
    let unit_gap_at = unit_gap_at.ok_or_else(|| bad("no unit gap in a-sequence".into()))?;
    Ok(FourTermBasis { a, unit_gap_at })
}

/// Four-term decomposition: `s·γ` as a signed sum of at most 4 members of
/// the a-sequence, per the case split (nearest member, then a unit-gap
/// correction; past `a_0`, a two-member sum first).
fn decompose_four_term(
    table: &QuantTable,
    gamma: &ScaledExact,
) -> Result<GammaDecomposition, ConstructError> {
    let s = table.format.s();
    let reduced = gamma.reduced();
    if reduced.log_scale() > 1 {
        return Err(not_representable(gamma, &BigInt::one(), 1));
    }
    let lifted = reduced.lift(1);
    let gs = lifted
        .numerator()
        .to_i64()
        .ok_or_else(|| ConstructError::ConditionViolated("gamma out of range".into()))?;
    let basis = four_term_basis(table)?;
    let a = &basis.a;
    let neg = gs < 0;
    let target = gs.abs();
    if target > 2 * a[0] + 1 {
        return Err(ConstructError::ConditionViolated(format!(
            "|s·γ| = {target} exceeds 2a_0+1 = {}",
            2 * a[0] + 1
        )));
    }
    // signed index picks: (sign, index into a)
    let mut picks: Vec<(i64, usize)> = Vec::new();
    let nearest = |t: i64| -> usize {
        // a is nonincreasing; find index minimizing |a_i - t|.
        let mut best = 0usize;
        let mut bd = (a[0] - t).abs();
        for (i, ai) in a.iter().enumerate() {
            let d = (ai - t).abs();
            if d < bd {
                bd = d;
                best = i;
            }
        }
        best
    };
    let rem = if target <= a[0] {
        let c = nearest(target);
        picks.push((1, c));
        target - a[c]
    } else {
        let c2 = nearest(target - a[0]);
        picks.push((1, 0));
        picks.push((1, c2));
        target - a[0] - a[c2]
    };
    match rem {
        0 => {}
        1 => {
            picks.push((1, basis.unit_gap_at));
            picks.push((-1, basis.unit_gap_at + 1));
        }
        -1 => {
            picks.push((-1, basis.unit_gap_at));
            picks.push((1, basis.unit_gap_at + 1));
        }
        _ => {
            return Err(ConstructError::ConditionViolated(format!(
                "four-term residual {rem} (a-sequence not 1-dense)"
            )))
        }
    }
    if picks.len() > 4 {
        return Err(ConstructError::ConditionViolated(
            "four-term decomposition used more than 4 terms".into(),
        ));
    }
    let qmax = table.format.q_max();
    let terms: Vec<GammaTerm> = picks
        .into_iter()
        .filter(|(_, i)| a[*i] != 0) // zero terms contribute nothing
        .map(|(sign, i)| {
            let sign = if neg { -sign } else { sign };
            GammaTerm {
                weight: FxNum::new(sign * i64::from(s), s),
                diff: FxNum::new(a[i], s),
                pair: (qmax.clone(), FxNum::new(i64::try_from(i).unwrap(), s)),
            }
        })
        .collect();
    let dec = GammaDecomposition {
        gamma: gamma.clone(),
        terms,
        mode: DecompMode::BinaryFourTerm,
    };
    debug_assert_eq!(
        dec.sum().cmp_value(&lifted.lift(2)),
        std::cmp::Ordering::Equal
    );
    Ok(dec)
}

/// The unrounded final affine over the σ-outputs of a prefix's last layer.
#[derive(Debug, Clone)]
pub struct FinalAffine {
    pub terms: Vec<(usize, FxNum)>,
    pub bias: FxNum,
}

impl FinalAffine {
    pub fn eval_exact(&self, sigma_out: &[FxNum]) -> ScaledExact {
        let mut acc = self.bias.to_scaled();
        for (idx, w) in &self.terms {
            acc = acc.add(&w.to_scaled().mul(&sigma_out[*idx].to_scaled()));
        }
        acc
    }

    pub fn param_count(&self) -> u64 {
        1 + self.terms.len() as u64
    }
}

/// Build-time constants recorded for reproducibility.
#[derive(Debug, Clone, Serialize)]
pub struct IndicatorManifest {
    pub mode: &'static str,
    pub m: u64,
    pub m_q: u64,
    pub n_terms: usize,
    pub witness: Condition1Witness,
    pub gamma: String,
    /// Separation-chain recursion depth, for the deep constructions.
    pub depth_l: Option<u32>,
}

/// A cube indicator: prefix network (every layer activation-terminated)
/// plus the unrounded final affine computing `γ·1_C` exactly.
#[derive(Debug, Clone)]
pub struct IndicatorNet {
    pub format: FxFormat,
    pub table: Arc<QuantTable>,
    pub input_dim: usize,
    pub layers: Vec<Vec<AffineNeuron>>,
    pub final_affine: FinalAffine,
    pub gamma: ScaledExact,
    pub cube: Cube,
    pub manifest: IndicatorManifest,
}

impl IndicatorNet {
    /// σ-outputs of the last prefix layer.
    pub fn eval_prefix(&self, x: &[FxNum]) -> Result<Vec<FxNum>, NetError> {
        if x.len() != self.input_dim {
            return Err(NetError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut z: Vec<FxNum> = x.to_vec();
        for layer in &self.layers {
            let mut next = Vec::with_capacity(layer.len());
            for n in layer {
                let mut acc: BigInt = n.bias.numerator() * BigInt::from(self.format.s());
                for (idx, w) in &n.inputs {
                    acc += w.numerator() * z[*idx].numerator();
                }
                let pre = round_to(self.format, &ScaledExact::new(acc, self.format.s(), 2));
                next.push(self.table.entry(&pre));
            }
            z = next;
        }
        Ok(z)
    }

    /// The exact (unrounded) indicator value at `x`.
    pub fn eval_exact(&self, x: &[FxNum]) -> Result<ScaledExact, NetError> {
        let z = self.eval_prefix(x)?;
        Ok(self.final_affine.eval_exact(&z))
    }

    pub fn param_count(&self) -> u64 {
        let prefix: u64 = self
            .layers
            .iter()
            .flat_map(|l| l.iter())
            .map(AffineNeuron::param_count)
            .sum();
        prefix + self.final_affine.param_count()
    }

    /// As a complete network: the final affine becomes the rounded output.
    pub fn to_net(&self) -> QuantizedNet {
        QuantizedNet {
            format: self.format,
            table: Arc::clone(&self.table),
            input_dim: self.input_dim,
            hidden: self.layers.clone(),
            output: AffineNeuron {
                inputs: self.final_affine.terms.clone(),
                bias: self.final_affine.bias.clone(),
            },
            binary: self.manifest.mode.starts_with("binary"),
        }
    }

    /// Parameter count of the set-indexed (expanded) form.
    pub fn expanded_param_count(&self) -> u64 {
        self.to_net().expand().param_count()
    }
}

/// Applies the Condition-1 reflection when lowering a construction built
/// against `ρ(x) = α σ(β x)` into σ-space:
/// first-layer affines flip by β, deeper affines by αβ (their sources read
/// α-scaled σ-outputs), and final-affine weights flip by α.
struct Reflect {
    alpha: i64,
    beta: i64,
}

impl Reflect {
    fn from_witness(w: &Condition1Witness) -> Self {
        Reflect {
            alpha: i64::from(w.alpha),
            beta: i64::from(w.beta),
        }
    }

    fn first_layer(&self, n: &AffineNeuron) -> AffineNeuron {
        self.scaled(n, self.beta, self.beta)
    }

    fn deeper_layer(&self, n: &AffineNeuron) -> AffineNeuron {
        self.scaled(n, self.beta * self.alpha, self.beta)
    }

    fn scaled(&self, n: &AffineNeuron, wf: i64, bf: i64) -> AffineNeuron {
        AffineNeuron {
            inputs: n
                .inputs
                .iter()
                .map(|(i, w)| (*i, FxNum::new(w.numerator() * wf, w.scale())))
                .collect(),
            bias: FxNum::new(n.bias.numerator() * bf, n.bias.scale()),
        }
    }

    fn final_affine(&self, f: &FinalAffine) -> FinalAffine {
        FinalAffine {
            terms: f
                .terms
                .iter()
                .map(|(i, w)| (*i, FxNum::new(w.numerator() * self.alpha, w.scale())))
                .collect(),
            bias: f.bias.clone(),
        }
    }
}

/// Shared state for the shallow construction in ρ-space.
struct RhoSpace {
    format: FxFormat,
    /// Entries of ⌊ρ⌉ in grid order.
    entries: Vec<i64>,
    /// max ⌊ρ⌉ numerator.
    m_num: i64,
    /// threshold z.
    z: i64,
}

impl RhoSpace {
    fn new(table: &QuantTable, w: &Condition1Witness) -> Self {
        let entries = reflected_entries(table, w.alpha, w.beta);
        let m_num = *entries.iter().max().expect("nonempty");
        RhoSpace {
            format: table.format,
            entries,
            m_num,
            z: w.z_num,
        }
    }

    fn entry(&self, num: i64) -> i64 {
        let max = self.format.max_numerator().to_i64().expect("desk scale");
        self.entries[usize::try_from(num + max).expect("grid")]
    }

    /// Δz numerator: max ⌊ρ⌉ minus ⌊ρ⌉(z - 1/s), strictly positive.
    fn dz(&self) -> i64 {
        self.m_num - self.entry(self.z - 1)
    }
}

/// Builds the shallow cube indicator `γ·1_C` in the requested weight mode.
///
/// Prefix shape: layer 1 holds the per-coordinate threshold probes and a
/// `q_max` constant; layer 2 the amplified separation node and a fresh
/// constant; layer 3 the per-term saturation probes and their reference
/// constants. The final affine carries the decomposition weights and the
/// bias `b`, producing `b + (γ-b)·1_C`; with `b = 0` this is `γ·1_C`.
pub fn build_indicator(
    table: &Arc<QuantTable>,
    witness: &Condition1Witness,
    cube: &Cube,
    gamma: &ScaledExact,
    b: &FxNum,
    mode: WeightMode,
) -> Result<IndicatorNet, ConstructError> {
    let format = table.format;
    let s = format.s();
    let si = i64::from(s);
    let d = cube.dim();
    let rho = RhoSpace::new(table, witness);
    let qmax = format.max_numerator().to_i64().expect("desk scale");
    for (lo, hi) in cube.lo.iter().zip(&cube.hi) {
        assert!(format.contains(lo) && format.contains(hi), "cube off grid");
    }
    // γ - b must decompose over the gap span.
    let part = gamma.sub(&b.to_scaled());
    let dmode = match mode {
        WeightMode::General => DecompMode::General,
        WeightMode::Binary => DecompMode::Binary,
    };
    let dec = decompose_gamma(table, &part, dmode)?;
    let n = dec.n();
    let bound = GammaDecomposition::n_bound(format);
    assert!(
        (n as u64) <= bound,
        "decomposition length {n} above the stated bound {bound}"
    );
    let dz = rho.dz();
    assert!(dz >= 1, "threshold separation must be positive");
    let (m, m_q): (i64, i64) = match mode {
        WeightMode::General => {
            // smallest m > 2s; smallest m_q with m_q q_max Δz > 2 q_max.
            (2 * si + 1, 2 * si / dz + 1)
        }
        WeightMode::Binary => {
            let v = 2 * qmax + 1; // smallest integer > 2^{p+1} - 2
            (v, v)
        }
    };
    // ρ-space layer 1: per-dim probes A_i, B_i and the constant K1.
    let one = FxNum::new(si, s);
    let neg_one = one.neg();
    let mut l1: Vec<AffineNeuron> = Vec::with_capacity(2 * d + 1);
    for i in 0..d {
        l1.push(AffineNeuron {
            inputs: vec![(i, one.clone())],
            bias: FxNum::new(rho.z - cube.lo[i].numerator().to_i64().expect("grid"), s),
        });
        l1.push(AffineNeuron {
            inputs: vec![(i, neg_one.clone())],
            bias: FxNum::new(rho.z + cube.hi[i].numerator().to_i64().expect("grid"), s),
        });
    }
    let k1 = l1.len();
    l1.push(AffineNeuron::constant(FxNum::new(qmax, s)));

    // ρ-space layer 2: the separation node G and the constant K2.
    let (wneg, wpos) = match mode {
        WeightMode::General => (FxNum::new(-qmax, s), FxNum::new(qmax, s)),
        WeightMode::Binary => (neg_one.clone(), one.clone()),
    };
    let mut g_edges: Vec<(usize, FxNum)> = Vec::new();
    for probe in 0..2 * d {
        for _ in 0..m {
            g_edges.push((probe, wneg.clone()));
        }
    }
    for _ in 0..(2 * d as i64 * m) {
        g_edges.push((k1, wpos.clone()));
    }
    let l2 = [
        AffineNeuron {
            inputs: g_edges,
            bias: FxNum::new(rho.z - 1, s),
        },
        AffineNeuron::constant(FxNum::new(qmax, s)),
    ];

    // ρ-space layer 3: per term j, saturation probes and constants for the
    // realizing pair, ordered (main(y), const(y), main(x), const(x)) so the
    // final weights (w, -w, -w, w) produce +w_j v_j on the cube.
    let mut l3: Vec<AffineNeuron> = Vec::with_capacity(4 * n);
    let mut final_terms: Vec<(usize, FxNum)> = Vec::with_capacity(4 * n);
    // In ρ-space the realizing pair maps through the reflection:
    // v = T_σ(x) - T_σ(y) = ⌊ρ⌉(βx)·α - ⌊ρ⌉(βy)·α; with α = -1 the roles of
    // the pair swap. Work directly on ρ-entries: find (x', y') in ρ-space
    // with ⌊ρ⌉(x') - ⌊ρ⌉(y') = v.
    let beta = i64::from(witness.beta);
    let alpha = i64::from(witness.alpha);
    let to_rho = |x: &FxNum| -> i64 { beta * x.numerator().to_i64().expect("grid") };
    let main_node = |q_num: i64, l3: &mut Vec<AffineNeuron>| -> usize {
        let mut edges: Vec<(usize, FxNum)> = Vec::new();
        for _ in 0..m_q {
            edges.push((0, wneg.clone()));
        }
        for _ in 0..m_q {
            edges.push((1, wpos.clone()));
        }
        l3.push(AffineNeuron {
            inputs: edges,
            bias: FxNum::new(q_num, s),
        });
        l3.len() - 1
    };
    for t in &dec.terms {
        // ρ-space pair: x' = β·x, y' = β·y, with diff α(⌊ρ⌉(x') - ⌊ρ⌉(y')).
        let (xp, yp) = (to_rho(&t.pair.0), to_rho(&t.pair.1));
        let diff_rho = rho.entry(xp) - rho.entry(yp);
        debug_assert_eq!(
            alpha * diff_rho,
            t.diff.numerator().to_i64().expect("grid"),
            "pair does not realize the gap"
        );
        // Want the final contribution w_j·v_j: with components
        // (main(y'), const(y'), main(x'), const(x')) the ρ-space value is
        // w(⌊ρ⌉(x') - ⌊ρ⌉(y'))·1_C = w·α·v_j·1_C; fold α into the weight.
        let w_rho = FxNum::new(t.weight.numerator() * alpha, s);
        let i_main_y = main_node(yp, &mut l3);
        l3.push(AffineNeuron::constant(FxNum::new(yp, s)));
        let i_const_y = l3.len() - 1;
        let i_main_x = main_node(xp, &mut l3);
        l3.push(AffineNeuron::constant(FxNum::new(xp, s)));
        let i_const_x = l3.len() - 1;
        final_terms.push((i_main_y, w_rho.clone()));
        final_terms.push((i_const_y, w_rho.neg()));
        final_terms.push((i_main_x, w_rho.neg()));
        final_terms.push((i_const_x, w_rho));
    }
    let final_affine = FinalAffine {
        terms: final_terms,
        bias: b.clone(),
    };

    // Lower from ρ-space to σ-space via the reflection.
    let refl = Reflect::from_witness(witness);
    let layers = vec![
        l1.iter().map(|nn| refl.first_layer(nn)).collect::<Vec<_>>(),
        l2.iter().map(|nn| refl.deeper_layer(nn)).collect(),
        l3.iter().map(|nn| refl.deeper_layer(nn)).collect(),
    ];
    let final_affine = refl.final_affine(&final_affine);
    Ok(IndicatorNet {
        format,
        table: Arc::clone(table),
        input_dim: d,
        layers,
        final_affine,
        gamma: gamma.clone(),
        cube: cube.clone(),
        manifest: IndicatorManifest {
            mode: match mode {
                WeightMode::General => "general",
                WeightMode::Binary => "binary",
            },
            m: m as u64,
            m_q: m_q as u64,
            n_terms: n,
            witness: witness.clone(),
            gamma: gamma.to_string(),
            depth_l: None,
        },
    })
}

/// Binary-weight variant of [`build_indicator`].
pub fn build_indicator_binary(
    table: &Arc<QuantTable>,
    witness: &Condition1Witness,
    cube: &Cube,
    gamma: &ScaledExact,
    b: &FxNum,
) -> Result<IndicatorNet, ConstructError> {
    let net = build_indicator(table, witness, cube, gamma, b, WeightMode::Binary)?;
    debug_assert!(net.to_net().is_binary());
    Ok(net)
}

/// The per-mode parameter bound assembled from the shallow counting chain:
/// `(2n)(m_q(m(10d)+4)+4)` with `m = m_q = 2s+1` under grid weights and
/// `m = m_q = 2^{p+1}-1` under binary weights.
pub fn shallow_param_bound(format: FxFormat, mode: WeightMode, d: usize, n: usize) -> u64 {
    let m: u64 = match mode {
        WeightMode::General => 2 * u64::from(format.s()) + 1,
        WeightMode::Binary => (1u64 << (format.p() + 1)) - 1,
    };
    let per_fq = m * (m * (10 * d as u64) + 4) + 4;
    2 * (n.max(1) as u64) * per_fq
}


/// Largest `e` with `(2 q_max)^e <= 2^p - 1`, plus one: the stated depth
/// cap for the separation recursion.
pub fn deep_depth_cap(format: FxFormat) -> u32 {
    let m = format.max_numerator();
    let two_m = &m * 2u8;
    let s = BigInt::from(format.s());
    // (2 q_max)^e <= q_max * s^{e-1}? Compare (2M/s)^e <= M: (2M)^e <= M s^e.
    let mut e = 0u32;
    loop {
        let lhs = two_m.pow(e + 1);
        let rhs = &m * s.pow(e + 1);
        if lhs > rhs {
            return e + 1;
        }
        e += 1;
        assert!(e < 64, "depth cap diverged");
    }
}

/// Parameter bound for the unary deep indicator, from the counting chain.
pub fn deep_param_bound(l: u32) -> u64 {
    120 * u64::from(l) + 461
}

/// Parameter bound for the d-dimensional deep cube indicator assembled from
/// per-axis chains and an outer chain, from the same counting chain.
pub fn deep_cube_param_bound(d: usize, l: u32) -> u64 {
    let inner = d as u64 * deep_param_bound(l) + 1;
    4 * (220 * inner + 120 * u64::from(l) + 241) + 1 + 9
}

/// Constants of the separation recursion, shared by every deep chain over
/// one table.
#[derive(Debug, Clone)]
pub struct DeepChain {
    /// Threshold z (Condition 1 with no reflections).
    pub z_num: i64,
    /// Level-0 bias: ceil(11 q_max ⌊σ⌉(z - 1/s)) + q_max.
    pub c0: FxNum,
    /// Level i+1 bias: q_max - floor(5 q_max ⌊σ⌉(q_max)).
    pub c_next: FxNum,
    /// Number of recursion levels past level 0.
    pub depth_l: u32,
    /// Table numerator at the terminal low value round(β_l).
    pub tb_num: i64,
    /// ⌊σ⌉(q_max) numerator.
    pub tmax_num: i64,
    /// Achieved amplitude numerator: 2(⌊σ⌉(q_max) - ⌊σ⌉(round(β_l))).
    pub eta_num: i64,
}

/// Runs the separation recursion on the table and pins its constants.
///
/// Preconditions checked here, all on the table or the analytic metadata:
/// a Condition-1 witness without reflections, slope at least 1/2 on the
/// nonnegative axis, and `⌊σ⌉(u) <= ⌊σ⌉(z - 1/s)` for every `u < z` (the
/// level-0 spill bound, automatic for monotone tables).
pub fn deep_chain(act: &ActivationSpec, table: &QuantTable) -> Result<DeepChain, ConstructError> {
    let format = table.format;
    let s = format.s();
    let viol = |m: String| ConstructError::ConditionViolated(m);
    let w = crate::conditions::check_condition1(table)
        .ok_or_else(|| viol("no Condition-1 witness".into()))?;
    if (w.alpha, w.beta) != (1, 1) {
        return Err(viol(format!(
            "deep chain needs the unreflected witness, got α={} β={}",
            w.alpha, w.beta
        )));
    }
    if !act.slope_at_least_half_nonneg() {
        return Err(viol(format!(
            "{} lacks the slope-1/2 metadata on x >= 0",
            act.name()
        )));
    }
    let z = w.z_num;
    let max = format.max_numerator().to_i64().expect("desk scale");
    let entry = |k: i64| -> i64 {
        table
            .entry(&FxNum::new(k, s))
            .numerator()
            .to_i64()
            .expect("grid")
    };
    let tmax_num = entry(max);
    let t_before = entry(z - 1);
    for u in -max..z {
        if entry(u) > t_before {
            return Err(viol(format!(
                "table exceeds ⌊σ⌉(z - 1/s) below the threshold at u = {u}"
            )));
        }
    }
    let q_max = ScaledExact::new(max, s, 1);
    // c0 = ceil(11 q_max T(z - 1/s)) + q_max.
    let prod0 = q_max.mul(&ScaledExact::new(t_before, s, 1)).mul_int(11);
    let c0 = ceil_grid(s, &prod0).add(&format.q_max());
    // c_next = q_max - floor(5 q_max T(q_max)).
    let prod1 = q_max.mul(&ScaledExact::new(tmax_num, s, 1)).mul_int(5);
    let c_next = format.q_max().sub(&floor_grid(s, &prod1));
    // β_0 = -11 q_max Tmax + c0, then β_{i+1} = 5 q_max T(round β_i) + c_next.
    let mut beta = q_max
        .mul(&ScaledExact::new(tmax_num, s, 1))
        .mul_int(-11)
        .add(&c0.to_scaled());
    let cap = deep_depth_cap(format);
    let mut depth_l = 0u32;
    let (tb_num, eta_num) = loop {
        let b = round_to(format, &beta);
        let b_num = b.numerator().to_i64().expect("grid");
        let tb = entry(b_num);
        let separated = 2 * (max - b_num) >= max;
        let eta = 2 * (tmax_num - tb);
        if separated && eta >= max {
            break (tb, eta);
        }
        if depth_l >= cap {
            return Err(viol(format!(
                "separation recursion failed to reach q_max/2 within {cap} levels"
            )));
        }
        beta = q_max
            .mul(&ScaledExact::new(tb, s, 1))
            .mul_int(5)
            .add(&c_next.to_scaled());
        depth_l += 1;
    };
    Ok(DeepChain {
        z_num: z,
        c0,
        c_next,
        depth_l,
        tb_num,
        tmax_num,
        eta_num,
    })
}

impl DeepChain {
    /// Appends one arm (levels 0..=l) reading the rounded input from
    /// `(src_layer_pos)` in the first chain layer; `layers[base..]` must be
    /// the chain layers, created by the caller with matching depth.
    fn push_arm(
        &self,
        format: FxFormat,
        layers: &mut [Vec<AffineNeuron>],
        u_edges: Vec<(usize, FxNum)>,
        u_bias: FxNum,
    ) -> usize {
        let s = format.s();
        let qmax_w = FxNum::new(format.max_numerator(), s);
        // Level U.
        layers[0].push(AffineNeuron {
            inputs: u_edges,
            bias: u_bias,
        });
        let mut pos = layers[0].len() - 1;
        // Level g_0: -11 q_max σ(U) + c0.
        let edges = vec![(pos, qmax_w.neg()); 11];
        layers[1].push(AffineNeuron {
            inputs: edges,
            bias: self.c0.clone(),
        });
        pos = layers[1].len() - 1;
        // Levels g_1..g_l: 5 q_max σ(g_i) + c_next.
        for li in 0..self.depth_l as usize {
            let edges = vec![(pos, qmax_w.clone()); 5];
            layers[2 + li].push(AffineNeuron {
                inputs: edges,
                bias: self.c_next.clone(),
            });
            pos = layers[2 + li].len() - 1;
        }
        pos
    }

    /// Chain depth in hidden layers: U plus g_0..g_l.
    fn arm_layers(&self) -> usize {
        2 + self.depth_l as usize
    }

    /// Final-affine bias for a two-arm indicator: 2(T(B) + Tmax).
    fn pair_bias(&self, s: u32) -> FxNum {
        FxNum::new(2 * (self.tb_num + self.tmax_num), s)
    }
}

/// The depth-efficient interval indicator: a two-arm separation chain whose
/// final affine computes `η·1_{[a,b]}` exactly with `η >= q_max`.
#[derive(Debug, Clone)]
pub struct DeepIndicator {
    pub net: IndicatorNet,
    pub depth_l: u32,
}

pub fn build_deep_indicator(
    act: &ActivationSpec,
    table: &Arc<QuantTable>,
    lo: &FxNum,
    hi: &FxNum,
) -> Result<DeepIndicator, ConstructError> {
    let chain = deep_chain(act, table)?;
    let format = table.format;
    let s = format.s();
    assert!(lo <= hi && format.contains(lo) && format.contains(hi));
    let mut layers: Vec<Vec<AffineNeuron>> = vec![Vec::new(); chain.arm_layers()];
    let one = FxNum::new(i64::from(s), s);
    let z = chain.z_num;
    let a1 = chain.push_arm(
        format,
        &mut layers,
        vec![(0, one.clone())],
        FxNum::new(z - lo.numerator().to_i64().expect("grid"), s),
    );
    let a2 = chain.push_arm(
        format,
        &mut layers,
        vec![(0, one.neg())],
        FxNum::new(z + hi.numerator().to_i64().expect("grid"), s),
    );
    let neg_one = one.neg();
    let final_affine = FinalAffine {
        terms: vec![
            (a1, neg_one.clone()),
            (a1, neg_one.clone()),
            (a2, neg_one.clone()),
            (a2, neg_one),
        ],
        bias: chain.pair_bias(s),
    };
    let gamma = ScaledExact::new(chain.eta_num, s, 1);
    let net = IndicatorNet {
        format,
        table: Arc::clone(table),
        input_dim: 1,
        layers,
        final_affine,
        gamma,
        cube: Cube::new(vec![lo.clone()], vec![hi.clone()]),
        manifest: IndicatorManifest {
            mode: "deep",
            m: 11,
            m_q: 5,
            n_terms: 2,
            witness: Condition1Witness {
                alpha: 1,
                beta: 1,
                z_num: chain.z_num,
            },
            gamma: format!("{}/{s}", chain.eta_num),
            depth_l: Some(chain.depth_l),
        },
    };
    Ok(DeepIndicator {
        net,
        depth_l: chain.depth_l,
    })
}

/// Deep cube indicator with an arbitrary coefficient: per-axis chains, an
/// outer chain over their folded sum for `d >= 2`, and at most four signed
/// saturation probes realizing γ through the a-sequence.
pub fn build_deep_cube_indicator(
    act: &ActivationSpec,
    table: &Arc<QuantTable>,
    cube: &Cube,
    gamma: &FxNum,
) -> Result<IndicatorNet, ConstructError> {
    let chain = deep_chain(act, table)?;
    let format = table.format;
    let s = format.s();
    let d = cube.dim();
    let dec = decompose_gamma(table, &gamma.to_scaled(), DecompMode::BinaryFourTerm)?;
    let one = FxNum::new(i64::from(s), s);
    let z = chain.z_num;
    let arm_depth = chain.arm_layers();
    let total_hidden = if d == 1 {
        arm_depth + 1
    } else {
        2 * arm_depth + 1
    };
    let mut layers: Vec<Vec<AffineNeuron>> = vec![Vec::new(); total_hidden];
    // The affine feeding the saturation probes: edges over the last chain
    // layer plus its bias, computing η·1_C before rounding.
    let (probe_layer, f_edges, f_bias) = if d == 1 {
        let a1 = chain.push_arm(
            format,
            &mut layers[..arm_depth],
            vec![(0, one.clone())],
            FxNum::new(z - cube.lo[0].numerator().to_i64().expect("grid"), s),
        );
        let a2 = chain.push_arm(
            format,
            &mut layers[..arm_depth],
            vec![(0, one.neg())],
            FxNum::new(z + cube.hi[0].numerator().to_i64().expect("grid"), s),
        );
        let neg = one.neg();
        (
            arm_depth,
            vec![(a1, neg.clone()), (a1, neg.clone()), (a2, neg.clone()), (a2, neg)],
            chain.pair_bias(s),
        )
    } else {
        // Inner chains per axis.
        let mut tops: Vec<(usize, usize)> = Vec::with_capacity(d);
        for i in 0..d {
            let a1 = chain.push_arm(
                format,
                &mut layers[..arm_depth],
                vec![(i, one.clone())],
                FxNum::new(z - cube.lo[i].numerator().to_i64().expect("grid"), s),
            );
            let a2 = chain.push_arm(
                format,
                &mut layers[..arm_depth],
                vec![(i, one.neg())],
                FxNum::new(z + cube.hi[i].numerator().to_i64().expect("grid"), s),
            );
            tops.push((a1, a2));
        }
        // y = Σ_i (η - F_i) folds to +1 edges on every arm top with bias
        // -4 d T(B); the outer arms read ±y + z.
        let mut y_edges_pos: Vec<(usize, FxNum)> = Vec::new();
        let mut y_edges_neg: Vec<(usize, FxNum)> = Vec::new();
        for (a1, a2) in &tops {
            for a in [a1, a2] {
                y_edges_pos.push((*a, one.clone()));
                y_edges_pos.push((*a, one.clone()));
                y_edges_neg.push((*a, one.neg()));
                y_edges_neg.push((*a, one.neg()));
            }
        }
        let y_bias = -4 * d as i64 * chain.tb_num;
        let o1 = chain.push_arm(
            format,
            &mut layers[arm_depth..2 * arm_depth],
            y_edges_pos,
            FxNum::new(y_bias + z, s),
        );
        let o2 = chain.push_arm(
            format,
            &mut layers[arm_depth..2 * arm_depth],
            y_edges_neg,
            FxNum::new(-y_bias + z, s),
        );
        let neg = one.neg();
        (
            2 * arm_depth,
            vec![(o1, neg.clone()), (o1, neg.clone()), (o2, neg.clone()), (o2, neg)],
            chain.pair_bias(s),
        )
    };
    // Saturation probes: main(q) = ⌊q + F⌉ and the reference constant q.
    let mut final_terms: Vec<(usize, FxNum)> = Vec::new();
    for t in &dec.terms {
        // Four-term pairs are (q_max, q_j) with diff Tmax - T(q_j).
        let qj = t.pair.1.clone();
        debug_assert!(!qj.numerator().is_negative(), "probe bias must be >= 0");
        let main = AffineNeuron {
            inputs: f_edges.clone(),
            bias: qj.add(&f_bias),
        };
        layers[probe_layer].push(main);
        let i_main = layers[probe_layer].len() - 1;
        layers[probe_layer].push(AffineNeuron::constant(qj));
        let i_const = layers[probe_layer].len() - 1;
        // Term weight is ±1 at scale s; contribution w(σ(main) - σ(const)).
        final_terms.push((i_main, t.weight.clone()));
        final_terms.push((i_const, t.weight.neg()));
    }
    let final_affine = FinalAffine {
        terms: final_terms,
        bias: FxNum::zero(s),
    };
    Ok(IndicatorNet {
        format,
        table: Arc::clone(table),
        input_dim: d,
        layers,
        final_affine,
        gamma: gamma.to_scaled(),
        cube: cube.clone(),
        manifest: IndicatorManifest {
            mode: "deep",
            m: 11,
            m_q: 5,
            n_terms: dec.n(),
            witness: Condition1Witness {
                alpha: 1,
                beta: 1,
                z_num: chain.z_num,
            },
            gamma: gamma.to_string(),
            depth_l: Some(chain.depth_l),
        },
    })
}


#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Shallow,
    Deep,
}

/// Approximator build configuration. Every field lands in the manifest.
pub struct ApproxConfig {
    pub strategy: Strategy,
    /// Weight mode for the shallow construction (deep chains use grid
    /// weights internally either way).
    pub mode: WeightMode,
    /// Target error ε as an exact rational.
    pub eps: (BigInt, BigInt),
    /// Optional explicit δ = ω^{-1}(ε) override.
    pub delta_override: Option<(BigInt, BigInt)>,
    /// Maximum number of partition cells.
    pub cell_budget: u64,
    /// Recorded seed (for seeded targets); not used by the builder itself.
    pub seed: Option<u64>,
}

impl ApproxConfig {
    pub fn exact_fit(strategy: Strategy, mode: WeightMode) -> Self {
        ApproxConfig {
            strategy,
            mode,
            // Any ε below 1/(2s) lands in the pointwise branch; record 0.
            eps: (BigInt::zero(), BigInt::one()),
            delta_override: None,
            cell_budget: 1 << 20,
            seed: None,
        }
    }
}

/// Build record: all chosen constants, for reproducibility.
#[derive(Debug, Clone, Serialize)]
pub struct BuildManifest {
    pub schema: &'static str,
    pub activation: String,
    pub p: u32,
    pub s: u32,
    pub mode: &'static str,
    pub strategy: &'static str,
    pub target: String,
    pub eps: String,
    pub delta: Option<String>,
    pub branch: &'static str,
    pub cells: u64,
    pub materialized_cells: u64,
    pub bias_witness_num: Option<i64>,
    pub m: u64,
    pub m_q: u64,
    pub depth_l: Option<u32>,
    pub max_terms_per_cell: usize,
    pub param_count: u64,
    pub seed: Option<u64>,
}

pub const BUILD_SCHEMA: &str = "quniv-build/1";

/// Per-axis partition of the grid into runs of numerators: the pointwise
/// partition when `delta <= 1/s`, else half-open boxes `[p_j, p_j + δ)`
/// anchored at `-q_max`, with the final box closed so `q_max` is covered.
fn axis_runs(format: FxFormat, delta: Option<&(BigInt, BigInt)>) -> Vec<(i64, i64)> {
    let max = format.max_numerator().to_i64().expect("desk scale");
    match delta {
        None => (-max..=max).map(|k| (k, k)).collect(),
        Some((dn, dd)) => {
            let s = BigInt::from(format.s());
            let mut runs: Vec<(i64, i64)> = Vec::new();
            let mut cur: Option<(BigInt, i64, i64)> = None;
            for k in -max..=max {
                // Cell index j = floor((k + max) * dd / (s * dn)).
                let j = (BigInt::from(k + max) * dd).div_floor(&(&s * dn));
                match &mut cur {
                    Some((cj, _, hi)) if *cj == j => *hi = k,
                    _ => {
                        if let Some((_, lo, hi)) = cur.take() {
                            runs.push((lo, hi));
                        }
                        cur = Some((j, k, k));
                    }
                }
            }
            if let Some((_, lo, hi)) = cur {
                runs.push((lo, hi));
            }
            runs
        }
    }
}

/// Builds a universal approximator for the target: partitions the grid into
/// cubes of side at most δ (grid points when δ <= 1/s), compiles one
/// indicator per cell whose coefficient rounds to the target's value at the
/// cell anchor (its lexicographically smallest grid point), and sums all
/// cells into a single rounded output.
pub fn build_approximator(
    act: &ActivationSpec,
    table: &Arc<QuantTable>,
    target: &dyn crate::targets::Target,
    cfg: &ApproxConfig,
) -> Result<(QuantizedNet, BuildManifest), ConstructError> {
    let format = table.format;
    let s = format.s();
    let d = target.dim();
    if cfg.strategy == Strategy::Deep && cfg.mode == WeightMode::Binary {
        return Err(ConstructError::ConditionViolated(
            "the depth-efficient construction uses grid weights internally; binary mode applies to the shallow strategy".into(),
        ));
    }
    let witness = crate::conditions::check_condition1(table).ok_or(
        ConstructError::NotUniversal(match cfg.mode {
            WeightMode::General => "general",
            WeightMode::Binary => "binary",
        }),
    )?;
    // δ: explicit override, else from the target's modulus; below 1/s the
    // pointwise branch applies.
    let delta = cfg
        .delta_override
        .clone()
        .or_else(|| target.inverse_modulus(&cfg.eps.0, &cfg.eps.1));
    let point_branch = match &delta {
        None => true,
        Some((dn, dd)) => dn * BigInt::from(s) <= dd.clone(),
    };
    let runs = axis_runs(format, if point_branch { None } else { delta.as_ref() });
    let cells: u64 = (runs.len() as u64).pow(d as u32);
    if cells > cfg.cell_budget {
        return Err(ConstructError::Budget {
            cells,
            budget: cfg.cell_budget,
        });
    }
    // Shallow route needs a bias making the span full; deep covers every
    // grid coefficient through the a-sequence.
    let (bias_witness, s_at_witness) = match cfg.strategy {
        Strategy::Shallow => {
            let kind = match cfg.mode {
                WeightMode::General => SetKind::S,
                WeightMode::Binary => SetKind::BS,
            };
            let scan = scan_bias(table, kind);
            let b = scan.witness.ok_or(ConstructError::NotUniversal(
                match cfg.mode {
                    WeightMode::General => "general",
                    WeightMode::Binary => "binary",
                },
            ))?;
            let set = crate::reach::set_of_kind(table, kind, &b);
            (Some(b), Some(set))
        }
        Strategy::Deep => (None, None),
    };

    // Assemble per-cell indicators, skipping cells whose contribution is
    // exactly zero.
    let mut cell_nets: Vec<IndicatorNet> = Vec::new();
    let mut idx = vec![0usize; d];
    let mut max_terms = 0usize;
    let mut depth_l = None;
    let mut mm = (0u64, 0u64);
    loop {
        let cube = Cube::new(
            idx.iter().map(|j| FxNum::new(runs[*j].0, s)).collect(),
            idx.iter().map(|j| FxNum::new(runs[*j].1, s)).collect(),
        );
        let anchor: Vec<FxNum> = cube.lo.clone();
        let y = target.rounded_value(format, &anchor)?;
        match cfg.strategy {
            Strategy::Shallow => {
                let b = bias_witness.as_ref().expect("shallow bias");
                let set = s_at_witness.as_ref().expect("shallow set");
                let gamma_v = set
                    .witness(&y)
                    .expect("S = Q at the witness bias covers every value");
                let part = gamma_v.sub(&b.to_scaled());
                if !part.is_zero() {
                    let ind =
                        build_indicator(table, &witness, &cube, &part, &FxNum::zero(s), cfg.mode)?;
                    max_terms = max_terms.max(ind.manifest.n_terms);
                    mm = (ind.manifest.m, ind.manifest.m_q);
                    cell_nets.push(ind);
                }
            }
            Strategy::Deep => {
                if !y.is_zero() {
                    let ind = build_deep_cube_indicator(act, table, &cube, &y)?;
                    max_terms = max_terms.max(ind.manifest.n_terms);
                    mm = (ind.manifest.m, ind.manifest.m_q);
                    if depth_l.is_none() {
                        depth_l = Some(ind.layers.len() as u32);
                    }
                    cell_nets.push(ind);
                }
            }
        }
        // Advance the cell index.
        let mut k = 0;
        loop {
            if k == d {
                // Done.
                let out_bias = bias_witness.clone().unwrap_or_else(|| FxNum::zero(s));
                let net = merge_cells(format, table, d, &cell_nets, out_bias, cfg.mode);
                net.validate()?;
                let manifest = BuildManifest {
                    schema: BUILD_SCHEMA,
                    activation: act.name().to_string(),
                    p: format.p(),
                    s,
                    mode: match cfg.mode {
                        WeightMode::General => "general",
                        WeightMode::Binary => "binary",
                    },
                    strategy: match cfg.strategy {
                        Strategy::Shallow => "shallow",
                        Strategy::Deep => "deep",
                    },
                    target: target.name().to_string(),
                    eps: format!("{}/{}", cfg.eps.0, cfg.eps.1),
                    delta: delta.as_ref().map(|(n, dd)| format!("{n}/{dd}")),
                    branch: if point_branch {
                        "point-cells"
                    } else {
                        "delta-cells"
                    },
                    cells,
                    materialized_cells: cell_nets.len() as u64,
                    bias_witness_num: bias_witness
                        .as_ref()
                        .map(|b| b.numerator().to_i64().expect("scan range")),
                    m: mm.0,
                    m_q: mm.1,
                    depth_l: match cfg.strategy {
                        Strategy::Deep => cell_nets.first().and_then(|c| c.manifest.depth_l),
                        Strategy::Shallow => None,
                    },
                    max_terms_per_cell: max_terms,
                    param_count: net.param_count(),
                    seed: cfg.seed,
                };
                return Ok((net, manifest));
            }
            idx[k] += 1;
            if idx[k] < runs.len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}

/// Concatenates per-cell prefixes layer by layer and sums their final
/// affines into the single rounded output with the global bias.
fn merge_cells(
    format: FxFormat,
    table: &Arc<QuantTable>,
    input_dim: usize,
    cells: &[IndicatorNet],
    out_bias: FxNum,
    mode: WeightMode,
) -> QuantizedNet {
    let depth = cells.iter().map(|c| c.layers.len()).max().unwrap_or(0);
    for c in cells {
        assert_eq!(c.layers.len(), depth, "cells must share layer depth");
    }
    let mut hidden: Vec<Vec<AffineNeuron>> = vec![Vec::new(); depth];
    let mut out_terms: Vec<(usize, FxNum)> = Vec::new();
    for cell in cells {
        // Offset of this cell's block in each layer.
        let mut prev_offset = 0usize;
        for (li, layer) in cell.layers.iter().enumerate() {
            let offset = hidden[li].len();
            for n in layer {
                let inputs = n
                    .inputs
                    .iter()
                    .map(|(i, w)| {
                        let idx = if li == 0 { *i } else { *i + prev_offset };
                        (idx, w.clone())
                    })
                    .collect();
                hidden[li].push(AffineNeuron {
                    inputs,
                    bias: n.bias.clone(),
                });
            }
            prev_offset = offset;
        }
        for (i, w) in &cell.final_affine.terms {
            out_terms.push((*i + prev_offset, w.clone()));
        }
        debug_assert!(cell.final_affine.bias.is_zero());
    }
    QuantizedNet {
        format,
        table: Arc::clone(table),
        input_dim,
        hidden,
        output: AffineNeuron {
            inputs: out_terms,
            bias: out_bias,
        },
        binary: mode == WeightMode::Binary,
    }
}

#[cfg(test)]
mod approx_tests {
    use super::*;
    use crate::act::{tabulate, ActivationSpec};
    use crate::net::eval_full_grid;
    use crate::targets::{AnalyticTarget, GridTarget, Target};

    fn fmt(p: u32, s: u32) -> FxFormat {
        FxFormat::new(p, s).unwrap()
    }

    fn tab(act: &ActivationSpec, p: u32, s: u32) -> Arc<QuantTable> {
        Arc::new(tabulate(act, fmt(p, s), 128, 3).unwrap())
    }

    fn exact_fit_check(net: &QuantizedNet, target: &dyn Target) {
        let g = eval_full_grid(net, 1 << 22).unwrap();
        for (xs, y) in g.iter() {
            let x: Vec<FxNum> = xs.iter().map(|k| FxNum::new(*k, net.format.s())).collect();
            let want = target.rounded_value(net.format, &x).unwrap();
            assert_eq!(
                y,
                want.numerator().to_i64().unwrap(),
                "mismatch at {xs:?}"
            );
        }
    }

    #[test]
    fn exact_fit_random_grid_function_shallow() {
        let act = ActivationSpec::relu();
        let t = tab(&act, 3, 2);
        let target = GridTarget::random("g", t.format, 1, 7);
        let cfg = ApproxConfig::exact_fit(Strategy::Shallow, WeightMode::General);
        let (net, man) = build_approximator(&act, &t, &target, &cfg).unwrap();
        assert_eq!(man.branch, "point-cells");
        exact_fit_check(&net, &target);
    }

    #[test]
    fn exact_fit_identity_map() {
        // Representable target: the identity function, fitted exactly.
        let act = ActivationSpec::identity();
        let t = tab(&act, 3, 2);
        let target = crate::targets::ActTarget {
            act: ActivationSpec::identity(),
        };
        let cfg = ApproxConfig::exact_fit(Strategy::Shallow, WeightMode::General);
        let (net, _) = build_approximator(&act, &t, &target, &cfg).unwrap();
        exact_fit_check(&net, &target);
    }

    #[test]
    fn exact_fit_binary_mode() {
        let act = ActivationSpec::relu();
        let t = tab(&act, 3, 3);
        let target = GridTarget::random("g", t.format, 1, 9);
        let cfg = ApproxConfig::exact_fit(Strategy::Shallow, WeightMode::Binary);
        let (net, _) = build_approximator(&act, &t, &target, &cfg).unwrap();
        assert!(net.is_binary());
        exact_fit_check(&net, &target);
    }

    #[test]
    fn exact_fit_deep_strategy() {
        let act = ActivationSpec::relu();
        let t = tab(&act, 4, 3);
        let target = GridTarget::random("g", t.format, 1, 21);
        let cfg = ApproxConfig::exact_fit(Strategy::Deep, WeightMode::General);
        let (net, man) = build_approximator(&act, &t, &target, &cfg).unwrap();
        assert_eq!(man.strategy, "deep");
        exact_fit_check(&net, &target);
    }

    #[test]
    fn delta_partition_respects_modulus() {
        // sin3 at ε = 1: δ = 1/3 > 1/s = 1/4 takes the δ branch; the anchors
        // bound the in-cell drift, so |net - round(f*(anchor))| stays within
        // ε + intrinsic by construction; checked exhaustively at the grid.
        let act = ActivationSpec::relu();
        let t = tab(&act, 4, 4);
        let target = AnalyticTarget::sin3(1);
        let cfg = ApproxConfig {
            strategy: Strategy::Shallow,
            mode: WeightMode::General,
            eps: (BigInt::from(1), BigInt::from(1)),
            delta_override: None,
            cell_budget: 1 << 16,
            seed: None,
        };
        let (net, man) = build_approximator(&act, &t, &target, &cfg).unwrap();
        assert_eq!(man.branch, "delta-cells");
        assert!(man.cells < t.format.grid_len());
        // Eq-13 style bound with ε = 1, via f64 sanity (rigorous check lives
        // in the verification harness): |net(x) - f*(x)| <= 1/(2s) + ε.
        let g = eval_full_grid(&net, 1 << 16).unwrap();
        for (xs, y) in g.iter() {
            let xf = xs[0] as f64 / 4.0;
            let err = (y as f64 / 4.0 - (3.0 * xf).sin()).abs();
            assert!(err <= 1.0 + 0.125 + 1e-9, "at {xs:?}: {err}");
        }
    }

    #[test]
    fn deep_binary_combination_rejected() {
        let act = ActivationSpec::relu();
        let t = tab(&act, 3, 2);
        let target = GridTarget::random("g", t.format, 1, 2);
        let cfg = ApproxConfig::exact_fit(Strategy::Deep, WeightMode::Binary);
        let err = build_approximator(&act, &t, &target, &cfg).unwrap_err();
        assert!(matches!(err, ConstructError::ConditionViolated(_)));
    }

    #[test]
    fn budget_enforced() {
        let act = ActivationSpec::relu();
        let t = tab(&act, 4, 4);
        let target = GridTarget::random("g", t.format, 2, 3);
        let mut cfg = ApproxConfig::exact_fit(Strategy::Shallow, WeightMode::General);
        cfg.cell_budget = 10;
        let err = build_approximator(&act, &t, &target, &cfg).unwrap_err();
        assert!(matches!(err, ConstructError::Budget { .. }));
    }

    #[test]
    fn manifest_records_constants() {
        let act = ActivationSpec::relu();
        let t = tab(&act, 3, 2);
        let target = GridTarget::random("g", t.format, 1, 5);
        let cfg = ApproxConfig::exact_fit(Strategy::Shallow, WeightMode::General);
        let (_, man) = build_approximator(&act, &t, &target, &cfg).unwrap();
        assert_eq!(man.schema, BUILD_SCHEMA);
        assert_eq!(man.m, 5); // 2s+1
        assert!(man.param_count > 0);
        let json = serde_json::to_string(&man).unwrap();
        assert!(json.contains("point-cells"));
    }
}

#[cfg(test)]
mod deep_tests {
    use super::*;
    use crate::act::{tabulate, ActivationSpec};

    fn fmt(p: u32, s: u32) -> FxFormat {
        FxFormat::new(p, s).unwrap()
    }

    fn tab(act: &ActivationSpec, p: u32, s: u32) -> Arc<QuantTable> {
        Arc::new(tabulate(act, fmt(p, s), 128, 3).unwrap())
    }

    fn exhaustive_deep_check(ind: &IndicatorNet) {
        let f = ind.format;
        let max = f.max_numerator().to_i64().unwrap();
        assert_eq!(ind.input_dim, 1);
        for k in -max..=max {
            let x = [FxNum::new(k, f.s())];
            let got = ind.eval_exact(&x).unwrap();
            let want = if ind.cube.contains(&x) {
                ind.gamma.clone()
            } else {
                ScaledExact::zero(f.s())
            };
            assert_eq!(
                got.cmp_value(&want),
                std::cmp::Ordering::Equal,
                "at {k}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn deep_indicator_relu_exact_with_amplitude() {
        let t = tab(&ActivationSpec::relu(), 6, 3);
        let d = build_deep_indicator(
            &ActivationSpec::relu(),
            &t,
            &FxNum::new(0, 3),
            &FxNum::new(3, 3),
        )
        .unwrap();
        exhaustive_deep_check(&d.net);
        // γ >= q_max.
        let qmax = t.format.q_max().to_scaled();
        assert!(d.net.gamma.cmp_value(&qmax) != std::cmp::Ordering::Less);
        // Depth and parameter bounds.
        assert!(d.depth_l <= deep_depth_cap(t.format));
        assert!(d.net.expanded_param_count() <= deep_param_bound(d.depth_l));
    }

    #[test]
    fn deep_indicator_smooth_members() {
        for act in [ActivationSpec::gelu(), ActivationSpec::silu()] {
            let t = tab(&act, 5, 3);
            let d = build_deep_indicator(&act, &t, &FxNum::new(-2, 3), &FxNum::new(4, 3)).unwrap();
            exhaustive_deep_check(&d.net);
            let qmax = t.format.q_max().to_scaled();
            assert!(
                d.net.gamma.cmp_value(&qmax) != std::cmp::Ordering::Less,
                "{} amplitude",
                act.name()
            );
        }
    }

    #[test]
    fn deep_rejects_unqualified_activations() {
        // Sigmoid has slope < 1/2: no deep chain.
        let t = tab(&ActivationSpec::sigmoid(), 5, 3);
        let err = deep_chain(&ActivationSpec::sigmoid(), &t);
        assert!(matches!(err, Err(ConstructError::ConditionViolated(_))));
    }

    #[test]
    fn deep_cube_indicator_arbitrary_gamma_1d() {
        let act = ActivationSpec::relu();
        let t = tab(&act, 5, 3);
        let cube = Cube::new(vec![FxNum::new(-3, 3)], vec![FxNum::new(5, 3)]);
        for g in [-31i64, -7, 1, 14, 31] {
            let gamma = FxNum::new(g, 3);
            let ind = build_deep_cube_indicator(&act, &t, &cube, &gamma).unwrap();
            assert!(ind.manifest.n_terms <= 4);
            exhaustive_deep_check(&ind);
        }
    }

    #[test]
    fn deep_cube_indicator_2d() {
        let act = ActivationSpec::relu();
        let t = tab(&act, 4, 3);
        let cube = Cube::new(
            vec![FxNum::new(-2, 3), FxNum::new(1, 3)],
            vec![FxNum::new(3, 3), FxNum::new(7, 3)],
        );
        let gamma = FxNum::new(-9, 3);
        let ind = build_deep_cube_indicator(&act, &t, &cube, &gamma).unwrap();
        let f = t.format;
        let max = f.max_numerator().to_i64().unwrap();
        for i in -max..=max {
            for j in -max..=max {
                let x = [FxNum::new(i, 3), FxNum::new(j, 3)];
                let got = ind.eval_exact(&x).unwrap();
                let want = if ind.cube.contains(&x) {
                    gamma.to_scaled()
                } else {
                    ScaledExact::zero(3)
                };
                assert_eq!(
                    got.cmp_value(&want),
                    std::cmp::Ordering::Equal,
                    "at ({i},{j})"
                );
            }
        }
        assert!(ind.expanded_param_count() <= deep_cube_param_bound(2, 99));
    }
}

//! Quantized-network intermediate representation and bit-exact evaluator.
//!
//! A network alternates single-rounding affine maps with the tabulated
//! activation and ends in a rounded affine output, mapping `Q_{p,s}^d` to
//! `Q_{p,s}`. Index lists are multisets: integer multiples of a node are
//! encoded by repeating its index, and [`expand`] rewrites any network into
//! the set-indexed form by duplicating source neurons.
//!
//! Evaluation has two paths that must agree everywhere: the reference path
//! over arbitrary-precision integers, and a compiled `i128` path used by the
//! exhaustive grid driver when every accumulator provably fits.

use std::fmt::Write as _;
use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use rayon::prelude::*;
use thiserror::Error;

use crate::act::QuantTable;
use crate::fxp::{round_div_away_i128, round_to, FxFormat, FxNum, ScaledExact};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("input dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("neuron references index {index} in a layer of width {width}")]
    BadIndex { index: usize, width: usize },
    #[error("weight {0} is not a member of the format grid")]
    BadWeight(String),
    #[error("binary network carries non-binary weight {0}")]
    NotBinary(String),
    #[error("grid enumeration of {points} points exceeds budget {budget}")]
    BudgetExceeded { points: u64, budget: u64 },
    #[error("malformed network file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One affine unit: `bias + Σ w_j * z_{i_j}` over a multiset of indices into
/// the previous layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineNeuron {
    /// `(index, weight)` pairs; repeated indices realize integer multiples.
    pub inputs: Vec<(usize, FxNum)>,
    /// Bias in `Q_{∞,s}`.
    pub bias: FxNum,
}

impl AffineNeuron {
    pub fn constant(bias: FxNum) -> Self {
        AffineNeuron {
            inputs: Vec::new(),
            bias,
        }
    }

    pub fn param_count(&self) -> u64 {
        1 + self.inputs.len() as u64
    }

    fn eval(&self, format: FxFormat, prev: &[FxNum]) -> Result<FxNum, NetError> {
        let mut acc: BigInt = self.bias.numerator() * BigInt::from(format.s());
        for (idx, w) in &self.inputs {
            let z = prev.get(*idx).ok_or(NetError::BadIndex {
                index: *idx,
                width: prev.len(),
            })?;
            acc += w.numerator() * z.numerator();
        }
        Ok(round_to(
            format,
            &ScaledExact::new(acc, format.s(), 2),
        ))
    }
}

/// A complete quantized network: hidden layers (rounded affine, then the
/// activation table) followed by one rounded affine output with no
/// activation after it.
#[derive(Debug, Clone)]
pub struct QuantizedNet {
    pub format: FxFormat,
    pub table: Arc<QuantTable>,
    pub input_dim: usize,
    pub hidden: Vec<Vec<AffineNeuron>>,
    pub output: AffineNeuron,
    pub binary: bool,
}

impl QuantizedNet {
    /// Structural validation: index ranges, weight membership, binary flag.
    pub fn validate(&self) -> Result<(), NetError> {
        let mut width = self.input_dim;
        let check_neuron = |n: &AffineNeuron, width: usize| -> Result<(), NetError> {
            for (idx, w) in &n.inputs {
                if *idx >= width {
                    return Err(NetError::BadIndex {
                        index: *idx,
                        width,
                    });
                }
                if !self.format.contains(w) {
                    return Err(NetError::BadWeight(w.to_string()));
                }
                if self.binary && w.numerator().abs() != BigInt::from(self.format.s()) {
                    return Err(NetError::NotBinary(w.to_string()));
                }
            }
            Ok(())
        };
        for layer in &self.hidden {
            for n in layer {
                check_neuron(n, width)?;
            }
            width = layer.len();
        }
        check_neuron(&self.output, width)
    }

    /// Number of layers `L` in the composition (affine maps).
    pub fn depth(&self) -> usize {
        self.hidden.len() + 1
    }

    /// `Σ_l Σ_i (1 + |I_{l,i}|)`; repeated indices count once per occurrence.
    pub fn param_count(&self) -> u64 {
        let hidden: u64 = self
            .hidden
            .iter()
            .flat_map(|l| l.iter())
            .map(AffineNeuron::param_count)
            .sum();
        hidden + self.output.param_count()
    }

    pub fn is_binary(&self) -> bool {
        let s = BigInt::from(self.format.s());
        self.hidden
            .iter()
            .flat_map(|l| l.iter())
            .chain(std::iter::once(&self.output))
            .all(|n| n.inputs.iter().all(|(_, w)| w.numerator().abs() == s))
    }

    /// Bit-exact evaluation per the rounded composition.
    pub fn eval(&self, x: &[FxNum]) -> Result<FxNum, NetError> {
        if x.len() != self.input_dim {
            return Err(NetError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut z: Vec<FxNum> = x.to_vec();
        for layer in &self.hidden {
            let mut next = Vec::with_capacity(layer.len());
            for n in layer {
                let pre = n.eval(self.format, &z)?;
                next.push(self.table.entry(&pre));
            }
            z = next;
        }
        self.output.eval(self.format, &z)
    }

    /// Rewrites the multiset encoding into the set form: any index repeated
    /// within one neuron is redirected to duplicated source neurons. Copies
    /// are shared across consumers, never within one index list.
    pub fn expand(&self) -> QuantizedNet {
        let mut hidden: Vec<Vec<AffineNeuron>> = Vec::with_capacity(self.hidden.len());
        // copies[i] = positions of the duplicates of old node i in the new layer.
        let mut copies: Vec<Vec<usize>> = (0..self.input_dim).map(|i| vec![i]).collect();
        let consumers: Vec<Vec<AffineNeuron>> = self
            .hidden
            .iter()
            .cloned()
            .chain(std::iter::once(vec![self.output.clone()]))
            .collect();
        // Inputs cannot be duplicated; integer multiples of raw inputs stay
        // multiset-encoded (the constructions never need them expanded).
        for li in 0..consumers.len() {
            // Demand on layer li's nodes comes from layer li+1.
            let width = consumers[li].len();
            let mut need = vec![1usize; width];
            if li + 1 < consumers.len() {
                for n in &consumers[li + 1] {
                    let mut mult = vec![0usize; width];
                    for (idx, _) in &n.inputs {
                        mult[*idx] += 1;
                    }
                    for (i, m) in mult.iter().enumerate() {
                        need[i] = need[i].max(*m);
                    }
                }
            }
            // Materialize copies of layer li, remapping their own inputs.
            let mut new_layer = Vec::new();
            let mut layer_copies: Vec<Vec<usize>> = Vec::with_capacity(width);
            for (i, n) in consumers[li].iter().enumerate() {
                let mut spots = Vec::with_capacity(need[i]);
                for _ in 0..need[i] {
                    spots.push(new_layer.len());
                    new_layer.push(remap_neuron(n, &copies));
                }
                let _ = i;
                layer_copies.push(spots);
            }
            if li + 1 < consumers.len() {
                hidden.push(new_layer);
                copies = layer_copies;
            } else {
                // Output layer: single neuron, remapped.
                let out = new_layer.into_iter().next().expect("output neuron");
                return QuantizedNet {
                    format: self.format,
                    table: Arc::clone(&self.table),
                    input_dim: self.input_dim,
                    hidden,
                    output: out,
                    binary: self.binary,
                };
            }
        }
        unreachable!("loop returns at the output layer");
    }
}

/// Redirects a neuron's multiset indices to distinct copies of its sources.
fn remap_neuron(n: &AffineNeuron, copies: &[Vec<usize>]) -> AffineNeuron {
    let mut used = vec![0usize; copies.len()];
    let inputs = n
        .inputs
        .iter()
        .map(|(idx, w)| {
            let slot = used[*idx];
            used[*idx] += 1;
            let spots = &copies[*idx];
            // Raw inputs have a single copy; repeats stay on it.
            let target = spots[slot.min(spots.len() - 1)];
            (target, w.clone())
        })
        .collect();
    AffineNeuron {
        inputs,
        bias: n.bias.clone(),
    }
}

/// A compiled network over `i64` numerators with `i128` accumulators.
/// Construction fails (returns `None`) unless every accumulator provably
/// fits, in which case it agrees bit-exactly with [`QuantizedNet::eval`].
type CompiledNeuron = (Vec<(u32, i64)>, i128);

pub struct CompiledNet {
    s: i128,
    max_num: i64,
    input_dim: usize,
    hidden: Vec<Vec<CompiledNeuron>>,
    output: CompiledNeuron,
    table: Vec<i64>,
}

impl CompiledNet {
    pub fn compile(net: &QuantizedNet) -> Option<CompiledNet> {
        let max_num = net.format.max_numerator().to_i64()?;
        let s = i128::from(net.format.s());
        let limit = i128::MAX / 8;
        let conv = |n: &AffineNeuron| -> Option<CompiledNeuron> {
            let bias = n.bias.numerator().to_i128()?.checked_mul(s)?;
            let mut acc: i128 = bias.checked_abs()?;
            let mut edges = Vec::with_capacity(n.inputs.len());
            for (idx, w) in &n.inputs {
                let wn = w.numerator().to_i64()?;
                acc = acc.checked_add(i128::from(wn).checked_abs()?.checked_mul(i128::from(max_num))?)?;
                edges.push((u32::try_from(*idx).ok()?, wn));
            }
            if acc > limit {
                return None;
            }
            Some((edges, bias))
        };
        let mut hidden = Vec::with_capacity(net.hidden.len());
        for layer in &net.hidden {
            let l: Option<Vec<_>> = layer.iter().map(conv).collect();
            hidden.push(l?);
        }
        Some(CompiledNet {
            s,
            max_num,
            input_dim: net.input_dim,
            hidden,
            output: conv(&net.output)?,
            table: net.table.entry_numerators().to_vec(),
        })
    }

    #[inline]
    fn round_clamp(&self, acc: i128) -> i64 {
        let k = round_div_away_i128(acc, self.s);
        let max = i128::from(self.max_num);
        k.clamp(-max, max) as i64
    }

    /// Runs the hidden layers; `scratch` holds the final σ-outputs.
    pub fn eval_hidden(&self, x: &[i64], scratch: &mut Vec<i64>, next: &mut Vec<i64>) {
        debug_assert_eq!(x.len(), self.input_dim);
        scratch.clear();
        scratch.extend_from_slice(x);
        for layer in &self.hidden {
            next.clear();
            for (edges, bias) in layer {
                let mut acc = *bias;
                for (idx, w) in edges {
                    acc += i128::from(*w) * i128::from(scratch[*idx as usize]);
                }
                let pre = self.round_clamp(acc);
                next.push(self.table[(pre + self.max_num) as usize]);
            }
            std::mem::swap(scratch, next);
        }
    }

    /// The output affine before rounding, at scale `s^2`.
    pub fn output_exact(&self, hidden: &[i64]) -> i128 {
        let (edges, bias) = &self.output;
        let mut acc = *bias;
        for (idx, w) in edges {
            acc += i128::from(*w) * i128::from(hidden[*idx as usize]);
        }
        acc
    }

    /// Evaluates on input numerators, returning the output numerator.
    pub fn eval_nums(&self, x: &[i64], scratch: &mut Vec<i64>, next: &mut Vec<i64>) -> i64 {
        self.eval_hidden(x, scratch, next);
        self.round_clamp(self.output_exact(scratch))
    }
}

/// Exhaustive evaluation over a sub-box of the grid, as a dense map from
/// input numerators (row-major) to output numerators.
#[derive(Debug)]
pub struct GridMap {
    pub lo: Vec<i64>,
    pub extent: Vec<usize>,
    pub values: Vec<i64>,
}

impl GridMap {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Iterates `(input numerators, output numerator)`.
    pub fn iter(&self) -> impl Iterator<Item = (Vec<i64>, i64)> + '_ {
        (0..self.values.len()).map(|flat| (self.coords(flat), self.values[flat]))
    }

    pub fn coords(&self, mut flat: usize) -> Vec<i64> {
        let mut c = vec![0i64; self.extent.len()];
        for d in (0..self.extent.len()).rev() {
            c[d] = self.lo[d] + (flat % self.extent[d]) as i64;
            flat /= self.extent[d];
        }
        c
    }
}

/// Evaluates the network on every grid point of `[lo, hi]^d` (numerator
/// bounds per dimension, inclusive). Uses the compiled path when possible
/// and falls back to the reference evaluator otherwise.
pub fn eval_grid(
    net: &QuantizedNet,
    lo: &[i64],
    hi: &[i64],
    budget: u64,
) -> Result<GridMap, NetError> {
    assert_eq!(lo.len(), net.input_dim);
    assert_eq!(hi.len(), net.input_dim);
    let extent: Vec<usize> = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| usize::try_from(b - a + 1).expect("nonempty box"))
        .collect();
    let points: u64 = extent.iter().map(|e| *e as u64).product();
    if points > budget {
        return Err(NetError::BudgetExceeded { points, budget });
    }
    let total = points as usize;
    let coords = |mut flat: usize| -> Vec<i64> {
        let mut c = vec![0i64; extent.len()];
        for d in (0..extent.len()).rev() {
            c[d] = lo[d] + (flat % extent[d]) as i64;
            flat /= extent[d];
        }
        c
    };
    let values: Result<Vec<i64>, NetError> = if let Some(compiled) = CompiledNet::compile(net) {
        Ok((0..total)
            .into_par_iter()
            .map_init(
                || (Vec::new(), Vec::new()),
                |(scratch, next), flat| compiled.eval_nums(&coords(flat), scratch, next),
            )
            .collect())
    } else {
        (0..total)
            .into_par_iter()
            .map(|flat| {
                let xs: Vec<FxNum> = coords(flat)
                    .into_iter()
                    .map(|k| FxNum::new(k, net.format.s()))
                    .collect();
                net.eval(&xs)
                    .map(|v| v.numerator().to_i64().expect("grid output"))
            })
            .collect()
    };
    Ok(GridMap {
        lo: lo.to_vec(),
        extent,
        values: values?,
    })
}

/// Evaluates over the full grid `Q_{p,s}^d`.
pub fn eval_full_grid(net: &QuantizedNet, budget: u64) -> Result<GridMap, NetError> {
    let m = net.format.max_numerator().to_i64().expect("desk scale");
    let lo = vec![-m; net.input_dim];
    let hi = vec![m; net.input_dim];
    eval_grid(net, &lo, &hi, budget)
}

/// A real-parameter reference network for differential testing: exact
/// rational weights, the same single-rounding rule on every affine output,
/// an exact-rational activation, and an unrounded final combination.
pub struct RealNet {
    pub format: FxFormat,
    pub input_dim: usize,
    pub hidden: Vec<Vec<RealNeuron>>,
    /// Output weights applied to the last hidden layer, with no rounding.
    pub output: Vec<RealNeuron>,
    /// σ as an exact map on grid values (e.g. ReLU); must keep the grid.
    pub act: crate::act::ActivationSpec,
}

pub struct RealNeuron {
    pub inputs: Vec<(usize, ScaledExact)>,
    pub bias: ScaledExact,
}

impl RealNet {
    /// Evaluates with real (exact rational) weights: each hidden affine is
    /// rounded once, σ is applied exactly, and the final combination is the
    /// exact unrounded sum of the output neurons' values.
    pub fn eval_reference(&self, x: &[FxNum]) -> Result<ScaledExact, NetError> {
        if x.len() != self.input_dim {
            return Err(NetError::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let s = self.format.s();
        let mut z: Vec<FxNum> = x.to_vec();
        for layer in &self.hidden {
            let mut next = Vec::with_capacity(layer.len());
            for n in layer {
                let mut acc = n.bias.clone();
                for (idx, w) in &n.inputs {
                    acc = acc.add(&w.mul(&z[*idx].to_scaled()));
                }
                let rounded = round_to(self.format, &acc);
                let (num, den) = self
                    .act
                    .exact_value(&rounded)
                    .expect("grid-preserving exact activation");
                // The activations used here map grid values to grid values.
                let k = crate::fxp::round_div_away(&(num * BigInt::from(s)), &den);
                next.push(FxNum::new(k, s));
            }
            z = next;
        }
        let mut total = ScaledExact::zero(s);
        for n in &self.output {
            let mut acc = n.bias.clone();
            for (idx, w) in &n.inputs {
                acc = acc.add(&w.mul(&z[*idx].to_scaled()));
            }
            total = total.add(&acc);
        }
        Ok(total)
    }
}

/// Serializes a network; the activation table travels separately and is
/// referenced by name.
pub fn net_to_text(net: &QuantizedNet, table_ref: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "quniv-net v1");
    let _ = writeln!(out, "format {}", net.format);
    let _ = writeln!(out, "activation {table_ref}");
    let _ = writeln!(out, "binary {}", net.binary);
    let _ = writeln!(out, "input_dim {}", net.input_dim);
    let _ = writeln!(out, "hidden_layers {}", net.hidden.len());
    let write_neuron = |out: &mut String, n: &AffineNeuron| {
        let idx: Vec<String> = n.inputs.iter().map(|(i, _)| i.to_string()).collect();
        let ws: Vec<String> = n.inputs.iter().map(|(_, w)| w.numerator().to_string()).collect();
        let _ = writeln!(
            out,
            "{} | {} | {}",
            idx.join(" "),
            ws.join(" "),
            n.bias.numerator()
        );
    };
    for (li, layer) in net.hidden.iter().enumerate() {
        let _ = writeln!(out, "layer {li} neurons {}", layer.len());
        for n in layer {
            write_neuron(&mut out, n);
        }
    }
    let _ = writeln!(out, "output");
    write_neuron(&mut out, &net.output);
    out
}

/// Parses a network file; `resolve` maps the activation reference to its
/// table.
pub fn net_from_text(
    text: &str,
    resolve: impl FnOnce(&str) -> Result<QuantTable, NetError>,
) -> Result<QuantizedNet, NetError> {
    let bad = |m: &str| NetError::Parse(m.to_string());
    let mut lines = text.lines().peekable();
    if lines.next().map(str::trim) != Some("quniv-net v1") {
        return Err(bad("missing quniv-net v1 header"));
    }
    let mut format: Option<FxFormat> = None;
    let mut table_ref: Option<String> = None;
    let mut binary = false;
    let mut input_dim: Option<usize> = None;
    let mut n_layers: Option<usize> = None;
    while let Some(line) = lines.peek() {
        let line = line.trim();
        if let Some(v) = line.strip_prefix("format ") {
            format = Some(v.parse().map_err(|_| bad("bad format"))?);
        } else if let Some(v) = line.strip_prefix("activation ") {
            table_ref = Some(v.to_string());
        } else if let Some(v) = line.strip_prefix("binary ") {
            binary = v.parse().map_err(|_| bad("bad binary flag"))?;
        } else if let Some(v) = line.strip_prefix("input_dim ") {
            input_dim = Some(v.parse().map_err(|_| bad("bad input_dim"))?);
        } else if let Some(v) = line.strip_prefix("hidden_layers ") {
            n_layers = Some(v.parse().map_err(|_| bad("bad hidden_layers"))?);
            lines.next();
            break;
        } else {
            return Err(bad(&format!("unexpected header line {line:?}")));
        }
        lines.next();
    }
    let format = format.ok_or_else(|| bad("missing format"))?;
    let table_ref = table_ref.ok_or_else(|| bad("missing activation"))?;
    let input_dim = input_dim.ok_or_else(|| bad("missing input_dim"))?;
    let n_layers = n_layers.ok_or_else(|| bad("missing hidden_layers"))?;
    let s = format.s();
    let parse_neuron = |line: &str| -> Result<AffineNeuron, NetError> {
        let mut parts = line.split('|');
        let idx_part = parts.next().ok_or_else(|| bad("missing indices"))?;
        let w_part = parts.next().ok_or_else(|| bad("missing weights"))?;
        let b_part = parts.next().ok_or_else(|| bad("missing bias"))?;
        if parts.next().is_some() {
            return Err(bad("too many fields"));
        }
        let idxs: Result<Vec<usize>, _> = idx_part.split_whitespace().map(str::parse).collect();
        let idxs = idxs.map_err(|_| bad("bad index"))?;
        let ws: Result<Vec<BigInt>, _> = w_part.split_whitespace().map(str::parse).collect();
        let ws = ws.map_err(|_| bad("bad weight"))?;
        if idxs.len() != ws.len() {
            return Err(bad("index/weight count mismatch"));
        }
        let bias: BigInt = b_part.trim().parse().map_err(|_| bad("bad bias"))?;
        Ok(AffineNeuron {
            inputs: idxs
                .into_iter()
                .zip(ws.into_iter().map(|w| FxNum::new(w, s)))
                .collect(),
            bias: FxNum::new(bias, s),
        })
    };
    if n_layers > (1 << 16) {
        return Err(bad("implausible layer count"));
    }
    let mut hidden = Vec::with_capacity(n_layers);
    for li in 0..n_layers {
        let head = lines.next().ok_or_else(|| bad("missing layer header"))?;
        let head = head.trim();
        let rest = head
            .strip_prefix(&format!("layer {li} neurons "))
            .ok_or_else(|| bad(&format!("bad layer header {head:?}")))?;
        let count: usize = rest.parse().map_err(|_| bad("bad neuron count"))?;
        if count > (1 << 22) {
            return Err(bad("implausible neuron count"));
        }
        let mut layer = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let line = lines.next().ok_or_else(|| bad("missing neuron"))?;
            layer.push(parse_neuron(line)?);
        }
        hidden.push(layer);
    }
    if lines.next().map(str::trim) != Some("output") {
        return Err(bad("missing output marker"));
    }
    let out_line = lines.next().ok_or_else(|| bad("missing output neuron"))?;
    let output = parse_neuron(out_line)?;
    let table = resolve(&table_ref)?;
    if table.format != format {
        return Err(bad("activation table format mismatch"));
    }
    let net = QuantizedNet {
        format,
        table: Arc::new(table),
        input_dim,
        hidden,
        output,
        binary,
    };
    net.validate()?;
    Ok(net)
}

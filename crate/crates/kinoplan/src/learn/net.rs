//! The maneuver-set network: parameters, forward pass, backward pass, and
//! the binary model format.
//!
//! All parameters live in one flat vector laid out unit by unit (a unit is
//! one linear layer: row-major weights, then biases). The canonical unit
//! order is:
//!
//! 1. state encoder layers 1 and 2,
//! 2. occupancy encoder layers 1 and 2,
//! 3. heuristic encoder layers 1 and 2,
//! 4. for each head k = 0..=N: hidden layer, then output layer.
//!
//! Hidden activations are ReLU (encoder outputs included). Head outputs are
//! squashed per component: tanh for the two normalized accelerations,
//! logistic for the normalized duration, so predictions always denormalize
//! to feasible controls.

use std::io::{self, Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scalar::{real, Real};
use crate::sim::Maneuver;

/// Components per predicted maneuver: `(a_left, a_right, duration)`.
pub const MANEUVER_DIM: usize = 3;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("bad magic bytes (not a {expected} file)")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    BadVersion(u32),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("file truncated")]
    Truncated,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Layer widths of the whole computation graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    /// Local map side length G (inputs are G*G grids).
    pub grid_size: usize,
    /// Number of exploratory heads N (total heads N + 1).
    pub exploratory: usize,
    pub state_features: usize,
    pub state_hidden: usize,
    pub state_out: usize,
    pub map_hidden: usize,
    pub map_out: usize,
    pub head_hidden: usize,
}

impl ModelDims {
    pub fn new(grid_size: usize, exploratory: usize) -> Self {
        Self {
            grid_size,
            exploratory,
            state_features: 4,
            state_hidden: 32,
            state_out: 16,
            map_hidden: 64,
            map_out: 32,
            head_hidden: 64,
        }
    }

    #[inline]
    pub fn heads(&self) -> usize {
        self.exploratory + 1
    }

    #[inline]
    pub fn map_input(&self) -> usize {
        self.grid_size * self.grid_size
    }

    /// Input width of head `k`: head 0 sees all three embeddings; later
    /// heads swap the heuristic embedding for the k maneuvers predicted
    /// so far.
    #[inline]
    pub fn head_input(&self, k: usize) -> usize {
        if k == 0 {
            self.state_out + 2 * self.map_out
        } else {
            self.state_out + self.map_out + MANEUVER_DIM * k
        }
    }

    fn unit_shapes(&self) -> Vec<(usize, usize)> {
        let mut units = vec![
            (self.state_features, self.state_hidden),
            (self.state_hidden, self.state_out),
            (self.map_input(), self.map_hidden),
            (self.map_hidden, self.map_out),
            (self.map_input(), self.map_hidden),
            (self.map_hidden, self.map_out),
        ];
        for k in 0..self.heads() {
            units.push((self.head_input(k), self.head_hidden));
            units.push((self.head_hidden, MANEUVER_DIM));
        }
        units
    }

    pub fn param_count(&self) -> usize {
        self.unit_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

const UNIT_FX1: usize = 0;
const UNIT_FX2: usize = 1;
const UNIT_FO1: usize = 2;
const UNIT_FO2: usize = 3;
const UNIT_FH1: usize = 4;
const UNIT_FH2: usize = 5;

#[inline]
fn unit_head_hidden(k: usize) -> usize {
    6 + 2 * k
}

#[inline]
fn unit_head_out(k: usize) -> usize {
    7 + 2 * k
}

/// Network parameters in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    dims: ModelDims,
    offsets: Vec<(usize, usize, usize, usize)>, // (w_off, b_off, in, out)
    data: Vec<T>,
}

impl<T: Real> ModelParams<T> {
    fn layout(dims: ModelDims) -> Vec<(usize, usize, usize, usize)> {
        let mut offsets = Vec::new();
        let mut cursor = 0usize;
        for (i, o) in dims.unit_shapes() {
            offsets.push((cursor, cursor + i * o, i, o));
            cursor += i * o + o;
        }
        offsets
    }

    pub fn zeros(dims: ModelDims) -> Self {
        let offsets = Self::layout(dims);
        let len = dims.param_count();
        Self { dims, offsets, data: vec![T::zero(); len] }
    }

    /// Scaled uniform fan-in initialization: weights uniform in
    /// `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, biases zero.
    pub fn init(dims: ModelDims, seed: u64) -> Self {
        let mut model = Self::zeros(dims);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for &(w_off, b_off, in_dim, _) in &model.offsets {
            let scale = T::one() / T::from_usize(in_dim).unwrap().sqrt();
            for w in &mut model.data[w_off..b_off] {
                *w = rng.gen_range(-scale..=scale);
            }
        }
        model
    }

    pub fn dims(&self) -> ModelDims {
        self.dims
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn param_count(&self) -> usize {
        self.data.len()
    }

    #[inline]
    fn unit(&self, idx: usize) -> (&[T], &[T], usize, usize) {
        let (w_off, b_off, in_dim, out_dim) = self.offsets[idx];
        (&self.data[w_off..b_off], &self.data[b_off..b_off + out_dim], in_dim, out_dim)
    }

    /// `(weight slice range, bias slice range)` of a unit within the flat
    /// parameter vector; used by the gradient code and tests.
    #[inline]
    fn unit_ranges(&self, idx: usize) -> (std::ops::Range<usize>, std::ops::Range<usize>) {
        let (w_off, b_off, _, out_dim) = self.offsets[idx];
        (w_off..b_off, b_off..b_off + out_dim)
    }
}

/// Borrowed network inputs for one record.
#[derive(Debug, Clone, Copy)]
pub struct NetInput<'a, T> {
    pub features: &'a [T],
    pub occupancy: &'a [T],
    pub heuristic_map: &'a [T],
}

/// Intermediate activations of one forward pass (kept for backprop).
#[derive(Debug, Clone)]
pub struct Trace<T> {
    fx_hidden: Vec<T>,
    fx_out: Vec<T>,
    fo_hidden: Vec<T>,
    fo_out: Vec<T>,
    fh_hidden: Vec<T>,
    fh_out: Vec<T>,
    head_inputs: Vec<Vec<T>>,
    head_hidden: Vec<Vec<T>>,
    /// Pre-squash head outputs.
    head_linear: Vec<[T; MANEUVER_DIM]>,
    /// Squashed predictions, rows 0..=N.
    pub outputs: Vec<[T; MANEUVER_DIM]>,
}

#[inline]
fn linear<T: Real>(w: &[T], b: &[T], x: &[T], out: &mut Vec<T>) {
    let in_dim = x.len();
    out.clear();
    out.reserve(b.len());
    for (o, &bias) in b.iter().enumerate() {
        let row = &w[o * in_dim..(o + 1) * in_dim];
        let mut acc = bias;
        for (wi, xi) in row.iter().zip(x) {
            acc = acc + *wi * *xi;
        }
        out.push(acc);
    }
}

#[inline]
fn relu_inplace<T: Real>(v: &mut [T]) {
    for x in v.iter_mut() {
        if *x < T::zero() {
            *x = T::zero();
        }
    }
}

#[inline]
fn sigmoid<T: Real>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

fn two_layer<T: Real>(m: &ModelParams<T>, u1: usize, u2: usize, x: &[T], hidden: &mut Vec<T>, out: &mut Vec<T>) {
    let (w1, b1, in1, _) = m.unit(u1);
    debug_assert_eq!(in1, x.len());
    linear(w1, b1, x, hidden);
    relu_inplace(hidden);
    let (w2, b2, _, _) = m.unit(u2);
    linear(w2, b2, hidden, out);
    relu_inplace(out);
}

fn forward_impl<T: Real>(
    m: &ModelParams<T>,
    input: &NetInput<T>,
    u0_override: Option<[T; MANEUVER_DIM]>,
) -> Trace<T> {
    let dims = m.dims;
    assert_eq!(input.features.len(), dims.state_features, "state feature width");
    assert_eq!(input.occupancy.len(), dims.map_input(), "occupancy grid size");
    assert_eq!(input.heuristic_map.len(), dims.map_input(), "heuristic grid size");

    let mut trace = Trace {
        fx_hidden: Vec::new(),
        fx_out: Vec::new(),
        fo_hidden: Vec::new(),
        fo_out: Vec::new(),
        fh_hidden: Vec::new(),
        fh_out: Vec::new(),
        head_inputs: Vec::with_capacity(dims.heads()),
        head_hidden: Vec::with_capacity(dims.heads()),
        head_linear: Vec::with_capacity(dims.heads()),
        outputs: Vec::with_capacity(dims.heads()),
    };
    two_layer(m, UNIT_FX1, UNIT_FX2, input.features, &mut trace.fx_hidden, &mut trace.fx_out);
    two_layer(m, UNIT_FO1, UNIT_FO2, input.occupancy, &mut trace.fo_hidden, &mut trace.fo_out);
    two_layer(m, UNIT_FH1, UNIT_FH2, input.heuristic_map, &mut trace.fh_hidden, &mut trace.fh_out);

    for k in 0..dims.heads() {
        let mut x = Vec::with_capacity(dims.head_input(k));
        x.extend_from_slice(&trace.fx_out);
        x.extend_from_slice(&trace.fo_out);
        if k == 0 {
            x.extend_from_slice(&trace.fh_out);
        } else {
            for j in 0..k {
                let row = if j == 0 {
                    u0_override.unwrap_or(trace.outputs[0])
                } else {
                    trace.outputs[j]
                };
                x.extend_from_slice(&row);
            }
        }
        let mut hidden = Vec::new();
        let (w1, b1, _, _) = m.unit(unit_head_hidden(k));
        linear(w1, b1, &x, &mut hidden);
        relu_inplace(&mut hidden);
        let mut lin = Vec::new();
        let (w2, b2, _, _) = m.unit(unit_head_out(k));
        linear(w2, b2, &hidden, &mut lin);
        let linear_out = [lin[0], lin[1], lin[2]];
        let squashed = [lin[0].tanh(), lin[1].tanh(), sigmoid(lin[2])];
        trace.head_inputs.push(x);
        trace.head_hidden.push(hidden);
        trace.head_linear.push(linear_out);
        trace.outputs.push(squashed);
    }
    trace
}

/// Full forward pass, keeping activations for backprop.
pub fn forward<T: Real>(m: &ModelParams<T>, input: &NetInput<T>) -> Trace<T> {
    forward_impl(m, input, None)
}

/// Forward pass returning only the predicted rows.
pub fn forward_outputs<T: Real>(m: &ModelParams<T>, input: &NetInput<T>) -> Vec<[T; MANEUVER_DIM]> {
    forward(m, input).outputs
}

fn linear_backward<T: Real>(
    w: &[T],
    x: &[T],
    dz: &[T],
    gw: &mut [T],
    gb: &mut [T],
    dx: Option<&mut [T]>,
) {
    let in_dim = x.len();
    for (o, &d) in dz.iter().enumerate() {
        gb[o] = gb[o] + d;
        let row = &mut gw[o * in_dim..(o + 1) * in_dim];
        for (g, &xi) in row.iter_mut().zip(x) {
            *g = *g + d * xi;
        }
    }
    if let Some(dx) = dx {
        for v in dx.iter_mut() {
            *v = T::zero();
        }
        for (o, &d) in dz.iter().enumerate() {
            let row = &w[o * in_dim..(o + 1) * in_dim];
            for (v, &wi) in dx.iter_mut().zip(row) {
                *v = *v + d * wi;
            }
        }
    }
}

#[inline]
fn relu_mask<T: Real>(activation: &[T], d: &mut [T]) {
    for (v, &a) in d.iter_mut().zip(activation) {
        if a <= T::zero() {
            *v = T::zero();
        }
    }
}

/// Accumulate into `grad` the gradient of `sum_k d_outputs[k] . outputs[k]`
/// with respect to every parameter, including the paths through the
/// predicted maneuvers that feed later heads.
pub fn backward<T: Real>(
    m: &ModelParams<T>,
    input: &NetInput<T>,
    trace: &Trace<T>,
    d_outputs: &[[T; MANEUVER_DIM]],
    grad: &mut [T],
) {
    let dims = m.dims;
    assert_eq!(d_outputs.len(), dims.heads());
    assert_eq!(grad.len(), m.param_count());

    let mut d_u: Vec<[T; MANEUVER_DIM]> = d_outputs.to_vec();
    let mut d_fx = vec![T::zero(); dims.state_out];
    let mut d_fo = vec![T::zero(); dims.map_out];
    let mut d_fh = vec![T::zero(); dims.map_out];

    // Heads in reverse so feedback gradients into earlier predictions are
    // complete before those heads run.
    for k in (0..dims.heads()).rev() {
        let y = trace.outputs[k];
        let mut dz = [T::zero(); MANEUVER_DIM];
        dz[0] = d_u[k][0] * (T::one() - y[0] * y[0]);
        dz[1] = d_u[k][1] * (T::one() - y[1] * y[1]);
        dz[2] = d_u[k][2] * y[2] * (T::one() - y[2]);

        let hidden = &trace.head_hidden[k];
        let mut d_hidden = vec![T::zero(); hidden.len()];
        {
            let (w2, _, _, _) = m.unit(unit_head_out(k));
            let (wr, br) = m.unit_ranges(unit_head_out(k));
            let (gw, gb) = {
                let (a, b) = grad[wr.start..br.end].split_at_mut(wr.end - wr.start);
                (a, b)
            };
            linear_backward(w2, hidden, &dz, gw, gb, Some(&mut d_hidden));
        }
        relu_mask(hidden, &mut d_hidden);

        let x = &trace.head_inputs[k];
        let mut d_input = vec![T::zero(); x.len()];
        {
            let (w1, _, _, _) = m.unit(unit_head_hidden(k));
            let (wr, br) = m.unit_ranges(unit_head_hidden(k));
            let (gw, gb) = {
                let (a, b) = grad[wr.start..br.end].split_at_mut(wr.end - wr.start);
                (a, b)
            };
            linear_backward(w1, x, &d_hidden, gw, gb, Some(&mut d_input));
        }

        // Scatter the input gradient back onto the concatenated sources.
        let mut cursor = 0usize;
        for v in d_fx.iter_mut() {
            *v = *v + d_input[cursor];
            cursor += 1;
        }
        for v in d_fo.iter_mut() {
            *v = *v + d_input[cursor];
            cursor += 1;
        }
        if k == 0 {
            for v in d_fh.iter_mut() {
                *v = *v + d_input[cursor];
                cursor += 1;
            }
        } else {
            for j in 0..k {
                for c in 0..MANEUVER_DIM {
                    d_u[j][c] = d_u[j][c] + d_input[cursor];
                    cursor += 1;
                }
            }
        }
        debug_assert_eq!(cursor, x.len());
    }

    let mut encoder = |u1: usize, u2: usize, x: &[T], hidden: &Vec<T>, out: &Vec<T>, mut d_out: Vec<T>| {
        relu_mask(out, &mut d_out);
        let mut d_hidden = vec![T::zero(); hidden.len()];
        {
            let (w2, _, _, _) = m.unit(u2);
            let (wr, br) = m.unit_ranges(u2);
            let (gw, gb) = {
                let (a, b) = grad[wr.start..br.end].split_at_mut(wr.end - wr.start);
                (a, b)
            };
            linear_backward(w2, hidden, &d_out, gw, gb, Some(&mut d_hidden));
        }
        relu_mask(hidden, &mut d_hidden);
        {
            let (w1, _, _, _) = m.unit(u1);
            let (wr, br) = m.unit_ranges(u1);
            let (gw, gb) = {
                let (a, b) = grad[wr.start..br.end].split_at_mut(wr.end - wr.start);
                (a, b)
            };
            linear_backward(w1, x, &d_hidden, gw, gb, None);
        }
    };
    encoder(UNIT_FX1, UNIT_FX2, input.features, &trace.fx_hidden, &trace.fx_out, d_fx);
    encoder(UNIT_FO1, UNIT_FO2, input.occupancy, &trace.fo_hidden, &trace.fo_out, d_fo);
    encoder(UNIT_FH1, UNIT_FH2, input.heuristic_map, &trace.fh_hidden, &trace.fh_out, d_fh);
}

/// Denormalize one predicted row into a maneuver: accelerations scale by
/// `a_max`, the duration maps into `dur_range` and snaps to the nearest
/// positive multiple of `dt` inside the range.
pub fn denormalize_maneuver<T: Real>(
    row: &[T; MANEUVER_DIM],
    a_max: T,
    dur_range: (T, T),
    dt: T,
) -> Maneuver<T> {
    let k_lo = (dur_range.0 / dt).round().max(T::one());
    let k_hi = (dur_range.1 / dt).round().max(k_lo);
    let dur = dur_range.0 + row[2] * (dur_range.1 - dur_range.0);
    let k = (dur / dt).round().max(k_lo).min(k_hi);
    Maneuver::new(row[0] * a_max, row[1] * a_max, k * dt)
}

const MODEL_MAGIC: &[u8; 4] = b"KPNN";
const MODEL_VERSION: u32 = 1;

fn write_u32<W: Write>(out: &mut W, v: u32) -> io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf).map_err(|_| DataError::Truncated)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32<R: Read>(input: &mut R) -> Result<f32, DataError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf).map_err(|_| DataError::Truncated)?;
    Ok(f32::from_le_bytes(buf))
}

/// Serialize: magic, version, the eight dimensions, the parameter count,
/// then every parameter as a little-endian f32 in canonical unit order.
pub fn save_model<T: Real, W: Write>(m: &ModelParams<T>, out: &mut W) -> io::Result<()> {
    out.write_all(MODEL_MAGIC)?;
    write_u32(out, MODEL_VERSION)?;
    for v in [
        m.dims.grid_size,
        m.dims.exploratory,
        m.dims.state_features,
        m.dims.state_hidden,
        m.dims.state_out,
        m.dims.map_hidden,
        m.dims.map_out,
        m.dims.head_hidden,
    ] {
        write_u32(out, v as u32)?;
    }
    out.write_all(&(m.data.len() as u64).to_le_bytes())?;
    for &p in &m.data {
        out.write_all(&(p.to_f32().expect("finite parameter")).to_le_bytes())?;
    }
    Ok(())
}

pub fn load_model<T: Real, R: Read>(input: &mut R) -> Result<ModelParams<T>, DataError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|_| DataError::Truncated)?;
    if &magic != MODEL_MAGIC {
        return Err(DataError::BadMagic { expected: "KPNN" });
    }
    let version = read_u32(input)?;
    if version != MODEL_VERSION {
        return Err(DataError::BadVersion(version));
    }
    let mut dims = [0usize; 8];
    for d in dims.iter_mut() {
        *d = read_u32(input)? as usize;
    }
    let dims = ModelDims {
        grid_size: dims[0],
        exploratory: dims[1],
        state_features: dims[2],
        state_hidden: dims[3],
        state_out: dims[4],
        map_hidden: dims[5],
        map_out: dims[6],
        head_hidden: dims[7],
    };
    let mut count_buf = [0u8; 8];
    input.read_exact(&mut count_buf).map_err(|_| DataError::Truncated)?;
    let count = u64::from_le_bytes(count_buf) as usize;
    if count != dims.param_count() {
        return Err(DataError::DimensionMismatch(format!(
            "parameter count {count} does not match dimensions ({} expected)",
            dims.param_count()
        )));
    }
    let mut model = ModelParams::zeros(dims);
    for p in model.data.iter_mut() {
        *p = real(read_f32(input)? as f64);
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_dims() -> ModelDims {
        ModelDims::new(4, 2)
    }

    fn random_input(dims: ModelDims, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features: Vec<f64> = (0..dims.state_features).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let occ: Vec<f64> = (0..dims.map_input()).map(|_| f64::from(rng.gen_bool(0.3))).collect();
        let heur: Vec<f64> = (0..dims.map_input()).map(|_| rng.gen_range(0.0..1.0)).collect();
        (features, occ, heur)
    }

    #[test]
    fn zero_parameters_predict_neutral_rows() {
        let dims = small_dims();
        let m = ModelParams::<f64>::zeros(dims);
        let (f, o, h) = random_input(dims, 1);
        let out = forward_outputs(&m, &NetInput { features: &f, occupancy: &o, heuristic_map: &h });
        assert_eq!(out.len(), 3);
        for row in out {
            assert_eq!(row, [0.0, 0.0, 0.5]);
        }
    }

    #[test]
    fn forward_is_stateless() {
        let dims = small_dims();
        let m = ModelParams::<f64>::init(dims, 3);
        let (f1, o1, h1) = random_input(dims, 10);
        let (f2, o2, h2) = random_input(dims, 11);
        let in1 = NetInput { features: &f1, occupancy: &o1, heuristic_map: &h1 };
        let in2 = NetInput { features: &f2, occupancy: &o2, heuristic_map: &h2 };
        let a1 = forward_outputs(&m, &in1);
        let _ = forward_outputs(&m, &in2);
        let a1_again = forward_outputs(&m, &in1);
        assert_eq!(a1, a1_again);
    }

    // Independent straight-line re-implementation of the graph, reading the
    // parameter vector through raw offsets.
    fn naive_forward(m: &ModelParams<f64>, f: &[f64], o: &[f64], h: &[f64]) -> Vec<[f64; 3]> {
        let dims = m.dims();
        let data = m.data();
        let shapes = dims.unit_shapes();
        let mut offs = Vec::new();
        let mut c = 0usize;
        for (i, out) in &shapes {
            offs.push((c, c + i * out, *i, *out));
            c += i * out + out;
        }
        let dense = |unit: usize, x: &[f64], relu: bool| -> Vec<f64> {
            let (w0, b0, in_dim, out_dim) = offs[unit];
            let mut y = vec![0.0; out_dim];
            for (oi, yo) in y.iter_mut().enumerate() {
                let mut acc = data[b0 + oi];
                for (xi, &xv) in x.iter().enumerate().take(in_dim) {
                    acc += data[w0 + oi * in_dim + xi] * xv;
                }
                *yo = if relu && acc < 0.0 { 0.0 } else { acc };
            }
            y
        };
        let fx = dense(1, &dense(0, f, true), true);
        let fo = dense(3, &dense(2, o, true), true);
        let fh = dense(5, &dense(4, h, true), true);
        let mut outputs: Vec<[f64; 3]> = Vec::new();
        for k in 0..dims.heads() {
            let mut x = Vec::new();
            x.extend_from_slice(&fx);
            x.extend_from_slice(&fo);
            if k == 0 {
                x.extend_from_slice(&fh);
            } else {
                for row in outputs.iter().take(k) {
                    x.extend_from_slice(row);
                }
            }
            let hidden = dense(6 + 2 * k, &x, true);
            let lin = dense(7 + 2 * k, &hidden, false);
            outputs.push([lin[0].tanh(), lin[1].tanh(), 1.0 / (1.0 + (-lin[2]).exp())]);
        }
        outputs
    }

    #[test]
    fn forward_matches_independent_reimplementation() {
        let dims = small_dims();
        let m = ModelParams::<f64>::init(dims, 0);
        let (f, o, h) = random_input(dims, 42);
        let fast = forward_outputs(&m, &NetInput { features: &f, occupancy: &o, heuristic_map: &h });
        let slow = naive_forward(&m, &f, &o, &h);
        assert_eq!(fast.len(), slow.len());
        for (a, b) in fast.iter().zip(&slow) {
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn feedback_wiring_reaches_later_heads() {
        // Perturbing head 0's output bias must change every exploratory
        // prediction through the maneuver feedback path.
        let dims = small_dims();
        let mut m = ModelParams::<f64>::init(dims, 5);
        let (f, o, h) = random_input(dims, 6);
        let input = NetInput { features: &f, occupancy: &o, heuristic_map: &h };
        let base = forward_outputs(&m, &input);
        let (_, br) = m.unit_ranges(unit_head_out(0));
        m.data_mut()[br.start] += 0.35;
        let bumped = forward_outputs(&m, &input);
        assert!((base[0][0] - bumped[0][0]).abs() > 1e-9);
        for k in 1..dims.heads() {
            let delta: f64 = (0..3).map(|c| (base[k][c] - bumped[k][c]).abs()).sum();
            assert!(delta > 1e-12, "head {k} ignored the feedback input");
        }
    }

    #[test]
    fn heuristic_embedding_feeds_only_head_zero() {
        // With the first prediction clamped, perturbing the heuristic
        // encoder must leave the exploratory heads untouched.
        let dims = small_dims();
        let mut m = ModelParams::<f64>::init(dims, 7);
        let (f, o, h) = random_input(dims, 8);
        let input = NetInput { features: &f, occupancy: &o, heuristic_map: &h };
        let clamp = [0.11, -0.22, 0.6];
        let base = forward_impl(&m, &input, Some(clamp));
        let (wr, _) = m.unit_ranges(UNIT_FH1);
        m.data_mut()[wr.start] += 0.5;
        let bumped = forward_impl(&m, &input, Some(clamp));
        assert!((base.outputs[0][2] - bumped.outputs[0][2]).abs() > 0.0 || base.outputs[0] != bumped.outputs[0]);
        for k in 1..dims.heads() {
            assert_eq!(base.outputs[k], bumped.outputs[k], "head {k} depends on the heuristic embedding");
        }
    }

    #[test]
    fn model_round_trip_is_bit_exact() {
        let dims = ModelDims::new(8, 3);
        let m = ModelParams::<f32>::init(dims, 9);
        let mut bytes = Vec::new();
        save_model(&m, &mut bytes).unwrap();
        let loaded: ModelParams<f32> = load_model(&mut bytes.as_slice()).unwrap();
        assert_eq!(m, loaded);

        let mut bytes2 = Vec::new();
        save_model(&loaded, &mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);

        // f32 files widen losslessly into f64 models.
        let wide: ModelParams<f64> = load_model(&mut bytes.as_slice()).unwrap();
        let mut bytes3 = Vec::new();
        save_model(&wide, &mut bytes3).unwrap();
        assert_eq!(bytes, bytes3);
    }

    #[test]
    fn model_load_rejects_bad_magic() {
        let err = load_model::<f32, _>(&mut &b"XXXX\x01\x00\x00\x00"[..]).unwrap_err();
        assert!(matches!(err, DataError::BadMagic { .. }));
    }

    #[test]
    fn denormalize_respects_bounds_and_grid() {
        let m = denormalize_maneuver(&[0.9999, -0.9999, 0.9999], 1.0, (0.5, 2.0), 0.02);
        assert!(m.control.a_left <= 1.0 && m.control.a_right >= -1.0);
        assert!(m.duration <= 2.0 + 1e-9 && m.duration >= 0.5 - 1e-9);
        let steps = m.duration / 0.02;
        assert!((steps - steps.round()).abs() < 1e-9);

        let lo = denormalize_maneuver(&[0.0, 0.0, 0.0], 1.0, (0.5, 2.0), 0.02);
        assert!((lo.duration - 0.5).abs() < 1e-12);
    }
}

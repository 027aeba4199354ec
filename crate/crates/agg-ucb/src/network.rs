//! Group-aware scoring network and its hand-derived gradients.
//!
//! For an arm embedded as `X~` (see [`crate::embedding`]) and a normalized
//! adjacency power `S^k`, the network computes
//!
//! ```text
//! H_gnn = sqrt(1/m) * sigma(S^k * X~ * Theta_gnn)        (n x m)
//! H_0   = [H_gnn ; X~]                                   (n x d'), d' = m + d*n
//! H_l   = sqrt(1/m) * sigma(H_{l-1} * Theta_l)           (n x m), l = 1..L-1
//! r_all = sqrt(1/m) * H_{L-1} * Theta_L                  (n x 1)
//! ```
//!
//! and the score of an arm offered under group `c` is `r_all[c]`. The
//! `sqrt(1/m)` factor is applied to every layer output (including the
//! aggregation block inside `H_0`), and `sigma'` is always evaluated at the
//! unscaled pre-activation `H_{l-1} * Theta_l`.
//!
//! Because every operation after the `S^k` multiply acts row-wise, `r_all[c]`
//! depends only on row `c` of `S^k X~` and row `c` of `X~`. Gradients are
//! therefore computed on row slices in `O(n d m + L m^2)` per arm, while the
//! full-matrix forward pass (with trace) exists for inspection and tests.
//!
//! Initialization: every weight entry is drawn i.i.d. `N(0, 1)` except the
//! final layer, drawn i.i.d. `N(0, 1/m)`. The canonical flat parameter order
//! is `Theta_gnn` row-major, then `Theta_1 .. Theta_L` row-major, giving
//! `p = (d n) m + d' m + (L-2) m^2 + m` coordinates.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, s};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddedArm;
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;

/// Pointwise nonlinearity. `tanh` is the default: it is smooth, satisfies
/// `sigma(0) = 0`, and has Lipschitz constant 1 for both the function and its
/// derivative. `relu` is available but not smooth, so the gradient-smoothness
/// guarantees do not apply to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
            Activation::Relu => z.max(0.0),
        }
    }

    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Sigmoid => {
                let s = 1.0 / (1.0 + (-z).exp());
                s * (1.0 - s)
            }
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        };
        f.write_str(name)
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::InvalidConfig(format!("unknown activation: {other}"))),
        }
    }
}

/// Static dimensions of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    /// Hidden width m.
    pub m: usize,
    /// Number of fully connected layers L (at least 2).
    pub depth: usize,
    /// Raw context dimension d.
    pub d_x: usize,
    /// Number of groups n.
    pub n_groups: usize,
    pub activation: Activation,
}

impl NetworkShape {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::InvalidConfig("network width m must be positive".into()));
        }
        if self.depth < 2 {
            return Err(Error::InvalidConfig("network depth must be at least 2".into()));
        }
        if self.d_x == 0 || self.n_groups == 0 {
            return Err(Error::InvalidConfig(
                "context dimension and group count must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Embedded context dimension `d * n`.
    pub fn d_tilde(&self) -> usize {
        self.d_x * self.n_groups
    }

    /// Width of the concatenated layer `H_0`.
    pub fn d_prime(&self) -> usize {
        self.m + self.d_tilde()
    }

    /// Shape of fully connected layer `l` (1-indexed).
    fn fc_dim(&self, l: usize) -> (usize, usize) {
        debug_assert!(l >= 1 && l <= self.depth);
        let rows = if l == 1 { self.d_prime() } else { self.m };
        let cols = if l == self.depth { 1 } else { self.m };
        (rows, cols)
    }

    /// Total number of trainable coordinates.
    pub fn param_len(&self) -> usize {
        let mut len = self.d_tilde() * self.m;
        for l in 1..=self.depth {
            let (r, c) = self.fc_dim(l);
            len += r * c;
        }
        len
    }

    /// Offset of fully connected layer `l` in the canonical flat vector.
    fn fc_offset(&self, l: usize) -> usize {
        let mut off = self.d_tilde() * self.m;
        for q in 1..l {
            let (r, c) = self.fc_dim(q);
            off += r * c;
        }
        off
    }
}

/// Trainable weights.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    shape: NetworkShape,
    theta_gnn: Array2<f64>,
    theta_fc: Vec<Array2<f64>>,
}

impl NetworkParams {
    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn theta_gnn(&self) -> &Array2<f64> {
        &self.theta_gnn
    }

    pub fn theta_fc(&self, l: usize) -> &Array2<f64> {
        &self.theta_fc[l - 1]
    }

    /// Builds params from explicit matrices; shapes must match exactly.
    pub fn from_parts(
        shape: NetworkShape,
        theta_gnn: Array2<f64>,
        theta_fc: Vec<Array2<f64>>,
    ) -> Result<Self> {
        shape.validate()?;
        if theta_gnn.dim() != (shape.d_tilde(), shape.m) {
            return Err(Error::DimensionMismatch {
                context: "theta_gnn rows",
                expected: shape.d_tilde(),
                got: theta_gnn.nrows(),
            });
        }
        if theta_fc.len() != shape.depth {
            return Err(Error::DimensionMismatch {
                context: "fc layer count",
                expected: shape.depth,
                got: theta_fc.len(),
            });
        }
        for (idx, layer) in theta_fc.iter().enumerate() {
            let expected = shape.fc_dim(idx + 1);
            if layer.dim() != expected {
                return Err(Error::DimensionMismatch {
                    context: "fc layer shape",
                    expected: expected.0 * expected.1,
                    got: layer.nrows() * layer.ncols(),
                });
            }
        }
        Ok(Self {
            shape,
            theta_gnn,
            theta_fc,
        })
    }
}

fn sample_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * std)
        .collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches data length")
}

/// Draws initial weights: `N(0, 1)` everywhere except the final layer, which
/// uses `N(0, 1/m)`. Deterministic in `seed`.
pub fn init_params(shape: NetworkShape, seed: u64) -> Result<NetworkParams> {
    shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta_gnn = sample_matrix(&mut rng, shape.d_tilde(), shape.m, 1.0);
    let mut theta_fc = Vec::with_capacity(shape.depth);
    for l in 1..=shape.depth {
        let (rows, cols) = shape.fc_dim(l);
        let std = if l == shape.depth {
            (1.0 / shape.m as f64).sqrt()
        } else {
            1.0
        };
        theta_fc.push(sample_matrix(&mut rng, rows, cols, std));
    }
    Ok(NetworkParams {
        shape,
        theta_gnn,
        theta_fc,
    })
}

/// Full forward pass, keeping every intermediate activation.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Pre-activation of the aggregation layer, `S^k X~ Theta_gnn`.
    pub gnn_pre: Array2<f64>,
    /// `sqrt(1/m) sigma(gnn_pre)`.
    pub h_gnn: Array2<f64>,
    /// Concatenation `[h_gnn ; X~]`.
    pub h0: Array2<f64>,
    /// Post-activation hidden layers `H_1 .. H_{L-1}`.
    pub hidden: Vec<Array2<f64>>,
    /// Scores of the arm under every group.
    pub r_all: Array1<f64>,
    /// `r_all[group]` for the requested group.
    pub selected: f64,
}

fn validate_inputs(
    s_power: &NormalizedAdjacency,
    embedded: &EmbeddedArm,
    group: usize,
    params: &NetworkParams,
) -> Result<()> {
    let shape = &params.shape;
    if embedded.n_groups() != shape.n_groups {
        return Err(Error::DimensionMismatch {
            context: "embedding group count",
            expected: shape.n_groups,
            got: embedded.n_groups(),
        });
    }
    if s_power.n_groups() != shape.n_groups {
        return Err(Error::DimensionMismatch {
            context: "adjacency group count",
            expected: shape.n_groups,
            got: s_power.n_groups(),
        });
    }
    if embedded.features().len() != shape.d_x {
        return Err(Error::DimensionMismatch {
            context: "context dimension",
            expected: shape.d_x,
            got: embedded.features().len(),
        });
    }
    if group >= shape.n_groups {
        return Err(Error::GroupOutOfRange {
            group,
            n_groups: shape.n_groups,
        });
    }
    Ok(())
}

/// Scores an arm under `group` and returns every intermediate activation.
pub fn forward(
    s_power: &NormalizedAdjacency,
    embedded: &EmbeddedArm,
    group: usize,
    params: &NetworkParams,
) -> Result<(f64, ForwardTrace)> {
    validate_inputs(s_power, embedded, group, params)?;
    let shape = &params.shape;
    let n = shape.n_groups;
    let m = shape.m;
    let scale = (1.0 / m as f64).sqrt();
    let act = shape.activation;

    let product = embedded.multiply_right(&params.theta_gnn.view())?;
    let gnn_pre = s_power.matrix().dot(&product);
    let h_gnn = gnn_pre.mapv(|z| scale * act.apply(z));

    let mut h0 = Array2::zeros((n, shape.d_prime()));
    h0.slice_mut(s![.., ..m]).assign(&h_gnn);
    h0.slice_mut(s![.., m..]).assign(&embedded.to_dense());

    let mut hidden = Vec::with_capacity(shape.depth - 1);
    let mut current = h0.clone();
    for l in 1..shape.depth {
        let pre = current.dot(&params.theta_fc[l - 1]);
        current = pre.mapv(|z| scale * act.apply(z));
        hidden.push(current.clone());
    }
    let r_all_mat = current.dot(&params.theta_fc[shape.depth - 1]);
    let r_all = r_all_mat.column(0).mapv(|v| scale * v);
    let selected = r_all[group];
    Ok((
        selected,
        ForwardTrace {
            gnn_pre,
            h_gnn,
            h0,
            hidden,
            r_all,
            selected,
        },
    ))
}

/// Row-level forward pass: everything needed to score one arm under one
/// group and to backpropagate from that score.
struct RowPass {
    pre_gnn: Array1<f64>,
    h_gnn: Array1<f64>,
    /// Unscaled pre-activations of layers 1..=L-1.
    pre: Vec<Array1<f64>>,
    /// Scaled post-activations of layers 1..=L-1.
    h: Vec<Array1<f64>>,
    value: f64,
}

fn row_pass(
    s_power: &NormalizedAdjacency,
    embedded: &EmbeddedArm,
    group: usize,
    params: &NetworkParams,
) -> Result<RowPass> {
    validate_inputs(s_power, embedded, group, params)?;
    let shape = &params.shape;
    let m = shape.m;
    let d = shape.d_x;
    let scale = (1.0 / m as f64).sqrt();
    let act = shape.activation;
    let x = embedded.features();
    let s_row = s_power.matrix().row(group);

    // pre_gnn = sum_c s_row[c] * (x^T Theta_gnn[block c]).
    let mut pre_gnn = Array1::zeros(m);
    for c in 0..shape.n_groups {
        let weight = s_row[c];
        if weight == 0.0 {
            continue;
        }
        let block = params.theta_gnn.slice(s![c * d..(c + 1) * d, ..]);
        let contrib = x.dot(&block);
        pre_gnn.scaled_add(weight, &contrib);
    }
    let h_gnn = pre_gnn.mapv(|z| scale * act.apply(z));

    // Layer 1 sees h_0[group] = [h_gnn ; x~_group]; only block `group` of the
    // skip half is nonzero.
    let theta1 = &params.theta_fc[0];
    let top = theta1.slice(s![..m, ..]);
    let skip = theta1.slice(s![m + group * d..m + (group + 1) * d, ..]);
    let pre1 = h_gnn.dot(&top) + x.dot(&skip);

    let mut pre = Vec::with_capacity(shape.depth - 1);
    let mut h = Vec::with_capacity(shape.depth - 1);
    let mut current = pre1.mapv(|z| scale * act.apply(z));
    pre.push(pre1);
    h.push(current.clone());
    for l in 2..shape.depth {
        let pre_l = current.dot(&params.theta_fc[l - 1]);
        current = pre_l.mapv(|z| scale * act.apply(z));
        pre.push(pre_l);
        h.push(current.clone());
    }
    let theta_last = &params.theta_fc[shape.depth - 1];
    let value = scale * current.dot(&theta_last.column(0));
    Ok(RowPass {
        pre_gnn,
        h_gnn,
        pre,
        h,
        value,
    })
}

/// Scores one arm under `group` without building the full trace.
pub fn forward_value(
    s_power: &NormalizedAdjacency,
    embedded: &EmbeddedArm,
    group: usize,
    params: &NetworkParams,
) -> Result<f64> {
    Ok(row_pass(s_power, embedded, group, params)?.value)
}

/// Computes the score of one arm and adds `factor(score) *
/// d score / d theta` into `acc` (canonical flat layout). Returns the score.
///
/// This single entry point serves both plain gradients (`factor = 1`) and
/// squared-loss gradients (`factor = score - reward`) without a second
/// forward pass.
pub fn value_and_accumulate(
    s_power: &NormalizedAdjacency,
    embedded: &EmbeddedArm,
    group: usize,
    params: &NetworkParams,
    factor: impl FnOnce(f64) -> f64,
    acc: &mut [f64],
) -> Result<f64> {
    let shape = &params.shape;
    if acc.len() != shape.param_len() {
        return Err(Error::DimensionMismatch {
            context: "gradient accumulator",
            expected: shape.param_len(),
            got: acc.len(),
        });
    }
    let pass = row_pass(s_power, embedded, group, params)?;
    let weight = factor(pass.value);
    if weight != 0.0 {
        backprop_row(s_power, embedded, group, params, &pass, weight, acc);
    }
    Ok(pass.value)
}

fn backprop_row(
    s_power: &NormalizedAdjacency,
    embedded: &EmbeddedArm,
    group: usize,
    params: &NetworkParams,
    pass: &RowPass,
    weight: f64,
    acc: &mut [f64],
) {
    let shape = &params.shape;
    let m = shape.m;
    let d = shape.d_x;
    let depth = shape.depth;
    let scale = (1.0 / m as f64).sqrt();
    let act = shape.activation;
    let x = embedded.features();

    // Final layer: d value / d Theta_L = scale * h_{L-1}.
    {
        let off = shape.fc_offset(depth);
        let h_last = &pass.h[depth - 2];
        let out = &mut acc[off..off + m];
        for (o, hi) in out.iter_mut().zip(h_last.iter()) {
            *o += weight * scale * hi;
        }
    }

    // delta = d value / d h_l, walking backwards from l = L-1.
    let theta_last = &params.theta_fc[depth - 1];
    let mut delta: Array1<f64> = theta_last.column(0).mapv(|v| scale * v);

    for l in (1..depth).rev() {
        // d value / d pre_l, with sigma' at the unscaled pre-activation.
        let pre_l = &pass.pre[l - 1];
        let mut dpre = Array1::zeros(m);
        for j in 0..m {
            dpre[j] = scale * delta[j] * act.derivative(pre_l[j]);
        }
        if l >= 2 {
            let h_prev = &pass.h[l - 2];
            let off = shape.fc_offset(l);
            let out = &mut acc[off..off + m * m];
            for i in 0..m {
                let hi = weight * h_prev[i];
                if hi == 0.0 {
                    continue;
                }
                let row = &mut out[i * m..(i + 1) * m];
                for (o, dj) in row.iter_mut().zip(dpre.iter()) {
                    *o += hi * dj;
                }
            }
            delta = params.theta_fc[l - 1].dot(&dpre);
        } else {
            // Layer 1 input is [h_gnn ; x~_group]: gradient lands on the top
            // m rows and on skip block `group`; upstream flow continues only
            // through the h_gnn half.
            let off = shape.fc_offset(1);
            for i in 0..m {
                let hi = weight * pass.h_gnn[i];
                if hi == 0.0 {
                    continue;
                }
                let row = &mut acc[off + i * m..off + (i + 1) * m];
                for (o, dj) in row.iter_mut().zip(dpre.iter()) {
                    *o += hi * dj;
                }
            }
            let skip_base = off + (m + group * d) * m;
            for i in 0..d {
                let xi = weight * x[i];
                if xi == 0.0 {
                    continue;
                }
                let row = &mut acc[skip_base + i * m..skip_base + (i + 1) * m];
                for (o, dj) in row.iter_mut().zip(dpre.iter()) {
                    *o += xi * dj;
                }
            }
            let top = params.theta_fc[0].slice(s![..m, ..]);
            delta = top.dot(&dpre);
        }
    }

    // Aggregation layer: pre_gnn = sum_c s_row[c] * x^T Theta_gnn[block c].
    let mut dpre_gnn = Array1::zeros(m);
    for j in 0..m {
        dpre_gnn[j] = scale * delta[j] * act.derivative(pass.pre_gnn[j]);
    }
    let s_row = s_power.matrix().row(group);
    for c in 0..shape.n_groups {
        let sc = s_row[c];
        if sc == 0.0 {
            continue;
        }
        let base = (c * d) * m;
        for i in 0..d {
            let xi = weight * sc * x[i];
            if xi == 0.0 {
                continue;
            }
            let row = &mut acc[base + i * m..base + (i + 1) * m];
            for (o, dj) in row.iter_mut().zip(dpre_gnn.iter()) {
                *o += xi * dj;
            }
        }
    }
}

/// Gradient of the arm's score with respect to the canonical flat parameter
/// vector.
pub fn gradient(
    s_power: &NormalizedAdjacency,
    embedded: &EmbeddedArm,
    group: usize,
    params: &NetworkParams,
) -> Result<Array1<f64>> {
    let mut acc = vec![0.0; params.shape.param_len()];
    value_and_accumulate(s_power, embedded, group, params, |_| 1.0, &mut acc)?;
    Ok(Array1::from(acc))
}

/// Canonical flattening: `Theta_gnn` row-major, then each fully connected
/// layer row-major.
pub fn flatten(params: &NetworkParams) -> Array1<f64> {
    let mut out = Vec::with_capacity(params.shape.param_len());
    out.extend(params.theta_gnn.iter().copied());
    for layer in &params.theta_fc {
        out.extend(layer.iter().copied());
    }
    Array1::from(out)
}

/// Inverse of [`flatten`].
pub fn unflatten(shape: NetworkShape, flat: ArrayView1<f64>) -> Result<NetworkParams> {
    shape.validate()?;
    if flat.len() != shape.param_len() {
        return Err(Error::DimensionMismatch {
            context: "unflatten",
            expected: shape.param_len(),
            got: flat.len(),
        });
    }
    let data: Vec<f64> = flat.to_vec();
    let mut cursor = 0;
    let gnn_len = shape.d_tilde() * shape.m;
    let theta_gnn =
        Array2::from_shape_vec((shape.d_tilde(), shape.m), data[..gnn_len].to_vec())
            .expect("length checked");
    cursor += gnn_len;
    let mut theta_fc = Vec::with_capacity(shape.depth);
    for l in 1..=shape.depth {
        let (rows, cols) = shape.fc_dim(l);
        let len = rows * cols;
        let layer = Array2::from_shape_vec((rows, cols), data[cursor..cursor + len].to_vec())
            .expect("length checked");
        theta_fc.push(layer);
        cursor += len;
    }
    Ok(NetworkParams {
        shape,
        theta_gnn,
        theta_fc,
    })
}

/// Adds `factor * delta` to the parameters, with `delta` in canonical flat
/// layout. Used by gradient descent (`factor = -eta`).
pub fn apply_flat_update(params: &mut NetworkParams, delta: &[f64], factor: f64) -> Result<()> {
    let shape = params.shape;
    if delta.len() != shape.param_len() {
        return Err(Error::DimensionMismatch {
            context: "parameter update",
            expected: shape.param_len(),
            got: delta.len(),
        });
    }
    let mut cursor = 0;
    {
        let slice = params
            .theta_gnn
            .as_slice_mut()
            .expect("standard layout");
        let len = slice.len();
        for (p, d) in slice.iter_mut().zip(&delta[..len]) {
            *p += factor * d;
        }
        cursor += len;
    }
    for layer in &mut params.theta_fc {
        let slice = layer.as_slice_mut().expect("standard layout");
        let len = slice.len();
        for (p, d) in slice.iter_mut().zip(&delta[cursor..cursor + len]) {
            *p += factor * d;
        }
        cursor += len;
    }
    Ok(())
}

/// Writes parameters as a text snapshot: a header line
/// `m,depth,d_x,n_groups,activation` followed by one coordinate per line in
/// canonical order. Round-trips bit-exactly through [`load_params`].
pub fn save_params(params: &NetworkParams, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    let shape = &params.shape;
    writeln!(
        file,
        "{},{},{},{},{}",
        shape.m, shape.depth, shape.d_x, shape.n_groups, shape.activation
    )?;
    for v in flatten(params).iter() {
        writeln!(file, "{v}")?;
    }
    Ok(())
}

/// Reads a snapshot written by [`save_params`].
pub fn load_params(path: &Path) -> Result<NetworkParams> {
    let display = path.display().to_string();
    let parse_err = |line: usize, message: &str| Error::Parse {
        path: display.clone(),
        line,
        message: message.to_string(),
    };
    let file = BufReader::new(std::fs::File::open(path)?);
    let mut lines = file.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header"))??;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() != 5 {
        return Err(parse_err(1, "header must have 5 fields"));
    }
    let parse_usize = |idx: usize| -> Result<usize> {
        fields[idx]
            .trim()
            .parse()
            .map_err(|_| parse_err(1, "invalid integer in header"))
    };
    let shape = NetworkShape {
        m: parse_usize(0)?,
        depth: parse_usize(1)?,
        d_x: parse_usize(2)?,
        n_groups: parse_usize(3)?,
        activation: fields[4].trim().parse()?,
    };
    shape.validate()?;
    let mut values = Vec::with_capacity(shape.param_len());
    for (idx, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: f64 = line
            .trim()
            .parse()
            .map_err(|_| parse_err(idx + 2, "invalid float"))?;
        values.push(v);
    }
    unflatten(shape, Array1::from(values).view())
}

// ---------------------------------------------------------------------------
// Plain fully connected scorer used by the pooled and independent baselines.
// ---------------------------------------------------------------------------

/// Dimensions of a plain FC scorer: `Theta_1` is `input_dim x m`, middle
/// layers are `m x m`, the last is `m x 1`, with the same `sqrt(1/m)` scaling
/// and initialization scheme as the group-aware network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FcShape {
    pub input_dim: usize,
    pub m: usize,
    pub depth: usize,
    pub activation: Activation,
}

impl FcShape {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.input_dim == 0 {
            return Err(Error::InvalidConfig("fc width and input must be positive".into()));
        }
        if self.depth < 2 {
            return Err(Error::InvalidConfig("fc depth must be at least 2".into()));
        }
        Ok(())
    }

    fn dim(&self, l: usize) -> (usize, usize) {
        let rows = if l == 1 { self.input_dim } else { self.m };
        let cols = if l == self.depth { 1 } else { self.m };
        (rows, cols)
    }

    pub fn param_len(&self) -> usize {
        (1..=self.depth).map(|l| {
            let (r, c) = self.dim(l);
            r * c
        })
        .sum()
    }

    fn offset(&self, l: usize) -> usize {
        (1..l)
            .map(|q| {
                let (r, c) = self.dim(q);
                r * c
            })
            .sum()
    }
}

/// Weights of the plain FC scorer.
#[derive(Debug, Clone)]
pub struct FcParams {
    shape: FcShape,
    layers: Vec<Array2<f64>>,
}

impl FcParams {
    pub fn shape(&self) -> &FcShape {
        &self.shape
    }

    pub fn layer(&self, l: usize) -> &Array2<f64> {
        &self.layers[l - 1]
    }
}

/// Same scheme as [`init_params`]: `N(0, 1)` entries, final layer `N(0, 1/m)`.
pub fn init_fc_params(shape: FcShape, seed: u64) -> Result<FcParams> {
    shape.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(shape.depth);
    for l in 1..=shape.depth {
        let (rows, cols) = shape.dim(l);
        let std = if l == shape.depth {
            (1.0 / shape.m as f64).sqrt()
        } else {
            1.0
        };
        layers.push(sample_matrix(&mut rng, rows, cols, std));
    }
    Ok(FcParams { shape, layers })
}

struct FcPass {
    pre: Vec<Array1<f64>>,
    h: Vec<Array1<f64>>,
    value: f64,
}

fn fc_pass(params: &FcParams, input: ArrayView1<f64>) -> Result<FcPass> {
    let shape = &params.shape;
    if input.len() != shape.input_dim {
        return Err(Error::DimensionMismatch {
            context: "fc input",
            expected: shape.input_dim,
            got: input.len(),
        });
    }
    let scale = (1.0 / shape.m as f64).sqrt();
    let act = shape.activation;
    let mut pre = Vec::with_capacity(shape.depth - 1);
    let mut h = Vec::with_capacity(shape.depth - 1);
    let mut current = input.dot(&params.layers[0]);
    pre.push(current.clone());
    let mut post = current.mapv(|z| scale * act.apply(z));
    h.push(post.clone());
    for l in 2..shape.depth {
        current = post.dot(&params.layers[l - 1]);
        post = current.mapv(|z| scale * act.apply(z));
        pre.push(current.clone());
        h.push(post.clone());
    }
    let value = scale * post.dot(&params.layers[shape.depth - 1].column(0));
    Ok(FcPass { pre, h, value })
}

/// Score of the FC network on one input.
pub fn fc_value(params: &FcParams, input: ArrayView1<f64>) -> Result<f64> {
    Ok(fc_pass(params, input)?.value)
}

/// FC analogue of [`value_and_accumulate`].
pub fn fc_value_and_accumulate(
    params: &FcParams,
    input: ArrayView1<f64>,
    factor: impl FnOnce(f64) -> f64,
    acc: &mut [f64],
) -> Result<f64> {
    let shape = &params.shape;
    if acc.len() != shape.param_len() {
        return Err(Error::DimensionMismatch {
            context: "fc gradient accumulator",
            expected: shape.param_len(),
            got: acc.len(),
        });
    }
    let pass = fc_pass(params, input)?;
    let weight = factor(pass.value);
    if weight == 0.0 {
        return Ok(pass.value);
    }
    let m = shape.m;
    let depth = shape.depth;
    let scale = (1.0 / m as f64).sqrt();
    let act = shape.activation;

    {
        let off = shape.offset(depth);
        let h_last = &pass.h[depth - 2];
        let out = &mut acc[off..off + m];
        for (o, hi) in out.iter_mut().zip(h_last.iter()) {
            *o += weight * scale * hi;
        }
    }
    let mut delta: Array1<f64> = params.layers[depth - 1].column(0).mapv(|v| scale * v);
    for l in (1..depth).rev() {
        let pre_l = &pass.pre[l - 1];
        let cols = pre_l.len();
        let mut dpre = Array1::zeros(cols);
        for j in 0..cols {
            dpre[j] = scale * delta[j] * act.derivative(pre_l[j]);
        }
        let off = shape.offset(l);
        let rows = shape.dim(l).0;
        for i in 0..rows {
            let hi = weight
                * if l == 1 {
                    input[i]
                } else {
                    pass.h[l - 2][i]
                };
            if hi == 0.0 {
                continue;
            }
            let row = &mut acc[off + i * cols..off + (i + 1) * cols];
            for (o, dj) in row.iter_mut().zip(dpre.iter()) {
                *o += hi * dj;
            }
        }
        if l > 1 {
            delta = params.layers[l - 1].dot(&dpre);
        }
    }
    Ok(pass.value)
}

/// Gradient of the FC score in flat layout (layers in order, row-major).
pub fn fc_gradient(params: &FcParams, input: ArrayView1<f64>) -> Result<Array1<f64>> {
    let mut acc = vec![0.0; params.shape.param_len()];
    fc_value_and_accumulate(params, input, |_| 1.0, &mut acc)?;
    Ok(Array1::from(acc))
}

/// Adds `factor * delta` to FC parameters (flat layout).
pub fn fc_apply_flat_update(params: &mut FcParams, delta: &[f64], factor: f64) -> Result<()> {
    if delta.len() != params.shape.param_len() {
        return Err(Error::DimensionMismatch {
            context: "fc parameter update",
            expected: params.shape.param_len(),
            got: delta.len(),
        });
    }
    let mut cursor = 0;
    for layer in &mut params.layers {
        let slice = layer.as_slice_mut().expect("standard layout");
        let len = slice.len();
        for (p, d) in slice.iter_mut().zip(&delta[cursor..cursor + len]) {
            *p += factor * d;
        }
        cursor += len;
    }
    Ok(())
}

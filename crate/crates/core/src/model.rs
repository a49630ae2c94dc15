//! Per-subdomain coordinate network.
//!
//! Pipeline: random Fourier features `[cos(Bx), sin(Bx)]` with a frozen
//! Gaussian frequency matrix `B`, one linear layer, `depth − 1` blocks of
//! `linear → layer norm → tanh`, and a linear output scaled by
//! `output_scale`. Gradients are derived by hand for this fixed pipeline.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};

/// Variance floor of the layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub input_dim: usize,
    /// Number of frequency rows; the embedding has twice as many features.
    pub rff_count: usize,
    pub rff_scale: f64,
    pub width: usize,
    /// Number of hidden linear layers (the first one has no activation).
    pub depth: usize,
    pub output_dim: usize,
    /// Displacement scale applied to the raw output (meters).
    pub output_scale: f64,
    pub seed: u64,
}

impl NetworkSpec {
    /// Defaults: 32 frequencies at scale 1, four hidden layers of width 56.
    pub fn new(dim: usize) -> Self {
        NetworkSpec {
            input_dim: dim,
            rff_count: 32,
            rff_scale: 1.0,
            width: 56,
            depth: 4,
            output_dim: dim,
            output_scale: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [self.input_dim, self.rff_count, self.width, self.depth, self.output_dim];
        if counts.contains(&0) {
            return Err(Error::Validation(format!("network counts must be >= 1: {self:?}")));
        }
        if self.width < 2 && self.depth > 1 {
            return Err(Error::Validation("layer normalization needs width >= 2".into()));
        }
        if !(self.rff_scale > 0.0 && self.rff_scale.is_finite()) {
            return Err(Error::Validation("rff_scale must be positive".into()));
        }
        if !(self.output_scale > 0.0 && self.output_scale.is_finite()) {
            return Err(Error::Validation("output_scale must be positive".into()));
        }
        Ok(())
    }

    /// Number of trainable scalars.
    pub fn parameter_count(&self) -> usize {
        let (f, w, d) = (2 * self.rff_count, self.width, self.output_dim);
        (f * w + w) + (self.depth - 1) * (w * w + 3 * w) + (w * d + d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `fan_in × fan_out`
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn glorot(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        Linear {
            weight: Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenBlock {
    pub linear: Linear,
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// All trainable tensors in declared order. Also used for gradients and
/// optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Trainable {
    pub input: Linear,
    pub blocks: Vec<HiddenBlock>,
    pub output: Linear,
}

pub type Gradient = Trainable;

impl Trainable {
    pub fn zeros_like(spec: &NetworkSpec) -> Self {
        let w = spec.width;
        Trainable {
            input: Linear::zeros(2 * spec.rff_count, w),
            blocks: (1..spec.depth)
                .map(|_| HiddenBlock {
                    linear: Linear::zeros(w, w),
                    gamma: Array1::zeros(w),
                    beta: Array1::zeros(w),
                })
                .collect(),
            output: Linear::zeros(w, spec.output_dim),
        }
    }

    /// Tensors as flat slices: input W, b; per block W, b, γ, β; output W, b.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.input.weight.as_slice().unwrap(),
            self.input.bias.as_slice().unwrap(),
        ];
        for b in &self.blocks {
            out.push(b.linear.weight.as_slice().unwrap());
            out.push(b.linear.bias.as_slice().unwrap());
            out.push(b.gamma.as_slice().unwrap());
            out.push(b.beta.as_slice().unwrap());
        }
        out.push(self.output.weight.as_slice().unwrap());
        out.push(self.output.bias.as_slice().unwrap());
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.input.weight.as_slice_mut().unwrap(),
            self.input.bias.as_slice_mut().unwrap(),
        ];
        for b in &mut self.blocks {
            out.push(b.linear.weight.as_slice_mut().unwrap());
            out.push(b.linear.bias.as_slice_mut().unwrap());
            out.push(b.gamma.as_slice_mut().unwrap());
            out.push(b.beta.as_slice_mut().unwrap());
        }
        out.push(self.output.weight.as_slice_mut().unwrap());
        out.push(self.output.bias.as_slice_mut().unwrap());
        out
    }

    pub fn len(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.slices().concat()
    }

    /// Overwrites all tensors from a flat vector in declared order.
    pub fn set_from_slice(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} values, got {}",
                self.len(),
                values.len()
            )));
        }
        let mut offset = 0;
        for s in self.slices_mut() {
            s.copy_from_slice(&values[offset..offset + s.len()]);
            offset += s.len();
        }
        Ok(())
    }

    /// `Σ self·other` over all entries.
    pub fn dot(&self, other: &Trainable) -> f64 {
        self.slices()
            .iter()
            .zip(other.slices())
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    /// Frozen `rff_count × input_dim` frequency matrix.
    pub frequencies: Array2<f64>,
    pub trainable: Trainable,
    version: u64,
}

impl NetworkParams {
    /// Incremented on every parameter update; activations from older
    /// versions are rejected by [`backward`].
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn bump_version(&mut self) {
        self.version += 1;
    }
}

/// Samples `B ~ N(0, σ²)` and Glorot-uniform weights from the seeded
/// generator; biases and `β` start at 0, `γ` at 1.
pub fn init_network(spec: &NetworkSpec) -> Result<NetworkParams> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let normal = Normal::new(0.0, spec.rff_scale).map_err(|e| Error::Validation(e.to_string()))?;
    let frequencies = Array2::from_shape_simple_fn((spec.rff_count, spec.input_dim), || normal.sample(&mut rng));
    let w = spec.width;
    let input = Linear::glorot(2 * spec.rff_count, w, &mut rng);
    let blocks = (1..spec.depth)
        .map(|_| HiddenBlock {
            linear: Linear::glorot(w, w, &mut rng),
            gamma: Array1::ones(w),
            beta: Array1::zeros(w),
        })
        .collect();
    let output = Linear::glorot(w, spec.output_dim, &mut rng);
    Ok(NetworkParams {
        spec: spec.clone(),
        frequencies,
        trainable: Trainable { input, blocks, output },
        version: 0,
    })
}

/// Maps coordinates affinely onto `[-1, 1]^d` using the box `(lo, hi)`.
pub fn normalize_coords(coords: &Array2<f64>, lo: &[f64], hi: &[f64]) -> Array2<f64> {
    let mut out = coords.clone();
    for (k, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let span = hi[k] - lo[k];
        if span > 0.0 {
            col.mapv_inplace(|x| 2.0 * (x - lo[k]) / span - 1.0);
        } else {
            col.fill(0.0);
        }
    }
    out
}

/// Row-wise `[cos(x Bᵀ), sin(x Bᵀ)]`.
pub fn rff_embed(coords: &Array2<f64>, frequencies: &Array2<f64>) -> Array2<f64> {
    let proj = coords.dot(&frequencies.t());
    let m = frequencies.nrows();
    let mut out = Array2::zeros((coords.nrows(), 2 * m));
    for (i, row) in proj.outer_iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            out[[i, j]] = p.cos();
            out[[i, m + j]] = p.sin();
        }
    }
    out
}

/// `(v − mean)/√(var + eps) · γ + β` over the vector.
pub fn layer_norm(v: ArrayView1<f64>, gamma: &Array1<f64>, beta: &Array1<f64>, eps: f64) -> Array1<f64> {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + eps).sqrt();
    v.iter()
        .zip(gamma)
        .zip(beta)
        .map(|((x, g), b)| (x - mean) * inv * g + b)
        .collect()
}

#[derive(Debug, Clone)]
struct BlockCache {
    input: Array2<f64>,
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
    output: Array2<f64>,
}

/// Intermediate values retained by [`forward`] for [`backward`].
#[derive(Debug, Clone)]
pub struct Activations {
    version: u64,
    features: Array2<f64>,
    blocks: Vec<BlockCache>,
    last_hidden: Array2<f64>,
}

impl Activations {
    pub fn batch_size(&self) -> usize {
        self.features.nrows()
    }

    /// Post-tanh outputs of every hidden block.
    pub fn hidden_outputs(&self) -> impl Iterator<Item = &Array2<f64>> {
        self.blocks.iter().map(|b| &b.output)
    }
}

/// Forward pass on normalized coordinates.
pub fn forward(params: &NetworkParams, coords: &Array2<f64>) -> Result<(Array2<f64>, Activations)> {
    if coords.ncols() != params.spec.input_dim {
        return Err(Error::ShapeMismatch(format!(
            "coordinates have {} columns, network expects {}",
            coords.ncols(),
            params.spec.input_dim
        )));
    }
    forward_features(params, rff_embed(coords, &params.frequencies))
}

/// Forward pass from precomputed Fourier features.
pub fn forward_features(params: &NetworkParams, features: Array2<f64>) -> Result<(Array2<f64>, Activations)> {
    let t = &params.trainable;
    if features.ncols() != t.input.weight.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "features have {} columns, network expects {}",
            features.ncols(),
            t.input.weight.nrows()
        )));
    }
    let mut h = t.input.apply(&features);
    let mut blocks = Vec::with_capacity(t.blocks.len());
    let width = params.spec.width as f64;
    for block in &t.blocks {
        let a = block.linear.apply(&h);
        let mut xhat = a;
        let mut inv_std = Array1::zeros(xhat.nrows());
        for (mut row, inv) in xhat.outer_iter_mut().zip(inv_std.iter_mut()) {
            let mean = row.sum() / width;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / width;
            *inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            let s = *inv;
            row.mapv_inplace(|x| (x - mean) * s);
        }
        let mut out = &xhat * &block.gamma + &block.beta;
        out.mapv_inplace(f64::tanh);
        blocks.push(BlockCache {
            input: std::mem::replace(&mut h, out.clone()),
            xhat,
            inv_std,
            output: out,
        });
    }
    let mut y = t.output.apply(&h);
    y *= params.spec.output_scale;
    Ok((
        y,
        Activations {
            version: params.version,
            features,
            blocks,
            last_hidden: h,
        },
    ))
}

/// Reverse-mode gradient of a scalar loss given `∂loss/∂output`.
pub fn backward(params: &NetworkParams, acts: &Activations, upstream: &Array2<f64>) -> Result<Gradient> {
    if acts.version != params.version {
        return Err(Error::StaleActivations {
            cached: acts.version,
            current: params.version,
        });
    }
    if upstream.dim() != (acts.batch_size(), params.spec.output_dim) {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient is {:?}, expected {:?}",
            upstream.dim(),
            (acts.batch_size(), params.spec.output_dim)
        )));
    }
    let t = &params.trainable;
    let g_out = upstream * params.spec.output_scale;
    let output = Linear {
        weight: acts.last_hidden.t().dot(&g_out),
        bias: g_out.sum_axis(Axis(0)),
    };
    let mut g_h = g_out.dot(&t.output.weight.t());

    let width = params.spec.width as f64;
    let mut blocks = Vec::with_capacity(t.blocks.len());
    for (block, cache) in t.blocks.iter().zip(&acts.blocks).rev() {
        // tanh'
        let mut g_y = g_h;
        g_y.zip_mut_with(&cache.output, |g, &o| *g *= 1.0 - o * o);
        let d_gamma = (&g_y * &cache.xhat).sum_axis(Axis(0));
        let d_beta = g_y.sum_axis(Axis(0));
        let mut g_a = g_y * &block.gamma;
        for ((mut ga, xh), &inv) in g_a.outer_iter_mut().zip(cache.xhat.outer_iter()).zip(&cache.inv_std) {
            let mean_g = ga.sum() / width;
            let mean_gx = ga.iter().zip(&xh).map(|(g, x)| g * x).sum::<f64>() / width;
            ga.zip_mut_with(&xh, |g, &x| *g = inv * (*g - mean_g - x * mean_gx));
        }
        blocks.push(HiddenBlock {
            linear: Linear {
                weight: cache.input.t().dot(&g_a),
                bias: g_a.sum_axis(Axis(0)),
            },
            gamma: d_gamma,
            beta: d_beta,
        });
        g_h = g_a.dot(&block.linear.weight.t());
    }
    blocks.reverse();
    let input = Linear {
        weight: acts.features.t().dot(&g_h),
        bias: g_h.sum_axis(Axis(0)),
    };
    Ok(Trainable { input, blocks, output })
}

const MAGIC: &[u8; 5] = b"DPNN1";

/// Writes the binary checkpoint to `path` and a text manifest next to it
/// (`<path>.manifest`).
pub fn save_checkpoint(params: &NetworkParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let s = &params.spec;
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    for v in [s.input_dim, s.rff_count, s.width, s.depth, s.output_dim] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    buf.extend_from_slice(&s.rff_scale.to_le_bytes());
    buf.extend_from_slice(&s.output_scale.to_le_bytes());
    buf.extend_from_slice(&s.seed.to_le_bytes());
    let values: Vec<f64> = params
        .frequencies
        .iter()
        .copied()
        .chain(params.trainable.to_vec())
        .collect();
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in &values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, &buf).map_err(|e| Error::io(path, e))?;

    let manifest = manifest_path(path);
    let file = File::create(&manifest).map_err(|e| Error::io(&manifest, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "format DPNN1")?;
        writeln!(w, "input_dim {}", s.input_dim)?;
        writeln!(w, "rff_count {}", s.rff_count)?;
        writeln!(w, "rff_scale {:e}", s.rff_scale)?;
        writeln!(w, "width {}", s.width)?;
        writeln!(w, "depth {}", s.depth)?;
        writeln!(w, "output_dim {}", s.output_dim)?;
        writeln!(w, "output_scale {:e}", s.output_scale)?;
        writeln!(w, "seed {}", s.seed)?;
        writeln!(w, "tensor frequencies {}x{}", s.rff_count, s.input_dim)?;
        let t = &params.trainable;
        writeln!(
            w,
            "tensor input.weight {}x{}",
            t.input.weight.nrows(),
            t.input.weight.ncols()
        )?;
        writeln!(w, "tensor input.bias {}", t.input.bias.len())?;
        for (i, b) in t.blocks.iter().enumerate() {
            writeln!(
                w,
                "tensor block{i}.weight {}x{}",
                b.linear.weight.nrows(),
                b.linear.weight.ncols()
            )?;
            writeln!(w, "tensor block{i}.bias {}", b.linear.bias.len())?;
            writeln!(w, "tensor block{i}.gamma {}", b.gamma.len())?;
            writeln!(w, "tensor block{i}.beta {}", b.beta.len())?;
        }
        writeln!(
            w,
            "tensor output.weight {}x{}",
            t.output.weight.nrows(),
            t.output.weight.ncols()
        )?;
        writeln!(w, "tensor output.bias {}", t.output.bias.len())?;
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(&manifest, e))
}

fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".manifest");
    p.into()
}

/// Loads a checkpoint, rejecting it unless its header matches `expected`.
pub fn load_checkpoint(path: impl AsRef<Path>, expected: &NetworkSpec) -> Result<NetworkParams> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let bad = |msg: &str| Error::Validation(format!("checkpoint {}: {msg}", path.display()));
    if bytes.len() < MAGIC.len() || &bytes[..5] != MAGIC {
        return Err(bad("bad magic"));
    }
    let mut pos = 5;
    let mut next8 = || -> Result<[u8; 8]> {
        let chunk = bytes
            .get(pos..pos + 8)
            .ok_or_else(|| bad("truncated"))?
            .try_into()
            .unwrap();
        pos += 8;
        Ok(chunk)
    };
    let mut ints = [0usize; 5];
    for v in &mut ints {
        *v = u64::from_le_bytes(next8()?) as usize;
    }
    let rff_scale = f64::from_le_bytes(next8()?);
    let output_scale = f64::from_le_bytes(next8()?);
    let seed = u64::from_le_bytes(next8()?);
    let spec = NetworkSpec {
        input_dim: ints[0],
        rff_count: ints[1],
        width: ints[2],
        depth: ints[3],
        output_dim: ints[4],
        rff_scale,
        output_scale,
        seed,
    };
    let structural = |s: &NetworkSpec| {
        (
            s.input_dim,
            s.rff_count,
            s.width,
            s.depth,
            s.output_dim,
            s.rff_scale.to_bits(),
            s.output_scale.to_bits(),
        )
    };
    if structural(&spec) != structural(expected) {
        return Err(bad(&format!("spec mismatch: file has {spec:?}, expected {expected:?}")));
    }
    let count = u64::from_le_bytes(next8()?) as usize;
    let n_freq = spec.rff_count * spec.input_dim;
    if count != n_freq + spec.parameter_count() {
        return Err(bad("value count does not match spec"));
    }
    let values = (0..count)
        .map(|_| next8().map(f64::from_le_bytes))
        .collect::<Result<Vec<f64>>>()?;
    let frequencies = Array2::from_shape_vec((spec.rff_count, spec.input_dim), values[..n_freq].to_vec())
        .map_err(|e| bad(&e.to_string()))?;
    let mut trainable = Trainable::zeros_like(&spec);
    trainable.set_from_slice(&values[n_freq..])?;
    Ok(NetworkParams {
        spec,
        frequencies,
        trainable,
        version: 0,
    })
}

//! Fully-connected networks: forward evaluation and reverse-mode
//! vector-Jacobian products with respect to the flat parameter vector.
//!
//! Parameter layout is layer-major: for each layer, the weight matrix in
//! row-major order (in_dim x out_dim) followed by the biases. Only VJPs are
//! ever formed; the full Jacobian is never materialized.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpArchitecture {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
}

impl MlpArchitecture {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::Config(
                "architecture needs at least input and output widths".into(),
            ));
        }
        if layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config("all layer widths must be >= 1".into()));
        }
        Ok(MlpArchitecture {
            layer_widths,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.layer_widths.len() - 1
    }

    /// k = sum over layers of (in + 1) * out.
    pub fn param_count(&self) -> usize {
        self.layer_widths
            .windows(2)
            .map(|w| (w[0] + 1) * w[1])
            .sum()
    }

    /// Draw an initial parameter vector with per-layer fan-in scaling:
    /// weights ~ N(0, gain / in_dim), biases zero. The gain is 2 for relu and
    /// 1 otherwise. Keeps wide networks in the responsive range of their
    /// activations, where an unscaled Gaussian init saturates every unit.
    pub fn fan_in_init(&self, rng: &mut crate::rng::RngState) -> ParamVector {
        let gain = match self.activation {
            Activation::Relu => 2.0,
            _ => 1.0,
        };
        let mut w = Vec::with_capacity(self.param_count());
        for pair in self.layer_widths.windows(2) {
            let (i, o) = (pair[0], pair[1]);
            let scale = (gain / i as f64).sqrt();
            w.extend(rng.gaussian_vector(i * o).into_iter().map(|v| v * scale));
            w.extend(std::iter::repeat(0.0).take(o));
        }
        ParamVector(w)
    }
}

/// Flat vector of all weights and biases (also reused for momentum).
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(k: usize) -> Self {
        ParamVector(vec![0.0; k])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn add_scaled(&mut self, other: &ParamVector, scale: f64) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.0 {
            *a *= s;
        }
    }

    pub fn dot(&self, other: &ParamVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Network outputs evaluated at a point set.
#[derive(Debug, Clone)]
pub struct FunctionBatch {
    pub points: DenseMatrix,
    pub values: DenseMatrix,
}

/// Per-layer weight/bias views of a flat parameter vector.
pub struct LayerParams<'a> {
    pub weights: &'a [f64], // in_dim * out_dim row-major
    pub biases: &'a [f64],  // out_dim
    pub in_dim: usize,
    pub out_dim: usize,
}

fn layer_params<'a>(arch: &MlpArchitecture, w: &'a [f64]) -> Vec<LayerParams<'a>> {
    let mut layers = Vec::with_capacity(arch.num_layers());
    let mut off = 0;
    for pair in arch.layer_widths.windows(2) {
        let (i, o) = (pair[0], pair[1]);
        let weights = &w[off..off + i * o];
        off += i * o;
        let biases = &w[off..off + o];
        off += o;
        layers.push(LayerParams {
            weights,
            biases,
            in_dim: i,
            out_dim: o,
        });
    }
    layers
}

fn check_params(arch: &MlpArchitecture, w: &ParamVector) -> Result<()> {
    if w.len() != arch.param_count() {
        return Err(Error::DimensionMismatch(format!(
            "parameter vector of length {} for architecture with k = {}",
            w.len(),
            arch.param_count()
        )));
    }
    Ok(())
}

/// Post-activation values of every layer, input included.
struct ForwardCache {
    layer_outputs: Vec<DenseMatrix>,
}

fn forward_cached(
    arch: &MlpArchitecture,
    w: &ParamVector,
    x: &DenseMatrix,
) -> Result<ForwardCache> {
    check_params(arch, w)?;
    if x.cols() != arch.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "input of width {} for architecture expecting {}",
            x.cols(),
            arch.input_dim()
        )));
    }
    let layers = layer_params(arch, &w.0);
    let n = x.rows();
    let num_layers = layers.len();
    let mut outputs = Vec::with_capacity(num_layers + 1);
    outputs.push(x.clone());
    for (l, layer) in layers.iter().enumerate() {
        let prev = outputs.last().unwrap();
        let mut out = DenseMatrix::zeros(n, layer.out_dim);
        for r in 0..n {
            let prow = prev.row(r);
            let orow = &mut out.data_mut()[r * layer.out_dim..(r + 1) * layer.out_dim];
            orow.copy_from_slice(layer.biases);
            for (i, &p) in prow.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let wrow = &layer.weights[i * layer.out_dim..(i + 1) * layer.out_dim];
                for (o, wv) in orow.iter_mut().zip(wrow) {
                    *o += p * wv;
                }
            }
            // final layer stays affine
            if l + 1 < num_layers {
                for o in orow.iter_mut() {
                    *o = arch.activation.apply(*o);
                }
            }
        }
        outputs.push(out);
    }
    Ok(ForwardCache {
        layer_outputs: outputs,
    })
}

/// Evaluate the network at every row of `x`.
pub fn forward(arch: &MlpArchitecture, w: &ParamVector, x: &DenseMatrix) -> Result<FunctionBatch> {
    let cache = forward_cached(arch, w, x)?;
    Ok(FunctionBatch {
        points: x.clone(),
        values: cache.layer_outputs.last().unwrap().clone(),
    })
}

/// Reverse pass: g_j = sum_{i,a} cotangent[i,a] * d f_a(x_i; w) / d w_j.
pub fn vjp_params(
    arch: &MlpArchitecture,
    w: &ParamVector,
    x: &DenseMatrix,
    cotangent: &DenseMatrix,
) -> Result<ParamVector> {
    let cache = forward_cached(arch, w, x)?;
    let out = cache.layer_outputs.last().unwrap();
    if cotangent.rows() != out.rows() || cotangent.cols() != out.cols() {
        return Err(Error::DimensionMismatch(format!(
            "cotangent {}x{} for output {}x{}",
            cotangent.rows(),
            cotangent.cols(),
            out.rows(),
            out.cols()
        )));
    }
    let layers = layer_params(arch, &w.0);
    let n = x.rows();
    let mut grad = vec![0.0; w.len()];
    // delta holds d<cotangent, f>/d(pre-activation of current layer)
    let mut delta = cotangent.clone();
    let mut off_end = w.len();
    for (l, layer) in layers.iter().enumerate().rev() {
        let prev = &cache.layer_outputs[l];
        let bias_off = off_end - layer.out_dim;
        let weight_off = bias_off - layer.in_dim * layer.out_dim;
        off_end = weight_off;
        // bias and weight gradients
        for r in 0..n {
            let drow = delta.row(r);
            let prow = prev.row(r);
            for (o, d) in drow.iter().enumerate() {
                grad[bias_off + o] += d;
            }
            for (i, &p) in prow.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let g = &mut grad[weight_off + i * layer.out_dim..weight_off + (i + 1) * layer.out_dim];
                for (gv, d) in g.iter_mut().zip(drow) {
                    *gv += p * d;
                }
            }
        }
        if l == 0 {
            break;
        }
        // propagate to the previous layer's post-activation, then through its
        // activation derivative (previous layer is never the affine output)
        let mut new_delta = DenseMatrix::zeros(n, layer.in_dim);
        for r in 0..n {
            let drow = delta.row(r);
            let prow = prev.row(r);
            let nrow = &mut new_delta.data_mut()[r * layer.in_dim..(r + 1) * layer.in_dim];
            for i in 0..layer.in_dim {
                let wrow = &layer.weights[i * layer.out_dim..(i + 1) * layer.out_dim];
                let s: f64 = wrow.iter().zip(drow).map(|(a, b)| a * b).sum();
                nrow[i] = s * arch.activation.derivative_from_output(prow[i]);
            }
        }
        delta = new_delta;
    }
    Ok(ParamVector(grad))
}

/// Structured weights of one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub weights: DenseMatrix, // in_dim x out_dim
    pub biases: Vec<f64>,
}

pub fn flatten(arch: &MlpArchitecture, layers: &[LayerWeights]) -> Result<ParamVector> {
    if layers.len() != arch.num_layers() {
        return Err(Error::DimensionMismatch("layer count mismatch".into()));
    }
    let mut out = Vec::with_capacity(arch.param_count());
    for (pair, layer) in arch.layer_widths.windows(2).zip(layers) {
        if layer.weights.rows() != pair[0]
            || layer.weights.cols() != pair[1]
            || layer.biases.len() != pair[1]
        {
            return Err(Error::DimensionMismatch("layer shape mismatch".into()));
        }
        out.extend_from_slice(layer.weights.data());
        out.extend_from_slice(&layer.biases);
    }
    Ok(ParamVector(out))
}

pub fn unflatten(arch: &MlpArchitecture, w: &ParamVector) -> Result<Vec<LayerWeights>> {
    check_params(arch, w)?;
    Ok(layer_params(arch, &w.0)
        .into_iter()
        .map(|l| LayerWeights {
            weights: DenseMatrix::new(l.in_dim, l.out_dim, l.weights.to_vec()).unwrap(),
            biases: l.biases.to_vec(),
        })
        .collect())
}

/// Anything the samplers can differentiate through: forward evaluation plus
/// a vector-Jacobian product over a flat parameter vector.
pub trait Model {
    fn param_count(&self) -> usize;
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// n x c output values at the rows of `x`.
    fn forward_values(&self, w: &ParamVector, x: &DenseMatrix) -> Result<DenseMatrix>;
    fn vjp(&self, w: &ParamVector, x: &DenseMatrix, cotangent: &DenseMatrix)
        -> Result<ParamVector>;
}

impl Model for MlpArchitecture {
    fn param_count(&self) -> usize {
        MlpArchitecture::param_count(self)
    }

    fn input_dim(&self) -> usize {
        MlpArchitecture::input_dim(self)
    }

    fn output_dim(&self) -> usize {
        MlpArchitecture::output_dim(self)
    }

    fn forward_values(&self, w: &ParamVector, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(forward(self, w, x)?.values)
    }

    fn vjp(
        &self,
        w: &ParamVector,
        x: &DenseMatrix,
        cotangent: &DenseMatrix,
    ) -> Result<ParamVector> {
        vjp_params(self, w, x, cotangent)
    }
}

/// One-parameter model with constant output f(x; w) = w.
///
/// Used by the reduction checks: with a single measurement point the
/// functional drift collapses algebraically to the parameter-space drift.
pub struct ConstantModel;

impl Model for ConstantModel {
    fn param_count(&self) -> usize {
        1
    }

    fn input_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn forward_values(&self, w: &ParamVector, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(DenseMatrix::column(&vec![w.0[0]; x.rows()]))
    }

    fn vjp(
        &self,
        _w: &ParamVector,
        _x: &DenseMatrix,
        cotangent: &DenseMatrix,
    ) -> Result<ParamVector> {
        Ok(ParamVector(vec![cotangent.data().iter().sum()]))
    }
}

/// Bias-free linear model f(x; w) = w^T x, the conjugate verification target.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinearNoBiasModel {
    pub input_dim: usize,
}

impl Model for LinearNoBiasModel {
    fn param_count(&self) -> usize {
        self.input_dim
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn forward_values(&self, w: &ParamVector, x: &DenseMatrix) -> Result<DenseMatrix> {
        if w.len() != self.input_dim || x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "linear model of width {} with {} weights and {}-wide inputs",
                self.input_dim,
                w.len(),
                x.cols()
            )));
        }
        let vals: Vec<f64> = (0..x.rows())
            .map(|i| x.row(i).iter().zip(&w.0).map(|(a, b)| a * b).sum())
            .collect();
        Ok(DenseMatrix::column(&vals))
    }

    fn vjp(
        &self,
        w: &ParamVector,
        x: &DenseMatrix,
        cotangent: &DenseMatrix,
    ) -> Result<ParamVector> {
        if w.len() != self.input_dim || x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch("linear model vjp shapes".into()));
        }
        if cotangent.rows() != x.rows() || cotangent.cols() != 1 {
            return Err(Error::DimensionMismatch("linear model cotangent shape".into()));
        }
        let mut g = vec![0.0; self.input_dim];
        for i in 0..x.rows() {
            let c = cotangent.get(i, 0);
            for (gj, xj) in g.iter_mut().zip(x.row(i)) {
                *gj += c * xj;
            }
        }
        Ok(ParamVector(g))
    }
}

use std::fmt;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::l1_loss;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Which modalities feed the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignmentSource {
    /// visual and semantic, concatenated in that order
    #[serde(rename = "vs")]
    VisualSemantic,
    #[serde(rename = "v")]
    Visual,
    #[serde(rename = "s")]
    Semantic,
}

impl AlignmentSource {
    pub fn uses_visual(self) -> bool {
        !matches!(self, AlignmentSource::Semantic)
    }

    pub fn uses_semantic(self) -> bool {
        !matches!(self, AlignmentSource::Visual)
    }

    /// Row label used in reports (`V=>C` and friends).
    pub fn label(self) -> &'static str {
        match self {
            AlignmentSource::VisualSemantic => "V+S=>C",
            AlignmentSource::Visual => "V=>C",
            AlignmentSource::Semantic => "S=>C",
        }
    }
}

impl fmt::Display for AlignmentSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlignmentSource::VisualSemantic => "vs",
            AlignmentSource::Visual => "v",
            AlignmentSource::Semantic => "s",
        })
    }
}

impl std::str::FromStr for AlignmentSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vs" | "v+s" => Ok(AlignmentSource::VisualSemantic),
            "v" => Ok(AlignmentSource::Visual),
            "s" => Ok(AlignmentSource::Semantic),
            other => Err(Error::Argument(format!("unknown alignment source `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub visual_dim: usize,
    pub text_dim: usize,
    pub hidden_dim: usize,
    pub source: AlignmentSource,
    pub leaky_slope: f64,
    pub use_bias: bool,
}

impl NetworkShape {
    pub fn input_dim(&self) -> usize {
        match self.source {
            AlignmentSource::VisualSemantic => self.visual_dim + self.text_dim,
            AlignmentSource::Visual => self.visual_dim,
            AlignmentSource::Semantic => self.text_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.visual_dim == 0 || self.hidden_dim == 0 {
            return Err(Error::Argument("visual_dim and hidden_dim must be positive".into()));
        }
        if self.source.uses_semantic() && self.text_dim == 0 {
            return Err(Error::Argument(
                "text_dim must be positive when semantics are used".into(),
            ));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Argument(format!(
                "leaky_slope {} is outside (0, 1)",
                self.leaky_slope
            )));
        }
        Ok(())
    }
}

/// Weights and biases; also the layout of gradients and Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameters<T> {
    /// input_dim x hidden_dim
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    /// hidden_dim x visual_dim
    pub w2: Array2<T>,
    pub b2: Array1<T>,
}

impl<T: Real> Parameters<T> {
    pub fn zeros(shape: &NetworkShape) -> Self {
        Self {
            w1: Array2::zeros((shape.input_dim(), shape.hidden_dim)),
            b1: Array1::zeros(shape.hidden_dim),
            w2: Array2::zeros((shape.hidden_dim, shape.visual_dim)),
            b2: Array1::zeros(shape.visual_dim),
        }
    }

    /// Flat views in the fixed order `w1, b1, w2, b2` (row-major).
    pub fn tensors(&self) -> [&[T]; 4] {
        [
            self.w1.as_slice().expect("standard layout"),
            self.b1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
            self.b2.as_slice().expect("standard layout"),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 4] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentNetwork<T> {
    shape: NetworkShape,
    params: Parameters<T>,
}

/// Intermediate activations of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub pre_activation: Array2<T>,
    pub hidden: Array2<T>,
    pub output: Array2<T>,
}

impl<T: Real> AlignmentNetwork<T> {
    /// Fan-in uniform init: each weight matrix draws from `U(-a, a)` with
    /// `a = sqrt(6 / fan_in)`; biases start at zero.
    pub fn init(shape: NetworkShape, seed: u64) -> Result<Self> {
        shape.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Parameters::zeros(&shape);
        for w in [&mut params.w1, &mut params.w2] {
            let fan_in = w.nrows() as f64;
            let bound = (6.0 / fan_in).sqrt();
            for v in w.iter_mut() {
                *v = T::lit(rng.random_range(-bound..bound));
            }
        }
        Ok(Self { shape, params })
    }

    pub fn from_parameters(shape: NetworkShape, params: Parameters<T>) -> Result<Self> {
        shape.validate()?;
        let expected = Parameters::<T>::zeros(&shape);
        if params.w1.dim() != expected.w1.dim()
            || params.b1.dim() != expected.b1.dim()
            || params.w2.dim() != expected.w2.dim()
            || params.b2.dim() != expected.b2.dim()
        {
            return Err(Error::Dimension("parameter shapes do not match network shape".into()));
        }
        if !params.all_finite() {
            return Err(Error::Numerics("non-finite parameter".into()));
        }
        Ok(Self { shape, params })
    }

    pub fn shape(&self) -> &NetworkShape {
        &self.shape
    }

    pub fn params(&self) -> &Parameters<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Parameters<T> {
        &mut self.params
    }

    pub fn slope(&self) -> T {
        T::lit(self.shape.leaky_slope)
    }

    /// Builds the network input for one sample. The modality the source does
    /// not use is ignored, not zero-padded.
    pub fn input_row(&self, visual: &[T], semantic: &[T]) -> Result<Vec<T>> {
        let s = &self.shape;
        let mut row = Vec::with_capacity(s.input_dim());
        if s.source.uses_visual() {
            if visual.len() != s.visual_dim {
                return Err(Error::Dimension(format!(
                    "visual input has length {}, expected {}",
                    visual.len(),
                    s.visual_dim
                )));
            }
            row.extend_from_slice(visual);
        }
        if s.source.uses_semantic() {
            if semantic.len() != s.text_dim {
                return Err(Error::Dimension(format!(
                    "semantic input has length {}, expected {}",
                    semantic.len(),
                    s.text_dim
                )));
            }
            row.extend_from_slice(semantic);
        }
        Ok(row)
    }

    /// Reconstructed prototype `leaky([visual | semantic] W1 + b1) W2 + b2`.
    pub fn forward(&self, visual: &[T], semantic: &[T]) -> Result<Vec<T>> {
        let row = self.input_row(visual, semantic)?;
        let x = ArrayView2::from_shape((1, row.len()), &row).expect("row shape");
        Ok(self.forward_batch(x)?.output.row(0).to_vec())
    }

    pub fn forward_batch(&self, inputs: ArrayView2<T>) -> Result<ForwardTrace<T>> {
        if inputs.ncols() != self.shape.input_dim() {
            return Err(Error::Dimension(format!(
                "batch has {} input columns, expected {}",
                inputs.ncols(),
                self.shape.input_dim()
            )));
        }
        let slope = self.slope();
        let pre_activation = inputs.dot(&self.params.w1) + &self.params.b1;
        let hidden = pre_activation.mapv(|z| if z > T::zero() { z } else { z * slope });
        let output = hidden.dot(&self.params.w2) + &self.params.b2;
        Ok(ForwardTrace {
            pre_activation,
            hidden,
            output,
        })
    }
}

/// `(f(x_i), g(s_{y_i}), c_{y_i})` triples stacked row-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch<T> {
    pub visual: Array2<T>,
    pub semantic: Array2<T>,
    pub target: Array2<T>,
}

impl<T: Real> TrainingBatch<T> {
    pub fn len(&self) -> usize {
        self.target.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn inputs(&self, shape: &NetworkShape) -> Result<Array2<T>> {
        let n = self.len();
        if self.visual.nrows() != n || self.semantic.nrows() != n {
            return Err(Error::Dimension("batch parts have different row counts".into()));
        }
        if self.target.ncols() != shape.visual_dim {
            return Err(Error::Dimension(format!(
                "targets have {} columns, expected {}",
                self.target.ncols(),
                shape.visual_dim
            )));
        }
        let x = match shape.source {
            AlignmentSource::VisualSemantic => {
                concatenate(Axis(1), &[self.visual.view(), self.semantic.view()])
                    .map_err(|e| Error::Dimension(e.to_string()))?
            }
            AlignmentSource::Visual => self.visual.clone(),
            AlignmentSource::Semantic => self.semantic.clone(),
        };
        if x.ncols() != shape.input_dim() {
            return Err(Error::Dimension(format!(
                "batch yields {} input columns, expected {}",
                x.ncols(),
                shape.input_dim()
            )));
        }
        Ok(x)
    }
}

fn sign<T: Real>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Loss and exact gradients of the batch-mean L1 objective.
///
/// Kink conventions: the L1 subgradient at a zero residual is 0 and the
/// LeakyReLU derivative at a zero pre-activation is the slope.
pub fn backward<T: Real>(
    net: &AlignmentNetwork<T>,
    batch: &TrainingBatch<T>,
) -> Result<(T, Parameters<T>)> {
    let shape = net.shape();
    let x = batch.inputs(shape)?;
    if batch.is_empty() {
        return Err(Error::Argument("empty batch".into()));
    }
    let trace = net.forward_batch(x.view())?;
    let loss = l1_loss(trace.output.view(), batch.target.view())?;

    let inv_n = T::one() / T::from_usize(batch.len()).expect("batch size fits");
    let d_out = (&trace.output - &batch.target).mapv(|r| sign(r) * inv_n);
    let w2 = trace.hidden.t().dot(&d_out);
    let d_hidden = d_out.dot(&net.params().w2.t());
    let slope = net.slope();
    let mut d_pre = d_hidden;
    ndarray::Zip::from(&mut d_pre)
        .and(&trace.pre_activation)
        .for_each(|g, &z| {
            if z <= T::zero() {
                *g = *g * slope;
            }
        });
    let w1 = x.t().dot(&d_pre);
    let (b1, b2) = if shape.use_bias {
        (d_pre.sum_axis(Axis(0)), d_out.sum_axis(Axis(0)))
    } else {
        (Array1::zeros(shape.hidden_dim), Array1::zeros(shape.visual_dim))
    };
    let grads = Parameters { w1, b1, w2, b2 };
    if !loss.is_finite() || !grads.all_finite() {
        return Err(Error::Numerics("non-finite loss or gradient".into()));
    }
    Ok((loss, grads))
}

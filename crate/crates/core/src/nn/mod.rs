//! Feedforward Q-network with leaky rectifiers, batch normalization and
//! inverted dropout on every hidden layer, trained by exact reverse-mode
//! gradients of the Huber loss.

mod optim;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use optim::{clip_gradients, Adam};

/// Exponential moving-average factor of batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.99;
pub const BN_EPSILON: f64 = 1e-5;
pub const OUTPUTS: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input width, hidden widths, output width.
    pub widths: Vec<usize>,
    pub leaky_slope: f64,
    pub dropout_rate: f64,
    pub l2_coefficient: f64,
    /// One flag per hidden layer.
    pub batch_norm: Vec<bool>,
}

impl NetworkSpec {
    pub const DEFAULT_HIDDEN: [usize; 5] = [512; 5];

    /// Default regularization, batch norm on every hidden layer.
    pub fn new(input_dim: usize, hidden: &[usize]) -> Self {
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(input_dim);
        widths.extend_from_slice(hidden);
        widths.push(OUTPUTS);
        Self {
            widths,
            leaky_slope: 0.01,
            dropout_rate: 0.2,
            l2_coefficient: 1e-6,
            batch_norm: vec![true; hidden.len()],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn hidden_layers(&self) -> usize {
        self.widths.len() - 2
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.widths.len() < 2 {
            problems.push("need at least input and output widths".to_string());
        } else {
            if self.widths.last() != Some(&OUTPUTS) {
                problems.push(format!("output width must be {OUTPUTS}"));
            }
            if self.batch_norm.len() != self.widths.len() - 2 {
                problems.push(format!(
                    "{} batch-norm flags for {} hidden layers",
                    self.batch_norm.len(),
                    self.widths.len() - 2
                ));
            }
        }
        if self.widths.contains(&0) {
            problems.push("layer widths must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            problems.push(format!("dropout rate {} not in [0, 1)", self.dropout_rate));
        }
        if !(self.l2_coefficient >= 0.0 && self.l2_coefficient.is_finite()) {
            problems.push(format!(
                "L2 coefficient {} must be non-negative",
                self.l2_coefficient
            ));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            problems.push(format!("leaky slope {} not in [0, 1)", self.leaky_slope));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Main,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in x fan_out`.
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub bn: Option<BatchNorm>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub spec: NetworkSpec,
    pub role: Role,
    pub layers: Vec<Layer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct HiddenCache {
    input: Array2<f64>,
    /// Normalized pre-activation, when batch norm is on.
    zhat: Option<Array2<f64>>,
    std_inv: Option<Array1<f64>>,
    /// Pre-activation after batch norm.
    y: Array2<f64>,
    /// Inverted-dropout multipliers.
    mask: Option<Array2<f64>>,
    batch_mean: Option<Array1<f64>>,
    batch_var: Option<Array1<f64>>,
}

/// Everything backward needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub output: Array2<f64>,
    mode: Mode,
    hidden: Vec<HiddenCache>,
    last_input: Array2<f64>,
}

impl ForwardPass {
    pub fn mode(&self) -> Mode {
        self.mode
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerGrad {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub gamma: Option<Array1<f64>>,
    pub beta: Option<Array1<f64>>,
}

/// Gradients with the shape of the trainable parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
}

impl GradientSet {
    pub fn zeros_like(params: &NetworkParams) -> Self {
        let layers = params
            .layers
            .iter()
            .map(|l| LayerGrad {
                w: Array2::zeros(l.w.raw_dim()),
                b: Array1::zeros(l.b.len()),
                gamma: l.bn.as_ref().map(|bn| Array1::zeros(bn.gamma.len())),
                beta: l.bn.as_ref().map(|bn| Array1::zeros(bn.beta.len())),
            })
            .collect();
        Self { layers }
    }

    /// Flat views in a fixed order shared with [`NetworkParams::trainable_mut`].
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
            if let (Some(g), Some(b)) = (&l.gamma, &l.beta) {
                out.push(g.as_slice().expect("standard layout"));
                out.push(b.as_slice().expect("standard layout"));
            }
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
            if let (Some(g), Some(b)) = (&mut l.gamma, &mut l.beta) {
                out.push(g.as_slice_mut().expect("standard layout"));
                out.push(b.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

/// `(loss, dloss/dprediction)` with the knee at 1.
pub fn huber_loss(prediction: f64, target: f64) -> (f64, f64) {
    let x = prediction - target;
    if x.abs() <= 1.0 {
        (0.5 * x * x, x)
    } else {
        (x.abs() - 0.5, x.signum())
    }
}

fn leaky(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

impl NetworkParams {
    /// Xavier-normal weights, zero biases, identity batch norm.
    pub fn init_xavier(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = spec.widths.len() - 1;
        let layers = (0..n)
            .map(|l| {
                let (fan_in, fan_out) = (spec.widths[l], spec.widths[l + 1]);
                let sd = (2.0 / (fan_in + fan_out) as f64).sqrt();
                let normal = Normal::new(0.0, sd).expect("positive sd");
                let w = Array2::from_shape_simple_fn((fan_in, fan_out), || normal.sample(&mut rng));
                let bn = (l + 1 < n && spec.batch_norm[l]).then(|| BatchNorm {
                    gamma: Array1::ones(fan_out),
                    beta: Array1::zeros(fan_out),
                    running_mean: Array1::zeros(fan_out),
                    running_var: Array1::ones(fan_out),
                });
                Layer {
                    w,
                    b: Array1::zeros(fan_out),
                    bn,
                }
            })
            .collect();
        Ok(Self {
            spec: spec.clone(),
            role: Role::Main,
            layers,
        })
    }

    /// Copy of these parameters acting as the target network.
    pub fn as_target(&self) -> Self {
        Self {
            role: Role::Target,
            ..self.clone()
        }
    }

    /// Overwrites all parameters and statistics with those of `other`,
    /// keeping this network's role.
    pub fn copy_from(&mut self, other: &NetworkParams) {
        self.spec.clone_from(&other.spec);
        self.layers.clone_from(&other.layers);
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.len() + l.b.len() + l.bn.as_ref().map_or(0, |bn| 2 * bn.gamma.len()))
            .sum()
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
            if let Some(bn) = &mut l.bn {
                out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                out.push(bn.beta.as_slice_mut().expect("standard layout"));
            }
        }
        out
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.spec.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.spec.input_dim(),
                actual: x.ncols(),
            });
        }
        if x.nrows() == 0 {
            return Err(Error::Constraint("empty batch".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    /// Deterministic evaluation with running statistics and no dropout.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let slope = self.spec.leaky_slope;
        let mut h = x.to_owned();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = h.dot(&layer.w);
            z += &layer.b;
            if l == last {
                return Ok(z);
            }
            if let Some(bn) = &layer.bn {
                let scale = Zip::from(&bn.gamma)
                    .and(&bn.running_var)
                    .map_collect(|g, v| g / (v + BN_EPSILON).sqrt());
                let shift = &bn.beta - &(&bn.running_mean * &scale);
                z *= &scale;
                z += &shift;
            }
            z.mapv_inplace(|v| leaky(v, slope));
            h = z;
        }
        unreachable!("network has an output layer")
    }

    /// Forward pass retaining the intermediates needed by [`backward`].
    /// Train mode draws dropout masks from `rng` and normalizes with batch
    /// statistics; it does not touch the running statistics, see
    /// [`NetworkParams::update_running_stats`].
    ///
    /// [`backward`]: NetworkParams::backward
    pub fn forward(
        &self,
        x: ArrayView2<f64>,
        mode: Mode,
        rng: &mut dyn RngCore,
    ) -> Result<ForwardPass> {
        self.check_input(&x)?;
        let train = mode == Mode::Train;
        let batch = x.nrows();
        let has_bn = self.layers.iter().any(|l| l.bn.is_some());
        if train && has_bn && batch < 2 {
            return Err(Error::Constraint(
                "batch normalization in train mode needs a batch of at least 2".into(),
            ));
        }
        let slope = self.spec.leaky_slope;
        let keep = 1.0 - self.spec.dropout_rate;
        let last = self.layers.len() - 1;
        let mut hidden = Vec::with_capacity(last);
        let mut h = x.to_owned();
        for layer in &self.layers[..last] {
            let mut z = h.dot(&layer.w);
            z += &layer.b;
            let mut cache = HiddenCache {
                input: h,
                zhat: None,
                std_inv: None,
                y: Array2::zeros((0, 0)),
                mask: None,
                batch_mean: None,
                batch_var: None,
            };
            let y = match &layer.bn {
                Some(bn) => {
                    let (mean, var) = if train {
                        let mean = z.mean_axis(Axis(0)).expect("non-empty batch");
                        let centered = &z - &mean;
                        let var = centered
                            .mapv(|v| v * v)
                            .mean_axis(Axis(0))
                            .expect("non-empty batch");
                        cache.batch_mean = Some(mean.clone());
                        cache.batch_var = Some(var.clone());
                        (mean, var)
                    } else {
                        (bn.running_mean.clone(), bn.running_var.clone())
                    };
                    let std_inv = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
                    let zhat = (&z - &mean) * &std_inv;
                    let y = &zhat * &bn.gamma + &bn.beta;
                    cache.zhat = Some(zhat);
                    cache.std_inv = Some(std_inv);
                    y
                }
                None => z,
            };
            let mut a = y.mapv(|v| leaky(v, slope));
            if train && self.spec.dropout_rate > 0.0 {
                let mask = Array2::from_shape_simple_fn(a.raw_dim(), || {
                    if rng.gen::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                a *= &mask;
                cache.mask = Some(mask);
            }
            cache.y = y;
            hidden.push(cache);
            h = a;
        }
        let out_layer = &self.layers[last];
        let mut output = h.dot(&out_layer.w);
        output += &out_layer.b;
        Ok(ForwardPass {
            output,
            mode,
            hidden,
            last_input: h,
        })
    }

    /// Folds the batch statistics of a train-mode pass into the running
    /// statistics (unbiased variance).
    pub fn update_running_stats(&mut self, pass: &ForwardPass) {
        let batch = pass.output.nrows() as f64;
        let correction = if batch > 1.0 {
            batch / (batch - 1.0)
        } else {
            1.0
        };
        for (layer, cache) in self.layers.iter_mut().zip(&pass.hidden) {
            if let (Some(bn), Some(mean), Some(var)) =
                (&mut layer.bn, &cache.batch_mean, &cache.batch_var)
            {
                Zip::from(&mut bn.running_mean)
                    .and(mean)
                    .for_each(|r, m| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m);
                Zip::from(&mut bn.running_var)
                    .and(var)
                    .for_each(|r, v| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v * correction);
            }
        }
    }

    /// L2 penalty over weight matrices (biases and batch-norm parameters excluded).
    pub fn l2_penalty(&self) -> f64 {
        self.spec.l2_coefficient
            * self
                .layers
                .iter()
                .map(|l| l.w.iter().map(|w| w * w).sum::<f64>())
                .sum::<f64>()
    }

    /// Mean Huber loss of the taken actions' Q-values plus the L2 penalty.
    pub fn batch_loss(&self, output: &Array2<f64>, actions: &[usize], targets: &[f64]) -> f64 {
        let data: f64 = actions
            .iter()
            .zip(targets)
            .enumerate()
            .map(|(i, (&a, &y))| huber_loss(output[[i, a]], y).0)
            .sum();
        data / actions.len() as f64 + self.l2_penalty()
    }

    /// Exact gradients of [`batch_loss`](NetworkParams::batch_loss) for the
    /// pass. Returns the loss alongside.
    pub fn backward(
        &self,
        pass: &ForwardPass,
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, GradientSet)> {
        let batch = pass.output.nrows();
        if actions.len() != batch || targets.len() != batch {
            return Err(Error::DimensionMismatch {
                expected: batch,
                actual: actions.len().min(targets.len()),
            });
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= OUTPUTS) {
            return Err(Error::Config(format!("action index {a} out of range")));
        }
        let mut delta = Array2::zeros(pass.output.raw_dim());
        for (i, (&a, &y)) in actions.iter().zip(targets).enumerate() {
            delta[[i, a]] = huber_loss(pass.output[[i, a]], y).1 / batch as f64;
        }
        let loss = self.batch_loss(&pass.output, actions, targets);
        let l2 = 2.0 * self.spec.l2_coefficient;
        let slope = self.spec.leaky_slope;
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());

        let out_layer = &self.layers[last];
        let mut w = pass.last_input.t().dot(&delta);
        w.scaled_add(l2, &out_layer.w);
        grads.push(LayerGrad {
            w,
            b: delta.sum_axis(Axis(0)),
            gamma: None,
            beta: None,
        });
        let mut dh = delta.dot(&out_layer.w.t());

        for (l, cache) in pass.hidden.iter().enumerate().rev() {
            let layer = &self.layers[l];
            if let Some(mask) = &cache.mask {
                dh *= mask;
            }
            Zip::from(&mut dh).and(&cache.y).for_each(|d, &y| {
                if y <= 0.0 {
                    *d *= slope;
                }
            });
            let (dz, gamma, beta) = match (&layer.bn, &cache.zhat, &cache.std_inv) {
                (Some(bn), Some(zhat), Some(std_inv)) => {
                    let dgamma = (&dh * zhat).sum_axis(Axis(0));
                    let dbeta = dh.sum_axis(Axis(0));
                    let dzhat = &dh * &bn.gamma;
                    let dz = if pass.mode == Mode::Train {
                        let n = batch as f64;
                        let sum_dzhat = dzhat.sum_axis(Axis(0));
                        let sum_dzhat_zhat = (&dzhat * zhat).sum_axis(Axis(0));
                        let mut dz = dzhat * n;
                        dz -= &sum_dzhat;
                        dz -= &(zhat * &sum_dzhat_zhat);
                        dz * &(std_inv / n)
                    } else {
                        dzhat * std_inv
                    };
                    (dz, Some(dgamma), Some(dbeta))
                }
                _ => (dh, None, None),
            };
            let mut w = cache.input.t().dot(&dz);
            w.scaled_add(l2, &layer.w);
            let b = dz.sum_axis(Axis(0));
            let g = LayerGrad { w, b, gamma, beta };
            let finite = g.w.iter().chain(&g.b).all(|v| v.is_finite())
                && g.gamma
                    .iter()
                    .chain(&g.beta)
                    .flat_map(|a| a.iter())
                    .all(|v| v.is_finite());
            if !finite {
                return Err(Error::NonFinite(format!("gradient in layer {l}")));
            }
            grads.push(g);
            dh = if l > 0 {
                dz.dot(&layer.w.t())
            } else {
                Array2::zeros((0, 0))
            };
        }
        grads.reverse();
        let out = &grads[last];
        if !out.w.iter().chain(&out.b).all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("gradient in layer {last}")));
        }
        Ok((loss, GradientSet { layers: grads }))
    }
}

//! Two-layer graph convolutional network over a fixed propagation matrix.
//!
//! ```text
//! H1 = relu(P · drop(X) · W1)
//! H2 = P · drop(H1) · W2
//! Y  = softmax(H2)          (row-wise)
//! L  = -Σ_{i in mask} ln Y[i, y_i]
//! ```
//!
//! `P` is either a normalized doc–subgraph matrix or the identity, which
//! turns the network into the plain two-layer feed-forward baseline with the
//! same parameters. Dropout is inverted (kept units scaled by `1/(1-r)`) and
//! is only active in training passes. Bias terms are optional and off by
//! default.

mod adam;

pub use adam::{Adam, AdamConfig};

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::hetgraph::PropagationMatrix;
use crate::{Error, Result};

/// Probabilities below this floor are clamped before taking the log in [`loss`].
pub const PROB_FLOOR: f64 = 1e-300;

/// Propagation operator applied at both layers.
#[derive(Debug, Clone, Copy)]
pub enum Propagation<'a> {
    Identity,
    Matrix(&'a PropagationMatrix),
}

impl Propagation<'_> {
    fn check_rows(&self, rows: usize) -> Result<()> {
        match self {
            Propagation::Identity => Ok(()),
            Propagation::Matrix(p) if p.order() == rows => Ok(()),
            Propagation::Matrix(p) => Err(Error::Shape(format!(
                "propagation matrix of order {} for {rows} feature rows",
                p.order()
            ))),
        }
    }

    fn apply(&self, m: &Array2<f64>) -> Array2<f64> {
        match self {
            Propagation::Identity => m.clone(),
            Propagation::Matrix(p) => p.as_array().dot(m),
        }
    }

    fn apply_transposed(&self, m: &Array2<f64>) -> Array2<f64> {
        match self {
            Propagation::Identity => m.clone(),
            Propagation::Matrix(p) => p.as_array().t().dot(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b1: Option<Array1<f64>>,
    pub b2: Option<Array1<f64>>,
    pub dropout_rate: f64,
}

impl GcnModel {
    /// Glorot-uniform weights, zero biases when `bias` is set.
    pub fn new<R: Rng + ?Sized>(
        d_in: usize,
        d_hidden: usize,
        classes: usize,
        dropout_rate: f64,
        bias: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if d_in == 0 || d_hidden == 0 || classes == 0 {
            return Err(Error::Validation(format!(
                "model dimensions must be positive (d_in={d_in}, d_hidden={d_hidden}, classes={classes})"
            )));
        }
        check_dropout(dropout_rate)?;
        Ok(GcnModel {
            w1: glorot(d_in, d_hidden, rng),
            w2: glorot(d_hidden, classes, rng),
            b1: bias.then(|| Array1::zeros(d_hidden)),
            b2: bias.then(|| Array1::zeros(classes)),
            dropout_rate,
        })
    }

    pub fn from_weights(w1: Array2<f64>, w2: Array2<f64>, dropout_rate: f64) -> Result<Self> {
        if w1.ncols() != w2.nrows() {
            return Err(Error::Shape(format!(
                "W1 is {:?} but W2 is {:?}",
                w1.dim(),
                w2.dim()
            )));
        }
        check_dropout(dropout_rate)?;
        Ok(GcnModel {
            w1,
            w2,
            b1: None,
            b2: None,
            dropout_rate,
        })
    }

    pub fn d_in(&self) -> usize {
        self.w1.nrows()
    }

    pub fn d_hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn classes(&self) -> usize {
        self.w2.ncols()
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len()
            + self.w2.len()
            + self.b1.as_ref().map_or(0, |b| b.len())
            + self.b2.as_ref().map_or(0, |b| b.len())
    }

    fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![
            self.w1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
        ];
        if let Some(b) = &mut self.b1 {
            out.push(b.as_slice_mut().expect("contiguous"));
        }
        if let Some(b) = &mut self.b2 {
            out.push(b.as_slice_mut().expect("contiguous"));
        }
        out
    }

    fn parameter_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.w1.len(), self.w2.len()];
        s.extend(self.b1.as_ref().map(|b| b.len()));
        s.extend(self.b2.as_ref().map(|b| b.len()));
        s
    }

    pub fn is_finite(&self) -> bool {
        self.w1.iter().chain(self.w2.iter()).all(|x| x.is_finite())
            && self
                .b1
                .iter()
                .chain(self.b2.iter())
                .flatten()
                .all(|x| x.is_finite())
    }

    pub fn checkpoint(&self) -> ModelCheckpoint {
        let rows = |m: &Array2<f64>| m.rows().into_iter().map(|r| r.to_vec()).collect();
        ModelCheckpoint {
            d_in: self.d_in(),
            d_hidden: self.d_hidden(),
            classes: self.classes(),
            w1: rows(&self.w1),
            w2: rows(&self.w2),
            b1: self.b1.as_ref().map(|b| b.to_vec()),
            b2: self.b2.as_ref().map(|b| b.to_vec()),
        }
    }
}

fn check_dropout(rate: f64) -> Result<()> {
    if (0.0..1.0).contains(&rate) {
        Ok(())
    } else {
        Err(Error::Validation(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )))
    }
}

fn glorot<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Array2<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Array2::from_shape_simple_fn((fan_in, fan_out), || rng.random_range(-limit..limit))
}

/// Serialized model: `{"d_in", "d_hidden", "C", "W1", "W2"}` (rows of each matrix).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub d_in: usize,
    pub d_hidden: usize,
    #[serde(rename = "C")]
    pub classes: usize,
    #[serde(rename = "W1")]
    pub w1: Vec<Vec<f64>>,
    #[serde(rename = "W2")]
    pub w2: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<Vec<f64>>,
}

impl ModelCheckpoint {
    pub fn to_model(&self, dropout_rate: f64) -> Result<GcnModel> {
        let matrix = |rows: &[Vec<f64>], r: usize, c: usize, name: &str| {
            let flat: Vec<f64> = rows.iter().flatten().copied().collect();
            if rows.len() != r || rows.iter().any(|row| row.len() != c) {
                return Err(Error::Shape(format!("{name} is not {r}x{c}")));
            }
            Array2::from_shape_vec((r, c), flat).map_err(|e| Error::Shape(e.to_string()))
        };
        let mut model = GcnModel::from_weights(
            matrix(&self.w1, self.d_in, self.d_hidden, "W1")?,
            matrix(&self.w2, self.d_hidden, self.classes, "W2")?,
            dropout_rate,
        )?;
        model.b1 = self.b1.clone().map(Array1::from);
        model.b2 = self.b2.clone().map(Array1::from);
        Ok(model)
    }
}

/// Multiplicative dropout masks (entries `0` or `1/(1-r)`); `None` means no dropout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DropoutMasks {
    pub input: Option<Array2<f64>>,
    pub hidden: Option<Array2<f64>>,
}

impl DropoutMasks {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn sample<R: Rng + ?Sized>(
        rows: usize,
        d_in: usize,
        d_hidden: usize,
        rate: f64,
        rng: &mut R,
    ) -> Self {
        if rate == 0.0 {
            return Self::none();
        }
        let keep = 1.0 / (1.0 - rate);
        let mut mask = |cols: usize| {
            Array2::from_shape_simple_fn((rows, cols), || {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            })
        };
        let input = mask(d_in);
        let hidden = mask(d_hidden);
        DropoutMasks {
            input: Some(input),
            hidden: Some(hidden),
        }
    }
}

/// Intermediate values of one forward pass, kept for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input features after dropout.
    pub input: Array2<f64>,
    /// Pre-activation of the first layer.
    pub pre_hidden: Array2<f64>,
    /// First-layer output after activation and dropout.
    pub hidden: Array2<f64>,
    pub logits: Array2<f64>,
    pub probs: Array2<f64>,
}

fn apply_mask(m: &Array2<f64>, mask: Option<&Array2<f64>>) -> Result<Array2<f64>> {
    match mask {
        None => Ok(m.clone()),
        Some(k) if k.dim() == m.dim() => Ok(m * k),
        Some(k) => Err(Error::Shape(format!(
            "dropout mask {:?} for activations {:?}",
            k.dim(),
            m.dim()
        ))),
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum: f64 = row.sum();
        row /= sum;
    }
    out
}

pub fn forward_with_masks(
    model: &GcnModel,
    prop: Propagation<'_>,
    x: &Array2<f64>,
    masks: &DropoutMasks,
) -> Result<ForwardPass> {
    if x.ncols() != model.d_in() {
        return Err(Error::Shape(format!(
            "features have {} columns, model expects {}",
            x.ncols(),
            model.d_in()
        )));
    }
    prop.check_rows(x.nrows())?;

    let input = apply_mask(x, masks.input.as_ref())?;
    let mut pre_hidden = prop.apply(&input.dot(&model.w1));
    if let Some(b) = &model.b1 {
        pre_hidden += b;
    }
    let activated = pre_hidden.mapv(|v| v.max(0.0));
    let hidden = apply_mask(&activated, masks.hidden.as_ref())?;
    let mut logits = prop.apply(&hidden.dot(&model.w2));
    if let Some(b) = &model.b2 {
        logits += b;
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits"));
    }
    let probs = softmax_rows(&logits);
    Ok(ForwardPass {
        input,
        pre_hidden,
        hidden,
        logits,
        probs,
    })
}

/// Forward pass returning `(logits, probabilities)`. Dropout masks are drawn
/// from `rng` only when `training` is set.
pub fn forward<R: Rng + ?Sized>(
    model: &GcnModel,
    prop: Propagation<'_>,
    x: &Array2<f64>,
    training: bool,
    rng: &mut R,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let masks = if training {
        DropoutMasks::sample(
            x.nrows(),
            model.d_in(),
            model.d_hidden(),
            model.dropout_rate,
            rng,
        )
    } else {
        DropoutMasks::none()
    };
    let pass = forward_with_masks(model, prop, x, &masks)?;
    Ok((pass.logits, pass.probs))
}

/// Feed-forward baseline: [`forward`] with identity propagation.
pub fn baseline_forward<R: Rng + ?Sized>(
    model: &GcnModel,
    x: &Array2<f64>,
    training: bool,
    rng: &mut R,
) -> Result<(Array2<f64>, Array2<f64>)> {
    forward(model, Propagation::Identity, x, training, rng)
}

/// Summed cross-entropy over the rows in `mask`; `labels[i]` is the class of row `i`.
pub fn loss(probs: &Array2<f64>, labels: &[usize], mask: &[usize]) -> f64 {
    -mask
        .iter()
        .map(|&i| probs[[i, labels[i]]].max(PROB_FLOOR).ln())
        .sum::<f64>()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b1: Option<Array1<f64>>,
    pub b2: Option<Array1<f64>>,
}

impl Gradients {
    fn buffers(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.w1.as_slice().expect("standard layout"),
            self.w2.as_slice().expect("standard layout"),
        ];
        out.extend(self.b1.as_ref().map(|b| b.as_slice().expect("contiguous")));
        out.extend(self.b2.as_ref().map(|b| b.as_slice().expect("contiguous")));
        out
    }
}

fn check_targets(rows: usize, classes: usize, labels: &[usize], mask: &[usize]) -> Result<()> {
    for &i in mask {
        if i >= rows || i >= labels.len() {
            return Err(Error::Shape(format!(
                "mask row {i} has no label or feature row"
            )));
        }
        if labels[i] >= classes {
            return Err(Error::Validation(format!(
                "label {} of row {i} outside {classes} classes",
                labels[i]
            )));
        }
    }
    Ok(())
}

/// Loss and exact gradients w.r.t. every parameter, for a forward pass under `masks`.
pub fn gradients(
    model: &GcnModel,
    prop: Propagation<'_>,
    x: &Array2<f64>,
    labels: &[usize],
    mask: &[usize],
    masks: &DropoutMasks,
) -> Result<(f64, Gradients, ForwardPass)> {
    let pass = forward_with_masks(model, prop, x, masks)?;
    check_targets(x.nrows(), model.classes(), labels, mask)?;
    let value = loss(&pass.probs, labels, mask);

    // dL/dH2 = P - Y on masked rows
    let mut d_logits = Array2::zeros(pass.probs.dim());
    for &i in mask {
        let mut row = d_logits.row_mut(i);
        row.assign(&pass.probs.row(i));
        row[labels[i]] -= 1.0;
    }
    let b2 = model.b2.as_ref().map(|_| d_logits.sum_axis(Axis(0)));
    let back2 = prop.apply_transposed(&d_logits);
    let w2 = pass.hidden.t().dot(&back2);

    let d_hidden = back2.dot(&model.w2.t());
    let mut d_pre = apply_mask(&d_hidden, masks.hidden.as_ref())?;
    d_pre.zip_mut_with(&pass.pre_hidden, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    let b1 = model.b1.as_ref().map(|_| d_pre.sum_axis(Axis(0)));
    let back1 = prop.apply_transposed(&d_pre);
    let w1 = pass.input.t().dot(&back1);

    Ok((value, Gradients { w1, w2, b1, b2 }, pass))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub bias: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 160,
            seed: 0,
            hidden_dim: 240,
            dropout_rate: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            bias: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Validation(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Validation(
                "hidden dimension must be positive".into(),
            ));
        }
        check_dropout(self.dropout_rate)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Full-batch training for `epochs` Adam steps; returns per-epoch loss and
/// training accuracy (both measured on the dropout pass being optimized).
pub fn train<R: Rng + ?Sized>(
    model: &mut GcnModel,
    prop: Propagation<'_>,
    x: &Array2<f64>,
    labels: &[usize],
    mask: &[usize],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    let mut adam = Adam::new(config.adam(), &model.parameter_sizes());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let masks = DropoutMasks::sample(
            x.nrows(),
            model.d_in(),
            model.d_hidden(),
            model.dropout_rate,
            rng,
        );
        let (value, grads, pass) = gradients(model, prop, x, labels, mask, &masks)?;
        let correct = mask
            .iter()
            .filter(|&&i| argmax(pass.probs.row(i)) == labels[i])
            .count();
        adam.step(&mut model.parameters_mut(), &grads.buffers());
        if !model.is_finite() {
            return Err(Error::NonFinite("model weights"));
        }
        history.push(EpochStats {
            epoch,
            loss: value,
            train_acc: if mask.is_empty() {
                0.0
            } else {
                correct as f64 / mask.len() as f64
            },
        });
    }
    Ok(history)
}

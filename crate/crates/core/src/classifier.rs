//! Two-layer perceptron with a softmax output trained by mini-batch SGD on
//! probability-vector targets.
//!
//! The network is `softmax(W2 · relu(W1 · x + b1) + b2)`. Parameters are
//! stored row-major with one row per output unit, the same order the
//! checkpoint file uses.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::taxonomy::{CategoryId, NUM_CATEGORIES};

/// Lower bound applied to probabilities inside the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

const CHECKPOINT_MAGIC: &[u8; 8] = b"RONCMLP\0";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("input has {found} components, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("training data is empty")]
    EmptyData,
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid parameter shapes: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    /// Seed the parameters were initialised from.
    pub seed: u64,
}

/// Parameter gradients, shaped like [`MlpModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl MlpModel {
    pub fn from_parameters(
        w1: Array2<f64>,
        b1: Array1<f64>,
        w2: Array2<f64>,
        b2: Array1<f64>,
        seed: u64,
    ) -> Result<Self, ClassifierError> {
        let (hidden, input) = w1.dim();
        let (output, hidden2) = w2.dim();
        if hidden == 0 || input == 0 || output == 0 {
            return Err(ClassifierError::Shape("dimensions must be positive".into()));
        }
        if b1.len() != hidden || hidden2 != hidden || b2.len() != output {
            return Err(ClassifierError::Shape(format!(
                "w1 {hidden}x{input}, b1 {}, w2 {output}x{hidden2}, b2 {}",
                b1.len(),
                b2.len()
            )));
        }
        Ok(MlpModel { w1, b1, w2, b2, seed })
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_size(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().all(|v| v.is_finite())
    }

    /// All parameters in checkpoint order: w1, b1, w2, b2.
    pub fn parameters(&self) -> impl Iterator<Item = &f64> {
        self.w1.iter().chain(self.b1.iter()).chain(self.w2.iter()).chain(self.b2.iter())
    }

    fn check_input(&self, x: &[f64]) -> Result<(), ClassifierError> {
        if x.len() != self.input_dim() {
            return Err(ClassifierError::DimensionMismatch {
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        Ok(())
    }

    /// `θ ← θ − lr · g`.
    pub fn apply(&mut self, grads: &Gradients, learning_rate: f64) {
        self.w1.scaled_add(-learning_rate, &grads.w1);
        self.b1.scaled_add(-learning_rate, &grads.b1);
        self.w2.scaled_add(-learning_rate, &grads.w2);
        self.b2.scaled_add(-learning_rate, &grads.b2);
    }

    pub fn save<W: Write>(&self, mut writer: W) -> Result<(), ClassifierError> {
        writer.write_all(CHECKPOINT_MAGIC)?;
        writer.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        for dim in [self.input_dim(), self.hidden_size(), self.output_dim()] {
            writer.write_all(&(dim as u64).to_le_bytes())?;
        }
        writer.write_all(&self.seed.to_le_bytes())?;
        for v in self.parameters() {
            writer.write_all(&v.to_le_bytes())?;
        }
        writer.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut reader: R) -> Result<Self, ClassifierError> {
        let bad = |m: &str| ClassifierError::Checkpoint(m.to_string());
        let mut magic = [0u8; 8];
        reader.read_exact(&mut magic).map_err(|_| bad("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(bad("not a model checkpoint"));
        }
        let mut word = [0u8; 4];
        reader.read_exact(&mut word).map_err(|_| bad("truncated header"))?;
        let version = u32::from_le_bytes(word);
        if version != CHECKPOINT_VERSION {
            return Err(ClassifierError::Checkpoint(format!("unsupported version {version}")));
        }
        let read_u64 = |reader: &mut R| -> Result<u64, ClassifierError> {
            let mut buf = [0u8; 8];
            reader.read_exact(&mut buf).map_err(|_| bad("truncated header"))?;
            Ok(u64::from_le_bytes(buf))
        };
        let input = read_u64(&mut reader)? as usize;
        let hidden = read_u64(&mut reader)? as usize;
        let output = read_u64(&mut reader)? as usize;
        let seed = read_u64(&mut reader)?;

        let mut read_params = |n: usize| -> Result<Vec<f64>, ClassifierError> {
            let mut bytes = vec![0u8; n * 8];
            reader.read_exact(&mut bytes).map_err(|_| bad("truncated parameters"))?;
            Ok(bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let shape_err = |e: ndarray::ShapeError| ClassifierError::Checkpoint(e.to_string());
        let w1 = Array2::from_shape_vec((hidden, input), read_params(hidden * input)?).map_err(shape_err)?;
        let b1 = Array1::from(read_params(hidden)?);
        let w2 = Array2::from_shape_vec((output, hidden), read_params(output * hidden)?).map_err(shape_err)?;
        let b2 = Array1::from(read_params(output)?);
        let mut rest = [0u8; 1];
        if reader.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after parameters"));
        }
        MlpModel::from_parameters(w1, b1, w2, b2, seed)
    }
}

/// Weights uniform in `±1/√fan_in`, biases zero, 17 outputs.
pub fn init_model(input_dim: usize, hidden_size: usize, seed: u64) -> MlpModel {
    assert!(input_dim >= 1 && hidden_size >= 1, "model dimensions must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |rows: usize, cols: usize| {
        let scale = 1.0 / (cols as f64).sqrt();
        Array2::from_shape_simple_fn((rows, cols), || rng.gen_range(-scale..=scale))
    };
    let w1 = uniform(hidden_size, input_dim);
    let w2 = uniform(NUM_CATEGORIES, hidden_size);
    MlpModel {
        w1,
        b1: Array1::zeros(hidden_size),
        w2,
        b2: Array1::zeros(NUM_CATEGORIES),
        seed,
    }
}

/// Softmax with the maximum subtracted first.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|z| (z - max).exp());
        let total = row.sum();
        row /= total;
    }
}

struct Activations {
    pre_hidden: Array1<f64>,
    hidden: Array1<f64>,
    logits: Array1<f64>,
}

fn activations(model: &MlpModel, x: ArrayView1<f64>) -> Activations {
    let pre_hidden = model.w1.dot(&x) + &model.b1;
    let hidden = pre_hidden.mapv(|z| z.max(0.0));
    let logits = model.w2.dot(&hidden) + &model.b2;
    Activations {
        pre_hidden,
        hidden,
        logits,
    }
}

/// Output-layer pre-activations.
pub fn logits(model: &MlpModel, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
    model.check_input(x)?;
    Ok(activations(model, ArrayView1::from(x)).logits.to_vec())
}

pub fn forward(model: &MlpModel, x: &[f64]) -> Result<Vec<f64>, ClassifierError> {
    Ok(softmax(&logits(model, x)?))
}

/// Cross-entropy `−Σ tᵢ ln max(pᵢ, 1e-12)`.
pub fn loss(probs: &[f64], target: &[f64]) -> f64 {
    debug_assert_eq!(probs.len(), target.len());
    -probs
        .iter()
        .zip(target)
        .filter(|(_, &t)| t != 0.0)
        // NaN must survive the clamp so training can detect it.
        .map(|(&p, &t)| t * if p < PROB_FLOOR { PROB_FLOOR } else { p }.ln())
        .sum::<f64>()
}

/// Output error term `∂loss/∂logits = p·Σt − t`, which is `p − t` for a
/// normalised target.
pub fn output_error(probs: &[f64], target: &[f64]) -> Vec<f64> {
    let mass: f64 = target.iter().sum();
    probs.iter().zip(target).map(|(&p, &t)| p * mass - t).collect()
}

/// Exact gradients of `loss(forward(model, x), target)` for one example.
pub fn backward(model: &MlpModel, x: &[f64], target: &[f64]) -> Result<Gradients, ClassifierError> {
    model.check_input(x)?;
    if target.len() != model.output_dim() {
        return Err(ClassifierError::DimensionMismatch {
            expected: model.output_dim(),
            found: target.len(),
        });
    }
    let xv = ArrayView1::from(x);
    let act = activations(model, xv);
    let probs = softmax(act.logits.as_slice().unwrap());
    let delta_out = Array1::from(output_error(&probs, target));

    let outer = |a: &Array1<f64>, b: ArrayView1<f64>| {
        Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
    };
    let w2 = outer(&delta_out, act.hidden.view());
    let mut delta_hidden = model.w2.t().dot(&delta_out);
    delta_hidden.zip_mut_with(&act.pre_hidden, |d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
    let w1 = outer(&delta_hidden, xv);
    Ok(Gradients {
        w1,
        b1: delta_hidden,
        w2,
        b2: delta_out,
    })
}

/// Mean gradients and summed loss over a batch (rows of `inputs` / `targets`).
pub fn batch_gradients(
    model: &MlpModel,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> (Gradients, f64) {
    let batch = inputs.nrows() as f64;
    let pre_hidden = inputs.dot(&model.w1.t()) + &model.b1;
    let hidden = pre_hidden.mapv(|z| z.max(0.0));
    let mut probs = hidden.dot(&model.w2.t()) + &model.b2;
    softmax_rows(&mut probs);

    let mut total_loss = 0.0;
    for (p, t) in probs.rows().into_iter().zip(targets.rows()) {
        total_loss += loss(p.as_slice().unwrap(), t.as_slice().unwrap());
    }

    let mass = targets.sum_axis(Axis(1)).insert_axis(Axis(1));
    let delta_out = (&probs * mass - targets) / batch;
    let w2 = delta_out.t().dot(&hidden);
    let b2 = delta_out.sum_axis(Axis(0));
    let mut delta_hidden = delta_out.dot(&model.w2);
    delta_hidden.zip_mut_with(&pre_hidden, |d, &z| {
        if z <= 0.0 {
            *d = 0.0;
        }
    });
    let w1 = delta_hidden.t().dot(&inputs);
    let b1 = delta_hidden.sum_axis(Axis(0));
    (Gradients { w1, b1, w2, b2 }, total_loss)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Mean training loss per epoch, measured before each batch's update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossHistory(pub Vec<f64>);

impl LossHistory {
    pub fn first(&self) -> Option<f64> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.0.last().copied()
    }
}

/// Stacks feature rows into a matrix, checking every width.
pub fn stack_rows<V: AsRef<[f64]>>(rows: &[V], width: usize) -> Result<Array2<f64>, ClassifierError> {
    let mut flat = Vec::with_capacity(rows.len() * width);
    for row in rows {
        let row = row.as_ref();
        if row.len() != width {
            return Err(ClassifierError::DimensionMismatch {
                expected: width,
                found: row.len(),
            });
        }
        flat.extend_from_slice(row);
    }
    Array2::from_shape_vec((rows.len(), width), flat).map_err(|e| ClassifierError::Shape(e.to_string()))
}

pub fn train<X: AsRef<[f64]>, T: AsRef<[f64]>>(
    model: &MlpModel,
    inputs: &[X],
    targets: &[T],
    config: &TrainConfig,
) -> Result<(MlpModel, LossHistory), ClassifierError> {
    if inputs.is_empty() {
        return Err(ClassifierError::EmptyData);
    }
    if inputs.len() != targets.len() {
        return Err(ClassifierError::Shape(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    assert!(config.batch_size >= 1, "batch size must be positive");
    let x = stack_rows(inputs, model.input_dim())?;
    let t = stack_rows(targets, model.output_dim())?;

    let mut model = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
            let xb = x.select(Axis(0), chunk);
            let tb = t.select(Axis(0), chunk);
            let (grads, batch_loss) = batch_gradients(&model, xb.view(), tb.view());
            if !batch_loss.is_finite() {
                return Err(ClassifierError::NonFiniteLoss { epoch, batch });
            }
            epoch_loss += batch_loss;
            model.apply(&grads, config.learning_rate);
        }
        history.push(epoch_loss / inputs.len() as f64);
    }
    Ok((model, LossHistory(history)))
}

/// Indices of the `k` largest probabilities, ties to the lower category id.
pub fn top_k(probs: &[f64], k: usize) -> Vec<CategoryId> {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    order.into_iter().take(k).map(CategoryId::from_index).collect()
}

pub fn predict_topk(model: &MlpModel, x: &[f64], k: usize) -> Result<Vec<CategoryId>, ClassifierError> {
    assert!((1..=model.output_dim()).contains(&k), "k must be in 1..=output_dim");
    Ok(top_k(&forward(model, x)?, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn zero_model(input: usize, hidden: usize) -> MlpModel {
        MlpModel {
            w1: Array2::zeros((hidden, input)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((NUM_CATEGORIES, hidden)),
            b2: Array1::zeros(NUM_CATEGORIES),
            seed: 0,
        }
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn init_is_deterministic() {
        let a = init_model(1536, 256, 9);
        assert_eq!(a, init_model(1536, 256, 9));
        assert_ne!(a, init_model(1536, 256, 10));
        assert_eq!(a.w1.dim(), (256, 1536));
        assert_eq!(a.w2.dim(), (17, 256));
        assert!(a.b1.iter().chain(a.b2.iter()).all(|&b| b == 0.0));
        let bound = 1.0 / 1536f64.sqrt();
        assert!(a.w1.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = zero_model(4, 3);
        let p = forward(&m, &[1.0, -2.0, 3.0, 0.5]).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 17.0).abs() < 1e-12));
        assert_eq!(predict_topk(&m, &[0.0; 4], 2).unwrap(), [CategoryId::from_index(0), CategoryId::from_index(1)]);
    }

    #[test]
    fn dimension_mismatch() {
        let m = zero_model(4, 3);
        assert!(matches!(
            forward(&m, &[1.0; 3]),
            Err(ClassifierError::DimensionMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn two_class_miniature() {
        // x = 2, w1 = 1.5, b1 = -1 -> h = 2; logits = (0.5·2 + 0, -1·2 + 1) = (1, -1).
        let m = MlpModel::from_parameters(array![[1.5]], array![-1.0], array![[0.5], [-1.0]], array![0.0, 1.0], 0).unwrap();
        let p = forward(&m, &[2.0]).unwrap();
        let e = std::f64::consts::E;
        let expected0 = e / (e + 1.0 / e);
        assert!((p[0] - expected0).abs() < 1e-15);
        assert!((p[1] - (1.0 - expected0)).abs() < 1e-15);
        // Negative pre-activation: relu clamps, logits = b2.
        let p = forward(&m, &[0.5]).unwrap();
        let expected0 = 1.0 / (1.0 + e);
        assert!((p[0] - expected0).abs() < 1e-15);
    }

    #[test]
    fn loss_values() {
        let uniform = vec![1.0 / 17.0; 17];
        let mut one_hot = vec![0.0; 17];
        one_hot[4] = 1.0;
        assert!((loss(&uniform, &one_hot) - 17f64.ln()).abs() < 1e-12);
        let mut soft = vec![0.0; 17];
        soft[0] = 0.5;
        soft[2] = 0.5;
        assert!((loss(&uniform, &soft) - 17f64.ln()).abs() < 1e-12);
        assert!(loss(&one_hot, &one_hot).abs() < 1e-9);
        let mut zero_at_target = vec![1.0 / 16.0; 17];
        zero_at_target[4] = 0.0;
        assert!((loss(&zero_at_target, &one_hot) - (-PROB_FLOOR.ln())).abs() < 1e-9);
    }

    #[test]
    fn top_k_ordering() {
        let mut logits = vec![0.0; 17];
        logits[4] = 3.0;
        logits[8] = 2.0;
        logits[0] = 1.0;
        let ids: Vec<u8> = top_k(&softmax(&logits), 2).iter().map(|c| c.get()).collect();
        assert_eq!(ids, [5, 9]);
        let mut all: Vec<u8> = top_k(&softmax(&logits), 17).iter().map(|c| c.get()).collect();
        assert_eq!(&all[..3], &[5, 9, 1]);
        all.sort_unstable();
        assert_eq!(all, (1..=17).collect::<Vec<u8>>());
    }

    #[test]
    fn error_term_vanishes_at_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = init_model(6, 5, 1);
        let x = random_vec(&mut rng, 6);
        let p = forward(&m, &x).unwrap();
        let g = backward(&m, &x, &p).unwrap();
        assert!(g.b2.iter().all(|v| v.abs() < 1e-15));
        assert!(output_error(&p, &p).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_input_gives_zero_w1_gradient() {
        let mut m = init_model(5, 4, 2);
        m.b1.fill(0.3);
        let mut target = vec![0.0; 17];
        target[3] = 1.0;
        let g = backward(&m, &[0.0; 5], &target).unwrap();
        assert!(g.w1.iter().all(|&v| v == 0.0));
        assert!(g.b1.iter().any(|&v| v != 0.0));
    }

    fn numeric_loss(m: &MlpModel, x: &[f64], t: &[f64]) -> f64 {
        loss(&forward(m, x).unwrap(), t)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut m = init_model(7, 6, 4);
        m.b1 = Array1::from(random_vec(&mut rng, 6));
        m.b2 = Array1::from(random_vec(&mut rng, 17));
        let x = random_vec(&mut rng, 7);
        let mut t = vec![0.0; 17];
        t[2] = 0.5;
        t[11] = 0.5;
        let g = backward(&m, &x, &t).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for i in 0..m.w1.len() {
            let mut plus = m.clone();
            plus.w1.as_slice_mut().unwrap()[i] += h;
            let mut minus = m.clone();
            minus.w1.as_slice_mut().unwrap()[i] -= h;
            let fd = (numeric_loss(&plus, &x, &t) - numeric_loss(&minus, &x, &t)) / (2.0 * h);
            let an = g.w1.as_slice().unwrap()[i];
            worst = worst.max((fd - an).abs() / fd.abs().max(an.abs()).max(1e-8));
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn batch_matches_mean_of_singles() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = init_model(5, 4, 3);
        let xs: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 5)).collect();
        let ts: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                let mut t = vec![0.0; 17];
                t[i] = 0.5;
                t[i + 5] = 0.5;
                t
            })
            .collect();
        let (bg, total) =
            batch_gradients(&m, stack_rows(&xs, 5).unwrap().view(), stack_rows(&ts, 17).unwrap().view());
        let singles: Vec<Gradients> = xs.iter().zip(&ts).map(|(x, t)| backward(&m, x, t).unwrap()).collect();
        let mean_w1 = singles.iter().fold(Array2::<f64>::zeros((4, 5)), |acc, g| acc + &g.w1) / 3.0;
        let mean_b2 = singles.iter().fold(Array1::<f64>::zeros(17), |acc, g| acc + &g.b2) / 3.0;
        assert!((&bg.w1 - &mean_w1).iter().all(|d| d.abs() < 1e-14));
        assert!((&bg.b2 - &mean_b2).iter().all(|d| d.abs() < 1e-14));
        let expected: f64 = xs.iter().zip(&ts).map(|(x, t)| numeric_loss(&m, x, t)).sum();
        assert!((total - expected).abs() < 1e-12);
    }

    fn toy_data(n: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| random_vec(&mut rng, 8)).collect();
        let ts = xs
            .iter()
            .map(|x| {
                let mut t = vec![0.0; 17];
                t[if x[0] > 0.0 { 0 } else { 1 }] = 1.0;
                t
            })
            .collect();
        (xs, ts)
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let (xs, ts) = toy_data(20);
        let m = init_model(8, 6, 1);
        let config = TrainConfig {
            learning_rate: 0.0,
            epochs: 5,
            batch_size: 7,
            seed: 3,
        };
        let (trained, history) = train(&m, &xs, &ts, &config).unwrap();
        assert_eq!(trained, m);
        assert!(history.0.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }

    #[test]
    fn training_is_deterministic_and_descends() {
        let (xs, ts) = toy_data(64);
        let m = init_model(8, 16, 1);
        let config = TrainConfig {
            learning_rate: 0.1,
            epochs: 50,
            batch_size: 8,
            seed: 5,
        };
        let (a, ha) = train(&m, &xs, &ts, &config).unwrap();
        let (b, hb) = train(&m, &xs, &ts, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(ha, hb);
        assert!(ha.last().unwrap() < ha.first().unwrap());
        assert_eq!(ha.0.len(), 50);
    }

    #[test]
    fn training_errors() {
        let m = init_model(8, 4, 0);
        let empty: Vec<Vec<f64>> = Vec::new();
        assert!(matches!(train(&m, &empty, &empty, &TrainConfig::default()), Err(ClassifierError::EmptyData)));
        let (mut xs, ts) = toy_data(4);
        xs[2].push(0.0);
        assert!(matches!(
            train(&m, &xs, &ts, &TrainConfig::default()),
            Err(ClassifierError::DimensionMismatch { .. })
        ));
        let (xs, ts) = toy_data(4);
        let mut blown = m.clone();
        blown.b2[0] = f64::NAN;
        assert!(matches!(
            train(&blown, &xs, &ts, &TrainConfig::default()),
            Err(ClassifierError::NonFiniteLoss { epoch: 0, batch: 0 })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = init_model(6, 3, 42);
        let mut buf = Vec::new();
        m.save(&mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 4 + 32 + 8 * (18 + 3 + 51 + 17));
        assert_eq!(&buf[..8], b"RONCMLP\0");
        assert_eq!(u64::from_le_bytes(buf[12..20].try_into().unwrap()), 6);
        assert_eq!(f64::from_le_bytes(buf[44..52].try_into().unwrap()), m.w1[[0, 0]]);
        assert_eq!(MlpModel::load(buf.as_slice()).unwrap(), m);
        assert!(MlpModel::load(&buf[..buf.len() - 1]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(MlpModel::load(extra.as_slice()).is_err());
        buf[0] = b'X';
        assert!(MlpModel::load(buf.as_slice()).is_err());
    }

    proptest! {
        #[test]
        fn forward_is_a_distribution(seed in any::<u64>(), scale in 0.1f64..20.0) {
            let m = init_model(6, 5, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
            let x: Vec<f64> = random_vec(&mut rng, 6).into_iter().map(|v| v * scale).collect();
            let p = forward(&m, &x).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }

        #[test]
        fn softmax_shift_invariance(seed in any::<u64>(), shift in -50.0f64..50.0) {
            let m = init_model(4, 3, seed);
            let z = logits(&m, &[0.3, -0.2, 0.9, 1.1]).unwrap();
            let shifted: Vec<f64> = z.iter().map(|v| v + shift).collect();
            for (a, b) in softmax(&z).iter().zip(softmax(&shifted)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn loss_is_non_negative(seed in any::<u64>(), a in 0usize..17, b in 0usize..17) {
            let m = init_model(3, 3, seed);
            let p = forward(&m, &[1.0, 2.0, -1.0]).unwrap();
            let mut t = vec![0.0; 17];
            t[a] += 0.5;
            t[b] += 0.5;
            prop_assert!(loss(&p, &t) >= 0.0);
        }
    }
}

//! Federated averaging over per-device datasets.
//!
//! Devices run a fixed number of gradient steps on their local loss starting
//! from the broadcast global model; the server replaces the global model with
//! the data-size-weighted average of the returned local models.

mod data;
mod select;

pub use data::{generate, FederatedData, DataConfig};
pub use select::{select_rounds, CandidateMetrics, RoundSelection};

use rand::seq::index;
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::rng;

/// Flat parameter vector of a linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelVector {
    params: Vec<f64>,
}

impl ModelVector {
    pub fn new(params: Vec<f64>) -> Result<Self> {
        if params.is_empty() {
            return Err(Error::Argument("model dimension must be > 0".into()));
        }
        if let Some(p) = params.iter().find(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!("model parameter is not finite: {p}")));
        }
        Ok(Self { params })
    }

    pub fn zeros(dim: usize) -> Result<Self> {
        Self::new(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.params
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.params
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalDataset {
    samples: Vec<Sample>,
}

impl LocalDataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::Argument("dataset needs at least one sample".into()));
        };
        let dim = first.features.len();
        if dim == 0 {
            return Err(Error::Argument("feature vectors must be non-empty".into()));
        }
        for s in &samples {
            if s.features.len() != dim {
                return Err(Error::Argument(format!(
                    "feature dimension mismatch: {} vs {dim}",
                    s.features.len()
                )));
            }
            if !s.target.is_finite() || s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Argument("samples must be finite".into()));
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples[0].features.len()
    }

    /// Concatenation of several datasets.
    pub fn pooled<'a, I: IntoIterator<Item = &'a LocalDataset>>(parts: I) -> Result<Self> {
        Self::new(
            parts
                .into_iter()
                .flat_map(|d| d.samples.iter().cloned())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    /// Squared error `0.5 (w.q - v)^2`.
    LinearRegressionSqLoss,
    /// Logistic negative log-likelihood with labels in {0, 1}.
    LogisticTwoClass,
}

impl Task {
    /// Validation/test metric: accuracy for classification, loss for regression.
    pub fn metric(&self, w: &ModelVector, data: &LocalDataset) -> Result<f64> {
        match self {
            Task::LinearRegressionSqLoss => local_loss(w, data, *self),
            Task::LogisticTwoClass => accuracy(w, data),
        }
    }

    pub fn higher_is_better(&self) -> bool {
        matches!(self, Task::LogisticTwoClass)
    }

    pub fn metric_name(&self) -> &'static str {
        match self {
            Task::LinearRegressionSqLoss => "loss",
            Task::LogisticTwoClass => "accuracy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BatchMode {
    FullBatch,
    Minibatch { size: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub learning_rate: f64,
    pub local_iters: u32,
    pub task: Task,
    pub batch: BatchMode,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            local_iters: 5,
            task: Task::LogisticTwoClass,
            batch: BatchMode::Minibatch { size: 16 },
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "trainer.learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.local_iters == 0 {
            return Err(Error::Config("trainer.local_iters must be >= 1".into()));
        }
        if let BatchMode::Minibatch { size: 0 } = self.batch {
            return Err(Error::Config("trainer.batch.size must be >= 1".into()));
        }
        Ok(())
    }
}

/// A trained local model tagged with its device index and sample count.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalUpdate {
    pub device: usize,
    pub model: ModelVector,
    pub weight: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-sample loss `f(w; q, v)`.
pub fn sample_loss(w: &[f64], sample: &Sample, task: Task) -> f64 {
    let z = dot(w, &sample.features);
    match task {
        Task::LinearRegressionSqLoss => 0.5 * (z - sample.target).powi(2),
        Task::LogisticTwoClass => softplus(z) - sample.target * z,
    }
}

/// Derivative of the per-sample loss with respect to the score `w.q`.
fn score_derivative(w: &[f64], sample: &Sample, task: Task) -> f64 {
    let z = dot(w, &sample.features);
    match task {
        Task::LinearRegressionSqLoss => z - sample.target,
        Task::LogisticTwoClass => sigmoid(z) - sample.target,
    }
}

fn check_dims(w: &ModelVector, data: &LocalDataset) -> Result<()> {
    if w.dim() != data.dim() {
        return Err(Error::Argument(format!(
            "model dimension {} does not match feature dimension {}",
            w.dim(),
            data.dim()
        )));
    }
    Ok(())
}

fn loss_sum(w: &ModelVector, data: &LocalDataset, task: Task) -> f64 {
    compensated_sum(data.samples.iter().map(|s| sample_loss(&w.params, s, task)))
}

/// Mean loss of `w` over one device's data.
pub fn local_loss(w: &ModelVector, data: &LocalDataset, task: Task) -> Result<f64> {
    check_dims(w, data)?;
    Ok(loss_sum(w, data, task) / data.len() as f64)
}

/// Loss of `w` over the union of all datasets.
pub fn global_loss(w: &ModelVector, datasets: &[LocalDataset], task: Task) -> Result<f64> {
    if datasets.is_empty() {
        return Err(Error::Argument("global loss needs at least one dataset".into()));
    }
    let mut total = CompensatedSum::new();
    let mut count = 0usize;
    for d in datasets {
        check_dims(w, d)?;
        for s in &d.samples {
            total.add(sample_loss(&w.params, s, task));
        }
        count += d.len();
    }
    Ok(total.total() / count as f64)
}

/// Fraction of samples whose predicted class (`w.q >= 0` means 1) matches the label.
pub fn accuracy(w: &ModelVector, data: &LocalDataset) -> Result<f64> {
    check_dims(w, data)?;
    let correct = data
        .samples
        .iter()
        .filter(|s| {
            let predicted = if dot(&w.params, &s.features) >= 0.0 { 1.0 } else { 0.0 };
            predicted == s.target
        })
        .count();
    Ok(correct as f64 / data.len() as f64)
}

/// Gradient of the mean loss over the selected samples.
pub fn loss_gradient(w: &ModelVector, samples: &[&Sample], task: Task) -> Vec<f64> {
    let n = samples.len() as f64;
    let mut grad = vec![0.0; w.dim()];
    for s in samples {
        let g = score_derivative(&w.params, s, task);
        for (acc, q) in grad.iter_mut().zip(&s.features) {
            *acc += g * q;
        }
    }
    for g in &mut grad {
        *g /= n;
    }
    grad
}

/// Runs `cfg.local_iters` gradient steps from `w0`.
pub fn local_train<R: Rng + ?Sized>(
    w0: &ModelVector,
    data: &LocalDataset,
    cfg: &TrainerConfig,
    rng: &mut R,
) -> Result<ModelVector> {
    cfg.validate().map_err(|e| Error::Argument(e.to_string()))?;
    train_steps(w0, data, cfg, cfg.learning_rate, rng)
}

/// Step loop without the positivity check on the learning rate.
pub(crate) fn train_steps<R: Rng + ?Sized>(
    w0: &ModelVector,
    data: &LocalDataset,
    cfg: &TrainerConfig,
    learning_rate: f64,
    rng: &mut R,
) -> Result<ModelVector> {
    check_dims(w0, data)?;
    let mut w = w0.clone();
    let all: Vec<&Sample> = data.samples.iter().collect();
    for iter in 0..cfg.local_iters {
        let grad = match cfg.batch {
            BatchMode::Minibatch { size } if size < data.len() => {
                let picked: Vec<&Sample> = index::sample(rng, data.len(), size)
                    .into_iter()
                    .map(|k| &data.samples[k])
                    .collect();
                loss_gradient(&w, &picked, cfg.task)
            }
            _ => loss_gradient(&w, &all, cfg.task),
        };
        if let Some((k, g)) = grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite gradient at local iteration {iter}, coordinate {k}: {g} \
                 (learning rate {learning_rate}, |D| = {})",
                data.len()
            )));
        }
        for (p, g) in w.params.iter_mut().zip(&grad) {
            *p -= learning_rate * g;
        }
        if let Some(p) = w.params.iter().find(|p| !p.is_finite()) {
            return Err(Error::Numeric(format!(
                "parameter diverged to {p} at local iteration {iter}"
            )));
        }
    }
    Ok(w)
}

/// Data-size-weighted average of local models.
///
/// Devices are reduced in ascending index order with compensated summation,
/// anchored at the lowest-index model, so the result does not depend on the
/// order of `locals`.
pub fn aggregate(locals: &[LocalUpdate]) -> Result<ModelVector> {
    if locals.is_empty() {
        return Err(Error::Argument("cannot aggregate an empty set of models".into()));
    }
    let mut ordered: Vec<&LocalUpdate> = locals.iter().collect();
    ordered.sort_by_key(|u| u.device);
    let dim = ordered[0].model.dim();
    for u in &ordered {
        if u.model.dim() != dim {
            return Err(Error::Argument(format!(
                "model dimensions differ: {} vs {dim}",
                u.model.dim()
            )));
        }
        if !(u.weight.is_finite() && u.weight > 0.0) {
            return Err(Error::Argument(format!(
                "aggregation weight must be > 0, got {}",
                u.weight
            )));
        }
    }
    let total_weight = compensated_sum(ordered.iter().map(|u| u.weight));
    let anchor = &ordered[0].model.params;
    let params = (0..dim)
        .map(|k| {
            let shift = compensated_sum(
                ordered
                    .iter()
                    .map(|u| (u.weight / total_weight) * (u.model.params[k] - anchor[k])),
            );
            let (lo, hi) = ordered.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), u| {
                (lo.min(u.model.params[k]), hi.max(u.model.params[k]))
            });
            (anchor[k] + shift).clamp(lo, hi)
        })
        .collect();
    ModelVector::new(params)
}

/// Outcome of one federated round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub global: ModelVector,
    /// Local model per device; `None` for devices that sat the round out.
    pub locals: Vec<Option<ModelVector>>,
}

/// Broadcast, local training on every device, aggregation.
pub fn run_round<R: RngCore + ?Sized>(
    global: &ModelVector,
    datasets: &[LocalDataset],
    cfg: &TrainerConfig,
    rng: &mut R,
) -> Result<(ModelVector, Vec<ModelVector>)> {
    let outcome = run_round_masked(global, datasets, cfg, rng, None)?;
    Ok((
        outcome.global,
        outcome.locals.into_iter().map(|l| l.expect("all devices train")).collect(),
    ))
}

/// Like [`run_round`], but only devices with `participants[i] == true` train
/// and contribute. With no participants the global model is kept.
///
/// Each device trains on its own stream derived from one draw of `rng`, so
/// the result does not depend on how device work is scheduled.
pub fn run_round_masked<R: RngCore + ?Sized>(
    global: &ModelVector,
    datasets: &[LocalDataset],
    cfg: &TrainerConfig,
    rng: &mut R,
    participants: Option<&[bool]>,
) -> Result<RoundOutcome> {
    if datasets.is_empty() {
        return Err(Error::Argument("a round needs at least one device".into()));
    }
    if let Some(mask) = participants {
        if mask.len() != datasets.len() {
            return Err(Error::Argument(format!(
                "participation mask has {} entries for {} devices",
                mask.len(),
                datasets.len()
            )));
        }
    }
    let round_seed = rng.next_u64();
    let mut locals = Vec::with_capacity(datasets.len());
    let mut updates = Vec::new();
    for (device, data) in datasets.iter().enumerate() {
        if participants.is_some_and(|m| !m[device]) {
            locals.push(None);
            continue;
        }
        let mut device_rng = rng::stream(round_seed, &[device as u64]);
        let model = local_train(global, data, cfg, &mut device_rng)
            .map_err(|e| annotate_device(e, device))?;
        updates.push(LocalUpdate {
            device,
            model: model.clone(),
            weight: data.len() as f64,
        });
        locals.push(Some(model));
    }
    let global = if updates.is_empty() {
        global.clone()
    } else {
        aggregate(&updates)?
    };
    Ok(RoundOutcome { global, locals })
}

fn annotate_device(e: Error, device: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("device {device}: {msg}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn ds(rows: &[(&[f64], f64)]) -> LocalDataset {
        LocalDataset::new(
            rows.iter()
                .map(|(q, v)| Sample {
                    features: q.to_vec(),
                    target: *v,
                })
                .collect(),
        )
        .unwrap()
    }

    fn mv(p: &[f64]) -> ModelVector {
        ModelVector::new(p.to_vec()).unwrap()
    }

    fn cfg(task: Task, lr: f64, iters: u32) -> TrainerConfig {
        TrainerConfig {
            learning_rate: lr,
            local_iters: iters,
            task,
            batch: BatchMode::FullBatch,
        }
    }

    fn random_dataset(rng: &mut rng::SimRng, n: usize, dim: usize, task: Task) -> LocalDataset {
        let samples = (0..n)
            .map(|_| Sample {
                features: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                target: match task {
                    Task::LinearRegressionSqLoss => rng.random_range(-2.0..2.0),
                    Task::LogisticTwoClass => f64::from(rng.random_bool(0.5) as u8),
                },
            })
            .collect();
        LocalDataset::new(samples).unwrap()
    }

    #[test]
    fn local_loss_examples() {
        let data = ds(&[(&[1.0, 0.0], 1.0), (&[0.0, 1.0], -2.0), (&[1.0, 1.0], -1.0)]);
        let exact = mv(&[1.0, -2.0]);
        assert_eq!(local_loss(&exact, &data, Task::LinearRegressionSqLoss).unwrap(), 0.0);

        let single = ds(&[(&[1.0], 2.0)]);
        assert_eq!(local_loss(&mv(&[0.0]), &single, Task::LinearRegressionSqLoss).unwrap(), 2.0);

        let doubled = ds(&[
            (&[1.0, 0.0], 1.0),
            (&[0.0, 1.0], -2.0),
            (&[1.0, 0.0], 1.0),
            (&[0.0, 1.0], -2.0),
        ]);
        let halves = ds(&[(&[1.0, 0.0], 1.0), (&[0.0, 1.0], -2.0)]);
        let w = mv(&[0.3, 0.7]);
        for task in [Task::LinearRegressionSqLoss, Task::LogisticTwoClass] {
            let a = local_loss(&w, &doubled, task).unwrap();
            let b = local_loss(&w, &halves, task).unwrap();
            assert!((a - b).abs() <= 1e-15 * b.abs());
        }
    }

    #[test]
    fn dimension_mismatch_is_an_argument_error() {
        let data = ds(&[(&[1.0], 2.0)]);
        assert!(matches!(
            local_loss(&mv(&[0.0, 1.0]), &data, Task::LinearRegressionSqLoss),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn global_loss_examples() {
        let task = Task::LinearRegressionSqLoss;
        let w = mv(&[0.5]);
        let a = ds(&[(&[1.0], 2.0)]);
        let b = ds(&[(&[2.0], 0.0), (&[1.0], 1.0)]);
        let c = ds(&[(&[3.0], 1.0), (&[-1.0], 1.0), (&[0.5], 0.0)]);

        assert_eq!(
            global_loss(&w, std::slice::from_ref(&a), task).unwrap(),
            local_loss(&w, &a, task).unwrap()
        );

        let b2 = ds(&[(&[1.0], 0.0), (&[0.0], 1.0)]);
        let mean = 0.5 * (local_loss(&w, &b, task).unwrap() + local_loss(&w, &b2, task).unwrap());
        assert!((global_loss(&w, &[b.clone(), b2], task).unwrap() - mean).abs() < 1e-15);

        // pooled evaluation by hand
        let losses = [
            0.5 * (0.5f64 - 2.0).powi(2),
            0.5 * (1.0f64 - 0.0).powi(2),
            0.5 * (0.5f64 - 1.0).powi(2),
            0.5 * (1.5f64 - 1.0).powi(2),
            0.5 * (-0.5f64 - 1.0).powi(2),
            0.5 * (0.25f64 - 0.0).powi(2),
        ];
        let pooled: f64 = losses.iter().sum::<f64>() / 6.0;
        let weighted = (1.0 * local_loss(&w, &a, task).unwrap()
            + 2.0 * local_loss(&w, &b, task).unwrap()
            + 3.0 * local_loss(&w, &c, task).unwrap())
            / 6.0;
        let g = global_loss(&w, &[a, b, c], task).unwrap();
        assert!((g - pooled).abs() < 1e-15);
        assert!((g - weighted).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_keeps_model() {
        let data = ds(&[(&[1.0, 2.0], 3.0), (&[0.5, -1.0], 1.0)]);
        let w0 = mv(&[0.2, -0.4]);
        let c = cfg(Task::LinearRegressionSqLoss, 1.0, 7);
        let mut r = rng::stream(1, &[]);
        let w = train_steps(&w0, &data, &c, 0.0, &mut r).unwrap();
        assert_eq!(w, w0);
        assert!(local_train(&w0, &data, &TrainerConfig { learning_rate: 0.0, ..c }, &mut r).is_err());
    }

    #[test]
    fn one_step_matches_finite_difference_gradient() {
        let mut r = rng::stream(11, &[]);
        for task in [Task::LinearRegressionSqLoss, Task::LogisticTwoClass] {
            let data = random_dataset(&mut r, 20, 6, task);
            let w0 = ModelVector::new((0..6).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap();
            let eta = 0.1;
            let w1 = local_train(&w0, &data, &cfg(task, eta, 1), &mut r).unwrap();
            // central finite differences on the local loss
            let h = 1e-6;
            for k in 0..6 {
                let mut plus = w0.as_slice().to_vec();
                let mut minus = plus.clone();
                plus[k] += h;
                minus[k] -= h;
                let fd = (local_loss(&mv(&plus), &data, task).unwrap()
                    - local_loss(&mv(&minus), &data, task).unwrap())
                    / (2.0 * h);
                let expected = w0.as_slice()[k] - eta * fd;
                let got = w1.as_slice()[k];
                assert!(
                    (got - expected).abs() <= 1e-5 * expected.abs().max(1e-3),
                    "{task:?} coord {k}: {got} vs {expected}"
                );
            }
        }
    }

    #[test]
    fn small_step_gives_monotone_loss_on_quadratic() {
        let mut r = rng::stream(12, &[]);
        let data = random_dataset(&mut r, 30, 5, Task::LinearRegressionSqLoss);
        // L = largest eigenvalue of the Gram matrix / n, bounded by its trace
        let n = data.len() as f64;
        let trace: f64 = data
            .samples()
            .iter()
            .map(|s| s.features.iter().map(|q| q * q).sum::<f64>())
            .sum::<f64>()
            / n;
        let eta = 0.9 / trace;
        let mut w = ModelVector::zeros(5).unwrap();
        let mut prev = local_loss(&w, &data, Task::LinearRegressionSqLoss).unwrap();
        for _ in 0..50 {
            w = local_train(&w, &data, &cfg(Task::LinearRegressionSqLoss, eta, 1), &mut r).unwrap();
            let cur = local_loss(&w, &data, Task::LinearRegressionSqLoss).unwrap();
            assert!(cur <= prev);
            prev = cur;
        }
    }

    #[test]
    fn minibatch_training_is_seed_deterministic() {
        let mut r = rng::stream(13, &[]);
        let data = random_dataset(&mut r, 40, 4, Task::LogisticTwoClass);
        let c = TrainerConfig {
            batch: BatchMode::Minibatch { size: 8 },
            ..cfg(Task::LogisticTwoClass, 0.5, 5)
        };
        let w0 = ModelVector::zeros(4).unwrap();
        let a = local_train(&w0, &data, &c, &mut rng::stream(5, &[])).unwrap();
        let b = local_train(&w0, &data, &c, &mut rng::stream(5, &[])).unwrap();
        let other = local_train(&w0, &data, &c, &mut rng::stream(6, &[])).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, other);

        let full = cfg(Task::LogisticTwoClass, 0.5, 5);
        let f1 = local_train(&w0, &data, &full, &mut rng::stream(5, &[])).unwrap();
        let f2 = local_train(&w0, &data, &full, &mut rng::stream(99, &[])).unwrap();
        assert_eq!(f1, f2);
    }

    #[test]
    fn divergence_is_reported() {
        let data = ds(&[(&[1e200], 1.0)]);
        let err = local_train(
            &mv(&[1e200]),
            &data,
            &cfg(Task::LinearRegressionSqLoss, 1.0, 3),
            &mut rng::stream(1, &[]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Numeric(_)));
    }

    fn upd(device: usize, p: &[f64], weight: f64) -> LocalUpdate {
        LocalUpdate {
            device,
            model: mv(p),
            weight,
        }
    }

    #[test]
    fn aggregate_examples() {
        let same = [upd(0, &[0.1, 0.7, -3.3], 3.0), upd(1, &[0.1, 0.7, -3.3], 5.0), upd(2, &[0.1, 0.7, -3.3], 11.0)];
        assert_eq!(aggregate(&same).unwrap(), mv(&[0.1, 0.7, -3.3]));
        assert_eq!(aggregate(&[upd(4, &[1.5, 2.5], 7.0)]).unwrap(), mv(&[1.5, 2.5]));
        let mid = aggregate(&[upd(0, &[0.0, 2.0], 4.0), upd(1, &[1.0, 4.0], 4.0)]).unwrap();
        assert_eq!(mid, mv(&[0.5, 3.0]));
        assert!(aggregate(&[]).is_err());
        assert!(aggregate(&[upd(0, &[1.0], 0.0)]).is_err());
        assert!(aggregate(&[upd(0, &[1.0], 1.0), upd(1, &[1.0, 2.0], 1.0)]).is_err());
    }

    #[test]
    fn run_round_is_reproducible() {
        let mut r = rng::stream(21, &[]);
        let sets: Vec<LocalDataset> = (0..3)
            .map(|_| random_dataset(&mut r, 12, 3, Task::LogisticTwoClass))
            .collect();
        let c = TrainerConfig {
            batch: BatchMode::Minibatch { size: 4 },
            ..cfg(Task::LogisticTwoClass, 0.3, 4)
        };
        let g = ModelVector::zeros(3).unwrap();
        let a = run_round(&g, &sets, &c, &mut rng::stream(3, &[])).unwrap();
        let b = run_round(&g, &sets, &c, &mut rng::stream(3, &[])).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.1.len(), 3);
    }

    #[test]
    fn masked_round_skips_devices() {
        let mut r = rng::stream(22, &[]);
        let sets: Vec<LocalDataset> = (0..2)
            .map(|_| random_dataset(&mut r, 5, 2, Task::LinearRegressionSqLoss))
            .collect();
        let c = cfg(Task::LinearRegressionSqLoss, 0.1, 2);
        let g = ModelVector::zeros(2).unwrap();
        let none = run_round_masked(&g, &sets, &c, &mut rng::stream(1, &[]), Some(&[false, false])).unwrap();
        assert_eq!(none.global, g);
        let one = run_round_masked(&g, &sets, &c, &mut rng::stream(1, &[]), Some(&[false, true])).unwrap();
        assert!(one.locals[0].is_none());
        assert_eq!(Some(one.global.clone()), one.locals[1]);
    }

    proptest! {
        #[test]
        fn aggregation_is_convex_and_order_free(
            rows in proptest::collection::vec(
                (proptest::collection::vec(-10.0f64..10.0, 3), 1.0f64..100.0), 1..7),
        ) {
            let updates: Vec<LocalUpdate> = rows.iter().enumerate()
                .map(|(i, (p, w))| upd(i, p, w.round()))
                .collect();
            let agg = aggregate(&updates).unwrap();
            for k in 0..3 {
                let lo = rows.iter().map(|r| r.0[k]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r.0[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(agg.as_slice()[k] >= lo && agg.as_slice()[k] <= hi);
            }
            let mut reversed = updates.clone();
            reversed.reverse();
            prop_assert_eq!(aggregate(&reversed).unwrap(), agg);
        }

        #[test]
        fn global_loss_is_weighted_local_mean(seed in 0u64..1000, m in 1usize..6) {
            let mut r = rng::stream(seed, &[]);
            for task in [Task::LinearRegressionSqLoss, Task::LogisticTwoClass] {
                let sets: Vec<LocalDataset> = (0..m)
                    .map(|_| { let n = r.random_range(1..20); random_dataset(&mut r, n, 4, task) })
                    .collect();
                let w = ModelVector::new((0..4).map(|_| r.random_range(-2.0..2.0)).collect()).unwrap();
                let total: f64 = sets.iter().map(|d| d.len() as f64).sum();
                let weighted: f64 = sets.iter()
                    .map(|d| d.len() as f64 * local_loss(&w, d, task).unwrap())
                    .sum::<f64>() / total;
                let g = global_loss(&w, &sets, task).unwrap();
                prop_assert!((g - weighted).abs() <= 1e-12 * g.abs());
            }
        }
    }

    #[test]
    fn seeded_rng_type_is_usable_directly() {
        let mut r = rng::SimRng::seed_from_u64(4);
        let d = random_dataset(&mut r, 3, 2, Task::LinearRegressionSqLoss);
        assert_eq!(d.len(), 3);
    }
}

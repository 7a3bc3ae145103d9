//! Cross-entropy objective, Adam, the epoch loop with dev-set selection,
//! evaluation, and a logistic-regression baseline.
//!
//! Batches are groups of whole dialogues processed one after another on a
//! single tape, so no padding is needed. Training is single-threaded and
//! deterministic; evaluation fans dialogues out over rayon and merges
//! confusion counts, which is order-independent.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{self, AutodiffError, Matrix, Tape, Var};
use crate::corpus::{CorpusError, Dialogue, EmbeddingStore};
use crate::graph::{build_graph, DiscourseGraph, GraphError};
use crate::metrics::{confusion_matrix, MetricsError, MetricsReport};
use crate::model::{self, argmax, embedding_rows, ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("{0} split is empty")]
    EmptySplit(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite value during {0}")]
    NonFinite(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("dialogue {dialogue}: {source}")]
    Graph {
        dialogue: String,
        #[source]
        source: GraphError,
    },
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

impl TrainError {
    /// Whether the failure is numeric (non-finite loss or gradient) rather
    /// than a problem with inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            TrainError::NonFinite(_) | TrainError::Model(ModelError::Autodiff(AutodiffError::NonFinite { .. }))
        )
    }
}

impl From<ModelError> for TrainError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Autodiff(AutodiffError::NonFinite { op }) => TrainError::NonFinite(op.to_string()),
            other => TrainError::Model(other),
        }
    }
}

impl From<AutodiffError> for TrainError {
    fn from(e: AutodiffError) -> Self {
        ModelError::from(e).into()
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Dialogues per optimizer step.
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Rescale gradients whose global L2 norm exceeds this.
    pub grad_clip_norm: Option<f64>,
    /// Weight each utterance's loss by inverse class frequency in the
    /// training split.
    pub class_weighted: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            epochs: 50,
            learning_rate: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip_norm: None,
            class_weighted: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        // lr = 0 is allowed: it freezes the parameters.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be finite and >= 0, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad(format!("adam_eps must be positive, got {}", self.adam_eps));
        }
        if let Some(c) = self.grad_clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return bad(format!("grad_clip_norm must be positive, got {c}"));
            }
        }
        Ok(())
    }
}

/// A dialogue ready for the network: its embedding rows, graph and labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub id: String,
    pub embeddings: Matrix,
    pub graph: DiscourseGraph,
    pub labels: Vec<usize>,
}

impl Example {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Pair every dialogue with its embedding rows and build its graph.
pub fn prepare(dialogues: &[Dialogue], store: &EmbeddingStore) -> Result<Vec<Example>> {
    dialogues
        .iter()
        .map(|d| {
            let embeddings = store.matrix(&d.id)?;
            if embeddings.rows() != d.len() {
                return Err(CorpusError::SizeMismatch(format!(
                    "dialogue {} has {} utterances but {} embedding rows",
                    d.id,
                    d.len(),
                    embeddings.rows()
                ))
                .into());
            }
            let graph = build_graph(d.len(), &d.edge_pairs()).map_err(|source| TrainError::Graph {
                dialogue: d.id.clone(),
                source,
            })?;
            Ok(Example {
                id: d.id.clone(),
                embeddings,
                graph,
                labels: d.labels(),
            })
        })
        .collect()
}

/// Mean cross-entropy of rows of `logits` against `labels`.
pub fn loss(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    if logits.rows() != labels.len() || labels.is_empty() {
        return Err(TrainError::Shape(format!(
            "{} logit rows for {} labels",
            logits.rows(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        if y >= logits.cols() {
            return Err(MetricsError::LabelRange {
                label: y,
                num_classes: logits.cols(),
            }
            .into());
        }
        let row = logits.row(r);
        total += autodiff::log_sum_exp(row) - row[y];
    }
    Ok(total / labels.len() as f64)
}

/// Inverse-frequency class weights `N / (d · n_c)`, 0 for absent classes.
pub fn class_weights(examples: &[Example], num_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_classes];
    for y in examples.iter().flat_map(|e| &e.labels) {
        if *y < num_classes {
            counts[*y] += 1;
        }
    }
    let total: usize = counts.iter().sum();
    counts
        .iter()
        .map(|&n| {
            if n == 0 {
                0.0
            } else {
                total as f64 / (num_classes * n) as f64
            }
        })
        .collect()
}

/// Record the loss of a batch on `tape`: the (optionally class-weighted)
/// mean cross-entropy over every utterance of every dialogue.
pub fn batch_loss(
    tape: &mut Tape,
    params: &model::Params<Var>,
    batch: &[&Example],
    weights: Option<&[f64]>,
) -> Result<Var> {
    let mut terms = Vec::new();
    let mut labels = Vec::new();
    for ex in batch {
        let u = embedding_rows(tape, &ex.embeddings);
        let logits = model::forward(tape, &u, &ex.graph, params)?;
        for (&z, &y) in logits.iter().zip(&ex.labels) {
            terms.push(tape.cross_entropy(z, y)?);
            labels.push(y);
        }
    }
    if terms.is_empty() {
        return Err(TrainError::EmptySplit("batch".into()));
    }
    let coeffs: Vec<f64> = match weights {
        None => vec![1.0 / terms.len() as f64; terms.len()],
        Some(w) => {
            let total: f64 = labels.iter().map(|&y| w[y]).sum();
            if total.is_nan() || total <= 0.0 {
                return Err(TrainError::NonFinite("class-weight normalisation".into()));
            }
            labels.iter().map(|&y| w[y] / total).collect()
        }
    };
    let mut scaled = Vec::with_capacity(terms.len());
    for (t, c) in terms.into_iter().zip(coeffs) {
        let c = tape.constant(Matrix::scalar(c));
        scaled.push(tape.scale(c, t)?);
    }
    Ok(tape.add_all(&scaled)?)
}

/// Loss value and flat gradient (canonical order) of a batch.
pub fn loss_and_gradient(params: &ModelParams, batch: &[&Example], weights: Option<&[f64]>) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);
    let root = batch_loss(&mut tape, &bound, batch, weights)?;
    tape.backward(root)?;
    let value = tape.value(root).item();
    let mut grad = Vec::with_capacity(params.num_parameters());
    for &v in bound.tensors() {
        grad.extend_from_slice(tape.grad(v).data());
    }
    if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(TrainError::NonFinite("backward".into()));
    }
    Ok((value, grad))
}

/// Adam moments over the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// Global L2 norm of a gradient.
pub fn global_norm(grads: &[f64]) -> f64 {
    grads.iter().map(|g| g * g).sum::<f64>().sqrt()
}

/// One bias-corrected Adam update, clipping `grads` to the configured
/// global norm first.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, cfg: &TrainConfig) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(TrainError::Shape(format!(
            "adam step with {} params, {} grads, {}/{} moments",
            n,
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    let scale = match cfg.grad_clip_norm {
        Some(max) => {
            let norm = global_norm(grads);
            if norm > max {
                max / norm
            } else {
                1.0
            }
        }
        None => 1.0,
    };
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for k in 0..n {
        let g = grads[k] * scale;
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
    }
    Ok(())
}

/// Predictions for one dialogue, optionally with every edge removed.
pub fn predict_example(params: &ModelParams, ex: &Example, ablate_edges: bool) -> Result<Vec<usize>> {
    let preds = if ablate_edges {
        params.predict(&ex.embeddings, &ex.graph.without_edges())?
    } else {
        params.predict(&ex.embeddings, &ex.graph)?
    };
    Ok(preds)
}

/// Score the model on a split. Dialogues are evaluated in parallel against
/// the frozen parameters; confusion counts are merged by summation.
pub fn evaluate(params: &ModelParams, examples: &[Example], ablate_edges: bool) -> Result<MetricsReport> {
    if examples.is_empty() {
        return Err(TrainError::EmptySplit("evaluation".into()));
    }
    let d = params.config.num_classes;
    let confusions = examples
        .par_iter()
        .map(|ex| {
            let preds = predict_example(params, ex, ablate_edges)?;
            Ok(confusion_matrix(&preds, &ex.labels, d)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut merged = vec![vec![0usize; d]; d];
    for c in confusions {
        for (row, add) in merged.iter_mut().zip(c) {
            for (a, b) in row.iter_mut().zip(add) {
                *a += b;
            }
        }
    }
    Ok(MetricsReport::from_confusion(merged)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    /// Utterance-weighted mean training loss over the epoch's batches.
    pub train_loss: f64,
    pub dev_weighted_f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: Option<usize>,
}

impl TrainHistory {
    pub fn best_dev_weighted_f1(&self) -> Option<f64> {
        let best = self.best_epoch?;
        self.epochs.iter().find(|r| r.epoch == best).map(|r| r.dev_weighted_f1)
    }
}

/// Everything needed to continue training.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: ModelParams,
    pub adam: AdamState,
    pub best: ModelParams,
    pub history: TrainHistory,
}

impl TrainState {
    pub fn fresh(params: ModelParams) -> Self {
        Self {
            adam: AdamState::new(params.num_parameters()),
            best: params.clone(),
            params,
            history: TrainHistory::default(),
        }
    }

    pub fn epochs_completed(&self) -> usize {
        self.history.epochs.len()
    }
}

/// The epoch loop. Each epoch shuffles the training dialogues with a stream
/// derived from `(seed, epoch)`, so a resumed run replays the same order.
pub struct Trainer {
    cfg: TrainConfig,
    train: Vec<Example>,
    dev: Vec<Example>,
    weights: Option<Vec<f64>>,
    state: TrainState,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, train: Vec<Example>, dev: Vec<Example>, state: TrainState) -> Result<Self> {
        cfg.validate()?;
        if train.is_empty() {
            return Err(TrainError::EmptySplit("train".into()));
        }
        if dev.is_empty() {
            return Err(TrainError::EmptySplit("dev".into()));
        }
        let mc = state.params.config;
        for ex in train.iter().chain(&dev) {
            if ex.embeddings.cols() != mc.dim_u {
                return Err(TrainError::Shape(format!(
                    "dialogue {} has embedding width {}, model expects {}",
                    ex.id,
                    ex.embeddings.cols(),
                    mc.dim_u
                )));
            }
            if let Some(&y) = ex.labels.iter().find(|&&y| y >= mc.num_classes) {
                return Err(MetricsError::LabelRange {
                    label: y,
                    num_classes: mc.num_classes,
                }
                .into());
            }
        }
        if state.adam.m.len() != state.params.num_parameters() {
            return Err(TrainError::Shape("optimizer state does not match the parameters".into()));
        }
        let weights = cfg.class_weighted.then(|| class_weights(&train, mc.num_classes));
        Ok(Self {
            cfg,
            train,
            dev,
            weights,
            state,
        })
    }

    pub fn state(&self) -> &TrainState {
        &self.state
    }

    pub fn into_state(self) -> TrainState {
        self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Run one epoch, evaluate on dev, and keep the parameters if dev
    /// weighted F1 strictly improves.
    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let epoch = self.state.epochs_completed() + 1;
        let order = self.epoch_order(epoch);
        let mut flat = self.state.params.to_flat();
        let mut loss_sum = 0.0;
        let mut utterances = 0usize;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &self.train[i]).collect();
            let (value, grad) = loss_and_gradient(&self.state.params, &batch, self.weights.as_deref())?;
            let n: usize = batch.iter().map(|e| e.len()).sum();
            loss_sum += value * n as f64;
            utterances += n;
            adam_step(&mut flat, &grad, &mut self.state.adam, &self.cfg)?;
            self.state.params.set_flat(&flat)?;
        }
        let train_loss = loss_sum / utterances as f64;
        if !train_loss.is_finite() {
            return Err(TrainError::NonFinite("training loss".into()));
        }
        let dev_weighted_f1 = evaluate(&self.state.params, &self.dev, false)?.weighted_f1;
        let record = EpochRecord {
            epoch,
            train_loss,
            dev_weighted_f1,
        };
        let improved = match self.state.history.best_dev_weighted_f1() {
            None => true,
            Some(best) => dev_weighted_f1 > best,
        };
        self.state.history.epochs.push(record.clone());
        if improved {
            self.state.history.best_epoch = Some(epoch);
            self.state.best = self.state.params.clone();
        }
        Ok(record)
    }

    /// Train until `cfg.epochs` epochs have completed, calling `on_epoch`
    /// after each.
    pub fn run(&mut self, mut on_epoch: impl FnMut(&EpochRecord, &TrainState) -> Result<()>) -> Result<()> {
        while self.state.epochs_completed() < self.cfg.epochs {
            let record = self.run_epoch()?;
            on_epoch(&record, &self.state)?;
        }
        Ok(())
    }
}

/// Train from `initial` and return the dev-best parameters with history.
pub fn train(
    initial: ModelParams,
    train: Vec<Example>,
    dev: Vec<Example>,
    cfg: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    let mut trainer = Trainer::new(cfg.clone(), train, dev, TrainState::fresh(initial))?;
    trainer.run(|_, _| Ok(()))?;
    let state = trainer.into_state();
    Ok((state.best, state.history))
}

/// The fixed tiny problem used to check gradients of the full network:
/// `dim_u=8, dim_g=6, dim_h=4`, two attention layers, three classes and a
/// four-utterance dialogue whose third utterance has two predecessors.
pub fn gradient_check_problem(seed: u64) -> (ModelParams, Example) {
    let cfg = model::ModelConfig {
        dim_u: 8,
        dim_g: 6,
        dim_h: 4,
        layers: 2,
        num_classes: 3,
    };
    let params = ModelParams::init(cfg, seed).expect("valid config");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let n = 4;
    let embeddings =
        Matrix::from_vec(n, cfg.dim_u, (0..n * cfg.dim_u).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("sized");
    let labels = (0..n).map(|_| rng.gen_range(0..cfg.num_classes)).collect();
    let graph = build_graph(n, &[(0, 2), (1, 2), (2, 3)]).expect("forward edges");
    let ex = Example {
        id: "gradcheck".into(),
        embeddings,
        graph,
        labels,
    };
    (params, ex)
}

/// Compare tape gradients of the mean loss on `ex` against central
/// differences over every parameter. `hook` runs on each fresh tape before
/// recording, which lets tests break a backward rule on purpose.
pub fn check_gradients(
    params: &ModelParams,
    ex: &Example,
    eps: f64,
    hook: impl Fn(&mut Tape),
) -> autodiff::Result<autodiff::GradCheckReport> {
    let config = params.config;
    let to_ad = |e: String| AutodiffError::GradCheck(e);
    autodiff::grad_check(
        |tape, flat| {
            hook(tape);
            let p = ModelParams::from_flat(config, flat).map_err(|e| to_ad(e.to_string()))?;
            let bound = p.bind(tape, true);
            let root = batch_loss(tape, &bound, &[ex], None).map_err(|e| to_ad(e.to_string()))?;
            Ok((root, bound.tensors().into_iter().copied().collect()))
        },
        &params.to_flat(),
        eps,
    )
}

/// Softmax regression on each utterance's own embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticBaseline {
    /// `num_classes x dim_u`.
    pub weight: Matrix,
    pub bias: Matrix,
}

impl LogisticBaseline {
    /// Full-batch Adam on the mean cross-entropy over all utterances.
    pub fn fit(examples: &[Example], num_classes: usize, steps: usize, learning_rate: f64, seed: u64) -> Result<Self> {
        let dim = examples
            .first()
            .ok_or_else(|| TrainError::EmptySplit("train".into()))?
            .embeddings
            .cols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = (6.0 / (num_classes + dim) as f64).sqrt();
        let mut flat: Vec<f64> = (0..num_classes * dim)
            .map(|_| rng.gen_range(-bound..=bound))
            .chain(std::iter::repeat_n(0.0, num_classes))
            .collect();
        let cfg = TrainConfig {
            learning_rate,
            ..TrainConfig::default()
        };
        let mut adam = AdamState::new(flat.len());
        let rows: Vec<(Vec<f64>, usize)> = examples
            .iter()
            .flat_map(|ex| (0..ex.len()).map(move |r| (ex.embeddings.row(r).to_vec(), ex.labels[r])))
            .collect();
        for _ in 0..steps {
            let mut tape = Tape::new();
            let w = tape.leaf(Matrix::from_vec(num_classes, dim, flat[..num_classes * dim].to_vec())?);
            let b = tape.leaf(Matrix::column(flat[num_classes * dim..].to_vec()));
            let mut terms = Vec::with_capacity(rows.len());
            for (x, y) in &rows {
                let x = tape.constant(Matrix::column(x.clone()));
                let wx = tape.matmul(w, x)?;
                let z = tape.add(wx, b)?;
                terms.push(tape.cross_entropy(z, *y)?);
            }
            let all = tape.concat(&terms)?;
            let root = tape.mean(all)?;
            tape.backward(root)?;
            let mut grad = tape.grad(w).into_vec();
            grad.extend(tape.grad(b).into_vec());
            adam_step(&mut flat, &grad, &mut adam, &cfg)?;
        }
        Ok(Self {
            weight: Matrix::from_vec(num_classes, dim, flat[..num_classes * dim].to_vec())?,
            bias: Matrix::column(flat[num_classes * dim..].to_vec()),
        })
    }

    pub fn predict(&self, embedding: &[f64]) -> usize {
        let logits: Vec<f64> = (0..self.weight.rows())
            .map(|k| {
                let dot: f64 = self.weight.row(k).iter().zip(embedding).map(|(a, b)| a * b).sum();
                dot + self.bias.get(k, 0)
            })
            .collect();
        argmax(&logits)
    }

    pub fn evaluate(&self, examples: &[Example]) -> Result<MetricsReport> {
        let mut preds = Vec::new();
        let mut golds = Vec::new();
        for ex in examples {
            for r in 0..ex.len() {
                preds.push(self.predict(ex.embeddings.row(r)));
                golds.push(ex.labels[r]);
            }
        }
        Ok(crate::metrics::weighted_f1(&preds, &golds, self.weight.rows())?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticConfig, SyntheticTask};
    use crate::model::ModelConfig;

    fn tiny_config(dim_u: usize, d: usize) -> ModelConfig {
        ModelConfig {
            dim_u,
            dim_g: 4,
            dim_h: 4,
            layers: 2,
            num_classes: d,
        }
    }

    fn synthetic(n: usize, task: SyntheticTask, seed: u64) -> (Vec<Example>, Vec<Example>) {
        let cfg = SyntheticConfig {
            n_dialogues: n,
            dev_dialogues: 4,
            dim: 6,
            task,
            ..SyntheticConfig::default()
        };
        let s = generate_synthetic(&cfg, seed).unwrap();
        (
            prepare(&s.corpus.train, &s.embeddings).unwrap(),
            prepare(&s.corpus.dev, &s.embeddings).unwrap(),
        )
    }

    #[test]
    fn uniform_logits_give_ln_d() {
        let l = loss(&Matrix::zeros(3, 7), &[0, 3, 6]).unwrap();
        assert!((l - 7f64.ln()).abs() < 1e-15);
        assert!((l - 1.945910).abs() < 1e-6);
    }

    #[test]
    fn saturated_margin() {
        let logits = Matrix::from_vec(1, 3, vec![100.0, 0.0, 0.0]).unwrap();
        assert!(loss(&logits, &[0]).unwrap() < 1e-10);
    }

    #[test]
    fn loss_is_mean_of_rows() {
        let a = Matrix::from_vec(1, 2, vec![0.3, -1.2]).unwrap();
        let b = Matrix::from_vec(1, 2, vec![2.0, 0.5]).unwrap();
        let both = Matrix::from_vec(2, 2, vec![0.3, -1.2, 2.0, 0.5]).unwrap();
        let (la, lb) = (loss(&a, &[1]).unwrap(), loss(&b, &[0]).unwrap());
        assert!((loss(&both, &[1, 0]).unwrap() - (la + lb) / 2.0).abs() < 1e-15);
        assert!(matches!(loss(&a, &[2]), Err(TrainError::Metrics(_))));
        assert!(matches!(loss(&a, &[0, 1]), Err(TrainError::Shape(_))));
    }

    #[test]
    fn adam_first_step() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut theta = vec![0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut theta, &[1.0], &mut st, &cfg).unwrap();
        assert!((theta[0] - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let cfg = TrainConfig::default();
        let mut theta = vec![0.5, -2.0];
        let mut st = AdamState::new(2);
        for _ in 0..3 {
            adam_step(&mut theta, &[0.0, 0.0], &mut st, &cfg).unwrap();
        }
        assert_eq!(theta, vec![0.5, -2.0]);
    }

    #[test]
    fn adam_bias_correction_changes_step() {
        // g = 1 then g = -1: the second update differs in magnitude from the first
        let cfg = TrainConfig {
            learning_rate: 0.1,
            ..TrainConfig::default()
        };
        let mut theta = vec![0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut theta, &[1.0], &mut st, &cfg).unwrap();
        let first = theta[0];
        adam_step(&mut theta, &[-1.0], &mut st, &cfg).unwrap();
        let second = theta[0] - first;
        // t=2: m = 0.09 - 0.1 = -0.01, m̂ = -0.01/0.19; v = 0.001999, v̂ = 1
        let m_hat = (0.9 * 0.1 - 0.1) / (1.0 - 0.81);
        let v_hat = (0.999 * 0.001 + 0.001) / (1.0 - 0.999f64.powi(2));
        let want = -0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert!((second - want).abs() < 1e-12);
        assert!((second.abs() - first.abs()).abs() > 1e-3);
    }

    #[test]
    fn adam_clipping_and_shapes() {
        let cfg = TrainConfig {
            learning_rate: 0.1,
            grad_clip_norm: Some(1.0),
            ..TrainConfig::default()
        };
        let mut st = AdamState::new(2);
        let mut theta = vec![0.0, 0.0];
        adam_step(&mut theta, &[30.0, 40.0], &mut st, &cfg).unwrap();
        assert!((st.m[0] - 0.1 * 0.6).abs() < 1e-15 && (st.m[1] - 0.1 * 0.8).abs() < 1e-15);
        assert!(matches!(adam_step(&mut theta, &[1.0], &mut st, &cfg), Err(TrainError::Shape(_))));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let zero_lr = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(zero_lr.validate().is_ok());
        for bad in [
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                learning_rate: -1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                beta2: 1.0,
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(bad.validate(), Err(TrainError::InvalidConfig(_))));
        }
    }

    #[test]
    fn batch_gradient_is_utterance_weighted_sum() {
        let (train, _) = synthetic(3, SyntheticTask::Discourse, 4);
        let params = ModelParams::init(tiny_config(6, 3), 1).unwrap();
        let batch: Vec<&Example> = train.iter().collect();
        let total: usize = train.iter().map(|e| e.len()).sum();
        let (_, g_batch) = loss_and_gradient(&params, &batch, None).unwrap();
        let mut g_sum = vec![0.0; g_batch.len()];
        for ex in &train {
            let (_, g) = loss_and_gradient(&params, &[ex], None).unwrap();
            let w = ex.len() as f64 / total as f64;
            for (a, b) in g_sum.iter_mut().zip(g) {
                *a += w * b;
            }
        }
        for (a, b) in g_batch.iter().zip(&g_sum) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn tape_loss_matches_plain_loss() {
        let (train, _) = synthetic(1, SyntheticTask::Local, 9);
        let params = ModelParams::init(tiny_config(6, 3), 2).unwrap();
        let (value, _) = loss_and_gradient(&params, &[&train[0]], None).unwrap();
        let logits = params.forward(&train[0].embeddings, &train[0].graph).unwrap();
        assert!((value - loss(&logits, &train[0].labels).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn single_step_decreases_loss() {
        let (train, _) = synthetic(4, SyntheticTask::Local, 12);
        let params = ModelParams::init(tiny_config(6, 3), 3).unwrap();
        let batch: Vec<&Example> = train.iter().collect();
        let (before, grad) = loss_and_gradient(&params, &batch, None).unwrap();
        let decreased = [1e-3, 1e-4].iter().any(|&lr| {
            let cfg = TrainConfig {
                learning_rate: lr,
                ..TrainConfig::default()
            };
            let mut flat = params.to_flat();
            let mut st = AdamState::new(flat.len());
            adam_step(&mut flat, &grad, &mut st, &cfg).unwrap();
            let next = ModelParams::from_flat(params.config, &flat).unwrap();
            loss_and_gradient(&next, &batch, None).unwrap().0 < before
        });
        assert!(decreased);
    }

    #[test]
    fn zero_lr_freezes_parameters() {
        let (train, dev) = synthetic(4, SyntheticTask::Local, 2);
        let init = ModelParams::init(tiny_config(6, 3), 0).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let mut trainer = Trainer::new(cfg, train, dev, TrainState::fresh(init.clone())).unwrap();
        trainer.run(|_, _| Ok(())).unwrap();
        let st = trainer.into_state();
        assert_eq!(st.params, init);
        let losses: Vec<f64> = st.history.epochs.iter().map(|r| r.train_loss).collect();
        assert!(losses.windows(2).all(|w| (w[0] - w[1]).abs() < 1e-12));
    }

    #[test]
    fn training_is_deterministic_and_selects_best_dev() {
        let run = || {
            let (train_set, dev) = synthetic(6, SyntheticTask::Discourse, 5);
            let cfg = TrainConfig {
                learning_rate: 1e-2,
                epochs: 4,
                batch_size: 4,
                seed: 17,
                ..TrainConfig::default()
            };
            let init = ModelParams::init(tiny_config(6, 3), 1).unwrap();
            let (best, history) = train(init, train_set, dev.clone(), &cfg).unwrap();
            (best, history, dev)
        };
        let (a, ha, dev) = run();
        let (b, hb, _) = run();
        assert_eq!(a.to_flat(), b.to_flat());
        assert_eq!(ha, hb);
        assert_eq!(ha.epochs.len(), 4);
        let max = ha.epochs.iter().map(|r| r.dev_weighted_f1).fold(f64::MIN, f64::max);
        assert!((ha.best_dev_weighted_f1().unwrap() - max).abs() < 1e-12);
        assert!((evaluate(&a, &dev, false).unwrap().weighted_f1 - max).abs() < 1e-12);
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (train, dev) = synthetic(5, SyntheticTask::Local, 8);
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            epochs: 3,
            batch_size: 2,
            seed: 4,
            ..TrainConfig::default()
        };
        let init = ModelParams::init(tiny_config(6, 3), 6).unwrap();
        let mut full = Trainer::new(cfg.clone(), train.clone(), dev.clone(), TrainState::fresh(init.clone())).unwrap();
        full.run(|_, _| Ok(())).unwrap();

        let short = TrainConfig { epochs: 1, ..cfg.clone() };
        let mut first = Trainer::new(short, train.clone(), dev.clone(), TrainState::fresh(init)).unwrap();
        first.run(|_, _| Ok(())).unwrap();
        let mut resumed = Trainer::new(cfg, train, dev, first.into_state()).unwrap();
        resumed.run(|_, _| Ok(())).unwrap();
        assert_eq!(resumed.state(), full.state());
    }

    #[test]
    fn evaluate_cases() {
        let (train, _) = synthetic(3, SyntheticTask::Local, 1);
        let mut one_class: Vec<Example> = train.clone();
        for ex in &mut one_class {
            ex.labels.iter_mut().for_each(|y| *y = 0);
        }
        // bias toward class 0 is an oracle for a single-class split
        let mut p = ModelParams::zeros(tiny_config(6, 3)).unwrap();
        p.params.out_bias = Matrix::column(vec![1.0, 0.0, 0.0]);
        assert_eq!(evaluate(&p, &one_class, false).unwrap().weighted_f1, 1.0);
        let q = ModelParams::init(tiny_config(6, 3), 5).unwrap();
        assert_eq!(evaluate(&q, &train, false).unwrap(), evaluate(&q, &train, false).unwrap());
        assert!(matches!(evaluate(&q, &[], false), Err(TrainError::EmptySplit(_))));
    }

    #[test]
    fn evaluate_hand_case() {
        // preds [0,1,1] against golds [0,0,1] -> 2/3
        let cfg = ModelConfig {
            dim_u: 1,
            dim_g: 1,
            dim_h: 1,
            layers: 1,
            num_classes: 2,
        };
        let mut p = ModelParams::zeros(cfg).unwrap();
        // logits depend on u only through the cell, so drive class via the
        // classifier weight on h: h has the sign of u.
        p.params.forward.w_u = Matrix::scalar(5.0);
        p.params.forward.w_o = Matrix::scalar(0.0);
        p.params.forward.w_i = Matrix::scalar(0.0);
        p.params.out_weight = Matrix::from_vec(2, 2, vec![-1.0, 0.0, 1.0, 0.0]).unwrap();
        let ex = Example {
            id: "h".into(),
            embeddings: Matrix::from_vec(3, 1, vec![-1.0, 1.0, 1.0]).unwrap(),
            graph: DiscourseGraph::empty(3),
            labels: vec![0, 0, 1],
        };
        let preds = predict_example(&p, &ex, false).unwrap();
        assert_eq!(preds[0], 0);
        let r = evaluate(&p, &[ex], false).unwrap();
        let direct = crate::metrics::weighted_f1(&preds, &[0, 0, 1], 2).unwrap();
        assert_eq!(r, direct);
    }

    #[test]
    fn logistic_baseline_fits_local_rule() {
        let (train, _) = synthetic(10, SyntheticTask::Local, 3);
        let lr = LogisticBaseline::fit(&train, 3, 300, 0.05, 0).unwrap();
        assert!(lr.evaluate(&train).unwrap().weighted_f1 > 0.8);
    }

    #[test]
    fn full_network_gradients() {
        let (params, ex) = gradient_check_problem(0);
        let r = check_gradients(&params, &ex, 1e-5, |_| {}).unwrap();
        assert_eq!(r.coordinates, params.num_parameters());
        assert!(r.max_relative_error < 1e-4, "{r:?}");
    }

    #[test]
    fn class_weights_inverse_frequency() {
        let ex = Example {
            id: "x".into(),
            embeddings: Matrix::zeros(4, 1),
            graph: DiscourseGraph::empty(4),
            labels: vec![0, 0, 0, 1],
        };
        let w = class_weights(&[ex], 3);
        assert!((w[0] - 4.0 / 9.0).abs() < 1e-15);
        assert!((w[1] - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
    }
}

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::losses::{combined_temporal_loss, LossBreakdown, LossTarget};
use crate::network::{Checkpoint, MaskPlan, Model, ModelConfig, STATE_PREFIX};
use crate::seqcore::{Adam, AdamConfig, Graph, ParamStore, SeqTensor};
use crate::{Error, Result};

/// Model, optimiser and schedule for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub optim: AdamConfig,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping; 0 never stops early.
    pub patience: usize,
    /// Improvement smaller than this does not reset patience.
    pub min_delta: f64,
    /// Trailing fraction of the sequences held out for validation.
    pub val_fraction: f64,
    /// Seeds sequence order and dropout; the model has its own seed.
    pub seed: u64,
    pub shuffle: bool,
    /// Evaluate training accuracy without dropout after every epoch.
    pub track_train_accuracy: bool,
    /// Stop once training accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    pub data_dir: Option<String>,
    pub out: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            optim: AdamConfig::default(),
            max_epochs: 120,
            patience: 20,
            min_delta: 0.0,
            val_fraction: 0.0,
            seed: 0,
            shuffle: true,
            track_train_accuracy: true,
            target_accuracy: None,
            data_dir: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!(
                "val_fraction {} outside [0, 1)",
                self.val_fraction
            )));
        }
        if !(self.optim.lr >= 0.0 && self.optim.eps > 0.0) {
            return Err(Error::Config(
                "lr must be non-negative and eps positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }
}

/// One labelled feature sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSample {
    pub name: String,
    pub features: SeqTensor,
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    /// Mean over training sequences, with dropout.
    pub train: LossBreakdown,
    pub val_loss: Option<f64>,
    /// Last-stage frame accuracy on the training sequences, no dropout.
    pub train_accuracy: Option<f64>,
    /// The value early stopping watches.
    pub monitored: f64,
    pub improved: bool,
}

impl EpochLog {
    pub fn to_line(&self) -> String {
        let mut s = format!(
            "epoch={} loss={} class={} dice={} similarity={} boundary={}",
            self.epoch,
            self.train.total,
            self.train.class,
            self.train.dice,
            self.train.similarity,
            self.train.boundary
        );
        if let Some(v) = self.val_loss {
            let _ = write!(s, " val_loss={v}");
        }
        if let Some(a) = self.train_accuracy {
            let _ = write!(s, " train_acc={a}");
        }
        let _ = write!(s, " improved={}", self.improved);
        s
    }
}

/// Everything needed to continue a run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub model: Model,
    pub adam: Adam,
    /// Completed epochs.
    pub epoch: usize,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub best_params: ParamStore,
    pub bad_epochs: usize,
}

impl TrainState {
    pub fn new(model: Model, optim: AdamConfig) -> Self {
        let best_params = model.params.clone();
        TrainState {
            model,
            adam: Adam::new(optim),
            epoch: 0,
            best_loss: f64::INFINITY,
            best_epoch: 0,
            best_params,
            bad_epochs: 0,
        }
    }

    /// The best parameters seen so far as a standalone model.
    pub fn best_model(&self) -> Model {
        Model {
            config: self.model.config.clone(),
            params: self.best_params.clone(),
        }
    }

    /// Blobs for [`save_checkpoint`](crate::network::save_checkpoint).
    pub fn state_blobs(&self) -> BTreeMap<String, SeqTensor> {
        let mut out = BTreeMap::new();
        let scalar = |v: f64| SeqTensor::scalar(v);
        out.insert(
            format!("{STATE_PREFIX}adam/step"),
            scalar(self.adam.step_count() as f64),
        );
        out.insert(format!("{STATE_PREFIX}epoch"), scalar(self.epoch as f64));
        out.insert(format!("{STATE_PREFIX}best_loss"), scalar(self.best_loss));
        out.insert(
            format!("{STATE_PREFIX}best_epoch"),
            scalar(self.best_epoch as f64),
        );
        out.insert(
            format!("{STATE_PREFIX}bad_epochs"),
            scalar(self.bad_epochs as f64),
        );
        let (m, v) = self.adam.moment_maps();
        for (kind, map) in [("m", m), ("v", v)] {
            for (name, data) in map {
                out.insert(
                    format!("{STATE_PREFIX}adam/{kind}/{name}"),
                    SeqTensor::vector(data.clone()),
                );
            }
        }
        for (name, t) in self.best_params.iter() {
            out.insert(format!("{STATE_PREFIX}best/{name}"), t.clone());
        }
        out
    }

    /// Rebuilds the state saved by [`state_blobs`](Self::state_blobs).
    pub fn from_checkpoint(ckpt: Checkpoint, optim: AdamConfig) -> Result<Self> {
        let get = |k: &str| -> Result<f64> {
            ckpt.state
                .get(&format!("{STATE_PREFIX}{k}"))
                .map(|t| t.data().first().copied().unwrap_or(f64::NAN))
                .ok_or_else(|| Error::Config(format!("checkpoint lacks training state {k}")))
        };
        let mut adam = Adam::new(optim);
        let (mut m, mut v) = (BTreeMap::new(), BTreeMap::new());
        let mut best = ParamStore::new();
        for (k, t) in &ckpt.state {
            let rest = &k[STATE_PREFIX.len()..];
            if let Some(n) = rest.strip_prefix("adam/m/") {
                m.insert(n.to_owned(), t.data().to_vec());
            } else if let Some(n) = rest.strip_prefix("adam/v/") {
                v.insert(n.to_owned(), t.data().to_vec());
            } else if let Some(n) = rest.strip_prefix("best/") {
                best.insert(n.to_owned(), t.clone());
            }
        }
        adam.restore(get("adam/step")? as u64, m, v);
        let best_params = if best.is_empty() {
            ckpt.model.params.clone()
        } else {
            best
        };
        Ok(TrainState {
            epoch: get("epoch")? as usize,
            best_loss: get("best_loss")?,
            best_epoch: get("best_epoch")? as usize,
            bad_epochs: get("bad_epochs")? as usize,
            model: ckpt.model,
            adam,
            best_params,
        })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Epochs run by this call.
    pub log: Vec<EpochLog>,
    pub stopped_early: bool,
    pub reached_target: bool,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

struct Prepared<'a> {
    index: usize,
    sample: &'a TrainSample,
    target: LossTarget,
}

fn prepare<'a>(cfg: &ModelConfig, data: &'a [TrainSample]) -> Result<Vec<Prepared<'a>>> {
    data.iter()
        .enumerate()
        .map(|(index, sample)| {
            if sample.features.rank() != 2 || sample.features.cols() != cfg.d_in {
                return Err(Error::shape(
                    "train",
                    sample.features.shape(),
                    &[sample.labels.len(), cfg.d_in],
                ));
            }
            if sample.features.rows() != sample.labels.len() {
                return Err(Error::shape(
                    "train",
                    &[sample.features.rows()],
                    &[sample.labels.len()],
                ));
            }
            if sample.labels.len() < 2 {
                return Err(Error::invalid(
                    "train",
                    format!("sequence {} has fewer than two frames", sample.name),
                ));
            }
            Ok(Prepared {
                index,
                sample,
                target: LossTarget::new(&sample.labels, cfg.n_classes, &cfg.loss)?,
            })
        })
        .collect()
}

fn plan_for<'p>(
    cache: &'p mut HashMap<usize, MaskPlan>,
    model: &Model,
    t: usize,
) -> Result<&'p MaskPlan> {
    if let std::collections::hash_map::Entry::Vacant(e) = cache.entry(t) {
        e.insert(model.mask_plan(t)?);
    }
    Ok(&cache[&t])
}

/// Loss (and optionally last-stage labels) without dropout or gradients.
fn evaluate(
    model: &Model,
    p: &Prepared<'_>,
    plan: &MaskPlan,
) -> Result<(LossBreakdown, Vec<usize>)> {
    let mut g = Graph::new();
    let bound = model.params.bind(&mut g, false);
    let x = g.constant(p.sample.features.clone());
    let pass = model.forward::<ChaCha8Rng>(&mut g, &bound, x, plan, None)?;
    let (_, parts) = combined_temporal_loss(&mut g, &pass.stages, &p.target, &model.config.loss)?;
    let last = pass.stages.last().expect("encoder stage");
    Ok((parts, g.value(last.logits).argmax_rows()))
}

/// Full-sequence training with Adam, one sequence per step.
///
/// Sequence order and dropout masks come from per-epoch and per-sequence
/// streams of `run.seed`, so a resumed run continues exactly as an
/// uninterrupted one. Returns early with [`Error::NonFiniteLoss`] on the
/// first NaN or infinite loss component or parameter.
pub fn train(
    run: &RunConfig,
    data: &[TrainSample],
    resume: Option<TrainState>,
) -> Result<TrainOutcome> {
    train_with(run, data, resume, |_| {})
}

pub fn train_with(
    run: &RunConfig,
    data: &[TrainSample],
    resume: Option<TrainState>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    run.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput { op: "train" });
    }
    let mut state = match resume {
        Some(s) => {
            if s.model.config != run.model {
                return Err(Error::Config(
                    "resumed checkpoint was trained with a different model config".into(),
                ));
            }
            s
        }
        None => TrainState::new(Model::new(run.model.clone())?, run.optim),
    };
    state.adam.config = run.optim;
    let prepared = prepare(&run.model, data)?;
    let n_val = ((prepared.len() as f64) * run.val_fraction).floor() as usize;
    let n_val = n_val.min(prepared.len() - 1);
    let (train_set, val_set) = prepared.split_at(prepared.len() - n_val);
    let mut plans: HashMap<usize, MaskPlan> = HashMap::new();
    let mut log = Vec::new();
    let mut stopped_early = false;
    let mut reached_target = false;

    while state.epoch < run.max_epochs {
        let epoch = state.epoch + 1;
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        if run.shuffle {
            order.shuffle(&mut stream_rng(run.seed, (1 << 63) | epoch as u64));
        }
        let mut sum = LossBreakdown::default();
        for &k in &order {
            let p = &train_set[k];
            let t = p.sample.labels.len();
            let plan = plan_for(&mut plans, &state.model, t)?;
            let mut g = Graph::new();
            let bound = state.model.params.bind(&mut g, true);
            let x = g.constant(p.sample.features.clone());
            let mut drop_rng = stream_rng(run.seed, ((epoch as u64) << 32) | p.index as u64);
            let pass = state
                .model
                .forward(&mut g, &bound, x, plan, Some(&mut drop_rng))?;
            let (loss, parts) =
                combined_temporal_loss(&mut g, &pass.stages, &p.target, &run.model.loss)?;
            if let Some(component) = parts.non_finite_component() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    component,
                    sequence: p.index,
                });
            }
            let grads = g.backward(loss)?;
            let named = bound.gradients(&grads)?;
            drop(g);
            state.adam.step(&mut state.model.params, &named)?;
            if !state.model.params.all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    component: "parameters",
                    sequence: p.index,
                });
            }
            sum.total += parts.total;
            sum.class += parts.class;
            sum.dice += parts.dice;
            sum.similarity += parts.similarity;
            sum.boundary += parts.boundary;
        }
        let n = train_set.len() as f64;
        let train_mean = LossBreakdown {
            total: sum.total / n,
            class: sum.class / n,
            dice: sum.dice / n,
            similarity: sum.similarity / n,
            boundary: sum.boundary / n,
        };

        let val_loss = if val_set.is_empty() {
            None
        } else {
            let mut total = 0.0;
            for p in val_set {
                let plan = plan_for(&mut plans, &state.model, p.sample.labels.len())?;
                total += evaluate(&state.model, p, plan)?.0.total;
            }
            Some(total / val_set.len() as f64)
        };
        let train_accuracy = if run.track_train_accuracy || run.target_accuracy.is_some() {
            let (mut hits, mut frames) = (0usize, 0usize);
            for p in train_set {
                let plan = plan_for(&mut plans, &state.model, p.sample.labels.len())?;
                let (_, pred) = evaluate(&state.model, p, plan)?;
                hits += pred
                    .iter()
                    .zip(&p.sample.labels)
                    .filter(|(a, b)| a == b)
                    .count();
                frames += pred.len();
            }
            Some(hits as f64 / frames as f64)
        } else {
            None
        };

        let monitored = val_loss.unwrap_or(train_mean.total);
        let improved = monitored < state.best_loss - run.min_delta;
        if improved {
            state.best_loss = monitored;
            state.best_epoch = epoch;
            state.best_params = state.model.params.clone();
            state.bad_epochs = 0;
        } else {
            state.bad_epochs += 1;
        }
        state.epoch = epoch;
        let entry = EpochLog {
            epoch,
            train: train_mean,
            val_loss,
            train_accuracy,
            monitored,
            improved,
        };
        on_epoch(&entry);
        log.push(entry);
        if let (Some(target), Some(acc)) = (run.target_accuracy, train_accuracy) {
            if acc >= target {
                reached_target = true;
                break;
            }
        }
        if run.patience > 0 && state.bad_epochs >= run.patience {
            stopped_early = true;
            break;
        }
    }
    Ok(TrainOutcome {
        state,
        log,
        stopped_early,
        reached_target,
    })
}

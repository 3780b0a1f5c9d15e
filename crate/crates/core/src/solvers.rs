//! Training loops for every method of the grid: sample groups under the
//! student, shape rewards per method, estimate the gradient, and take an
//! ascent step.

use crate::env::{EpisodeModel, TokenMdp, Trajectory};
use crate::error::{Error, Result};
use crate::gradient::{total_gradient, Batch, BaselineMode};
use crate::policy::{decode_table, encode_table, ByteReader, SoftmaxPolicy, Table, TeacherPolicy, DEFAULT_FLOOR};
use crate::rng::RunSeed;
use crate::shaping::{ConstrainedRewardSpec, Mode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

pub const DEFAULT_LEARNING_RATE: f64 = 5e-2;
/// Learning rate used for full-size language models; far too small for tables.
pub const LLM_LEARNING_RATE: f64 = 1e-5;
pub const DEFAULT_WARM_START_EPOCHS: usize = 3;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;
const WARM_START_STREAM: u64 = 0x5741_524d;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    Plain,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Reward parameters; `spec.mode` is the training method.
    pub spec: ConstrainedRewardSpec,
    pub groups_per_batch: usize,
    pub rollouts_per_group: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub baseline: BaselineMode,
    pub seed: RunSeed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            spec: ConstrainedRewardSpec::default(),
            groups_per_batch: 8,
            rollouts_per_group: 8,
            batches_per_epoch: 8,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: 20,
            optimizer: OptimizerKind::Adam,
            baseline: BaselineMode::Group,
            seed: RunSeed(0),
        }
    }
}

impl TrainConfig {
    pub fn method(&self) -> Mode {
        self.spec.mode
    }

    pub fn with_method(mut self, mode: Mode) -> Self {
        self.spec.mode = mode;
        self
    }

    pub fn batch_size(&self) -> usize {
        self.groups_per_batch * self.rollouts_per_group
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.groups_per_batch == 0 || self.rollouts_per_group == 0 || self.batches_per_epoch == 0 {
            return Err(Error::Config("batch dimensions must be positive".into()));
        }
        if self.baseline != BaselineMode::None && self.rollouts_per_group < 2 {
            return Err(Error::Config("group baseline needs at least 2 rollouts per group".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and > 0, got {}", self.learning_rate)));
        }
        Ok(())
    }
}

/// Optimizer moments; `step` counts updates taken so far.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub step: u64,
    pub m: Table,
    pub v: Table,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, rows: usize, cols: usize) -> Self {
        OptimizerState {
            kind,
            step: 0,
            m: Table::zeros(rows, cols),
            v: Table::zeros(rows, cols),
        }
    }

    /// Ascent step on `params` along `grad`.
    pub fn apply(&mut self, params: &mut Table, grad: &Table, lr: f64) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Plain => params.add_scaled(grad, lr),
            OptimizerKind::Adam => {
                let t = self.step as i32;
                let c1 = 1.0 - ADAM_BETA1.powi(t);
                let c2 = 1.0 - ADAM_BETA2.powi(t);
                let (m, v) = (self.m.as_mut_slice(), self.v.as_mut_slice());
                for (((p, g), m), v) in params.as_mut_slice().iter_mut().zip(grad.as_slice()).zip(m).zip(v) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    *p += lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPS);
                }
            }
        }
    }
}

/// One line of the training log, aggregated over the epoch's sampled episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Left out of the JSON log, whose location names the method.
    #[serde(skip_serializing, default)]
    pub method: String,
    pub mean_return: f64,
    pub mean_kl: f64,
    pub constraint_satisfaction: f64,
    pub violation_rate: f64,
}

impl EpochRecord {
    fn from_episodes(epoch: usize, spec: &ConstrainedRewardSpec, trajs: &[Trajectory]) -> Self {
        let n = trajs.len().max(1) as f64;
        let mut ret = 0.0;
        let mut kl = 0.0;
        let mut within = 0usize;
        let mut violated = 0usize;
        for t in trajs {
            ret += spec.shaped_return(t);
            kl += t.total_cost();
            within += t.within_budget(spec.budget) as usize;
            violated += hits_penalty_branch(t, spec.budget) as usize;
        }
        EpochRecord {
            epoch,
            method: spec.mode.to_string(),
            mean_return: ret / n,
            mean_kl: kl / n,
            constraint_satisfaction: within as f64 / n,
            violation_rate: violated as f64 / n,
        }
    }
}

/// Whether some step of `t` sees a negative remaining budget.
pub fn hits_penalty_branch(t: &Trajectory, budget: f64) -> bool {
    let n = t.len();
    n > 1 && t.steps[..n - 1].iter().map(|s| s.cost).sum::<f64>() > budget
}

/// Training log as JSON lines.
pub fn log_to_jsonl(records: &[EpochRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("epoch records serialize"));
        out.push('\n');
    }
    out
}

/// Snapshot after a completed epoch. `epoch` counts completed epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: usize,
    pub policy: SoftmaxPolicy,
    pub optimizer: OptimizerState,
    pub records: Vec<EpochRecord>,
}

const CHECKPOINT_MAGIC: [u8; 4] = *b"BDCK";
const MOMENT_MAGIC: [u8; 4] = *b"BDOM";
const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    /// Layout (little-endian): magic, version u32, epoch u64, policy table,
    /// optimizer kind u32, step u64, first and second moment tables,
    /// record count u64, then per record: epoch u64, method length u32,
    /// method bytes, four f64 metrics.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.epoch as u64).to_le_bytes());
        out.extend(self.policy.to_bytes());
        let kind: u32 = match self.optimizer.kind {
            OptimizerKind::Plain => 0,
            OptimizerKind::Adam => 1,
        };
        out.extend_from_slice(&kind.to_le_bytes());
        out.extend_from_slice(&self.optimizer.step.to_le_bytes());
        out.extend(encode_table(MOMENT_MAGIC, 0.0, &self.optimizer.m));
        out.extend(encode_table(MOMENT_MAGIC, 0.0, &self.optimizer.v));
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        for r in &self.records {
            out.extend_from_slice(&(r.epoch as u64).to_le_bytes());
            out.extend_from_slice(&(r.method.len() as u32).to_le_bytes());
            out.extend_from_slice(r.method.as_bytes());
            for x in [r.mean_return, r.mean_kl, r.constraint_satisfaction, r.violation_rate] {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let epoch = r.u64()? as usize;
        let (floor, logits, used) = decode_table(*b"BDSP", r.remaining())?;
        r.take(used)?;
        let policy = SoftmaxPolicy::from_logits(logits, floor)?;
        let kind = match r.u32()? {
            0 => OptimizerKind::Plain,
            1 => OptimizerKind::Adam,
            k => return Err(Error::Format(format!("unknown optimizer tag {k}"))),
        };
        let step = r.u64()?;
        let (_, m, used) = decode_table(MOMENT_MAGIC, r.remaining())?;
        r.take(used)?;
        let (_, v, used) = decode_table(MOMENT_MAGIC, r.remaining())?;
        r.take(used)?;
        let count = r.u64()? as usize;
        let mut records = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let epoch = r.u64()? as usize;
            let len = r.u32()? as usize;
            let method = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| Error::Format("method label is not utf-8".into()))?;
            records.push(EpochRecord {
                epoch,
                method,
                mean_return: r.f64()?,
                mean_kl: r.f64()?,
                constraint_satisfaction: r.f64()?,
                violation_rate: r.f64()?,
            });
        }
        if !r.remaining().is_empty() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint {
            epoch,
            policy,
            optimizer: OptimizerState { kind, step, m, v },
            records,
        })
    }

    /// Writes to a temporary sibling, then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub policy: SoftmaxPolicy,
    /// One per completed epoch.
    pub checkpoints: Vec<Checkpoint>,
}

impl TrainOutcome {
    pub fn records(&self) -> &[EpochRecord] {
        self.checkpoints.last().map_or(&[], |c| &c.records)
    }
}

/// Trains from the uniform student.
pub fn train(mdp: &TokenMdp, teacher: &TeacherPolicy, config: &TrainConfig) -> Result<TrainOutcome> {
    let init = SoftmaxPolicy::uniform(mdp.num_states(), mdp.vocab_size(), DEFAULT_FLOOR);
    train_from(mdp, teacher, init, config)
}

pub fn train_from(
    mdp: &TokenMdp,
    teacher: &TeacherPolicy,
    init: SoftmaxPolicy,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let optimizer = OptimizerState::new(config.optimizer, init.num_states(), init.vocab_size());
    let start = Checkpoint {
        epoch: 0,
        policy: init,
        optimizer,
        records: Vec::new(),
    };
    resume(mdp, teacher, start, config)
}

/// Continues a run from `checkpoint` up to `config.epochs`. Every batch draws
/// from a stream keyed by (epoch, batch), so resuming reproduces the
/// uninterrupted run exactly.
pub fn resume(
    mdp: &TokenMdp,
    teacher: &TeacherPolicy,
    checkpoint: Checkpoint,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    mdp.check_policies(&checkpoint.policy, teacher)?;
    let spec = &config.spec;
    let mut state = checkpoint;
    let mut checkpoints = Vec::new();
    for epoch in state.epoch..config.epochs {
        let mut seen = Vec::with_capacity(config.batch_size() * config.batches_per_epoch);
        for b in 0..config.batches_per_epoch {
            let batch = sample_batch(mdp, &state.policy, teacher, config, epoch, b)?;
            let est = total_gradient(&state.policy, teacher, &batch, spec, config.baseline)?;
            let mut params = state.policy.logits().clone();
            let mut opt = state.optimizer.clone();
            if est.table.is_finite() {
                opt.apply(&mut params, &est.table, config.learning_rate);
            }
            if !est.table.is_finite() || !params.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    last_finite: checkpoints.last().cloned().map(Box::new),
                });
            }
            *state.policy.logits_mut() = params;
            state.optimizer = opt;
            seen.extend(batch.trajectories);
        }
        state.records.push(EpochRecord::from_episodes(epoch, spec, &seen));
        state.epoch = epoch + 1;
        checkpoints.push(state.clone());
    }
    Ok(TrainOutcome {
        policy: state.policy,
        checkpoints,
    })
}

fn sample_batch(
    mdp: &TokenMdp,
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    config: &TrainConfig,
    epoch: usize,
    batch: usize,
) -> Result<Batch> {
    let model = EpisodeModel::new(mdp, student, teacher, &config.spec)?;
    let trajectories: Vec<Trajectory> = (0..config.batch_size())
        .into_par_iter()
        .map(|i| {
            let mut rng = config.seed.stream(&[epoch as u64, batch as u64, i as u64]);
            model.rollout(&mut rng)
        })
        .collect();
    Batch::new(trajectories, config.rollouts_per_group)
}

/// Runs `epochs_kl` epochs of per-step KL distillation from `init`.
pub fn warm_start(
    mdp: &TokenMdp,
    teacher: &TeacherPolicy,
    init: SoftmaxPolicy,
    config: &TrainConfig,
    epochs_kl: usize,
) -> Result<SoftmaxPolicy> {
    if epochs_kl == 0 {
        return Ok(init);
    }
    let mut cfg = config.clone().with_method(Mode::KlOnly);
    cfg.epochs = epochs_kl;
    cfg.seed = config.seed.child(&[WARM_START_STREAM]);
    Ok(train_from(mdp, teacher, init, &cfg)?.policy)
}

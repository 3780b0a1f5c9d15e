//! Experiment frontend: configuration, evaluation, per-cell persistence and
//! report emission.
//!
//! Output directory layout:
//!
//! ```text
//! run.json                       manifest: config echo and expected cells
//! cells/<label>/seed-<s>/        log.jsonl, policy.bin, metrics.json
//! metrics.csv pareto.csv theorems.csv scatter.svg
//! ```

use crate::env::{EpisodeModel, TaskDefinition, TokenMdp, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::gradient::BaselineMode;
use crate::policy::{SoftmaxPolicy, TeacherPolicy, DEFAULT_FLOOR};
use crate::rng::RunSeed;
use crate::shaping::{ConstrainedRewardSpec, Mode, LAMBDA_GRID};
use crate::solvers::{self, log_to_jsonl, write_atomic, EpochRecord, OptimizerKind, TrainConfig};
use crate::tasks::{self, TensionParams};
use crate::verification::{merge_reports, TheoremReport};
use crate::DivergenceKind;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_EVAL_ROLLOUTS: usize = 10_000;
pub const METRICS_COLUMNS: [&str; 6] = [
    "method",
    "seed",
    "task_success_rate",
    "mean_kl",
    "constraint_satisfaction",
    "violation_probability",
];
const EVAL_STREAM: u64 = 0x4556_414c;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub warm_start_epochs: usize,
    pub output_dir: PathBuf,
    /// Probability floor shared by student and teacher.
    #[serde(default = "default_floor")]
    pub floor: f64,
    pub task: TaskConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub reward: RewardConfig,
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default)]
    pub report: ReportConfig,
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskConfig {
    Tension {
        #[serde(flatten)]
        params: TensionParams,
    },
    Chain {
        length: usize,
        #[serde(default = "default_horizon")]
        horizon: usize,
        teacher_advance: f64,
    },
    SingleStep {
        vocab_size: usize,
        teacher_correct: f64,
    },
    /// A task definition file; relative paths resolve against the config file.
    File { path: PathBuf },
}

fn default_horizon() -> usize {
    crate::env::DEFAULT_HORIZON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub groups_per_batch: usize,
    pub rollouts_per_group: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub baseline: BaselineMode,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainingConfig {
            groups_per_batch: t.groups_per_batch,
            rollouts_per_group: t.rollouts_per_group,
            batches_per_epoch: t.batches_per_epoch,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            optimizer: t.optimizer,
            baseline: t.baseline,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub budget: f64,
    pub penalty: f64,
    pub epsilon: f64,
    pub cost_kind: DivergenceKind,
    pub phi_kind: DivergenceKind,
    pub gamma: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        let s = ConstrainedRewardSpec::default();
        RewardConfig {
            budget: s.budget,
            penalty: s.penalty,
            epsilon: s.epsilon,
            cost_kind: s.cost_kind,
            phi_kind: s.phi_kind,
            gamma: s.gamma,
        }
    }
}

/// One entry of the method list. `method = "lagrangian"` expands over
/// `lambdas` (the standard grid when omitted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub method: String,
    #[serde(default)]
    pub lambdas: Option<Vec<f64>>,
    #[serde(default)]
    pub budget: Option<f64>,
    #[serde(default)]
    pub penalty: Option<f64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    /// Rollouts per policy when enumeration exceeds `enumeration_cap`.
    pub eval_rollouts: usize,
    pub enumeration_cap: usize,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            eval_rollouts: DEFAULT_EVAL_ROLLOUTS,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub x: Axis,
    pub y: Axis,
    /// Randomized theorem-check instances run alongside the experiment; 0 skips.
    pub verification_instances: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            x: Axis::new(Metric::TaskSuccessRate),
            y: Axis::new(Metric::ConstraintSatisfaction),
            verification_instances: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TaskSuccessRate,
    MeanKl,
    ConstraintSatisfaction,
    ViolationProbability,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::TaskSuccessRate => "task_success_rate",
            Metric::MeanKl => "mean_kl",
            Metric::ConstraintSatisfaction => "constraint_satisfaction",
            Metric::ViolationProbability => "violation_probability",
        }
    }

    pub fn larger_is_better(self) -> bool {
        matches!(self, Metric::TaskSuccessRate | Metric::ConstraintSatisfaction)
    }

    pub fn of(self, r: &MetricsRow) -> f64 {
        match self {
            Metric::TaskSuccessRate => r.task_success_rate,
            Metric::MeanKl => r.mean_kl,
            Metric::ConstraintSatisfaction => r.constraint_satisfaction,
            Metric::ViolationProbability => r.violation_probability,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Metric::TaskSuccessRate,
            Metric::MeanKl,
            Metric::ConstraintSatisfaction,
            Metric::ViolationProbability,
        ]
        .into_iter()
        .find(|m| m.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown metric '{s}'")))
    }
}

/// A metric with its orientation; the orientation defaults to the metric's own.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub metric: Metric,
    #[serde(default)]
    pub larger_is_better: Option<bool>,
}

impl Axis {
    pub fn new(metric: Metric) -> Self {
        Axis {
            metric,
            larger_is_better: None,
        }
    }

    /// Value oriented so that larger is better.
    pub fn score(&self, r: &MetricsRow) -> f64 {
        let v = self.metric.of(r);
        if self.larger_is_better.unwrap_or(self.metric.larger_is_better()) {
            v
        } else {
            -v
        }
    }
}

/// A (method, seed) job after expansion of the method list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub label: String,
    pub spec: ConstrainedRewardSpec,
    pub seed: u64,
}

impl Cell {
    pub fn dir(&self, root: &Path) -> PathBuf {
        root.join("cells").join(sanitize(&self.label)).join(format!("seed-{}", self.seed))
    }
}

fn sanitize(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.=".contains(c) { c } else { '_' })
        .collect()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        if let TaskConfig::File { path: p } = &mut cfg.task {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: at least one seed required".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods: at least one method required".into()));
        }
        if !(0.0..1.0).contains(&self.floor) {
            return Err(Error::Config(format!("floor: must lie in [0, 1), got {}", self.floor)));
        }
        let cells = self.cells()?;
        for c in &cells {
            self.train_config(c).validate().map_err(|e| Error::Config(format!("method '{}': {e}", c.label)))?;
        }
        let mut labels: Vec<&str> = Vec::new();
        for c in &cells {
            if c.seed == self.seeds[0] {
                if labels.contains(&c.label.as_str()) {
                    return Err(Error::Config(format!("methods: duplicate label '{}'", c.label)));
                }
                labels.push(&c.label);
            }
        }
        if self.evaluation.eval_rollouts == 0 {
            return Err(Error::Config("evaluation.eval_rollouts: must be positive".into()));
        }
        Ok(())
    }

    fn base_spec(&self) -> ConstrainedRewardSpec {
        let r = &self.reward;
        ConstrainedRewardSpec {
            budget: r.budget,
            penalty: r.penalty,
            epsilon: r.epsilon,
            cost_kind: r.cost_kind,
            phi_kind: r.phi_kind,
            mode: Mode::Unaugmented,
            gamma: r.gamma,
        }
    }

    /// Labelled reward specs, in method-list order.
    pub fn method_specs(&self) -> Result<Vec<(String, ConstrainedRewardSpec)>> {
        let mut out = Vec::new();
        for m in &self.methods {
            let mut base = self.base_spec();
            if let Some(d) = m.budget {
                base.budget = d;
            }
            if let Some(n) = m.penalty {
                base.penalty = n;
            }
            if let Some(e) = m.epsilon {
                base.epsilon = e;
            }
            let modes: Vec<Mode> = if m.method.trim() == "lagrangian" {
                m.lambdas.clone().unwrap_or(LAMBDA_GRID.to_vec()).into_iter().map(Mode::Lagrangian).collect()
            } else if m.lambdas.is_some() {
                return Err(Error::Config(format!("methods: 'lambdas' only applies to lagrangian, not '{}'", m.method)));
            } else {
                vec![m.method.parse()?]
            };
            if m.label.is_some() && modes.len() > 1 {
                return Err(Error::Config("methods: 'label' cannot be used with a lambda grid".into()));
            }
            for mode in modes {
                let spec = base.with_mode(mode);
                spec.validate()?;
                out.push((m.label.clone().unwrap_or_else(|| mode.to_string()), spec));
            }
        }
        Ok(out)
    }

    /// Every (method, seed) job, methods outermost.
    pub fn cells(&self) -> Result<Vec<Cell>> {
        Ok(self
            .method_specs()?
            .into_iter()
            .flat_map(|(label, spec)| {
                self.seeds.iter().map(move |&seed| Cell {
                    label: label.clone(),
                    spec,
                    seed,
                })
            })
            .collect())
    }

    pub fn train_config(&self, cell: &Cell) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            spec: cell.spec,
            groups_per_batch: t.groups_per_batch,
            rollouts_per_group: t.rollouts_per_group,
            batches_per_epoch: t.batches_per_epoch,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            optimizer: t.optimizer,
            baseline: t.baseline,
            seed: RunSeed(cell.seed),
        }
    }

    pub fn build_task(&self) -> Result<(TokenMdp, TeacherPolicy)> {
        match &self.task {
            TaskConfig::Tension { params } => tasks::tension(params, self.floor),
            TaskConfig::Chain {
                length,
                horizon,
                teacher_advance,
            } => {
                let mdp = tasks::chain(*length, *horizon)?;
                let teacher = tasks::chain_teacher(&mdp, *teacher_advance, self.floor)?;
                Ok((mdp, teacher))
            }
            TaskConfig::SingleStep {
                vocab_size,
                teacher_correct,
            } => {
                let mdp = tasks::single_step(*vocab_size)?;
                let teacher = tasks::single_step_teacher(&mdp, *teacher_correct, self.floor)?;
                Ok((mdp, teacher))
            }
            TaskConfig::File { path } => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let def = TaskDefinition::from_toml(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let mdp = def.to_mdp()?;
                let teacher = def
                    .to_teacher(self.floor)?
                    .ok_or_else(|| Error::Config(format!("{}: task file needs a teacher table", path.display())))?;
                Ok((mdp, teacher))
            }
        }
    }
}

/// Evaluation of one trained policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub method: String,
    pub seed: u64,
    /// Probability of a positive task return.
    pub task_success_rate: f64,
    /// Expected summed per-state cost of an episode.
    pub mean_kl: f64,
    /// Probability that the summed cost stays within the budget.
    pub constraint_satisfaction: f64,
    pub violation_probability: f64,
    /// Whether the numbers are exact (enumeration) or sampled.
    pub exact: bool,
    pub curve: Vec<EpochRecord>,
}

impl MetricsRecord {
    pub fn row(&self) -> MetricsRow {
        MetricsRow {
            method: self.method.clone(),
            seed: self.seed,
            task_success_rate: self.task_success_rate,
            mean_kl: self.mean_kl,
            constraint_satisfaction: self.constraint_satisfaction,
            violation_probability: self.violation_probability,
        }
    }
}

/// One line of `metrics.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub seed: u64,
    pub task_success_rate: f64,
    pub mean_kl: f64,
    pub constraint_satisfaction: f64,
    pub violation_probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub task_success_rate: f64,
    pub mean_kl: f64,
    pub constraint_satisfaction: f64,
    pub violation_probability: f64,
    pub exact: bool,
}

/// Exact when the trajectory tree fits under the cap, else `eval_rollouts`
/// samples from a stream separate from training.
pub fn evaluate(
    mdp: &TokenMdp,
    student: &SoftmaxPolicy,
    teacher: &TeacherPolicy,
    spec: &ConstrainedRewardSpec,
    eval: &EvaluationConfig,
    seed: RunSeed,
) -> Result<Evaluation> {
    let model = EpisodeModel::new(mdp, student, teacher, spec)?;
    let (mut success, mut kl, mut violating) = (0.0, 0.0, 0.0);
    let exact = mdp.trajectory_count() <= eval.enumeration_cap as u64;
    if exact {
        model.for_each_trajectory(eval.enumeration_cap, |t, p| {
            success += p * (t.task_return() > 0.0) as u8 as f64;
            kl += p * t.total_cost();
            violating += p * (!t.within_budget(spec.budget)) as u8 as f64;
        })?;
    } else {
        let seed = seed.child(&[EVAL_STREAM]);
        let trajs: Vec<_> = (0..eval.eval_rollouts)
            .into_par_iter()
            .map(|i| model.rollout(&mut seed.stream(&[i as u64])))
            .collect();
        let n = trajs.len() as f64;
        for t in &trajs {
            success += (t.task_return() > 0.0) as u8 as f64;
            kl += t.total_cost();
            violating += (!t.within_budget(spec.budget)) as u8 as f64;
        }
        success /= n;
        kl /= n;
        violating /= n;
    }
    let violating = violating.clamp(0.0, 1.0);
    Ok(Evaluation {
        task_success_rate: success.clamp(0.0, 1.0),
        mean_kl: kl.max(0.0),
        constraint_satisfaction: 1.0 - violating,
        violation_probability: violating,
        exact,
    })
}

/// Warm start, train and evaluate one cell.
pub fn run_cell(
    config: &ExperimentConfig,
    mdp: &TokenMdp,
    teacher: &TeacherPolicy,
    cell: &Cell,
) -> Result<(SoftmaxPolicy, MetricsRecord)> {
    let tc = config.train_config(cell);
    let init = SoftmaxPolicy::uniform(mdp.num_states(), mdp.vocab_size(), config.floor);
    let init = solvers::warm_start(mdp, teacher, init, &tc, config.warm_start_epochs)?;
    let outcome = solvers::train_from(mdp, teacher, init, &tc)?;
    let ev = evaluate(mdp, &outcome.policy, teacher, &cell.spec, &config.evaluation, tc.seed)?;
    let record = MetricsRecord {
        method: cell.label.clone(),
        seed: cell.seed,
        task_success_rate: ev.task_success_rate,
        mean_kl: ev.mean_kl,
        constraint_satisfaction: ev.constraint_satisfaction,
        violation_probability: ev.violation_probability,
        exact: ev.exact,
        curve: outcome.records().to_vec(),
    };
    Ok((outcome.policy, record))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub cells: Vec<CellStatus>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStatus {
    pub method: String,
    pub seed: u64,
    pub dir: PathBuf,
    /// `None` when the cell completed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub output_dir: PathBuf,
    pub records: Vec<MetricsRecord>,
    pub failures: Vec<CellStatus>,
}

const REPORT_FILES: [&str; 5] = ["metrics.csv", "pareto.csv", "theorems.csv", "scatter.svg", "theorems.json"];

/// Runs every cell in parallel, writes per-cell artifacts and the manifest,
/// then emits reports. Refuses a directory holding a previous run unless
/// `force`, in which case the previous run's artifacts are removed first.
pub fn run_experiment(config: &ExperimentConfig, force: bool) -> Result<RunSummary> {
    config.validate()?;
    let out = config.output_dir.clone();
    let manifest_path = out.join("run.json");
    if manifest_path.exists() || out.join("cells").exists() {
        if !force {
            return Err(Error::OutputExists(out));
        }
        remove_if_exists(&out.join("cells"))?;
        for f in REPORT_FILES.iter().chain(["run.json"].iter()) {
            remove_if_exists(&out.join(f))?;
        }
    }
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let (mdp, teacher) = config.build_task()?;
    let cells = config.cells()?;

    let results: Vec<Result<MetricsRecord>> = cells
        .par_iter()
        .map(|cell| {
            let dir = cell.dir(&out);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            match run_cell(config, &mdp, &teacher, cell) {
                Ok((policy, record)) => {
                    write_atomic(&dir.join("policy.bin"), &policy.to_bytes())?;
                    write_atomic(&dir.join("log.jsonl"), log_to_jsonl(&record.curve).as_bytes())?;
                    write_json(&dir.join("metrics.json"), &record)?;
                    Ok(record)
                }
                Err(e) => {
                    if let Error::NonFinite {
                        last_finite: Some(ck), ..
                    } = &e
                    {
                        ck.save(&dir.join("checkpoint.bin"))?;
                    }
                    Err(e)
                }
            }
        })
        .collect();

    let mut records = Vec::new();
    let mut statuses = Vec::new();
    let mut failures = Vec::new();
    for (cell, r) in cells.iter().zip(results) {
        let status = CellStatus {
            method: cell.label.clone(),
            seed: cell.seed,
            dir: cell.dir(Path::new("")),
            error: r.as_ref().err().map(|e| e.to_string()),
        };
        match r {
            Ok(rec) => records.push(rec),
            Err(_) => failures.push(status.clone()),
        }
        statuses.push(status);
    }
    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        cells: statuses,
    };
    write_json(&manifest_path, &manifest)?;

    if config.report.verification_instances > 0 {
        let reports = crate::verification::run_battery(config.report.verification_instances, RunSeed(config.seeds[0]))?;
        write_json(&out.join("theorems.json"), &reports)?;
    }
    if failures.is_empty() {
        emit_reports(&out)?;
    }
    Ok(RunSummary {
        output_dir: out,
        records,
        failures,
    })
}

fn remove_if_exists(path: &Path) -> Result<()> {
    let r = if path.is_dir() {
        std::fs::remove_dir_all(path)
    } else {
        std::fs::remove_file(path)
    };
    match r {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Per-cell records of a completed run in manifest order; cells without
/// results are reported together as [`Error::Incomplete`].
pub fn load_records(dir: &Path) -> Result<Vec<MetricsRecord>> {
    let manifest: RunManifest = read_json(&dir.join("run.json"))?;
    let mut records = Vec::new();
    let mut missing = Vec::new();
    for c in &manifest.cells {
        let path = dir.join(&c.dir).join("metrics.json");
        if c.error.is_some() || !path.exists() {
            missing.push(format!("{} seed {}", c.method, c.seed));
            continue;
        }
        records.push(read_json(&path)?);
    }
    if !missing.is_empty() {
        return Err(Error::Incomplete(missing));
    }
    Ok(records)
}

/// Indices of rows not dominated by another row: at least as good on both
/// axes and strictly better on one. Indices come back in input order.
pub fn pareto_front(rows: &[MetricsRow], x: Axis, y: Axis) -> Vec<usize> {
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (x.score(r), y.score(r))).collect();
    (0..pts.len())
        .filter(|&i| {
            let (xi, yi) = pts[i];
            !pts.iter().any(|&(xj, yj)| xj >= xi && yj >= yi && (xj > xi || yj > yi))
        })
        .collect()
}

/// Per-method means over seeds, in first-appearance order. `seed` holds the
/// number of rows averaged.
pub fn method_means(rows: &[MetricsRow]) -> Vec<MetricsRow> {
    let mut out: Vec<MetricsRow> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|m| m.method == r.method) {
            Some(m) => {
                m.seed += 1;
                m.task_success_rate += r.task_success_rate;
                m.mean_kl += r.mean_kl;
                m.constraint_satisfaction += r.constraint_satisfaction;
                m.violation_probability += r.violation_probability;
            }
            None => out.push(MetricsRow { seed: 1, ..r.clone() }),
        }
    }
    for m in &mut out {
        let n = m.seed as f64;
        m.task_success_rate /= n;
        m.mean_kl /= n;
        m.constraint_satisfaction /= n;
        m.violation_probability /= n;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParetoRow {
    method: String,
    runs: u64,
    task_success_rate: f64,
    mean_kl: f64,
    constraint_satisfaction: f64,
    violation_probability: f64,
    pareto: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TheoremRow {
    theorem: String,
    instances: usize,
    max_deviation: f64,
    tolerance: f64,
    passed: bool,
}

pub fn metrics_csv(rows: &[MetricsRow]) -> Result<String> {
    to_csv(rows)
}

/// Method means with front membership under the given axes.
pub fn pareto_csv(rows: &[MetricsRow], x: Axis, y: Axis) -> Result<String> {
    let means = method_means(rows);
    let front = pareto_front(&means, x, y);
    let out: Vec<ParetoRow> = means
        .iter()
        .enumerate()
        .map(|(i, m)| ParetoRow {
            method: m.method.clone(),
            runs: m.seed,
            task_success_rate: m.task_success_rate,
            mean_kl: m.mean_kl,
            constraint_satisfaction: m.constraint_satisfaction,
            violation_probability: m.violation_probability,
            pareto: front.contains(&i),
        })
        .collect();
    to_csv(&out)
}

/// One line per theorem, deviations reduced to their maximum.
pub fn theorems_csv(reports: &[TheoremReport]) -> Result<String> {
    let rows: Vec<TheoremRow> = merge_reports(reports)
        .into_iter()
        .map(|r| TheoremRow {
            theorem: r.theorem,
            instances: r.instances,
            max_deviation: r.max_deviation,
            tolerance: r.tolerance,
            passed: r.passed,
        })
        .collect();
    if rows.is_empty() {
        return Ok("theorem,instances,max_deviation,tolerance,passed\n".to_string());
    }
    to_csv(&rows)
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::Format(e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != METRICS_COLUMNS {
        return Err(Error::Format(format!("{}: unexpected columns {header:?}", path.display())));
    }
    r.deserialize()
        .collect::<std::result::Result<Vec<MetricsRow>, _>>()
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

/// Scatter of every row on the two axes, front members drawn filled red.
pub fn scatter_svg(rows: &[MetricsRow], x: Metric, y: Metric, front: &[usize]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const M: f64 = 50.0;
    let range = |m: Metric| {
        let (lo, hi) = rows
            .iter()
            .map(|r| m.of(r))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        if !lo.is_finite() {
            (0.0, 1.0)
        } else if hi - lo < 1e-9 {
            (lo - 0.5, hi + 0.5)
        } else {
            let pad = 0.05 * (hi - lo);
            (lo - pad, hi + pad)
        }
    };
    let (x0, x1) = range(x);
    let (y0, y1) = range(y);
    let px = |v: f64| M + (v - x0) / (x1 - x0) * (W - 2.0 * M);
    let py = |v: f64| H - M - (v - y0) / (y1 - y0) * (H - 2.0 * M);
    let mut s = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    s += &format!(
        "<rect x=\"{M}\" y=\"{M}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n",
        W - 2.0 * M,
        H - 2.0 * M
    );
    s += &format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\">{x} [{x0:.3}, {x1:.3}]</text>\n",
        W / 2.0,
        H - 15.0
    );
    s += &format!(
        "<text x=\"15\" y=\"{}\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 {})\">{y} [{y0:.3}, {y1:.3}]</text>\n",
        H / 2.0,
        H / 2.0
    );
    for (i, r) in rows.iter().enumerate() {
        let on = front.contains(&i);
        s += &format!(
            "<circle class=\"marker\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\" stroke=\"black\"><title>{} seed {}</title></circle>\n",
            px(x.of(r)),
            py(y.of(r)),
            if on { "red" } else { "white" },
            xml_escape(&r.method),
            r.seed
        );
    }
    s += "</svg>\n";
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Writes metrics.csv, pareto.csv, theorems.csv and scatter.svg from the
/// per-cell results of a completed run.
pub fn emit_reports(dir: &Path) -> Result<()> {
    let manifest: RunManifest = read_json(&dir.join("run.json"))?;
    let records = load_records(dir)?;
    for r in &records {
        if (r.constraint_satisfaction + r.violation_probability - 1.0).abs() > 1e-12 {
            return Err(Error::Format(format!("{} seed {}: satisfaction and violation do not sum to 1", r.method, r.seed)));
        }
    }
    let rows: Vec<MetricsRow> = records.iter().map(MetricsRecord::row).collect();
    let (x, y) = (manifest.config.report.x, manifest.config.report.y);
    write_atomic(&dir.join("metrics.csv"), metrics_csv(&rows)?.as_bytes())?;
    write_atomic(&dir.join("pareto.csv"), pareto_csv(&rows, x, y)?.as_bytes())?;
    let theorems_path = dir.join("theorems.json");
    let reports: Vec<TheoremReport> = if theorems_path.exists() {
        read_json(&theorems_path)?
    } else {
        Vec::new()
    };
    write_atomic(&dir.join("theorems.csv"), theorems_csv(&reports)?.as_bytes())?;
    let front = pareto_front(&rows, x, y);
    write_atomic(&dir.join("scatter.svg"), scatter_svg(&rows, x.metric, y.metric, &front).as_bytes())?;
    Ok(())
}

/// Writes verification reports where `emit_reports` picks them up.
pub fn save_theorem_reports(dir: &Path, reports: &[TheoremReport]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join("theorems.json"), &reports)
}

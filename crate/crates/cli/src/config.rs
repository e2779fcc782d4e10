//! Experiment configuration: the TOML grammar, strict parsing, validation
//! that reports every problem at once, and resolution into core types.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gifair_core::algorithms::{
    Algorithm, LrSchedule, RMode, SamplingKind, SamplingScheme, TrainPlan,
};
use gifair_core::client::GroupStructure;
use gifair_core::datagen::{generate_population, imbalance_population, GroupGenerator, PopulationSpec};
use gifair_core::fairness::lambda_max;
use gifair_core::objectives::{BatchSampling, BatchSpec, ObjectiveKind};

/// How the run's regularization strength is specified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaSpec {
    Absolute(f64),
    FractionOfMax(f64),
}

impl LambdaSpec {
    pub fn resolve(&self, lambda_max: f64) -> f64 {
        match *self {
            LambdaSpec::Absolute(v) => v,
            LambdaSpec::FractionOfMax(f) => {
                if lambda_max.is_finite() {
                    f * lambda_max
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    Zeros,
    RandomNormal { scale: f64 },
}

/// Everything the plan needs except the resolved lambda.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanTemplate {
    pub algorithm: Algorithm,
    pub rounds: usize,
    pub local_steps: usize,
    pub batch: BatchSpec,
    pub schedule: LrSchedule,
    pub sampling: SamplingScheme,
    pub r_mode: RMode,
    pub lambda: LambdaSpec,
    pub init: InitSpec,
    pub initial_group_losses: Option<Vec<f64>>,
}

impl PlanTemplate {
    pub fn to_plan(&self, lambda: f64) -> TrainPlan {
        TrainPlan {
            algorithm: self.algorithm,
            rounds: self.rounds,
            local_steps: self.local_steps,
            batch: self.batch,
            schedule: self.schedule,
            sampling: self.sampling,
            lambda,
            r_mode: self.r_mode,
            initial_group_losses: self.initial_group_losses.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub lambdas: Vec<LambdaSpec>,
    pub algorithms: Vec<Algorithm>,
}

/// Fully validated description of one experiment invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub population: PopulationSpec,
    pub objective: ObjectiveKind,
    pub plan: PlanTemplate,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub sweep: Option<SweepSpec>,
    pub gamma_diagnostics: bool,
    pub dump_data: bool,
}

// ---------------------------------------------------------------------------
// Raw TOML grammar (documented in the README). Unknown keys are rejected.
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub population: RawPopulation,
    pub objective: RawObjective,
    pub plan: RawPlan,
    pub run: RawRun,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<RawSweep>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPopulation {
    /// Clients per group.
    pub groups: Vec<usize>,
    /// Examples per client, one entry per group (a single entry broadcasts).
    pub examples_per_client: Vec<usize>,
    pub feature_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heterogeneity: Option<f64>,
    /// Train/validation/test fractions, default [0.7, 0.1, 0.2].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<[f64; 3]>,
    /// Rewrites a two-group population into majority/minority proportions.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub majority_fraction: Option<f64>,
    pub generator: RawGenerator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawGenerator {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub center_spread: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub example_noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_spread: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label_noise: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes_total: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes_per_client: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawObjective {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPlan {
    pub algorithm: String,
    pub rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_steps: Option<usize>,
    /// Convenience: converted to steps via ceil(min train size / batch) * epochs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_epochs: Option<usize>,
    pub batch_size: usize,
    /// "reshuffle" (default) or "with_replacement".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch_mode: Option<String>,
    /// "stale" (default) or "exact".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub r_mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_fraction: Option<f64>,
    /// "zeros" or "random"; defaults to zeros except for the mlp objective.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_scale: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_group_losses: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schedule: Option<RawSchedule>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<RawSampling>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSchedule {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSampling {
    pub kind: String,
    pub fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_diagnostics: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dump_data: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_fractions: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algorithms: Option<Vec<String>>,
}

/// Parse failure (malformed file) or the full list of validation problems.
#[derive(Debug)]
pub enum ConfigError {
    Io(std::io::Error),
    Parse(String),
    Invalid(Vec<String>),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(e) => write!(f, "cannot read config: {e}"),
            ConfigError::Parse(e) => write!(f, "cannot parse config: {e}"),
            ConfigError::Invalid(errors) => {
                writeln!(f, "invalid config ({} problem(s)):", errors.len())?;
                for e in errors {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(ConfigError::Io)?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(&raw)
}

struct Problems(Vec<String>);

impl Problems {
    fn push(&mut self, msg: impl Into<String>) {
        self.0.push(msg.into());
    }
}

fn parse_algorithm(name: &str, problems: &mut Problems) -> Algorithm {
    match name {
        "fedavg" => Algorithm::FedAvg,
        "gifair_global" => Algorithm::GifairGlobal,
        "gifair_per" => Algorithm::GifairPer,
        other => {
            problems.push(format!(
                "unknown algorithm '{other}' (expected fedavg, gifair_global, or gifair_per)"
            ));
            Algorithm::FedAvg
        }
    }
}

fn resolve_generator(raw: &RawGenerator, problems: &mut Problems) -> GroupGenerator {
    let used = |field: &str, present: bool, expected: &str, kind: &str, problems: &mut Problems| {
        if present {
            problems.push(format!(
                "generator key '{field}' does not apply to kind '{kind}' (used by {expected})"
            ));
        }
    };
    match raw.kind.as_str() {
        "quadratic_centers" => {
            used("classes", raw.classes.is_some(), "logistic_clusters", &raw.kind, problems);
            used("cluster_spread", raw.cluster_spread.is_some(), "logistic_clusters", &raw.kind, problems);
            used("label_noise", raw.label_noise.is_some(), "logistic_clusters", &raw.kind, problems);
            used("classes_total", raw.classes_total.is_some(), "label_skew", &raw.kind, problems);
            used("classes_per_client", raw.classes_per_client.is_some(), "label_skew", &raw.kind, problems);
            GroupGenerator::QuadraticCenters {
                center_spread: raw.center_spread.unwrap_or(0.3),
                example_noise: raw.example_noise.unwrap_or(0.5),
            }
        }
        "logistic_clusters" => {
            used("center_spread", raw.center_spread.is_some(), "quadratic_centers", &raw.kind, problems);
            used("example_noise", raw.example_noise.is_some(), "quadratic_centers", &raw.kind, problems);
            used("classes_total", raw.classes_total.is_some(), "label_skew", &raw.kind, problems);
            used("classes_per_client", raw.classes_per_client.is_some(), "label_skew", &raw.kind, problems);
            GroupGenerator::LogisticClusters {
                classes: raw.classes.unwrap_or(2),
                cluster_spread: raw.cluster_spread.unwrap_or(1.0),
                label_noise: raw.label_noise.unwrap_or(0.0),
            }
        }
        "label_skew" => {
            used("center_spread", raw.center_spread.is_some(), "quadratic_centers", &raw.kind, problems);
            used("example_noise", raw.example_noise.is_some(), "quadratic_centers", &raw.kind, problems);
            used("classes", raw.classes.is_some(), "logistic_clusters", &raw.kind, problems);
            used("cluster_spread", raw.cluster_spread.is_some(), "logistic_clusters", &raw.kind, problems);
            used("label_noise", raw.label_noise.is_some(), "logistic_clusters", &raw.kind, problems);
            GroupGenerator::LabelSkew {
                classes_total: raw.classes_total.unwrap_or(10),
                classes_per_client: raw.classes_per_client.unwrap_or(5),
            }
        }
        other => {
            problems.push(format!(
                "unknown generator kind '{other}' (expected quadratic_centers, logistic_clusters, or label_skew)"
            ));
            GroupGenerator::QuadraticCenters {
                center_spread: 0.0,
                example_noise: 0.0,
            }
        }
    }
}

fn resolve_objective(raw: &RawObjective, problems: &mut Problems) -> ObjectiveKind {
    match raw.kind.as_str() {
        "quadratic" => {
            if raw.classes.is_some() || raw.l2.is_some() || raw.hidden.is_some() {
                problems.push("quadratic objective takes no extra keys".to_string());
            }
            ObjectiveKind::Quadratic
        }
        "logistic" => {
            if raw.hidden.is_some() {
                problems.push("'hidden' applies to the mlp objective only".to_string());
            }
            ObjectiveKind::Logistic {
                num_classes: raw.classes.unwrap_or(2),
                l2: raw.l2.unwrap_or(0.0),
            }
        }
        "mlp" => ObjectiveKind::Mlp {
            hidden: raw.hidden.unwrap_or(8),
            num_classes: raw.classes.unwrap_or(2),
            l2: raw.l2.unwrap_or(0.0),
        },
        other => {
            problems.push(format!(
                "unknown objective kind '{other}' (expected quadratic, logistic, or mlp)"
            ));
            ObjectiveKind::Quadratic
        }
    }
}

fn resolve_schedule(raw: Option<&RawSchedule>, problems: &mut Problems) -> LrSchedule {
    let Some(raw) = raw else {
        return LrSchedule::ExpDecayPerRound {
            initial: 0.1,
            decay: 0.99,
        };
    };
    match raw.kind.as_str() {
        "inverse_time" => LrSchedule::InverseTime {
            beta: raw.beta.unwrap_or(1.0),
            gamma: raw.gamma.unwrap_or(1.0),
        },
        "exp_decay" => LrSchedule::ExpDecayPerRound {
            initial: raw.initial.unwrap_or(0.1),
            decay: raw.decay.unwrap_or(0.99),
        },
        "inverse_sqrt" => LrSchedule::InverseSqrt {
            c0: raw.c0.unwrap_or(0.1),
        },
        other => {
            problems.push(format!(
                "unknown schedule kind '{other}' (expected inverse_time, exp_decay, or inverse_sqrt)"
            ));
            LrSchedule::InverseSqrt { c0: 0.1 }
        }
    }
}

/// Smallest training-split size implied by the spec; split sizes are a
/// deterministic function of the per-client example counts, so this (and the
/// lambda bound) is seed-independent.
fn min_train_size(pop: &PopulationSpec) -> usize {
    pop.examples_per_client
        .iter()
        .map(|&n| {
            let n_val = (pop.split_fractions.1 * n as f64).floor() as usize;
            let n_test = (pop.split_fractions.2 * n as f64).floor() as usize;
            n - n_val - n_test
        })
        .min()
        .unwrap_or(0)
}

/// Lambda bound for the population; generated once at a fixed probe seed
/// (weights depend only on deterministic split sizes, not the seed).
pub fn population_lambda_max(pop: &PopulationSpec) -> Result<f64, gifair_core::Error> {
    let clients = generate_population(pop, 0)?;
    let groups = GroupStructure::from_clients(&clients)?;
    let p: Vec<f64> = clients.iter().map(|c| c.p).collect();
    Ok(lambda_max(&p, &groups))
}

fn resolve(raw: &RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut problems = Problems(Vec::new());

    // Population.
    let mut examples = raw.population.examples_per_client.clone();
    if examples.len() == 1 && raw.population.groups.len() > 1 {
        examples = vec![examples[0]; raw.population.groups.len()];
    }
    let split = raw.population.split.unwrap_or([0.7, 0.1, 0.2]);
    let generator = resolve_generator(&raw.population.generator, &mut problems);
    let mut population = PopulationSpec {
        group_sizes: raw.population.groups.clone(),
        examples_per_client: examples,
        feature_dim: raw.population.feature_dim,
        heterogeneity: raw.population.heterogeneity.unwrap_or(1.0),
        generator,
        split_fractions: (split[0], split[1], split[2]),
    };
    if let Some(fraction) = raw.population.majority_fraction {
        match imbalance_population(&population, fraction) {
            Ok(p) => population = p,
            Err(e) => problems.push(e.to_string()),
        }
    }
    if let Err(e) = population.validate() {
        problems.push(e.to_string());
    }

    // Objective, and its compatibility with the generated labels.
    let objective = resolve_objective(&raw.objective, &mut problems);
    let label_classes = population.num_classes();
    match &objective {
        ObjectiveKind::Quadratic => {}
        ObjectiveKind::Logistic { num_classes, .. } | ObjectiveKind::Mlp { num_classes, .. } => {
            if *num_classes < label_classes {
                problems.push(format!(
                    "objective has {num_classes} classes but the generator emits labels in [0, {label_classes})"
                ));
            }
            if matches!(
                population.generator,
                GroupGenerator::QuadraticCenters { .. }
            ) {
                problems.push(
                    "classifier objectives need labeled data; use logistic_clusters or label_skew"
                        .to_string(),
                );
            }
        }
    }

    // Plan.
    let algorithm = parse_algorithm(&raw.plan.algorithm, &mut problems);
    if raw.plan.rounds == 0 {
        problems.push("plan.rounds must be at least 1".to_string());
    }
    if raw.plan.batch_size == 0 {
        problems.push("plan.batch_size must be at least 1".to_string());
    }
    let batch_mode = match raw.plan.batch_mode.as_deref() {
        None | Some("reshuffle") => BatchSampling::WithoutReplacementReshuffle,
        Some("with_replacement") => BatchSampling::WithReplacement,
        Some(other) => {
            problems.push(format!(
                "unknown batch_mode '{other}' (expected reshuffle or with_replacement)"
            ));
            BatchSampling::WithoutReplacementReshuffle
        }
    };
    let min_train = min_train_size(&population);
    if batch_mode == BatchSampling::WithoutReplacementReshuffle
        && raw.plan.batch_size > min_train
        && min_train > 0
    {
        problems.push(format!(
            "plan.batch_size {} exceeds the smallest training split ({min_train})",
            raw.plan.batch_size
        ));
    }
    let local_steps = match (raw.plan.local_steps, raw.plan.local_epochs) {
        (Some(_), Some(_)) => {
            problems.push("set either plan.local_steps or plan.local_epochs, not both".to_string());
            1
        }
        (Some(s), None) => {
            if s == 0 {
                problems.push("plan.local_steps must be at least 1".to_string());
            }
            s.max(1)
        }
        (None, Some(e)) => {
            if e == 0 {
                problems.push("plan.local_epochs must be at least 1".to_string());
            }
            let steps_per_epoch = min_train.div_ceil(raw.plan.batch_size.max(1)).max(1);
            steps_per_epoch * e.max(1)
        }
        (None, None) => {
            problems.push("plan needs local_steps (or local_epochs)".to_string());
            1
        }
    };
    let r_mode = match raw.plan.r_mode.as_deref() {
        None | Some("stale") => RMode::Stale,
        Some("exact") => RMode::Exact,
        Some(other) => {
            problems.push(format!("unknown r_mode '{other}' (expected stale or exact)"));
            RMode::Stale
        }
    };
    let schedule = resolve_schedule(raw.plan.schedule.as_ref(), &mut problems);
    if let Err(e) = schedule.validate() {
        problems.push(e.to_string());
    }
    let sampling = match &raw.plan.sampling {
        None => SamplingScheme {
            kind: SamplingKind::ByWeight,
            fraction: 1.0,
        },
        Some(raw_s) => {
            let kind = match raw_s.kind.as_str() {
                "by_weight" => SamplingKind::ByWeight,
                "uniform" => SamplingKind::Uniform,
                other => {
                    problems.push(format!(
                        "unknown sampling kind '{other}' (expected by_weight or uniform)"
                    ));
                    SamplingKind::ByWeight
                }
            };
            SamplingScheme {
                kind,
                fraction: raw_s.fraction,
            }
        }
    };
    if let Err(e) = sampling.validate() {
        problems.push(e.to_string());
    }

    // Lambda specification and bound.
    let lambda_bound = population_lambda_max(&population).ok();
    let lambda = match (raw.plan.lambda, raw.plan.lambda_fraction) {
        (Some(_), Some(_)) => {
            problems.push("set either plan.lambda or plan.lambda_fraction, not both".to_string());
            LambdaSpec::Absolute(0.0)
        }
        (Some(v), None) => {
            if v < 0.0 {
                problems.push("plan.lambda must be non-negative".to_string());
            }
            if let Some(bound) = lambda_bound {
                if v >= bound {
                    problems.push(format!(
                        "plan.lambda {v} is not below lambda_max {bound} for this population"
                    ));
                }
            }
            LambdaSpec::Absolute(v)
        }
        (None, Some(f)) => {
            if !(0.0..1.0).contains(&f) {
                problems.push(format!(
                    "plan.lambda_fraction must be in [0, 1), got {f}"
                ));
            }
            LambdaSpec::FractionOfMax(f)
        }
        (None, None) => LambdaSpec::Absolute(0.0),
    };
    if algorithm == Algorithm::FedAvg {
        let zero = match lambda {
            LambdaSpec::Absolute(v) => v == 0.0,
            LambdaSpec::FractionOfMax(f) => f == 0.0,
        };
        if !zero && raw.sweep.is_none() {
            problems.push("fedavg takes no fairness penalty; set lambda = 0".to_string());
        }
    }

    let init = match (raw.plan.init.as_deref(), raw.plan.init_scale) {
        (None, scale) => match objective {
            ObjectiveKind::Mlp { .. } => InitSpec::RandomNormal {
                scale: scale.unwrap_or(0.5),
            },
            _ => InitSpec::Zeros,
        },
        (Some("zeros"), None) => InitSpec::Zeros,
        (Some("zeros"), Some(_)) => {
            problems.push("init_scale applies to init = \"random\" only".to_string());
            InitSpec::Zeros
        }
        (Some("random"), scale) => InitSpec::RandomNormal {
            scale: scale.unwrap_or(0.5),
        },
        (Some(other), _) => {
            problems.push(format!("unknown init '{other}' (expected zeros or random)"));
            InitSpec::Zeros
        }
    };

    if let Some(init_losses) = &raw.plan.initial_group_losses {
        if init_losses.len() != population.group_sizes.len() {
            problems.push(format!(
                "initial_group_losses has {} entries for {} groups",
                init_losses.len(),
                population.group_sizes.len()
            ));
        }
    }

    // Run section.
    if raw.run.seeds.is_empty() {
        problems.push("run.seeds must list at least one seed".to_string());
    }

    // Sweep section.
    let sweep = match &raw.sweep {
        None => None,
        Some(raw_sweep) => {
            let lambdas = match (&raw_sweep.lambdas, &raw_sweep.lambda_fractions) {
                (Some(_), Some(_)) => {
                    problems.push(
                        "set either sweep.lambdas or sweep.lambda_fractions, not both".to_string(),
                    );
                    vec![]
                }
                (Some(vs), None) => {
                    for &v in vs {
                        if let Some(bound) = lambda_bound {
                            if v >= bound || v < 0.0 {
                                problems.push(format!(
                                    "sweep lambda {v} is outside [0, lambda_max = {bound})"
                                ));
                            }
                        }
                    }
                    vs.iter().map(|&v| LambdaSpec::Absolute(v)).collect()
                }
                (None, Some(fs)) => {
                    for &f in fs {
                        if !(0.0..1.0).contains(&f) {
                            problems.push(format!(
                                "sweep lambda fraction {f} must be in [0, 1)"
                            ));
                        }
                    }
                    fs.iter().map(|&f| LambdaSpec::FractionOfMax(f)).collect()
                }
                (None, None) => {
                    problems.push(
                        "sweep needs lambdas or lambda_fractions".to_string(),
                    );
                    vec![]
                }
            };
            let algorithms = match &raw_sweep.algorithms {
                None => vec![algorithm],
                Some(names) => names
                    .iter()
                    .map(|n| parse_algorithm(n, &mut problems))
                    .collect(),
            };
            Some(SweepSpec { lambdas, algorithms })
        }
    };

    if !problems.0.is_empty() {
        return Err(ConfigError::Invalid(problems.0));
    }

    Ok(ExperimentConfig {
        population,
        objective,
        plan: PlanTemplate {
            algorithm,
            rounds: raw.plan.rounds,
            local_steps,
            batch: BatchSpec {
                batch_size: raw.plan.batch_size,
                sampling: batch_mode,
            },
            schedule,
            sampling,
            r_mode,
            lambda,
            init,
            initial_group_losses: raw.plan.initial_group_losses.clone(),
        },
        seeds: raw.run.seeds.clone(),
        output: PathBuf::from(raw.run.output.clone().unwrap_or_else(|| "out".to_string())),
        sweep,
        gamma_diagnostics: raw.run.gamma_diagnostics.unwrap_or(true),
        dump_data: raw.run.dump_data.unwrap_or(false),
    })
}

/// Renders a fully pinned single-run config (one seed, one algorithm, one
/// absolute lambda) that re-parses to the same run.
pub fn resolved_raw(
    cfg: &ExperimentConfig,
    algorithm: Algorithm,
    lambda: f64,
    seed: u64,
    output: &Path,
) -> RawConfig {
    let generator = match &cfg.population.generator {
        GroupGenerator::QuadraticCenters {
            center_spread,
            example_noise,
        } => RawGenerator {
            kind: "quadratic_centers".into(),
            center_spread: Some(*center_spread),
            example_noise: Some(*example_noise),
            classes: None,
            cluster_spread: None,
            label_noise: None,
            classes_total: None,
            classes_per_client: None,
        },
        GroupGenerator::LogisticClusters {
            classes,
            cluster_spread,
            label_noise,
        } => RawGenerator {
            kind: "logistic_clusters".into(),
            center_spread: None,
            example_noise: None,
            classes: Some(*classes),
            cluster_spread: Some(*cluster_spread),
            label_noise: Some(*label_noise),
            classes_total: None,
            classes_per_client: None,
        },
        GroupGenerator::LabelSkew {
            classes_total,
            classes_per_client,
        } => RawGenerator {
            kind: "label_skew".into(),
            center_spread: None,
            example_noise: None,
            classes: None,
            cluster_spread: None,
            label_noise: None,
            classes_total: Some(*classes_total),
            classes_per_client: Some(*classes_per_client),
        },
    };
    let objective = match &cfg.objective {
        ObjectiveKind::Quadratic => RawObjective {
            kind: "quadratic".into(),
            classes: None,
            l2: None,
            hidden: None,
        },
        ObjectiveKind::Logistic { num_classes, l2 } => RawObjective {
            kind: "logistic".into(),
            classes: Some(*num_classes),
            l2: Some(*l2),
            hidden: None,
        },
        ObjectiveKind::Mlp {
            hidden,
            num_classes,
            l2,
        } => RawObjective {
            kind: "mlp".into(),
            classes: Some(*num_classes),
            l2: Some(*l2),
            hidden: Some(*hidden),
        },
    };
    let schedule = match cfg.plan.schedule {
        LrSchedule::InverseTime { beta, gamma } => RawSchedule {
            kind: "inverse_time".into(),
            beta: Some(beta),
            gamma: Some(gamma),
            initial: None,
            decay: None,
            c0: None,
        },
        LrSchedule::ExpDecayPerRound { initial, decay } => RawSchedule {
            kind: "exp_decay".into(),
            beta: None,
            gamma: None,
            initial: Some(initial),
            decay: Some(decay),
            c0: None,
        },
        LrSchedule::InverseSqrt { c0 } => RawSchedule {
            kind: "inverse_sqrt".into(),
            beta: None,
            gamma: None,
            initial: None,
            decay: None,
            c0: Some(c0),
        },
    };
    let (init, init_scale) = match cfg.plan.init {
        InitSpec::Zeros => (Some("zeros".to_string()), None),
        InitSpec::RandomNormal { scale } => (Some("random".to_string()), Some(scale)),
    };
    RawConfig {
        population: RawPopulation {
            groups: cfg.population.group_sizes.clone(),
            examples_per_client: cfg.population.examples_per_client.clone(),
            feature_dim: cfg.population.feature_dim,
            heterogeneity: Some(cfg.population.heterogeneity),
            split: Some([
                cfg.population.split_fractions.0,
                cfg.population.split_fractions.1,
                cfg.population.split_fractions.2,
            ]),
            majority_fraction: None,
            generator,
        },
        objective,
        plan: RawPlan {
            algorithm: algorithm_name(algorithm).into(),
            rounds: cfg.plan.rounds,
            local_steps: Some(cfg.plan.local_steps),
            local_epochs: None,
            batch_size: cfg.plan.batch.batch_size,
            batch_mode: Some(
                match cfg.plan.batch.sampling {
                    BatchSampling::WithReplacement => "with_replacement",
                    BatchSampling::WithoutReplacementReshuffle => "reshuffle",
                }
                .into(),
            ),
            r_mode: Some(
                match cfg.plan.r_mode {
                    RMode::Stale => "stale",
                    RMode::Exact => "exact",
                }
                .into(),
            ),
            lambda: Some(lambda),
            lambda_fraction: None,
            init,
            init_scale,
            initial_group_losses: cfg.plan.initial_group_losses.clone(),
            schedule: Some(schedule),
            sampling: Some(RawSampling {
                kind: match cfg.plan.sampling.kind {
                    SamplingKind::ByWeight => "by_weight".into(),
                    SamplingKind::Uniform => "uniform".into(),
                },
                fraction: cfg.plan.sampling.fraction,
            }),
        },
        run: RawRun {
            seeds: vec![seed],
            output: Some(output.display().to_string()),
            gamma_diagnostics: Some(cfg.gamma_diagnostics),
            dump_data: Some(cfg.dump_data),
        },
        sweep: None,
    }
}

pub fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::FedAvg => "fedavg",
        Algorithm::GifairGlobal => "gifair_global",
        Algorithm::GifairPer => "gifair_per",
    }
}

//! Sweep expansion and run execution. Each (algorithm, lambda, seed) cell
//! writes an isolated directory, so concurrent execution cannot interleave
//! files; results are bit-stable for any `--jobs` setting.

use std::path::{Path, PathBuf};

use anyhow::Context;

use gifair_core::algorithms::{run, Algorithm};
use gifair_core::client::GroupStructure;
use gifair_core::datagen::generate_population;
use gifair_core::fairness::lambda_max;
use gifair_core::metrics::{fairness_report, gamma_k, ModelView};
use gifair_core::param::ParamVector;
use gifair_core::rng::normal_init;
use gifair_core::Split;

use crate::config::{algorithm_name, resolved_raw, ExperimentConfig, InitSpec, LambdaSpec};
use crate::output;

#[derive(Debug, Clone, Copy)]
struct SweepCell {
    algorithm: Algorithm,
    lambda: LambdaSpec,
    lambda_idx: usize,
}

#[derive(Debug, Clone)]
pub struct JobOutcome {
    pub dir: PathBuf,
    pub diverged: bool,
}

fn sweep_cells(cfg: &ExperimentConfig) -> Vec<SweepCell> {
    match &cfg.sweep {
        None => vec![SweepCell {
            algorithm: cfg.plan.algorithm,
            lambda: cfg.plan.lambda,
            lambda_idx: 0,
        }],
        Some(sweep) => {
            let mut cells = Vec::new();
            for &algorithm in &sweep.algorithms {
                if algorithm == Algorithm::FedAvg {
                    // The baseline takes no penalty: one cell per seed.
                    cells.push(SweepCell {
                        algorithm,
                        lambda: LambdaSpec::Absolute(0.0),
                        lambda_idx: 0,
                    });
                } else {
                    for (i, &lambda) in sweep.lambdas.iter().enumerate() {
                        cells.push(SweepCell {
                            algorithm,
                            lambda,
                            lambda_idx: i,
                        });
                    }
                }
            }
            cells
        }
    }
}

fn run_one(cfg: &ExperimentConfig, cell: SweepCell, seed: u64, dir: &Path) -> anyhow::Result<JobOutcome> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;

    let clients = generate_population(&cfg.population, seed)?;
    let groups = GroupStructure::from_clients(&clients)?;
    let p: Vec<f64> = clients.iter().map(|c| c.p).collect();
    let bound = lambda_max(&p, &groups);
    let lambda = cell.lambda.resolve(bound);
    let lambda_frac = if bound.is_finite() && bound > 0.0 {
        Some(lambda / bound)
    } else {
        None
    };

    let mut plan = cfg.plan.to_plan(lambda);
    plan.algorithm = cell.algorithm;

    let feature_dim = cfg.population.feature_dim;
    let dim = cfg.objective.param_dim(feature_dim);
    let theta0 = match cfg.plan.init {
        InitSpec::Zeros => ParamVector::zeros(dim),
        InitSpec::RandomNormal { scale } => ParamVector::from_vec(normal_init(seed, dim, scale)),
    };

    let out = run(&plan, &clients, &cfg.objective, &theta0, seed)?;

    let view = match &out.client_thetas {
        Some(thetas) => ModelView::PerClient(thetas),
        None => ModelView::Global(&out.final_theta),
    };
    let report = fairness_report(&cfg.objective, &out.clients, view, Split::Test)?;
    let gamma = if cfg.gamma_diagnostics {
        Some(gamma_k(&cfg.objective, &clients, lambda)?)
    } else {
        None
    };

    output::write_rounds_jsonl(&dir.join("rounds.jsonl"), &out.rounds)?;
    output::write_summary_csv(
        &dir.join("summary.csv"),
        &cfg.objective,
        &out.clients,
        view,
        &report,
    )?;
    output::write_fairness_csv(
        &dir.join("fairness.csv"),
        lambda,
        lambda_frac,
        &report,
        gamma.as_ref(),
    )?;
    let raw = resolved_raw(cfg, cell.algorithm, lambda, seed, dir);
    output::write_resolved_config(&dir.join("config.resolved.toml"), &raw)?;
    output::write_manifest(
        &dir.join("manifest.json"),
        &output::Manifest {
            rounds_schema_version: output::ROUNDS_SCHEMA_VERSION,
            csv_schema_version: output::CSV_SCHEMA_VERSION,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            algorithm: algorithm_name(cell.algorithm).to_string(),
            seed,
            lambda,
            lambda_frac,
            lambda_max: bound.is_finite().then_some(bound),
            performance_measure: report.measure,
            diverged: out.diverged,
            rounds_completed: out.rounds.len(),
            gamma,
            config: raw,
        },
    )?;
    if cfg.dump_data {
        output::dump_client_data(&dir.join("client_data"), &clients)?;
    }

    Ok(JobOutcome {
        dir: dir.to_path_buf(),
        diverged: out.diverged,
    })
}

/// Expands the sweep and executes every (cell, seed) run. Diverged runs are
/// reported in their manifests and do not fail the invocation.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_override: Option<&Path>,
    seed_override: Option<u64>,
    jobs: Option<usize>,
) -> anyhow::Result<Vec<JobOutcome>> {
    let root = out_override.unwrap_or(&cfg.output).to_path_buf();
    std::fs::create_dir_all(&root).with_context(|| format!("creating {}", root.display()))?;

    let seeds: Vec<u64> = match seed_override {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    let cells = sweep_cells(cfg);
    let tasks: Vec<(SweepCell, u64, PathBuf)> = cells
        .iter()
        .flat_map(|&cell| {
            let root = root.clone();
            seeds.iter().map(move |&seed| {
                let name = format!(
                    "{}-l{:02}-s{}",
                    algorithm_name(cell.algorithm),
                    cell.lambda_idx,
                    seed
                );
                (cell, seed, root.join(name))
            })
        })
        .collect();

    let results = execute(cfg, &tasks, jobs)?;
    Ok(results)
}

#[cfg(feature = "parallel")]
fn execute(
    cfg: &ExperimentConfig,
    tasks: &[(SweepCell, u64, PathBuf)],
    jobs: Option<usize>,
) -> anyhow::Result<Vec<JobOutcome>> {
    use rayon::prelude::*;
    let run_all = || {
        tasks
            .par_iter()
            .map(|(cell, seed, dir)| run_one(cfg, *cell, *seed, dir))
            .collect::<anyhow::Result<Vec<_>>>()
    };
    match jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .context("building worker pool")?
            .install(run_all),
        None => run_all(),
    }
}

#[cfg(not(feature = "parallel"))]
fn execute(
    cfg: &ExperimentConfig,
    tasks: &[(SweepCell, u64, PathBuf)],
    _jobs: Option<usize>,
) -> anyhow::Result<Vec<JobOutcome>> {
    tasks
        .iter()
        .map(|(cell, seed, dir)| run_one(cfg, *cell, *seed, dir))
        .collect()
}

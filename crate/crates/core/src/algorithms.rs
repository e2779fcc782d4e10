//! The training loops: plain federated averaging and the two
//! fairness-weighted variants (shared global model, and personalized
//! per-client models), with client sampling, weighted local SGD, parameter
//! aggregation, and the between-round refresh of the group-loss ledger.
//!
//! All three algorithms run through one loop. Federated averaging is the
//! weighted loop with every weight pinned at 1 (lambda = 0), which is what
//! makes the lambda = 0 reduction an exact trajectory identity rather than an
//! approximation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::client::{ClientState, GroupLedger, GroupStructure};
use crate::error::{Error, Result};
use crate::fairness::{broadcast_scale, client_weight, compute_r, group_r, FairnessParams};
use crate::objectives::{grad, grad_on_batch, loss, BatchIter, BatchSpec, ObjectiveKind};
use crate::par;
use crate::param::ParamVector;
use crate::rng::{digest_f64, stream, LOCAL_UPDATE, SAMPLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    FedAvg,
    GifairGlobal,
    GifairPer,
}

/// Whether group losses feeding the ordering coefficients come from the
/// just-finished local parameters (`Stale`, the cheap default) or from a
/// fresh evaluation of every client at the aggregated parameter (`Exact`,
/// which models the extra communication exchange).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RMode {
    Stale,
    Exact,
}

/// Learning-rate schedules over the global step counter `t` (and the round
/// index for per-round decay).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LrSchedule {
    /// `beta / (t + gamma)`
    InverseTime { beta: f64, gamma: f64 },
    /// `initial * decay^round`
    ExpDecayPerRound { initial: f64, decay: f64 },
    /// `c0 / sqrt(t + 1)`
    InverseSqrt { c0: f64 },
}

impl LrSchedule {
    pub fn lr(&self, t: usize, round: usize) -> f64 {
        match *self {
            LrSchedule::InverseTime { beta, gamma } => beta / (t as f64 + gamma),
            LrSchedule::ExpDecayPerRound { initial, decay } => initial * decay.powi(round as i32),
            LrSchedule::InverseSqrt { c0 } => c0 / (t as f64 + 1.0).sqrt(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LrSchedule::InverseTime { beta, gamma } => beta > 0.0 && gamma > 0.0,
            LrSchedule::ExpDecayPerRound { initial, decay } => {
                initial > 0.0 && decay > 0.0 && decay <= 1.0
            }
            LrSchedule::InverseSqrt { c0 } => c0 > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!(
                "learning-rate schedule must be positive and non-increasing: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    /// Sample clients by their weight `p_k`; aggregate with an unweighted mean.
    ByWeight,
    /// Sample clients uniformly; aggregate `(K/|S|) * sum p_k theta_k`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingScheme {
    pub kind: SamplingKind,
    /// Participation fraction; the cohort has `max(1, round(fraction * K))`
    /// distinct clients.
    pub fraction: f64,
}

impl SamplingScheme {
    pub fn cohort_size(&self, num_clients: usize) -> usize {
        ((self.fraction * num_clients as f64).round() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fraction > 0.0 && self.fraction <= 1.0 {
            Ok(())
        } else {
            Err(Error::config(format!(
                "sampling fraction must be in (0, 1], got {}",
                self.fraction
            )))
        }
    }
}

/// Full description of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub algorithm: Algorithm,
    pub rounds: usize,
    /// Local SGD steps per selected client per round.
    pub local_steps: usize,
    pub batch: BatchSpec,
    pub schedule: LrSchedule,
    pub sampling: SamplingScheme,
    pub lambda: f64,
    pub r_mode: RMode,
    /// Ledger entering round 0. Defaults to all-zero, which makes round 0 a
    /// plain unweighted round.
    pub initial_group_losses: Option<Vec<f64>>,
}

/// What the server sends a selected client: the current parameter and the
/// single pre-multiplied fairness scalar. Nothing else about the federation
/// (weights, group sizes, rank) is derivable from the payload.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Broadcast {
    pub theta: ParamVector,
    pub scale: f64,
}

/// Per-round log entry. `group_losses`, `r`, and `weights` describe the
/// ledger the round *started* from, i.e. exactly the quantities that shaped
/// its local updates; the evaluation fields describe the freshly aggregated
/// parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub selected: Vec<usize>,
    pub lr: f64,
    pub theta: ParamVector,
    pub group_losses: Vec<f64>,
    pub r: Vec<i64>,
    pub weights: Vec<f64>,
    pub objective: Option<f64>,
    pub loss_mean: Option<f64>,
    pub loss_var: Option<f64>,
    pub loss_discrepancy: Option<f64>,
    pub grad_norm_sq: Option<f64>,
    /// Fingerprints of each client's personalized parameter after the round
    /// (populated by the personalized algorithm only).
    pub client_param_digests: Vec<u64>,
    pub diverged: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Aggregated parameter after the final round.
    pub final_theta: ParamVector,
    /// Per-client personalized parameters (personalized algorithm only).
    pub client_thetas: Option<Vec<ParamVector>>,
    /// Evolved client snapshots: `theta` holds the model each client ends up
    /// using (the global parameter for global algorithms).
    pub clients: Vec<ClientState>,
    pub rounds: Vec<RoundRecord>,
    pub diverged: bool,
}

/// Draws the round's cohort. `ByWeight` uses sequential weighted draws
/// without replacement (renormalizing over the remaining clients); `Uniform`
/// draws uniformly without replacement. Returned ids are sorted so later
/// floating-point accumulation order never depends on draw order.
pub fn sample_clients(
    scheme: &SamplingScheme,
    p: &[f64],
    rng: &mut impl Rng,
) -> Vec<usize> {
    let k = p.len();
    let m = scheme.cohort_size(k).min(k);
    if m == k {
        return (0..k).collect();
    }
    let mut selected = match scheme.kind {
        SamplingKind::ByWeight => {
            let mut avail: Vec<usize> = (0..k).collect();
            let mut weights: Vec<f64> = p.to_vec();
            let mut out = Vec::with_capacity(m);
            for _ in 0..m {
                let total: f64 = weights.iter().sum();
                let mut u = rng.gen::<f64>() * total;
                let mut pick = weights.len() - 1;
                for (i, &w) in weights.iter().enumerate() {
                    u -= w;
                    if u <= 0.0 {
                        pick = i;
                        break;
                    }
                }
                out.push(avail.remove(pick));
                weights.remove(pick);
            }
            out
        }
        SamplingKind::Uniform => {
            use rand::seq::SliceRandom;
            let mut ids: Vec<usize> = (0..k).collect();
            ids.partial_shuffle(rng, m);
            ids.truncate(m);
            ids
        }
    };
    selected.sort_unstable();
    selected
}

/// Combines the selected clients' parameters per the sampling scheme's paired
/// aggregation rule.
pub fn aggregate(
    entries: &[(f64, ParamVector)],
    scheme: &SamplingScheme,
    total_clients: usize,
) -> Result<ParamVector> {
    if entries.is_empty() {
        return Err(Error::config("aggregation over an empty selection"));
    }
    match scheme.kind {
        SamplingKind::ByWeight => ParamVector::mean(entries.iter().map(|(_, t)| t)),
        SamplingKind::Uniform => {
            let mut acc = ParamVector::zeros(entries[0].1.dim());
            for (pk, theta) in entries {
                theta.check_dim(acc.dim(), "aggregate")?;
                acc.add_scaled(theta, *pk);
            }
            acc.scale(total_clients as f64 / entries.len() as f64);
            Ok(acc)
        }
    }
}

/// Runs `steps` SGD steps with a round-constant weight multiplying every
/// stochastic gradient. The schedule is indexed by the global step counter
/// `t = round * steps + s`.
#[allow(clippy::too_many_arguments)]
pub fn local_update(
    mut theta: ParamVector,
    weight: f64,
    round: usize,
    steps: usize,
    schedule: &LrSchedule,
    kind: &ObjectiveKind,
    data: &[crate::data::LabeledExample],
    batch: BatchSpec,
    rng: &mut impl Rng,
) -> Result<ParamVector> {
    if weight <= 0.0 {
        return Err(Error::config(format!(
            "local update requires a positive weight, got {weight}"
        )));
    }
    let mut batches = BatchIter::new(batch, data.len())?;
    for s in 0..steps {
        let t = round * steps + s;
        let eta = schedule.lr(t, round);
        let indices = batches.next_batch(rng);
        let g = grad_on_batch(kind, &theta, data, &indices)?;
        theta.add_scaled(&g, -eta * weight);
        if !theta.is_finite() {
            return Err(Error::NonFinite("local update"));
        }
    }
    Ok(theta)
}

/// Rebuilds the group-loss ledger after a round. `Stale` averages the
/// clients' most recent local-loss evaluations; `Exact` re-evaluates every
/// client at the aggregated parameter.
pub fn refresh_r(
    kind: &ObjectiveKind,
    clients: &[ClientState],
    r_mode: RMode,
    aggregated: &ParamVector,
) -> Result<GroupLedger> {
    let groups = GroupStructure::from_clients(clients)?;
    let losses: Vec<f64> = match r_mode {
        RMode::Stale => clients.iter().map(|c| c.last_loss).collect(),
        RMode::Exact => clients
            .iter()
            .map(|c| loss(kind, aggregated, &c.data.train))
            .collect::<Result<_>>()?,
    };
    let group_losses = groups.group_means(&losses);
    let r = compute_r(&group_losses, &groups);
    Ok(GroupLedger {
        group_sizes: groups.sizes.clone(),
        group_losses,
        r,
    })
}

/// Validates a plan against a concrete client population.
pub fn validate_plan(plan: &TrainPlan, clients: &[ClientState]) -> Result<(GroupStructure, Vec<f64>)> {
    if plan.rounds == 0 {
        return Err(Error::config("rounds must be at least 1"));
    }
    if plan.local_steps == 0 {
        return Err(Error::config("local_steps must be at least 1"));
    }
    plan.schedule.validate()?;
    plan.sampling.validate()?;
    let min_train = clients
        .iter()
        .map(|c| c.data.train.len())
        .min()
        .ok_or_else(|| Error::config("no clients"))?;
    plan.batch.validate(min_train)?;
    let groups = GroupStructure::from_clients(clients)?;
    let p: Vec<f64> = clients.iter().map(|c| c.p).collect();
    let psum: f64 = p.iter().sum();
    if (psum - 1.0).abs() > 1e-12 {
        return Err(Error::config(format!(
            "client weights must sum to 1, got {psum}"
        )));
    }
    if plan.algorithm == Algorithm::FedAvg && plan.lambda != 0.0 {
        return Err(Error::config(
            "federated averaging does not take a fairness penalty; set lambda = 0",
        ));
    }
    let fairness = FairnessParams {
        lambda: plan.lambda,
        groups: groups.clone(),
    };
    fairness.validate(&p)?;
    if let Some(init) = &plan.initial_group_losses {
        if init.len() != groups.num_groups() {
            return Err(Error::config(format!(
                "initial_group_losses has {} entries for {} groups",
                init.len(),
                groups.num_groups()
            )));
        }
    }
    Ok((groups, p))
}

/// Runs a plan to completion. Deterministic in `(plan, clients, theta0, seed)`.
pub fn run(
    plan: &TrainPlan,
    clients: &[ClientState],
    kind: &ObjectiveKind,
    theta0: &ParamVector,
    seed: u64,
) -> Result<RunOutput> {
    let (groups, p) = validate_plan(plan, clients)?;
    let k = clients.len();
    let personalized = plan.algorithm == Algorithm::GifairPer;

    let mut state: Vec<ClientState> = clients.to_vec();
    for c in &mut state {
        c.theta = Some(theta0.clone());
        c.last_loss = loss(kind, theta0, &c.data.train)?;
    }

    let mut ledger_losses = plan
        .initial_group_losses
        .clone()
        .unwrap_or_else(|| vec![0.0; groups.num_groups()]);
    let mut global = theta0.clone();
    let mut records: Vec<RoundRecord> = Vec::with_capacity(plan.rounds);

    for round in 0..plan.rounds {
        let r_by_group = group_r(&ledger_losses);
        let r: Vec<i64> = groups.group_of.iter().map(|&g| r_by_group[g]).collect();
        let weights: Vec<f64> = (0..k)
            .map(|i| client_weight(plan.lambda, p[i], groups.sizes[groups.group_of[i]], r[i]))
            .collect();
        let lr = plan.schedule.lr(round * plan.local_steps, round);

        let selected = sample_clients(&plan.sampling, &p, &mut stream(seed, &[SAMPLE, round as u64]));

        let work: Vec<(usize, Broadcast)> = selected
            .iter()
            .map(|&i| {
                let scale =
                    broadcast_scale(plan.lambda, p[i], groups.sizes[groups.group_of[i]], r[i]);
                (
                    i,
                    Broadcast {
                        theta: global.clone(),
                        scale,
                    },
                )
            })
            .collect();

        let updates: Vec<Result<ParamVector>> = par::map_collect(&work, |(i, bcast)| {
            let mut rng = stream(seed, &[LOCAL_UPDATE, round as u64, *i as u64]);
            local_update(
                bcast.theta.clone(),
                1.0 + bcast.scale,
                round,
                plan.local_steps,
                &plan.schedule,
                kind,
                &state[*i].data.train,
                plan.batch,
                &mut rng,
            )
        });

        let mut locals: Vec<(usize, ParamVector)> = Vec::with_capacity(selected.len());
        let mut blew_up = false;
        for ((i, _), update) in work.iter().zip(updates) {
            match update {
                Ok(theta) => locals.push((*i, theta)),
                Err(Error::NonFinite(_)) => blew_up = true,
                Err(e) => return Err(e),
            }
        }

        let aggregated = if blew_up {
            None
        } else {
            let entries: Vec<(f64, ParamVector)> =
                locals.iter().map(|(i, t)| (p[*i], t.clone())).collect();
            let agg = aggregate(&entries, &plan.sampling, k)?;
            if agg.is_finite() {
                Some(agg)
            } else {
                None
            }
        };

        let Some(new_global) = aggregated else {
            records.push(RoundRecord {
                round,
                selected,
                lr,
                theta: global.clone(),
                group_losses: ledger_losses.clone(),
                r,
                weights,
                objective: None,
                loss_mean: None,
                loss_var: None,
                loss_discrepancy: None,
                grad_norm_sq: None,
                client_param_digests: Vec::new(),
                diverged: true,
            });
            let client_thetas = personalized
                .then(|| state.iter().map(|c| c.theta.clone().unwrap()).collect());
            return Ok(RunOutput {
                final_theta: global,
                client_thetas,
                clients: state,
                rounds: records,
                diverged: true,
            });
        };
        global = new_global;

        // Post-round bookkeeping: selected clients' latest local losses, and
        // for the personalized variant their persisted parameters.
        for (i, theta_end) in locals {
            state[i].last_loss = loss(kind, &theta_end, &state[i].data.train)?;
            if personalized {
                state[i].theta = Some(theta_end);
            }
        }

        // Evaluation basis for the record and the next ledger.
        let losses_at_global: Vec<f64> = state
            .iter()
            .map(|c| loss(kind, &global, &c.data.train))
            .collect::<Result<_>>()?;
        let eval_losses: Vec<f64> = if personalized {
            state.iter().map(|c| c.last_loss).collect()
        } else {
            losses_at_global.clone()
        };
        let eval_group = groups.group_means(&eval_losses);

        let base: f64 = losses_at_global.iter().zip(&p).map(|(l, pk)| pk * l).sum();
        let mut penalty = 0.0;
        for i in 0..eval_group.len() {
            for j in (i + 1)..eval_group.len() {
                penalty += (eval_group[i] - eval_group[j]).abs();
            }
        }
        let objective = base + plan.lambda * penalty;

        let loss_mean = eval_losses.iter().sum::<f64>() / k as f64;
        let loss_var = eval_losses
            .iter()
            .map(|l| (l - loss_mean).powi(2))
            .sum::<f64>()
            / k as f64;
        let loss_discrepancy = eval_group.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - eval_group.iter().cloned().fold(f64::INFINITY, f64::min);

        let grad_norm_sq = {
            let eval_r = compute_r(&eval_group, &groups);
            let mut g = ParamVector::zeros(global.dim());
            for (i, c) in state.iter().enumerate() {
                let gi = grad(kind, &global, &c.data.train)?;
                let w = client_weight(plan.lambda, p[i], groups.sizes[groups.group_of[i]], eval_r[i]);
                g.add_scaled(&gi, p[i] * w);
            }
            g.norm_sq()
        };

        let client_param_digests = if personalized {
            state
                .iter()
                .map(|c| digest_f64(c.theta.as_ref().unwrap().as_slice()))
                .collect()
        } else {
            Vec::new()
        };

        records.push(RoundRecord {
            round,
            selected,
            lr,
            theta: global.clone(),
            group_losses: ledger_losses.clone(),
            r,
            weights,
            objective: Some(objective),
            loss_mean: Some(loss_mean),
            loss_var: Some(loss_var),
            loss_discrepancy: Some(loss_discrepancy),
            grad_norm_sq: Some(grad_norm_sq),
            client_param_digests,
            diverged: false,
        });

        // Ledger refresh for the next round.
        ledger_losses = if personalized {
            eval_group
        } else {
            match plan.r_mode {
                RMode::Exact => groups.group_means(&losses_at_global),
                RMode::Stale => {
                    let stale: Vec<f64> = state.iter().map(|c| c.last_loss).collect();
                    groups.group_means(&stale)
                }
            }
        };
    }

    let client_thetas = if personalized {
        Some(state.iter().map(|c| c.theta.clone().unwrap()).collect())
    } else {
        for c in &mut state {
            c.theta = Some(global.clone());
            c.last_loss = loss(kind, &global, &c.data.train)?;
        }
        None
    };

    Ok(RunOutput {
        final_theta: global,
        client_thetas,
        clients: state,
        rounds: records,
        diverged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LabeledExample;

    #[test]
    fn schedules_match_formulas() {
        let it = LrSchedule::InverseTime {
            beta: 2.0,
            gamma: 8.0,
        };
        assert_eq!(it.lr(0, 0), 0.25);
        assert_eq!(it.lr(12, 3), 0.1);
        let ed = LrSchedule::ExpDecayPerRound {
            initial: 0.1,
            decay: 0.5,
        };
        assert_eq!(ed.lr(17, 2), 0.025);
        let is = LrSchedule::InverseSqrt { c0: 3.0 };
        assert_eq!(is.lr(3, 0), 1.5);
    }

    #[test]
    fn schedule_validation() {
        assert!(LrSchedule::InverseTime {
            beta: 0.0,
            gamma: 1.0
        }
        .validate()
        .is_err());
        assert!(LrSchedule::ExpDecayPerRound {
            initial: 0.1,
            decay: 1.5
        }
        .validate()
        .is_err());
        assert!(LrSchedule::InverseSqrt { c0: 0.1 }.validate().is_ok());
    }

    #[test]
    fn full_fraction_selects_everyone() {
        let scheme = SamplingScheme {
            kind: SamplingKind::ByWeight,
            fraction: 1.0,
        };
        let p = vec![0.25; 4];
        let s = sample_clients(&scheme, &p, &mut stream(0, &[SAMPLE, 0]));
        assert_eq!(s, vec![0, 1, 2, 3]);
        let scheme = SamplingScheme {
            kind: SamplingKind::Uniform,
            fraction: 1.0,
        };
        let s = sample_clients(&scheme, &p, &mut stream(0, &[SAMPLE, 0]));
        assert_eq!(s, vec![0, 1, 2, 3]);
    }

    #[test]
    fn weighted_sampling_tracks_probabilities() {
        let scheme = SamplingScheme {
            kind: SamplingKind::ByWeight,
            fraction: 0.25,
        };
        let p = vec![0.97, 0.01, 0.01, 0.01];
        let mut rng = stream(42, &[SAMPLE, 99]);
        let n = 10_000;
        let mut hits = 0;
        for _ in 0..n {
            let s = sample_clients(&scheme, &p, &mut rng);
            assert_eq!(s.len(), 1);
            if s[0] == 0 {
                hits += 1;
            }
        }
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.97).abs() < 0.02, "frequency {freq}");
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let scheme = SamplingScheme {
            kind: SamplingKind::ByWeight,
            fraction: 0.5,
        };
        let p = vec![0.1, 0.2, 0.3, 0.25, 0.15];
        let a = sample_clients(&scheme, &p, &mut stream(5, &[SAMPLE, 7]));
        let b = sample_clients(&scheme, &p, &mut stream(5, &[SAMPLE, 7]));
        assert_eq!(a, b);
    }

    #[test]
    fn aggregate_matches_both_rules() {
        let scheme_w = SamplingScheme {
            kind: SamplingKind::ByWeight,
            fraction: 1.0,
        };
        let scheme_u = SamplingScheme {
            kind: SamplingKind::Uniform,
            fraction: 1.0,
        };
        let a = ParamVector::from_vec(vec![0.0]);
        let b = ParamVector::from_vec(vec![2.0]);

        let single = aggregate(&[(0.3, b.clone())], &scheme_w, 4).unwrap();
        assert_eq!(single.as_slice(), &[2.0]);

        let mean = aggregate(&[(0.5, a.clone()), (0.5, b.clone())], &scheme_w, 2).unwrap();
        assert_eq!(mean.as_slice(), &[1.0]);

        // Full participation with equal weights: both rules give the mean.
        let uni = aggregate(&[(0.5, a), (0.5, b)], &scheme_u, 2).unwrap();
        assert_eq!(uni.as_slice(), &[1.0]);

        assert!(aggregate(&[], &scheme_w, 2).is_err());
    }

    fn tiny_quadratic_client(center: f64) -> Vec<LabeledExample> {
        vec![LabeledExample::new(vec![center], 0)]
    }

    #[test]
    fn single_step_arithmetic() {
        // One step, eta = 1, quadratic centered at 0, theta = 1:
        // theta' = 1 - weight * 1 * (1 - 0).
        let schedule = LrSchedule::ExpDecayPerRound {
            initial: 1.0,
            decay: 1.0,
        };
        let batch = BatchSpec {
            batch_size: 1,
            sampling: crate::objectives::BatchSampling::WithoutReplacementReshuffle,
        };
        let data = tiny_quadratic_client(0.0);
        for (weight, expected) in [(1.0, 0.0), (2.0, -1.0), (0.5, 0.5)] {
            let theta = local_update(
                ParamVector::from_vec(vec![1.0]),
                weight,
                0,
                1,
                &schedule,
                &ObjectiveKind::Quadratic,
                &data,
                batch,
                &mut stream(0, &[LOCAL_UPDATE, 0, 0]),
            )
            .unwrap();
            assert_eq!(theta.as_slice(), &[expected]);
        }
    }

    #[test]
    fn weight_two_equals_double_learning_rate_on_quadratic() {
        let batch = BatchSpec {
            batch_size: 1,
            sampling: crate::objectives::BatchSampling::WithoutReplacementReshuffle,
        };
        let data = tiny_quadratic_client(3.0);
        let eta = LrSchedule::ExpDecayPerRound {
            initial: 0.1,
            decay: 1.0,
        };
        let two_eta = LrSchedule::ExpDecayPerRound {
            initial: 0.2,
            decay: 1.0,
        };
        let weighted = local_update(
            ParamVector::from_vec(vec![0.0]),
            2.0,
            0,
            4,
            &eta,
            &ObjectiveKind::Quadratic,
            &data,
            batch,
            &mut stream(1, &[LOCAL_UPDATE, 0, 0]),
        )
        .unwrap();
        let doubled = local_update(
            ParamVector::from_vec(vec![0.0]),
            1.0,
            0,
            4,
            &two_eta,
            &ObjectiveKind::Quadratic,
            &data,
            batch,
            &mut stream(1, &[LOCAL_UPDATE, 0, 0]),
        )
        .unwrap();
        assert_eq!(weighted, doubled);
    }

    #[test]
    fn nonpositive_weight_rejected() {
        let batch = BatchSpec {
            batch_size: 1,
            sampling: crate::objectives::BatchSampling::WithoutReplacementReshuffle,
        };
        let res = local_update(
            ParamVector::from_vec(vec![1.0]),
            0.0,
            0,
            1,
            &LrSchedule::InverseSqrt { c0: 0.1 },
            &ObjectiveKind::Quadratic,
            &tiny_quadratic_client(0.0),
            batch,
            &mut stream(0, &[LOCAL_UPDATE, 0, 0]),
        );
        assert!(res.is_err());
    }

    #[test]
    fn refresh_modes_source_the_right_losses() {
        use crate::client::ClientState;
        use crate::data::ClientDataset;
        let make = |id, group, center: f64, last_loss| ClientState {
            id,
            group,
            p: 0.25,
            data: ClientDataset {
                train: tiny_quadratic_client(center),
                validation: vec![],
                test: vec![],
            },
            theta: None,
            last_loss,
        };
        // Identical data everywhere: exact mode must tie every group.
        let clients = vec![
            make(0, 0, 2.0, 9.0),
            make(1, 0, 2.0, 1.0),
            make(2, 1, 2.0, 5.0),
            make(3, 1, 2.0, 5.0),
        ];
        let at = ParamVector::from_vec(vec![0.0]);
        let exact = refresh_r(&ObjectiveKind::Quadratic, &clients, RMode::Exact, &at).unwrap();
        assert_eq!(exact.group_losses, vec![2.0, 2.0]);
        assert_eq!(exact.r, vec![0, 0, 0, 0]);
        // Stale mode averages the recorded losses instead.
        let stale = refresh_r(&ObjectiveKind::Quadratic, &clients, RMode::Stale, &at).unwrap();
        assert_eq!(stale.group_losses, vec![5.0, 5.0]);
        assert_eq!(stale.group_sizes, vec![2, 2]);
    }

    #[test]
    fn broadcast_payload_has_exactly_theta_and_scale() {
        let b = Broadcast {
            theta: ParamVector::from_vec(vec![1.0, 2.0]),
            scale: -0.25,
        };
        let value = serde_json::to_value(&b).unwrap();
        let obj = value.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(|s| s.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(keys, vec!["scale", "theta"]);
    }
}

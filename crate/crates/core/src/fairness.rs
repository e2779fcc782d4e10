//! Group losses, ordering coefficients, the lambda bound, effective client
//! weights, and the two algebraically equivalent forms of the penalized
//! global objective.
//!
//! The penalized objective
//! `H(theta) = sum_k p_k F_k(theta) + lambda * sum_{i<j} |L_i - L_j|`
//! can be rewritten as a re-weighted sum
//! `H(theta) = sum_k p_k (1 + lambda * r_k / (p_k |A_{s_k}|)) F_k(theta)`
//! where `r_k` counts, with sign, how the client's group loss orders against
//! the other groups. Both forms are implemented and tested against each other.

use serde::{Deserialize, Serialize};

use crate::client::{ClientState, GroupStructure};
use crate::error::{Error, Result};
use crate::objectives::{loss, ObjectiveKind};
use crate::param::ParamVector;

/// Regularization strength plus the group structure it applies to.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairnessParams {
    pub lambda: f64,
    pub groups: GroupStructure,
}

impl FairnessParams {
    /// Checks `0 <= lambda < lambda_max` (strict, so every effective client
    /// weight stays positive). `d = 1` admits any lambda: the penalty has no
    /// pairs to act on.
    pub fn validate(&self, p: &[f64]) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::config("lambda must be non-negative"));
        }
        let max = lambda_max(p, &self.groups);
        if self.lambda >= max {
            return Err(Error::config(format!(
                "lambda {} is not below lambda_max {}; some client weight would drop to zero",
                self.lambda, max
            )));
        }
        Ok(())
    }
}

fn sign(x: f64) -> i64 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Average loss of each group's members (unweighted mean).
pub fn group_losses(per_client_losses: &[f64], groups: &GroupStructure) -> Vec<f64> {
    groups.group_means(per_client_losses)
}

/// Ordering coefficient per group: `sum_{j != i} sign(L_i - L_j)`.
pub fn group_r(group_losses: &[f64]) -> Vec<i64> {
    let d = group_losses.len();
    (0..d)
        .map(|i| {
            (0..d)
                .filter(|&j| j != i)
                .map(|j| sign(group_losses[i] - group_losses[j]))
                .sum()
        })
        .collect()
}

/// Ordering coefficient per client, expanded from its group's coefficient.
pub fn compute_r(group_losses: &[f64], groups: &GroupStructure) -> Vec<i64> {
    let by_group = group_r(group_losses);
    groups.group_of.iter().map(|&g| by_group[g]).collect()
}

/// Strict upper bound on lambda keeping every effective weight positive:
/// `min_k p_k |A_{s_k}| / (d - 1)`. Infinite for a single group, where the
/// penalty vanishes.
pub fn lambda_max(p: &[f64], groups: &GroupStructure) -> f64 {
    let d = groups.num_groups();
    if d < 2 {
        return f64::INFINITY;
    }
    groups
        .group_of
        .iter()
        .zip(p)
        .map(|(&g, &pk)| pk * groups.sizes[g] as f64 / (d - 1) as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Effective multiplier applied to a client's loss and gradients:
/// `1 + lambda * r_k / (p_k |A_{s_k}|)`.
pub fn client_weight(lambda: f64, p_k: f64, group_size: usize, r_k: i64) -> f64 {
    1.0 + lambda * r_k as f64 / (p_k * group_size as f64)
}

/// The scalar actually broadcast to a client: `lambda * r_k / (p_k |A_{s_k}|)`.
/// Sending only the product keeps `p_k`, the group size, and `r_k` private.
pub fn broadcast_scale(lambda: f64, p_k: f64, group_size: usize, r_k: i64) -> f64 {
    lambda * r_k as f64 / (p_k * group_size as f64)
}

/// Penalized objective evaluated literally: weighted mean loss plus the
/// pairwise group-loss spread penalty.
pub fn objective_direct_from_losses(
    per_client_losses: &[f64],
    p: &[f64],
    groups: &GroupStructure,
    lambda: f64,
) -> f64 {
    let base: f64 = per_client_losses
        .iter()
        .zip(p)
        .map(|(l, pk)| pk * l)
        .sum();
    let gl = group_losses(per_client_losses, groups);
    let d = gl.len();
    let mut penalty = 0.0;
    for i in 0..d {
        for j in (i + 1)..d {
            penalty += (gl[i] - gl[j]).abs();
        }
    }
    base + lambda * penalty
}

/// The re-weighted form of the same objective, with `r_k` recomputed from the
/// given losses.
pub fn objective_weighted_from_losses(
    per_client_losses: &[f64],
    p: &[f64],
    groups: &GroupStructure,
    lambda: f64,
) -> f64 {
    let gl = group_losses(per_client_losses, groups);
    let r = compute_r(&gl, groups);
    per_client_losses
        .iter()
        .zip(p)
        .zip(&groups.group_of)
        .zip(&r)
        .map(|(((l, &pk), &g), &rk)| pk * client_weight(lambda, pk, groups.sizes[g], rk) * l)
        .sum()
}

fn client_train_losses(
    kind: &ObjectiveKind,
    theta: &ParamVector,
    clients: &[ClientState],
) -> Result<Vec<f64>> {
    clients
        .iter()
        .map(|c| loss(kind, theta, &c.data.train))
        .collect()
}

/// `objective_direct` evaluated at a shared parameter over real clients.
pub fn objective_direct(
    kind: &ObjectiveKind,
    theta: &ParamVector,
    clients: &[ClientState],
    lambda: f64,
) -> Result<f64> {
    let losses = client_train_losses(kind, theta, clients)?;
    let groups = GroupStructure::from_clients(clients)?;
    let p: Vec<f64> = clients.iter().map(|c| c.p).collect();
    Ok(objective_direct_from_losses(&losses, &p, &groups, lambda))
}

/// `objective_weighted` evaluated at a shared parameter over real clients.
pub fn objective_weighted(
    kind: &ObjectiveKind,
    theta: &ParamVector,
    clients: &[ClientState],
    lambda: f64,
) -> Result<f64> {
    let losses = client_train_losses(kind, theta, clients)?;
    let groups = GroupStructure::from_clients(clients)?;
    let p: Vec<f64> = clients.iter().map(|c| c.p).collect();
    Ok(objective_weighted_from_losses(&losses, &p, &groups, lambda))
}

/// Group losses evaluated at each client's own (personalized) parameter.
pub fn personalized_group_losses(
    kind: &ObjectiveKind,
    clients: &[ClientState],
) -> Result<Vec<f64>> {
    let losses: Vec<f64> = clients
        .iter()
        .map(|c| {
            let theta = c
                .theta
                .as_ref()
                .ok_or_else(|| Error::config(format!("client {} has no current parameter", c.id)))?;
            loss(kind, theta, &c.data.train)
        })
        .collect::<Result<_>>()?;
    let groups = GroupStructure::from_clients(clients)?;
    Ok(group_losses(&losses, &groups))
}

/// Per-client ordering coefficients sourced from personalized group losses.
pub fn personalized_r(kind: &ObjectiveKind, clients: &[ClientState]) -> Result<Vec<i64>> {
    let gl = personalized_group_losses(kind, clients)?;
    let groups = GroupStructure::from_clients(clients)?;
    Ok(compute_r(&gl, &groups))
}

//! Clients, group structure, and the per-group loss ledger.

use serde::{Deserialize, Serialize};

use crate::data::ClientDataset;
use crate::error::{Error, Result};
use crate::param::ParamVector;

/// One device in the federation.
///
/// `theta` and `last_loss` are filled in when a run starts (the parameter
/// dimension depends on the objective, which data generation does not know);
/// training loops work on owned copies, so shared references stay read-only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClientState {
    /// Client index `k` in `[0, K)`.
    pub id: usize,
    /// Group index in `[0, d)`.
    pub group: usize,
    /// Sampling weight, proportional to the training-split size.
    pub p: f64,
    pub data: ClientDataset,
    /// Current local (or personalized) parameter.
    pub theta: Option<ParamVector>,
    /// Most recent local-loss evaluation available to the server.
    pub last_loss: f64,
}

/// Computes sampling weights `p_k = n_k / sum(n)` from example counts.
pub fn compute_pk(sizes: &[usize]) -> Result<Vec<f64>> {
    if sizes.is_empty() {
        return Err(Error::config("cannot compute client weights: no clients"));
    }
    if let Some(k) = sizes.iter().position(|&n| n == 0) {
        return Err(Error::config(format!(
            "client {k} has no examples; every client needs at least one"
        )));
    }
    let total: usize = sizes.iter().sum();
    Ok(sizes.iter().map(|&n| n as f64 / total as f64).collect())
}

/// Client-to-group assignment plus group sizes; `d = sizes.len()`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupStructure {
    pub group_of: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl GroupStructure {
    pub fn new(group_of: Vec<usize>) -> Result<Self> {
        if group_of.is_empty() {
            return Err(Error::config("group structure over zero clients"));
        }
        let d = group_of.iter().max().unwrap() + 1;
        let mut sizes = vec![0usize; d];
        for &g in &group_of {
            sizes[g] += 1;
        }
        if let Some(i) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::config(format!("group {i} is empty")));
        }
        Ok(GroupStructure { group_of, sizes })
    }

    pub fn from_clients(clients: &[ClientState]) -> Result<Self> {
        Self::new(clients.iter().map(|c| c.group).collect())
    }

    pub fn num_groups(&self) -> usize {
        self.sizes.len()
    }

    pub fn num_clients(&self) -> usize {
        self.group_of.len()
    }

    /// Unweighted mean of `values` within each group.
    pub fn group_means(&self, values: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.num_groups()];
        for (&g, &v) in self.group_of.iter().zip(values) {
            sums[g] += v;
        }
        sums.iter()
            .zip(&self.sizes)
            .map(|(s, &n)| s / n as f64)
            .collect()
    }
}

/// Per-group average losses and the per-client ordering coefficients derived
/// from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupLedger {
    pub group_sizes: Vec<usize>,
    pub group_losses: Vec<f64>,
    /// Integer ordering coefficient per client, in `[-d+1, d-1]`.
    pub r: Vec<i64>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pk_symmetric() {
        let p = compute_pk(&[100, 100, 100, 100]).unwrap();
        assert_eq!(p, vec![0.25; 4]);
    }

    #[test]
    fn pk_hundred_equal_devices() {
        let p = compute_pk(&[500; 100]).unwrap();
        for &v in &p {
            assert!((v - 0.01).abs() < 1e-15);
        }
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pk_direct_ratio() {
        let p = compute_pk(&[300, 100]).unwrap();
        assert_eq!(p, vec![0.75, 0.25]);
    }

    #[test]
    fn pk_rejects_empty_and_zero() {
        assert!(compute_pk(&[]).is_err());
        assert!(compute_pk(&[10, 0, 5]).is_err());
    }

    #[test]
    fn group_structure_means() {
        let gs = GroupStructure::new(vec![0, 0, 1, 1, 1]).unwrap();
        assert_eq!(gs.sizes, vec![2, 3]);
        let means = gs.group_means(&[1.0, 3.0, 2.0, 2.0, 5.0]);
        assert_eq!(means, vec![2.0, 3.0]);
    }

    #[test]
    fn empty_group_rejected() {
        // Group 1 missing while group 2 present.
        assert!(GroupStructure::new(vec![0, 2, 2]).is_err());
    }
}

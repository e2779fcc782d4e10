//! Synthetic federated populations with controllable group heterogeneity.
//!
//! Three generators cover the regimes the simulator studies:
//! - `QuadraticCenters`: each group has a base center on the first feature
//!   axis at spacing proportional to the heterogeneity knob; client centers
//!   jitter around it and examples jitter around the client center. With all
//!   spreads at zero the population is exactly i.i.d. across groups at
//!   heterogeneity zero.
//! - `LogisticClusters`: per-group Gaussian feature clusters with labels from
//!   a group-specific linear boundary plus flip noise. Heterogeneity scales
//!   both the cluster offsets and the per-group boundary perturbation.
//! - `LabelSkew`: every client holds a fixed-size random subset of the
//!   classes; heterogeneity between clients comes from the disjoint label
//!   supports, so the knob is not used.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::client::{compute_pk, ClientState};
use crate::data::{split_dataset, LabeledExample};
use crate::error::{Error, Result};
use crate::rng::{stream, DATAGEN, SPLIT};

// Sub-label separating group-level draws from per-client streams; client ids
// stay far below this at desk scale.
const GROUP_DRAWS: u64 = 0xffff_ffff;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroupGenerator {
    QuadraticCenters {
        center_spread: f64,
        example_noise: f64,
    },
    LogisticClusters {
        classes: usize,
        cluster_spread: f64,
        label_noise: f64,
    },
    LabelSkew {
        classes_total: usize,
        classes_per_client: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    /// Number of clients per group; `K` is the total.
    pub group_sizes: Vec<usize>,
    /// Examples per client, one entry per group.
    pub examples_per_client: Vec<usize>,
    pub feature_dim: usize,
    /// Scales the distance between group data distributions; 0 means all
    /// groups share one distribution.
    pub heterogeneity: f64,
    pub generator: GroupGenerator,
    /// Train/validation/test fractions.
    pub split_fractions: (f64, f64, f64),
}

impl PopulationSpec {
    pub fn num_clients(&self) -> usize {
        self.group_sizes.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_sizes.is_empty() || self.group_sizes.contains(&0) {
            return Err(Error::config("every group needs at least one client"));
        }
        if self.examples_per_client.len() != self.group_sizes.len() {
            return Err(Error::config(format!(
                "examples_per_client has {} entries for {} groups",
                self.examples_per_client.len(),
                self.group_sizes.len()
            )));
        }
        if self.examples_per_client.iter().any(|&n| n < 3) {
            return Err(Error::config("every client needs at least 3 examples"));
        }
        if self.feature_dim == 0 {
            return Err(Error::config("feature_dim must be at least 1"));
        }
        if self.heterogeneity < 0.0 {
            return Err(Error::config("heterogeneity must be non-negative"));
        }
        match self.generator {
            GroupGenerator::QuadraticCenters {
                center_spread,
                example_noise,
            } => {
                if center_spread < 0.0 || example_noise < 0.0 {
                    return Err(Error::config("spreads must be non-negative"));
                }
            }
            GroupGenerator::LogisticClusters {
                classes,
                cluster_spread,
                label_noise,
            } => {
                if classes < 2 {
                    return Err(Error::config("logistic clusters need at least 2 classes"));
                }
                if cluster_spread < 0.0 {
                    return Err(Error::config("cluster_spread must be non-negative"));
                }
                if !(0.0..=1.0).contains(&label_noise) {
                    return Err(Error::config("label_noise must be in [0, 1]"));
                }
            }
            GroupGenerator::LabelSkew {
                classes_total,
                classes_per_client,
            } => {
                if classes_total < 2 {
                    return Err(Error::config("label skew needs at least 2 classes"));
                }
                if classes_per_client == 0 || classes_per_client > classes_total {
                    return Err(Error::config(
                        "classes_per_client must be in [1, classes_total]",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Number of classes the generated labels can take.
    pub fn num_classes(&self) -> usize {
        match self.generator {
            GroupGenerator::QuadraticCenters { .. } => 1,
            GroupGenerator::LogisticClusters { classes, .. } => classes,
            GroupGenerator::LabelSkew { classes_total, .. } => classes_total,
        }
    }
}

/// Base offset of group `i` along the first feature axis: groups are spread
/// symmetrically with spacing equal to the heterogeneity knob.
fn group_offset(spec: &PopulationSpec, group: usize) -> Vec<f64> {
    let d = spec.group_sizes.len();
    let mut v = vec![0.0; spec.feature_dim];
    v[0] = spec.heterogeneity * (group as f64 - (d as f64 - 1.0) / 2.0);
    v
}

fn gaussian_vec(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn class_mean(class: usize, classes: usize, feature_dim: usize) -> Vec<f64> {
    let mut m = vec![0.0; feature_dim];
    if feature_dim == 1 {
        m[0] = 2.0 * (class as f64 - (classes as f64 - 1.0) / 2.0);
    } else {
        let angle = 2.0 * std::f64::consts::PI * class as f64 / classes as f64;
        m[0] = 2.0 * angle.cos();
        m[1] = 2.0 * angle.sin();
    }
    m
}

/// Generates the client population described by `spec`, splits each client's
/// examples, and computes sampling weights from the training-split sizes.
pub fn generate_population(spec: &PopulationSpec, seed: u64) -> Result<Vec<ClientState>> {
    spec.validate()?;
    let d = spec.group_sizes.len();
    let f = spec.feature_dim;

    // Group-level draws shared by every client of the group.
    let mut group_rng = stream(seed, &[DATAGEN, GROUP_DRAWS]);
    let boundaries: Option<Vec<Vec<f64>>> = match spec.generator {
        GroupGenerator::LogisticClusters { classes, .. } => {
            let shared = gaussian_vec(classes * f, &mut group_rng);
            Some(
                (0..d)
                    .map(|_| {
                        let delta = gaussian_vec(classes * f, &mut group_rng);
                        shared
                            .iter()
                            .zip(&delta)
                            .map(|(s, dl)| s + spec.heterogeneity * dl)
                            .collect()
                    })
                    .collect(),
            )
        }
        _ => None,
    };

    let mut clients = Vec::with_capacity(spec.num_clients());
    let mut id = 0usize;
    for (group, &count) in spec.group_sizes.iter().enumerate() {
        let n_k = spec.examples_per_client[group];
        let offset = group_offset(spec, group);
        for _ in 0..count {
            let mut rng = stream(seed, &[DATAGEN, id as u64]);
            let examples = match spec.generator {
                GroupGenerator::QuadraticCenters {
                    center_spread,
                    example_noise,
                } => {
                    let jitter = gaussian_vec(f, &mut rng);
                    let center: Vec<f64> = offset
                        .iter()
                        .zip(&jitter)
                        .map(|(o, j)| o + center_spread * j)
                        .collect();
                    (0..n_k)
                        .map(|_| {
                            let noise = gaussian_vec(f, &mut rng);
                            let x: Vec<f64> = center
                                .iter()
                                .zip(&noise)
                                .map(|(c, z)| c + example_noise * z)
                                .collect();
                            LabeledExample::new(x, 0)
                        })
                        .collect::<Vec<_>>()
                }
                GroupGenerator::LogisticClusters {
                    classes,
                    cluster_spread,
                    label_noise,
                } => {
                    let w = &boundaries.as_ref().unwrap()[group];
                    (0..n_k)
                        .map(|_| {
                            let noise = gaussian_vec(f, &mut rng);
                            let x: Vec<f64> = offset
                                .iter()
                                .zip(&noise)
                                .map(|(o, z)| o + cluster_spread * z)
                                .collect();
                            let mut best = 0usize;
                            let mut best_score = f64::NEG_INFINITY;
                            for c in 0..classes {
                                let score: f64 =
                                    (0..f).map(|j| w[c * f + j] * x[j]).sum();
                                if score > best_score {
                                    best_score = score;
                                    best = c;
                                }
                            }
                            let y = if rng.gen::<f64>() < label_noise {
                                let shift = rng.gen_range(1..classes);
                                (best + shift) % classes
                            } else {
                                best
                            };
                            LabeledExample::new(x, y)
                        })
                        .collect::<Vec<_>>()
                }
                GroupGenerator::LabelSkew {
                    classes_total,
                    classes_per_client,
                } => {
                    let mut deck: Vec<usize> = (0..classes_total).collect();
                    deck.partial_shuffle(&mut rng, classes_per_client);
                    deck.truncate(classes_per_client);
                    (0..n_k)
                        .map(|_| {
                            let class = deck[rng.gen_range(0..deck.len())];
                            let mean = class_mean(class, classes_total, f);
                            let noise = gaussian_vec(f, &mut rng);
                            let x: Vec<f64> =
                                mean.iter().zip(&noise).map(|(m, z)| m + z).collect();
                            LabeledExample::new(x, class)
                        })
                        .collect::<Vec<_>>()
                }
            };

            let data = split_dataset(
                examples,
                spec.split_fractions,
                &mut stream(seed, &[SPLIT, id as u64]),
            )?;
            clients.push(ClientState {
                id,
                group,
                p: 0.0,
                data,
                theta: None,
                last_loss: 0.0,
            });
            id += 1;
        }
    }

    let train_sizes: Vec<usize> = clients.iter().map(|c| c.data.train.len()).collect();
    let p = compute_pk(&train_sizes)?;
    for (c, pk) in clients.iter_mut().zip(p) {
        c.p = pk;
    }
    Ok(clients)
}

/// Rewrites a two-group spec into a majority/minority population: the
/// majority group gets `round(fraction * K)` of the clients, and minority
/// clients carry half the per-client examples, so the majority dominates
/// the total sample mass.
pub fn imbalance_population(spec: &PopulationSpec, majority_fraction: f64) -> Result<PopulationSpec> {
    if spec.group_sizes.len() != 2 {
        return Err(Error::config(
            "imbalance_population needs exactly two groups",
        ));
    }
    if !(majority_fraction > 0.5 && majority_fraction < 1.0) {
        return Err(Error::config(format!(
            "majority_fraction must be in (0.5, 1), got {majority_fraction}"
        )));
    }
    let k = spec.num_clients();
    let majority = ((majority_fraction * k as f64).round() as usize).min(k - 1).max(1);
    let minority = k - majority;
    let base = spec.examples_per_client[0];
    let reduced = (base / 2).max(5);
    let mut out = spec.clone();
    out.group_sizes = vec![majority, minority];
    out.examples_per_client = vec![base, reduced];
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_spec() -> PopulationSpec {
        PopulationSpec {
            group_sizes: vec![3, 3],
            examples_per_client: vec![20, 20],
            feature_dim: 2,
            heterogeneity: 1.0,
            generator: GroupGenerator::QuadraticCenters {
                center_spread: 0.3,
                example_noise: 0.2,
            },
            split_fractions: (0.7, 0.1, 0.2),
        }
    }

    #[test]
    fn population_is_reproducible() {
        let spec = quad_spec();
        let a = generate_population(&spec, 11).unwrap();
        let b = generate_population(&spec, 11).unwrap();
        assert_eq!(a.len(), b.len());
        for (ca, cb) in a.iter().zip(&b) {
            assert_eq!(ca.data.train, cb.data.train);
            assert_eq!(ca.p, cb.p);
        }
        let c = generate_population(&spec, 12).unwrap();
        assert!(a
            .iter()
            .zip(&c)
            .any(|(x, y)| x.data.train != y.data.train));
    }

    #[test]
    fn splits_and_weights_are_consistent() {
        let clients = generate_population(&quad_spec(), 3).unwrap();
        let psum: f64 = clients.iter().map(|c| c.p).sum();
        assert!((psum - 1.0).abs() < 1e-12);
        for c in &clients {
            assert_eq!(c.data.total_len(), 20);
            assert_eq!(c.data.train.len(), 14);
            assert_eq!(c.data.validation.len(), 2);
            assert_eq!(c.data.test.len(), 4);
        }
    }

    #[test]
    fn zero_heterogeneity_quadratic_is_fully_iid() {
        let mut spec = quad_spec();
        spec.heterogeneity = 0.0;
        spec.generator = GroupGenerator::QuadraticCenters {
            center_spread: 0.0,
            example_noise: 0.0,
        };
        let clients = generate_population(&spec, 5).unwrap();
        for c in &clients {
            for ex in &c.data.train {
                assert_eq!(ex.x, vec![0.0, 0.0]);
            }
        }
    }

    #[test]
    fn femnist_three_group_proportions() {
        let spec = PopulationSpec {
            group_sizes: vec![60, 100, 40],
            examples_per_client: vec![8, 10, 6],
            feature_dim: 2,
            heterogeneity: 1.0,
            generator: GroupGenerator::LabelSkew {
                classes_total: 10,
                classes_per_client: 5,
            },
            split_fractions: (0.7, 0.1, 0.2),
        };
        let clients = generate_population(&spec, 1).unwrap();
        assert_eq!(clients.len(), 200);
        assert_eq!(clients.iter().filter(|c| c.group == 0).count(), 60);
        assert_eq!(clients.iter().filter(|c| c.group == 1).count(), 100);
        assert_eq!(clients.iter().filter(|c| c.group == 2).count(), 40);
    }

    #[test]
    fn label_skew_gives_exactly_five_labels_per_client() {
        let spec = PopulationSpec {
            group_sizes: vec![100],
            examples_per_client: vec![500],
            feature_dim: 4,
            heterogeneity: 0.0,
            generator: GroupGenerator::LabelSkew {
                classes_total: 10,
                classes_per_client: 5,
            },
            split_fractions: (0.7, 0.1, 0.2),
        };
        let clients = generate_population(&spec, 7).unwrap();
        for c in &clients {
            let mut labels: Vec<usize> = c
                .data
                .train
                .iter()
                .chain(&c.data.validation)
                .chain(&c.data.test)
                .map(|e| e.y)
                .collect();
            labels.sort_unstable();
            labels.dedup();
            assert!(labels.len() <= 5, "client {} has {} labels", c.id, labels.len());
            // 500 draws over 5 classes: seeing all of them is essentially sure.
            assert_eq!(labels.len(), 5);
        }
    }

    #[test]
    fn imbalance_matches_majority_minority_proportions() {
        let mut spec = quad_spec();
        spec.group_sizes = vec![20, 15];
        spec.examples_per_client = vec![40, 40];
        let out = imbalance_population(&spec, 25.0 / 35.0).unwrap();
        assert_eq!(out.group_sizes, vec![25, 10]);
        assert_eq!(out.examples_per_client, vec![40, 20]);

        let clients = generate_population(&out, 2).unwrap();
        let majority_mass: f64 = clients.iter().filter(|c| c.group == 0).map(|c| c.p).sum();
        assert!(majority_mass > 0.5, "majority mass {majority_mass}");
    }

    #[test]
    fn imbalance_near_balanced_limit() {
        let mut spec = quad_spec();
        spec.group_sizes = vec![20, 15];
        let out = imbalance_population(&spec, 0.50001).unwrap();
        assert_eq!(out.group_sizes, vec![18, 17]);
    }

    #[test]
    fn imbalance_rejects_bad_fraction() {
        let spec = quad_spec();
        assert!(imbalance_population(&spec, 0.5).is_err());
        assert!(imbalance_population(&spec, 1.0).is_err());
    }

    #[test]
    fn logistic_labels_follow_group_boundary() {
        let spec = PopulationSpec {
            group_sizes: vec![4, 4],
            examples_per_client: vec![50, 50],
            feature_dim: 2,
            heterogeneity: 1.5,
            generator: GroupGenerator::LogisticClusters {
                classes: 2,
                cluster_spread: 1.0,
                label_noise: 0.0,
            },
            split_fractions: (0.7, 0.1, 0.2),
        };
        let clients = generate_population(&spec, 9).unwrap();
        // Labels must not be constant across the population.
        let mut seen = [false; 2];
        for c in &clients {
            for ex in &c.data.train {
                seen[ex.y] = true;
            }
        }
        assert!(seen[0] && seen[1]);
    }
}

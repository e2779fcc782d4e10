//! Fairness and convergence measurements: per-client performance reports,
//! the non-i.i.d.-ness diagnostics, and log-log rate fits.

use serde::{Deserialize, Serialize};

use crate::client::{ClientState, GroupStructure};
use crate::data::Split;
use crate::error::{Error, Result};
use crate::fairness::{client_weight, compute_r, group_losses};
use crate::objectives::{loss, ObjectiveKind};
use crate::opt::minimize_penalized;
use crate::param::ParamVector;

/// What the per-client numbers in a report mean. Objectives without a
/// classification readout substitute negative loss, which still orders
/// "better" upward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerformanceMeasure {
    Accuracy,
    NegativeLoss,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FairnessReport {
    pub measure: PerformanceMeasure,
    pub per_client: Vec<f64>,
    pub mean: f64,
    /// Population variance (divide by K).
    pub variance: f64,
    pub std: f64,
    pub per_group: Vec<f64>,
    /// Largest minus smallest per-group performance.
    pub discrepancy: f64,
}

impl FairnessReport {
    /// Strict fairness comparison: smaller performance variance is fairer.
    pub fn is_fairer_than(&self, other: &FairnessReport) -> bool {
        self.variance < other.variance
    }
}

/// Which model each client is evaluated at.
#[derive(Debug, Clone, Copy)]
pub enum ModelView<'a> {
    /// Every client evaluated at one shared parameter.
    Global(&'a ParamVector),
    /// Client `k` evaluated at its own parameter.
    PerClient(&'a [ParamVector]),
}

fn performance_of(
    kind: &ObjectiveKind,
    theta: &ParamVector,
    examples: &[crate::data::LabeledExample],
) -> Result<(f64, PerformanceMeasure)> {
    match kind {
        ObjectiveKind::Quadratic => Ok((
            -loss(kind, theta, examples)?,
            PerformanceMeasure::NegativeLoss,
        )),
        _ => {
            let correct = examples
                .iter()
                .filter(|ex| kind.predict(theta, &ex.x) == Some(ex.y))
                .count();
            Ok((
                correct as f64 / examples.len() as f64,
                PerformanceMeasure::Accuracy,
            ))
        }
    }
}

/// Per-client performance on the chosen split, with mean, population
/// variance, per-group means, and the max-minus-min group discrepancy.
pub fn fairness_report(
    kind: &ObjectiveKind,
    clients: &[ClientState],
    view: ModelView<'_>,
    split: Split,
) -> Result<FairnessReport> {
    if clients.is_empty() {
        return Err(Error::config("fairness report over zero clients"));
    }
    if let ModelView::PerClient(thetas) = view {
        if thetas.len() != clients.len() {
            return Err(Error::config(format!(
                "{} parameters for {} clients",
                thetas.len(),
                clients.len()
            )));
        }
    }
    let mut per_client = Vec::with_capacity(clients.len());
    let mut measure = PerformanceMeasure::Accuracy;
    for (i, c) in clients.iter().enumerate() {
        let examples = c.data.split(split);
        if examples.is_empty() {
            return Err(Error::config(format!(
                "client {} has an empty {:?} split",
                c.id, split
            )));
        }
        let theta = match view {
            ModelView::Global(t) => t,
            ModelView::PerClient(ts) => &ts[i],
        };
        let (a, m) = performance_of(kind, theta, examples)?;
        measure = m;
        per_client.push(a);
    }

    let k = per_client.len() as f64;
    let mean = per_client.iter().sum::<f64>() / k;
    let variance = per_client.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k;
    let groups = GroupStructure::from_clients(clients)?;
    let per_group = groups.group_means(&per_client);
    let discrepancy = per_group.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - per_group.iter().cloned().fold(f64::INFINITY, f64::min);

    Ok(FairnessReport {
        measure,
        per_client,
        mean,
        variance,
        std: variance.sqrt(),
        per_group,
        discrepancy,
    })
}

/// Non-i.i.d.-ness diagnostics, when the per-client and global optima are
/// computable for the objective at hand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GammaResult {
    Computed { gamma_k: f64, gamma_max: f64 },
    NotComputed { reason: String },
}

fn optima_computable(kind: &ObjectiveKind, lambda: f64, d: usize) -> std::result::Result<(), String> {
    match kind {
        ObjectiveKind::Quadratic => {}
        ObjectiveKind::Logistic { l2, .. } => {
            if *l2 <= 0.0 {
                return Err("logistic objective needs l2 > 0 for computable optima".into());
            }
        }
        ObjectiveKind::Mlp { .. } => {
            return Err("non-convex objective has no computable optima".into());
        }
    }
    if lambda > 0.0 && d > 2 {
        return Err("penalized optimum is only computed for at most two groups".into());
    }
    Ok(())
}

/// `gamma_k = H* - sum_k p_k H_k*` and `gamma_max = sum_k p_k |H* - H_k*|`,
/// where `H_k*` scales each client's own optimum by its effective weight at
/// the global optimizer. Returns a marker instead of a number whenever an
/// optimum is not reliably computable.
pub fn gamma_k(kind: &ObjectiveKind, clients: &[ClientState], lambda: f64) -> Result<GammaResult> {
    let groups = GroupStructure::from_clients(clients)?;
    if let Err(reason) = optima_computable(kind, lambda, groups.num_groups()) {
        return Ok(GammaResult::NotComputed { reason });
    }
    let p: Vec<f64> = clients.iter().map(|c| c.p).collect();
    let feature_dim = clients[0].data.train[0].x.len();
    let dim = kind.param_dim(feature_dim);

    // Per-client optimal values F_k*.
    let f_star: Vec<f64> = match kind {
        ObjectiveKind::Quadratic => clients
            .iter()
            .map(|c| {
                let n = c.data.train.len() as f64;
                let mut mean = vec![0.0; feature_dim];
                for ex in &c.data.train {
                    for (m, x) in mean.iter_mut().zip(&ex.x) {
                        *m += x / n;
                    }
                }
                loss(kind, &ParamVector::from_vec(mean), &c.data.train)
            })
            .collect::<Result<_>>()?,
        _ => clients
            .iter()
            .map(|c| {
                // Pre-flight so shape errors surface as errors, not panics.
                loss(kind, &ParamVector::zeros(dim), &c.data.train)?;
                let fg = |theta: &ParamVector| {
                    (
                        loss(kind, theta, &c.data.train).unwrap(),
                        crate::objectives::grad(kind, theta, &c.data.train).unwrap(),
                    )
                };
                let (_, v) = crate::opt::minimize_smooth(&fg, ParamVector::zeros(dim), 1e-11, 50_000);
                Ok(v)
            })
            .collect::<Result<_>>()?,
    };

    let (theta_star, h_star) = minimize_penalized(kind, clients, lambda, ParamVector::zeros(dim))?;

    // Effective weights at the global optimizer.
    let losses_at_star: Vec<f64> = clients
        .iter()
        .map(|c| loss(kind, &theta_star, &c.data.train))
        .collect::<Result<_>>()?;
    let gl = group_losses(&losses_at_star, &groups);
    let r = compute_r(&gl, &groups);
    let h_k_star: Vec<f64> = (0..clients.len())
        .map(|i| {
            let w = client_weight(lambda, p[i], groups.sizes[groups.group_of[i]], r[i]);
            w * f_star[i]
        })
        .collect();

    let gamma: f64 = h_k_star
        .iter()
        .zip(&p)
        .map(|(hk, pk)| pk * (h_star - hk))
        .sum();
    let gamma_max: f64 = h_k_star
        .iter()
        .zip(&p)
        .map(|(hk, pk)| pk * (h_star - hk).abs())
        .sum();
    Ok(GammaResult::Computed {
        gamma_k: gamma,
        gamma_max,
    })
}

/// Log-log rate fit over a `(T, gap)` series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateDiagnostic {
    pub slope: f64,
    pub intercept: f64,
    /// 95% confidence interval on the slope.
    pub slope_ci: (f64, f64),
    pub points: usize,
    /// Set when non-positive gaps had to be clipped at 1e-15.
    pub clipped: bool,
}

/// Least-squares slope of `log(gap)` against `log(T)`. The first 10% of the
/// points are discarded as burn-in; the remainder must hold at least 5 points
/// spanning at least one decade of `T`.
pub fn rate_fit(series: &[(f64, f64)]) -> Result<RateDiagnostic> {
    let mut pts: Vec<(f64, f64)> = series.to_vec();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    match (pts.first(), pts.last()) {
        (Some(&(t_min, _)), Some(&(t_max, _))) if t_min > 0.0 && t_max / t_min >= 10.0 => {}
        _ => {
            return Err(Error::config(
                "rate fit needs the series to span at least one decade of T",
            ))
        }
    }
    let burn = pts.len() / 10;
    let pts = &pts[burn..];
    if pts.len() < 5 {
        return Err(Error::config(format!(
            "rate fit needs at least 5 points after burn-in, got {}",
            pts.len()
        )));
    }

    let mut clipped = false;
    let xy: Vec<(f64, f64)> = pts
        .iter()
        .map(|&(t, gap)| {
            let g = if gap <= 1e-15 {
                clipped = true;
                1e-15
            } else {
                gap
            };
            (t.ln(), g.ln())
        })
        .collect();

    let n = xy.len() as f64;
    let mean_x = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rss: f64 = xy
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let se = if xy.len() > 2 {
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(RateDiagnostic {
        slope,
        intercept,
        slope_ci: (slope - 1.96 * se, slope + 1.96 * se),
        points: xy.len(),
        clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{ClientDataset, LabeledExample};

    fn quad_client(id: usize, group: usize, center: &[f64], p: f64) -> ClientState {
        let ex = vec![LabeledExample::new(center.to_vec(), 0)];
        ClientState {
            id,
            group,
            p,
            data: ClientDataset {
                train: ex.clone(),
                validation: vec![],
                test: ex,
            },
            theta: None,
            last_loss: 0.0,
        }
    }

    #[test]
    fn report_on_identical_clients_has_zero_spread() {
        let clients = vec![
            quad_client(0, 0, &[1.0], 0.5),
            quad_client(1, 1, &[1.0], 0.5),
        ];
        let theta = ParamVector::from_vec(vec![0.0]);
        let report = fairness_report(
            &ObjectiveKind::Quadratic,
            &clients,
            ModelView::Global(&theta),
            Split::Test,
        )
        .unwrap();
        assert_eq!(report.measure, PerformanceMeasure::NegativeLoss);
        assert_eq!(report.variance, 0.0);
        assert_eq!(report.discrepancy, 0.0);
    }

    #[test]
    fn report_arithmetic_matches_hand_values() {
        // Two singleton-group logistic clients engineered to score test
        // accuracies 1.0 and 0.5 against theta = [0, 1]: the model predicts
        // class 1 exactly when x > 0.
        let kind = ObjectiveKind::Logistic {
            num_classes: 2,
            l2: 0.0,
        };
        let client = |id, group, test: Vec<LabeledExample>| ClientState {
            id,
            group,
            p: 0.5,
            data: ClientDataset {
                train: test.clone(),
                validation: vec![],
                test,
            },
            theta: None,
            last_loss: 0.0,
        };
        let clients = vec![
            client(
                0,
                0,
                vec![
                    LabeledExample::new(vec![1.0], 1),
                    LabeledExample::new(vec![-1.0], 0),
                ],
            ),
            client(
                1,
                1,
                vec![
                    LabeledExample::new(vec![1.0], 1),
                    LabeledExample::new(vec![1.0], 0),
                ],
            ),
        ];
        let theta = ParamVector::from_vec(vec![0.0, 1.0]);
        let report =
            fairness_report(&kind, &clients, ModelView::Global(&theta), Split::Test).unwrap();
        assert_eq!(report.per_client, vec![1.0, 0.5]);
        assert_eq!(report.mean, 0.75);
        assert_eq!(report.variance, 0.0625);
        assert_eq!(report.discrepancy, 0.5);
        // Cross-check against a naive E[x^2] - mean^2 oracle.
        let naive = report.per_client.iter().map(|a| a * a).sum::<f64>() / 2.0
            - report.mean * report.mean;
        assert!((report.variance - naive).abs() < 1e-12);
    }

    #[test]
    fn variance_matches_two_pass_oracle_on_random_values() {
        use rand::Rng;
        let mut rng = crate::rng::stream(3, &[0x77]);
        for _ in 0..50 {
            let values: Vec<f64> = (0..30).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
            let k = values.len() as f64;
            let mean = values.iter().sum::<f64>() / k;
            let two_pass = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k;
            let naive = values.iter().map(|v| v * v).sum::<f64>() / k - mean * mean;
            assert!((two_pass - naive).abs() <= 1e-12);
        }
    }

    #[test]
    fn fairer_comparator_is_strict_on_variance() {
        let mk = |variance: f64| FairnessReport {
            measure: PerformanceMeasure::Accuracy,
            per_client: vec![],
            mean: 0.0,
            variance,
            std: variance.sqrt(),
            per_group: vec![],
            discrepancy: 0.0,
        };
        assert!(mk(0.1).is_fairer_than(&mk(0.2)));
        assert!(!mk(0.2).is_fairer_than(&mk(0.1)));
        assert!(!mk(0.2).is_fairer_than(&mk(0.2)));
    }

    #[test]
    fn gamma_identical_clients_is_zero() {
        let clients = vec![
            quad_client(0, 0, &[1.0, 1.0], 0.5),
            quad_client(1, 1, &[1.0, 1.0], 0.5),
        ];
        match gamma_k(&ObjectiveKind::Quadratic, &clients, 0.0).unwrap() {
            GammaResult::Computed { gamma_k, gamma_max } => {
                assert!(gamma_k.abs() < 1e-9);
                assert!(gamma_max >= gamma_k.abs() - 1e-15);
            }
            other => panic!("expected computed gamma, got {other:?}"),
        }
    }

    #[test]
    fn gamma_two_centers_matches_closed_form() {
        let clients = vec![
            quad_client(0, 0, &[0.0], 0.5),
            quad_client(1, 1, &[2.0], 0.5),
        ];
        match gamma_k(&ObjectiveKind::Quadratic, &clients, 0.0).unwrap() {
            GammaResult::Computed { gamma_k, gamma_max } => {
                assert!((gamma_k - 0.5).abs() < 1e-8, "gamma {gamma_k}");
                assert!(gamma_max >= gamma_k.abs());
            }
            other => panic!("expected computed gamma, got {other:?}"),
        }
    }

    #[test]
    fn gamma_not_computed_for_nonconvex() {
        let clients = vec![quad_client(0, 0, &[0.0], 1.0)];
        let kind = ObjectiveKind::Mlp {
            hidden: 3,
            num_classes: 2,
            l2: 0.0,
        };
        assert!(matches!(
            gamma_k(&kind, &clients, 0.0).unwrap(),
            GammaResult::NotComputed { .. }
        ));
    }

    #[test]
    fn rate_fit_recovers_exact_power_laws() {
        let series: Vec<(f64, f64)> = (1..=60).map(|i| {
            let t = 10.0 * 1.2f64.powi(i);
            (t, 3.0 / t)
        }).collect();
        let fit = rate_fit(&series).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-6, "slope {}", fit.slope);
        assert!(!fit.clipped);

        let series: Vec<(f64, f64)> = (1..=60).map(|i| {
            let t = 10.0 * 1.2f64.powi(i);
            (t, 5.0 / t.sqrt())
        }).collect();
        let fit = rate_fit(&series).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-6, "slope {}", fit.slope);
    }

    #[test]
    fn rate_fit_rejects_degenerate_series() {
        let short = vec![(10.0, 1.0), (20.0, 0.5), (40.0, 0.25), (80.0, 0.125)];
        assert!(rate_fit(&short).is_err());
        let narrow: Vec<(f64, f64)> = (10..20).map(|t| (t as f64, 1.0 / t as f64)).collect();
        assert!(rate_fit(&narrow).is_err());
    }

    #[test]
    fn rate_fit_clips_non_positive_gaps() {
        let mut series: Vec<(f64, f64)> = (1..=40)
            .map(|i| {
                let t = 10.0 * 1.3f64.powi(i);
                (t, 1.0 / t)
            })
            .collect();
        series[20].1 = 0.0;
        let fit = rate_fit(&series).unwrap();
        assert!(fit.clipped);
    }
}

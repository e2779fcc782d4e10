//! Diagnostics against generated populations: the non-i.i.d.-ness measure
//! tracks the heterogeneity knob, and the personalized loss plumbing matches
//! hand-computed values.

use gifair_core::client::{ClientState, GroupStructure};
use gifair_core::data::{ClientDataset, LabeledExample, Split};
use gifair_core::datagen::{generate_population, GroupGenerator, PopulationSpec};
use gifair_core::fairness::{group_losses, personalized_group_losses, personalized_r};
use gifair_core::metrics::{fairness_report, gamma_k, GammaResult, ModelView};
use gifair_core::objectives::ObjectiveKind;
use gifair_core::param::ParamVector;

fn quad_spec(heterogeneity: f64, center_spread: f64, example_noise: f64) -> PopulationSpec {
    PopulationSpec {
        group_sizes: vec![4, 4],
        examples_per_client: vec![20, 20],
        feature_dim: 2,
        heterogeneity,
        generator: GroupGenerator::QuadraticCenters {
            center_spread,
            example_noise,
        },
        split_fractions: (0.7, 0.1, 0.2),
    }
}

fn mean_gamma(heterogeneity: f64, noisy: bool, seeds: u64) -> f64 {
    let (spread, noise) = if noisy { (0.3, 0.5) } else { (0.0, 0.0) };
    let spec = quad_spec(heterogeneity, spread, noise);
    let mut total = 0.0;
    for seed in 0..seeds {
        let clients = generate_population(&spec, 500 + seed).unwrap();
        match gamma_k(&ObjectiveKind::Quadratic, &clients, 0.0).unwrap() {
            GammaResult::Computed { gamma_k, gamma_max } => {
                assert!(
                    gamma_max >= gamma_k.abs() - 1e-12,
                    "gamma_max {gamma_max} < |gamma_k| {gamma_k}"
                );
                total += gamma_k;
            }
            other => panic!("expected computed gamma, got {other:?}"),
        }
    }
    total / seeds as f64
}

#[test]
fn gamma_is_monotone_in_the_heterogeneity_knob() {
    let knobs = [0.0, 0.5, 1.0, 2.0];
    let values: Vec<f64> = knobs.iter().map(|&h| mean_gamma(h, true, 10)).collect();
    for w in values.windows(2) {
        assert!(w[1] >= w[0], "gamma not non-decreasing: {values:?}");
    }
}

#[test]
fn noiseless_gamma_is_zero_then_strictly_increasing() {
    let g0 = mean_gamma(0.0, false, 3);
    let g1 = mean_gamma(1.0, false, 3);
    let g2 = mean_gamma(2.0, false, 3);
    assert!(g0.abs() <= 1e-6, "gamma at zero heterogeneity: {g0}");
    assert!(g1 > g0 && g2 > g1, "{g0} {g1} {g2}");
}

fn client_with_loss(id: usize, group: usize, target_loss: f64, p: f64) -> ClientState {
    // Quadratic with one example at the origin: F(theta) = 0.5 theta^2,
    // so theta = sqrt(2 * target) hits the requested loss.
    let ex = vec![LabeledExample::new(vec![0.0], 0)];
    ClientState {
        id,
        group,
        p,
        data: ClientDataset {
            train: ex.clone(),
            validation: vec![],
            test: ex,
        },
        theta: Some(ParamVector::from_vec(vec![(2.0 * target_loss).sqrt()])),
        last_loss: 0.0,
    }
}

#[test]
fn personalized_group_losses_match_hand_means() {
    // Two groups with member losses [1, 3] and [2, 4].
    let clients = vec![
        client_with_loss(0, 0, 1.0, 0.25),
        client_with_loss(1, 0, 3.0, 0.25),
        client_with_loss(2, 1, 2.0, 0.25),
        client_with_loss(3, 1, 4.0, 0.25),
    ];
    let gl = personalized_group_losses(&ObjectiveKind::Quadratic, &clients).unwrap();
    assert!((gl[0] - 2.0).abs() < 1e-12);
    assert!((gl[1] - 3.0).abs() < 1e-12);
    let r = personalized_r(&ObjectiveKind::Quadratic, &clients).unwrap();
    assert_eq!(r, vec![-1, -1, 1, 1]);
}

#[test]
fn personalized_losses_at_shared_parameter_match_global_form() {
    let mut clients = vec![
        client_with_loss(0, 0, 1.0, 0.5),
        client_with_loss(1, 1, 3.0, 0.5),
    ];
    let shared = ParamVector::from_vec(vec![1.5]);
    for c in &mut clients {
        c.theta = Some(shared.clone());
    }
    let personalized = personalized_group_losses(&ObjectiveKind::Quadratic, &clients).unwrap();
    let losses: Vec<f64> = clients
        .iter()
        .map(|c| gifair_core::objectives::loss(&ObjectiveKind::Quadratic, &shared, &c.data.train).unwrap())
        .collect();
    let groups = GroupStructure::from_clients(&clients).unwrap();
    assert_eq!(personalized, group_losses(&losses, &groups));
}

#[test]
fn singleton_groups_make_personalized_losses_the_client_losses() {
    let clients = vec![
        client_with_loss(0, 0, 0.7, 0.5),
        client_with_loss(1, 1, 1.9, 0.5),
    ];
    let gl = personalized_group_losses(&ObjectiveKind::Quadratic, &clients).unwrap();
    assert!((gl[0] - 0.7).abs() < 1e-12);
    assert!((gl[1] - 1.9).abs() < 1e-12);
}

#[test]
fn report_over_classifier_population_uses_accuracy() {
    let spec = PopulationSpec {
        group_sizes: vec![3, 3],
        examples_per_client: vec![30, 30],
        feature_dim: 2,
        heterogeneity: 1.0,
        generator: GroupGenerator::LogisticClusters {
            classes: 2,
            cluster_spread: 1.0,
            label_noise: 0.0,
        },
        split_fractions: (0.7, 0.1, 0.2),
    };
    let clients = generate_population(&spec, 4).unwrap();
    let kind = ObjectiveKind::Logistic {
        num_classes: 2,
        l2: 0.01,
    };
    let theta = ParamVector::zeros(4);
    let report = fairness_report(&kind, &clients, ModelView::Global(&theta), Split::Test).unwrap();
    assert_eq!(report.measure, gifair_core::metrics::PerformanceMeasure::Accuracy);
    assert_eq!(report.per_client.len(), 6);
    for &a in &report.per_client {
        assert!((0.0..=1.0).contains(&a));
    }
    assert!(report.variance >= 0.0 && report.discrepancy >= 0.0);
}

//! Benchmarks for the per-round client-update map (the data-parallel inner
//! loop) and a small end-to-end run. The "parallel" benches go through the
//! same dispatch the training loop uses, which is rayon-backed under the
//! default `parallel` feature and sequential without it; the "sequential"
//! benches always use the plain iterator path, so a default-features run
//! shows the speedup side by side.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use gifair_core::algorithms::{
    local_update, run, Algorithm, LrSchedule, RMode, SamplingKind, SamplingScheme, TrainPlan,
};
use gifair_core::client::ClientState;
use gifair_core::datagen::{generate_population, GroupGenerator, PopulationSpec};
use gifair_core::objectives::{BatchSampling, BatchSpec, ObjectiveKind};
use gifair_core::par;
use gifair_core::param::ParamVector;
use gifair_core::rng::{stream, LOCAL_UPDATE};

fn population(clients: usize) -> Vec<ClientState> {
    let spec = PopulationSpec {
        group_sizes: vec![clients / 2, clients - clients / 2],
        examples_per_client: vec![200, 200],
        feature_dim: 8,
        heterogeneity: 2.0,
        generator: GroupGenerator::QuadraticCenters {
            center_spread: 0.3,
            example_noise: 0.5,
        },
        split_fractions: (0.7, 0.1, 0.2),
    };
    generate_population(&spec, 1).unwrap()
}

fn one_round(clients: &[ClientState], sequential: bool) -> Vec<ParamVector> {
    let ids: Vec<usize> = (0..clients.len()).collect();
    let batch = BatchSpec {
        batch_size: 20,
        sampling: BatchSampling::WithoutReplacementReshuffle,
    };
    let schedule = LrSchedule::InverseTime {
        beta: 2.0,
        gamma: 12.0,
    };
    let theta0 = ParamVector::zeros(8);
    let step = |k: &usize| {
        let mut rng = stream(7, &[LOCAL_UPDATE, 0, *k as u64]);
        local_update(
            theta0.clone(),
            1.0,
            0,
            20,
            &schedule,
            &ObjectiveKind::Quadratic,
            &clients[*k].data.train,
            batch,
            &mut rng,
        )
        .unwrap()
    };
    if sequential {
        par::map_collect_seq(&ids, step)
    } else {
        par::map_collect(&ids, step)
    }
}

fn bench_round(c: &mut Criterion) {
    let mut group = c.benchmark_group("client_round");
    for clients in [8usize, 32] {
        let pop = population(clients);
        group.bench_with_input(BenchmarkId::new("parallel", clients), &pop, |b, pop| {
            b.iter(|| one_round(pop, false))
        });
        group.bench_with_input(BenchmarkId::new("sequential", clients), &pop, |b, pop| {
            b.iter(|| one_round(pop, true))
        });
    }
    group.finish();
}

fn bench_full_run(c: &mut Criterion) {
    let pop = population(16);
    let plan = TrainPlan {
        algorithm: Algorithm::GifairGlobal,
        rounds: 25,
        local_steps: 5,
        batch: BatchSpec {
            batch_size: 20,
            sampling: BatchSampling::WithoutReplacementReshuffle,
        },
        schedule: LrSchedule::InverseTime {
            beta: 2.0,
            gamma: 12.0,
        },
        sampling: SamplingScheme {
            kind: SamplingKind::ByWeight,
            fraction: 1.0,
        },
        lambda: 0.2,
        r_mode: RMode::Exact,
        initial_group_losses: None,
    };
    c.bench_function("full_run_25_rounds", |b| {
        b.iter(|| run(&plan, &pop, &ObjectiveKind::Quadratic, &ParamVector::zeros(8), 3).unwrap())
    });
}

criterion_group!(benches, bench_round, bench_full_run);
criterion_main!(benches);

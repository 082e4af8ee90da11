use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use facetbandit::env::surrogate::{generate_task, make_surrogate_learner, SurrogateTaskSpec};
use facetbandit::env::{run_curriculum_step, BatchSizes};
use facetbandit::rng::ReplicaStreams;
use facetbandit::{Exp3Config, RewardKind, RewardWindow};
use facetbandit_bench::warmed_state;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::hint::black_box;

fn policy_and_update(c: &mut Criterion) {
    let mut group = c.benchmark_group("exp3");
    for n in [5usize, 50, 500] {
        let cfg = Exp3Config::new(n, 0.25, 0.1).unwrap();
        let mut rng = StdRng::seed_from_u64(1);
        let mut state = warmed_state(&cfg, 1000, &mut rng);
        group.bench_function(format!("policy_sample_update/{n}"), |b| {
            b.iter(|| {
                let pi = state.policy(&cfg).unwrap();
                let arm = pi.sample(&mut rng);
                let reward = rng.random_range(-1.0..=1.0);
                state.update(&cfg, arm, reward, pi.prob(arm)).unwrap();
                black_box(arm)
            })
        });
    }
    group.finish();
}

fn rescaler(c: &mut Criterion) {
    let mut rng = StdRng::seed_from_u64(2);
    let mut window = RewardWindow::new();
    for _ in 0..window.capacity() {
        window.push_and_rescale(rng.random()).unwrap();
    }
    c.bench_function("push_and_rescale/full_window", |b| {
        b.iter(|| black_box(window.push_and_rescale(rng.random()).unwrap()))
    });
}

fn curriculum_step(c: &mut Criterion) {
    let spec = SurrogateTaskSpec::default();
    let task = generate_task(&spec, &mut StdRng::seed_from_u64(3)).unwrap();
    let cfg = Exp3Config::new(spec.facets.len(), 0.25, 0.1).unwrap();
    let sizes = BatchSizes {
        train: 16,
        eval: 64,
    };
    for kind in ["pg", "dev-pg"] {
        let reward: RewardKind = kind.parse().unwrap();
        c.bench_function(&format!("curriculum_step/{kind}"), |b| {
            b.iter_batched_ref(
                || {
                    let learner =
                        make_surrogate_learner(&spec, &mut StdRng::seed_from_u64(4)).unwrap();
                    let state = facetbandit::Exp3State::new(&cfg).unwrap();
                    (
                        learner,
                        state,
                        RewardWindow::new(),
                        ReplicaStreams::new(0, 0),
                    )
                },
                |(learner, state, window, streams)| {
                    run_curriculum_step(
                        state,
                        &cfg,
                        learner.as_mut(),
                        &task.dataset,
                        reward,
                        window,
                        streams,
                        sizes,
                    )
                    .unwrap()
                },
                BatchSize::SmallInput,
            )
        });
    }
}

criterion_group!(benches, policy_and_update, rescaler, curriculum_step);
criterion_main!(benches);

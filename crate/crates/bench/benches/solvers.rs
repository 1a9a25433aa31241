use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cmg_bench::structured;
use cmg_core::eval::{best_response_on, DefenderSampler, FixedMaskSampler, ScoredDraws};
use cmg_core::exact::{solve_lp_cg, CgOptions};
use cmg_core::fixtures::fixture;
use cmg_core::gam::{gam_gradients, AttackerNet, GeneratorNet, SampleBatch};
use cmg_core::game::{Mask, PriorSampler};

fn lp_cg(c: &mut Criterion) {
    let mut group = c.benchmark_group("lp_cg");
    for name in ["table1-n4", "table1-n6", "table1-n2m2"] {
        let game = fixture(name).unwrap();
        group.bench_function(name, |b| b.iter(|| solve_lp_cg(&game, &CgOptions::default()).unwrap()));
    }
    group.finish();
}

fn best_response(c: &mut Criterion) {
    let game = structured(20, 0);
    let mut y = vec![1u8; game.joint_len()];
    y[..6].fill(0);
    let sampler = FixedMaskSampler::new(&game, &Mask(y)).unwrap();
    let draws = sampler.draw(&mut ChaCha8Rng::seed_from_u64(1), 100_000).unwrap();
    let scored = ScoredDraws::new(&game, draws);
    c.bench_function("empirical_best_response_n20_100k", |b| {
        b.iter(|| best_response_on(&scored))
    });
}

fn gam_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("gam_gradients");
    group.sample_size(20);
    for n in [20, 40] {
        let game = structured(n, 0);
        let len = game.joint_len();
        let hidden = vec![64.max(4 * len); 2];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let gen = GeneratorNet::new(len, &hidden, true, &mut rng);
        let atk = AttackerNet::new(len, &hidden, game.num_exploits(), &mut rng);
        let prior = PriorSampler::new(&game).unwrap();
        group.bench_function(format!("n{n}_batch2000"), |b| {
            b.iter_batched(
                || SampleBatch::draw(&game, &prior, &mut rng, 2000),
                |batch| gam_gradients(&gen, &atk, &batch, &game, true).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, lp_cg, best_response, gam_step);
criterion_main!(benches);

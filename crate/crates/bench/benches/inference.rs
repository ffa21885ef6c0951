use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;
use trsvi::data::{gen_bernoulli_mixture, gen_lda, DocLength};
use trsvi::expfam::{kl_gradient, niw_to_natural};
use trsvi::inference::{svi_natural_gradient, trust_region_step, InitStrategy, TrustRegionConfig};
use trsvi::linalg::Matrix;
use trsvi::models::{local_step, Batch, ConjugateModel, Lda, Mixture};
use trsvi::special::digamma;
use trsvi::{NaturalParams, NiwParams};

fn special(c: &mut Criterion) {
    c.bench_function("digamma", |b| b.iter(|| digamma(black_box(3.7))));
}

fn kl(c: &mut Criterion) {
    let p = NaturalParams::dirichlet((1..=50).map(|i| 0.5 + i as f64 * 0.1).collect()).unwrap();
    let q = NaturalParams::dirichlet((1..=50).map(|i| 5.0 - i as f64 * 0.05).collect()).unwrap();
    c.bench_function("kl_gradient dirichlet 50", |b| b.iter(|| kl_gradient(black_box(&p), black_box(&q))));
    let niw = |s: f64| NiwParams { s, m: vec![0.1 * s; 5], psi: Matrix::scaled_identity(5, s), nu: 8.0 };
    let (p, q) = (niw_to_natural(&niw(1.0)).unwrap(), niw_to_natural(&niw(2.0)).unwrap());
    c.bench_function("kl_gradient niw 5", |b| b.iter(|| kl_gradient(black_box(&p), black_box(&q))));
}

fn steps(c: &mut Criterion) {
    let (data, _) = gen_bernoulli_mixture(20, 64, 2000, 2.0, 1).unwrap();
    let rows = data.rows();
    let model = Mixture::bernoulli(40, 64, 1.0, 1.0, 1.0).unwrap();
    let prior = model.prior();
    let state = model.init_state(&rows, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let batch = Batch::new(rows[..200].to_vec(), rows.len() as f64).unwrap();
    let tr = TrustRegionConfig::new(2, 10, InitStrategy::UniformBeliefs);
    c.bench_function("mixture ng step B=200 K=40", |b| {
        b.iter(|| svi_natural_gradient(&model, &state, &prior, &batch, 0.1, 10).unwrap())
    });
    c.bench_function("mixture tr step B=200 K=40", |b| {
        b.iter(|| trust_region_step(&model, &state, &prior, &batch, 0.1, &tr).unwrap())
    });

    let (corpus, _, _) = gen_lda(20, 1000, 200, DocLength::Poisson { mean: 100.0 }, 0.1, 0.1, 2).unwrap();
    let lda = Lda::symmetric(20, 1000, 0.1, 0.1).unwrap();
    let prior = lda.prior();
    let state = lda.init_state(&corpus.docs, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    c.bench_function("lda local step 50 docs", |b| {
        b.iter_batched(
            || corpus.docs[..50].to_vec(),
            |docs| local_step(&lda, &state, &prior, &docs, None, 10).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, special, kl, steps);
criterion_main!(benches);

//! Acceptance suite. Prints one PASS/FAIL line per criterion and a summary.
//!
//! Runs as a plain binary (`harness = false`). The process exits non-zero on
//! a failed criterion only when `TRSVI_ACCEPTANCE_STRICT=1`; set
//! `TRSVI_ACCEPTANCE_ONLY=3,8` to run a subset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, ChiSquared, Distribution, StandardNormal};
use std::collections::HashSet;
use std::sync::atomic::AtomicBool;
use std::time::Instant;
use trsvi::data::{gen_bernoulli_mixture, gen_digit_like, gen_gmm, gen_lda, split_tokens, DocLength};
use trsvi::eval::{effective_components, lda_heldout_loglik, precision_recall_at_m};
use trsvi::expfam::{kl_divergence, kl_gradient, natural_to_niw, niw_to_natural};
use trsvi::inference::{
    batch_vb, fit, svi_natural_gradient, trust_region_step, write_metrics, FitConfig, InitStrategy, Method,
    Schedule, TrustRegionConfig,
};
use trsvi::linalg::Matrix;
use trsvi::models::{
    bernoulli_expected_loglik, full_elbo, gaussian_expected_loglik, local_step, Batch, ConjugateModel,
    DocBeliefs, Document, GlobalState, Lda, Mixture, Prior, Responsibilities,
};
use trsvi::streaming::{
    read_events, simulate_stream, streaming_svi_driver, write_events, CountingUnit, StreamSimConfig,
    StreamingConfig,
};
use trsvi::{NaturalParams, NiwParams};

type Outcome = (bool, String);
type Criterion = (&'static str, fn() -> Outcome);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * r.random::<f64>()
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn rand_dirichlet(r: &mut ChaCha8Rng) -> NaturalParams {
    let k = r.random_range(2..=6);
    NaturalParams::dirichlet((0..k).map(|_| uniform(r, 0.3, 8.0)).collect()).unwrap()
}

fn rand_beta(r: &mut ChaCha8Rng) -> NaturalParams {
    let d = r.random_range(1..=5);
    let a: Vec<f64> = (0..d).map(|_| uniform(r, 0.3, 8.0)).collect();
    let b: Vec<f64> = (0..d).map(|_| uniform(r, 0.3, 8.0)).collect();
    NaturalParams::beta_vector(&a, &b).unwrap()
}

fn rand_niw(r: &mut ChaCha8Rng, d: usize) -> NiwParams {
    let a: Vec<f64> = (0..d * d).map(|_| normal(r)).collect();
    let mut psi = Matrix::scaled_identity(d, 0.5);
    for i in 0..d {
        for j in 0..d {
            psi[(i, j)] += (0..d).map(|t| a[i * d + t] * a[j * d + t]).sum::<f64>();
        }
    }
    NiwParams {
        s: uniform(r, 0.5, 5.0),
        m: (0..d).map(|_| normal(r)).collect(),
        psi,
        nu: uniform(r, d as f64 + 1.0, d as f64 + 8.0),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// 1
fn kl_gradient_identity() -> Outcome {
    let mut r = rng(1);
    let mut worst: f64 = 0.0;
    for family in 0..3 {
        for _ in 0..200 {
            let (p, q) = match family {
                0 => {
                    let p = rand_dirichlet(&mut r);
                    let k = p.values().len();
                    let q = (0..k).map(|_| uniform(&mut r, 0.3, 8.0)).collect();
                    (p, NaturalParams::dirichlet(q).unwrap())
                }
                1 => {
                    let p = rand_beta(&mut r);
                    let d = p.values().len() / 2;
                    let a: Vec<f64> = (0..d).map(|_| uniform(&mut r, 0.3, 8.0)).collect();
                    let b: Vec<f64> = (0..d).map(|_| uniform(&mut r, 0.3, 8.0)).collect();
                    (p, NaturalParams::beta_vector(&a, &b).unwrap())
                }
                _ => {
                    let d = r.random_range(1..=3);
                    let p = niw_to_natural(&rand_niw(&mut r, d)).unwrap();
                    let q = niw_to_natural(&rand_niw(&mut r, d)).unwrap();
                    (p, q)
                }
            };
            let g = kl_gradient(&p, &q).unwrap();
            let fd: Vec<f64> = (0..g.len())
                .map(|i| {
                    let h = 1e-6 * p.values()[i].abs().max(1.0);
                    let shifted = |delta: f64| {
                        let mut v = p.values().to_vec();
                        v[i] += delta;
                        kl_divergence(&NaturalParams::new(p.family(), v).unwrap(), &q).unwrap()
                    };
                    (shifted(h) - shifted(-h)) / (2.0 * h)
                })
                .collect();
            let diff: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
            worst = worst.max(norm(&diff) / norm(&g));
        }
    }
    (worst <= 1e-5, format!("600 pairs, worst relative error {worst:.2e}"))
}

fn bernoulli_instance(
    k: usize,
    d: usize,
    n: usize,
    seed: u64,
) -> (Mixture<trsvi::models::BernoulliLikelihood>, Vec<Vec<f64>>) {
    let (data, _) = gen_bernoulli_mixture(k, d, n, 2.0, seed).unwrap();
    (Mixture::bernoulli(k, d, 1.0, 1.0, 1.0).unwrap(), data.rows())
}

fn sample_batch<X: Clone>(r: &mut ChaCha8Rng, data: &[X], b: usize) -> Batch<X> {
    let items = (0..b).map(|_| data[r.random_range(0..data.len())].clone()).collect();
    Batch::new(items, data.len() as f64).unwrap()
}

fn ng_tr_identical<M: ConjugateModel>(model: &M, data: &[M::Datum], r: &mut ChaCha8Rng) -> bool {
    let state = model.init_state(data, r).unwrap();
    let prior = model.prior();
    let batch = sample_batch(r, data, 20);
    let rho = r.random::<f64>();
    let local = r.random_range(1..=10);
    let ng = svi_natural_gradient(model, &state, &prior, &batch, rho, local).unwrap();
    let cfg = TrustRegionConfig::new(r.random_range(1..=5), local, InitStrategy::NaturalGradientEquivalent);
    let tr = trust_region_step(model, &state, &prior, &batch, rho, &cfg).unwrap();
    let bits = |s: &GlobalState| s.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    bits(&ng.state) == bits(&tr.state)
}

// 2
fn ng_special_case() -> Outcome {
    let mut r = rng(2);
    let (bern, rows) = bernoulli_instance(4, 12, 300, 21);
    let (gdata, _) = gen_gmm(3, 2, 300, 3.0, 22).unwrap();
    let grows = gdata.rows();
    let p0 = NiwParams { s: 1.0, m: vec![0.0; 2], psi: Matrix::identity(2), nu: 4.0 };
    let gauss = Mixture::gaussian(3, &p0, 1.0).unwrap();
    let (corpus, _, _) = gen_lda(4, 40, 100, DocLength::Poisson { mean: 30.0 }, 0.3, 0.1, 23).unwrap();
    let lda = Lda::symmetric(4, 40, 0.3, 0.1).unwrap();
    let mut same = 0;
    for i in 0..50 {
        let ok = match i % 3 {
            0 => ng_tr_identical(&bern, &rows, &mut r),
            1 => ng_tr_identical(&gauss, &grows, &mut r),
            _ => ng_tr_identical(&lda, &corpus.docs, &mut r),
        };
        same += usize::from(ok);
    }
    (same == 50, format!("{same}/50 states bit-identical"))
}

// 3
fn asymptotic_equivalence() -> Outcome {
    let (model, rows) = bernoulli_instance(5, 20, 2000, 31);
    let prior = model.prior();
    // A state at the scale of the data: one natural-gradient epoch from init.
    let warm = FitConfig {
        schedule: Schedule::classic(0.7, 10.0, 50),
        method: Method::NaturalGradient { local_iters: 10 },
        epochs: 1.0,
        seed: 3,
        empirical_bayes: false,
        full_elbo_every: None,
        record_wall_time: false,
    };
    let state = fit(&model, &rows, &warm).unwrap().state;
    let mut r = rng(3);
    let batch = sample_batch(&mut r, &rows, 50);
    let cfg = TrustRegionConfig::new(2, 10, InitStrategy::UniformBeliefs);
    let base = state.flatten();
    let mut errors = Vec::new();
    for rho in [1e-2, 1e-3, 1e-4] {
        let ng = svi_natural_gradient(&model, &state, &prior, &batch, rho, 10).unwrap().state.flatten();
        let tr = trust_region_step(&model, &state, &prior, &batch, rho, &cfg).unwrap().state.flatten();
        let d_ng: Vec<f64> = ng.iter().zip(&base).map(|(a, b)| (a - b) / rho).collect();
        let diff: Vec<f64> = tr.iter().zip(&ng).map(|(a, b)| (a - b) / rho).collect();
        errors.push(norm(&diff) / norm(&d_ng));
    }
    let ok = errors[0] > errors[1] && errors[1] > errors[2] && errors[2] < 1e-3;
    (ok, format!("relative direction error {:.2e}, {:.2e}, {:.2e}", errors[0], errors[1], errors[2]))
}

// 4
fn positive_definiteness() -> Outcome {
    let mut r = rng(4);
    let mut min_pivot = f64::INFINITY;
    for _ in 0..10_000 {
        let d = r.random_range(1..=4);
        let a = niw_to_natural(&rand_niw(&mut r, d)).unwrap();
        let b = niw_to_natural(&rand_niw(&mut r, d)).unwrap();
        let rho = r.random::<f64>();
        let mid = natural_to_niw(&a.interpolate(&b, rho).unwrap()).unwrap();
        let pivot = mid.psi.cholesky().map(|c| c.min_pivot()).unwrap_or(f64::NEG_INFINITY);
        min_pivot = min_pivot.min(pivot);
    }
    let mut valid = 0;
    for i in 0..10_000 {
        let (a, b) = match i % 3 {
            0 => {
                let a = rand_dirichlet(&mut r);
                let k = a.values().len();
                (a, NaturalParams::dirichlet((0..k).map(|_| uniform(&mut r, 0.01, 50.0)).collect()).unwrap())
            }
            1 => {
                let a = rand_beta(&mut r);
                let d = a.values().len() / 2;
                let x: Vec<f64> = (0..2 * d).map(|_| uniform(&mut r, 0.01, 50.0)).collect();
                (a, NaturalParams::beta_vector(&x[..d], &x[d..]).unwrap())
            }
            _ => {
                let d = r.random_range(1..=4);
                (niw_to_natural(&rand_niw(&mut r, d)).unwrap(), niw_to_natural(&rand_niw(&mut r, d)).unwrap())
            }
        };
        let rho = r.random::<f64>();
        valid += usize::from(a.interpolate(&b, rho).is_ok_and(|c| c.is_valid()));
    }
    let ok = min_pivot > 0.0 && valid == 10_000;
    (ok, format!("smallest Cholesky pivot {min_pivot:.3e}, {valid}/10000 convex combinations valid"))
}

/// Lower-triangular product `L·A` of two row-major lower-triangular matrices.
fn lower_product(l: &[f64], a: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            out[i * d + j] = (j..=i).map(|t| l[i * d + t] * a[t * d + j]).sum();
        }
    }
    out
}

/// Solves `Lᵀ u = z` for lower-triangular `L`.
fn solve_upper_transposed(l: &[f64], z: &[f64], d: usize) -> Vec<f64> {
    let mut u = vec![0.0; d];
    for i in (0..d).rev() {
        let s: f64 = (i + 1..d).map(|t| l[t * d + i] * u[t]).sum();
        u[i] = (z[i] - s) / l[i * d + i];
    }
    u
}

fn mc_summary(draws: &[f64]) -> (f64, f64) {
    let n = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / n;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Draws `log N(x | μ, Σ)` with `Σ ~ IW(Ψ, ν)` and `μ | Σ ~ N(m, Σ/s)`,
/// using the Bartlett decomposition of the precision `W = Σ⁻¹`.
fn niw_loglik_draws(p: &NiwParams, x: &[f64], n: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    let d = p.dim();
    let inv = p.psi.cholesky().unwrap().inverse();
    let chol = inv.cholesky().unwrap();
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let e: Vec<f64> = (0..d).map(|t| f64::from(u8::from(t == j))).collect();
            l[i * d + j] = chol.lower_mul(&e)[i];
        }
    }
    let chi: Vec<ChiSquared<f64>> = (0..d).map(|i| ChiSquared::new(p.nu - i as f64).unwrap()).collect();
    let log2pi = (2.0 * std::f64::consts::PI).ln();
    (0..n)
        .map(|_| {
            let mut a = vec![0.0; d * d];
            for i in 0..d {
                a[i * d + i] = chi[i].sample(r).sqrt();
                for j in 0..i {
                    a[i * d + j] = normal(r);
                }
            }
            // W = (LA)(LA)ᵀ, so LA is the Cholesky factor of the precision.
            let la = lower_product(&l, &a, d);
            let z: Vec<f64> = (0..d).map(|_| normal(r) / p.s.sqrt()).collect();
            let shift = solve_upper_transposed(&la, &z, d);
            let diff: Vec<f64> = (0..d).map(|i| x[i] - p.m[i] - shift[i]).collect();
            let proj: Vec<f64> = (0..d).map(|j| (j..d).map(|i| la[i * d + j] * diff[i]).sum()).collect();
            let log_det_w: f64 = (0..d).map(|i| 2.0 * la[i * d + i].ln()).sum();
            -0.5 * d as f64 * log2pi + 0.5 * log_det_w - 0.5 * proj.iter().map(|v| v * v).sum::<f64>()
        })
        .collect()
}

// 5
fn expected_loglik_formulas() -> Outcome {
    const DRAWS: usize = 200_000;
    let mut r = rng(5);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let d = r.random_range(1..=6);
        let a: Vec<f64> = (0..d).map(|_| uniform(&mut r, 0.3, 10.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| uniform(&mut r, 0.3, 10.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| f64::from(u8::from(r.random::<bool>()))).collect();
        let exact = bernoulli_expected_loglik(&a, &b, &x).unwrap();
        let betas: Vec<Beta<f64>> = a.iter().zip(&b).map(|(a, b)| Beta::new(*a, *b).unwrap()).collect();
        let draws: Vec<f64> = (0..DRAWS)
            .map(|_| {
                betas
                    .iter()
                    .zip(&x)
                    .map(|(beta, xi)| {
                        let p: f64 = beta.sample(&mut r);
                        if *xi == 1.0 {
                            p.ln()
                        } else {
                            (1.0 - p).ln()
                        }
                    })
                    .sum()
            })
            .collect();
        let (mean, se) = mc_summary(&draws);
        worst = worst.max((mean - exact).abs() / se);
    }
    for _ in 0..20 {
        let d = r.random_range(1..=3);
        let p = rand_niw(&mut r, d);
        let x: Vec<f64> = (0..d).map(|i| p.m[i] + 1.5 * normal(&mut r)).collect();
        let exact = gaussian_expected_loglik(&p, &x).unwrap();
        let (mean, se) = mc_summary(&niw_loglik_draws(&p, &x, DRAWS, &mut r));
        worst = worst.max((mean - exact).abs() / se);
    }
    (worst < 3.0, format!("40 settings, {DRAWS} draws each, largest deviation {worst:.2} standard errors"))
}

fn batch_monotone<M: ConjugateModel>(model: &M, data: &[M::Datum], local_iters: usize) -> f64 {
    let init = model.init_state(data, &mut rng(6)).unwrap();
    let out = batch_vb(model, &init, &model.prior(), data, 100, local_iters).unwrap();
    out.elbo.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

// 6
fn batch_coordinate_ascent() -> Outcome {
    let (bern, rows) = bernoulli_instance(5, 20, 500, 61);
    let (gdata, _) = gen_gmm(4, 2, 500, 3.0, 62).unwrap();
    let p0 = NiwParams { s: 0.5, m: vec![0.0; 2], psi: Matrix::identity(2), nu: 4.0 };
    let gauss = Mixture::gaussian(4, &p0, 1.0).unwrap();
    let (corpus, _, _) = gen_lda(5, 50, 100, DocLength::Poisson { mean: 40.0 }, 0.2, 0.1, 63).unwrap();
    let lda = Lda::symmetric(5, 50, 0.2, 0.1).unwrap();
    let steps = [
        batch_monotone(&bern, &rows, 1),
        batch_monotone(&gauss, &gdata.rows(), 1),
        batch_monotone(&lda, &corpus.docs, 20),
    ];
    let ok = steps.iter().all(|s| *s >= -1e-8);
    (
        ok,
        format!(
            "smallest per-iteration change: bernoulli {:.2e}, gaussian {:.2e}, lda {:.2e}",
            steps[0], steps[1], steps[2]
        ),
    )
}

/// Maximizes `f` over a box by repeated grid refinement around the best cell.
fn grid_max(dim: usize, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let mut lo = vec![0.0; dim];
    let mut hi = vec![1.0; dim];
    let points = 41usize;
    let mut best = f64::NEG_INFINITY;
    let mut arg = vec![0.5; dim];
    for _ in 0..8 {
        let total = points.pow(dim as u32);
        for idx in 0..total {
            let mut rem = idx;
            let p: Vec<f64> = (0..dim)
                .map(|j| {
                    let i = rem % points;
                    rem /= points;
                    lo[j] + (hi[j] - lo[j]) * i as f64 / (points - 1) as f64
                })
                .collect();
            let v = f(&p);
            if v > best {
                best = v;
                arg = p;
            }
        }
        for j in 0..dim {
            let cell = (hi[j] - lo[j]) / (points - 1) as f64;
            lo[j] = (arg[j] - 2.0 * cell).max(0.0);
            hi[j] = (arg[j] + 2.0 * cell).min(1.0);
        }
    }
    best
}

fn simplex(p: &[f64]) -> Option<Vec<f64>> {
    let rest = 1.0 - p.iter().sum::<f64>();
    (rest >= 0.0).then(|| p.iter().copied().chain([rest]).collect())
}

fn random_state<M: ConjugateModel>(model: &M, data: &[M::Datum], r: &mut ChaCha8Rng) -> GlobalState {
    let prior = model.prior();
    let init = model.init_state(data, r).unwrap();
    let batch = sample_batch(r, data, data.len().min(5));
    let tr = TrustRegionConfig::new(2, 5, InitStrategy::UniformBeliefs);
    trust_region_step(model, &init, &prior, &batch, r.random_range(0.2..0.9), &tr).unwrap().state
}

fn mixture_gap<M>(model: &M, data: &[Vec<f64>], r: &mut ChaCha8Rng) -> f64
where
    M: ConjugateModel<Datum = Vec<f64>, Beliefs = Responsibilities>,
{
    let prior = model.prior();
    let state = random_state(model, data, r);
    let exp = model.expectations(&state, &prior).unwrap();
    let k = model.num_components();
    let x = &data[r.random_range(0..data.len())];
    let got = local_step(model, &state, &prior, std::slice::from_ref(x), None, 1).unwrap();
    let attained = model.local_elbo(&exp, x, &got[0]);
    let grid = grid_max(k - 1, &|p| match simplex(p) {
        Some(phi) => model.local_elbo(&exp, x, &Responsibilities(phi)),
        None => f64::NEG_INFINITY,
    });
    grid - attained
}

fn lda_gap(model: &Lda, doc: &Document, state: &GlobalState) -> f64 {
    let prior = model.prior();
    let exp = model.expectations(state, &prior).unwrap();
    let k = model.num_components();
    let got = local_step(model, state, &prior, std::slice::from_ref(doc), None, 2000).unwrap();
    let attained = model.local_elbo(&exp, doc, &got[0]);
    let alpha = exp.alpha().to_vec();
    let words = doc.unique_words();
    // One simplex coordinate block per unique word; γ is set to its optimum
    // given φ.
    let per = k - 1;
    let grid = grid_max(words * per, &|p| {
        let mut phi = Vec::with_capacity(words * k);
        for w in 0..words {
            match simplex(&p[w * per..(w + 1) * per]) {
                Some(row) => phi.extend(row),
                None => return f64::NEG_INFINITY,
            }
        }
        let mut gamma = alpha.clone();
        for (row, c) in phi.chunks_exact(k).zip(doc.counts()) {
            for (g, q) in gamma.iter_mut().zip(row) {
                *g += c * q;
            }
        }
        model.local_elbo(&exp, doc, &DocBeliefs { gamma, phi })
    });
    grid - attained
}

// 7
fn local_step_optimality() -> Outcome {
    let mut r = rng(7);
    let mut worst: f64 = f64::NEG_INFINITY;
    for k in 2..=3 {
        let (data, _) = gen_bernoulli_mixture(k, 4, 50, 1.0, 70 + k as u64).unwrap();
        let model = Mixture::bernoulli(k, 4, 1.0, 1.0, 1.0).unwrap();
        for _ in 0..5 {
            worst = worst.max(mixture_gap(&model, &data.rows(), &mut r));
        }
        let (g, _) = gen_gmm(k, 2, 50, 2.0, 80 + k as u64).unwrap();
        let p0 = NiwParams { s: 1.0, m: vec![0.0; 2], psi: Matrix::identity(2), nu: 4.0 };
        let model = Mixture::gaussian(k, &p0, 1.0).unwrap();
        for _ in 0..5 {
            worst = worst.max(mixture_gap(&model, &g.rows(), &mut r));
        }
    }
    let cases: [(usize, Vec<(usize, u32)>); 4] = [
        (2, vec![(0, 3), (2, 1)]),
        (2, vec![(1, 2), (3, 5)]),
        (3, vec![(2, 4)]),
        (2, vec![(0, 1), (1, 2), (3, 1)]),
    ];
    for (k, pairs) in cases {
        let model = Lda::symmetric(k, 4, 0.5, 0.3).unwrap();
        let docs: Vec<Document> =
            (0..6).map(|i| Document::from_tokens((0..8).map(|t| (i * 3 + t * 7) % 4))).collect();
        let doc = Document::from_counts(pairs).unwrap();
        for _ in 0..3 {
            let state = random_state(&model, &docs, &mut r);
            worst = worst.max(lda_gap(&model, &doc, &state));
        }
    }
    (worst <= 1e-5, format!("grid optimum exceeds the local step by at most {worst:.2e}"))
}

fn digits_run(seed: u64) -> (f64, f64, usize, usize) {
    let (data, _) = gen_digit_like(20, 8, 20_000, 1000 + seed).unwrap();
    let rows = data.rows();
    let model = Mixture::bernoulli(40, 64, 1.0, 1.0, 1.0).unwrap();
    let schedule = Schedule::classic(0.5, 100.0, 200);
    let run = |method: Method, epochs: f64| {
        let cfg = FitConfig {
            schedule,
            method,
            epochs,
            seed,
            empirical_bayes: false,
            full_elbo_every: None,
            record_wall_time: false,
        };
        let out = fit(&model, &rows, &cfg).unwrap();
        let elbo = full_elbo(&model, &out.state, &out.prior, &rows, 10).unwrap();
        let eff = effective_components(&model, &out.state, &out.prior, &rows, 10).unwrap();
        (elbo, eff)
    };
    let (tr_elbo, tr_eff) =
        run(Method::TrustRegion(TrustRegionConfig::new(2, 10, InitStrategy::UniformBeliefs)), 10.0);
    let (ng_elbo, ng_eff) = run(Method::NaturalGradient { local_iters: 10 }, 20.0);
    (tr_elbo, ng_elbo, tr_eff, ng_eff)
}

// 8
fn digits_reproduction() -> Outcome {
    let (mut elbo_wins, mut eff_wins) = (0, 0);
    let mut lines = Vec::new();
    for seed in 0..10 {
        let (tr, ng, tr_eff, ng_eff) = digits_run(seed);
        elbo_wins += usize::from(tr > ng);
        eff_wins += usize::from(tr_eff >= ng_eff);
        lines.push(format!("seed {seed}: elbo tr {tr:.0} ng {ng:.0}, components tr {tr_eff} ng {ng_eff}"));
    }
    for l in &lines {
        println!("    {l}");
    }
    let ok = elbo_wins >= 9 && eff_wins >= 9;
    (ok, format!("TR higher ELBO in {elbo_wins}/10 seeds, TR components >= NG in {eff_wins}/10"))
}

fn streaming_run(seed: u64) -> (f64, f64, f64) {
    let (n, n_test) = (5000, 300);
    let (_, _, tokens) =
        gen_lda(10, 500, n + n_test, DocLength::Poisson { mean: 100.0 }, 0.1, 0.1, 100 + seed).unwrap();
    let (observed, heldout) = split_tokens(&tokens[n..], 0.5, seed).unwrap();
    let model = Lda::symmetric(10, 500, 0.1, 0.1).unwrap();
    let eval = |s: &GlobalState, p: &Prior| {
        lda_heldout_loglik(&model, s, p, &observed, &heldout, 10).map(|r| r.value)
    };
    let sim = StreamSimConfig { rate: 10.0, reveal_prob: 1.0, delay: 0, ticks: 100_000, initial: 0, seed };
    let events = simulate_stream(&sim, &tokens[..n]).unwrap();
    let stop = AtomicBool::new(false);
    let tr = Method::TrustRegion(TrustRegionConfig::new(3, 10, InitStrategy::UniformBeliefs));
    let cfg = |method: Method| StreamingConfig {
        fit: FitConfig {
            schedule: Schedule::streaming(0.5, 10.0, 50, 0.0),
            method,
            epochs: 1.0,
            seed,
            empirical_bayes: false,
            full_elbo_every: None,
            record_wall_time: false,
        },
        steps_per_tick: 1,
        unit: CountingUnit::Records,
        tail_steps: 0,
        eval_every_ticks: None,
    };
    let stream_tr = streaming_svi_driver(&model, &events, &cfg(tr), Some(&eval), &stop).unwrap();
    let stream_ng = streaming_svi_driver(
        &model,
        &events,
        &cfg(Method::NaturalGradient { local_iters: 10 }),
        Some(&eval),
        &stop,
    )
    .unwrap();
    let steps = stream_tr.log.len();
    let docs: Vec<Document> = tokens[..n].iter().map(|t| Document::from_tokens(t.iter().copied())).collect();
    let batch_cfg = FitConfig {
        schedule: Schedule::classic(0.7, 10.0, 50),
        method: tr,
        epochs: steps as f64 * 50.0 / n as f64,
        seed,
        empirical_bayes: false,
        full_elbo_every: None,
        record_wall_time: false,
    };
    let run = fit(&model, &docs, &batch_cfg).unwrap();
    let last = |log: &[trsvi::inference::MetricRecord]| log.last().and_then(|r| r.heldout).unwrap();
    (last(&stream_tr.log), last(&stream_ng.log), eval(&run.state, &run.prior).unwrap())
}

// 9
fn streaming_direction() -> Outcome {
    let (mut wins, mut close) = (0, 0);
    for seed in 0..10 {
        let (tr, ng, batch) = streaming_run(seed);
        wins += usize::from(tr > ng);
        close += usize::from((tr - batch).abs() <= 0.1);
        println!("    seed {seed}: streaming tr {tr:.4}, streaming ng {ng:.4}, non-streaming tr {batch:.4}");
    }
    let ok = wins >= 9 && close == 10;
    (
        ok,
        format!(
            "streaming TR beats NG in {wins}/10 seeds, within 0.1 nats of non-streaming TR in {close}/10"
        ),
    )
}

fn naive_precision_recall(p: &[usize], l: &[usize]) -> Option<(f64, f64)> {
    if l.is_empty() {
        return None;
    }
    if p.is_empty() {
        return Some((0.0, 0.0));
    }
    let mut hits = 0;
    for x in l {
        if p.contains(x) {
            hits += 1;
        }
    }
    let hits = hits as f64;
    Some((hits / l.len().min(p.len()) as f64, hits / l.len() as f64))
}

// 10
fn ranking_metrics() -> Outcome {
    let same: Vec<usize> = (0..20).collect();
    let trivial = [
        precision_recall_at_m(&same, &same).unwrap() == Some((1.0, 1.0)),
        precision_recall_at_m(&[0, 1, 2], &[3, 4]).unwrap() == Some((0.0, 0.0)),
        precision_recall_at_m(&same, &[1, 5, 9, 40, 41]).unwrap() == Some((0.6, 0.6)),
    ];
    let mut r = rng(10);
    let mut agree = 0;
    for _ in 0..1000 {
        let universe = r.random_range(1..60);
        let m = r.random_range(1..=universe);
        let mut items: Vec<usize> = (0..universe).collect();
        rand::seq::SliceRandom::shuffle(items.as_mut_slice(), &mut r);
        let p = items[..m].to_vec();
        let l: Vec<usize> = (0..universe).filter(|_| r.random::<f64>() < 0.3).collect();
        let got = precision_recall_at_m(&p, &l).unwrap();
        let want = naive_precision_recall(&p, &l);
        let sets_ok = got.is_none_or(|(prec, rec)| {
            let hits = p.iter().collect::<HashSet<_>>().intersection(&l.iter().collect()).count();
            prec >= rec && rec == hits as f64 / l.len() as f64
        });
        agree += usize::from(got == want && sets_ok);
    }
    let ok = trivial.iter().all(|b| *b) && agree == 1000;
    let t = trivial.iter().filter(|b| **b).count();
    (ok, format!("{t}/3 fixed examples, {agree}/1000 random instances equal to the naive oracle"))
}

fn metrics_bytes(log: &[trsvi::inference::MetricRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    write_metrics(&mut out, log).unwrap();
    out
}

// 11
fn determinism() -> Outcome {
    let (model, rows) = bernoulli_instance(6, 16, 1000, 111);
    let cfg = FitConfig {
        schedule: Schedule::classic(0.7, 10.0, 50),
        method: Method::TrustRegion(TrustRegionConfig::new(2, 5, InitStrategy::UniformBeliefs)),
        epochs: 2.0,
        seed: 11,
        empirical_bayes: true,
        full_elbo_every: Some(1),
        record_wall_time: false,
    };
    let a = fit(&model, &rows, &cfg).unwrap();
    let b = fit(&model, &rows, &cfg).unwrap();
    let fit_same = metrics_bytes(&a.log) == metrics_bytes(&b.log)
        && serde_json::to_vec(&a.checkpoint()).unwrap() == serde_json::to_vec(&b.checkpoint()).unwrap();

    let (_, _, tokens) = gen_lda(4, 60, 200, DocLength::Poisson { mean: 30.0 }, 0.2, 0.1, 112).unwrap();
    let sim = StreamSimConfig { rate: 3.0, reveal_prob: 0.6, delay: 1, ticks: 10_000, initial: 5, seed: 12 };
    let events = simulate_stream(&sim, &tokens).unwrap();
    let lda = Lda::symmetric(4, 60, 0.2, 0.1).unwrap();
    let scfg = StreamingConfig {
        fit: FitConfig {
            schedule: Schedule::streaming(0.7, 10.0, 20, 0.0),
            method: Method::TrustRegion(TrustRegionConfig::new(2, 5, InitStrategy::UniformBeliefs)),
            epochs: 1.0,
            seed: 12,
            empirical_bayes: false,
            full_elbo_every: None,
            record_wall_time: false,
        },
        steps_per_tick: 1,
        unit: CountingUnit::Words,
        tail_steps: 10,
        eval_every_ticks: None,
    };
    let stop = AtomicBool::new(false);
    let first = streaming_svi_driver(&lda, &events, &scfg, None, &stop).unwrap();
    let mut log = Vec::new();
    write_events(&mut log, first.db.events()).unwrap();
    let replayed_events = read_events(log.as_slice()).unwrap();
    let second = streaming_svi_driver(&lda, &replayed_events, &scfg, None, &stop).unwrap();
    let replay_same = metrics_bytes(&first.log) == metrics_bytes(&second.log)
        && serde_json::to_vec(first.state().unwrap()).unwrap()
            == serde_json::to_vec(second.state().unwrap()).unwrap();
    (
        fit_same && replay_same,
        format!(
            "repeated fit {}, stream replay {} ({} steps)",
            if fit_same { "identical" } else { "differs" },
            if replay_same { "identical" } else { "differs" },
            first.log.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("KL gradient identity", kl_gradient_identity),
        ("natural-gradient special case", ng_special_case),
        ("asymptotic equivalence", asymptotic_equivalence),
        ("positive definiteness", positive_definiteness),
        ("expected log-likelihood formulas", expected_loglik_formulas),
        ("batch coordinate ascent", batch_coordinate_ascent),
        ("local-step optimality", local_step_optimality),
        ("binarized-digit reproduction", digits_reproduction),
        ("streaming direction", streaming_direction),
        ("ranking metrics", ranking_metrics),
        ("determinism", determinism),
    ];
    let only: Option<HashSet<usize>> = std::env::var("TRSVI_ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let id = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = run();
        let secs = start.elapsed().as_secs_f64();
        println!("criterion {id:>2} {} {name}: {detail} [{secs:.1} s]", if ok { "PASS" } else { "FAIL" });
        ran += 1;
        if !ok {
            failed.push(id);
        }
    }
    println!("acceptance: {}/{ran} criteria passed", ran - failed.len());
    if !failed.is_empty() {
        println!("acceptance: failed {failed:?}");
        if std::env::var("TRSVI_ACCEPTANCE_STRICT").as_deref() == Ok("1") {
            std::process::exit(1);
        }
    }
}

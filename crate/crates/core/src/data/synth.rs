//! Forward samplers for the three model families.
//!
//! Global parameters come from random stream 0 of the seed; record `n`
//! uses its own stream, so a dataset's rows do not depend on how many
//! rows were generated.

use super::bow::Corpus;
use super::dense::{record_rng, DenseDataset};
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::models::Document;
use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

fn globals_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check_sizes(k: usize, d: usize) -> Result<()> {
    if k == 0 || d == 0 {
        return Err(Error::usage("generators need at least one component and one dimension"));
    }
    Ok(())
}

/// A draw from `Dirichlet(alpha)` through normalized Gammas.
pub fn sample_dirichlet<R: Rng>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> =
        alpha.iter().map(|&a| Gamma::new(a, 1.0).expect("positive shape").sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter_mut().for_each(|v| *v /= total);
    } else {
        // every Gamma underflowed: put all mass on one coordinate
        let i = rng.random_range(0..draws.len());
        draws.iter_mut().enumerate().for_each(|(j, v)| *v = f64::from(u8::from(i == j)));
    }
    draws
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernoulliTruth {
    pub weights: Vec<f64>,
    /// `K × D` pixel probabilities.
    pub probs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl BernoulliTruth {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.probs)
            .map(|(w, p)| {
                w.ln()
                    + p.iter()
                        .zip(x)
                        .map(|(p, x)| if *x > 0.5 { p.ln() } else { (1.0 - p).ln() })
                        .sum::<f64>()
            })
            .collect();
        log_sum_exp(&terms)
    }
}

pub(crate) fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn sample_bernoulli_rows(truth: &mut BernoulliTruth, n: usize, seed: u64) -> Result<DenseDataset> {
    let k = truth.weights.len();
    let d = truth.probs[0].len();
    let mut values = Vec::with_capacity(n * d);
    truth.labels.clear();
    for i in 0..n {
        let mut rng = record_rng(seed, i as u64);
        let z = WeightedIndex::new(&truth.weights).expect("weights").sample(&mut rng);
        debug_assert!(z < k);
        truth.labels.push(z);
        values.extend(truth.probs[z].iter().map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 }));
    }
    DenseDataset::new(n, d, values, true)
}

/// Equal-weight mixture of `K` random binary templates. Each pixel matches
/// its template with probability `1 − exp(−separation)/2`, so
/// `separation = ∞` reproduces the templates exactly.
pub fn gen_bernoulli_mixture(
    k: usize,
    d: usize,
    n: usize,
    separation: f64,
    seed: u64,
) -> Result<(DenseDataset, BernoulliTruth)> {
    check_sizes(k, d)?;
    if !(separation >= 0.0) {
        return Err(Error::usage("separation must be non-negative"));
    }
    let q = 1.0 - 0.5 * (-separation).exp();
    let mut rng = globals_rng(seed);
    let probs =
        (0..k).map(|_| (0..d).map(|_| if rng.random::<bool>() { q } else { 1.0 - q }).collect()).collect();
    let mut truth = BernoulliTruth { weights: vec![1.0 / k as f64; k], probs, labels: Vec::new() };
    let data = sample_bernoulli_rows(&mut truth, n, seed)?;
    Ok((data, truth))
}

/// Binarized samples of `K` smooth grayscale prototypes on a `side × side`
/// grid. Each prototype is a few thick random strokes, giving images that
/// resemble handwritten digits more than independent pixel templates do.
/// Mixture weights are drawn from `Dirichlet(5)`.
pub fn gen_digit_like(k: usize, side: usize, n: usize, seed: u64) -> Result<(DenseDataset, BernoulliTruth)> {
    check_sizes(k, side)?;
    let mut rng = globals_rng(seed);
    let s = side as f64;
    let mut probs = Vec::with_capacity(k);
    for _ in 0..k {
        let strokes = rng.random_range(2..=4);
        let mut ink = vec![0.0f64; side * side];
        for _ in 0..strokes {
            let (x0, y0) = (rng.random_range(0.15..0.85) * s, rng.random_range(0.15..0.85) * s);
            let (x1, y1) = (rng.random_range(0.15..0.85) * s, rng.random_range(0.15..0.85) * s);
            let width = rng.random_range(0.06..0.12) * s;
            for r in 0..side {
                for c in 0..side {
                    let (px, py) = (c as f64 + 0.5, r as f64 + 0.5);
                    let dist = segment_distance(px, py, x0, y0, x1, y1);
                    let v = (-0.5 * (dist / width).powi(2)).exp();
                    ink[r * side + c] = ink[r * side + c].max(v);
                }
            }
        }
        probs.push(ink.iter().map(|v| 0.02 + 0.96 * v).collect());
    }
    let weights = sample_dirichlet(&mut rng, &vec![5.0; k]);
    let mut truth = BernoulliTruth { weights, probs, labels: Vec::new() };
    let data = sample_bernoulli_rows(&mut truth, n, seed)?;
    Ok((data, truth))
}

fn segment_distance(px: f64, py: f64, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
    let (dx, dy) = (x1 - x0, y1 - y0);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((px - x0) * dx + (py - y0) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    ((px - x0 - t * dx).powi(2) + (py - y0 - t * dy).powi(2)).sqrt()
}

#[derive(Debug, Clone)]
pub struct GmmTruth {
    pub weights: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    pub covs: Vec<Matrix>,
    pub labels: Vec<usize>,
    chols: Vec<Cholesky>,
}

impl GmmTruth {
    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = x.len() as f64;
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.means)
            .zip(&self.chols)
            .map(|((w, m), l)| {
                let diff: Vec<f64> = x.iter().zip(m).map(|(a, b)| a - b).collect();
                w.ln() - 0.5 * d * (2.0 * PI).ln() - 0.5 * l.log_det() - 0.5 * l.quad_inv(&diff)
            })
            .collect();
        log_sum_exp(&terms)
    }
}

/// Equal-weight Gaussian mixture. Means are `N(0, separation² I)`;
/// covariances are `LLᵀ` for a random lower-triangular `L` with
/// log-normal diagonal.
pub fn gen_gmm(k: usize, d: usize, n: usize, separation: f64, seed: u64) -> Result<(DenseDataset, GmmTruth)> {
    check_sizes(k, d)?;
    if !(separation >= 0.0) {
        return Err(Error::usage("separation must be non-negative"));
    }
    let mut rng = globals_rng(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let means: Vec<Vec<f64>> = (0..k).map(|_| (0..d).map(|_| separation * normal()).collect()).collect();
    let mut covs = Vec::with_capacity(k);
    for _ in 0..k {
        let mut l = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..i {
                l[i * d + j] = 0.3 * normal();
            }
            l[i * d + i] = (0.25 * normal()).exp();
        }
        let mut cov = Matrix::zeros(d);
        for i in 0..d {
            for j in 0..d {
                cov[(i, j)] = (0..d).map(|t| l[i * d + t] * l[j * d + t]).sum();
            }
        }
        covs.push(cov);
    }
    let chols = covs.iter().map(Matrix::cholesky).collect::<Result<Vec<_>>>()?;
    let weights = vec![1.0 / k as f64; k];
    let mut labels = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        let mut rng = record_rng(seed, i as u64);
        let z = rng.random_range(0..k);
        labels.push(z);
        let noise: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let shift = chols[z].lower_mul(&noise);
        values.extend(means[z].iter().zip(&shift).map(|(m, s)| m + s));
    }
    let data = DenseDataset::new(n, d, values, false)?;
    Ok((data, GmmTruth { weights, means, covs, labels, chols }))
}

/// Number of tokens per generated document.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum DocLength {
    Fixed {
        words: usize,
    },
    /// Poisson with the given mean, conditioned on at least one word.
    Poisson {
        mean: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaTruth {
    /// `K × V` topic-word distributions.
    pub topics: Vec<Vec<f64>>,
    /// `N × K` document-topic proportions.
    pub thetas: Vec<Vec<f64>>,
}

/// Forward samples of LDA. Besides the bag-of-words corpus, returns every
/// document's tokens in generation order (used to simulate word reveals).
pub fn gen_lda(
    k: usize,
    v: usize,
    n: usize,
    length: DocLength,
    alpha: f64,
    eta: f64,
    seed: u64,
) -> Result<(Corpus, LdaTruth, Vec<Vec<usize>>)> {
    check_sizes(k, v)?;
    if !(alpha > 0.0 && eta > 0.0) {
        return Err(Error::usage("alpha and eta must be positive"));
    }
    let poisson = match length {
        DocLength::Poisson { mean } if !(mean > 0.0) => {
            return Err(Error::usage("mean document length must be positive"))
        }
        DocLength::Poisson { mean } => Some(Poisson::new(mean).expect("positive mean")),
        DocLength::Fixed { .. } => None,
    };
    let mut rng = globals_rng(seed);
    let topics: Vec<Vec<f64>> = (0..k).map(|_| sample_dirichlet(&mut rng, &vec![eta; v])).collect();
    let pickers: Vec<WeightedIndex<f64>> =
        topics.iter().map(|t| WeightedIndex::new(t).expect("topic weights")).collect();
    let mut docs = Vec::with_capacity(n);
    let mut tokens_out = Vec::with_capacity(n);
    let mut thetas = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = record_rng(seed, i as u64);
        let theta = sample_dirichlet(&mut rng, &vec![alpha; k]);
        let len = match (length, &poisson) {
            (DocLength::Fixed { words }, _) => words,
            (_, Some(p)) => loop {
                let draw: f64 = p.sample(&mut rng);
                if draw >= 1.0 {
                    break draw as usize;
                }
            },
            _ => unreachable!("poisson law is built above"),
        };
        let z_picker = WeightedIndex::new(&theta).expect("theta weights");
        let tokens: Vec<usize> =
            (0..len).map(|_| pickers[z_picker.sample(&mut rng)].sample(&mut rng)).collect();
        docs.push(Document::from_tokens(tokens.iter().copied()));
        labels.push(
            theta
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (j, &t)| if t > best.1 { (j, t) } else { best })
                .0,
        );
        tokens_out.push(tokens);
        thetas.push(theta);
    }
    let mut corpus = Corpus::new(docs, v)?;
    corpus.labels = Some(labels);
    Ok((corpus, LdaTruth { topics, thetas }, tokens_out))
}

/// Splits every document's tokens into an observed part and a held-out
/// part holding `heldout_fraction` of the tokens (at least one token is
/// kept on each side when the document has two or more).
pub fn split_tokens(
    tokens: &[Vec<usize>],
    heldout_fraction: f64,
    seed: u64,
) -> Result<(Vec<Document>, Vec<Document>)> {
    if !(0.0..1.0).contains(&heldout_fraction) {
        return Err(Error::usage("held-out fraction must lie in [0, 1)"));
    }
    let mut observed = Vec::with_capacity(tokens.len());
    let mut heldout = Vec::with_capacity(tokens.len());
    for (i, doc) in tokens.iter().enumerate() {
        let mut rng = record_rng(seed, i as u64);
        let mut shuffled = doc.clone();
        shuffled.shuffle(&mut rng);
        let mut h = (heldout_fraction * doc.len() as f64).round() as usize;
        if doc.len() >= 2 {
            h = h.clamp(1, doc.len() - 1);
        } else {
            h = 0;
        }
        let (held, seen) = shuffled.split_at(h);
        observed.push(Document::from_tokens(seen.iter().copied()));
        heldout.push(Document::from_tokens(held.iter().copied()));
    }
    Ok((observed, heldout))
}

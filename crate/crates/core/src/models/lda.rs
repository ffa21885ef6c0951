//! Latent Dirichlet allocation with Dirichlet topics.
//!
//! Topics are `K` Dirichlets over a `V`-word vocabulary with natural
//! parameters `λ_k`; each document carries a local topic Dirichlet `γ_n` and
//! per-word topic beliefs. Words are stored as `(id, count)` pairs and the
//! beliefs are kept per unique word.

use super::{softmax_in_place, ConjugateModel, GlobalState, Prior, Stats};
use crate::error::{Error, Result};
use crate::expfam::{dirichlet_expected_log, FamilySpec, NaturalParams};
use crate::special::{lgamma, psi};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A bag of words: unique ids in increasing order with their counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Document {
    ids: Vec<usize>,
    counts: Vec<f64>,
}

impl Document {
    /// Merges repeated ids. Counts must be at least one.
    pub fn from_counts<I: IntoIterator<Item = (usize, u32)>>(pairs: I) -> Result<Self> {
        let mut merged = BTreeMap::new();
        for (id, count) in pairs {
            if count == 0 {
                return Err(Error::Validation(format!("word {id} has count 0")));
            }
            *merged.entry(id).or_insert(0u64) += u64::from(count);
        }
        Ok(Self {
            ids: merged.keys().copied().collect(),
            counts: merged.values().map(|&c| c as f64).collect(),
        })
    }

    /// One entry per token.
    pub fn from_tokens<I: IntoIterator<Item = usize>>(tokens: I) -> Self {
        Self::from_counts(tokens.into_iter().map(|w| (w, 1))).expect("unit counts")
    }

    /// Adds `count` occurrences of `word`.
    pub fn add_tokens(&mut self, word: usize, count: u32) {
        if count == 0 {
            return;
        }
        match self.ids.binary_search(&word) {
            Ok(i) => self.counts[i] += f64::from(count),
            Err(i) => {
                self.ids.insert(i, word);
                self.counts.insert(i, f64::from(count));
            }
        }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn unique_words(&self) -> usize {
        self.ids.len()
    }

    /// Total number of tokens.
    pub fn len(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.ids.iter().copied().zip(self.counts.iter().copied())
    }
}

/// Local beliefs of one document: the topic Dirichlet `γ` and, for every
/// unique word, a distribution over topics (row-major, `unique × K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocBeliefs {
    pub gamma: Vec<f64>,
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LdaConfig {
    pub components: usize,
    pub vocab: usize,
    /// Symmetric topic-word concentration.
    pub eta: f64,
    /// Document-topic concentration, one entry per topic.
    pub alpha: Vec<f64>,
    /// Optional early stop of the local loop once `Σ|Δγ| ≤ tol · Σγ`.
    #[serde(default)]
    pub gamma_tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Lda {
    config: LdaConfig,
}

/// `E[log β_kw]` laid out word-major, and the document prior `α`.
pub struct LdaTables {
    elog_beta: Vec<f64>,
    alpha: Vec<f64>,
    k: usize,
}

impl LdaTables {
    fn word(&self, w: usize) -> &[f64] {
        &self.elog_beta[w * self.k..(w + 1) * self.k]
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
}

impl Lda {
    pub fn new(config: LdaConfig) -> Result<Self> {
        if config.components == 0 || config.vocab == 0 {
            return Err(Error::usage("LDA needs at least one topic and one word"));
        }
        if config.alpha.len() != config.components {
            return Err(Error::usage(format!(
                "alpha has {} entries for {} topics",
                config.alpha.len(),
                config.components
            )));
        }
        if !(config.eta > 0.0) || config.alpha.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::domain("LDA concentrations must be positive"));
        }
        if let Some(tol) = config.gamma_tol {
            if !(tol >= 0.0) {
                return Err(Error::usage("gamma_tol must be non-negative"));
            }
        }
        Ok(Self { config })
    }

    /// Symmetric `α` for every topic.
    pub fn symmetric(components: usize, vocab: usize, alpha: f64, eta: f64) -> Result<Self> {
        Self::new(LdaConfig { components, vocab, eta, alpha: vec![alpha; components], gamma_tol: None })
    }

    pub fn config(&self) -> &LdaConfig {
        &self.config
    }

    pub fn vocab(&self) -> usize {
        self.config.vocab
    }

    fn phi_rows(&self, exp: &LdaTables, doc: &Document, gamma: &[f64], phi: &mut [f64]) {
        let k = self.config.components;
        let elog_theta = dirichlet_expected_log(gamma);
        for (row, &w) in phi.chunks_exact_mut(k).zip(&doc.ids) {
            for ((p, t), b) in row.iter_mut().zip(&elog_theta).zip(exp.word(w)) {
                *p = t + b;
            }
            softmax_in_place(row);
        }
    }

    fn gamma_from_phi(&self, exp: &LdaTables, doc: &Document, phi: &[f64]) -> Vec<f64> {
        let k = self.config.components;
        let mut gamma = exp.alpha.clone();
        for (row, c) in phi.chunks_exact(k).zip(&doc.counts) {
            for (g, p) in gamma.iter_mut().zip(row) {
                *g += c * p;
            }
        }
        gamma
    }
}

fn dirichlet_kl(gamma: &[f64], alpha: &[f64], elog_theta: &[f64]) -> f64 {
    let log_b = |v: &[f64]| v.iter().map(|&x| lgamma(x)).sum::<f64>() - lgamma(v.iter().sum());
    let linear: f64 = gamma.iter().zip(alpha).zip(elog_theta).map(|((g, a), e)| (g - a) * e).sum();
    linear - log_b(gamma) + log_b(alpha)
}

impl ConjugateModel for Lda {
    type Datum = Document;
    type Beliefs = DocBeliefs;
    type Expectations = LdaTables;

    fn num_components(&self) -> usize {
        self.config.components
    }

    fn component_family(&self) -> FamilySpec {
        FamilySpec::Dirichlet { dim: self.config.vocab }
    }

    fn has_global_weights(&self) -> bool {
        false
    }

    fn prior(&self) -> Prior {
        Prior {
            component: NaturalParams::from_raw(
                self.component_family(),
                vec![self.config.eta; self.config.vocab],
            )
            .expect("topic prior shape"),
            weights: NaturalParams::from_raw(
                FamilySpec::Dirichlet { dim: self.config.components },
                self.config.alpha.clone(),
            )
            .expect("document prior shape"),
        }
    }

    fn check_datum(&self, doc: &Document) -> Result<()> {
        match doc.ids.last() {
            Some(&w) if w >= self.config.vocab => {
                Err(Error::usage(format!("word id {w} outside vocabulary of size {}", self.config.vocab)))
            }
            _ => Ok(()),
        }
    }

    fn expectations(&self, state: &GlobalState, prior: &Prior) -> Result<LdaTables> {
        self.check_state(state)?;
        if prior.weights.values().len() != self.config.components {
            return Err(Error::usage("document prior does not match the topic count"));
        }
        prior.weights.validate()?;
        let (k, v) = (self.config.components, self.config.vocab);
        let mut elog_beta = vec![0.0; k * v];
        for (topic, lambda) in state.components.iter().enumerate() {
            lambda.validate()?;
            let total = psi(lambda.values().iter().sum());
            for (w, &l) in lambda.values().iter().enumerate() {
                elog_beta[w * k + topic] = psi(l) - total;
            }
        }
        Ok(LdaTables { elog_beta, alpha: prior.weights.values().to_vec(), k })
    }

    fn uniform_beliefs(&self, doc: &Document) -> DocBeliefs {
        let k = self.config.components;
        let share = doc.len() / k as f64;
        DocBeliefs {
            gamma: self.config.alpha.iter().map(|a| a + share).collect(),
            phi: vec![1.0 / k as f64; doc.unique_words() * k],
        }
    }

    fn local_update(&self, exp: &LdaTables, doc: &Document, init: &DocBeliefs, iters: usize) -> DocBeliefs {
        let k = self.config.components;
        let phi = if init.phi.len() == doc.unique_words() * k {
            init.phi.clone()
        } else {
            vec![1.0 / k as f64; doc.unique_words() * k]
        };
        let gamma = self.gamma_from_phi(exp, doc, &phi);
        let mut beliefs = DocBeliefs { gamma, phi };
        for _ in 0..iters {
            self.phi_rows(exp, doc, &beliefs.gamma, &mut beliefs.phi);
            let gamma = self.gamma_from_phi(exp, doc, &beliefs.phi);
            let change = gamma.iter().zip(&beliefs.gamma).map(|(a, b)| (a - b).abs()).sum::<f64>();
            let scale = gamma.iter().sum::<f64>();
            beliefs.gamma = gamma;
            if let Some(tol) = self.config.gamma_tol {
                if change <= tol * scale {
                    break;
                }
            }
        }
        beliefs
    }

    fn local_elbo(&self, exp: &LdaTables, doc: &Document, b: &DocBeliefs) -> f64 {
        let k = self.config.components;
        let elog_theta = dirichlet_expected_log(&b.gamma);
        let mut total = -dirichlet_kl(&b.gamma, &exp.alpha, &elog_theta);
        for ((row, &w), c) in b.phi.chunks_exact(k).zip(&doc.ids).zip(&doc.counts) {
            let word: f64 = row
                .iter()
                .zip(&elog_theta)
                .zip(exp.word(w))
                .filter(|((p, _), _)| **p > 0.0)
                .map(|((p, t), l)| p * (t + l - p.ln()))
                .sum();
            total += c * word;
        }
        total
    }

    fn accumulate(&self, doc: &Document, b: &DocBeliefs, stats: &mut Stats) {
        let k = self.config.components;
        for ((row, &w), c) in b.phi.chunks_exact(k).zip(&doc.ids).zip(&doc.counts) {
            for (topic, p) in row.iter().enumerate() {
                stats.components[topic][w] += c * p;
            }
        }
    }

    fn component_mass(&self, b: &DocBeliefs) -> Vec<f64> {
        let k = self.config.components;
        let mut mass = vec![0.0; k];
        let mut rows = 0;
        for row in b.phi.chunks_exact(k) {
            for (m, p) in mass.iter_mut().zip(row) {
                *m += p;
            }
            rows += 1;
        }
        if rows == 0 {
            return vec![1.0 / k as f64; k];
        }
        mass.iter_mut().for_each(|m| *m /= rows as f64);
        mass
    }

    fn local_dirichlet<'b>(&self, b: &'b DocBeliefs) -> Option<&'b [f64]> {
        Some(&b.gamma)
    }

    /// Topic parameters drawn from Gamma(shape 100, scale 0.01).
    fn init_state<R: Rng>(&self, _data: &[Document], rng: &mut R) -> Result<GlobalState> {
        let gamma = Gamma::new(100.0, 0.01).expect("valid gamma");
        let components = (0..self.config.components)
            .map(|_| {
                let values = (0..self.config.vocab).map(|_| gamma.sample(rng)).collect();
                NaturalParams::new(self.component_family(), values)
            })
            .collect::<Result<_>>()?;
        Ok(GlobalState { components, weights: None })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{expected_stats, local_step, Batch};

    fn state(k: usize, v: usize, fill: impl Fn(usize, usize) -> f64) -> GlobalState {
        GlobalState {
            components: (0..k)
                .map(|t| NaturalParams::dirichlet((0..v).map(|w| fill(t, w)).collect()).unwrap())
                .collect(),
            weights: None,
        }
    }

    #[test]
    fn document_merges_repeats() {
        let d = Document::from_tokens([2, 0, 2, 2]);
        assert_eq!(d.ids(), &[0, 2]);
        assert_eq!(d.counts(), &[1.0, 3.0]);
        assert_eq!(d.len(), 4.0);
        assert!(Document::from_counts([(1, 0)]).is_err());
    }

    #[test]
    fn gamma_satisfies_coordinate_condition() {
        let lda = Lda::symmetric(3, 5, 0.2, 0.5).unwrap();
        let s = state(3, 5, |t, w| 0.5 + (t * 5 + w) as f64 * 0.3);
        let doc = Document::from_counts([(0, 2), (3, 1), (4, 5)]).unwrap();
        let b = local_step(&lda, &s, &lda.prior(), std::slice::from_ref(&doc), None, 50).unwrap();
        let exp = lda.expectations(&s, &lda.prior()).unwrap();
        let want = lda.gamma_from_phi(&exp, &doc, &b[0].phi);
        for (g, w) in b[0].gamma.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn three_copies_split_evenly() {
        let lda = Lda::symmetric(2, 3, 0.1, 0.3).unwrap();
        let doc = Document::from_tokens([1, 1, 1]);
        let batch = Batch::new(vec![doc.clone()], 4.0).unwrap();
        let beliefs = vec![lda.uniform_beliefs(&doc)];
        let eta_hat = expected_stats(&lda, &lda.prior(), &batch, &beliefs).unwrap();
        for topic in &eta_hat.components {
            assert!((topic.values()[1] - (0.3 + 4.0 * 1.5)).abs() < 1e-12);
            assert_eq!(topic.values()[0], 0.3);
        }
    }

    #[test]
    fn identical_topics_give_uniform_beliefs() {
        let lda = Lda::symmetric(4, 6, 0.3, 0.1).unwrap();
        let s = state(4, 6, |_, w| 1.0 + w as f64);
        let doc = Document::from_tokens([0, 5, 5, 2]);
        let b = local_step(&lda, &s, &lda.prior(), &[doc], None, 10).unwrap();
        assert!(b[0].phi.iter().all(|p| (p - 0.25).abs() < 1e-12));
    }

    #[test]
    fn out_of_vocabulary_word_is_rejected() {
        let lda = Lda::symmetric(2, 3, 0.1, 0.1).unwrap();
        let s = state(2, 3, |_, _| 1.0);
        let err = local_step(&lda, &s, &lda.prior(), &[Document::from_tokens([3])], None, 1);
        assert!(matches!(err, Err(Error::Usage(_))));
    }

    #[test]
    fn empty_document_has_prior_beliefs() {
        let lda = Lda::symmetric(2, 3, 0.4, 0.1).unwrap();
        let s = state(2, 3, |_, _| 1.0);
        let exp = lda.expectations(&s, &lda.prior()).unwrap();
        let doc = Document::default();
        let b = lda.local_update(&exp, &doc, &lda.uniform_beliefs(&doc), 5);
        assert_eq!(b.gamma, vec![0.4, 0.4]);
        assert_eq!(lda.local_elbo(&exp, &doc, &b), 0.0);
    }
}

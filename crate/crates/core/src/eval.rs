//! Held-out evaluation: plug-in predictive log-likelihoods, ranking
//! metrics and component usage.

use crate::error::{Error, Result};
use crate::expfam::{natural_to_niw, FamilySpec, NaturalParams};
use crate::linalg::Matrix;
use crate::models::{local_step, ConjugateModel, Document, GlobalState, Lda, Prior};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::f64::consts::PI;
use std::io::Write;

/// A named metric with optional per-record values and a reproducibility
/// header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: String,
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_record: Option<Vec<f64>>,
    #[serde(default)]
    pub config: serde_json::Value,
    pub data_hash: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl EvalReport {
    /// Report whose value is the mean of `per_record`.
    pub fn from_records(metric: &str, per_record: Vec<f64>, data_hash: String) -> Self {
        let value = mean(&per_record);
        Self {
            metric: metric.into(),
            value,
            per_record: Some(per_record),
            config: serde_json::Value::Null,
            data_hash,
            notes: Vec::new(),
        }
    }

    pub fn write_json<W: Write>(&self, out: &mut W) -> Result<()> {
        serde_json::to_writer_pretty(&mut *out, self)?;
        out.write_all(b"\n")?;
        Ok(())
    }

    /// `index,value` rows of the per-record values.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "index,{}", self.metric)?;
        for (i, v) in self.per_record.iter().flatten().enumerate() {
            writeln!(out, "{i},{v}")?;
        }
        Ok(())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-record plug-in predictive log-likelihoods of a mixture.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureLoglik {
    pub mean: f64,
    pub per_record: Vec<f64>,
    /// Components whose covariance mean was undefined (`ν ≤ D + 1`) and
    /// fell back to `Ψ/ν`.
    pub covariance_fallbacks: usize,
}

enum PlugIn {
    Bernoulli(Vec<f64>),
    Gaussian { mean: Vec<f64>, chol: crate::linalg::Cholesky },
}

impl PlugIn {
    fn log_density(&self, x: &[f64]) -> f64 {
        match self {
            PlugIn::Bernoulli(p) => {
                p.iter().zip(x).map(|(p, x)| if *x > 0.5 { p.ln() } else { (1.0 - p).ln() }).sum()
            }
            PlugIn::Gaussian { mean, chol } => {
                let diff: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
                -0.5 * x.len() as f64 * (2.0 * PI).ln() - 0.5 * chol.log_det() - 0.5 * chol.quad_inv(&diff)
            }
        }
    }
}

fn plug_in(component: &NaturalParams, fallbacks: &mut usize) -> Result<PlugIn> {
    match component.family() {
        FamilySpec::BetaVector { .. } => Ok(PlugIn::Bernoulli(component.mean_parameters()?)),
        FamilySpec::Niw { dim } => {
            let p = natural_to_niw(component)?;
            let mut denom = p.nu - dim as f64 - 1.0;
            if denom <= 0.0 {
                *fallbacks += 1;
                denom = p.nu;
            }
            let mut cov: Matrix = p.psi.clone();
            cov.scale(1.0 / denom);
            Ok(PlugIn::Gaussian { mean: p.m, chol: cov.cholesky()? })
        }
        other => Err(Error::usage(format!("{other:?} components are not a mixture likelihood"))),
    }
}

/// `log Σ_k E[π_k] p(x | E[β_k])` averaged over `data`.
pub fn mixture_heldout_loglik(state: &GlobalState, data: &[Vec<f64>]) -> Result<MixtureLoglik> {
    state.validate()?;
    let weights = state
        .weights
        .as_ref()
        .ok_or_else(|| Error::usage("state has no mixture weights"))?
        .mean_parameters()?;
    let mut fallbacks = 0;
    let comps = state.components.iter().map(|c| plug_in(c, &mut fallbacks)).collect::<Result<Vec<_>>>()?;
    let dim = match state.components[0].family() {
        FamilySpec::BetaVector { dim } | FamilySpec::Niw { dim } => dim,
        _ => unreachable!("checked by plug_in"),
    };
    if let Some(x) = data.iter().find(|x| x.len() != dim) {
        return Err(Error::Validation(format!("record has dimension {}, model expects {dim}", x.len())));
    }
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let per_record: Vec<f64> = data
        .par_iter()
        .map(|x| {
            let terms: Vec<f64> = comps.iter().zip(&log_w).map(|(c, lw)| lw + c.log_density(x)).collect();
            log_sum_exp(&terms)
        })
        .collect();
    Ok(MixtureLoglik { mean: mean(&per_record), per_record, covariance_fallbacks: fallbacks })
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `E[β_k]` for every topic, `K × V`.
pub fn topic_means(state: &GlobalState) -> Result<Vec<Vec<f64>>> {
    state.components.iter().map(NaturalParams::mean_parameters).collect()
}

/// `E[θ]` for a document after a local step on its observed words; the
/// normalized `α` if nothing was observed.
pub fn document_proportions(
    model: &Lda,
    state: &GlobalState,
    prior: &Prior,
    history: &[Document],
    local_iters: usize,
) -> Result<Vec<Vec<f64>>> {
    let beliefs = local_step(model, state, prior, history, None, local_iters)?;
    Ok(beliefs
        .into_iter()
        .map(|b| {
            let total: f64 = b.gamma.iter().sum();
            b.gamma.iter().map(|g| g / total).collect()
        })
        .collect())
}

/// `Σ_k E[θ_k] E[β_k,w]` for every candidate `w`, given the history.
pub fn lda_predictive_scores(
    model: &Lda,
    state: &GlobalState,
    prior: &Prior,
    history: &Document,
    candidates: &[usize],
    local_iters: usize,
) -> Result<Vec<f64>> {
    if let Some(&w) = candidates.iter().find(|&&w| w >= model.vocab()) {
        return Err(Error::Validation(format!(
            "candidate word {w} outside vocabulary of size {}",
            model.vocab()
        )));
    }
    let theta = document_proportions(model, state, prior, std::slice::from_ref(history), local_iters)?
        .pop()
        .expect("one document");
    let beta = topic_means(state)?;
    Ok(candidates.iter().map(|&w| theta.iter().zip(&beta).map(|(t, b)| t * b[w]).sum()).collect())
}

/// Per-word plug-in predictive log-likelihood of held-out words given each
/// document's observed words. Per-record values are per held-out token.
pub fn lda_heldout_loglik(
    model: &Lda,
    state: &GlobalState,
    prior: &Prior,
    observed: &[Document],
    heldout: &[Document],
    local_iters: usize,
) -> Result<EvalReport> {
    if observed.len() != heldout.len() {
        return Err(Error::usage("observed and held-out document counts differ"));
    }
    for d in heldout {
        model.check_datum(d).map_err(|e| Error::Validation(e.to_string()))?;
    }
    let thetas = document_proportions(model, state, prior, observed, local_iters)?;
    let beta = topic_means(state)?;
    let per_doc: Vec<Vec<f64>> = heldout
        .par_iter()
        .zip(&thetas)
        .map(|(doc, theta)| {
            let mut out = Vec::new();
            for (w, c) in doc.pairs() {
                let p: f64 = theta.iter().zip(&beta).map(|(t, b)| t * b[w]).sum();
                out.extend(std::iter::repeat_n(p.ln(), c as usize));
            }
            out
        })
        .collect();
    let per_token: Vec<f64> = per_doc.into_iter().flatten().collect();
    Ok(EvalReport::from_records("lda_heldout_loglik_per_word", per_token, String::new()))
}

/// `(|L∩P| / min(|L|, |P|), |L∩P| / |L|)`, or `None` when `L` is empty.
pub fn precision_recall_at_m(predicted: &[usize], heldout: &[usize]) -> Result<Option<(f64, f64)>> {
    let p: HashSet<usize> = predicted.iter().copied().collect();
    if p.len() != predicted.len() {
        return Err(Error::usage("predicted list contains duplicates"));
    }
    let l: HashSet<usize> = heldout.iter().copied().collect();
    if l.is_empty() {
        return Ok(None);
    }
    if p.is_empty() {
        return Ok(Some((0.0, 0.0)));
    }
    let hits = l.intersection(&p).count() as f64;
    Ok(Some((hits / l.len().min(p.len()) as f64, hits / l.len() as f64)))
}

/// The `m` highest-scoring items not in `exclude`; ties go to the smaller id.
pub fn top_m(scores: &[f64], exclude: &[usize], m: usize) -> Vec<usize> {
    let excluded: HashSet<usize> = exclude.iter().copied().collect();
    let mut items: Vec<usize> = (0..scores.len()).filter(|i| !excluded.contains(i)).collect();
    items.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    items.truncate(m);
    items
}

/// One user's ranking problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTask {
    pub train: Vec<usize>,
    pub heldout: Vec<usize>,
    pub m: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingSummary {
    pub precision: f64,
    pub recall: f64,
    pub evaluated: usize,
    /// Tasks with an empty held-out set.
    pub skipped: usize,
}

/// Mean precision and recall at `M` with LDA predictive scores.
pub fn evaluate_ranking(
    model: &Lda,
    state: &GlobalState,
    prior: &Prior,
    tasks: &[RankingTask],
    local_iters: usize,
) -> Result<RankingSummary> {
    let all: Vec<usize> = (0..model.vocab()).collect();
    let results = tasks
        .par_iter()
        .map(|task| {
            if task.m == 0 {
                return Err(Error::usage("cutoff M must be at least 1"));
            }
            let history = Document::from_tokens(task.train.iter().copied());
            let scores = lda_predictive_scores(model, state, prior, &history, &all, local_iters)?;
            let predicted = top_m(&scores, &task.train, task.m);
            precision_recall_at_m(&predicted, &task.heldout)
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut p, mut r, mut evaluated, mut skipped) = (0.0, 0.0, 0, 0);
    for res in results {
        match res {
            Some((pi, ri)) => {
                p += pi;
                r += ri;
                evaluated += 1;
            }
            None => skipped += 1,
        }
    }
    let n = evaluated.max(1) as f64;
    Ok(RankingSummary { precision: p / n, recall: r / n, evaluated, skipped })
}

/// Number of components whose average responsibility over `sample`
/// exceeds `1/(10K)`.
pub fn effective_components<M: ConjugateModel>(
    model: &M,
    state: &GlobalState,
    prior: &Prior,
    sample: &[M::Datum],
    local_iters: usize,
) -> Result<usize> {
    let k = model.num_components();
    if sample.is_empty() {
        return Ok(0);
    }
    let beliefs = local_step(model, state, prior, sample, None, local_iters)?;
    let mut mass = vec![0.0; k];
    for b in &beliefs {
        for (m, v) in mass.iter_mut().zip(model.component_mass(b)) {
            *m += v;
        }
    }
    let threshold = 1.0 / (10.0 * k as f64);
    Ok(mass.iter().filter(|m| **m / sample.len() as f64 > threshold).count())
}

//! Accuracy, Likert consistency, Wasserstein distance between answer
//! distributions, counterfactual flip rate and Pearson correlation, plus
//! the aggregated evaluation report.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::archetype::{Histogram, QuestionEntropy};
use crate::benchmark::{CorpusIndex, CorpusSample, CounterfactualPair};
use crate::inference::PredictionRecord;
use crate::ingest::ScaleKind;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("no predictions to score")]
    Empty,
    #[error("prediction {0} does not resolve to a corpus sample")]
    Unresolved(String),
    #[error("question {0} is nominal; Likert consistency needs an ordinal scale")]
    Nominal(String),
    #[error("question {question} has {k} options; at least 2 are required")]
    ScaleTooSmall { question: String, k: usize },
    #[error("histograms have {left} and {right} bins")]
    BinMismatch { left: usize, right: usize },
    #[error("histogram has no mass")]
    EmptyHistogram,
    #[error("series lengths differ ({x} vs {y})")]
    LengthMismatch { x: usize, y: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("correlation undefined: a series has zero variance")]
    ZeroVariance,
    #[error("no prediction for pair member {0}")]
    MissingPairPrediction(String),
    #[error("prediction {0} appears more than once")]
    DuplicatePrediction(String),
}

fn resolve<'a>(corpus: &'a CorpusIndex, pred: &PredictionRecord) -> Result<&'a CorpusSample, MetricsError> {
    corpus
        .get(&pred.sample_id)
        .ok_or_else(|| MetricsError::Unresolved(pred.sample_id.clone()))
}

/// Exact-match rate. Unparsed predictions count as wrong.
pub fn accuracy(preds: &[PredictionRecord], corpus: &CorpusIndex) -> Result<f64, MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Empty);
    }
    let mut correct = 0usize;
    for p in preds {
        let truth = resolve(corpus, p)?;
        if p.parse.index() == Some(truth.truth_index) {
            correct += 1;
        }
    }
    Ok(correct as f64 / preds.len() as f64)
}

/// `1 - mean(|pred - truth| / (K - 1))` over parsed predictions, using
/// 0-based option indices. Every prediction must be on an ordinal question.
pub fn likert_consistency(preds: &[PredictionRecord], corpus: &CorpusIndex) -> Result<f64, MetricsError> {
    let mut tally = LikertTally::default();
    for p in preds {
        let truth = resolve(corpus, p)?;
        if truth.question.scale_kind != ScaleKind::Ordinal {
            return Err(MetricsError::Nominal(truth.question.id.clone()));
        }
        if truth.k < 2 {
            return Err(MetricsError::ScaleTooSmall {
                question: truth.question.id.clone(),
                k: truth.k,
            });
        }
        if let Some(i) = p.parse.index() {
            tally.add(truth.k, i, truth.truth_index);
        }
    }
    tally.value().ok_or(MetricsError::Empty)
}

/// Per-K sums of index distances. Summing integers first and dividing once
/// per K keeps the result independent of prediction order.
#[derive(Debug, Default, Clone)]
struct LikertTally {
    by_k: BTreeMap<usize, (u64, usize)>,
}

impl LikertTally {
    fn add(&mut self, k: usize, pred: usize, truth: usize) {
        let e = self.by_k.entry(k).or_default();
        e.0 += pred.abs_diff(truth) as u64;
        e.1 += 1;
    }

    fn count(&self) -> usize {
        self.by_k.values().map(|e| e.1).sum()
    }

    fn value(&self) -> Option<f64> {
        let n = self.count();
        if n == 0 {
            return None;
        }
        // sum of per-item agreement 1 - d/(K-1), kept integral per K so that
        // binary scales reproduce accuracy bit for bit
        let agreement: f64 = self
            .by_k
            .iter()
            .map(|(&k, &(sum, count))| (count as u64 * (k as u64 - 1) - sum) as f64 / (k - 1) as f64)
            .sum();
        Some(agreement / n as f64)
    }
}

/// Sum over bins of the absolute CDF difference between two normalized
/// histograms. Computed on integer cross-multiplied counts, so it is
/// symmetric and exact up to a single final division.
pub fn wasserstein(pred: &Histogram, real: &Histogram) -> Result<f64, MetricsError> {
    if pred.k() != real.k() {
        return Err(MetricsError::BinMismatch {
            left: pred.k(),
            right: real.k(),
        });
    }
    let (tp, tr) = (pred.total() as i128, real.total() as i128);
    if tp == 0 || tr == 0 {
        return Err(MetricsError::EmptyHistogram);
    }
    let (mut cp, mut cr, mut acc) = (0i128, 0i128, 0i128);
    for (a, b) in pred.counts.iter().zip(&real.counts) {
        cp += *a as i128;
        cr += *b as i128;
        acc += (cp * tr - cr * tp).abs();
    }
    Ok(acc as f64 / (tp * tr) as f64)
}

/// Sample Pearson correlation, two-pass.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch { x: x.len(), y: y.len() });
    }
    if x.len() < 2 {
        return Err(MetricsError::TooFewPoints {
            needed: 2,
            got: x.len(),
        });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

fn index_predictions(preds: &[PredictionRecord]) -> Result<HashMap<&str, &PredictionRecord>, MetricsError> {
    let mut map = HashMap::with_capacity(preds.len());
    for p in preds {
        if map.insert(p.sample_id.as_str(), p).is_some() {
            return Err(MetricsError::DuplicatePrediction(p.sample_id.clone()));
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FlipTally {
    pub pairs: usize,
    pub compared: usize,
    pub flipped: usize,
    pub rate: Option<f64>,
}

impl FlipTally {
    fn finish(mut self) -> Self {
        self.rate = (self.compared > 0).then(|| self.flipped as f64 / self.compared as f64);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub rate: f64,
    pub pairs: usize,
    pub compared: usize,
    pub flipped: usize,
    /// Pairs where either side failed to parse.
    pub excluded_unparsed: usize,
    pub per_concept: BTreeMap<String, FlipTally>,
}

/// Share of counterfactual pairs whose parsed labels differ.
pub fn flip_rate(pairs: &[CounterfactualPair], preds: &[PredictionRecord]) -> Result<FlipReport, MetricsError> {
    let index = index_predictions(preds)?;
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| MetricsError::MissingPairPrediction(id.to_string()))
    };
    let mut per_concept: BTreeMap<String, FlipTally> = BTreeMap::new();
    let (mut compared, mut flipped, mut excluded) = (0, 0, 0);
    for pair in pairs {
        let a = lookup(&pair.original.sample_id)?;
        let b = lookup(&pair.perturbed.sample_id)?;
        let tally = per_concept.entry(pair.original.question.concept.clone()).or_default();
        tally.pairs += 1;
        match (a.parse.index(), b.parse.index()) {
            (Some(x), Some(y)) => {
                compared += 1;
                tally.compared += 1;
                if x != y {
                    flipped += 1;
                    tally.flipped += 1;
                }
            }
            _ => excluded += 1,
        }
    }
    if compared == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(FlipReport {
        rate: flipped as f64 / compared as f64,
        pairs: pairs.len(),
        compared,
        flipped,
        excluded_unparsed: excluded,
        per_concept: per_concept.into_iter().map(|(k, t)| (k, t.finish())).collect(),
    })
}

/// Granularity of the groups whose Wasserstein distances are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Each country weighs equally; its distance is the mean over its
    /// (country, question) cells.
    Country,
    /// Histograms pooled across countries per question.
    Question,
    #[default]
    CountryQuestion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub n: usize,
    pub correct: usize,
    pub unparsed: usize,
    pub accuracy: f64,
    pub likert_n: usize,
    pub likert_consistency: Option<f64>,
    pub wasserstein: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub accuracy: f64,
    /// Over parsed predictions on ordinal questions.
    pub likert_n: usize,
    pub likert_consistency: Option<f64>,
    /// Unweighted mean over groups of `grouping` with at least one parsed
    /// prediction.
    pub wasserstein_mean: Option<f64>,
    pub grouping: Grouping,
    pub wasserstein_groups: usize,
    pub skipped_groups: usize,
    pub unparsed: usize,
    pub unparsed_fraction: f64,
    pub per_country: BTreeMap<String, GroupMetrics>,
    pub per_question: BTreeMap<String, GroupMetrics>,
    pub per_group: BTreeMap<String, GroupMetrics>,
    pub entropy_accuracy_r: Option<f64>,
}

#[derive(Debug, Default, Clone)]
struct Tally {
    n: usize,
    correct: usize,
    unparsed: usize,
    likert: LikertTally,
}

impl Tally {
    fn add(&mut self, truth: &CorpusSample, parsed: Option<usize>) {
        self.n += 1;
        match parsed {
            None => self.unparsed += 1,
            Some(i) => {
                if i == truth.truth_index {
                    self.correct += 1;
                }
                if truth.question.scale_kind == ScaleKind::Ordinal && truth.k >= 2 {
                    self.likert.add(truth.k, i, truth.truth_index);
                }
            }
        }
    }

    fn finish(&self, wasserstein: Option<f64>) -> GroupMetrics {
        GroupMetrics {
            n: self.n,
            correct: self.correct,
            unparsed: self.unparsed,
            accuracy: if self.n == 0 {
                0.0
            } else {
                self.correct as f64 / self.n as f64
            },
            likert_n: self.likert.count(),
            likert_consistency: self.likert.value(),
            wasserstein,
        }
    }
}

/// Predicted and true answer histograms over the parsed predictions of one
/// cell.
#[derive(Debug, Clone)]
struct CellHists {
    pred: Histogram,
    truth: Histogram,
}

impl CellHists {
    fn new(k: usize) -> Self {
        CellHists {
            pred: Histogram::new(k),
            truth: Histogram::new(k),
        }
    }

    fn add(&mut self, pred: usize, truth: usize) {
        self.pred.counts[pred] += 1;
        self.truth.counts[truth] += 1;
    }

    fn merge(&mut self, other: &CellHists) {
        for (a, b) in self.pred.counts.iter_mut().zip(&other.pred.counts) {
            *a += b;
        }
        for (a, b) in self.truth.counts.iter_mut().zip(&other.truth.counts) {
            *a += b;
        }
    }

    fn distance(&self) -> Option<f64> {
        wasserstein(&self.pred, &self.truth).ok()
    }
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn cell_key(country: &str, question: &str) -> String {
    format!("{country}:{question}")
}

/// Scores every prediction against the corpus. The result does not depend
/// on prediction order.
pub fn aggregate_report(
    preds: &[PredictionRecord],
    corpus: &CorpusIndex,
    grouping: Grouping,
) -> Result<EvalReport, MetricsError> {
    let mut total = Tally::default();
    let mut by_country: BTreeMap<String, Tally> = BTreeMap::new();
    let mut by_question: BTreeMap<String, Tally> = BTreeMap::new();
    let mut by_cell: BTreeMap<(String, String), Tally> = BTreeMap::new();
    let mut hists: BTreeMap<(String, String), CellHists> = BTreeMap::new();

    for p in preds {
        let truth = resolve(corpus, p)?;
        let country = truth.profile.country.clone();
        let qid = truth.question.id.clone();
        // out-of-range indices cannot come from parse_answer; treat as unparsed
        let parsed = p.parse.index().filter(|&i| i < truth.k);
        total.add(truth, parsed);
        by_country.entry(country.clone()).or_default().add(truth, parsed);
        by_question.entry(qid.clone()).or_default().add(truth, parsed);
        let key = (country, qid);
        by_cell.entry(key.clone()).or_default().add(truth, parsed);
        let cell = hists.entry(key).or_insert_with(|| CellHists::new(truth.k));
        if let Some(i) = parsed {
            if cell.pred.k() == truth.k {
                cell.add(i, truth.truth_index);
            }
        }
    }

    let cell_wd: BTreeMap<&(String, String), Option<f64>> = hists.iter().map(|(k, h)| (k, h.distance())).collect();
    let mean_cells = |pick: &dyn Fn(&(String, String)) -> bool| {
        mean(cell_wd.iter().filter(|(k, _)| pick(k)).filter_map(|(_, v)| *v))
    };

    let per_country: BTreeMap<String, GroupMetrics> = by_country
        .iter()
        .map(|(c, t)| (c.clone(), t.finish(mean_cells(&|k| &k.0 == c))))
        .collect();
    let per_question: BTreeMap<String, GroupMetrics> = by_question
        .iter()
        .map(|(q, t)| (q.clone(), t.finish(mean_cells(&|k| &k.1 == q))))
        .collect();

    let per_group: BTreeMap<String, GroupMetrics> = match grouping {
        Grouping::Country => per_country.clone(),
        Grouping::CountryQuestion => by_cell
            .iter()
            .map(|(k, t)| (cell_key(&k.0, &k.1), t.finish(cell_wd[k])))
            .collect(),
        Grouping::Question => {
            let mut pooled: BTreeMap<&str, CellHists> = BTreeMap::new();
            for ((_, q), h) in &hists {
                match pooled.get_mut(q.as_str()) {
                    Some(acc) if acc.pred.k() == h.pred.k() => acc.merge(h),
                    Some(_) => {}
                    None => {
                        pooled.insert(q.as_str(), h.clone());
                    }
                }
            }
            by_question
                .iter()
                .map(|(q, t)| (q.clone(), t.finish(pooled.get(q.as_str()).and_then(CellHists::distance))))
                .collect()
        }
    };

    let wasserstein_groups = per_group.values().filter(|g| g.wasserstein.is_some()).count();
    let overall = total.finish(None);
    Ok(EvalReport {
        n: overall.n,
        accuracy: overall.accuracy,
        likert_n: overall.likert_n,
        likert_consistency: overall.likert_consistency,
        wasserstein_mean: mean(per_group.values().filter_map(|g| g.wasserstein)),
        grouping,
        wasserstein_groups,
        skipped_groups: per_group.len() - wasserstein_groups,
        unparsed: overall.unparsed,
        unparsed_fraction: if overall.n == 0 {
            0.0
        } else {
            overall.unparsed as f64 / overall.n as f64
        },
        per_country,
        per_question,
        per_group,
        entropy_accuracy_r: None,
    })
}

/// Pearson correlation between each question's mean group entropy and its
/// accuracy, over questions present in both maps.
pub fn entropy_accuracy_correlation(
    per_question: &BTreeMap<String, GroupMetrics>,
    entropy: &BTreeMap<String, QuestionEntropy>,
) -> Result<f64, MetricsError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = per_question
        .iter()
        .filter_map(|(q, m)| entropy.get(q).map(|e| (e.mean_entropy, m.accuracy)))
        .unzip();
    pearson(&xs, &ys)
}

impl EvalReport {
    /// Fills `entropy_accuracy_r` when the correlation is defined.
    pub fn attach_entropy(&mut self, entropy: &BTreeMap<String, QuestionEntropy>) {
        self.entropy_accuracy_r = entropy_accuracy_correlation(&self.per_question, entropy).ok();
    }

    /// Flattens the per-country, per-question and per-group tables.
    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "table",
            "key",
            "n",
            "accuracy",
            "likert_n",
            "likert_consistency",
            "wasserstein",
            "unparsed",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for (table, rows) in [
            ("country", &self.per_country),
            ("question", &self.per_question),
            ("group", &self.per_group),
        ] {
            for (key, g) in rows {
                w.write_record([
                    table.to_string(),
                    key.clone(),
                    g.n.to_string(),
                    g.accuracy.to_string(),
                    g.likert_n.to_string(),
                    opt(g.likert_consistency),
                    opt(g.wasserstein),
                    g.unparsed.to_string(),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

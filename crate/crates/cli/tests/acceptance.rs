//! Acceptance checks, one line per criterion. Runs without the libtest
//! harness so the report is always printed.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use dvmap_core::archetype::{
    discretize_response, extract_consensus, shannon_entropy, Attribute, ConsensusRecord, DemographicProfile,
    FilterMode, Histogram,
};
use dvmap_core::attribution::{fit_forest, mdi_importance, Dataset, ForestConfig};
use dvmap_core::benchmark::{build_splits, make_counterfactual_pairs, CorpusIndex, CorpusSample, QuestionSnapshot, Split, SplitSpec};
use dvmap_core::grpo::{
    compute_reward, group_advantages, objective, policy_gradient, train_toy, RewardConfig, RewardMode, Rollout,
    RolloutGroup, TabularPolicy, TrainConfig,
};
use dvmap_core::inference::{run_eval, EndpointConfig, PredictionRecord, StubBackend, StubReply};
use dvmap_core::ingest::{generate_synthetic, parse_survey, Codebook, QuestionSpec, Respondent, SyntheticSpec};
use dvmap_core::metrics::{accuracy, aggregate_report, flip_rate, likert_consistency, pearson, wasserstein, Grouping};
use dvmap_core::prompt::{parse_answer, render_prompt, FormatErrorReason, ParseResult, PromptMode};
use dvmap_core::semdist::{
    cosine_distance, distance_profile, gain_distance_correlation, DistanceRecord, EmbeddingEntry, EmbeddingTable,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn codebook() -> Codebook {
    Codebook::default_wvs7()
}

fn profile(country: &str, income: &str, religion: &str, tag: &str) -> DemographicProfile {
    DemographicProfile::from_pairs(Attribute::ALL.map(|a| {
        let v = match a {
            Attribute::Country => country.to_string(),
            Attribute::IncomeBracket => income.to_string(),
            Attribute::Religion => religion.to_string(),
            Attribute::Gender => tag.to_string(),
            _ => "x".to_string(),
        };
        (a, v)
    }))
    .expect("all attributes given")
}

fn sample(id: &str, p: DemographicProfile, q: &QuestionSpec, truth: usize) -> CorpusSample {
    CorpusSample {
        sample_id: id.to_string(),
        profile: p,
        question: QuestionSnapshot::from(q),
        truth_label: q.option_labels[truth].clone(),
        truth_index: truth,
        k: q.k(),
        split: Split::CrossDemo,
    }
}

fn pred(sample_id: &str, q: &QuestionSpec, index: Option<usize>) -> PredictionRecord {
    let parse = match index {
        Some(i) => ParseResult::Ok {
            label: q.option_labels[i].clone(),
            index: i,
        },
        None => ParseResult::FormatError {
            reason: FormatErrorReason::NoTag,
        },
    };
    PredictionRecord {
        sample_id: sample_id.to_string(),
        raw_completion: String::new(),
        parse,
        latency_ms: 0,
        cached: false,
        retries: 0,
        failure: None,
    }
}

// 1 -----------------------------------------------------------------------

const BASE_DEMOGRAPHICS: [(&str, i64); 9] = [
    ("Q262", 40),
    ("Q272", 2),
    ("Q274", 2),
    ("Q275", 3),
    ("Q279", 1),
    ("Q284", 1),
    ("Q288", 9),
    ("Q273", 1),
    ("Q289", 0),
];

fn random_corpus(rng: &mut ChaCha8Rng, questions: &[&QuestionSpec]) -> Vec<Respondent> {
    let n = rng.gen_range(1..=1000);
    let noise = rng.gen_range(0.0..0.4);
    // few distinct profiles, so groups are large enough to disagree
    let mut planted: BTreeMap<(usize, i64, i64, usize), i64> = BTreeMap::new();
    (0..n)
        .map(|row| {
            let country = rng.gen_range(0..3);
            let gender = rng.gen_range(1..=2);
            let marital = rng.gen_range(1..=3);
            let mut answers: BTreeMap<String, Option<i64>> =
                BASE_DEMOGRAPHICS.iter().map(|(c, v)| (c.to_string(), Some(*v))).collect();
            answers.insert("Q260".into(), Some(gender));
            answers.insert("Q273".into(), Some(marital));
            if rng.gen_bool(0.02) {
                answers.insert("Q288".into(), None);
            }
            for (qi, q) in questions.iter().enumerate() {
                let mode = *planted
                    .entry((country, gender, marital, qi))
                    .or_insert_with(|| rng.gen_range(q.lo()..=q.hi()));
                let code = if rng.gen_bool(0.05) {
                    None
                } else if rng.gen_bool(noise) {
                    Some(rng.gen_range(q.lo()..=q.hi()))
                } else {
                    Some(mode)
                };
                answers.insert(q.id.clone(), code);
            }
            Respondent {
                row_index: row,
                country: ["CHN", "USA", "NGA"][country].to_string(),
                answers,
            }
        })
        .collect()
}

/// Pairwise comparison within each profile: a (profile, question) is kept
/// iff no two answers in the group differ after discretization.
fn brute_force_unanimous(
    respondents: &[Respondent],
    cb: &Codebook,
    questions: &[&QuestionSpec],
) -> BTreeSet<(String, String, String)> {
    let profiled: Vec<(DemographicProfile, &Respondent)> = respondents
        .iter()
        .filter_map(|r| dvmap_core::archetype::derive_profile(r, cb).ok().map(|p| (p, r)))
        .collect();
    let mut kept = BTreeSet::new();
    for q in questions {
        let label = |r: &Respondent| r.code(&q.id).and_then(|c| discretize_response(q, c).ok()).map(|a| a.label);
        for (i, (p, r)) in profiled.iter().enumerate() {
            let Some(mine) = label(r) else { continue };
            let unanimous = profiled
                .iter()
                .filter(|(p2, _)| p2 == p)
                .all(|(_, r2)| label(r2).is_none_or(|l| l == mine));
            let first = profiled[..i].iter().all(|(p2, r2)| p2 != p || label(r2).is_none());
            if unanimous && first {
                kept.insert((p.fingerprint(), q.id.clone(), mine.clone()));
            }
        }
    }
    kept
}

fn criterion_1() -> Check {
    let cb = codebook();
    let questions: Vec<&QuestionSpec> = ["Q46", "Q49", "Q8", "Q36"].iter().map(|id| cb.question(id).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut elapsed = Duration::ZERO;
    let (mut kept_total, mut rows_total) = (0, 0);
    for c in 0..50 {
        let corpus = random_corpus(&mut rng, &questions);
        rows_total += corpus.len();
        let start = Instant::now();
        let (records, _) = extract_consensus(&corpus, &cb, FilterMode::Strict).map_err(|e| e.to_string())?;
        elapsed += start.elapsed();
        let got: BTreeSet<(String, String, String)> = records
            .iter()
            .filter(|r| questions.iter().any(|q| q.id == r.question_id))
            .map(|r| (r.profile.fingerprint(), r.question_id.clone(), r.answer_label.clone()))
            .collect();
        let want = brute_force_unanimous(&corpus, &cb, &questions);
        ensure(got == want, format!("corpus {c}: {} kept vs {} by brute force", got.len(), want.len()))?;
        kept_total += got.len();
    }
    ensure(elapsed < Duration::from_secs(5), format!("extraction took {elapsed:?}"))?;
    Ok(format!("50 corpora, {rows_total} rows, {kept_total} unanimous groups, extraction {elapsed:.2?}"))
}

// 2 -----------------------------------------------------------------------

/// W1 between two equal-size samples on unit-spaced bins: mean absolute
/// difference of the sorted values.
fn sorted_matching_wd(mut a: Vec<usize>, mut b: Vec<usize>) -> f64 {
    a.sort();
    b.sort();
    a.iter().zip(&b).map(|(x, y)| x.abs_diff(*y) as f64).sum::<f64>() / a.len() as f64
}

fn criterion_2() -> Check {
    let cb = codebook();
    // (country, question, truth, predicted)
    let fixture: [(&str, &str, usize, usize); 12] = [
        ("USA", "Q46", 0, 0),
        ("USA", "Q46", 1, 3),
        ("USA", "Q46", 2, 1),
        ("USA", "Q49", 0, 2),
        ("USA", "Q49", 2, 2),
        ("USA", "Q49", 1, 1),
        ("DEU", "Q46", 3, 3),
        ("DEU", "Q46", 3, 0),
        ("DEU", "Q46", 0, 1),
        ("DEU", "Q36", 4, 2),
        ("DEU", "Q36", 0, 0),
        ("DEU", "Q36", 2, 4),
    ];
    let mut samples = Vec::new();
    let mut preds = Vec::new();
    for (i, (country, qid, t, p)) in fixture.iter().enumerate() {
        let q = cb.question(qid).unwrap();
        let id = format!("s{i}");
        samples.push(sample(&id, profile(country, "Low", "x", &i.to_string()), q, *t));
        preds.push(pred(&id, q, Some(*p)));
    }
    let corpus = CorpusIndex::new(&samples);

    let want_acc = fixture.iter().filter(|(_, _, t, p)| t == p).count() as f64 / 12.0;
    let want_lc = fixture
        .iter()
        .map(|(_, q, t, p)| 1.0 - t.abs_diff(*p) as f64 / (cb.question(q).unwrap().k() - 1) as f64)
        .sum::<f64>()
        / 12.0;
    let mut cells: BTreeMap<(&str, &str), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (c, q, t, p) in &fixture {
        let cell = cells.entry((c, q)).or_default();
        cell.0.push(*t);
        cell.1.push(*p);
    }
    let want_wd = cells.values().map(|(t, p)| sorted_matching_wd(t.clone(), p.clone())).sum::<f64>() / cells.len() as f64;

    let acc = accuracy(&preds, &corpus).map_err(|e| e.to_string())?;
    let lc = likert_consistency(&preds, &corpus).map_err(|e| e.to_string())?;
    let report = aggregate_report(&preds, &corpus, Grouping::CountryQuestion).map_err(|e| e.to_string())?;
    let wd = report.wasserstein_mean.ok_or("no WD")?;
    ensure((acc - want_acc).abs() < 1e-9, format!("acc {acc} vs {want_acc}"))?;
    ensure((lc - want_lc).abs() < 1e-9, format!("lc {lc} vs {want_lc}"))?;
    ensure((wd - want_wd).abs() < 1e-9, format!("wd {wd} vs {want_wd}"))?;
    ensure(report.accuracy == acc, "report accuracy disagrees")?;

    let shift = wasserstein(&Histogram::from_counts(vec![1, 1, 0]), &Histogram::from_counts(vec![0, 1, 1]))
        .map_err(|e| e.to_string())?;
    ensure(shift == 1.0, format!("WD((.5,.5,0),(0,.5,.5)) = {shift}"))?;
    Ok(format!("acc {acc:.4}, lc {lc:.4}, wd {wd:.4}; shifted pair WD = {shift}"))
}

// 3 -----------------------------------------------------------------------

fn criterion_3() -> Check {
    let mut worst: f64 = 0.0;
    for k in 2..=10usize {
        for per_bin in [1u64, 7, 1000] {
            let h = shannon_entropy(&Histogram::from_counts(vec![per_bin; k])).map_err(|e| e.to_string())?;
            let err = (h - (k as f64).ln()).abs();
            worst = worst.max(err);
            ensure(err < 1e-12, format!("K={k}: H={h}"))?;
        }
        for bin in 0..k {
            let mut counts = vec![0u64; k];
            counts[bin] = 13;
            let h = shannon_entropy(&Histogram::from_counts(counts)).map_err(|e| e.to_string())?;
            ensure(h == 0.0, format!("unanimous K={k} bin {bin}: H={h}"))?;
        }
    }
    Ok(format!("max |H - ln K| = {worst:.1e}; unanimous histograms exactly 0"))
}

// 4 -----------------------------------------------------------------------

const TEST_COUNTRIES: [&str; 8] = ["AUS", "IDN", "IRN", "MEX", "NGA", "PAK", "TUR", "VNM"];
const CROSS_VALUE_QUESTIONS: [&str; 7] = ["Q8", "Q9", "Q37", "Q61", "Q70", "Q113", "Q132"];

fn consensus_corpus(cb: &Codebook, seed: u64) -> Result<Vec<ConsensusRecord>, String> {
    let spec = SyntheticSpec {
        profiles_per_country: 12,
        noise: 0.2,
        ..SyntheticSpec::default()
    };
    let csv = generate_synthetic(&spec, cb, seed).map_err(|e| e.to_string())?;
    let (respondents, _) = parse_survey(csv.as_bytes(), cb).map_err(|e| e.to_string())?;
    Ok(extract_consensus(&respondents, cb, FilterMode::Strict).map_err(|e| e.to_string())?.0)
}

fn criterion_4() -> Check {
    let cb = codebook();
    let test_countries: BTreeSet<&str> = TEST_COUNTRIES.into();
    let cross_value: BTreeSet<&str> = CROSS_VALUE_QUESTIONS.into();
    let mut runs = 0;
    let mut demo_samples = 0;
    for corpus_seed in 0..5u64 {
        let records = consensus_corpus(&cb, corpus_seed)?;
        for s in 0..20u64 {
            let spec = SplitSpec {
                seed: corpus_seed * 1000 + s,
                ..SplitSpec::default()
            };
            let b = build_splits(&records, &cb, &spec).map_err(|e| e.to_string())?;
            let keys = |v: &[CorpusSample]| v.iter().map(|x| x.profile.fingerprint()).collect::<BTreeSet<_>>();
            let (train, demo) = (keys(&b.train), keys(&b.cross_demo));
            ensure(train.is_disjoint(&demo), format!("seed {}: shared profile keys", spec.seed))?;
            ensure(
                b.cross_country.iter().all(|x| test_countries.contains(x.profile.country.as_str())),
                format!("seed {}: cross_country holds a training country", spec.seed),
            )?;
            ensure(
                b.cross_value.iter().all(|x| cross_value.contains(x.question.id.as_str())),
                format!("seed {}: cross_value holds a training question", spec.seed),
            )?;
            ensure(
                !b.train.is_empty() && !b.cross_country.is_empty() && !b.cross_value.is_empty(),
                format!("seed {}: empty split", spec.seed),
            )?;
            demo_samples += b.cross_demo.len();
            runs += 1;
        }
    }
    ensure(demo_samples > 0, "cross_demo never populated")?;
    Ok(format!("{runs} seeded splits, 0 violations ({demo_samples} cross_demo samples total)"))
}

// 5 -----------------------------------------------------------------------

fn criterion_5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let g = rng.gen_range(2..=16);
        let rewards: Vec<f64> = (0..g).map(|_| rng.gen_range(-2.0..3.0)).collect();
        let s: f64 = group_advantages(&rewards).iter().sum();
        ensure(s.abs() < 1e-9, format!("advantages sum to {s}"))?;
    }
    let a = group_advantages(&[1.0, 0.0, 0.0, 0.0]);
    let want = [1.732, -0.577, -0.577, -0.577];
    ensure(
        a.iter().zip(want).all(|(x, y)| (x - y).abs() < 1e-3),
        format!("(1,0,0,0) -> {a:?}"),
    )?;

    let mut policy = TabularPolicy::new(vec![Attribute::Country], 1.0);
    let mut groups = Vec::new();
    for row in 0..100 {
        let k = rng.gen_range(2..=6);
        let key = format!("row{row}");
        policy.logits.insert(key.clone(), (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect());
        let g = 8;
        let rollouts: Vec<Rollout> = (0..g)
            .map(|_| {
                let index = rng.gen_range(0..k);
                Rollout {
                    index,
                    parse: ParseResult::Ok {
                        label: index.to_string(),
                        index,
                    },
                    reward: if rng.gen_bool(0.4) { 1.1 } else { 0.1 },
                }
            })
            .collect();
        let advantages = group_advantages(&rollouts.iter().map(|r| r.reward).collect::<Vec<_>>());
        groups.push(RolloutGroup {
            sample_id: key.clone(),
            key,
            k,
            rollouts,
            advantages,
        });
    }
    let mut worst: f64 = 0.0;
    for temperature in [1.0, 0.7] {
        policy.temperature = temperature;
        let grad = policy_gradient(&policy, &groups).map_err(|e| e.to_string())?;
        let h = 1e-5;
        for g in &groups {
            for j in 0..g.k {
                let mut plus = policy.clone();
                plus.logits.get_mut(&g.key).unwrap()[j] += h;
                let mut minus = policy.clone();
                minus.logits.get_mut(&g.key).unwrap()[j] -= h;
                let fd = (objective(&plus, &groups).unwrap() - objective(&minus, &groups).unwrap()) / (2.0 * h);
                let err = (fd - grad[&g.key][j]).abs();
                worst = worst.max(err);
                ensure(err < 1e-6, format!("{} logit {j}: analytic {} vs fd {fd}", g.key, grad[&g.key][j]))?;
            }
        }
    }
    Ok(format!("sums within 1e-9; (1,0,0,0) -> ({:.3}, {:.3}, ..); max |grad - fd| = {worst:.1e} over 100 rows", a[0], a[1]))
}

// 6 and 7 -----------------------------------------------------------------

fn planted_corpus(n: usize, noise: f64, seed: u64) -> Vec<CorpusSample> {
    let cb = codebook();
    let qs: Vec<&QuestionSpec> = ["Q1", "Q2", "Q46", "Q49", "Q36"].iter().map(|id| cb.question(id).unwrap()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let countries = ["USA", "DEU", "JPN", "BRA"];
    let incomes = ["Low", "Middle", "High"];
    let religions = ["a", "b", "c"];
    // truth is a fixed function of (country, income, religion, question)
    let mut table: BTreeMap<(usize, usize, usize, usize), usize> = BTreeMap::new();
    (0..n)
        .map(|i| {
            let (c, inc, r, qi) = (
                rng.gen_range(0..countries.len()),
                rng.gen_range(0..incomes.len()),
                rng.gen_range(0..religions.len()),
                rng.gen_range(0..qs.len()),
            );
            let q = qs[qi];
            let planted = *table.entry((c, inc, r, qi)).or_insert_with(|| rng.gen_range(0..q.k()));
            let truth = if rng.gen_bool(noise) {
                (planted + rng.gen_range(1..q.k())) % q.k()
            } else {
                planted
            };
            let mut s = sample(&format!("s{i}"), profile(countries[c], incomes[inc], religions[r], &i.to_string()), q, truth);
            s.split = Split::Train;
            s
        })
        .collect()
}

fn criterion_6() -> Check {
    let corpus = planted_corpus(800, 0.0, 6);
    let cfg = TrainConfig::default();
    ensure(cfg.group_size == 8, "default group size is not 8")?;
    let start = Instant::now();
    let out = train_toy(&corpus, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let hit = out.trace.iter().find(|t| t.argmax_acc >= 0.95).map(|t| t.step);
    ensure(hit.is_some_and(|s| s <= 200), format!("never reached 95%: final {:?}", out.trace.last()))?;
    ensure(elapsed < Duration::from_secs(60), format!("took {elapsed:?}"))?;

    let noisy = planted_corpus(800, 0.1, 66);
    let mut counts: BTreeMap<(String, usize), usize> = BTreeMap::new();
    for s in &noisy {
        *counts.entry((s.question.id.clone(), s.truth_index)).or_default() += 1;
    }
    // best constant answer per question
    let mut best: BTreeMap<String, usize> = BTreeMap::new();
    for ((q, _), c) in &counts {
        let b = best.entry(q.clone()).or_default();
        *b = (*b).max(*c);
    }
    let baseline = best.values().sum::<usize>() as f64 / noisy.len() as f64;
    let noisy_out = train_toy(&noisy, &cfg).map_err(|e| e.to_string())?;
    let acc = noisy_out.trace.last().unwrap().argmax_acc;
    ensure(acc >= baseline + 0.20, format!("noisy acc {acc:.3} vs majority baseline {baseline:.3}"))?;
    Ok(format!(
        "noiseless: 95% at step {}, {elapsed:.1?}; 10% noise: acc {acc:.3} vs majority baseline {baseline:.3}",
        hit.unwrap()
    ))
}

fn criterion_7() -> Check {
    let ok = |index: usize| ParseResult::Ok {
        label: String::new(),
        index,
    };
    let bad = ParseResult::FormatError {
        reason: FormatErrorReason::MultipleTags,
    };
    let binary = |beta| RewardConfig {
        mode: RewardMode::Binary,
        alpha: 1.0,
        beta,
    };
    let soft = |alpha, beta| RewardConfig {
        mode: RewardMode::LikertSoft,
        alpha,
        beta,
    };
    let ind = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
    let lk = |o: f64, t: f64, k: f64| 1.0 - (o - t).abs() / (k - 1.0);
    // (parse, truth, K, config, direct evaluation)
    let cases: Vec<(ParseResult, usize, usize, RewardConfig, f64)> = vec![
        (ok(2), 2, 4, binary(0.1), ind(2, 2) + 0.1 * 1.0),
        (ok(1), 2, 4, binary(0.1), ind(1, 2) + 0.1 * 1.0),
        (bad.clone(), 2, 4, binary(0.1), 0.0),
        (ok(0), 0, 2, binary(0.0), ind(0, 0) + 0.0 * 1.0),
        (ok(0), 3, 4, soft(1.0, 0.1), 1.0 * lk(0.0, 3.0, 4.0) + 0.1 * 1.0),
        (ok(1), 3, 5, soft(1.0, 0.1), 1.0 * lk(1.0, 3.0, 5.0) + 0.1 * 1.0),
        (ok(2), 2, 3, soft(0.5, 0.2), 0.5 * lk(2.0, 2.0, 3.0) + 0.2 * 1.0),
        (bad, 1, 4, soft(1.0, 0.1), 0.0),
    ];
    for (i, (p, t, k, cfg, want)) in cases.iter().enumerate() {
        let got = compute_reward(p, *t, *k, cfg);
        ensure(got == *want, format!("case {i}: {got} vs {want}"))?;
    }
    let corpus = planted_corpus(600, 0.0, 7);
    let mut finals = Vec::new();
    for mode in [RewardMode::Binary, RewardMode::LikertSoft] {
        let cfg = TrainConfig {
            reward: RewardConfig {
                mode,
                ..RewardConfig::default()
            },
            ..TrainConfig::default()
        };
        let out = train_toy(&corpus, &cfg).map_err(|e| e.to_string())?;
        let last = out.trace.last().unwrap();
        ensure(last.argmax_acc >= 0.95, format!("{mode:?} stalled at {:.3}", last.argmax_acc))?;
        ensure(last.mean_reward > out.trace[0].mean_reward, format!("{mode:?} reward did not rise"))?;
        finals.push(last.argmax_acc);
    }
    Ok(format!("8/8 reward cases exact; argmax acc binary {:.3}, soft {:.3}", finals[0], finals[1]))
}

// 8 -----------------------------------------------------------------------

fn criterion_8() -> Check {
    let cb = codebook();
    let q = cb.question("Q8").unwrap();
    let samples: Vec<CorpusSample> = (0..12)
        .map(|i| {
            let income = ["Low", "High", "Middle"][i % 3];
            sample(&format!("f{i}"), profile("USA", income, "x", &i.to_string()), q, i % 2)
        })
        .collect();
    let pairs = make_counterfactual_pairs(&samples, Attribute::IncomeBracket).map_err(|e| e.to_string())?;
    ensure(pairs.len() == 8, format!("{} pairs", pairs.len()))?;
    let members: Vec<&CorpusSample> = pairs.iter().flat_map(|p| [&p.original, &p.perturbed]).collect();
    let prompts: Vec<_> = members.iter().map(|s| render_prompt(s, PromptMode::StructuredCot)).collect();
    let corpus = CorpusIndex::new(members.iter().copied());
    let cfg = EndpointConfig::default();

    let blind = StubBackend::constant("<answer>Yes</answer>");
    let preds = run_eval(&prompts, &corpus, &cfg, &blind).map_err(|e| e.to_string())?;
    let r0 = flip_rate(&pairs, &preds).map_err(|e| e.to_string())?.rate;

    let keyed = StubBackend::constant("<answer>No</answer>")
        .with_rule("Your income level is Low", StubReply::Text("<answer>Yes</answer>".into()));
    let preds = run_eval(&prompts, &corpus, &cfg, &keyed).map_err(|e| e.to_string())?;
    let r1 = flip_rate(&pairs, &preds).map_err(|e| e.to_string())?.rate;

    let four = &pairs[..4];
    let mut mixed = Vec::new();
    for (i, p) in four.iter().enumerate() {
        mixed.push(pred(&p.original.sample_id, q, Some(0)));
        mixed.push(pred(&p.perturbed.sample_id, q, Some(if i % 2 == 0 { 1 } else { 0 })));
    }
    let r_half = flip_rate(four, &mixed).map_err(|e| e.to_string())?.rate;
    ensure(r0 == 0.0, format!("income-blind stub: {r0}"))?;
    ensure(r1 == 1.0, format!("income-keyed stub: {r1}"))?;
    ensure(r_half == 0.5, format!("2-of-4 fixture: {r_half}"))?;
    Ok(format!("blind {r0}, keyed {r1}, mixed {r_half}"))
}

// 9 -----------------------------------------------------------------------

fn criterion_9() -> Check {
    let names: Vec<String> = Attribute::ALL.iter().map(|a| a.name().to_string()).collect();
    let mut first = 0;
    let mut worst_sum: f64 = 0.0;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + seed);
        let det = (seed as usize * 7) % names.len();
        let cards: Vec<usize> = (0..names.len()).map(|_| rng.gen_range(3..=5)).collect();
        let labels = cards[det].min(3);
        let rows: Vec<(Vec<String>, usize)> = (0..600)
            .map(|_| {
                let vals: Vec<usize> = cards.iter().map(|c| rng.gen_range(0..*c)).collect();
                let mut y = vals[det] % labels;
                if rng.gen_bool(0.05) {
                    y = (y + rng.gen_range(1..labels)) % labels;
                }
                (vals.iter().map(|v| format!("v{v}")).collect(), y)
            })
            .collect();
        let data = Dataset::new(names.clone(), &rows, labels).map_err(|e| e.to_string())?;
        let forest = fit_forest(
            &data,
            &ForestConfig {
                seed,
                ..ForestConfig::default()
            },
        )
        .map_err(|e| e.to_string())?;
        let imp = mdi_importance(&forest);
        let sum: f64 = imp.values.iter().sum();
        worst_sum = worst_sum.max((sum - 1.0).abs());
        ensure((sum - 1.0).abs() <= 1e-6, format!("seed {seed}: importances sum to {sum}"))?;
        let top = imp
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap();
        if top == det {
            first += 1;
        }
    }
    ensure(first >= 19, format!("determinant first in {first}/20 seeds"))?;
    Ok(format!("determinant ranked first in {first}/20 seeds; max |sum - 1| = {worst_sum:.1e}"))
}

// 10 ----------------------------------------------------------------------

fn criterion_10() -> Check {
    let cd = |u: &[f64], v: &[f64]| cosine_distance(u, v).map_err(|e| e.to_string());
    ensure(cd(&[0.3, -1.2, 4.0], &[0.3, -1.2, 4.0])? == 0.0, "identity")?;
    ensure(cd(&[2.0, 0.0, 0.0], &[0.0, 0.0, 5.0])? == 1.0, "orthogonal")?;
    ensure(cd(&[1.5, -2.0], &[-1.5, 2.0])? == 2.0, "antipodal")?;

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for t in 0..1000 {
        let dim = rng.gen_range(2..=16);
        let n = rng.gen_range(3..=12);
        let entries: Vec<EmbeddingEntry> = (0..n)
            .map(|i| EmbeddingEntry {
                id: format!("q{i}"),
                vector: (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            })
            .collect();
        let table = EmbeddingTable::from_entries(entries).map_err(|e| e.to_string())?;
        let mut ids: Vec<String> = table.ids().map(String::from).collect();
        ids.shuffle(&mut rng);
        let cut = rng.gen_range(1..n);
        for test in &ids[..cut] {
            let r = distance_profile(test, &ids[cut..], &table).map_err(|e| e.to_string())?;
            ensure(r.d_min <= r.d_avg, format!("table {t}: d_min {} > d_avg {}", r.d_min, r.d_avg))?;
        }
    }

    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.gen_range(3..50);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let (a, b) = (rng.gen_range(0.1..10.0), rng.gen_range(-50.0..50.0));
        let up: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let down: Vec<f64> = x.iter().map(|v| -a * v + b).collect();
        let r_up = pearson(&x, &up).map_err(|e| e.to_string())?;
        let r_down = pearson(&x, &down).map_err(|e| e.to_string())?;
        worst = worst.max((r_up - 1.0).abs()).max((r_down + 1.0).abs());
        // same data through the gain analysis: d_min rises with gain, d_avg falls
        let records: Vec<DistanceRecord> = x
            .iter()
            .enumerate()
            .map(|(i, g)| DistanceRecord {
                question_id: format!("q{i}"),
                d_min: up[i],
                d_avg: down[i],
                nearest_train_id: "t".into(),
                gain: Some(*g),
            })
            .collect();
        let c = gain_distance_correlation(&records).map_err(|e| e.to_string())?;
        worst = worst.max((c.r_d_min - 1.0).abs()).max((c.r_d_avg + 1.0).abs());
    }
    ensure(worst < 1e-9, format!("pearson off by {worst}"))?;
    Ok(format!("0/1/2 exact; d_min <= d_avg on 1000 tables; max |r| error {worst:.1e}"))
}

// 11 ----------------------------------------------------------------------

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_11() -> Check {
    let config = r#"{"seed": 3, "eval": {"label": "truth-echo", "backend": {"kind": "stub_truth"}}}"#;
    let start = Instant::now();
    let mut trees = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        std::fs::write(dir.path().join("run.json"), config).map_err(|e| e.to_string())?;
        let out = Command::new(env!("CARGO_BIN_EXE_dvmap"))
            .args(["all", "--config", "run.json"])
            .current_dir(dir.path())
            .env("DVMAP_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(
            out.status.success(),
            format!("exit {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)),
        )?;
        trees.push(tree(&dir.path().join("out")));
    }
    let elapsed = start.elapsed();
    ensure(trees[0] == trees[1], "artifacts differ between same-seed runs")?;
    let report: serde_json::Value =
        serde_json::from_slice(&trees[0][Path::new("eval/report.json")]).map_err(|e| e.to_string())?;
    let acc = report["overall"]["accuracy"].as_f64().ok_or("no accuracy")?;
    let n = report["overall"]["n"].as_u64().unwrap_or(0);
    ensure(acc == 1.0 && n > 0, format!("accuracy {acc} over {n}"))?;
    ensure(elapsed < Duration::from_secs(120), format!("two runs took {elapsed:?}"))?;
    Ok(format!(
        "exit 0, accuracy 1.0 over {n} samples, {} artifacts byte-identical, two runs in {elapsed:.1?}",
        trees[0].len()
    ))
}

// 12 ----------------------------------------------------------------------

fn criterion_12() -> Check {
    let cb = codebook();
    let mut checked = 0;
    for q in &cb.questions {
        let s = sample("rt", profile("USA", "Middle", "x", "0"), q, 0);
        for mode in [PromptMode::StructuredCot, PromptMode::Direct] {
            let prompt = render_prompt(&s, mode);
            for (i, label) in q.option_labels.iter().enumerate() {
                ensure(prompt.text.contains(label.as_str()), format!("{}: prompt lacks {label:?}", q.id))?;
                let completion = format!("Step 1: weighing the options.\n<answer>{label}</answer>");
                let got = parse_answer(&completion, &prompt.options);
                let want = ParseResult::Ok {
                    label: label.clone(),
                    index: i,
                };
                ensure(got == want, format!("{} {label:?}: {got:?}", q.id))?;
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} (question, label, mode) round trips over {} questions", cb.questions.len()))
}

fn main() -> ExitCode {
    // the trainer timing is specified single-threaded
    std::env::set_var("RAYON_NUM_THREADS", "1");
    let criteria: [(&str, fn() -> Check); 12] = [
        ("strict consensus matches brute force", criterion_1),
        ("Acc/LC/WD fixture", criterion_2),
        ("entropy of uniform and unanimous histograms", criterion_3),
        ("split guarantees over 100 seeds", criterion_4),
        ("GRPO advantages and gradient", criterion_5),
        ("toy trainer on planted corpus", criterion_6),
        ("reward table and mode convergence", criterion_7),
        ("flip rate stubs", criterion_8),
        ("MDI recovers planted determinant", criterion_9),
        ("cosine distance and Pearson", criterion_10),
        ("offline end-to-end run", criterion_11),
        ("option labels round-trip", criterion_12),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match result {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {}/12 passed", 12 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::discretize::{derive_profile, discretize_response};
use super::entropy::{shannon_entropy, Histogram};
use super::profile::DemographicProfile;
use crate::ingest::{Codebook, Respondent};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConsensusError {
    #[error("no respondents to group")]
    Empty,
}

/// Which (profile, question) groups survive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Keep only unanimous groups (entropy exactly zero).
    #[default]
    Strict,
    /// Majority voting: keep every group at its modal answer, ties to the
    /// lowest option index.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusRecord {
    pub profile: DemographicProfile,
    pub question_id: String,
    pub answer_label: String,
    pub answer_index: usize,
    /// Number of respondents in the group who answered the question.
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterStats {
    pub mode: FilterMode,
    pub respondents_total: usize,
    /// Respondents missing at least one demographic field.
    pub respondents_excluded: usize,
    pub respondents_profiled: usize,
    pub distinct_profiles: usize,
    /// Share of profiled respondents whose profile is shared by at least
    /// one other respondent.
    pub overlapping_profile_fraction: f64,
    /// Share of (profile, question) pairs backed by two or more answers.
    pub overlapping_pair_fraction: f64,
    pub total_pairs: usize,
    pub retained: usize,
    pub discarded: usize,
    /// `discarded / total_pairs`.
    pub discarded_fraction: f64,
    /// Share of individual answers that fell in discarded pairs.
    pub discarded_response_fraction: f64,
    /// Relaxed-mode groups whose mode was tied.
    pub relaxed_ties: usize,
    pub question_entropy: BTreeMap<String, QuestionEntropy>,
}

/// Entropy distribution of one question across profile groups.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QuestionEntropy {
    pub groups: usize,
    pub zero_entropy_groups: usize,
    pub mean_entropy: f64,
    /// Groups backed by two or more answers; singletons are trivially zero.
    pub multi_answer_groups: usize,
    pub mean_entropy_multi_answer: Option<f64>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Groups respondents by derived profile, builds post-discretization answer
/// histograms per question and keeps the groups allowed by `mode`.
///
/// Output is sorted by (profile fingerprint, question id) and therefore
/// independent of input order.
pub fn extract_consensus(
    respondents: &[Respondent],
    codebook: &Codebook,
    mode: FilterMode,
) -> Result<(Vec<ConsensusRecord>, FilterStats), ConsensusError> {
    if respondents.is_empty() {
        return Err(ConsensusError::Empty);
    }
    let mut groups: BTreeMap<DemographicProfile, Vec<&Respondent>> = BTreeMap::new();
    let mut excluded = 0;
    for r in respondents {
        match derive_profile(r, codebook) {
            Ok(p) => groups.entry(p).or_default().push(r),
            Err(_) => excluded += 1,
        }
    }
    let profiled = respondents.len() - excluded;
    let overlapping: usize = groups.values().filter(|g| g.len() > 1).map(Vec::len).sum();

    let mut keyed: Vec<(String, DemographicProfile, Vec<&Respondent>)> = groups
        .into_iter()
        .map(|(p, g)| (p.fingerprint(), p, g))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    let distinct_profiles = keyed.len();

    let mut questions: Vec<_> = codebook.questions.iter().collect();
    questions.sort_by(|a, b| a.id.cmp(&b.id));

    let mut records = Vec::new();
    let (mut total_pairs, mut overlapping_pairs, mut discarded, mut ties) = (0, 0, 0, 0);
    let (mut answers_total, mut answers_discarded) = (0u64, 0u64);
    // (groups, zero, sum H, multi groups, sum H multi)
    let mut per_question: BTreeMap<&str, (usize, usize, f64, usize, f64)> = BTreeMap::new();
    for (_, profile, members) in &keyed {
        for q in &questions {
            let indices = members
                .iter()
                .filter_map(|r| r.code(&q.id))
                .filter_map(|code| discretize_response(q, code).ok())
                .map(|a| a.index);
            let hist = Histogram::from_indices(q.k(), indices);
            let support = hist.total();
            if support == 0 {
                continue;
            }
            total_pairs += 1;
            answers_total += support;
            if support > 1 {
                overlapping_pairs += 1;
            }
            let h = shannon_entropy(&hist).expect("non-empty histogram");
            let acc = per_question.entry(q.id.as_str()).or_default();
            acc.0 += 1;
            acc.2 += h;
            if h == 0.0 {
                acc.1 += 1;
            }
            if support > 1 {
                acc.3 += 1;
                acc.4 += h;
            }
            let keep = match mode {
                FilterMode::Strict => hist.nonzero_bins() == 1,
                FilterMode::Relaxed => {
                    if hist.mode_is_tied() {
                        ties += 1;
                    }
                    true
                }
            };
            if !keep {
                discarded += 1;
                answers_discarded += support;
                continue;
            }
            let index = hist.mode().expect("non-empty histogram");
            records.push(ConsensusRecord {
                profile: profile.clone(),
                question_id: q.id.clone(),
                answer_label: q.option_labels[index].clone(),
                answer_index: index,
                support,
            });
        }
    }

    let stats = FilterStats {
        mode,
        respondents_total: respondents.len(),
        respondents_excluded: excluded,
        respondents_profiled: profiled,
        distinct_profiles,
        overlapping_profile_fraction: ratio(overlapping, profiled),
        overlapping_pair_fraction: ratio(overlapping_pairs, total_pairs),
        total_pairs,
        retained: records.len(),
        discarded,
        discarded_fraction: ratio(discarded, total_pairs),
        discarded_response_fraction: if answers_total == 0 {
            0.0
        } else {
            answers_discarded as f64 / answers_total as f64
        },
        relaxed_ties: ties,
        question_entropy: per_question
            .into_iter()
            .map(|(qid, (groups, zero, sum, multi, sum_multi))| {
                let summary = QuestionEntropy {
                    groups,
                    zero_entropy_groups: zero,
                    mean_entropy: sum / groups as f64,
                    multi_answer_groups: multi,
                    mean_entropy_multi_answer: (multi > 0).then(|| sum_multi / multi as f64),
                };
                (qid.to_string(), summary)
            })
            .collect(),
    };
    Ok((records, stats))
}

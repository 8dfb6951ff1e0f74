use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dvmap_core::archetype::{extract_consensus, ConsensusRecord, FilterStats};
use dvmap_core::attribution::{datasets_from_records, datasets_from_respondents, importance_matrix};
use dvmap_core::benchmark::{build_splits, make_counterfactual_pairs, CorpusIndex, CorpusSample, Split};
use dvmap_core::grpo::{trace_to_csv, train_toy};
use dvmap_core::hashing::{sha256_hex, stage_seed};
use dvmap_core::inference::{run_eval, Backend, HttpBackend, PredictionRecord, StubBackend, StubReply};
use dvmap_core::ingest::{generate_synthetic, parse_survey, Codebook, Respondent, DEFAULT_CODEBOOK_JSON};
use dvmap_core::metrics::{aggregate_report, flip_rate, EvalReport, FlipReport, Grouping};
use dvmap_core::prompt::{render_prompt, template_id, PromptInstance};
use dvmap_core::semdist::{analyze, gain_distance_correlation, records_to_csv, DistanceRecord, EmbeddingTable, GainCorrelation};
use dvmap_core::jsonl;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::{BackendChoice, ImportanceSource, RunConfig};
use crate::manifest::{Input, Stage};

pub struct Ctx {
    pub cfg: RunConfig,
    pub resume: bool,
    pub codebook: Codebook,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(path.to_path_buf())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<PathBuf> {
    jsonl::write(path, items)?;
    Ok(path.to_path_buf())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl Ctx {
    pub fn new(cfg: RunConfig, resume: bool) -> Result<Self> {
        let codebook = match &cfg.paths.codebook {
            Some(p) => Codebook::load(p).with_context(|| format!("loading codebook {}", p.display()))?,
            None => Codebook::default_wvs7(),
        };
        Ok(Ctx { cfg, resume, codebook })
    }

    fn out(&self) -> &Path {
        &self.cfg.paths.out_dir
    }

    fn artifact(&self, stage: &str, file: &str) -> PathBuf {
        self.out().join(stage).join(file)
    }

    fn split_file(&self, split: Split) -> Input {
        Input::artifact(self.artifact("split", &format!("{split}.jsonl")), "split")
    }

    fn codebook_inputs(&self) -> Vec<Input> {
        self.cfg.paths.codebook.iter().map(|p| Input::external(p.clone())).collect()
    }

    fn codebook_echo(&self) -> serde_json::Value {
        match &self.cfg.paths.codebook {
            Some(p) => json!({"source": p}),
            None => json!({"source": "bundled-wvs7", "sha256": sha256_hex(DEFAULT_CODEBOOK_JSON.as_bytes())}),
        }
    }

    fn stage(&self, name: &'static str, config: serde_json::Value, mut inputs: Vec<Input>, codebook: bool) -> Stage<'_> {
        let config = if codebook {
            inputs.extend(self.codebook_inputs());
            json!({"stage": config, "codebook": self.codebook_echo()})
        } else {
            config
        };
        Stage {
            name,
            out_dir: self.out(),
            config,
            inputs,
        }
    }

    /// The resolved configuration, including every defaulted value.
    pub fn write_resolved_config(&self) -> Result<()> {
        write_json(&self.out().join("resolved_config.json"), &self.cfg)?;
        Ok(())
    }

    fn read_split(&self, split: Split) -> Result<Vec<CorpusSample>> {
        Ok(jsonl::read(&self.artifact("split", &format!("{split}.jsonl")))?)
    }

    pub fn generate(&self) -> Result<()> {
        let seed = stage_seed(self.cfg.seed, "generate");
        let config = json!({"synthetic": self.cfg.synthetic, "seed": seed});
        self.stage("generate", config, vec![], true).run(self.resume, |dir| {
            let csv = generate_synthetic(&self.cfg.synthetic, &self.codebook, seed)?;
            Ok(vec![write_text(&dir.join("survey.csv"), &csv)?])
        })
    }

    pub fn ingest(&self) -> Result<()> {
        let survey = match &self.cfg.paths.survey {
            Some(p) => Input::external(p.clone()),
            None => Input::artifact(self.artifact("generate", "survey.csv"), "generate"),
        };
        let survey_path = survey.path.clone();
        self.stage("ingest", json!({}), vec![survey], true).run(self.resume, |dir| {
            let file = File::open(&survey_path).with_context(|| format!("opening {}", survey_path.display()))?;
            let (respondents, stats) = parse_survey(BufReader::new(file), &self.codebook)?;
            tracing::info!(rows_read = stats.rows_read, rows_kept = stats.rows_kept, missing_cells = stats.missing_cells, "survey parsed");
            Ok(vec![
                write_jsonl(&dir.join("respondents.jsonl"), &respondents)?,
                write_json(&dir.join("stats.json"), &stats)?,
            ])
        })
    }

    pub fn archetype(&self) -> Result<()> {
        let input = Input::artifact(self.artifact("ingest", "respondents.jsonl"), "ingest");
        let path = input.path.clone();
        let config = serde_json::to_value(&self.cfg.archetype)?;
        self.stage("archetype", config, vec![input], true).run(self.resume, |dir| {
            let respondents: Vec<Respondent> = jsonl::read(&path)?;
            let (records, stats) = extract_consensus(&respondents, &self.codebook, self.cfg.archetype.mode)?;
            tracing::info!(
                retained = stats.retained,
                discarded = stats.discarded,
                discarded_fraction = stats.discarded_fraction,
                "consensus extracted"
            );
            Ok(vec![
                write_jsonl(&dir.join("consensus.jsonl"), &records)?,
                write_json(&dir.join("filter_stats.json"), &stats)?,
            ])
        })
    }

    pub fn split(&self) -> Result<()> {
        let input = Input::artifact(self.artifact("archetype", "consensus.jsonl"), "archetype");
        let path = input.path.clone();
        let config = serde_json::to_value(&self.cfg.split)?;
        self.stage("split", config, vec![input], true).run(self.resume, |dir| {
            let records: Vec<ConsensusRecord> = jsonl::read(&path)?;
            let bundle = build_splits(&records, &self.codebook, &self.cfg.split)?;
            bundle.write(dir)?;
            for split in Split::ALL {
                tracing::info!(split = split.name(), samples = bundle.split(split).len(), "split written");
            }
            let mut written: Vec<PathBuf> = Split::ALL.iter().map(|s| dir.join(format!("{s}.jsonl"))).collect();
            written.push(dir.join("bundle_meta.json"));
            Ok(written)
        })
    }

    pub fn prompts(&self) -> Result<()> {
        let splits = self.cfg.prompts.splits.clone();
        let inputs = splits.iter().map(|s| self.split_file(*s)).collect();
        let config = json!({"prompts": self.cfg.prompts, "template": template_id()});
        self.stage("prompts", config, inputs, false).run(self.resume, |dir| {
            let mut written = Vec::new();
            for split in &splits {
                let prompts: Vec<PromptInstance> = self
                    .read_split(*split)?
                    .iter()
                    .map(|s| render_prompt(s, self.cfg.prompts.mode))
                    .collect();
                written.push(write_jsonl(&dir.join(format!("{split}.jsonl")), &prompts)?);
            }
            Ok(written)
        })
    }

    fn backend(&self, samples: &[&CorpusSample]) -> Box<dyn Backend> {
        match &self.cfg.eval.backend {
            BackendChoice::Http => Box::new(HttpBackend::new(
                &self.cfg.endpoint.base_url,
                self.cfg.endpoint.timeout(),
                &self.cfg.endpoint.api_key_env,
            )),
            BackendChoice::StubTruth => {
                let mut stub = StubBackend::new(StubReply::Text("no answer".into()));
                for s in samples {
                    let prompt = render_prompt(s, self.cfg.prompts.mode);
                    stub = stub.with_exact(prompt.text, StubReply::Text(format!("<answer>{}</answer>", s.truth_label)));
                }
                Box::new(stub)
            }
            BackendChoice::StubConstant { text } => Box::new(StubBackend::constant(text.clone())),
        }
    }

    fn backend_label(&self) -> String {
        match &self.cfg.eval.backend {
            BackendChoice::Http => self.cfg.endpoint.model.clone(),
            BackendChoice::StubTruth => "stub_truth".into(),
            BackendChoice::StubConstant { .. } => "stub_constant".into(),
        }
    }

    fn endpoint_echo(&self) -> serde_json::Value {
        let mut endpoint = self.cfg.endpoint.clone();
        // where the cache lives does not change any result
        endpoint.cache_dir = None;
        json!({"endpoint": endpoint, "backend": self.cfg.eval.backend, "template": template_id()})
    }

    pub fn eval(&self) -> Result<()> {
        let splits = self.cfg.eval.splits.clone();
        let mut inputs: Vec<Input> = Vec::new();
        for s in &splits {
            inputs.push(Input::artifact(self.artifact("prompts", &format!("{s}.jsonl")), "prompts"));
            inputs.push(self.split_file(*s));
        }
        let stats_path = self.artifact("archetype", "filter_stats.json");
        if stats_path.is_file() {
            inputs.push(Input::artifact(stats_path.clone(), "archetype"));
        }
        let config = json!({"eval": self.cfg.eval, "inference": self.endpoint_echo()});
        self.stage("eval", config, inputs, false).run(self.resume, |dir| {
            let mut prompts: Vec<PromptInstance> = Vec::new();
            let mut samples: Vec<CorpusSample> = Vec::new();
            let mut split_of: BTreeMap<String, Split> = BTreeMap::new();
            for s in &splits {
                prompts.extend(jsonl::read::<PromptInstance>(&self.artifact("prompts", &format!("{s}.jsonl")))?);
                for sample in self.read_split(*s)? {
                    split_of.insert(sample.sample_id.clone(), *s);
                    samples.push(sample);
                }
            }
            let corpus = CorpusIndex::new(&samples);
            let backend = self.backend(&samples.iter().collect::<Vec<_>>());
            let preds = run_eval(&prompts, &corpus, &self.cfg.endpoint, backend.as_ref())?;
            let entropy = if stats_path.is_file() {
                Some(read_json::<FilterStats>(&stats_path)?.question_entropy)
            } else {
                None
            };
            let grouping = self.cfg.eval.grouping;
            let build = |subset: &[PredictionRecord]| -> Result<EvalReport> {
                let mut r = aggregate_report(subset, &corpus, grouping)?;
                if let Some(e) = &entropy {
                    r.attach_entropy(e);
                }
                Ok(r)
            };
            let mut per_split = BTreeMap::new();
            for s in &splits {
                let subset: Vec<PredictionRecord> = preds
                    .iter()
                    .filter(|p| split_of.get(&p.sample_id) == Some(s))
                    .cloned()
                    .collect();
                per_split.insert(s.name().to_string(), build(&subset)?);
            }
            let summary = EvalSummary {
                label: self.cfg.eval.label.clone(),
                model: self.backend_label(),
                template: template_id(),
                grouping,
                overall: build(&preds)?,
                per_split,
            };
            tracing::info!(
                n = summary.overall.n,
                accuracy = summary.overall.accuracy,
                unparsed_fraction = summary.overall.unparsed_fraction,
                "evaluation scored"
            );
            Ok(vec![
                write_jsonl(&dir.join("predictions.jsonl"), &preds)?,
                write_json(&dir.join("report.json"), &summary)?,
                write_text(&dir.join("report.csv"), &summary.overall.to_csv()?)?,
            ])
        })
    }

    pub fn flip_rate(&self) -> Result<()> {
        let splits = self.cfg.flip.splits.clone();
        let inputs = splits.iter().map(|s| self.split_file(*s)).collect();
        let config = json!({"flip": self.cfg.flip, "prompt_mode": self.cfg.prompts.mode, "inference": self.endpoint_echo()});
        self.stage("flip-rate", config, inputs, false).run(self.resume, |dir| {
            let mut samples = Vec::new();
            for s in &splits {
                samples.extend(self.read_split(*s)?);
            }
            let pairs = make_counterfactual_pairs(&samples, self.cfg.flip.attribute)?;
            let members: Vec<&CorpusSample> = pairs.iter().flat_map(|p| [&p.original, &p.perturbed]).collect();
            let prompts: Vec<PromptInstance> = members.iter().map(|s| render_prompt(s, self.cfg.prompts.mode)).collect();
            let corpus = CorpusIndex::new(members.iter().copied());
            let backend = self.backend(&members);
            let preds = run_eval(&prompts, &corpus, &self.cfg.endpoint, backend.as_ref())?;
            let (report, note) = match flip_rate(&pairs, &preds) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            if let Some(r) = &report {
                tracing::info!(pairs = r.pairs, compared = r.compared, rate = r.rate, "flip rate");
            }
            let summary = FlipSummary {
                attribute: self.cfg.flip.attribute.name().to_string(),
                pairs: pairs.len(),
                report,
                note,
            };
            Ok(vec![
                write_jsonl(&dir.join("pairs.jsonl"), &pairs)?,
                write_jsonl(&dir.join("predictions.jsonl"), &preds)?,
                write_json(&dir.join("report.json"), &summary)?,
            ])
        })
    }

    pub fn importance(&self) -> Result<()> {
        let input = match self.cfg.importance.source {
            ImportanceSource::Records => Input::artifact(self.artifact("archetype", "consensus.jsonl"), "archetype"),
            ImportanceSource::Respondents => Input::artifact(self.artifact("ingest", "respondents.jsonl"), "ingest"),
        };
        let path = input.path.clone();
        let cfg = self.cfg.importance_config();
        let config = json!({"source": self.cfg.importance.source, "importance": cfg});
        self.stage("importance", config, vec![input], true).run(self.resume, |dir| {
            let include_country = cfg.include_country;
            let datasets = match self.cfg.importance.source {
                ImportanceSource::Records => {
                    datasets_from_records(&jsonl::read::<ConsensusRecord>(&path)?, &self.codebook, include_country)
                }
                ImportanceSource::Respondents => {
                    datasets_from_respondents(&jsonl::read::<Respondent>(&path)?, &self.codebook, include_country)
                }
            };
            let matrix = importance_matrix(&datasets, &cfg)?;
            tracing::info!(questions = matrix.rows.len(), skipped = matrix.skipped.len(), "importance matrix built");
            Ok(vec![
                write_text(&dir.join("matrix.csv"), &matrix.to_csv()?)?,
                write_json(&dir.join("matrix.json"), &matrix)?,
            ])
        })
    }

    pub fn train_toy(&self) -> Result<()> {
        let input = self.split_file(Split::Train);
        let path = input.path.clone();
        let train = self.cfg.train_config();
        let config = serde_json::to_value(&train)?;
        self.stage("train-toy", config, vec![input], false).run(self.resume, |dir| {
            let samples: Vec<CorpusSample> = jsonl::read(&path)?;
            let outcome = train_toy(&samples, &train)?;
            let summary = json!({
                "samples": samples.len(),
                "keys": outcome.policy.logits.len(),
                "config": train,
                "initial": outcome.trace.first(),
                "final": outcome.trace.last(),
            });
            Ok(vec![
                write_text(&dir.join("trace.csv"), &trace_to_csv(&outcome.trace)?)?,
                write_json(&dir.join("policy.json"), &outcome.policy)?,
                write_json(&dir.join("summary.json"), &summary)?,
            ])
        })
    }

    pub fn semdist(&self) -> Result<()> {
        let Some(embeddings) = self.cfg.paths.embeddings.clone() else {
            bail!("semdist needs paths.embeddings (JSONL of {{\"id\", \"vector\"}} objects)");
        };
        let section = &self.cfg.semdist;
        let test_ids = section
            .test_questions
            .clone()
            .unwrap_or_else(|| self.cfg.split.cross_value_questions.clone());
        let train_ids = section
            .train_questions
            .clone()
            .unwrap_or_else(|| self.cfg.split.train_questions.clone());
        let config = json!({"test_questions": test_ids, "train_questions": train_ids, "gains": section.gains});
        self.stage("semdist", config, vec![Input::external(embeddings.clone())], false)
            .run(self.resume, |dir| {
                let file = File::open(&embeddings).with_context(|| format!("opening {}", embeddings.display()))?;
                let table = EmbeddingTable::from_jsonl(BufReader::new(file))?;
                let records = analyze(&test_ids, &train_ids, &table, &section.gains)?;
                let (correlation, note) = match gain_distance_correlation(&records) {
                    Ok(c) => (Some(c), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                let summary = SemdistSummary {
                    records: records.clone(),
                    correlation,
                    note,
                };
                Ok(vec![
                    write_text(&dir.join("distances.csv"), &records_to_csv(&records)?)?,
                    write_json(&dir.join("summary.json"), &summary)?,
                ])
            })
    }

    pub fn report(&self) -> Result<()> {
        let runs: Vec<(String, Input)> = if self.cfg.report.runs.is_empty() {
            vec![(
                self.cfg.eval.label.clone(),
                Input::artifact(self.artifact("eval", "report.json"), "eval"),
            )]
        } else {
            self.cfg
                .report
                .runs
                .iter()
                .map(|r| (r.label.clone(), Input::external(r.report.clone())))
                .collect()
        };
        let labelled: Vec<(String, PathBuf)> = runs.iter().map(|(l, i)| (l.clone(), i.path.clone())).collect();
        let config = json!({"runs": labelled.iter().map(|(l, _)| l).collect::<Vec<_>>()});
        let inputs = runs.into_iter().map(|(_, i)| i).collect();
        self.stage("report", config, inputs, false).run(self.resume, |dir| {
            let mut rows = Vec::new();
            for (label, path) in &labelled {
                let summary: EvalSummary = read_json(path)?;
                rows.push(ComparisonRow::new(label, &summary));
            }
            Ok(vec![
                write_text(&dir.join("comparison.csv"), &comparison_csv(&rows))?,
                write_text(&dir.join("comparison.md"), &comparison_markdown(&rows))?,
                write_json(&dir.join("comparison.json"), &rows)?,
            ])
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub label: String,
    pub model: String,
    pub template: String,
    pub grouping: Grouping,
    pub overall: EvalReport,
    pub per_split: BTreeMap<String, EvalReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipSummary {
    pub attribute: String,
    pub pairs: usize,
    pub report: Option<FlipReport>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemdistSummary {
    pub records: Vec<DistanceRecord>,
    pub correlation: Option<GainCorrelation>,
    pub note: Option<String>,
}

/// One row of the filtering-strategy comparison: accuracy and Likert
/// consistency in percent, Wasserstein distance as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub n: usize,
    pub acc_pct: f64,
    pub lc_pct: Option<f64>,
    pub wd: Option<f64>,
}

impl ComparisonRow {
    fn new(label: &str, s: &EvalSummary) -> Self {
        ComparisonRow {
            method: label.to_string(),
            n: s.overall.n,
            acc_pct: s.overall.accuracy * 100.0,
            lc_pct: s.overall.likert_consistency.map(|v| v * 100.0),
            wd: s.overall.wasserstein_mean,
        }
    }
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_else(|| "-".into())
}

fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("method,n,acc_pct,lc_pct,wd\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.2},{},{}\n",
            r.method,
            r.n,
            r.acc_pct,
            fmt_opt(r.lc_pct, 2),
            fmt_opt(r.wd, 3)
        ));
    }
    out
}

fn comparison_markdown(rows: &[ComparisonRow]) -> String {
    let mut out = String::from("| Method | ACC (%) | LC (%) | WD |\n|---|---:|---:|---:|\n");
    for r in rows {
        out.push_str(&format!(
            "| {} | {:.2} | {} | {} |\n",
            r.method,
            r.acc_pct,
            fmt_opt(r.lc_pct, 2),
            fmt_opt(r.wd, 3)
        ));
    }
    out
}

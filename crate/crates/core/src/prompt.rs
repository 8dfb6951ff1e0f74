//! Prompt rendering for the structured reasoning template and strict
//! parsing of `<answer>...</answer>` completions.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::archetype::Attribute;
use crate::benchmark::CorpusSample;
use crate::hashing::sha256_hex;

/// Template text. Lines between `[[cot]]` and `[[/cot]]` are the reasoning
/// block dropped in direct mode.
pub const TEMPLATE: &str = include_str!("../resources/structured_cot_v1.txt");
pub const TEMPLATE_VERSION: &str = "structured-cot-v1";

const COT_OPEN: &str = "[[cot]]\n";
const COT_CLOSE: &str = "[[/cot]]\n";

/// Version tag plus a short content hash; part of every cache key.
pub fn template_id() -> String {
    format!(
        "{TEMPLATE_VERSION}+{}",
        &sha256_hex(TEMPLATE.as_bytes())[..12]
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    #[default]
    StructuredCot,
    Direct,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub sample_id: String,
    #[serde(rename = "prompt")]
    pub text: String,
    pub options: Vec<String>,
    pub mode: PromptMode,
}

/// Display name for the countries the shipped splits use; other codes
/// render as-is.
pub fn country_name(iso3: &str) -> &str {
    match iso3 {
        "AUS" => "Australia",
        "BRA" => "Brazil",
        "CAN" => "Canada",
        "CHN" => "China",
        "DEU" => "Germany",
        "EGY" => "Egypt",
        "GBR" => "United Kingdom",
        "IDN" => "Indonesia",
        "IND" => "India",
        "IRN" => "Iran",
        "JPN" => "Japan",
        "MEX" => "Mexico",
        "NGA" => "Nigeria",
        "PAK" => "Pakistan",
        "RUS" => "Russia",
        "TUR" => "Türkiye",
        "USA" => "United States",
        "VNM" => "Vietnam",
        other => other,
    }
}

fn render_options(options: &[String]) -> String {
    let quoted: Vec<String> = options.iter().map(|o| format!("\"{o}\"")).collect();
    format!("[{}]", quoted.join(", "))
}

pub fn render_prompt(sample: &CorpusSample, mode: PromptMode) -> PromptInstance {
    let (head, rest) = TEMPLATE
        .split_once(COT_OPEN)
        .expect("template has a cot block");
    let (cot, tail) = rest
        .split_once(COT_CLOSE)
        .expect("template closes the cot block");
    let mut text = match mode {
        PromptMode::StructuredCot => format!("{head}{cot}{tail}"),
        PromptMode::Direct => format!("{head}{tail}"),
    };
    for attr in Attribute::ALL {
        let value = match attr {
            Attribute::Country => country_name(&sample.profile.country),
            _ => sample.profile.get(attr),
        };
        text = text.replace(&format!("{{{}}}", attr.name()), value);
    }
    // question last so braces inside question text are never substituted
    let options = render_options(&sample.question.options);
    text = text
        .replace("{options}", &options)
        .replace("{question}", &sample.question.text);
    PromptInstance {
        sample_id: sample.sample_id.clone(),
        text,
        options: sample.question.options.clone(),
        mode,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatErrorReason {
    NoTag,
    MultipleTags,
    UnknownLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ParseResult {
    Ok { label: String, index: usize },
    FormatError { reason: FormatErrorReason },
}

impl ParseResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, ParseResult::Ok { .. })
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            ParseResult::Ok { index, .. } => Some(*index),
            ParseResult::FormatError { .. } => None,
        }
    }

    pub fn label(&self) -> Option<&str> {
        match self {
            ParseResult::Ok { label, .. } => Some(label),
            ParseResult::FormatError { .. } => None,
        }
    }
}

fn answer_tag() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?is)<answer>(.*?)</answer>").unwrap())
}

/// Accepts exactly one `<answer>` pair whose trimmed content matches one
/// option label case-insensitively. Anything else is a format error.
pub fn parse_answer(completion: &str, options: &[String]) -> ParseResult {
    let mut tags = answer_tag().captures_iter(completion);
    let Some(first) = tags.next() else {
        return ParseResult::FormatError {
            reason: FormatErrorReason::NoTag,
        };
    };
    if tags.next().is_some() {
        return ParseResult::FormatError {
            reason: FormatErrorReason::MultipleTags,
        };
    }
    let content = first[1].trim().to_lowercase();
    let mut matches = options
        .iter()
        .enumerate()
        .filter(|(_, o)| o.trim().to_lowercase() == content);
    match (matches.next(), matches.next()) {
        (Some((index, label)), None) => ParseResult::Ok {
            label: label.clone(),
            index,
        },
        _ => ParseResult::FormatError {
            reason: FormatErrorReason::UnknownLabel,
        },
    }
}

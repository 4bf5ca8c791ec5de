//! Prompt payloads for the three prompting regimes and closed-set label parsing.
//!
//! Templates live in `templates/` as UTF-8 files with LF newlines and are compiled in.
//! Their SHA-256 digests are pinned below; [`verify_templates`] fails fast on drift.
//! Placeholders (`{name}`, `{title}`, `{abstract}`, `{label}`) are substituted in a
//! single pass, so braces inside substituted text are never re-expanded.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::labeling::L1Label;
use crate::text::{normalize_whitespace, sha256_hex};

#[derive(Debug, Clone, Copy)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
    pub sha256: &'static str,
}

macro_rules! template {
    ($name:literal, $sha:literal) => {
        Template { name: $name, text: include_str!(concat!("../templates/", $name, ".txt")), sha256: $sha }
    };
}

pub const NAME_ORIGIN_SYSTEM: Template =
    template!("name_origin_system", "3c10504372dfd2a41721bfb99f76a246b5d42fcddceee280b716600a8d30382a");
pub const NAME_ORIGIN_USER: Template =
    template!("name_origin_user", "8b9507f57685b27800e1967ad3e8255b09369a6994186f70f4aac4210cda672e");
pub const FEWSHOT_SYSTEM: Template =
    template!("fewshot_system", "073bfe861874e83cc3811ffa99c4bac12bf39caeeb6a5174bb11a6e8a85c7e4a");
pub const FEWSHOT_USER: Template =
    template!("fewshot_user", "c463c6b895b7d362d21dd5eb3d6beafa6c496621ab23b5e4757e456efe8026d3");
pub const FEWSHOT_EXEMPLAR: Template =
    template!("fewshot_exemplar", "d317da76225b40d95087279f219b12c37f579091be4c68d3f19ea4761a2cb911");
pub const FINETUNE_SYSTEM: Template =
    template!("finetune_system", "f8b77dfa7c5ee2971b3d9f4aaba66831c4c9da480711205920c689be48a4b2a5");
pub const FINETUNE_USER: Template =
    template!("finetune_user", "a27fafdc3666a5f6bcaab466d31b59e505241a3295ae89f2823b32b7bcb81fa8");

pub const TEMPLATES: [Template; 7] = [
    NAME_ORIGIN_SYSTEM,
    NAME_ORIGIN_USER,
    FEWSHOT_SYSTEM,
    FEWSHOT_USER,
    FEWSHOT_EXEMPLAR,
    FINETUNE_SYSTEM,
    FINETUNE_USER,
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("template {name} checksum drift: expected {expected}, found {actual}")]
    ChecksumDrift { name: &'static str, expected: &'static str, actual: String },
    #[error("{0} is empty")]
    EmptyField(&'static str),
    #[error("two exemplars share label {0}")]
    DuplicateExemplarLabel(L1Label),
}

/// Checks every compiled-in template against its pinned digest.
pub fn verify_templates() -> Result<(), PromptError> {
    verify(&TEMPLATES)
}

fn verify(templates: &[Template]) -> Result<(), PromptError> {
    for t in templates {
        let actual = sha256_hex(t.text.as_bytes());
        if actual != t.sha256 || t.text.contains('\r') {
            return Err(PromptError::ChecksumDrift { name: t.name, expected: t.sha256, actual });
        }
    }
    Ok(())
}

pub fn template_checksums() -> BTreeMap<&'static str, &'static str> {
    TEMPLATES.iter().map(|t| (t.name, t.sha256)).collect()
}

fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let tail = &rest[start..];
        let hit = vars.iter().find(|(k, _)| {
            tail.len() > k.len() + 1 && tail[1..].starts_with(k) && tail.as_bytes()[k.len() + 1] == b'}'
        });
        match hit {
            Some((k, v)) => {
                out.push_str(v);
                rest = &tail[k.len() + 2..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NameOrigin,
    FewShot,
    FineTune,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system: String,
    pub user: String,
    pub regime: Regime,
}

pub fn build_name_origin_prompt(name: &str) -> Result<PromptBundle, PromptError> {
    if name.is_empty() {
        return Err(PromptError::EmptyField("name"));
    }
    Ok(PromptBundle {
        system: NAME_ORIGIN_SYSTEM.text.to_string(),
        user: render(NAME_ORIGIN_USER.text, &[("name", name)]),
        regime: Regime::NameOrigin,
    })
}

/// One labeled demonstration for few-shot prompting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub label: L1Label,
}

fn normalized(field: &'static str, s: &str) -> Result<String, PromptError> {
    let n = normalize_whitespace(s);
    if n.is_empty() {
        Err(PromptError::EmptyField(field))
    } else {
        Ok(n)
    }
}

/// Exemplar blocks (in caller order) followed by the classify line, all in the user turn.
pub fn build_fewshot_prompt(
    title: &str,
    abstract_text: &str,
    exemplars: &[Exemplar],
) -> Result<PromptBundle, PromptError> {
    let title = normalized("title", title)?;
    let abstract_text = normalized("abstract", abstract_text)?;
    let mut seen = BTreeSet::new();
    let mut user = String::new();
    for ex in exemplars {
        if !seen.insert(ex.label) {
            return Err(PromptError::DuplicateExemplarLabel(ex.label));
        }
        let t = normalized("exemplar title", &ex.title)?;
        let a = normalized("exemplar abstract", &ex.abstract_text)?;
        user.push_str(&render(FEWSHOT_EXEMPLAR.text, &[("title", &t), ("abstract", &a), ("label", ex.label.as_str())]));
    }
    user.push_str(&render(FEWSHOT_USER.text, &[("title", &title), ("abstract", &abstract_text)]));
    Ok(PromptBundle { system: FEWSHOT_SYSTEM.text.to_string(), user, regime: Regime::FewShot })
}

/// Supervised fine-tuning example: prompt plus the expected completion.
pub fn build_finetune_example(
    title: &str,
    abstract_text: &str,
    label: L1Label,
) -> Result<(PromptBundle, String), PromptError> {
    let title = normalized("title", title)?;
    let abstract_text = normalized("abstract", abstract_text)?;
    let bundle = PromptBundle {
        system: FINETUNE_SYSTEM.text.to_string(),
        user: render(FINETUNE_USER.text, &[("title", &title), ("abstract", &abstract_text)]),
        regime: Regime::FineTune,
    };
    Ok((bundle, label.as_str().to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Prediction {
    Label(L1Label),
    Invalid(InvalidTag),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidTag {
    Invalid,
}

impl Prediction {
    pub const INVALID: Prediction = Prediction::Invalid(InvalidTag::Invalid);

    pub fn label(self) -> Option<L1Label> {
        match self {
            Prediction::Label(l) => Some(l),
            Prediction::Invalid(_) => None,
        }
    }
}

/// A model output mapped onto the closed label set; the raw text is kept for audit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedLabel {
    pub value: Prediction,
    pub raw: String,
}

/// Lowercases, trims, strips punctuation at both ends and joins inner whitespace with
/// `_`, then requires an exact match. No fuzzy matching.
pub fn parse_label(raw: &str) -> ParsedLabel {
    let lowered = raw.to_lowercase();
    let stripped = lowered.trim_matches(|c: char| c.is_whitespace() || (c.is_ascii_punctuation() && c != '_'));
    let key = stripped.split_whitespace().collect::<Vec<_>>().join("_");
    let value = key.parse::<L1Label>().map_or(Prediction::INVALID, Prediction::Label);
    ParsedLabel { value, raw: raw.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_checksums_match() {
        verify_templates().unwrap();
    }

    #[test]
    fn drift_is_detected() {
        let mut t = FEWSHOT_SYSTEM;
        t.text = "You are an expert computational linguist.";
        assert!(matches!(verify(&[t]), Err(PromptError::ChecksumDrift { name: "fewshot_system", .. })));
    }

    #[test]
    fn render_is_single_pass() {
        assert_eq!(
            render("T: {title} A: {abstract}", &[("title", "{abstract}"), ("abstract", "x")]),
            "T: {abstract} A: x"
        );
        assert_eq!(render("{unknown} {", &[("title", "t")]), "{unknown} {");
    }

    #[test]
    fn fewshot_without_exemplars_is_just_the_query() {
        let b = build_fewshot_prompt("A  title", "An\nabstract.", &[]).unwrap();
        assert_eq!(b.user, "Classify the native language: A title An abstract.");
        assert!(b.system.starts_with("You are an expert computational linguist"));
    }

    #[test]
    fn fewshot_blocks_in_caller_order() {
        let ex = |l: L1Label| Exemplar { title: format!("T{l}"), abstract_text: "Abs.".into(), label: l };
        let exemplars: Vec<_> = L1Label::ALL.iter().rev().map(|&l| ex(l)).collect();
        let b = build_fewshot_prompt("Q", "R", &exemplars).unwrap();
        assert_eq!(b.user.matches("Native Language: ").count(), 8);
        assert!(b.user.starts_with("Text: Tkorean Abs.\nNative Language: korean\n\nText: Tjapanese"));
        assert!(b.user.ends_with("\n\nClassify the native language: Q R"));
        let dup = vec![ex(L1Label::French), ex(L1Label::French)];
        assert_eq!(build_fewshot_prompt("Q", "R", &dup), Err(PromptError::DuplicateExemplarLabel(L1Label::French)));
    }

    #[test]
    fn finetune_completion_is_label() {
        let (b, c) = build_finetune_example("T", "A", L1Label::French).unwrap();
        assert_eq!(c, "french");
        assert_eq!(
            b.user,
            "Analyze the following text and determine the author's native language.\nText: T A\nNative Language:"
        );
        assert!(b.system.ends_with("Example: french"));
        assert_eq!(build_finetune_example("T", "A", L1Label::EnglishAmerican).unwrap().1, "english_american");
        assert_eq!(build_finetune_example("T", " ", L1Label::French), Err(PromptError::EmptyField("abstract")));
    }

    #[test]
    fn parse_label_examples() {
        assert_eq!(parse_label("french").value, Prediction::Label(L1Label::French));
        let p = parse_label(" English_American.\n");
        assert_eq!(p.value, Prediction::Label(L1Label::EnglishAmerican));
        assert_eq!(p.raw, " English_American.\n");
        assert_eq!(parse_label("spanish").value, Prediction::INVALID);
        assert_eq!(parse_label("English American").value, Prediction::Label(L1Label::EnglishAmerican));
        assert_eq!(parse_label("english-american").value, Prediction::INVALID);
        assert_eq!(parse_label("englis_american").value, Prediction::INVALID);
        assert_eq!(parse_label("").value, Prediction::INVALID);
        assert_eq!(parse_label("\"korean\"").value, Prediction::Label(L1Label::Korean));
    }

    #[test]
    fn prediction_serde() {
        assert_eq!(serde_json::to_string(&Prediction::INVALID).unwrap(), "\"invalid\"");
        assert_eq!(serde_json::from_str::<Prediction>("\"german\"").unwrap(), Prediction::Label(L1Label::German));
    }
}

//! Three-part designer prompt: an application framing used as the system
//! message, then the format instruction and the constraint narrative as the
//! user message.
//!
//! Wording lives in a sectioned template file (see `assets/prompt_template.txt`)
//! with named placeholders:
//!
//! * `[system]`: no placeholders
//! * `[task]`: `{template}`
//! * `[constraints]`: `{incumbent}`, `{env}`, `{choices}`
//! * `[incumbent]`: `{arch}`, `{eval}`; replaces `{incumbent}` once an archive exists
//! * `[cold_start]`: replaces `{incumbent}` on the first iteration

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::arch::{serialize_architecture, ArchError, Architecture, Choices};
use crate::cost::DeviceProfile;
use crate::fairness::{format_metrics_report, MetricsRecord};

pub const DEFAULT_PROMPT_TEMPLATE: &str = include_str!("../assets/prompt_template.txt");
pub const DEFAULT_ARCHITECTURE_TEMPLATE: &str = include_str!("../assets/architecture_template.txt");
pub const DEFAULT_MAX_PROMPT_CHARS: usize = 64 * 1024;

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt template: {0}")]
    Template(String),
    #[error("prompt is {len} characters, over the limit of {limit}")]
    TooLong { len: usize, limit: usize },
    #[error("iteration must be >= 1")]
    InvalidIteration,
    #[error(transparent)]
    Arch(#[from] ArchError),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptMetadata {
    pub iteration: u32,
    pub best_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub metadata: PromptMetadata,
}

impl PromptBundle {
    /// Same prompt with a correction paragraph appended to the user message.
    pub fn with_feedback(&self, feedback: &str) -> PromptBundle {
        PromptBundle {
            system_text: self.system_text.clone(),
            user_text: format!("{}\n\n{}", self.user_text, feedback.trim_end()),
            metadata: self.metadata.clone(),
        }
    }

    /// Hex SHA-256 over both messages.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.system_text.as_bytes());
        hasher.update([0u8]);
        hasher.update(self.user_text.as_bytes());
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Parsed prompt wording.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    system: String,
    task: String,
    constraints: String,
    incumbent: String,
    cold_start: String,
}

const SECTIONS: [(&str, &[&str], &[&str]); 5] = [
    ("system", &[], &[]),
    ("task", &["template"], &["template"]),
    (
        "constraints",
        &["incumbent", "env", "choices"],
        &["incumbent", "env", "choices", "template"],
    ),
    ("incumbent", &["arch", "eval"], &["arch", "eval", "env", "choices"]),
    ("cold_start", &[], &["env", "choices"]),
];

impl PromptTemplate {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let mut sections: BTreeMap<String, Vec<&str>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for line in text.lines() {
            let trimmed = line.trim();
            if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                if !SECTIONS.iter().any(|(s, _, _)| *s == name) {
                    return Err(PromptError::Template(format!("unknown section [{name}]")));
                }
                if sections.contains_key(name) {
                    return Err(PromptError::Template(format!("duplicate section [{name}]")));
                }
                sections.insert(name.to_string(), Vec::new());
                current = Some(name.to_string());
            } else if let Some(name) = &current {
                sections.get_mut(name).expect("section opened").push(line);
            } else if !trimmed.is_empty() {
                return Err(PromptError::Template(
                    "text before the first [section] header".into(),
                ));
            }
        }

        let mut body = |name: &str, required: &[&str], allowed: &[&str]| {
            let lines = sections
                .remove(name)
                .ok_or_else(|| PromptError::Template(format!("missing section [{name}]")))?;
            let text = lines.join("\n").trim().to_string();
            if text.is_empty() {
                return Err(PromptError::Template(format!("section [{name}] is empty")));
            }
            let found = placeholders(&text);
            for p in &found {
                if !allowed.contains(&p.as_str()) {
                    return Err(PromptError::Template(format!(
                        "placeholder {{{p}}} is not allowed in [{name}]"
                    )));
                }
            }
            for r in required {
                if !found.iter().any(|p| p == r) {
                    return Err(PromptError::Template(format!(
                        "section [{name}] lacks placeholder {{{r}}}"
                    )));
                }
            }
            Ok(text)
        };
        let [s, t, c, i, k] = SECTIONS;
        Ok(Self {
            system: body(s.0, s.1, s.2)?,
            task: body(t.0, t.1, t.2)?,
            constraints: body(c.0, c.1, c.2)?,
            incumbent: body(i.0, i.1, i.2)?,
            cold_start: body(k.0, k.1, k.2)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = std::fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn system_text(&self) -> &str {
        &self.system
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::parse(DEFAULT_PROMPT_TEMPLATE).expect("shipped prompt template is valid")
    }
}

/// `{name}` tokens with lowercase identifier names, in order of appearance.
fn placeholders(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if is_ident(&after[..end]) => {
                out.push(after[..end].to_string());
                rest = &after[end + 1..];
            }
            _ => rest = after,
        }
    }
    out
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b == b'_')
}

/// Single-pass substitution: inserted values are never rescanned.
fn render(text: &str, values: &BTreeMap<&str, String>) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find('{') {
        out.push_str(&rest[..start]);
        let after = &rest[start + 1..];
        match after.find('}') {
            Some(end) if values.contains_key(&after[..end]) => {
                out.push_str(&values[&after[..end]]);
                rest = &after[end + 1..];
            }
            _ => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// How a device is named inside the prompt.
pub fn render_environment(env: &DeviceProfile) -> String {
    match env.memory_limit_bytes {
        Some(limit) => format!(
            "{} (memory limit {:.0} MB)",
            env.name,
            limit as f64 / (1024.0 * 1024.0)
        ),
        None => env.name.clone(),
    }
}

/// The best-so-far entry a prompt revolves around.
#[derive(Debug, Clone, Copy)]
pub struct Incumbent<'a> {
    pub name: &'a str,
    pub architecture: &'a Architecture,
    pub metrics: &'a MetricsRecord,
}

#[derive(Debug, Clone)]
pub struct PromptGenerator {
    pub wording: PromptTemplate,
    /// Architecture format description substituted for `{template}`.
    pub architecture_template: String,
    pub max_chars: usize,
}

impl Default for PromptGenerator {
    fn default() -> Self {
        Self {
            wording: PromptTemplate::default(),
            architecture_template: DEFAULT_ARCHITECTURE_TEMPLATE.to_string(),
            max_chars: DEFAULT_MAX_PROMPT_CHARS,
        }
    }
}

impl PromptGenerator {
    pub fn generate(
        &self,
        best: Option<Incumbent<'_>>,
        choices: &Choices,
        env: &DeviceProfile,
        iteration: u32,
    ) -> Result<PromptBundle, PromptError> {
        if iteration == 0 {
            return Err(PromptError::InvalidIteration);
        }
        let template = self.architecture_template.trim();
        if template.is_empty() {
            return Err(PromptError::Template("architecture template is empty".into()));
        }

        let mut values: BTreeMap<&str, String> = BTreeMap::new();
        values.insert("template", format!("\n\n{template}\n\n"));
        values.insert("env", render_environment(env));
        values.insert("choices", choices.to_json());
        let incumbent = match best {
            Some(b) => {
                let arch = serialize_architecture(b.architecture)?;
                values.insert("arch", format!("\n```json\n{}```\n", arch));
                values.insert("eval", format_metrics_report(b.metrics));
                render(&self.wording.incumbent, &values)
            }
            None => render(&self.wording.cold_start, &values),
        };
        values.insert("incumbent", incumbent);

        let user_text = format!(
            "{}\n\n{}",
            render(&self.wording.task, &values),
            render(&self.wording.constraints, &values)
        );
        let system_text = self.wording.system.clone();
        let len = system_text.chars().count() + user_text.chars().count();
        if len > self.max_chars {
            return Err(PromptError::TooLong {
                len,
                limit: self.max_chars,
            });
        }
        Ok(PromptBundle {
            system_text,
            user_text,
            metadata: PromptMetadata {
                iteration,
                best_name: best.map(|b| b.name.to_string()),
            },
        })
    }
}

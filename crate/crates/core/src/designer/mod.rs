//! Turns prompts into validated candidate architectures: one chat round trip
//! per attempt, extraction of the architecture document from the reply, and
//! validation against the search space. Invalid replies are retried with the
//! violation list appended to the prompt.

mod backend;
mod extract;

pub use backend::{
    chat_request_body, parse_chat_response, ChatBackend, HttpBackend, LlmConfig, ScriptedBackend,
};
pub use extract::{extract_architecture, extract_with_default_name};

use std::fmt::Write as _;

use thiserror::Error;

use crate::arch::{validate, Architecture, Choices, ValidationReport, Violation, ViolationCode};
use crate::prompt::PromptBundle;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LlmError {
    #[error("llm config: {0}")]
    Config(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("api error {status}: {body}")]
    Api { status: u16, body: String },
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("scripted backend has no replies left")]
    ScriptExhausted,
    #[error("extraction failed: {0}")]
    Extraction(String),
}

#[derive(Debug, Error)]
pub enum DesignError {
    /// Backend failure; `replies` holds the replies received before it.
    #[error("{source}")]
    Llm {
        #[source]
        source: LlmError,
        replies: Vec<String>,
    },
    #[error("no valid architecture after {attempts} attempts")]
    ExhaustedRetries {
        attempts: u32,
        last_report: ValidationReport,
        raw_replies: Vec<String>,
    },
}

impl DesignError {
    /// Replies the backend produced before the failure.
    pub fn replies(&self) -> &[String] {
        match self {
            DesignError::Llm { replies, .. } | DesignError::ExhaustedRetries { raw_replies: replies, .. } => replies,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignOutcome {
    pub architecture: Architecture,
    pub attempts: u32,
    pub raw_replies: Vec<String>,
}

/// Inputs that stay fixed across the attempts of one design request.
#[derive(Debug, Clone, Copy)]
pub struct DesignRequest<'a> {
    pub bundle: &'a PromptBundle,
    pub choices: &'a Choices,
    pub max_retries: u32,
    /// Already-searched architectures; structural repeats count as failures.
    pub known: &'a [&'a Architecture],
    /// Name used when the reply's document omits one.
    pub default_name: Option<&'a str>,
}

/// Correction paragraph appended to the prompt after an unusable reply.
pub fn feedback_paragraph(violations: &[Violation]) -> String {
    let mut out =
        String::from("Your previous reply could not be used as a valid DNN architecture:\n");
    for v in violations {
        let _ = writeln!(out, "- {v}");
    }
    out.push_str(
        "Redo the design so that every problem above is fixed, and reply with one complete architecture document.",
    );
    out
}

/// Ask, extract, validate; repeat until valid or `max_retries` replies were spent.
/// Transport and API failures end the loop immediately.
pub fn design_candidate(
    backend: &mut dyn ChatBackend,
    request: DesignRequest<'_>,
) -> Result<DesignOutcome, DesignError> {
    let max = request.max_retries.max(1);
    let mut prompt = request.bundle.clone();
    let mut raw_replies = Vec::new();
    let mut last_report = ValidationReport::from_violations(Vec::new());

    for attempt in 1..=max {
        let reply = match backend.complete(&prompt) {
            Ok(r) => r,
            Err(source) => {
                return Err(DesignError::Llm {
                    source,
                    replies: raw_replies,
                })
            }
        };
        let extracted = extract_with_default_name(&reply, request.default_name);
        raw_replies.push(reply);

        last_report = match extracted {
            Err(e) => ValidationReport::from_violations(vec![Violation::new(
                None,
                ViolationCode::Unparseable,
                e.to_string(),
            )]),
            Ok(arch) => {
                let report = validate(&arch, request.choices);
                let duplicate = request
                    .known
                    .iter()
                    .find(|k| k.same_structure(&arch));
                match (report.valid, duplicate) {
                    (true, None) => {
                        return Ok(DesignOutcome {
                            architecture: arch,
                            attempts: attempt,
                            raw_replies,
                        })
                    }
                    (true, Some(existing)) => ValidationReport::from_violations(vec![Violation::new(
                        None,
                        ViolationCode::Duplicate,
                        format!(
                            "identical to the already evaluated architecture `{}`",
                            existing.name
                        ),
                    )]),
                    (false, _) => report,
                }
            }
        };
        prompt = request
            .bundle
            .with_feedback(&feedback_paragraph(&last_report.violations));
    }

    Err(DesignError::ExhaustedRetries {
        attempts: max,
        last_report,
        raw_replies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::PromptMetadata;

    const VALID: &str = r#"```json
{"name":"ok","input":{"channels":3,"height":32,"width":32},"num_classes":8,"layers":[
{"op":"conv2d","out_channels":16,"kernel":3,"stride":1,"padding":1,"bias":true},
{"op":"global_pool","kind":"avg"},{"op":"flatten"},{"op":"dense","out_features":8,"bias":true}]}
```"#;

    fn bundle() -> PromptBundle {
        PromptBundle {
            system_text: "system".into(),
            user_text: "design something".into(),
            metadata: PromptMetadata {
                iteration: 1,
                best_name: None,
            },
        }
    }

    fn request<'a>(b: &'a PromptBundle, c: &'a Choices, known: &'a [&'a Architecture]) -> DesignRequest<'a> {
        DesignRequest {
            bundle: b,
            choices: c,
            max_retries: 3,
            known,
            default_name: None,
        }
    }

    #[test]
    fn valid_first_reply() {
        let mut mock = ScriptedBackend::new([VALID]);
        let (b, c) = (bundle(), Choices::default());
        let out = design_candidate(&mut mock, request(&b, &c, &[])).unwrap();
        assert_eq!(out.attempts, 1);
        assert_eq!(out.raw_replies.len(), 1);
        assert_eq!(out.architecture.name, "ok");
    }

    #[test]
    fn invalid_then_valid_retries_with_feedback() {
        let bad_shape = VALID.replace(r#""out_features":8"#, r#""out_features":5"#);
        let mut mock = ScriptedBackend::new([bad_shape.as_str(), VALID]);
        let (b, c) = (bundle(), Choices::default());
        let out = design_candidate(&mut mock, request(&b, &c, &[])).unwrap();
        assert_eq!(out.attempts, 2);
        assert_eq!(mock.prompts().len(), 2);
        assert_eq!(mock.prompts()[0], b);
        let retry = &mock.prompts()[1].user_text;
        assert!(retry.starts_with("design something\n\n"));
        assert!(retry.contains("SHAPE_ERROR"), "{retry}");
    }

    #[test]
    fn exhausted_retries_carry_last_report() {
        let kernel4 = VALID.replace(r#""kernel":3"#, r#""kernel":4"#);
        let mut mock = ScriptedBackend::new(["no design", kernel4.as_str(), kernel4.as_str()]);
        let (b, c) = (bundle(), Choices::default());
        match design_candidate(&mut mock, request(&b, &c, &[])) {
            Err(DesignError::ExhaustedRetries {
                attempts,
                last_report,
                raw_replies,
            }) => {
                assert_eq!(attempts, 3);
                assert_eq!(raw_replies.len(), 3);
                assert!(!last_report.valid);
                assert_eq!(last_report.violations[0].code, ViolationCode::KernelNotAllowed);
            }
            other => panic!("{other:?}"),
        }
        assert!(mock.prompts()[1].user_text.contains("UNPARSEABLE"));
    }

    #[test]
    fn duplicates_are_failed_attempts() {
        let known = crate::designer::extract_architecture(VALID).unwrap();
        let renamed = VALID.replace("\"ok\"", "\"ok2\"");
        let different = VALID.replace(r#""out_channels":16"#, r#""out_channels":32"#);
        let mut mock = ScriptedBackend::new([renamed.as_str(), different.as_str()]);
        let (b, c) = (bundle(), Choices::default());
        let known_refs = [&known];
        let out = design_candidate(&mut mock, request(&b, &c, &known_refs)).unwrap();
        assert_eq!(out.attempts, 2);
        assert!(mock.prompts()[1].user_text.contains("DUPLICATE"));
    }

    #[test]
    fn backend_errors_propagate_immediately() {
        let mut mock = ScriptedBackend::new(Vec::<String>::new());
        let (b, c) = (bundle(), Choices::default());
        assert!(matches!(
            design_candidate(&mut mock, request(&b, &c, &[])),
            Err(DesignError::Llm {
                source: LlmError::ScriptExhausted,
                ..
            })
        ));
        assert_eq!(mock.prompts().len(), 1);
    }
}

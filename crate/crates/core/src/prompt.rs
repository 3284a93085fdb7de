//! Initial prompts, feedback messages and conversation state.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SYSTEM_PROMPT: &str = include_str!("../templates/system.txt");

const BASELINE: &str = include_str!("../templates/prompt_baseline.txt");
const BIC_CHANGED: &str = include_str!("../templates/prompt_bic_changed.txt");
const BIC_UNCHANGED: &str = include_str!("../templates/prompt_bic_unchanged.txt");
const FEEDBACK_COMPILE: &str = include_str!("../templates/feedback_compile.txt");
const FEEDBACK_FUNCTIONAL: &str = include_str!("../templates/feedback_functional.txt");
const FEEDBACK_NOCODE: &str = include_str!("../templates/feedback_nocode.txt");
const FEEDBACK_TIMEOUT: &str = include_str!("../templates/feedback_timeout.txt");

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("bug context has no failing tests")]
    NoFailingTests,
    #[error("inducing-change prompt needs {0}")]
    MissingBicContext(&'static str),
    #[error("{0} feedback needs a non-empty error message")]
    EmptyFeedback(&'static str),
    #[error("sampling budget of {0} calls is spent")]
    BudgetExhausted(u32),
    #[error("zero-shot conversations do not take feedback")]
    NotConversational,
    #[error("expected an assistant reply, got a {0} message")]
    NotAReply(Role),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptMode {
    Baseline,
    WithBic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    ZeroShot,
    Conversational,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailingTest {
    pub test_name: String,
    pub error_type: String,
    pub error_message: String,
}

/// What the model is told about a bug.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BugContext {
    pub buggy_function_source: String,
    pub failing_tests: Vec<FailingTest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bic_diff: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bic_commit_message: Option<String>,
    pub function_changed_in_bic: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "case", content = "message", rename_all = "snake_case")]
pub enum FeedbackCase {
    CompilationError(String),
    FunctionalError(String),
    NoResponseCode,
    Timeout,
}

impl FeedbackCase {
    /// Lower is more severe.
    pub fn precedence(&self) -> u8 {
        match self {
            FeedbackCase::CompilationError(_) => 0,
            FeedbackCase::NoResponseCode => 1,
            FeedbackCase::Timeout => 2,
            FeedbackCase::FunctionalError(_) => 3,
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FeedbackCase::CompilationError(_) => "compilation_error",
            FeedbackCase::FunctionalError(_) => "functional_error",
            FeedbackCase::NoResponseCode => "no_response_code",
            FeedbackCase::Timeout => "timeout",
        }
    }

    /// The case reported when several apply at once.
    pub fn most_severe<I: IntoIterator<Item = FeedbackCase>>(cases: I) -> Option<FeedbackCase> {
        cases.into_iter().min_by_key(FeedbackCase::precedence)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Plausible,
    Rejected { feedback: FeedbackCase },
}

impl Verdict {
    pub fn is_plausible(&self) -> bool {
        matches!(self, Verdict::Plausible)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conversation {
    pub messages: Vec<Message>,
    pub attempt_index: u32,
    pub round_index: u32,
    pub mode: PromptMode,
    pub strategy: Strategy,
}

impl Conversation {
    /// The system prompt and the initial user prompt.
    pub fn initial_messages(&self) -> &[Message] {
        &self.messages[..2.min(self.messages.len())]
    }

    /// A fresh conversation with the same initial prompt and the next attempt
    /// number.
    pub fn restarted(&self) -> Conversation {
        Conversation {
            messages: self.initial_messages().to_vec(),
            attempt_index: self.attempt_index + 1,
            round_index: 1,
            mode: self.mode,
            strategy: self.strategy,
        }
    }

    /// One record per message. The system and initial user messages belong to
    /// round 1; each reply and the feedback on it share the reply's round.
    pub fn records(&self) -> Vec<MessageRecord> {
        self.messages
            .iter()
            .enumerate()
            .map(|(i, m)| MessageRecord {
                attempt: self.attempt_index,
                round: if i < 2 { 1 } else { (i as u32 - 2) / 2 + 1 },
                role: m.role,
                content: m.content.clone(),
            })
            .collect()
    }
}

/// One line of a message log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub attempt: u32,
    pub round: u32,
    pub role: Role,
    pub content: String,
}

impl MessageRecord {
    pub fn to_json_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("record serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub sampling_size: u32,
    pub max_conversation_length: u32,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            sampling_size: 10,
            max_conversation_length: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NextAction {
    /// The reply was plausible; the conversation includes it.
    Done(Conversation),
    Continue(Conversation),
    /// The conversation hit its length limit. `finished` holds the last reply
    /// and its feedback; `fresh` starts over from the initial prompt.
    Restart {
        finished: Conversation,
        fresh: Conversation,
    },
}

/// Substitutes `{name}` tokens in one pass; substituted text is not rescanned
/// and unknown tokens are left as they are. One trailing newline is dropped.
fn render(template: &str, vars: &BTreeMap<&str, &str>) -> String {
    let template = template.strip_suffix('\n').unwrap_or(template);
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_lowercase() || c == '_'))
            .unwrap_or(after.len());
        let name = &after[..name_len];
        match (after[name_len..].starts_with('}'), vars.get(name)) {
            (true, Some(value)) if !name.is_empty() => {
                out.push_str(value);
                rest = &after[name_len + 1..];
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

fn trim_block(s: &str) -> &str {
    s.trim_end_matches(['\n', '\r'])
}

fn render_failing_tests(tests: &[FailingTest]) -> String {
    tests
        .iter()
        .enumerate()
        .map(|(i, t)| {
            format!(
                "{}. Test: {}\n   Error type: {}\n   Error message: {}",
                i + 1,
                t.test_name,
                t.error_type,
                t.error_message
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// The user message of the initial prompt.
pub fn initial_user_prompt(ctx: &BugContext, mode: PromptMode) -> Result<String, PromptError> {
    if ctx.failing_tests.is_empty() {
        return Err(PromptError::NoFailingTests);
    }
    let function = trim_block(&ctx.buggy_function_source);
    let tests = render_failing_tests(&ctx.failing_tests);
    let mut vars = BTreeMap::from([("function", function), ("failing_tests", tests.as_str())]);
    let template = match mode {
        PromptMode::Baseline => BASELINE,
        PromptMode::WithBic => {
            let msg = ctx
                .bic_commit_message
                .as_deref()
                .ok_or(PromptError::MissingBicContext("a commit message"))?;
            vars.insert("bic_commit_message", trim_block(msg));
            if ctx.function_changed_in_bic {
                let diff = ctx
                    .bic_diff
                    .as_deref()
                    .ok_or(PromptError::MissingBicContext("a diff of the buggy function"))?;
                vars.insert("bic_diff", trim_block(diff));
                BIC_CHANGED
            } else {
                BIC_UNCHANGED
            }
        }
    };
    Ok(render(template, &vars))
}

pub fn build_initial_prompt(
    ctx: &BugContext,
    mode: PromptMode,
    strategy: Strategy,
) -> Result<Conversation, PromptError> {
    let user = initial_user_prompt(ctx, mode)?;
    Ok(Conversation {
        messages: vec![Message::system(trim_block(SYSTEM_PROMPT)), Message::user(user)],
        attempt_index: 1,
        round_index: 1,
        mode,
        strategy,
    })
}

pub fn build_feedback(case: &FeedbackCase) -> Result<Message, PromptError> {
    let (template, msg) = match case {
        FeedbackCase::CompilationError(m) => (FEEDBACK_COMPILE, Some(("compilation", m))),
        FeedbackCase::FunctionalError(m) => (FEEDBACK_FUNCTIONAL, Some(("functional", m))),
        FeedbackCase::NoResponseCode => (FEEDBACK_NOCODE, None),
        FeedbackCase::Timeout => (FEEDBACK_TIMEOUT, None),
    };
    let mut vars = BTreeMap::new();
    if let Some((kind, m)) = msg {
        let m = trim_block(m);
        if m.trim().is_empty() {
            return Err(PromptError::EmptyFeedback(kind));
        }
        vars.insert("error_message", m);
    }
    Ok(Message::user(render(template, &vars)))
}

/// Moves a conversational repair forward after a reply was judged.
/// `calls_made` counts model calls for this bug so far, including the one
/// that produced `reply`.
pub fn advance(
    conv: &Conversation,
    reply: Message,
    verdict: &Verdict,
    cfg: &LoopConfig,
    calls_made: u32,
) -> Result<NextAction, PromptError> {
    if conv.strategy != Strategy::Conversational {
        return Err(PromptError::NotConversational);
    }
    if reply.role != Role::Assistant {
        return Err(PromptError::NotAReply(reply.role));
    }
    let mut next = conv.clone();
    next.messages.push(reply);
    let feedback = match verdict {
        Verdict::Plausible => return Ok(NextAction::Done(next)),
        Verdict::Rejected { feedback } => feedback,
    };
    if calls_made >= cfg.sampling_size {
        return Err(PromptError::BudgetExhausted(cfg.sampling_size));
    }
    next.messages.push(build_feedback(feedback)?);
    if conv.round_index + 1 > cfg.max_conversation_length {
        let fresh = conv.restarted();
        Ok(NextAction::Restart {
            finished: next,
            fresh,
        })
    } else {
        next.round_index += 1;
        Ok(NextAction::Continue(next))
    }
}

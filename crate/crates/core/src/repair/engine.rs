use std::time::Duration;

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};

use super::{apply_patch, build_context, extract_patch, validate_patch, Extraction, RepairError};
use crate::adapter::{self, StoredBug, Workspace};
use crate::gateway::{estimate_cost, CallTag, ChatClient, CostModel, ModelConfig, ModelReply};
use crate::model::SnapshotRole;
use crate::prompt::{
    advance, build_feedback, build_initial_prompt, BugContext, Conversation, FeedbackCase,
    LoopConfig, Message, MessageRecord, NextAction, PromptError, PromptMode, Role, Strategy,
    Verdict,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepairConfig {
    pub strategy: Strategy,
    pub mode: PromptMode,
    pub loop_cfg: LoopConfig,
    pub full_suite: bool,
    pub test_timeout: Duration,
    pub model: ModelConfig,
    pub cost: CostModel,
}

impl RepairConfig {
    pub fn new(strategy: Strategy, mode: PromptMode) -> Self {
        RepairConfig {
            strategy,
            mode,
            loop_cfg: LoopConfig::default(),
            full_suite: true,
            test_timeout: adapter::DEFAULT_TEST_TIMEOUT,
            model: ModelConfig::default(),
            cost: CostModel::GPT_4O,
        }
    }
}

/// One model call and what came of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub call: u32,
    pub attempt: u32,
    pub round: u32,
    pub prompt_tokens: u64,
    pub reply_tokens: u64,
    pub cost: Decimal,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction: Option<Extraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum FinalOutcome {
    Plausible {
        call: u32,
        patch: String,
        patch_file: String,
    },
    Exhausted,
    Aborted {
        error: String,
        fatal: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairTrace {
    pub bug_id: String,
    pub strategy: Strategy,
    pub mode: PromptMode,
    pub model: String,
    pub calls: Vec<CallRecord>,
    #[serde(rename = "final")]
    pub final_outcome: FinalOutcome,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total_cost: Decimal,
    pub message_log: String,
}

impl RepairTrace {
    pub fn is_plausible(&self) -> bool {
        matches!(self.final_outcome, FinalOutcome::Plausible { .. })
    }

    pub fn is_fatal(&self) -> bool {
        matches!(self.final_outcome, FinalOutcome::Aborted { fatal: true, .. })
    }
}

pub fn trace_file_name(bug_id: &str) -> String {
    format!("trace-{bug_id}.json")
}

pub fn message_log_name(bug_id: &str) -> String {
    format!("messages-{bug_id}.jsonl")
}

/// Relative to the output directory.
pub fn patch_file_name(bug_id: &str, call: u32) -> String {
    format!("patches/{bug_id}/attempt-{call}.patch")
}

/// Everything a repair run produced for one bug; nothing is written to disk.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RepairOutput {
    pub trace: RepairTrace,
    pub messages: Vec<MessageRecord>,
    /// (relative path, unified diff)
    pub patches: Vec<(String, String)>,
}

impl RepairOutput {
    pub fn message_log(&self) -> String {
        self.messages.iter().map(MessageRecord::to_json_line).collect()
    }
}

struct Run<'a> {
    bug: &'a StoredBug,
    client: &'a dyn ChatClient,
    cfg: &'a RepairConfig,
    ws: Workspace,
    out: RepairOutput,
}

struct Judged {
    verdict: Verdict,
    extraction: Option<Extraction>,
    patch_file: Option<String>,
    function_source: Option<String>,
}

impl<'a> Run<'a> {
    fn new(
        bug: &'a StoredBug,
        client: &'a dyn ChatClient,
        cfg: &'a RepairConfig,
        ws: Workspace,
    ) -> Self {
        let id = &bug.instance.bug_id;
        Run {
            bug,
            client,
            cfg,
            ws,
            out: RepairOutput {
                trace: RepairTrace {
                    bug_id: id.clone(),
                    strategy: cfg.strategy,
                    mode: cfg.mode,
                    model: cfg.model.model_name.clone(),
                    calls: Vec::new(),
                    final_outcome: FinalOutcome::Exhausted,
                    input_tokens: 0,
                    output_tokens: 0,
                    total_cost: Decimal::ZERO,
                    message_log: message_log_name(id),
                },
                messages: Vec::new(),
                patches: Vec::new(),
            },
        }
    }

    fn log(&mut self, attempt: u32, round: u32, m: &Message) {
        self.out.messages.push(MessageRecord {
            attempt,
            round,
            role: m.role,
            content: m.content.clone(),
        });
    }

    fn log_initial(&mut self, conv: &Conversation) {
        for m in conv.initial_messages().to_vec() {
            self.log(conv.attempt_index, 1, &m);
        }
    }

    fn call(&self, conv: &Conversation) -> Result<ModelReply, crate::gateway::GatewayError> {
        let tag = CallTag {
            bug_id: &self.bug.instance.bug_id,
            call_index: self.out.trace.calls.len() as u32,
        };
        self.client.complete(tag, &conv.messages, &self.cfg.model)
    }

    fn judge(&mut self, reply: &str, call: u32) -> Result<Judged, RepairError> {
        let target = &self.bug.instance.buggy_function;
        let Some(candidate) = extract_patch(reply, target) else {
            return Ok(Judged {
                verdict: Verdict::Rejected {
                    feedback: FeedbackCase::NoResponseCode,
                },
                extraction: None,
                patch_file: None,
                function_source: None,
            });
        };
        let patched = apply_patch(&self.ws, target, &candidate)?;
        let name = patch_file_name(&self.bug.instance.bug_id, call);
        self.out.patches.push((name.clone(), patched.unified_diff()));
        let report = validate_patch(
            &patched,
            &self.bug.instance.witness_tests,
            self.cfg.full_suite,
            self.cfg.test_timeout,
        );
        self.ws = patched.rollback()?;
        Ok(Judged {
            verdict: report?.verdict,
            extraction: Some(candidate.extraction),
            patch_file: Some(name),
            function_source: Some(candidate.function_source),
        })
    }

    fn record(&mut self, conv: &Conversation, reply: Option<&ModelReply>, judged: Option<&Judged>, error: Option<String>) {
        let (input, output) = reply.map(|r| (r.input_tokens, r.output_tokens)).unwrap_or((0, 0));
        let cost = estimate_cost(input, output, &self.cfg.cost);
        let t = &mut self.out.trace;
        t.input_tokens += input;
        t.output_tokens += output;
        t.total_cost += cost;
        t.calls.push(CallRecord {
            call: t.calls.len() as u32 + 1,
            attempt: conv.attempt_index,
            round: conv.round_index,
            prompt_tokens: input,
            reply_tokens: output,
            cost,
            extraction: judged.and_then(|j| j.extraction),
            patch_file: judged.and_then(|j| j.patch_file.clone()),
            verdict: judged.map(|j| j.verdict.clone()),
            error,
        });
    }

    /// Makes one call and judges it. `None` means the call failed and was
    /// recorded; the caller decides whether to go on.
    fn step(&mut self, conv: &Conversation) -> Result<Option<(ModelReply, Judged)>, RepairError> {
        let reply = match self.call(conv) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("{}: model call failed: {e}", self.bug.instance.bug_id);
                self.record(conv, None, None, Some(e.to_string()));
                if e.is_fatal() {
                    return Err(RepairError::Gateway(e));
                }
                return Ok(None);
            }
        };
        let call = self.out.trace.calls.len() as u32 + 1;
        let judged = self.judge(&reply.content, call)?;
        self.record(conv, Some(&reply), Some(&judged), None);
        self.log(conv.attempt_index, conv.round_index, &Message::assistant(reply.content.clone()));
        Ok(Some((reply, judged)))
    }

    fn plausible(&mut self, judged: Judged) {
        let call = self.out.trace.calls.len() as u32;
        self.out.trace.final_outcome = FinalOutcome::Plausible {
            call,
            patch: judged.function_source.unwrap_or_default(),
            patch_file: judged.patch_file.unwrap_or_default(),
        };
    }

    fn zero_shot(&mut self, initial: Conversation) -> Result<(), RepairError> {
        for attempt in 1..=self.cfg.loop_cfg.sampling_size {
            let conv = Conversation {
                attempt_index: attempt,
                ..initial.clone()
            };
            self.log_initial(&conv);
            if let Some((_, judged)) = self.step(&conv)? {
                if judged.verdict.is_plausible() {
                    self.plausible(judged);
                    return Ok(());
                }
            }
        }
        Ok(())
    }

    fn conversational(&mut self, initial: Conversation) -> Result<(), RepairError> {
        let budget = self.cfg.loop_cfg.sampling_size;
        let mut conv = initial;
        self.log_initial(&conv);
        while (self.out.trace.calls.len() as u32) < budget {
            let Some((reply, judged)) = self.step(&conv)? else { continue };
            let calls = self.out.trace.calls.len() as u32;
            let verdict = judged.verdict.clone();
            match advance(&conv, Message::assistant(reply.content), &verdict, &self.cfg.loop_cfg, calls) {
                Ok(NextAction::Done(_)) => {
                    self.plausible(judged);
                    return Ok(());
                }
                Ok(NextAction::Continue(next)) => {
                    let fb = next.messages.last().expect("feedback").clone();
                    self.log(conv.attempt_index, conv.round_index, &fb);
                    conv = next;
                }
                Ok(NextAction::Restart { finished, fresh }) => {
                    let fb = finished.messages.last().expect("feedback").clone();
                    self.log(conv.attempt_index, conv.round_index, &fb);
                    conv = fresh;
                    self.log_initial(&conv);
                }
                Err(PromptError::BudgetExhausted(_)) => {
                    if let Verdict::Rejected { feedback } = &verdict {
                        let fb = build_feedback(feedback)?;
                        self.log(conv.attempt_index, conv.round_index, &fb);
                    }
                    return Ok(());
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(())
    }
}

/// Runs the configured strategy for one bug in a private pre-fixing checkout.
/// Errors that stop the bug early end up in the trace as `Aborted`.
pub fn repair_bug(
    bug: &StoredBug,
    ctx: &BugContext,
    client: &dyn ChatClient,
    cfg: &RepairConfig,
) -> RepairOutput {
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return aborted(bug, cfg, RepairError::Io(e.to_string())),
    };
    let ws = match adapter::checkout(bug, SnapshotRole::PreFixing, &dir.path().join("ws")) {
        Ok(ws) => ws,
        Err(e) => return aborted(bug, cfg, e.into()),
    };
    let mut run = Run::new(bug, client, cfg, ws);
    let result = build_initial_prompt(ctx, cfg.mode, cfg.strategy)
        .map_err(RepairError::from)
        .and_then(|conv| match cfg.strategy {
            Strategy::ZeroShot => run.zero_shot(conv),
            Strategy::Conversational => run.conversational(conv),
        });
    if let Err(e) = result {
        run.out.trace.final_outcome = FinalOutcome::Aborted {
            fatal: e.is_fatal(),
            error: e.to_string(),
        };
    }
    run.out
}

/// Builds the prompt context from the store and repairs. A context failure
/// yields an `Aborted` trace with no calls.
pub fn repair_from_store(bug: &StoredBug, client: &dyn ChatClient, cfg: &RepairConfig) -> RepairOutput {
    match build_context(bug, cfg.test_timeout) {
        Ok(ctx) => repair_bug(bug, &ctx, client, cfg),
        Err(e) => aborted(bug, cfg, e),
    }
}

fn aborted(bug: &StoredBug, cfg: &RepairConfig, e: RepairError) -> RepairOutput {
    let id = &bug.instance.bug_id;
    RepairOutput {
        trace: RepairTrace {
            bug_id: id.clone(),
            strategy: cfg.strategy,
            mode: cfg.mode,
            model: cfg.model.model_name.clone(),
            calls: Vec::new(),
            final_outcome: FinalOutcome::Aborted {
                fatal: e.is_fatal(),
                error: e.to_string(),
            },
            input_tokens: 0,
            output_tokens: 0,
            total_cost: Decimal::ZERO,
            message_log: message_log_name(id),
        },
        messages: Vec::new(),
        patches: Vec::new(),
    }
}

pub fn repair_zero_shot(
    bug: &StoredBug,
    ctx: &BugContext,
    client: &dyn ChatClient,
    cfg: &RepairConfig,
) -> RepairOutput {
    let cfg = RepairConfig {
        strategy: Strategy::ZeroShot,
        ..cfg.clone()
    };
    repair_bug(bug, ctx, client, &cfg)
}

pub fn repair_conversational(
    bug: &StoredBug,
    ctx: &BugContext,
    client: &dyn ChatClient,
    cfg: &RepairConfig,
) -> RepairOutput {
    let cfg = RepairConfig {
        strategy: Strategy::Conversational,
        ..cfg.clone()
    };
    repair_bug(bug, ctx, client, &cfg)
}

/// Feedback messages in a message log, in order.
pub fn feedback_messages(records: &[MessageRecord]) -> Vec<&MessageRecord> {
    let mut out = Vec::new();
    let mut after_reply = false;
    for r in records {
        match r.role {
            Role::Assistant => after_reply = true,
            Role::User if after_reply => {
                out.push(r);
                after_reply = false;
            }
            _ => after_reply = false,
        }
    }
    out
}

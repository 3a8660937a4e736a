//! Judging a whole study set with a bounded number of requests in flight.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use regrel_core::judge::{judge, ChatProvider, JudgeConfig, JudgeError, JudgeWarning, LlmJudgment, PromptBundle};
use regrel_core::process::ProcessModel;
use regrel_core::ParaId;

pub type JudgeOutcome = Result<(LlmJudgment, Vec<JudgeWarning>), JudgeError>;

/// Judges every bundle exactly once, with at most `max_in_flight` requests
/// outstanding. Results come back in bundle order.
pub fn judge_all<P: ChatProvider + Sync + ?Sized>(
    provider: &P,
    bundles: &[PromptBundle],
    model: &ProcessModel,
    config: &JudgeConfig,
    max_in_flight: usize,
) -> Vec<(ParaId, JudgeOutcome)> {
    let workers = max_in_flight.clamp(1, bundles.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<JudgeOutcome>>> = bundles.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(bundle) = bundles.get(i) else { break };
                let outcome = judge(&provider, bundle, model, config);
                *slots[i].lock().expect("slot lock") = Some(outcome);
            });
        }
    });
    bundles
        .iter()
        .zip(slots)
        .map(|(b, slot)| {
            let outcome = slot.into_inner().expect("slot lock").expect("every bundle judged");
            (b.para_id.clone(), outcome)
        })
        .collect()
}

//! Trace-level checks of the stack protocol.

use crate::runtime::{Direction, MachineId, TraceRecord};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ProtocolViolation {
    #[error("step {step}: {executor} received a second plan while one was outstanding")]
    OverlappingPlans { step: u64, executor: MachineId },
    #[error("{executor} never finished its last plan")]
    Unfinished { executor: MachineId },
    #[error("step {step}: {executor} actuated without a decision")]
    UnguardedCommand { step: u64, executor: MachineId },
}

/// Checks, per plan executor:
/// * at most one plan outstanding at any time,
/// * every received plan is answered by `PlanDone` or `PlanAborted`
///   (skipped when the run was truncated),
/// * every `Act` sent to the simulator directly follows a decision reply.
pub fn check_protocol(trace: &[TraceRecord], truncated: bool) -> Result<(), ProtocolViolation> {
    let mut outstanding: BTreeMap<MachineId, bool> = BTreeMap::new();
    let mut decided: BTreeMap<MachineId, bool> = BTreeMap::new();
    for r in trace.iter().filter(|r| r.name.starts_with("PlanExecutor")) {
        let ex = r.machine;
        match (r.dir, r.event_kind.as_str()) {
            (Direction::Recv, "PlanReady") => {
                if outstanding.insert(ex, true) == Some(true) {
                    return Err(ProtocolViolation::OverlappingPlans {
                        step: r.step,
                        executor: ex,
                    });
                }
            }
            (Direction::Emit, "PlanDone" | "PlanAborted") => {
                outstanding.insert(ex, false);
            }
            (Direction::Recv, "CheckReply") => {
                decided.insert(ex, true);
            }
            (Direction::Recv, _) => {
                decided.insert(ex, false);
            }
            (Direction::Emit, "SimCommand")
                if r.payload["SimCommand"]["op"] == "act" && decided.get(&ex) != Some(&true) =>
            {
                return Err(ProtocolViolation::UnguardedCommand {
                    step: r.step,
                    executor: ex,
                });
            }
            _ => {}
        }
    }
    if !truncated {
        if let Some((&executor, _)) = outstanding.iter().find(|(_, open)| **open) {
            return Err(ProtocolViolation::Unfinished { executor });
        }
    }
    Ok(())
}

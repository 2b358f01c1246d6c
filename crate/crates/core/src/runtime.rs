//! Event-driven machine runtime.
//!
//! Each machine owns a FIFO mailbox and handles one event at a time,
//! run-to-completion. A single scheduler picks which non-empty mailbox is
//! served next, either round-robin over machine ids or from a seeded RNG, so
//! that a fixed `(seed, policy, initial machines)` always produces the same
//! interleaving and the same trace.
//!
//! Every delivery, emission, spawn, routing failure and rejected event is
//! written as a [`TraceRecord`]; the serialized record stream is what the
//! replay tooling compares byte for byte.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MachineId(pub u32);

impl fmt::Display for MachineId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Message payloads carried by events. The kind string is what shows up as
/// `event_kind` in the trace.
pub trait Payload: Clone + Serialize + Send + fmt::Debug + 'static {
    fn kind(&self) -> &'static str;
}

#[derive(Clone, Debug)]
pub struct Event<M> {
    pub sender: MachineId,
    pub dest: MachineId,
    /// Per `(sender, dest)` sequence number, starting at 1.
    pub seq: u64,
    pub payload: M,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MachineError {
    /// The event was malformed for the current state; it is traced and skipped.
    #[error("rejected: {0}")]
    Rejected(String),
    /// The machine is broken; the run aborts.
    #[error("fault: {0}")]
    Fault(String),
}

pub trait Machine<M: Payload>: Send {
    fn name(&self) -> String;

    fn state(&self) -> String;

    /// Entry action, run once at spawn before any event is delivered.
    fn on_start(&mut self, _ctx: &mut Context<'_, M>) -> Result<(), MachineError> {
        Ok(())
    }

    fn handle(&mut self, event: &Event<M>, ctx: &mut Context<'_, M>) -> Result<(), MachineError>;
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RuntimeError {
    #[error("machine {0} is already registered")]
    DuplicateMachine(MachineId),
    #[error("runtime has terminated")]
    Terminated,
    #[error("max steps must be positive")]
    ZeroStepBudget,
    #[error("machine {machine} ({name}) failed on {event_kind} from {sender}: {reason}")]
    HandlerFault {
        machine: MachineId,
        name: String,
        event_kind: String,
        sender: MachineId,
        reason: String,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Policy {
    RoundRobin,
    #[default]
    SeededRandom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Recv,
    Emit,
    Drop,
    Spawn,
    Reject,
}

/// One line of the run log. Field order is the serialization order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: u64,
    pub tick: u64,
    pub machine: MachineId,
    pub name: String,
    pub dir: Direction,
    pub peer: MachineId,
    pub seq: u64,
    pub event_kind: String,
    pub payload: serde_json::Value,
    pub state_before: String,
    pub state_after: String,
}

#[derive(Default)]
struct IdAllocator {
    next: u32,
    reserved: BTreeSet<MachineId>,
}

impl IdAllocator {
    fn reserve(&mut self) -> MachineId {
        let id = MachineId(self.next);
        self.next += 1;
        self.reserved.insert(id);
        id
    }
}

/// Handle given to machines while they run. Outgoing events and spawns are
/// buffered and routed by the runtime after the handler returns.
pub struct Context<'a, M: Payload> {
    me: MachineId,
    outbox: Vec<(MachineId, M)>,
    spawns: Vec<(MachineId, Box<dyn Machine<M>>)>,
    ids: &'a mut IdAllocator,
    tick: &'a mut u64,
}

impl<'a, M: Payload> Context<'a, M> {
    pub fn id(&self) -> MachineId {
        self.me
    }

    pub fn send(&mut self, dest: MachineId, payload: M) {
        self.outbox.push((dest, payload));
    }

    /// Allocate an id ahead of spawning, so machines can be wired to each
    /// other before any of them exists.
    pub fn reserve(&mut self) -> MachineId {
        self.ids.reserve()
    }

    pub fn spawn(&mut self, machine: Box<dyn Machine<M>>) -> MachineId {
        let id = self.ids.reserve();
        self.spawns.push((id, machine));
        id
    }

    pub fn spawn_at(&mut self, id: MachineId, machine: Box<dyn Machine<M>>) {
        self.spawns.push((id, machine));
    }

    /// Logical world time as published by the simulator.
    pub fn tick(&self) -> u64 {
        *self.tick
    }

    pub fn set_tick(&mut self, tick: u64) {
        *self.tick = tick;
    }
}

struct Slot<M: Payload> {
    machine: Box<dyn Machine<M>>,
    mailbox: VecDeque<Event<M>>,
}

/// Result of [`Runtime::run_until_quiescent`].
#[derive(Clone, Debug, Default)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub steps: u64,
    /// Step budget ran out before every mailbox drained.
    pub truncated: bool,
}

pub struct Runtime<M: Payload> {
    slots: BTreeMap<MachineId, Slot<M>>,
    ids: IdAllocator,
    seqs: BTreeMap<(MachineId, MachineId), u64>,
    policy: Policy,
    rng: ChaCha8Rng,
    last_served: Option<MachineId>,
    step: u64,
    tick: u64,
    terminated: bool,
    records: Vec<TraceRecord>,
}

impl<M: Payload> Runtime<M> {
    pub fn new(policy: Policy, seed: u64) -> Self {
        Self {
            slots: BTreeMap::new(),
            ids: IdAllocator::default(),
            seqs: BTreeMap::new(),
            policy,
            rng: ChaCha8Rng::seed_from_u64(seed),
            last_served: None,
            step: 0,
            tick: 0,
            terminated: false,
            records: Vec::new(),
        }
    }

    pub fn reserve(&mut self) -> MachineId {
        self.ids.reserve()
    }

    pub fn spawn(&mut self, machine: Box<dyn Machine<M>>) -> Result<MachineId, RuntimeError> {
        let id = self.ids.reserve();
        self.spawn_at(id, machine)?;
        Ok(id)
    }

    pub fn spawn_at(
        &mut self,
        id: MachineId,
        machine: Box<dyn Machine<M>>,
    ) -> Result<(), RuntimeError> {
        if self.terminated {
            return Err(RuntimeError::Terminated);
        }
        self.install(None, vec![(id, machine)])
    }

    pub fn machine_count(&self) -> usize {
        self.slots.len()
    }

    pub fn machine_ids(&self) -> Vec<MachineId> {
        self.slots.keys().copied().collect()
    }

    pub fn machine_name(&self, id: MachineId) -> Option<String> {
        self.slots.get(&id).map(|s| s.machine.name())
    }

    pub fn mailbox_len(&self, id: MachineId) -> Option<usize> {
        self.slots.get(&id).map(|s| s.mailbox.len())
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn take_records(&mut self) -> Vec<TraceRecord> {
        std::mem::take(&mut self.records)
    }

    pub fn terminate(&mut self) {
        self.terminated = true;
    }

    /// Inject an event from outside any machine (e.g. a test harness).
    pub fn send(&mut self, src: MachineId, dst: MachineId, payload: M) {
        let state = self
            .slots
            .get(&src)
            .map(|s| s.machine.state())
            .unwrap_or_default();
        let name = self
            .slots
            .get(&src)
            .map(|s| s.machine.name())
            .unwrap_or_default();
        self.route(src, &name, &state, &state, dst, payload);
    }

    /// Deliver one event. Returns the records produced by the step, or `None`
    /// at quiescence.
    pub fn step(&mut self) -> Result<Option<&[TraceRecord]>, RuntimeError> {
        let Some(id) = self.select() else {
            return Ok(None);
        };
        let first = self.records.len();
        self.step += 1;
        self.last_served = Some(id);

        let slot = self.slots.get_mut(&id).expect("selected machine exists");
        let event = slot
            .mailbox
            .pop_front()
            .expect("selected mailbox is non-empty");
        let name = slot.machine.name();
        let before = slot.machine.state();

        let mut ctx = Context {
            me: id,
            outbox: Vec::new(),
            spawns: Vec::new(),
            ids: &mut self.ids,
            tick: &mut self.tick,
        };
        let result = slot.machine.handle(&event, &mut ctx);
        let Context { outbox, spawns, .. } = ctx;
        let after = slot.machine.state();

        self.records.push(TraceRecord {
            step: self.step,
            tick: self.tick,
            machine: id,
            name: name.clone(),
            dir: Direction::Recv,
            peer: event.sender,
            seq: event.seq,
            event_kind: event.payload.kind().to_string(),
            payload: to_value(&event.payload),
            state_before: before.clone(),
            state_after: after.clone(),
        });

        match result {
            Ok(()) => {}
            Err(MachineError::Rejected(reason)) => {
                self.records.push(TraceRecord {
                    step: self.step,
                    tick: self.tick,
                    machine: id,
                    name: name.clone(),
                    dir: Direction::Reject,
                    peer: event.sender,
                    seq: event.seq,
                    event_kind: event.payload.kind().to_string(),
                    payload: serde_json::json!({ "reason": reason }),
                    state_before: before.clone(),
                    state_after: after.clone(),
                });
            }
            Err(MachineError::Fault(reason)) => {
                return Err(RuntimeError::HandlerFault {
                    machine: id,
                    name,
                    event_kind: event.payload.kind().to_string(),
                    sender: event.sender,
                    reason,
                });
            }
        }

        self.install(Some(id), spawns)?;
        for (dst, payload) in outbox {
            self.route(id, &name, &before, &after, dst, payload);
        }
        Ok(Some(&self.records[first..]))
    }

    pub fn run_until_quiescent(&mut self, max_steps: u64) -> Result<RunTrace, RuntimeError> {
        if max_steps == 0 {
            return Err(RuntimeError::ZeroStepBudget);
        }
        let start = self.step;
        let mut truncated = false;
        loop {
            if self.step - start >= max_steps {
                truncated = self.select().is_some();
                break;
            }
            if self.step()?.is_none() {
                break;
            }
        }
        Ok(RunTrace {
            records: self.take_records(),
            steps: self.step - start,
            truncated,
        })
    }

    fn select(&mut self) -> Option<MachineId> {
        let ready: Vec<MachineId> = self
            .slots
            .iter()
            .filter(|(_, s)| !s.mailbox.is_empty())
            .map(|(id, _)| *id)
            .collect();
        if ready.is_empty() {
            return None;
        }
        match self.policy {
            Policy::RoundRobin => {
                let next = self
                    .last_served
                    .and_then(|last| ready.iter().find(|id| **id > last).copied());
                Some(next.unwrap_or(ready[0]))
            }
            Policy::SeededRandom => Some(ready[self.rng.gen_range(0..ready.len())]),
        }
    }

    fn install(
        &mut self,
        parent: Option<MachineId>,
        spawns: Vec<(MachineId, Box<dyn Machine<M>>)>,
    ) -> Result<(), RuntimeError> {
        let mut started = Vec::with_capacity(spawns.len());
        for (id, machine) in spawns {
            if self.slots.contains_key(&id) {
                return Err(RuntimeError::DuplicateMachine(id));
            }
            if id.0 >= self.ids.next {
                self.ids.next = id.0 + 1;
            }
            self.ids.reserved.remove(&id);
            let name = machine.name();
            let state = machine.state();
            let owner = parent.unwrap_or(id);
            let (owner_name, owner_state) = match parent.and_then(|p| self.slots.get(&p)) {
                Some(p) => (p.machine.name(), p.machine.state()),
                None => (name.clone(), state.clone()),
            };
            self.records.push(TraceRecord {
                step: self.step,
                tick: self.tick,
                machine: owner,
                name: owner_name,
                dir: Direction::Spawn,
                peer: id,
                seq: 0,
                event_kind: "Spawn".to_string(),
                payload: serde_json::json!({ "name": name, "state": state }),
                state_before: owner_state.clone(),
                state_after: owner_state,
            });
            self.slots.insert(
                id,
                Slot {
                    machine,
                    mailbox: VecDeque::new(),
                },
            );
            started.push(id);
        }
        for id in started {
            let slot = self.slots.get_mut(&id).expect("just installed");
            let name = slot.machine.name();
            let before = slot.machine.state();
            let mut ctx = Context {
                me: id,
                outbox: Vec::new(),
                spawns: Vec::new(),
                ids: &mut self.ids,
                tick: &mut self.tick,
            };
            let result = slot.machine.on_start(&mut ctx);
            let Context { outbox, spawns, .. } = ctx;
            let after = slot.machine.state();
            if let Err(e) = result {
                return Err(RuntimeError::HandlerFault {
                    machine: id,
                    name,
                    event_kind: "Start".to_string(),
                    sender: id,
                    reason: e.to_string(),
                });
            }
            self.install(Some(id), spawns)?;
            for (dst, payload) in outbox {
                self.route(id, &name, &before, &after, dst, payload);
            }
        }
        Ok(())
    }

    fn route(
        &mut self,
        src: MachineId,
        name: &str,
        before: &str,
        after: &str,
        dst: MachineId,
        payload: M,
    ) {
        let seq = self.seqs.entry((src, dst)).or_insert(0);
        *seq += 1;
        let seq = *seq;
        let delivered = self.slots.contains_key(&dst);
        self.records.push(TraceRecord {
            step: self.step,
            tick: self.tick,
            machine: src,
            name: name.to_string(),
            dir: if delivered {
                Direction::Emit
            } else {
                Direction::Drop
            },
            peer: dst,
            seq,
            event_kind: payload.kind().to_string(),
            payload: to_value(&payload),
            state_before: before.to_string(),
            state_after: after.to_string(),
        });
        if let Some(slot) = self.slots.get_mut(&dst) {
            slot.mailbox.push_back(Event {
                sender: src,
                dest: dst,
                seq,
                payload,
            });
        }
    }
}

fn to_value<M: Serialize>(payload: &M) -> serde_json::Value {
    serde_json::to_value(payload).expect("payloads serialize to JSON")
}

/// Serialize records as JSON Lines.
pub fn to_jsonl(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

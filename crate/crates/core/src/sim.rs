//! Discrete-event simulation of the uplink / GPU / downlink pipeline.
//!
//! Radio hops are fluid FIFO bit queues drained at `full_rate * prbs /
//! prb_max`; a rate change applies immediately to the bits still queued.
//! After transmission a frame spends a fixed latency in flight before it
//! reaches the next hop. The GPU is a non-preemptive FIFO server whose
//! service time is locked in when a frame starts.
//!
//! Events are kept in a binary heap ordered by `(time, class, insertion)`.
//! Allocation changes use the lowest class so that a frame starting service
//! at a slot boundary already sees the new GPU frequency.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::ActionSpace;

/// Relative tolerance used when checking grid alignment.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("time {t} is before the current simulation time {now}")]
    PastTime { t: f64, now: f64 },
    #[error("time {t} is after the current simulation time {now}")]
    FutureTime { t: f64, now: f64 },
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("time {t} is not a multiple of the slot length {slot_len}")]
    NotSlotBoundary { t: f64, slot_len: f64 },
    #[error("{hop} allocation {value} is not in the action space {space:?}")]
    InvalidAllocation {
        hop: Hop,
        value: u32,
        space: Vec<u32>,
    },
    #[error("interval [{start}, {end}) is not aligned to the {step} s sub-interval grid")]
    Misaligned { start: f64, end: f64, step: f64 },
    #[error("invalid simulator configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Uplink,
    Downlink,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Hop {
    Uplink,
    Edge,
    Downlink,
}

impl Hop {
    pub const ALL: [Hop; 3] = [Hop::Uplink, Hop::Edge, Hop::Downlink];
}

impl fmt::Display for Hop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Hop::Uplink => "ul",
            Hop::Edge => "edge",
            Hop::Downlink => "dl",
        })
    }
}

impl From<Direction> for Hop {
    fn from(dir: Direction) -> Self {
        match dir {
            Direction::Uplink => Hop::Uplink,
            Direction::Downlink => Hop::Downlink,
        }
    }
}

/// One video frame's roundtrip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub flow_id: u32,
    pub seq: u64,
    pub ul_bits: f64,
    pub dl_bits: f64,
    pub t_sent: f64,
    pub t_edge_in: Option<f64>,
    pub t_edge_out: Option<f64>,
    pub t_received: Option<f64>,
}

impl Frame {
    pub fn new(flow_id: u32, seq: u64, ul_bits: f64, dl_bits: f64, t_sent: f64) -> Self {
        Self {
            flow_id,
            seq,
            ul_bits,
            dl_bits,
            t_sent,
            t_edge_in: None,
            t_edge_out: None,
            t_received: None,
        }
    }

    /// Time the frame entered `hop`, if it has.
    pub fn hop_entry(&self, hop: Hop) -> Option<f64> {
        match hop {
            Hop::Uplink => Some(self.t_sent),
            Hop::Edge => self.t_edge_in,
            Hop::Downlink => self.t_edge_out,
        }
    }

    /// Time the frame left `hop`, if it has.
    pub fn hop_exit(&self, hop: Hop) -> Option<f64> {
        match hop {
            Hop::Uplink => self.t_edge_in,
            Hop::Edge => self.t_edge_out,
            Hop::Downlink => self.t_received,
        }
    }

    pub fn hop_delay(&self, hop: Hop) -> Option<f64> {
        Some(self.hop_exit(hop)? - self.hop_entry(hop)?)
    }

    pub fn roundtrip(&self) -> Option<f64> {
        Some(self.t_received? - self.t_sent)
    }

    pub fn is_complete(&self) -> bool {
        self.t_received.is_some()
    }
}

/// Calibrated radio hop: linear rate in the number of PRBs plus a fixed
/// latency for everything outside the MAC queue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioHopModel {
    pub direction: Direction,
    pub full_rate: f64,
    pub prb_max: u32,
    pub fixed_latency: f64,
}

impl RadioHopModel {
    /// 22 Mbps at 106 PRBs with the DSUUU TDD pattern.
    pub fn uplink_default() -> Self {
        Self {
            direction: Direction::Uplink,
            full_rate: 22e6,
            prb_max: 106,
            fixed_latency: 0.0055,
        }
    }

    /// 44 Mbps at 106 PRBs with the DSUUU TDD pattern.
    pub fn downlink_default() -> Self {
        Self {
            direction: Direction::Downlink,
            full_rate: 44e6,
            prb_max: 106,
            fixed_latency: 0.0179,
        }
    }

    pub fn service_rate(&self, prbs: u32) -> f64 {
        self.full_rate * prbs as f64 / self.prb_max as f64
    }

    /// Bits one PRB carries over `interval` seconds.
    pub fn bits_per_prb(&self, interval: f64) -> f64 {
        self.full_rate * interval / self.prb_max as f64
    }
}

/// GPU inference latency as a function of clock frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpuHopModel {
    pub base_service: f64,
    pub f_max: f64,
    pub scaling_exponent: f64,
}

impl Default for GpuHopModel {
    fn default() -> Self {
        Self {
            base_service: 0.009,
            f_max: 1600.0,
            scaling_exponent: 1.0,
        }
    }
}

impl GpuHopModel {
    pub fn service_time(&self, mhz: f64) -> f64 {
        self.base_service * (self.f_max / mhz).powf(self.scaling_exponent)
    }
}

/// The three per-slot control actions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HopAllocation {
    pub ul_prbs: u32,
    pub gpu_mhz: u32,
    pub dl_prbs: u32,
}

impl HopAllocation {
    pub fn get(&self, hop: Hop) -> u32 {
        match hop {
            Hop::Uplink => self.ul_prbs,
            Hop::Edge => self.gpu_mhz,
            Hop::Downlink => self.dl_prbs,
        }
    }
}

/// Traffic seen by a radio hop during one sub-interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubIntervalSample {
    pub hop: Direction,
    pub arrived_bits: f64,
    pub backlog_bits: f64,
}

/// Queued quantity at a hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Backlog {
    Bits(f64),
    Frames(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub uplink: RadioHopModel,
    pub downlink: RadioHopModel,
    pub gpu: GpuHopModel,
    pub ul_space: ActionSpace,
    pub gpu_space: ActionSpace,
    pub dl_space: ActionSpace,
    pub slot_len: f64,
    pub subinterval: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            uplink: RadioHopModel::uplink_default(),
            downlink: RadioHopModel::downlink_default(),
            gpu: GpuHopModel::default(),
            ul_space: ActionSpace::default_prbs(),
            gpu_space: ActionSpace::default_gpu(),
            dl_space: ActionSpace::default_prbs(),
            slot_len: 5.0,
            subinterval: 0.2,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: String| Err(SimError::InvalidConfig(msg));
        for (name, radio, space) in [
            ("uplink", &self.uplink, &self.ul_space),
            ("downlink", &self.downlink, &self.dl_space),
        ] {
            if !(radio.full_rate > 0.0) || !radio.full_rate.is_finite() {
                return bad(format!("{name} full_rate must be positive"));
            }
            if radio.prb_max == 0 {
                return bad(format!("{name} prb_max must be positive"));
            }
            if !(radio.fixed_latency >= 0.0) {
                return bad(format!("{name} fixed_latency must be non-negative"));
            }
            if space.max() > radio.prb_max {
                return bad(format!(
                    "{name} action space exceeds prb_max {}",
                    radio.prb_max
                ));
            }
        }
        if self.uplink.direction != Direction::Uplink
            || self.downlink.direction != Direction::Downlink
        {
            return bad("radio hop directions are swapped".into());
        }
        if !(self.gpu.base_service > 0.0) || !(self.gpu.f_max > 0.0) {
            return bad("gpu base_service and f_max must be positive".into());
        }
        if !(self.gpu.scaling_exponent >= 0.0) {
            return bad("gpu scaling_exponent must be non-negative".into());
        }
        if !(self.subinterval > 0.0) || !(self.slot_len > 0.0) {
            return bad("slot_len and subinterval must be positive".into());
        }
        if !on_grid(self.slot_len, self.subinterval) {
            return bad(format!(
                "slot_len {} is not a multiple of the sub-interval {}",
                self.slot_len, self.subinterval
            ));
        }
        Ok(())
    }

    pub fn max_allocation(&self) -> HopAllocation {
        HopAllocation {
            ul_prbs: self.ul_space.max(),
            gpu_mhz: self.gpu_space.max(),
            dl_prbs: self.dl_space.max(),
        }
    }

    fn radio(&self, dir: Direction) -> &RadioHopModel {
        match dir {
            Direction::Uplink => &self.uplink,
            Direction::Downlink => &self.downlink,
        }
    }
}

fn on_grid(t: f64, step: f64) -> bool {
    let k = t / step;
    (k - k.round()).abs() <= GRID_EPS * k.abs().max(1.0)
}

pub type FrameId = usize;

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Allocation(HopAllocation),
    Arrival(FrameId),
    RadioDone { dir: Direction, epoch: u64 },
    PipelineExit { dir: Direction, frame: FrameId },
    GpuDone(FrameId),
}

impl EventKind {
    fn class(&self) -> u8 {
        match self {
            EventKind::Allocation(_) => 0,
            _ => 1,
        }
    }
}

#[derive(Debug)]
struct Scheduled {
    time: f64,
    class: u8,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed so that `BinaryHeap` pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.class.cmp(&self.class))
            .then(other.seq.cmp(&self.seq))
    }
}

/// Backlog breakpoint: from `t` on the queue holds `bits - rate * (t' - t)`.
#[derive(Debug, Clone, Copy)]
struct BacklogPoint {
    t: f64,
    bits: f64,
    rate: f64,
}

#[derive(Debug)]
struct RadioQueue {
    model: RadioHopModel,
    rate: f64,
    waiting: VecDeque<(FrameId, f64)>,
    waiting_bits: f64,
    head: Option<(FrameId, f64)>,
    head_remaining: f64,
    last_update: f64,
    epoch: u64,
    in_pipeline: usize,
    trajectory: Vec<BacklogPoint>,
    arrivals: Vec<(f64, f64)>,
    served_bits: f64,
    busy_periods: Vec<(f64, Option<f64>)>,
    rate_history: Vec<(f64, f64)>,
}

impl RadioQueue {
    fn new(model: RadioHopModel, prbs: u32) -> Self {
        let rate = model.service_rate(prbs);
        Self {
            model,
            rate,
            waiting: VecDeque::new(),
            waiting_bits: 0.0,
            head: None,
            head_remaining: 0.0,
            last_update: 0.0,
            epoch: 0,
            in_pipeline: 0,
            trajectory: vec![BacklogPoint {
                t: 0.0,
                bits: 0.0,
                rate: 0.0,
            }],
            arrivals: Vec::new(),
            served_bits: 0.0,
            busy_periods: Vec::new(),
            rate_history: vec![(0.0, rate)],
        }
    }

    fn backlog(&self) -> f64 {
        self.waiting_bits + self.head_remaining
    }

    fn progress(&mut self, t: f64) {
        if self.head.is_some() {
            let drained = (self.rate * (t - self.last_update)).min(self.head_remaining);
            self.head_remaining -= drained;
        }
        self.last_update = t;
    }

    fn mark(&mut self, t: f64) {
        let rate = if self.head.is_some() { self.rate } else { 0.0 };
        self.trajectory.push(BacklogPoint {
            t,
            bits: self.backlog(),
            rate,
        });
    }

    /// Returns the completion time of a frame that started service.
    fn enqueue(&mut self, t: f64, id: FrameId, bits: f64) -> Option<f64> {
        self.progress(t);
        self.arrivals.push((t, bits));
        let started = if self.head.is_none() {
            self.head = Some((id, bits));
            self.head_remaining = bits;
            self.busy_periods.push((t, None));
            Some(t + bits / self.rate)
        } else {
            self.waiting.push_back((id, bits));
            self.waiting_bits += bits;
            None
        };
        self.mark(t);
        started
    }

    /// Finishes the head frame; returns it and the next completion time.
    fn complete_head(&mut self, t: f64) -> (FrameId, Option<f64>) {
        self.progress(t);
        let (id, bits) = self.head.take().expect("radio completion with empty queue");
        self.served_bits += bits;
        self.head_remaining = 0.0;
        let next = match self.waiting.pop_front() {
            Some((next_id, next_bits)) => {
                self.waiting_bits -= next_bits;
                if self.waiting.is_empty() {
                    self.waiting_bits = 0.0;
                }
                self.head = Some((next_id, next_bits));
                self.head_remaining = next_bits;
                Some(t + next_bits / self.rate)
            }
            None => {
                if let Some(last) = self.busy_periods.last_mut() {
                    last.1 = Some(t);
                }
                None
            }
        };
        self.mark(t);
        (id, next)
    }

    /// Applies a new rate; returns the rescheduled completion time if busy.
    fn set_rate(&mut self, t: f64, rate: f64) -> Option<f64> {
        self.progress(t);
        self.rate = rate;
        self.epoch += 1;
        self.rate_history.push((t, rate));
        self.mark(t);
        self.head.map(|_| t + self.head_remaining / self.rate)
    }

    fn backlog_at(&self, t: f64) -> f64 {
        let idx = self.trajectory.partition_point(|p| p.t <= t);
        match idx.checked_sub(1) {
            Some(i) => {
                let p = self.trajectory[i];
                (p.bits - p.rate * (t - p.t)).max(0.0)
            }
            None => 0.0,
        }
    }

    /// Bits served up to `now`, including the head frame's progress since
    /// the last event.
    fn served_bits_at(&self, now: f64) -> f64 {
        let partial = self.head.map_or(0.0, |(_, bits)| {
            let remaining = (self.head_remaining - self.rate * (now - self.last_update)).max(0.0);
            bits - remaining
        });
        self.served_bits + partial
    }

    fn len(&self) -> usize {
        self.waiting.len() + usize::from(self.head.is_some())
    }

    fn discard_before(&mut self, t: f64) {
        let keep = self.trajectory.partition_point(|p| p.t <= t).saturating_sub(1);
        self.trajectory.drain(..keep);
        let keep = self.arrivals.partition_point(|(at, _)| *at < t);
        self.arrivals.drain(..keep);
    }
}

#[derive(Debug)]
struct GpuServer {
    model: GpuHopModel,
    mhz: u32,
    waiting: VecDeque<FrameId>,
    in_service: Option<FrameId>,
    trajectory: Vec<(f64, usize)>,
}

impl GpuServer {
    fn len(&self) -> usize {
        self.waiting.len() + usize::from(self.in_service.is_some())
    }

    fn mark(&mut self, t: f64) {
        let n = self.len();
        self.trajectory.push((t, n));
    }

    fn backlog_at(&self, t: f64) -> usize {
        let idx = self.trajectory.partition_point(|(at, _)| *at <= t);
        idx.checked_sub(1).map_or(0, |i| self.trajectory[i].1)
    }

    fn discard_before(&mut self, t: f64) {
        let keep = self
            .trajectory
            .partition_point(|(at, _)| *at <= t)
            .saturating_sub(1);
        self.trajectory.drain(..keep);
    }
}

/// Per-radio-hop bookkeeping for work-conservation checks.
#[derive(Debug, Clone, PartialEq)]
pub struct RadioAccounting {
    pub served_bits: f64,
    pub busy_periods: Vec<(f64, Option<f64>)>,
    pub rate_history: Vec<(f64, f64)>,
}

/// Counts of frames by location, used for conservation checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlowCensus {
    pub injected: usize,
    pub completed: usize,
    pub pending_arrival: usize,
    pub ul_queue: usize,
    pub ul_pipeline: usize,
    pub gpu: usize,
    pub dl_queue: usize,
    pub dl_pipeline: usize,
}

impl FlowCensus {
    pub fn in_flight(&self) -> usize {
        self.pending_arrival
            + self.ul_queue
            + self.ul_pipeline
            + self.gpu
            + self.dl_queue
            + self.dl_pipeline
    }
}

/// Single-threaded, deterministic simulator of one three-hop pipeline.
#[derive(Debug)]
pub struct Simulator {
    config: SimConfig,
    now: f64,
    seq: u64,
    events: BinaryHeap<Scheduled>,
    frames: Vec<Frame>,
    uplink: RadioQueue,
    downlink: RadioQueue,
    gpu: GpuServer,
    allocation: HopAllocation,
    pending_arrivals: usize,
    completed: usize,
    newly_completed: Vec<FrameId>,
}

impl Simulator {
    /// Builds a simulator with every hop at its maximum allocation.
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        config.validate()?;
        let allocation = config.max_allocation();
        Ok(Self {
            uplink: RadioQueue::new(config.uplink, allocation.ul_prbs),
            downlink: RadioQueue::new(config.downlink, allocation.dl_prbs),
            gpu: GpuServer {
                model: config.gpu,
                mhz: allocation.gpu_mhz,
                waiting: VecDeque::new(),
                in_service: None,
                trajectory: vec![(0.0, 0)],
            },
            config,
            now: 0.0,
            seq: 0,
            events: BinaryHeap::new(),
            frames: Vec::new(),
            allocation,
            pending_arrivals: 0,
            completed: 0,
            newly_completed: Vec::new(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn allocation(&self) -> HopAllocation {
        self.allocation
    }

    /// Every frame ever scheduled, indexed by [`FrameId`].
    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    fn push(&mut self, time: f64, kind: EventKind) {
        self.seq += 1;
        self.events.push(Scheduled {
            time,
            class: kind.class(),
            seq: self.seq,
            kind,
        });
    }

    fn radio_mut(&mut self, dir: Direction) -> &mut RadioQueue {
        match dir {
            Direction::Uplink => &mut self.uplink,
            Direction::Downlink => &mut self.downlink,
        }
    }

    fn radio(&self, dir: Direction) -> &RadioQueue {
        match dir {
            Direction::Uplink => &self.uplink,
            Direction::Downlink => &self.downlink,
        }
    }

    /// Injects a frame into the uplink queue at time `t`.
    pub fn schedule_frame(&mut self, mut frame: Frame, t: f64) -> Result<FrameId, SimError> {
        if !(t >= self.now) {
            return Err(SimError::PastTime { t, now: self.now });
        }
        if !(frame.ul_bits > 0.0) || !(frame.dl_bits > 0.0) {
            return Err(SimError::InvalidFrame(format!(
                "frame sizes must be positive (ul {}, dl {})",
                frame.ul_bits, frame.dl_bits
            )));
        }
        if frame.t_edge_in.is_some() || frame.t_edge_out.is_some() || frame.t_received.is_some() {
            return Err(SimError::InvalidFrame(
                "hop timestamps must be unset".to_string(),
            ));
        }
        frame.t_sent = t;
        let id = self.frames.len();
        self.frames.push(frame);
        self.pending_arrivals += 1;
        self.push(t, EventKind::Arrival(id));
        Ok(id)
    }

    /// Applies `alloc` at slot boundary `t` (`t >= now`).
    pub fn set_allocation(&mut self, alloc: HopAllocation, t: f64) -> Result<(), SimError> {
        if !(t >= self.now) {
            return Err(SimError::PastTime { t, now: self.now });
        }
        if !on_grid(t, self.config.slot_len) {
            return Err(SimError::NotSlotBoundary {
                t,
                slot_len: self.config.slot_len,
            });
        }
        for (hop, space) in [
            (Hop::Uplink, &self.config.ul_space),
            (Hop::Edge, &self.config.gpu_space),
            (Hop::Downlink, &self.config.dl_space),
        ] {
            let value = alloc.get(hop);
            if !space.contains(value) {
                return Err(SimError::InvalidAllocation {
                    hop,
                    value,
                    space: space.levels().to_vec(),
                });
            }
        }
        self.push(t, EventKind::Allocation(alloc));
        Ok(())
    }

    /// Processes every event with time `<= t` and returns frames that
    /// finished the downlink since the previous call.
    pub fn advance_to(&mut self, t: f64) -> Result<Vec<Frame>, SimError> {
        if !(t >= self.now) {
            return Err(SimError::PastTime { t, now: self.now });
        }
        while self.events.peek().is_some_and(|ev| ev.time <= t) {
            let ev = self.events.pop().expect("peeked");
            self.now = ev.time;
            self.handle(ev.kind);
        }
        self.now = t;
        let done = std::mem::take(&mut self.newly_completed);
        Ok(done.into_iter().map(|id| self.frames[id].clone()).collect())
    }

    fn handle(&mut self, kind: EventKind) {
        let now = self.now;
        match kind {
            EventKind::Allocation(alloc) => {
                self.allocation = alloc;
                for dir in [Direction::Uplink, Direction::Downlink] {
                    let prbs = alloc.get(dir.into());
                    let rate = self.config.radio(dir).service_rate(prbs);
                    let queue = self.radio_mut(dir);
                    if let Some(done) = queue.set_rate(now, rate) {
                        let epoch = queue.epoch;
                        self.push(done, EventKind::RadioDone { dir, epoch });
                    }
                }
                self.gpu.mhz = alloc.gpu_mhz;
            }
            EventKind::Arrival(id) => {
                self.pending_arrivals -= 1;
                let bits = self.frames[id].ul_bits;
                self.enqueue_radio(Direction::Uplink, id, bits);
            }
            EventKind::RadioDone { dir, epoch } => {
                let queue = self.radio_mut(dir);
                if queue.epoch != epoch {
                    return;
                }
                let (id, next) = queue.complete_head(now);
                queue.in_pipeline += 1;
                let latency = queue.model.fixed_latency;
                if let Some(done) = next {
                    self.push(done, EventKind::RadioDone { dir, epoch });
                }
                self.push(now + latency, EventKind::PipelineExit { dir, frame: id });
            }
            EventKind::PipelineExit { dir, frame } => {
                self.radio_mut(dir).in_pipeline -= 1;
                match dir {
                    Direction::Uplink => {
                        self.frames[frame].t_edge_in = Some(now);
                        self.gpu.waiting.push_back(frame);
                        self.start_gpu_if_idle();
                        self.gpu.mark(now);
                    }
                    Direction::Downlink => {
                        self.frames[frame].t_received = Some(now);
                        self.completed += 1;
                        self.newly_completed.push(frame);
                    }
                }
            }
            EventKind::GpuDone(id) => {
                self.gpu.in_service = None;
                self.frames[id].t_edge_out = Some(now);
                let bits = self.frames[id].dl_bits;
                self.enqueue_radio(Direction::Downlink, id, bits);
                self.start_gpu_if_idle();
                self.gpu.mark(now);
            }
        }
    }

    fn enqueue_radio(&mut self, dir: Direction, id: FrameId, bits: f64) {
        let now = self.now;
        let queue = self.radio_mut(dir);
        if let Some(done) = queue.enqueue(now, id, bits) {
            let epoch = queue.epoch;
            self.push(done, EventKind::RadioDone { dir, epoch });
        }
    }

    fn start_gpu_if_idle(&mut self) {
        if self.gpu.in_service.is_some() {
            return;
        }
        if let Some(id) = self.gpu.waiting.pop_front() {
            self.gpu.in_service = Some(id);
            let service = self.gpu.model.service_time(self.gpu.mhz as f64);
            self.push(self.now + service, EventKind::GpuDone(id));
        }
    }

    /// Queued bits (radio) or frames (GPU) at `t <= now`, excluding frames
    /// in the fixed-latency stage.
    pub fn hop_backlog(&self, hop: Hop, t: f64) -> Result<Backlog, SimError> {
        if t > self.now {
            return Err(SimError::FutureTime { t, now: self.now });
        }
        Ok(match hop {
            Hop::Uplink => Backlog::Bits(self.uplink.backlog_at(t)),
            Hop::Downlink => Backlog::Bits(self.downlink.backlog_at(t)),
            Hop::Edge => Backlog::Frames(self.gpu.backlog_at(t)),
        })
    }

    /// Radio backlog in bits at `t <= now`.
    pub fn radio_backlog(&self, dir: Direction, t: f64) -> Result<f64, SimError> {
        match self.hop_backlog(dir.into(), t)? {
            Backlog::Bits(b) => Ok(b),
            Backlog::Frames(_) => unreachable!("radio hops report bits"),
        }
    }

    /// Per-sub-interval arrivals and end-of-sub-interval backlog over
    /// `[start, end)`. Both ends must sit on the sub-interval grid and
    /// `end <= now`.
    pub fn collect_subintervals(
        &self,
        dir: Direction,
        start: f64,
        end: f64,
    ) -> Result<Vec<SubIntervalSample>, SimError> {
        let step = self.config.subinterval;
        if !(end > start) || !on_grid(start, step) || !on_grid(end, step) {
            return Err(SimError::Misaligned { start, end, step });
        }
        if end > self.now {
            return Err(SimError::FutureTime { t: end, now: self.now });
        }
        let n = ((end - start) / step).round() as usize;
        let queue = self.radio(dir);
        let mut samples: Vec<SubIntervalSample> = (0..n)
            .map(|i| SubIntervalSample {
                hop: dir,
                arrived_bits: 0.0,
                backlog_bits: queue.backlog_at(start + (i + 1) as f64 * step),
            })
            .collect();
        let eps = GRID_EPS * step;
        let first = queue.arrivals.partition_point(|(t, _)| *t < start - eps);
        for &(t, bits) in &queue.arrivals[first..] {
            let idx = ((t - start) / step + GRID_EPS).floor();
            if idx >= n as f64 {
                break;
            }
            samples[idx.max(0.0) as usize].arrived_bits += bits;
        }
        Ok(samples)
    }

    pub fn census(&self) -> FlowCensus {
        FlowCensus {
            injected: self.frames.len(),
            completed: self.completed,
            pending_arrival: self.pending_arrivals,
            ul_queue: self.uplink.len(),
            ul_pipeline: self.uplink.in_pipeline,
            gpu: self.gpu.len(),
            dl_queue: self.downlink.len(),
            dl_pipeline: self.downlink.in_pipeline,
        }
    }

    pub fn radio_accounting(&self, dir: Direction) -> RadioAccounting {
        let queue = self.radio(dir);
        RadioAccounting {
            served_bits: queue.served_bits_at(self.now),
            busy_periods: queue.busy_periods.clone(),
            rate_history: queue.rate_history.clone(),
        }
    }

    /// Drops backlog and arrival history older than `t`; queries before `t`
    /// become unavailable.
    pub fn discard_history_before(&mut self, t: f64) {
        self.uplink.discard_before(t);
        self.downlink.discard_before(t);
        self.gpu.discard_before(t);
    }
}

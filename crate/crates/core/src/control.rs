//! Per-slot control loop and the four allocation schemes.
//!
//! Every hop runs its own learner on its own state, budget and feedback.
//! The edge hop has no direct load measurement and reuses the uplink state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{
    normalize_cost, slot_cost, ActionSpace, BanditError, ContextualBanditTable, CostParams,
    MAX_STATE, STATE_STEP,
};
use crate::sim::{Direction, Frame, FrameId, Hop, HopAllocation, SimConfig, SimError, Simulator, SubIntervalSample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("delay budget {q_c} s is below the single-flow floor {floor} s")]
    InfeasibleBudget { q_c: f64, floor: f64 },
    #[error("invalid budget split: {0}")]
    InvalidSplit(String),
    #[error("unknown scheme {0:?} (expected static, tcp, ucb1 or mucb1)")]
    UnknownScheme(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
}

/// Per-hop delay budgets in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HopBudgets {
    pub ul: f64,
    pub edge: f64,
    pub dl: f64,
}

impl HopBudgets {
    pub fn get(&self, hop: Hop) -> f64 {
        match hop {
            Hop::Uplink => self.ul,
            Hop::Edge => self.edge,
            Hop::Downlink => self.dl,
        }
    }

    pub fn total(&self) -> f64 {
        self.ul + self.edge + self.dl
    }
}

/// Budgets are rounded to this granularity.
const BUDGET_QUANTUM_PER_SECOND: f64 = 100.0;

/// Splits `q_c` so that each hop budget is proportional to its single-flow
/// delay times a cost ratio, rounded to 10 ms. Rounding drift is absorbed by
/// the largest budget (ties: the one rounded furthest in the drift's
/// opposite direction).
pub fn split_budget(
    q_c: f64,
    base_delays: (f64, f64, f64),
    ratios: (f64, f64, f64),
) -> Result<HopBudgets, ControlError> {
    let base = [base_delays.0, base_delays.1, base_delays.2];
    let ratios = [ratios.0, ratios.1, ratios.2];
    if ratios.iter().any(|r| !(*r > 0.0)) {
        return Err(ControlError::InvalidSplit("ratios must be positive".into()));
    }
    if base.iter().any(|b| !(*b >= 0.0)) {
        return Err(ControlError::InvalidSplit(
            "base delays must be non-negative".into(),
        ));
    }
    let floor: f64 = base.iter().sum();
    if !(q_c >= floor) || q_c <= 0.0 {
        return Err(ControlError::InfeasibleBudget { q_c, floor });
    }
    let raw: Vec<f64> = base.iter().zip(&ratios).map(|(b, r)| b * r).collect();
    let raw_sum: f64 = raw.iter().sum();
    if raw_sum <= 0.0 {
        return Err(ControlError::InvalidSplit("all base delays are zero".into()));
    }
    // Work in units of 10 ms.
    let scaled: Vec<f64> = raw
        .iter()
        .map(|x| x * q_c / raw_sum * BUDGET_QUANTUM_PER_SECOND)
        .collect();
    let rounded: Vec<f64> = scaled.iter().map(|x| x.round()).collect();
    let target = q_c * BUDGET_QUANTUM_PER_SECOND;
    let drift = target - rounded.iter().sum::<f64>();
    let mut budgets: Vec<f64> = rounded.iter().map(|k| k / BUDGET_QUANTUM_PER_SECOND).collect();
    if drift.abs() > 1e-9 {
        let largest = rounded.iter().cloned().fold(f64::MIN, f64::max);
        let mut pick = None;
        let mut best_residual = f64::NEG_INFINITY;
        for i in 0..3 {
            if rounded[i] != largest {
                continue;
            }
            // Positive when this budget was rounded against the drift.
            let residual = (rounded[i] - scaled[i]) * -drift.signum();
            if residual > best_residual {
                best_residual = residual;
                pick = Some(i);
            }
        }
        let i = pick.expect("at least one largest budget");
        budgets[i] = (rounded[i] + drift) / BUDGET_QUANTUM_PER_SECOND;
    }
    if budgets.iter().any(|b| *b <= 0.0) {
        return Err(ControlError::InvalidSplit(format!(
            "rounding left a non-positive budget: {budgets:?}"
        )));
    }
    Ok(HopBudgets {
        ul: budgets[0],
        edge: budgets[1],
        dl: budgets[2],
    })
}

/// Discretized load state: PRBs needed per sub-interval, averaged, rounded
/// to a multiple of 5 (halves up) and clamped to 105.
pub fn observe_state(samples: &[SubIntervalSample], bits_per_prb: f64) -> u32 {
    if samples.is_empty() {
        return 0;
    }
    let total: f64 = samples
        .iter()
        .map(|s| ((s.arrived_bits + s.backlog_bits) / bits_per_prb - 1e-9).ceil().max(0.0))
        .sum();
    let mean = total / samples.len() as f64;
    let step = STATE_STEP as f64;
    let rounded = (mean / step + 0.5).floor() * step;
    (rounded as u32).min(MAX_STATE)
}

/// Delay of `frame` at `hop` as known at time `now`: exact when the hop is
/// done, elapsed time while the frame is still inside it, `None` before it
/// got there.
pub fn observed_hop_delay(frame: &Frame, hop: Hop, now: f64) -> Option<f64> {
    let entry = frame.hop_entry(hop)?;
    Some(frame.hop_exit(hop).unwrap_or(now) - entry)
}

pub fn observed_roundtrip(frame: &Frame, now: f64) -> f64 {
    frame.t_received.unwrap_or(now) - frame.t_sent
}

/// Product over flows of `1(mean delay <= budget)`; an empty set yields 1.
fn per_flow_indicator<'a, I, F>(frames: I, budget: f64, delay: F) -> bool
where
    I: IntoIterator<Item = &'a Frame>,
    F: Fn(&Frame) -> Option<f64>,
{
    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for frame in frames {
        if let Some(d) = delay(frame) {
            let e = sums.entry(frame.flow_id).or_default();
            e.0 += d;
            e.1 += 1;
        }
    }
    sums.values().all(|(sum, n)| sum / *n as f64 <= budget)
}

pub fn hop_feedback<'a, I>(frames: I, hop: Hop, budget: f64, now: f64) -> bool
where
    I: IntoIterator<Item = &'a Frame>,
{
    per_flow_indicator(frames, budget, |f| observed_hop_delay(f, hop, now))
}

pub fn roundtrip_feedback<'a, I>(frames: I, q_c: f64, now: f64) -> bool
where
    I: IntoIterator<Item = &'a Frame>,
{
    per_flow_indicator(frames, q_c, |f| Some(observed_roundtrip(f, now)))
}

/// AIMD-style step: double on a miss (clamped to the largest level), one
/// level down on a hit.
pub fn tcp_step(space: &ActionSpace, a_prev: u32, qos_met: bool) -> Result<u32, BanditError> {
    let idx = space
        .index_of(a_prev)
        .ok_or(BanditError::UnknownAction(a_prev))?;
    let levels = space.levels();
    Ok(if qos_met {
        levels[idx.saturating_sub(1)]
    } else {
        let target = a_prev.saturating_mul(2);
        levels
            .iter()
            .copied()
            .find(|&a| a >= target)
            .unwrap_or(space.max())
    })
}

pub fn static_action(space: &ActionSpace) -> u32 {
    space.max()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "static")]
    Static,
    #[serde(rename = "tcp")]
    TcpBased,
    #[serde(rename = "ucb1")]
    Ucb1,
    #[serde(rename = "mucb1")]
    Mucb1,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::Static,
        SchemeKind::TcpBased,
        SchemeKind::Ucb1,
        SchemeKind::Mucb1,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchemeKind::Static => "static",
            SchemeKind::TcpBased => "tcp",
            SchemeKind::Ucb1 => "ucb1",
            SchemeKind::Mucb1 => "mucb1",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = ControlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "static" => Ok(SchemeKind::Static),
            "tcp" | "tcp-based" | "tcp_based" | "tcpbased" => Ok(SchemeKind::TcpBased),
            "ucb1" => Ok(SchemeKind::Ucb1),
            "mucb1" => Ok(SchemeKind::Mucb1),
            _ => Err(ControlError::UnknownScheme(s.to_string())),
        }
    }
}

/// One control round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot_index: u64,
    pub active_flow_count: usize,
    pub state_ul: u32,
    pub state_dl: u32,
    pub state_edge: u32,
    pub action: HopAllocation,
    pub q_ul: bool,
    pub q_edge: bool,
    pub q_dl: bool,
    pub q_roundtrip: bool,
    pub frames_evaluated: usize,
}

impl SlotRecord {
    pub fn qos(&self, hop: Hop) -> bool {
        match hop {
            Hop::Uplink => self.q_ul,
            Hop::Edge => self.q_edge,
            Hop::Downlink => self.q_dl,
        }
    }

    pub fn state(&self, hop: Hop) -> u32 {
        match hop {
            Hop::Uplink => self.state_ul,
            Hop::Edge => self.state_edge,
            Hop::Downlink => self.state_dl,
        }
    }
}

/// Frame payload sizes derived from per-flow bitrates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameProfile {
    pub ul_bitrate: f64,
    pub dl_bitrate: f64,
    /// Relative half-width of a uniform size perturbation; 0 disables it.
    #[serde(default)]
    pub size_jitter: f64,
}

impl Default for FrameProfile {
    fn default() -> Self {
        Self {
            ul_bitrate: 4.3e6,
            dl_bitrate: 1.5e6,
            size_jitter: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlConfig {
    pub sim: SimConfig,
    pub scheme: SchemeKind,
    pub budgets: HopBudgets,
    pub q_c: f64,
    pub fps: f64,
    pub frames: FrameProfile,
}

#[derive(Debug, Clone)]
enum Learner {
    Static,
    Tcp { last: Option<(u32, bool)> },
    Bandit {
        table: ContextualBanditTable,
        monotone: bool,
    },
}

#[derive(Debug, Clone)]
struct HopController {
    hop: Hop,
    space: ActionSpace,
    learner: Learner,
}

impl HopController {
    fn choose(&self, state: u32) -> Result<u32, ControlError> {
        Ok(match &self.learner {
            Learner::Static => static_action(&self.space),
            Learner::Tcp { last: None } => static_action(&self.space),
            Learner::Tcp {
                last: Some((prev, q)),
            } => tcp_step(&self.space, *prev, *q)?,
            Learner::Bandit { table, .. } => table.select(state)?,
        })
    }

    fn learn(&mut self, state: u32, action: u32, qos_met: bool) -> Result<(), ControlError> {
        match &mut self.learner {
            Learner::Static => {}
            Learner::Tcp { last } => *last = Some((action, qos_met)),
            Learner::Bandit { table, monotone } => {
                if *monotone {
                    table.update_monotone(state, action, qos_met)?;
                } else {
                    let params = *table.params();
                    let cost = normalize_cost(slot_cost(action as f64, qos_met, &params), &params)?;
                    table.update_single(state, action, cost)?;
                }
            }
        }
        Ok(())
    }
}

/// Drives one simulator through consecutive slots under a single scheme.
#[derive(Debug)]
pub struct Controller {
    config: ControlConfig,
    sim: Simulator,
    hops: [HopController; 3],
    arrivals: Vec<(f64, u32)>,
    next_arrival: usize,
    next_seq: BTreeMap<u32, u64>,
    jitter_rng: ChaCha8Rng,
    slot: u64,
}

impl Controller {
    /// `arrivals` must be sorted by time; `jitter_rng` perturbs frame sizes
    /// when `size_jitter > 0`.
    pub fn new(
        config: ControlConfig,
        arrivals: Vec<(f64, u32)>,
        jitter_rng: ChaCha8Rng,
    ) -> Result<Self, ControlError> {
        let sim = Simulator::new(config.sim.clone())?;
        let cfg = &config.sim;
        let make = |hop: Hop, space: &ActionSpace, resource_max: u32| {
            let learner = match config.scheme {
                SchemeKind::Static => Learner::Static,
                SchemeKind::TcpBased => Learner::Tcp { last: None },
                SchemeKind::Ucb1 | SchemeKind::Mucb1 => Learner::Bandit {
                    table: ContextualBanditTable::new(
                        space.clone(),
                        CostParams::for_max(resource_max.max(space.max())),
                    ),
                    monotone: config.scheme == SchemeKind::Mucb1,
                },
            };
            HopController {
                hop,
                space: space.clone(),
                learner,
            }
        };
        let hops = [
            make(Hop::Uplink, &cfg.ul_space, cfg.uplink.prb_max),
            make(Hop::Edge, &cfg.gpu_space, cfg.gpu.f_max.round() as u32),
            make(Hop::Downlink, &cfg.dl_space, cfg.downlink.prb_max),
        ];
        Ok(Self {
            config,
            sim,
            hops,
            arrivals,
            next_arrival: 0,
            next_seq: BTreeMap::new(),
            jitter_rng,
            slot: 0,
        })
    }

    pub fn sim(&self) -> &Simulator {
        &self.sim
    }

    pub fn scheme(&self) -> SchemeKind {
        self.config.scheme
    }

    pub fn slot(&self) -> u64 {
        self.slot
    }

    /// Learned table of `hop`, for bandit schemes.
    pub fn table(&self, hop: Hop) -> Option<&ContextualBanditTable> {
        match &self.hop(hop).learner {
            Learner::Bandit { table, .. } => Some(table),
            _ => None,
        }
    }

    fn hop(&self, hop: Hop) -> &HopController {
        &self.hops[hop as usize]
    }

    fn slot_bounds(&self, slot: u64) -> (f64, f64) {
        let len = self.config.sim.slot_len;
        (slot as f64 * len, (slot + 1) as f64 * len)
    }

    fn frame_bits(&mut self) -> (f64, f64) {
        let p = self.config.frames;
        let mut ul = p.ul_bitrate / self.config.fps;
        let mut dl = p.dl_bitrate / self.config.fps;
        if p.size_jitter > 0.0 {
            ul *= 1.0 + self.jitter_rng.random_range(-p.size_jitter..=p.size_jitter);
            dl *= 1.0 + self.jitter_rng.random_range(-p.size_jitter..=p.size_jitter);
        }
        (ul, dl)
    }

    fn observe(&self, dir: Direction) -> Result<u32, ControlError> {
        if self.slot == 0 {
            return Ok(0);
        }
        let (start, end) = self.slot_bounds(self.slot - 1);
        let samples = self.sim.collect_subintervals(dir, start, end)?;
        let radio = match dir {
            Direction::Uplink => &self.config.sim.uplink,
            Direction::Downlink => &self.config.sim.downlink,
        };
        Ok(observe_state(&samples, radio.bits_per_prb(self.config.sim.subinterval)))
    }

    /// Observes, allocates, simulates one slot, evaluates feedback and
    /// updates the learners.
    pub fn run_slot(&mut self) -> Result<SlotRecord, ControlError> {
        let (start, end) = self.slot_bounds(self.slot);
        self.sim.advance_to(start)?;

        let state_ul = self.observe(Direction::Uplink)?;
        let state_dl = self.observe(Direction::Downlink)?;
        let states = [state_ul, state_ul, state_dl];

        let action = HopAllocation {
            ul_prbs: self.hops[0].choose(states[0])?,
            gpu_mhz: self.hops[1].choose(states[1])?,
            dl_prbs: self.hops[2].choose(states[2])?,
        };
        self.sim.set_allocation(action, start)?;

        let first_id: FrameId = self.sim.frames().len();
        while let Some(&(t, flow)) = self.arrivals.get(self.next_arrival) {
            if t >= end {
                break;
            }
            self.next_arrival += 1;
            let seq = self.next_seq.entry(flow).or_insert(0);
            let this_seq = *seq;
            *seq += 1;
            let (ul, dl) = self.frame_bits();
            self.sim
                .schedule_frame(Frame::new(flow, this_seq, ul, dl, t), t.max(start))?;
        }
        self.sim.advance_to(end)?;

        let cutoff = end - self.config.q_c;
        let attributed: Vec<&Frame> = self.sim.frames()[first_id..]
            .iter()
            .filter(|f| f.t_sent < cutoff)
            .collect();
        let flows: BTreeSet<u32> = attributed.iter().map(|f| f.flow_id).collect();
        let budgets = self.config.budgets;
        let q = [
            hop_feedback(attributed.iter().copied(), Hop::Uplink, budgets.ul, end),
            hop_feedback(attributed.iter().copied(), Hop::Edge, budgets.edge, end),
            hop_feedback(attributed.iter().copied(), Hop::Downlink, budgets.dl, end),
        ];
        let q_roundtrip = roundtrip_feedback(attributed.iter().copied(), self.config.q_c, end);
        let frames_evaluated = attributed.len();

        for (i, hop) in self.hops.iter_mut().enumerate() {
            hop.learn(states[i], action.get(hop.hop), q[i])?;
        }

        self.sim.discard_history_before(start);
        let record = SlotRecord {
            slot_index: self.slot,
            active_flow_count: flows.len(),
            state_ul,
            state_dl,
            state_edge: state_ul,
            action,
            q_ul: q[0],
            q_edge: q[1],
            q_dl: q[2],
            q_roundtrip,
            frames_evaluated,
        };
        self.slot += 1;
        Ok(record)
    }

    pub fn run(&mut self, slots: u64) -> Result<Vec<SlotRecord>, ControlError> {
        (0..slots).map(|_| self.run_slot()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(flow: u32, sent: f64, ul_delay: f64) -> Frame {
        let mut f = Frame::new(flow, 0, 1.0, 1.0, sent);
        f.t_edge_in = Some(sent + ul_delay);
        f.t_edge_out = Some(sent + ul_delay + 0.009);
        f.t_received = Some(sent + ul_delay + 0.009 + 0.019);
        f
    }

    #[test]
    fn default_budget_split() {
        let b = split_budget(0.150, (0.012, 0.009, 0.019), (5.0, 2.0, 3.0)).unwrap();
        assert_eq!((b.ul, b.edge, b.dl), (0.07, 0.02, 0.06));
    }

    #[test]
    fn equal_ratios_split_evenly() {
        let b = split_budget(0.150, (0.010, 0.010, 0.010), (1.0, 1.0, 1.0)).unwrap();
        assert_eq!((b.ul, b.edge, b.dl), (0.05, 0.05, 0.05));
        let b = split_budget(0.3, (0.02, 0.02, 0.02), (2.0, 2.0, 2.0)).unwrap();
        assert_eq!((b.ul, b.edge, b.dl), (0.1, 0.1, 0.1));
    }

    #[test]
    fn rounding_drift_is_repaired() {
        // raw 60 / 18 / 57 ms -> 60 / 20 / 60 = 140 ms, 5 ms over.
        let b = split_budget(0.135, (0.012, 0.009, 0.019), (5.0, 2.0, 3.0)).unwrap();
        assert_eq!(b.ul, 0.06);
        assert_eq!(b.edge, 0.02);
        assert!((b.dl - 0.055).abs() < 1e-12);
        assert!((b.total() - 0.135).abs() < 1e-12);
    }

    #[test]
    fn infeasible_budget() {
        assert!(matches!(
            split_budget(0.030, (0.012, 0.009, 0.019), (5.0, 2.0, 3.0)),
            Err(ControlError::InfeasibleBudget { .. })
        ));
        assert!(split_budget(0.15, (0.012, 0.009, 0.019), (5.0, 0.0, 3.0)).is_err());
    }

    fn samples(arrived: f64, backlog: f64) -> Vec<SubIntervalSample> {
        vec![
            SubIntervalSample {
                hop: Direction::Uplink,
                arrived_bits: arrived,
                backlog_bits: backlog,
            };
            25
        ]
    }

    #[test]
    fn state_observation() {
        let per_prb = 22e6 * 0.2 / 106.0;
        assert_eq!(observe_state(&samples(0.0, 0.0), per_prb), 0);
        assert_eq!(observe_state(&samples(1.72e6, 0.0), per_prb), 40);
        assert_eq!(observe_state(&samples(1e9, 0.0), per_prb), 105);
        // 42.5 PRBs average rounds half up to 45.
        let mut s = samples(41.0 * per_prb, 0.0);
        for x in s.iter_mut().take(12) {
            x.arrived_bits = 44.0 * per_prb;
        }
        s[12].arrived_bits = 42.5 * per_prb;
        // 12 x 44 + 43 + 12 x 41 = 1063 -> 42.52
        assert_eq!(observe_state(&s, per_prb), 45);
    }

    #[test]
    fn hop_feedback_is_product_over_flows() {
        let frames = [frame(0, 0.0, 0.050), frame(1, 0.0, 0.060)];
        assert!(hop_feedback(&frames, Hop::Uplink, 0.070, 10.0));
        let frames = [frame(0, 0.0, 0.050), frame(1, 0.0, 0.080)];
        assert!(!hop_feedback(&frames, Hop::Uplink, 0.070, 10.0));
        assert!(hop_feedback(&[], Hop::Uplink, 0.070, 10.0));
    }

    #[test]
    fn in_progress_frames_count_elapsed_time() {
        let stuck = Frame::new(0, 0, 1.0, 1.0, 0.0);
        assert!(!hop_feedback([&stuck], Hop::Uplink, 0.070, 0.2));
        // Not yet at the edge: contributes nothing there.
        assert!(hop_feedback([&stuck], Hop::Edge, 0.020, 0.2));
        assert!(!roundtrip_feedback([&stuck], 0.150, 0.2));
    }

    #[test]
    fn roundtrip_feedback_cases() {
        let f = frame(0, 0.0, 0.012);
        assert!((f.roundtrip().unwrap() - 0.040).abs() < 1e-12);
        assert!(roundtrip_feedback([&f], 0.150, 10.0));
        let slow = frame(0, 0.0, 0.151 - 0.028);
        assert!(!roundtrip_feedback([&slow], 0.150, 10.0));
        let a = frame(0, 0.0, 0.100 - 0.028);
        let b = frame(1, 0.0, 0.160 - 0.028);
        assert!(!roundtrip_feedback([&a, &b], 0.150, 10.0));
    }

    #[test]
    fn tcp_steps() {
        let space = ActionSpace::default_prbs();
        assert_eq!(tcp_step(&space, 20, false).unwrap(), 40);
        assert_eq!(tcp_step(&space, 60, false).unwrap(), 106);
        assert_eq!(tcp_step(&space, 30, true).unwrap(), 20);
        assert_eq!(tcp_step(&space, 10, true).unwrap(), 10);
        assert_eq!(tcp_step(&space, 106, false).unwrap(), 106);
        assert!(tcp_step(&space, 15, true).is_err());
    }

    #[test]
    fn static_actions() {
        assert_eq!(static_action(&ActionSpace::default_prbs()), 106);
        assert_eq!(static_action(&ActionSpace::default_gpu()), 1600);
        assert_eq!(static_action(&ActionSpace::new(vec![7]).unwrap()), 7);
    }

    #[test]
    fn scheme_names() {
        for s in SchemeKind::ALL {
            assert_eq!(s.name().parse::<SchemeKind>().unwrap(), s);
        }
        assert!("ucb2".parse::<SchemeKind>().is_err());
    }
}

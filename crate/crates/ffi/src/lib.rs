//! C ABI over the edgeslice library.
//!
//! Every function returns an [`EsStatus`]; results come back through out
//! pointers. On failure the message is available from [`es_last_error`] on
//! the calling thread until the next failing call. Objects are opaque and
//! must be released with their `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use edgeslice::bandit::{lambda_for, ActionSpace, BanditError, ContextualBanditTable, CostParams};
use edgeslice::control::{split_budget, tcp_step, ControlError, SchemeKind};
use edgeslice::metrics::{savings_at, PowerParams, PowerSide, SummaryRow};
use edgeslice::runner::{compare_schemes, run_scenario, simulate, RunError};
use edgeslice::scenario::{load_config, ConfigError, ScenarioConfig};
use edgeslice::sim::{Backlog, Frame, Hop, HopAllocation, SimConfig, SimError, Simulator};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Simulation = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsPowerSide {
    Ue = 0,
    Bs = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsScheme {
    Static = 0,
    Tcp = 1,
    Ucb1 = 2,
    Mucb1 = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsHop {
    Uplink = 0,
    Edge = 1,
    Downlink = 2,
}

/// Per-hop delay budgets in seconds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EsHopBudgets {
    pub ul: f64,
    pub edge: f64,
    pub dl: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EsAllocation {
    pub ul_prbs: u32,
    pub gpu_mhz: u32,
    pub dl_prbs: u32,
}

/// Frame timestamps in seconds; hops not yet reached are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EsFrame {
    pub flow_id: u32,
    pub seq: u64,
    pub ul_bits: f64,
    pub dl_bits: f64,
    pub t_sent: f64,
    pub t_edge_in: f64,
    pub t_edge_out: f64,
    pub t_received: f64,
}

/// One scheme's whole-run summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EsSummary {
    pub qos_ratio: f64,
    pub avg_ul_prbs: f64,
    pub avg_dl_prbs: f64,
    pub avg_gpu_mhz: f64,
    pub ue_savings: f64,
    pub bs_savings: f64,
}

/// Opaque simulator handle.
pub struct EsSimulator(Simulator);

/// Opaque per-state bandit table handle.
pub struct EsBanditTable(ContextualBanditTable);

/// Opaque loaded scenario handle.
pub struct EsScenario(ScenarioConfig);

struct Failure {
    status: EsStatus,
    message: String,
}

impl Failure {
    fn new(status: EsStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn null(what: &str) -> Self {
        Self::new(EsStatus::NullPointer, format!("{what} is null"))
    }
}

impl From<BanditError> for Failure {
    fn from(e: BanditError) -> Self {
        Self::new(EsStatus::InvalidArgument, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let status = match e {
            SimError::InvalidAllocation { .. } | SimError::InvalidFrame(_) => {
                EsStatus::InvalidArgument
            }
            _ => EsStatus::Simulation,
        };
        Self::new(status, e.to_string())
    }
}

impl From<ControlError> for Failure {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::Sim(e) => e.into(),
            other => Self::new(EsStatus::InvalidArgument, other.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        let status = match e {
            ConfigError::Io { .. } => EsStatus::Io,
            _ => EsStatus::Config,
        };
        Self::new(status, e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Io { .. } | RunError::NoDump(_) => Self::new(EsStatus::Io, e.to_string()),
            RunError::Control(e) => e.into(),
            RunError::Panicked => Self::new(EsStatus::Panic, e.to_string()),
            other => Self::new(EsStatus::Simulation, other.to_string()),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(text));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EsStatus::Ok,
        Ok(Err(failure)) => {
            set_last_error(&failure.message);
            failure.status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal panic: {message}"));
            EsStatus::Panic
        }
    }
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn slice<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn path(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    let text = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(EsStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(text))
}

fn scheme(s: EsScheme) -> SchemeKind {
    match s {
        EsScheme::Static => SchemeKind::Static,
        EsScheme::Tcp => SchemeKind::TcpBased,
        EsScheme::Ucb1 => SchemeKind::Ucb1,
        EsScheme::Mucb1 => SchemeKind::Mucb1,
    }
}

fn hop(h: EsHop) -> Hop {
    match h {
        EsHop::Uplink => Hop::Uplink,
        EsHop::Edge => Hop::Edge,
        EsHop::Downlink => Hop::Downlink,
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn es_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Splits `q_c` over the three hops. `base` and `ratios` point to three
/// values each, in uplink, edge, downlink order.
///
/// # Safety
/// `base` and `ratios` must point to three readable doubles; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn es_split_budget(
    q_c: f64,
    base: *const f64,
    ratios: *const f64,
    out_budgets: *mut EsHopBudgets,
) -> EsStatus {
    guard(|| {
        let b = slice(base, 3, "base")?;
        let r = slice(ratios, 3, "ratios")?;
        let o = out(out_budgets, "out_budgets")?;
        let split = split_budget(q_c, (b[0], b[1], b[2]), (r[0], r[1], r[2]))?;
        *o = EsHopBudgets {
            ul: split.ul,
            edge: split.edge,
            dl: split.dl,
        };
        Ok(())
    })
}

/// Default violation penalty for a hop whose largest allocation is `a_max`.
#[no_mangle]
pub extern "C" fn es_lambda_for(a_max: f64) -> f64 {
    lambda_for(a_max)
}

/// Power savings of a constant radio allocation `a` against the maximum,
/// as a fraction, with unit sleep powers.
///
/// # Safety
/// `out_savings` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_power_savings(
    side: EsPowerSide,
    a: f64,
    out_savings: *mut f64,
) -> EsStatus {
    guard(|| {
        let o = out(out_savings, "out_savings")?;
        let side = match side {
            EsPowerSide::Ue => PowerSide::Ue,
            EsPowerSide::Bs => PowerSide::Bs,
        };
        *o = savings_at(side, a, &PowerParams::default())
            .map_err(|e| Failure::new(EsStatus::InvalidArgument, e.to_string()))?;
        Ok(())
    })
}

/// One step of the TCP-like baseline on the sorted level list.
///
/// # Safety
/// `levels` must point to `n_levels` readable values; `out_action` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn es_tcp_step(
    levels: *const u32,
    n_levels: usize,
    a_prev: u32,
    qos_met: bool,
    out_action: *mut u32,
) -> EsStatus {
    guard(|| {
        let space = ActionSpace::new(slice(levels, n_levels, "levels")?.to_vec())?;
        let o = out(out_action, "out_action")?;
        *o = tcp_step(&space, a_prev, qos_met)?;
        Ok(())
    })
}

/// Creates an empty bandit table over `levels`. The penalty uses
/// `resource_max`, or the largest level when that is larger.
///
/// # Safety
/// `levels` must point to `n_levels` readable values; `out_table` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn es_bandit_new(
    levels: *const u32,
    n_levels: usize,
    resource_max: u32,
    out_table: *mut *mut EsBanditTable,
) -> EsStatus {
    guard(|| {
        let o = out(out_table, "out_table")?;
        let space = ActionSpace::new(slice(levels, n_levels, "levels")?.to_vec())?;
        let params = CostParams::for_max(resource_max.max(space.max()));
        *o = Box::into_raw(Box::new(EsBanditTable(ContextualBanditTable::new(space, params))));
        Ok(())
    })
}

/// Releases a table; NULL is ignored.
///
/// # Safety
/// `table` must come from [`es_bandit_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn es_bandit_free(table: *mut EsBanditTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Arm to play in `state`.
///
/// # Safety
/// `table` must be a live handle; `out_action` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_bandit_select(
    table: *const EsBanditTable,
    state: u32,
    out_action: *mut u32,
) -> EsStatus {
    guard(|| {
        let t = handle(table, "table")?;
        *out(out_action, "out_action")? = t.0.select(state)?;
        Ok(())
    })
}

/// Arm with the lowest empirical cost in `state`; INVALID_ARGUMENT when the
/// state has no data yet.
///
/// # Safety
/// `table` must be a live handle; `out_action` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_bandit_greedy(
    table: *const EsBanditTable,
    state: u32,
    out_action: *mut u32,
) -> EsStatus {
    guard(|| {
        let t = handle(table, "table")?;
        let o = out(out_action, "out_action")?;
        *o = t.0.greedy(state).ok_or_else(|| {
            Failure::new(EsStatus::InvalidArgument, format!("state {state} has no data"))
        })?;
        Ok(())
    })
}

/// Monotone update from one slot's hop feedback.
///
/// # Safety
/// `table` must be a live handle not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn es_bandit_update_monotone(
    table: *mut EsBanditTable,
    state: u32,
    action: u32,
    qos_met: bool,
) -> EsStatus {
    guard(|| {
        handle_mut(table, "table")?
            .0
            .update_monotone(state, action, qos_met)?;
        Ok(())
    })
}

/// Plain UCB1 update with a cost already normalized to `[0, 1]`.
///
/// # Safety
/// `table` must be a live handle not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn es_bandit_update_single(
    table: *mut EsBanditTable,
    state: u32,
    action: u32,
    normalized_cost: f64,
) -> EsStatus {
    guard(|| {
        handle_mut(table, "table")?
            .0
            .update_single(state, action, normalized_cost)?;
        Ok(())
    })
}

/// Pull count and mean normalized cost of one arm; zeros for unseen states.
///
/// # Safety
/// `table` must be a live handle; both out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_bandit_arm(
    table: *const EsBanditTable,
    state: u32,
    action: u32,
    out_pulls: *mut u64,
    out_mean_cost: *mut f64,
) -> EsStatus {
    guard(|| {
        let t = &handle(table, "table")?.0;
        let pulls = out(out_pulls, "out_pulls")?;
        let mean = out(out_mean_cost, "out_mean_cost")?;
        let idx = t.space().index_of(action).ok_or_else(|| {
            Failure::new(EsStatus::InvalidArgument, format!("{action} is not a level"))
        })?;
        let arm = t.entry(state).map(|e| e.arms[idx]).unwrap_or_default();
        *pulls = arm.pulls;
        *mean = arm.mean_cost;
        Ok(())
    })
}

/// Simulator with the default calibration and every hop at its maximum.
///
/// # Safety
/// `out_sim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_sim_new(out_sim: *mut *mut EsSimulator) -> EsStatus {
    guard(|| {
        let o = out(out_sim, "out_sim")?;
        *o = Box::into_raw(Box::new(EsSimulator(Simulator::new(SimConfig::default())?)));
        Ok(())
    })
}

/// Releases a simulator; NULL is ignored.
///
/// # Safety
/// `sim` must come from [`es_sim_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn es_sim_free(sim: *mut EsSimulator) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// # Safety
/// `sim` must be a live handle; `out_now` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_sim_now(sim: *const EsSimulator, out_now: *mut f64) -> EsStatus {
    guard(|| {
        *out(out_now, "out_now")? = handle(sim, "sim")?.0.now();
        Ok(())
    })
}

/// Injects a frame sent at `t`; its index is written to `out_frame_id`.
///
/// # Safety
/// `sim` must be a live handle not used concurrently; `out_frame_id` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn es_sim_schedule_frame(
    sim: *mut EsSimulator,
    flow_id: u32,
    ul_bits: f64,
    dl_bits: f64,
    t: f64,
    out_frame_id: *mut usize,
) -> EsStatus {
    guard(|| {
        let s = handle_mut(sim, "sim")?;
        let o = out(out_frame_id, "out_frame_id")?;
        let seq = s.0.frames().len() as u64;
        *o = s.0.schedule_frame(Frame::new(flow_id, seq, ul_bits, dl_bits, t), t)?;
        Ok(())
    })
}

/// Applies an allocation at slot boundary `t`.
///
/// # Safety
/// `sim` must be a live handle not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn es_sim_set_allocation(
    sim: *mut EsSimulator,
    allocation: EsAllocation,
    t: f64,
) -> EsStatus {
    guard(|| {
        let alloc = HopAllocation {
            ul_prbs: allocation.ul_prbs,
            gpu_mhz: allocation.gpu_mhz,
            dl_prbs: allocation.dl_prbs,
        };
        handle_mut(sim, "sim")?.0.set_allocation(alloc, t)?;
        Ok(())
    })
}

/// Advances to `t`; the number of frames that completed is written to
/// `out_completed` (may be NULL).
///
/// # Safety
/// `sim` must be a live handle not used concurrently.
#[no_mangle]
pub unsafe extern "C" fn es_sim_advance_to(
    sim: *mut EsSimulator,
    t: f64,
    out_completed: *mut usize,
) -> EsStatus {
    guard(|| {
        let done = handle_mut(sim, "sim")?.0.advance_to(t)?;
        if let Some(o) = out_completed.as_mut() {
            *o = done.len();
        }
        Ok(())
    })
}

/// Copies frame `frame_id`.
///
/// # Safety
/// `sim` must be a live handle; `out_frame` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_sim_frame(
    sim: *const EsSimulator,
    frame_id: usize,
    out_frame: *mut EsFrame,
) -> EsStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        let o = out(out_frame, "out_frame")?;
        let f = s.0.frames().get(frame_id).ok_or_else(|| {
            Failure::new(EsStatus::InvalidArgument, format!("no frame {frame_id}"))
        })?;
        *o = EsFrame {
            flow_id: f.flow_id,
            seq: f.seq,
            ul_bits: f.ul_bits,
            dl_bits: f.dl_bits,
            t_sent: f.t_sent,
            t_edge_in: f.t_edge_in.unwrap_or(f64::NAN),
            t_edge_out: f.t_edge_out.unwrap_or(f64::NAN),
            t_received: f.t_received.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Queue content of `hop` at `t`: bits for radio hops, frames for the edge.
///
/// # Safety
/// `sim` must be a live handle; `out_backlog` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_sim_backlog(
    sim: *const EsSimulator,
    which: EsHop,
    t: f64,
    out_backlog: *mut f64,
) -> EsStatus {
    guard(|| {
        let s = handle(sim, "sim")?;
        let o = out(out_backlog, "out_backlog")?;
        *o = match s.0.hop_backlog(hop(which), t)? {
            Backlog::Bits(b) => b,
            Backlog::Frames(n) => n as f64,
        };
        Ok(())
    })
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_scenario` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_scenario_load(
    path_utf8: *const c_char,
    out_scenario: *mut *mut EsScenario,
) -> EsStatus {
    guard(|| {
        let p = path(path_utf8, "path")?;
        let o = out(out_scenario, "out_scenario")?;
        *o = Box::into_raw(Box::new(EsScenario(load_config(&p)?)));
        Ok(())
    })
}

/// Releases a scenario; NULL is ignored.
///
/// # Safety
/// `scenario` must come from [`es_scenario_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn es_scenario_free(scenario: *mut EsScenario) {
    if !scenario.is_null() {
        drop(Box::from_raw(scenario));
    }
}

/// Number of control slots the scenario runs.
///
/// # Safety
/// `scenario` must be a live handle; `out_slots` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_scenario_slots(
    scenario: *const EsScenario,
    out_slots: *mut u64,
) -> EsStatus {
    guard(|| {
        *out(out_slots, "out_slots")? = handle(scenario, "scenario")?.0.n_slots();
        Ok(())
    })
}

/// Runs one scheme in memory and writes its summary. A zero-slot scenario
/// yields CONFIG.
///
/// # Safety
/// `scenario` must be a live handle; `out_summary` must be writable.
#[no_mangle]
pub unsafe extern "C" fn es_scenario_simulate(
    scenario: *const EsScenario,
    which: EsScheme,
    out_summary: *mut EsSummary,
) -> EsStatus {
    guard(|| {
        let cfg = &handle(scenario, "scenario")?.0;
        let o = out(out_summary, "out_summary")?;
        let kind = scheme(which);
        let run = simulate(cfg, kind)?;
        let row = SummaryRow::from_records(kind, &run.records, &cfg.power)
            .map_err(|e| Failure::new(EsStatus::Config, e.to_string()))?;
        *o = EsSummary {
            qos_ratio: row.qos_ratio,
            avg_ul_prbs: row.avg_ul_prbs,
            avg_dl_prbs: row.avg_dl_prbs,
            avg_gpu_mhz: row.avg_gpu_mhz,
            ue_savings: row.ue_savings,
            bs_savings: row.bs_savings,
        };
        Ok(())
    })
}

/// Runs one scheme and writes its CSV artifacts into `out_dir`.
///
/// # Safety
/// `scenario` must be a live handle; `out_dir` must be a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn es_scenario_run(
    scenario: *const EsScenario,
    which: EsScheme,
    out_dir: *const c_char,
) -> EsStatus {
    guard(|| {
        let cfg = &handle(scenario, "scenario")?.0;
        let dir = path(out_dir, "out_dir")?;
        run_scenario(cfg, scheme(which), &dir)?;
        Ok(())
    })
}

/// Runs every configured scheme and writes the comparison into `out_dir`.
///
/// # Safety
/// `scenario` must be a live handle; `out_dir` must be a NUL-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn es_scenario_compare(
    scenario: *const EsScenario,
    out_dir: *const c_char,
) -> EsStatus {
    guard(|| {
        let cfg = &handle(scenario, "scenario")?.0;
        let dir = path(out_dir, "out_dir")?;
        compare_schemes(cfg, &dir)?;
        Ok(())
    })
}

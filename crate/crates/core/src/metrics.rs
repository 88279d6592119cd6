//! QoS, resource and power metrics over slot records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{SchemeKind, SlotRecord};
use crate::sim::Hop;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no slot records")]
    Empty,
    #[error("{what} allocation {value} outside [0, {max}]")]
    OutOfRange {
        what: &'static str,
        value: f64,
        max: f64,
    },
}

/// Power model constants. Absolute values are unknown, so BS and UE powers
/// are expressed in units of their sleep power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerParams {
    pub gpu_k: f64,
    pub gpu_const: f64,
    pub bs_sleep: f64,
    pub ue_sleep: f64,
    pub a_dl_max: f64,
    pub a_ul_max: f64,
}

impl Default for PowerParams {
    fn default() -> Self {
        Self {
            gpu_k: 1.0,
            gpu_const: 1.0,
            bs_sleep: 1.0,
            ue_sleep: 1.0,
            a_dl_max: 106.0,
            a_ul_max: 106.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PowerSide {
    Ue,
    Bs,
}

pub fn qos_delivery_ratio(records: &[SlotRecord]) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hits = records.iter().filter(|r| r.q_roundtrip).count();
    Ok(hits as f64 / records.len() as f64)
}

pub fn avg_resource(records: &[SlotRecord], hop: Hop) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sum: f64 = records.iter().map(|r| r.action.get(hop) as f64).sum();
    Ok(sum / records.len() as f64)
}

/// Affine GPU power in the clock frequency.
pub fn gpu_power(mhz: f64, params: &PowerParams) -> f64 {
    params.gpu_k * mhz + params.gpu_const
}

/// Saving of the dynamic GPU power relative to running at `f_max`.
pub fn gpu_dynamic_savings(avg_mhz: f64, f_max: f64) -> f64 {
    1.0 - avg_mhz / f_max
}

/// Downlink BS power `(145 + 135 a / a_max) * P_sleep`.
pub fn bs_power(a_dl: f64, params: &PowerParams) -> Result<f64, MetricsError> {
    check_range("dl", a_dl, params.a_dl_max)?;
    Ok((145.0 + 135.0 * a_dl / params.a_dl_max) * params.bs_sleep)
}

/// UE uplink power `(0.4 + 0.6 (40 a / a_max - 20) / 80) * P_sleep`.
pub fn ue_power(a_ul: f64, params: &PowerParams) -> Result<f64, MetricsError> {
    check_range("ul", a_ul, params.a_ul_max)?;
    Ok((0.4 + 0.6 * (40.0 * a_ul / params.a_ul_max - 20.0) / 80.0) * params.ue_sleep)
}

fn check_range(what: &'static str, value: f64, max: f64) -> Result<(), MetricsError> {
    if (0.0..=max).contains(&value) {
        Ok(())
    } else {
        Err(MetricsError::OutOfRange { what, value, max })
    }
}

fn power(side: PowerSide, a: f64, params: &PowerParams) -> Result<f64, MetricsError> {
    match side {
        PowerSide::Ue => ue_power(a, params),
        PowerSide::Bs => bs_power(a, params),
    }
}

fn side_max(side: PowerSide, params: &PowerParams) -> f64 {
    match side {
        PowerSide::Ue => params.a_ul_max,
        PowerSide::Bs => params.a_dl_max,
    }
}

/// Savings from a single (average) allocation against the full allocation.
pub fn savings_at(side: PowerSide, a: f64, params: &PowerParams) -> Result<f64, MetricsError> {
    let full = power(side, side_max(side, params), params)?;
    Ok(1.0 - power(side, a, params)? / full)
}

/// `1 - mean_t P(A(t)) / P(A_max)`, computed on per-slot power.
pub fn savings_vs_static(
    records: &[SlotRecord],
    side: PowerSide,
    params: &PowerParams,
) -> Result<f64, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::Empty);
    }
    let hop = match side {
        PowerSide::Ue => Hop::Uplink,
        PowerSide::Bs => Hop::Downlink,
    };
    let mut total = 0.0;
    for r in records {
        total += power(side, r.action.get(hop) as f64, params)?;
    }
    let mean = total / records.len() as f64;
    Ok(1.0 - mean / power(side, side_max(side, params), params)?)
}

/// One scheme's whole-trajectory comparison row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: SchemeKind,
    pub qos_ratio: f64,
    pub avg_ul_prbs: f64,
    pub avg_dl_prbs: f64,
    pub avg_gpu_mhz: f64,
    pub ue_savings: f64,
    pub bs_savings: f64,
}

impl SummaryRow {
    pub const CSV_HEADER: &'static str =
        "scheme,qos_ratio,avg_ul_prbs,avg_dl_prbs,avg_gpu_mhz,ue_savings,bs_savings";

    pub fn from_records(
        scheme: SchemeKind,
        records: &[SlotRecord],
        params: &PowerParams,
    ) -> Result<Self, MetricsError> {
        Ok(Self {
            scheme,
            qos_ratio: qos_delivery_ratio(records)?,
            avg_ul_prbs: avg_resource(records, Hop::Uplink)?,
            avg_dl_prbs: avg_resource(records, Hop::Downlink)?,
            avg_gpu_mhz: avg_resource(records, Hop::Edge)?,
            ue_savings: savings_vs_static(records, PowerSide::Ue, params)?,
            bs_savings: savings_vs_static(records, PowerSide::Bs, params)?,
        })
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.4},{:.4},{:.4},{:.6},{:.6}",
            self.scheme,
            self.qos_ratio,
            self.avg_ul_prbs,
            self.avg_dl_prbs,
            self.avg_gpu_mhz,
            unsigned_zero(self.ue_savings, 6),
            unsigned_zero(self.bs_savings, 6)
        )
    }
}

/// Maps values that print as zero at `decimals` places to `+0.0`.
fn unsigned_zero(x: f64, decimals: i32) -> f64 {
    if (x * 10f64.powi(decimals)).round() == 0.0 {
        0.0
    } else {
        x
    }
}

/// Trailing averages for one traffic load (number of active flows).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub n_flows: usize,
    pub slots: usize,
    pub window: usize,
    pub qos_ratio: f64,
    pub avg_ul_prbs: f64,
    pub avg_dl_prbs: f64,
    pub avg_gpu_mhz: f64,
}

/// Groups records by active flow count and averages the last `window`
/// records of each group.
pub fn per_load_trailing_summary(records: &[SlotRecord], window: usize) -> Vec<LoadSummary> {
    let window = window.max(1);
    let mut groups: BTreeMap<usize, Vec<&SlotRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.active_flow_count).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(n_flows, group)| {
            let tail = &group[group.len().saturating_sub(window)..];
            let n = tail.len() as f64;
            let mean = |f: &dyn Fn(&SlotRecord) -> f64| tail.iter().map(|r| f(r)).sum::<f64>() / n;
            LoadSummary {
                n_flows,
                slots: group.len(),
                window: tail.len(),
                qos_ratio: mean(&|r| f64::from(u8::from(r.q_roundtrip))),
                avg_ul_prbs: mean(&|r| r.action.ul_prbs as f64),
                avg_dl_prbs: mean(&|r| r.action.dl_prbs as f64),
                avg_gpu_mhz: mean(&|r| r.action.gpu_mhz as f64),
            }
        })
        .collect()
}

//! Contextual bandits over discrete resource levels.
//!
//! Each hop keeps an independent table keyed by a discretized load state
//! (multiples of 5 PRBs in `0..=105`). Every state owns one [`ArmStats`] per
//! action level. Costs are minimized, so selection uses the lower confidence
//! bound of the normalized mean cost:
//!
//! ```text
//! index(a) = mean(a) - sqrt(2 ln n / pulls(a))
//! ```
//!
//! where `n` is the number of rounds played in the state. Two update rules
//! share the same table: [`ContextualBanditTable::update_single`] is plain
//! UCB1, and [`ContextualBanditTable::update_monotone`] feeds back every arm
//! whose outcome is implied by the monotone allocation/QoS relation.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest discretized state value.
pub const MAX_STATE: u32 = 105;
/// Granularity of discretized states.
pub const STATE_STEP: u32 = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BanditError {
    #[error("action space must not be empty")]
    EmptySpace,
    #[error("action space must be strictly increasing and positive, got {0:?}")]
    UnsortedSpace(Vec<u32>),
    #[error("action {0} is not a member of the action space")]
    UnknownAction(u32),
    #[error("state {0} is not a multiple of 5 in 0..=105")]
    InvalidState(u32),
    #[error("cost {cost} outside [0, {max}]")]
    CostOutOfRange { cost: f64, max: f64 },
    #[error("normalized cost {0} outside [0, 1]")]
    NormalizedOutOfRange(f64),
}

/// Sorted set of admissible resource levels for one hop (PRBs or MHz).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct ActionSpace {
    levels: Vec<u32>,
}

impl ActionSpace {
    pub fn new(levels: Vec<u32>) -> Result<Self, BanditError> {
        if levels.is_empty() {
            return Err(BanditError::EmptySpace);
        }
        if levels[0] == 0 || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(BanditError::UnsortedSpace(levels));
        }
        Ok(Self { levels })
    }

    /// `{10, 20, ..., 100, 106}` PRBs.
    pub fn default_prbs() -> Self {
        let mut levels: Vec<u32> = (1..=10).map(|k| k * 10).collect();
        levels.push(106);
        Self { levels }
    }

    /// `{500, 600, ..., 1600}` MHz.
    pub fn default_gpu() -> Self {
        Self {
            levels: (5..=16).map(|k| k * 100).collect(),
        }
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn min(&self) -> u32 {
        self.levels[0]
    }

    pub fn max(&self) -> u32 {
        self.levels[self.levels.len() - 1]
    }

    pub fn contains(&self, level: u32) -> bool {
        self.index_of(level).is_some()
    }

    pub fn index_of(&self, level: u32) -> Option<usize> {
        self.levels.binary_search(&level).ok()
    }

    fn require(&self, level: u32) -> Result<usize, BanditError> {
        self.index_of(level).ok_or(BanditError::UnknownAction(level))
    }
}

impl TryFrom<Vec<u32>> for ActionSpace {
    type Error = BanditError;

    fn try_from(levels: Vec<u32>) -> Result<Self, Self::Error> {
        Self::new(levels)
    }
}

impl From<ActionSpace> for Vec<u32> {
    fn from(space: ActionSpace) -> Self {
        space.levels
    }
}

/// Pull count and running mean of the normalized cost of one arm.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmStats {
    pub pulls: u64,
    pub mean_cost: f64,
}

impl ArmStats {
    fn record(&mut self, cost: f64) {
        self.pulls += 1;
        self.mean_cost += (cost - self.mean_cost) / self.pulls as f64;
    }
}

/// Penalty weight and normalization bound for one hop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub lambda: f64,
    pub a_max: f64,
}

impl CostParams {
    /// Parameters under the default penalty rule.
    pub fn for_max(a_max: u32) -> Self {
        Self {
            lambda: lambda_for(a_max as f64),
            a_max: a_max as f64,
        }
    }

    pub fn max_cost(&self) -> f64 {
        self.a_max + self.lambda
    }
}

/// Penalty that trades 20% of the hop's resources for a 10% drop in
/// violation probability, i.e. `0.2 a_max / 0.1 = 2 a_max`.
pub fn lambda_for(a_max: f64) -> f64 {
    2.0 * a_max
}

/// Per-slot cost: the allocation, plus `lambda` when the hop missed its budget.
pub fn slot_cost(a: f64, qos_met: bool, params: &CostParams) -> f64 {
    if qos_met {
        a
    } else {
        a + params.lambda
    }
}

pub fn normalize_cost(cost: f64, params: &CostParams) -> Result<f64, BanditError> {
    let max = params.max_cost();
    let slack = 1e-9 * max;
    if !(cost >= -slack && cost <= max + slack) {
        return Err(BanditError::CostOutOfRange { cost, max });
    }
    Ok((cost / max).clamp(0.0, 1.0))
}

/// Accepts multiples of 5 in `0..=105`.
pub fn validate_state(state: u32) -> Result<(), BanditError> {
    if state % STATE_STEP == 0 && state <= MAX_STATE {
        Ok(())
    } else {
        Err(BanditError::InvalidState(state))
    }
}

/// Statistics of every arm in one state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEntry {
    pub arms: Vec<ArmStats>,
    pub total_rounds: u64,
}

impl StateEntry {
    fn new(n_arms: usize) -> Self {
        Self {
            arms: vec![ArmStats::default(); n_arms],
            total_rounds: 0,
        }
    }
}

/// Per-state bandit statistics for a single hop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextualBanditTable {
    space: ActionSpace,
    params: CostParams,
    states: BTreeMap<u32, StateEntry>,
}

impl ContextualBanditTable {
    pub fn new(space: ActionSpace, params: CostParams) -> Self {
        Self {
            space,
            params,
            states: BTreeMap::new(),
        }
    }

    /// Table using the default penalty rule for `space`.
    pub fn with_default_cost(space: ActionSpace) -> Self {
        let params = CostParams::for_max(space.max());
        Self::new(space, params)
    }

    pub fn space(&self) -> &ActionSpace {
        &self.space
    }

    pub fn params(&self) -> &CostParams {
        &self.params
    }

    pub fn entry(&self, state: u32) -> Option<&StateEntry> {
        self.states.get(&state)
    }

    pub fn states(&self) -> impl Iterator<Item = (u32, &StateEntry)> {
        self.states.iter().map(|(k, v)| (*k, v))
    }

    fn entry_mut(&mut self, state: u32) -> &mut StateEntry {
        let n = self.space.len();
        self.states.entry(state).or_insert_with(|| StateEntry::new(n))
    }

    /// Picks the arm for `state`. Unpulled arms are swept in ascending order;
    /// afterwards the smallest lower confidence bound wins, ties going to the
    /// smaller level.
    pub fn select(&self, state: u32) -> Result<u32, BanditError> {
        validate_state(state)?;
        let Some(entry) = self.states.get(&state) else {
            return Ok(self.space.min());
        };
        if let Some(idx) = entry.arms.iter().position(|arm| arm.pulls == 0) {
            return Ok(self.space.levels()[idx]);
        }
        let log_n = (entry.total_rounds.max(1) as f64).ln();
        let mut best = 0;
        let mut best_index = f64::INFINITY;
        for (idx, arm) in entry.arms.iter().enumerate() {
            let bonus = (2.0 * log_n / arm.pulls as f64).sqrt();
            let index = arm.mean_cost - bonus;
            if index < best_index {
                best_index = index;
                best = idx;
            }
        }
        Ok(self.space.levels()[best])
    }

    /// Arm with the smallest empirical mean, ignoring exploration.
    pub fn greedy(&self, state: u32) -> Option<u32> {
        let entry = self.states.get(&state)?;
        let mut best: Option<(usize, f64)> = None;
        for (idx, arm) in entry.arms.iter().enumerate() {
            if arm.pulls == 0 {
                continue;
            }
            if best.is_none_or(|(_, m)| arm.mean_cost < m) {
                best = Some((idx, arm.mean_cost));
            }
        }
        best.map(|(idx, _)| self.space.levels()[idx])
    }

    /// Standard UCB1 update: only the played arm learns.
    pub fn update_single(
        &mut self,
        state: u32,
        action: u32,
        normalized_cost: f64,
    ) -> Result<(), BanditError> {
        validate_state(state)?;
        let idx = self.space.require(action)?;
        if !(0.0..=1.0).contains(&normalized_cost) {
            return Err(BanditError::NormalizedOutOfRange(normalized_cost));
        }
        let entry = self.entry_mut(state);
        entry.arms[idx].record(normalized_cost);
        entry.total_rounds += 1;
        Ok(())
    }

    /// Monotone update. A miss at `action` implies a miss for every smaller
    /// level, each charged `a + lambda`; a hit implies a hit for every larger
    /// level, each charged `a`. Every implied arm counts as pulled; the round
    /// clock advances once.
    pub fn update_monotone(
        &mut self,
        state: u32,
        action: u32,
        qos_met: bool,
    ) -> Result<(), BanditError> {
        validate_state(state)?;
        let idx = self.space.require(action)?;
        let params = self.params;
        let levels = self.space.levels().to_vec();
        let range = if qos_met { idx..levels.len() } else { 0..idx + 1 };
        let entry = self.entry_mut(state);
        for i in range {
            let cost = slot_cost(levels[i] as f64, qos_met, &params);
            entry.arms[i].record(normalize_cost(cost, &params)?);
        }
        entry.total_rounds += 1;
        Ok(())
    }

    /// Text dump, one `state arm pulls mean_cost` line per arm.
    pub fn dump(&self, label: &str) -> String {
        let mut out = format!(
            "# table {label} lambda={} a_max={}\n",
            self.params.lambda, self.params.a_max
        );
        out.push_str("state\tarm\tpulls\tmean_cost\n");
        for (state, entry) in &self.states {
            for (level, arm) in self.space.levels().iter().zip(&entry.arms) {
                out.push_str(&format!(
                    "{state}\t{level}\t{}\t{:.6}\n",
                    arm.pulls, arm.mean_cost
                ));
            }
        }
        out
    }
}

/// One table section read back from a dump file.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpedTable {
    pub label: String,
    pub rows: Vec<DumpRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpRow {
    pub state: u32,
    pub arm: u32,
    pub pulls: u64,
    pub mean_cost: f64,
}

#[derive(Debug, Error, PartialEq)]
#[error("bandit dump line {line}: {message}")]
pub struct DumpParseError {
    pub line: usize,
    pub message: String,
}

/// Parses text produced by [`ContextualBanditTable::dump`] (possibly several
/// tables concatenated).
pub fn parse_dump(text: &str) -> Result<Vec<DumpedTable>, DumpParseError> {
    let mut tables: Vec<DumpedTable> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let err = |message: &str| DumpParseError {
            line: i + 1,
            message: message.to_string(),
        };
        if line.is_empty() || line == "state\tarm\tpulls\tmean_cost" {
            continue;
        }
        if let Some(rest) = line.strip_prefix("# table ") {
            let label = rest.split_whitespace().next().unwrap_or_default();
            tables.push(DumpedTable {
                label: label.to_string(),
                rows: Vec::new(),
            });
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(err("expected 4 tab-separated fields"));
        }
        let row = DumpRow {
            state: fields[0].parse().map_err(|_| err("bad state"))?,
            arm: fields[1].parse().map_err(|_| err("bad arm"))?,
            pulls: fields[2].parse().map_err(|_| err("bad pulls"))?,
            mean_cost: fields[3].parse().map_err(|_| err("bad mean"))?,
        };
        match tables.last_mut() {
            Some(table) => table.rows.push(row),
            None => return Err(err("row before any table header")),
        }
    }
    Ok(tables)
}

impl fmt::Display for DumpedTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}]", self.label)?;
        writeln!(f, "{:>6} {:>6} {:>7} {:>10}", "state", "arm", "pulls", "mean")?;
        let mut last_state = None;
        for row in &self.rows {
            let shown = if last_state == Some(row.state) {
                String::new()
            } else {
                row.state.to_string()
            };
            last_state = Some(row.state);
            writeln!(
                f,
                "{:>6} {:>6} {:>7} {:>10.4}",
                shown, row.arm, row.pulls, row.mean_cost
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space3() -> ActionSpace {
        ActionSpace::new(vec![10, 20, 30]).unwrap()
    }

    #[test]
    fn lambda_rule() {
        assert_eq!(lambda_for(106.0), 212.0);
        assert_eq!(lambda_for(1600.0), 3200.0);
        assert_eq!(lambda_for(1.0), 2.0);
    }

    #[test]
    fn slot_cost_cases() {
        let p = CostParams {
            lambda: 212.0,
            a_max: 106.0,
        };
        assert_eq!(slot_cost(30.0, true, &p), 30.0);
        assert_eq!(slot_cost(30.0, false, &p), 242.0);
        assert_eq!(slot_cost(106.0, true, &p), 106.0);
    }

    #[test]
    fn normalization() {
        let p = CostParams::for_max(106);
        assert_eq!(normalize_cost(318.0, &p).unwrap(), 1.0);
        assert_eq!(normalize_cost(0.0, &p).unwrap(), 0.0);
        assert!((normalize_cost(242.0, &p).unwrap() - 0.761).abs() < 1e-3);
        assert!(normalize_cost(319.0, &p).is_err());
        assert!(normalize_cost(-1.0, &p).is_err());
    }

    #[test]
    fn spaces() {
        assert_eq!(
            ActionSpace::default_prbs().levels(),
            &[10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 106]
        );
        assert_eq!(ActionSpace::default_gpu().levels().len(), 12);
        assert_eq!(ActionSpace::default_gpu().max(), 1600);
        assert!(ActionSpace::new(vec![]).is_err());
        assert!(ActionSpace::new(vec![10, 10]).is_err());
        assert!(ActionSpace::new(vec![0, 10]).is_err());
        assert!(serde_json::from_str::<ActionSpace>("[20, 10]").is_err());
    }

    #[test]
    fn cold_state_selects_first_level() {
        let table = ContextualBanditTable::with_default_cost(space3());
        assert_eq!(table.select(40).unwrap(), 10);
        assert!(table.select(42).is_err());
        assert!(table.select(110).is_err());
    }

    #[test]
    fn sweep_then_argmin_mean_with_equal_pulls() {
        let mut table = ContextualBanditTable::with_default_cost(space3());
        for (level, mean) in [(10, 0.9), (20, 0.5), (30, 0.6)] {
            for _ in 0..5 {
                table.update_single(0, level, mean).unwrap();
            }
        }
        assert_eq!(table.entry(0).unwrap().total_rounds, 15);
        assert_eq!(table.select(0).unwrap(), 20);
    }

    #[test]
    fn under_sampled_arm_wins_at_equal_mean() {
        let mut table = ContextualBanditTable::with_default_cost(ActionSpace::new(vec![10, 20]).unwrap());
        table.update_single(0, 10, 0.5).unwrap();
        for _ in 0..100 {
            table.update_single(0, 20, 0.5).unwrap();
        }
        assert_eq!(table.select(0).unwrap(), 10);
    }

    #[test]
    fn ties_go_to_smaller_level() {
        let mut table = ContextualBanditTable::with_default_cost(space3());
        for level in [30, 20, 10] {
            table.update_single(5, level, 0.3).unwrap();
        }
        assert_eq!(table.select(5).unwrap(), 10);
    }

    #[test]
    fn running_mean() {
        let mut table = ContextualBanditTable::with_default_cost(space3());
        table.update_single(0, 10, 0.5).unwrap();
        let arm = table.entry(0).unwrap().arms[0];
        assert_eq!((arm.pulls, arm.mean_cost), (1, 0.5));
        let mut table = ContextualBanditTable::with_default_cost(space3());
        table.update_single(0, 10, 0.4).unwrap();
        table.update_single(0, 10, 0.6).unwrap();
        let arm = table.entry(0).unwrap().arms[0];
        assert_eq!(arm.pulls, 2);
        assert!((arm.mean_cost - 0.5).abs() < 1e-12);
        assert!(table.update_single(0, 15, 0.1).is_err());
        assert!(table.update_single(0, 10, 1.5).is_err());
    }

    #[test]
    fn monotone_miss_updates_prefix() {
        let params = CostParams {
            lambda: 60.0,
            a_max: 30.0,
        };
        let mut table = ContextualBanditTable::new(space3(), params);
        table.update_monotone(0, 20, false).unwrap();
        let e = table.entry(0).unwrap();
        assert!((e.arms[0].mean_cost * 90.0 - 70.0).abs() < 1e-9);
        assert!((e.arms[1].mean_cost * 90.0 - 80.0).abs() < 1e-9);
        assert_eq!(e.arms[2].pulls, 0);
        assert_eq!(e.total_rounds, 1);
    }

    #[test]
    fn monotone_hit_updates_suffix() {
        let params = CostParams {
            lambda: 60.0,
            a_max: 30.0,
        };
        let mut table = ContextualBanditTable::new(space3(), params);
        table.update_monotone(0, 20, true).unwrap();
        let e = table.entry(0).unwrap();
        assert_eq!(e.arms[0].pulls, 0);
        assert!((e.arms[1].mean_cost * 90.0 - 20.0).abs() < 1e-9);
        assert!((e.arms[2].mean_cost * 90.0 - 30.0).abs() < 1e-9);

        let mut table = ContextualBanditTable::new(space3(), params);
        table.update_monotone(0, 30, true).unwrap();
        let pulls: Vec<u64> = table.entry(0).unwrap().arms.iter().map(|a| a.pulls).collect();
        assert_eq!(pulls, vec![0, 0, 1]);
    }

    #[test]
    fn dump_round_trips_through_parser() {
        let mut table = ContextualBanditTable::with_default_cost(space3());
        table.update_monotone(10, 20, true).unwrap();
        table.update_monotone(15, 10, false).unwrap();
        let text = table.dump("ul");
        let parsed = parse_dump(&text).unwrap();
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].label, "ul");
        assert_eq!(parsed[0].rows.len(), 6);
        assert_eq!(parsed[0].rows[4].pulls, 0);
        assert!(parse_dump("0\t10\t1\t0.5\n").is_err());
    }
}

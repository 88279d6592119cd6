//! Experiment orchestration and artifact files.
//!
//! A run directory holds `slots.csv`, `summary.csv`, `per_load.csv` and
//! `bandit.txt`. Files are written to temporaries and renamed together once
//! the run has succeeded; on failure the temporaries are removed.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::thread;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use thiserror::Error;

use crate::bandit::{parse_dump, DumpParseError, DumpedTable};
use crate::control::{ControlError, Controller, SchemeKind, SlotRecord};
use crate::metrics::{per_load_trailing_summary, MetricsError, SummaryRow};
use crate::scenario::ScenarioConfig;
use crate::sim::Hop;
use crate::traffic::{generate_schedule, merged_arrivals, TrafficError, UserSchedule};

/// Stream id of the frame-size jitter generator; user streams start at 1.
const JITTER_STREAM: u64 = 0;

pub const SLOTS_HEADER: &str = "slot_index,n_flows,state_ul,state_dl,state_edge,a_ul,a_dl,a_gpu,q_ul,q_edge,q_dl,q_rt,frames_evaluated";
pub const PER_LOAD_HEADER: &str =
    "n_flows,slots,window,qos_ratio,avg_ul_prbs,avg_dl_prbs,avg_gpu_mhz,idle";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Dump(#[from] DumpParseError),
    #[error("no bandit.txt found under {0}")]
    NoDump(PathBuf),
    #[error("scheme run panicked")]
    Panicked,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Records and learned tables of one scheme run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scheme: SchemeKind,
    pub records: Vec<SlotRecord>,
    pub bandit_dump: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunArtifacts {
    pub slots_csv: PathBuf,
    pub summary: PathBuf,
    pub per_load: PathBuf,
    pub bandit_dump: PathBuf,
}

impl RunArtifacts {
    fn in_dir(dir: &Path) -> Self {
        Self {
            slots_csv: dir.join("slots.csv"),
            summary: dir.join("summary.csv"),
            per_load: dir.join("per_load.csv"),
            bandit_dump: dir.join("bandit.txt"),
        }
    }
}

/// Traffic realization shared by every scheme of a scenario.
pub fn traffic_realization(cfg: &ScenarioConfig) -> Result<Vec<UserSchedule>, RunError> {
    Ok(generate_schedule(&cfg.traffic)?)
}

/// Builds the controller for `scheme` on the scenario's traffic.
pub fn build_controller(cfg: &ScenarioConfig, scheme: SchemeKind) -> Result<Controller, RunError> {
    let schedules = traffic_realization(cfg)?;
    let arrivals = merged_arrivals(&schedules, cfg.traffic.fps);
    let mut jitter = ChaCha8Rng::seed_from_u64(cfg.seed);
    jitter.set_stream(JITTER_STREAM);
    Ok(Controller::new(cfg.control_config(scheme), arrivals, jitter)?)
}

/// Runs every slot of the scenario under `scheme`, in memory.
pub fn simulate(cfg: &ScenarioConfig, scheme: SchemeKind) -> Result<RunOutput, RunError> {
    let mut controller = build_controller(cfg, scheme)?;
    let records = controller.run(cfg.n_slots())?;
    let mut bandit_dump = String::new();
    for hop in Hop::ALL {
        if let Some(table) = controller.table(hop) {
            bandit_dump.push_str(&table.dump(&format!("{scheme}:{hop}")));
        }
    }
    if bandit_dump.is_empty() {
        bandit_dump = format!("# scheme {scheme} keeps no bandit tables\n");
    }
    Ok(RunOutput {
        scheme,
        records,
        bandit_dump,
    })
}

pub fn slots_csv(records: &[SlotRecord]) -> String {
    let mut out = String::with_capacity(64 * (records.len() + 1));
    out.push_str(SLOTS_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.slot_index,
            r.active_flow_count,
            r.state_ul,
            r.state_dl,
            r.state_edge,
            r.action.ul_prbs,
            r.action.dl_prbs,
            r.action.gpu_mhz,
            u8::from(r.q_ul),
            u8::from(r.q_edge),
            u8::from(r.q_dl),
            u8::from(r.q_roundtrip),
            r.frames_evaluated
        );
    }
    out
}

pub fn per_load_csv(records: &[SlotRecord], window: usize) -> String {
    let mut out = String::from(PER_LOAD_HEADER);
    out.push('\n');
    for s in per_load_trailing_summary(records, window) {
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.4},{:.4},{:.4},{}",
            s.n_flows,
            s.slots,
            s.window,
            s.qos_ratio,
            s.avg_ul_prbs,
            s.avg_dl_prbs,
            s.avg_gpu_mhz,
            u8::from(s.n_flows == 0)
        );
    }
    out
}

/// Writes per-load trailing averages. Loads with no active flow are kept but
/// flagged in the `idle` column.
pub fn write_per_load(records: &[SlotRecord], window: usize, path: &Path) -> Result<(), RunError> {
    fs::write(path, per_load_csv(records, window)).map_err(io_err(path))
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut out = String::from(SummaryRow::CSV_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.csv_line());
        out.push('\n');
    }
    out
}

/// Writes all files at once: temporaries first, then renames.
fn write_atomically(files: &[(PathBuf, String)]) -> Result<(), RunError> {
    let mut temps: Vec<(PathBuf, &PathBuf)> = Vec::new();
    let result = (|| {
        for (path, contents) in files {
            let name = path.file_name().unwrap_or_default().to_string_lossy();
            let tmp = path.with_file_name(format!(".{name}.tmp"));
            fs::write(&tmp, contents).map_err(io_err(&tmp))?;
            temps.push((tmp, path));
        }
        for (tmp, path) in &temps {
            fs::rename(tmp, path).map_err(io_err(path))?;
        }
        Ok(())
    })();
    if result.is_err() {
        for (tmp, _) in &temps {
            let _ = fs::remove_file(tmp);
        }
    }
    result
}

fn write_run(cfg: &ScenarioConfig, run: &RunOutput, dir: &Path) -> Result<RunArtifacts, RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let artifacts = RunArtifacts::in_dir(dir);
    let rows: Vec<SummaryRow> = if run.records.is_empty() {
        Vec::new()
    } else {
        vec![SummaryRow::from_records(run.scheme, &run.records, &cfg.power)?]
    };
    write_atomically(&[
        (artifacts.slots_csv.clone(), slots_csv(&run.records)),
        (artifacts.summary.clone(), summary_csv(&rows)),
        (
            artifacts.per_load.clone(),
            per_load_csv(&run.records, cfg.trailing_window),
        ),
        (artifacts.bandit_dump.clone(), run.bandit_dump.clone()),
    ])?;
    Ok(artifacts)
}

/// Runs one scheme and writes its artifacts into `out_dir`.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    scheme: SchemeKind,
    out_dir: &Path,
) -> Result<RunArtifacts, RunError> {
    let run = simulate(cfg, scheme)?;
    write_run(cfg, &run, out_dir)
}

/// Result of running every configured scheme on one traffic realization.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<SummaryRow>,
    pub runs: Vec<RunOutput>,
}

/// Runs the configured schemes concurrently on the same seed. Rows follow
/// the order of `cfg.schemes`.
pub fn compare_in_memory(cfg: &ScenarioConfig) -> Result<Comparison, RunError> {
    let results: Vec<Result<RunOutput, RunError>> = thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .schemes
            .iter()
            .map(|&scheme| scope.spawn(move || simulate(cfg, scheme)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or(Err(RunError::Panicked)))
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for run in &runs {
        if !run.records.is_empty() {
            rows.push(SummaryRow::from_records(run.scheme, &run.records, &cfg.power)?);
        }
    }
    Ok(Comparison { rows, runs })
}

/// Runs every scheme, writes `<out>/<scheme>/...`, `<out>/comparison.csv`
/// and `<out>/report.txt`.
pub fn compare_schemes(cfg: &ScenarioConfig, out_dir: &Path) -> Result<Comparison, RunError> {
    let comparison = compare_in_memory(cfg)?;
    for run in &comparison.runs {
        write_run(cfg, run, &out_dir.join(run.scheme.name()))?;
    }
    write_atomically(&[
        (out_dir.join("comparison.csv"), summary_csv(&comparison.rows)),
        (out_dir.join("report.txt"), format_report(&cfg.name, &comparison.rows)),
    ])?;
    Ok(comparison)
}

/// Fixed-width comparison table: QoS, UL / DL PRBs, MHz, UE / BS savings.
pub fn format_report(title: &str, rows: &[SummaryRow]) -> String {
    let mut out = format!("{title}\n");
    let _ = writeln!(
        out,
        "{:<8} {:>7} {:>7} {:>7} {:>9} {:>7} {:>7}",
        "scheme", "QoS", "UL PRB", "DL PRB", "Freq MHz", "UE sav", "BS sav"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<8} {:>6.1}% {:>7.0} {:>7.0} {:>9.0} {:>6.0}% {:>6.0}%",
            r.scheme.name(),
            100.0 * r.qos_ratio,
            r.avg_ul_prbs,
            r.avg_dl_prbs,
            r.avg_gpu_mhz,
            whole_percent(r.ue_savings),
            whole_percent(r.bs_savings)
        );
    }
    out
}

/// Rounds a fraction to whole percent without printing `-0`.
fn whole_percent(x: f64) -> f64 {
    (100.0 * x).round() + 0.0
}

/// Reads the bandit dump of a run directory, or of every scheme directory
/// below a comparison directory.
pub fn read_bandit_dumps(dir: &Path) -> Result<Vec<DumpedTable>, RunError> {
    let mut files = Vec::new();
    let direct = dir.join("bandit.txt");
    if direct.is_file() {
        files.push(direct);
    } else {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path().join("bandit.txt")))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        files.extend(entries);
    }
    if files.is_empty() {
        return Err(RunError::NoDump(dir.to_path_buf()));
    }
    let mut tables = Vec::new();
    for file in files {
        let text = fs::read_to_string(&file).map_err(io_err(&file))?;
        tables.extend(parse_dump(&text)?);
    }
    Ok(tables)
}

//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! nonzero when any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use edgeslice::bandit::{slot_cost, ActionSpace, ContextualBanditTable, CostParams};
use edgeslice::control::{split_budget, HopBudgets, SchemeKind};
use edgeslice::metrics::{per_load_trailing_summary, savings_at, PowerParams, PowerSide, SummaryRow};
use edgeslice::runner::{build_controller, simulate, slots_csv};
use edgeslice::scenario::{load_config, ScenarioConfig};
use edgeslice::sim::{Direction, Frame, Hop, RadioAccounting, SimConfig, Simulator};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn bundled(i: u32) -> ScenarioConfig {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("scenario{i}.json"));
    load_config(&path).expect("bundled scenario loads")
}

// Published comparison rows: (avg UL PRBs, avg DL PRBs, UE savings %, BS savings %).
const TABLE_ROWS: [(f64, f64, f64, f64); 20] = [
    (106.0, 106.0, 0.0, 0.0),
    (27.0, 10.0, 40.0, 43.0),
    (45.0, 36.0, 30.0, 31.0),
    (33.0, 10.0, 37.0, 43.0),
    (106.0, 106.0, 0.0, 0.0),
    (75.0, 13.0, 15.0, 42.0),
    (57.0, 50.0, 25.0, 25.0),
    (70.0, 11.0, 18.0, 43.0),
    (106.0, 106.0, 0.0, 0.0),
    (30.0, 11.0, 38.0, 43.0),
    (46.0, 35.0, 30.0, 31.0),
    (42.0, 10.0, 32.0, 43.0),
    (106.0, 106.0, 0.0, 0.0),
    (47.0, 10.0, 30.0, 43.0),
    (54.0, 45.0, 26.0, 27.0),
    (48.0, 10.0, 29.0, 43.0),
    (106.0, 106.0, 0.0, 0.0),
    (65.0, 10.0, 20.0, 43.0),
    (54.0, 42.0, 26.0, 28.0),
    (78.0, 10.0, 14.0, 43.0),
];

fn power_formulas() -> Outcome {
    let params = PowerParams::default();
    let mut worst: f64 = 0.0;
    for (ul, dl, ue, bs) in TABLE_ROWS {
        let ue_sim = 100.0 * savings_at(PowerSide::Ue, ul, &params).unwrap();
        let bs_sim = 100.0 * savings_at(PowerSide::Bs, dl, &params).unwrap();
        worst = worst.max((ue_sim - ue).abs()).max((bs_sim - bs).abs());
    }
    let ul33 = 100.0 * savings_at(PowerSide::Ue, 33.0, &params).unwrap();
    let dl10 = 100.0 * savings_at(PowerSide::Bs, 10.0, &params).unwrap();
    outcome(
        worst <= 2.0,
        format!("20 rows, worst deviation {worst:.2} pp (tol 2 pp); UL 33 -> {ul33:.2}%, DL 10 -> {dl10:.2}%"),
    )
}

fn budget_split() -> Outcome {
    let b = split_budget(0.150, (0.012, 0.009, 0.019), (5.0, 2.0, 3.0)).unwrap();
    let expected = HopBudgets {
        ul: 0.07,
        edge: 0.02,
        dl: 0.06,
    };
    outcome(
        b == expected,
        format!("({:.3}, {:.3}, {:.3}) s, expected (0.070, 0.020, 0.060) exactly", b.ul, b.edge, b.dl),
    )
}

fn calibration() -> Outcome {
    let mut sim = Simulator::new(SimConfig::default()).unwrap();
    for k in 0..(60 * 30) {
        let t = k as f64 / 30.0;
        sim.schedule_frame(Frame::new(0, k, 4.3e6 / 30.0, 1.5e6 / 30.0, t), t)
            .unwrap();
    }
    sim.advance_to(61.0).unwrap();
    let frames = sim.frames();
    let n = frames.len() as f64;
    let mean = |f: &dyn Fn(&Frame) -> f64| frames.iter().map(f).sum::<f64>() / n;
    let ul = mean(&|f| f.hop_delay(Hop::Uplink).unwrap());
    let edge = mean(&|f| f.hop_delay(Hop::Edge).unwrap());
    let dl = mean(&|f| f.hop_delay(Hop::Downlink).unwrap());
    let rt = mean(&|f| f.roundtrip().unwrap());
    let within = |x: f64, target: f64| (x - target).abs() <= 0.10 * target;
    outcome(
        within(ul, 0.012) && within(edge, 0.009) && within(dl, 0.019) && within(rt, 0.040),
        format!(
            "UL {:.2} / edge {:.2} / DL {:.2} / roundtrip {:.2} ms vs 12 / 9 / 19 / 40 (tol 10%)",
            ul * 1e3,
            edge * 1e3,
            dl * 1e3,
            rt * 1e3
        ),
    )
}

/// Synthetic hop whose violation probability falls with the allocation.
fn violation_probability(a: u32) -> f64 {
    match a {
        0..=40 => 1.0,
        41..=50 => 0.5,
        51..=60 => 0.02,
        _ => 0.0,
    }
}

/// Cumulative raw cost and final greedy arm. Both learners see the same
/// uniform draw per round, so a hit at `a` implies hits above `a`.
fn play(monotone: bool, seed: u64, rounds: usize) -> (f64, u32) {
    let space = ActionSpace::default_prbs();
    let params = CostParams::for_max(106);
    let mut table = ContextualBanditTable::new(space, params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..rounds {
        let u: f64 = rng.random();
        let a = table.select(0).unwrap();
        let hit = u >= violation_probability(a);
        let cost = slot_cost(a as f64, hit, &params);
        total += cost;
        if monotone {
            table.update_monotone(0, a, hit).unwrap();
        } else {
            table.update_single(0, a, cost / params.max_cost()).unwrap();
        }
    }
    (total, table.greedy(0).unwrap())
}

fn monotone_dominance() -> Outcome {
    let params = CostParams::for_max(106);
    let oracle = ActionSpace::default_prbs()
        .levels()
        .iter()
        .copied()
        .min_by(|&x, &y| {
            let c = |a: u32| a as f64 + params.lambda * violation_probability(a);
            c(x).total_cmp(&c(y))
        })
        .unwrap();
    let mut dominated = 0;
    let mut optimal = 0;
    for seed in 0..20 {
        let (m_cost, m_arm) = play(true, seed, 240);
        let (u_cost, _) = play(false, seed, 240);
        dominated += usize::from(m_cost <= u_cost);
        optimal += usize::from(m_arm == oracle);
    }
    let cfg = bundled(2);
    let mucb1 = simulate(&cfg, SchemeKind::Mucb1).unwrap();
    let ucb1 = simulate(&cfg, SchemeKind::Ucb1).unwrap();
    let q = |r: &[edgeslice::SlotRecord]| {
        SummaryRow::from_records(SchemeKind::Static, r, &cfg.power)
            .unwrap()
            .qos_ratio
    };
    let (qm, qu) = (q(&mucb1.records), q(&ucb1.records));
    outcome(
        dominated == 20 && optimal >= 18 && qm > qu,
        format!(
            "cost MUCB1 <= UCB1 on {dominated}/20 seeds; greedy = oracle arm {oracle} on {optimal}/20 (need 18); scenario 2 QoS MUCB1 {:.1}% vs UCB1 {:.1}% (need >)",
            100.0 * qm,
            100.0 * qu
        ),
    )
}

fn counterfactual_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let n = rng.random_range(1..=15);
        let mut levels: Vec<u32> = (0..n).map(|_| rng.random_range(1..3000)).collect();
        levels.sort_unstable();
        levels.dedup();
        let a = levels[rng.random_range(0..levels.len())];
        let q: bool = rng.random();
        let space = ActionSpace::new(levels.clone()).unwrap();
        let mut table = ContextualBanditTable::with_default_cost(space);
        let params = *table.params();
        table.update_monotone(0, a, q).unwrap();
        let arms = &table.entry(0).unwrap().arms;
        for (i, &level) in levels.iter().enumerate() {
            let touched = if q { level >= a } else { level <= a };
            let raw = if q { level as f64 } else { level as f64 + params.lambda };
            let ok = if touched {
                arms[i].pulls == 1 && (arms[i].mean_cost - raw / params.max_cost()).abs() < 1e-12
            } else {
                arms[i].pulls == 0
            };
            mismatches += usize::from(!ok);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && elapsed < 1.0,
        format!("10000 triples, {mismatches} arm mismatches, {elapsed:.3} s"),
    )
}

fn convergence() -> Outcome {
    let start = Instant::now();
    let cfg = bundled(1);
    let mucb1 = simulate(&cfg, SchemeKind::Mucb1).unwrap();
    let stat = simulate(&cfg, SchemeKind::Static).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let row_m = SummaryRow::from_records(SchemeKind::Mucb1, &mucb1.records, &cfg.power).unwrap();
    let row_s = SummaryRow::from_records(SchemeKind::Static, &stat.records, &cfg.power).unwrap();
    let loads: Vec<_> = per_load_trailing_summary(&mucb1.records, 100)
        .into_iter()
        .filter(|l| l.n_flows > 0)
        .collect();
    let per_load_ok = !loads.is_empty() && loads.iter().all(|l| l.qos_ratio >= 0.90);
    let loads_text: Vec<String> = loads
        .iter()
        .map(|l| format!("{} flow(s) {:.2} over {}", l.n_flows, l.qos_ratio, l.window))
        .collect();
    let dl_ok = row_m.avg_dl_prbs.round() == 10.0;
    let ul_ok = row_m.avg_ul_prbs < row_s.avg_ul_prbs;
    let static_ok = row_s.qos_ratio >= row_m.qos_ratio;
    outcome(
        per_load_ok && dl_ok && ul_ok && static_ok && elapsed < 30.0,
        format!(
            "trailing-100 QoS [{}] (need >= 0.90 each); avg DL {:.2} PRBs (rounds to 10: {dl_ok}); avg UL {:.1} < static {:.0}: {ul_ok}; static QoS {:.3} >= MUCB1 {:.3}: {static_ok}; {elapsed:.1} s",
            loads_text.join(", "),
            row_m.avg_dl_prbs,
            row_m.avg_ul_prbs,
            row_s.avg_ul_prbs,
            row_s.qos_ratio,
            row_m.qos_ratio
        ),
    )
}

fn determinism() -> Outcome {
    let mut compared = 0;
    let mut differing = Vec::new();
    for i in 1..=5 {
        let cfg = bundled(i);
        for scheme in SchemeKind::ALL {
            let a = slots_csv(&simulate(&cfg, scheme).unwrap().records);
            let b = slots_csv(&simulate(&cfg, scheme).unwrap().records);
            compared += 1;
            if a != b {
                differing.push(format!("scenario{i}/{scheme}"));
            }
        }
    }
    outcome(
        differing.is_empty(),
        format!("{compared} scenario/scheme pairs run twice, differing: {differing:?}"),
    )
}

fn busy_work(acc: &RadioAccounting, now: f64) -> f64 {
    let mut total = 0.0;
    for &(start, end) in &acc.busy_periods {
        let end = end.unwrap_or(now);
        for (i, &(t, rate)) in acc.rate_history.iter().enumerate() {
            let next = acc.rate_history.get(i + 1).map_or(f64::INFINITY, |x| x.0);
            let (lo, hi) = (t.max(start), next.min(end));
            if hi > lo {
                total += rate * (hi - lo);
            }
        }
    }
    total
}

fn conservation() -> Outcome {
    let mut boundaries = 0;
    let mut census_failures = 0;
    let mut causality_failures = 0;
    let mut worst_rel: f64 = 0.0;
    for i in 1..=5 {
        let cfg = bundled(i);
        for scheme in SchemeKind::ALL {
            let mut ctl = build_controller(&cfg, scheme).unwrap();
            for _ in 0..cfg.n_slots() {
                ctl.run_slot().unwrap();
                let c = ctl.sim().census();
                boundaries += 1;
                census_failures += usize::from(c.injected != c.completed + c.in_flight());
            }
            let sim = ctl.sim();
            for f in sim.frames() {
                let chain = [Some(f.t_sent), f.t_edge_in, f.t_edge_out, f.t_received];
                let known: Vec<f64> = chain.iter().map_while(|t| *t).collect();
                let prefix_only = chain[known.len()..].iter().all(Option::is_none);
                if !prefix_only || !known.windows(2).all(|w| w[0] <= w[1]) {
                    causality_failures += 1;
                }
            }
            for dir in [Direction::Uplink, Direction::Downlink] {
                let acc = sim.radio_accounting(dir);
                let expected = busy_work(&acc, sim.now());
                if acc.served_bits > 0.0 {
                    worst_rel = worst_rel.max((expected - acc.served_bits).abs() / acc.served_bits);
                }
            }
        }
    }
    outcome(
        census_failures == 0 && causality_failures == 0 && worst_rel <= 1e-6,
        format!(
            "{boundaries} slot boundaries, {census_failures} census mismatches, {causality_failures} non-monotone timestamp chains, worst drained-vs-rate*busy relative error {worst_rel:.2e} (tol 1e-6)"
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("power-formula reproduction", power_formulas),
        ("budget-split reproduction", budget_split),
        ("calibration", calibration),
        ("monotone-bandit dominance", monotone_dominance),
        ("counterfactual-update oracle", counterfactual_oracle),
        ("end-to-end convergence", convergence),
        ("determinism", determinism),
        ("conservation and causality", conservation),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = check();
        failed += usize::from(!result.pass);
        let tag = if result.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {}. {name}: {}", i + 1, result.detail);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

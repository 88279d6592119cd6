use edgeslice::bandit::ActionSpace;
use edgeslice::sim::{Backlog, Direction, Frame, Hop, HopAllocation, RadioAccounting, SimConfig, Simulator};
use proptest::prelude::*;

const UL_BITS: f64 = 4.3e6 / 30.0;
const DL_BITS: f64 = 1.5e6 / 30.0;
const SLOT: f64 = 1.0;
const SLOTS: usize = 8;

fn config() -> SimConfig {
    SimConfig {
        slot_len: SLOT,
        ..SimConfig::default()
    }
}

#[derive(Debug, Clone)]
struct Plan {
    arrivals: Vec<(f64, u32)>,
    allocations: Vec<HopAllocation>,
}

fn plan() -> impl Strategy<Value = Plan> {
    let prbs = prop::sample::select(ActionSpace::default_prbs().levels().to_vec());
    let gpu = prop::sample::select(ActionSpace::default_gpu().levels().to_vec());
    let alloc = (prbs.clone(), gpu, prbs).prop_map(|(ul_prbs, gpu_mhz, dl_prbs)| HopAllocation {
        ul_prbs,
        gpu_mhz,
        dl_prbs,
    });
    (
        prop::collection::vec((0.0..(SLOTS as f64 * SLOT), 0u32..3), 0..120),
        prop::collection::vec(alloc, SLOTS),
    )
        .prop_map(|(mut arrivals, allocations)| {
            arrivals.sort_by(|a, b| a.0.total_cmp(&b.0));
            Plan {
                arrivals,
                allocations,
            }
        })
}

/// Runs the plan slot by slot, calling `check` at every slot boundary.
fn drive(plan: &Plan, mut check: impl FnMut(&Simulator)) -> Simulator {
    let mut sim = Simulator::new(config()).unwrap();
    let mut next = 0;
    for (slot, alloc) in plan.allocations.iter().enumerate() {
        let start = slot as f64 * SLOT;
        let end = start + SLOT;
        sim.advance_to(start).unwrap();
        check(&sim);
        sim.set_allocation(*alloc, start).unwrap();
        while next < plan.arrivals.len() && plan.arrivals[next].0 < end {
            let (t, flow) = plan.arrivals[next];
            sim.schedule_frame(Frame::new(flow, next as u64, UL_BITS, DL_BITS, t), t)
                .unwrap();
            next += 1;
        }
    }
    sim.advance_to(SLOTS as f64 * SLOT).unwrap();
    check(&sim);
    sim.advance_to(600.0).unwrap();
    check(&sim);
    sim
}

/// Integral of the piecewise-constant rate over the busy periods up to `now`.
fn busy_work(acc: &RadioAccounting, now: f64) -> f64 {
    let mut total = 0.0;
    for &(start, end) in &acc.busy_periods {
        let end = end.unwrap_or(now);
        for (i, &(t, rate)) in acc.rate_history.iter().enumerate() {
            let next = acc.rate_history.get(i + 1).map_or(f64::INFINITY, |x| x.0);
            let lo = t.max(start);
            let hi = next.min(end);
            if hi > lo {
                total += rate * (hi - lo);
            }
        }
    }
    total
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frames_are_conserved_at_every_boundary(plan in plan()) {
        let mut checks = 0;
        let sim = drive(&plan, |sim| {
            let c = sim.census();
            assert_eq!(c.injected, c.completed + c.in_flight(), "{c:?}");
            checks += 1;
        });
        prop_assert_eq!(checks, SLOTS + 2);
        let c = sim.census();
        prop_assert_eq!(c.completed, plan.arrivals.len());
    }

    #[test]
    fn timestamps_are_causal(plan in plan()) {
        let sim = drive(&plan, |_| {});
        for f in sim.frames() {
            let chain = [f.t_sent, f.t_edge_in.unwrap(), f.t_edge_out.unwrap(), f.t_received.unwrap()];
            prop_assert!(chain.windows(2).all(|w| w[0] <= w[1]), "{:?}", f);
            prop_assert!(f.t_edge_in.unwrap() - f.t_sent >= config().uplink.fixed_latency - 1e-12);
        }
    }

    #[test]
    fn radio_hops_are_work_conserving(plan in plan()) {
        let sim = drive(&plan, |_| {});
        for dir in [Direction::Uplink, Direction::Downlink] {
            let acc = sim.radio_accounting(dir);
            let expected = busy_work(&acc, sim.now());
            let per_frame = if dir == Direction::Uplink { UL_BITS } else { DL_BITS };
            let drained = plan.arrivals.len() as f64 * per_frame;
            prop_assert!((acc.served_bits - drained).abs() <= 1e-6 * drained.max(1.0));
            prop_assert!((expected - drained).abs() <= 1e-6 * drained.max(1.0),
                "{:?}: rate x busy time {} vs drained {}", dir, expected, drained);
        }
    }

    #[test]
    fn identical_inputs_give_identical_frames(plan in plan()) {
        let a = drive(&plan, |_| {});
        let b = drive(&plan, |_| {});
        prop_assert_eq!(a.frames(), b.frames());
    }

    #[test]
    fn doubling_prbs_halves_transmission_time(t in 0.0f64..0.9, half in prop::sample::select(vec![10u32, 20, 30, 40, 50])) {
        let space = ActionSpace::new(vec![half, 2 * half, 106]).unwrap();
        let ul_delay = |prbs: u32| {
            let mut cfg = config();
            cfg.ul_space = space.clone();
            let mut sim = Simulator::new(cfg).unwrap();
            sim.set_allocation(HopAllocation { ul_prbs: prbs, gpu_mhz: 1600, dl_prbs: 106 }, 0.0).unwrap();
            sim.schedule_frame(Frame::new(0, 0, UL_BITS, DL_BITS, t), t).unwrap();
            sim.advance_to(10.0).unwrap();
            sim.frames()[0].hop_delay(Hop::Uplink).unwrap() - sim.config().uplink.fixed_latency
        };
        let slow = ul_delay(half);
        let fast = ul_delay(2 * half);
        prop_assert!((slow - 2.0 * fast).abs() < 1e-12 * slow.max(1.0), "{} vs {}", slow, fast);
    }
}

#[test]
fn gpu_queue_stays_bounded_at_90_fps() {
    let mut sim = Simulator::new(SimConfig::default()).unwrap();
    let mut id = 0;
    for k in 0..(60 * 30) {
        for (flow, phase) in [0.0, 0.011, 0.022].into_iter().enumerate() {
            let t = k as f64 / 30.0 + phase;
            sim.schedule_frame(Frame::new(flow as u32, id, UL_BITS, DL_BITS, t), t)
                .unwrap();
            id += 1;
        }
    }
    let mut worst = 0;
    for step in 1..=600 {
        let t = step as f64 * 0.1;
        sim.advance_to(t).unwrap();
        match sim.hop_backlog(Hop::Edge, t).unwrap() {
            Backlog::Frames(n) => worst = worst.max(n),
            other => panic!("unexpected {other:?}"),
        }
    }
    assert!(worst <= 3, "gpu backlog reached {worst} frames");
}

#[test]
fn overloaded_uplink_backlog_grows_across_subintervals() {
    let mut sim = Simulator::new(SimConfig::default()).unwrap();
    sim.set_allocation(
        HopAllocation {
            ul_prbs: 10,
            gpu_mhz: 1600,
            dl_prbs: 106,
        },
        0.0,
    )
    .unwrap();
    for k in 0..150 {
        let t = k as f64 / 30.0;
        sim.schedule_frame(Frame::new(0, k, UL_BITS, DL_BITS, t), t).unwrap();
    }
    sim.advance_to(5.0).unwrap();
    let samples = sim.collect_subintervals(Direction::Uplink, 0.0, 5.0).unwrap();
    assert_eq!(samples.len(), 25);
    assert!(samples.windows(2).all(|w| w[0].backlog_bits <= w[1].backlog_bits));
    assert!(samples[24].backlog_bits > samples[0].backlog_bits);
}

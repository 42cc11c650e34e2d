use proptest::prelude::*;

use stabsim::datacenter;
use stabsim::engine::{run_experiment, ControllerKind, SimulationResult};
use stabsim::{ExperimentConfig, Reading, ServiceType, WorkloadTrace};

fn trace(counts: &[u32]) -> WorkloadTrace {
    WorkloadTrace::from_counts(counts, ServiceType::from_id(1).unwrap(), 700)
}

fn kind() -> impl Strategy<Value = ControllerKind> {
    prop::sample::select(ControllerKind::ALL.to_vec())
}

/// Totals refolded from the records in record order.
fn refold(r: &SimulationResult) -> (f64, usize, usize, f64, f64, u64, f64, u32) {
    let (mut rt, mut n, mut sat, mut viol) = (0.0, 0usize, 0usize, 0usize);
    let (mut e, mut c, mut cyc, mut ovh, mut peak) = (0.0, 0.0, 0u64, 0.0, 0u32);
    for x in &r.records {
        match x.response_time_ms {
            Reading::Finite(v) => {
                rt += v;
                n += 1;
            }
            Reading::Saturated => sat += 1,
        }
        if x.settling {
            viol += 1;
        }
        e += x.energy_kwh;
        c += x.cost_usd;
        cyc += u64::from(x.adaptation_cycles);
        ovh += x.overhead_s;
        peak = peak.max(x.overshoot);
    }
    let mean = if n > 0 { rt / n as f64 } else { 0.0 };
    (mean, sat, viol, e, c, cyc, ovh, peak)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn records_respect_bounds_and_totals_refold(counts in prop::collection::vec(0u32..=700, 0..25), k in kind(), seed in 0u64..1000) {
        let cfg = ExperimentConfig::default();
        let r = run_experiment(&cfg, k, &trace(&counts), seed).unwrap();
        prop_assert_eq!(r.records.len(), counts.len());
        for x in &r.records {
            prop_assert!((1..=1000).contains(&x.pm_num));
            prop_assert!(x.vm_num >= 1);
            prop_assert!(x.adaptation_cycles <= cfg.engine.max_cycles_per_instance);
            prop_assert!(x.energy_kwh >= 0.0 && x.cost_usd >= 0.0 && x.overhead_s >= 0.0);
            if let Reading::Finite(v) = x.response_time_ms {
                prop_assert!(v >= 0.0);
            }
        }
        let t = r.totals;
        let (mean, sat, viol, e, c, cyc, ovh, peak) = refold(&r);
        prop_assert_eq!(t.mean_response_time_ms.to_bits(), mean.to_bits());
        prop_assert_eq!(t.total_energy_kwh.to_bits(), e.to_bits());
        prop_assert_eq!(t.total_cost_usd.to_bits(), c.to_bits());
        prop_assert_eq!(t.total_overhead_s.to_bits(), ovh.to_bits());
        prop_assert_eq!((t.saturated_instances, t.violations, t.total_adaptation_cycles, t.peak_overshoot), (sat, viol, cyc, peak));
    }

    #[test]
    fn histories_track_every_instance(counts in prop::collection::vec(0u32..=700, 1..20), k in kind()) {
        let cfg = ExperimentConfig::default();
        let r = run_experiment(&cfg, k, &trace(&counts), 1).unwrap();
        for h in &r.histories {
            prop_assert_eq!(h.len(), counts.len());
            prop_assert!(h.tuples().windows(2).all(|w| w[0].t_i < w[1].t_i));
        }
    }

    #[test]
    fn without_adaptation_qos_is_a_function_of_the_trace(counts in prop::collection::vec(0u32..=700, 1..20), k in kind(), seed in 0u64..100) {
        let mut cfg = ExperimentConfig::default();
        cfg.engine.max_cycles_per_instance = 0;
        let service = ServiceType::from_id(1).unwrap();
        let r = run_experiment(&cfg, k, &trace(&counts), seed).unwrap();
        for (x, &n) in r.records.iter().zip(&counts) {
            let lambda = f64::from(n) / cfg.engine.arrival_window_s;
            let m = datacenter::measure(&cfg.initial, lambda, &service, cfg.engine.instance_duration_s).unwrap();
            prop_assert_eq!(x.adaptation_cycles, 0);
            prop_assert_eq!(x.response_time_ms, m.response_time_ms);
            prop_assert_eq!(x.energy_kwh.to_bits(), m.energy_kwh.to_bits());
            prop_assert_eq!(x.cost_usd.to_bits(), m.cost_usd.to_bits());
        }
    }
}

#[test]
fn same_seed_gives_identical_results() {
    let cfg = ExperimentConfig {
        seed: 5,
        ..ExperimentConfig::default()
    };
    let t = cfg.trace().unwrap();
    for k in ControllerKind::ALL {
        let a = run_experiment(&cfg, k, &t, 5).unwrap();
        let b = run_experiment(&cfg, k, &t, 5).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.log, b.log);
        assert_eq!(a.histories, b.histories);
        assert_eq!(a.qmatrix, b.qmatrix);
    }
}

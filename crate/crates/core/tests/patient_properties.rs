use pretrial_core::heart::HeartHandles;
use pretrial_core::patient::{
    duplicate_for_arms, sample_patient, Param, ParamDist, PatientModel, PopulationSpec,
};
use pretrial_core::sta::{run, ChannelEvent, ChannelId, NetworkState, Observer, RunConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn truncated_normal_mean() {
    let d = ParamDist {
        mean: 1000.0,
        std: 100.0,
        lo: 800.0,
        hi: 1200.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut sum = 0.0;
    for _ in 0..n {
        let x = d.sample("x", &mut rng).unwrap();
        assert!((800.0..=1200.0).contains(&x));
        sum += x;
    }
    let mean = sum / n as f64;
    assert!((mean - 1000.0).abs() <= 5.0, "mean {mean}");
}

/// Records onset and offset times of the ventricular mode.
struct ModeLog {
    h: HeartHandles,
    onsets: Vec<f64>,
    offsets: Vec<f64>,
}

impl Observer for ModeLog {
    fn on_event(&mut self, ev: &ChannelEvent, _s: &NetworkState, _inject: &mut Vec<ChannelId>) {
        if ev.channel == self.h.vt_onset {
            self.onsets.push(ev.time);
        } else if ev.channel == self.h.vt_offset {
            self.offsets.push(ev.time);
        }
    }
}

/// A patient at the population means, whose ventricular switch alternates
/// with mean dwell 30 s in sinus rhythm and 15 s in VT.
fn mean_patient_log(seed: u64, bound: f64) -> ModeLog {
    let pop = PopulationSpec::default().at_means();
    assert_eq!(pop.get(Param::NsrVDwell).mean, 30_000.0);
    assert_eq!(pop.get(Param::VtDwell).mean, 15_000.0);
    let params = sample_patient(&pop, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let model = PatientModel::build(&params).unwrap();
    let mut log = ModeLog {
        h: model.heart,
        onsets: Vec::new(),
        offsets: Vec::new(),
    };
    run(&model.network, &RunConfig::new(seed, bound).unwrap(), &mut log).unwrap();
    log
}

#[test]
fn ventricular_dwell_means() {
    let log = mean_patient_log(17, 60_000_000.0);
    assert!(log.onsets.len() >= 1000 && log.offsets.len() >= 1000);
    let mut sinus = Vec::new();
    let mut vt = Vec::new();
    let mut last_offset = 0.0;
    for (i, &on) in log.onsets.iter().enumerate() {
        sinus.push(on - last_offset);
        if let Some(&off) = log.offsets.get(i) {
            assert!(off >= on);
            vt.push(off - on);
            last_offset = off;
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!((mean(&sinus) - 30_000.0).abs() <= 3000.0, "sinus dwell {}", mean(&sinus));
    assert!((mean(&vt) - 15_000.0).abs() <= 1500.0, "VT dwell {}", mean(&vt));
}

#[test]
fn sinus_time_fraction_matches_stationary_distribution() {
    let bound = 100_000_000.0;
    let log = mean_patient_log(29, bound);
    let mut in_vt = 0.0;
    for (i, &on) in log.onsets.iter().enumerate() {
        in_vt += log.offsets.get(i).copied().unwrap_or(bound) - on;
    }
    let sinus_fraction = 1.0 - in_vt / bound;
    // two-state Markov chain with exit rates a = 1/30000 and b = 1/15000:
    // stationary sinus probability b / (a + b) and long-run variance of the
    // occupation fraction 2 p (1 - p) / ((a + b) T)
    let (a, b) = (1.0 / 30_000.0, 1.0 / 15_000.0);
    let p = b / (a + b);
    let sigma = (2.0 * p * (1.0 - p) / ((a + b) * bound)).sqrt();
    assert!(
        (sinus_fraction - p).abs() <= 3.0 * sigma,
        "fraction {sinus_fraction} vs {p} (sigma {sigma})"
    );
}

fn arm_trace(model: &PatientModel, seed: u64) -> pretrial_core::sta::EventTrace {
    let mut net = model.network.clone();
    net.observe_all();
    run(&net, &RunConfig::new(seed, 200_000.0).unwrap(), &mut ()).unwrap()
}

#[test]
fn equal_arm_seeds_give_identical_traces() {
    let params = sample_patient(&PopulationSpec::default(), &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let (g, m) = duplicate_for_arms(&params, 99, 99).unwrap();
    assert_eq!(arm_trace(&g.model, g.seed), arm_trace(&m.model, m.seed));
    let (g, m) = duplicate_for_arms(&params, 1, 2).unwrap();
    assert_ne!(arm_trace(&g.model, g.seed), arm_trace(&m.model, m.seed));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampled_values_respect_bounds_and_order(seed: u64) {
        let pop = PopulationSpec::default();
        let p = sample_patient(&pop, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for &param in Param::ALL {
            let d = pop.get(param);
            let v = p.get(param);
            prop_assert!(v >= d.lo && v <= d.hi, "{} = {}", param.name(), v);
        }
        for (lo, hi) in [
            (Param::ANsrCycleMin, Param::ANsrCycleMax),
            (Param::AtCycleMin, Param::AtCycleMax),
            (Param::VNsrCycleMin, Param::VNsrCycleMax),
            (Param::VtCycleMin, Param::VtCycleMax),
            (Param::AvDelayMin, Param::AvDelayMax),
        ] {
            prop_assert!(p.get(lo) <= p.get(hi));
        }
        prop_assert!(PatientModel::build(&p).is_ok());
    }

    #[test]
    fn both_arms_share_the_digest(seed: u64, gs: u64, ms: u64) {
        let p = sample_patient(&PopulationSpec::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let (g, m) = duplicate_for_arms(&p, gs, ms).unwrap();
        prop_assert_eq!(g.params.digest(), m.params.digest());
        prop_assert_eq!(&g.params, &m.params);
    }
}

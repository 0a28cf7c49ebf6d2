//! Acceptance suite. Runs without the libtest harness so that every
//! criterion prints exactly one PASS/FAIL line, even on success.
//!
//! Run with `cargo test --release --test acceptance`.

mod common;

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{audit_patient, cox_fixture, grid_hazard_ratio, rec, sampled_patient, swap_groups};
use pretrial_core::adjudication::{compare_cohort, compare_trial1, compare_trial2, ArmOutcome, Check, CohortStatistic};
use pretrial_core::heart::{
    heart_network, HeartConfig, HeartEventKind, HeartRecorder, MorphologyChannel, NodeParameters, PathParameters,
};
use pretrial_core::sprt::{Sprt, SprtConfig, SprtDecision};
use pretrial_core::sta::{run, RunConfig};
use pretrial_core::survival::{cox_hazard_ratio, kaplan_meier, mean_survival_time, Group};
use pretrial_core::trial::{run_iteration, run_trial, SyntheticSpec, TrialContext, TrialReport, TrialSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion<'a> = (u8, &'static str, Duration, Box<dyn Fn() -> Outcome + 'a>);

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

/// Wald's expected number of iterations, computed from first principles:
/// the exponent h solving `q e^{h a} + (1 - q) e^{h b} = 1` is found by
/// bisection rather than through any closed form.
fn wald_oracle(alpha: f64, beta: f64, delta: f64, q: f64, p_disc: f64) -> f64 {
    let (q0, q1) = (0.5 + delta, 0.5 - delta);
    let a = (q1 / q0).ln();
    let b = ((1.0 - q1) / (1.0 - q0)).ln();
    let ln_a = ((1.0 - beta) / alpha).ln();
    let ln_b = (beta / (1.0 - alpha)).ln();
    let drift = q * a + (1.0 - q) * b;
    let discordant = if q <= 0.0 {
        ln_a / b
    } else if q >= 1.0 {
        ln_b / a
    } else if drift.abs() < 1e-12 {
        -ln_a * ln_b / (q * a * a + (1.0 - q) * b * b)
    } else {
        let g = |h: f64| q * (h * a).exp() + (1.0 - q) * (h * b).exp() - 1.0;
        // the nonzero root lies on the side opposite to the drift
        let (mut lo, mut hi) = if drift < 0.0 { (1e-9, 1.0) } else { (-1.0, -1e-9) };
        while g(lo) * g(hi) > 0.0 {
            if drift < 0.0 {
                hi *= 2.0
            } else {
                lo *= 2.0
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let h = 0.5 * (lo + hi);
        let accept_h0 = ((h * ln_a).exp() - 1.0) / ((h * ln_a).exp() - (h * ln_b).exp());
        (accept_h0 * ln_b + (1.0 - accept_h0) * ln_a) / drift
    };
    discordant / p_disc
}

fn criterion_1() -> Outcome {
    let cfg = SprtConfig::default();
    let step = (0.55f64 / 0.45).ln();
    let threshold = 19f64.ln();
    let bounds_ok = (cfg.step_second() - step).abs() < 1e-15
        && (cfg.step_first() + step).abs() < 1e-15
        && (cfg.upper() - threshold).abs() < 1e-15
        && (cfg.lower() + threshold).abs() < 1e-15;
    let decide = |pair: (bool, bool)| {
        let mut t = Sprt::new(cfg).unwrap();
        (1..=100)
            .find_map(|i| {
                let s = t.ingest(pair.0, pair.1).unwrap();
                (s.decision != SprtDecision::Undecided).then_some((i, s.decision))
            })
            .unwrap()
    };
    let h0 = decide((true, false));
    let h1 = decide((false, true));
    Outcome::new(
        bounds_ok && h0 == (15, SprtDecision::AcceptH0) && h1 == (15, SprtDecision::AcceptH1),
        format!("all-(1,0) -> {:?} at {}, all-(0,1) -> {:?} at {}", h0.1, h0.0, h1.1, h1.0),
    )
}

fn synthetic_run(trial_id: u8, seed: u64, p: (f64, f64), cohort_n: Option<usize>, out: &Path) -> TrialReport {
    let mut s = TrialSpec::new(trial_id, seed);
    s.synthetic = Some(SyntheticSpec { p1: p.0, p2: p.1 });
    s.cohort_n = cohort_n;
    s.output_dir = out.to_path_buf();
    run_trial(&TrialContext::new(s).unwrap()).unwrap()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn criterion_2(dir: &Path) -> Outcome {
    let cfg = SprtConfig::default();
    let mut pass = true;
    let mut details = Vec::new();
    for (p, correct) in [((0.1, 0.4), SprtDecision::AcceptH1), ((0.4, 0.1), SprtDecision::AcceptH0)] {
        let runs = 200;
        let mut wrong = 0;
        let mut iters = Vec::new();
        for m in 0..runs {
            let r = synthetic_run(1, 10_000 + m, p, None, &dir.join(format!("c2_{}_{m}", p.0)));
            wrong += usize::from(r.decision != correct);
            iters.push(r.iterations_used as f64);
        }
        let p_disc = p.0 * (1.0 - p.1) + p.1 * (1.0 - p.0);
        let q = p.0 * (1.0 - p.1) / p_disc;
        let wald = wald_oracle(cfg.alpha, cfg.beta, cfg.delta, q, p_disc);
        let med = median(&mut iters);
        let rate = wrong as f64 / runs as f64;
        let ok = rate <= 0.10 && med <= 2.0 * wald && med >= wald / 2.0;
        pass &= ok;
        details.push(format!("{p:?}: wrong {rate:.3}, median {med} vs Wald {wald:.1}"));
    }
    Outcome::new(pass, details.join("; "))
}

fn criterion_3() -> Outcome {
    let km = vec![
        rec(2.0, true, Group::Gdt),
        rec(3.0, true, Group::Gdt),
        rec(3.0, true, Group::Gdt),
        rec(5.0, false, Group::Gdt),
        rec(7.0, true, Group::Gdt),
    ];
    let c = kaplan_meier(&km).unwrap();
    let knots_ok = c.knots == vec![(0.0, 1.0), (2.0, 0.8), (3.0, 0.4), (7.0, 0.0)];
    let mst = mean_survival_time(&c, 7.0).unwrap();
    let rs = cox_fixture();
    let hr = cox_hazard_ratio(&rs).unwrap();
    let grid = grid_hazard_ratio(&rs);
    let swapped = cox_hazard_ratio(&swap_groups(&rs)).unwrap();
    let rel = ((hr - grid) / grid).abs();
    let recip = (hr * swapped - 1.0).abs();
    Outcome::new(
        knots_ok && mst == 4.4 && rel < 1e-3 && recip < 1e-9,
        format!(
            "knots {:?}, MST {mst}, HR {hr:.6} vs grid {grid:.6} (rel {rel:.1e}), swap product error {recip:.1e}",
            &c.knots[1..]
        ),
    )
}

fn criterion_4() -> Outcome {
    // 5 patients x 2000 s = 10^4 simulated seconds, with a therapy every 7 s
    let mut violations = Vec::new();
    let mut checks = 0;
    let mut vt_therapies = 0;
    for k in 0..5u64 {
        let a = audit_patient(&sampled_patient(100 + k), 7 + k, 2_000_000.0, 7000.0);
        violations.extend(a.violations);
        checks += a.a_intervals_checked + a.conductions_checked + a.v_spacings_checked + a.therapies;
        vt_therapies += a.vt_therapies_checked;
    }
    let cfg = HeartConfig {
        atrial: NodeParameters::new(300.0, 300.0, 50.0).unwrap(),
        ventricular: NodeParameters::new(1500.0, 2000.0, 200.0).unwrap(),
        path: PathParameters::new(150.0, 150.0, 600.0).unwrap(),
        morphology: MorphologyChannel::NOISELESS,
        ventricular_escape: false,
    };
    let (net, h) = heart_network(&cfg).unwrap();
    let mut rec = HeartRecorder::new(h);
    run(&net, &RunConfig::new(1, 3000.0).unwrap(), &mut rec).unwrap();
    let v: Vec<f64> = rec.events.iter().filter(|e| e.kind == HeartEventKind::VIn).map(|e| e.time).collect();
    let block_ok = v == [450.0, 1050.0, 1650.0, 2250.0, 2850.0];
    Outcome::new(
        violations.is_empty() && block_ok && vt_therapies > 0,
        format!(
            "{} violations over {checks} checks ({vt_therapies} therapies during VT); 2:1 block V_in at {v:?}",
            violations.len()
        ),
    )
}

fn criterion_5() -> Outcome {
    const T: f64 = 1_000_000.0;
    let n = |k: usize| ArmOutcome::from_inappropriate(&vec![500.0; k], T);
    let st = |t: f64| {
        let times: Vec<f64> = if t < T { vec![t] } else { Vec::new() };
        ArmOutcome::from_inappropriate(&times, T)
    };
    let cases: [(Check, Check); 9] = [
        (compare_trial1(&n(0), &n(3)), Check::GdtWins),
        (compare_trial1(&n(2), &n(2)), Check::Tie),
        (compare_trial1(&n(1), &n(0)), Check::MdtWins),
        (compare_trial2(&st(T), &st(T)), Check::Tie),
        (compare_trial2(&st(800_000.0), &st(300_000.0)), Check::GdtWins),
        (compare_trial2(&st(200_000.0), &st(900_000.0)), Check::MdtWins),
        (compare_cohort(CohortStatistic::MeanSurvival { gdt: 654_321.0, mdt: 654_321.0 }).0, Check::Tie),
        (compare_cohort(CohortStatistic::HazardRatio(Some(1.4))).0, Check::MdtWins),
        (compare_cohort(CohortStatistic::HazardRatio(Some(0.6))).0, Check::GdtWins),
    ];
    let table_ok = cases.iter().filter(|(got, want)| got == want).count();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut anti = 0;
    for _ in 0..1000 {
        let draw = |rng: &mut ChaCha8Rng| {
            let k = rng.random_range(0..3usize);
            let times: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..T)).collect();
            ArmOutcome::from_inappropriate(&times, T)
        };
        let (g, m) = (draw(&mut rng), draw(&mut rng));
        let (a, b) = (rng.random_range(0.0..T), rng.random_range(0.0..T));
        let hr = rng.random_range(-3.0f64..3.0).exp();
        let ok = compare_trial1(&g, &m) == compare_trial1(&m, &g).swapped()
            && compare_trial2(&g, &m) == compare_trial2(&m, &g).swapped()
            && compare_cohort(CohortStatistic::MeanSurvival { gdt: a, mdt: b }).0
                == compare_cohort(CohortStatistic::MeanSurvival { gdt: b, mdt: a }).0.swapped()
            && compare_cohort(CohortStatistic::HazardRatio(Some(hr))).0
                == compare_cohort(CohortStatistic::HazardRatio(Some(1.0 / hr))).0.swapped();
        anti += usize::from(ok);
    }
    Outcome::new(
        table_ok == 9 && anti == 1000,
        format!("{table_ok}/9 table cases, anti-symmetry {anti}/1000"),
    )
}

fn criterion_6(dir: &Path) -> Outcome {
    let spec = |out: &Path| {
        let mut s = TrialSpec::new(1, 42);
        s.output_dir = out.to_path_buf();
        s
    };
    let (a, b) = (dir.join("c6a"), dir.join("c6b"));
    run_trial(&TrialContext::new(spec(&a)).unwrap()).unwrap();
    let ctx = TrialContext::new(spec(&b)).unwrap();
    run_trial(&ctx).unwrap();
    let identical = ["iterations.csv", "cohort_records.csv", "survival_curves.csv"]
        .iter()
        .all(|f| fs::read(a.join(f)).unwrap() == fs::read(b.join(f)).unwrap());

    let mut reader = csv::Reader::from_path(a.join("iterations.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let mut replayed = 0;
    for row in &rows {
        let r = run_iteration(&ctx, row[0].parse().unwrap()).unwrap();
        let same = row[1] == r.seed.to_string()
            && row[2] == r.n_inapp_gdt.unwrap().to_string()
            && row[3] == r.n_inapp_mdt.unwrap().to_string()
            && row[4] == r.st_gdt.unwrap().to_string()
            && row[5] == r.st_mdt.unwrap().to_string()
            && row[9] == r.check.value().to_string();
        replayed += usize::from(same);
    }
    Outcome::new(
        identical && replayed == rows.len(),
        format!("byte-identical outputs: {identical}; standalone replay {replayed}/{} rows", rows.len()),
    )
}

fn criterion_7(dir: &Path) -> Outcome {
    let mut pass = true;
    let mut details = Vec::new();
    for trial_id in 1..=4u8 {
        let mut s = TrialSpec::new(trial_id, 42);
        s.sprt.max_iterations = 10_000;
        if s.is_cohort_trial() {
            s.cohort_n = Some(25);
        }
        s.output_dir = dir.join(format!("c7_{trial_id}"));
        let cfg = s.sprt;
        let started = Instant::now();
        let r = run_trial(&TrialContext::new(s).unwrap()).unwrap();
        let elapsed = started.elapsed();
        let decided = matches!(r.decision, SprtDecision::AcceptH0 | SprtDecision::AcceptH1);
        let finished = decided || r.decision == SprtDecision::InconclusiveCap;
        let mut ok = finished && r.iterations_used <= 10_000 && elapsed < Duration::from_secs(600);
        let mut wald_note = String::from("no decision, no Wald check");
        if decided {
            let q = r.gdt_wins as f64 / r.discordant_count as f64;
            let wald = wald_oracle(cfg.alpha, cfg.beta, cfg.delta, q, r.discordant_fraction);
            let n = r.iterations_used as f64;
            ok &= n <= 2.0 * wald && n >= wald / 2.0;
            wald_note = format!("Wald {wald:.1} at q={q:.3}, discordance {:.3}", r.discordant_fraction);
        }
        pass &= ok;
        details.push(format!(
            "trial {trial_id}: {} after {} iterations ({wald_note}; {:.1} s) [{}]",
            r.decision.as_str(),
            r.iterations_used,
            elapsed.as_secs_f64(),
            r.summary
        ));
    }
    Outcome::new(pass, details.join("; "))
}

fn criterion_8(dir: &Path) -> Outcome {
    // GDT events with probability 0.2 against MDT 0.4: GDT survives longer,
    // so "GDT has shorter mean event-free survival" is false
    let runs = 50;
    let mut correct = 0;
    for m in 0..runs {
        let r = synthetic_run(3, 20_000 + m, (0.2, 0.4), Some(25), &dir.join(format!("c8_{m}")));
        correct += usize::from(r.decision == SprtDecision::AcceptH0);
    }
    Outcome::new(
        correct * 10 >= runs as usize * 9,
        format!("accept_H0 in {correct}/{runs} meta-runs"),
    )
}

fn main() -> ExitCode {
    let dir = tempfile::tempdir().unwrap();
    let criteria: [Criterion; 8] = [
        (1, "SPRT analytic bounds", Duration::from_secs(1), Box::new(criterion_1)),
        (2, "SPRT error calibration", Duration::from_secs(60), Box::new(|| criterion_2(dir.path()))),
        (3, "survival fixtures", Duration::from_secs(1), Box::new(criterion_3)),
        (4, "heart-model invariants", Duration::from_secs(60), Box::new(criterion_4)),
        (5, "check() tables and anti-symmetry", Duration::MAX, Box::new(criterion_5)),
        (6, "end-to-end determinism", Duration::MAX, Box::new(|| criterion_6(dir.path()))),
        (7, "trials 1-4 at defaults", Duration::from_secs(4 * 600), Box::new(|| criterion_7(dir.path()))),
        (8, "trial-3 cohort machinery", Duration::from_secs(300), Box::new(|| criterion_8(dir.path()))),
    ];
    let mut failed = 0;
    for (n, name, budget, check) in criteria {
        let started = Instant::now();
        let outcome = check();
        let elapsed = started.elapsed();
        let pass = outcome.pass && elapsed <= budget;
        failed += usize::from(!pass);
        println!(
            "criterion {n} ({name}): {} in {:.2} s: {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            outcome.detail
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}

//! Trial orchestration: iterations computed in parallel batches, ingested
//! into the sequential test strictly in index order.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::report::TrialReport;
use super::spec::TrialSpec;
use super::synthetic::{synthetic_cohort, synthetic_pair};
use super::TrialError;
use crate::adjudication::{
    adjudicate_arm, compare_cohort, compare_trial1, compare_trial2, Check, CohortStatistic,
};
use crate::device::{simulate_arm, Gdt, Mdt};
use crate::patient::{duplicate_for_arms, sample_patient, PopulationSpec};
use crate::seed::{iteration_seed, stream_seed, Stream};
use crate::sprt::{expected_iterations, map_check_to_pair, Sprt, SprtDecision, SprtState};
use crate::survival::{
    cox_hazard_ratio, kaplan_meier, mean_survival_time, write_records_csv, Group, SurvivalRecord,
};

/// Everything an iteration needs, resolved once per trial.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub spec: TrialSpec,
    pub population: PopulationSpec,
}

impl TrialContext {
    pub fn new(spec: TrialSpec) -> Result<Self, TrialError> {
        spec.validate()?;
        let population = match &spec.population {
            Some(path) => PopulationSpec::from_file(path)?,
            None => PopulationSpec::default(),
        };
        Ok(TrialContext { spec, population })
    }
}

/// Per-iteration result before it enters the sequential test.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationResult {
    /// 1-based iteration index.
    pub iter: u64,
    pub seed: u64,
    pub n_inapp_gdt: Option<usize>,
    pub n_inapp_mdt: Option<usize>,
    pub st_gdt: Option<f64>,
    pub st_mdt: Option<f64>,
    pub mst_g: Option<f64>,
    pub mst_m: Option<f64>,
    pub hr: Option<f64>,
    pub check: Check,
    /// Hazard ratio undefined; scored as a tie.
    pub degenerate: bool,
    /// Survival records of every simulated arm.
    pub records: Vec<SurvivalRecord>,
    /// `(file name, contents)` of per-arm traces, when tracing.
    pub traces: Vec<(String, String)>,
}

impl IterationResult {
    fn blank(iter: u64, seed: u64) -> Self {
        IterationResult {
            iter,
            seed,
            n_inapp_gdt: None,
            n_inapp_mdt: None,
            st_gdt: None,
            st_mdt: None,
            mst_g: None,
            mst_m: None,
            hr: None,
            check: Check::Tie,
            degenerate: false,
            records: Vec::new(),
            traces: Vec::new(),
        }
    }
}

struct PatientResult {
    st: [f64; 2],
    n_inapp: [usize; 2],
    traces: Vec<(String, String)>,
}

fn simulate_patient(
    ctx: &TrialContext,
    iter: u64,
    iter_seed: u64,
    k: u64,
) -> Result<PatientResult, TrialError> {
    let spec = &ctx.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(iter_seed, Stream::Patient(k)));
    let params = sample_patient(&ctx.population, &mut rng)?;
    let (g_arm, m_arm) = duplicate_for_arms(
        &params,
        stream_seed(iter_seed, Stream::GdtArm(k)),
        stream_seed(iter_seed, Stream::MdtArm(k)),
    )?;
    let mut gdt = Gdt::new(spec.gdt)?;
    let mut mdt = Mdt::new(spec.mdt)?;
    let mut out = PatientResult {
        st: [0.0; 2],
        n_inapp: [0; 2],
        traces: Vec::new(),
    };
    for (slot, arm, device, name) in [
        (
            0,
            &g_arm,
            &mut gdt as &mut dyn crate::device::Discriminator,
            "gdt",
        ),
        (
            1,
            &m_arm,
            &mut mdt as &mut dyn crate::device::Discriminator,
            "mdt",
        ),
    ] {
        let run = simulate_arm(&arm.model, device, arm.seed, spec.time_bound_ms, spec.trace)?;
        let outcome = adjudicate_arm(&run.annotated, &spec.adjudication)?;
        out.st[slot] = outcome.survival_time_ms;
        out.n_inapp[slot] = outcome.n_inappropriate;
        if let Some(trace) = run.trace {
            let mut buf = Vec::new();
            trace
                .write_tsv(&arm.model.network, &mut buf)
                .expect("writing to memory");
            out.traces.push((
                format!("iter{iter}_patient{k}_{name}.tsv"),
                String::from_utf8(buf).expect("trace is UTF-8"),
            ));
        }
    }
    Ok(out)
}

fn cohort_statistics(
    result: &mut IterationResult,
    trial_id: u8,
    time_bound: f64,
) -> Result<(), TrialError> {
    let per_group = |g: Group| -> Vec<SurvivalRecord> {
        result
            .records
            .iter()
            .filter(|r| r.group == g)
            .copied()
            .collect()
    };
    let mst_g = mean_survival_time(&kaplan_meier(&per_group(Group::Gdt))?, time_bound)?;
    let mst_m = mean_survival_time(&kaplan_meier(&per_group(Group::Mdt))?, time_bound)?;
    let hr = cox_hazard_ratio(&result.records).ok();
    result.mst_g = Some(mst_g);
    result.mst_m = Some(mst_m);
    result.hr = hr;
    let stat = if trial_id == 3 {
        CohortStatistic::MeanSurvival {
            gdt: mst_g,
            mdt: mst_m,
        }
    } else {
        CohortStatistic::HazardRatio(hr)
    };
    let (check, degenerate) = compare_cohort(stat);
    result.check = check;
    result.degenerate = degenerate;
    Ok(())
}

/// Computes iteration `iter` (1-based) on its own; the result depends only
/// on the trial configuration, the population and `iter`.
pub fn run_iteration(ctx: &TrialContext, iter: u64) -> Result<IterationResult, TrialError> {
    let spec = &ctx.spec;
    let seed = iteration_seed(spec.seed, iter);
    let mut result = IterationResult::blank(iter, seed);
    let t = spec.time_bound_ms;

    if let Some(syn) = spec.synthetic {
        let s = stream_seed(seed, Stream::Synthetic);
        if spec.is_cohort_trial() {
            result.records = synthetic_cohort(syn.p1, syn.p2, spec.cohort_n.unwrap_or(1), t, s);
            cohort_statistics(&mut result, spec.trial_id, t)?;
        } else {
            result.check = match synthetic_pair(syn.p1, syn.p2, s) {
                (true, false) => Check::GdtWins,
                (false, true) => Check::MdtWins,
                _ => Check::Tie,
            };
        }
        return Ok(result);
    }

    let n = if spec.is_cohort_trial() {
        spec.cohort_n.unwrap_or(1)
    } else {
        1
    };
    let mut inapp = [0usize; 2];
    for k in 0..n as u64 {
        let p = simulate_patient(ctx, iter, seed, k)?;
        for (slot, group) in [(0, Group::Gdt), (1, Group::Mdt)] {
            inapp[slot] += p.n_inapp[slot];
            result.records.push(SurvivalRecord {
                time: p.st[slot],
                event: p.n_inapp[slot] > 0,
                group,
            });
        }
        if !spec.is_cohort_trial() {
            result.st_gdt = Some(p.st[0]);
            result.st_mdt = Some(p.st[1]);
        }
        result.traces.extend(p.traces);
    }
    result.n_inapp_gdt = Some(inapp[0]);
    result.n_inapp_mdt = Some(inapp[1]);

    match spec.trial_id {
        1 | 2 => {
            let outcome = |slot: usize| crate::adjudication::ArmOutcome {
                n_inappropriate: inapp[slot],
                first_inappropriate_ms: (inapp[slot] > 0).then_some(result.records[slot].time),
                survival_time_ms: result.records[slot].time,
                n_appropriate: 0,
                n_missed: 0,
            };
            let (g, m) = (outcome(0), outcome(1));
            result.check = if spec.trial_id == 1 {
                compare_trial1(&g, &m)
            } else {
                compare_trial2(&g, &m)
            };
        }
        _ => cohort_statistics(&mut result, spec.trial_id, t)?,
    }
    Ok(result)
}

fn run_iteration_tagged(ctx: &TrialContext, iter: u64) -> Result<IterationResult, TrialError> {
    run_iteration(ctx, iter).map_err(|e| TrialError::Iteration {
        iter,
        seed: iteration_seed(ctx.spec.seed, iter),
        source: Box::new(e),
    })
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn csv_row(r: &IterationResult, x: (bool, bool), s: &SprtState) -> [String; 14] {
    [
        r.iter.to_string(),
        r.seed.to_string(),
        fmt_opt(r.n_inapp_gdt),
        fmt_opt(r.n_inapp_mdt),
        fmt_opt(r.st_gdt),
        fmt_opt(r.st_mdt),
        fmt_opt(r.mst_g),
        fmt_opt(r.mst_m),
        fmt_opt(r.hr),
        r.check.value().to_string(),
        u8::from(x.0).to_string(),
        u8::from(x.1).to_string(),
        s.log_lr.to_string(),
        s.decision.as_str().to_string(),
    ]
}

pub const CSV_HEADER: [&str; 14] = [
    "iter",
    "seed",
    "n_inapp_gdt",
    "n_inapp_mdt",
    "st_gdt",
    "st_mdt",
    "mst_g",
    "mst_m",
    "hr",
    "check",
    "x1",
    "x2",
    "log_lr",
    "decision",
];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrialError + '_ {
    move |source| TrialError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Runs the trial to a decision or the cap, writing all outputs into the
/// spec's output directory.
pub fn run_trial(ctx: &TrialContext) -> Result<TrialReport, TrialError> {
    let started = Instant::now();
    let spec = &ctx.spec;
    let out_dir = &spec.output_dir;
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    if spec.trace {
        let dir = out_dir.join("traces");
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    }
    let csv_path = out_dir.join("iterations.csv");
    let file = File::create(&csv_path).map_err(io_err(&csv_path))?;
    let mut csv = csv::Writer::from_writer(BufWriter::new(file));
    csv.write_record(CSV_HEADER)?;

    let mut test = Sprt::new(spec.sprt)?;
    let batch = rayon::current_num_threads().max(1) as u64;
    let cap = spec.sprt.max_iterations;
    let mut records: Vec<SurvivalRecord> = Vec::new();
    let mut degenerate = 0u64;
    let mut surplus = 0u64;
    let mut next = 1u64;

    'outer: while next <= cap {
        let end = (next + batch).min(cap + 1);
        let results: Vec<Result<IterationResult, TrialError>> = (next..end)
            .into_par_iter()
            .map(|i| run_iteration_tagged(ctx, i))
            .collect();
        next = end;
        let mut pending = results.into_iter();
        while let Some(r) = pending.next() {
            let r = r?;
            let pair = map_check_to_pair(r.check);
            let state = test.ingest(pair.0, pair.1)?;
            csv.write_record(csv_row(&r, pair, &state))?;
            degenerate += u64::from(r.degenerate);
            for (name, contents) in &r.traces {
                let path = out_dir.join("traces").join(name);
                fs::write(&path, contents).map_err(io_err(&path))?;
            }
            records.extend(r.records);
            if state.decision != SprtDecision::Undecided {
                surplus = pending.len() as u64;
                break 'outer;
            }
        }
    }
    csv.flush().map_err(io_err(&csv_path))?;
    drop(csv);

    let rec_path = out_dir.join("cohort_records.csv");
    let f = File::create(&rec_path).map_err(io_err(&rec_path))?;
    write_records_csv(BufWriter::new(f), &records)?;
    let curve_path = out_dir.join("survival_curves.csv");
    write_curves(&curve_path, &records)?;

    let state = *test.state();
    let report = TrialReport::new(
        spec,
        state,
        surplus,
        degenerate,
        csv_path.display().to_string(),
        started.elapsed().as_secs_f64(),
        wald_prediction(spec, &state),
    );
    report.write_json(&out_dir.join("report.json"))?;
    Ok(report)
}

/// Wald's expected iterations at the empirically observed discordant
/// proportion and discordance rate, when both are estimable.
fn wald_prediction(spec: &TrialSpec, s: &SprtState) -> Option<f64> {
    if s.m_discordant == 0 || s.iterations == 0 {
        return None;
    }
    let q = s.t_count as f64 / s.m_discordant as f64;
    let p_disc = s.m_discordant as f64 / s.iterations as f64;
    Some(expected_iterations(&spec.sprt, q, p_disc))
}

fn write_curves(path: &Path, records: &[SurvivalRecord]) -> Result<(), TrialError> {
    let f = File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(f));
    w.write_record(["group", "time_ms", "survival"])?;
    for g in [Group::Gdt, Group::Mdt] {
        let rs: Vec<SurvivalRecord> = records.iter().filter(|r| r.group == g).copied().collect();
        if rs.is_empty() {
            continue;
        }
        for (t, s) in kaplan_meier(&rs)?.knots {
            w.write_record([g.as_str().to_string(), t.to_string(), s.to_string()])?;
        }
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

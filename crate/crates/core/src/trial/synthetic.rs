//! Bernoulli outcome generators that stand in for the simulated arms when
//! validating the statistics pipeline.
//!
//! Trials 1 and 2 draw the comparison pair directly: `x1 ~ Bernoulli(p1)` and
//! `x2 ~ Bernoulli(p2)`, independently. Trials 3 and 4 give each simulated
//! patient an inappropriate therapy with probability `p1` (GDT arm) or `p2`
//! (MDT arm), at a time uniform on `(0, T)`; patients without one are
//! censored at `T`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::survival::{Group, SurvivalRecord};

pub fn synthetic_pair(p1: f64, p2: f64, seed: u64) -> (bool, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x1 = rng.random_bool(p1);
    let x2 = rng.random_bool(p2);
    (x1, x2)
}

/// `n` records per group.
pub fn synthetic_cohort(
    p_gdt: f64,
    p_mdt: f64,
    n: usize,
    time_bound: f64,
    seed: u64,
) -> Vec<SurvivalRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * n);
    for (group, p) in [(Group::Gdt, p_gdt), (Group::Mdt, p_mdt)] {
        for _ in 0..n {
            let record = if rng.random_bool(p) {
                // open interval so that an event is never at 0 or at the bound
                let mut t = 0.0;
                while t <= 0.0 || t >= time_bound {
                    t = rng.random::<f64>() * time_bound;
                }
                SurvivalRecord {
                    time: t,
                    event: true,
                    group,
                }
            } else {
                SurvivalRecord {
                    time: time_bound,
                    event: false,
                    group,
                }
            };
            out.push(record);
        }
    }
    out
}

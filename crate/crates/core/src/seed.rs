//! Seed derivation for independent, reproducible random streams.
//!
//! Every iteration, patient and trial arm gets its own stream derived from the
//! master seed, so any of them can be replayed without running the others.

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a stream index.
pub fn derive(parent: u64, stream: u64) -> u64 {
    mix(mix(parent.wrapping_add(GOLDEN))
        ^ stream
            .wrapping_mul(GOLDEN)
            .wrapping_add(0x2545_F491_4F6C_DD1D))
}

/// Seed of trial iteration `iteration`.
pub fn iteration_seed(master: u64, iteration: u64) -> u64 {
    derive(master, iteration)
}

/// Which random stream inside an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Parameter sampling of patient `k`.
    Patient(u64),
    /// Simulation of patient `k` under the GDT device.
    GdtArm(u64),
    /// Simulation of patient `k` under the MDT device.
    MdtArm(u64),
    /// Synthetic outcome generation.
    Synthetic,
}

impl Stream {
    fn index(self) -> u64 {
        match self {
            Stream::Patient(k) => 3 * k + 1,
            Stream::GdtArm(k) => 3 * k + 2,
            Stream::MdtArm(k) => 3 * k + 3,
            Stream::Synthetic => 0,
        }
    }
}

pub fn stream_seed(iteration_seed: u64, stream: Stream) -> u64 {
    derive(iteration_seed, stream.index())
}

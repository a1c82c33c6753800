//! Deterministic RNG substream derivation.
//!
//! Every Monte-Carlo run draws from named substreams derived from one master
//! seed, so results are bit-reproducible and independent of scheduling order
//! or of which consumers happen to be enabled.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Independent random-number consumers within one run.
///
/// Each lane owns its own generator: enabling or disabling one consumer (say,
/// the sampling estimator) never shifts the draws seen by another, which is
/// what keeps trigger sequences identical across estimator subsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Lane {
    /// Initial state, process noise, and measurement noise.
    Trajectory,
    /// Trigger decision uniforms.
    Trigger,
    /// Per-estimator draws; the index is fixed per estimator kind.
    Estimator(u8),
}

impl Lane {
    fn id(self) -> u64 {
        match self {
            Lane::Trajectory => 0,
            Lane::Trigger => 1,
            Lane::Estimator(e) => 16 + u64::from(e),
        }
    }
}

/// SplitMix64 finalizer, used to hash seed components into substream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed identifying one run: hash(master, run_index).
pub fn run_seed(master: u64, run_index: u64) -> u64 {
    mix(mix(master) ^ run_index)
}

/// Generator for one lane of one run. ChaCha12 is platform-independent, so a
/// given (master, run_index, lane) triple yields the same stream everywhere.
pub fn substream(master: u64, run_index: u64, lane: Lane) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(mix(run_seed(master, run_index) ^ lane.id()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn substreams_are_reproducible() {
        let mut a = substream(7, 3, Lane::Trigger);
        let mut b = substream(7, 3, Lane::Trigger);
        for _ in 0..100 {
            assert_eq!(a.random::<u64>(), b.random::<u64>());
        }
    }

    #[test]
    fn lanes_and_runs_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for run in 0..50 {
            for lane in [Lane::Trajectory, Lane::Trigger, Lane::Estimator(0), Lane::Estimator(1)] {
                let v = substream(7, run, lane).random::<u64>();
                assert!(seen.insert(v), "colliding first draw for run {run} {lane:?}");
            }
        }
    }

    #[test]
    fn run_seed_is_frozen() {
        // Pinned values (independent SplitMix64 implementation): stored
        // results stay reproducible only if the derivation never changes.
        assert_eq!(run_seed(0, 0), 12035550249420947055);
        assert_eq!(run_seed(7, 3), 7758145696617331093);
    }
}

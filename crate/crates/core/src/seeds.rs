//! Counter-based derivation of independent random streams from one run seed.
//!
//! A stream is identified by a purpose tag plus up to a few integer
//! coordinates (subdomain, member, floe id, ...). The words are folded
//! through the splitmix64 finaliser, so every `(seed, path)` maps to a fixed
//! 64-bit key regardless of the order in which streams are created or the
//! number of worker threads. The key seeds a ChaCha8 generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used for every stream.
pub type StreamRng = ChaCha8Rng;

/// Purpose tags; the numeric values are part of the reproducibility contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    /// Floe population of the truth run.
    Floes = 1,
    /// Initial truth ocean modes.
    TruthInit = 2,
    /// Truth ocean noise.
    TruthNoise = 3,
    /// Observation error, one stream per floe id.
    Observation = 4,
    /// Ensemble initialisation and forecast noise, per `(subdomain, member)`.
    Ensemble = 5,
    /// Forecast-only control ensemble, per member.
    Control = 6,
    /// Amplitude calibration draws.
    Calibration = 7,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Key of the stream `(seed, tag, path...)`.
pub fn derive_key(seed: u64, stream: Stream, path: &[u64]) -> u64 {
    let mut h = splitmix64(seed ^ splitmix64(stream as u64));
    for (depth, &w) in path.iter().enumerate() {
        h = splitmix64(h ^ splitmix64(w.wrapping_add((depth as u64 + 1).wrapping_mul(GOLDEN))));
    }
    h
}

pub fn stream(seed: u64, tag: Stream, path: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_key(seed, tag, path))
}

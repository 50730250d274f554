//! Seeded random streams.
//!
//! Every replicate owns one 64-bit seed. Independent sub-streams are derived
//! from `(seed, purpose)` so that, e.g., contamination draws never shift the
//! field sample of the same replicate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags for derived sub-streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stream {
    TrainLocations,
    TestLocations,
    Field,
    Contamination,
    Calibration,
    SupportPoints,
    Audit,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::TrainLocations => 0x01,
            Stream::TestLocations => 0x02,
            Stream::Field => 0x03,
            Stream::Contamination => 0x04,
            Stream::Calibration => 0x05,
            Stream::SupportPoints => 0x06,
            Stream::Audit => 0x07,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes `seed` with an arbitrary tag into a new, well-separated seed.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(tag.wrapping_mul(0xD6E8_FEB8_6659_FD93)))
}

/// Seed of the `purpose` sub-stream, for consumers that take a seed rather
/// than a generator.
pub fn sub_seed(seed: u64, purpose: Stream) -> u64 {
    derive_seed(seed, purpose.tag())
}

pub fn stream(seed: u64, purpose: Stream) -> StreamRng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, purpose))
}

pub fn rng_from_seed(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

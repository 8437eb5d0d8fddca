//! Replayable, counter-addressed random streams.
//!
//! A stream is identified by a 64-bit seed and a [`StreamKind`]. The values
//! drawn for replication `n` depend only on `(seed, kind, n)`: each
//! replication owns a disjoint window of 2^20 words of a ChaCha8 keystream,
//! so reading replication 5 after replication 900 returns the same values as
//! reading it first. Later passes rely on this to regenerate dummy
//! indicators without storing them.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Words of keystream reserved for each replication.
const WINDOW_BITS: u32 = 20;

/// Which of a system's two streams a key addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    /// Simulation observations `Y`.
    Observation,
    /// Uniforms `U` driving the dummy indicators `I`.
    Dummy,
}

impl StreamKind {
    fn id(self) -> u64 {
        match self {
            StreamKind::Observation => 0,
            StreamKind::Dummy => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    /// Serialized as a decimal string so JSON consumers do not lose bits.
    #[serde(with = "u64_string")]
    pub seed: u64,
    pub kind: StreamKind,
}

impl StreamKey {
    pub fn new(seed: u64, kind: StreamKind) -> Self {
        StreamKey { seed, kind }
    }
}

#[derive(Debug, Clone)]
pub struct ReplayableStream {
    key: StreamKey,
    base: ChaCha8Rng,
}

impl ReplayableStream {
    pub fn new(key: StreamKey) -> Self {
        let mut base = ChaCha8Rng::seed_from_u64(key.seed);
        base.set_stream(key.kind.id());
        ReplayableStream { key, base }
    }

    pub fn key(&self) -> StreamKey {
        self.key
    }

    /// Generator positioned at the start of replication `n`'s window.
    ///
    /// Panics if `n == 0`; replications are numbered from 1.
    pub fn replication(&self, n: u64) -> ChaCha8Rng {
        assert!(n >= 1, "replication indices start at 1");
        let mut rng = self.base.clone();
        rng.set_word_pos(u128::from(n - 1) << WINDOW_BITS);
        rng
    }

    /// First uniform of replication `n`, in `[0, 1)`.
    pub fn uniform_at(&self, n: u64) -> f64 {
        self.replication(n).random::<f64>()
    }

    /// Fill `out` with the leading uniforms of replication `n`.
    pub fn uniforms_at(&self, n: u64, out: &mut [f64]) {
        let mut rng = self.replication(n);
        for u in out {
            *u = rng.random::<f64>();
        }
    }

    pub fn bernoulli_at(&self, n: u64, p: f64) -> bool {
        self.uniform_at(n) < p
    }

    /// Raw 64-bit word at the start of replication `n`. Used for seeding
    /// derived generators.
    pub fn word_at(&self, n: u64) -> u64 {
        self.replication(n).next_u64()
    }
}

/// Dummy Bernoulli indicator: 1 iff `u <= h`.
#[inline]
pub fn dummy_indicator(u: f64, h: f64) -> bool {
    u <= h
}

/// SplitMix64 finaliser.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministically derive a child seed from a base seed and a path of
/// indices (for example `[macro_rep]` or `[system, kind]`).
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    let mut h = mix64(base ^ 0x9E37_79B9_7F4A_7C15);
    for &p in path {
        h = mix64(h.wrapping_add(0x9E37_79B9_7F4A_7C15) ^ mix64(p.wrapping_add(0xD1B5_4A32_D192_ED03)));
    }
    h
}

/// The pair of stream keys assigned to one system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSeeds {
    pub observation: StreamKey,
    pub dummy: StreamKey,
}

impl SystemSeeds {
    pub fn observation_stream(&self) -> ReplayableStream {
        ReplayableStream::new(self.observation)
    }

    pub fn dummy_stream(&self) -> ReplayableStream {
        ReplayableStream::new(self.dummy)
    }
}

/// How streams are wired across systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SamplingMode {
    /// Every system gets its own observation and dummy seeds.
    Independent,
    /// Common random numbers: all systems share the observation seed. With
    /// `share_dummies` they also share the dummy seed.
    Crn {
        #[serde(default = "default_true")]
        share_dummies: bool,
    },
}

fn default_true() -> bool {
    true
}

impl Default for SamplingMode {
    fn default() -> Self {
        SamplingMode::Independent
    }
}

impl SamplingMode {
    pub fn is_crn(self) -> bool {
        matches!(self, SamplingMode::Crn { .. })
    }
}

/// Assign seeds for `k` systems from a run-level seed.
pub fn assign_seeds(run_seed: u64, k: usize, mode: SamplingMode) -> Vec<SystemSeeds> {
    const COMMON: u64 = u64::MAX;
    (0..k as u64)
        .map(|i| {
            let (y, u) = match mode {
                SamplingMode::Independent => (i, i),
                SamplingMode::Crn { share_dummies: true } => (COMMON, COMMON),
                SamplingMode::Crn { share_dummies: false } => (COMMON, i),
            };
            SystemSeeds {
                observation: StreamKey::new(derive_seed(run_seed, &[y, 0]), StreamKind::Observation),
                dummy: StreamKey::new(derive_seed(run_seed, &[u, 1]), StreamKind::Dummy),
            }
        })
        .collect()
}

pub(crate) mod u64_string {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &u64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&v.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Str(String),
            Num(u64),
        }
        match Repr::deserialize(d)? {
            Repr::Str(s) => s.parse().map_err(de::Error::custom),
            Repr::Num(n) => Ok(n),
        }
    }
}

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

/// Deterministic random stream for one simulation round.
///
/// The generator is ChaCha8 keyed by the master seed with the round index as
/// the 64-bit stream id, so any round's draws can be produced without touching
/// any other round.
#[derive(Clone, Debug)]
pub struct RandomStream {
    rng: ChaCha8Rng,
    master_seed: u64,
    round_index: u64,
    draws: u64,
}

impl RandomStream {
    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn round_index(&self) -> u64 {
        self.round_index
    }

    /// Number of primitive draws taken so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.rng.next_u64()
    }

    /// Uniform on [0, 1).
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.draws += 1;
        self.rng.random::<f64>()
    }

    #[inline]
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Standard exponential draw.
    #[inline]
    pub fn exp1(&mut self) -> f64 {
        self.draws += 1;
        Exp1.sample(&mut self.rng)
    }
}

pub fn stream_for_round(master_seed: u64, round_index: u64) -> RandomStream {
    StreamFactory::new(master_seed).stream(round_index)
}

/// Pre-keyed generator template; cloning it and selecting the stream id is
/// much cheaper than re-deriving the key for every round.
#[derive(Clone, Debug)]
pub struct StreamFactory {
    template: ChaCha8Rng,
    master_seed: u64,
}

impl StreamFactory {
    pub fn new(master_seed: u64) -> Self {
        Self {
            template: ChaCha8Rng::seed_from_u64(master_seed),
            master_seed,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    #[inline]
    pub fn stream(&self, round_index: u64) -> RandomStream {
        let mut rng = self.template.clone();
        rng.set_stream(round_index);
        RandomStream {
            rng,
            master_seed: self.master_seed,
            round_index,
            draws: 0,
        }
    }
}

/// Derives an unrelated master seed for an auxiliary session (e.g. a
/// calibration run) from the main seed and a label.
pub fn derive_seed(master_seed: u64, label: &str) -> u64 {
    // splitmix64 finalizer over an FNV-1a hash of the label
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut z = master_seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

//! Seeded random processes: per-entity substreams, rounded-Rayleigh channel
//! rates held over update intervals, and Poisson packet arrivals.
//!
//! Every draw is a pure function of (seed, substream key, draw index), so
//! full trajectories replay bit-identically across runs and platforms.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// Rayleigh scale giving a pre-rounding mean of exactly 1 (mean = scale *
/// sqrt(pi/2)).
pub const UNIT_MEAN_RAYLEIGH_SCALE: f64 = 0.797_884_560_802_865_4;

/// Which process a substream feeds. One substream per (kind, entity) keeps
/// the randomness of channels, arrivals and MAC decisions independent of
/// each other, so changing one policy never perturbs another process.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamKind {
    /// Per-link channel state draws.
    Channel,
    /// Per-session packet arrivals.
    Arrival,
    /// Per-node transmission sampling.
    MacDecision,
}

impl StreamKind {
    fn tag(self) -> u64 {
        match self {
            StreamKind::Channel => 0x01,
            StreamKind::Arrival => 0x02,
            StreamKind::MacDecision => 0x03,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// A deterministic substream keyed by (seed, process kind, entity id).
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, kind: StreamKind, entity: u64) -> Self {
        let mut key = splitmix64(seed);
        key = splitmix64(key ^ kind.tag().wrapping_mul(0xA076_1D64_78BD_642F));
        key = splitmix64(key ^ entity.wrapping_mul(0xE703_7ED1_A0B4_28DB));
        Self {
            rng: ChaCha8Rng::seed_from_u64(key),
        }
    }

    /// Uniform draw in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub(crate) fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

/// Rounded Rayleigh draw: a Rayleigh(scale) sample rounded to the nearest
/// integer, halves away from zero. A zero scale degenerates to 0.
pub fn rounded_rayleigh_sample(stream: &mut RngStream, scale: f64) -> u64 {
    assert!(scale >= 0.0, "Rayleigh scale must be nonnegative");
    if scale == 0.0 {
        return 0;
    }
    // Inverse CDF: u in [0,1) maps through scale * sqrt(-2 ln(1 - u)).
    let u = stream.uniform();
    let x = scale * (-2.0 * (1.0 - u).ln()).sqrt();
    (x + 0.5).floor() as u64
}

/// Poisson packet count for one slot. A zero rate always yields 0.
pub fn poisson_arrivals(stream: &mut RngStream, rate: f64) -> u64 {
    assert!(rate >= 0.0, "arrival rate must be nonnegative");
    if rate == 0.0 {
        return 0;
    }
    let dist = Poisson::new(rate).expect("positive finite rate");
    dist.sample(stream.rng()) as u64
}

/// How per-link channel rates are generated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelKind {
    /// i.i.d. rounded Rayleigh rates, redrawn at every update instant.
    RoundedRayleigh { scale: f64 },
    /// A fixed integer rate on every link; useful for deterministic tests.
    Constant { rate: u64 },
}

/// Per-link channel rates, redrawn every `update_interval` slots and held
/// constant in between.
#[derive(Debug, Clone)]
pub struct ChannelProcess {
    kind: ChannelKind,
    update_interval: u64,
    rates: Vec<u64>,
    streams: Vec<RngStream>,
    last_refresh: Option<u64>,
}

impl ChannelProcess {
    pub fn new(kind: ChannelKind, update_interval: u64, link_count: usize, seed: u64) -> Self {
        assert!(update_interval >= 1, "update interval must be >= 1");
        let streams = (0..link_count)
            .map(|l| RngStream::new(seed, StreamKind::Channel, l as u64))
            .collect();
        let rates = match kind {
            ChannelKind::RoundedRayleigh { .. } => vec![0; link_count],
            ChannelKind::Constant { rate } => vec![rate; link_count],
        };
        Self {
            kind,
            update_interval,
            rates,
            streams,
            last_refresh: None,
        }
    }

    pub fn update_interval(&self) -> u64 {
        self.update_interval
    }

    /// Current per-link rate vector for slot `t`, redrawing it first when
    /// `t` is an update instant. Idempotent for repeated calls at one slot.
    pub fn at(&mut self, t: u64) -> &[u64] {
        if t.is_multiple_of(self.update_interval) && self.last_refresh != Some(t) {
            if let ChannelKind::RoundedRayleigh { scale } = self.kind {
                for (rate, stream) in self.rates.iter_mut().zip(&mut self.streams) {
                    *rate = rounded_rayleigh_sample(stream, scale);
                }
            }
            self.last_refresh = Some(t);
        }
        &self.rates
    }

    pub fn rates(&self) -> &[u64] {
        &self.rates
    }
}

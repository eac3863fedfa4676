//! Seeded random streams.
//!
//! One master seed fans out into independent ChaCha streams, one per
//! consumer, so adding a consumer never perturbs the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type RngStream = ChaCha8Rng;

/// Stream identifiers. Values are part of the determinism contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Lidar = 1,
    Imu = 2,
    WheelOdom = 3,
    SlamResample = 16,
    Mcl = 32,
}

/// Opens stream `id` of the master seed.
pub fn stream(seed: u64, id: Stream) -> RngStream {
    keyed_stream(seed, id as u64, 0)
}

/// A stream keyed by a (namespace, index) pair, e.g. (update count, particle index).
pub fn keyed_stream(seed: u64, namespace: u64, index: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(namespace)));
    rng.set_stream(index);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws N(0, sigma²). Always consumes one standard-normal draw, even when
/// `sigma` is zero, so stream positions do not depend on noise settings.
pub fn gaussian<R: rand::Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

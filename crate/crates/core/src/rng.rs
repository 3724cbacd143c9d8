//! Reproducible random streams keyed by `(seed, replicate, component)`.
//!
//! Every replicate draws from its own ChaCha stream, so results do not depend
//! on how replicates are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Stream tag for the Gaussian core driver.
pub const CORE: u64 = 0;
/// Stream tag for the first volatility path.
pub const VOL1: u64 = 1;
/// Stream tag for the second volatility path.
pub const VOL2: u64 = 2;
/// Stream tag for an independent control replicate of the core.
pub const CONTROL: u64 = 3;

const COMPONENTS: u64 = 16;

/// Generator for one `(seed, replicate, component)` triple.
pub fn stream(seed: u64, replicate: u64, component: u64) -> ChaCha8Rng {
    assert!(component < COMPONENTS, "component tag {component} out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate.wrapping_mul(COMPONENTS).wrapping_add(component));
    rng
}

/// Fills `out` with independent standard normals.
pub fn fill_normal<R: rand::Rng>(rng: &mut R, out: &mut [f64]) {
    for v in out.iter_mut() {
        *v = StandardNormal.sample(rng);
    }
}

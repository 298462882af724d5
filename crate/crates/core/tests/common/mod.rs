//! Shared helpers for the oracle and acceptance suites.

use hia_precode::channel::C64;
use hia_precode::secrecy::PrecoderStack;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_complex_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<C64> {
    DVector::from_iterator(
        len,
        (0..len).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)),
    )
}

pub fn random_channels(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<DVector<C64>> {
    (0..m).map(|_| random_complex_vector(rng, n)).collect()
}

pub fn random_unit_stack(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PrecoderStack {
    let f = random_complex_vector(rng, n * k);
    PrecoderStack::new(f, n, k).normalized()
}

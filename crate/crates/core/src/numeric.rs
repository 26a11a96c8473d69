//! Small numeric helpers shared by the scoring and resampling code.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

/// Arithmetic mean computed as `reference + mean(x - reference)` with a
/// compensated sum, where `reference` is the first element.
///
/// A constant slice always returns that constant exactly. Returns `None` for
/// an empty slice.
pub fn mean(values: &[f64]) -> Option<f64> {
    let (&reference, _) = values.split_first()?;
    let offset = compensated_sum(values.iter().map(|v| v - reference));
    Some(reference + offset / values.len() as f64)
}

/// Mean of `values[idx]` over `indices`, shifted by `reference`.
pub(crate) fn mean_of_indexed(values: &[f64], indices: &[usize], reference: f64) -> f64 {
    let offset = compensated_sum(indices.iter().map(|&i| values[i] - reference));
    reference + offset / indices.len() as f64
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit seed from a root seed and a path of stream
/// indices (e.g. replicate index, or instance and condition indices).
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x632B_E59B_D9B4_E019))))
}

/// RNG for the substream identified by `(seed, path)`.
pub fn substream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Number of items selected by a top-`fraction` rule over `n` items:
/// `ceil(fraction * n)`, with products within 1e-9 of an integer snapped to it
/// so that e.g. `0.07 * 100` yields 7 rather than 8.
pub fn top_count(fraction: f64, n: usize) -> usize {
    let raw = fraction * n as f64;
    let nearest = raw.round();
    let k = if (raw - nearest).abs() <= 1e-9 { nearest } else { raw.ceil() };
    (k.max(0.0) as usize).min(n)
}

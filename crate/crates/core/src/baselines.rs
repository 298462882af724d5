//! MRT and ZF reference precoders over per-layer effective channels.

use nalgebra::{DMatrix, DVector};

use crate::channel::C64;
use crate::error::{HiaError, Result};
use crate::secrecy::{LayerAssignment, PrecoderStack};

/// Per-layer effective channels h_k = sum of the member channels.
pub fn effective_channels(
    channels: &[DVector<C64>],
    layers: &LayerAssignment,
) -> Vec<DVector<C64>> {
    (0..layers.n_layers())
        .map(|k| {
            let mut h = DVector::zeros(channels[0].len());
            for u in layers.layer(k) {
                h += &channels[*u];
            }
            h
        })
        .collect()
}

fn globally_normalized(blocks: Vec<DVector<C64>>) -> Result<PrecoderStack> {
    let stack = PrecoderStack::from_blocks(&blocks);
    let norm = stack.norm();
    if norm == 0.0 {
        return Err(HiaError::DegenerateInput(
            "all effective channels are zero".into(),
        ));
    }
    Ok(stack.normalized())
}

/// Channel-matched precoder: f_k proportional to the effective channel h_k,
/// with one global scale meeting the unit total-power constraint.
pub fn mrt(channels: &[DVector<C64>], layers: &LayerAssignment) -> Result<PrecoderStack> {
    globally_normalized(effective_channels(channels, layers))
}

/// Result of the zero-forcing construction; `rank_deficient` flags the
/// pseudo-inverse fallback.
pub struct ZfPrecoder {
    pub stack: PrecoderStack,
    pub rank_deficient: bool,
}

/// Zero-forcing precoder: columns of H (H^H H)^-1 over the effective
/// channels, then global unit-power normalization. When H^H H is singular
/// (including K > N, where exact nulling is impossible) the construction
/// falls back to the pseudo-inverse and sets the flag.
pub fn zf(channels: &[DVector<C64>], layers: &LayerAssignment) -> Result<ZfPrecoder> {
    let eff = effective_channels(channels, layers);
    let n = eff[0].len();
    let k = eff.len();
    let mut h = DMatrix::<C64>::zeros(n, k);
    for (j, col) in eff.iter().enumerate() {
        h.set_column(j, col);
    }
    let gram = h.adjoint() * &h;
    let invertible = k <= n;
    let (f_mat, rank_deficient) = match gram.clone().lu().try_inverse() {
        Some(inv)
            if invertible && inv.iter().all(|x| x.re.is_finite() && x.im.is_finite()) =>
        {
            (&h * inv, false)
        }
        _ => {
            let pinv = h
                .clone()
                .svd(true, true)
                .pseudo_inverse(1e-12)
                .map_err(|e| HiaError::DegenerateInput(e.to_string()))?;
            (pinv.adjoint(), true)
        }
    };
    let blocks: Vec<DVector<C64>> = (0..k).map(|j| f_mat.column(j).into_owned()).collect();
    Ok(ZfPrecoder {
        stack: globally_normalized(blocks)?,
        rank_deficient,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Complex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_channels(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<DVector<C64>> {
        (0..m)
            .map(|_| {
                DVector::from_iterator(
                    n,
                    (0..n).map(|_| Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)),
                )
            })
            .collect()
    }

    #[test]
    fn mrt_single_user_matches_channel_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let channels = random_channels(&mut rng, 4, 1);
        let layers = LayerAssignment::singletons(1);
        let stack = mrt(&channels, &layers).unwrap();
        let expected = &channels[0] / Complex::new(channels[0].norm(), 0.0);
        assert!((stack.block(0) - expected).norm() < 1e-12);
    }

    #[test]
    fn mrt_equal_power_for_orthogonal_equal_norm_channels() {
        let e0 = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let e1 = DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)]);
        let layers = LayerAssignment::singletons(2);
        let stack = mrt(&[e0, e1], &layers).unwrap();
        let p0 = stack.block(0).norm_squared();
        let p1 = stack.block(1).norm_squared();
        assert!((p0 - p1).abs() < 1e-12);
        assert!((stack.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zf_nulls_inter_layer_leakage() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let channels = random_channels(&mut rng, 6, 3);
        let layers = LayerAssignment::singletons(3);
        let eff = effective_channels(&channels, &layers);
        let zf = zf(&channels, &layers).unwrap();
        assert!(!zf.rank_deficient);
        assert!((zf.stack.norm() - 1.0).abs() < 1e-12);
        for k in 0..3 {
            for j in 0..3 {
                if j == k {
                    continue;
                }
                let leak = eff[j].dotc(&zf.stack.block(k)).norm();
                let scale = eff[j].norm() * zf.stack.block(k).norm();
                assert!(leak / scale < 1e-9, "leakage {}", leak / scale);
            }
        }
    }

    #[test]
    fn zf_equals_mrt_for_orthonormal_channels() {
        let e0 = DVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)]);
        let e1 = DVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(0.0, 1.0)]);
        let layers = LayerAssignment::singletons(2);
        let channels = vec![e0, e1];
        let zf = zf(&channels, &layers).unwrap();
        let mrt = mrt(&channels, &layers).unwrap();
        // unitary effective channel: same subspace per column, up to scaling
        for k in 0..2 {
            let a = zf.stack.block(k);
            let b = mrt.block(k);
            let cos = a.dotc(&b).norm() / (a.norm() * b.norm());
            assert!((cos - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn degenerate_inputs_rejected() {
        let zero = DVector::from_vec(vec![C64::new(0.0, 0.0); 3]);
        let layers = LayerAssignment::singletons(1);
        assert!(mrt(&[zero], &layers).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let channels = random_channels(&mut rng, 2, 3);
        let layers = LayerAssignment::singletons(3);
        // more layers than antennas: pseudo-inverse fallback, flagged
        let over = zf(&channels, &layers).unwrap();
        assert!(over.rank_deficient);
        assert!((over.stack.norm() - 1.0).abs() < 1e-12);
    }
}

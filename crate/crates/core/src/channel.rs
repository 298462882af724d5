//! Spatially correlated channel synthesis.
//!
//! Channels follow the one-ring scattering model around a uniform circular
//! array: the spatial covariance is an integral over the scattering arc,
//! evaluated by fixed-node midpoint quadrature, and realizations are drawn
//! through the Karhunen-Loeve factorization of that covariance. Imperfect
//! CSIT is modeled by mixing the generating Gaussian vector with a fresh
//! one, parameterized by `kappa`.

use nalgebra::{Complex, DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{HiaError, Result};

pub type C64 = Complex<f64>;

/// Relative eigenvalue retention threshold for the KL factorization.
pub const TOL_RANK: f64 = 1e-10;

/// Default number of midpoint quadrature nodes for the covariance integral.
pub const DEFAULT_QUAD_POINTS: usize = 2048;

/// Uniform circular array with positions in wavelength units (lambda = 1).
#[derive(Debug, Clone)]
pub struct AntennaArray {
    pub n_antennas: usize,
    pub positions: Vec<[f64; 2]>,
}

impl AntennaArray {
    /// Uniform circular array of `n` isotropic antennas. The radius is chosen
    /// so adjacent elements are half a wavelength apart.
    pub fn uniform_circular(n: usize) -> Self {
        assert!(n >= 1, "need at least one antenna");
        let radius = if n == 1 {
            0.0
        } else {
            let phi = 2.0 * std::f64::consts::PI / n as f64;
            0.5 / ((1.0 - phi.cos()).powi(2) + phi.sin().powi(2)).sqrt()
        };
        let positions = (0..n)
            .map(|i| {
                let ang = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [radius * ang.cos(), radius * ang.sin()]
            })
            .collect();
        Self {
            n_antennas: n,
            positions,
        }
    }
}

/// One user's large-scale geometry: layer index, linear gain, angle of
/// arrival, and angular spread of the scattering arc.
#[derive(Debug, Clone, Copy)]
pub struct UserGeometry {
    pub layer: usize,
    pub large_scale_gain: f64,
    pub aoa: f64,
    pub spread: f64,
}

impl UserGeometry {
    pub fn validate(&self) -> Result<()> {
        if !self.large_scale_gain.is_finite() || self.large_scale_gain < 0.0 {
            return Err(HiaError::InvalidGeometry(format!(
                "large-scale gain must be finite and nonnegative, got {}",
                self.large_scale_gain
            )));
        }
        if !self.aoa.is_finite() || !self.spread.is_finite() || self.spread <= 0.0 {
            return Err(HiaError::InvalidGeometry(format!(
                "aoa/spread must be finite with spread > 0, got aoa={} spread={}",
                self.aoa, self.spread
            )));
        }
        Ok(())
    }
}

/// Spatial covariance together with its retained-rank eigenfactors.
#[derive(Debug, Clone)]
pub struct CovarianceFactors {
    /// Full N x N Hermitian PSD covariance.
    pub r: DMatrix<C64>,
    /// N x r matrix of retained eigenvectors.
    pub u: DMatrix<C64>,
    /// r retained (positive) eigenvalues, descending.
    pub lambda: DVector<f64>,
}

impl CovarianceFactors {
    pub fn n(&self) -> usize {
        self.r.nrows()
    }

    pub fn rank(&self) -> usize {
        self.lambda.len()
    }

    /// U diag(sqrt(lambda)), the KL mixing matrix.
    pub fn mixing(&self) -> DMatrix<C64> {
        let mut m = self.u.clone();
        for (j, lam) in self.lambda.iter().enumerate() {
            let s = lam.sqrt();
            for i in 0..m.nrows() {
                m[(i, j)] *= C64::new(s, 0.0);
            }
        }
        m
    }
}

/// One channel draw: the vector `h` and the generating Gaussian `g`.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h: DVector<C64>,
    pub g: DVector<C64>,
}

/// Estimated CSIT with its error covariance.
#[derive(Debug, Clone)]
pub struct CsitEstimate {
    pub h_hat: DVector<C64>,
    pub error_cov: DMatrix<C64>,
    pub kappa: f64,
}

/// One-ring spatial covariance for the given user geometry, evaluated by a
/// midpoint rule with `quad_points` nodes over the scattering arc.
pub fn build_covariance(
    array: &AntennaArray,
    geom: &UserGeometry,
    quad_points: usize,
) -> Result<CovarianceFactors> {
    geom.validate()?;
    if quad_points < 2 {
        return Err(HiaError::Domain(format!(
            "quad_points must be >= 2, got {quad_points}"
        )));
    }
    let n = array.n_antennas;
    let beta = geom.large_scale_gain;
    let two_pi = 2.0 * std::f64::consts::PI;

    let mut r = DMatrix::<C64>::zeros(n, n);
    let step = 2.0 * geom.spread / quad_points as f64;
    for a in 0..n {
        for b in 0..n {
            if a == b {
                // unit-modulus integrand on the diagonal
                r[(a, b)] = C64::new(beta, 0.0);
                continue;
            }
            let dx = array.positions[a][0] - array.positions[b][0];
            let dy = array.positions[a][1] - array.positions[b][1];
            let mut acc = C64::new(0.0, 0.0);
            for q in 0..quad_points {
                let x = geom.aoa - geom.spread + (q as f64 + 0.5) * step;
                let phase = -two_pi * (x.cos() * dx + x.sin() * dy);
                acc += C64::new(phase.cos(), phase.sin());
            }
            r[(a, b)] = C64::new(beta / quad_points as f64, 0.0) * acc;
        }
    }

    // enforce Hermitian symmetry
    let r = (&r + r.adjoint()) * C64::new(0.5, 0.0);

    let eig = r.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = TOL_RANK * max_eig;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].partial_cmp(&eig.eigenvalues[i]).unwrap());
    let retained: Vec<usize> = order
        .into_iter()
        .filter(|&i| eig.eigenvalues[i] > cutoff)
        .collect();

    let mut u = DMatrix::<C64>::zeros(n, retained.len());
    let mut lambda = DVector::<f64>::zeros(retained.len());
    for (col, &i) in retained.iter().enumerate() {
        u.set_column(col, &eig.eigenvectors.column(i));
        lambda[col] = eig.eigenvalues[i];
    }
    Ok(CovarianceFactors { r, u, lambda })
}

fn complex_gaussian_vector(rng: &mut ChaCha8Rng, len: usize) -> DVector<C64> {
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    DVector::from_iterator(
        len,
        (0..len).map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            C64::new(re * inv_sqrt2, im * inv_sqrt2)
        }),
    )
}

/// Draws h = U Lambda^{1/2} g with g ~ CN(0, I). Deterministic per seed.
pub fn sample_channel(factors: &CovarianceFactors, rng_seed: u64) -> ChannelRealization {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let g = complex_gaussian_vector(&mut rng, factors.rank());
    let h = factors.mixing() * &g;
    ChannelRealization { h, g }
}

/// Limited-feedback CSIT: mixes the true generating vector with fresh noise,
/// h_hat = U Lambda^{1/2} (sqrt(1 - kappa^2) g + kappa v). The error
/// covariance is Phi = U Lambda^{1/2} (2 - 2 sqrt(1 - kappa^2)) Lambda^{1/2} U^H.
pub fn sample_csit(
    factors: &CovarianceFactors,
    g: &DVector<C64>,
    kappa: f64,
    rng_seed: u64,
) -> Result<CsitEstimate> {
    if !(0.0..=1.0).contains(&kappa) {
        return Err(HiaError::Domain(format!(
            "kappa must lie in [0, 1], got {kappa}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let v = complex_gaussian_vector(&mut rng, factors.rank());
    let scale = (1.0 - kappa * kappa).sqrt();
    let mixed = g.map(|x| x * C64::new(scale, 0.0)) + v.map(|x| x * C64::new(kappa, 0.0));
    let h_hat = factors.mixing() * mixed;

    let err_scale = 2.0 - 2.0 * scale;
    let mixing = factors.mixing();
    let error_cov = &mixing * mixing.adjoint() * C64::new(err_scale, 0.0);
    Ok(CsitEstimate {
        h_hat,
        error_cov,
        kappa,
    })
}

/// Log-distance pathloss parameters. Defaults: 38 dB at the 1 m reference
/// distance with exponent 3.5.
#[derive(Debug, Clone, Copy)]
pub struct PathlossParams {
    pub pl0_db: f64,
    pub exponent: f64,
    pub d0_m: f64,
}

impl Default for PathlossParams {
    fn default() -> Self {
        Self {
            pl0_db: 38.0,
            exponent: 3.5,
            d0_m: 1.0,
        }
    }
}

/// Linear large-scale gain from the log-distance pathloss model.
pub fn pathloss_gain(distance_m: f64, params: &PathlossParams) -> Result<f64> {
    if !(distance_m > 0.0) {
        return Err(HiaError::Domain(format!(
            "distance must be positive, got {distance_m}"
        )));
    }
    let pl_db = params.pl0_db + 10.0 * params.exponent * (distance_m / params.d0_m).log10();
    Ok(10f64.powf(-pl_db / 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(beta: f64, aoa: f64, spread: f64) -> UserGeometry {
        UserGeometry {
            layer: 1,
            large_scale_gain: beta,
            aoa,
            spread,
        }
    }

    #[test]
    fn diagonal_entries_equal_beta() {
        let array = AntennaArray::uniform_circular(5);
        let f = build_covariance(&array, &geom(2.3, 0.7, 0.4), 64).unwrap();
        for i in 0..5 {
            assert!((f.r[(i, i)].re - 2.3).abs() < 1e-14);
            assert!(f.r[(i, i)].im.abs() < 1e-14);
        }
    }

    #[test]
    fn single_antenna_unit_gain() {
        let array = AntennaArray::uniform_circular(1);
        let f = build_covariance(&array, &geom(1.0, 0.0, 0.5), 16).unwrap();
        assert_eq!(f.r.nrows(), 1);
        assert!((f.r[(0, 0)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn offdiagonals_match_refined_quadrature() {
        // independent high-resolution oracle: 2*10^4-node midpoint rule
        let array = AntennaArray::uniform_circular(4);
        let g = geom(1.0, std::f64::consts::PI / 6.0, std::f64::consts::PI / 6.0);
        let coarse = build_covariance(&array, &g, DEFAULT_QUAD_POINTS).unwrap();
        let fine = build_covariance(&array, &g, 20_000).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                if a == b {
                    continue;
                }
                let diff = (coarse.r[(a, b)] - fine.r[(a, b)]).norm();
                let mag = fine.r[(a, b)].norm().max(1e-30);
                assert!(
                    diff / mag < 1e-6,
                    "entry ({a},{b}) relative error {}",
                    diff / mag
                );
            }
        }
    }

    #[test]
    fn kl_reconstruction_is_exact_for_retained_rank() {
        let array = AntennaArray::uniform_circular(6);
        let f = build_covariance(&array, &geom(1.5, 1.0, 0.3), 128).unwrap();
        let recon = f.u.clone()
            * DMatrix::from_diagonal(&f.lambda.map(|x| C64::new(x, 0.0)))
            * f.u.adjoint();
        let err = (&recon - &f.r).norm() / f.r.norm();
        assert!(err < 1e-9, "KL reconstruction error {err}");
        // hermitian and numerically PSD
        assert!((f.r.clone() - f.r.adjoint()).norm() < 1e-14);
        for lam in f.lambda.iter() {
            assert!(*lam > 0.0);
        }
    }

    #[test]
    fn sample_channel_is_deterministic_per_seed() {
        let array = AntennaArray::uniform_circular(4);
        let f = build_covariance(&array, &geom(1.0, 0.2, 0.5), 64).unwrap();
        let a = sample_channel(&f, 42);
        let b = sample_channel(&f, 42);
        let c = sample_channel(&f, 43);
        assert_eq!(a.h, b.h);
        assert_ne!(a.h, c.h);
        // construction identity h = U Lambda^{1/2} g
        let recon = f.mixing() * &a.g;
        assert!((&recon - &a.h).norm() < 1e-14);
    }

    #[test]
    fn csit_kappa_limits() {
        let array = AntennaArray::uniform_circular(4);
        let f = build_covariance(&array, &geom(1.0, 0.2, 0.5), 64).unwrap();
        let ch = sample_channel(&f, 7);

        let perfect = sample_csit(&f, &ch.g, 0.0, 8).unwrap();
        assert!((&perfect.h_hat - &ch.h).norm() < 1e-14);
        assert!(perfect.error_cov.norm() < 1e-14);

        let blind = sample_csit(&f, &ch.g, 1.0, 8).unwrap();
        let two_r = &f.r * C64::new(2.0, 0.0);
        assert!((&blind.error_cov - &two_r).norm() / two_r.norm() < 1e-9);

        assert!(sample_csit(&f, &ch.g, 1.5, 8).is_err());
    }

    #[test]
    fn pathloss_reference_and_slope() {
        let p = PathlossParams::default();
        let g0 = pathloss_gain(1.0, &p).unwrap();
        assert!((g0 - 10f64.powf(-3.8)).abs() < 1e-15);

        let p2 = PathlossParams {
            exponent: 2.0,
            ..p
        };
        let a = pathloss_gain(100.0, &p2).unwrap();
        let b = pathloss_gain(200.0, &p2).unwrap();
        let drop_db = 10.0 * (a / b).log10();
        assert!((drop_db - 6.020599913279624).abs() < 1e-9);

        // documented defaults at 250 m, computed by hand from the formula
        let g = pathloss_gain(250.0, &p).unwrap();
        let expect = 10f64.powf(-(38.0 + 35.0 * 250f64.log10()) / 10.0);
        assert!((g - expect).abs() <= 1e-15 * expect.abs());

        assert!(pathloss_gain(0.0, &p).is_err());
        assert!(pathloss_gain(-1.0, &p).is_err());
    }

    #[test]
    fn invalid_geometry_rejected() {
        let array = AntennaArray::uniform_circular(4);
        assert!(build_covariance(&array, &geom(f64::NAN, 0.0, 0.5), 64).is_err());
        assert!(build_covariance(&array, &geom(1.0, 0.0, -0.1), 64).is_err());
        assert!(build_covariance(&array, &geom(1.0, 0.0, 0.5), 1).is_err());
    }
}

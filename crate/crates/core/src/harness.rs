//! Monte Carlo engine and bundled experiment scenarios.
//!
//! A `Scenario` describes one experiment end to end:
//! - geometry (antennas, layer sizes, angle-of-arrival and spread policies)
//! - channel statistics (large-scale gain policy, CSIT quality kappa)
//! - the sweep axis (an SNR grid, or a user-count grid at fixed SNR)
//! - solver variant and baselines, draw count, master seed
//!
//! Reported rates always come from the exact clamped formulas, never from
//! the smoothed surrogates the solver maximizes. Trials are independent work
//! units with seeds derived from (master seed, draw index), so parallel and
//! sequential runs produce identical tables.

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines;
use crate::channel::{
    build_covariance, pathloss_gain, sample_channel, sample_csit, AntennaArray, CsitEstimate,
    PathlossParams, UserGeometry, C64, DEFAULT_QUAD_POINTS,
};
use crate::error::{HiaError, Result};
use crate::gpi::{
    gpi_solve, pf_update, GpiConfig, GpiProblem, GpiTrace, PfState,
};
use crate::secrecy::{
    secrecy_rate_c, secrecy_rate_nc, user_rate, LayerAssignment, PrecoderStack, WiretapModel,
};

/// Noise power over a 10 MHz band with a 9 dB receiver noise figure:
/// -174 dBm/Hz + 10 log10(10^7) + 9 dB.
pub const SYSTEM_NOISE_DBM: f64 = -174.0 + 70.0 + 9.0;

/// Downlink transmit power assumed for the system-level pathloss scenarios.
/// The source material fixes the noise budget but not the radiated power;
/// 30 dBm (1 W) is a typical small-cell figure and is part of the scenario
/// contract so results stay reproducible.
pub const SYSTEM_TX_POWER_DBM: f64 = 30.0;

/// Angle-of-arrival policy for user placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AoaPolicy {
    /// Every user shares this angle (radians).
    Fixed(f64),
    /// Independent uniform draw on [0, 2 pi) per user per trial.
    Uniform,
}

/// Large-scale gain policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaPolicy {
    /// beta = 1 for every user; SNR comes from the scenario grid.
    Unit,
    /// Log-distance pathloss with per-user distances drawn uniformly from
    /// the given range; the noise ratio comes from the system link budget
    /// (SYSTEM_NOISE_DBM, SYSTEM_TX_POWER_DBM) instead of the SNR grid.
    Pathloss { d_min_m: f64, d_max_m: f64 },
}

/// Which solver the scenario exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Nc,
    C,
    PfNc,
    PfC,
    Noma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Baseline {
    Mrt,
    Zf,
}

fn default_alpha_init() -> f64 {
    10.0
}
fn default_alpha_decay() -> f64 {
    0.9
}
fn default_epsilon() -> f64 {
    0.01
}
fn default_max_inner_iters() -> usize {
    50
}
fn default_max_alpha_restarts() -> usize {
    30
}
fn default_spread() -> f64 {
    std::f64::consts::PI / 6.0
}
fn default_aoa() -> AoaPolicy {
    AoaPolicy::Uniform
}
fn default_beta() -> BetaPolicy {
    BetaPolicy::Unit
}
fn default_draws() -> usize {
    100
}
fn default_seed() -> u64 {
    1
}
fn default_baselines() -> Vec<Baseline> {
    vec![Baseline::Mrt, Baseline::Zf]
}
fn default_delta() -> f64 {
    0.2
}
fn default_slots() -> usize {
    50
}
fn default_quad_points() -> usize {
    DEFAULT_QUAD_POINTS
}

/// One experiment description. Serializes to and from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub id: String,
    /// Transmit antennas at the base station.
    pub n: usize,
    /// Users per accessibility layer, lowest layer first.
    pub layer_sizes: Vec<usize>,
    /// SNR grid in dB. With a `user_grid` present it must hold exactly one
    /// entry (the fixed operating point).
    pub snr_db: Vec<f64>,
    /// Optional user-count sweep: each entry M replaces the layer sizes with
    /// K equal groups of M / K users.
    #[serde(default)]
    pub user_grid: Option<Vec<usize>>,
    /// CSIT quality, 0 = perfect.
    #[serde(default)]
    pub kappa: f64,
    #[serde(default = "default_alpha_init")]
    pub alpha_init: f64,
    #[serde(default = "default_alpha_decay")]
    pub alpha_decay: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_max_inner_iters")]
    pub max_inner_iters: usize,
    #[serde(default = "default_max_alpha_restarts")]
    pub max_alpha_restarts: usize,
    /// Angular spread of the scattering arc (radians).
    #[serde(default = "default_spread")]
    pub spread: f64,
    #[serde(default = "default_aoa")]
    pub aoa: AoaPolicy,
    #[serde(default = "default_beta")]
    pub beta: BetaPolicy,
    /// Channel draws (for the fairness variants: independent drops).
    #[serde(default = "default_draws")]
    pub draws: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub variant: Variant,
    #[serde(default = "default_baselines")]
    pub baselines: Vec<Baseline>,
    /// Averaging constant of the fairness filter.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Scheduling slots per drop for the fairness variants.
    #[serde(default = "default_slots")]
    pub slots: usize,
    #[serde(default = "default_quad_points")]
    pub quad_points: usize,
    /// When set, a `run` of this scenario emits the per-iteration solver
    /// trace instead of the aggregated rate table.
    #[serde(default)]
    pub trace: bool,
}

impl Scenario {
    pub fn n_users(&self) -> usize {
        self.layer_sizes.iter().sum()
    }

    pub fn n_layers(&self) -> usize {
        self.layer_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(HiaError::Config("need at least one antenna".into()));
        }
        if self.layer_sizes.is_empty() || self.layer_sizes.contains(&0) {
            return Err(HiaError::Config("layer sizes must be nonempty and positive".into()));
        }
        if self.snr_db.is_empty() {
            return Err(HiaError::Config("SNR grid must be nonempty".into()));
        }
        if let Some(grid) = &self.user_grid {
            if self.snr_db.len() != 1 {
                return Err(HiaError::Config(
                    "a user-count sweep needs a single SNR entry".into(),
                ));
            }
            if grid.is_empty() {
                return Err(HiaError::Config("user grid must be nonempty".into()));
            }
            let k = self.n_layers();
            for &m in grid {
                if m == 0 || m % k != 0 {
                    return Err(HiaError::Config(format!(
                        "user grid entry {m} is not a positive multiple of K={k}"
                    )));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(HiaError::Config(format!("kappa must lie in [0,1], got {}", self.kappa)));
        }
        if self.draws == 0 {
            return Err(HiaError::Config("need at least one draw".into()));
        }
        if matches!(self.variant, Variant::Noma) && self.layer_sizes.iter().any(|&s| s != 1) {
            return Err(HiaError::Config("the NOMA variant needs singleton layers".into()));
        }
        if matches!(self.variant, Variant::PfNc | Variant::PfC) {
            if !(self.delta > 0.0 && self.delta < 1.0) {
                return Err(HiaError::Config(format!(
                    "delta must lie in (0,1), got {}",
                    self.delta
                )));
            }
            if self.slots == 0 {
                return Err(HiaError::Config("need at least one slot".into()));
            }
        }
        if let BetaPolicy::Pathloss { d_min_m, d_max_m } = self.beta {
            if !(d_min_m > 0.0 && d_max_m >= d_min_m) {
                return Err(HiaError::Config("bad pathloss distance range".into()));
            }
        }
        Ok(())
    }

    pub fn gpi_config(&self) -> GpiConfig {
        GpiConfig {
            alpha_init: self.alpha_init,
            alpha_decay: self.alpha_decay,
            epsilon: self.epsilon,
            max_inner_iters: self.max_inner_iters,
            max_alpha_restarts: self.max_alpha_restarts,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let sc: Scenario =
            toml::from_str(text).map_err(|e| HiaError::Config(format!("scenario parse: {e}")))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scenario serializes")
    }

    /// Layer assignment for a sweep point with `m` users total.
    fn layers_for(&self, m: usize) -> Result<LayerAssignment> {
        if m == self.n_users() {
            LayerAssignment::from_sizes(&self.layer_sizes)
        } else {
            let k = self.n_layers();
            LayerAssignment::from_sizes(&vec![m / k; k])
        }
    }
}

/// The bundled experiment catalog. Each entry reproduces one published
/// figure setup; ids are stable and listed by the CLI.
pub fn bundled_scenarios() -> Vec<Scenario> {
    let base = Scenario {
        id: String::new(),
        n: 6,
        layer_sizes: vec![2, 2, 2],
        snr_db: vec![0.0, 10.0, 20.0, 30.0, 40.0],
        user_grid: None,
        kappa: 0.0,
        alpha_init: default_alpha_init(),
        alpha_decay: default_alpha_decay(),
        epsilon: default_epsilon(),
        max_inner_iters: default_max_inner_iters(),
        max_alpha_restarts: default_max_alpha_restarts(),
        spread: default_spread(),
        aoa: AoaPolicy::Uniform,
        beta: BetaPolicy::Unit,
        draws: default_draws(),
        seed: default_seed(),
        variant: Variant::Nc,
        baselines: default_baselines(),
        delta: default_delta(),
        slots: default_slots(),
        quad_points: default_quad_points(),
        trace: false,
    };
    vec![
        // clustered single-user layers under imperfect CSIT, sum rate vs SNR
        Scenario {
            id: "fig2_noma".into(),
            n: 4,
            layer_sizes: vec![1; 8],
            kappa: 0.4,
            aoa: AoaPolicy::Fixed(std::f64::consts::PI / 6.0),
            variant: Variant::Noma,
            ..base.clone()
        },
        // three layers of two users, sum secrecy rate vs SNR
        Scenario {
            id: "fig3_nc".into(),
            variant: Variant::Nc,
            ..base.clone()
        },
        Scenario {
            id: "fig3_c".into(),
            variant: Variant::C,
            ..base.clone()
        },
        // wide array, growing user count at 40 dB
        Scenario {
            id: "fig4_nc".into(),
            n: 24,
            layer_sizes: vec![1, 1, 1],
            snr_db: vec![40.0],
            user_grid: Some(vec![3, 6, 9, 12, 15, 18, 21]),
            variant: Variant::Nc,
            ..base.clone()
        },
        Scenario {
            id: "fig4_c".into(),
            n: 24,
            layer_sizes: vec![1, 1, 1],
            snr_db: vec![40.0],
            user_grid: Some(vec![3, 6, 9, 12, 15, 18, 21]),
            variant: Variant::C,
            ..base.clone()
        },
        // per-iteration eigenvalue and residual trace at 20 dB
        Scenario {
            id: "fig5_trace".into(),
            layer_sizes: vec![3, 2, 1],
            snr_db: vec![20.0],
            draws: 1,
            variant: Variant::Nc,
            trace: true,
            ..base.clone()
        },
        // system-level fairness loop with pathloss geometry
        Scenario {
            id: "fig6_pf".into(),
            layer_sizes: vec![3, 2, 1],
            snr_db: vec![20.0],
            beta: BetaPolicy::Pathloss {
                d_min_m: 100.0,
                d_max_m: 500.0,
            },
            draws: 20,
            variant: Variant::PfNc,
            ..base
        },
    ]
}

pub fn bundled_scenario(id: &str) -> Option<Scenario> {
    bundled_scenarios().into_iter().find(|s| s.id == id)
}

/// Exact clamped rates of one method at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRates {
    pub method: &'static str,
    pub per_message: Vec<f64>,
    /// Inner iterations of the final solver loop; 0 for closed-form methods.
    pub iterations: usize,
}

impl MethodRates {
    pub fn sum(&self) -> f64 {
        self.per_message.iter().sum()
    }
}

/// All methods evaluated on one shared channel draw at one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointResult {
    pub sweep: f64,
    pub methods: Vec<MethodRates>,
}

/// One draw of the full sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub points: Vec<PointResult>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic per-stream seed from the master seed and stream labels.
fn stream_seed(master: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &p in parts {
        s = splitmix64(s ^ splitmix64(p));
    }
    s
}

// stream labels
const STREAM_GEOMETRY: u64 = 1;
const STREAM_CHANNEL: u64 = 2;
const STREAM_CSIT: u64 = 3;

/// True channels (and CSIT when kappa > 0) for every user of one trial.
struct DrawSetup {
    channels: Vec<DVector<C64>>,
    csit: Option<Vec<CsitEstimate>>,
    layers: LayerAssignment,
}

fn draw_setup(sc: &Scenario, m: usize, draw: usize, geo_tag: u64) -> Result<DrawSetup> {
    use rand::{Rng, SeedableRng};
    let array = AntennaArray::uniform_circular(sc.n);
    let mut geo_rng = rand_chacha::ChaCha8Rng::seed_from_u64(stream_seed(
        sc.seed,
        &[STREAM_GEOMETRY, draw as u64, geo_tag],
    ));
    let layers = sc.layers_for(m)?;

    let mut channels = Vec::with_capacity(m);
    let mut csit = Vec::with_capacity(m);
    // shared covariance when the geometry is identical for every user
    let mut shared = None;
    for u in 0..m {
        let aoa = match sc.aoa {
            AoaPolicy::Fixed(theta) => theta,
            AoaPolicy::Uniform => geo_rng.gen::<f64>() * 2.0 * std::f64::consts::PI,
        };
        let beta = match sc.beta {
            BetaPolicy::Unit => 1.0,
            BetaPolicy::Pathloss { d_min_m, d_max_m } => {
                let d = d_min_m + geo_rng.gen::<f64>() * (d_max_m - d_min_m);
                pathloss_gain(d, &PathlossParams::default())?
            }
        };
        let layer = (0..layers.n_layers())
            .find(|&k| layers.layer(k).contains(&u))
            .expect("every user sits in a layer");
        let geom = UserGeometry {
            layer,
            large_scale_gain: beta,
            aoa,
            spread: sc.spread,
        };
        let factors = match (&sc.aoa, &sc.beta, &shared) {
            (AoaPolicy::Fixed(_), BetaPolicy::Unit, Some(f)) => std::rc::Rc::clone(f),
            _ => {
                let f = std::rc::Rc::new(build_covariance(&array, &geom, sc.quad_points)?);
                if matches!((&sc.aoa, &sc.beta), (AoaPolicy::Fixed(_), BetaPolicy::Unit)) {
                    shared = Some(std::rc::Rc::clone(&f));
                }
                f
            }
        };
        let real = sample_channel(
            &factors,
            stream_seed(sc.seed, &[STREAM_CHANNEL, draw as u64, geo_tag, u as u64]),
        );
        if sc.kappa > 0.0 {
            csit.push(sample_csit(
                &factors,
                &real.g,
                sc.kappa,
                stream_seed(sc.seed, &[STREAM_CSIT, draw as u64, geo_tag, u as u64]),
            )?);
        }
        channels.push(real.h);
    }
    Ok(DrawSetup {
        channels,
        csit: if sc.kappa > 0.0 { Some(csit) } else { None },
        layers,
    })
}

fn noise_ratio_for(sc: &Scenario, snr_db: f64) -> f64 {
    match sc.beta {
        BetaPolicy::Unit => 10f64.powf(-snr_db / 10.0),
        // link budget: sigma^2 / P in linear scale
        BetaPolicy::Pathloss { .. } => {
            10f64.powf((SYSTEM_NOISE_DBM - SYSTEM_TX_POWER_DBM) / 10.0)
        }
    }
}

/// Exact clamped per-message secrecy rates of a stack under the scenario's
/// wiretap model.
fn exact_rates(
    variant: Variant,
    channels: &[DVector<C64>],
    layers: &LayerAssignment,
    stack: &PrecoderStack,
    noise_ratio: f64,
) -> Result<Vec<f64>> {
    let k_total = layers.n_layers();
    (0..k_total)
        .map(|k| match variant {
            Variant::Nc | Variant::PfNc => secrecy_rate_nc(k, channels, layers, stack, noise_ratio),
            Variant::C | Variant::PfC => secrecy_rate_c(k, channels, layers, stack, noise_ratio),
            Variant::Noma => {
                // message k must be decodable by every user of layers >= k
                layers
                    .legitimate(k)
                    .map(|i| user_rate(k, &channels[i], stack, noise_ratio))
                    .try_fold(f64::INFINITY, |acc, r| r.map(|v| acc.min(v)))
            }
        })
        .collect()
}

fn baseline_rates(
    sc: &Scenario,
    design_channels: &[DVector<C64>],
    true_channels: &[DVector<C64>],
    layers: &LayerAssignment,
    noise_ratio: f64,
) -> Result<Vec<MethodRates>> {
    let mut out = Vec::new();
    for b in &sc.baselines {
        let (name, stack) = match b {
            Baseline::Mrt => ("mrt", baselines::mrt(design_channels, layers)?),
            Baseline::Zf => ("zf", baselines::zf(design_channels, layers)?.stack),
        };
        out.push(MethodRates {
            method: name,
            per_message: exact_rates(sc.variant, true_channels, layers, &stack, noise_ratio)?,
            iterations: 0,
        });
    }
    Ok(out)
}

/// Runs every method of the scenario on the channel draw `draw`, at every
/// sweep point. Deterministic in (scenario, draw).
pub fn run_trial(sc: &Scenario, draw: usize) -> Result<TrialResult> {
    sc.validate()?;
    match sc.variant {
        Variant::Nc | Variant::C => run_trial_secrecy(sc, draw),
        Variant::Noma => run_trial_noma(sc, draw),
        Variant::PfNc | Variant::PfC => Ok(TrialResult {
            points: vec![run_drop_pf(sc, draw)?],
        }),
    }
}

fn run_trial_secrecy(sc: &Scenario, draw: usize) -> Result<TrialResult> {
    let config = sc.gpi_config();
    let mut points = Vec::new();
    if let Some(grid) = sc.user_grid.clone() {
        let snr = sc.snr_db[0];
        for (pi, &m) in grid.iter().enumerate() {
            let setup = draw_setup(sc, m, draw, pi as u64)?;
            points.push(secrecy_point(sc, &setup, snr, m as f64, &config)?);
        }
    } else {
        let setup = draw_setup(sc, sc.n_users(), draw, 0)?;
        for &snr in &sc.snr_db {
            points.push(secrecy_point(sc, &setup, snr, snr, &config)?);
        }
    }
    Ok(TrialResult { points })
}

fn secrecy_point(
    sc: &Scenario,
    setup: &DrawSetup,
    snr_db: f64,
    sweep: f64,
    config: &GpiConfig,
) -> Result<PointResult> {
    let noise_ratio = noise_ratio_for(sc, snr_db);
    let channels = &setup.channels;
    let layers = &setup.layers;
    let problem = match sc.variant {
        Variant::Nc => GpiProblem::NonColluding {
            channels,
            layers,
            noise_ratio,
        },
        Variant::C => GpiProblem::Colluding {
            channels,
            layers,
            noise_ratio,
        },
        _ => unreachable!("secrecy_point handles nc and c only"),
    };
    let initial = baselines::mrt(channels, layers)?;
    let variant = sc.variant;
    let (stack, trace) = gpi_solve(&problem, &initial, config, |s| {
        exact_rates(variant, channels, layers, s, noise_ratio)
            .map(|r| r.iter().sum())
            .unwrap_or(f64::NEG_INFINITY)
    })?;
    let mut methods = vec![MethodRates {
        method: "gpi-hia",
        per_message: exact_rates(variant, channels, layers, &stack, noise_ratio)?,
        iterations: trace.final_inner_iterations(),
    }];
    methods.extend(baseline_rates(sc, channels, channels, layers, noise_ratio)?);
    Ok(PointResult { sweep, methods })
}

fn run_trial_noma(sc: &Scenario, draw: usize) -> Result<TrialResult> {
    let config = sc.gpi_config();
    let m = sc.n_users();
    let mut setup = draw_setup(sc, m, draw, 0)?;

    // decoding order: ascending true channel strength, so user K holds the
    // strongest channel and decodes every message
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        setup.channels[a]
            .norm_squared()
            .total_cmp(&setup.channels[b].norm_squared())
    });
    setup.channels = order.iter().map(|&i| setup.channels[i].clone()).collect();
    if let Some(csit) = &setup.csit {
        setup.csit = Some(order.iter().map(|&i| csit[i].clone()).collect());
    }

    let csit: Vec<CsitEstimate> = match &setup.csit {
        Some(c) => c.clone(),
        // perfect CSIT expressed in the same estimate form
        None => setup
            .channels
            .iter()
            .map(|h| CsitEstimate {
                h_hat: h.clone(),
                error_cov: nalgebra::DMatrix::zeros(sc.n, sc.n),
                kappa: 0.0,
            })
            .collect(),
    };
    let design: Vec<DVector<C64>> = csit.iter().map(|c| c.h_hat.clone()).collect();
    let layers = &setup.layers;

    let mut points = Vec::new();
    for &snr in &sc.snr_db {
        let noise_ratio = noise_ratio_for(sc, snr);
        let problem = GpiProblem::Noma {
            csit: &csit,
            noise_ratio,
        };
        let initial = baselines::mrt(&design, layers)?;
        let channels = &setup.channels;
        let (stack, trace) = gpi_solve(&problem, &initial, &config, |s| {
            exact_rates(Variant::Noma, channels, layers, s, noise_ratio)
                .map(|r| r.iter().sum())
                .unwrap_or(f64::NEG_INFINITY)
        })?;
        let mut methods = vec![MethodRates {
            method: "gpi-noma",
            per_message: exact_rates(Variant::Noma, channels, layers, &stack, noise_ratio)?,
            iterations: trace.final_inner_iterations(),
        }];
        // baselines design on the estimates, rates evaluate on the truth
        methods.extend(baseline_rates(sc, &design, channels, layers, noise_ratio)?);
        points.push(PointResult {
            sweep: snr,
            methods,
        });
    }
    Ok(TrialResult { points })
}

/// One fairness drop: fixed user positions, fresh fading per slot, the
/// weighted solver against its unweighted counterpart on identical channels.
fn run_drop_pf(sc: &Scenario, drop: usize) -> Result<PointResult> {
    let outcome = pf_loop(sc, drop)?;
    let k = sc.n_layers();
    let mean = |per_slot: &Vec<Vec<f64>>, msg: usize| {
        per_slot.iter().map(|r| r[msg]).sum::<f64>() / per_slot.len() as f64
    };
    let methods = vec![
        MethodRates {
            method: "gpi-hia-pf",
            per_message: (0..k).map(|m| mean(&outcome.pf_rates, m)).collect(),
            iterations: 0,
        },
        MethodRates {
            method: "gpi-hia",
            per_message: (0..k).map(|m| mean(&outcome.plain_rates, m)).collect(),
            iterations: 0,
        },
    ];
    Ok(PointResult {
        sweep: sc.snr_db[0],
        methods,
    })
}

/// Full record of one fairness drop.
#[derive(Debug, Clone)]
pub struct PfOutcome {
    /// Per-slot exact per-message rates under the weighted solver.
    pub pf_rates: Vec<Vec<f64>>,
    /// Same slots, unweighted solver on identical channels.
    pub plain_rates: Vec<Vec<f64>>,
    pub final_mu: Vec<f64>,
}

impl PfOutcome {
    fn averages(rates: &[Vec<f64>]) -> Vec<f64> {
        let k = rates[0].len();
        (0..k)
            .map(|m| rates.iter().map(|r| r[m]).sum::<f64>() / rates.len() as f64)
            .collect()
    }

    pub fn pf_averages(&self) -> Vec<f64> {
        Self::averages(&self.pf_rates)
    }

    pub fn plain_averages(&self) -> Vec<f64> {
        Self::averages(&self.plain_rates)
    }
}

/// Jain's fairness index: (sum x)^2 / (n sum x^2); 1 means perfectly even.
pub fn jain_index(x: &[f64]) -> f64 {
    let s: f64 = x.iter().sum();
    let q: f64 = x.iter().map(|v| v * v).sum();
    if q == 0.0 {
        1.0
    } else {
        s * s / (x.len() as f64 * q)
    }
}

/// Time loop of the fairness scenario: solve the weighted problem, record
/// exact rates, update the averaged-rate filter. The unweighted solver runs
/// on the same channels for comparison.
pub fn pf_loop(sc: &Scenario, drop: usize) -> Result<PfOutcome> {
    sc.validate()?;
    if !matches!(sc.variant, Variant::PfNc | Variant::PfC) {
        return Err(HiaError::Config("pf_loop needs a fairness variant".into()));
    }
    let config = sc.gpi_config();
    let m = sc.n_users();
    let k = sc.n_layers();
    let wiretap = match sc.variant {
        Variant::PfC => WiretapModel::Colluding,
        _ => WiretapModel::NonColluding,
    };
    let exact_variant = match sc.variant {
        Variant::PfC => Variant::C,
        _ => Variant::Nc,
    };
    let noise_ratio = noise_ratio_for(sc, sc.snr_db[0]);

    let mut state = PfState::new(k, sc.delta)?;
    let mut pf_rates = Vec::with_capacity(sc.slots);
    let mut plain_rates = Vec::with_capacity(sc.slots);
    for slot in 0..sc.slots {
        // geometry redrawn with the slot tag keeps positions fixed per drop
        // only when the policy is fixed; fading is always fresh per slot
        let setup = draw_setup_pf(sc, m, drop, slot)?;
        let channels = &setup.channels;
        let layers = &setup.layers;

        let initial = baselines::mrt(channels, layers)?;
        let weighted = GpiProblem::ProportionalFair {
            channels,
            layers,
            noise_ratio,
            mu: &state.mu,
            wiretap,
        };
        let (f_pf, _) = gpi_solve(&weighted, &initial, &config, |s| {
            exact_rates(exact_variant, channels, layers, s, noise_ratio)
                .map(|r| r.iter().sum())
                .unwrap_or(f64::NEG_INFINITY)
        })?;
        let rates_pf = exact_rates(exact_variant, channels, layers, &f_pf, noise_ratio)?;

        let plain = match sc.variant {
            Variant::PfC => GpiProblem::Colluding {
                channels,
                layers,
                noise_ratio,
            },
            _ => GpiProblem::NonColluding {
                channels,
                layers,
                noise_ratio,
            },
        };
        let (f_plain, _) = gpi_solve(&plain, &initial, &config, |s| {
            exact_rates(exact_variant, channels, layers, s, noise_ratio)
                .map(|r| r.iter().sum())
                .unwrap_or(f64::NEG_INFINITY)
        })?;
        plain_rates.push(exact_rates(
            exact_variant,
            channels,
            layers,
            &f_plain,
            noise_ratio,
        )?);

        state = pf_update(&state, &rates_pf);
        pf_rates.push(rates_pf);
    }
    Ok(PfOutcome {
        pf_rates,
        plain_rates,
        final_mu: state.mu,
    })
}

/// Per-slot channel draw of a fairness drop: user positions come from the
/// drop stream, fading from the (drop, slot) stream.
fn draw_setup_pf(sc: &Scenario, m: usize, drop: usize, slot: usize) -> Result<DrawSetup> {
    use rand::{Rng, SeedableRng};
    let array = AntennaArray::uniform_circular(sc.n);
    // positions fixed for the whole drop
    let mut geo_rng = rand_chacha::ChaCha8Rng::seed_from_u64(stream_seed(
        sc.seed,
        &[STREAM_GEOMETRY, drop as u64],
    ));
    let layers = sc.layers_for(m)?;
    let mut channels = Vec::with_capacity(m);
    for u in 0..m {
        let aoa = match sc.aoa {
            AoaPolicy::Fixed(theta) => theta,
            AoaPolicy::Uniform => geo_rng.gen::<f64>() * 2.0 * std::f64::consts::PI,
        };
        let beta = match sc.beta {
            BetaPolicy::Unit => 1.0,
            BetaPolicy::Pathloss { d_min_m, d_max_m } => {
                let d = d_min_m + geo_rng.gen::<f64>() * (d_max_m - d_min_m);
                pathloss_gain(d, &PathlossParams::default())?
            }
        };
        let layer = (0..layers.n_layers())
            .find(|&k| layers.layer(k).contains(&u))
            .expect("every user sits in a layer");
        let geom = UserGeometry {
            layer,
            large_scale_gain: beta,
            aoa,
            spread: sc.spread,
        };
        let factors = build_covariance(&array, &geom, sc.quad_points)?;
        let real = sample_channel(
            &factors,
            stream_seed(
                sc.seed,
                &[STREAM_CHANNEL, drop as u64, slot as u64, u as u64],
            ),
        );
        channels.push(real.h);
    }
    Ok(DrawSetup {
        channels,
        csit: None,
        layers,
    })
}

/// One aggregated output row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub scenario: String,
    pub method: String,
    /// SNR in dB, or the user count on a user-count sweep.
    pub snr_db_or_m: f64,
    /// Message index (0-based) or "sum".
    pub message: String,
    pub mean_rate_bits: f64,
    pub stderr: f64,
    pub draws: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTable {
    pub rows: Vec<RunRow>,
}

pub const CSV_HEADER: &str =
    "scenario,method,snr_db_or_m,message,mean_rate_bits,stderr,draws,seed";

impl RunTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.scenario,
                r.method,
                r.snr_db_or_m,
                r.message,
                r.mean_rate_bits,
                r.stderr,
                r.draws,
                r.seed
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn mean(&self, method: &str, sweep: f64, message: &str) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.method == method && r.snr_db_or_m == sweep && r.message == message)
            .map(|r| r.mean_rate_bits)
    }
}

/// Runs all draws of the scenario in parallel and aggregates means with
/// standard errors. Identical (scenario, seed) inputs give identical tables.
pub fn monte_carlo(sc: &Scenario) -> Result<RunTable> {
    sc.validate()?;
    let trials: Vec<TrialResult> = (0..sc.draws)
        .into_par_iter()
        .map(|d| run_trial(sc, d))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let template = &trials[0];
    for (pi, point) in template.points.iter().enumerate() {
        for (mi, method) in point.methods.iter().enumerate() {
            let k = method.per_message.len();
            let mut emit = |message: String, samples: Vec<f64>| {
                let n = samples.len() as f64;
                let mean = samples.iter().sum::<f64>() / n;
                let stderr = if samples.len() > 1 {
                    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>()
                        / (n - 1.0);
                    (var / n).sqrt()
                } else {
                    0.0
                };
                rows.push(RunRow {
                    scenario: sc.id.clone(),
                    method: method.method.to_string(),
                    snr_db_or_m: point.sweep,
                    message,
                    mean_rate_bits: mean,
                    stderr,
                    draws: sc.draws,
                    seed: sc.seed,
                });
            };
            for m in 0..k {
                emit(
                    m.to_string(),
                    trials
                        .iter()
                        .map(|t| t.points[pi].methods[mi].per_message[m])
                        .collect(),
                );
            }
            emit(
                "sum".to_string(),
                trials
                    .iter()
                    .map(|t| t.points[pi].methods[mi].sum())
                    .collect(),
            );
        }
    }
    Ok(RunTable { rows })
}

/// Convergence trace of the scenario's solver on draw 0 at the first sweep
/// point, one row per inner iteration.
pub fn trace_run(sc: &Scenario) -> Result<GpiTrace> {
    sc.validate()?;
    let snr = sc.snr_db[0];
    let noise_ratio = noise_ratio_for(sc, snr);
    let setup = draw_setup(sc, sc.n_users(), 0, 0)?;
    let channels = &setup.channels;
    let layers = &setup.layers;
    let problem = match sc.variant {
        Variant::C | Variant::PfC => GpiProblem::Colluding {
            channels,
            layers,
            noise_ratio,
        },
        _ => GpiProblem::NonColluding {
            channels,
            layers,
            noise_ratio,
        },
    };
    let initial = baselines::mrt(channels, layers)?;
    let exact_variant = match sc.variant {
        Variant::C | Variant::PfC => Variant::C,
        _ => Variant::Nc,
    };
    let (_, trace) = gpi_solve(&problem, &initial, &sc.gpi_config(), |s| {
        exact_rates(exact_variant, channels, layers, s, noise_ratio)
            .map(|r| r.iter().sum())
            .unwrap_or(f64::NEG_INFINITY)
    })?;
    Ok(trace)
}

pub const TRACE_CSV_HEADER: &str = "scenario,iteration,alpha,lambda,residual";

pub fn trace_to_csv(sc: &Scenario, trace: &GpiTrace) -> String {
    let mut out = String::from(TRACE_CSV_HEADER);
    out.push('\n');
    for r in &trace.rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            sc.id, r.iteration, r.alpha, r.lambda, r.residual
        ));
    }
    out
}

//! Layered secrecy model: exact per-message rates, block-structured
//! quadratic forms, and LogSumExp-smoothed objectives.
//!
//! All smoothed objectives are degree-0 homogeneous in the stacked precoder,
//! so they may be evaluated on unnormalized iterates. Exact rates require a
//! unit-norm stack (the transmit power constraint).

use nalgebra::{DMatrix, DVector};

use crate::channel::C64;
use crate::error::{HiaError, Result};

pub const LN2: f64 = std::f64::consts::LN_2;

/// Norm tolerance for the unit-power contract on finalized stacks.
pub const NORM_TOL: f64 = 1e-9;

/// Partition of the `M` users into `K` priority layers. Layer index is
/// 0-based; a larger index means higher priority.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerAssignment {
    members: Vec<Vec<usize>>,
    n_users: usize,
}

impl LayerAssignment {
    /// Builds an assignment from per-layer user-index sets. The sets must be
    /// nonempty, pairwise disjoint, and cover exactly `0..M`.
    pub fn new(members: Vec<Vec<usize>>) -> Result<Self> {
        if members.is_empty() {
            return Err(HiaError::Config("need at least one layer".into()));
        }
        let n_users: usize = members.iter().map(|l| l.len()).sum();
        let mut seen = vec![false; n_users];
        for layer in &members {
            if layer.is_empty() {
                return Err(HiaError::Config("empty layer".into()));
            }
            for &u in layer {
                if u >= n_users || seen[u] {
                    return Err(HiaError::Config(format!(
                        "user {u} repeated or out of range"
                    )));
                }
                seen[u] = true;
            }
        }
        Ok(Self { members, n_users })
    }

    /// Singleton layers 0..k, user i in layer i.
    pub fn singletons(k: usize) -> Self {
        Self {
            members: (0..k).map(|i| vec![i]).collect(),
            n_users: k,
        }
    }

    /// Contiguous layers with the given sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        let mut members = Vec::with_capacity(sizes.len());
        let mut next = 0;
        for &s in sizes {
            members.push((next..next + s).collect());
            next += s;
        }
        Self::new(members)
    }

    pub fn n_layers(&self) -> usize {
        self.members.len()
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn layer(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    /// Users allowed to decode message `k`: members of layers >= k.
    pub fn legitimate(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.members[k..].iter().flatten().copied()
    }

    /// Users treated as eavesdroppers for message `k`: members of layers < k.
    pub fn eavesdroppers(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.members[..k].iter().flatten().copied()
    }

    /// Number of eavesdroppers of message `k` (gamma_k).
    pub fn gamma(&self, k: usize) -> usize {
        self.members[..k].iter().map(|l| l.len()).sum()
    }
}

/// The stacked precoder f_bar in C^{NK} with a per-message block view.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderStack {
    pub f: DVector<C64>,
    pub n: usize,
    pub k: usize,
}

impl PrecoderStack {
    pub fn new(f: DVector<C64>, n: usize, k: usize) -> Self {
        assert_eq!(f.len(), n * k, "stack length must be N*K");
        Self { f, n, k }
    }

    pub fn from_blocks(blocks: &[DVector<C64>]) -> Self {
        let k = blocks.len();
        let n = blocks[0].len();
        let mut f = DVector::zeros(n * k);
        for (j, b) in blocks.iter().enumerate() {
            assert_eq!(b.len(), n);
            f.rows_mut(j * n, n).copy_from(b);
        }
        Self { f, n, k }
    }

    /// Per-message precoder f_k (block view).
    pub fn block(&self, k: usize) -> DVector<C64> {
        self.f.rows(k * self.n, self.n).into_owned()
    }

    pub fn norm(&self) -> f64 {
        self.f.norm()
    }

    pub fn normalized(&self) -> Self {
        let n = self.norm();
        assert!(n > 0.0, "cannot normalize a zero stack");
        Self {
            f: self.f.map(|x| x / C64::new(n, 0.0)),
            n: self.n,
            k: self.k,
        }
    }

    pub fn is_unit_norm(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOL
    }
}

/// LogSumExp smoothing parameter. `beta = alpha / ln 2` converts between
/// natural-log LSE over rates and powers of Rayleigh quotients.
#[derive(Debug, Clone, Copy)]
pub struct SmoothingParams {
    pub alpha: f64,
}

impl SmoothingParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(HiaError::Domain(format!("alpha must be > 0, got {alpha}")));
        }
        Ok(Self { alpha })
    }

    pub fn beta(&self) -> f64 {
        self.alpha / LN2
    }
}

/// One block-diagonal Hermitian NK x NK matrix in structured form: block j is
/// `rank1_weights[j] * h h^H + psd_weights[j] * Phi + ident * I_N`.
#[derive(Debug, Clone)]
pub struct QuadForm {
    pub n: usize,
    pub k_blocks: usize,
    pub h: DVector<C64>,
    pub rank1_weights: Vec<f64>,
    pub psd: Option<DMatrix<C64>>,
    pub psd_weights: Vec<f64>,
    pub ident: f64,
}

impl QuadForm {
    fn rank1(n: usize, k_blocks: usize, h: DVector<C64>, rank1_weights: Vec<f64>, ident: f64) -> Self {
        Self {
            n,
            k_blocks,
            h,
            rank1_weights,
            psd: None,
            psd_weights: vec![0.0; k_blocks],
            ident,
        }
    }

    /// Quadratic form f^H M f, evaluated in O(NK) from per-block inner
    /// products. Real by Hermitian structure.
    pub fn quad(&self, stack: &PrecoderStack) -> f64 {
        debug_assert_eq!(stack.n, self.n);
        debug_assert_eq!(stack.k, self.k_blocks);
        let mut acc = 0.0;
        for j in 0..self.k_blocks {
            let fj = stack.f.rows(j * self.n, self.n);
            if self.rank1_weights[j] != 0.0 {
                let ip = self.h.dotc(&fj);
                acc += self.rank1_weights[j] * ip.norm_sqr();
            }
            if self.psd_weights[j] != 0.0 {
                let phi = self.psd.as_ref().expect("psd weight without psd matrix");
                acc += self.psd_weights[j] * (phi * fj).dotc(&fj).re;
            }
        }
        acc + self.ident * stack.f.norm_squared()
    }

    /// Matrix-vector product M f.
    pub fn apply(&self, stack: &PrecoderStack) -> DVector<C64> {
        let mut out = DVector::zeros(self.n * self.k_blocks);
        for j in 0..self.k_blocks {
            let fj = stack.f.rows(j * self.n, self.n);
            let mut block = fj.map(|x| x * C64::new(self.ident, 0.0));
            if self.rank1_weights[j] != 0.0 {
                let ip = self.h.dotc(&fj);
                block += self.h.map(|x| x * ip * C64::new(self.rank1_weights[j], 0.0));
            }
            if self.psd_weights[j] != 0.0 {
                let phi = self.psd.as_ref().unwrap();
                block += (phi * fj).map(|x| x * C64::new(self.psd_weights[j], 0.0));
            }
            out.rows_mut(j * self.n, self.n).copy_from(&block);
        }
        out
    }

    /// Adds `scale * block_j` of this matrix into each dense accumulator.
    pub fn accumulate(&self, scale: f64, blocks: &mut [DMatrix<C64>]) {
        for (j, blk) in blocks.iter_mut().enumerate() {
            let w = scale * self.rank1_weights[j];
            if w != 0.0 {
                let outer = &self.h * self.h.adjoint();
                *blk += outer * C64::new(w, 0.0);
            }
            let p = scale * self.psd_weights[j];
            if p != 0.0 {
                *blk += self.psd.as_ref().unwrap() * C64::new(p, 0.0);
            }
            let id = scale * self.ident;
            if id != 0.0 {
                for d in 0..self.n {
                    blk[(d, d)] += C64::new(id, 0.0);
                }
            }
        }
    }

    /// Dense NK x NK realization, for oracles and small-scale tests.
    pub fn dense(&self) -> DMatrix<C64> {
        let nk = self.n * self.k_blocks;
        let mut m = DMatrix::zeros(nk, nk);
        for j in 0..self.k_blocks {
            let mut blk = DMatrix::zeros(self.n, self.n);
            if self.rank1_weights[j] != 0.0 {
                blk += &self.h * self.h.adjoint() * C64::new(self.rank1_weights[j], 0.0);
            }
            if self.psd_weights[j] != 0.0 {
                blk += self.psd.as_ref().unwrap() * C64::new(self.psd_weights[j], 0.0);
            }
            for d in 0..self.n {
                blk[(d, d)] += C64::new(self.ident, 0.0);
            }
            m.view_mut((j * self.n, j * self.n), (self.n, self.n))
                .copy_from(&blk);
        }
        m
    }
}

/// A (numerator, denominator) pair of quadratic forms defining one Rayleigh
/// quotient.
#[derive(Debug, Clone)]
pub struct QuadFormPair {
    pub num: QuadForm,
    pub den: QuadForm,
}

impl QuadFormPair {
    /// log2 of the Rayleigh quotient; scale-invariant in the stack.
    pub fn rate(&self, stack: &PrecoderStack) -> f64 {
        (self.num.quad(stack) / self.den.quad(stack)).log2()
    }

    pub fn quotient(&self, stack: &PrecoderStack) -> f64 {
        self.num.quad(stack) / self.den.quad(stack)
    }
}

/// Exact achievable rate of message `k` at a user with channel `h`, assuming
/// SIC of messages below `k`: interference comes only from messages j > k.
pub fn user_rate(
    k: usize,
    h: &DVector<C64>,
    stack: &PrecoderStack,
    noise_ratio: f64,
) -> Result<f64> {
    if !stack.is_unit_norm() {
        return Err(HiaError::Contract(format!(
            "user_rate requires a unit-norm stack, got norm {}",
            stack.norm()
        )));
    }
    let signal = h.dotc(&stack.block(k)).norm_sqr();
    let mut interference = 0.0;
    for j in k + 1..stack.k {
        interference += h.dotc(&stack.block(j)).norm_sqr();
    }
    Ok((1.0 + signal / (interference + noise_ratio)).log2())
}

/// A/B effective-channel pair for message `k` and channel `h`: A has h h^H on
/// blocks k..K plus (sigma^2/P) I; B removes the block-k rank-1 term.
pub fn build_ab(k: usize, h: &DVector<C64>, n: usize, k_total: usize, noise_ratio: f64) -> QuadFormPair {
    let mut wa = vec![0.0; k_total];
    let mut wb = vec![0.0; k_total];
    for j in k..k_total {
        wa[j] = 1.0;
        if j > k {
            wb[j] = 1.0;
        }
    }
    QuadFormPair {
        num: QuadForm::rank1(n, k_total, h.clone(), wa, noise_ratio),
        den: QuadForm::rank1(n, k_total, h.clone(), wb, noise_ratio),
    }
}

/// C/D colluding-eavesdropper pair for message `k` and eavesdropper channel
/// `h`, where `gamma` is the total eavesdropper count for message `k`.
pub fn build_cd(
    k: usize,
    h: &DVector<C64>,
    gamma: usize,
    n: usize,
    k_total: usize,
    noise_ratio: f64,
) -> Result<QuadFormPair> {
    if k == 0 || gamma == 0 {
        return Err(HiaError::EmptyEavesdropperSet { k });
    }
    let g = gamma as f64;
    let mut wc = vec![0.0; k_total];
    wc[k] = g;
    for j in k + 1..k_total {
        wc[j] = 1.0;
    }
    let mut wd = vec![0.0; k_total];
    for j in k + 1..k_total {
        wd[j] = g;
    }
    Ok(QuadFormPair {
        num: QuadForm::rank1(n, k_total, h.clone(), wc, noise_ratio),
        den: QuadForm::rank1(n, k_total, h.clone(), wd, g * noise_ratio),
    })
}

/// Robust A/B pair under imperfect CSIT: the estimation error covariance
/// `phi` enters as extra additive noise on blocks k..K of both matrices.
pub fn build_ab_noma(
    k: usize,
    h_hat: &DVector<C64>,
    phi: &DMatrix<C64>,
    n: usize,
    k_total: usize,
    noise_ratio: f64,
) -> QuadFormPair {
    let mut wa = vec![0.0; k_total];
    let mut wb = vec![0.0; k_total];
    let mut wp = vec![0.0; k_total];
    for j in k..k_total {
        wa[j] = 1.0;
        wp[j] = 1.0;
        if j > k {
            wb[j] = 1.0;
        }
    }
    let mk = |rank1: Vec<f64>| QuadForm {
        n,
        k_blocks: k_total,
        h: h_hat.clone(),
        rank1_weights: rank1,
        psd: Some(phi.clone()),
        psd_weights: wp.clone(),
        ident: noise_ratio,
    };
    QuadFormPair {
        num: mk(wa),
        den: mk(wb),
    }
}

/// Exact clamped secrecy rate of message `k` against non-colluding
/// eavesdroppers: [min legitimate rate - max eavesdropper rate]^+.
pub fn secrecy_rate_nc(
    k: usize,
    channels: &[DVector<C64>],
    layers: &LayerAssignment,
    stack: &PrecoderStack,
    noise_ratio: f64,
) -> Result<f64> {
    let legit_min = layers
        .legitimate(k)
        .map(|u| user_rate(k, &channels[u], stack, noise_ratio))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let wiretap = layers
        .eavesdroppers(k)
        .map(|u| user_rate(k, &channels[u], stack, noise_ratio))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0_f64, f64::max);
    Ok((legit_min - wiretap).max(0.0))
}

/// Exact clamped secrecy rate of message `k` against colluding eavesdroppers:
/// the wiretap rate is log2(1 + sum of individual eavesdropper SINRs).
pub fn secrecy_rate_c(
    k: usize,
    channels: &[DVector<C64>],
    layers: &LayerAssignment,
    stack: &PrecoderStack,
    noise_ratio: f64,
) -> Result<f64> {
    if !stack.is_unit_norm() {
        return Err(HiaError::Contract(format!(
            "secrecy_rate_c requires a unit-norm stack, got norm {}",
            stack.norm()
        )));
    }
    let legit_min = layers
        .legitimate(k)
        .map(|u| user_rate(k, &channels[u], stack, noise_ratio))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let mut sinr_sum = 0.0;
    for u in layers.eavesdroppers(k) {
        let h = &channels[u];
        let signal = h.dotc(&stack.block(k)).norm_sqr();
        let mut interference = 0.0;
        for j in k + 1..stack.k {
            interference += h.dotc(&stack.block(j)).norm_sqr();
        }
        sinr_sum += signal / (interference + noise_ratio);
    }
    let wiretap = (1.0 + sinr_sum).log2();
    Ok((legit_min - wiretap).max(0.0))
}

/// Smoothed minimum: -(1/alpha) ln sum exp(-alpha x_i), with max-shift
/// stabilization. Lies in [min - ln(M)/alpha, min].
pub fn lse_min(values: &[f64], alpha: f64) -> Result<f64> {
    lse(values, alpha, true)
}

/// Smoothed maximum: (1/alpha) ln sum exp(alpha x_i).
pub fn lse_max(values: &[f64], alpha: f64) -> Result<f64> {
    lse(values, alpha, false)
}

fn lse(values: &[f64], alpha: f64, minimum: bool) -> Result<f64> {
    if values.is_empty() {
        return Err(HiaError::Domain("LSE over an empty list".into()));
    }
    if !(alpha > 0.0) {
        return Err(HiaError::Domain(format!("alpha must be > 0, got {alpha}")));
    }
    let sign = if minimum { -1.0 } else { 1.0 };
    let shift = values
        .iter()
        .map(|&x| sign * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = values.iter().map(|&x| (alpha * (sign * x - shift)).exp()).sum();
    Ok(sign * (shift + sum.ln() / alpha))
}

/// Normalized LSE weights exp(sign * alpha * x_i) / sum, the softmax terms
/// that appear in the first-order condition.
pub(crate) fn lse_weights(values: &[f64], alpha: f64, minimum: bool) -> Vec<f64> {
    let sign = if minimum { -1.0 } else { 1.0 };
    let shift = values
        .iter()
        .map(|&x| sign * x)
        .fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = values
        .iter()
        .map(|&x| (alpha * (sign * x - shift)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// Which wiretap model (if any) enters the smoothed objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WiretapModel {
    NonColluding,
    Colluding,
    /// No wiretap terms (the NOMA sum-rate reduction).
    None,
}

/// Evaluated per-message pieces of a smoothed objective. Shared between the
/// objective functions and the iteration-matrix builders so that the reported
/// eigenvalue is bit-identical to the objective.
pub(crate) struct TermEval {
    pub pair: QuadFormPair,
    pub a: f64,
    pub b: f64,
    pub rate: f64,
}

pub(crate) struct MessageEval {
    pub legit: Vec<TermEval>,
    /// Eavesdropper A/B terms (non-colluding) or C/D terms (colluding).
    pub eav: Vec<TermEval>,
    pub wiretap: WiretapModel,
    /// Smoothed secrecy term for this message, unweighted.
    pub lambda_k: f64,
}

fn eval_pair(pair: QuadFormPair, stack: &PrecoderStack) -> TermEval {
    let a = pair.num.quad(stack);
    let b = pair.den.quad(stack);
    TermEval {
        pair,
        a,
        b,
        rate: (a / b).log2(),
    }
}

pub(crate) fn eval_message(
    k: usize,
    channels: &[DVector<C64>],
    layers: &LayerAssignment,
    stack: &PrecoderStack,
    noise_ratio: f64,
    alpha: f64,
    wiretap: WiretapModel,
) -> Result<MessageEval> {
    let n = stack.n;
    let k_total = stack.k;
    let legit: Vec<TermEval> = layers
        .legitimate(k)
        .map(|u| eval_pair(build_ab(k, &channels[u], n, k_total, noise_ratio), stack))
        .collect();
    let legit_rates: Vec<f64> = legit.iter().map(|t| t.rate).collect();
    let mut lambda_k = lse_min(&legit_rates, alpha)?;

    let mut eav = Vec::new();
    if k > 0 && wiretap != WiretapModel::None {
        match wiretap {
            WiretapModel::NonColluding => {
                eav = layers
                    .eavesdroppers(k)
                    .map(|u| eval_pair(build_ab(k, &channels[u], n, k_total, noise_ratio), stack))
                    .collect();
                let rates: Vec<f64> = eav.iter().map(|t| t.rate).collect();
                lambda_k -= lse_max(&rates, alpha)?;
            }
            WiretapModel::Colluding => {
                let gamma = layers.gamma(k);
                eav = layers
                    .eavesdroppers(k)
                    .map(|u| {
                        build_cd(k, &channels[u], gamma, n, k_total, noise_ratio)
                            .map(|p| eval_pair(p, stack))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let quot_sum: f64 = eav.iter().map(|t| t.a / t.b).sum();
                lambda_k -= quot_sum.log2();
            }
            WiretapModel::None => unreachable!(),
        }
    }
    Ok(MessageEval {
        legit,
        eav,
        wiretap,
        lambda_k,
    })
}

pub(crate) fn eval_all_messages(
    channels: &[DVector<C64>],
    layers: &LayerAssignment,
    stack: &PrecoderStack,
    noise_ratio: f64,
    alpha: f64,
    wiretap: WiretapModel,
) -> Result<Vec<MessageEval>> {
    if stack.norm() == 0.0 {
        return Err(HiaError::Domain("zero precoder stack".into()));
    }
    (0..layers.n_layers())
        .map(|k| eval_message(k, channels, layers, stack, noise_ratio, alpha, wiretap))
        .collect()
}

/// Smoothed sum secrecy objective, non-colluding eavesdroppers.
pub fn objective_nc(
    stack: &PrecoderStack,
    channels: &[DVector<C64>],
    layers: &LayerAssignment,
    noise_ratio: f64,
    alpha: f64,
) -> Result<f64> {
    let terms = eval_all_messages(channels, layers, stack, noise_ratio, alpha, WiretapModel::NonColluding)?;
    Ok(terms.iter().map(|m| m.lambda_k).sum())
}

/// Smoothed sum secrecy objective, colluding eavesdroppers.
pub fn objective_c(
    stack: &PrecoderStack,
    channels: &[DVector<C64>],
    layers: &LayerAssignment,
    noise_ratio: f64,
    alpha: f64,
) -> Result<f64> {
    let terms = eval_all_messages(channels, layers, stack, noise_ratio, alpha, WiretapModel::Colluding)?;
    Ok(terms.iter().map(|m| m.lambda_k).sum())
}

/// Weighted smoothed objective with per-message weights 1/mu_k.
pub fn objective_pf(
    stack: &PrecoderStack,
    channels: &[DVector<C64>],
    layers: &LayerAssignment,
    noise_ratio: f64,
    alpha: f64,
    mu: &[f64],
    wiretap: WiretapModel,
) -> Result<f64> {
    if mu.len() != layers.n_layers() || mu.iter().any(|&m| !(m > 0.0)) {
        return Err(HiaError::Domain("pf weights must be positive, one per layer".into()));
    }
    let terms = eval_all_messages(channels, layers, stack, noise_ratio, alpha, wiretap)?;
    Ok(terms
        .iter()
        .zip(mu)
        .map(|(m, &mu_k)| m.lambda_k / mu_k)
        .sum())
}

pub(crate) fn eval_noma_messages(
    pairs_per_k: &[Vec<QuadFormPair>],
    stack: &PrecoderStack,
    alpha: f64,
) -> Result<Vec<MessageEval>> {
    if stack.norm() == 0.0 {
        return Err(HiaError::Domain("zero precoder stack".into()));
    }
    pairs_per_k
        .iter()
        .map(|pairs| {
            let legit: Vec<TermEval> = pairs
                .iter()
                .map(|p| eval_pair(p.clone(), stack))
                .collect();
            let rates: Vec<f64> = legit.iter().map(|t| t.rate).collect();
            let lambda_k = lse_min(&rates, alpha)?;
            Ok(MessageEval {
                legit,
                eav: Vec::new(),
                wiretap: WiretapModel::None,
                lambda_k,
            })
        })
        .collect()
}

/// Smoothed NOMA sum-rate lower-bound objective. `csit` holds one estimate
/// per user (singleton layers, decoding order 0..K-1).
pub fn objective_noma(
    stack: &PrecoderStack,
    csit: &[crate::channel::CsitEstimate],
    noise_ratio: f64,
    alpha: f64,
) -> Result<f64> {
    let pairs = noma_pairs(csit, stack.n, stack.k, noise_ratio)?;
    let terms = eval_noma_messages(&pairs, stack, alpha)?;
    Ok(terms.iter().map(|m| m.lambda_k).sum())
}

/// A/B-hat pairs for every (user i >= k, message k) in the NOMA reduction.
pub(crate) fn noma_pairs(
    csit: &[crate::channel::CsitEstimate],
    n: usize,
    k_total: usize,
    noise_ratio: f64,
) -> Result<Vec<Vec<QuadFormPair>>> {
    if csit.len() != k_total {
        return Err(HiaError::Config(format!(
            "NOMA requires one user per layer: {} estimates for {} layers",
            csit.len(),
            k_total
        )));
    }
    Ok((0..k_total)
        .map(|k| {
            (k..k_total)
                .map(|i| build_ab_noma(k, &csit[i].h_hat, &csit[i].error_cov, n, k_total, noise_ratio))
                .collect()
        })
        .collect())
}

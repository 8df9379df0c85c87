//! Ergodic capacity, the cut-set bound and the large-`K` closed forms.
//!
//! Ergodic values are Monte-Carlo means of the half-duplex sum rate
//! `(1/2) sum_m log2(1 + gamma_m)` over independent channel draws. Trial
//! `t` always uses channel stream `t` of the master seed, so a result is a
//! pure function of `(config, trials, seed)` no matter how many worker
//! threads run the trials, and sweeps over `e` reuse the same draws.
//!
//! The large-`K` forms replace the effective channel by its law-of-large-
//! numbers limit with a common average power factor per relay. MF-RZF
//! needs three eigenvalue moments of `G G^H`, estimated by sampling
//! ([`EigenSamples`]).

use rayon::prelude::*;
use thiserror::Error;

use crate::beamforming::{
    build_beamformer_unchecked, exact_power_factor, taylor_power_factor, BeamformerKind, ConfigError,
    NetworkConfig,
};
use crate::channel::{sample_cn01, ChannelRealization, Purpose, RngStream};
use crate::matrix::ComplexMatrix;
use crate::receiver::{conditional_snr, post_snr};

/// Fewest trials accepted by the Monte-Carlo estimators.
pub const MIN_TRIALS: usize = 100;
/// Fewest `G` draws accepted by [`EigenSamples::draw`].
pub const MIN_EIGEN_SAMPLES: usize = 1000;
/// Default number of `G` draws behind the MF-RZF eigenvalue moments.
pub const DEFAULT_EIGEN_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CapacityError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("at least {min} trials are required, got {got}")]
    TooFewTrials { min: usize, got: usize },
    #[error("MF-ZF needs N > M for its average power factor and large-K form (M = N = {0})")]
    ZfNeedsMoreRelayAntennas(usize),
    #[error("MF-RZF needs eigenvalue moments")]
    MissingEigenExpectations,
    #[error("eigenvalue moments were computed for alpha = {moments}, config has alpha = {config}")]
    AlphaMismatch { moments: f64, config: f64 },
    #[error("eigenvalue moments were computed for {moments:?} (M, N), config has {config:?}")]
    ShapeMismatch {
        moments: (usize, usize),
        config: (usize, usize),
    },
    #[error("the optimal regularizer needs at least one relay")]
    NoRelays,
}

/// Monte-Carlo capacity with a normal-approximation 95% interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CapacityEstimate {
    /// Bits per channel use.
    pub mean: f64,
    /// Half-width of the 95% confidence interval.
    pub half_width: f64,
    pub trials: usize,
    /// Trials with a near-singular or failed inversion.
    pub flagged_trials: usize,
}

impl CapacityEstimate {
    fn from_samples(samples: &[f64], flagged_trials: usize) -> Self {
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self {
            mean,
            half_width: 1.96 * (var / n).sqrt(),
            trials: samples.len(),
            flagged_trials,
        }
    }

    fn zero(trials: usize) -> Self {
        Self {
            mean: 0.0,
            half_width: 0.0,
            trials,
            flagged_trials: 0,
        }
    }
}

/// How each relay's power-control factor is chosen in the ergodic
/// simulation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum PowerControl {
    /// Exact factor of the beamformer built from `Ghat`: every relay meets
    /// its budget on every draw.
    #[default]
    Exact,
    /// Exact factor of the error-free beamformer (built from `G`).
    ErrorFree,
    /// First-order expansion of the exact factor in `e`.
    FirstOrder,
    /// The same factor for every relay and draw, e.g. from
    /// [`average_power_factor`].
    Fixed(f64),
}

struct TrialOutcome {
    rate: f64,
    flagged: bool,
}

impl TrialOutcome {
    const FAILED: TrialOutcome = TrialOutcome {
        rate: 0.0,
        flagged: true,
    };
}

fn check_trials(trials: usize) -> Result<(), CapacityError> {
    if trials < MIN_TRIALS {
        return Err(CapacityError::TooFewTrials {
            min: MIN_TRIALS,
            got: trials,
        });
    }
    Ok(())
}

fn trial_factors(
    kind: BeamformerKind,
    r: &ChannelRealization,
    config: &NetworkConfig,
    power: PowerControl,
    flagged: &mut bool,
) -> Option<Vec<f64>> {
    let mut rho = Vec::with_capacity(r.relays());
    for k in 0..r.relays() {
        let value = match power {
            PowerControl::Exact | PowerControl::ErrorFree => {
                let g = if power == PowerControl::Exact { &r.ghat[k] } else { &r.g[k] };
                let built = build_beamformer_unchecked(kind, &r.h[k], g, config.alpha).ok()?;
                *flagged |= built.near_singular();
                exact_power_factor(&built.f, &r.h[k], config).ok()?
            }
            PowerControl::FirstOrder => {
                taylor_power_factor(kind, &r.h[k], &r.g[k], &r.omega[k], config)
                    .ok()?
                    .rho_taylor
            }
            PowerControl::Fixed(value) => value,
        };
        if !(value > 0.0) || !value.is_finite() {
            return None;
        }
        rho.push(value);
    }
    Some(rho)
}

fn trial_rate(
    kind: BeamformerKind,
    config: &NetworkConfig,
    master_seed: u64,
    trial: u64,
    power: PowerControl,
) -> TrialOutcome {
    let r = ChannelRealization::for_trial(master_seed, trial, config.m, config.n, config.k, config.e);
    let mut flagged = false;
    let Some(rho) = trial_factors(kind, &r, config, power, &mut flagged) else {
        return TrialOutcome::FAILED;
    };
    match post_snr(kind, &r, &rho, config) {
        Ok(report) => {
            let rate = report.sum_rate();
            if rate.is_finite() {
                TrialOutcome {
                    rate,
                    flagged: flagged || report.flagged,
                }
            } else {
                TrialOutcome::FAILED
            }
        }
        Err(_) => TrialOutcome::FAILED,
    }
}

/// Ergodic capacity with exact per-relay power control.
pub fn ergodic_capacity(
    kind: BeamformerKind,
    config: &NetworkConfig,
    trials: usize,
    master_seed: u64,
) -> Result<CapacityEstimate, CapacityError> {
    ergodic_capacity_with(kind, config, trials, master_seed, PowerControl::Exact)
}

/// Ergodic capacity with a chosen power-control rule.
///
/// A trial whose Gram matrix cannot be factored contributes zero and is
/// flagged; one that factors with a condition estimate above the
/// singularity threshold is flagged but keeps its (large-noise) rate.
pub fn ergodic_capacity_with(
    kind: BeamformerKind,
    config: &NetworkConfig,
    trials: usize,
    master_seed: u64,
    power: PowerControl,
) -> Result<CapacityEstimate, CapacityError> {
    config.validate()?;
    check_trials(trials)?;
    if config.k == 0 {
        return Ok(CapacityEstimate::zero(trials));
    }
    let outcomes: Vec<TrialOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|t| trial_rate(kind, config, master_seed, t, power))
        .collect();
    let rates: Vec<f64> = outcomes.iter().map(|o| o.rate).collect();
    let flagged = outcomes.iter().filter(|o| o.flagged).count();
    Ok(CapacityEstimate::from_samples(&rates, flagged))
}

/// Ergodic rate of the actual relay chain: relays use their `Ghat`-based
/// beamformers with exact factors, while the destination's QRD detector is
/// built from the error-free effective channel. Each trial uses the exact
/// per-stream SINR of that mismatched chain ([`conditional_snr`]), so this
/// is the symbol-level oracle's capacity with the symbol noise averaged out.
pub fn exact_chain_capacity(
    kind: BeamformerKind,
    config: &NetworkConfig,
    trials: usize,
    master_seed: u64,
) -> Result<CapacityEstimate, CapacityError> {
    config.validate()?;
    check_trials(trials)?;
    if config.k == 0 {
        return Ok(CapacityEstimate::zero(trials));
    }
    let outcomes: Vec<TrialOutcome> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let r = ChannelRealization::for_trial(master_seed, t, config.m, config.n, config.k, config.e);
            match conditional_snr(kind, &r, config) {
                Ok(report) if report.sum_rate().is_finite() => TrialOutcome {
                    rate: report.sum_rate(),
                    flagged: report.flagged,
                },
                _ => TrialOutcome::FAILED,
            }
        })
        .collect();
    let rates: Vec<f64> = outcomes.iter().map(|o| o.rate).collect();
    let flagged = outcomes.iter().filter(|o| o.flagged).count();
    Ok(CapacityEstimate::from_samples(&rates, flagged))
}

/// Cut-set upper bound `(1/2) E[log2 det(I + (P/(M sigma1^2)) sum_k H_k^H H_k)]`,
/// evaluated on the same `H_k` draws as [`ergodic_capacity`].
pub fn cutset_upper_bound(
    config: &NetworkConfig,
    trials: usize,
    master_seed: u64,
) -> Result<CapacityEstimate, CapacityError> {
    config.validate()?;
    check_trials(trials)?;
    if config.k == 0 {
        return Ok(CapacityEstimate::zero(trials));
    }
    let snr = config.p / (config.m as f64 * config.sigma1_sq);
    let rates: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let r = ChannelRealization::for_trial(master_seed, t, config.m, config.n, config.k, 0.0);
            let mut s = ComplexMatrix::identity(config.m);
            for h in &r.h {
                s.add_scaled(snr, &h.adjoint_mul(h));
            }
            let l = s.cholesky().expect("identity plus a Gram matrix is positive definite");
            (0..config.m).map(|i| l[(i, i)].re.log2()).sum::<f64>()
        })
        .collect();
    Ok(CapacityEstimate::from_samples(&rates, 0))
}

/// Eigenvalues of sampled `G G^H` (`G`: `M x N`, i.i.d. CN(0,1)).
#[derive(Debug, Clone)]
pub struct EigenSamples {
    pub m: usize,
    pub n: usize,
    /// All eigenvalues of all draws, `M` per draw.
    pub values: Vec<f64>,
    pub draws: usize,
}

/// Eigenvalue moments for one regularizer `alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenExpectations {
    /// `E[lambda / (lambda + alpha)]`.
    pub m1: f64,
    /// `E[lambda / (lambda + alpha)^2]`.
    pub m2: f64,
    /// `E[lambda^2 / (lambda + alpha)^2]`.
    pub m3: f64,
    pub samples: usize,
    pub alpha: f64,
    pub m: usize,
    pub n: usize,
}

impl EigenSamples {
    pub fn draw(m: usize, n: usize, draws: usize, master_seed: u64) -> Result<Self, CapacityError> {
        if draws < MIN_EIGEN_SAMPLES {
            return Err(CapacityError::TooFewTrials {
                min: MIN_EIGEN_SAMPLES,
                got: draws,
            });
        }
        let per_draw: Vec<Vec<f64>> = (0..draws as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = RngStream::with_purpose(master_seed, i, Purpose::Eigen).rng();
                let g = sample_cn01(&mut rng, m, n);
                g.gram().hermitian_eig().expect("a Gram matrix is Hermitian").values
            })
            .collect();
        Ok(Self {
            m,
            n,
            values: per_draw.concat(),
            draws,
        })
    }

    /// Empirical moments at `alpha`, averaged over every sampled eigenvalue.
    pub fn expectations(&self, alpha: f64) -> EigenExpectations {
        let (mut s1, mut s2, mut s3) = (0.0, 0.0, 0.0);
        for &l in &self.values {
            let d = l + alpha;
            s1 += l / d;
            s2 += l / (d * d);
            s3 += l * l / (d * d);
        }
        let count = self.values.len() as f64;
        EigenExpectations {
            m1: s1 / count,
            m2: s2 / count,
            m3: s3 / count,
            samples: self.draws,
            alpha,
            m: self.m,
            n: self.n,
        }
    }
}

/// Eigenvalue moments at `config.alpha` from `samples` draws of `G`.
pub fn eigen_expectations(
    config: &NetworkConfig,
    samples: usize,
    master_seed: u64,
) -> Result<EigenExpectations, CapacityError> {
    Ok(EigenSamples::draw(config.m, config.n, samples, master_seed)?.expectations(config.alpha))
}

fn check_moments(config: &NetworkConfig, eig: Option<&EigenExpectations>) -> Result<EigenExpectations, CapacityError> {
    let eig = *eig.ok_or(CapacityError::MissingEigenExpectations)?;
    if (eig.m, eig.n) != (config.m, config.n) {
        return Err(CapacityError::ShapeMismatch {
            moments: (eig.m, eig.n),
            config: (config.m, config.n),
        });
    }
    if (eig.alpha - config.alpha).abs() > 1e-12 * config.alpha.max(1.0) {
        return Err(CapacityError::AlphaMismatch {
            moments: eig.alpha,
            config: config.alpha,
        });
    }
    Ok(eig)
}

/// Common power factor used by the large-`K` analysis:
///
/// * MF: `(Q / ((P(M+N) + M) N^2))^(1/2)`
/// * MF-ZF: `(Q (N-M) / (P(M+N) + M))^(1/2)`, needs `N > M`
/// * MF-RZF: `(Q / ((P(M+N)N + MN) E[lambda/(lambda+alpha)^2]))^(1/2)`
pub fn average_power_factor(
    kind: BeamformerKind,
    config: &NetworkConfig,
    eig: Option<&EigenExpectations>,
) -> Result<f64, CapacityError> {
    config.validate()?;
    let (m, n, p, q) = (config.m as f64, config.n as f64, config.p, config.q);
    match kind {
        BeamformerKind::Mf => Ok((q / ((p * (m + n) + m) * n * n)).sqrt()),
        BeamformerKind::MfZf => {
            if config.n == config.m {
                return Err(CapacityError::ZfNeedsMoreRelayAntennas(config.m));
            }
            Ok((q * (n - m) / (p * (m + n) + m)).sqrt())
        }
        BeamformerKind::MfRzf => {
            let eig = check_moments(config, eig)?;
            Ok((q / ((p * (m + n) * n + m * n) * eig.m2)).sqrt())
        }
    }
}

/// Large-`K` capacity in bits per channel use (`0` for `K = 0`).
///
/// With `c = (P M (M+N) + M^2) sigma2^2 / Q` the SINR of each stream is
///
/// * MF: `P K^2 N / ((e^2 P + sigma1^2) K M (M+N)/N + c/N)`
/// * MF-ZF: `P K^2 N / (e^2 P K M(M+N)/(N-M) + K M sigma1^2 + c/(N-M))`
/// * MF-RZF: `P K^2 N m1^2 / (e^2 P K M(M+N) m2 + K M m3 sigma1^2 + c m2)`
///
/// and the capacity is `(M/2) log2(1 + SINR)`.
pub fn asymptotic_capacity(
    kind: BeamformerKind,
    config: &NetworkConfig,
    eig: Option<&EigenExpectations>,
) -> Result<f64, CapacityError> {
    config.validate()?;
    if config.k == 0 {
        return Ok(0.0);
    }
    let (m, n, k, p) = (config.m as f64, config.n as f64, config.k as f64, config.p);
    let (s1, s2) = (config.sigma1_sq, config.sigma2_sq);
    let e_sq = config.e * config.e;
    let c = (p * m * (m + n) + m * m) * s2 / config.q;
    let sinr = match kind {
        BeamformerKind::Mf => p * k * k * n / ((e_sq * p + s1) * k * m * (m + n) / n + c / n),
        BeamformerKind::MfZf => {
            if config.n == config.m {
                return Err(CapacityError::ZfNeedsMoreRelayAntennas(config.m));
            }
            p * k * k * n / (e_sq * p * k * m * (m + n) / (n - m) + k * m * s1 + c / (n - m))
        }
        BeamformerKind::MfRzf => {
            let eig = check_moments(config, eig)?;
            p * k * k * n * eig.m1 * eig.m1
                / (e_sq * p * k * m * (m + n) * eig.m2 + k * m * eig.m3 * s1 + c * eig.m2)
        }
    };
    Ok(0.5 * m * (1.0 + sinr).log2())
}

/// Large-`K` MF-RZF capacity as a function of `alpha` alone, reusing one
/// set of eigenvalue samples.
pub fn asymptotic_rzf_capacity(config: &NetworkConfig, samples: &EigenSamples, alpha: f64) -> Result<f64, CapacityError> {
    let config = config.with_alpha(alpha).with_kind(BeamformerKind::MfRzf);
    asymptotic_capacity(BeamformerKind::MfRzf, &config, Some(&samples.expectations(alpha)))
}

/// Regularizer maximizing the large-`K` MF-RZF capacity:
/// `((P(M+N) + M) sigma2^2 / Q + e^2 P K (M+N)) / (K sigma1^2)`.
pub fn optimal_alpha(config: &NetworkConfig) -> Result<f64, CapacityError> {
    config.validate()?;
    if config.k == 0 {
        return Err(CapacityError::NoRelays);
    }
    let (m, n, k, p) = (config.m as f64, config.n as f64, config.k as f64, config.p);
    let e_sq = config.e * config.e;
    Ok(((p * (m + n) + m) / config.q * config.sigma2_sq + e_sq * p * k * (m + n)) / (k * config.sigma1_sq))
}

/// CSI error gain growing with the relay count, `sigma_q + K sigma_d`:
/// a quantization floor plus a per-relay feedback-delay term.
pub fn dynamic_error(k: usize, sigma_q: f64, sigma_d: f64) -> f64 {
    sigma_q + k as f64 * sigma_d
}

/// Monte-Carlo values of the Wishart moments behind the large-`K` forms,
/// each averaged over streams `m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WishartMoments {
    /// `E[tr((H^H H)^2) (G G^H)_mm]`.
    pub mf_error_term: f64,
    /// `E[(H^H H (G G^H)^2)_mm]`.
    pub mf_relay_term: f64,
    /// `E[tr((G G^H)^-1)]`; `NaN` when `N = M` draws make it unbounded.
    pub inverse_trace: f64,
    /// `E[((H^H H)^2)_mm]`.
    pub gram_square_diagonal: f64,
    pub samples: usize,
}

/// Estimates [`WishartMoments`] for one relay from `samples` draws.
pub fn wishart_moments(m: usize, n: usize, samples: usize, master_seed: u64) -> WishartMoments {
    let per_draw: Vec<[f64; 4]> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = RngStream::with_purpose(master_seed, i, Purpose::Scratch).rng();
            let h = sample_cn01(&mut rng, n, m);
            let g = sample_cn01(&mut rng, m, n);
            let hh = h.adjoint_mul(&h);
            let hh_sq = &hh * &hh;
            let ggh = g.gram();
            let mean_diag = |a: &ComplexMatrix| a.trace().re / m as f64;
            let inverse_trace = ggh.hermitian_pd_inverse().map_or(f64::NAN, |w| w.trace().re);
            [
                hh_sq.trace().re * mean_diag(&ggh),
                mean_diag(&(&hh * &(&ggh * &ggh))),
                inverse_trace,
                mean_diag(&hh_sq),
            ]
        })
        .collect();
    let mean = |j: usize| per_draw.iter().map(|d| d[j]).sum::<f64>() / samples as f64;
    WishartMoments {
        mf_error_term: mean(0),
        mf_relay_term: mean(1),
        inverse_trace: mean(2),
        gram_square_diagonal: mean(3),
        samples,
    }
}

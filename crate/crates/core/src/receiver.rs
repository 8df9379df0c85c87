//! Destination processing: effective channel, QR-based SIC and per-stream
//! SINR.
//!
//! After relay processing the destination sees `y = H_sd s + n`. It factors
//! `H_sd = Q R`, applies `Q^H`, and detects streams from the last to the
//! first by back-substitution. With the stream powers `P / M`, stream `m`
//! has signal power `(P/M) R_mm^2` and a noise floor made of three parts:
//! the channel-error-generated (CEG) term proportional to `e^2`, forwarded
//! relay noise, and destination noise.
//!
//! [`post_snr`] evaluates the closed-form SINR with the error term averaged
//! over the error direction. [`exact_snr_oracle`] measures the same
//! quantities by pushing symbols through the exact relay chain, which
//! includes the actual `Ghat`-based beamformers and exact power factors.

use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::beamforming::{
    build_beamformer_unchecked, exact_power_factor, BeamformerKind, BeamformingError, NetworkConfig,
};
use crate::channel::{cn01, ChannelRealization, RngStream};
use crate::matrix::{ComplexMatrix, MatrixError, C64, SINGULAR_CONDITION};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReceiverError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error(transparent)]
    Beamforming(#[from] BeamformingError),
    #[error("expected {expected} power factors, got {got}")]
    FactorCount { expected: usize, got: usize },
    #[error("power factor {index} is not positive ({value})")]
    NonPositiveFactor { index: usize, value: f64 },
    #[error("at least 1000 symbols are required, got {0}")]
    TooFewSymbols(usize),
}

/// Effective source-to-destination channel and its QR factors.
#[derive(Debug, Clone)]
pub struct EffectiveChannel {
    pub h_sd: ComplexMatrix,
    pub q_sd: ComplexMatrix,
    /// Upper triangular with real nonnegative diagonal.
    pub r_sd: ComplexMatrix,
    pub kind: BeamformerKind,
}

/// Per-stream SINR with its noise decomposition (all linear powers).
#[derive(Debug, Clone, PartialEq)]
pub struct StreamSnrReport {
    pub gamma: Vec<f64>,
    /// `(P/M) R_mm^2`.
    pub signal_power: Vec<f64>,
    /// Channel-error-generated noise.
    pub ceg_noise: Vec<f64>,
    /// Forwarded relay noise.
    pub relay_noise: Vec<f64>,
    /// Destination noise after the detector.
    pub dest_noise: Vec<f64>,
    /// Set when some Gram matrix inverted for this report had a condition
    /// estimate above the singularity threshold.
    pub flagged: bool,
}

impl StreamSnrReport {
    fn assemble(
        signal_power: Vec<f64>,
        ceg_noise: Vec<f64>,
        relay_noise: Vec<f64>,
        dest_noise: Vec<f64>,
        flagged: bool,
    ) -> Self {
        let gamma = signal_power
            .iter()
            .zip(&ceg_noise)
            .zip(&relay_noise)
            .zip(&dest_noise)
            .map(|(((s, c), r), d)| s / (c + r + d))
            .collect();
        Self {
            gamma,
            signal_power,
            ceg_noise,
            relay_noise,
            dest_noise,
            flagged,
        }
    }

    /// Half-duplex sum rate `(1/2) sum_m log2(1 + gamma_m)` in bits per
    /// channel use.
    pub fn sum_rate(&self) -> f64 {
        0.5 * self.gamma.iter().map(|g| (1.0 + g).log2()).sum::<f64>()
    }
}

/// Per-relay matrices shared by the effective channel and the SINR terms.
struct RelayTerms {
    /// `H^H H`.
    hh: ComplexMatrix,
    /// Left factor `L_k` with `H_sd = sum_k rho_k L_k H_k^H H_k`:
    /// `G G^H` (MF), `I` (MF-ZF), `I - alpha Ga` (MF-RZF).
    left: ComplexMatrix,
    /// CEG weight `tr((H^H H)^2 X)` with `X = I`, `(G G^H)^-1` or
    /// `Ga (I - alpha Ga)`.
    ceg_trace: f64,
    condition: f64,
}

fn relay_terms(
    kind: BeamformerKind,
    h: &ComplexMatrix,
    g: &ComplexMatrix,
    alpha: f64,
) -> Result<RelayTerms, MatrixError> {
    let hh = h.adjoint_mul(h);
    let hh_sq = &hh * &hh;
    let m = hh.rows();
    let ggh = g.gram();
    match kind {
        BeamformerKind::Mf => Ok(RelayTerms {
            ceg_trace: hh_sq.trace().re,
            left: ggh,
            hh,
            condition: 1.0,
        }),
        BeamformerKind::MfZf => {
            let (w, condition) = ggh.hermitian_pd_inverse_with_condition()?;
            Ok(RelayTerms {
                ceg_trace: hh_sq.trace_of_product(&w).re,
                left: ComplexMatrix::identity(m),
                hh,
                condition,
            })
        }
        BeamformerKind::MfRzf => {
            let (ga, condition) = ggh.add_diagonal(alpha).hermitian_pd_inverse_with_condition()?;
            let mut left = ComplexMatrix::identity(m);
            left.add_scaled(-alpha, &ga);
            let x = &ga * &left;
            Ok(RelayTerms {
                ceg_trace: hh_sq.trace_of_product(&x).re,
                left,
                hh,
                condition,
            })
        }
    }
}

fn check_factors(realization: &ChannelRealization, rho: &[f64]) -> Result<(), ReceiverError> {
    if rho.len() != realization.relays() {
        return Err(ReceiverError::FactorCount {
            expected: realization.relays(),
            got: rho.len(),
        });
    }
    if let Some((index, &value)) = rho.iter().enumerate().find(|(_, &r)| !(r > 0.0)) {
        return Err(ReceiverError::NonPositiveFactor { index, value });
    }
    Ok(())
}

fn assemble_channel(
    kind: BeamformerKind,
    terms: &[RelayTerms],
    rho: &[f64],
) -> Result<EffectiveChannel, ReceiverError> {
    let m = terms[0].hh.rows();
    let mut h_sd = ComplexMatrix::zeros(m, m);
    for (t, &r) in terms.iter().zip(rho) {
        h_sd.add_scaled(r, &(&t.left * &t.hh));
    }
    let qr = h_sd.qr()?;
    Ok(EffectiveChannel {
        h_sd,
        q_sd: qr.q,
        r_sd: qr.r,
        kind,
    })
}

/// Effective channel for factors `rho` (one per relay):
///
/// * MF: `sum_k rho_k G_k G_k^H H_k^H H_k`
/// * MF-ZF: `sum_k rho_k H_k^H H_k`
/// * MF-RZF: `sum_k rho_k (I - alpha Ga_k) H_k^H H_k`, `Ga_k = (G_k G_k^H + alpha I)^-1`
pub fn effective_channel(
    kind: BeamformerKind,
    realization: &ChannelRealization,
    rho: &[f64],
    alpha: f64,
) -> Result<EffectiveChannel, ReceiverError> {
    check_factors(realization, rho)?;
    let terms = realization
        .h
        .iter()
        .zip(&realization.g)
        .map(|(h, g)| relay_terms(kind, h, g, alpha))
        .collect::<Result<Vec<_>, _>>()?;
    assemble_channel(kind, &terms, rho)
}

/// Closed-form per-stream SINR for factors `rho`.
///
/// `gamma_m = (P/M) R_mm^2 / (ceg_m + relay_m + sigma2^2)` with
///
/// * `ceg_m = e^2 (P/M) sum_k rho_k^2 tr((H_k^H H_k)^2) ||(Q^H G_k)_m||^2` for MF,
///   and `e^2 (P/M) sum_k rho_k^2 tr((H_k^H H_k)^2 X_k)` for MF-ZF
///   (`X_k = (G_k G_k^H)^-1`) and MF-RZF (`X_k = Ga_k (I - alpha Ga_k)`);
/// * `relay_m = sigma1^2 sum_k rho_k^2 ||(Q^H L_k H_k^H)_m||^2` with the
///   scheme's left factor `L_k`.
pub fn post_snr(
    kind: BeamformerKind,
    realization: &ChannelRealization,
    rho: &[f64],
    config: &NetworkConfig,
) -> Result<StreamSnrReport, ReceiverError> {
    check_factors(realization, rho)?;
    let terms = realization
        .h
        .iter()
        .zip(&realization.g)
        .map(|(h, g)| relay_terms(kind, h, g, config.alpha))
        .collect::<Result<Vec<_>, _>>()?;
    let eff = assemble_channel(kind, &terms, rho)?;
    let m = config.m;
    let per_stream = config.p / m as f64;
    let e_sq = realization.e * realization.e;
    let q_adj = eff.q_sd.adjoint();

    let signal_power: Vec<f64> = (0..m).map(|i| per_stream * eff.r_sd[(i, i)].re.powi(2)).collect();
    let mut ceg = vec![0.0; m];
    let mut relay = vec![0.0; m];
    let mut flagged = false;
    for (k, t) in terms.iter().enumerate() {
        flagged |= t.condition > SINGULAR_CONDITION;
        let rho_sq = rho[k] * rho[k];
        let x = &(&q_adj * &t.left) * &realization.h[k].adjoint();
        for (i, r) in relay.iter_mut().enumerate() {
            *r += config.sigma1_sq * rho_sq * x.row_norm_sqr(i);
        }
        if e_sq == 0.0 {
            continue;
        }
        match kind {
            BeamformerKind::Mf => {
                let qg = &q_adj * &realization.g[k];
                for (i, c) in ceg.iter_mut().enumerate() {
                    *c += e_sq * per_stream * rho_sq * t.ceg_trace * qg.row_norm_sqr(i);
                }
            }
            BeamformerKind::MfZf | BeamformerKind::MfRzf => {
                for c in ceg.iter_mut() {
                    *c += e_sq * per_stream * rho_sq * t.ceg_trace;
                }
            }
        }
    }
    Ok(StreamSnrReport::assemble(
        signal_power,
        ceg,
        relay,
        vec![config.sigma2_sq; m],
        flagged,
    ))
}

/// Applies the QRD detector: returns `Q_sd^H y`.
pub fn qrd_detect(eff: &EffectiveChannel, y: &[C64]) -> Vec<C64> {
    eff.q_sd.adjoint().mul_vec(y)
}

/// Successive interference cancellation on a detected vector `Q^H y`:
/// solves `R s = y_tilde` from the last stream to the first.
pub fn back_substitute(eff: &EffectiveChannel, y_tilde: &[C64]) -> Vec<C64> {
    let r = &eff.r_sd;
    let m = r.rows();
    let mut s = vec![C64::new(0.0, 0.0); m];
    for i in (0..m).rev() {
        let mut acc = y_tilde[i];
        for j in i + 1..m {
            acc -= r[(i, j)] * s[j];
        }
        s[i] = acc / r[(i, i)];
    }
    s
}

/// Factors `(Q / tr{F A F^H})^(1/2)` of the error-free beamformers, built
/// from the true `G_k`.
pub fn error_free_factors(
    kind: BeamformerKind,
    realization: &ChannelRealization,
    config: &NetworkConfig,
) -> Result<Vec<f64>, ReceiverError> {
    factors_for(kind, &realization.h, &realization.g, config)
}

/// Exact factors of the beamformers the relays actually use, built from
/// `Ghat_k`.
pub fn exact_factors(
    kind: BeamformerKind,
    realization: &ChannelRealization,
    config: &NetworkConfig,
) -> Result<Vec<f64>, ReceiverError> {
    factors_for(kind, &realization.h, &realization.ghat, config)
}

fn factors_for(
    kind: BeamformerKind,
    h: &[ComplexMatrix],
    g: &[ComplexMatrix],
    config: &NetworkConfig,
) -> Result<Vec<f64>, ReceiverError> {
    h.iter()
        .zip(g)
        .map(|(h, g)| {
            let f = build_beamformer_unchecked(kind, h, g, config.alpha)?.f;
            Ok(exact_power_factor(&f, h, config)?)
        })
        .collect()
}

/// Oracle SINR estimate with its Monte-Carlo standard errors.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub report: StreamSnrReport,
    /// One-sigma standard error of each `gamma_m` estimate.
    pub gamma_std_error: Vec<f64>,
    pub symbols: usize,
}

/// Exact relay chain for one realization: what the destination receives
/// and what its detector assumes.
struct ExactChain {
    /// `Q^H sum_k rho_hat_k G_k F_k H_k - R`, the part of the detected signal
    /// that SIC does not model.
    mismatch: ComplexMatrix,
    /// `Q^H rho_hat_k G_k F_k`, mapping relay noise to the detector output.
    relay_maps: Vec<ComplexMatrix>,
    q_adj: ComplexMatrix,
    r_diag: Vec<f64>,
    flagged: bool,
}

fn exact_chain(
    kind: BeamformerKind,
    realization: &ChannelRealization,
    config: &NetworkConfig,
) -> Result<ExactChain, ReceiverError> {
    let m = config.m;
    let mut h_true = ComplexMatrix::zeros(m, m);
    let mut forward = Vec::with_capacity(realization.relays());
    let mut flagged = false;
    for k in 0..realization.relays() {
        let built = build_beamformer_unchecked(kind, &realization.h[k], &realization.ghat[k], config.alpha)?;
        flagged |= built.near_singular();
        let rho_hat = exact_power_factor(&built.f, &realization.h[k], config)?;
        let b = (&realization.g[k] * &built.f).scale(rho_hat);
        h_true.add_scaled(1.0, &(&b * &realization.h[k]));
        forward.push(b);
    }
    let rho = error_free_factors(kind, realization, config)?;
    let eff = effective_channel(kind, realization, &rho, config.alpha)?;
    let q_adj = eff.q_sd.adjoint();
    let mismatch = &(&q_adj * &h_true) - &eff.r_sd;
    let relay_maps = forward.iter().map(|b| &q_adj * b).collect();
    let r_diag = (0..m).map(|i| eff.r_sd[(i, i)].re).collect();
    Ok(ExactChain {
        mismatch,
        relay_maps,
        q_adj,
        r_diag,
        flagged,
    })
}

/// Limit of [`exact_snr_oracle`] as the number of symbols grows: the SINR
/// of each stream on this realization with the error, relay noise and
/// destination noise contributions evaluated exactly instead of sampled.
pub fn conditional_snr(
    kind: BeamformerKind,
    realization: &ChannelRealization,
    config: &NetworkConfig,
) -> Result<StreamSnrReport, ReceiverError> {
    let chain = exact_chain(kind, realization, config)?;
    let m = config.m;
    let per_stream = config.p / m as f64;
    let signal = chain.r_diag.iter().map(|r| per_stream * r * r).collect();
    let ceg = (0..m).map(|i| per_stream * chain.mismatch.row_norm_sqr(i)).collect();
    let relay = (0..m)
        .map(|i| {
            chain
                .relay_maps
                .iter()
                .map(|c| config.sigma1_sq * c.row_norm_sqr(i))
                .sum()
        })
        .collect();
    let dest = (0..m).map(|i| config.sigma2_sq * chain.q_adj.row_norm_sqr(i)).collect();
    Ok(StreamSnrReport::assemble(signal, ceg, relay, dest, chain.flagged))
}

/// Symbol-level SINR measurement on one realization.
///
/// Simulates `y = sum_k rho_hat_k G_k F_k (H_k s + n_k) + n_d` with the
/// relays' actual `Ghat`-based beamformers and exact power factors. The
/// detector is the QRD of the approximated effective channel built with the
/// error-free factors, so any mismatch between the two shows up as residual
/// noise. For each stream the residual
/// `(Q^H y)_m - R_mm s_m - sum_{j>m} R_mj s_j` is split into its
/// error-generated, relay-noise and destination-noise parts, whose
/// empirical powers fill the report. The signal gain is `R_mm`, the gain
/// SIC assumes.
pub fn exact_snr_oracle(
    kind: BeamformerKind,
    realization: &ChannelRealization,
    config: &NetworkConfig,
    symbol_trials: usize,
    stream: RngStream,
) -> Result<OracleReport, ReceiverError> {
    if symbol_trials < 1000 {
        return Err(ReceiverError::TooFewSymbols(symbol_trials));
    }
    let chain = exact_chain(kind, realization, config)?;
    let m = config.m;
    let n = config.n;
    let s_amp = (config.p / m as f64).sqrt();
    let n1_amp = config.sigma1_sq.sqrt();
    let n2_amp = config.sigma2_sq.sqrt();
    let mut rng: ChaCha8Rng = stream.rng();

    let mut ceg = vec![0.0; m];
    let mut relay = vec![0.0; m];
    let mut dest = vec![0.0; m];
    let mut total_sq = vec![0.0; m];
    let mut s = vec![C64::new(0.0, 0.0); m];
    let mut noise = vec![C64::new(0.0, 0.0); n];
    let mut nd = vec![C64::new(0.0, 0.0); m];
    let mut b = vec![C64::new(0.0, 0.0); m];

    for _ in 0..symbol_trials {
        for x in s.iter_mut() {
            *x = cn01(&mut rng) * s_amp;
        }
        b.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
        for map in &chain.relay_maps {
            for x in noise.iter_mut() {
                *x = cn01(&mut rng) * n1_amp;
            }
            for (i, bi) in b.iter_mut().enumerate() {
                *bi += map.row(i).iter().zip(&noise).map(|(c, z)| c * z).sum::<C64>();
            }
        }
        for x in nd.iter_mut() {
            *x = cn01(&mut rng) * n2_amp;
        }
        for i in 0..m {
            let a: C64 = chain.mismatch.row(i).iter().zip(&s).map(|(c, z)| c * z).sum();
            let c: C64 = chain.q_adj.row(i).iter().zip(&nd).map(|(c, z)| c * z).sum();
            let (pa, pb, pc) = (a.norm_sqr(), b[i].norm_sqr(), c.norm_sqr());
            ceg[i] += pa;
            relay[i] += pb;
            dest[i] += pc;
            let total = pa + pb + pc;
            total_sq[i] += total * total;
        }
    }

    let t = symbol_trials as f64;
    let per_stream = config.p / m as f64;
    let signal: Vec<f64> = chain.r_diag.iter().map(|r| per_stream * r * r).collect();
    let ceg: Vec<f64> = ceg.iter().map(|x| x / t).collect();
    let relay: Vec<f64> = relay.iter().map(|x| x / t).collect();
    let dest: Vec<f64> = dest.iter().map(|x| x / t).collect();
    let report = StreamSnrReport::assemble(signal, ceg, relay, dest, chain.flagged);
    let gamma_std_error = (0..m)
        .map(|i| {
            let mean = report.ceg_noise[i] + report.relay_noise[i] + report.dest_noise[i];
            let var = (total_sq[i] / t - mean * mean).max(0.0);
            let se_noise = (var / t).sqrt();
            report.gamma[i] * se_noise / mean
        })
        .collect();
    Ok(OracleReport {
        report,
        gamma_std_error,
        symbols: symbol_trials,
    })
}

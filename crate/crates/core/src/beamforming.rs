//! Relay beamformers and their power-control factors.
//!
//! Each relay `k` forwards `rho_k F_k r_k`, where `F_k` combines a matched
//! filter for its source-to-relay channel `H_k` with a matched filter,
//! zero-forcing, or regularized zero-forcing precoder built from the
//! imperfect relay-to-destination estimate `Ghat_k`:
//!
//! | kind   | `F_k`                                     |
//! |--------|-------------------------------------------|
//! | MF     | `Ghat^H H^H`                              |
//! | MF-ZF  | `Ghat^H (Ghat Ghat^H)^-1 H^H`             |
//! | MF-RZF | `Ghat^H (Ghat Ghat^H + alpha I_M)^-1 H^H` |
//!
//! The power-control factor scales `F_k` so that the relay transmit power
//! `tr{F ((P/M) H H^H + sigma1^2 I_N) F^H}` equals the budget `Q`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{ComplexMatrix, MatrixError, SINGULAR_CONDITION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BeamformerKind {
    #[serde(rename = "MF")]
    Mf,
    #[serde(rename = "MF-ZF")]
    MfZf,
    #[serde(rename = "MF-RZF")]
    MfRzf,
}

impl BeamformerKind {
    pub const ALL: [BeamformerKind; 3] = [BeamformerKind::Mf, BeamformerKind::MfZf, BeamformerKind::MfRzf];

    pub fn label(self) -> &'static str {
        match self {
            BeamformerKind::Mf => "MF",
            BeamformerKind::MfZf => "MF-ZF",
            BeamformerKind::MfRzf => "MF-RZF",
        }
    }
}

impl fmt::Display for BeamformerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BeamformerKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "MF" => Ok(BeamformerKind::Mf),
            "MF-ZF" => Ok(BeamformerKind::MfZf),
            "MF-RZF" => Ok(BeamformerKind::MfRzf),
            other => Err(ConfigError::UnknownScheme(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("relay antennas N = {n} must be at least source antennas M = {m}")]
    TooFewRelayAntennas { m: usize, n: usize },
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be nonnegative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("antenna counts must be at least 1 (M = {m}, N = {n})")]
    NoAntennas { m: usize, n: usize },
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeamformingError {
    #[error(transparent)]
    Matrix(#[from] MatrixError),
    #[error("beamformer has zero transmit power")]
    DegenerateBeamformer,
}

/// Scalars describing one network operating point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Antennas at the source and at the destination.
    pub m: usize,
    /// Antennas per relay.
    pub n: usize,
    /// Number of relays.
    pub k: usize,
    /// Total source power (linear).
    pub p: f64,
    /// Per-relay power budget (linear).
    pub q: f64,
    /// Relay noise power.
    pub sigma1_sq: f64,
    /// Destination noise power.
    pub sigma2_sq: f64,
    /// CSI error gain; the error power is `e^2`.
    pub e: f64,
    /// Regularizer shared by all MF-RZF relays.
    pub alpha: f64,
    pub kind: BeamformerKind,
}

impl NetworkConfig {
    /// Unit-noise configuration with `P` and `Q` set from PNR and QNR in dB.
    pub fn from_db(m: usize, n: usize, k: usize, pnr_db: f64, qnr_db: f64) -> Self {
        Self {
            m,
            n,
            k,
            p: db_to_linear(pnr_db),
            q: db_to_linear(qnr_db),
            sigma1_sq: 1.0,
            sigma2_sq: 1.0,
            e: 0.0,
            alpha: 0.0,
            kind: BeamformerKind::Mf,
        }
    }

    pub fn with_kind(self, kind: BeamformerKind) -> Self {
        Self { kind, ..self }
    }

    pub fn with_error(self, e: f64) -> Self {
        Self { e, ..self }
    }

    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn with_relays(self, k: usize) -> Self {
        Self { k, ..self }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.m == 0 || self.n == 0 {
            return Err(ConfigError::NoAntennas { m: self.m, n: self.n });
        }
        if self.n < self.m {
            return Err(ConfigError::TooFewRelayAntennas { m: self.m, n: self.n });
        }
        for (name, value) in [
            ("P", self.p),
            ("Q", self.q),
            ("sigma1_sq", self.sigma1_sq),
            ("sigma2_sq", self.sigma2_sq),
        ] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ConfigError::NotPositive { name, value });
            }
        }
        for (name, value) in [("e", self.e), ("alpha", self.alpha)] {
            if !(value >= 0.0) || !value.is_finite() {
                return Err(ConfigError::Negative { name, value });
            }
        }
        Ok(())
    }

    /// `P / sigma1^2` in dB.
    pub fn pnr_db(&self) -> f64 {
        linear_to_db(self.p / self.sigma1_sq)
    }

    /// `Q / sigma2^2` in dB.
    pub fn qnr_db(&self) -> f64 {
        linear_to_db(self.q / self.sigma2_sq)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Beamforming matrix together with the condition number of the matrix
/// inverted to build it (1 for MF).
#[derive(Debug, Clone)]
pub struct BuiltBeamformer {
    pub f: ComplexMatrix,
    pub condition: f64,
}

impl BuiltBeamformer {
    /// True when the inverted Gram matrix is beyond [`SINGULAR_CONDITION`].
    pub fn near_singular(&self) -> bool {
        self.condition > SINGULAR_CONDITION
    }
}

/// `F_k` for `kind` from `H_k` (`N x M`) and `Ghat_k` (`M x N`).
///
/// MF-ZF fails with a singular-matrix error when `Ghat Ghat^H` has a
/// condition estimate above [`SINGULAR_CONDITION`].
pub fn build_beamformer(
    kind: BeamformerKind,
    h: &ComplexMatrix,
    ghat: &ComplexMatrix,
    alpha: f64,
) -> Result<ComplexMatrix, BeamformingError> {
    let built = build_beamformer_unchecked(kind, h, ghat, alpha)?;
    if built.near_singular() {
        return Err(MatrixError::Singular {
            condition: built.condition,
        }
        .into());
    }
    Ok(built.f)
}

/// Like [`build_beamformer`] but reports the condition number instead of
/// rejecting ill-conditioned inverses. Only a failed factorization is an
/// error.
pub fn build_beamformer_unchecked(
    kind: BeamformerKind,
    h: &ComplexMatrix,
    ghat: &ComplexMatrix,
    alpha: f64,
) -> Result<BuiltBeamformer, BeamformingError> {
    check_shapes(h, ghat)?;
    let h_adj = h.adjoint();
    match kind {
        BeamformerKind::Mf => Ok(BuiltBeamformer {
            f: ghat.adjoint_mul(&h_adj),
            condition: 1.0,
        }),
        BeamformerKind::MfZf | BeamformerKind::MfRzf => {
            let reg = if kind == BeamformerKind::MfZf { 0.0 } else { alpha };
            let gram = ghat.gram().add_diagonal(reg);
            let (inv, condition) = gram.hermitian_pd_inverse_with_condition()?;
            let f = ghat.adjoint_mul(&(&inv * &h_adj));
            Ok(BuiltBeamformer { f, condition })
        }
    }
}

fn check_shapes(h: &ComplexMatrix, ghat: &ComplexMatrix) -> Result<(), MatrixError> {
    let (n, m) = h.shape();
    if ghat.shape() != (m, n) {
        return Err(MatrixError::DimensionMismatch {
            expected: format!("Ghat {m}x{n} to match H {n}x{m}"),
            got: format!("Ghat {}x{}", ghat.rows(), ghat.cols()),
        });
    }
    Ok(())
}

/// Relay transmit power `tr{F ((P/M) H H^H + sigma1^2 I_N) F^H}`.
pub fn relay_output_power(f: &ComplexMatrix, h: &ComplexMatrix, config: &NetworkConfig) -> f64 {
    let fh = f * h;
    config.p / config.m as f64 * fh.frobenius_norm_sqr() + config.sigma1_sq * f.frobenius_norm_sqr()
}

/// Factor `(Q / relay_output_power(F))^(1/2)` that meets the relay budget
/// exactly.
pub fn exact_power_factor(
    f: &ComplexMatrix,
    h: &ComplexMatrix,
    config: &NetworkConfig,
) -> Result<f64, BeamformingError> {
    let power = relay_output_power(f, h, config);
    if !(power > 0.0) || !power.is_finite() {
        return Err(BeamformingError::DegenerateBeamformer);
    }
    Ok((config.q / power).sqrt())
}

/// Error-free and first-order pieces of the power-control factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerFactorBreakdown {
    /// Exact factor for the beamformer built from `Ghat`.
    pub rho_exact: f64,
    /// Factor for the error-free beamformer, `(Q / u)^(1/2)`.
    pub rho_zero: f64,
    /// Error-free transmit power `u_k`.
    pub u: f64,
    /// First-order sensitivity `v_k` of the transmit power to the error.
    pub v: f64,
    /// `rho_zero (1 -+ e v / (2 u))`, minus for MF and plus for MF-ZF and
    /// MF-RZF.
    pub rho_taylor: f64,
}

/// First-order expansion of the power-control factor in the error gain `e`.
///
/// With `B = H^H ((P/M) H H^H + sigma1^2 I) H` and `Ge = G Omega^H + Omega G^H`:
///
/// * MF: `u = tr(B G G^H)`, `v = tr(B Ge)`, transmit power `u + e v + O(e^2)`.
/// * MF-ZF: `u = tr(B W)`, `v = tr(B W Ge W)` with `W = (G G^H)^-1`,
///   transmit power `u - e v + O(e^2)`.
/// * MF-RZF: with `Ga = (G G^H + alpha I)^-1`,
///   `u = tr(B (Ga - alpha Ga^2))` and
///   `v = tr(B Ga (Ge Ga G G^H + G G^H Ga Ge - Ge) Ga)`,
///   transmit power `u - e v + O(e^2)`.
pub fn taylor_power_factor(
    kind: BeamformerKind,
    h: &ComplexMatrix,
    g: &ComplexMatrix,
    omega: &ComplexMatrix,
    config: &NetworkConfig,
) -> Result<PowerFactorBreakdown, BeamformingError> {
    check_shapes(h, g)?;
    let m = config.m;
    let e = config.e;
    let hh = h.adjoint_mul(h);
    // B = (P/M) (H^H H)^2 + sigma1^2 H^H H
    let mut b = (&hh * &hh).scale(config.p / m as f64);
    b.add_scaled(config.sigma1_sq, &hh);
    let ggh = g.gram();
    let ge = &g.mul_adjoint(omega) + &omega.mul_adjoint(g);

    let (u, v, sign) = match kind {
        BeamformerKind::Mf => (b.trace_of_product(&ggh).re, b.trace_of_product(&ge).re, -1.0),
        BeamformerKind::MfZf => {
            let w = ggh.hermitian_pd_inverse()?;
            let u = b.trace_of_product(&w).re;
            let v = b.trace_of_product(&(&(&w * &ge) * &w)).re;
            (u, v, 1.0)
        }
        BeamformerKind::MfRzf => {
            let ga = ggh.add_diagonal(config.alpha).hermitian_pd_inverse()?;
            let ga2 = &ga * &ga;
            let mut core = ga.clone();
            core.add_scaled(-config.alpha, &ga2);
            let u = b.trace_of_product(&core).re;
            let inner = &(&(&ge * &ga) * &ggh) + &(&(&ggh * &ga) * &ge);
            let inner = &inner - &ge;
            let v = b.trace_of_product(&(&(&ga * &inner) * &ga)).re;
            (u, v, 1.0)
        }
    };
    if !(u > 0.0) {
        return Err(BeamformingError::DegenerateBeamformer);
    }
    let rho_zero = (config.q / u).sqrt();
    let rho_taylor = rho_zero * (1.0 + sign * e * v / (2.0 * u));
    let ghat = {
        let mut x = g.clone();
        x.add_scaled(e, omega);
        x
    };
    let f = build_beamformer_unchecked(kind, h, &ghat, config.alpha)?.f;
    let rho_exact = exact_power_factor(&f, h, config)?;
    Ok(PowerFactorBreakdown {
        rho_exact,
        rho_zero,
        u,
        v,
        rho_taylor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_cn01, ChannelRealization, Purpose, RngStream};

    fn config() -> NetworkConfig {
        NetworkConfig::from_db(4, 6, 1, 10.0, 10.0)
    }

    #[test]
    fn rzf_at_zero_alpha_is_zf() {
        for t in 0..20 {
            let r = ChannelRealization::for_trial(1, t, 4, 6, 1, 0.1);
            let zf = build_beamformer(BeamformerKind::MfZf, &r.h[0], &r.ghat[0], 0.0).unwrap();
            let rzf = build_beamformer(BeamformerKind::MfRzf, &r.h[0], &r.ghat[0], 0.0).unwrap();
            assert!((&zf - &rzf).max_abs() < 1e-12);
        }
    }

    #[test]
    fn mf_identity_case() {
        let i = ComplexMatrix::identity(3);
        let f = build_beamformer(BeamformerKind::Mf, &i, &i, 0.0).unwrap();
        assert_eq!(f, i);
    }

    #[test]
    fn zf_rejects_rank_deficient_estimate() {
        let h = ComplexMatrix::identity(2);
        let ghat = ComplexMatrix::from_real(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(build_beamformer(BeamformerKind::MfZf, &h, &ghat, 0.0).is_err());
        assert!(build_beamformer(BeamformerKind::MfRzf, &h, &ghat, 0.5).is_ok());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let h = ComplexMatrix::zeros(6, 4);
        let ghat = ComplexMatrix::zeros(6, 4);
        assert!(matches!(
            build_beamformer(BeamformerKind::Mf, &h, &ghat, 0.0),
            Err(BeamformingError::Matrix(MatrixError::DimensionMismatch { .. }))
        ));
    }

    #[test]
    fn exact_factor_closes_power_budget() {
        let cfg = config();
        for kind in BeamformerKind::ALL {
            for t in 0..20 {
                let r = ChannelRealization::for_trial(2, t, 4, 6, 1, 0.1);
                let f = build_beamformer(kind, &r.h[0], &r.ghat[0], 0.5).unwrap();
                let rho = exact_power_factor(&f, &r.h[0], &cfg).unwrap();
                let power = relay_output_power(&f.scale(rho), &r.h[0], &cfg);
                assert!((power - cfg.q).abs() < 1e-9 * cfg.q, "{kind}: {power}");
            }
        }
    }

    #[test]
    fn factor_scaling_and_degenerate_cases() {
        let cfg = config();
        let r = ChannelRealization::for_trial(3, 0, 4, 6, 1, 0.0);
        let f = build_beamformer(BeamformerKind::Mf, &r.h[0], &r.ghat[0], 0.0).unwrap();
        let rho = exact_power_factor(&f, &r.h[0], &cfg).unwrap();
        let doubled = NetworkConfig { q: 2.0 * cfg.q, ..cfg };
        let rho2 = exact_power_factor(&f, &r.h[0], &doubled).unwrap();
        assert!((rho2 / rho - 2f64.sqrt()).abs() < 1e-12);

        let zero = ComplexMatrix::zeros(6, 6);
        assert_eq!(relay_output_power(&zero, &r.h[0], &cfg), 0.0);
        assert_eq!(
            exact_power_factor(&zero, &r.h[0], &cfg),
            Err(BeamformingError::DegenerateBeamformer)
        );

        let unit = NetworkConfig {
            m: 4,
            n: 4,
            p: 1.0,
            q: 4.0,
            sigma1_sq: 1.0,
            ..cfg
        };
        let rho = exact_power_factor(&ComplexMatrix::identity(4), &ComplexMatrix::zeros(4, 4), &unit).unwrap();
        assert!((rho - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_channel_output_power() {
        // sigma1^2 -> 0 limit is not a valid config, so evaluate the formula
        // with an explicit zero: tr(H H^H) = N when H H^H = I_N.
        let cfg = NetworkConfig {
            m: 3,
            n: 3,
            p: 3.0,
            sigma1_sq: 0.0,
            ..config()
        };
        let power = relay_output_power(&ComplexMatrix::identity(3), &ComplexMatrix::identity(3), &cfg);
        assert!((power - 3.0).abs() < 1e-15);
    }

    #[test]
    fn taylor_error_free_limit() {
        let cfg = config().with_alpha(0.5);
        for kind in BeamformerKind::ALL {
            let r = ChannelRealization::for_trial(4, 0, 4, 6, 1, 0.0);
            let b = taylor_power_factor(kind, &r.h[0], &r.g[0], &r.omega[0], &cfg).unwrap();
            assert!((b.rho_taylor - b.rho_zero).abs() < 1e-12 * b.rho_zero);
            assert!((b.rho_taylor - b.rho_exact).abs() < 1e-9 * b.rho_exact, "{kind}");
            assert!((b.rho_zero - (cfg.q / b.u).sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn taylor_remainder_is_second_order() {
        let base = config().with_alpha(0.5);
        for kind in BeamformerKind::ALL {
            let mut ratios = Vec::new();
            for t in 0..100 {
                let r = ChannelRealization::for_trial(5, t, 4, 6, 1, 0.0);
                let gap = |e: f64| {
                    let b = taylor_power_factor(kind, &r.h[0], &r.g[0], &r.omega[0], &base.with_error(e)).unwrap();
                    (b.rho_taylor - b.rho_exact).abs() / b.rho_exact
                };
                ratios.push(gap(0.05) / gap(0.1));
            }
            ratios.sort_by(f64::total_cmp);
            let median = ratios[ratios.len() / 2];
            assert!((median - 0.25).abs() < 0.05, "{kind}: median ratio {median}");
            assert!(median <= 1.0 / 3.0);
        }
    }

    #[test]
    fn rzf_error_free_factor_grows_with_alpha() {
        let mut rng = RngStream::with_purpose(6, 0, Purpose::Scratch).rng();
        let h = sample_cn01(&mut rng, 6, 4);
        let g = sample_cn01(&mut rng, 4, 6);
        let omega = sample_cn01(&mut rng, 4, 6);
        let mut previous = 0.0;
        for alpha in [0.0, 0.1, 1.0, 10.0, 100.0, 1e4, 1e6] {
            let cfg = config().with_alpha(alpha);
            let b = taylor_power_factor(BeamformerKind::MfRzf, &h, &g, &omega, &cfg).unwrap();
            assert!(b.rho_zero > previous, "alpha {alpha}");
            previous = b.rho_zero;
        }
        // Large alpha: Ga -> I / alpha, u -> tr(B G G^H) / alpha^2.
        let cfg = config().with_alpha(1e6);
        let b = taylor_power_factor(BeamformerKind::MfRzf, &h, &g, &omega, &cfg).unwrap();
        let mf = taylor_power_factor(BeamformerKind::Mf, &h, &g, &omega, &cfg).unwrap();
        assert!((b.u * 1e12 / mf.u - 1.0).abs() < 1e-4);
    }

    #[test]
    fn config_validation() {
        assert!(config().validate().is_ok());
        let bad = NetworkConfig { n: 3, ..config() };
        assert_eq!(
            bad.validate(),
            Err(ConfigError::TooFewRelayAntennas { m: 4, n: 3 })
        );
        let bad = NetworkConfig { p: 0.0, ..config() };
        assert!(matches!(bad.validate(), Err(ConfigError::NotPositive { name: "P", .. })));
        let bad = config().with_error(-0.1);
        assert!(matches!(bad.validate(), Err(ConfigError::Negative { name: "e", .. })));
        assert!((config().pnr_db() - 10.0).abs() < 1e-12);
        assert_eq!("MF-RZF".parse::<BeamformerKind>().unwrap(), BeamformerKind::MfRzf);
        assert!("ZF".parse::<BeamformerKind>().is_err());
    }
}

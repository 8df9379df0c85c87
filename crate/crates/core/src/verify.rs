//! Fast self-checks of the model: Gaussian-matrix lemmas, Wishart moments,
//! beamformer nesting and power closure, closed-form SINR against the
//! symbol-level oracle, and the optimal regularizer against a grid search.
//!
//! Each check takes at most a few seconds. The full-size versions live in
//! the crate's acceptance tests.

use std::fmt;

use crate::beamforming::{build_beamformer, exact_power_factor, relay_output_power, BeamformerKind, NetworkConfig};
use crate::capacity::{asymptotic_rzf_capacity, optimal_alpha, wishart_moments, EigenSamples};
use crate::channel::{lemma_standard_errors, sample_cn01, verify_lemmas, ChannelRealization, Purpose, RngStream};
use crate::receiver::{error_free_factors, exact_snr_oracle, post_snr};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Runs every check with streams derived from `master_seed`.
pub fn run_checks(master_seed: u64) -> Vec<Check> {
    vec![
        lemmas(master_seed),
        moments(master_seed),
        nesting_and_closure(master_seed),
        oracle_agreement(master_seed),
        alpha_grid(master_seed),
    ]
}

fn lemmas(seed: u64) -> Check {
    let trials = 20_000;
    let mut rng = RngStream::with_purpose(seed, 0, Purpose::Lemma).rng();
    let a = sample_cn01(&mut rng, 4, 6);
    let b = sample_cn01(&mut rng, 6, 4);
    let dev = verify_lemmas(&mut rng, trials, &a, &b);
    let se = lemma_standard_errors(&a, &b, trials);
    let ratios = [dev.first / se.first, dev.second / se.second, dev.third / se.third];
    check(
        "lemmas",
        ratios.iter().all(|r| *r < 3.0),
        format!(
            "deviation / standard error = {:.2}, {:.2}, {:.2} at T = {trials} (bound 3)",
            ratios[0], ratios[1], ratios[2]
        ),
    )
}

fn moments(seed: u64) -> Check {
    let w = wishart_moments(4, 6, 10_000, seed);
    let ok = (w.inverse_trace - 2.0).abs() < 0.1
        && (w.gram_square_diagonal - 60.0).abs() < 2.0
        && (w.mf_error_term / 1440.0 - 1.0).abs() < 0.05
        && (w.mf_relay_term / 360.0 - 1.0).abs() < 0.05;
    check(
        "wishart-moments",
        ok,
        format!(
            "E tr (GG^H)^-1 = {:.3} (2), E[(H^H H)^2]_mm = {:.2} (60), E[tr((H^H H)^2)(GG^H)_mm] = {:.0} (1440), E[(H^H H (GG^H)^2)_mm] = {:.1} (360)",
            w.inverse_trace, w.gram_square_diagonal, w.mf_error_term, w.mf_relay_term
        ),
    )
}

fn nesting_and_closure(seed: u64) -> Check {
    let cfg = NetworkConfig::from_db(4, 6, 1, 10.0, 10.0);
    let (mut nest, mut closure) = (0.0f64, 0.0f64);
    for t in 0..100 {
        let r = ChannelRealization::for_trial(seed, t, 4, 6, 1, 0.1);
        let (h, ghat) = (&r.h[0], &r.ghat[0]);
        let zf = build_beamformer(BeamformerKind::MfZf, h, ghat, 0.0);
        let rzf = build_beamformer(BeamformerKind::MfRzf, h, ghat, 0.0);
        if let (Ok(zf), Ok(rzf)) = (zf, rzf) {
            nest = nest.max((&zf - &rzf).max_abs() / zf.max_abs());
        }
        for kind in BeamformerKind::ALL {
            if let Ok(f) = build_beamformer(kind, h, ghat, 0.5) {
                if let Ok(rho) = exact_power_factor(&f, h, &cfg) {
                    let power = relay_output_power(&f.scale(rho), h, &cfg);
                    closure = closure.max((power / cfg.q - 1.0).abs());
                }
            }
        }
    }
    check(
        "nesting-and-closure",
        nest < 1e-12 && closure < 1e-9,
        format!("max |F_rzf(0) - F_zf| / max|F_zf| = {nest:.1e}; max relative power error = {closure:.1e} over 100 draws"),
    )
}

fn oracle_agreement(seed: u64) -> Check {
    let cfg = NetworkConfig::from_db(4, 6, 10, 10.0, 10.0).with_alpha(0.5);
    let mut z = Vec::new();
    for d in 0..15u64 {
        let kind = BeamformerKind::ALL[(d % 3) as usize];
        let r = ChannelRealization::for_trial(seed, d, 4, 6, 10, 0.0);
        let Ok(rho) = error_free_factors(kind, &r, &cfg) else { continue };
        let Ok(closed) = post_snr(kind, &r, &rho, &cfg) else { continue };
        let stream = RngStream::with_purpose(seed, d, Purpose::Oracle);
        let Ok(oracle) = exact_snr_oracle(kind, &r, &cfg, 2000, stream) else { continue };
        for i in 0..4 {
            z.push((oracle.report.gamma[i] - closed.gamma[i]) / oracle.gamma_std_error[i]);
        }
    }
    let max = z.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mean_sq = z.iter().map(|v| v * v).sum::<f64>() / z.len().max(1) as f64;
    check(
        "oracle-agreement",
        z.len() == 60 && max < 4.5 && (0.5..1.5).contains(&mean_sq),
        format!("{} stream comparisons at e = 0: max |z| = {max:.2}, mean z^2 = {mean_sq:.2}", z.len()),
    )
}

fn alpha_grid(seed: u64) -> Check {
    let cfg = NetworkConfig::from_db(2, 4, 20, 10.0, 10.0).with_error(0.1);
    let result = (|| {
        let samples = EigenSamples::draw(2, 4, 10_000, seed).ok()?;
        let mut best = (f64::NEG_INFINITY, 0.0);
        for i in 0..=1000 {
            let alpha = i as f64 * 0.01;
            let c = asymptotic_rzf_capacity(&cfg, &samples, alpha).ok()?;
            if c > best.0 {
                best = (c, alpha);
            }
        }
        Some((best.1, optimal_alpha(&cfg).ok()?))
    })();
    match result {
        Some((grid, formula)) => check(
            "alpha-opt",
            (grid - formula).abs() <= 0.05,
            format!("grid argmax {grid:.2}, closed form {formula:.4}"),
        ),
        None => check("alpha-opt", false, "evaluation failed".to_string()),
    }
}

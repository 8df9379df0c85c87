//! Random channel draws and the relay-to-destination CSI error model.
//!
//! Every random quantity comes from an [`RngStream`], a counter-based
//! ChaCha stream keyed by `(master_seed, purpose)` and selected by a
//! stream id (usually the Monte-Carlo trial index). The same
//! `(master_seed, stream_id)` always yields the same draws, independent of
//! how trials are scheduled across threads.

use std::f64::consts::FRAC_1_SQRT_2;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::matrix::{ComplexMatrix, C64};

/// Independent families of random streams derived from one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Channel realizations `{H_k, G_k, Omega_k}`.
    Channel,
    /// Wishart samples for eigenvalue expectations.
    Eigen,
    /// Lemma verification.
    Lemma,
    /// Symbol and noise draws of the exact SINR oracle.
    Oracle,
    /// Free-form draws used by tests and moment checks.
    Scratch,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Channel => 0x6368_616e,
            Purpose::Eigen => 0x6569_6765,
            Purpose::Lemma => 0x6c65_6d6d,
            Purpose::Oracle => 0x6f72_6163,
            Purpose::Scratch => 0x7363_7261,
        }
    }
}

/// Identifies one reproducible random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_id: u64,
    pub purpose: Purpose,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        Self::with_purpose(master_seed, stream_id, Purpose::Channel)
    }

    pub fn with_purpose(master_seed: u64, stream_id: u64, purpose: Purpose) -> Self {
        Self {
            master_seed,
            stream_id,
            purpose,
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.master_seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.purpose.tag().to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// One circularly-symmetric complex Gaussian scalar with unit total variance.
#[inline]
pub fn cn01<R: rand::Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

/// Matrix of i.i.d. CN(0, 1) entries, filled in row-major order.
pub fn sample_cn01<R: rand::Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| cn01(rng))
}

/// Draws the error direction `Omega` and returns `(G + e Omega, Omega)`.
///
/// `Omega` is drawn even when `e == 0` so the number of draws per trial
/// does not depend on the error level.
pub fn corrupt_csi<R: rand::Rng + ?Sized>(
    g: &ComplexMatrix,
    e: f64,
    rng: &mut R,
) -> (ComplexMatrix, ComplexMatrix) {
    let omega = sample_cn01(rng, g.rows(), g.cols());
    (apply_error(g, &omega, e), omega)
}

fn apply_error(g: &ComplexMatrix, omega: &ComplexMatrix, e: f64) -> ComplexMatrix {
    if e == 0.0 {
        return g.clone();
    }
    let mut ghat = g.clone();
    ghat.add_scaled(e, omega);
    ghat
}

/// One draw of all per-relay channels for a `K`-relay network.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Source-to-relay channels, `N x M` each.
    pub h: Vec<ComplexMatrix>,
    /// True relay-to-destination channels, `M x N` each.
    pub g: Vec<ComplexMatrix>,
    /// CSI error directions, `M x N` each.
    pub omega: Vec<ComplexMatrix>,
    /// Imperfect CSI available at the relays, `G + e Omega`.
    pub ghat: Vec<ComplexMatrix>,
    /// Error gain used to build `ghat`.
    pub e: f64,
}

impl ChannelRealization {
    /// Draws `H_1..H_K`, then `G_1..G_K`, then `Omega_1..Omega_K`, in that
    /// order.
    pub fn draw<R: rand::Rng + ?Sized>(rng: &mut R, m: usize, n: usize, k: usize, e: f64) -> Self {
        let h: Vec<_> = (0..k).map(|_| sample_cn01(rng, n, m)).collect();
        let g: Vec<_> = (0..k).map(|_| sample_cn01(rng, m, n)).collect();
        let omega: Vec<_> = (0..k).map(|_| sample_cn01(rng, m, n)).collect();
        let ghat = g
            .iter()
            .zip(&omega)
            .map(|(g, o)| apply_error(g, o, e))
            .collect();
        Self {
            h,
            g,
            omega,
            ghat,
            e,
        }
    }

    /// Realization for Monte-Carlo trial `trial` under `master_seed`.
    pub fn for_trial(master_seed: u64, trial: u64, m: usize, n: usize, k: usize, e: f64) -> Self {
        let mut rng = RngStream::new(master_seed, trial).rng();
        Self::draw(&mut rng, m, n, k, e)
    }

    /// Same channels with a different error gain; `ghat` is rebuilt from the
    /// stored `omega`.
    pub fn with_error(&self, e: f64) -> Self {
        let ghat = self
            .g
            .iter()
            .zip(&self.omega)
            .map(|(g, o)| apply_error(g, o, e))
            .collect();
        Self {
            h: self.h.clone(),
            g: self.g.clone(),
            omega: self.omega.clone(),
            ghat,
            e,
        }
    }

    /// Number of relays.
    pub fn relays(&self) -> usize {
        self.h.len()
    }
}

/// Empirical deviations of the three Gaussian-matrix identities used in the
/// SINR derivation, after `trials` draws of `Omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaDeviations {
    /// `|| mean tr(A Omega^H) Omega - A ||_F`.
    pub first: f64,
    /// `| mean tr(A Omega^H) tr(B Omega) - tr(A B) |`.
    pub second: f64,
    /// `|| mean Omega C Omega^H - tr(C) I_M ||_F` with `C = B A`.
    pub third: f64,
}

/// Monte-Carlo check of
/// `E[tr(A Omega^H) Omega] = A`,
/// `E[tr(A Omega^H) tr(B Omega)] = tr(A B)` and
/// `E[Omega C Omega^H] = tr(C) I_M`
/// for `Omega` an `M x N` matrix of i.i.d. CN(0, 1) entries.
///
/// # Panics
///
/// Panics if `trials == 0` or `B` is not `N x M`.
pub fn verify_lemmas<R: rand::Rng + ?Sized>(
    rng: &mut R,
    trials: usize,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
) -> LemmaDeviations {
    assert!(trials >= 1, "at least one trial is required");
    let (m, n) = a.shape();
    assert_eq!(b.shape(), (n, m), "B must be N x M");
    let c = b * a;

    let mut first = ComplexMatrix::zeros(m, n);
    let mut second = C64::new(0.0, 0.0);
    let mut third = ComplexMatrix::zeros(m, m);
    for _ in 0..trials {
        let omega = sample_cn01(rng, m, n);
        // tr(A Omega^H) = sum a_ij conj(omega_ij)
        let t_a: C64 = a
            .as_slice()
            .iter()
            .zip(omega.as_slice())
            .map(|(x, w)| x * w.conj())
            .sum();
        let t_b = b.trace_of_product(&omega);
        first.add_scaled_complex(t_a, &omega);
        second += t_a * t_b;
        let oc = &omega * &c;
        third.add_scaled(1.0, &oc.mul_adjoint(&omega));
    }
    let inv = 1.0 / trials as f64;
    let target_second = a.trace_of_product(b);
    let target_third = ComplexMatrix::scaled_identity(m, 1.0).scale_complex(c.trace());
    LemmaDeviations {
        first: (&first.scale(inv) - a).frobenius_norm(),
        second: (second * inv - target_second).norm(),
        third: (&third.scale(inv) - &target_third).frobenius_norm(),
    }
}

/// One-sigma sizes of the [`verify_lemmas`] deviations for `trials` draws:
/// root-mean-square values of each deviation under the CN(0, 1) model.
pub fn lemma_standard_errors(a: &ComplexMatrix, b: &ComplexMatrix, trials: usize) -> LemmaDeviations {
    let (m, n) = a.shape();
    let c = b * a;
    let t = trials as f64;
    LemmaDeviations {
        first: ((m * n) as f64).sqrt() * a.frobenius_norm() / t.sqrt(),
        second: a.frobenius_norm() * b.frobenius_norm() / t.sqrt(),
        third: m as f64 * c.frobenius_norm() / t.sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_stream_is_bit_identical() {
        let a = sample_cn01(&mut RngStream::new(42, 7).rng(), 3, 5);
        let b = sample_cn01(&mut RngStream::new(42, 7).rng(), 3, 5);
        assert_eq!(a, b);
        let c = sample_cn01(&mut RngStream::new(42, 8).rng(), 3, 5);
        assert_ne!(a, c);
        let d = sample_cn01(&mut RngStream::with_purpose(42, 7, Purpose::Eigen).rng(), 3, 5);
        assert_ne!(a, d);
    }

    #[test]
    fn scalar_moments() {
        let mut rng = RngStream::with_purpose(1, 0, Purpose::Scratch).rng();
        let n = 100_000;
        let draws: Vec<C64> = (0..n).map(|_| cn01(&mut rng)).collect();
        let mean: C64 = draws.iter().sum::<C64>() / n as f64;
        let power: Vec<f64> = draws.iter().map(|z| z.norm_sqr()).collect();
        let mean_power = power.iter().sum::<f64>() / n as f64;
        // |z|^2 is Exp(1): mean 1, std 1, so the 4-sigma window is 1 +- 0.0127.
        assert!(mean.norm() < 0.02, "mean {mean}");
        assert!((0.98..=1.02).contains(&mean_power), "power {mean_power}");
    }

    #[test]
    fn wishart_mean() {
        let mut rng = RngStream::with_purpose(2, 0, Purpose::Scratch).rng();
        let trials = 10_000;
        let mut acc = ComplexMatrix::zeros(4, 4);
        for _ in 0..trials {
            let h = sample_cn01(&mut rng, 6, 4);
            acc.add_scaled(1.0, &h.adjoint_mul(&h));
        }
        let mean = acc.scale(1.0 / trials as f64);
        let target = ComplexMatrix::scaled_identity(4, 6.0);
        for i in 0..4 {
            for j in 0..4 {
                assert!((mean[(i, j)] - target[(i, j)]).norm() < 0.1, "({i},{j}) {}", mean[(i, j)]);
            }
        }
    }

    #[test]
    fn corrupt_csi_identities() {
        let mut rng = RngStream::with_purpose(3, 0, Purpose::Scratch).rng();
        let g = sample_cn01(&mut rng, 4, 6);
        let (ghat, omega) = corrupt_csi(&g, 0.0, &mut rng);
        assert_eq!(ghat, g);
        assert!(omega.frobenius_norm() > 0.0);

        let (ghat, omega) = corrupt_csi(&g, 0.1, &mut rng);
        assert!((&(&ghat - &g) - &omega.scale(0.1)).max_abs() < 1e-15);

        let trials = 10_000;
        let mut total = 0.0;
        for _ in 0..trials {
            let (ghat, _) = corrupt_csi(&g, 0.1, &mut rng);
            total += (&ghat - &g).frobenius_norm_sqr() / 24.0;
        }
        let mean = total / trials as f64;
        assert!((mean - 0.01).abs() < 0.0005, "error power {mean}");
    }

    #[test]
    fn error_is_independent_of_channel() {
        let trials = 10_000;
        let mut sum_xy = C64::new(0.0, 0.0);
        for t in 0..trials {
            let r = ChannelRealization::for_trial(5, t, 1, 1, 1, 0.1);
            sum_xy += r.g[0][(0, 0)] * r.omega[0][(0, 0)].conj();
        }
        let corr = (sum_xy / trials as f64).norm();
        assert!(corr < 0.03, "correlation {corr}");
    }

    #[test]
    fn realization_draw_order_and_error_rebuild() {
        let r = ChannelRealization::for_trial(9, 3, 2, 3, 4, 0.2);
        assert_eq!(r.relays(), 4);
        assert_eq!(r.h[0].shape(), (3, 2));
        assert_eq!(r.g[0].shape(), (2, 3));
        let mut rng = RngStream::new(9, 3).rng();
        let first_h = sample_cn01(&mut rng, 3, 2);
        assert_eq!(first_h, r.h[0]);

        let clean = r.with_error(0.0);
        assert_eq!(clean.ghat, clean.g);
        let back = clean.with_error(0.2);
        for k in 0..4 {
            assert!((&back.ghat[k] - &r.ghat[k]).max_abs() < 1e-15);
        }
    }

    #[test]
    fn zero_matrix_lemma_is_exact() {
        let mut rng = RngStream::with_purpose(4, 0, Purpose::Lemma).rng();
        let a = ComplexMatrix::zeros(2, 3);
        let b = ComplexMatrix::zeros(3, 2);
        let d = verify_lemmas(&mut rng, 1000, &a, &b);
        assert!(d.first < 5.0 / (1000f64).sqrt());
        assert_eq!(d.first, 0.0);
        assert_eq!(d.second, 0.0);
    }

    #[test]
    fn lemma_three_identity_case() {
        // A = I_{4x6} padding, B = A^H: C = B A is N x N with trace M.
        let mut rng = RngStream::with_purpose(6, 0, Purpose::Lemma).rng();
        let m = 4;
        let n = 6;
        let trials = 100_000;
        let mut acc = ComplexMatrix::zeros(m, m);
        for _ in 0..trials {
            let omega = sample_cn01(&mut rng, m, n);
            acc.add_scaled(1.0, &omega.gram());
        }
        let mean = acc.scale(1.0 / trials as f64);
        for i in 0..m {
            assert!((mean[(i, i)].re - n as f64).abs() < 0.03 * n as f64);
        }
    }
}

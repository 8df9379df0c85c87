//! Parameter sweeps, figure presets and CSV output.
//!
//! A sweep varies one parameter (the axis) over an ordered list of values
//! and evaluates a set of schemes at each value. Every cell of a sweep uses
//! the same master seed, so all cells share the same channel draws and
//! curves along `e` are smooth. Cells run one after another; each cell's
//! trials run in parallel with order-independent reduction, so the table is
//! identical for any thread count.
//!
//! Sweeps are described by TOML files; see [`parse_config_str`] for the
//! keys. The presets `fig2`..`fig8` ship with the crate.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;
use thiserror::Error;

use crate::beamforming::{db_to_linear, BeamformerKind, ConfigError, NetworkConfig};
use crate::capacity::{
    asymptotic_capacity, average_power_factor, cutset_upper_bound, dynamic_error, ergodic_capacity_with,
    exact_chain_capacity, optimal_alpha, CapacityEstimate, EigenSamples, PowerControl, DEFAULT_EIGEN_SAMPLES,
    MIN_EIGEN_SAMPLES, MIN_TRIALS,
};

pub const CSV_HEADER: [&str; 8] = ["axis", "scheme", "ergodic", "ci", "asymptotic", "cutset", "alpha", "flagged"];

pub const DEFAULT_TRIALS: usize = 1000;
pub const DEFAULT_SEED: u64 = 1;
pub const DEFAULT_SNR_DB: f64 = 10.0;
/// Regularizer of `MF-RZF-fixed` when the config gives none.
pub const DEFAULT_FIXED_ALPHA: f64 = 0.5;
/// Dynamic-error defaults. They are implementation choices, not values
/// taken from a published figure.
pub const DEFAULT_SIGMA_Q: f64 = 0.05;
pub const DEFAULT_SIGMA_D: f64 = 0.005;

pub const PRESET_NAMES: [&str; 7] = ["fig2", "fig3", "fig4", "fig5", "fig6", "fig7", "fig8"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid config: {0}")]
    Network(#[from] ConfigError),
    #[error("unknown preset `{0}` (expected one of fig2..fig8)")]
    UnknownPreset(String),
    #[error("nothing to write: the result table is empty")]
    EmptyTable,
    #[error("cannot write {}: {source}", path.display())]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ExperimentError {
    /// True for problems with the sweep description itself.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            ExperimentError::Read { .. }
                | ExperimentError::Parse(_)
                | ExperimentError::Invalid(_)
                | ExperimentError::Network(_)
                | ExperimentError::UnknownPreset(_)
        )
    }
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    K,
    ESq,
    Pnr,
    Qnr,
    PnrEqQnr,
    /// Relay count with `e = sigma_q + K sigma_d`.
    KDynamicE,
}

impl Axis {
    pub fn label(self) -> &'static str {
        match self {
            Axis::K => "K",
            Axis::ESq => "e_sq",
            Axis::Pnr => "PNR",
            Axis::Qnr => "QNR",
            Axis::PnrEqQnr => "PNR_eq_QNR",
            Axis::KDynamicE => "K_dynamic_e",
        }
    }

    fn counts_relays(self) -> bool {
        matches!(self, Axis::K | Axis::KDynamicE)
    }
}

impl FromStr for Axis {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [Axis::K, Axis::ESq, Axis::Pnr, Axis::Qnr, Axis::PnrEqQnr, Axis::KDynamicE]
            .into_iter()
            .find(|a| a.label() == s)
            .ok_or_else(|| invalid(format!("unknown axis `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Mf,
    MfZf,
    /// MF-RZF with the config's `alpha`.
    MfRzfFixed,
    /// MF-RZF with the large-`K` optimal regularizer of each cell.
    MfRzfOpt,
    /// MF-RZF with `alpha = M sigma2^2 / Q`, the perfect-CSI choice.
    MfRzfConventional,
    /// Cut-set upper bound.
    AfCutset,
}

impl Scheme {
    pub const ALL: [Scheme; 6] = [
        Scheme::Mf,
        Scheme::MfZf,
        Scheme::MfRzfFixed,
        Scheme::MfRzfOpt,
        Scheme::MfRzfConventional,
        Scheme::AfCutset,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Mf => "MF",
            Scheme::MfZf => "MF-ZF",
            Scheme::MfRzfFixed => "MF-RZF-fixed",
            Scheme::MfRzfOpt => "MF-RZF-opt",
            Scheme::MfRzfConventional => "MF-RZF-conventional",
            Scheme::AfCutset => "AF-cutset",
        }
    }

    pub fn beamformer(self) -> Option<BeamformerKind> {
        match self {
            Scheme::Mf => Some(BeamformerKind::Mf),
            Scheme::MfZf => Some(BeamformerKind::MfZf),
            Scheme::MfRzfFixed | Scheme::MfRzfOpt | Scheme::MfRzfConventional => Some(BeamformerKind::MfRzf),
            Scheme::AfCutset => None,
        }
    }

    /// Regularizer this scheme uses at `config` (`None` for non-RZF schemes).
    pub fn alpha(self, config: &NetworkConfig, fixed: f64) -> Option<Result<f64, String>> {
        match self {
            Scheme::MfRzfFixed => Some(Ok(fixed)),
            Scheme::MfRzfOpt => Some(optimal_alpha(config).map_err(|e| e.to_string())),
            Scheme::MfRzfConventional => Some(Ok(config.m as f64 * config.sigma2_sq / config.q)),
            _ => None,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Scheme {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.label() == s)
            .ok_or_else(|| invalid(format!("unknown scheme `{s}`")))
    }
}

/// Power-control rule for the ergodic columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PowerRule {
    #[default]
    Exact,
    ErrorFree,
    FirstOrder,
    /// The common average factor of the large-`K` analysis.
    Average,
}

impl FromStr for PowerRule {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact" => Ok(PowerRule::Exact),
            "error-free" => Ok(PowerRule::ErrorFree),
            "first-order" => Ok(PowerRule::FirstOrder),
            "average" => Ok(PowerRule::Average),
            other => Err(invalid(format!(
                "unknown power_control `{other}` (expected exact, error-free, first-order or average)"
            ))),
        }
    }
}

/// A fully specified sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    /// Network at every cell before the axis value is applied; its `alpha`
    /// is the `MF-RZF-fixed` regularizer.
    pub base: NetworkConfig,
    pub axis: Axis,
    pub axis_values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    pub master_seed: u64,
    pub sigma_q: f64,
    pub sigma_d: f64,
    /// Error gains to repeat the sweep for; empty means `base.e` only.
    pub e_series: Vec<f64>,
    /// Schemes that get an asymptotic column.
    pub asymptotic_for: Vec<Scheme>,
    /// Add a `<scheme>-oracle` row with the exact relay-chain capacity.
    pub emit_oracle: bool,
    pub power_control: PowerRule,
    pub eigen_samples: usize,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum Switch {
    Flag(bool),
    Schemes(Vec<String>),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(rename = "M", alias = "m")]
    m: usize,
    #[serde(rename = "N", alias = "n")]
    n: usize,
    #[serde(rename = "K", alias = "k")]
    k: Option<OneOrMany<usize>>,
    pnr_db: Option<f64>,
    qnr_db: Option<f64>,
    e: Option<f64>,
    e_sq: Option<f64>,
    alpha: Option<f64>,
    trials: Option<usize>,
    seed: Option<u64>,
    scheme: Option<OneOrMany<String>>,
    schemes: Option<Vec<String>>,
    axis: Option<String>,
    values: Option<Vec<f64>>,
    e_series: Option<Vec<f64>>,
    sigma_q: Option<f64>,
    sigma_d: Option<f64>,
    emit_asymptotic: Option<Switch>,
    emit_oracle: Option<bool>,
    power_control: Option<String>,
    eigen_samples: Option<usize>,
    description: Option<String>,
}

/// Reads and validates a sweep file.
pub fn parse_config(path: &Path) -> Result<SweepSpec, ExperimentError> {
    let text = fs::read_to_string(path).map_err(|source| ExperimentError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

/// Parses a TOML sweep description.
///
/// | key | meaning | default |
/// |-----|---------|---------|
/// | `M`, `N` | source/destination and relay antennas | required |
/// | `K` | relay count, or a list that becomes the `K` axis | required unless the axis counts relays |
/// | `pnr_db`, `qnr_db` | `P/sigma1^2`, `Q/sigma2^2` in dB | 10, 10 |
/// | `e` or `e_sq` | CSI error gain or its square | 0 |
/// | `alpha` | `MF-RZF-fixed` regularizer | 0.5 |
/// | `trials`, `seed` | Monte-Carlo trials per cell, master seed | 1000, 1 |
/// | `scheme` / `schemes` | one name or a list | required |
/// | `axis`, `values` | swept parameter and its increasing values | from a `K` list |
/// | `e_series` | repeat the sweep for each error gain | none |
/// | `sigma_q`, `sigma_d` | dynamic-error terms for `K_dynamic_e` | 0.05, 0.005 |
/// | `emit_asymptotic` | `true`, `false` or a list of schemes | false |
/// | `emit_oracle` | add exact relay-chain rows | false |
/// | `power_control` | `exact`, `error-free`, `first-order`, `average` | exact |
/// | `eigen_samples` | `G` draws behind MF-RZF moments | 10000 |
///
/// Axes: `K`, `e_sq`, `PNR`, `QNR`, `PNR_eq_QNR`, `K_dynamic_e`. Schemes:
/// `MF`, `MF-ZF`, `MF-RZF-fixed`, `MF-RZF-opt`, `MF-RZF-conventional`,
/// `AF-cutset`. Unknown keys are rejected.
pub fn parse_config_str(text: &str) -> Result<SweepSpec, ExperimentError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ExperimentError::Parse(e.to_string()))?;
    let _ = raw.description;

    let mut axis = raw.axis.as_deref().map(Axis::from_str).transpose()?;
    let mut axis_values = raw.values.clone();
    let k = match raw.k {
        Some(OneOrMany::One(k)) => Some(k),
        Some(OneOrMany::Many(list)) => {
            if axis.is_some_and(|a| a != Axis::K) || axis_values.is_some() {
                return Err(invalid("a list of K values makes K the axis; drop `axis`/`values`"));
            }
            axis = Some(Axis::K);
            axis_values = Some(list.into_iter().map(|k| k as f64).collect());
            None
        }
        None => None,
    };
    let axis = axis.ok_or_else(|| invalid("no sweep axis: set `axis` and `values`, or give a list of K"))?;
    let axis_values = axis_values.ok_or_else(|| invalid("`values` is required with `axis`"))?;
    let k = match (k, axis.counts_relays()) {
        (Some(k), _) => k,
        (None, true) => 0,
        (None, false) => return Err(invalid("`K` is required unless the axis is K or K_dynamic_e")),
    };

    let e = match (raw.e, raw.e_sq) {
        (Some(_), Some(_)) => return Err(invalid("give `e` or `e_sq`, not both")),
        (Some(e), None) => e,
        (None, Some(e_sq)) if e_sq >= 0.0 => e_sq.sqrt(),
        (None, Some(e_sq)) => return Err(invalid(format!("e_sq must be nonnegative, got {e_sq}"))),
        (None, None) => 0.0,
    };
    let base = NetworkConfig::from_db(
        raw.m,
        raw.n,
        k,
        raw.pnr_db.unwrap_or(DEFAULT_SNR_DB),
        raw.qnr_db.unwrap_or(DEFAULT_SNR_DB),
    )
    .with_error(e)
    .with_alpha(raw.alpha.unwrap_or(DEFAULT_FIXED_ALPHA));

    let names: Vec<String> = match (raw.scheme, raw.schemes) {
        (Some(_), Some(_)) => return Err(invalid("give `scheme` or `schemes`, not both")),
        (Some(OneOrMany::One(s)), None) => vec![s],
        (Some(OneOrMany::Many(v)), None) | (None, Some(v)) => v,
        (None, None) => return Err(invalid("no schemes requested")),
    };
    let schemes = names.iter().map(|s| s.parse()).collect::<Result<Vec<Scheme>, _>>()?;

    let asymptotic_for = match raw.emit_asymptotic {
        None | Some(Switch::Flag(false)) => Vec::new(),
        Some(Switch::Flag(true)) => schemes.iter().copied().filter(|s| *s != Scheme::AfCutset).collect(),
        Some(Switch::Schemes(list)) => {
            let listed = list.iter().map(|s| s.parse()).collect::<Result<Vec<Scheme>, _>>()?;
            if let Some(extra) = listed.iter().find(|s| !schemes.contains(s)) {
                return Err(invalid(format!("emit_asymptotic lists `{extra}`, which is not a requested scheme")));
            }
            listed
        }
    };

    let spec = SweepSpec {
        base,
        axis,
        axis_values,
        schemes,
        trials: raw.trials.unwrap_or(DEFAULT_TRIALS),
        master_seed: raw.seed.unwrap_or(DEFAULT_SEED),
        sigma_q: raw.sigma_q.unwrap_or(DEFAULT_SIGMA_Q),
        sigma_d: raw.sigma_d.unwrap_or(DEFAULT_SIGMA_D),
        e_series: raw.e_series.unwrap_or_default(),
        asymptotic_for,
        emit_oracle: raw.emit_oracle.unwrap_or(false),
        power_control: raw.power_control.as_deref().map(PowerRule::from_str).transpose()?.unwrap_or_default(),
        eigen_samples: raw.eigen_samples.unwrap_or(DEFAULT_EIGEN_SAMPLES),
    };
    spec.validate()?;
    Ok(spec)
}

impl SweepSpec {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        // K may be zero on relay-count axes; check the rest of the network.
        self.base.validate()?;
        if self.schemes.is_empty() {
            return Err(invalid("no schemes requested"));
        }
        for (i, s) in self.schemes.iter().enumerate() {
            if self.schemes[..i].contains(s) {
                return Err(invalid(format!("scheme `{s}` is listed twice")));
            }
        }
        if self.axis_values.is_empty() {
            return Err(invalid("`values` is empty"));
        }
        if let Some(v) = self.axis_values.iter().find(|v| !v.is_finite()) {
            return Err(invalid(format!("axis value {v} is not finite")));
        }
        if self.axis_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("axis values must be strictly increasing"));
        }
        match self.axis {
            Axis::K | Axis::KDynamicE => {
                if let Some(v) = self.axis_values.iter().find(|v| **v < 0.0 || v.fract() != 0.0) {
                    return Err(invalid(format!("relay counts must be nonnegative integers, got {v}")));
                }
            }
            Axis::ESq => {
                if let Some(v) = self.axis_values.iter().find(|v| **v < 0.0) {
                    return Err(invalid(format!("e_sq values must be nonnegative, got {v}")));
                }
            }
            _ => {}
        }
        if !self.e_series.is_empty() && matches!(self.axis, Axis::ESq | Axis::KDynamicE) {
            return Err(invalid(format!("`e_series` cannot be combined with the {} axis", self.axis.label())));
        }
        if let Some(e) = self.e_series.iter().find(|e| !(**e >= 0.0) || !e.is_finite()) {
            return Err(invalid(format!("e_series values must be nonnegative, got {e}")));
        }
        for (name, v) in [("sigma_q", self.sigma_q), ("sigma_d", self.sigma_d)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.trials < MIN_TRIALS {
            return Err(invalid(format!("trials must be at least {MIN_TRIALS}, got {}", self.trials)));
        }
        if self.eigen_samples < MIN_EIGEN_SAMPLES {
            return Err(invalid(format!(
                "eigen_samples must be at least {MIN_EIGEN_SAMPLES}, got {}",
                self.eigen_samples
            )));
        }
        let zf_average = self.schemes.contains(&Scheme::MfZf) && self.power_control == PowerRule::Average;
        if (self.asymptotic_for.contains(&Scheme::MfZf) || zf_average) && self.base.n == self.base.m {
            return Err(invalid(
                "MF-ZF large-K output and average power control need N > M (the inverse-Wishart mean is infinite at N = M)",
            ));
        }
        if self.asymptotic_for.contains(&Scheme::AfCutset) {
            return Err(invalid("AF-cutset has no asymptotic form"));
        }
        Ok(())
    }

    /// Network at one axis value and error gain (before any scheme-specific
    /// regularizer).
    pub fn cell_config(&self, value: f64, e: f64) -> NetworkConfig {
        let mut c = self.base.with_error(e);
        match self.axis {
            Axis::K => c.k = value as usize,
            Axis::ESq => c.e = value.sqrt(),
            Axis::Pnr => c.p = db_to_linear(value) * c.sigma1_sq,
            Axis::Qnr => c.q = db_to_linear(value) * c.sigma2_sq,
            Axis::PnrEqQnr => {
                c.p = db_to_linear(value) * c.sigma1_sq;
                c.q = db_to_linear(value) * c.sigma2_sq;
            }
            Axis::KDynamicE => {
                c.k = value as usize;
                c.e = dynamic_error(c.k, self.sigma_q, self.sigma_d);
            }
        }
        c
    }

    fn error_gains(&self) -> Vec<f64> {
        if self.e_series.is_empty() {
            vec![self.base.e]
        } else {
            self.e_series.clone()
        }
    }
}

/// Looks up a shipped preset.
pub fn preset(name: &str) -> Result<SweepSpec, ExperimentError> {
    parse_config_str(preset_source(name)?)
}

/// TOML text of a shipped preset.
pub fn preset_source(name: &str) -> Result<&'static str, ExperimentError> {
    Ok(match name {
        "fig2" => include_str!("../presets/fig2.toml"),
        "fig3" => include_str!("../presets/fig3.toml"),
        "fig4" => include_str!("../presets/fig4.toml"),
        "fig5" => include_str!("../presets/fig5.toml"),
        "fig6" => include_str!("../presets/fig6.toml"),
        "fig7" => include_str!("../presets/fig7.toml"),
        "fig8" => include_str!("../presets/fig8.toml"),
        other => return Err(ExperimentError::UnknownPreset(other.to_string())),
    })
}

/// One table cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Value(f64),
    /// Not requested or not applicable.
    Missing,
    /// The computation failed; the message is kept for diagnostics.
    Failed(String),
}

impl Cell {
    pub fn value(&self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(*v),
            _ => None,
        }
    }

    fn render(&self) -> String {
        match self {
            Cell::Value(v) => format_number(*v),
            Cell::Missing => "NA".to_string(),
            Cell::Failed(_) => "ERR".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: f64,
    pub scheme: String,
    /// Error gain of this row.
    pub e: f64,
    pub ergodic: Cell,
    pub ci: Cell,
    pub asymptotic: Cell,
    pub cutset: Cell,
    pub alpha: Cell,
    pub flagged: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axis: Axis,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// True when no row produced an ergodic value.
    pub fn all_failed(&self) -> bool {
        self.rows.iter().all(|r| matches!(r.ergodic, Cell::Failed(_)))
    }

    /// Rows of one scheme label, in axis order.
    pub fn series<'a>(&'a self, scheme: &'a str) -> impl Iterator<Item = &'a SweepRow> + 'a {
        self.rows.iter().filter(move |r| r.scheme == scheme)
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, ExperimentError> {
        if self.rows.is_empty() {
            return Err(ExperimentError::EmptyTable);
        }
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::CRLF)
            .from_writer(Vec::new());
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            w.write_record([
                format_number(r.axis),
                r.scheme.clone(),
                r.ergodic.render(),
                r.ci.render(),
                r.asymptotic.render(),
                r.cutset.render(),
                r.alpha.render(),
                r.flagged.map_or_else(|| "NA".to_string(), |f| f.to_string()),
            ])?;
        }
        w.into_inner().map_err(|e| ExperimentError::Csv(e.into_error().into()))
    }
}

/// Writes `table` as CSV. Nothing is created when the table is empty.
pub fn emit_csv(table: &SweepTable, path: &Path) -> Result<(), ExperimentError> {
    let bytes = table.to_csv()?;
    let mut file = fs::File::create(path).map_err(|source| ExperimentError::Write {
        path: path.to_path_buf(),
        source,
    })?;
    file.write_all(&bytes).map_err(|source| ExperimentError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Decimal rendering with 12 significant digits and trailing zeros removed.
/// Very large or small magnitudes use exponent notation.
pub fn format_number(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let mut s = if (-5..15).contains(&exp) {
        format!("{:.*}", (11 - exp).max(0) as usize, x)
    } else {
        format!("{:.11e}", x)
    };
    if let Some(dot) = s.find('.') {
        let (mantissa, exponent) = match s.find('e') {
            Some(pos) => (s[..pos].to_string(), s[pos..].to_string()),
            None => (s.clone(), String::new()),
        };
        let trimmed = mantissa.trim_end_matches('0');
        let trimmed = if trimmed.len() == dot + 1 { &trimmed[..dot] } else { trimmed };
        s = format!("{trimmed}{exponent}");
    }
    s
}

fn estimate_cells(result: Result<CapacityEstimate, String>) -> (Cell, Cell, Option<usize>) {
    match result {
        Ok(c) => (Cell::Value(c.mean), Cell::Value(c.half_width), Some(c.flagged_trials)),
        Err(e) => (Cell::Failed(e.clone()), Cell::Failed(e), None),
    }
}

fn row_label(scheme: &str, e: f64, series: bool) -> String {
    if series {
        format!("{scheme}@e={}", format_number(e))
    } else {
        scheme.to_string()
    }
}

/// Evaluates every cell of `spec`. Failed cells are recorded and the sweep
/// continues.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepTable, ExperimentError> {
    spec.validate()?;
    let needs_moments = spec.schemes.iter().any(|s| {
        s.beamformer() == Some(BeamformerKind::MfRzf)
            && (spec.asymptotic_for.contains(s) || spec.power_control == PowerRule::Average)
    });
    let moments = if needs_moments {
        Some(
            EigenSamples::draw(spec.base.m, spec.base.n, spec.eigen_samples, spec.master_seed)
                .map_err(|e| invalid(e.to_string()))?,
        )
    } else {
        None
    };

    let gains = spec.error_gains();
    let series = spec.e_series.len() > 1;
    let mut rows = Vec::new();
    for &value in &spec.axis_values {
        // The bound depends on neither the error nor the scheme.
        let bound = cutset_upper_bound(&spec.cell_config(value, spec.base.e), spec.trials, spec.master_seed)
            .map_err(|e| e.to_string());
        let cutset = match &bound {
            Ok(c) => Cell::Value(c.mean),
            Err(e) => Cell::Failed(e.clone()),
        };
        for &e in &gains {
            let cfg = spec.cell_config(value, e);
            for &scheme in &spec.schemes {
                let Some(kind) = scheme.beamformer() else {
                    let (ergodic, ci, flagged) = estimate_cells(bound.clone());
                    rows.push(SweepRow {
                        axis: value,
                        scheme: row_label(scheme.label(), cfg.e, series),
                        e: cfg.e,
                        ergodic,
                        ci,
                        asymptotic: Cell::Missing,
                        cutset: cutset.clone(),
                        alpha: Cell::Missing,
                        flagged,
                    });
                    continue;
                };
                let alpha = scheme.alpha(&cfg, spec.base.alpha);
                let cell_cfg = match &alpha {
                    Some(Ok(a)) => cfg.with_alpha(*a),
                    _ => cfg.with_alpha(0.0),
                }
                .with_kind(kind);
                let eig = moments.as_ref().map(|m| m.expectations(cell_cfg.alpha));
                let run = || -> Result<(CapacityEstimate, Option<CapacityEstimate>), String> {
                    if let Some(Err(e)) = &alpha {
                        return Err(e.clone());
                    }
                    let power = match spec.power_control {
                        PowerRule::Exact => PowerControl::Exact,
                        PowerRule::ErrorFree => PowerControl::ErrorFree,
                        PowerRule::FirstOrder => PowerControl::FirstOrder,
                        PowerRule::Average => PowerControl::Fixed(
                            average_power_factor(kind, &cell_cfg, eig.as_ref()).map_err(|e| e.to_string())?,
                        ),
                    };
                    let main = ergodic_capacity_with(kind, &cell_cfg, spec.trials, spec.master_seed, power)
                        .map_err(|e| e.to_string())?;
                    let oracle = if spec.emit_oracle {
                        Some(
                            exact_chain_capacity(kind, &cell_cfg, spec.trials, spec.master_seed)
                                .map_err(|e| e.to_string())?,
                        )
                    } else {
                        None
                    };
                    Ok((main, oracle))
                };
                let outcome = run();
                let asymptotic = if spec.asymptotic_for.contains(&scheme) {
                    match asymptotic_capacity(kind, &cell_cfg, eig.as_ref()) {
                        Ok(v) => Cell::Value(v),
                        Err(e) => Cell::Failed(e.to_string()),
                    }
                } else {
                    Cell::Missing
                };
                let alpha_cell = match &alpha {
                    None => Cell::Missing,
                    Some(Ok(a)) => Cell::Value(*a),
                    Some(Err(e)) => Cell::Failed(e.clone()),
                };
                let (ergodic, ci, flagged) = estimate_cells(outcome.clone().map(|(main, _)| main));
                rows.push(SweepRow {
                    axis: value,
                    scheme: row_label(scheme.label(), cfg.e, series),
                    e: cfg.e,
                    ergodic,
                    ci,
                    asymptotic,
                    cutset: cutset.clone(),
                    alpha: alpha_cell.clone(),
                    flagged,
                });
                if spec.emit_oracle {
                    let oracle = outcome.and_then(|(_, o)| o.ok_or_else(|| "oracle not run".to_string()));
                    let (ergodic, ci, flagged) = estimate_cells(oracle);
                    rows.push(SweepRow {
                        axis: value,
                        scheme: row_label(&format!("{}-oracle", scheme.label()), cfg.e, series),
                        e: cfg.e,
                        ergodic,
                        ci,
                        asymptotic: Cell::Missing,
                        cutset: cutset.clone(),
                        alpha: alpha_cell,
                        flagged,
                    });
                }
            }
        }
    }
    Ok(SweepTable { axis: spec.axis, rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
M = 4
N = 6
K = [5, 10, 20, 40, 80]
scheme = "MF"
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config_str(MINIMAL).unwrap();
        assert_eq!(spec.trials, 1000);
        assert_eq!(spec.master_seed, 1);
        assert!((spec.base.pnr_db() - 10.0).abs() < 1e-12);
        assert!((spec.base.qnr_db() - 10.0).abs() < 1e-12);
        assert_eq!(spec.axis, Axis::K);
        assert_eq!(spec.axis_values, vec![5.0, 10.0, 20.0, 40.0, 80.0]);
        assert_eq!(spec.schemes, vec![Scheme::Mf]);
        assert!(spec.asymptotic_for.is_empty());
        assert_eq!(spec.power_control, PowerRule::Exact);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let cases = [
            ("M = 4\nN = 3\nK = [1, 2]\nscheme = \"MF\"", "relay antennas"),
            ("M = 4\nN = 6\nK = [1, 2]\nschemes = []", "no schemes"),
            ("M = 4\nN = 6\nK = [1, 2]\nscheme = \"MF\"\nfoo = 1", "unknown field"),
            ("M = 4\nN = 6\nK = [2, 1]\nscheme = \"MF\"", "strictly increasing"),
            ("M = 4\nN = 6\nK = [1, 2]\nscheme = \"ZF\"", "unknown scheme"),
            ("M = 4\nN = 6\nK = [1, 2]\nscheme = \"MF\"\ntrials = 10", "trials"),
            ("M = 4\nN = 4\nK = [1, 2]\nscheme = \"MF-ZF\"\nemit_asymptotic = true", "N > M"),
            ("M = 4\nN = 6\nK = 3\nscheme = \"MF\"", "no sweep axis"),
            ("M = 4\nN = 6\naxis = \"PNR\"\nvalues = [0, 10]\nscheme = \"MF\"", "`K` is required"),
            ("M = 4\nN = 6\nK = 3\naxis = \"e_sq\"\nvalues = [0, 0.1]\ne_series = [0, 0.1]\nscheme = \"MF\"", "e_series"),
            ("M = 4\nN = 6\nK = 3\naxis = \"temperature\"\nvalues = [0]\nscheme = \"MF\"", "unknown axis"),
        ];
        for (text, needle) in cases {
            let err = parse_config_str(text).unwrap_err();
            assert!(err.is_config_error());
            assert!(err.to_string().contains(needle), "{text:?}: {err}");
        }
        // The square case is fine without large-K MF-ZF output.
        parse_config_str("M = 4\nN = 4\nK = [1, 2]\nscheme = \"MF-ZF\"").unwrap();
    }

    #[test]
    fn presets_parse() {
        for name in PRESET_NAMES {
            preset(name).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
        let fig2 = preset("fig2").unwrap();
        assert_eq!(fig2.axis, Axis::K);
        assert_eq!(fig2.axis_values, vec![1.0, 2.0, 5.0, 10.0, 20.0, 40.0, 80.0]);
        assert_eq!((fig2.base.m, fig2.base.n), (4, 6));
        assert!((fig2.base.pnr_db() - 10.0).abs() < 1e-12 && (fig2.base.qnr_db() - 10.0).abs() < 1e-12);
        assert_eq!(fig2.base.alpha, 0.5);
        assert!(fig2.schemes.contains(&Scheme::MfRzfFixed));
        assert!(matches!(preset("fig9"), Err(ExperimentError::UnknownPreset(_))));
    }

    #[test]
    fn number_formatting() {
        assert_eq!(format_number(0.0), "0");
        assert_eq!(format_number(20.0), "20");
        assert_eq!(format_number(0.005), "0.005");
        assert_eq!(format_number(14.854321987654321), "14.8543219877");
        assert_eq!(format_number(-0.25), "-0.25");
        assert_eq!(format_number(1.0 / 3.0), "0.333333333333");
        assert_eq!(format_number(1.5e-9), "1.5e-9");
        assert_eq!(format_number(2.0e20), "2e20");
    }

    #[test]
    fn cell_configs_follow_the_axis() {
        let mut spec = parse_config_str(MINIMAL).unwrap();
        assert_eq!(spec.cell_config(40.0, 0.0).k, 40);
        spec.axis = Axis::PnrEqQnr;
        let c = spec.cell_config(30.0, 0.1);
        assert!((c.p - 1000.0).abs() < 1e-9 && (c.q - 1000.0).abs() < 1e-9 && c.e == 0.1);
        spec.axis = Axis::ESq;
        assert!((spec.cell_config(0.01, 0.0).e - 0.1).abs() < 1e-15);
        spec.axis = Axis::KDynamicE;
        let c = spec.cell_config(10.0, 0.0);
        assert_eq!(c.k, 10);
        assert!((c.e - 0.1).abs() < 1e-15);
    }

    #[test]
    fn small_sweep_rows_and_csv() {
        let spec = parse_config_str(
            r#"
M = 2
N = 3
K = 3
axis = "e_sq"
values = [0, 0.01]
schemes = ["MF", "MF-RZF-opt", "AF-cutset"]
emit_asymptotic = true
emit_oracle = true
trials = 100
eigen_samples = 1000
"#,
        )
        .unwrap();
        let table = run_sweep(&spec).unwrap();
        let labels: Vec<&str> = table.rows.iter().map(|r| r.scheme.as_str()).collect();
        assert_eq!(
            labels,
            ["MF", "MF-oracle", "MF-RZF-opt", "MF-RZF-opt-oracle", "AF-cutset"].repeat(2)
        );
        for r in &table.rows {
            assert!(r.ergodic.value().unwrap() > 0.0);
            assert!(r.cutset.value().unwrap() >= r.ergodic.value().unwrap());
        }
        // Without error the actual chain is the modeled one.
        assert!((table.rows[0].ergodic.value().unwrap() - table.rows[1].ergodic.value().unwrap()).abs() < 1e-9);
        let csv = String::from_utf8(table.to_csv().unwrap()).unwrap();
        let mut lines = csv.split("\r\n");
        assert_eq!(lines.next(), Some("axis,scheme,ergodic,ci,asymptotic,cutset,alpha,flagged"));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[1], "MF");
        assert_eq!(first[6], "NA");
        assert_eq!(first[7], "0");
        assert!(csv.contains(",AF-cutset,"));
    }

    #[test]
    fn failed_cells_do_not_abort() {
        let spec = parse_config_str("M = 2\nN = 3\nK = [0, 2]\nschemes = [\"MF-RZF-opt\", \"MF\"]\ntrials = 100").unwrap();
        let table = run_sweep(&spec).unwrap();
        assert!(matches!(table.rows[0].ergodic, Cell::Failed(_)));
        assert_eq!(table.rows[1].ergodic, Cell::Value(0.0));
        assert!(table.rows[2].ergodic.value().unwrap() > 0.0);
        assert!(!table.all_failed());
        let csv = String::from_utf8(table.to_csv().unwrap()).unwrap();
        assert!(csv.contains("0,MF-RZF-opt,ERR,ERR,NA,0,ERR,NA"));
    }

    #[test]
    fn empty_table_is_not_written() {
        let table = SweepTable {
            axis: Axis::K,
            rows: Vec::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        assert!(matches!(emit_csv(&table, &path), Err(ExperimentError::EmptyTable)));
        assert!(!path.exists());
    }
}

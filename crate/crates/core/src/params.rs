//! System parameters: configuration, derived constants and validation.
//!
//! A [`SystemParams`] value is immutable once validated. Configuration files
//! are parsed into [`ParamsConfig`], where every field is optional; missing
//! fields fall back to the defaults below and derived fields (`alpha`, beam
//! widths, noise power) are recomputed unless explicitly given.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Violation};

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reference temperature for thermal noise, K.
pub const NOISE_TEMPERATURE_K: f64 = 290.0;

pub const DEFAULT_FC_HZ: f64 = 28e9;
pub const DEFAULT_BETA: f64 = 2.2;
pub const DEFAULT_LAMBDA_B: f64 = 1.59e-3;
pub const DEFAULT_BLOCKAGE_LEN: f64 = 15.0;
pub const DEFAULT_LAMBDA_R: f64 = 9.55e-4;
pub const DEFAULT_LAMBDA_U: f64 = 3.18e-3;
pub const DEFAULT_N_BS: u32 = 64;
pub const DEFAULT_N_RIS: u32 = 100;
pub const DEFAULT_N_UE: u32 = 4;
pub const DEFAULT_P0_W: f64 = 1.0;
pub const DEFAULT_BW_HZ: f64 = 200e6;
pub const DEFAULT_RADIUS_M: f64 = 100.0;
pub const DEFAULT_NEAR_FIELD_M: f64 = 0.5;

/// Large-scale intercept exponent for a carrier frequency in Hz.
pub fn derive_alpha(fc_hz: f64) -> Result<f64> {
    if !(fc_hz.is_finite() && fc_hz > 0.0) {
        return Err(Error::InvalidParams(vec![Violation {
            field: "fc_hz",
            message: format!("carrier frequency must be positive, got {fc_hz}"),
        }]));
    }
    Ok(-2.8 - 2.0 * (fc_hz / 1e9).log10())
}

/// Main-lobe beamwidth used when none is configured: shrinks with aperture.
pub fn default_beamwidth(n: u32) -> f64 {
    2.0 * PI / f64::from(n.max(1)).sqrt()
}

/// Thermal noise power k·T·W in watts.
pub fn thermal_noise_w(bw_hz: f64) -> f64 {
    BOLTZMANN * NOISE_TEMPERATURE_K * bw_hz
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scenario {
    SingleCell { radius_m: f64 },
    MultiCell { lambda_y: f64 },
}

impl Scenario {
    /// Cell radius for a single cell, or the virtual radius sqrt(1/(λ_Y π)).
    pub fn virtual_radius(&self) -> f64 {
        match *self {
            Scenario::SingleCell { radius_m } => radius_m,
            Scenario::MultiCell { lambda_y } => (1.0 / (lambda_y * PI)).sqrt(),
        }
    }

    pub fn is_multi_cell(&self) -> bool {
        matches!(self, Scenario::MultiCell { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    pub fc_hz: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lambda_b: f64,
    pub len_min: f64,
    pub len_max: f64,
    pub lambda_r: f64,
    pub lambda_u: f64,
    pub n_bs: u32,
    pub n_ris: u32,
    pub n_ue: u32,
    pub psi_bs: f64,
    pub psi_ris: f64,
    pub psi_ue: f64,
    pub p0_w: f64,
    pub noise_w: f64,
    pub bw_hz: f64,
    /// Distances below this are excluded from interference path-loss terms.
    pub near_field_m: f64,
    /// Monte Carlo disk radius override for the multi-cell scenario.
    pub sim_radius_m: Option<f64>,
    pub scenario: Scenario,
}

impl Default for SystemParams {
    fn default() -> Self {
        ParamsConfig::default()
            .resolve()
            .expect("default configuration is valid")
    }
}

impl SystemParams {
    pub fn mean_blockage_len(&self) -> f64 {
        0.5 * (self.len_min + self.len_max)
    }

    /// LoS decay rate c = 2 λ_b E[L] / π, so that P_LoS(d) = exp(-c d).
    pub fn los_decay_rate(&self) -> f64 {
        2.0 * self.lambda_b * self.mean_blockage_len() / PI
    }

    pub fn p_los(&self, d: f64) -> f64 {
        (-self.los_decay_rate() * d).exp()
    }

    pub fn virtual_radius(&self) -> f64 {
        self.scenario.virtual_radius()
    }

    /// 10^α, the linear large-scale intercept.
    pub fn intercept(&self) -> f64 {
        10f64.powf(self.alpha)
    }

    /// Multiplier turning a direct distance ξ into the path-length product at
    /// which a reflected link has equal time-averaged power: (10^α N_R²)^(1/β).
    pub fn assoc_const(&self) -> f64 {
        let nr = f64::from(self.n_ris);
        (self.intercept() * nr * nr).powf(1.0 / self.beta)
    }

    /// Simulation disk radius for the multi-cell Monte Carlo engine.
    pub fn sim_radius(&self) -> f64 {
        if let Some(r) = self.sim_radius_m {
            return r;
        }
        let c = self.los_decay_rate();
        let decay = if c > 0.0 { 6.0 / c } else { 0.0 };
        decay.max(5.0 * self.virtual_radius())
    }

    /// Returns the params unchanged iff every invariant holds.
    pub fn validate(self) -> Result<Self> {
        let v = self.violations();
        if v.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidParams(v))
        }
    }

    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut bad = |field: &'static str, message: String| out.push(Violation { field, message });

        for (field, v) in [
            ("lambda_b", self.lambda_b),
            ("lambda_r", self.lambda_r),
            ("lambda_u", self.lambda_u),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                bad(field, format!("density must be finite and >= 0, got {v}"));
            }
        }
        if !(self.len_min.is_finite() && self.len_min >= 0.0) {
            bad(
                "len_min",
                format!("must be finite and >= 0, got {}", self.len_min),
            );
        }
        if !(self.len_max.is_finite() && self.len_max >= self.len_min) {
            bad(
                "len_max",
                format!(
                    "length bounds must satisfy len_min <= len_max, got [{}, {}]",
                    self.len_min, self.len_max
                ),
            );
        }
        for (field, n) in [
            ("n_bs", self.n_bs),
            ("n_ris", self.n_ris),
            ("n_ue", self.n_ue),
        ] {
            if n < 1 {
                bad(field, "element count must be >= 1".into());
            }
        }
        for (field, psi) in [
            ("psi_bs", self.psi_bs),
            ("psi_ris", self.psi_ris),
            ("psi_ue", self.psi_ue),
        ] {
            if !(psi > 0.0 && psi <= 2.0 * PI) {
                bad(field, format!("beamwidth must lie in (0, 2π], got {psi}"));
            }
        }
        if !(self.beta.is_finite() && self.beta > 2.0) {
            bad("beta", format!("beta must exceed 2, got {}", self.beta));
        }
        if !self.alpha.is_finite() {
            bad("alpha", "must be finite".into());
        }
        if !(self.fc_hz.is_finite() && self.fc_hz > 0.0) {
            bad("fc_hz", format!("must be positive, got {}", self.fc_hz));
        }
        for (field, v) in [
            ("p0_w", self.p0_w),
            ("noise_w", self.noise_w),
            ("bw_hz", self.bw_hz),
        ] {
            if !(v.is_finite() && v > 0.0) {
                bad(field, format!("must be positive, got {v}"));
            }
        }
        if !(self.near_field_m.is_finite() && self.near_field_m > 0.0) {
            bad(
                "near_field_m",
                format!("must be positive, got {}", self.near_field_m),
            );
        }
        if let Some(r) = self.sim_radius_m {
            if !(r.is_finite() && r > 0.0) {
                bad("sim_radius_m", format!("must be positive, got {r}"));
            }
        }
        match self.scenario {
            Scenario::SingleCell { radius_m } => {
                if !(radius_m.is_finite() && radius_m > 0.0) {
                    bad(
                        "radius_m",
                        format!("cell radius must be positive, got {radius_m}"),
                    );
                }
            }
            Scenario::MultiCell { lambda_y } => {
                if !(lambda_y.is_finite() && lambda_y > 0.0) {
                    bad(
                        "lambda_y",
                        format!("BS density must be positive, got {lambda_y}"),
                    );
                }
                if !(self.lambda_b * self.mean_blockage_len() > 0.0) {
                    bad(
                        "lambda_b",
                        "multi-cell integrals over the plane need lambda_b * E[L] > 0".into(),
                    );
                }
            }
        }
        out
    }
}

/// Scenario section of a configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// `single_cell` or `multi_cell`.
    #[serde(default)]
    pub kind: Option<String>,
    #[serde(default)]
    pub radius_m: Option<f64>,
    #[serde(default)]
    pub lambda_y: Option<f64>,
    #[serde(default)]
    pub virtual_radius_m: Option<f64>,
}

/// Configuration as read from JSON. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub fc_hz: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lambda_b: Option<f64>,
    pub len_min: Option<f64>,
    pub len_max: Option<f64>,
    pub lambda_r: Option<f64>,
    pub lambda_u: Option<f64>,
    pub n_bs: Option<u32>,
    pub n_ris: Option<u32>,
    pub n_ue: Option<u32>,
    pub psi_bs: Option<f64>,
    pub psi_ris: Option<f64>,
    pub psi_ue: Option<f64>,
    pub p0_w: Option<f64>,
    pub noise_w: Option<f64>,
    pub bw_hz: Option<f64>,
    pub near_field_m: Option<f64>,
    pub sim_radius_m: Option<f64>,
    pub scenario: Option<ScenarioConfig>,
}

impl ParamsConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("params: {e}")))
    }

    /// Fills defaults, derives dependent fields and validates.
    pub fn resolve(&self) -> Result<SystemParams> {
        let fc_hz = self.fc_hz.unwrap_or(DEFAULT_FC_HZ);
        let alpha = match self.alpha {
            Some(a) => a,
            None => derive_alpha(fc_hz)?,
        };
        let n_bs = self.n_bs.unwrap_or(DEFAULT_N_BS);
        let n_ris = self.n_ris.unwrap_or(DEFAULT_N_RIS);
        let n_ue = self.n_ue.unwrap_or(DEFAULT_N_UE);
        let bw_hz = self.bw_hz.unwrap_or(DEFAULT_BW_HZ);
        let scenario = self.scenario_value()?;
        SystemParams {
            fc_hz,
            alpha,
            beta: self.beta.unwrap_or(DEFAULT_BETA),
            lambda_b: self.lambda_b.unwrap_or(DEFAULT_LAMBDA_B),
            len_min: self.len_min.unwrap_or(DEFAULT_BLOCKAGE_LEN),
            len_max: self.len_max.unwrap_or(DEFAULT_BLOCKAGE_LEN),
            lambda_r: self.lambda_r.unwrap_or(DEFAULT_LAMBDA_R),
            lambda_u: self.lambda_u.unwrap_or(DEFAULT_LAMBDA_U),
            n_bs,
            n_ris,
            n_ue,
            psi_bs: self.psi_bs.unwrap_or_else(|| default_beamwidth(n_bs)),
            psi_ris: self.psi_ris.unwrap_or_else(|| default_beamwidth(n_ris)),
            psi_ue: self.psi_ue.unwrap_or_else(|| default_beamwidth(n_ue)),
            p0_w: self.p0_w.unwrap_or(DEFAULT_P0_W),
            noise_w: self.noise_w.unwrap_or_else(|| thermal_noise_w(bw_hz)),
            bw_hz,
            near_field_m: self.near_field_m.unwrap_or(DEFAULT_NEAR_FIELD_M),
            sim_radius_m: self.sim_radius_m,
            scenario,
        }
        .validate()
    }

    fn scenario_value(&self) -> Result<Scenario> {
        let Some(sc) = &self.scenario else {
            return Ok(Scenario::SingleCell {
                radius_m: DEFAULT_RADIUS_M,
            });
        };
        match sc.kind.as_deref().unwrap_or("single_cell") {
            "single_cell" => Ok(Scenario::SingleCell {
                radius_m: sc.radius_m.unwrap_or(DEFAULT_RADIUS_M),
            }),
            "multi_cell" => {
                let lambda_y = match (sc.lambda_y, sc.virtual_radius_m) {
                    (Some(l), _) => l,
                    (None, Some(rv)) => 1.0 / (PI * rv * rv),
                    (None, None) => 1.0 / (PI * 200.0 * 200.0),
                };
                Ok(Scenario::MultiCell { lambda_y })
            }
            other => Err(Error::Config(format!(
                "unknown scenario kind `{other}` (expected single_cell or multi_cell)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn alpha_at_reference_frequencies() {
        assert_eq!(derive_alpha(1e9).unwrap(), -2.8);
        assert!((derive_alpha(10e9).unwrap() - (-4.8)).abs() < 1e-12);
        // -2.8 - 2 log10(28) = -5.69431...
        let a28 = derive_alpha(28e9).unwrap();
        assert!((a28 - (-5.694_316_062_684_438)).abs() < 1e-12, "{a28}");
    }

    #[test]
    fn alpha_rejects_non_positive_frequency() {
        assert!(derive_alpha(0.0).is_err());
        assert!(derive_alpha(-1.0).is_err());
    }

    #[test]
    fn defaults_validate() {
        let p = SystemParams::default();
        assert_eq!(p.beta, 2.2);
        assert_eq!(p.mean_blockage_len(), 15.0);
        assert!((p.noise_w - 8.008e-13).abs() < 1e-15);
        assert!((p.psi_bs - PI / 4.0).abs() < 1e-15);
    }

    #[test]
    fn beta_boundary() {
        let cfg = ParamsConfig {
            beta: Some(1.9),
            ..Default::default()
        };
        let err = cfg.resolve().unwrap_err().to_string();
        assert!(err.contains("beta must exceed 2"), "{err}");
    }

    #[test]
    fn length_bounds_reported_with_all_other_violations() {
        let mut p = SystemParams::default();
        p.len_min = 20.0;
        p.len_max = 10.0;
        p.n_ue = 0;
        let v = p.violations();
        assert!(v.iter().any(|x| x.field == "len_max"));
        assert!(v.iter().any(|x| x.field == "n_ue"));
        assert_eq!(v.len(), 2);
    }

    #[test]
    fn multi_cell_needs_blockages() {
        let cfg = ParamsConfig {
            lambda_b: Some(0.0),
            scenario: Some(ScenarioConfig {
                kind: Some("multi_cell".into()),
                virtual_radius_m: Some(200.0),
                ..Default::default()
            }),
            ..Default::default()
        };
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn virtual_radius_round_trips_through_density() {
        let cfg = ParamsConfig {
            scenario: Some(ScenarioConfig {
                kind: Some("multi_cell".into()),
                virtual_radius_m: Some(250.0),
                ..Default::default()
            }),
            ..Default::default()
        };
        let p = cfg.resolve().unwrap();
        assert!((p.virtual_radius() - 250.0).abs() < 1e-9);
    }

    #[test]
    fn unknown_field_is_rejected() {
        assert!(ParamsConfig::from_json(r#"{"lambda_q": 1.0}"#).is_err());
    }

    proptest! {
        #[test]
        fn alpha_strictly_decreasing(f in 1e6f64..1e12, k in 1.0001f64..10.0) {
            prop_assert!(derive_alpha(f * k).unwrap() < derive_alpha(f).unwrap());
        }

        #[test]
        fn json_round_trip_is_bitwise(
            lb in 0.0f64..1e-2, lr in 0.0f64..1e-2, beta in 2.0001f64..5.0,
            p0 in 1e-3f64..10.0, alpha in -9.0f64..0.0, multi in any::<bool>(),
            dens in 1e-7f64..1e-4,
        ) {
            let mut p = SystemParams::default();
            p.lambda_b = lb;
            p.lambda_r = lr;
            p.beta = beta;
            p.p0_w = p0;
            p.alpha = alpha;
            if multi {
                p.scenario = Scenario::MultiCell { lambda_y: dens };
            }
            let text = serde_json::to_string(&p).unwrap();
            let back: SystemParams = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back.lambda_b.to_bits(), p.lambda_b.to_bits());
            prop_assert_eq!(back.alpha.to_bits(), p.alpha.to_bits());
            prop_assert_eq!(back.beta.to_bits(), p.beta.to_bits());
            prop_assert_eq!(back, p);
        }
    }
}

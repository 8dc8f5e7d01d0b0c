//! Problem constants, road geometry and configuration loading.
//!
//! Every other module reads the fixed constants from [`ScenarioParams`];
//! [`SimConfig`] holds the knobs of a single simulation run. Both are
//! loaded from one TOML document with a `[scenario]` and a `[sim]` table:
//!
//! ```toml
//! [scenario]
//! alpha = 0.25      # beta is derived unless given explicitly
//!
//! [sim]
//! horizon = 1800.0
//! noise_enabled = true
//! ```
//!
//! Missing keys take the defaults of the reference merging scenario.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("failed to serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

impl ConfigError {
    pub fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field,
            reason: reason.into(),
        }
    }
}

/// Fixed constants of the merging problem.
///
/// Lengths are in metres, speeds in m/s, accelerations in m/s².
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    /// Origin O2/O3 to the merging point M2.
    #[serde(rename = "L2")]
    pub l2: f64,
    /// Control-zone length: origin to M3.
    #[serde(rename = "L3")]
    pub l3: f64,
    /// Origin O1 to M4 along lane 1.
    #[serde(rename = "L4")]
    pub l4: f64,
    /// Extra distance travelled by a lane change.
    pub l_extra: f64,
    /// Reaction time (s).
    pub phi: f64,
    /// Standstill gap.
    pub delta: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Time/energy trade-off the weight `beta` was derived from, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Weight of travel time against `½u²` energy.
    pub beta: f64,
    /// CLF convergence rate.
    pub eps_clf: f64,
    /// Gain `c` of the cubic class-K function `γ(b) = c·b³`.
    pub classk_gain: f64,
    /// Control and integration step (s).
    pub dt: f64,
    /// Earliest position at which a lane-2 vehicle may change to lane 1.
    pub min_merge_point: f64,
    /// Add the one-step term `Φ'·v·dt` to the merging rows' control
    /// coefficient, so the rows hold exactly under forward Euler.
    pub merge_step_correction: bool,
    /// Road capacity `n` used to offset lane-1 queue indices.
    pub capacity_n: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            l2: 400.0,
            l3: 407.0,
            l4: 406.0622,
            l_extra: 0.9378,
            phi: 1.8,
            delta: 0.0,
            v_min: 0.0,
            v_max: 30.0,
            u_min: -5.886,
            u_max: 3.924,
            alpha: None,
            beta: 1.0,
            eps_clf: 10.0,
            classk_gain: 1.0,
            dt: 0.1,
            min_merge_point: 100.0,
            merge_step_correction: true,
            capacity_n: 1000,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [
            ("L2", self.l2),
            ("L3", self.l3),
            ("L4", self.l4),
            ("l_extra", self.l_extra),
            ("phi", self.phi),
            ("delta", self.delta),
            ("v_min", self.v_min),
            ("v_max", self.v_max),
            ("u_min", self.u_min),
            ("u_max", self.u_max),
            ("beta", self.beta),
            ("eps_clf", self.eps_clf),
            ("classk_gain", self.classk_gain),
            ("dt", self.dt),
            ("min_merge_point", self.min_merge_point),
        ] {
            if !value.is_finite() {
                return Err(ConfigError::invalid(field, "must be finite"));
            }
        }
        if self.v_min < 0.0 {
            return Err(ConfigError::invalid("v_min", "must be nonnegative"));
        }
        if self.v_max <= self.v_min {
            return Err(ConfigError::invalid("v_max", "must exceed v_min"));
        }
        if self.u_min >= 0.0 {
            return Err(ConfigError::invalid("u_min", "must be negative"));
        }
        if self.u_max <= 0.0 {
            return Err(ConfigError::invalid("u_max", "must be positive"));
        }
        if self.phi <= 0.0 {
            return Err(ConfigError::invalid("phi", "must be positive"));
        }
        if self.delta < 0.0 {
            return Err(ConfigError::invalid("delta", "must be nonnegative"));
        }
        if self.dt <= 0.0 {
            return Err(ConfigError::invalid("dt", "must be positive"));
        }
        if self.l_extra < 0.0 {
            return Err(ConfigError::invalid("l_extra", "must be nonnegative"));
        }
        if !(0.0 < self.l2 && self.l2 < self.l3) {
            return Err(ConfigError::invalid("L2", "must lie in (0, L3)"));
        }
        // M4 sits on lane 1 between M2 (seen from lane 1) and the lane-1 exit.
        if !(self.l2 - self.l_extra < self.l4 && self.l4 <= self.l3) {
            return Err(ConfigError::invalid("L4", "must lie in (L2 - l_extra, L3]"));
        }
        if self.beta < 0.0 {
            return Err(ConfigError::invalid("beta", "must be nonnegative"));
        }
        if let Some(alpha) = self.alpha {
            if !(0.0..1.0).contains(&alpha) {
                return Err(ConfigError::invalid("alpha", "must lie in [0, 1)"));
            }
        }
        if self.eps_clf <= 0.0 {
            return Err(ConfigError::invalid("eps_clf", "must be positive"));
        }
        if self.classk_gain <= 0.0 {
            return Err(ConfigError::invalid("classk_gain", "must be positive"));
        }
        if !(0.0..=self.l2).contains(&self.min_merge_point) {
            return Err(ConfigError::invalid("min_merge_point", "must lie in [0, L2]"));
        }
        if self.capacity_n == 0 {
            return Err(ConfigError::invalid("capacity_n", "must be positive"));
        }
        Ok(())
    }

    /// Largest squared control magnitude, `max(u_max², u_min²)`.
    pub fn max_control_sq(&self) -> f64 {
        self.u_max.powi(2).max(self.u_min.powi(2))
    }

    /// Position of M4 measured from O2/O3 (lane 1 seen through a lane change).
    pub fn m4_from_lane2(&self) -> f64 {
        self.l4 + self.l_extra
    }
}

/// Converts the normalized trade-off `alpha ∈ [0, 1)` into the time weight
/// `beta = alpha·max(u_max², u_min²) / (2(1 − alpha))`.
///
/// `alpha = 1` is the pure minimum-time problem and has no finite weight.
pub fn beta_from_alpha(alpha: f64, u_min: f64, u_max: f64) -> Result<f64, ConfigError> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(ConfigError::invalid("alpha", "must lie in [0, 1)"));
    }
    if alpha >= 1.0 {
        return Err(ConfigError::invalid(
            "alpha",
            "alpha >= 1 is the minimum-time problem and has no finite beta",
        ));
    }
    let max_sq = u_max.powi(2).max(u_min.powi(2));
    Ok(alpha * max_sq / (2.0 * (1.0 - alpha)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ControllerMode {
    /// Track the unconstrained optimal trajectory through the CLF row.
    Ocbf,
    /// Drive towards `v_max` with zero reference control.
    CbfOnly,
}

impl std::fmt::Display for ControllerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ControllerMode::Ocbf => f.write_str("OCBF"),
            ControllerMode::CbfOnly => f.write_str("CBF"),
        }
    }
}

/// Settings of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Main-road (lanes 1 and 2) arrival rate, vehicles per hour.
    pub arrival_rate_main: f64,
    /// Merging-road (lanes 3 and 4) arrival rate, vehicles per hour.
    pub arrival_rate_merge: f64,
    pub v0_low: f64,
    pub v0_high: f64,
    pub noise_enabled: bool,
    /// Bound of the uniform position-channel noise (m/s).
    pub w1_bound: f64,
    /// Bound of the uniform acceleration-channel noise (m/s²).
    pub w2_bound: f64,
    pub rng_seed: u64,
    /// Simulated seconds.
    pub horizon: f64,
    pub controller_mode: ControllerMode,
    /// Probability that an arrival on a road takes its first lane (l1 or l3).
    pub lane_split: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            arrival_rate_main: 2000.0,
            arrival_rate_merge: 1200.0,
            v0_low: 15.0,
            v0_high: 20.0,
            noise_enabled: false,
            w1_bound: 2.0,
            w2_bound: 0.05,
            rng_seed: 0,
            horizon: 3600.0,
            controller_mode: ControllerMode::Ocbf,
            lane_split: 0.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self, params: &ScenarioParams) -> Result<(), ConfigError> {
        if !(self.arrival_rate_main >= 0.0 && self.arrival_rate_main.is_finite()) {
            return Err(ConfigError::invalid("arrival_rate_main", "must be nonnegative"));
        }
        if !(self.arrival_rate_merge >= 0.0 && self.arrival_rate_merge.is_finite()) {
            return Err(ConfigError::invalid("arrival_rate_merge", "must be nonnegative"));
        }
        if self.v0_low > self.v0_high {
            return Err(ConfigError::invalid("v0_low", "v0 range inverted"));
        }
        if self.v0_low < params.v_min || self.v0_high > params.v_max {
            return Err(ConfigError::invalid("v0_high", "v0 range outside [v_min, v_max]"));
        }
        if self.v0_low <= 0.0 {
            return Err(ConfigError::invalid("v0_low", "initial speeds must be positive"));
        }
        if !(self.w1_bound >= 0.0) {
            return Err(ConfigError::invalid("w1_bound", "must be nonnegative"));
        }
        if !(self.w2_bound >= 0.0) {
            return Err(ConfigError::invalid("w2_bound", "must be nonnegative"));
        }
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::invalid("horizon", "must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.lane_split) {
            return Err(ConfigError::invalid("lane_split", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// On-disk shape of `[scenario]`: every key optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(rename = "L2")]
    l2: Option<f64>,
    #[serde(rename = "L3")]
    l3: Option<f64>,
    #[serde(rename = "L4")]
    l4: Option<f64>,
    l_extra: Option<f64>,
    phi: Option<f64>,
    delta: Option<f64>,
    v_min: Option<f64>,
    v_max: Option<f64>,
    u_min: Option<f64>,
    u_max: Option<f64>,
    alpha: Option<f64>,
    beta: Option<f64>,
    eps_clf: Option<f64>,
    classk_gain: Option<f64>,
    dt: Option<f64>,
    min_merge_point: Option<f64>,
    merge_step_correction: Option<bool>,
    capacity_n: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    #[serde(default)]
    scenario: RawScenario,
    #[serde(default)]
    sim: SimConfig,
}

#[derive(Serialize)]
struct DocumentRef<'a> {
    scenario: &'a ScenarioParams,
    sim: &'a SimConfig,
}

impl RawScenario {
    fn resolve(self) -> Result<ScenarioParams, ConfigError> {
        let d = ScenarioParams::default();
        let mut p = ScenarioParams {
            l2: self.l2.unwrap_or(d.l2),
            l3: self.l3.unwrap_or(d.l3),
            l4: self.l4.unwrap_or(d.l4),
            l_extra: self.l_extra.unwrap_or(d.l_extra),
            phi: self.phi.unwrap_or(d.phi),
            delta: self.delta.unwrap_or(d.delta),
            v_min: self.v_min.unwrap_or(d.v_min),
            v_max: self.v_max.unwrap_or(d.v_max),
            u_min: self.u_min.unwrap_or(d.u_min),
            u_max: self.u_max.unwrap_or(d.u_max),
            alpha: self.alpha,
            beta: d.beta,
            eps_clf: self.eps_clf.unwrap_or(d.eps_clf),
            classk_gain: self.classk_gain.unwrap_or(d.classk_gain),
            dt: self.dt.unwrap_or(d.dt),
            min_merge_point: self.min_merge_point.unwrap_or(d.min_merge_point),
            merge_step_correction: self.merge_step_correction.unwrap_or(d.merge_step_correction),
            capacity_n: self.capacity_n.unwrap_or(d.capacity_n),
        };
        // An explicit beta wins over one derived from alpha.
        p.beta = match (self.beta, self.alpha) {
            (Some(beta), _) => beta,
            (None, Some(alpha)) => beta_from_alpha(alpha, p.u_min, p.u_max)?,
            (None, None) => d.beta,
        };
        Ok(p)
    }
}

/// Parses a TOML document into validated parameters.
pub fn load_config(source: &str) -> Result<(ScenarioParams, SimConfig), ConfigError> {
    let raw: RawDocument = toml::from_str(source)?;
    let params = raw.scenario.resolve()?;
    params.validate()?;
    raw.sim.validate(&params)?;
    Ok((params, raw.sim))
}

/// Serializes both parameter sets into a document `load_config` accepts.
pub fn save_config(params: &ScenarioParams, sim: &SimConfig) -> Result<String, ConfigError> {
    Ok(toml::to_string(&DocumentRef {
        scenario: params,
        sim,
    })?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn empty_document_gives_reference_defaults() {
        let (p, s) = load_config("").unwrap();
        assert_eq!(p.l2, 400.0);
        assert_eq!(p.l3, 407.0);
        assert_eq!(p.l4, 406.0622);
        assert_eq!(p.l_extra, 0.9378);
        assert_eq!(p.phi, 1.8);
        assert_eq!(p.delta, 0.0);
        assert_eq!(p.u_max, 3.924);
        assert_eq!(p.u_min, -5.886);
        assert_eq!(p.v_max, 30.0);
        assert_eq!(p.v_min, 0.0);
        assert_eq!(p.beta, 1.0);
        assert_eq!(p.eps_clf, 10.0);
        assert_eq!(p.dt, 0.1);
        assert_eq!(p.classk_gain, 1.0);
        assert_eq!(s, SimConfig::default());
    }

    #[test]
    fn alpha_override_derives_beta() {
        let (p, _) = load_config("[scenario]\nalpha = 0.25\n").unwrap();
        // u_min² = 34.645 dominates u_max².
        let expected = 0.25 * 5.886f64.powi(2) / (2.0 * 0.75);
        assert_relative_eq!(p.beta, expected, epsilon = 1e-12);
        assert!((p.beta - 5.774).abs() < 1e-3);
        assert_eq!(p.alpha, Some(0.25));
    }

    #[test]
    fn explicit_beta_wins_over_alpha() {
        let (p, _) = load_config("[scenario]\nalpha = 0.25\nbeta = 2.5\n").unwrap();
        assert_eq!(p.beta, 2.5);
    }

    #[test]
    fn inverted_speed_range_is_rejected() {
        let err = load_config("[sim]\nv0_low = 25.0\nv0_high = 20.0\n").unwrap_err();
        assert!(err.to_string().contains("v0 range inverted"), "{err}");
    }

    #[test]
    fn invariant_violations_name_the_field() {
        let err = load_config("[scenario]\nu_min = 1.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "u_min", .. }));
        let err = load_config("[scenario]\nL2 = 500.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "L2", .. }));
        let err = load_config("[scenario]\nalpha = 1.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { field: "alpha", .. }));
    }

    #[test]
    fn malformed_document_is_a_parse_error() {
        assert!(matches!(load_config("[scenario\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(load_config("[scenario]\nbogus = 1\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn mode_parses_from_text() {
        let (_, s) = load_config("[sim]\ncontroller_mode = \"CBF_ONLY\"\n").unwrap();
        assert_eq!(s.controller_mode, ControllerMode::CbfOnly);
    }

    #[test]
    fn beta_from_alpha_examples() {
        assert_eq!(beta_from_alpha(0.0, -5.886, 3.924).unwrap(), 0.0);
        assert_relative_eq!(beta_from_alpha(0.5, -2.0, 2.0).unwrap(), 2.0);
        let b = beta_from_alpha(0.01, -5.886, 3.924).unwrap();
        assert!((b - 0.175).abs() < 5e-4, "{b}");
        assert!(beta_from_alpha(1.0, -5.886, 3.924).is_err());
        assert!(beta_from_alpha(-0.1, -5.886, 3.924).is_err());
    }

    proptest! {
        #[test]
        fn beta_is_strictly_increasing_in_alpha(a in 0.0f64..0.98, gap in 1e-4f64..0.01) {
            let b1 = beta_from_alpha(a, -5.886, 3.924).unwrap();
            let b2 = beta_from_alpha(a + gap, -5.886, 3.924).unwrap();
            prop_assert!(b2 > b1);
        }

        #[test]
        fn config_round_trips(
            alpha in proptest::option::of(0.0f64..0.9),
            phi in 0.5f64..3.0,
            seed in 0u64..(i64::MAX as u64),
            horizon in 0.0f64..7200.0,
            noise in any::<bool>(),
        ) {
            let mut p = ScenarioParams { phi, alpha, ..ScenarioParams::default() };
            if let Some(a) = alpha {
                p.beta = beta_from_alpha(a, p.u_min, p.u_max).unwrap();
            }
            let s = SimConfig { rng_seed: seed, horizon, noise_enabled: noise, ..SimConfig::default() };
            let text = save_config(&p, &s).unwrap();
            let (p2, s2) = load_config(&text).unwrap();
            prop_assert_eq!(p, p2);
            prop_assert_eq!(s, s2);
        }
    }
}

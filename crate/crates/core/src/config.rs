//! Run configuration: flat `section.key = value` text (TOML dotted keys).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adversary::{AttackConfig, BasisPolicy};
use crate::detection::{self, Equalization, Optics, SlitPair, StationConfig};
use crate::protocol::{SessionConfig, DEFAULT_QBER_THRESHOLD};
use crate::source::{self, CalibrationTargets, FixedWidths, PumpProfile, SourceModel};
use crate::{Basis, Error, Result, Side};

pub const SEED_ENV: &str = "EPR_QKD_SEED";
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub sigma_plus_mm: f64,
    pub kappa_plus_per_mm: f64,
    pub pump_waist_mm: f64,
    pub target_var_x_minus_mm2: f64,
    pub target_var_p_plus_per_mm2: f64,
    /// Setting both of these skips calibration.
    pub sigma_minus_mm: Option<f64>,
    pub kappa_minus_per_mm: Option<f64>,
}

impl Default for SourceSection {
    fn default() -> Self {
        let targets = CalibrationTargets::default();
        SourceSection {
            sigma_plus_mm: 3.0,
            kappa_plus_per_mm: 7.0,
            pump_waist_mm: 2.0,
            target_var_x_minus_mm2: targets.var_x_minus,
            target_var_p_plus_per_mm2: targets.var_p_plus,
            sigma_minus_mm: None,
            kappa_minus_per_mm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StationsSection {
    /// Overrides `optics` when set.
    pub alpha: Option<f64>,
    pub momentum_scale_mm2: Option<f64>,
    pub optics: Option<Optics>,
    pub axis_mm: f64,
    pub x_slit_width_mm: f64,
    pub p_slit_width_mm: f64,
    pub bob_x_centers_mm: [f64; 2],
    pub bob_p_centers_mm: [f64; 2],
    /// When absent Alice's centers start at Bob's and may be optimized.
    pub alice_x_centers_mm: Option<[f64; 2]>,
    pub alice_p_centers_mm: Option<[f64; 2]>,
    pub optimize_alice_centers: bool,
    pub equalize: bool,
}

impl Default for StationsSection {
    fn default() -> Self {
        StationsSection {
            alpha: None,
            momentum_scale_mm2: None,
            optics: None,
            axis_mm: detection::DEFAULT_AXIS_MM,
            x_slit_width_mm: detection::X_SLIT_WIDTH_MM,
            p_slit_width_mm: detection::P_SLIT_WIDTH_MM,
            bob_x_centers_mm: detection::BOB_CENTERS_MM,
            bob_p_centers_mm: detection::BOB_CENTERS_MM,
            alice_x_centers_mm: None,
            alice_p_centers_mm: None,
            optimize_alice_centers: true,
            equalize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionSection {
    pub coincidences: usize,
    pub estimation_pairs: usize,
    pub qber_threshold: f64,
    pub max_emitted_pairs: Option<u64>,
}

impl Default for SessionSection {
    fn default() -> Self {
        SessionSection {
            coincidences: 100_000,
            estimation_pairs: 10_000,
            qber_threshold: DEFAULT_QBER_THRESHOLD,
            max_emitted_pairs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub policy: BasisPolicy,
    pub p_same_basis_correct: f64,
    pub p_cross_basis: [f64; 2],
}

impl Default for AttackSection {
    fn default() -> Self {
        let a = AttackConfig::none();
        AttackSection { policy: a.basis_policy, p_same_basis_correct: a.p_same_basis_correct, p_cross_basis: a.p_cross_basis }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub pairs_per_point: u64,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection { pairs_per_point: 500_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub source: SourceSection,
    pub stations: StationsSection,
    pub session: SessionSection,
    pub attack: AttackSection,
    pub scan: ScanSection,
    pub output: OutputSection,
}

/// A calibrated source together with the two configured stations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Setup {
    pub source: SourceModel,
    pub alice: StationConfig,
    pub bob: StationConfig,
    pub equalization: Option<Equalization>,
}

impl Setup {
    /// The default configuration, calibrated, optimized and equalized.
    pub fn calibrated_default() -> Result<Setup> {
        RunConfig::default().build_setup()
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        RunConfig::from_toml_str(&text)
    }

    /// Runs every constructor-level check without doing any numerical work.
    pub fn validate(&self) -> Result<()> {
        self.session_config(DEFAULT_SEED)?;
        self.attack_config().validate()?;
        self.base_stations()?;
        PumpProfile::new(self.source.pump_waist_mm)?;
        if self.scan.pairs_per_point == 0 {
            return Err(Error::invalid("scan.pairs_per_point", "must be positive"));
        }
        match (self.source.sigma_minus_mm, self.source.kappa_minus_per_mm) {
            (Some(_), None) | (None, Some(_)) => Err(Error::invalid(
                "source.sigma_minus_mm",
                "set both source.sigma_minus_mm and source.kappa_minus_per_mm, or neither",
            )),
            _ => Ok(()),
        }
    }

    pub fn session_config(&self, seed: u64) -> Result<SessionConfig> {
        let mut s = SessionConfig::new(
            self.session.coincidences,
            self.session.estimation_pairs,
            self.session.qber_threshold,
            seed,
        )?;
        s.max_emitted_pairs = self.session.max_emitted_pairs;
        s.validate()?;
        Ok(s)
    }

    pub fn attack_config(&self) -> AttackConfig {
        AttackConfig {
            basis_policy: self.attack.policy,
            p_same_basis_correct: self.attack.p_same_basis_correct,
            p_cross_basis: self.attack.p_cross_basis,
            eve_station: None,
        }
    }

    /// Stations before source-dependent optimization and equalization.
    pub fn base_stations(&self) -> Result<(StationConfig, StationConfig)> {
        let st = &self.stations;
        let (mut alpha, mut scale) = (detection::DEFAULT_ALPHA, detection::DEFAULT_MOMENTUM_SCALE_MM2);
        if let Some(o) = &st.optics {
            for (name, v) in [
                ("stations.optics.object_distance_mm", o.object_distance_mm),
                ("stations.optics.image_distance_mm", o.image_distance_mm),
                ("stations.optics.focal_length_mm", o.focal_length_mm),
                ("stations.optics.wavelength_nm", o.wavelength_nm),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invalid(name, format!("must be positive, got {v}")));
                }
            }
            alpha = o.alpha();
            scale = o.fourier_scale_mm2();
        }
        alpha = st.alpha.unwrap_or(alpha);
        scale = st.momentum_scale_mm2.unwrap_or(scale);
        let build = |side: Side, x: [f64; 2], p: [f64; 2]| -> Result<StationConfig> {
            StationConfig::new(
                alpha,
                scale,
                st.axis_mm,
                side == Side::Bob,
                SlitPair::symmetric(x, st.x_slit_width_mm, Basis::X)?,
                SlitPair::symmetric(p, st.p_slit_width_mm, Basis::P)?,
            )
        };
        let bob = build(Side::Bob, st.bob_x_centers_mm, st.bob_p_centers_mm)?;
        let alice = build(
            Side::Alice,
            st.alice_x_centers_mm.unwrap_or(st.bob_x_centers_mm),
            st.alice_p_centers_mm.unwrap_or(st.bob_p_centers_mm),
        )?;
        Ok((alice, bob))
    }

    pub fn build_source(&self, alice: &StationConfig, bob: &StationConfig) -> Result<SourceModel> {
        let src = &self.source;
        let pump = PumpProfile::new(src.pump_waist_mm)?;
        match (src.sigma_minus_mm, src.kappa_minus_per_mm) {
            (Some(s), Some(k)) => SourceModel::new(s, src.sigma_plus_mm, k, src.kappa_plus_per_mm, pump),
            _ => source::calibrate_source(
                &CalibrationTargets {
                    var_x_minus: src.target_var_x_minus_mm2,
                    var_p_plus: src.target_var_p_plus_per_mm2,
                },
                &FixedWidths { sigma_plus: src.sigma_plus_mm, kappa_plus: src.kappa_plus_per_mm, pump },
                alice,
                bob,
            ),
        }
    }

    pub fn build_setup(&self) -> Result<Setup> {
        self.validate()?;
        let (mut alice, mut bob) = self.base_stations()?;
        let source = self.build_source(&alice, &bob)?;
        let explicit_alice = self.stations.alice_x_centers_mm.is_some() || self.stations.alice_p_centers_mm.is_some();
        if self.stations.optimize_alice_centers && !explicit_alice {
            alice = detection::optimize_alice_centers(&source, &alice, &bob)?;
        }
        let mut equalization = None;
        if self.stations.equalize {
            let eq = detection::equalize_levels(&source, &alice, &bob)?;
            alice = eq.alice;
            bob = eq.bob;
            equalization = Some(eq);
        }
        Ok(Setup { source, alice, bob, equalization })
    }
}

/// Seed precedence: explicit value, then the environment override, then the
/// configuration file, then [`DEFAULT_SEED`].
pub fn resolve_seed(explicit: Option<u64>, config: Option<&RunConfig>) -> Result<u64> {
    if let Some(s) = explicit {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => {
            return v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer")))
        }
        Err(std::env::VarError::NotUnicode(_)) => {
            return Err(Error::Config(format!("{SEED_ENV} is not valid unicode")));
        }
        Err(std::env::VarError::NotPresent) => {}
    }
    Ok(config.and_then(|c| c.seed).unwrap_or(DEFAULT_SEED))
}

//! Gaussian model of the transverse two-photon state.
//!
//! The pair is described by four independent normal variables: the position
//! difference and sum, and the momentum sum and difference. A single latent
//! sample carries both quadratures of both photons, and each station reads out
//! whichever one its basis selects.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::detection::{self, StationConfig};
use crate::{roots, Basis, Error, Result};

/// Bound on the variance product below which the state is EPR entangled (ħ = 1).
pub const EPR_BOUND: f64 = 0.25;

pub(crate) fn normal_pdf(x: f64, sd: f64) -> f64 {
    let z = x / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

fn require_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be positive and finite, got {value}")))
    }
}

/// Gaussian pump spot at the crystal face.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PumpProfile {
    waist_mm: f64,
}

impl PumpProfile {
    pub fn new(waist_mm: f64) -> Result<Self> {
        require_positive("pump.waist_mm", waist_mm)?;
        Ok(PumpProfile { waist_mm })
    }

    pub fn waist_mm(&self) -> f64 {
        self.waist_mm
    }

    /// Width of the angular spectrum, the Fourier conjugate of the waist (mm⁻¹).
    /// This is the smallest momentum-sum spread a pump of this size allows.
    pub fn angular_width(&self) -> f64 {
        1.0 / self.waist_mm
    }
}

/// Validated Gaussian source.
///
/// `sigma_minus`: std. dev. of x_A − x_B (mm); `sigma_plus`: of x_A + x_B (mm);
/// `kappa_minus`: of p_A + p_B (mm⁻¹); `kappa_plus`: of p_A − p_B (mm⁻¹).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceModel {
    pub sigma_minus: f64,
    pub sigma_plus: f64,
    pub kappa_minus: f64,
    pub kappa_plus: f64,
    pub pump: PumpProfile,
}

impl SourceModel {
    /// Builds a source, rejecting non-positive widths and states whose
    /// Wigner function would not be positive.
    pub fn new(
        sigma_minus: f64,
        sigma_plus: f64,
        kappa_minus: f64,
        kappa_plus: f64,
        pump: PumpProfile,
    ) -> Result<Self> {
        require_positive("sigma_minus", sigma_minus)?;
        require_positive("sigma_plus", sigma_plus)?;
        require_positive("kappa_minus", kappa_minus)?;
        require_positive("kappa_plus", kappa_plus)?;
        let diff = sigma_minus * sigma_minus * kappa_plus * kappa_plus;
        if diff < 1.0 {
            return Err(Error::Unphysical(format!(
                "sigma_minus² · kappa_plus² = {diff:.4} < 1"
            )));
        }
        let sum = sigma_plus * sigma_plus * kappa_minus * kappa_minus;
        if sum < 1.0 {
            return Err(Error::Unphysical(format!(
                "sigma_plus² · kappa_minus² = {sum:.4} < 1"
            )));
        }
        Ok(SourceModel { sigma_minus, sigma_plus, kappa_minus, kappa_plus, pump })
    }

    /// Builds a source without the physicality checks. Zero widths are
    /// accepted, which gives perfectly correlated samples; densities are
    /// undefined in that limit. Meant for limiting-case tests.
    pub fn new_unchecked(
        sigma_minus: f64,
        sigma_plus: f64,
        kappa_minus: f64,
        kappa_plus: f64,
        pump: PumpProfile,
    ) -> Self {
        SourceModel { sigma_minus, sigma_plus, kappa_minus, kappa_plus, pump }
    }

    /// σ₋² κ₋², the variance product of x_A − x_B and p_A + p_B.
    pub fn epr_product(&self) -> f64 {
        (self.sigma_minus * self.kappa_minus).powi(2)
    }

    pub fn is_entangled(&self) -> bool {
        self.epr_product() < EPR_BOUND
    }

    /// Std. dev. of the single-photon marginal in the given basis.
    pub fn marginal_sd(&self, basis: Basis) -> f64 {
        match basis {
            Basis::X => 0.5 * self.sigma_plus.hypot(self.sigma_minus),
            Basis::P => 0.5 * self.kappa_minus.hypot(self.kappa_plus),
        }
    }

    /// Single-photon density of the latent coordinate `u` (same for both photons).
    pub fn marginal_density(&self, basis: Basis, u: f64) -> f64 {
        normal_pdf(u, self.marginal_sd(basis))
    }

    /// Std. devs. of the (sum, difference) pair that parameterise a same-basis readout.
    fn sum_difference_widths(&self, basis: Basis) -> (f64, f64) {
        match basis {
            Basis::X => (self.sigma_plus, self.sigma_minus),
            Basis::P => (self.kappa_minus, self.kappa_plus),
        }
    }

    /// Joint density of Alice's and Bob's latent readout variables.
    ///
    /// Same basis: `2 φ(u_A + u_B; s_sum) φ(u_A − u_B; s_diff)`, the factor 2
    /// being the Jacobian of the sum/difference change of variables. Mixed
    /// bases factorize into the two single-photon marginals.
    pub fn joint_density(&self, basis_a: Basis, basis_b: Basis, u_a: f64, u_b: f64) -> f64 {
        if basis_a == basis_b {
            let (sum_sd, diff_sd) = self.sum_difference_widths(basis_a);
            2.0 * normal_pdf(u_a + u_b, sum_sd) * normal_pdf(u_a - u_b, diff_sd)
        } else {
            self.marginal_density(basis_a, u_a) * self.marginal_density(basis_b, u_b)
        }
    }

    /// Regression of Bob's latent variable on Alice's: returns `(slope, sd)`
    /// such that `u_B | u_A ~ N(slope · u_A, sd²)`.
    pub fn conditional_line(&self, basis_a: Basis, basis_b: Basis) -> (f64, f64) {
        if basis_a != basis_b {
            return (0.0, self.marginal_sd(basis_b));
        }
        let (sum_sd, diff_sd) = self.sum_difference_widths(basis_a);
        let (s2, d2) = (sum_sd * sum_sd, diff_sd * diff_sd);
        ((s2 - d2) / (s2 + d2), (s2 * d2 / (s2 + d2)).sqrt())
    }

    /// Draws one pair from the latent 4D Gaussian.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> PairSample {
        let z: [f64; 4] = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let x_sum = self.sigma_plus * z[0];
        let x_diff = self.sigma_minus * z[1];
        let p_sum = self.kappa_minus * z[2];
        let p_diff = self.kappa_plus * z[3];
        PairSample {
            x_a: 0.5 * (x_sum + x_diff),
            x_b: 0.5 * (x_sum - x_diff),
            p_a: 0.5 * (p_sum + p_diff),
            p_b: 0.5 * (p_sum - p_diff),
        }
    }
}

/// Latent crystal-plane coordinates of one photon pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairSample {
    pub x_a: f64,
    pub x_b: f64,
    pub p_a: f64,
    pub p_b: f64,
}

impl PairSample {
    pub fn coordinate(&self, basis: Basis, side: crate::Side) -> f64 {
        use crate::Side::*;
        match (basis, side) {
            (Basis::X, Alice) => self.x_a,
            (Basis::X, Bob) => self.x_b,
            (Basis::P, Alice) => self.p_a,
            (Basis::P, Bob) => self.p_b,
        }
    }
}

/// Detected variances the calibrated source must reproduce.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    /// Detected Δ²(x_A − x_B), mm².
    pub var_x_minus: f64,
    /// Detected Δ²(p_A + p_B), mm⁻².
    pub var_p_plus: f64,
}

impl Default for CalibrationTargets {
    /// Averages of the measured variances: (0.152 + 0.080)/2 and (0.912 + 0.875)/2.
    fn default() -> Self {
        CalibrationTargets { var_x_minus: 0.116, var_p_plus: 0.8935 }
    }
}

/// The two widths calibration leaves alone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedWidths {
    pub sigma_plus: f64,
    pub kappa_plus: f64,
    pub pump: PumpProfile,
}

const CALIBRATION_X_TOL: f64 = 1e-12;

/// Solves for σ₋ and κ₋ so that the slit-convolved detected variances match
/// `targets`, then validates the resulting source.
pub fn calibrate_source(
    targets: &CalibrationTargets,
    fixed: &FixedWidths,
    alice: &StationConfig,
    bob: &StationConfig,
) -> Result<SourceModel> {
    require_positive("targets.var_x_minus", targets.var_x_minus)?;
    require_positive("targets.var_p_plus", targets.var_p_plus)?;
    let sigma_minus = solve_width(Basis::X, targets.var_x_minus, alice, bob)?;
    let kappa_minus = solve_width(Basis::P, targets.var_p_plus, alice, bob)?;
    SourceModel::new(sigma_minus, fixed.sigma_plus, kappa_minus, fixed.kappa_plus, fixed.pump)
}

fn solve_width(basis: Basis, target: f64, alice: &StationConfig, bob: &StationConfig) -> Result<f64> {
    let floor = detection::detected_variance_for_width(0.0, basis, alice, bob)?;
    if floor >= target {
        return Err(Error::Calibration {
            basis,
            reason: format!(
                "target variance {target:.6} is below the slit-convolution floor {floor:.6}"
            ),
        });
    }
    if floor == 0.0 {
        // point detectors: nothing to deconvolve
        return Ok(target.sqrt());
    }
    roots::brent(
        |w| Ok(detection::detected_variance_for_width(w, basis, alice, bob)? - target),
        0.0,
        target.sqrt(),
        CALIBRATION_X_TOL,
    )
    .map_err(|e| Error::Calibration { basis, reason: e.to_string() })
}

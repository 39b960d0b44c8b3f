//! Scan simulation, Gaussian peak fitting and the EPR variance-product check.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detection::{SlitDetector, StationConfig};
use crate::quadrature::{self, Tolerance};
use crate::source::{SourceModel, EPR_BOUND};
use crate::{rng, Basis, Error, Result, Side};

/// Profiles whose max/min count ratio stays below this are reported flat.
pub const FLAT_RATIO: f64 = 1.3;
pub const MIN_FIT_POINTS: usize = 5;
const MAX_ITERATIONS: usize = 200;
const REL_STEP_TOL: f64 = 1e-8;
const MAX_GRID_POINTS: usize = 100_000;

/// A detector named like `Ax1` or `Bp2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct DetectorLabel {
    pub side: Side,
    pub basis: Basis,
    /// 0 for detector 1, 1 for detector 2.
    pub index: usize,
}

impl fmt::Display for DetectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.side.letter(), self.basis, self.index + 1)
    }
}

impl FromStr for DetectorLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("`{s}` is not a detector label like Ax1 or Bp2"));
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != 3 {
            return Err(bad());
        }
        let side = match chars[0] {
            'A' => Side::Alice,
            'B' => Side::Bob,
            _ => return Err(bad()),
        };
        let basis = chars[1].to_string().parse::<Basis>().map_err(|_| bad())?;
        let index = match chars[2] {
            '1' => 0,
            '2' => 1,
            _ => return Err(bad()),
        };
        Ok(DetectorLabel { side, basis, index })
    }
}

impl TryFrom<String> for DetectorLabel {
    type Error = Error;

    fn try_from(value: String) -> Result<Self> {
        value.parse()
    }
}

impl From<DetectorLabel> for String {
    fn from(value: DetectorLabel) -> Self {
        value.to_string()
    }
}

/// Coincidence counts with Alice's detector fixed while Bob's slit is scanned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanData {
    pub positions_mm: Vec<f64>,
    pub counts: Vec<u64>,
    pub fixed_detector: DetectorLabel,
    pub basis_pair: (Basis, Basis),
}

impl ScanData {
    pub fn new(positions_mm: Vec<f64>, counts: Vec<u64>, fixed_detector: DetectorLabel, scanned: Basis) -> Result<Self> {
        if positions_mm.len() != counts.len() {
            return Err(Error::invalid(
                "scan",
                format!("{} positions but {} counts", positions_mm.len(), counts.len()),
            ));
        }
        Ok(ScanData { positions_mm, counts, fixed_detector, basis_pair: (fixed_detector.basis, scanned) })
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("position_mm,counts\n");
        for (x, c) in self.positions_mm.iter().zip(&self.counts) {
            out.push_str(&format!("{x},{c}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::report::atomic_write(path, self.to_csv_string().as_bytes())
    }

    /// Parses the two-column `position_mm,counts` layout.
    pub fn from_csv_str(text: &str, fixed_detector: DetectorLabel, scanned: Basis) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.len() != 2 || &header[0] != "position_mm" || &header[1] != "counts" {
            return Err(Error::TableParse {
                row: 1,
                column: 1,
                reason: "header must be `position_mm,counts`".into(),
            });
        }
        let (mut xs, mut cs) = (Vec::new(), Vec::new());
        for (r, rec) in reader.records().enumerate() {
            let rec = rec?;
            let row = r + 2;
            let x: f64 = rec[0]
                .parse()
                .map_err(|_| Error::TableParse { row, column: 1, reason: format!("`{}` is not a number", &rec[0]) })?;
            let c: u64 = rec[1].parse().map_err(|_| Error::TableParse {
                row,
                column: 2,
                reason: format!("`{}` is not a non-negative integer", &rec[1]),
            })?;
            xs.push(x);
            cs.push(c);
        }
        ScanData::new(xs, cs, fixed_detector, scanned)
    }

    pub fn read_csv(path: &Path, fixed_detector: DetectorLabel, scanned: Basis) -> Result<Self> {
        ScanData::from_csv_str(&std::fs::read_to_string(path)?, fixed_detector, scanned)
    }
}

/// √N per point, with a floor of 1 for empty bins.
pub fn poisson_errors(counts: &[u64]) -> Vec<f64> {
    counts.iter().map(|&c| (c.max(1) as f64).sqrt()).collect()
}

/// Parses `start:stop:step` (mm) into an inclusive, strictly increasing grid.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("grid `{spec}` must look like start:stop:step")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| Error::Parse(format!("`{p}` in grid `{spec}` is not a number"))))
        .collect::<Result<_>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) {
        return Err(Error::invalid("grid", "bounds and step must be finite"));
    }
    if step <= 0.0 {
        return Err(Error::invalid("grid", format!("step must be positive, got {step}")));
    }
    if stop < start {
        return Err(Error::invalid("grid", format!("stop {stop} is below start {start}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize + 1;
    if n > MAX_GRID_POINTS {
        return Err(Error::invalid("grid", format!("{n} points exceeds the limit of {MAX_GRID_POINTS}")));
    }
    Ok((0..n).map(|k| start + k as f64 * step).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub amplitude: f64,
    pub center_mm: f64,
    /// `None` for a flat profile.
    pub sigma_mm: Option<f64>,
    pub offset: f64,
    /// Parameter covariance in (amplitude, center, sigma, offset) order; a
    /// single entry (offset) for a flat profile.
    pub covariance: Vec<Vec<f64>>,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub iterations: usize,
    pub flat: bool,
    /// `None` when some point has zero counts.
    pub max_min_ratio: Option<f64>,
}

impl GaussianFit {
    pub fn amplitude_uncertainty(&self) -> Option<f64> {
        self.diag(0)
    }

    pub fn center_uncertainty(&self) -> Option<f64> {
        self.diag(1)
    }

    pub fn sigma_uncertainty(&self) -> Option<f64> {
        self.diag(2)
    }

    pub fn offset_uncertainty(&self) -> Option<f64> {
        if self.flat {
            self.diag(0)
        } else {
            self.diag(3)
        }
    }

    fn diag(&self, k: usize) -> Option<f64> {
        if self.flat && k > 0 {
            return None;
        }
        self.covariance.get(k).and_then(|r| r.get(k)).map(|v| v.sqrt())
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        match self.sigma_mm {
            Some(s) => model(&Vector4::new(self.amplitude, self.center_mm, s, self.offset), x),
            None => self.offset,
        }
    }
}

fn model(theta: &Vector4<f64>, x: f64) -> f64 {
    let z = (x - theta[1]) / theta[2];
    theta[3] + theta[0] * (-0.5 * z * z).exp()
}

fn gradient(theta: &Vector4<f64>, x: f64) -> Vector4<f64> {
    let (a, c, s) = (theta[0], theta[1], theta[2]);
    let z = (x - c) / s;
    let e = (-0.5 * z * z).exp();
    Vector4::new(e, a * e * z / s, a * e * z * z / s, 1.0)
}

fn weighted_chi_square(theta: &Vector4<f64>, xs: &[f64], ys: &[f64], ws: &[f64]) -> f64 {
    xs.iter().zip(ys).zip(ws).map(|((&x, &y), &w)| w * (y - model(theta, x)).powi(2)).sum()
}

pub fn fit_gaussian(scan: &ScanData) -> Result<GaussianFit> {
    let ys: Vec<f64> = scan.counts.iter().map(|&c| c as f64).collect();
    fit_gaussian_points(&scan.positions_mm, &ys)
}

/// Weighted Levenberg-Marquardt fit of `offset + A exp(-(x - c)² / 2σ²)`
/// with Poisson weights `1 / max(y, 1)`.
pub fn fit_gaussian_points(xs: &[f64], ys: &[f64]) -> Result<GaussianFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("scan", "positions and counts differ in length"));
    }
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!("need at least {MIN_FIT_POINTS} points, got {}", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) || ys.iter().any(|&y| y < 0.0) {
        return Err(Error::invalid("scan", "positions must be finite and counts non-negative"));
    }
    let ws: Vec<f64> = ys.iter().map(|&y| 1.0 / y.max(1.0)).collect();
    let max = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let max_min_ratio = if min > 0.0 {
        Some(max / min)
    } else if max == 0.0 {
        Some(1.0)
    } else {
        None
    };

    if max_min_ratio.is_some_and(|r| r < FLAT_RATIO) {
        let wsum: f64 = ws.iter().sum();
        let offset = ws.iter().zip(ys).map(|(w, y)| w * y).sum::<f64>() / wsum;
        let centroid = xs.iter().sum::<f64>() / xs.len() as f64;
        let chi_square = ws.iter().zip(ys).map(|(w, y)| w * (y - offset).powi(2)).sum();
        return Ok(GaussianFit {
            amplitude: 0.0,
            center_mm: centroid,
            sigma_mm: None,
            offset,
            covariance: vec![vec![1.0 / wsum]],
            chi_square,
            degrees_of_freedom: xs.len() - 1,
            iterations: 0,
            flat: true,
            max_min_ratio,
        });
    }

    let excess: Vec<f64> = ys.iter().map(|&y| y - min).collect();
    let mass: f64 = excess.iter().sum();
    let center = xs.iter().zip(&excess).map(|(x, e)| x * e).sum::<f64>() / mass;
    let second = xs.iter().zip(&excess).map(|(x, e)| e * (x - center).powi(2)).sum::<f64>() / mass;
    let span = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max) - xs.iter().copied().fold(f64::INFINITY, f64::min);
    let sigma0 = if second > 0.0 { second.sqrt() } else { 0.1 * span.max(1e-6) };
    let mut theta = Vector4::new(max - min, center, sigma0, min);

    let normal_matrix = |theta: &Vector4<f64>| {
        let mut jtj = Matrix4::<f64>::zeros();
        let mut jtr = Vector4::<f64>::zeros();
        for ((&x, &y), &w) in xs.iter().zip(ys).zip(&ws) {
            let g = gradient(theta, x);
            jtj += w * g * g.transpose();
            jtr += w * (y - model(theta, x)) * g;
        }
        (jtj, jtr)
    };

    let mut chi2 = weighted_chi_square(&theta, xs, ys, &ws);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (jtj, jtr) = normal_matrix(&theta);
        let mut damped = jtj;
        for k in 0..4 {
            damped[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
        }
        let Some(step) = damped.cholesky().map(|c| c.solve(&jtr)) else {
            lambda *= 10.0;
            continue;
        };
        let trial = theta + step;
        let trial_chi2 = weighted_chi_square(&trial, xs, ys, &ws);
        if trial_chi2.is_finite() && trial_chi2 <= chi2 && trial[2] != 0.0 {
            let rel = (0..4)
                .map(|k| step[k].abs() / trial[k].abs().max(1e-12))
                .fold(0.0, f64::max);
            theta = trial;
            chi2 = trial_chi2;
            lambda = (lambda * 0.1).max(1e-12);
            if rel < REL_STEP_TOL {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e16 {
                // no downhill step exists at machine precision
                converged = true;
                break;
            }
        }
    }
    if !converged {
        return Err(Error::Fit(format!("no convergence within {MAX_ITERATIONS} iterations")));
    }
    theta[2] = theta[2].abs();
    let (jtj, _) = normal_matrix(&theta);
    let cov = jtj
        .try_inverse()
        .ok_or_else(|| Error::Fit("singular normal matrix at the optimum".into()))?;
    Ok(GaussianFit {
        amplitude: theta[0],
        center_mm: theta[1],
        sigma_mm: Some(theta[2]),
        offset: theta[3],
        covariance: (0..4).map(|i| (0..4).map(|j| cov[(i, j)]).collect()).collect(),
        chi_square: chi2,
        degrees_of_freedom: xs.len() - 4,
        iterations,
        flat: false,
        max_min_ratio,
    })
}

/// `(scale · σ)²`, converting a detection-plane fit width to a crystal-plane
/// variance with `scale` latent units per mm.
pub fn conditional_variance(fit: &GaussianFit, scale: f64) -> Result<f64> {
    let sigma = fit.sigma_mm.ok_or_else(|| Error::Fit("flat profile has no width".into()))?;
    Ok((scale * sigma).powi(2))
}

/// One measured variance entering the EPR check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceInput {
    pub label: String,
    pub value: f64,
    /// Standard uncertainty used for propagation.
    pub uncertainty: Option<f64>,
    /// Label as originally printed when it differs from `label`.
    pub printed_label: Option<String>,
    /// Uncertainty as originally printed when it differs from `uncertainty`.
    pub printed_uncertainty: Option<f64>,
}

impl VarianceInput {
    pub fn new(label: impl Into<String>, value: f64, uncertainty: Option<f64>) -> Self {
        VarianceInput { label: label.into(), value, uncertainty, printed_label: None, printed_uncertainty: None }
    }

    pub fn is_flagged(&self) -> bool {
        self.printed_label.is_some() || self.printed_uncertainty.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EprCheckResult {
    pub var_x_minus: Vec<VarianceInput>,
    pub var_p_plus: Vec<VarianceInput>,
    pub mean_var_x_minus: f64,
    pub mean_var_p_plus: f64,
    /// Variance product in units of ħ².
    pub product: f64,
    pub product_uncertainty: Option<f64>,
    pub bound: f64,
    pub satisfied: bool,
    /// (bound − product) / product_uncertainty.
    pub sigma_distance: Option<f64>,
    pub flags: Vec<String>,
}

fn mean_with_error(list: &[VarianceInput]) -> (f64, Option<f64>) {
    let n = list.len() as f64;
    let mean = list.iter().map(|v| v.value).sum::<f64>() / n;
    let err = list
        .iter()
        .map(|v| v.uncertainty.map(|u| u * u))
        .sum::<Option<f64>>()
        .map(|s| s.sqrt() / n);
    (mean, err)
}

/// Averages each axis, multiplies the means and compares with ħ²/4.
pub fn duan_check(var_x: &[VarianceInput], var_p: &[VarianceInput]) -> Result<EprCheckResult> {
    if var_x.is_empty() || var_p.is_empty() {
        return Err(Error::invalid("epr_check", "need at least one x and one p variance"));
    }
    for v in var_x.iter().chain(var_p) {
        if !(v.value.is_finite() && v.value > 0.0) {
            return Err(Error::invalid("epr_check", format!("variance {} must be positive, got {}", v.label, v.value)));
        }
        if let Some(u) = v.uncertainty {
            if !(u.is_finite() && u >= 0.0) {
                return Err(Error::invalid("epr_check", format!("uncertainty of {} must be non-negative", v.label)));
            }
        }
    }
    let (mx, ex) = mean_with_error(var_x);
    let (mp, ep) = mean_with_error(var_p);
    let product = mx * mp;
    let product_uncertainty = ex.zip(ep).map(|(ex, ep)| product * ((ex / mx).powi(2) + (ep / mp).powi(2)).sqrt());
    let sigma_distance = product_uncertainty.filter(|&u| u > 0.0).map(|u| (EPR_BOUND - product) / u);
    let flags = var_x
        .iter()
        .chain(var_p)
        .filter(|v| v.is_flagged())
        .map(|v| {
            let mut note = format!("{}:", v.label);
            if let Some(l) = &v.printed_label {
                note.push_str(&format!(" printed label `{l}`"));
            }
            if let Some(u) = v.printed_uncertainty {
                note.push_str(&format!(" printed uncertainty {u}, propagated {}", v.uncertainty.unwrap_or(f64::NAN)));
            }
            note
        })
        .collect();
    Ok(EprCheckResult {
        var_x_minus: var_x.to_vec(),
        var_p_plus: var_p.to_vec(),
        mean_var_x_minus: mx,
        mean_var_p_plus: mp,
        product,
        product_uncertainty,
        bound: EPR_BOUND,
        satisfied: product < EPR_BOUND,
        sigma_distance,
        flags,
    })
}

/// Plain-number form of [`duan_check`] without uncertainties.
pub fn duan_check_values(var_x: &[f64], var_p: &[f64]) -> Result<EprCheckResult> {
    let wrap = |prefix: &str, vs: &[f64]| -> Vec<VarianceInput> {
        vs.iter().enumerate().map(|(k, &v)| VarianceInput::new(format!("{prefix}{}", k + 1), v, None)).collect()
    };
    duan_check(&wrap("var_x", var_x), &wrap("var_p", var_p))
}

/// What to scan: Alice's fixed detector, the basis Bob scans in and the grid
/// of Bob slit centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSpec {
    pub fixed_detector: DetectorLabel,
    pub scanned_basis: Basis,
    pub grid_mm: Vec<f64>,
    pub pairs_per_point: u64,
    pub seed: u64,
}

/// Monte Carlo scan: for each grid point Bob's detector 1 of the scanned
/// basis is re-centred there and coincidences with Alice's fixed detector are
/// counted. Neutral filters are ignored. Every grid point draws from its own
/// random stream.
pub fn scan_simulation(
    source: &SourceModel,
    alice: &StationConfig,
    bob: &StationConfig,
    spec: &ScanSpec,
) -> Result<ScanData> {
    let fixed = spec.fixed_detector;
    if fixed.side != Side::Alice {
        return Err(Error::invalid("scan.fixed_detector", "the fixed detector must be one of Alice's"));
    }
    if spec.grid_mm.is_empty() || spec.grid_mm.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("scan.grid", "grid must be non-empty and strictly increasing"));
    }
    if spec.pairs_per_point == 0 {
        return Err(Error::invalid("scan.pairs_per_point", "must be positive"));
    }
    let basis_a = fixed.basis;
    let basis_b = spec.scanned_basis;
    let a_slit = *alice.detectors(basis_a).detector(fixed.index);
    let width_b = bob.detectors(basis_b).detector(0).width_mm;

    let counts: Vec<u64> = spec
        .grid_mm
        .par_iter()
        .enumerate()
        .map(|(k, &center)| {
            let b_slit = SlitDetector { center_mm: center, width_mm: width_b, transmission: 1.0 };
            let mut rng = rng::stream(spec.seed, k as u64);
            let mut hits = 0u64;
            for _ in 0..spec.pairs_per_point {
                let s = source.sample_pair(&mut rng);
                if a_slit.contains(alice.to_detector(basis_a, s.coordinate(basis_a, Side::Alice)))
                    && b_slit.contains(bob.to_detector(basis_b, s.coordinate(basis_b, Side::Bob)))
                {
                    hits += 1;
                }
            }
            hits
        })
        .collect();
    ScanData::new(spec.grid_mm.clone(), counts, fixed, basis_b)
}

/// Mean and width of the ideal scan profile in Bob's detection plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileMoments {
    pub mean_mm: f64,
    /// Conditional spread of Bob's readout, broadened by his slit aperture.
    pub sd_mm: f64,
}

/// Moments of Bob's detection-plane readout given a click at Alice's fixed
/// detector, by quadrature of the joint density, plus the variance of Bob's
/// box-shaped slit. This is the width a Gaussian fit to a scan should find.
pub fn scan_profile_moments(
    source: &SourceModel,
    alice: &StationConfig,
    bob: &StationConfig,
    fixed: DetectorLabel,
    scanned: Basis,
) -> Result<ProfileMoments> {
    let basis_a = fixed.basis;
    let window_a = alice.latent_window(basis_a, fixed.index);
    let (slope, sd) = source.conditional_line(basis_a, scanned);
    let tol = Tolerance { absolute: 1e-13, relative: 1e-11 };
    let mut moments = [0.0; 3];
    for (power, m) in moments.iter_mut().enumerate() {
        let mut failure = None;
        let r = quadrature::integrate(
            |u| {
                let mu = slope * u;
                match quadrature::integrate(
                    |v| v.powi(power as i32) * source.joint_density(basis_a, scanned, u, v),
                    mu - 12.0 * sd,
                    mu + 12.0 * sd,
                    Tolerance { absolute: 1e-14, relative: 1e-12 },
                ) {
                    Ok(i) => i.value,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                }
            },
            window_a.0,
            window_a.1,
            tol,
        )?;
        if let Some(e) = failure {
            return Err(e);
        }
        *m = r.value;
    }
    if !(moments[0] > 0.0) {
        return Err(Error::ZeroDenominator("coincidence mass of the fixed detector"));
    }
    let mean_latent = moments[1] / moments[0];
    let var_latent = moments[2] / moments[0] - mean_latent * mean_latent;
    let gain = 1.0 / bob.latent_per_mm(scanned);
    let width = bob.detectors(scanned).detector(0).width_mm;
    Ok(ProfileMoments {
        mean_mm: bob.to_detector(scanned, mean_latent),
        sd_mm: (var_latent * gain * gain + width * width / 12.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss(a: f64, c: f64, s: f64, b: f64, x: f64) -> f64 {
        b + a * (-0.5 * ((x - c) / s).powi(2)).exp()
    }

    #[test]
    fn labels_parse_and_print() {
        let l: DetectorLabel = "Ap2".parse().unwrap();
        assert_eq!(l, DetectorLabel { side: Side::Alice, basis: Basis::P, index: 1 });
        assert_eq!(l.to_string(), "Ap2");
        for bad in ["Cx1", "Ax3", "Az1", "Ax", "Ax12"] {
            assert!(bad.parse::<DetectorLabel>().is_err(), "{bad}");
        }
    }

    #[test]
    fn noiseless_gaussian_is_recovered() {
        let xs: Vec<f64> = (0..21).map(|k| k as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| gauss(1000.0, 1.0, 0.3, 10.0, x)).collect();
        let fit = fit_gaussian_points(&xs, &ys).unwrap();
        assert!(!fit.flat);
        assert!((fit.amplitude / 1000.0 - 1.0).abs() < 1e-6);
        assert!((fit.center_mm - 1.0).abs() < 1e-6);
        assert!((fit.sigma_mm.unwrap() / 0.3 - 1.0).abs() < 1e-6);
        assert!((fit.offset / 10.0 - 1.0).abs() < 1e-6);
        assert!(fit.chi_square < 1e-12);
    }

    #[test]
    fn flat_profile_has_no_width() {
        let xs: Vec<f64> = (0..11).map(|k| 1.0 + k as f64 * 0.1).collect();
        let ys = vec![100.0, 104.0, 98.0, 101.0, 110.0, 99.0, 103.0, 97.0, 102.0, 100.0, 105.0];
        let fit = fit_gaussian_points(&xs, &ys).unwrap();
        assert!(fit.flat);
        assert!(fit.sigma_mm.is_none());
        assert!(conditional_variance(&fit, 1.0).is_err());
        let constant = fit_gaussian_points(&xs, &vec![7.0; 11]).unwrap();
        assert!(constant.flat);
        assert!((constant.offset - 7.0).abs() < 1e-12);
    }

    #[test]
    fn too_few_points() {
        assert!(matches!(fit_gaussian_points(&[0.0, 1.0, 2.0, 3.0], &[1.0, 5.0, 9.0, 2.0]), Err(Error::Fit(_))));
    }

    #[test]
    fn conditional_variance_examples() {
        let mut fit = fit_gaussian_points(
            &(0..21).map(|k| k as f64 * 0.1).collect::<Vec<_>>(),
            &(0..21).map(|k| gauss(100.0, 1.0, 0.39, 1.0, k as f64 * 0.1)).collect::<Vec<_>>(),
        )
        .unwrap();
        fit.sigma_mm = Some(0.39);
        assert!((conditional_variance(&fit, 1.0).unwrap() - 0.1521).abs() < 1e-12);
        assert!((conditional_variance(&fit, 2.0).unwrap() - 4.0 * 0.1521).abs() < 1e-12);
        fit.sigma_mm = Some(0.0);
        assert_eq!(conditional_variance(&fit, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn duan_examples() {
        let r = duan_check_values(&[0.152, 0.080], &[0.912, 0.875]).unwrap();
        assert!((r.product - 0.116 * 0.8935).abs() < 1e-12);
        assert!(r.satisfied);
        assert!(!duan_check_values(&[0.5], &[0.5]).unwrap().satisfied);
        assert!(!duan_check_values(&[1.0], &[1.0]).unwrap().satisfied);
        assert!(duan_check_values(&[], &[1.0]).is_err());
        assert!(duan_check_values(&[0.0], &[1.0]).is_err());
    }

    #[test]
    fn poisson_error_floor() {
        let e = poisson_errors(&[943, 22, 0]);
        assert_eq!(e[0].round(), 31.0);
        assert_eq!(e[1].round(), 5.0);
        assert_eq!(e[2], 1.0);
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0:3:0.1").unwrap();
        assert_eq!(g.len(), 31);
        assert!((g[30] - 3.0).abs() < 1e-12);
        assert_eq!(parse_grid("1:1:0.5").unwrap(), vec![1.0]);
        assert!(parse_grid("0:3:0").is_err());
        assert!(parse_grid("0:3:-0.1").is_err());
        assert!(parse_grid("3:0:0.1").is_err());
        assert!(parse_grid("0:3").is_err());
    }

    #[test]
    fn scan_csv_round_trip() {
        let label: DetectorLabel = "Ax1".parse().unwrap();
        let scan = ScanData::new(vec![0.0, 0.5, 1.0], vec![3, 10, 4], label, Basis::X).unwrap();
        let text = scan.to_csv_string();
        assert!(text.starts_with("position_mm,counts\n"));
        assert_eq!(ScanData::from_csv_str(&text, label, Basis::X).unwrap(), scan);
        assert!(ScanData::from_csv_str("x,y\n1,2\n", label, Basis::X).is_err());
        assert!(matches!(
            ScanData::from_csv_str("position_mm,counts\n1,2\n2,-3\n", label, Basis::X),
            Err(Error::TableParse { row: 3, column: 2, .. })
        ));
    }
}

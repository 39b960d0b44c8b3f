//! Station optics, slit detectors and the coincidence-probability oracle.
//!
//! Each station maps the latent crystal-plane variable of its photon onto a
//! detection-plane coordinate: imaging divides the position by the scale
//! `alpha`, the Fourier lens multiplies the momentum by `momentum_scale_mm2`.
//! Both are measured from the optical axis at `axis_mm`. Bob's Fourier plane
//! is mirrored so that anti-correlated momenta land on matching detectors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::quadrature::{self, Tolerance};
use crate::source::{PairSample, SourceModel};
use crate::{roots, Basis, Error, Result, Side};

pub const DEFAULT_ALPHA: f64 = 0.8;
pub const DEFAULT_MOMENTUM_SCALE_MM2: f64 = 0.4;
pub const DEFAULT_AXIS_MM: f64 = 1.5;
pub const X_SLIT_WIDTH_MM: f64 = 0.2;
pub const P_SLIT_WIDTH_MM: f64 = 0.5;
pub const BOB_CENTERS_MM: [f64; 2] = [1.0, 2.0];

const PROBABILITY_TOL: f64 = 1e-11;

/// Lens geometry of a station. `alpha` follows the O/(2I) convention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Optics {
    pub object_distance_mm: f64,
    pub image_distance_mm: f64,
    pub focal_length_mm: f64,
    pub wavelength_nm: f64,
}

impl Optics {
    pub fn alpha(&self) -> f64 {
        self.object_distance_mm / (2.0 * self.image_distance_mm)
    }

    pub fn wavenumber_per_mm(&self) -> f64 {
        2.0 * std::f64::consts::PI / (self.wavelength_nm * 1e-6)
    }

    /// f/k, detection-plane mm per unit of transverse wavevector.
    pub fn fourier_scale_mm2(&self) -> f64 {
        self.focal_length_mm / self.wavenumber_per_mm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlitDetector {
    pub center_mm: f64,
    pub width_mm: f64,
    /// Neutral-filter transmission in (0, 1].
    #[serde(default = "unit")]
    pub transmission: f64,
}

fn unit() -> f64 {
    1.0
}

impl SlitDetector {
    pub fn new(center_mm: f64, width_mm: f64) -> Result<Self> {
        if !center_mm.is_finite() {
            return Err(Error::invalid("slit.center_mm", "must be finite"));
        }
        if !(width_mm.is_finite() && width_mm > 0.0) {
            return Err(Error::invalid("slit.width_mm", format!("must be positive, got {width_mm}")));
        }
        Ok(SlitDetector { center_mm, width_mm, transmission: 1.0 })
    }

    pub fn with_transmission(mut self, transmission: f64) -> Result<Self> {
        if !(transmission > 0.0 && transmission <= 1.0) {
            return Err(Error::invalid("slit.transmission", format!("must lie in (0, 1], got {transmission}")));
        }
        self.transmission = transmission;
        Ok(self)
    }

    pub fn lo(&self) -> f64 {
        self.center_mm - 0.5 * self.width_mm
    }

    pub fn hi(&self) -> f64 {
        self.center_mm + 0.5 * self.width_mm
    }

    /// Closed-interval acceptance.
    pub fn contains(&self, coordinate: f64) -> bool {
        self.lo() <= coordinate && coordinate <= self.hi()
    }
}

/// The two detectors of one basis; detector 1 encodes bit 0, detector 2 bit 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[SlitDetector; 2]", into = "[SlitDetector; 2]")]
pub struct SlitPair([SlitDetector; 2]);

impl SlitPair {
    pub fn new(first: SlitDetector, second: SlitDetector) -> Result<Self> {
        // closed intervals, so touching counts as overlap
        let disjoint = first.hi() < second.lo() || second.hi() < first.lo();
        if !disjoint {
            return Err(Error::OverlappingSlits { basis: Basis::X });
        }
        Ok(SlitPair([first, second]))
    }

    fn for_basis(first: SlitDetector, second: SlitDetector, basis: Basis) -> Result<Self> {
        SlitPair::new(first, second).map_err(|_| Error::OverlappingSlits { basis })
    }

    pub fn symmetric(centers: [f64; 2], width_mm: f64, basis: Basis) -> Result<Self> {
        SlitPair::for_basis(
            SlitDetector::new(centers[0], width_mm)?,
            SlitDetector::new(centers[1], width_mm)?,
            basis,
        )
    }

    pub fn detector(&self, index: usize) -> &SlitDetector {
        &self.0[index]
    }

    pub fn detectors(&self) -> &[SlitDetector; 2] {
        &self.0
    }

    pub fn mean_width(&self) -> f64 {
        0.5 * (self.0[0].width_mm + self.0[1].width_mm)
    }
}

impl TryFrom<[SlitDetector; 2]> for SlitPair {
    type Error = Error;

    fn try_from(value: [SlitDetector; 2]) -> Result<Self> {
        SlitPair::new(value[0], value[1])
    }
}

impl From<SlitPair> for [SlitDetector; 2] {
    fn from(value: SlitPair) -> Self {
        value.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClickOutcome {
    Detector1,
    Detector2,
    Null,
}

impl ClickOutcome {
    pub fn from_index(index: usize) -> Self {
        match index {
            0 => ClickOutcome::Detector1,
            1 => ClickOutcome::Detector2,
            _ => ClickOutcome::Null,
        }
    }

    pub fn index(self) -> Option<usize> {
        match self {
            ClickOutcome::Detector1 => Some(0),
            ClickOutcome::Detector2 => Some(1),
            ClickOutcome::Null => None,
        }
    }

    /// Logical bit: detector 1 → 0, detector 2 → 1.
    pub fn bit(self) -> Option<u8> {
        self.index().map(|i| i as u8)
    }

    pub fn is_click(self) -> bool {
        self != ClickOutcome::Null
    }
}

/// Slit acceptance for a detection-plane coordinate.
pub fn click(coordinate: f64, detectors: &SlitPair) -> ClickOutcome {
    if detectors.0[0].contains(coordinate) {
        ClickOutcome::Detector1
    } else if detectors.0[1].contains(coordinate) {
        ClickOutcome::Detector2
    } else {
        ClickOutcome::Null
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationConfig {
    /// Crystal-plane mm per detection-plane mm in the imaging configuration.
    pub alpha: f64,
    /// Detection-plane mm per unit latent momentum in the Fourier configuration.
    pub momentum_scale_mm2: f64,
    pub axis_mm: f64,
    pub mirror_momentum: bool,
    pub x_detectors: SlitPair,
    pub p_detectors: SlitPair,
}

impl StationConfig {
    pub fn new(
        alpha: f64,
        momentum_scale_mm2: f64,
        axis_mm: f64,
        mirror_momentum: bool,
        x_detectors: SlitPair,
        p_detectors: SlitPair,
    ) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("station.alpha", format!("must be positive, got {alpha}")));
        }
        if !(momentum_scale_mm2.is_finite() && momentum_scale_mm2 > 0.0) {
            return Err(Error::invalid(
                "station.momentum_scale_mm2",
                format!("must be positive, got {momentum_scale_mm2}"),
            ));
        }
        if !axis_mm.is_finite() {
            return Err(Error::invalid("station.axis_mm", "must be finite"));
        }
        Ok(StationConfig { alpha, momentum_scale_mm2, axis_mm, mirror_momentum, x_detectors, p_detectors })
    }

    /// Station whose scales come straight from lens geometry: α = O/(2I), f/k.
    pub fn from_optics(
        optics: &Optics,
        axis_mm: f64,
        mirror_momentum: bool,
        x_detectors: SlitPair,
        p_detectors: SlitPair,
    ) -> Result<Self> {
        StationConfig::new(
            optics.alpha(),
            optics.fourier_scale_mm2(),
            axis_mm,
            mirror_momentum,
            x_detectors,
            p_detectors,
        )
    }

    /// Default geometry: slits of 0.2 mm (x) and 0.5 mm (p) centred at 1 and 2 mm.
    pub fn default_for(side: Side) -> Self {
        StationConfig {
            alpha: DEFAULT_ALPHA,
            momentum_scale_mm2: DEFAULT_MOMENTUM_SCALE_MM2,
            axis_mm: DEFAULT_AXIS_MM,
            mirror_momentum: side == Side::Bob,
            x_detectors: SlitPair::symmetric(BOB_CENTERS_MM, X_SLIT_WIDTH_MM, Basis::X).expect("valid default"),
            p_detectors: SlitPair::symmetric(BOB_CENTERS_MM, P_SLIT_WIDTH_MM, Basis::P).expect("valid default"),
        }
    }

    pub fn detectors(&self, basis: Basis) -> &SlitPair {
        match basis {
            Basis::X => &self.x_detectors,
            Basis::P => &self.p_detectors,
        }
    }

    pub fn detectors_mut(&mut self, basis: Basis) -> &mut SlitPair {
        match basis {
            Basis::X => &mut self.x_detectors,
            Basis::P => &mut self.p_detectors,
        }
    }

    /// Detection-plane mm per latent unit (signed for a mirrored Fourier plane).
    fn gain(&self, basis: Basis) -> f64 {
        match basis {
            Basis::X => 1.0 / self.alpha,
            Basis::P if self.mirror_momentum => -self.momentum_scale_mm2,
            Basis::P => self.momentum_scale_mm2,
        }
    }

    /// Latent units per detection-plane mm, unsigned. Multiply a detection-plane
    /// width by this to get the crystal-plane width.
    pub fn latent_per_mm(&self, basis: Basis) -> f64 {
        1.0 / self.gain(basis).abs()
    }

    pub fn to_detector(&self, basis: Basis, latent: f64) -> f64 {
        self.axis_mm + latent * self.gain(basis)
    }

    pub fn to_latent(&self, basis: Basis, detector_mm: f64) -> f64 {
        (detector_mm - self.axis_mm) / self.gain(basis)
    }

    /// Latent interval covered by detector `index` of `basis`, ordered low to high.
    pub fn latent_window(&self, basis: Basis, index: usize) -> (f64, f64) {
        let d = self.detectors(basis).detector(index);
        self.latent_interval(basis, d.lo(), d.hi())
    }

    pub fn latent_interval(&self, basis: Basis, lo_mm: f64, hi_mm: f64) -> (f64, f64) {
        let a = self.to_latent(basis, lo_mm);
        let b = self.to_latent(basis, hi_mm);
        (a.min(b), a.max(b))
    }

    pub fn transmission(&self, basis: Basis, index: usize) -> f64 {
        self.detectors(basis).detector(index).transmission
    }

    /// Same geometry with every neutral filter removed.
    pub fn without_attenuation(&self) -> Self {
        let mut out = *self;
        for basis in Basis::ALL {
            for d in out.detectors_mut(basis).0.iter_mut() {
                d.transmission = 1.0;
            }
        }
        out
    }

    pub fn with_transmissions(&self, factors: [f64; 4]) -> Result<Self> {
        let mut out = *self;
        for (k, f) in factors.into_iter().enumerate() {
            let basis = if k < 2 { Basis::X } else { Basis::P };
            let d = &mut out.detectors_mut(basis).0[k % 2];
            *d = d.with_transmission(f)?;
        }
        Ok(out)
    }

    pub fn with_centers(&self, basis: Basis, centers: [f64; 2]) -> Result<Self> {
        let mut out = *self;
        let pair = self.detectors(basis);
        let mut first = *pair.detector(0);
        let mut second = *pair.detector(1);
        first.center_mm = centers[0];
        second.center_mm = centers[1];
        *out.detectors_mut(basis) = SlitPair::for_basis(first, second, basis)?;
        Ok(out)
    }
}

/// Detection-plane coordinate of one photon of `sample`.
pub fn readout_coordinate(sample: &PairSample, station: &StationConfig, basis: Basis, side: Side) -> f64 {
    station.to_detector(basis, sample.coordinate(basis, side))
}

/// Index into the 4-entry detector ordering x1, x2, p1, p2.
pub fn detector_slot(basis: Basis, index: usize) -> usize {
    2 * basis.index() + index
}

pub fn slot_detector(slot: usize) -> (Basis, usize) {
    (if slot < 2 { Basis::X } else { Basis::P }, slot % 2)
}

/// Probability that the pair lands in the latent rectangle `window_a × window_b`.
pub fn window_probability(
    source: &SourceModel,
    basis_a: Basis,
    basis_b: Basis,
    window_a: (f64, f64),
    window_b: (f64, f64),
) -> Result<f64> {
    let tol = Tolerance::absolute(PROBABILITY_TOL);
    if basis_a != basis_b {
        let r = quadrature::integrate_2d(
            |u, v| source.joint_density(basis_a, basis_b, u, v),
            window_a,
            window_b,
            tol,
        )?;
        return Ok(r.value);
    }
    // same basis: break points bracket the conditional ridge
    let (slope, cond_sd) = source.conditional_line(basis_a, basis_b);
    let outer_breaks: Vec<f64> = if slope.abs() > 1e-12 {
        [window_b.0 / slope, window_b.1 / slope].to_vec()
    } else {
        Vec::new()
    };
    let width = window_a.1 - window_a.0;
    let inner_tol = Tolerance::absolute(0.1 * PROBABILITY_TOL / width.max(1e-300));
    let mut failure = None;
    let outer = quadrature::integrate_with_breaks(
        |u| {
            let mu = slope * u;
            let breaks = [mu - 4.0 * cond_sd, mu, mu + 4.0 * cond_sd];
            match quadrature::integrate_with_breaks(
                |v| source.joint_density(basis_a, basis_b, u, v),
                window_b.0,
                window_b.1,
                &breaks,
                inner_tol,
            ) {
                Ok(r) => r.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        window_a.0,
        window_a.1,
        &outer_breaks,
        Tolerance::absolute(0.9 * PROBABILITY_TOL),
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(outer.value)
}

/// Coincidence probability P(A basis_a det_a, B basis_b det_b) for one pair,
/// including neutral-filter transmissions.
pub fn coincidence_probability(
    source: &SourceModel,
    alice: &StationConfig,
    bob: &StationConfig,
    basis_a: Basis,
    basis_b: Basis,
    det_a: usize,
    det_b: usize,
) -> Result<f64> {
    let geometric = window_probability(
        source,
        basis_a,
        basis_b,
        alice.latent_window(basis_a, det_a),
        bob.latent_window(basis_b, det_b),
    )?;
    Ok(geometric * alice.transmission(basis_a, det_a) * bob.transmission(basis_b, det_b))
}

/// Probability that one photon clicks the given detector, ignoring its partner.
pub fn single_probability(source: &SourceModel, station: &StationConfig, basis: Basis, det: usize) -> Result<f64> {
    let (lo, hi) = station.latent_window(basis, det);
    let r = quadrature::integrate(|u| source.marginal_density(basis, u), lo, hi, Tolerance::absolute(PROBABILITY_TOL))?;
    Ok(r.value * station.transmission(basis, det))
}

/// All sixteen coincidence probabilities, rows Ax1, Ax2, Ap1, Ap2 and columns
/// Bx1, Bx2, Bp1, Bp2.
pub fn coincidence_matrix(source: &SourceModel, alice: &StationConfig, bob: &StationConfig) -> Result<[[f64; 4]; 4]> {
    let mut out = [[0.0; 4]; 4];
    for (i, row) in out.iter_mut().enumerate() {
        let (ba, da) = slot_detector(i);
        for (j, cell) in row.iter_mut().enumerate() {
            let (bb, db) = slot_detector(j);
            *cell = coincidence_probability(source, alice, bob, ba, bb, da, db)?;
        }
    }
    Ok(out)
}

/// Per-detector attenuation that brings every listed probability down to the
/// smallest one.
pub fn diagonal_attenuation(probabilities: &[f64]) -> Result<Vec<f64>> {
    if probabilities.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Equalization("a diagonal probability is zero".into()));
    }
    let min = probabilities.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(probabilities.iter().map(|&p| min / p).collect())
}

/// Result of [`equalize_levels`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Equalization {
    pub alice: StationConfig,
    pub bob: StationConfig,
    /// Transmissions in x1, x2, p1, p2 order.
    pub alice_factors: [f64; 4],
    pub bob_factors: [f64; 4],
    /// Largest relative deviation among the four same-basis "right" probabilities.
    pub right_spread: f64,
    /// Largest relative deviation among the eight cross-basis probabilities.
    pub cross_spread: f64,
}

/// Finds neutral-filter transmissions that equalize the four same-basis
/// "right" probabilities and, separately, the eight cross-basis ones.
///
/// Works in log space: each equalized cell satisfies
/// `log P + log t_A + log t_B = level`, solved by least squares, then each
/// side is rescaled so its most transmissive filter is fully open. When the
/// cross-basis probabilities factorize into single-photon marginals (always
/// the case for the Gaussian source) and the geometry is mirror-symmetric, the
/// solution is exact.
pub fn equalize_levels(source: &SourceModel, alice: &StationConfig, bob: &StationConfig) -> Result<Equalization> {
    let alice_open = alice.without_attenuation();
    let bob_open = bob.without_attenuation();
    let p = coincidence_matrix(source, &alice_open, &bob_open)?;
    for k in 0..4 {
        if !(p[k][k] > 0.0) {
            return Err(Error::Equalization(format!("diagonal probability in slot {k} is zero")));
        }
    }
    let mut cells: Vec<(usize, usize, usize)> = Vec::new(); // (row, col, level index)
    for k in 0..4 {
        cells.push((k, k, 0));
    }
    for i in 0..4 {
        for j in 0..4 {
            if (i < 2) != (j < 2) {
                cells.push((i, j, 1));
            }
        }
    }
    for &(i, j, _) in &cells {
        if !(p[i][j] > 0.0) {
            return Err(Error::Equalization(format!("cross-basis probability ({i}, {j}) is zero")));
        }
    }
    // unknowns: log t_A[0..4], log t_B[0..4], level_right, level_cross
    let mut a = DMatrix::<f64>::zeros(cells.len(), 10);
    let mut b = DVector::<f64>::zeros(cells.len());
    for (row, &(i, j, level)) in cells.iter().enumerate() {
        a[(row, i)] = 1.0;
        a[(row, 4 + j)] = 1.0;
        a[(row, 8 + level)] = -1.0;
        b[row] = -p[i][j].ln();
    }
    let svd = a.svd(true, true);
    let x = svd
        .solve(&b, 1e-12)
        .map_err(|e| Error::Equalization(format!("least-squares solve failed: {e}")))?;
    let shift_a = (0..4).map(|k| x[k]).fold(f64::NEG_INFINITY, f64::max);
    let shift_b = (4..8).map(|k| x[k]).fold(f64::NEG_INFINITY, f64::max);
    let mut alice_factors = [0.0; 4];
    let mut bob_factors = [0.0; 4];
    for k in 0..4 {
        alice_factors[k] = (x[k] - shift_a).exp().min(1.0);
        bob_factors[k] = (x[4 + k] - shift_b).exp().min(1.0);
    }
    let alice_eq = alice_open.with_transmissions(alice_factors)?;
    let bob_eq = bob_open.with_transmissions(bob_factors)?;

    let spread = |values: Vec<f64>| {
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        (max - min) / max
    };
    let scaled = |i: usize, j: usize| p[i][j] * alice_factors[i] * bob_factors[j];
    let right_spread = spread((0..4).map(|k| scaled(k, k)).collect());
    let cross_spread = spread(cells.iter().filter(|c| c.2 == 1).map(|&(i, j, _)| scaled(i, j)).collect());

    Ok(Equalization { alice: alice_eq, bob: bob_eq, alice_factors, bob_factors, right_spread, cross_spread })
}

/// Places each of Alice's detectors where its same-basis coincidence
/// probability with Bob's matching detector is largest. Bob's geometry is
/// left untouched; the search spans half the gap between Bob's detectors on
/// either side of the matching one.
pub fn optimize_alice_centers(source: &SourceModel, alice: &StationConfig, bob: &StationConfig) -> Result<StationConfig> {
    let mut out = alice.without_attenuation();
    let bob_open = bob.without_attenuation();
    for basis in Basis::ALL {
        let bob_pair = bob.detectors(basis);
        let half_gap = 0.5 * (bob_pair.detector(1).center_mm - bob_pair.detector(0).center_mm).abs();
        let mut centers = [0.0; 2];
        for (s, center) in centers.iter_mut().enumerate() {
            let target = bob_pair.detector(s).center_mm;
            let width = out.detectors(basis).detector(s).width_mm;
            let bob_window = bob_open.latent_window(basis, s);
            *center = roots::golden_max(
                |c| {
                    let window_a = out.latent_interval(basis, c - 0.5 * width, c + 0.5 * width);
                    window_probability(source, basis, basis, window_a, bob_window)
                },
                target - half_gap,
                target + half_gap,
                1e-7,
            )?;
        }
        out = out.with_centers(basis, centers)?;
    }
    Ok(out)
}

/// Slit-convolved variance of the EPR combination (x_A − x_B or p_A + p_B),
/// in latent units, for a source whose corresponding width is `width`.
///
/// The detected quantity is the latent combination blurred by both slit
/// apertures, i.e. the Gaussian of the given width convolved with the
/// trapezoid formed by the two (box-shaped) slit windows. Its second moment
/// is evaluated by nested quadrature of that convolution.
pub fn detected_variance_for_width(width: f64, basis: Basis, alice: &StationConfig, bob: &StationConfig) -> Result<f64> {
    let a = alice.detectors(basis).mean_width() * alice.latent_per_mm(basis);
    let b = bob.detectors(basis).mean_width() * bob.latent_per_mm(basis);
    let half = 0.5 * (a + b);
    let knee = 0.5 * (a - b).abs();
    let kernel = move |t: f64| slit_kernel(t, a, b);
    let tol = Tolerance { absolute: 1e-14, relative: 1e-12 };

    if width == 0.0 {
        if half == 0.0 {
            return Ok(0.0);
        }
        return Ok(quadrature::integrate_with_breaks(|t| t * t * kernel(t), -half, half, &[-knee, knee], tol)?.value);
    }
    if half == 0.0 {
        let reach = 12.0 * width;
        return Ok(quadrature::integrate(|d| d * d * crate::source::normal_pdf(d, width), -reach, reach, tol)?.value);
    }

    let reach = 12.0 * width + half;
    let mut failure = None;
    let moment = quadrature::integrate_with_breaks(
        |d| {
            let inner = quadrature::integrate_with_breaks(
                |t| crate::source::normal_pdf(d - t, width) * kernel(t),
                -half,
                half,
                &[-knee, knee, d - 4.0 * width, d, d + 4.0 * width],
                Tolerance { absolute: 1e-15, relative: 1e-12 },
            );
            match inner {
                Ok(r) => d * d * r.value,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        -reach,
        reach,
        &[-half, -knee, 0.0, knee, half],
        tol,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(moment.value)
}

/// Density of the sum of two centred uniform variables with widths `a` and `b`.
fn slit_kernel(t: f64, a: f64, b: f64) -> f64 {
    let t = t.abs();
    let (wide, narrow) = if a >= b { (a, b) } else { (b, a) };
    let half = 0.5 * (wide + narrow);
    let knee = 0.5 * (wide - narrow);
    if t > half {
        0.0
    } else if narrow == 0.0 {
        1.0 / wide
    } else if t <= knee {
        1.0 / wide
    } else {
        (half - t) / (wide * narrow)
    }
}

/// Detected variance for the source's own width in that basis.
pub fn detected_variance(source: &SourceModel, basis: Basis, alice: &StationConfig, bob: &StationConfig) -> Result<f64> {
    let width = match basis {
        Basis::X => source.sigma_minus,
        Basis::P => source.kappa_minus,
    };
    detected_variance_for_width(width, basis, alice, bob)
}

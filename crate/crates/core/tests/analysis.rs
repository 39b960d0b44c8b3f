use epr_qkd::analysis::{
    self, conditional_variance, duan_check, fit_gaussian, fit_gaussian_points, scan_profile_moments, scan_simulation,
    DetectorLabel, ScanData, ScanSpec,
};
use epr_qkd::config::Setup;
use epr_qkd::{fixtures, rng, Basis};
use rand_distr::{Distribution, Poisson};

#[test]
fn fit_recovers_noisy_gaussian() {
    let (amp, mu, sigma, offset) = (800.0, 1.4, 0.35, 20.0);
    let xs = analysis::parse_grid("0:3:0.05").unwrap();
    let mut r = rng::seeded(17);
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let lambda: f64 = amp * (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp() + offset;
            Poisson::new(lambda).unwrap().sample(&mut r)
        })
        .collect();
    let fit = fit_gaussian_points(&xs, &ys).unwrap();
    assert!(!fit.flat);
    assert!((fit.center_mm - mu).abs() < 4.0 * fit.center_uncertainty().unwrap());
    assert!((fit.sigma_mm.unwrap() - sigma).abs() < 4.0 * fit.sigma_uncertainty().unwrap());
    assert!((fit.amplitude - amp).abs() < 4.0 * fit.amplitude_uncertainty().unwrap());
    let reduced = fit.chi_square / fit.degrees_of_freedom as f64;
    assert!(reduced > 0.4 && reduced < 2.0, "{reduced}");
}

#[test]
fn scan_fit_agrees_with_quadrature_moments() {
    let setup = Setup::calibrated_default().unwrap();
    let fixed: DetectorLabel = "Ax1".parse().unwrap();
    let spec = ScanSpec {
        fixed_detector: fixed,
        scanned_basis: Basis::X,
        grid_mm: analysis::parse_grid("0:3:0.05").unwrap(),
        pairs_per_point: 200_000,
        seed: 5,
    };
    let scan = scan_simulation(&setup.source, &setup.alice, &setup.bob, &spec).unwrap();
    let fit = fit_gaussian(&scan).unwrap();
    let m = scan_profile_moments(&setup.source, &setup.alice, &setup.bob, fixed, Basis::X).unwrap();
    assert!((fit.center_mm - m.mean_mm).abs() < 0.02, "{} vs {}", fit.center_mm, m.mean_mm);
    let sigma = fit.sigma_mm.unwrap();
    assert!((sigma - m.sd_mm).abs() / m.sd_mm < 0.03, "{sigma} vs {}", m.sd_mm);

    let again = scan_simulation(&setup.source, &setup.alice, &setup.bob, &spec).unwrap();
    assert_eq!(scan.counts, again.counts);
}

#[test]
fn crystal_variance_from_fit() {
    let setup = Setup::calibrated_default().unwrap();
    let fixed: DetectorLabel = "Ap2".parse().unwrap();
    let spec = ScanSpec {
        fixed_detector: fixed,
        scanned_basis: Basis::P,
        grid_mm: analysis::parse_grid("0:3:0.05").unwrap(),
        pairs_per_point: 100_000,
        seed: 6,
    };
    let scan = scan_simulation(&setup.source, &setup.alice, &setup.bob, &spec).unwrap();
    let fit = fit_gaussian(&scan).unwrap();
    let var = conditional_variance(&fit, setup.bob.latent_per_mm(Basis::P)).unwrap();
    assert!((var - 0.8935).abs() / 0.8935 < 0.1, "{var}");
}

#[test]
fn reference_variances_violate_the_bound() {
    let (vx, vp) = fixtures::reference_variances();
    let r = duan_check(&vx, &vp).unwrap();
    assert!(r.satisfied);
    assert!(r.product < 0.25);
    assert!(r.sigma_distance.unwrap() > 3.0);
    assert!(!r.flags.is_empty());
}

#[test]
fn scan_csv_round_trip() {
    let fixed: DetectorLabel = "Ax2".parse().unwrap();
    let scan = ScanData::new(vec![0.0, 0.1, 0.2], vec![5, 17, 3], fixed, Basis::X).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scan.csv");
    scan.write_csv(&path).unwrap();
    let back = ScanData::read_csv(&path, fixed, Basis::X).unwrap();
    assert_eq!(back, scan);
    assert!(std::fs::read_to_string(&path).unwrap().starts_with("position_mm,counts"));
}

//! Monte Carlo click statistics against the quadrature oracle.

use epr_qkd::adversary::{self, AttackConfig, BasisPolicy};
use epr_qkd::config::{RunConfig, Setup};
use epr_qkd::detection::{self, click, coincidence_probability, single_probability, slot_detector, StationConfig};
use epr_qkd::source::{PumpProfile, SourceModel};
use epr_qkd::{rng, Basis, Side};

fn within_binomial(hits: u64, n: u64, p: f64, k: f64) -> bool {
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    (hits as f64 / n as f64 - p).abs() <= k * sd.max(1.0 / n as f64)
}

#[test]
fn mixed_basis_probability_factorizes() {
    let setup = Setup::calibrated_default().unwrap();
    let (s, a, b) = (&setup.source, &setup.alice, &setup.bob);
    for (ba, bb) in [(Basis::X, Basis::P), (Basis::P, Basis::X)] {
        for da in 0..2 {
            for db in 0..2 {
                let joint = coincidence_probability(s, a, b, ba, bb, da, db).unwrap();
                let product = single_probability(s, a, ba, da).unwrap() * single_probability(s, b, bb, db).unwrap();
                assert!((joint - product).abs() < 1e-8, "{ba}{bb} {da}{db}: {joint} vs {product}");
            }
        }
    }
}

#[test]
fn perfect_correlation_limit() {
    let source = SourceModel::new(1e-4, 3.0, 0.85, 1.0e4, PumpProfile::new(2.0).unwrap()).unwrap();
    let station = StationConfig::default_for(Side::Bob);
    let mut alice = station;
    alice.mirror_momentum = false;
    let diag = coincidence_probability(&source, &alice, &station, Basis::X, Basis::X, 0, 0).unwrap();
    let off = coincidence_probability(&source, &alice, &station, Basis::X, Basis::X, 0, 1).unwrap();
    let mass = single_probability(&source, &alice, Basis::X, 0).unwrap();
    assert!((diag - mass).abs() < 1e-3 * mass, "{diag} vs {mass}");
    assert!(off < 1e-12);
}

#[test]
fn wrong_detector_ratio_is_small_for_default_geometry() {
    let setup = Setup::calibrated_default().unwrap();
    let (s, a, b) = (&setup.source, &setup.alice, &setup.bob);
    for basis in Basis::ALL {
        let right = coincidence_probability(s, a, b, basis, basis, 0, 0).unwrap();
        let wrong = coincidence_probability(s, a, b, basis, basis, 0, 1).unwrap();
        assert!(wrong / right < 0.1, "{basis}: {}", wrong / right);
    }
}

#[test]
fn equalized_levels_are_flat() {
    let setup = Setup::calibrated_default().unwrap();
    let eq = setup.equalization.as_ref().unwrap();
    assert!(eq.right_spread < 1e-6, "{}", eq.right_spread);
    assert!(eq.cross_spread < 1e-6, "{}", eq.cross_spread);
    let m = detection::coincidence_matrix(&setup.source, &setup.alice, &setup.bob).unwrap();
    let right: Vec<f64> = (0..4).map(|k| m[k][k]).collect();
    let min = right.iter().copied().fold(f64::INFINITY, f64::min);
    for r in right {
        assert!((r - min).abs() < 1e-6 * min);
    }
    for f in eq.alice_factors.iter().chain(&eq.bob_factors) {
        assert!(*f > 0.0 && *f <= 1.0);
    }
}

#[test]
fn equalization_is_idempotent() {
    let source = SourceModel::new(0.3, 3.0, 0.8, 7.0, PumpProfile::new(2.0).unwrap()).unwrap();
    let bob = StationConfig::default_for(Side::Bob);
    let mut alice = bob;
    alice.mirror_momentum = false;
    let eq = detection::equalize_levels(&source, &alice, &bob).unwrap();
    let again = detection::equalize_levels(&source, &eq.alice, &eq.bob).unwrap();
    let first = eq.alice_factors.iter().chain(&eq.bob_factors);
    for (a, b) in first.zip(again.alice_factors.iter().chain(&again.bob_factors)) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn attenuation_scales_probabilities_exactly() {
    let setup = Setup::calibrated_default().unwrap();
    let (s, a, b) = (&setup.source, &setup.alice, &setup.bob);
    let dimmed = b.with_transmissions([0.5, 0.25, 0.75, 1.0]).unwrap();
    let open = b.without_attenuation();
    for i in 0..4 {
        let (ba, da) = slot_detector(i);
        for j in 0..4 {
            let (bb, db) = slot_detector(j);
            let p_open = coincidence_probability(s, a, &open, ba, bb, da, db).unwrap();
            let p_dim = coincidence_probability(s, a, &dimmed, ba, bb, da, db).unwrap();
            let factor = [0.5, 0.25, 0.75, 1.0][j];
            assert!((p_dim - factor * p_open).abs() <= 1e-15 * p_open.max(1.0));
        }
    }
}

#[test]
fn monte_carlo_matches_oracle_for_all_cells() {
    let setup = Setup::calibrated_default().unwrap();
    let (s, a, b) = (&setup.source, setup.alice.without_attenuation(), setup.bob.without_attenuation());
    let n: u64 = 400_000;
    for i in 0..4 {
        let (ba, da) = slot_detector(i);
        let mut rng = rng::stream(7, i as u64);
        let mut hits = [0u64; 4];
        for _ in 0..n {
            let p = s.sample_pair(&mut rng);
            if click(a.to_detector(ba, p.coordinate(ba, Side::Alice)), a.detectors(ba)).index() != Some(da) {
                continue;
            }
            for (j, h) in hits.iter_mut().enumerate() {
                let (bb, db) = slot_detector(j);
                if click(b.to_detector(bb, p.coordinate(bb, Side::Bob)), b.detectors(bb)).index() == Some(db) {
                    *h += 1;
                }
            }
        }
        for (j, &h) in hits.iter().enumerate() {
            let (bb, db) = slot_detector(j);
            let p = coincidence_probability(s, &a, &b, ba, bb, da, db).unwrap();
            assert!(within_binomial(h, n, p, 3.5), "cell ({i},{j}): {h}/{n} vs {p}");
        }
    }
}

#[test]
fn eve_null_rate_matches_acceptance_mass() {
    let setup = Setup::calibrated_default().unwrap();
    let attack = AttackConfig::intercept_resend(BasisPolicy::AlwaysP);
    let eve = attack.resolve_station(&setup.bob);
    let accept = single_probability(&setup.source, &eve, Basis::P, 0).unwrap()
        + single_probability(&setup.source, &eve, Basis::P, 1).unwrap();
    let n = 1_000_000u64;
    let mut rng = rng::seeded(99);
    let mut nulls = 0;
    for _ in 0..n {
        let pair = setup.source.sample_pair(&mut rng);
        if adversary::intercept(&pair, &attack, &eve, &mut rng).unwrap().blocked() {
            nulls += 1;
        }
    }
    assert!(within_binomial(nulls, n, 1.0 - accept, 3.0), "{nulls} vs {}", 1.0 - accept);
}

#[test]
fn explicit_source_skips_calibration() {
    let cfg = RunConfig::from_toml_str(
        "source.sigma_minus_mm = 0.3\nsource.kappa_minus_per_mm = 0.9\nstations.equalize = false\nstations.optimize_alice_centers = false\n",
    )
    .unwrap();
    let setup = cfg.build_setup().unwrap();
    assert_eq!(setup.source.sigma_minus, 0.3);
    assert_eq!(setup.alice.x_detectors, setup.bob.x_detectors);
    assert!(setup.equalization.is_none());
}

use epr_qkd::adversary::{AttackConfig, BasisPolicy};
use epr_qkd::config::{RunConfig, Setup};
use epr_qkd::detection::{ClickOutcome, StationConfig};
use epr_qkd::protocol::{self, run_session, sift, CoincidenceTable, PairEvent, SessionConfig};
use epr_qkd::source::{PumpProfile, SourceModel};
use epr_qkd::{rng, Basis, Error, Side};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn setup() -> Setup {
    Setup::calibrated_default().unwrap()
}

fn session(n: usize, m: usize, seed: u64) -> SessionConfig {
    SessionConfig::new(n, m, 0.15, seed).unwrap()
}

#[test]
fn same_seed_reproduces_the_session() {
    let s = setup();
    let cfg = session(5_000, 500, 11);
    let a = run_session(&s.source, &s.alice, &s.bob, &cfg, None).unwrap();
    let b = run_session(&s.source, &s.alice, &s.bob, &cfg, None).unwrap();
    assert_eq!(a.table, b.table);
    assert_eq!(a.sifted_bits_a, b.sifted_bits_a);
    assert_eq!(a.sifted_bits_b, b.sifted_bits_b);
    assert_eq!(a.estimate, b.estimate);
    let c = run_session(&s.source, &s.alice, &s.bob, &session(5_000, 500, 12), None).unwrap();
    assert_ne!(a.table, c.table);
}

#[test]
fn table_is_consistent_with_events() {
    let s = setup();
    let r = run_session(&s.source, &s.alice, &s.bob, &session(8_000, 800, 5), None).unwrap();
    assert_eq!(r.table.total(), 8_000);
    assert_eq!(r.events.len(), 8_000);
    assert_eq!(CoincidenceTable::from_events(&r.events), r.table);
    let rows = r.table.row_sums();
    for (i, row) in r.table.counts.iter().enumerate() {
        assert_eq!(row.iter().sum::<u64>(), rows[i]);
    }
    let sifted = r.table.block_sum(Basis::X, Basis::X) + r.table.block_sum(Basis::P, Basis::P);
    assert_eq!(sifted as usize, r.sifted_count);
    assert_eq!(r.sifted_bits_a.len(), r.sifted_count - 800);
    assert!(r.events.iter().all(|e| e.outcome_a.is_click() && e.outcome_b.is_click()));
}

#[test]
fn key_disagreement_matches_estimate() {
    let s = setup();
    let r = run_session(&s.source, &s.alice, &s.bob, &session(40_000, 4_000, 21), None).unwrap();
    let q = r.estimate.qber;
    let key_n = r.sifted_bits_a.len() as f64;
    let observed = r.key_disagreement.unwrap();
    let sd = (q * (1.0 - q) / 4_000.0 + observed * (1.0 - observed) / key_n).sqrt();
    assert!((observed - q).abs() < 3.0 * sd, "{observed} vs {q} ± {sd}");
    assert!(!r.aborted);
}

#[test]
fn perfect_correlation_gives_error_free_x_block() {
    let source = SourceModel::new(1e-3, 3.0, 0.85, 1.0e3, PumpProfile::new(2.0).unwrap()).unwrap();
    let bob = StationConfig::default_for(Side::Bob);
    let alice = StationConfig::default_for(Side::Alice);
    let r = run_session(&source, &alice, &bob, &session(2_000, 100, 3), None).unwrap();
    assert_eq!(r.table.wrong_in(Basis::X), 0);
    assert!(r.table.right_in(Basis::X) > 0);
}

#[test]
fn random_events_sift_to_half() {
    let mut r = rng::seeded(8);
    let n = 100_000;
    let events: Vec<PairEvent> = (0..n)
        .map(|_| PairEvent {
            basis_a: Basis::from_bit(r.random()),
            basis_b: Basis::from_bit(r.random()),
            outcome_a: ClickOutcome::Detector1,
            outcome_b: ClickOutcome::Detector2,
            eve: None,
        })
        .collect();
    let kept = sift(&events);
    let frac = kept.len() as f64 / n as f64;
    assert!((frac - 0.5).abs() < 3.0 * (0.25 / n as f64).sqrt(), "{frac}");
    assert!(kept.iter().all(PairEvent::same_basis));
}

#[test]
fn matching_basis_interception_is_transparent() {
    let s = setup();
    let cfg = session(60_000, 1_000, 31);
    let clean = run_session(&s.source, &s.alice, &s.bob, &cfg, None).unwrap();
    let attack = AttackConfig::intercept_resend(BasisPolicy::UniformRandom);
    let attacked = run_session(&s.source, &s.alice, &s.bob, &session(120_000, 1_000, 32), Some(&attack)).unwrap();
    let matching = attacked
        .events
        .iter()
        .filter(|e| e.same_basis() && e.eve.map(|r| r.basis_e) == Some(e.basis_a));
    let attacked_table = CoincidenceTable::from_events(matching);
    for basis in Basis::ALL {
        let cells = |t: &CoincidenceTable| -> Vec<f64> {
            (0..2).flat_map(|i| (0..2).map(move |j| (i, j))).map(|(i, j)| t.get(basis, i, basis, j) as f64).collect()
        };
        let a = cells(&clean.table);
        let b = cells(&attacked_table);
        let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
        let mut chi2 = 0.0;
        for k in 0..4 {
            let pooled = (a[k] + b[k]) / (na + nb);
            for (obs, n) in [(a[k], na), (b[k], nb)] {
                let exp = pooled * n;
                chi2 += (obs - exp).powi(2) / exp;
            }
        }
        let critical = ChiSquared::new(3.0).unwrap().inverse_cdf(0.9973);
        assert!(chi2 < critical, "{basis}: chi2 {chi2} >= {critical}");
    }
}

#[test]
fn interception_raises_the_error_rate() {
    let s = setup();
    let clean = run_session(&s.source, &s.alice, &s.bob, &session(30_000, 3_000, 41), None).unwrap();
    let attack = AttackConfig::intercept_resend(BasisPolicy::UniformRandom);
    let eve = run_session(&s.source, &s.alice, &s.bob, &session(30_000, 3_000, 42), Some(&attack)).unwrap();
    let sd = (clean.estimate.uncertainty.powi(2) + eve.estimate.uncertainty.powi(2)).sqrt();
    assert!(eve.estimate.qber - clean.estimate.qber > 3.0 * sd);
    assert!(eve.aborted);
    assert!(eve.events.iter().all(|e| e.eve.is_some()));
}

#[test]
fn invalid_sessions_are_rejected() {
    assert!(matches!(SessionConfig::new(0, 0, 0.15, 1), Err(Error::InvalidParameter { .. })));
    assert!(SessionConfig::new(100, 50, 0.15, 1).is_err());
    assert!(SessionConfig::new(100, 10, 1.5, 1).is_err());
}

#[test]
fn exhausted_budget_is_a_runtime_error() {
    let s = setup();
    let mut cfg = session(1_000, 10, 1);
    cfg.max_emitted_pairs = Some(50);
    let err = run_session(&s.source, &s.alice, &s.bob, &cfg, None).unwrap_err();
    assert!(!err.is_validation());
}

#[test]
fn config_drives_the_session() {
    let cfg = RunConfig::from_toml_str("session.coincidences = 3000\nsession.estimation_pairs = 300\n").unwrap();
    let sc = cfg.session_config(9).unwrap();
    let s = setup();
    let r = run_session(&s.source, &s.alice, &s.bob, &sc, None).unwrap();
    assert_eq!(r.coincidences, 3_000);
    assert_eq!(protocol::bits_to_string(&r.sifted_bits_a).len(), r.sifted_bits_a.len());
}

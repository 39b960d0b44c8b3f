//! The key distribution session and the QBER arithmetic on coincidence tables.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversary::{self, AttackConfig, BasisPolicy, EveRecord};
use crate::detection::{self, detector_slot, ClickOutcome, StationConfig};
use crate::source::SourceModel;
use crate::{rng, Basis, Error, Result, Side};

pub const DEFAULT_QBER_THRESHOLD: f64 = 0.15;
/// Emitted-pair budget per requested coincidence before a session gives up.
pub const DEFAULT_PAIR_BUDGET_FACTOR: u64 = 10_000;

pub const ALICE_LABELS: [&str; 4] = ["Ax1", "Ax2", "Ap1", "Ap2"];
pub const BOB_LABELS: [&str; 4] = ["Bx1", "Bx2", "Bp1", "Bp2"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Coincidences to accumulate (N).
    pub coincidences: usize,
    /// Sifted pairs sacrificed for QBER estimation (m).
    pub estimation_pairs: usize,
    pub qber_threshold: f64,
    pub rng_seed: u64,
    /// Defaults to 10⁴ · N.
    pub max_emitted_pairs: Option<u64>,
}

impl SessionConfig {
    pub fn new(coincidences: usize, estimation_pairs: usize, qber_threshold: f64, rng_seed: u64) -> Result<Self> {
        let cfg = SessionConfig { coincidences, estimation_pairs, qber_threshold, rng_seed, max_emitted_pairs: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.coincidences == 0 {
            return Err(Error::invalid("session.coincidences", "must be positive"));
        }
        if self.estimation_pairs == 0 || 2 * self.estimation_pairs >= self.coincidences {
            return Err(Error::invalid(
                "session.estimation_pairs",
                format!("must satisfy 0 < m < N/2 (m = {}, N = {})", self.estimation_pairs, self.coincidences),
            ));
        }
        if !(self.qber_threshold > 0.0 && self.qber_threshold < 1.0) {
            return Err(Error::invalid(
                "session.qber_threshold",
                format!("must lie in (0, 1), got {}", self.qber_threshold),
            ));
        }
        if self.max_emitted_pairs == Some(0) {
            return Err(Error::invalid("session.max_emitted_pairs", "must be positive"));
        }
        Ok(())
    }

    pub fn pair_budget(&self) -> u64 {
        self.max_emitted_pairs
            .unwrap_or_else(|| (self.coincidences as u64).saturating_mul(DEFAULT_PAIR_BUDGET_FACTOR))
    }
}

/// One coincidence: both parties registered a click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEvent {
    pub basis_a: Basis,
    pub basis_b: Basis,
    pub outcome_a: ClickOutcome,
    pub outcome_b: ClickOutcome,
    pub eve: Option<EveRecord>,
}

impl PairEvent {
    pub fn same_basis(&self) -> bool {
        self.basis_a == self.basis_b
    }

    fn slots(&self) -> Option<(usize, usize)> {
        Some((
            detector_slot(self.basis_a, self.outcome_a.index()?),
            detector_slot(self.basis_b, self.outcome_b.index()?),
        ))
    }
}

/// Keeps the events in which both parties chose the same basis, in order.
pub fn sift(events: &[PairEvent]) -> Vec<PairEvent> {
    events.iter().copied().filter(PairEvent::same_basis).collect()
}

/// 4×4 coincidence counts, rows Ax1, Ax2, Ap1, Ap2 and columns Bx1, Bx2, Bp1, Bp2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CoincidenceTable {
    pub counts: [[u64; 4]; 4],
}

impl CoincidenceTable {
    pub fn new(counts: [[u64; 4]; 4]) -> Self {
        CoincidenceTable { counts }
    }

    pub fn from_events<'a>(events: impl IntoIterator<Item = &'a PairEvent>) -> Self {
        let mut table = CoincidenceTable::default();
        for e in events {
            table.record(e);
        }
        table
    }

    pub fn record(&mut self, event: &PairEvent) {
        if let Some((i, j)) = event.slots() {
            self.counts[i][j] += 1;
        }
    }

    pub fn get(&self, basis_a: Basis, det_a: usize, basis_b: Basis, det_b: usize) -> u64 {
        self.counts[detector_slot(basis_a, det_a)][detector_slot(basis_b, det_b)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sums(&self) -> [u64; 4] {
        self.counts.map(|row| row.iter().sum())
    }

    pub fn column_sums(&self) -> [u64; 4] {
        let mut out = [0; 4];
        for row in &self.counts {
            for (o, c) in out.iter_mut().zip(row) {
                *o += c;
            }
        }
        out
    }

    pub fn block_sum(&self, basis_a: Basis, basis_b: Basis) -> u64 {
        let mut s = 0;
        for s_a in 0..2 {
            for s_b in 0..2 {
                s += self.get(basis_a, s_a, basis_b, s_b);
            }
        }
        s
    }

    /// Off-diagonal ("wrong") counts of one same-basis block.
    pub fn wrong_in(&self, basis: Basis) -> u64 {
        self.get(basis, 0, basis, 1) + self.get(basis, 1, basis, 0)
    }

    pub fn right_in(&self, basis: Basis) -> u64 {
        self.get(basis, 0, basis, 0) + self.get(basis, 1, basis, 1)
    }

    pub fn scaled(&self, factor: u64) -> Self {
        CoincidenceTable { counts: self.counts.map(|row| row.map(|c| c * factor)) }
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from(",");
        out.push_str(&BOB_LABELS.join(","));
        out.push('\n');
        for (label, row) in ALICE_LABELS.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(out, "{label},{}", cells.join(","));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::report::atomic_write(path, self.to_csv_string().as_bytes())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        CoincidenceTable::from_csv_str(&std::fs::read_to_string(path)?)
    }

    /// Parses the labelled 5×5 CSV layout. Row and column numbers in
    /// diagnostics are 1-based and count the header.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
        let parse_err = |row: usize, column: usize, reason: String| Error::TableParse { row, column, reason };
        if records.len() != 5 {
            return Err(parse_err(
                records.len().min(5) + usize::from(records.len() < 5),
                1,
                format!("expected a header and 4 data rows, found {} rows", records.len()),
            ));
        }
        for (r, rec) in records.iter().enumerate() {
            if rec.len() != 5 {
                return Err(parse_err(r + 1, rec.len().min(5) + 1, format!("expected 5 fields, found {}", rec.len())));
            }
        }
        let header = &records[0];
        for (c, want) in BOB_LABELS.iter().enumerate() {
            if &header[c + 1] != *want {
                return Err(parse_err(1, c + 2, format!("expected column label `{want}`, found `{}`", &header[c + 1])));
            }
        }
        let mut counts = [[0u64; 4]; 4];
        for (i, want) in ALICE_LABELS.iter().enumerate() {
            let rec = &records[i + 1];
            if &rec[0] != *want {
                return Err(parse_err(i + 2, 1, format!("expected row label `{want}`, found `{}`", &rec[0])));
            }
            for j in 0..4 {
                let cell = &rec[j + 1];
                counts[i][j] = cell.parse::<u64>().map_err(|_| {
                    parse_err(i + 2, j + 2, format!("`{cell}` is not a non-negative integer count"))
                })?;
            }
        }
        Ok(CoincidenceTable { counts })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QberReport {
    pub p_wrong: f64,
    pub p_right: f64,
    pub qber: f64,
    pub qber_xx: Option<f64>,
    pub qber_pp: Option<f64>,
    /// Eavesdropper disturbance term, present only for predictions.
    pub chi: Option<f64>,
    /// Binomial standard error √(q(1 − q)/total).
    pub uncertainty: f64,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn binomial_error(q: f64, total: f64) -> f64 {
    (q * (1.0 - q) / total).sqrt()
}

/// QBER of the same-basis blocks with no eavesdropper.
pub fn qber_from_counts(table: &CoincidenceTable) -> Result<QberReport> {
    let wrong: u64 = Basis::ALL.iter().map(|&b| table.wrong_in(b)).sum();
    let right: u64 = Basis::ALL.iter().map(|&b| table.right_in(b)).sum();
    let total = wrong + right;
    if total == 0 {
        return Err(Error::ZeroDenominator("same-basis coincidence total"));
    }
    let qber = wrong as f64 / total as f64;
    Ok(QberReport {
        p_wrong: wrong as f64,
        p_right: right as f64,
        qber,
        qber_xx: ratio(table.wrong_in(Basis::X), table.block_sum(Basis::X, Basis::X)),
        qber_pp: ratio(table.wrong_in(Basis::P), table.block_sum(Basis::P, Basis::P)),
        chi: None,
        uncertainty: binomial_error(qber, total as f64),
    })
}

/// Predicted QBER under intercept-resend when Eve's wrong-basis resend makes
/// Bob's detector `t` fire with probability `p_cross[t]`.
///
/// χ weights every cross-basis coincidence by `p_cross` of Bob's detector and
/// the denominator is the grand total of all four blocks.
pub fn qber_with_eve_weights(table: &CoincidenceTable, p_cross: [f64; 2]) -> Result<QberReport> {
    for p in p_cross {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("p_cross", format!("must lie in [0, 1], got {p}")));
        }
    }
    let grand = table.total();
    if grand == 0 {
        return Err(Error::ZeroDenominator("coincidence grand total"));
    }
    let mut chi = 0.0;
    for basis_a in Basis::ALL {
        let basis_b = basis_a.other();
        for s in 0..2 {
            for t in 0..2 {
                chi += p_cross[t] * table.get(basis_a, s, basis_b, t) as f64;
            }
        }
    }
    let wrong: u64 = Basis::ALL.iter().map(|&b| table.wrong_in(b)).sum();
    let p_wrong = wrong as f64 + chi;
    let grand = grand as f64;
    let qber = p_wrong / grand;
    Ok(QberReport {
        p_wrong,
        p_right: grand - p_wrong,
        qber,
        qber_xx: ratio(table.wrong_in(Basis::X), table.block_sum(Basis::X, Basis::X)),
        qber_pp: ratio(table.wrong_in(Basis::P), table.block_sum(Basis::P, Basis::P)),
        chi: Some(chi),
        uncertainty: binomial_error(qber, grand),
    })
}

pub fn qber_with_eve_prediction(table: &CoincidenceTable, p_resend: f64) -> Result<QberReport> {
    qber_with_eve_weights(table, [p_resend, p_resend])
}

/// P_ijk: Alice measures in `i`, Eve in `j`, Bob in `k`, and Bob registers
/// Eve's replacement photon. `p_resend[j][k]` is the probability of that
/// registration for Eve basis `j` and Bob basis `k`.
pub fn three_party_probability(
    table: &CoincidenceTable,
    i: Basis,
    j: Basis,
    k: Basis,
    p_resend: [[f64; 2]; 2],
) -> Result<f64> {
    let grand = table.total();
    if grand == 0 {
        return Err(Error::ZeroDenominator("coincidence grand total"));
    }
    let r_ik = table.block_sum(i, k) as f64 / grand as f64;
    Ok(r_ik * p_resend[j.index()][k.index()])
}

/// True when the estimated QBER strictly exceeds the threshold.
pub fn abort_decision(report: &QberReport, threshold: f64) -> bool {
    report.qber > threshold
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionResult {
    pub sifted_bits_a: Vec<u8>,
    pub sifted_bits_b: Vec<u8>,
    pub estimate: QberReport,
    pub aborted: bool,
    /// All N coincidences, sifted or not.
    pub table: CoincidenceTable,
    pub emitted_pairs: u64,
    pub coincidences: usize,
    pub sifted_count: usize,
    /// Sifted events over coincidences.
    pub sifted_fraction: f64,
    /// Emitted pairs for which both parties picked the same basis, over all emitted pairs.
    pub basis_agreement_fraction: f64,
    /// Disagreement rate of the final key bits; `None` for an empty key.
    pub key_disagreement: Option<f64>,
    #[serde(skip)]
    pub events: Vec<PairEvent>,
}

fn thin<R: Rng + ?Sized>(outcome: ClickOutcome, station: &StationConfig, basis: Basis, rng: &mut R) -> ClickOutcome {
    match outcome.index() {
        Some(i) => {
            let t = station.transmission(basis, i);
            if t >= 1.0 || rng.random::<f64>() < t {
                outcome
            } else {
                ClickOutcome::Null
            }
        }
        None => outcome,
    }
}

fn local_click(station: &StationConfig, basis: Basis, latent: f64) -> ClickOutcome {
    detection::click(station.to_detector(basis, latent), station.detectors(basis))
}

/// Runs one key-distribution session.
///
/// Pairs are emitted until N coincidences are collected. Each party picks a
/// basis with a fair coin; filters thin clicks independently. Same-basis
/// events are sifted, m of them chosen uniformly without replacement give the
/// QBER estimate, and the rest form the key.
pub fn run_session(
    source: &SourceModel,
    alice: &StationConfig,
    bob: &StationConfig,
    session: &SessionConfig,
    attack: Option<&AttackConfig>,
) -> Result<SessionResult> {
    session.validate()?;
    let attack = match attack {
        Some(a) if a.basis_policy != BasisPolicy::None => {
            a.validate()?;
            Some((a, a.resolve_station(bob)))
        }
        _ => None,
    };
    let mut rng = rng::seeded(session.rng_seed);
    let budget = session.pair_budget();
    let mut events = Vec::with_capacity(session.coincidences);
    let mut emitted: u64 = 0;
    let mut agreed: u64 = 0;

    while events.len() < session.coincidences {
        if emitted >= budget {
            return Err(Error::SessionStalled { emitted, coincidences: events.len() });
        }
        emitted += 1;
        let sample = source.sample_pair(&mut rng);
        let basis_a = Basis::from_bit(rng.random());
        let basis_b = Basis::from_bit(rng.random());
        if basis_a == basis_b {
            agreed += 1;
        }

        let raw_a = local_click(alice, basis_a, sample.coordinate(basis_a, Side::Alice));
        let outcome_a = thin(raw_a, alice, basis_a, &mut rng);

        let (raw_b, eve) = match &attack {
            None => (local_click(bob, basis_b, sample.coordinate(basis_b, Side::Bob)), None),
            Some((cfg, eve_station)) => {
                let icpt = adversary::intercept(&sample, cfg, eve_station, &mut rng)?;
                (icpt.bob_click(basis_b, &mut rng), Some(icpt.record))
            }
        };
        let outcome_b = thin(raw_b, bob, basis_b, &mut rng);

        if outcome_a.is_click() && outcome_b.is_click() {
            events.push(PairEvent { basis_a, basis_b, outcome_a, outcome_b, eve });
        }
    }

    let table = CoincidenceTable::from_events(&events);
    let sifted = sift(&events);
    if sifted.len() < session.estimation_pairs {
        return Err(Error::InsufficientSifted { sifted: sifted.len(), requested: session.estimation_pairs });
    }
    let mut is_estimation = vec![false; sifted.len()];
    for k in index::sample(&mut rng, sifted.len(), session.estimation_pairs) {
        is_estimation[k] = true;
    }
    let estimation = CoincidenceTable::from_events(sifted.iter().zip(&is_estimation).filter(|(_, &m)| m).map(|(e, _)| e));
    let estimate = qber_from_counts(&estimation)?;

    let mut sifted_bits_a = Vec::with_capacity(sifted.len() - session.estimation_pairs);
    let mut sifted_bits_b = Vec::with_capacity(sifted.len() - session.estimation_pairs);
    for (e, &m) in sifted.iter().zip(&is_estimation) {
        if !m {
            sifted_bits_a.push(e.outcome_a.bit().expect("coincidence"));
            sifted_bits_b.push(e.outcome_b.bit().expect("coincidence"));
        }
    }
    let mismatches = sifted_bits_a.iter().zip(&sifted_bits_b).filter(|(a, b)| a != b).count();
    let key_disagreement = (!sifted_bits_a.is_empty()).then(|| mismatches as f64 / sifted_bits_a.len() as f64);

    Ok(SessionResult {
        aborted: abort_decision(&estimate, session.qber_threshold),
        estimate,
        table,
        emitted_pairs: emitted,
        coincidences: events.len(),
        sifted_count: sifted.len(),
        sifted_fraction: sifted.len() as f64 / events.len() as f64,
        basis_agreement_fraction: agreed as f64 / emitted as f64,
        key_disagreement,
        sifted_bits_a,
        sifted_bits_b,
        events,
    })
}

/// Renders a bit string as ASCII `0`/`1`.
pub fn bits_to_string(bits: &[u8]) -> String {
    bits.iter().map(|&b| if b == 0 { '0' } else { '1' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> CoincidenceTable {
        CoincidenceTable::new([
            [943, 67, 462, 614],
            [72, 1079, 492, 591],
            [700, 671, 956, 29],
            [655, 765, 22, 876],
        ])
    }

    #[test]
    fn qber_of_table1() {
        let r = qber_from_counts(&table1()).unwrap();
        assert_eq!(r.p_wrong, 190.0);
        assert_eq!(r.p_wrong + r.p_right, 4044.0);
        assert!((r.qber - 190.0 / 4044.0).abs() < 1e-15);
        assert!((r.qber_xx.unwrap() - 139.0 / 2161.0).abs() < 1e-15);
        assert!((r.qber_pp.unwrap() - 51.0 / 1883.0).abs() < 1e-15);
        assert!((r.uncertainty - 0.0033).abs() < 1e-4);
    }

    #[test]
    fn diagonal_table_has_zero_qber() {
        let mut counts = [[0; 4]; 4];
        for (k, row) in counts.iter_mut().enumerate() {
            row[k] = 100;
        }
        assert_eq!(qber_from_counts(&CoincidenceTable::new(counts)).unwrap().qber, 0.0);
    }

    #[test]
    fn empty_same_basis_blocks_are_an_error() {
        let mut counts = [[0; 4]; 4];
        counts[0][2] = 5;
        assert!(matches!(qber_from_counts(&CoincidenceTable::new(counts)), Err(Error::ZeroDenominator(_))));
    }

    #[test]
    fn eve_prediction_of_table1() {
        let t = table1();
        let half = qber_with_eve_prediction(&t, 0.5).unwrap();
        assert_eq!(half.chi, Some(2475.0));
        assert!((half.qber - 2665.0 / 8994.0).abs() < 1e-15);
        let none = qber_with_eve_prediction(&t, 0.0).unwrap();
        assert!((none.qber - 190.0 / 8994.0).abs() < 1e-15);
        let full = qber_with_eve_prediction(&t, 1.0).unwrap();
        assert!((full.qber - 5140.0 / 8994.0).abs() < 1e-15);
    }

    #[test]
    fn eve_weights_toward_detector_one() {
        let t = table1();
        let r = qber_with_eve_weights(&t, [1.0, 0.0]).unwrap();
        let chi = (462 + 492 + 700 + 655) as f64;
        assert_eq!(r.chi, Some(chi));
        assert!((r.qber - (190.0 + chi) / 8994.0).abs() < 1e-15);
    }

    #[test]
    fn three_party_examples() {
        let t = table1();
        let ones = [[1.0; 2]; 2];
        let same = three_party_probability(&t, Basis::X, Basis::X, Basis::X, ones).unwrap();
        assert!((same - 2161.0 / 8994.0).abs() < 1e-15);
        let half = three_party_probability(&t, Basis::X, Basis::X, Basis::P, [[0.5; 2]; 2]).unwrap();
        assert!((half - 0.5 * 2159.0 / 8994.0).abs() < 1e-15);
        assert_eq!(three_party_probability(&t, Basis::P, Basis::X, Basis::X, [[0.0; 2]; 2]).unwrap(), 0.0);
    }

    #[test]
    fn abort_is_strict() {
        let mut r = qber_from_counts(&table1()).unwrap();
        assert!(!abort_decision(&r, 0.15));
        r.qber = 0.296;
        assert!(abort_decision(&r, 0.15));
        r.qber = 0.15;
        assert!(!abort_decision(&r, 0.15));
    }

    #[test]
    fn csv_round_trip() {
        let t = table1();
        let text = t.to_csv_string();
        assert!(text.starts_with(",Bx1,Bx2,Bp1,Bp2\nAx1,943,67,462,614\n"));
        assert_eq!(CoincidenceTable::from_csv_str(&text).unwrap(), t);
    }

    #[test]
    fn csv_diagnostics_point_at_the_cell() {
        let bad = ",Bx1,Bx2,Bp1,Bp2\nAx1,1,2,3,4\nAx2,1,x,3,4\nAp1,1,2,3,4\nAp2,1,2,3,4\n";
        match CoincidenceTable::from_csv_str(bad) {
            Err(Error::TableParse { row, column, .. }) => assert_eq!((row, column), (3, 3)),
            other => panic!("unexpected {other:?}"),
        }
        let short = ",Bx1,Bx2,Bp1,Bp2\nAx1,1,2,3,4\nAx2,1,2,3,4\nAp1,1,2,3,4\n";
        assert!(matches!(CoincidenceTable::from_csv_str(short), Err(Error::TableParse { .. })));
        let negative = ",Bx1,Bx2,Bp1,Bp2\nAx1,-1,2,3,4\nAx2,1,2,3,4\nAp1,1,2,3,4\nAp2,1,2,3,4\n";
        assert!(matches!(
            CoincidenceTable::from_csv_str(negative),
            Err(Error::TableParse { row: 2, column: 2, .. })
        ));
    }

    #[test]
    fn sift_examples() {
        let ev = |a, b| PairEvent {
            basis_a: a,
            basis_b: b,
            outcome_a: ClickOutcome::Detector1,
            outcome_b: ClickOutcome::Detector2,
            eve: None,
        };
        let same = vec![ev(Basis::X, Basis::X), ev(Basis::P, Basis::P)];
        assert_eq!(sift(&same), same);
        let alternating: Vec<_> =
            (0..10).map(|k| if k % 2 == 0 { ev(Basis::X, Basis::X) } else { ev(Basis::X, Basis::P) }).collect();
        assert_eq!(sift(&alternating).len(), 5);
    }

    #[test]
    fn session_config_validation() {
        assert!(SessionConfig::new(0, 0, 0.15, 1).is_err());
        assert!(SessionConfig::new(100, 50, 0.15, 1).is_err());
        assert!(SessionConfig::new(100, 49, 0.15, 1).is_ok());
        assert!(SessionConfig::new(100, 10, 1.0, 1).is_err());
        assert_eq!(SessionConfig::new(100, 10, 0.15, 1).unwrap().pair_budget(), 1_000_000);
    }
}

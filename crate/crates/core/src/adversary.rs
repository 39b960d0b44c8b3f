//! Intercept-resend eavesdropping on Bob's channel.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::detection::{self, ClickOutcome, StationConfig};
use crate::protocol::{qber_from_counts, qber_with_eve_weights, CoincidenceTable, QberReport};
use crate::source::PairSample;
use crate::{Basis, Error, Result, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisPolicy {
    AlwaysX,
    AlwaysP,
    UniformRandom,
    None,
}

impl std::fmt::Display for BasisPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BasisPolicy::AlwaysX => "always_x",
            BasisPolicy::AlwaysP => "always_p",
            BasisPolicy::UniformRandom => "uniform_random",
            BasisPolicy::None => "none",
        })
    }
}

impl std::str::FromStr for BasisPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "always_x" => Ok(BasisPolicy::AlwaysX),
            "always_p" => Ok(BasisPolicy::AlwaysP),
            "uniform_random" => Ok(BasisPolicy::UniformRandom),
            "none" => Ok(BasisPolicy::None),
            other => Err(Error::Parse(format!(
                "unknown basis policy `{other}` (expected always_x, always_p, uniform_random or none)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub basis_policy: BasisPolicy,
    /// Probability that a same-basis resend hits the detector Eve saw.
    pub p_same_basis_correct: f64,
    /// Bob's detector-1 and detector-2 probabilities after a wrong-basis
    /// resend; the remainder is a miss.
    pub p_cross_basis: [f64; 2],
    /// Eve's own receiver. `None` means a copy of Bob's geometry without
    /// Bob's neutral filters.
    pub eve_station: Option<StationConfig>,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig::intercept_resend(BasisPolicy::UniformRandom)
    }
}

impl AttackConfig {
    pub fn intercept_resend(basis_policy: BasisPolicy) -> Self {
        AttackConfig { basis_policy, p_same_basis_correct: 1.0, p_cross_basis: [0.5, 0.5], eve_station: None }
    }

    pub fn none() -> Self {
        AttackConfig::intercept_resend(BasisPolicy::None)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_same_basis_correct) {
            return Err(Error::invalid(
                "attack.p_same_basis_correct",
                format!("must lie in [0, 1], got {}", self.p_same_basis_correct),
            ));
        }
        for p in self.p_cross_basis {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("attack.p_cross_basis", format!("entries must lie in [0, 1], got {p}")));
            }
        }
        if self.p_cross_basis[0] + self.p_cross_basis[1] > 1.0 + 1e-12 {
            return Err(Error::invalid("attack.p_cross_basis", "entries must sum to at most 1"));
        }
        Ok(())
    }

    pub fn resolve_station(&self, bob: &StationConfig) -> StationConfig {
        self.eve_station.unwrap_or_else(|| bob.without_attenuation())
    }

    fn choose_basis<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Basis> {
        match self.basis_policy {
            BasisPolicy::AlwaysX => Ok(Basis::X),
            BasisPolicy::AlwaysP => Ok(Basis::P),
            BasisPolicy::UniformRandom => Ok(Basis::from_bit(rng.random())),
            BasisPolicy::None => Err(Error::UnsupportedAttack("basis policy `none` cannot intercept".into())),
        }
    }
}

/// What Eve measured on Bob's photon.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EveRecord {
    pub basis_e: Basis,
    pub outcome_e: ClickOutcome,
}

/// Eve's measurement together with the photon she forwards to Bob.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interception {
    pub record: EveRecord,
    p_same_basis_correct: f64,
    p_cross_basis: [f64; 2],
}

impl Interception {
    /// Bob's raw click (before his own filters) for the forwarded photon.
    pub fn bob_click<R: Rng + ?Sized>(&self, bob_basis: Basis, rng: &mut R) -> ClickOutcome {
        let Some(eve_det) = self.record.outcome_e.index() else {
            return ClickOutcome::Null;
        };
        let u: f64 = rng.random();
        if bob_basis == self.record.basis_e {
            if u < self.p_same_basis_correct {
                ClickOutcome::from_index(eve_det)
            } else {
                ClickOutcome::from_index(1 - eve_det)
            }
        } else if u < self.p_cross_basis[0] {
            ClickOutcome::Detector1
        } else if u < self.p_cross_basis[0] + self.p_cross_basis[1] {
            ClickOutcome::Detector2
        } else {
            ClickOutcome::Null
        }
    }

    pub fn blocked(&self) -> bool {
        self.record.outcome_e == ClickOutcome::Null
    }
}

/// Eve measures Bob's photon with `eve_station` in the basis her policy picks.
/// A miss blocks the photon; a click is resent according to the attack's
/// fidelities.
pub fn intercept<R: Rng + ?Sized>(
    sample: &PairSample,
    attack: &AttackConfig,
    eve_station: &StationConfig,
    rng: &mut R,
) -> Result<Interception> {
    let basis_e = attack.choose_basis(rng)?;
    let outcome_e = detection::click(
        detection::readout_coordinate(sample, eve_station, basis_e, Side::Bob),
        eve_station.detectors(basis_e),
    );
    Ok(Interception {
        record: EveRecord { basis_e, outcome_e },
        p_same_basis_correct: attack.p_same_basis_correct,
        p_cross_basis: attack.p_cross_basis,
    })
}

/// Closed-form QBER prediction from a measured table.
pub fn predicted_qber(attack: &AttackConfig, table: &CoincidenceTable) -> Result<QberReport> {
    match attack.basis_policy {
        BasisPolicy::None => qber_from_counts(table),
        BasisPolicy::UniformRandom => {
            attack.validate()?;
            qber_with_eve_weights(table, attack.p_cross_basis)
        }
        other => Err(Error::UnsupportedAttack(format!(
            "closed-form prediction assumes a uniformly random basis, got {other:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn station() -> StationConfig {
        StationConfig::default_for(Side::Bob)
    }

    #[test]
    fn miss_blocks_the_photon() {
        let sample = PairSample { x_a: 0.0, x_b: 0.0, p_a: 0.0, p_b: 0.0 };
        let attack = AttackConfig::intercept_resend(BasisPolicy::AlwaysX);
        let mut r = rng::seeded(3);
        // latent 0 maps onto the axis, between the two slits
        let icpt = intercept(&sample, &attack, &station(), &mut r).unwrap();
        assert!(icpt.blocked());
        for basis in Basis::ALL {
            assert_eq!(icpt.bob_click(basis, &mut r), ClickOutcome::Null);
        }
    }

    #[test]
    fn same_basis_resend_is_faithful() {
        let st = station();
        let latent = st.to_latent(Basis::X, 2.0);
        let sample = PairSample { x_a: latent, x_b: latent, p_a: 0.0, p_b: 0.0 };
        let attack = AttackConfig::intercept_resend(BasisPolicy::AlwaysX);
        let mut r = rng::seeded(5);
        let icpt = intercept(&sample, &attack, &st, &mut r).unwrap();
        assert_eq!(icpt.record.outcome_e, ClickOutcome::Detector2);
        for _ in 0..100 {
            assert_eq!(icpt.bob_click(Basis::X, &mut r), ClickOutcome::Detector2);
        }
    }

    #[test]
    fn wrong_basis_resend_is_uniform() {
        let st = station();
        let latent = st.to_latent(Basis::P, 1.0);
        let sample = PairSample { x_a: 0.0, x_b: 0.0, p_a: 0.0, p_b: latent };
        let attack = AttackConfig::intercept_resend(BasisPolicy::AlwaysP);
        let mut r = rng::seeded(9);
        let icpt = intercept(&sample, &attack, &st, &mut r).unwrap();
        assert_eq!(icpt.record.outcome_e, ClickOutcome::Detector1);
        let n = 20_000;
        let ones = (0..n).filter(|_| icpt.bob_click(Basis::X, &mut r) == ClickOutcome::Detector1).count();
        let sd = (0.25 / n as f64).sqrt();
        assert!((ones as f64 / n as f64 - 0.5).abs() < 4.0 * sd);
    }

    #[test]
    fn cross_fractions_may_leave_a_miss() {
        let mut attack = AttackConfig::intercept_resend(BasisPolicy::AlwaysX);
        attack.p_cross_basis = [0.2, 0.3];
        assert!(attack.validate().is_ok());
        attack.p_cross_basis = [0.7, 0.4];
        assert!(attack.validate().is_err());
        attack.p_cross_basis = [0.5, 0.5];
        attack.p_same_basis_correct = 1.5;
        assert!(attack.validate().is_err());
    }

    #[test]
    fn policy_none_cannot_intercept() {
        let sample = PairSample { x_a: 0.0, x_b: 0.0, p_a: 0.0, p_b: 0.0 };
        let mut r = rng::seeded(1);
        assert!(intercept(&sample, &AttackConfig::none(), &station(), &mut r).is_err());
    }

    #[test]
    fn prediction_by_policy() {
        let table = CoincidenceTable::new([
            [943, 67, 462, 614],
            [72, 1079, 492, 591],
            [700, 671, 956, 29],
            [655, 765, 22, 876],
        ]);
        let q = predicted_qber(&AttackConfig::default(), &table).unwrap();
        assert!((q.qber - 0.296).abs() < 5e-4);
        assert_eq!(predicted_qber(&AttackConfig::none(), &table).unwrap(), qber_from_counts(&table).unwrap());
        let fixed = AttackConfig::intercept_resend(BasisPolicy::AlwaysP);
        assert!(matches!(predicted_qber(&fixed, &table), Err(Error::UnsupportedAttack(_))));
    }

    #[test]
    fn policies_parse() {
        assert_eq!("uniform_random".parse::<BasisPolicy>().unwrap(), BasisPolicy::UniformRandom);
        assert!("sometimes".parse::<BasisPolicy>().is_err());
    }
}

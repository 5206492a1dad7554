//! Simple game plus a later supporting attack that only rewards validators
//! who complied at slot t.

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::ValidatorId;
use crate::equilibrium::Game;
use crate::error::Result;
use crate::rewards::Component;
use crate::sim::{assign_committees, CommitteeMode, CommitteeRequest};
use crate::strategy::{Controller, PlayerAction, PlayerKey, StrategyProfile};
use crate::Reward;

use super::simple::SimpleGame;
use super::{slot_label, Choice, Condition, GameConfig, GameOutcome, PayoffMatrix};

#[derive(Clone, Debug)]
pub struct StrongSimpleGame {
    pub inner: SimpleGame,
}

impl StrongSimpleGame {
    pub fn new(cfg: GameConfig) -> Result<Self> {
        Ok(Self { inner: SimpleGame::new(cfg)? })
    }

    /// Chance that a given validator attests in the supporting slot.
    pub fn membership_probability(&self) -> Reward {
        Reward::new(1, i64::from(self.inner.cfg.epoch_length))
    }

    /// Slot-t voters whose vote went to B[t-1].
    fn compliers(&self, out: &GameOutcome) -> BTreeSet<ValidatorId> {
        let t = self.inner.t;
        let Some(prev) = out.trace.label(&slot_label(t - 1)) else { return BTreeSet::new() };
        out.trace.final_view.votes().iter().filter(|v| v.slot == t && v.target == prev).map(|v| v.voter).collect()
    }

    /// The supporting attack with every attestor compliant, where the adversary
    /// only includes votes of validators that complied at slot t. Returned
    /// payoffs are before weighting by the membership probability.
    pub fn supporting_run(&self, first: &GameOutcome) -> Result<GameOutcome> {
        let mut adv = self.inner.adversary();
        adv.allowed = Some(self.compliers(first));
        self.inner.run_with(&self.inner.uniform(Choice::C), &mut adv)
    }

    /// Expected payoff: the slot-t run plus the supporting run scaled by the
    /// membership probability, booked one epoch later.
    pub fn run(&self, profile: &StrategyProfile) -> Result<GameOutcome> {
        let mut out = self.inner.run(profile)?;
        let support = self.supporting_run(&out)?;
        let q = self.membership_probability();
        let t = self.inner.t;
        let later = t + i64::from(self.inner.cfg.epoch_length);
        for (v, slot, c, amount) in support.ledger.entries().collect::<Vec<_>>() {
            if slot == t && c == Component::Attestation {
                out.ledger.credit(v, later, c, amount * q);
            }
        }
        Ok(out)
    }

    pub fn expected_matrix(&self) -> Result<PayoffMatrix> {
        let g = &self.inner;
        let v = g.designated()?;
        let player = PlayerKey::attestor(Controller::Solo(v), g.t);
        let mut m = PayoffMatrix::new(
            format!("expected payoff of solo slot {} attestor {v}, strong simple game", g.t),
            vec!["Succeed".into(), "Fail".into()],
            vec!["C".into(), "NC".into()],
        );
        for (i, cond) in [Condition::Succeed, Condition::Fail].into_iter().enumerate() {
            for (j, c) in [Choice::C, Choice::NC].into_iter().enumerate() {
                let out = self.run(&g.conditioned(&player, cond, c))?;
                let realised = out.success == (cond == Condition::Succeed);
                m.set(i, j, realised.then(|| out.payoff(player.controller)));
            }
        }
        Ok(m)
    }
}

/// Sampled estimate of the supporting-slot membership rate: draws fresh
/// schedules and counts how often `subject` lands in the committee of the
/// supporting slot.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct MembershipEstimate {
    pub draws: usize,
    pub hits: usize,
    pub mean: f64,
    pub std_error: f64,
}

pub fn sample_membership(seed: u64, draws: usize, committee_size: usize, epoch_length: usize) -> Result<MembershipEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = committee_size * epoch_length;
    let subject = ValidatorId(0);
    let mut hits = 0;
    for _ in 0..draws {
        let s = assign_committees(&CommitteeRequest {
            seed: rng.random(),
            n_validators: n,
            committee_size,
            epoch_length,
            first_slot: 0,
            adversarial_slots: BTreeSet::new(),
            mode: CommitteeMode::Disjoint,
        })?;
        let slot = rng.random_range(0..epoch_length as i64);
        if s.is_member(slot, subject) {
            hits += 1;
        }
    }
    let mean = hits as f64 / draws as f64;
    let std_error = (mean * (1.0 - mean) / draws as f64).sqrt();
    Ok(MembershipEstimate { draws, hits, mean, std_error })
}

impl Game for StrongSimpleGame {
    fn name(&self) -> String {
        "strong-simple".into()
    }

    fn players(&self) -> Vec<PlayerKey> {
        self.inner.slot_players()
    }

    fn candidates(&self, p: &PlayerKey) -> Vec<PlayerAction> {
        self.inner.candidates(p)
    }

    fn play(&self, profile: &StrategyProfile) -> Result<GameOutcome> {
        self.run(profile)
    }

    fn profile(&self, name: &str) -> Option<StrategyProfile> {
        match name {
            "strong.compliant-all" => Some(self.inner.uniform(Choice::C)),
            "strong.defect-all" => Some(self.inner.uniform(Choice::NC)),
            _ => None,
        }
    }

    fn profile_names(&self) -> Vec<String> {
        ["strong.compliant-all", "strong.defect-all"].map(String::from).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::GameKind;
    use crate::reward;

    #[test]
    fn table_two() {
        let g = StrongSimpleGame::new(GameConfig::new(GameKind::StrongSimple, 4, 2)).unwrap();
        let m = g.expected_matrix().unwrap();
        assert_eq!(m.get("Succeed", "C"), Some(reward(1) + Reward::new(1, 32)));
        assert_eq!(m.get("Fail", "C"), Some(Reward::new(1, 32)));
        assert_eq!(m.get("Succeed", "NC"), Some(reward(0)));
        assert_eq!(m.get("Fail", "NC"), Some(reward(0)));
    }

    #[test]
    fn fixed_set_certainty() {
        let mut cfg = GameConfig::new(GameKind::StrongSimple, 4, 2);
        cfg.epoch_length = 1;
        let m = StrongSimpleGame::new(cfg).unwrap().expected_matrix().unwrap();
        assert_eq!(m.get("Succeed", "C"), Some(reward(2)));
        assert_eq!(m.get("Fail", "C"), Some(reward(1)));
    }

    #[test]
    fn sampled_membership_small() {
        let e = sample_membership(7, 2000, 2, 8).unwrap();
        assert!((e.mean - 0.125).abs() < 4.0 * e.std_error.max(1e-9));
    }
}

//! Selfish-mining style attack: the adversary keeps its fork private, asks
//! the committees before its slots to withhold their votes, and publishes
//! everything just before slot p+1 votes.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::chain::{BlockId, Slot, ValidatorId, VoteRecord};
use crate::equilibrium::Game;
use crate::error::{Error, Result};
use crate::rewards::ProposerReward;
use crate::sim::{self, CommitteeSchedule, EngineConfig, EngineState, RunTrace, Script};
use crate::strategy::{PlayerAction, PlayerKey, StrategyProfile};
use crate::Reward;

use super::{attestor_players, engine_config, slot_label, Choice, Condition, GameConfig, GameOutcome, PayoffMatrix, POOL};
use crate::chain::PoolId;

#[derive(Clone, Debug)]
pub struct SelfishAdversary {
    pub slots: BTreeSet<Slot>,
    pub p: i64,
    pub credible: bool,
}

impl Script for SelfishAdversary {
    fn adversarial_propose(&mut self, st: &mut EngineState, slot: Slot, _leader: ValidatorId) -> Result<()> {
        if slot != self.p + 1 {
            return Ok(());
        }
        let mut prev = st.label(&slot_label(0)).ok_or_else(|| Error::Validation("no block in slot 0".into()))?;
        let now = st.tick();
        for (i, s) in self.slots.iter().copied().enumerate() {
            let mut votes: Vec<VoteRecord> = st.collect_deferred(s - 1, prev)?;
            if !self.credible {
                let extra: Vec<VoteRecord> =
                    st.unincluded_votes(prev, s).into_iter().filter(|v| v.slot == s - 1).collect();
                votes.extend(extra);
            }
            let leader = st.schedule.duty(s).map(|d| d.leader).ok_or_else(|| Error::Validation(format!("no duty at {s}")))?;
            let id = st.propose(leader, s, prev, false, votes, Vec::new(), now)?;
            st.set_label(format!("BA[{}]", i + 1), id);
            prev = id;
        }
        Ok(())
    }

    fn adversarial_vote(&self, _st: &EngineState, slot: Slot, _voter: ValidatorId) -> PlayerAction {
        if self.slots.contains(&(slot + 1)) {
            PlayerAction::deferred_vote()
        } else {
            PlayerAction::honest_vote()
        }
    }
}

/// Subtree weights of the two forks below B[0] at the payoff tick. `support`
/// also counts the on-time votes for B[0] packed into each fork's first block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ForkWeights {
    pub adversarial: u64,
    pub non_adversarial: u64,
    pub adversarial_support: u64,
    pub non_adversarial_support: u64,
}

#[derive(Clone, Debug)]
pub struct SelfishGame {
    pub cfg: GameConfig,
    pub schedule: CommitteeSchedule,
    pub p: i64,
    pub slots: BTreeSet<Slot>,
}

impl SelfishGame {
    pub fn new(cfg: GameConfig) -> Result<Self> {
        cfg.validate()?;
        let slots = cfg.adversarial_slots.clone();
        let p = match slots.last() {
            Some(last) => last - 1,
            None => cfg.horizon,
        };
        if p < 0 || slots.iter().any(|s| *s < 1) {
            return Err(Error::Validation("adversarial slots must lie in 1..=p+1".into()));
        }
        let n_a = slots.len() as i64;
        let n_na = p + 1 - n_a;
        if n_a < n_na && !cfg.allow_minority_fork {
            return Err(Error::ConditionViolated(format!(
                "{n_a} adversarial slots against {n_na} others; set allow_minority_fork to run anyway"
            )));
        }
        let schedule = cfg.schedule(0, (p + 2) as usize, &slots)?;
        Ok(Self { cfg, schedule, p, slots })
    }

    pub fn n_adversarial(&self) -> usize {
        self.slots.len()
    }

    pub fn n_non_adversarial(&self) -> usize {
        (self.p + 1) as usize - self.slots.len()
    }

    /// Slots whose successor is adversarial.
    pub fn s_a(&self) -> BTreeSet<Slot> {
        self.slots.iter().map(|s| s - 1).collect()
    }

    /// The other slots in 0..=p.
    pub fn s_na(&self) -> BTreeSet<Slot> {
        let sa = self.s_a();
        (0..=self.p).filter(|s| !sa.contains(s)).collect()
    }

    pub fn engine(&self) -> EngineConfig {
        engine_config(&self.cfg, -1, self.p + 1, 3 * (self.p + 1), ProposerReward::PerIncludedVote)
    }

    pub fn action(c: Choice) -> PlayerAction {
        match c {
            Choice::C => PlayerAction::deferred_vote(),
            Choice::NC => PlayerAction::honest_vote(),
        }
    }

    pub fn solo_players(&self) -> Vec<PlayerKey> {
        self.players().into_iter().filter(|k| k.controller != POOL).collect()
    }

    pub fn uniform(&self, c: Choice) -> StrategyProfile {
        self.players().into_iter().map(|k| (k, Self::action(c))).collect()
    }

    pub fn run(&self, profile: &StrategyProfile) -> Result<GameOutcome> {
        let mut adv = SelfishAdversary { slots: self.slots.clone(), p: self.p, credible: self.cfg.credibility_assumed };
        let trace = sim::run(&self.engine(), self.schedule.clone(), profile, &mut adv)?;
        let success = self.succeeded(&trace);
        Ok(GameOutcome::from_trace(trace, success))
    }

    fn fork_blocks(&self, trace: &RunTrace) -> Vec<BlockId> {
        (1..=self.slots.len()).filter_map(|i| trace.label(&format!("BA[{i}]"))).collect()
    }

    fn succeeded(&self, trace: &RunTrace) -> bool {
        let fork = self.fork_blocks(trace);
        let Some(b0) = trace.label(&slot_label(0)) else { return false };
        if fork.is_empty() {
            return false;
        }
        let mut expected = trace.final_view.chain_to(b0);
        expected.extend(fork);
        trace.final_chain == expected
    }

    pub fn fork_weights(&self, out: &GameOutcome) -> Result<ForkWeights> {
        let t = &out.trace;
        let view = &t.final_view;
        let b0 = t.label(&slot_label(0)).ok_or_else(|| Error::Validation("no block in slot 0".into()))?;
        let mut weights = view.subtree_weights();
        if let Some(last) = self.fork_blocks(t).last() {
            if view.get(*last)?.slot == t.settle_slot {
                for a in view.chain_to(*last) {
                    *weights.get_mut(&a).expect("weight per block") += self.cfg.boost;
                }
            }
        }
        let adv_first = t.label("BA[1]");
        let honest_first = view
            .children(b0)
            .iter()
            .copied()
            .filter(|c| Some(*c) != adv_first)
            .filter(|c| view.block(*c).is_some_and(|b| !b.is_adversarial()))
            .max_by_key(|c| (weights[c], std::cmp::Reverse(*c)));
        let packed = |first: Option<BlockId>| -> u64 {
            first.and_then(|f| view.block(f)).map_or(0, |b| {
                b.included_votes.iter().filter(|v| v.target == b0 && v.slot + 1 == b.slot).count() as u64
            })
        };
        let adversarial = adv_first.filter(|b| view.contains(*b)).map_or(0, |b| weights[&b]);
        let non_adversarial = honest_first.map_or(0, |b| weights[&b]);
        Ok(ForkWeights {
            adversarial,
            non_adversarial,
            adversarial_support: adversarial + packed(adv_first),
            non_adversarial_support: non_adversarial + packed(honest_first),
        })
    }

    /// Attestation rewards of the pool summed over slots 0..=p.
    pub fn pool_reward(&self, out: &GameOutcome) -> Reward {
        (0..=self.p).map(|s| out.pool_attestation(PoolId(0), s)).sum()
    }

    /// Closed-form pool payoff: Σ m_s r over the slots the outcome rewards.
    pub fn pool_formula(&self, action: Choice, cond: Condition) -> Reward {
        let pool = self.cfg.pool.clone().unwrap_or_default();
        let over = |set: BTreeSet<Slot>| -> Reward {
            set.into_iter().map(|s| self.cfg.r * Reward::from_integer(pool.members_at(s) as i64)).sum()
        };
        match (cond, action) {
            (Condition::Succeed, Choice::C) => over(self.s_a()),
            (Condition::Succeed, Choice::NC) => Reward::from_integer(0),
            (Condition::Fail, _) => over(self.s_na()),
        }
    }
}

/// Pool payoff from a full run where solo players of the withheld slots all
/// comply (`Succeed`) or all vote honestly (`Fail`).
pub fn pool_payoff_selfish(cfg: &GameConfig, action: Choice, others: Condition) -> Result<Reward> {
    let g = SelfishGame::new(cfg.clone())?;
    let solo = match others {
        Condition::Succeed => Choice::C,
        Condition::Fail => Choice::NC,
    };
    let mut prof: StrategyProfile = g.solo_players().into_iter().map(|k| (k, SelfishGame::action(solo))).collect();
    for s in g.s_a() {
        prof.set(PlayerKey::attestor(POOL, s), SelfishGame::action(action));
    }
    let out = g.run(&prof)?;
    if out.success != (others == Condition::Succeed) {
        return Err(Error::ConditionViolated(format!("{others} could not be realised with these slots")));
    }
    Ok(g.pool_reward(&out))
}

pub fn pool_matrix_selfish(cfg: &GameConfig) -> Result<PayoffMatrix> {
    let mut m = PayoffMatrix::new(
        "staking pool, selfish-mining game",
        vec!["Succeed".into(), "Fail".into()],
        vec!["C".into(), "NC".into()],
    );
    for (i, cond) in [Condition::Succeed, Condition::Fail].into_iter().enumerate() {
        for (j, c) in [Choice::C, Choice::NC].into_iter().enumerate() {
            m.set(i, j, pool_payoff_selfish(cfg, c, cond).ok());
        }
    }
    Ok(m)
}

impl Game for SelfishGame {
    fn name(&self) -> String {
        format!("selfish-mining(S={:?})", self.slots)
    }

    fn players(&self) -> Vec<PlayerKey> {
        self.s_a().into_iter().flat_map(|s| attestor_players(&self.schedule, s)).collect()
    }

    fn candidates(&self, _p: &PlayerKey) -> Vec<PlayerAction> {
        vec![Self::action(Choice::C), Self::action(Choice::NC), PlayerAction::Abstain]
    }

    fn play(&self, profile: &StrategyProfile) -> Result<GameOutcome> {
        self.run(profile)
    }

    fn profile(&self, name: &str) -> Option<StrategyProfile> {
        match name {
            "selfish.compliant-all" => Some(self.uniform(Choice::C)),
            "selfish.honest-all" => Some(self.uniform(Choice::NC)),
            _ => None,
        }
    }

    fn profile_names(&self) -> Vec<String> {
        ["selfish.compliant-all", "selfish.honest-all"].map(String::from).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::GameKind;

    fn game(slots: &[Slot]) -> SelfishGame {
        let mut cfg = GameConfig::new(GameKind::SelfishMining, 10, 4).with_adversarial_slots(slots.iter().copied());
        cfg.allow_minority_fork = true;
        SelfishGame::new(cfg).unwrap()
    }

    #[test]
    fn balanced_fork_wins_with_boost() {
        let g = game(&[2, 4]);
        let out = g.run(&g.uniform(Choice::C)).unwrap();
        let w = g.fork_weights(&out).unwrap();
        assert_eq!((w.non_adversarial_support, w.adversarial_support), (20, 24));
        assert!(out.success);
        assert!(out.trace.equivocations().is_empty());
    }

    #[test]
    fn one_defecting_committee_sinks_the_fork() {
        let g = game(&[2, 4]);
        let mut prof = g.uniform(Choice::C);
        for k in attestor_players(&g.schedule, 3) {
            prof.set(k, SelfishGame::action(Choice::NC));
        }
        let out = g.run(&prof).unwrap();
        let w = g.fork_weights(&out).unwrap();
        assert_eq!((w.non_adversarial_support, w.adversarial_support), (30, 14));
        assert!(!out.success);
    }

    #[test]
    fn minority_needs_override() {
        let cfg = GameConfig::new(GameKind::SelfishMining, 10, 4).with_adversarial_slots([3, 5]);
        assert!(matches!(SelfishGame::new(cfg), Err(Error::ConditionViolated(_))));
    }

    #[test]
    fn no_adversarial_slots_is_vacuous_failure() {
        let mut cfg = GameConfig::new(GameKind::SelfishMining, 4, 2).with_horizon(0);
        cfg.allow_minority_fork = true;
        let g = SelfishGame::new(cfg).unwrap();
        assert!(!g.run(&StrategyProfile::new()).unwrap().success);
    }
}

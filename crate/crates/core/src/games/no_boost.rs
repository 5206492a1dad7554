//! Simple attack without proposer boost: the slot t-1 leader withholds its
//! block so that B[t] forks off below it, then asks slot t to vote for the
//! withheld block.

use std::collections::BTreeSet;

use crate::chain::{BlockId, Slot, ValidatorId, VoteRecord};
use crate::equilibrium::Game;
use crate::error::{Error, Result};
use crate::rewards::ProposerReward;
use crate::sim::{self, CommitteeSchedule, EngineConfig, EngineState, Script};
use crate::strategy::{Controller, PlayerAction, PlayerKey, Role, StrategyProfile, Target};

use super::{
    attestor_players, designated, engine_config, slot_label, uniform_profile, Choice, Condition, GameConfig, GameOutcome,
    PayoffMatrix,
};

const WITHHELD: &str = "BA[t-1]";

#[derive(Clone, Debug)]
pub struct NoBoostAdversary {
    pub t: Slot,
    pub credible: bool,
}

impl Script for NoBoostAdversary {
    fn adversarial_propose(&mut self, st: &mut EngineState, slot: Slot, leader: ValidatorId) -> Result<()> {
        if slot == self.t - 1 {
            let parent = st.tip();
            let id = st.propose(leader, slot, parent, false, Vec::new(), Vec::new(), 3 * self.t)?;
            st.set_label(WITHHELD, id);
        } else if slot == self.t + 1 {
            let withheld = st.label(WITHHELD).ok_or_else(|| Error::Validation("withheld block missing".into()))?;
            let bt = st.label(&slot_label(self.t));
            let tip = st.tip();
            let parent = match bt {
                Some(b) if st.view().is_ancestor_or_self(b, tip) => b,
                _ => withheld,
            };
            let votes: Vec<VoteRecord> = st
                .unincluded_votes(parent, slot)
                .into_iter()
                .filter(|v| !self.credible || (v.slot == self.t && v.target == withheld))
                .collect();
            let now = st.tick();
            let id = st.propose(leader, slot, parent, false, votes, Vec::new(), now)?;
            st.set_label("BA", id);
        }
        Ok(())
    }

    fn resolve(&self, st: &EngineState, target: &Target, _slot: Slot, _role: Role) -> Option<BlockId> {
        match target {
            Target::CompliantTip => st.label(WITHHELD).filter(|b| st.view().contains(*b)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct NoBoostGame {
    pub cfg: GameConfig,
    pub schedule: CommitteeSchedule,
    pub t: Slot,
}

impl NoBoostGame {
    pub const T: Slot = 2;

    pub fn new(cfg: GameConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.boost != 0 {
            return Err(Error::ConditionViolated(format!("this attack assumes no proposer boost, got {}", cfg.boost)));
        }
        let t = Self::T;
        let schedule = cfg.schedule(1, 3, &BTreeSet::from([t - 1, t + 1]))?;
        Ok(Self { cfg, schedule, t })
    }

    pub fn engine(&self) -> EngineConfig {
        engine_config(&self.cfg, 0, self.t + 1, 3 * (self.t + 1), ProposerReward::PerIncludedVote)
    }

    pub fn action(c: Choice) -> PlayerAction {
        match c {
            Choice::C => PlayerAction::vote(Target::CompliantTip),
            Choice::NC => PlayerAction::vote(Target::SlotBlock),
        }
    }

    pub fn uniform(&self, c: Choice) -> StrategyProfile {
        uniform_profile(&self.players(), &Self::action(c))
    }

    pub fn run(&self, profile: &StrategyProfile) -> Result<GameOutcome> {
        let mut adv = NoBoostAdversary { t: self.t, credible: self.cfg.credibility_assumed };
        let trace = sim::run(&self.engine(), self.schedule.clone(), profile, &mut adv)?;
        let success = match (trace.label("BA"), trace.label(WITHHELD)) {
            (Some(ba), Some(w)) => trace.on_final_chain(ba) && trace.blocks[&ba].parent == Some(w),
            _ => false,
        };
        Ok(GameOutcome::from_trace(trace, success))
    }

    pub fn payoff_matrix(&self) -> Result<PayoffMatrix> {
        let v = designated(&self.schedule, self.t)?;
        let player = PlayerKey::attestor(Controller::Solo(v), self.t);
        let mut m = PayoffMatrix::new(
            format!("solo slot {} attestor {v}, no-boost simple game", self.t),
            vec!["Succeed".into(), "Fail".into()],
            vec!["C".into(), "NC".into()],
        );
        for (i, cond) in [Condition::Succeed, Condition::Fail].into_iter().enumerate() {
            let others = if cond == Condition::Succeed { Choice::C } else { Choice::NC };
            for (j, c) in [Choice::C, Choice::NC].into_iter().enumerate() {
                let out = self.run(&self.uniform(others).with(player, Self::action(c)))?;
                let realised = out.success == (cond == Condition::Succeed);
                m.set(i, j, realised.then(|| out.payoff(player.controller)));
            }
        }
        Ok(m)
    }
}

impl Game for NoBoostGame {
    fn name(&self) -> String {
        "simple-no-boost".into()
    }

    fn players(&self) -> Vec<PlayerKey> {
        attestor_players(&self.schedule, self.t)
    }

    fn candidates(&self, _p: &PlayerKey) -> Vec<PlayerAction> {
        vec![Self::action(Choice::C), Self::action(Choice::NC), PlayerAction::Abstain]
    }

    fn play(&self, profile: &StrategyProfile) -> Result<GameOutcome> {
        self.run(profile)
    }

    fn profile(&self, name: &str) -> Option<StrategyProfile> {
        match name {
            "no-boost.compliant-all" => Some(self.uniform(Choice::C)),
            "no-boost.defect-all" => Some(self.uniform(Choice::NC)),
            _ => None,
        }
    }

    fn profile_names(&self) -> Vec<String> {
        ["no-boost.compliant-all", "no-boost.defect-all"].map(String::from).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::GameKind;
    use crate::reward;

    fn game(w: u64) -> NoBoostGame {
        NoBoostGame::new(GameConfig::new(GameKind::SimpleNoBoost, w, 0)).unwrap()
    }

    fn split(g: &NoBoostGame, compliant: usize) -> GameOutcome {
        let players = g.players();
        let prof: StrategyProfile = players
            .iter()
            .enumerate()
            .map(|(i, p)| (*p, NoBoostGame::action(if i < compliant { Choice::C } else { Choice::NC })))
            .collect();
        g.run(&prof).unwrap()
    }

    #[test]
    fn majority_for_withheld_block_wins() {
        assert!(split(&game(5), 3).success);
        assert!(!split(&game(5), 2).success);
    }

    #[test]
    fn tie_goes_to_adversary() {
        assert!(split(&game(4), 2).success);
    }

    #[test]
    fn unanimous_defection_fails_without_rewards() {
        let g = game(4);
        let out = split(&g, 0);
        assert!(!out.success);
        for p in g.players() {
            let Controller::Solo(v) = p.controller else { continue };
            assert_eq!(out.ledger.attestation(v, p.slot), reward(0));
        }
    }

    #[test]
    fn boost_rejected() {
        assert!(matches!(
            NoBoostGame::new(GameConfig::new(GameKind::SimpleNoBoost, 4, 1)),
            Err(Error::ConditionViolated(_))
        ));
    }

    #[test]
    fn matrix_matches_simple_pattern() {
        let m = game(4).payoff_matrix().unwrap();
        assert_eq!(m.get("Succeed", "C"), Some(reward(1)));
        assert_eq!(m.get("Succeed", "NC"), Some(reward(0)));
        assert_eq!(m.get("Fail", "C"), Some(reward(0)));
        assert_eq!(m.get("Fail", "NC"), Some(reward(0)));
    }
}

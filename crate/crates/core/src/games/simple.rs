//! One-slot commitment attack: the slot t+1 leader promises to build on
//! B[t-1] and to include only votes for it.

use std::collections::BTreeSet;

use crate::chain::{BlockId, Slot, ValidatorId, VoteRecord};
use crate::equilibrium::Game;
use crate::error::{Error, Result};
use crate::rewards::ProposerReward;
use crate::sim::{self, CommitteeSchedule, EngineConfig, EngineState, Script};
use crate::strategy::{Controller, PlayerAction, PlayerKey, Role, StrategyProfile, Target};

use super::{
    attestor_players, designated, engine_config, slot_label, uniform_profile, Choice, Condition, GameConfig, GameKind,
    GameOutcome, PayoffMatrix,
};

/// The scripted leader of slot t+1.
#[derive(Clone, Debug)]
pub struct SimpleAdversary {
    pub t: Slot,
    pub boost: u64,
    pub credible: bool,
    /// When set, only these voters' compliant votes are included.
    pub allowed: Option<BTreeSet<ValidatorId>>,
}

impl SimpleAdversary {
    /// Votes for B[t] needed before the adversary gives up and extends it.
    /// A zero boost still needs one vote, so an untouched B[t] can be reorged.
    pub fn threshold(&self) -> usize {
        self.boost.max(1) as usize
    }
}

impl Script for SimpleAdversary {
    fn adversarial_propose(&mut self, st: &mut EngineState, slot: Slot, leader: ValidatorId) -> Result<()> {
        if slot != self.t + 1 {
            return Ok(());
        }
        let prev = st
            .label(&slot_label(self.t - 1))
            .ok_or_else(|| Error::Validation(format!("no block in slot {}", self.t - 1)))?;
        let bt = st.label(&slot_label(self.t)).filter(|b| st.view().contains(*b));
        let for_bt = bt.map_or(0, |b| st.view().votes().iter().filter(|v| v.slot == self.t && v.target == b).count());
        let parent = match bt {
            Some(b) if for_bt >= self.threshold() => b,
            _ => prev,
        };
        let votes: Vec<VoteRecord> = st
            .unincluded_votes(parent, slot)
            .into_iter()
            .filter(|v| {
                !self.credible
                    || (v.slot == self.t
                        && v.target == prev
                        && self.allowed.as_ref().is_none_or(|a| a.contains(&v.voter)))
            })
            .collect();
        let now = st.tick();
        let id = st.propose(leader, slot, parent, false, votes, Vec::new(), now)?;
        st.set_label("BA", id);
        Ok(())
    }

    fn resolve(&self, st: &EngineState, target: &Target, slot: Slot, _role: Role) -> Option<BlockId> {
        match target {
            Target::CompliantTip => st.label(&slot_label(slot - 1)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SimpleGame {
    pub cfg: GameConfig,
    pub schedule: CommitteeSchedule,
    pub t: Slot,
}

impl SimpleGame {
    pub const T: Slot = 2;

    pub fn new(cfg: GameConfig) -> Result<Self> {
        cfg.validate()?;
        let schedule = cfg.schedule(1, 3, &BTreeSet::from([Self::T + 1]))?;
        Ok(Self { cfg, schedule, t: Self::T })
    }

    pub fn engine(&self) -> EngineConfig {
        engine_config(&self.cfg, 0, self.t + 1, 3 * (self.t + 1), ProposerReward::PerIncludedVote)
    }

    pub fn adversary(&self) -> SimpleAdversary {
        SimpleAdversary { t: self.t, boost: self.cfg.boost, credible: self.cfg.credibility_assumed, allowed: None }
    }

    /// Vote for B[t-1].
    pub fn compliant() -> PlayerAction {
        PlayerAction::vote(Target::CompliantTip)
    }

    /// Vote for B[t].
    pub fn defect() -> PlayerAction {
        PlayerAction::vote(Target::SlotBlock)
    }

    pub fn action(c: Choice) -> PlayerAction {
        match c {
            Choice::C => Self::compliant(),
            Choice::NC => Self::defect(),
        }
    }

    pub fn slot_players(&self) -> Vec<PlayerKey> {
        attestor_players(&self.schedule, self.t)
    }

    pub fn uniform(&self, c: Choice) -> StrategyProfile {
        uniform_profile(&self.slot_players(), &Self::action(c))
    }

    pub fn designated(&self) -> Result<ValidatorId> {
        designated(&self.schedule, self.t)
    }

    pub fn run_with(&self, profile: &StrategyProfile, adversary: &mut SimpleAdversary) -> Result<GameOutcome> {
        let trace = sim::run(&self.engine(), self.schedule.clone(), profile, adversary)?;
        let success = match (trace.label("BA"), trace.label(&slot_label(self.t - 1))) {
            (Some(ba), Some(prev)) => trace.on_final_chain(ba) && trace.blocks[&ba].parent == Some(prev),
            _ => false,
        };
        Ok(GameOutcome::from_trace(trace, success))
    }

    pub fn run(&self, profile: &StrategyProfile) -> Result<GameOutcome> {
        self.run_with(profile, &mut self.adversary())
    }

    /// Slot t votes for B[t] in the final view.
    pub fn votes_for_slot_block(&self, out: &GameOutcome) -> usize {
        let Some(bt) = out.trace.label(&slot_label(self.t)) else { return 0 };
        out.trace.final_view.votes().iter().filter(|v| v.slot == self.t && v.target == bt).count()
    }

    /// Profile realising `cond` for everyone except `player`, who plays `c`.
    pub fn conditioned(&self, player: &PlayerKey, cond: Condition, c: Choice) -> StrategyProfile {
        let others = match cond {
            Condition::Succeed => Choice::C,
            Condition::Fail => Choice::NC,
        };
        self.uniform(others).with(*player, Self::action(c))
    }

    /// Payoffs of one solo slot-t attestor, each cell read off a full run.
    /// A cell stays empty when its run does not realise the row.
    pub fn payoff_matrix(&self) -> Result<PayoffMatrix> {
        let v = self.designated()?;
        let player = PlayerKey::attestor(Controller::Solo(v), self.t);
        let mut m = PayoffMatrix::new(
            format!("solo slot {} attestor {v}, simple game", self.t),
            vec!["Succeed".into(), "Fail".into()],
            vec!["C".into(), "NC".into()],
        );
        for (i, cond) in [Condition::Succeed, Condition::Fail].into_iter().enumerate() {
            for (j, c) in [Choice::C, Choice::NC].into_iter().enumerate() {
                let out = self.run(&self.conditioned(&player, cond, c))?;
                let realised = out.success == (cond == Condition::Succeed);
                m.set(i, j, realised.then(|| out.payoff(player.controller)));
            }
        }
        Ok(m)
    }
}

impl Game for SimpleGame {
    fn name(&self) -> String {
        match self.cfg.kind {
            GameKind::Simple => "simple".into(),
            k => format!("{k:?}"),
        }
    }

    fn players(&self) -> Vec<PlayerKey> {
        self.slot_players()
    }

    fn candidates(&self, _player: &PlayerKey) -> Vec<PlayerAction> {
        vec![Self::compliant(), Self::defect(), PlayerAction::Abstain]
    }

    fn play(&self, profile: &StrategyProfile) -> Result<GameOutcome> {
        self.run(profile)
    }

    fn profile(&self, name: &str) -> Option<StrategyProfile> {
        match name {
            "simple.compliant-all" => Some(self.uniform(Choice::C)),
            "simple.defect-all" => Some(self.uniform(Choice::NC)),
            "simple.honest" => Some(StrategyProfile::new()),
            _ => None,
        }
    }

    fn profile_names(&self) -> Vec<String> {
        ["simple.compliant-all", "simple.defect-all", "simple.honest"].map(String::from).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward;

    fn game(w: u64, wp: u64) -> SimpleGame {
        SimpleGame::new(GameConfig::new(GameKind::Simple, w, wp)).unwrap()
    }

    #[test]
    fn compliant_run_reorgs_slot_block() {
        let g = game(5, 2);
        let out = g.run(&g.uniform(Choice::C)).unwrap();
        assert!(out.success);
        let bt = out.trace.label("B[2]").unwrap();
        assert!(out.reorged.contains(&bt));
        let ba = out.trace.label("BA").unwrap();
        assert_eq!(out.final_chain.last(), Some(&ba));
        for p in g.slot_players() {
            assert_eq!(out.payoff(p.controller) - reward(0), reward(1));
        }
    }

    #[test]
    fn boost_many_votes_flip_parent() {
        let g = game(5, 2);
        let players = g.slot_players();
        let mut prof = g.uniform(Choice::C);
        for p in players.iter().take(2) {
            prof.set(*p, SimpleGame::defect());
        }
        let out = g.run(&prof).unwrap();
        assert!(!out.success);
        let ba = out.trace.label("BA").unwrap();
        assert_eq!(out.trace.blocks[&ba].parent, out.trace.label("B[2]"));
        for p in &players[2..] {
            assert_eq!(out.ledger.attestation(match p.controller {
                Controller::Solo(v) => v,
                _ => unreachable!(),
            }, 2), reward(0));
        }
    }

    #[test]
    fn table_one() {
        let m = game(4, 2).payoff_matrix().unwrap();
        assert_eq!(m.get("Succeed", "C"), Some(reward(1)));
        assert_eq!(m.get("Succeed", "NC"), Some(reward(0)));
        assert_eq!(m.get("Fail", "C"), Some(reward(0)));
        assert_eq!(m.get("Fail", "NC"), Some(reward(0)));
    }

    #[test]
    fn zero_boost_needs_no_votes_for_slot_block() {
        let g = game(4, 0);
        assert!(g.run(&g.uniform(Choice::C)).unwrap().success);
        let mut prof = g.uniform(Choice::C);
        prof.set(g.slot_players()[0], SimpleGame::defect());
        assert!(!g.run(&prof).unwrap().success);
    }
}

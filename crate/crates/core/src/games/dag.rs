//! Security under DAG votes: one adversarial leader tries the simple attack
//! against a committee that is paid through evidences instead of next-slot
//! inclusion.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::chain::{BlockId, Slot, ValidatorId, ValidatorKind};
use crate::equilibrium::{verify_nash, verify_spne, Coalitions, EquilibriumReport, Game, SearchOptions, Verdict};
use crate::error::{Error, Result};
use crate::rewards::{Component, Mechanism, ProposerReward};
use crate::Reward;
use crate::sim::{self, CommitteeSchedule, EngineConfig, EngineState, Script};
use crate::strategy::{Controller, Inclusion, PlayerAction, PlayerKey, Role, StrategyProfile, Target};

use super::{attestor_players, engine_config, slot_label, solo_attestors, GameConfig, GameOutcome};

#[derive(Clone, Debug)]
pub struct OffTipAdversary {
    pub t: Slot,
    pub on_tip: bool,
}

impl Script for OffTipAdversary {
    fn adversarial_propose(&mut self, st: &mut EngineState, slot: Slot, leader: ValidatorId) -> Result<()> {
        if slot != self.t + 1 {
            return Ok(());
        }
        let now = st.tick();
        let (parent, votes) = if self.on_tip {
            let tip = st.tip();
            (tip, st.unincluded_votes(tip, slot))
        } else {
            let prev = st
                .label(&slot_label(self.t - 1))
                .ok_or_else(|| Error::Validation(format!("no block in slot {}", self.t - 1)))?;
            let votes = st.unincluded_votes(prev, slot).into_iter().filter(|v| v.slot == self.t && v.target == prev).collect();
            (prev, votes)
        };
        let evidences = if st.cfg.rewards.mechanism == Mechanism::DagVotes { st.unincluded_evidences(parent) } else { Vec::new() };
        let id = st.propose(leader, slot, parent, false, votes, evidences, now)?;
        st.set_label("BA", id);
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DagGame {
    pub cfg: GameConfig,
    pub schedule: CommitteeSchedule,
    pub t: Slot,
    pub last_slot: Slot,
}

/// Everything the scenario checks.
#[derive(Clone, Debug, Serialize)]
pub struct DagReport {
    pub mechanism: Mechanism,
    pub verdict: Verdict,
    pub spne: EquilibriumReport,
    pub coalition: EquilibriumReport,
    pub adversary_block_votes: usize,
    pub adversary_block_reorged: bool,
    pub rational_blocks_reorged: Vec<BlockId>,
}

impl DagGame {
    pub const T: Slot = 2;

    pub fn new(cfg: GameConfig) -> Result<Self> {
        cfg.validate()?;
        let t = Self::T;
        let last_slot = t + 4;
        let schedule = cfg.schedule(1, last_slot as usize, &BTreeSet::from([t + 1]))?;
        Ok(Self { cfg, schedule, t, last_slot })
    }

    /// Checks the counting assumptions: enough solo rational attestors per
    /// slot, and no boost unless the committee can outvote it.
    pub fn check_assumptions(&self) -> Result<()> {
        if self.cfg.mechanism != Mechanism::DagVotes {
            return Ok(());
        }
        let w = self.cfg.committee_size;
        let wp = self.cfg.boost;
        for s in 1..=self.last_slot {
            let solo = solo_attestors(&self.schedule, s).len() as u64;
            if 2 * solo <= 2 + w {
                return Err(Error::AssumptionViolated(format!("slot {s} has {solo} solo attestors, need more than 1+{w}/2")));
            }
            if wp > 0 && 2 * solo < 2 + w + wp {
                return Err(Error::AssumptionViolated(format!(
                    "slot {s} has {solo} solo attestors, need at least 1+({w}+{wp})/2 with boost"
                )));
            }
        }
        Ok(())
    }

    pub fn engine(&self) -> EngineConfig {
        engine_config(&self.cfg, 0, self.last_slot, 3 * self.last_slot, ProposerReward::PerIncludedVote)
    }

    pub fn off_tip_proposal() -> PlayerAction {
        PlayerAction::Propose { parent: Target::ParentOfTip, empty: false, include: Inclusion::All }
    }

    pub fn prescribed(&self) -> StrategyProfile {
        self.players()
            .into_iter()
            .map(|k| {
                let a = match k.role {
                    Role::Leader => PlayerAction::honest_proposal(),
                    Role::Attestor => PlayerAction::honest_vote(),
                };
                (k, a)
            })
            .collect()
    }

    pub fn run(&self, profile: &StrategyProfile) -> Result<GameOutcome> {
        let mut adv = OffTipAdversary { t: self.t, on_tip: self.cfg.adversary_on_tip };
        let trace = sim::run(&self.engine(), self.schedule.clone(), profile, &mut adv)?;
        let success = trace.label(&slot_label(self.t)).is_some_and(|b| !trace.on_final_chain(b));
        Ok(GameOutcome::from_trace(trace, success))
    }

    /// Runs the prescribed profile, the SPNE check and a joint-deviation
    /// check over the committee the adversary targets.
    pub fn security_report(&self, opts: &SearchOptions) -> Result<DagReport> {
        self.check_assumptions()?;
        let profile = self.prescribed();
        let spne = verify_spne(self, &profile, opts)?;
        let members = attestor_players(&self.schedule, self.t);
        let mut co_opts = opts.clone();
        co_opts.coalitions = Some(Coalitions { max_size: members.len(), members });
        let coalition = verify_nash(self, &profile, &co_opts)?;
        let out = self.run(&profile)?;
        let t = &out.trace;
        let ba = t.label("BA");
        let adversary_block_votes = ba.map_or(0, |b| t.final_view.votes().iter().filter(|v| v.target == b).count());
        let adversary_block_reorged = ba.is_some_and(|b| !t.on_final_chain(b));
        let reorged: BTreeSet<BlockId> = out.reorged.iter().copied().collect();
        let rational_blocks_reorged = t
            .blocks
            .values()
            .filter(|b| reorged.contains(&b.id))
            .filter(|b| b.proposer.is_some_and(|v| v.kind != ValidatorKind::Adversarial))
            .map(|b| b.id)
            .collect();
        let verdict = if spne.is_equilibrium() && coalition.is_equilibrium() { Verdict::Spne } else { Verdict::NotEquilibrium };
        Ok(DagReport {
            mechanism: self.cfg.mechanism,
            verdict,
            spne,
            coalition,
            adversary_block_votes,
            adversary_block_reorged,
            rational_blocks_reorged,
        })
    }
}

impl Game for DagGame {
    fn name(&self) -> String {
        format!("dag-security({:?})", self.cfg.mechanism)
    }

    fn players(&self) -> Vec<PlayerKey> {
        let mut out = Vec::new();
        for s in 1..=self.last_slot {
            if let Some(d) = self.schedule.duty(s) {
                let v = self.schedule.validator(d.leader).expect("leader scheduled");
                if v.kind == ValidatorKind::Rational && v.pool.is_none() {
                    out.push(PlayerKey::leader(Controller::Solo(d.leader), s));
                }
            }
            if s < self.last_slot {
                out.extend(attestor_players(&self.schedule, s));
            }
        }
        out
    }

    fn candidates(&self, key: &PlayerKey) -> Vec<PlayerAction> {
        match key.role {
            Role::Leader => vec![PlayerAction::honest_proposal(), Self::off_tip_proposal()],
            Role::Attestor => {
                vec![PlayerAction::honest_vote(), PlayerAction::vote(Target::ParentOfTip), PlayerAction::Abstain]
            }
        }
    }

    fn play(&self, profile: &StrategyProfile) -> Result<GameOutcome> {
        self.run(profile)
    }

    /// Per-decision agents, as in the extended game. Without this the slot t
    /// leader, who also attests in slot t, would veto every committee
    /// deviation that reorgs its own block.
    fn payoff(&self, outcome: &GameOutcome, key: &PlayerKey) -> Reward {
        match (key.controller, key.role) {
            (Controller::Solo(v), Role::Leader) => {
                outcome.ledger.get(v, key.slot, Component::Inclusion) + outcome.ledger.get(v, key.slot, Component::Block)
            }
            (Controller::Solo(v), Role::Attestor) => outcome.ledger.attestation(v, key.slot),
            (Controller::Pool(p), Role::Attestor) => outcome.pool_attestation(p, key.slot),
            (c, Role::Leader) => outcome.payoff(c),
        }
    }

    fn profile(&self, name: &str) -> Option<StrategyProfile> {
        match name {
            "dag.prescribed" => Some(self.prescribed()),
            _ => None,
        }
    }

    fn profile_names(&self) -> Vec<String> {
        vec!["dag.prescribed".into()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::GameKind;

    fn cfg(mechanism: Mechanism) -> GameConfig {
        let mut c = GameConfig::new(GameKind::DagSecurity, 5, 0);
        c.mechanism = mechanism;
        c
    }

    #[test]
    fn off_tip_block_starves() {
        let g = DagGame::new(cfg(Mechanism::DagVotes)).unwrap();
        let out = g.run(&g.prescribed()).unwrap();
        let ba = out.trace.label("BA").unwrap();
        assert!(!out.trace.on_final_chain(ba));
        assert!(!out.success);
        assert!(out.trace.final_view.votes().iter().all(|v| v.target != ba));
    }

    #[test]
    fn slot_t_votes_paid_by_evidence() {
        let g = DagGame::new(cfg(Mechanism::DagVotes)).unwrap();
        let out = g.run(&g.prescribed()).unwrap();
        for k in attestor_players(&g.schedule, g.t) {
            let Controller::Solo(v) = k.controller else { unreachable!() };
            assert_eq!(out.ledger.attestation(v, g.t), crate::reward(1));
        }
    }

    #[test]
    fn ethereum_rule_admits_the_simple_attack() {
        let g = DagGame::new(cfg(Mechanism::Ethereum)).unwrap();
        let rep = g.security_report(&SearchOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::NotEquilibrium);
        assert!(rep.coalition.deviations.iter().any(|d| d.players.len() == attestor_players(&g.schedule, g.t).len()));
    }

    #[test]
    fn on_tip_adversary_is_harmless() {
        let mut c = cfg(Mechanism::DagVotes);
        c.adversary_on_tip = true;
        let g = DagGame::new(c).unwrap();
        let rep = g.security_report(&SearchOptions::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Spne);
        assert!(!rep.adversary_block_reorged);
    }

    #[test]
    fn too_few_rational_attestors() {
        let mut c = cfg(Mechanism::DagVotes);
        c.honest_per_slot = 2;
        let g = DagGame::new(c).unwrap();
        assert!(matches!(g.check_assumptions(), Err(Error::AssumptionViolated(_))));
    }
}

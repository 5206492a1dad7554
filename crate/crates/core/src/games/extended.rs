//! Multi-slot attack: slots 1..=p build empty blocks on B[-p] and the
//! adversary at p+1 reorgs B[-p+1]..B[0].

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use crate::chain::{BlockId, BlockTree, Slot, TieBreakPolicy, ValidatorId, ValidatorKind, VoteRecord};
use crate::equilibrium::Game;
use crate::Reward;
use crate::error::{Error, Result};
use crate::rewards::{Component, ProposerReward};
use crate::sim::{self, CommitteeSchedule, EngineConfig, EngineState, Script};
use crate::strategy::{Controller, PlayerAction, PlayerKey, Role, StrategyProfile, Target};

use super::{attestor_players, designated, engine_config, slot_label, Choice, GameConfig, GameOutcome, PayoffMatrix};

/// Hypothetical weight a slot-`slot_i` decision adds to each candidate.
pub fn hypothetical_weight(slot_i: Slot, p: i64, w: u64, wp: u64) -> u64 {
    (p - slot_i + 1).max(0) as u64 * w + wp
}

/// Largest slot of a non-compliant block strictly below `root` on the path to `b`.
pub fn noncompliance_index(tree: &BlockTree, root: BlockId, b: BlockId, marks: &BTreeMap<BlockId, bool>) -> Option<Slot> {
    let path = tree.chain_to(b);
    let start = path.iter().position(|x| *x == root)?;
    path[start + 1..]
        .iter()
        .filter(|id| marks.get(id) != Some(&true))
        .filter_map(|id| tree.block(*id).map(|blk| blk.slot))
        .max()
}

/// Last non-compliant slot, reversed slot, id: smaller is better.
type TipKey = (Option<Slot>, Reverse<Slot>, BlockId);

/// Scan every block under `root`, temporarily lifting its subtree weight by
/// the hypothetical amount, and keep the block whose chain carries the
/// oldest last non-compliant block. Ties go to the higher slot, then the
/// lower id. `weights` is restored before returning.
#[allow(clippy::too_many_arguments)]
pub fn compliant_tip_with_weights(
    tree: &BlockTree,
    weights: &mut BTreeMap<BlockId, u64>,
    root: BlockId,
    slot_i: Slot,
    p: i64,
    w: u64,
    wp: u64,
    marks: &BTreeMap<BlockId, bool>,
    tie_break: TieBreakPolicy,
) -> Result<BlockId> {
    if !tree.contains(root) {
        return Err(crate::ChainError::UnknownBlock(root).into());
    }
    let h = hypothetical_weight(slot_i, p, w, wp);
    let mut best: Option<(TipKey, BlockId)> = None;
    for b in tree.subtree(root) {
        let path = tree.chain_to(b);
        for a in &path {
            *weights.get_mut(a).expect("weight per block") += h;
        }
        let chain = tree.descend(weights, tie_break);
        for a in &path {
            *weights.get_mut(a).expect("weight per block") -= h;
        }
        if !chain.contains(&b) {
            continue;
        }
        let slot = tree.get(b)?.slot;
        let key = (noncompliance_index(tree, root, b, marks), Reverse(slot), b);
        if best.as_ref().is_none_or(|(k, _)| key < *k) {
            best = Some((key, b));
        }
    }
    best.map(|(_, b)| b).ok_or(Error::EmptyCandidateSet)
}

#[allow(clippy::too_many_arguments)]
pub fn compliant_tip(
    tree: &BlockTree,
    root: BlockId,
    slot_i: Slot,
    p: i64,
    w: u64,
    wp: u64,
    marks: &BTreeMap<BlockId, bool>,
    tie_break: TieBreakPolicy,
) -> Result<BlockId> {
    let mut weights = tree.subtree_weights();
    compliant_tip_with_weights(tree, &mut weights, root, slot_i, p, w, wp, marks, tie_break)
}

/// p' = ceil(pW / (W - 2 W_h)): game length needed against W_h honest attestors per slot.
pub fn required_attack_length(p: u64, w: u64, w_h: u64) -> Result<u64> {
    if 2 * w_h >= w {
        return Err(Error::HonestMajority { honest: w_h, committee: w });
    }
    Ok((p * w).div_ceil(w - 2 * w_h))
}

/// Compliance bookkeeping and the slot p+1 adversary.
#[derive(Clone, Debug, Default)]
pub struct ExtendedScript {
    pub p: i64,
    pub w: u64,
    pub wp: u64,
    pub credible: bool,
    pub tie_break: TieBreakPolicy,
    pub root: Option<BlockId>,
    pub marks: BTreeMap<BlockId, bool>,
    pub proposal_tips: BTreeMap<Slot, BlockId>,
    pub vote_tips: BTreeMap<Slot, BlockId>,
}

impl ExtendedScript {
    fn tip_at(&self, st: &EngineState, slot_i: Slot) -> Result<BlockId> {
        let root = self.root.ok_or_else(|| Error::Validation("root block missing".into()))?;
        compliant_tip(st.view(), root, slot_i, self.p, self.w, self.wp, &self.marks, self.tie_break)
    }

    fn vote_is_compliant(&self, v: &VoteRecord) -> bool {
        if v.slot <= 0 {
            return Some(v.target) == self.root;
        }
        self.vote_tips.get(&v.slot) == Some(&v.target)
    }

    fn classify(&mut self, st: &EngineState, slot: Slot) {
        let tip = self.proposal_tips.get(&slot).copied();
        let fresh: Vec<(BlockId, bool)> = st
            .view()
            .blocks()
            .filter(|b| b.slot == slot && !self.marks.contains_key(&b.id))
            .map(|b| {
                let ok = b.is_empty
                    && b.parent.is_some()
                    && b.parent == tip
                    && b.included_votes
                        .iter()
                        .all(|v| v.slot == slot - 1 && Some(v.target) == b.parent && self.vote_is_compliant(v));
                (b.id, ok)
            })
            .collect();
        self.marks.extend(fresh);
    }
}

impl Script for ExtendedScript {
    fn on_tick(&mut self, st: &mut EngineState, tick: i64) -> Result<()> {
        if self.root.is_none() {
            self.root = st.label(&slot_label(-self.p)).filter(|b| st.view().contains(*b));
            if let Some(r) = self.root {
                self.marks.insert(r, true);
            }
        }
        let slot = tick.div_euclid(3);
        if slot < 1 || slot > self.p + 1 {
            return Ok(());
        }
        match tick.rem_euclid(3) {
            0 => {
                let t = self.tip_at(st, slot)?;
                self.proposal_tips.insert(slot, t);
            }
            1 if slot <= self.p => {
                self.classify(st, slot);
                let t = self.tip_at(st, slot)?;
                self.vote_tips.insert(slot, t);
            }
            _ => {}
        }
        Ok(())
    }

    fn adversarial_propose(&mut self, st: &mut EngineState, slot: Slot, leader: ValidatorId) -> Result<()> {
        if slot != self.p + 1 {
            return Ok(());
        }
        let parent = *self.proposal_tips.get(&slot).ok_or_else(|| Error::Validation("no compliant tip".into()))?;
        let votes: Vec<VoteRecord> = st
            .unincluded_votes(parent, slot)
            .into_iter()
            .filter(|v| !self.credible || (v.slot == self.p && self.vote_is_compliant(v)))
            .collect();
        let now = st.tick();
        let id = st.propose(leader, slot, parent, false, votes, Vec::new(), now)?;
        st.set_label("BA", id);
        Ok(())
    }

    fn resolve(&self, _st: &EngineState, target: &Target, slot: Slot, role: Role) -> Option<BlockId> {
        match (target, role) {
            (Target::CompliantTip, Role::Leader) => self.proposal_tips.get(&slot).copied(),
            (Target::CompliantTip, Role::Attestor) => self.vote_tips.get(&slot).copied(),
            _ => None,
        }
    }

    fn compliant_vote(&self, _st: &EngineState, vote: &VoteRecord) -> bool {
        self.vote_is_compliant(vote)
    }
}

#[derive(Clone, Debug)]
pub struct ExtendedOutcome {
    pub outcome: GameOutcome,
    pub marks: BTreeMap<BlockId, bool>,
    pub proposal_tips: BTreeMap<Slot, BlockId>,
    pub vote_tips: BTreeMap<Slot, BlockId>,
}

#[derive(Clone, Debug)]
pub struct ExtendedGame {
    pub cfg: GameConfig,
    pub schedule: CommitteeSchedule,
    pub p: i64,
}

impl ExtendedGame {
    pub fn new(cfg: GameConfig) -> Result<Self> {
        cfg.validate()?;
        let p = cfg.horizon;
        if p < 1 {
            return Err(Error::Validation(format!("horizon must be at least 1, got {p}")));
        }
        let schedule = cfg.schedule(-p, (2 * p + 2) as usize, &BTreeSet::from([p + 1]))?;
        Ok(Self { cfg, schedule, p })
    }

    pub fn engine(&self) -> EngineConfig {
        engine_config(&self.cfg, -self.p - 1, self.p + 1, 3 * (self.p + 1), ProposerReward::PerCanonicalBlock)
    }

    pub fn leader_action(c: Choice) -> PlayerAction {
        match c {
            Choice::C => PlayerAction::compliant_proposal(),
            Choice::NC => PlayerAction::honest_proposal(),
        }
    }

    pub fn attestor_action(c: Choice) -> PlayerAction {
        match c {
            Choice::C => PlayerAction::vote(Target::CompliantTip),
            Choice::NC => PlayerAction::honest_vote(),
        }
    }

    pub fn action(key: &PlayerKey, c: Choice) -> PlayerAction {
        match key.role {
            Role::Leader => Self::leader_action(c),
            Role::Attestor => Self::attestor_action(c),
        }
    }

    pub fn leader_player(&self, slot: Slot) -> Option<PlayerKey> {
        let leader = self.schedule.duty(slot)?.leader;
        let v = self.schedule.validator(leader)?;
        (v.kind == ValidatorKind::Rational && v.pool.is_none()).then(|| PlayerKey::leader(Controller::Solo(leader), slot))
    }

    pub fn uniform(&self, c: Choice) -> StrategyProfile {
        self.players().into_iter().map(|k| (k, Self::action(&k, c))).collect()
    }

    pub fn script(&self) -> ExtendedScript {
        ExtendedScript {
            p: self.p,
            w: self.cfg.committee_size,
            wp: self.cfg.boost,
            credible: self.cfg.credibility_assumed,
            tie_break: self.cfg.tie_break,
            ..Default::default()
        }
    }

    pub fn run_detailed(&self, profile: &StrategyProfile) -> Result<ExtendedOutcome> {
        let mut script = self.script();
        let trace = sim::run(&self.engine(), self.schedule.clone(), profile, &mut script)?;
        let success = self.succeeded(&trace.final_chain, &trace.blocks, &script);
        Ok(ExtendedOutcome {
            outcome: GameOutcome::from_trace(trace, success),
            marks: script.marks,
            proposal_tips: script.proposal_tips,
            vote_tips: script.vote_tips,
        })
    }

    fn succeeded(
        &self,
        chain: &[BlockId],
        blocks: &BTreeMap<BlockId, crate::chain::Block>,
        script: &ExtendedScript,
    ) -> bool {
        let Some(root) = script.root else { return false };
        let Some(pos) = chain.iter().position(|b| *b == root) else { return false };
        let rest = &chain[pos + 1..];
        if rest.len() as i64 != self.p + 1 {
            return false;
        }
        let body_ok = rest[..rest.len() - 1]
            .iter()
            .enumerate()
            .all(|(i, b)| blocks[b].slot == i as i64 + 1 && script.marks.get(b) == Some(&true));
        let last = rest[rest.len() - 1];
        body_ok && blocks[&last].slot == self.p + 1 && blocks[&last].proposer.is_some_and(|v| v.is_adversarial())
    }

    /// Payoff table of a solo slot-`slot` attestor: rows by what everyone else
    /// does (A = comply, NA = defect), columns by its own choice.
    pub fn attestor_matrix(&self, slot: Slot) -> Result<PayoffMatrix> {
        let v = designated(&self.schedule, slot)?;
        self.matrix_for(PlayerKey::attestor(Controller::Solo(v), slot), format!("solo slot {slot} attestor {v}"))
    }

    pub fn leader_matrix(&self, slot: Slot) -> Result<PayoffMatrix> {
        let key = self.leader_player(slot).ok_or_else(|| Error::Validation(format!("slot {slot} leader is not a solo player")))?;
        self.matrix_for(key, format!("slot {slot} leader"))
    }

    fn matrix_for(&self, key: PlayerKey, title: String) -> Result<PayoffMatrix> {
        let mut m = PayoffMatrix::new(
            format!("{title}, extended game p={}", self.p),
            vec!["A".into(), "NA".into()],
            vec!["C".into(), "NC".into()],
        );
        for (i, others) in [Choice::C, Choice::NC].into_iter().enumerate() {
            for (j, own) in [Choice::C, Choice::NC].into_iter().enumerate() {
                let prof = self.uniform(others).with(key, Self::action(&key, own));
                let out = self.run_detailed(&prof)?.outcome;
                m.set(i, j, Some(Game::payoff(self, &out, &key)));
            }
        }
        Ok(m)
    }
}

impl Game for ExtendedGame {
    fn name(&self) -> String {
        format!("extended(p={})", self.p)
    }

    fn players(&self) -> Vec<PlayerKey> {
        let mut out = Vec::new();
        for s in 1..=self.p {
            out.extend(self.leader_player(s));
            out.extend(attestor_players(&self.schedule, s));
        }
        out
    }

    fn candidates(&self, key: &PlayerKey) -> Vec<PlayerAction> {
        match key.role {
            Role::Leader => vec![Self::leader_action(Choice::C), Self::leader_action(Choice::NC)],
            Role::Attestor => vec![Self::attestor_action(Choice::C), Self::attestor_action(Choice::NC), PlayerAction::Abstain],
        }
    }

    fn play(&self, profile: &StrategyProfile) -> Result<GameOutcome> {
        Ok(self.run_detailed(profile)?.outcome)
    }

    /// Each decision is its own agent: leaders earn their block reward,
    /// attestors the reward for their vote.
    fn payoff(&self, outcome: &GameOutcome, key: &PlayerKey) -> Reward {
        match (key.controller, key.role) {
            (Controller::Solo(v), Role::Leader) => outcome.ledger.get(v, key.slot, Component::Block),
            (Controller::Solo(v), Role::Attestor) => outcome.ledger.attestation(v, key.slot),
            (Controller::Pool(p), Role::Attestor) => outcome.pool_attestation(p, key.slot),
            (c, Role::Leader) => outcome.payoff(c),
        }
    }

    fn profile(&self, name: &str) -> Option<StrategyProfile> {
        match name {
            "extended.compliant-all" => Some(self.uniform(Choice::C)),
            "extended.honest-all" => Some(self.uniform(Choice::NC)),
            _ => {
                let s: Slot = name.strip_prefix("extended.defect-leader-")?.parse().ok()?;
                let key = self.leader_player(s)?;
                Some(self.uniform(Choice::C).with(key, Self::leader_action(Choice::NC)))
            }
        }
    }

    fn profile_names(&self) -> Vec<String> {
        let mut v: Vec<String> = vec!["extended.compliant-all".into(), "extended.honest-all".into()];
        v.extend((1..=self.p).map(|s| format!("extended.defect-leader-{s}")));
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Block, Validator};
    use crate::games::GameKind;
    use crate::reward;

    fn game(p: i64) -> ExtendedGame {
        ExtendedGame::new(GameConfig::new(GameKind::Extended, 4, 2).with_horizon(p)).unwrap()
    }

    #[test]
    fn attack_length() {
        assert_eq!(required_attack_length(4, 100, 25).unwrap(), 8);
        assert_eq!(required_attack_length(3, 10, 0).unwrap(), 3);
        assert!(matches!(required_attack_length(1, 10, 5), Err(Error::HonestMajority { .. })));
    }

    #[test]
    fn compliant_run_reorgs_original_chain() {
        let g = game(2);
        let out = g.run_detailed(&g.uniform(Choice::C)).unwrap();
        assert!(out.outcome.success);
        let t = &out.outcome.trace;
        for s in [-1, 0] {
            assert!(out.outcome.reorged.contains(&t.label(&slot_label(s)).unwrap()));
        }
        for s in 1..=2 {
            let b = t.label(&slot_label(s)).unwrap();
            assert_eq!(out.marks.get(&b), Some(&true));
            assert_eq!(out.vote_tips[&s], b);
            assert_eq!(out.proposal_tips[&s], if s == 1 { t.label("B[-2]").unwrap() } else { t.label("B[1]").unwrap() });
        }
    }

    #[test]
    fn honest_run_fails() {
        let g = game(2);
        let out = g.run_detailed(&g.uniform(Choice::NC)).unwrap();
        assert!(!out.outcome.success);
        assert!(out.outcome.trace.on_final_chain(out.outcome.trace.label("B[0]").unwrap()));
    }

    #[test]
    fn tables_under_compliance() {
        let g = game(2);
        let a = g.attestor_matrix(2).unwrap();
        assert_eq!(a.get("A", "C"), Some(reward(1)));
        assert_eq!(a.get("A", "NC"), Some(reward(0)));
        assert_eq!(a.get("NA", "NC"), Some(reward(0)));
        let l = g.leader_matrix(2).unwrap();
        assert_eq!(l.get("A", "C"), Some(reward(1)));
        assert_eq!(l.get("A", "NC"), Some(reward(0)));
    }

    fn tree_with_branch() -> (BlockTree, BTreeMap<BlockId, bool>) {
        // B[-2] -> B[-1] -> B[0] plus an empty compliant block on B[-2] at slot 1.
        let mut t = BlockTree::new(-3);
        let v = Validator::new(0, ValidatorKind::Rational);
        for (id, slot, parent) in [(1, -2, 0), (2, -1, 1), (3, 0, 2), (4, 1, 1)] {
            t.insert_block(Block::child(BlockId(id), slot, BlockId(parent), Validator::new(id as u32, v.kind))).unwrap();
        }
        let mut voter = 0;
        for (slot, target, n) in [(-2, 1, 4), (-1, 2, 4), (0, 3, 4), (1, 4, 4)] {
            for _ in 0..n {
                t.add_vote(VoteRecord { slot, voter: ValidatorId(voter), target: BlockId(target), broadcast_tick: 3 * slot + 1 })
                    .unwrap();
                voter += 1;
            }
        }
        let marks = BTreeMap::from([(BlockId(1), true), (BlockId(4), true)]);
        (t, marks)
    }

    #[test]
    fn compliant_branch_beats_original_tip() {
        let (t, marks) = tree_with_branch();
        let tip = compliant_tip(&t, BlockId(1), 2, 2, 4, 2, &marks, TieBreakPolicy::AdversaryFavoring).unwrap();
        assert_eq!(tip, BlockId(4));
    }

    #[test]
    fn scan_restores_weights() {
        let (t, marks) = tree_with_branch();
        let mut w = t.subtree_weights();
        let before = w.clone();
        compliant_tip_with_weights(&t, &mut w, BlockId(1), 1, 3, 4, 2, &marks, TieBreakPolicy::Lexicographic).unwrap();
        assert_eq!(w, before);
    }
}

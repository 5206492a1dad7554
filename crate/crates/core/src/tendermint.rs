//! Tendermint rounds with evidence-based vote rewards: the per-validator
//! state machine, the evidence rules, a round-level simulator, and the
//! withholding and honest-anchor scenarios.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::chain::{BlockId, ValidatorId, ValidatorKind};
use crate::equilibrium::Verdict;
use crate::error::{Error, Result};
use crate::Reward;

pub type Height = u64;
/// Round number. Named apart from the reward unit.
pub type Round = i64;
pub type TmTick = i64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TmKind {
    Proposal,
    Prevote,
    Precommit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TendermintMsg {
    pub kind: TmKind,
    pub h: Height,
    pub round: Round,
    /// `None` is nil.
    pub value: Option<BlockId>,
    /// Valid round of a proposal, -1 for votes.
    pub vr: Round,
    pub sender: ValidatorId,
}

impl TendermintMsg {
    pub fn vote(kind: TmKind, h: Height, round: Round, value: Option<BlockId>, sender: ValidatorId) -> Self {
        Self { kind, h, round, value, vr: -1, sender }
    }

    pub fn proposal(h: Height, round: Round, value: BlockId, vr: Round, sender: ValidatorId) -> Self {
        Self { kind: TmKind::Proposal, h, round, value: Some(value), vr, sender }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    Prevote,
    Precommit,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct TmEvidence {
    pub kind: EvidenceKind,
    pub signer: ValidatorId,
    pub attested: TendermintMsg,
    /// Prevotes forwarded to justify the attested message.
    pub justification: Option<Vec<TendermintMsg>>,
}

impl TmEvidence {
    /// Evidences are unique per signer and attested message.
    pub fn key(&self) -> (ValidatorId, TendermintMsg) {
        (self.signer, self.attested)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TmParams {
    pub f: u64,
}

impl TmParams {
    pub fn n(&self) -> u64 {
        3 * self.f + 1
    }

    pub fn quorum(&self) -> usize {
        (2 * self.f + 1) as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RoundState {
    pub h: Height,
    pub round: Round,
    pub locked_round: Round,
    pub locked_value: Option<BlockId>,
    pub valid_round: Round,
    pub valid_value: Option<BlockId>,
}

impl RoundState {
    pub fn new(h: Height) -> Self {
        Self { h, round: 1, locked_round: -1, locked_value: None, valid_round: -1, valid_value: None }
    }

    pub fn is_consistent(&self) -> bool {
        self.valid_round >= self.locked_round
            && self.locked_value.is_none() == (self.locked_round == -1)
            && self.valid_value.is_none() == (self.valid_round == -1)
    }
}

/// Messages known to one validator.
#[derive(Clone, Debug, Default)]
pub struct TmView {
    msgs: BTreeSet<TendermintMsg>,
}

impl TmView {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, m: TendermintMsg) {
        self.msgs.insert(m);
    }

    pub fn iter(&self) -> impl Iterator<Item = &TendermintMsg> {
        self.msgs.iter()
    }

    pub fn proposal(&self, h: Height, round: Round) -> Option<&TendermintMsg> {
        self.msgs.iter().find(|m| m.kind == TmKind::Proposal && m.h == h && m.round == round)
    }

    pub fn sent_by(&self, sender: ValidatorId, kind: TmKind, h: Height, round: Round) -> Option<&TendermintMsg> {
        self.msgs.iter().find(|m| m.sender == sender && m.kind == kind && m.h == h && m.round == round)
    }

    /// Distinct senders of `kind` votes for `value` at (h, round).
    pub fn count(&self, kind: TmKind, h: Height, round: Round, value: Option<BlockId>) -> usize {
        self.msgs
            .iter()
            .filter(|m| m.kind == kind && m.h == h && m.round == round && m.value == value)
            .map(|m| m.sender)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn votes(&self, kind: TmKind, h: Height, round: Round, value: Option<BlockId>) -> Vec<TendermintMsg> {
        self.msgs.iter().filter(|m| m.kind == kind && m.h == h && m.round == round && m.value == value).copied().collect()
    }
}

impl FromIterator<TendermintMsg> for TmView {
    fn from_iter<I: IntoIterator<Item = TendermintMsg>>(it: I) -> Self {
        Self { msgs: it.into_iter().collect() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    Propose,
    Prevote,
    Precommit,
}

#[derive(Clone, Debug)]
pub struct TmValidator {
    pub id: ValidatorId,
    pub state: RoundState,
    sent: BTreeSet<(TmKind, Height, Round)>,
}

impl TmValidator {
    pub fn new(id: ValidatorId, h: Height) -> Self {
        Self { id, state: RoundState::new(h), sent: BTreeSet::new() }
    }

    /// Records a message, refusing a second one of the same kind and round.
    pub fn record(&mut self, m: &TendermintMsg) -> Result<()> {
        if !self.sent.insert((m.kind, m.h, m.round)) {
            return Err(Error::SlashableAttempt(format!(
                "{} already sent a {:?} for height {} round {}",
                self.id, m.kind, m.h, m.round
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StepContext {
    pub step: Step,
    pub leader: ValidatorId,
    /// Block a leader without a valid value proposes.
    pub fresh: BlockId,
    pub params: TmParams,
}

fn accepts(st: &RoundState, p: &TendermintMsg, view: &TmView, q: usize) -> bool {
    st.locked_round == -1
        || st.locked_value == p.value
        || (p.vr >= 0 && p.vr >= st.locked_round && p.vr < p.round && view.count(TmKind::Prevote, p.h, p.vr, p.value) >= q)
}

/// One protocol step of an honest validator.
pub fn tm_step(v: &mut TmValidator, ctx: &StepContext, view: &TmView) -> Result<Vec<TendermintMsg>> {
    let st = v.state;
    let q = ctx.params.quorum();
    let out = match ctx.step {
        Step::Propose => {
            if v.id != ctx.leader {
                return Ok(Vec::new());
            }
            let value = if st.valid_round == -1 { ctx.fresh } else { st.valid_value.unwrap_or(ctx.fresh) };
            TendermintMsg::proposal(st.h, st.round, value, st.valid_round, v.id)
        }
        Step::Prevote => {
            let value = match view.proposal(st.h, st.round) {
                Some(p) if accepts(&st, p, view, q) => p.value,
                _ => None,
            };
            TendermintMsg::vote(TmKind::Prevote, st.h, st.round, value, v.id)
        }
        Step::Precommit => {
            let value = view
                .proposal(st.h, st.round)
                .and_then(|p| p.value)
                .filter(|b| view.count(TmKind::Prevote, st.h, st.round, Some(*b)) >= q);
            if let Some(b) = value {
                v.state.locked_round = st.round;
                v.state.locked_value = Some(b);
                v.state.valid_round = st.round;
                v.state.valid_value = Some(b);
            }
            TendermintMsg::vote(TmKind::Precommit, st.h, st.round, value, v.id)
        }
    };
    v.record(&out)?;
    Ok(vec![out])
}

fn quorum_of_prevotes(just: &[TendermintMsg], h: Height, q: usize) -> Option<(Round, Option<BlockId>)> {
    let first = just.first()?;
    let same = just.iter().all(|m| m.kind == TmKind::Prevote && m.h == h && m.round == first.round && m.value == first.value);
    let senders: BTreeSet<ValidatorId> = just.iter().map(|m| m.sender).collect();
    (same && senders.len() >= q).then_some((first.round, first.value))
}

/// Whether the signer may sign a prevote evidence, given what it sent and saw.
pub fn prevote_evidence_valid(ev: &TmEvidence, signer_view: &TmView, params: TmParams) -> bool {
    let a = &ev.attested;
    if ev.kind != EvidenceKind::Prevote || a.kind != TmKind::Prevote {
        return false;
    }
    if signer_view.sent_by(ev.signer, TmKind::Precommit, a.h, a.round).is_none() {
        return false;
    }
    let Some(own) = signer_view.sent_by(ev.signer, TmKind::Prevote, a.h, a.round) else {
        return false;
    };
    if own.value == a.value {
        return true;
    }
    let proposal = signer_view.proposal(a.h, a.round);
    if a.value.is_some() || own.value.is_none() || proposal.and_then(|p| p.value) != own.value {
        return false;
    }
    let vr = proposal.map_or(-1, |p| p.vr);
    match ev.justification.as_deref().and_then(|j| quorum_of_prevotes(j, a.h, params.quorum())) {
        Some((r2, Some(b2))) => r2 >= vr && r2 < a.round && Some(b2) != own.value,
        _ => false,
    }
}

/// Round whose precommits a prevote at (h, round) may attest to.
pub fn precommit_evidence_target(h: Height, round: Round, prev_height_last_round: Option<Round>) -> Option<(Height, Round)> {
    if round > 1 {
        Some((h, round - 1))
    } else {
        Some((h.checked_sub(1)?, prev_height_last_round?))
    }
}

/// Whether the signer, sending its prevote at `at = (h, round)`, may sign a
/// precommit evidence.
pub fn precommit_evidence_valid(
    ev: &TmEvidence,
    signer_view: &TmView,
    params: TmParams,
    at: (Height, Round),
    prev_height_last_round: Option<Round>,
) -> bool {
    let a = &ev.attested;
    if ev.kind != EvidenceKind::Precommit || a.kind != TmKind::Precommit {
        return false;
    }
    if precommit_evidence_target(at.0, at.1, prev_height_last_round) != Some((a.h, a.round)) {
        return false;
    }
    if signer_view.sent_by(ev.signer, TmKind::Precommit, a.h, a.round).is_some_and(|m| m.value == a.value) {
        return true;
    }
    matches!(
        ev.justification.as_deref().and_then(|j| quorum_of_prevotes(j, a.h, params.quorum())),
        Some((r, v)) if r == a.round && v == a.value
    )
}

/// Distinct signers among the evidences attesting exactly `vote`.
pub fn unique_evidence_signers<'a>(vote: &TendermintMsg, evidences: impl IntoIterator<Item = &'a TmEvidence>) -> usize {
    evidences.into_iter().filter(|e| e.attested == *vote).map(|e| e.signer).collect::<BTreeSet<_>>().len()
}

/// A vote included in a finalized block at `including = (round, height)` is
/// rewarded when it is correct and backed by a quorum of evidences.
pub fn tm_vote_reward(vote: &TendermintMsg, including: (Round, Height), evidence_count: usize, params: TmParams) -> bool {
    let (r2, h2) = including;
    let correct = vote.h < h2 || (vote.h == h2 && vote.round < r2);
    correct && evidence_count >= params.quorum()
}

/// What a non-honest validator does in one round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TmAction {
    /// Follow the protocol and broadcast on time.
    Protocol,
    /// Nil votes shared only with the coalition until `release`.
    Withhold { release: Round },
    /// Nil votes broadcast on time.
    NilOnTime,
    /// Prevote the round's proposal whatever the lock.
    ProposalOnTime,
    Abstain,
}

#[derive(Clone, Debug, Default)]
pub struct TmProfile {
    pub default: BTreeMap<ValidatorId, TmAction>,
    pub overrides: BTreeMap<(ValidatorId, Round), TmAction>,
}

impl TmProfile {
    pub fn get(&self, v: ValidatorId, round: Round) -> TmAction {
        self.overrides.get(&(v, round)).or_else(|| self.default.get(&v)).copied().unwrap_or(TmAction::Protocol)
    }

    pub fn with(&self, v: ValidatorId, round: Round, a: TmAction) -> Self {
        let mut p = self.clone();
        p.overrides.insert((v, round), a);
        p
    }
}

#[derive(Clone, Debug)]
pub struct TmSetup {
    pub params: TmParams,
    pub h: Height,
    pub kinds: Vec<ValidatorKind>,
    /// Leader of round i is `leaders[(i-1) % len]`.
    pub leaders: Vec<ValidatorId>,
    pub max_rounds: Round,
    pub stop_on_finalize: bool,
}

impl TmSetup {
    pub fn leader(&self, round: Round) -> ValidatorId {
        self.leaders[((round - 1) as usize) % self.leaders.len()]
    }

    fn honest(&self, v: ValidatorId) -> bool {
        self.kinds[v.0 as usize] == ValidatorKind::Honest
    }
}

/// Something broadcast at `tick` that the honest side learns at `public_at`.
#[derive(Clone, Debug, Serialize)]
pub struct Posted<T> {
    pub item: T,
    pub tick: TmTick,
    pub public_at: TmTick,
}

#[derive(Clone, Debug, Serialize)]
pub struct TmBlock {
    pub id: BlockId,
    pub h: Height,
    pub round: Round,
    pub proposer: ValidatorId,
    pub vr: Round,
    pub votes: Vec<TendermintMsg>,
    pub evidences: Vec<TmEvidence>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TmOutcome {
    pub messages: Vec<Posted<TendermintMsg>>,
    pub evidences: Vec<Posted<TmEvidence>>,
    pub blocks: BTreeMap<BlockId, TmBlock>,
    /// (round, block) pairs with a public precommit quorum, in discovery order.
    pub finalized: Vec<(Round, BlockId)>,
    pub states: Vec<RoundState>,
    pub rounds_run: Round,
    /// Steps after which some validator broke validRound >= lockedRound.
    pub invariant_breaks: usize,
}

impl TmOutcome {
    pub fn first_finalized(&self) -> Option<(Round, BlockId)> {
        self.finalized.iter().min_by_key(|(r, _)| *r).copied()
    }
}

fn start(round: Round) -> TmTick {
    3 * (round - 1)
}

pub fn fresh_block(h: Height, round: Round) -> BlockId {
    BlockId((h << 20) | round as u64)
}

struct TmSim<'a> {
    setup: &'a TmSetup,
    profile: &'a TmProfile,
    vals: Vec<TmValidator>,
    msgs: Vec<Posted<TendermintMsg>>,
    evs: Vec<Posted<TmEvidence>>,
    ev_keys: BTreeSet<(ValidatorId, TendermintMsg)>,
    lock_proofs: BTreeMap<(ValidatorId, Round), Vec<TendermintMsg>>,
    blocks: BTreeMap<BlockId, TmBlock>,
    invariant_breaks: usize,
}

impl<'a> TmSim<'a> {
    fn sees(&self, v: ValidatorId, sender: ValidatorId, tick: TmTick, public_at: TmTick, now: TmTick) -> bool {
        if sender == v {
            return tick <= now;
        }
        if self.setup.honest(v) {
            public_at < now
        } else {
            tick < now
        }
    }

    fn view(&self, v: ValidatorId, now: TmTick) -> TmView {
        self.msgs.iter().filter(|p| self.sees(v, p.item.sender, p.tick, p.public_at, now)).map(|p| p.item).collect()
    }

    fn evidence_view(&self, v: ValidatorId, now: TmTick) -> Vec<TmEvidence> {
        self.evs.iter().filter(|p| self.sees(v, p.item.signer, p.tick, p.public_at, now)).map(|p| p.item.clone()).collect()
    }

    fn public_at(&self, action: TmAction, tick: TmTick) -> TmTick {
        match action {
            TmAction::Withhold { release } => tick.max(start(release)),
            _ => tick,
        }
    }

    fn post(&mut self, m: TendermintMsg, tick: TmTick, action: TmAction) {
        let public_at = self.public_at(action, tick);
        self.msgs.push(Posted { item: m, tick, public_at });
    }

    fn post_evidence(&mut self, e: TmEvidence, tick: TmTick, action: TmAction) {
        if self.ev_keys.insert(e.key()) {
            let public_at = self.public_at(action, tick);
            self.evs.push(Posted { item: e, tick, public_at });
        }
    }

    fn action(&self, v: ValidatorId, round: Round) -> TmAction {
        if self.setup.honest(v) {
            TmAction::Protocol
        } else {
            self.profile.get(v, round)
        }
    }

    fn protocol_step(&mut self, i: usize, ctx: &StepContext, view: &TmView) -> Result<Vec<TendermintMsg>> {
        let out = tm_step(&mut self.vals[i], ctx, view)?;
        if !self.vals[i].state.is_consistent() {
            self.invariant_breaks += 1;
        }
        Ok(out)
    }

    fn round(&mut self, round: Round) -> Result<()> {
        let h = self.setup.h;
        let params = self.setup.params;
        let leader = self.setup.leader(round);
        let n = self.vals.len();
        for v in &mut self.vals {
            v.state.round = round;
        }

        let t0 = start(round);
        let la = self.action(leader, round);
        if la != TmAction::Abstain {
            let view = self.view(leader, t0);
            let ctx = StepContext { step: Step::Propose, leader, fresh: fresh_block(h, round), params };
            for m in self.protocol_step(leader.0 as usize, &ctx, &view)? {
                let votes: Vec<TendermintMsg> =
                    view.iter().filter(|x| x.kind != TmKind::Proposal && x.h == h && x.round < round).copied().collect();
                let evidences = self.evidence_view(leader, t0);
                let id = m.value.expect("proposals carry a block");
                self.blocks.entry(id).or_insert(TmBlock { id, h, round, proposer: leader, vr: m.vr, votes, evidences });
                self.post(m, t0, TmAction::Protocol);
            }
        }

        let t1 = t0 + 1;
        for i in 0..n {
            let id = ValidatorId(i as u32);
            let a = self.action(id, round);
            let view = self.view(id, t1);
            let ctx = StepContext { step: Step::Prevote, leader, fresh: fresh_block(h, round), params };
            let out = match a {
                TmAction::Protocol => self.protocol_step(i, &ctx, &view)?,
                TmAction::Withhold { .. } | TmAction::NilOnTime => {
                    let m = TendermintMsg::vote(TmKind::Prevote, h, round, None, id);
                    self.vals[i].record(&m)?;
                    vec![m]
                }
                TmAction::ProposalOnTime => {
                    let value = view.proposal(h, round).and_then(|p| p.value);
                    let m = TendermintMsg::vote(TmKind::Prevote, h, round, value, id);
                    self.vals[i].record(&m)?;
                    vec![m]
                }
                TmAction::Abstain => Vec::new(),
            };
            for m in out {
                let st = self.vals[i].state;
                if m.value.is_none() && st.locked_round >= 0 {
                    let proof = view.votes(TmKind::Prevote, h, st.locked_round, st.locked_value);
                    self.lock_proofs.insert((id, round), proof);
                }
                self.post(m, t1, a);
            }
        }

        let t2 = t0 + 2;
        let mut precommitted = Vec::new();
        for i in 0..n {
            let id = ValidatorId(i as u32);
            let a = self.action(id, round);
            let view = self.view(id, t2);
            let ctx = StepContext { step: Step::Precommit, leader, fresh: fresh_block(h, round), params };
            let out = match a {
                TmAction::Protocol | TmAction::ProposalOnTime => self.protocol_step(i, &ctx, &view)?,
                TmAction::Withhold { .. } | TmAction::NilOnTime => {
                    let m = TendermintMsg::vote(TmKind::Precommit, h, round, None, id);
                    self.vals[i].record(&m)?;
                    vec![m]
                }
                TmAction::Abstain => Vec::new(),
            };
            for m in out {
                self.post(m, t2, a);
                precommitted.push(i);
            }
        }

        // Prevote evidences go out with the precommit.
        for &i in &precommitted {
            let id = ValidatorId(i as u32);
            let a = self.action(id, round);
            let view = self.view(id, t2);
            let prevotes: Vec<TendermintMsg> =
                view.iter().filter(|m| m.kind == TmKind::Prevote && m.h == h && m.round == round).copied().collect();
            for pv in prevotes {
                let ev = TmEvidence {
                    kind: EvidenceKind::Prevote,
                    signer: id,
                    attested: pv,
                    justification: self.lock_proofs.get(&(pv.sender, round)).cloned(),
                };
                if prevote_evidence_valid(&ev, &view, params) {
                    self.post_evidence(ev, t2, a);
                }
            }
        }

        // Precommit evidences are signed at the close of the precommit step.
        let t3 = t2 + 1;
        for i in 0..n {
            let id = ValidatorId(i as u32);
            let a = self.action(id, round);
            if a == TmAction::Abstain {
                continue;
            }
            let view = self.view(id, t3);
            let precommits: Vec<TendermintMsg> =
                view.iter().filter(|m| m.kind == TmKind::Precommit && m.h == h && m.round == round).copied().collect();
            for pc in precommits {
                let support = view.votes(TmKind::Prevote, h, round, pc.value);
                let justification = (support.len() >= params.quorum()).then_some(support);
                let ev = TmEvidence { kind: EvidenceKind::Precommit, signer: id, attested: pc, justification };
                if precommit_evidence_valid(&ev, &view, params, (h, round + 1), None) {
                    self.post_evidence(ev, t2, a);
                }
            }
        }
        Ok(())
    }

    fn public_finalized(&self, now: TmTick) -> BTreeSet<(Round, BlockId)> {
        let view: TmView = self.msgs.iter().filter(|p| p.public_at < now).map(|p| p.item).collect();
        let mut out = BTreeSet::new();
        for m in view.iter().filter(|m| m.kind == TmKind::Precommit && m.h == self.setup.h) {
            if let Some(b) = m.value {
                if view.count(TmKind::Precommit, m.h, m.round, Some(b)) >= self.setup.params.quorum() {
                    out.insert((m.round, b));
                }
            }
        }
        out
    }
}

/// Runs one height under `profile`. Honest validators always follow the
/// protocol; the others share everything among themselves immediately.
pub fn simulate(setup: &TmSetup, profile: &TmProfile) -> Result<TmOutcome> {
    if setup.kinds.len() as u64 != setup.params.n() {
        return Err(Error::Validation(format!("need {} validators, got {}", setup.params.n(), setup.kinds.len())));
    }
    if setup.leaders.is_empty() {
        return Err(Error::Validation("no round leaders".into()));
    }
    let mut sim = TmSim {
        setup,
        profile,
        vals: (0..setup.kinds.len()).map(|i| TmValidator::new(ValidatorId(i as u32), setup.h)).collect(),
        msgs: Vec::new(),
        evs: Vec::new(),
        ev_keys: BTreeSet::new(),
        lock_proofs: BTreeMap::new(),
        blocks: BTreeMap::new(),
        invariant_breaks: 0,
    };
    let mut finalized: Vec<(Round, BlockId)> = Vec::new();
    let mut rounds_run = 0;
    for round in 1..=setup.max_rounds {
        sim.round(round)?;
        rounds_run = round;
        for fb in sim.public_finalized(start(round + 1)) {
            if !finalized.contains(&fb) {
                finalized.push(fb);
            }
        }
        if setup.stop_on_finalize && !finalized.is_empty() {
            break;
        }
    }
    Ok(TmOutcome {
        states: sim.vals.iter().map(|v| v.state).collect(),
        messages: sim.msgs,
        evidences: sim.evs,
        blocks: sim.blocks,
        finalized,
        rounds_run,
        invariant_breaks: sim.invariant_breaks,
    })
}

/// Rewards of the votes included in a finalized block: half the unit for each
/// rewarded prevote and each rewarded precommit.
pub fn settle(block: &TmBlock, r_unit: Reward, params: TmParams) -> BTreeMap<ValidatorId, Reward> {
    let half = r_unit / 2;
    let mut out: BTreeMap<ValidatorId, Reward> = BTreeMap::new();
    for vote in &block.votes {
        let count = unique_evidence_signers(vote, &block.evidences);
        if tm_vote_reward(vote, (block.round, block.h), count, params) {
            *out.entry(vote.sender).or_default() += half;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TmDeviation {
    pub validator: ValidatorId,
    pub round: Round,
    pub action: TmAction,
    #[serde(with = "crate::ratio_serde")]
    pub gain: Reward,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TmNashReport {
    pub verdict: Verdict,
    pub deviations: Vec<TmDeviation>,
    pub evaluated: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TmBestResponse {
    pub validator: ValidatorId,
    pub round: Round,
    pub payoffs: Vec<(TmAction, String)>,
    pub best: Vec<TmAction>,
}

fn best_of(validator: ValidatorId, round: Round, payoffs: Vec<(TmAction, Reward)>) -> TmBestResponse {
    let top = payoffs.iter().map(|(_, u)| *u).max();
    TmBestResponse {
        validator,
        round,
        best: payoffs.iter().filter(|(_, u)| Some(*u) == top).map(|(a, _)| *a).collect(),
        payoffs: payoffs.into_iter().map(|(a, u)| (a, u.to_string())).collect(),
    }
}

/// The withholding game: `honest` validators lead rounds 1..=m, everyone else
/// nil-votes privately and releases at round m+1.
#[derive(Clone, Debug)]
pub struct WithholdingGame {
    pub f: u64,
    pub m: Round,
    pub r_unit: Reward,
    pub setup: TmSetup,
}

impl WithholdingGame {
    pub fn new(f: u64, m: Round, r_unit: Reward) -> Result<Self> {
        if m < 0 {
            return Err(Error::Validation(format!("round count {m} is negative")));
        }
        let params = TmParams { f };
        let honest = (m as u64).min(f);
        let n = params.n();
        let kinds: Vec<ValidatorKind> = (0..n)
            .map(|i| {
                if i < honest {
                    ValidatorKind::Honest
                } else if i < honest + f {
                    ValidatorKind::Adversarial
                } else {
                    ValidatorKind::Rational
                }
            })
            .collect();
        let mut leaders: Vec<ValidatorId> = (1..=m).map(|r| ValidatorId(((r - 1) as u64 % honest.max(1)) as u32)).collect();
        leaders.push(ValidatorId(honest as u32));
        let setup = TmSetup { params, h: 1, kinds, leaders, max_rounds: m + 1, stop_on_finalize: true };
        Ok(Self { f, m, r_unit, setup })
    }

    pub fn non_honest(&self) -> Vec<ValidatorId> {
        (0..self.setup.kinds.len())
            .filter(|&i| self.setup.kinds[i] != ValidatorKind::Honest)
            .map(|i| ValidatorId(i as u32))
            .collect()
    }

    pub fn rational(&self) -> Vec<ValidatorId> {
        (0..self.setup.kinds.len())
            .filter(|&i| self.setup.kinds[i] == ValidatorKind::Rational)
            .map(|i| ValidatorId(i as u32))
            .collect()
    }

    pub fn prescribed(&self) -> TmProfile {
        let mut p = TmProfile::default();
        for v in self.non_honest() {
            for r in 1..=self.m {
                p.overrides.insert((v, r), TmAction::Withhold { release: self.m + 1 });
            }
        }
        p
    }

    /// Rewards paid by the block finalized within the game, if any.
    pub fn payoffs(&self, profile: &TmProfile) -> Result<(TmOutcome, BTreeMap<ValidatorId, Reward>)> {
        let out = simulate(&self.setup, profile)?;
        let pay = match out.first_finalized() {
            Some((_, b)) => out.blocks.get(&b).map(|blk| settle(blk, self.r_unit, self.setup.params)).unwrap_or_default(),
            None => BTreeMap::new(),
        };
        Ok((out, pay))
    }

    fn alternatives(&self, round: Round) -> Vec<TmAction> {
        if round <= self.m {
            vec![TmAction::NilOnTime, TmAction::ProposalOnTime, TmAction::Abstain]
        } else {
            vec![TmAction::NilOnTime, TmAction::Abstain]
        }
    }

    /// Payoff of `v` for each action it could take in `round`, others fixed.
    pub fn best_response(&self, v: ValidatorId, round: Round) -> Result<TmBestResponse> {
        let base = self.prescribed();
        let mut cands = vec![base.get(v, round)];
        cands.extend(self.alternatives(round));
        let mut payoffs = Vec::new();
        for a in cands {
            let (_, pay) = self.payoffs(&base.with(v, round, a))?;
            payoffs.push((a, pay.get(&v).copied().unwrap_or_default()));
        }
        Ok(best_of(v, round, payoffs))
    }

    /// Unilateral deviations of rational validators, round by round.
    pub fn verify_nash(&self) -> Result<TmNashReport> {
        let base = self.prescribed();
        let (_, base_pay) = self.payoffs(&base)?;
        let mut deviations = Vec::new();
        let mut evaluated = 1;
        for v in self.rational() {
            let own = base_pay.get(&v).copied().unwrap_or_default();
            for round in 1..=self.m + 1 {
                for a in self.alternatives(round) {
                    let (_, pay) = self.payoffs(&base.with(v, round, a))?;
                    evaluated += 1;
                    let gain = pay.get(&v).copied().unwrap_or_default() - own;
                    if gain > Reward::from_integer(0) {
                        deviations.push(TmDeviation { validator: v, round, action: a, gain });
                    }
                }
            }
        }
        let verdict = if deviations.is_empty() { Verdict::Nash } else { Verdict::NotEquilibrium };
        Ok(TmNashReport { verdict, deviations, evaluated })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WithholdingReport {
    pub f: u64,
    pub m: Round,
    #[serde(with = "crate::ratio_serde")]
    pub r_unit: Reward,
    pub honest: usize,
    pub stalled_rounds: Round,
    pub finalized_round: Option<Round>,
    /// Common payoff of the non-honest validators, if they all earn the same.
    #[serde(serialize_with = "ser_opt")]
    pub payoff_per_validator: Option<Reward>,
    #[serde(serialize_with = "ser_map")]
    pub payoffs: BTreeMap<ValidatorId, Reward>,
    pub nash: TmNashReport,
}

fn ser_opt<S: serde::Serializer>(r: &Option<Reward>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match r {
        Some(r) => s.serialize_some(&r.to_string()),
        None => s.serialize_none(),
    }
}

fn ser_map<S: serde::Serializer>(m: &BTreeMap<ValidatorId, Reward>, s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeMap;
    let mut map = s.serialize_map(Some(m.len()))?;
    for (k, v) in m {
        map.serialize_entry(&k.to_string(), &v.to_string())?;
    }
    map.end()
}

pub fn withholding_attack_scenario(f: u64, m: Round, r_unit: Reward) -> Result<WithholdingReport> {
    let g = WithholdingGame::new(f, m, r_unit)?;
    let (out, pay) = g.payoffs(&g.prescribed())?;
    let finalized_round = out.first_finalized().map(|(r, _)| r);
    let payoffs: BTreeMap<ValidatorId, Reward> =
        g.non_honest().into_iter().map(|v| (v, pay.get(&v).copied().unwrap_or_default())).collect();
    let distinct: BTreeSet<Reward> = payoffs.values().copied().collect();
    Ok(WithholdingReport {
        f,
        m,
        r_unit,
        honest: g.setup.kinds.iter().filter(|k| **k == ValidatorKind::Honest).count(),
        stalled_rounds: finalized_round.map_or(out.rounds_run, |r| r - 1),
        finalized_round,
        payoff_per_validator: (distinct.len() == 1).then(|| *distinct.iter().next().expect("one value")),
        payoffs,
        nash: g.verify_nash()?,
    })
}

/// Population of the honest-anchor game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct AnchorConfig {
    pub f: u64,
    pub honest: u64,
    pub adversarial: u64,
}

impl AnchorConfig {
    pub fn new(f: u64) -> Self {
        Self { f, honest: f + 1, adversarial: f }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AnchorReport {
    pub f: u64,
    pub first_finalized_round: Option<Round>,
    pub finalized_block: Option<BlockId>,
    pub honest_proposal: BlockId,
    pub reorg_resilient: bool,
    pub best_responses: Vec<TmBestResponse>,
}

pub struct AnchorGame {
    pub cfg: AnchorConfig,
    pub setup: TmSetup,
    pub r_unit: Reward,
}

impl AnchorGame {
    pub fn new(cfg: AnchorConfig) -> Result<Self> {
        let params = TmParams { f: cfg.f };
        let n = params.n();
        if cfg.honest < cfg.f + 1 {
            return Err(Error::AssumptionViolated(format!("{} honest validators, need at least {}", cfg.honest, cfg.f + 1)));
        }
        if cfg.adversarial > cfg.f || cfg.honest + cfg.adversarial > n {
            return Err(Error::AssumptionViolated(format!(
                "{} adversarial and {} honest do not fit {} validators with f={}",
                cfg.adversarial, cfg.honest, n, cfg.f
            )));
        }
        let kinds = (0..n)
            .map(|i| {
                if i < cfg.honest {
                    ValidatorKind::Honest
                } else if i < cfg.honest + cfg.adversarial {
                    ValidatorKind::Adversarial
                } else {
                    ValidatorKind::Rational
                }
            })
            .collect();
        let setup = TmSetup { params, h: 1, kinds, leaders: vec![ValidatorId(0)], max_rounds: 1, stop_on_finalize: true };
        Ok(Self { cfg, setup, r_unit: Reward::from_integer(1) })
    }

    fn ids(&self, kind: ValidatorKind) -> Vec<ValidatorId> {
        (0..self.setup.kinds.len()).filter(|&i| self.setup.kinds[i] == kind).map(|i| ValidatorId(i as u32)).collect()
    }

    /// Adversaries nil-vote in the open; rational validators follow the protocol.
    pub fn prescribed(&self) -> TmProfile {
        let mut p = TmProfile::default();
        for v in self.ids(ValidatorKind::Adversarial) {
            p.default.insert(v, TmAction::NilOnTime);
        }
        p
    }

    /// Myopic payoff: the round-1 prevote reward once a later block carries
    /// every evidence created for it.
    pub fn prevote_payoff(&self, out: &TmOutcome, v: ValidatorId) -> Reward {
        let Some(vote) = out.messages.iter().map(|p| p.item).find(|m| m.kind == TmKind::Prevote && m.sender == v && m.round == 1)
        else {
            return Reward::from_integer(0);
        };
        let count = unique_evidence_signers(&vote, out.evidences.iter().map(|p| &p.item));
        if tm_vote_reward(&vote, (1, self.setup.h + 1), count, self.setup.params) {
            self.r_unit / 2
        } else {
            Reward::from_integer(0)
        }
    }

    pub fn run(&self) -> Result<AnchorReport> {
        let base = self.prescribed();
        let out = simulate(&self.setup, &base)?;
        let honest_proposal = fresh_block(self.setup.h, 1);
        let first = out.first_finalized();
        let mut best_responses = Vec::new();
        for v in self.ids(ValidatorKind::Rational) {
            let mut payoffs = Vec::new();
            for a in [TmAction::Protocol, TmAction::NilOnTime, TmAction::Abstain] {
                let o = simulate(&self.setup, &base.with(v, 1, a))?;
                payoffs.push((a, self.prevote_payoff(&o, v)));
            }
            best_responses.push(best_of(v, 1, payoffs));
        }
        Ok(AnchorReport {
            f: self.cfg.f,
            first_finalized_round: first.map(|(r, _)| r),
            finalized_block: first.map(|(_, b)| b),
            honest_proposal,
            reorg_resilient: first.is_some_and(|(_, b)| b == honest_proposal) && out.finalized.len() == 1,
            best_responses,
        })
    }
}

pub fn honest_anchor_scenario(f: u64) -> Result<AnchorReport> {
    AnchorGame::new(AnchorConfig::new(f))?.run()
}

#[cfg(test)]
mod tests {
    use super::*;

    const P1: TmParams = TmParams { f: 1 };

    fn v(i: u32) -> ValidatorId {
        ValidatorId(i)
    }

    fn ctx(step: Step, leader: u32) -> StepContext {
        StepContext { step, leader: v(leader), fresh: BlockId(7), params: P1 }
    }

    #[test]
    fn unlocked_prevotes_fresh_proposal() {
        let mut val = TmValidator::new(v(1), 1);
        let view: TmView = [TendermintMsg::proposal(1, 1, BlockId(7), -1, v(0))].into_iter().collect();
        let out = tm_step(&mut val, &ctx(Step::Prevote, 0), &view).unwrap();
        assert_eq!(out[0].value, Some(BlockId(7)));
    }

    #[test]
    fn locked_rejects_older_valid_round() {
        let mut val = TmValidator::new(v(1), 1);
        val.state = RoundState { h: 1, round: 3, locked_round: 2, locked_value: Some(BlockId(5)), valid_round: 2, valid_value: Some(BlockId(5)) };
        let view: TmView = [TendermintMsg::proposal(1, 3, BlockId(9), 1, v(0))].into_iter().collect();
        let out = tm_step(&mut val, &ctx(Step::Prevote, 0), &view).unwrap();
        assert_eq!(out[0].value, None);
    }

    #[test]
    fn quorum_of_prevotes_gives_precommit_and_lock() {
        let mut val = TmValidator::new(v(1), 1);
        let mut view: TmView = [TendermintMsg::proposal(1, 1, BlockId(7), -1, v(0))].into_iter().collect();
        for i in 0..3 {
            view.insert(TendermintMsg::vote(TmKind::Prevote, 1, 1, Some(BlockId(7)), v(i)));
        }
        let out = tm_step(&mut val, &ctx(Step::Precommit, 0), &view).unwrap();
        assert_eq!(out[0].value, Some(BlockId(7)));
        assert_eq!(val.state.locked_round, 1);
        assert!(val.state.is_consistent());
    }

    #[test]
    fn second_prevote_is_slashable() {
        let mut val = TmValidator::new(v(1), 1);
        let view = TmView::new();
        tm_step(&mut val, &ctx(Step::Prevote, 0), &view).unwrap();
        assert!(matches!(tm_step(&mut val, &ctx(Step::Prevote, 0), &view), Err(Error::SlashableAttempt(_))));
    }

    fn signer_view(own_prevote: Option<BlockId>) -> TmView {
        [
            TendermintMsg::proposal(1, 2, BlockId(7), 0, v(0)),
            TendermintMsg::vote(TmKind::Prevote, 1, 2, own_prevote, v(1)),
            TendermintMsg::vote(TmKind::Precommit, 1, 2, None, v(1)),
        ]
        .into_iter()
        .collect()
    }

    #[test]
    fn prevote_evidence_clauses() {
        let same = TmEvidence {
            kind: EvidenceKind::Prevote,
            signer: v(1),
            attested: TendermintMsg::vote(TmKind::Prevote, 1, 2, Some(BlockId(7)), v(2)),
            justification: None,
        };
        assert!(prevote_evidence_valid(&same, &signer_view(Some(BlockId(7))), P1));

        let proof: Vec<_> = (0..3).map(|i| TendermintMsg::vote(TmKind::Prevote, 1, 1, Some(BlockId(5)), v(i))).collect();
        let nil = TmEvidence {
            kind: EvidenceKind::Prevote,
            signer: v(1),
            attested: TendermintMsg::vote(TmKind::Prevote, 1, 2, None, v(2)),
            justification: Some(proof.clone()),
        };
        assert!(prevote_evidence_valid(&nil, &signer_view(Some(BlockId(7))), P1));
        assert!(!prevote_evidence_valid(&TmEvidence { justification: None, ..nil.clone() }, &signer_view(Some(BlockId(7))), P1));
        let short = TmEvidence { justification: Some(proof[..2].to_vec()), ..nil };
        assert!(!prevote_evidence_valid(&short, &signer_view(Some(BlockId(7))), P1));
    }

    #[test]
    fn precommit_evidence_clauses() {
        let view: TmView = [TendermintMsg::vote(TmKind::Precommit, 1, 1, Some(BlockId(7)), v(1))].into_iter().collect();
        let ev = TmEvidence {
            kind: EvidenceKind::Precommit,
            signer: v(1),
            attested: TendermintMsg::vote(TmKind::Precommit, 1, 1, Some(BlockId(7)), v(2)),
            justification: None,
        };
        assert!(precommit_evidence_valid(&ev, &view, P1, (1, 2), None));
        assert!(!precommit_evidence_valid(&ev, &view, P1, (1, 3), None));

        let other = TmEvidence { signer: v(3), ..ev.clone() };
        let two: Vec<_> = (0..2).map(|i| TendermintMsg::vote(TmKind::Prevote, 1, 1, Some(BlockId(7)), v(i))).collect();
        assert!(!precommit_evidence_valid(&TmEvidence { justification: Some(two), ..other.clone() }, &view, P1, (1, 2), None));
        let three: Vec<_> = (0..3).map(|i| TendermintMsg::vote(TmKind::Precommit, 1, 1, Some(BlockId(7)), v(i))).collect();
        assert!(!precommit_evidence_valid(&TmEvidence { justification: Some(three), ..other }, &view, P1, (1, 2), None));

        // Round one of height 5 attests to the last round of height 4.
        let prev: TmView = [TendermintMsg::vote(TmKind::Precommit, 4, 3, None, v(1))].into_iter().collect();
        let ev = TmEvidence {
            kind: EvidenceKind::Precommit,
            signer: v(1),
            attested: TendermintMsg::vote(TmKind::Precommit, 4, 3, None, v(2)),
            justification: None,
        };
        assert!(precommit_evidence_valid(&ev, &prev, P1, (5, 1), Some(3)));
        assert!(!precommit_evidence_valid(&ev, &prev, P1, (5, 1), Some(2)));
    }

    #[test]
    fn vote_reward_rules() {
        let vote = TendermintMsg::vote(TmKind::Prevote, 5, 1, Some(BlockId(1)), v(0));
        assert!(tm_vote_reward(&vote, (3, 5), 3, P1));
        assert!(!tm_vote_reward(&vote, (3, 5), 2, P1));
        let late = TendermintMsg::vote(TmKind::Prevote, 6, 1, Some(BlockId(1)), v(0));
        assert!(!tm_vote_reward(&late, (3, 5), 4, P1));
        assert!(!tm_vote_reward(&vote, (1, 5), 4, P1));
    }

    #[test]
    fn withholding_one_two() {
        let r = withholding_attack_scenario(1, 2, Reward::from_integer(1)).unwrap();
        assert_eq!(r.stalled_rounds, 2);
        assert_eq!(r.finalized_round, Some(3));
        assert_eq!(r.payoff_per_validator, Some(Reward::from_integer(2)));
        assert_eq!(r.nash.verdict, Verdict::Nash);
    }

    #[test]
    fn withholding_zero_rounds() {
        let r = withholding_attack_scenario(1, 0, Reward::from_integer(1)).unwrap();
        assert_eq!(r.finalized_round, Some(1));
        assert_eq!(r.payoff_per_validator, Some(Reward::from_integer(0)));
        assert_eq!(r.nash.verdict, Verdict::Nash);
        assert!(r.nash.deviations.is_empty());
    }

    #[test]
    fn prevoting_honest_proposal_does_not_pay() {
        let g = WithholdingGame::new(1, 2, Reward::from_integer(1)).unwrap();
        let v = g.rational()[0];
        let br = g.best_response(v, 1).unwrap();
        let get = |a: TmAction| br.payoffs.iter().find(|(x, _)| *x == a).unwrap().1.clone();
        assert_eq!(get(TmAction::Withhold { release: 3 }), "2");
        assert_eq!(get(TmAction::ProposalOnTime), "3/2");
    }

    #[test]
    fn anchor_finalizes_first_round() {
        for f in 1..=2 {
            let r = honest_anchor_scenario(f).unwrap();
            assert_eq!(r.first_finalized_round, Some(1));
            assert!(r.reorg_resilient);
            for br in &r.best_responses {
                assert_eq!(br.best, vec![TmAction::Protocol]);
                let nil = br.payoffs.iter().find(|(a, _)| *a == TmAction::NilOnTime).unwrap();
                assert_eq!(nil.1, "0");
            }
        }
    }

    #[test]
    fn anchor_needs_honest_minority() {
        let cfg = AnchorConfig { f: 1, honest: 1, adversarial: 1 };
        assert!(matches!(AnchorGame::new(cfg), Err(Error::AssumptionViolated(_))));
    }
}

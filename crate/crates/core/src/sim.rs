//! Lock-step clock, committee schedule, message delivery and the run loop.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chain::{
    Block, BlockId, BlockTree, EvidenceRecord, ForkChoice, Slot, Tick, TieBreakPolicy, Validator, ValidatorId,
    ValidatorKind, VoteRecord,
};
use crate::error::{Error, Result};
use crate::rewards::{settle_payoffs, Mechanism, PayoffLedger, RewardParams};
use crate::strategy::{Controller, Inclusion, PlayerAction, PlayerKey, Release, Role, StrategyProfile, Target};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Propose,
    Vote,
    Aggregate,
}

pub fn slot_of(tick: Tick) -> Slot {
    tick.div_euclid(3)
}

pub fn phase_of(tick: Tick) -> Phase {
    match tick.rem_euclid(3) {
        0 => Phase::Propose,
        1 => Phase::Vote,
        _ => Phase::Aggregate,
    }
}

pub fn propose_tick(slot: Slot) -> Tick {
    3 * slot
}

pub fn vote_tick(slot: Slot) -> Tick {
    3 * slot + 1
}

pub fn aggregate_tick(slot: Slot) -> Tick {
    3 * slot + 2
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotDuty {
    pub slot: Slot,
    pub leader: ValidatorId,
    pub attestors: Vec<ValidatorId>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitteeMode {
    /// Disjoint committees within the epoch.
    #[default]
    Disjoint,
    /// The same attestor set in every slot.
    Fixed,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitteeRequest {
    pub seed: u64,
    pub n_validators: usize,
    pub committee_size: usize,
    pub epoch_length: usize,
    pub first_slot: Slot,
    pub adversarial_slots: BTreeSet<Slot>,
    pub mode: CommitteeMode,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommitteeSchedule {
    pub epoch_length: usize,
    pub seed: u64,
    validators: BTreeMap<ValidatorId, Validator>,
    duties: BTreeMap<Slot, SlotDuty>,
}

/// Seeded stand-in for the randomness beacon.
pub fn assign_committees(req: &CommitteeRequest) -> Result<CommitteeSchedule> {
    let w = req.committee_size;
    let needed = match req.mode {
        CommitteeMode::Disjoint => w * req.epoch_length,
        CommitteeMode::Fixed => w,
    };
    if req.n_validators < needed || w == 0 {
        return Err(Error::InsufficientValidators { needed: needed.max(1), available: req.n_validators });
    }
    let mut ids: Vec<u32> = (0..req.n_validators as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
    ids.shuffle(&mut rng);
    let mut validators: BTreeMap<ValidatorId, Validator> = (0..req.n_validators as u32)
        .map(|i| (ValidatorId(i), Validator::new(i, ValidatorKind::Rational)))
        .collect();
    let mut duties = BTreeMap::new();
    for k in 0..req.epoch_length {
        let slot = req.first_slot + k as Slot;
        let members: Vec<ValidatorId> = match req.mode {
            CommitteeMode::Disjoint => ids[k * w..(k + 1) * w].iter().map(|&i| ValidatorId(i)).collect(),
            CommitteeMode::Fixed => ids[..w].iter().map(|&i| ValidatorId(i)).collect(),
        };
        let leader = match req.mode {
            CommitteeMode::Disjoint => members[0],
            CommitteeMode::Fixed => members[k % w],
        };
        if req.adversarial_slots.contains(&slot) {
            validators.get_mut(&leader).expect("leader exists").kind = ValidatorKind::Adversarial;
        }
        duties.insert(slot, SlotDuty { slot, leader, attestors: members });
    }
    Ok(CommitteeSchedule { epoch_length: req.epoch_length, seed: req.seed, validators, duties })
}

impl CommitteeSchedule {
    pub fn duty(&self, slot: Slot) -> Option<&SlotDuty> {
        self.duties.get(&slot)
    }

    pub fn duties(&self) -> impl Iterator<Item = &SlotDuty> {
        self.duties.values()
    }

    pub fn validator(&self, id: ValidatorId) -> Option<&Validator> {
        self.validators.get(&id)
    }

    pub fn validators(&self) -> impl Iterator<Item = &Validator> {
        self.validators.values()
    }

    pub fn validator_mut(&mut self, id: ValidatorId) -> Option<&mut Validator> {
        self.validators.get_mut(&id)
    }

    pub fn is_member(&self, slot: Slot, v: ValidatorId) -> bool {
        self.duties.get(&slot).is_some_and(|d| d.attestors.contains(&v))
    }

    /// Committee members of `slot` other than its leader, in schedule order.
    pub fn non_leaders(&self, slot: Slot) -> Vec<ValidatorId> {
        self.duties
            .get(&slot)
            .map(|d| d.attestors.iter().copied().filter(|&a| a != d.leader).collect())
            .unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub genesis_slot: Slot,
    pub first_slot: Slot,
    pub last_slot: Slot,
    pub payoff_tick: Tick,
    pub committee_size: u64,
    pub boost: u64,
    pub tie_break: TieBreakPolicy,
    pub rewards: RewardParams,
}

impl EngineConfig {
    pub fn start_tick(&self) -> Tick {
        propose_tick(self.first_slot)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Message {
    Block(Block),
    Vote(VoteRecord),
    Evidence(EvidenceRecord),
}

impl Message {
    fn order(&self) -> u8 {
        match self {
            Message::Block(_) => 0,
            Message::Vote(_) => 1,
            Message::Evidence(_) => 2,
        }
    }
}

#[derive(Clone, Debug)]
struct Pending {
    release: Tick,
    seq: u64,
    msg: Message,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Proposal,
    Vote,
    Evidence,
    Withhold,
    Tip,
    Label,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: Tick,
    pub kind: EventKind,
    pub payload: serde_json::Value,
}

#[derive(Clone, Debug)]
struct DeferredVote {
    voter: ValidatorId,
    slot: Slot,
    target: Target,
}

/// Everything scripts may read or act on during a run.
#[derive(Clone, Debug)]
pub struct EngineState {
    pub cfg: EngineConfig,
    pub schedule: CommitteeSchedule,
    tick: Tick,
    view: BlockTree,
    evidences: Vec<EvidenceRecord>,
    all_blocks: BTreeMap<BlockId, Block>,
    release_ticks: BTreeMap<BlockId, Tick>,
    pending: Vec<Pending>,
    seq: u64,
    next_id: u64,
    labels: BTreeMap<String, BlockId>,
    deferred: Vec<DeferredVote>,
    proposed: BTreeSet<(ValidatorId, Slot)>,
    voted: BTreeMap<(ValidatorId, Slot), BlockId>,
    records: Vec<TraceRecord>,
    tips: Vec<(Tick, Vec<BlockId>)>,
}

impl EngineState {
    fn new(cfg: EngineConfig, schedule: CommitteeSchedule) -> Self {
        let view = BlockTree::new(cfg.genesis_slot);
        let g = view.get(view.genesis()).expect("genesis").clone();
        let mut all_blocks = BTreeMap::new();
        all_blocks.insert(g.id, g);
        let tick = cfg.start_tick();
        Self {
            cfg,
            schedule,
            tick,
            view,
            evidences: Vec::new(),
            all_blocks,
            release_ticks: BTreeMap::new(),
            pending: Vec::new(),
            seq: 0,
            next_id: 1,
            labels: BTreeMap::new(),
            deferred: Vec::new(),
            proposed: BTreeSet::new(),
            voted: BTreeMap::new(),
            records: Vec::new(),
            tips: Vec::new(),
        }
    }

    pub fn tick(&self) -> Tick {
        self.tick
    }

    pub fn slot(&self) -> Slot {
        slot_of(self.tick)
    }

    /// The public view: every message released strictly before the current tick.
    pub fn view(&self) -> &BlockTree {
        &self.view
    }

    pub fn delivered_evidences(&self) -> &[EvidenceRecord] {
        &self.evidences
    }

    /// Any block created so far, including withheld ones.
    pub fn any_block(&self, id: BlockId) -> Option<&Block> {
        self.all_blocks.get(&id)
    }

    pub fn label(&self, name: &str) -> Option<BlockId> {
        self.labels.get(name).copied()
    }

    pub fn set_label(&mut self, name: impl Into<String>, id: BlockId) {
        let name = name.into();
        self.records.push(TraceRecord {
            tick: self.tick,
            kind: EventKind::Label,
            payload: json!({ "label": name, "block": id }),
        });
        self.labels.insert(name, id);
    }

    pub fn labels(&self) -> &BTreeMap<String, BlockId> {
        &self.labels
    }

    pub fn validator(&self, id: ValidatorId) -> Validator {
        *self.schedule.validator(id).expect("scheduled validator")
    }

    /// Fork-choice parameters at the current tick: any block of the current
    /// slot in view receives the boost.
    pub fn fork_params(&self) -> ForkChoice {
        let slot = self.slot();
        let boosted = self.view.blocks().filter(|b| b.slot == slot && b.parent.is_some()).map(|b| b.id).min();
        ForkChoice { current_slot: slot, boosted, boost: self.cfg.boost, tie_break: self.cfg.tie_break }
    }

    pub fn canonical_chain(&self) -> Vec<BlockId> {
        self.view.canonical_chain(&self.fork_params())
    }

    pub fn tip(&self) -> BlockId {
        self.view.fork_choice(&self.fork_params())
    }

    /// Delivered votes not yet included on the chain ending at `parent`.
    pub fn unincluded_votes(&self, parent: BlockId, before_slot: Slot) -> Vec<VoteRecord> {
        let mut seen: BTreeSet<(ValidatorId, Slot)> = BTreeSet::new();
        for id in self.view.chain_to(parent) {
            if let Some(b) = self.view.block(id) {
                seen.extend(b.included_votes.iter().map(|v| (v.voter, v.slot)));
            }
        }
        let mut out = Vec::new();
        for v in self.view.votes() {
            if v.slot < before_slot && seen.insert((v.voter, v.slot)) {
                out.push(*v);
            }
        }
        out
    }

    pub fn unincluded_evidences(&self, parent: BlockId) -> Vec<EvidenceRecord> {
        let mut seen = BTreeSet::new();
        for id in self.view.chain_to(parent) {
            if let Some(b) = self.view.block(id) {
                seen.extend(b.included_evidences.iter().map(EvidenceRecord::key));
            }
        }
        self.evidences.iter().filter(|e| seen.insert(e.key())).copied().collect()
    }

    fn push(&mut self, release: Tick, msg: Message) {
        self.seq += 1;
        self.pending.push(Pending { release, seq: self.seq, msg });
    }

    #[allow(clippy::too_many_arguments)]
    pub fn propose(
        &mut self,
        proposer: ValidatorId,
        slot: Slot,
        parent: BlockId,
        is_empty: bool,
        votes: Vec<VoteRecord>,
        evidences: Vec<EvidenceRecord>,
        release: Tick,
    ) -> Result<BlockId> {
        let who = self.validator(proposer);
        if release < self.tick {
            return Err(Error::InvalidAction(format!("{proposer} released a block in the past")));
        }
        if !who.is_adversarial() && !self.proposed.insert((proposer, slot)) {
            return Err(Error::InvalidAction(format!("{proposer} proposed twice in slot {slot}")));
        }
        let parent_slot = self
            .all_blocks
            .get(&parent)
            .ok_or_else(|| Error::InvalidAction(format!("unknown parent {parent}")))?
            .slot;
        if parent_slot >= slot {
            return Err(Error::InvalidAction(format!("parent {parent} not before slot {slot}")));
        }
        let id = BlockId(self.next_id);
        self.next_id += 1;
        let block = Block {
            id,
            slot,
            parent: Some(parent),
            proposer: Some(who),
            is_empty,
            included_votes: votes,
            included_evidences: evidences,
        };
        self.records.push(TraceRecord {
            tick: self.tick,
            kind: EventKind::Proposal,
            payload: json!({
                "block": id, "slot": slot, "parent": parent, "proposer": proposer,
                "empty": is_empty, "votes": block.included_votes.len(),
                "evidences": block.included_evidences.len(), "release": release,
            }),
        });
        self.all_blocks.insert(id, block.clone());
        self.release_ticks.insert(id, release);
        self.push(release, Message::Block(block));
        let auto = format!("B[{slot}]");
        self.labels.entry(auto).or_insert(id);
        Ok(id)
    }

    pub fn cast_vote(&mut self, voter: ValidatorId, slot: Slot, target: BlockId, release: Tick) -> Result<VoteRecord> {
        let who = self.validator(voter);
        if release < self.tick {
            return Err(Error::InvalidAction(format!("{voter} released a vote in the past")));
        }
        let target_slot = self
            .all_blocks
            .get(&target)
            .ok_or_else(|| Error::InvalidAction(format!("vote for unknown block {target}")))?
            .slot;
        if target_slot > slot {
            return Err(Error::InvalidAction(format!("{voter} voted in slot {slot} for later block {target}")));
        }
        if !who.is_adversarial() {
            if let Some(prev) = self.voted.get(&(voter, slot)) {
                return Err(Error::InvalidAction(format!(
                    "{voter} already voted {prev} in slot {slot}, equivocation refused"
                )));
            }
        }
        self.voted.insert((voter, slot), target);
        let vote = VoteRecord { slot, voter, target, broadcast_tick: release };
        self.records.push(TraceRecord {
            tick: self.tick,
            kind: EventKind::Vote,
            payload: json!({ "slot": slot, "voter": voter, "target": target, "release": release }),
        });
        self.push(release, Message::Vote(vote));
        Ok(vote)
    }

    pub fn emit_evidence(&mut self, signer: ValidatorId, vote: VoteRecord, release: Tick) -> EvidenceRecord {
        let ev = EvidenceRecord { signer, vote, created_tick: self.tick };
        self.records.push(TraceRecord {
            tick: self.tick,
            kind: EventKind::Evidence,
            payload: json!({ "signer": signer, "voter": vote.voter, "slot": vote.slot, "target": vote.target }),
        });
        self.push(release, Message::Evidence(ev));
        ev
    }

    /// Validators who held back their vote for `slot`.
    pub fn deferred_voters(&self, slot: Slot) -> Vec<ValidatorId> {
        self.deferred.iter().filter(|d| d.slot == slot).map(|d| d.voter).collect()
    }

    /// Casts every deferred vote of `slot` for `offer`, released now.
    pub fn collect_deferred(&mut self, slot: Slot, offer: BlockId) -> Result<Vec<VoteRecord>> {
        let (take, keep): (Vec<_>, Vec<_>) = std::mem::take(&mut self.deferred).into_iter().partition(|d| d.slot == slot);
        self.deferred = keep;
        let now = self.tick;
        let mut out = Vec::new();
        for d in take {
            let target = match d.target {
                Target::Label(ref l) => self.label(l).unwrap_or(offer),
                _ => offer,
            };
            out.push(self.cast_vote(d.voter, slot, target, now)?);
        }
        Ok(out)
    }

    fn deliver(&mut self, before: Tick) {
        let (mut due, rest): (Vec<_>, Vec<_>) = std::mem::take(&mut self.pending).into_iter().partition(|p| p.release < before);
        self.pending = rest;
        due.sort_by_key(|p| (p.release, p.msg.order(), p.seq));
        loop {
            let mut progressed = false;
            let mut stuck = Vec::new();
            for p in due {
                let ok = match &p.msg {
                    Message::Block(b) => {
                        if self.view.contains(b.parent.expect("non-genesis")) {
                            self.view.insert_block(b.clone()).expect("engine checked block legality");
                            true
                        } else {
                            false
                        }
                    }
                    Message::Vote(v) => {
                        if self.view.contains(v.target) {
                            self.view.add_vote(*v).expect("engine checked vote legality");
                            true
                        } else {
                            false
                        }
                    }
                    Message::Evidence(e) => {
                        if !self.evidences.iter().any(|x| x.key() == e.key()) {
                            self.evidences.push(*e);
                        }
                        true
                    }
                };
                if ok {
                    progressed = true;
                } else {
                    stuck.push(p);
                }
            }
            due = stuck;
            if due.is_empty() || !progressed {
                break;
            }
        }
        self.pending.extend(due);
    }
}

/// Game-specific behaviour plugged into the run loop.
pub trait Script {
    /// Runs after delivery and before the phase actions of `tick`.
    fn on_tick(&mut self, _st: &mut EngineState, _tick: Tick) -> Result<()> {
        Ok(())
    }

    /// Runs after the phase actions of `tick`.
    fn after_phase(&mut self, _st: &mut EngineState, _tick: Tick) -> Result<()> {
        Ok(())
    }

    fn adversarial_propose(&mut self, _st: &mut EngineState, _slot: Slot, _leader: ValidatorId) -> Result<()> {
        Ok(())
    }

    fn adversarial_vote(&self, _st: &EngineState, _slot: Slot, _voter: ValidatorId) -> PlayerAction {
        PlayerAction::Abstain
    }

    /// Resolves `CompliantTip` and `AdversaryOffer`.
    fn resolve(&self, _st: &EngineState, _target: &Target, _slot: Slot, _role: Role) -> Option<BlockId> {
        None
    }

    /// Whether a vote follows the game rule; drives `Inclusion::CompliantOnly`.
    fn compliant_vote(&self, _st: &EngineState, _vote: &VoteRecord) -> bool {
        true
    }
}

/// Protocol-following script with no adversary.
pub struct NoAdversary;

impl Script for NoAdversary {}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub records: Vec<TraceRecord>,
    pub schedule: CommitteeSchedule,
    pub final_view: BlockTree,
    pub final_chain: Vec<BlockId>,
    pub settle_slot: Slot,
    pub payoff_tick: Tick,
    pub labels: BTreeMap<String, BlockId>,
    pub blocks: BTreeMap<BlockId, Block>,
    pub release_ticks: BTreeMap<BlockId, Tick>,
    pub tips: Vec<(Tick, Vec<BlockId>)>,
    pub ledger: PayoffLedger,
}

impl RunTrace {
    pub fn label(&self, name: &str) -> Option<BlockId> {
        self.labels.get(name).copied()
    }

    pub fn on_final_chain(&self, id: BlockId) -> bool {
        self.final_chain.contains(&id)
    }

    /// Blocks that dropped off the canonical chain between consecutive ticks,
    /// plus blocks that never made it onto the final chain.
    pub fn reorged_blocks(&self) -> Vec<BlockId> {
        let mut out: BTreeSet<BlockId> = BTreeSet::new();
        for pair in self.tips.windows(2) {
            out.extend(crate::chain::detect_reorg(&pair[0].1, &pair[1].1));
        }
        if let Some((_, last)) = self.tips.last() {
            out.extend(crate::chain::detect_reorg(last, &self.final_chain));
        }
        out.extend(self.blocks.keys().filter(|b| !self.final_chain.contains(b)));
        out.into_iter().collect()
    }

    /// (proposer, slot) pairs with two blocks, or (voter, slot) pairs with two
    /// targets, by non-adversarial validators.
    pub fn equivocations(&self) -> Vec<(ValidatorId, Slot)> {
        let mut blocks: BTreeMap<(ValidatorId, Slot), usize> = BTreeMap::new();
        for b in self.blocks.values() {
            if let Some(p) = b.proposer.filter(|p| !p.is_adversarial()) {
                *blocks.entry((p.id, b.slot)).or_default() += 1;
            }
        }
        let mut votes: BTreeMap<(ValidatorId, Slot), BTreeSet<BlockId>> = BTreeMap::new();
        for r in &self.records {
            if r.kind == EventKind::Vote {
                let voter = ValidatorId(r.payload["voter"].as_u64().unwrap_or_default() as u32);
                let slot = r.payload["slot"].as_i64().unwrap_or_default();
                let target = BlockId(r.payload["target"].as_u64().unwrap_or_default());
                if !self.schedule.validator(voter).is_some_and(|v| v.is_adversarial()) {
                    votes.entry((voter, slot)).or_default().insert(target);
                }
            }
        }
        let mut out: Vec<_> = blocks.into_iter().filter(|(_, n)| *n > 1).map(|(k, _)| k).collect();
        out.extend(votes.into_iter().filter(|(_, t)| t.len() > 1).map(|(k, _)| k));
        out
    }

    /// Line-delimited JSON: one record per event then a summary record.
    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&serde_json::to_string(r).expect("trace record serializes"));
            s.push('\n');
        }
        let summary = json!({
            "tick": self.payoff_tick,
            "kind": "summary",
            "payload": {
                "final_chain": self.final_chain,
                "labels": self.labels,
                "ledger": self.ledger.to_json(),
            }
        });
        s.push_str(&summary.to_string());
        s.push('\n');
        s
    }
}

fn action_for(st: &EngineState, profile: &StrategyProfile, v: ValidatorId, slot: Slot, role: Role) -> Option<PlayerAction> {
    let who = st.validator(v);
    match who.kind {
        ValidatorKind::Honest => None,
        ValidatorKind::Adversarial => profile.get(&PlayerKey { controller: Controller::Solo(v), slot, role }).cloned(),
        ValidatorKind::Rational => profile
            .get(&PlayerKey { controller: Controller::Solo(v), slot, role })
            .or_else(|| who.pool.and_then(|p| profile.get(&PlayerKey { controller: Controller::Pool(p), slot, role })))
            .cloned(),
    }
}

fn resolve(st: &EngineState, script: &dyn Script, target: &Target, slot: Slot, role: Role) -> Option<BlockId> {
    match target {
        Target::CanonicalTip => Some(st.tip()),
        Target::ParentOfTip => {
            let tip = st.tip();
            Some(st.view.get(tip).ok()?.parent.unwrap_or(tip))
        }
        Target::SlotBlock => st.label(&format!("B[{slot}]")).filter(|b| st.view.contains(*b)),
        Target::Label(l) => st.label(l),
        Target::CompliantTip | Target::AdversaryOffer => script.resolve(st, target, slot, role),
    }
}

fn do_propose(
    st: &mut EngineState,
    script: &dyn Script,
    leader: ValidatorId,
    slot: Slot,
    parent: &Target,
    empty: bool,
    include: Inclusion,
) -> Result<()> {
    let Some(parent) = resolve(st, script, parent, slot, Role::Leader) else {
        return Ok(());
    };
    let votes = match include {
        Inclusion::Nothing => Vec::new(),
        Inclusion::All => st.unincluded_votes(parent, slot),
        Inclusion::CompliantOnly => st
            .unincluded_votes(parent, slot)
            .into_iter()
            .filter(|v| v.slot == slot - 1 && v.target == parent && script.compliant_vote(st, v))
            .collect(),
    };
    let evidences = match (st.cfg.rewards.mechanism, include) {
        (Mechanism::DagVotes, Inclusion::All) => st.unincluded_evidences(parent),
        _ => Vec::new(),
    };
    let now = st.tick;
    st.propose(leader, slot, parent, empty, votes, evidences, now)?;
    Ok(())
}

fn do_vote(st: &mut EngineState, script: &dyn Script, voter: ValidatorId, slot: Slot, action: PlayerAction) -> Result<()> {
    match action {
        PlayerAction::Abstain => Ok(()),
        PlayerAction::Propose { .. } => Err(Error::InvalidAction(format!("{voter} cannot propose as attestor"))),
        PlayerAction::Vote { target, release: Release::Deferred } => {
            st.records.push(TraceRecord {
                tick: st.tick,
                kind: EventKind::Withhold,
                payload: json!({ "voter": voter, "slot": slot }),
            });
            st.deferred.push(DeferredVote { voter, slot, target });
            Ok(())
        }
        PlayerAction::Vote { target, release } => {
            let at = match release {
                Release::At(k) => k,
                _ => st.tick,
            };
            if let Some(t) = resolve(st, script, &target, slot, Role::Attestor) {
                st.cast_vote(voter, slot, t, at)?;
            }
            Ok(())
        }
    }
}

/// Runs the lock-step loop and settles payoffs at `cfg.payoff_tick`.
pub fn run(
    cfg: &EngineConfig,
    schedule: CommitteeSchedule,
    profile: &StrategyProfile,
    script: &mut dyn Script,
) -> Result<RunTrace> {
    let mut st = EngineState::new(cfg.clone(), schedule);
    for tick in cfg.start_tick()..=cfg.payoff_tick {
        st.tick = tick;
        st.deliver(tick);
        let chain = st.canonical_chain();
        st.records.push(TraceRecord { tick, kind: EventKind::Tip, payload: json!({ "tip": chain.last() }) });
        st.tips.push((tick, chain));
        script.on_tick(&mut st, tick)?;
        let slot = slot_of(tick);
        let in_range = slot >= cfg.first_slot && slot <= cfg.last_slot;
        let duty = st.schedule.duty(slot).cloned();
        if let (true, Some(duty)) = (in_range, duty) {
            match phase_of(tick) {
                Phase::Propose => {
                    let leader = duty.leader;
                    match action_for(&st, profile, leader, slot, Role::Leader) {
                        Some(PlayerAction::Propose { parent, empty, include }) => {
                            do_propose(&mut st, script, leader, slot, &parent, empty, include)?
                        }
                        Some(PlayerAction::Abstain) => {}
                        Some(other) => {
                            return Err(Error::InvalidAction(format!("leader {leader} given {}", other.label())))
                        }
                        None if st.validator(leader).is_adversarial() => {
                            script.adversarial_propose(&mut st, slot, leader)?
                        }
                        None => do_propose(&mut st, script, leader, slot, &Target::CanonicalTip, false, Inclusion::All)?,
                    }
                }
                Phase::Vote => {
                    for &v in &duty.attestors {
                        let action = match action_for(&st, profile, v, slot, Role::Attestor) {
                            Some(a) => a,
                            None if st.validator(v).is_adversarial() => script.adversarial_vote(&st, slot, v),
                            None => PlayerAction::honest_vote(),
                        };
                        do_vote(&mut st, script, v, slot, action)?;
                    }
                }
                Phase::Aggregate => {
                    if cfg.rewards.mechanism == Mechanism::DagVotes {
                        emit_evidences(&mut st, slot);
                    }
                }
            }
        }
        script.after_phase(&mut st, tick)?;
    }
    st.deliver(cfg.payoff_tick + 1);
    let settle_slot = slot_of(cfg.payoff_tick);
    st.tick = cfg.payoff_tick;
    let final_chain = st.canonical_chain();
    let mut trace = RunTrace {
        records: st.records,
        schedule: st.schedule,
        final_view: st.view,
        final_chain,
        settle_slot,
        payoff_tick: cfg.payoff_tick,
        labels: st.labels,
        blocks: st.all_blocks,
        release_ticks: st.release_ticks,
        tips: st.tips,
        ledger: PayoffLedger::default(),
    };
    trace.ledger = settle_payoffs(&trace, &cfg.rewards);
    Ok(trace)
}

/// Non-adversarial members of committee `slot + 1` sign every slot-`slot` vote
/// they have seen.
fn emit_evidences(st: &mut EngineState, slot: Slot) {
    let Some(next) = st.schedule.duty(slot + 1).cloned() else { return };
    let votes: Vec<VoteRecord> = st.view.votes().iter().filter(|v| v.slot == slot).copied().collect();
    let now = st.tick;
    for signer in next.attestors {
        if st.validator(signer).is_adversarial() {
            continue;
        }
        for v in &votes {
            st.emit_evidence(signer, *v, now);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward;

    fn request(seed: u64, n: usize, w: usize, epoch: usize) -> CommitteeRequest {
        CommitteeRequest {
            seed,
            n_validators: n,
            committee_size: w,
            epoch_length: epoch,
            first_slot: 0,
            adversarial_slots: BTreeSet::new(),
            mode: CommitteeMode::Disjoint,
        }
    }

    #[test]
    fn clock_phases() {
        assert_eq!((slot_of(7), phase_of(7)), (2, Phase::Vote));
        assert_eq!((slot_of(-1), phase_of(-1)), (-1, Phase::Aggregate));
        assert_eq!((propose_tick(-2), vote_tick(-2), aggregate_tick(-2)), (-6, -5, -4));
    }

    #[test]
    fn every_validator_attests_once_per_epoch() {
        let s = assign_committees(&request(0, 128, 4, 32)).unwrap();
        let mut seen = BTreeSet::new();
        for d in s.duties() {
            assert_eq!(d.attestors.len(), 4);
            assert!(d.attestors.contains(&d.leader));
            for a in &d.attestors {
                assert!(seen.insert(*a));
            }
        }
        assert_eq!(seen.len(), 128);
    }

    #[test]
    fn adversarial_leader_marked() {
        let mut req = request(3, 128, 4, 32);
        req.adversarial_slots.insert(5);
        let s = assign_committees(&req).unwrap();
        let leader = s.duty(5).unwrap().leader;
        assert!(s.validator(leader).unwrap().is_adversarial());
        assert!(!s.validator(s.duty(4).unwrap().leader).unwrap().is_adversarial());
    }

    #[test]
    fn fixed_mode_reuses_committee() {
        let mut req = request(1, 4, 4, 8);
        req.mode = CommitteeMode::Fixed;
        let s = assign_committees(&req).unwrap();
        let first: BTreeSet<_> = s.duty(0).unwrap().attestors.iter().copied().collect();
        for d in s.duties() {
            assert_eq!(d.attestors.iter().copied().collect::<BTreeSet<_>>(), first);
            assert!(d.attestors.contains(&d.leader));
        }
    }

    #[test]
    fn too_few_validators() {
        assert!(matches!(
            assign_committees(&request(0, 100, 4, 32)),
            Err(Error::InsufficientValidators { needed: 128, available: 100 })
        ));
    }

    #[test]
    fn honest_three_slot_run() {
        let schedule = assign_committees(&request(9, 16, 4, 4)).unwrap();
        let cfg = EngineConfig {
            genesis_slot: -1,
            first_slot: 0,
            last_slot: 3,
            payoff_tick: 9,
            committee_size: 4,
            boost: 2,
            tie_break: TieBreakPolicy::default(),
            rewards: RewardParams::unit(),
        };
        let trace = run(&cfg, schedule, &StrategyProfile::new(), &mut NoAdversary).unwrap();
        // genesis plus blocks of slots 0..=3
        assert_eq!(trace.final_chain.len(), 5);
        for id in &trace.final_chain[1..] {
            assert!(!trace.blocks[id].is_empty);
        }
        // slots 0..=2 votes are included on time by the next block
        for slot in 0..3 {
            for v in &trace.schedule.duty(slot).unwrap().attestors {
                assert_eq!(trace.ledger.attestation(*v, slot), reward(1));
            }
            let next_leader = trace.schedule.duty(slot + 1).unwrap().leader;
            assert_eq!(trace.ledger.inclusion(next_leader, slot + 1), reward(4));
        }
        assert!(trace.equivocations().is_empty());
    }
}

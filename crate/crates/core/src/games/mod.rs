//! Attack games built on the run loop.

pub mod dag;
pub mod extended;
pub mod no_boost;
pub mod pools;
pub mod selfish;
pub mod simple;
pub mod strong;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::chain::{BlockId, PoolId, Slot, TieBreakPolicy, ValidatorId, ValidatorKind};
use crate::error::{Error, Result};
use crate::rewards::{Mechanism, PayoffLedger, ProposerReward, RewardParams, VoteWeights};
use crate::sim::{assign_committees, CommitteeMode, CommitteeRequest, CommitteeSchedule, RunTrace};
use crate::strategy::{Controller, PlayerKey};
use crate::Reward;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameKind {
    Simple,
    StrongSimple,
    SimpleNoBoost,
    Extended,
    SelfishMining,
    DagSecurity,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    /// Pool members in every committee.
    pub members_per_slot: u64,
    /// Per-slot overrides of `members_per_slot`.
    #[serde(default)]
    pub per_slot: BTreeMap<Slot, u64>,
}

impl PoolConfig {
    pub fn uniform(m: u64) -> Self {
        Self { members_per_slot: m, per_slot: BTreeMap::new() }
    }

    pub fn members_at(&self, slot: Slot) -> u64 {
        self.per_slot.get(&slot).copied().unwrap_or(self.members_per_slot)
    }
}

pub const POOL: Controller = Controller::Pool(PoolId(0));

fn default_committee() -> u64 {
    4
}
fn default_boost() -> u64 {
    2
}
fn default_horizon() -> i64 {
    1
}
fn one() -> Reward {
    Reward::from_integer(1)
}
fn default_epoch() -> u32 {
    32
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameConfig {
    pub kind: GameKind,
    /// W
    #[serde(default = "default_committee")]
    pub committee_size: u64,
    /// W_p
    #[serde(default = "default_boost")]
    pub boost: u64,
    /// p
    #[serde(default = "default_horizon")]
    pub horizon: i64,
    #[serde(default)]
    pub adversarial_slots: BTreeSet<Slot>,
    #[serde(default = "one", with = "crate::ratio_serde")]
    pub r: Reward,
    /// R
    #[serde(default = "one", with = "crate::ratio_serde")]
    pub inclusion_reward: Reward,
    #[serde(default)]
    pub pool: Option<PoolConfig>,
    /// W_h
    #[serde(default)]
    pub honest_per_slot: u64,
    #[serde(default = "default_epoch")]
    pub epoch_length: u32,
    #[serde(default = "yes")]
    pub credibility_assumed: bool,
    #[serde(default)]
    pub tie_break: TieBreakPolicy,
    #[serde(default)]
    pub mechanism: Mechanism,
    /// Lets the selfish-mining game run with fewer adversarial slots.
    #[serde(default)]
    pub allow_minority_fork: bool,
    /// DAG scenario: the adversary builds on the tip instead of off it.
    #[serde(default)]
    pub adversary_on_tip: bool,
    #[serde(default)]
    pub seed: u64,
}

impl GameConfig {
    pub fn new(kind: GameKind, committee_size: u64, boost: u64) -> Self {
        Self {
            kind,
            committee_size,
            boost,
            horizon: 1,
            adversarial_slots: BTreeSet::new(),
            r: one(),
            inclusion_reward: one(),
            pool: None,
            honest_per_slot: 0,
            epoch_length: 32,
            credibility_assumed: true,
            tie_break: TieBreakPolicy::AdversaryFavoring,
            mechanism: Mechanism::Ethereum,
            allow_minority_fork: false,
            adversary_on_tip: false,
            seed: 0,
        }
    }

    pub fn with_horizon(mut self, p: i64) -> Self {
        self.horizon = p;
        self
    }

    pub fn with_pool(mut self, m: u64) -> Self {
        self.pool = Some(PoolConfig::uniform(m));
        self
    }

    pub fn with_adversarial_slots(mut self, slots: impl IntoIterator<Item = Slot>) -> Self {
        self.adversarial_slots = slots.into_iter().collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.committee_size;
        if w == 0 {
            return Err(Error::Validation("committee_size must be positive".into()));
        }
        if self.boost > w {
            return Err(Error::Validation(format!("boost {} exceeds committee size {w}", self.boost)));
        }
        if self.honest_per_slot > w {
            return Err(Error::Validation(format!("honest_per_slot {} exceeds committee size {w}", self.honest_per_slot)));
        }
        if let Some(pool) = &self.pool {
            let worst = pool.per_slot.values().copied().chain([pool.members_per_slot]).max().unwrap_or(0);
            if worst >= w {
                return Err(Error::Validation(format!("pool of {worst} members is not smaller than {w}")));
            }
            if worst + self.honest_per_slot + 1 > w {
                return Err(Error::Validation("pool, honest attestors and leader do not fit in a committee".into()));
            }
        }
        if self.epoch_length == 0 {
            return Err(Error::Validation("epoch_length must be positive".into()));
        }
        if self.r < Reward::zero() || self.inclusion_reward < Reward::zero() {
            return Err(Error::Validation("rewards must be non-negative".into()));
        }
        Ok(())
    }

    pub(crate) fn reward_params(&self, proposer_reward: ProposerReward) -> RewardParams {
        RewardParams {
            r: self.r,
            inclusion: self.inclusion_reward,
            mechanism: self.mechanism,
            proposer_reward,
            weights: VoteWeights::default(),
        }
    }

    /// Committees for `n_slots` slots starting at `first_slot`, with leaders at
    /// position 0, then pool members, then honest attestors.
    pub(crate) fn schedule(&self, first_slot: Slot, n_slots: usize, adversarial: &BTreeSet<Slot>) -> Result<CommitteeSchedule> {
        let w = self.committee_size as usize;
        let epoch = n_slots.max(self.epoch_length as usize);
        let mut s = assign_committees(&CommitteeRequest {
            seed: self.seed,
            n_validators: w * epoch,
            committee_size: w,
            epoch_length: epoch,
            first_slot,
            adversarial_slots: adversarial.clone(),
            mode: CommitteeMode::Disjoint,
        })?;
        let duties: Vec<_> = s.duties().cloned().collect();
        for d in duties {
            let m = self.pool.as_ref().map_or(0, |p| p.members_at(d.slot)) as usize;
            let h = self.honest_per_slot as usize;
            for (pos, v) in d.attestors.iter().enumerate() {
                let val = s.validator_mut(*v).expect("scheduled");
                if pos == 0 {
                    continue;
                }
                if pos <= m {
                    val.pool = Some(PoolId(0));
                } else if pos <= m + h {
                    val.kind = ValidatorKind::Honest;
                }
            }
        }
        Ok(s)
    }
}

/// Solo rational attestors of `slot`, leader included when rational.
pub(crate) fn solo_attestors(s: &CommitteeSchedule, slot: Slot) -> Vec<ValidatorId> {
    s.duty(slot)
        .map(|d| {
            d.attestors
                .iter()
                .copied()
                .filter(|v| s.validator(*v).is_some_and(|x| x.kind == ValidatorKind::Rational && x.pool.is_none()))
                .collect()
        })
        .unwrap_or_default()
}

pub(crate) fn pool_members(s: &CommitteeSchedule, slot: Slot) -> Vec<ValidatorId> {
    s.duty(slot)
        .map(|d| {
            d.attestors
                .iter()
                .copied()
                .filter(|v| s.validator(*v).is_some_and(|x| x.pool.is_some() && x.kind == ValidatorKind::Rational))
                .collect()
        })
        .unwrap_or_default()
}

/// Attestor decisions of one slot: each solo attestor plus the pool if present.
pub(crate) fn attestor_players(s: &CommitteeSchedule, slot: Slot) -> Vec<PlayerKey> {
    let mut out: Vec<PlayerKey> =
        solo_attestors(s, slot).into_iter().map(|v| PlayerKey::attestor(Controller::Solo(v), slot)).collect();
    if !pool_members(s, slot).is_empty() {
        out.push(PlayerKey::attestor(POOL, slot));
    }
    out
}

/// The last solo non-leader attestor of `slot`; the table subject.
pub(crate) fn designated(s: &CommitteeSchedule, slot: Slot) -> Result<ValidatorId> {
    let leader = s.duty(slot).map(|d| d.leader);
    solo_attestors(s, slot)
        .into_iter()
        .rev()
        .find(|v| Some(*v) != leader)
        .ok_or_else(|| Error::Validation(format!("slot {slot} has no solo attestor to observe")))
}

#[derive(Clone, Debug)]
pub struct GameOutcome {
    pub success: bool,
    pub final_chain: Vec<BlockId>,
    pub reorged: Vec<BlockId>,
    pub ledger: PayoffLedger,
    pub trace: RunTrace,
}

impl GameOutcome {
    pub(crate) fn from_trace(trace: RunTrace, success: bool) -> Self {
        Self {
            success,
            final_chain: trace.final_chain.clone(),
            reorged: trace.reorged_blocks(),
            ledger: trace.ledger.clone(),
            trace,
        }
    }

    /// Total payoff of a solo validator or of all members of a pool.
    pub fn payoff(&self, c: Controller) -> Reward {
        match c {
            Controller::Solo(v) => self.ledger.total(v),
            Controller::Pool(p) => self
                .trace
                .schedule
                .validators()
                .filter(|v| v.pool == Some(p))
                .map(|v| self.ledger.total(v.id))
                .sum(),
        }
    }

    /// Attestation rewards of a pool for votes of `slot`.
    pub fn pool_attestation(&self, p: PoolId, slot: Slot) -> Reward {
        self.trace
            .schedule
            .validators()
            .filter(|v| v.pool == Some(p))
            .map(|v| self.ledger.attestation(v.id, slot))
            .sum()
    }
}

/// Conditioning row of a payoff table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Condition {
    Succeed,
    Fail,
}

/// Whether a player follows the game rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Choice {
    C,
    NC,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::Succeed => "Succeed",
            Condition::Fail => "Fail",
        })
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Choice::C => "C",
            Choice::NC => "NC",
        })
    }
}

/// Labelled table of payoffs; a cell is `None` when its conditioning cannot
/// be realised under the configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PayoffMatrix {
    pub title: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub cells: Vec<Vec<Option<String>>>,
    #[serde(skip)]
    pub values: Vec<Vec<Option<Reward>>>,
}

impl PayoffMatrix {
    pub fn new(title: impl Into<String>, rows: Vec<String>, cols: Vec<String>) -> Self {
        let values = vec![vec![None; cols.len()]; rows.len()];
        let cells = vec![vec![None; cols.len()]; rows.len()];
        Self { title: title.into(), rows, cols, cells, values }
    }

    pub fn set(&mut self, row: usize, col: usize, v: Option<Reward>) {
        self.values[row][col] = v;
        self.cells[row][col] = v.map(|x| x.to_string());
    }

    pub fn get(&self, row: &str, col: &str) -> Option<Reward> {
        let r = self.rows.iter().position(|x| x == row)?;
        let c = self.cols.iter().position(|x| x == col)?;
        self.values[r][c]
    }

    pub fn render(&self) -> String {
        let mut out = format!("{}\n", self.title);
        let width = self.rows.iter().map(String::len).max().unwrap_or(0).max(4);
        out.push_str(&format!("{:width$}", ""));
        for c in &self.cols {
            out.push_str(&format!(" {c:>8}"));
        }
        out.push('\n');
        for (i, r) in self.rows.iter().enumerate() {
            out.push_str(&format!("{r:width$}"));
            for cell in &self.cells[i] {
                out.push_str(&format!(" {:>8}", cell.as_deref().unwrap_or("-")));
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn slot_label(slot: Slot) -> String {
    format!("B[{slot}]")
}

pub(crate) fn engine_config(
    cfg: &GameConfig,
    genesis_slot: Slot,
    last_slot: Slot,
    payoff_tick: crate::chain::Tick,
    proposer_reward: ProposerReward,
) -> crate::sim::EngineConfig {
    crate::sim::EngineConfig {
        genesis_slot,
        first_slot: genesis_slot + 1,
        last_slot,
        payoff_tick,
        committee_size: cfg.committee_size,
        boost: cfg.boost,
        tie_break: cfg.tie_break,
        rewards: cfg.reward_params(proposer_reward),
    }
}

/// Same action for every listed player.
pub(crate) fn uniform_profile(players: &[PlayerKey], action: &crate::strategy::PlayerAction) -> crate::strategy::StrategyProfile {
    players.iter().map(|p| (*p, action.clone())).collect()
}

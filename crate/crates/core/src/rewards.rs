//! Head-vote correctness and timeliness, payoff settlement, and the Altair
//! inclusion-reward calculator.

use std::collections::{BTreeMap, BTreeSet};

use num_integer::Roots;
use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::chain::{Block, BlockId, BlockTree, Slot, ValidatorId, VoteRecord};
use crate::error::{ChainError, Error, Result};
use crate::sim::RunTrace;
use crate::Reward;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    #[default]
    Ethereum,
    DagVotes,
}

/// How leaders are paid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProposerReward {
    /// R for every correct and timely vote the block includes.
    #[default]
    PerIncludedVote,
    /// R for every block that ends up canonical.
    PerCanonicalBlock,
}

/// Altair weights, all over 64.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteWeights {
    pub source: i64,
    pub target: i64,
    pub head: i64,
    pub proposer: i64,
    pub denominator: i64,
}

impl Default for VoteWeights {
    fn default() -> Self {
        Self { source: 14, target: 26, head: 14, proposer: 8, denominator: 64 }
    }
}

impl VoteWeights {
    pub fn sum(&self) -> i64 {
        self.source + self.target + self.head
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardParams {
    #[serde(with = "crate::ratio_serde")]
    pub r: Reward,
    #[serde(with = "crate::ratio_serde")]
    pub inclusion: Reward,
    pub mechanism: Mechanism,
    pub proposer_reward: ProposerReward,
    pub weights: VoteWeights,
}

impl RewardParams {
    /// r = R = 1 under the Ethereum rule.
    pub fn unit() -> Self {
        Self {
            r: Reward::from_integer(1),
            inclusion: Reward::from_integer(1),
            mechanism: Mechanism::Ethereum,
            proposer_reward: ProposerReward::PerIncludedVote,
            weights: VoteWeights::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Attestation,
    Inclusion,
    Block,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PayoffLedger {
    entries: BTreeMap<(ValidatorId, Slot, Component), Reward>,
}

impl PayoffLedger {
    pub fn credit(&mut self, v: ValidatorId, slot: Slot, c: Component, amount: Reward) {
        *self.entries.entry((v, slot, c)).or_insert_with(Reward::zero) += amount;
    }

    pub fn get(&self, v: ValidatorId, slot: Slot, c: Component) -> Reward {
        self.entries.get(&(v, slot, c)).copied().unwrap_or_else(Reward::zero)
    }

    pub fn attestation(&self, v: ValidatorId, slot: Slot) -> Reward {
        self.get(v, slot, Component::Attestation)
    }

    pub fn inclusion(&self, v: ValidatorId, slot: Slot) -> Reward {
        self.get(v, slot, Component::Inclusion)
    }

    pub fn total(&self, v: ValidatorId) -> Reward {
        self.entries.iter().filter(|((w, _, _), _)| *w == v).map(|(_, a)| *a).sum()
    }

    pub fn total_component(&self, c: Component) -> Reward {
        self.entries.iter().filter(|((_, _, k), _)| *k == c).map(|(_, a)| *a).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (ValidatorId, Slot, Component, Reward)> + '_ {
        self.entries.iter().map(|(&(v, s, c), &a)| (v, s, c, a))
    }

    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<_> = self
            .entries()
            .map(|(v, s, c, a)| json!({ "validator": v, "slot": s, "component": c, "amount": a.to_string() }))
            .collect();
        serde_json::Value::Array(rows)
    }
}

/// The target must be the last block with slot at most the vote's slot on `chain`.
pub fn head_vote_correct(vote: &VoteRecord, chain: &[BlockId], tree: &BlockTree) -> std::result::Result<bool, ChainError> {
    tree.get(vote.target)?;
    Ok(tree.last_at_or_before(chain, vote.slot) == Some(vote.target))
}

pub fn head_vote_timely_ethereum(vote: &VoteRecord, including: &Block) -> bool {
    including.slot == vote.slot + 1
}

/// Unique eligible signers of evidences for `vote` in chain blocks after its target.
pub fn evidence_count(vote: &VoteRecord, chain: &[BlockId], tree: &BlockTree, eligible: &dyn Fn(ValidatorId) -> bool) -> usize {
    let Some(pos) = chain.iter().position(|b| *b == vote.target) else { return 0 };
    let mut signers = BTreeSet::new();
    for id in &chain[pos + 1..] {
        let Some(b) = tree.block(*id) else { continue };
        for e in &b.included_evidences {
            if e.vote.slot == vote.slot && e.vote.voter == vote.voter && e.vote.target == vote.target && eligible(e.signer) {
                signers.insert(e.signer);
            }
        }
    }
    signers.len()
}

/// Timely if included by the next slot's block on `chain`, or backed by more
/// than half a committee of evidences after the target.
pub fn head_vote_timely_dag(
    vote: &VoteRecord,
    chain: &[BlockId],
    tree: &BlockTree,
    committee_size: u64,
    eligible: &dyn Fn(ValidatorId) -> bool,
) -> bool {
    let next_slot_inclusion = chain.iter().filter_map(|id| tree.block(*id)).any(|b| {
        b.slot == vote.slot + 1 && b.included_votes.iter().any(|v| v.voter == vote.voter && v.slot == vote.slot && v.target == vote.target)
    });
    next_slot_inclusion || 2 * evidence_count(vote, chain, tree, eligible) as u64 > committee_size
}

/// Credits every correct and timely included head vote on the final chain.
pub fn settle_payoffs(trace: &RunTrace, params: &RewardParams) -> PayoffLedger {
    let tree = &trace.final_view;
    let chain = &trace.final_chain;
    let w = trace
        .schedule
        .duties()
        .next()
        .map(|d| d.attestors.len() as u64)
        .unwrap_or_default();
    let mut ledger = PayoffLedger::default();
    let mut credited: BTreeSet<(ValidatorId, Slot)> = BTreeSet::new();
    for id in chain {
        let b = tree.get(*id).expect("chain block in view");
        let Some(proposer) = b.proposer else { continue };
        if params.proposer_reward == ProposerReward::PerCanonicalBlock {
            ledger.credit(proposer.id, b.slot, Component::Block, params.inclusion);
        }
        for v in &b.included_votes {
            if credited.contains(&(v.voter, v.slot)) {
                continue;
            }
            if !head_vote_correct(v, chain, tree).unwrap_or(false) {
                continue;
            }
            let timely = match params.mechanism {
                Mechanism::Ethereum => head_vote_timely_ethereum(v, b),
                Mechanism::DagVotes => {
                    let eligible = |s: ValidatorId| trace.schedule.is_member(v.slot + 1, s);
                    head_vote_timely_dag(v, chain, tree, w, &eligible)
                }
            };
            if !timely {
                continue;
            }
            credited.insert((v.voter, v.slot));
            ledger.credit(v.voter, v.slot, Component::Attestation, params.r);
            if params.proposer_reward == ProposerReward::PerIncludedVote {
                ledger.credit(proposer.id, b.slot, Component::Inclusion, params.inclusion);
            }
        }
    }
    ledger
}

pub type Gwei = Ratio<i128>;

pub const GWEI_PER_ETH: i128 = 1_000_000_000;

pub fn gwei_to_eth(g: Gwei) -> Gwei {
    g / GWEI_PER_ETH
}

pub fn to_f64(x: Gwei) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// Block proposer's attestation-inclusion reward for one slot committee.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InclusionRewards {
    pub all_three_votes: Gwei,
    pub source_target_only: Gwei,
    pub head_only: Gwei,
    /// Head rewards earned by the committee's attestors themselves.
    pub committee_head_total: Gwei,
}

pub fn altair_block_inclusion_reward(n_validators: u64, stake_per_validator_gwei: u64, weights: &VoteWeights) -> Result<InclusionRewards> {
    let total = n_validators as u128 * stake_per_validator_gwei as u128;
    if total == 0 {
        return Err(Error::ZeroStake);
    }
    const INCREMENT: i128 = 1_000_000_000;
    let per_increment = Gwei::from_integer(64 * INCREMENT) / Gwei::from_integer(total.sqrt() as i128);
    let increments = stake_per_validator_gwei as i128 / INCREMENT;
    let base = per_increment * increments;
    let committee = Gwei::new(n_validators as i128, 32);
    let den = weights.denominator as i128;
    let share = Gwei::new(weights.proposer as i128, (weights.denominator - weights.proposer) as i128);
    let part = |w: i64| committee * base * Gwei::new(w as i128, den) * share;
    Ok(InclusionRewards {
        all_three_votes: part(weights.sum()),
        source_target_only: part(weights.source + weights.target),
        head_only: part(weights.head),
        committee_head_total: committee * base * Gwei::new(weights.head as i128, den),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttackGain {
    pub fail_eth: Gwei,
    pub success_eth: Gwei,
    pub delta_eth: Gwei,
    pub delta_pct: Gwei,
    pub pool_loss_eth: Gwei,
    pub pool_net_eth: Gwei,
}

/// A successful attack lets B_A include the slot-t votes in full plus the
/// source and target parts of the excluded slot; a failed one only the former.
pub fn attack_gain_summary(inc: &InclusionRewards, mev_fail_eth: Gwei, mev_success_eth: Gwei, pool_share: Gwei) -> AttackGain {
    let fail_eth = gwei_to_eth(inc.all_three_votes) + mev_fail_eth;
    let success_eth = gwei_to_eth(inc.all_three_votes + inc.source_target_only) + mev_success_eth;
    let delta_eth = success_eth - fail_eth;
    let pool_loss_eth = pool_share * gwei_to_eth(inc.committee_head_total);
    AttackGain {
        fail_eth,
        success_eth,
        delta_eth,
        delta_pct: delta_eth / fail_eth * 100,
        pool_loss_eth,
        pool_net_eth: delta_eth - pool_loss_eth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{EvidenceRecord, Validator, ValidatorKind};

    fn vote(slot: Slot, voter: u32, target: BlockId) -> VoteRecord {
        VoteRecord { slot, voter: ValidatorId(voter), target, broadcast_tick: 3 * slot + 1 }
    }

    fn blk(id: u64, slot: Slot, parent: u64) -> Block {
        Block::child(BlockId(id), slot, BlockId(parent), Validator::new(id as u32 + 1000, ValidatorKind::Rational))
    }

    #[test]
    fn ethereum_timeliness() {
        let v = vote(5, 1, BlockId(0));
        assert!(head_vote_timely_ethereum(&v, &blk(1, 6, 0)));
        assert!(!head_vote_timely_ethereum(&v, &blk(1, 7, 0)));
        assert!(!head_vote_timely_ethereum(&v, &blk(1, 5, 0)));
    }

    #[test]
    fn correctness_against_chain() {
        let mut t = BlockTree::new(0);
        t.insert_block(blk(1, 1, 0)).unwrap();
        t.insert_block(blk(2, 2, 1)).unwrap();
        t.insert_block(blk(3, 3, 1)).unwrap();
        let attacked = [BlockId(0), BlockId(1), BlockId(3)];
        let honest = [BlockId(0), BlockId(1), BlockId(2)];
        // slot-2 vote for the slot-1 block
        let compliant = vote(2, 9, BlockId(1));
        assert!(head_vote_correct(&compliant, &attacked, &t).unwrap());
        assert!(!head_vote_correct(&compliant, &honest, &t).unwrap());
        assert!(head_vote_correct(&vote(2, 9, BlockId(2)), &honest, &t).unwrap());
        assert!(head_vote_correct(&vote(2, 9, BlockId(77)), &honest, &t).is_err());
    }

    fn dag_tree(signers: &[u32]) -> (BlockTree, Vec<BlockId>, VoteRecord) {
        let mut t = BlockTree::new(0);
        t.insert_block(blk(1, 1, 0)).unwrap();
        let v = vote(1, 50, BlockId(1));
        let mut b = blk(2, 3, 1);
        b.included_votes.push(v);
        b.included_evidences = signers
            .iter()
            .map(|&s| EvidenceRecord { signer: ValidatorId(s), vote: v, created_tick: 5 })
            .collect();
        t.insert_block(b).unwrap();
        (t, vec![BlockId(0), BlockId(1), BlockId(2)], v)
    }

    #[test]
    fn dag_threshold_is_strict() {
        let any = |_: ValidatorId| true;
        let (t, c, v) = dag_tree(&[1, 2, 3, 4, 5, 6]);
        assert!(head_vote_timely_dag(&v, &c, &t, 10, &any));
        let (t, c, v) = dag_tree(&[1, 2, 3, 4, 5]);
        assert!(!head_vote_timely_dag(&v, &c, &t, 10, &any));
    }

    #[test]
    fn dag_counts_unique_signers() {
        let any = |_: ValidatorId| true;
        // seven evidences, three from one signer: an independent count by set
        let signers = [1, 1, 1, 2, 3, 4, 5];
        let unique: BTreeSet<u32> = signers.iter().copied().collect();
        assert_eq!(unique.len(), 5);
        let (t, c, v) = dag_tree(&signers);
        assert_eq!(evidence_count(&v, &c, &t, &any), 5);
        assert!(!head_vote_timely_dag(&v, &c, &t, 10, &any));
    }

    #[test]
    fn mainnet_quantities() {
        let inc = altair_block_inclusion_reward(1_073_375, 32_000_000_000, &VoteWeights::default()).unwrap();
        let all = to_f64(gwei_to_eth(inc.all_three_votes));
        let head = to_f64(gwei_to_eth(inc.head_only));
        let both = to_f64(gwei_to_eth(inc.all_three_votes + inc.source_target_only));
        assert!((all / 0.0446 - 1.0).abs() < 0.01, "{all}");
        assert!((head / 0.0115 - 1.0).abs() < 0.02, "{head}");
        assert!((both / 0.0777 - 1.0).abs() < 0.01, "{both}");
        assert_eq!(inc.head_only / inc.all_three_votes, Gwei::new(14, 54));
        assert_eq!((inc.all_three_votes + inc.source_target_only) / inc.all_three_votes, Gwei::new(94, 54));
    }

    #[test]
    fn zero_stake() {
        assert!(matches!(altair_block_inclusion_reward(0, 32, &VoteWeights::default()), Err(Error::ZeroStake)));
    }

    #[test]
    fn mev_free_delta_is_inclusion_difference() {
        let inc = altair_block_inclusion_reward(1_000_000, 32_000_000_000, &VoteWeights::default()).unwrap();
        let g = attack_gain_summary(&inc, Gwei::zero(), Gwei::zero(), Gwei::zero());
        assert_eq!(g.delta_eth, gwei_to_eth(inc.source_target_only));
        assert_eq!(g.pool_net_eth, g.delta_eth);
    }
}

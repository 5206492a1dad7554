//! Block tree, LMD GHOST fork choice with proposer boost, reorg detection.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ChainError;

pub type Slot = i64;
pub type Tick = i64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockId(pub u64);

impl fmt::Display for BlockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValidatorId(pub u32);

impl fmt::Display for ValidatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoolId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidatorKind {
    Honest,
    Rational,
    Adversarial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Validator {
    pub id: ValidatorId,
    pub kind: ValidatorKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pool: Option<PoolId>,
}

impl Validator {
    pub fn new(id: u32, kind: ValidatorKind) -> Self {
        Self { id: ValidatorId(id), kind, pool: None }
    }

    pub fn is_adversarial(&self) -> bool {
        self.kind == ValidatorKind::Adversarial
    }
}

/// A head vote.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VoteRecord {
    pub slot: Slot,
    pub voter: ValidatorId,
    pub target: BlockId,
    pub broadcast_tick: Tick,
}

/// A next-slot attestor's signature over an earlier vote.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EvidenceRecord {
    pub signer: ValidatorId,
    pub vote: VoteRecord,
    pub created_tick: Tick,
}

impl EvidenceRecord {
    /// Duplicate evidences collapse on this key.
    pub fn key(&self) -> (ValidatorId, Slot, ValidatorId, BlockId) {
        (self.signer, self.vote.slot, self.vote.voter, self.vote.target)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub id: BlockId,
    pub slot: Slot,
    pub parent: Option<BlockId>,
    pub proposer: Option<Validator>,
    pub is_empty: bool,
    pub included_votes: Vec<VoteRecord>,
    pub included_evidences: Vec<EvidenceRecord>,
}

impl Block {
    pub fn genesis(id: BlockId, slot: Slot) -> Self {
        Self {
            id,
            slot,
            parent: None,
            proposer: None,
            is_empty: true,
            included_votes: Vec::new(),
            included_evidences: Vec::new(),
        }
    }

    pub fn child(id: BlockId, slot: Slot, parent: BlockId, proposer: Validator) -> Self {
        Self {
            id,
            slot,
            parent: Some(parent),
            proposer: Some(proposer),
            is_empty: false,
            included_votes: Vec::new(),
            included_evidences: Vec::new(),
        }
    }

    pub fn is_adversarial(&self) -> bool {
        self.proposer.is_some_and(|p| p.is_adversarial())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreakPolicy {
    /// Prefer the child whose subtree holds the most recent adversarial block,
    /// else the lowest id.
    #[default]
    AdversaryFavoring,
    /// Lowest id.
    Lexicographic,
}

/// Fork-choice query parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForkChoice {
    pub current_slot: Slot,
    pub boosted: Option<BlockId>,
    pub boost: u64,
    pub tie_break: TieBreakPolicy,
}

impl ForkChoice {
    pub fn unboosted(current_slot: Slot, tie_break: TieBreakPolicy) -> Self {
        Self { current_slot, boosted: None, boost: 0, tie_break }
    }
}

#[derive(Clone, Debug)]
pub struct BlockTree {
    blocks: BTreeMap<BlockId, Block>,
    children: BTreeMap<BlockId, Vec<BlockId>>,
    votes: Vec<VoteRecord>,
    genesis: BlockId,
}

impl BlockTree {
    /// Tree holding only a genesis block with id 0.
    pub fn new(genesis_slot: Slot) -> Self {
        Self::from_genesis(Block::genesis(BlockId(0), genesis_slot))
    }

    pub fn from_genesis(genesis: Block) -> Self {
        let id = genesis.id;
        let mut blocks = BTreeMap::new();
        blocks.insert(id, genesis);
        let mut children = BTreeMap::new();
        children.insert(id, Vec::new());
        Self { blocks, children, votes: Vec::new(), genesis: id }
    }

    pub fn genesis(&self) -> BlockId {
        self.genesis
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn contains(&self, id: BlockId) -> bool {
        self.blocks.contains_key(&id)
    }

    pub fn block(&self, id: BlockId) -> Option<&Block> {
        self.blocks.get(&id)
    }

    pub fn get(&self, id: BlockId) -> Result<&Block, ChainError> {
        self.blocks.get(&id).ok_or(ChainError::UnknownBlock(id))
    }

    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.blocks.values()
    }

    pub fn children(&self, id: BlockId) -> &[BlockId] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn votes(&self) -> &[VoteRecord] {
        &self.votes
    }

    pub fn next_free_id(&self) -> BlockId {
        BlockId(self.blocks.keys().next_back().map_or(0, |b| b.0 + 1))
    }

    pub fn insert_block(&mut self, block: Block) -> Result<BlockId, ChainError> {
        if self.blocks.contains_key(&block.id) {
            return Err(ChainError::DuplicateId(block.id));
        }
        let parent_id = block.parent.ok_or(ChainError::UnknownParent(block.id))?;
        let parent = self.blocks.get(&parent_id).ok_or(ChainError::UnknownParent(parent_id))?;
        if block.slot <= parent.slot {
            return Err(ChainError::SlotNotAfterParent { slot: block.slot, parent_slot: parent.slot });
        }
        if let Some(p) = block.proposer.filter(|p| !p.is_adversarial()) {
            let twin = self
                .blocks
                .values()
                .any(|b| b.slot == block.slot && b.proposer.map(|q| q.id) == Some(p.id));
            if twin {
                return Err(ChainError::EquivocationRejected { slot: block.slot, proposer: p.id });
            }
        }
        let id = block.id;
        self.children.entry(parent_id).or_default().push(id);
        self.children.entry(id).or_default();
        self.blocks.insert(id, block);
        Ok(id)
    }

    pub fn add_vote(&mut self, vote: VoteRecord) -> Result<(), ChainError> {
        let target = self.get(vote.target)?;
        if target.slot > vote.slot {
            return Err(ChainError::VoteForFutureBlock {
                vote_slot: vote.slot,
                target: vote.target,
                target_slot: target.slot,
            });
        }
        self.votes.push(vote);
        Ok(())
    }

    /// Latest vote per voter. Among same-slot votes the first one seen wins.
    pub fn latest_votes(&self) -> BTreeMap<ValidatorId, VoteRecord> {
        let mut latest: BTreeMap<ValidatorId, VoteRecord> = BTreeMap::new();
        for v in &self.votes {
            match latest.get(&v.voter) {
                Some(old) if old.slot >= v.slot => {}
                _ => {
                    latest.insert(v.voter, *v);
                }
            }
        }
        latest
    }

    /// Blocks ordered so that every child comes before its parent.
    fn bottom_up(&self) -> Vec<BlockId> {
        let mut order: Vec<&Block> = self.blocks.values().collect();
        order.sort_by(|a, b| b.slot.cmp(&a.slot).then(b.id.cmp(&a.id)));
        order.into_iter().map(|b| b.id).collect()
    }

    /// Vote-only subtree weight of every block.
    pub fn subtree_weights(&self) -> BTreeMap<BlockId, u64> {
        let mut w: BTreeMap<BlockId, u64> = self.blocks.keys().map(|&id| (id, 0)).collect();
        for v in self.latest_votes().values() {
            *w.get_mut(&v.target).expect("vote target in tree") += 1;
        }
        for id in self.bottom_up() {
            if let Some(parent) = self.blocks[&id].parent {
                let own = w[&id];
                *w.get_mut(&parent).expect("parent in tree") += own;
            }
        }
        w
    }

    pub fn subtree_weight(
        &self,
        root: BlockId,
        current_slot: Slot,
        boosted: Option<BlockId>,
        boost: u64,
    ) -> Result<u64, ChainError> {
        self.get(root)?;
        let mut w = self.subtree_weights()[&root];
        if let Some(b) = boosted {
            if self.get(b)?.slot == current_slot && self.is_ancestor_or_self(root, b) {
                w += boost;
            }
        }
        Ok(w)
    }

    /// Path from genesis to `id`, inclusive.
    pub fn chain_to(&self, id: BlockId) -> Vec<BlockId> {
        let mut path = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            path.push(c);
            cur = self.blocks.get(&c).and_then(|b| b.parent);
        }
        path.reverse();
        path
    }

    pub fn is_ancestor_or_self(&self, ancestor: BlockId, id: BlockId) -> bool {
        let mut cur = Some(id);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.blocks.get(&c).and_then(|b| b.parent);
        }
        false
    }

    /// `root` and everything below it.
    pub fn subtree(&self, root: BlockId) -> Vec<BlockId> {
        let mut out = Vec::new();
        let mut stack = vec![root];
        while let Some(id) = stack.pop() {
            out.push(id);
            stack.extend(self.children(id).iter().rev());
        }
        out
    }

    /// Slot of the most recent adversarial block in each subtree.
    fn adversarial_recency(&self) -> BTreeMap<BlockId, Option<Slot>> {
        let mut rec: BTreeMap<BlockId, Option<Slot>> = self
            .blocks
            .values()
            .map(|b| (b.id, b.is_adversarial().then_some(b.slot)))
            .collect();
        for id in self.bottom_up() {
            if let Some(parent) = self.blocks[&id].parent {
                let own = rec[&id];
                let entry = rec.get_mut(&parent).expect("parent in tree");
                *entry = (*entry).max(own);
            }
        }
        rec
    }

    /// Greedy descent from genesis given full subtree weights.
    pub fn descend(&self, weights: &BTreeMap<BlockId, u64>, tie_break: TieBreakPolicy) -> Vec<BlockId> {
        let recency = match tie_break {
            TieBreakPolicy::AdversaryFavoring => Some(self.adversarial_recency()),
            TieBreakPolicy::Lexicographic => None,
        };
        let mut path = vec![self.genesis];
        let mut cur = self.genesis;
        loop {
            let kids = self.children(cur);
            let Some(&first) = kids.iter().min() else { break };
            let mut best = first;
            for &k in kids {
                let (wk, wb) = (weights[&k], weights[&best]);
                let better = match wk.cmp(&wb) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Less => false,
                    std::cmp::Ordering::Equal => match &recency {
                        Some(rec) => match rec[&k].cmp(&rec[&best]) {
                            std::cmp::Ordering::Greater => true,
                            std::cmp::Ordering::Less => false,
                            std::cmp::Ordering::Equal => k < best,
                        },
                        None => k < best,
                    },
                };
                if better {
                    best = k;
                }
            }
            path.push(best);
            cur = best;
        }
        path
    }

    /// Subtree weights with the proposer boost applied.
    pub fn boosted_weights(&self, q: &ForkChoice) -> BTreeMap<BlockId, u64> {
        let mut w = self.subtree_weights();
        if let Some(b) = q.boosted {
            if self.blocks.get(&b).is_some_and(|blk| blk.slot == q.current_slot) {
                for a in self.chain_to(b) {
                    *w.get_mut(&a).expect("ancestor in tree") += q.boost;
                }
            }
        }
        w
    }

    pub fn canonical_chain(&self, q: &ForkChoice) -> Vec<BlockId> {
        self.descend(&self.boosted_weights(q), q.tie_break)
    }

    pub fn fork_choice(&self, q: &ForkChoice) -> BlockId {
        *self.canonical_chain(q).last().expect("chain holds genesis")
    }

    /// The last block of `chain` whose slot is at most `slot`.
    pub fn last_at_or_before(&self, chain: &[BlockId], slot: Slot) -> Option<BlockId> {
        chain.iter().rev().copied().find(|id| self.blocks.get(id).is_some_and(|b| b.slot <= slot))
    }
}

/// Blocks on `before` that are no longer on `after`.
pub fn detect_reorg(before: &[BlockId], after: &[BlockId]) -> Vec<BlockId> {
    let keep: BTreeSet<BlockId> = after.iter().copied().collect();
    before.iter().copied().filter(|b| !keep.contains(b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(id: u32) -> Validator {
        Validator::new(id, ValidatorKind::Rational)
    }

    fn vote(slot: Slot, voter: u32, target: BlockId) -> VoteRecord {
        VoteRecord { slot, voter: ValidatorId(voter), target, broadcast_tick: 3 * slot + 1 }
    }

    fn lex(slot: Slot) -> ForkChoice {
        ForkChoice::unboosted(slot, TieBreakPolicy::Lexicographic)
    }

    #[test]
    fn genesis_only() {
        let t = BlockTree::new(0);
        assert_eq!(t.len(), 1);
        assert_eq!(t.fork_choice(&lex(0)), t.genesis());
        assert_eq!(t.canonical_chain(&lex(0)), vec![t.genesis()]);
    }

    #[test]
    fn single_child_chain() {
        let mut t = BlockTree::new(0);
        let c = t.insert_block(Block::child(BlockId(1), 1, BlockId(0), v(1))).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.chain_to(c), vec![BlockId(0), c]);
    }

    #[test]
    fn rational_equivocation_rejected() {
        let mut t = BlockTree::new(0);
        t.insert_block(Block::child(BlockId(1), 1, BlockId(0), v(7))).unwrap();
        let err = t.insert_block(Block::child(BlockId(2), 1, BlockId(0), v(7))).unwrap_err();
        assert_eq!(err, ChainError::EquivocationRejected { slot: 1, proposer: ValidatorId(7) });
        let adv = Validator::new(8, ValidatorKind::Adversarial);
        t.insert_block(Block::child(BlockId(3), 1, BlockId(0), adv)).unwrap();
        t.insert_block(Block::child(BlockId(4), 1, BlockId(0), adv)).unwrap();
    }

    #[test]
    fn insertion_errors() {
        let mut t = BlockTree::new(0);
        assert_eq!(
            t.insert_block(Block::child(BlockId(1), 1, BlockId(9), v(1))),
            Err(ChainError::UnknownParent(BlockId(9)))
        );
        assert_eq!(
            t.insert_block(Block::child(BlockId(0), 1, BlockId(0), v(1))),
            Err(ChainError::DuplicateId(BlockId(0)))
        );
        assert!(matches!(
            t.insert_block(Block::child(BlockId(1), 0, BlockId(0), v(1))),
            Err(ChainError::SlotNotAfterParent { .. })
        ));
    }

    #[test]
    fn empty_weight_is_zero() {
        let t = BlockTree::new(0);
        assert_eq!(t.subtree_weight(t.genesis(), 0, None, 0).unwrap(), 0);
    }

    #[test]
    fn full_committee_weight_at_ancestor() {
        let mut t = BlockTree::new(0);
        t.insert_block(Block::child(BlockId(1), 1, BlockId(0), v(1))).unwrap();
        t.insert_block(Block::child(BlockId(2), 2, BlockId(1), v(2))).unwrap();
        for i in 0..100 {
            t.add_vote(vote(2, 100 + i, BlockId(2))).unwrap();
        }
        assert_eq!(t.subtree_weight(BlockId(1), 2, None, 0).unwrap(), 100);
    }

    #[test]
    fn latest_message_counts_once() {
        let mut t = BlockTree::new(0);
        let a = t.insert_block(Block::child(BlockId(1), 1, BlockId(0), v(1))).unwrap();
        let b = t.insert_block(Block::child(BlockId(2), 2, BlockId(0), v(2))).unwrap();
        t.add_vote(vote(3, 9, a)).unwrap();
        t.add_vote(vote(5, 9, b)).unwrap();
        assert_eq!(t.subtree_weight(a, 5, None, 0).unwrap(), 0);
        assert_eq!(t.subtree_weight(b, 5, None, 0).unwrap(), 1);
    }

    #[test]
    fn boost_beats_thirty_nine_votes() {
        let mut t = BlockTree::new(0);
        let a = t.insert_block(Block::child(BlockId(1), 1, BlockId(0), v(1))).unwrap();
        let b = t.insert_block(Block::child(BlockId(2), 2, BlockId(0), v(2))).unwrap();
        for i in 0..39 {
            t.add_vote(vote(1, 10 + i, a)).unwrap();
        }
        let q = ForkChoice { current_slot: 2, boosted: Some(b), boost: 40, tie_break: TieBreakPolicy::Lexicographic };
        assert_eq!(t.fork_choice(&q), b);
        let stale = ForkChoice { current_slot: 3, ..q };
        assert_eq!(t.fork_choice(&stale), a);
    }

    #[test]
    fn adversarial_fork_outweighs() {
        // Honest fork: two committees of 100 vote along it. Adversarial fork:
        // two committees plus the boosted tip.
        let mut t = BlockTree::new(0);
        let adv = Validator::new(1000, ValidatorKind::Adversarial);
        let h1 = t.insert_block(Block::child(BlockId(1), 1, BlockId(0), v(1))).unwrap();
        let h2 = t.insert_block(Block::child(BlockId(2), 2, h1, v(2))).unwrap();
        let a1 = t.insert_block(Block::child(BlockId(3), 3, BlockId(0), adv)).unwrap();
        let a2 = t.insert_block(Block::child(BlockId(4), 4, a1, adv)).unwrap();
        for i in 0..100 {
            t.add_vote(vote(1, i, h1)).unwrap();
            t.add_vote(vote(2, 100 + i, h2)).unwrap();
            t.add_vote(vote(3, 200 + i, a1)).unwrap();
            t.add_vote(vote(4, 300 + i, a2)).unwrap();
        }
        let q = ForkChoice { current_slot: 4, boosted: Some(a2), boost: 40, tie_break: TieBreakPolicy::default() };
        let w = t.boosted_weights(&q);
        assert_eq!((w[&h1], w[&a1]), (200, 240));
        assert_eq!(t.fork_choice(&q), a2);
    }

    #[test]
    fn adversary_favoring_tie() {
        let mut t = BlockTree::new(0);
        let h = t.insert_block(Block::child(BlockId(1), 1, BlockId(0), v(1))).unwrap();
        let a = t
            .insert_block(Block::child(BlockId(2), 1, BlockId(0), Validator::new(2, ValidatorKind::Adversarial)))
            .unwrap();
        assert_eq!(t.fork_choice(&lex(1)), h);
        assert_eq!(t.fork_choice(&ForkChoice::unboosted(1, TieBreakPolicy::AdversaryFavoring)), a);
    }

    #[test]
    fn reorg_detection() {
        let c = vec![BlockId(0), BlockId(1), BlockId(2)];
        assert!(detect_reorg(&c, &c).is_empty());
        assert_eq!(detect_reorg(&c, &[BlockId(0), BlockId(1), BlockId(3)]), vec![BlockId(2)]);
    }

    #[test]
    fn vote_for_future_block_rejected() {
        let mut t = BlockTree::new(0);
        let a = t.insert_block(Block::child(BlockId(1), 4, BlockId(0), v(1))).unwrap();
        assert!(t.add_vote(vote(3, 1, a)).is_err());
    }
}

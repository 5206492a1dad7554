//! Brute-force oracles shared by the acceptance and property suites. They
//! recompute everything from the raw vote list with no caching so that they
//! share no code path with the library.

#![allow(dead_code)]

use std::collections::BTreeMap;

use commitlab::chain::{Block, BlockId, BlockTree, ForkChoice, Slot, TieBreakPolicy, Validator, ValidatorId, ValidatorKind, VoteRecord};

/// A small tree described by parent indices. Block 0 is genesis.
#[derive(Clone, Debug)]
pub struct TreeSpec {
    pub parents: Vec<Option<usize>>,
    pub slots: Vec<Slot>,
    pub adversarial: Vec<bool>,
    /// (voter, slot, target)
    pub votes: Vec<(u32, Slot, usize)>,
}

impl TreeSpec {
    /// Block k sits at slot k.
    pub fn chain_shaped(parents: &[usize]) -> Self {
        let n = parents.len() + 1;
        let mut p = vec![None];
        p.extend(parents.iter().map(|x| Some(*x)));
        Self { parents: p, slots: (0..n as Slot).collect(), adversarial: vec![false; n], votes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.parents.len()
    }

    pub fn build(&self) -> BlockTree {
        let mut t = BlockTree::new(self.slots[0]);
        for k in 1..self.len() {
            let kind = if self.adversarial[k] { ValidatorKind::Adversarial } else { ValidatorKind::Rational };
            let parent = self.parents[k].expect("non-genesis block has a parent");
            t.insert_block(Block::child(BlockId(k as u64), self.slots[k], BlockId(parent as u64), Validator::new(1000 + k as u32, kind)))
                .expect("valid scripted tree");
        }
        for &(voter, slot, target) in &self.votes {
            t.add_vote(VoteRecord { slot, voter: ValidatorId(voter), target: BlockId(target as u64), broadcast_tick: 3 * slot + 1 })
                .expect("valid scripted vote");
        }
        t
    }

    pub fn is_ancestor_or_self(&self, a: usize, mut b: usize) -> bool {
        loop {
            if a == b {
                return true;
            }
            match self.parents[b] {
                Some(p) => b = p,
                None => return false,
            }
        }
    }

    fn children(&self, b: usize) -> Vec<usize> {
        (0..self.len()).filter(|k| self.parents[*k] == Some(b)).collect()
    }

    /// Latest vote per voter; the first of equal-slot votes counts.
    fn latest(&self) -> BTreeMap<u32, (Slot, usize)> {
        let mut out: BTreeMap<u32, (Slot, usize)> = BTreeMap::new();
        for &(voter, slot, target) in &self.votes {
            match out.get(&voter) {
                Some((s, _)) if *s >= slot => {}
                _ => {
                    out.insert(voter, (slot, target));
                }
            }
        }
        out
    }

    /// Weight of `b` counted vote by vote, plus `extra` on every listed block
    /// that lies under `b`.
    pub fn weight(&self, b: usize, extra: &[(usize, u64)]) -> u64 {
        let votes = self.latest().values().filter(|(_, t)| self.is_ancestor_or_self(b, *t)).count() as u64;
        votes + extra.iter().filter(|(x, _)| self.is_ancestor_or_self(b, *x)).map(|(_, w)| *w).sum::<u64>()
    }

    fn latest_adversarial_below(&self, b: usize) -> Option<Slot> {
        (0..self.len()).filter(|k| self.adversarial[*k] && self.is_ancestor_or_self(b, *k)).map(|k| self.slots[k]).max()
    }

    /// Canonical chain with `extra` weight pinned under given blocks.
    pub fn canonical(&self, extra: &[(usize, u64)], tie: TieBreakPolicy) -> Vec<usize> {
        let mut path = vec![0];
        let mut cur = 0;
        loop {
            let kids = self.children(cur);
            if kids.is_empty() {
                return path;
            }
            let key = |k: usize| {
                let adv = match tie {
                    TieBreakPolicy::AdversaryFavoring => self.latest_adversarial_below(k),
                    TieBreakPolicy::Lexicographic => None,
                };
                (self.weight(k, extra), adv, std::cmp::Reverse(k))
            };
            cur = kids.into_iter().max_by_key(|k| key(*k)).expect("non-empty");
            path.push(cur);
        }
    }

    /// Fork choice with the proposer boost, evaluated at `current_slot`.
    pub fn head(&self, boosted: Option<usize>, boost: u64, current_slot: Slot, tie: TieBreakPolicy) -> Vec<usize> {
        let extra: Vec<(usize, u64)> = boosted.filter(|b| self.slots[*b] == current_slot).map(|b| (b, boost)).into_iter().collect();
        self.canonical(&extra, tie)
    }

    /// Compliant tip: try every block under `root`, add `h` under it, keep
    /// those on the resulting chain and pick the one whose path past `root`
    /// has the oldest non-compliant block; ties to the higher slot, then the
    /// lower id.
    pub fn compliant_tip(&self, root: usize, h: u64, compliant: &[usize], tie: TieBreakPolicy) -> usize {
        let mut best: Option<(Option<Slot>, std::cmp::Reverse<Slot>, usize)> = None;
        for b in 0..self.len() {
            if !self.is_ancestor_or_self(root, b) {
                continue;
            }
            if !self.canonical(&[(b, h)], tie).contains(&b) {
                continue;
            }
            let mut idx = None;
            let mut cur = b;
            while cur != root {
                if !compliant.contains(&cur) {
                    idx = idx.max(Some(self.slots[cur]));
                }
                cur = self.parents[cur].expect("root is an ancestor");
            }
            let key = (idx, std::cmp::Reverse(self.slots[b]), b);
            if best.is_none_or(|k| key < k) {
                best = Some(key);
            }
        }
        best.expect("root itself is always a candidate").2
    }
}

pub fn fork_choice(current_slot: Slot, boosted: Option<usize>, boost: u64, tie: TieBreakPolicy) -> ForkChoice {
    ForkChoice { current_slot, boosted: boosted.map(|b| BlockId(b as u64)), boost, tie_break: tie }
}

pub fn ids(chain: &[BlockId]) -> Vec<usize> {
    chain.iter().map(|b| b.0 as usize).collect()
}

/// All parent vectors of labelled trees with `n` blocks where each block's
/// parent has a smaller index.
pub fn all_trees(n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for k in 1..n {
        out = out.into_iter().flat_map(|p| (0..k).map(move |q| { let mut v = p.clone(); v.push(q); v })).collect();
    }
    out
}

/// All ways to spread at most `max` identical votes over `n` blocks.
pub fn vote_spreads(n: usize, max: usize) -> Vec<Vec<usize>> {
    fn go(i: usize, n: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for c in 0..=left {
            cur.push(c);
            go(i + 1, n, left - c, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, max, &mut Vec::new(), &mut out);
    out
}

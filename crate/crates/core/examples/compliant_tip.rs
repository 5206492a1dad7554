//! Where a compliant validator should build or vote: the block that a
//! committed adversary can still make canonical, preferring branches with
//! the oldest non-compliant block past the root.

use std::collections::BTreeMap;

use commitlab::chain::{Block, BlockId, BlockTree, TieBreakPolicy, Validator, ValidatorId, ValidatorKind, VoteRecord};
use commitlab::games::extended::{compliant_tip, hypothetical_weight};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (p, w, wp) = (2, 4, 2);
    let v = Validator::new(1, ValidatorKind::Rational);
    let mut tree = BlockTree::new(-3);
    let root = tree.insert_block(Block::child(BlockId(1), -2, tree.genesis(), v))?;
    let b_1 = tree.insert_block(Block::child(BlockId(2), -1, root, v))?;
    let b0 = tree.insert_block(Block::child(BlockId(3), 0, b_1, v))?;
    let e1 = tree.insert_block(Block::child(BlockId(4), 1, root, v))?;
    let mut voter = 0;
    for (slot, target) in [(-2, root), (-1, b_1), (0, b0), (1, e1)] {
        for _ in 0..w {
            tree.add_vote(VoteRecord { slot, voter: ValidatorId(voter), target, broadcast_tick: 3 * slot + 1 })?;
            voter += 1;
        }
    }
    let marks = BTreeMap::from([(e1, true)]);
    for i in [1, 2] {
        let tip = compliant_tip(&tree, root, i, p, w as u64, wp, &marks, TieBreakPolicy::AdversaryFavoring)?;
        println!("slot {i}: hypothetical weight {}, compliant tip {tip}", hypothetical_weight(i, p, w as u64, wp));
    }
    Ok(())
}

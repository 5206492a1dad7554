//! Build a small fork by hand, watch the proposer boost flip the head and
//! report which blocks were reorged.

use commitlab::chain::{detect_reorg, Block, BlockId, BlockTree, ForkChoice, TieBreakPolicy, Validator, ValidatorId, ValidatorKind, VoteRecord};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let honest = Validator::new(1, ValidatorKind::Honest);
    let adversary = Validator::new(2, ValidatorKind::Adversarial);
    let mut tree = BlockTree::new(0);
    let b1 = tree.insert_block(Block::child(BlockId(1), 1, tree.genesis(), honest))?;
    let b2 = tree.insert_block(Block::child(BlockId(2), 2, b1, honest))?;
    for v in 10..12 {
        tree.add_vote(VoteRecord { slot: 2, voter: ValidatorId(v), target: b2, broadcast_tick: 7 })?;
    }
    for v in 12..14 {
        tree.add_vote(VoteRecord { slot: 2, voter: ValidatorId(v), target: b1, broadcast_tick: 7 })?;
    }

    let before = tree.canonical_chain(&ForkChoice::unboosted(3, TieBreakPolicy::AdversaryFavoring));
    // Slot 3 proposal on B1, skipping B2.
    let b3 = tree.insert_block(Block::child(BlockId(3), 3, b1, adversary))?;
    let q = ForkChoice { current_slot: 3, boosted: Some(b3), boost: 3, tie_break: TieBreakPolicy::AdversaryFavoring };
    let after = tree.canonical_chain(&q);

    println!("weights with boost: {:?}", tree.boosted_weights(&q));
    println!("head {:?} -> {:?}", before.last(), after.last());
    println!("reorged: {:?}", detect_reorg(&before, &after));
    Ok(())
}

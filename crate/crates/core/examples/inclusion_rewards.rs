//! Altair-weighted inclusion rewards for a mainnet-sized validator set and
//! what a pool gains from the commitment attack.

use commitlab::rewards::{altair_block_inclusion_reward, attack_gain_summary, gwei_to_eth, to_f64, Gwei, VoteWeights};

fn main() -> commitlab::Result<()> {
    let inc = altair_block_inclusion_reward(1_073_375, 32_000_000_000, &VoteWeights::default())?;
    let eth = |g: Gwei| to_f64(gwei_to_eth(g));
    println!("block with all three votes: {:.4} ETH", eth(inc.all_three_votes));
    println!("source+target only:         {:.4} ETH", eth(inc.source_target_only));
    println!("head only:                  {:.4} ETH", eth(inc.head_only));

    let g = attack_gain_summary(&inc, Gwei::new(82, 1000), Gwei::new(12, 100), Gwei::new(278, 1000));
    println!(
        "proposer: {:.4} -> {:.4} ETH (+{:.4}, {:.1}%); pool loses {:.4}, nets {:.4}",
        to_f64(g.fail_eth),
        to_f64(g.success_eth),
        to_f64(g.delta_eth),
        to_f64(g.delta_pct),
        to_f64(g.pool_loss_eth),
        to_f64(g.pool_net_eth)
    );
    Ok(())
}

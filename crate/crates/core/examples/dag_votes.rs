//! The same off-tip proposal under both reward rules.

use commitlab::equilibrium::SearchOptions;
use commitlab::games::dag::DagGame;
use commitlab::games::{GameConfig, GameKind};
use commitlab::rewards::Mechanism;

fn main() -> commitlab::Result<()> {
    for mechanism in [Mechanism::DagVotes, Mechanism::Ethereum] {
        let mut cfg = GameConfig::new(GameKind::DagSecurity, 5, 0);
        cfg.mechanism = mechanism;
        let rep = DagGame::new(cfg)?.security_report(&SearchOptions::default())?;
        println!(
            "{mechanism:?}: {:?}; off-tip block votes {}, reorged {}; rational blocks reorged {:?}",
            rep.verdict, rep.adversary_block_votes, rep.adversary_block_reorged, rep.rational_blocks_reorged
        );
        for d in rep.coalition.deviations.iter().take(1) {
            println!("  profitable joint deviation by {} players, gain {} each", d.players.len(), d.gain);
        }
    }
    Ok(())
}

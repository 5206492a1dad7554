//! Without a proposer boost the adversary can only win on ties, so the
//! attack needs the whole committee.

use commitlab::games::no_boost::NoBoostGame;
use commitlab::games::{Choice, GameConfig, GameKind};

fn main() -> commitlab::Result<()> {
    let game = NoBoostGame::new(GameConfig::new(GameKind::SimpleNoBoost, 4, 0))?;
    print!("{}", game.payoff_matrix()?.render());
    for c in [Choice::C, Choice::NC] {
        let out = game.run(&game.uniform(c))?;
        println!("everyone plays {c}: reorged {:?}", out.reorged);
    }
    Ok(())
}

//! Payoff table of one slot-t attestor in the simple commitment attack, with
//! a unilateral Nash check of both pure outcomes.

use commitlab::equilibrium::{verify_nash, Game, SearchOptions};
use commitlab::games::simple::SimpleGame;
use commitlab::games::{GameConfig, GameKind};

fn main() -> commitlab::Result<()> {
    let game = SimpleGame::new(GameConfig::new(GameKind::Simple, 4, 2))?;
    print!("{}", game.payoff_matrix()?.render());

    for name in game.profile_names() {
        let profile = game.profile(&name).expect("listed profile");
        let out = game.play(&profile)?;
        let rep = verify_nash(&game, &profile, &SearchOptions::default())?;
        println!("{name}: attack {} -> {:?} ({} profiles)", if out.success { "succeeds" } else { "fails" }, rep.verdict, rep.evaluated);
    }
    Ok(())
}

use commitlab::equilibrium::{verify_spne, SearchOptions};
use commitlab::games::extended::ExtendedGame;
use commitlab::games::{Choice, GameConfig, GameKind};

fn main() -> commitlab::Result<()> {
    let p = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2);
    let game = ExtendedGame::new(GameConfig::new(GameKind::Extended, 4, 2).with_horizon(p))?;
    let rep = verify_spne(&game, &game.uniform(Choice::C), &SearchOptions::default())?;
    println!("p = {p}: {:?}", rep.verdict);
    // Backward induction order: latest decision first.
    for t in &rep.subgames {
        println!("slot {} {:?}", t.slot, t.role);
        for row in &t.rows {
            let mark = if row.prescribed { "*" } else { " " };
            println!("  {mark} {:<12} {:<34} {}", row.player.to_string(), row.action.label(), row.payoff);
        }
    }
    Ok(())
}

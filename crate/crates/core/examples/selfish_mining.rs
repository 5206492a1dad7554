use commitlab::games::selfish::{pool_matrix_selfish, SelfishGame};
use commitlab::games::{Choice, GameConfig, GameKind, PoolConfig};

fn main() -> commitlab::Result<()> {
    let mut cfg = GameConfig::new(GameKind::SelfishMining, 100, 40).with_adversarial_slots([2, 4]);
    cfg.pool = Some(PoolConfig::uniform(10));
    let game = SelfishGame::new(cfg.clone())?;

    let out = game.run(&game.uniform(Choice::C))?;
    let w = game.fork_weights(&out)?;
    println!(
        "adversarial slots {:?}, honest slots {:?}: support {} vs {}, adversarial fork {}",
        game.s_a(),
        game.s_na(),
        w.adversarial_support,
        w.non_adversarial_support,
        if out.success { "wins" } else { "loses" }
    );
    print!("{}", pool_matrix_selfish(&cfg)?.render());
    Ok(())
}

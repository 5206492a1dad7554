use commitlab::games::strong::{sample_membership, StrongSimpleGame};
use commitlab::games::{GameConfig, GameKind};

// Expected payoffs when supporting the attack also buys a chance at a later duty.
fn main() -> commitlab::Result<()> {
    let game = StrongSimpleGame::new(GameConfig::new(GameKind::StrongSimple, 4, 2))?;
    print!("{}", game.expected_matrix()?.render());
    println!("exact membership probability: {}", game.membership_probability());

    let est = sample_membership(7, 20_000, 4, 32)?;
    println!("sampled: {:.4} +/- {:.4} over {} draws", est.mean, est.std_error, est.draws);
    Ok(())
}

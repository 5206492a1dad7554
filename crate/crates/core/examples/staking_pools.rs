//! A pool that controls m < W_p seats in every committee, split by the slot
//! its votes are paid for.

use commitlab::games::pools::{pool_matrix_simple, pool_payoff_simple};
use commitlab::games::{Choice, Condition, GameConfig, GameKind};

fn main() -> commitlab::Result<()> {
    let cfg = GameConfig::new(GameKind::Simple, 6, 3).with_pool(2);
    print!("{}", pool_matrix_simple(&cfg)?.render());
    for cond in [Condition::Succeed, Condition::Fail] {
        for c in [Choice::C, Choice::NC] {
            let p = pool_payoff_simple(&cfg, c, cond)?;
            println!("{cond:>7} {c:>2}: previous {} + current {} = {}", p.previous, p.current, p.total());
        }
    }
    Ok(())
}

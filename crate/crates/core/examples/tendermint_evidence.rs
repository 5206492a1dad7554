use commitlab::reward;
use commitlab::tendermint::{honest_anchor_scenario, withholding_attack_scenario};

fn main() -> commitlab::Result<()> {
    // Rational validators withhold nil votes for m rounds to collect more rewards.
    for m in 1..=3 {
        let w = withholding_attack_scenario(1, m, reward(1))?;
        println!(
            "f=1 m={m}: stalled {} rounds, finalized in round {:?}, each withholder earns {:?}, {:?}",
            w.stalled_rounds,
            w.finalized_round,
            w.payoff_per_validator.map(|r| r.to_string()),
            w.nash.verdict
        );
    }
    for f in 1..=3 {
        let a = honest_anchor_scenario(f)?;
        println!("f={f}: honest proposal finalized in round {:?}, reorg resilient {}", a.first_finalized_round, a.reorg_resilient);
    }
    Ok(())
}

//! Staking pool in the simple game: m members attest in both slot t-1 and
//! slot t and the pool acts as one player.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::Reward;

use super::simple::SimpleGame;
use super::{Choice, Condition, GameConfig, PayoffMatrix, POOL};
use crate::chain::PoolId;
use crate::strategy::PlayerKey;

/// Pool payoff split by the slot of the rewarded votes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PoolPayoff {
    #[serde(serialize_with = "ser")]
    pub previous: Reward,
    #[serde(serialize_with = "ser")]
    pub current: Reward,
}

fn ser<S: serde::Serializer>(r: &Reward, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

impl PoolPayoff {
    pub fn total(&self) -> Reward {
        self.previous + self.current
    }
}

/// Runs the simple game with solo attestors all compliant (`Succeed`) or all
/// voting for B[t] (`Fail`), and the pool playing `action` in slot t.
pub fn pool_payoff_simple(cfg: &GameConfig, action: Choice, others: Condition) -> Result<PoolPayoff> {
    let m = cfg.pool.as_ref().map_or(0, |p| p.members_per_slot);
    if m >= cfg.boost.max(1) && m > 0 {
        return Err(Error::ConditionViolated(format!("pool of {m} is not below the boost {}", cfg.boost)));
    }
    let g = SimpleGame::new(cfg.clone())?;
    let solo_choice = match others {
        Condition::Succeed => Choice::C,
        Condition::Fail => Choice::NC,
    };
    let mut prof = g.uniform(solo_choice);
    let pool_key = PlayerKey::attestor(POOL, g.t);
    if m > 0 {
        prof.set(pool_key, SimpleGame::action(action));
    }
    let out = g.run(&prof)?;
    let realised = out.success == (others == Condition::Succeed);
    if !realised {
        return Err(Error::ConditionViolated(format!("{others} could not be realised with these committee sizes")));
    }
    Ok(PoolPayoff { previous: out.pool_attestation(PoolId(0), g.t - 1), current: out.pool_attestation(PoolId(0), g.t) })
}

pub fn pool_matrix_simple(cfg: &GameConfig) -> Result<PayoffMatrix> {
    let m = cfg.pool.as_ref().map_or(0, |p| p.members_per_slot);
    let mut out = PayoffMatrix::new(
        format!("staking pool with {m} members per slot, simple game (slot t-1 + slot t)"),
        vec!["Succeed".into(), "Fail".into()],
        vec!["C".into(), "NC".into()],
    );
    for (i, cond) in [Condition::Succeed, Condition::Fail].into_iter().enumerate() {
        for (j, c) in [Choice::C, Choice::NC].into_iter().enumerate() {
            let pay = pool_payoff_simple(cfg, c, cond)?;
            out.set(i, j, Some(pay.total()));
            out.cells[i][j] = Some(format!("{}+{}", pay.previous, pay.current));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::GameKind;
    use crate::reward;

    fn cfg(m: u64) -> GameConfig {
        GameConfig::new(GameKind::Simple, 6, 3).with_pool(m)
    }

    #[test]
    fn four_corners() {
        let c = cfg(2);
        let pp = |a, o| pool_payoff_simple(&c, a, o).unwrap();
        assert_eq!(pp(Choice::C, Condition::Succeed), PoolPayoff { previous: reward(0), current: reward(2) });
        assert_eq!(pp(Choice::NC, Condition::Succeed), PoolPayoff { previous: reward(0), current: reward(0) });
        assert_eq!(pp(Choice::C, Condition::Fail), PoolPayoff { previous: reward(2), current: reward(0) });
        assert_eq!(pp(Choice::NC, Condition::Fail), PoolPayoff { previous: reward(2), current: reward(0) });
    }

    #[test]
    fn empty_pool_earns_nothing() {
        for a in [Choice::C, Choice::NC] {
            for o in [Condition::Succeed, Condition::Fail] {
                assert_eq!(pool_payoff_simple(&cfg(0), a, o).unwrap().total(), reward(0));
            }
        }
    }

    #[test]
    fn large_pool_rejected() {
        assert!(pool_payoff_simple(&cfg(3), Choice::C, Condition::Succeed).is_err());
    }
}

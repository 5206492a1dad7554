//! Deterministic LMD GHOST simulator with commitment-attack games, an
//! equilibrium checker, a Tendermint evidence model and overhead calculators.

pub mod chain;
pub mod equilibrium;
pub mod error;
pub mod games;
pub mod overhead;
pub mod rewards;
pub mod scenario;
pub mod sim;
pub mod strategy;
pub mod tendermint;

pub use error::{ChainError, Error, Result};

/// Exact reward amounts.
pub type Reward = num_rational::Ratio<i64>;

/// Shorthand for an integer reward.
pub fn reward(n: i64) -> Reward {
    Reward::from_integer(n)
}

/// Serde adapter for rewards written as `"3"`, `"1/32"` or a bare integer.
pub mod ratio_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    use crate::Reward;

    pub fn parse(s: &str) -> Result<Reward, String> {
        let s = s.trim();
        match s.split_once('/') {
            Some((n, d)) => {
                let n: i64 = n.trim().parse().map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
                let d: i64 = d.trim().parse().map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
                if d == 0 {
                    return Err(format!("zero denominator in {s:?}"));
                }
                Ok(Reward::new(n, d))
            }
            None => s.parse().map(Reward::from_integer).map_err(|e| format!("bad rational {s:?}: {e}")),
        }
    }

    pub fn serialize<S: Serializer>(r: &Reward, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(i64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Reward, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Int(n) => Ok(Reward::from_integer(n)),
            Raw::Text(t) => parse(&t).map_err(de::Error::custom),
        }
    }
}

//! Players, decision points and actions.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chain::{PoolId, Slot, Tick, ValidatorId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Leader,
    Attestor,
}

/// Who decides: a solo validator or a pool acting for all its members.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controller {
    Solo(ValidatorId),
    Pool(PoolId),
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Controller::Solo(v) => write!(f, "{v}"),
            Controller::Pool(p) => write!(f, "pool{}", p.0),
        }
    }
}

/// One decision of one controller. Deserializes from the struct or from the
/// display form `v38@2:attestor` / `pool0@2:attestor`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "PlayerKeyRepr")]
pub struct PlayerKey {
    pub controller: Controller,
    pub slot: Slot,
    pub role: Role,
}

impl PlayerKey {
    pub fn attestor(controller: Controller, slot: Slot) -> Self {
        Self { controller, slot, role: Role::Attestor }
    }

    pub fn leader(controller: Controller, slot: Slot) -> Self {
        Self { controller, slot, role: Role::Leader }
    }

    /// Tick at which the decision is taken.
    pub fn tick(&self) -> Tick {
        match self.role {
            Role::Leader => 3 * self.slot,
            Role::Attestor => 3 * self.slot + 1,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PlayerKeyRepr {
    Text(String),
    Full { controller: Controller, slot: Slot, role: Role },
}

impl TryFrom<PlayerKeyRepr> for PlayerKey {
    type Error = String;

    fn try_from(r: PlayerKeyRepr) -> Result<Self, String> {
        match r {
            PlayerKeyRepr::Text(s) => s.parse(),
            PlayerKeyRepr::Full { controller, slot, role } => Ok(Self { controller, slot, role }),
        }
    }
}

impl std::str::FromStr for PlayerKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("player '{s}' is not of the form v<id>@<slot>:<leader|attestor>");
        let (who, rest) = s.split_once('@').ok_or_else(bad)?;
        let (slot, role) = rest.split_once(':').ok_or_else(bad)?;
        let controller = if let Some(n) = who.strip_prefix("pool") {
            Controller::Pool(PoolId(n.parse().map_err(|_| bad())?))
        } else {
            Controller::Solo(ValidatorId(who.strip_prefix('v').ok_or_else(bad)?.parse().map_err(|_| bad())?))
        };
        let role = match role {
            "leader" => Role::Leader,
            "attestor" => Role::Attestor,
            _ => return Err(bad()),
        };
        Ok(Self { controller, slot: slot.parse().map_err(|_| bad())?, role })
    }
}

impl fmt::Display for PlayerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let role = match self.role {
            Role::Leader => "leader",
            Role::Attestor => "attestor",
        };
        write!(f, "{}@{}:{}", self.controller, self.slot, role)
    }
}

/// Block selector resolved at the decision tick.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    CanonicalTip,
    ParentOfTip,
    /// The block proposed for the decision's own slot.
    SlotBlock,
    /// Whatever the game rule asks for.
    CompliantTip,
    /// The block the adversary hands over when it collects withheld votes.
    AdversaryOffer,
    Label(String),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Release {
    OnTime,
    At(Tick),
    /// Held back for the adversary to collect.
    Deferred,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inclusion {
    All,
    CompliantOnly,
    Nothing,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerAction {
    Vote { target: Target, release: Release },
    Abstain,
    Propose { parent: Target, empty: bool, include: Inclusion },
}

impl PlayerAction {
    pub fn vote(target: Target) -> Self {
        PlayerAction::Vote { target, release: Release::OnTime }
    }

    pub fn honest_vote() -> Self {
        Self::vote(Target::CanonicalTip)
    }

    pub fn honest_proposal() -> Self {
        PlayerAction::Propose { parent: Target::CanonicalTip, empty: false, include: Inclusion::All }
    }

    pub fn compliant_proposal() -> Self {
        PlayerAction::Propose { parent: Target::CompliantTip, empty: true, include: Inclusion::CompliantOnly }
    }

    pub fn deferred_vote() -> Self {
        PlayerAction::Vote { target: Target::AdversaryOffer, release: Release::Deferred }
    }

    /// Short label used in tables.
    pub fn label(&self) -> String {
        match self {
            PlayerAction::Abstain => "abstain".into(),
            PlayerAction::Vote { target, release } => {
                let t = target_label(target);
                match release {
                    Release::OnTime => format!("vote {t}"),
                    Release::At(k) => format!("vote {t} @{k}"),
                    Release::Deferred => format!("withhold {t}"),
                }
            }
            PlayerAction::Propose { parent, empty, include } => {
                let body = if *empty { "empty" } else { "full" };
                let inc = match include {
                    Inclusion::All => "all",
                    Inclusion::CompliantOnly => "compliant",
                    Inclusion::Nothing => "none",
                };
                format!("propose {body} on {} ({inc})", target_label(parent))
            }
        }
    }
}

fn target_label(t: &Target) -> String {
    match t {
        Target::CanonicalTip => "tip".into(),
        Target::ParentOfTip => "parent-of-tip".into(),
        Target::SlotBlock => "slot-block".into(),
        Target::CompliantTip => "compliant-tip".into(),
        Target::AdversaryOffer => "adversary-offer".into(),
        Target::Label(l) => l.clone(),
    }
}

/// One action per player decision. Missing entries fall back to the protocol.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyProfile {
    actions: BTreeMap<PlayerKey, PlayerAction>,
}

impl StrategyProfile {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: PlayerKey, action: PlayerAction) {
        self.actions.insert(key, action);
    }

    pub fn with(&self, key: PlayerKey, action: PlayerAction) -> Self {
        let mut p = self.clone();
        p.set(key, action);
        p
    }

    pub fn get(&self, key: &PlayerKey) -> Option<&PlayerAction> {
        self.actions.get(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PlayerKey, &PlayerAction)> {
        self.actions.iter()
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl FromIterator<(PlayerKey, PlayerAction)> for StrategyProfile {
    fn from_iter<I: IntoIterator<Item = (PlayerKey, PlayerAction)>>(iter: I) -> Self {
        Self { actions: iter.into_iter().collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn player_key_round_trips_through_text() {
        for k in [PlayerKey::attestor(Controller::Solo(ValidatorId(38)), 2), PlayerKey::leader(Controller::Pool(PoolId(0)), -1)] {
            assert_eq!(k.to_string().parse::<PlayerKey>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(serde_json::from_str::<PlayerKey>(&json).unwrap(), k);
            assert_eq!(serde_json::from_str::<PlayerKey>(&format!("\"{k}\"")).unwrap(), k);
        }
        assert!("38@2:attestor".parse::<PlayerKey>().is_err());
        assert!("v38@2:voter".parse::<PlayerKey>().is_err());
    }
}

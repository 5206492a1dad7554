//! Best responses and Nash / strong Nash / SPNE verification by exhaustive
//! deviation search over finite candidate sets.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::Slot;
use crate::error::{Error, Result};
use crate::games::GameOutcome;
use crate::strategy::{PlayerAction, PlayerKey, Role, StrategyProfile};
use crate::Reward;

/// A finite game: players, their candidate actions, and a simulator.
pub trait Game: Sync {
    fn name(&self) -> String;

    fn players(&self) -> Vec<PlayerKey>;

    fn candidates(&self, player: &PlayerKey) -> Vec<PlayerAction>;

    fn play(&self, profile: &StrategyProfile) -> Result<GameOutcome>;

    /// Payoff credited to one decision. Defaults to the controller's total.
    fn payoff(&self, outcome: &GameOutcome, key: &PlayerKey) -> Reward {
        outcome.payoff(key.controller)
    }

    /// Named strategy profiles such as `"simple.compliant-all"`.
    fn profile(&self, name: &str) -> Option<StrategyProfile>;

    fn profile_names(&self) -> Vec<String>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Nash,
    StrongNash,
    Spne,
    NotEquilibrium,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Deviation {
    pub players: Vec<PlayerKey>,
    pub actions: Vec<PlayerAction>,
    /// Smallest gain over the deviating controllers.
    #[serde(serialize_with = "ser_reward")]
    pub gain: Reward,
    /// Earlier one-shot deviation defining an off-path subgame.
    pub history: Option<(PlayerKey, PlayerAction)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubgameRow {
    pub player: PlayerKey,
    pub action: PlayerAction,
    #[serde(serialize_with = "ser_reward")]
    pub payoff: Reward,
    pub prescribed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SubgameTable {
    pub slot: Slot,
    pub role: Role,
    pub rows: Vec<SubgameRow>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EquilibriumReport {
    pub verdict: Verdict,
    pub deviations: Vec<Deviation>,
    pub subgames: Vec<SubgameTable>,
    /// Simulations run.
    pub evaluated: u64,
}

impl EquilibriumReport {
    pub fn is_equilibrium(&self) -> bool {
        self.verdict != Verdict::NotEquilibrium
    }
}

fn ser_reward<S: serde::Serializer>(r: &Reward, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&r.to_string())
}

#[derive(Clone, Debug)]
pub struct Coalitions {
    pub members: Vec<PlayerKey>,
    pub max_size: usize,
}

#[derive(Clone, Debug)]
pub struct SearchOptions {
    /// Bound on the number of profiles a search may evaluate.
    pub max_joint_actions: u128,
    pub coalitions: Option<Coalitions>,
    /// SPNE only: also check subgames reached by one earlier deviation.
    pub off_path: bool,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self { max_joint_actions: 1_000_000, coalitions: None, off_path: false }
    }
}

fn guard(size: u128, bound: u128) -> Result<()> {
    if size > bound {
        Err(Error::ExplosionGuard { size, bound })
    } else {
        Ok(())
    }
}

fn prescribed(profile: &StrategyProfile, game: &dyn Game, p: &PlayerKey) -> PlayerAction {
    profile.get(p).cloned().unwrap_or_else(|| game.candidates(p).into_iter().next().unwrap_or(PlayerAction::Abstain))
}

fn payoff_of(game: &dyn Game, profile: &StrategyProfile, key: &PlayerKey) -> Result<Reward> {
    let out = game.play(profile)?;
    Ok(game.payoff(&out, key))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BestResponse {
    pub payoffs: Vec<(PlayerAction, Reward)>,
    pub best: Vec<PlayerAction>,
}

/// One simulation per candidate with everyone else held fixed.
pub fn best_response(
    game: &dyn Game,
    profile: &StrategyProfile,
    player: &PlayerKey,
    candidates: &[PlayerAction],
) -> Result<BestResponse> {
    let payoffs: Vec<(PlayerAction, Reward)> = candidates
        .par_iter()
        .map(|a| payoff_of(game, &profile.with(*player, a.clone()), player).map(|u| (a.clone(), u)))
        .collect::<Result<_>>()?;
    let top = payoffs.iter().map(|(_, u)| *u).max();
    let best = payoffs.iter().filter(|(_, u)| Some(*u) == top).map(|(a, _)| a.clone()).collect();
    Ok(BestResponse { payoffs, best })
}

/// Unilateral deviation search, plus joint deviations when coalitions are given.
pub fn verify_nash(game: &dyn Game, profile: &StrategyProfile, opts: &SearchOptions) -> Result<EquilibriumReport> {
    let players = game.players();
    let pairs: Vec<(PlayerKey, PlayerAction)> = players
        .iter()
        .flat_map(|p| {
            let cur = prescribed(profile, game, p);
            game.candidates(p).into_iter().filter(move |a| *a != cur).map(move |a| (*p, a))
        })
        .collect();
    guard(pairs.len() as u128, opts.max_joint_actions)?;
    let base = game.play(profile)?;
    let mut evaluated = 1 + pairs.len() as u64;
    let mut deviations: Vec<Deviation> = pairs
        .par_iter()
        .map(|(p, a)| -> Result<Option<Deviation>> {
            let u = payoff_of(game, &profile.with(*p, a.clone()), p)?;
            let gain = u - game.payoff(&base, p);
            Ok((gain > Reward::from_integer(0)).then(|| Deviation {
                players: vec![*p],
                actions: vec![a.clone()],
                gain,
                history: None,
            }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let mut verdict_if_clean = Verdict::Nash;
    if let Some(co) = &opts.coalitions {
        let (devs, n) = coalition_search(game, profile, &base, co, opts.max_joint_actions)?;
        deviations.extend(devs);
        evaluated += n;
        verdict_if_clean = Verdict::StrongNash;
    }
    Ok(EquilibriumReport {
        verdict: if deviations.is_empty() { verdict_if_clean } else { Verdict::NotEquilibrium },
        deviations,
        subgames: Vec::new(),
        evaluated,
    })
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

fn coalition_search(
    game: &dyn Game,
    profile: &StrategyProfile,
    base: &GameOutcome,
    co: &Coalitions,
    bound: u128,
) -> Result<(Vec<Deviation>, u64)> {
    let alts: Vec<Vec<PlayerAction>> = co
        .members
        .iter()
        .map(|p| {
            let cur = prescribed(profile, game, p);
            game.candidates(p).into_iter().filter(|a| *a != cur).collect()
        })
        .collect();
    let mut jobs: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut size: u128 = 0;
    for k in 2..=co.max_size.min(co.members.len()) {
        for set in subsets(co.members.len(), k) {
            let count: u128 = set.iter().map(|&i| alts[i].len() as u128).product();
            size += count;
            guard(size, bound)?;
            let mut idx = vec![0usize; k];
            if set.iter().any(|&i| alts[i].is_empty()) {
                continue;
            }
            loop {
                jobs.push((set.clone(), idx.clone()));
                let mut j = 0;
                loop {
                    if j == k {
                        break;
                    }
                    idx[j] += 1;
                    if idx[j] < alts[set[j]].len() {
                        break;
                    }
                    idx[j] = 0;
                    j += 1;
                }
                if j == k {
                    break;
                }
            }
        }
    }
    let n = jobs.len() as u64;
    let devs = jobs
        .par_iter()
        .map(|(set, idx)| -> Result<Option<Deviation>> {
            let mut prof = profile.clone();
            let mut players = Vec::new();
            let mut actions = Vec::new();
            for (pos, &i) in set.iter().enumerate() {
                let a = alts[i][idx[pos]].clone();
                prof.set(co.members[i], a.clone());
                players.push(co.members[i]);
                actions.push(a);
            }
            let out = game.play(&prof)?;
            let gains: Vec<Reward> = players.iter().map(|k| game.payoff(&out, k) - game.payoff(base, k)).collect();
            let min = gains.iter().copied().min().unwrap_or_default();
            Ok((min > Reward::from_integer(0)).then_some(Deviation { players, actions, gain: min, history: None }))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    Ok((devs, n))
}

/// Backward induction over decision points, latest first. Each table lists
/// every candidate of every player at that point with later play fixed to the
/// profile. With `off_path`, every subgame reached by one earlier deviation is
/// checked as well.
pub fn verify_spne(game: &dyn Game, profile: &StrategyProfile, opts: &SearchOptions) -> Result<EquilibriumReport> {
    let mut players = game.players();
    players.sort_by_key(|p| (std::cmp::Reverse(p.tick()), *p));
    let mut points: BTreeMap<(std::cmp::Reverse<i64>, Slot, Role), Vec<PlayerKey>> = BTreeMap::new();
    for p in &players {
        points.entry((std::cmp::Reverse(p.tick()), p.slot, p.role)).or_default().push(*p);
    }
    let on_path: u128 = players.iter().map(|p| game.candidates(p).len() as u128).sum();
    let mut budget = on_path;
    if opts.off_path {
        for p in &players {
            let earlier: u128 = players
                .iter()
                .filter(|q| q.tick() < p.tick())
                .map(|q| game.candidates(q).len().saturating_sub(1) as u128)
                .sum();
            budget += earlier * (game.candidates(p).len() as u128 + 1);
        }
    }
    guard(budget, opts.max_joint_actions)?;

    let mut evaluated = 0u64;
    let mut subgames = Vec::new();
    let mut deviations = Vec::new();
    for ((_, slot, role), at_point) in &points {
        let mut rows = Vec::new();
        for p in at_point {
            let cur = prescribed(profile, game, p);
            let cands = game.candidates(p);
            let br = best_response(game, profile, p, &cands)?;
            evaluated += cands.len() as u64;
            let own = br.payoffs.iter().find(|(a, _)| *a == cur).map(|(_, u)| *u);
            let own = match own {
                Some(u) => u,
                None => {
                    evaluated += 1;
                    payoff_of(game, profile, p)?
                }
            };
            for (a, u) in &br.payoffs {
                if *u > own {
                    deviations.push(Deviation { players: vec![*p], actions: vec![a.clone()], gain: *u - own, history: None });
                }
                rows.push(SubgameRow { player: *p, action: a.clone(), payoff: *u, prescribed: *a == cur });
            }
        }
        subgames.push(SubgameTable { slot: *slot, role: *role, rows });
    }

    if opts.off_path {
        let histories: Vec<(PlayerKey, PlayerAction)> = players
            .iter()
            .flat_map(|q| {
                let cur = prescribed(profile, game, q);
                game.candidates(q).into_iter().filter(move |a| *a != cur).map(move |a| (*q, a))
            })
            .collect();
        let jobs: Vec<(PlayerKey, (PlayerKey, PlayerAction))> = players
            .iter()
            .flat_map(|p| histories.iter().filter(|(q, _)| q.tick() < p.tick()).map(move |h| (*p, h.clone())))
            .collect();
        let found: Vec<(Vec<Deviation>, u64)> = jobs
            .par_iter()
            .map(|(p, (q, aq))| -> Result<(Vec<Deviation>, u64)> {
                let h = profile.with(*q, aq.clone());
                let cur = prescribed(profile, game, p);
                let own = payoff_of(game, &h, p)?;
                let mut devs = Vec::new();
                let cands = game.candidates(p);
                for a in cands.iter().filter(|a| **a != cur) {
                    let u = payoff_of(game, &h.with(*p, a.clone()), p)?;
                    if u > own {
                        devs.push(Deviation {
                            players: vec![*p],
                            actions: vec![a.clone()],
                            gain: u - own,
                            history: Some((*q, aq.clone())),
                        });
                    }
                }
                Ok((devs, cands.len() as u64))
            })
            .collect::<Result<_>>()?;
        for (d, n) in found {
            deviations.extend(d);
            evaluated += n;
        }
    }

    Ok(EquilibriumReport {
        verdict: if deviations.is_empty() { Verdict::Spne } else { Verdict::NotEquilibrium },
        deviations,
        subgames,
        evaluated,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Dominance {
    StrictlyDominant,
    WeaklyDominant,
    Neither,
}

/// Compares `action` with every other candidate across the given opponent
/// profiles (a full enumeration or a conditioning partition).
pub fn dominance_check(
    game: &dyn Game,
    player: &PlayerKey,
    action: &PlayerAction,
    candidates: &[PlayerAction],
    opponents: &[StrategyProfile],
    max_joint_actions: u128,
) -> Result<Dominance> {
    guard((candidates.len() as u128) * (opponents.len() as u128), max_joint_actions)?;
    let mut strict = true;
    let mut weak = true;
    for alt in candidates {
        if alt == action {
            continue;
        }
        let mut some_better = false;
        for opp in opponents {
            let u = payoff_of(game, &opp.with(*player, action.clone()), player)?;
            let v = payoff_of(game, &opp.with(*player, alt.clone()), player)?;
            if u <= v {
                strict = false;
            }
            if u < v {
                weak = false;
            }
            if u > v {
                some_better = true;
            }
        }
        if !some_better {
            weak = false;
        }
    }
    Ok(if candidates.iter().all(|a| a == action) || opponents.is_empty() {
        Dominance::Neither
    } else if strict {
        Dominance::StrictlyDominant
    } else if weak {
        Dominance::WeaklyDominant
    } else {
        Dominance::Neither
    })
}

/// Every joint profile of the players other than `player`, built on `base`.
pub fn enumerate_opponents(
    game: &dyn Game,
    base: &StrategyProfile,
    player: &PlayerKey,
    max_joint_actions: u128,
) -> Result<Vec<StrategyProfile>> {
    let others: Vec<PlayerKey> = game.players().into_iter().filter(|p| p != player).collect();
    let sizes: Vec<usize> = others.iter().map(|p| game.candidates(p).len()).collect();
    let total = sizes.iter().try_fold(1u128, |acc, &n| acc.checked_mul(n as u128)).unwrap_or(u128::MAX);
    guard(total, max_joint_actions)?;
    let mut out = vec![base.clone()];
    for p in &others {
        let cands = game.candidates(p);
        out = out.into_iter().flat_map(|prof| cands.iter().map(move |a| prof.with(*p, a.clone())).collect::<Vec<_>>()).collect();
    }
    Ok(out)
}

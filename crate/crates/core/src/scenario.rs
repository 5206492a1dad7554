//! Scenario files, dispatch to the games and calculators, and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::equilibrium::{
    best_response, dominance_check, enumerate_opponents, verify_nash, verify_spne, Coalitions, EquilibriumReport, Game,
    SearchOptions, Verdict,
};
use crate::error::{Error, Result};
use crate::games::dag::DagGame;
use crate::games::extended::ExtendedGame;
use crate::games::no_boost::NoBoostGame;
use crate::games::pools::pool_matrix_simple;
use crate::games::selfish::{pool_matrix_selfish, SelfishGame};
use crate::games::simple::SimpleGame;
use crate::games::strong::{sample_membership, StrongSimpleGame};
use crate::games::{GameConfig, GameKind, PayoffMatrix};
use crate::overhead::{overhead_row, OverheadParams, OverheadRow};
use crate::rewards::{altair_block_inclusion_reward, attack_gain_summary, gwei_to_eth, to_f64, Gwei, VoteWeights};
use crate::strategy::{PlayerAction, PlayerKey, StrategyProfile};
use crate::tendermint::{honest_anchor_scenario, withholding_attack_scenario};
use crate::Reward;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub scenario: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub game: Option<GameConfig>,
    #[serde(default)]
    pub tendermint: Option<TendermintSpec>,
    #[serde(default)]
    pub quantify: Option<QuantifySpec>,
    #[serde(default)]
    pub overhead: Option<OverheadSpec>,
    #[serde(default)]
    pub profile: Option<ProfileSpec>,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub output: Option<OutputSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub base: String,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub player: PlayerKey,
    pub action: PlayerAction,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case", deny_unknown_fields)]
pub enum Check {
    Matrix,
    PoolMatrix,
    Nash {
        #[serde(default)]
        profile: Option<String>,
        #[serde(default)]
        coalition: Option<usize>,
    },
    Spne {
        #[serde(default)]
        profile: Option<String>,
        #[serde(default)]
        off_path: bool,
    },
    Dominance {
        player: PlayerKey,
        action: PlayerAction,
    },
    BestResponse {
        player: PlayerKey,
    },
    ForkWeights,
    Security,
    Membership {
        draws: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
pub enum TendermintKind {
    #[serde(rename = "tendermint.withholding")]
    Withholding,
    #[serde(rename = "tendermint.honest-anchor")]
    HonestAnchor,
}

fn one() -> Reward {
    Reward::from_integer(1)
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TendermintSpec {
    pub kind: TendermintKind,
    pub f: u64,
    #[serde(default)]
    pub m: i64,
    #[serde(default = "one", with = "crate::ratio_serde")]
    pub r: Reward,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantifySpec {
    pub n_validators: u64,
    pub stake_gwei: u64,
    /// Decimal ETH strings, e.g. `"0.082"`.
    pub mev_fail_eth: String,
    pub mev_success_eth: String,
    pub pool_share: String,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverheadSpec {
    pub grid: Vec<OverheadParams>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<Format>,
}

/// Exact decimal such as `"0.0711"` as a rational.
pub fn parse_decimal(s: &str) -> Result<Gwei> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return Err(Error::Validation(format!("not a decimal: {s:?}")));
    }
    let digits: i128 = format!("{int}{frac}").parse().map_err(|_| Error::Validation(format!("decimal out of range: {s:?}")))?;
    let v = Gwei::new(digits, 10i128.pow(frac.len() as u32));
    Ok(if neg { -v } else { v })
}

fn decimal(x: Gwei, places: usize) -> String {
    format!("{:.*}", places, to_f64(x))
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Validation(e.to_string()),
        _ => Error::Parse(e.to_string()),
    })
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub trace: Option<PathBuf>,
    pub max_joint_actions: u128,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { seed: None, trace: None, max_joint_actions: 1_000_000 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OutcomeSummary {
    pub profile: String,
    pub success: bool,
    pub final_chain: Vec<u64>,
    pub reorged: Vec<u64>,
    pub equivocations: usize,
    pub payoffs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub check: String,
    pub verdict: String,
    pub detail: Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub scenario: String,
    pub description: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub outcome: Option<OutcomeSummary>,
    pub matrices: Vec<PayoffMatrix>,
    pub checks: Vec<CheckResult>,
    pub details: BTreeMap<String, Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<String>,
}

enum AnyGame {
    Simple(SimpleGame),
    Strong(StrongSimpleGame),
    NoBoost(NoBoostGame),
    Extended(ExtendedGame),
    Selfish(SelfishGame),
    Dag(DagGame),
}

impl AnyGame {
    fn new(cfg: GameConfig) -> Result<Self> {
        Ok(match cfg.kind {
            GameKind::Simple => AnyGame::Simple(SimpleGame::new(cfg)?),
            GameKind::StrongSimple => AnyGame::Strong(StrongSimpleGame::new(cfg)?),
            GameKind::SimpleNoBoost => AnyGame::NoBoost(NoBoostGame::new(cfg)?),
            GameKind::Extended => AnyGame::Extended(ExtendedGame::new(cfg)?),
            GameKind::SelfishMining => AnyGame::Selfish(SelfishGame::new(cfg)?),
            GameKind::DagSecurity => AnyGame::Dag(DagGame::new(cfg)?),
        })
    }

    fn game(&self) -> &dyn Game {
        match self {
            AnyGame::Simple(g) => g,
            AnyGame::Strong(g) => g,
            AnyGame::NoBoost(g) => g,
            AnyGame::Extended(g) => g,
            AnyGame::Selfish(g) => g,
            AnyGame::Dag(g) => g,
        }
    }

    fn matrices(&self) -> Result<Vec<PayoffMatrix>> {
        match self {
            AnyGame::Simple(g) => Ok(vec![g.payoff_matrix()?]),
            AnyGame::Strong(g) => Ok(vec![g.expected_matrix()?]),
            AnyGame::NoBoost(g) => Ok(vec![g.payoff_matrix()?]),
            AnyGame::Extended(g) => {
                let mut out = Vec::new();
                for s in 1..=g.p {
                    out.push(g.attestor_matrix(s)?);
                    if g.leader_player(s).is_some() {
                        out.push(g.leader_matrix(s)?);
                    }
                }
                Ok(out)
            }
            AnyGame::Selfish(g) => Ok(vec![pool_matrix_selfish(&g.cfg)?]),
            AnyGame::Dag(_) => Err(Error::Validation("the DAG scenario has no payoff matrix; use the security check".into())),
        }
    }
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Nash => "nash",
        Verdict::StrongNash => "strong_nash",
        Verdict::Spne => "spne",
        Verdict::NotEquilibrium => "not_equilibrium",
    }
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("report parts serialize")
}

fn equilibrium_result(check: &str, r: &EquilibriumReport) -> CheckResult {
    CheckResult { check: check.into(), verdict: verdict_name(r.verdict).into(), detail: to_value(r) }
}

fn build_profile(game: &dyn Game, name: &str, overrides: &[Override]) -> Result<StrategyProfile> {
    let mut prof = game.profile(name).ok_or_else(|| {
        Error::Validation(format!("unknown profile {name:?}; known: {}", game.profile_names().join(", ")))
    })?;
    let players = game.players();
    for o in overrides {
        if !players.contains(&o.player) {
            return Err(Error::Validation(format!("{} is not a player of {}", o.player, game.name())));
        }
        prof.set(o.player, o.action.clone());
    }
    Ok(prof)
}

fn check_player(game: &dyn Game, p: &PlayerKey) -> Result<()> {
    if game.players().contains(p) {
        Ok(())
    } else {
        Err(Error::Validation(format!("{p} is not a player of {}", game.name())))
    }
}

fn run_game(file: &ScenarioFile, mut cfg: GameConfig, seed: u64, opts: &RunOptions, report: &mut Report) -> Result<()> {
    cfg.seed = seed;
    let any = AnyGame::new(cfg.clone())?;
    let game = any.game();
    let base_name = file.profile.as_ref().map(|p| p.base.clone()).unwrap_or_else(|| game.profile_names()[0].clone());
    let overrides = file.profile.as_ref().map(|p| p.overrides.as_slice()).unwrap_or_default();
    let profile = build_profile(game, &base_name, overrides)?;
    let search = SearchOptions { max_joint_actions: opts.max_joint_actions, ..SearchOptions::default() };

    let out = game.play(&profile)?;
    if let Some(path) = &opts.trace {
        std::fs::write(path, out.trace.to_jsonl())?;
        report.trace = Some(path.display().to_string());
    }
    let mut payoffs = BTreeMap::new();
    for p in game.players() {
        payoffs.insert(p.to_string(), game.payoff(&out, &p).to_string());
    }
    report.outcome = Some(OutcomeSummary {
        profile: base_name.clone(),
        success: out.success,
        final_chain: out.final_chain.iter().map(|b| b.0).collect(),
        reorged: out.reorged.iter().map(|b| b.0).collect(),
        equivocations: out.trace.equivocations().len(),
        payoffs,
    });

    for check in &file.checks {
        match check {
            Check::Matrix => report.matrices.extend(any.matrices()?),
            Check::PoolMatrix => match &any {
                AnyGame::Simple(g) => report.matrices.push(pool_matrix_simple(&g.cfg)?),
                AnyGame::Selfish(g) => report.matrices.push(pool_matrix_selfish(&g.cfg)?),
                _ => return Err(Error::Validation("pool matrices exist for the simple and selfish-mining games".into())),
            },
            Check::Nash { profile: name, coalition } => {
                let prof = match name {
                    Some(n) => build_profile(game, n, &[])?,
                    None => profile.clone(),
                };
                let mut o = search.clone();
                if let Some(k) = coalition {
                    o.coalitions = Some(Coalitions { members: game.players(), max_size: *k });
                }
                let r = verify_nash(game, &prof, &o)?;
                let label = format!("nash({})", name.as_deref().unwrap_or(&base_name));
                report.checks.push(equilibrium_result(&label, &r));
            }
            Check::Spne { profile: name, off_path } => {
                let prof = match name {
                    Some(n) => build_profile(game, n, &[])?,
                    None => profile.clone(),
                };
                let o = SearchOptions { off_path: *off_path, ..search.clone() };
                let r = verify_spne(game, &prof, &o)?;
                let label = format!("spne({})", name.as_deref().unwrap_or(&base_name));
                report.checks.push(equilibrium_result(&label, &r));
            }
            Check::Dominance { player, action } => {
                check_player(game, player)?;
                let cands = game.candidates(player);
                let opps = enumerate_opponents(game, &profile, player, opts.max_joint_actions)?;
                let d = dominance_check(game, player, action, &cands, &opps, opts.max_joint_actions)?;
                report.checks.push(CheckResult {
                    check: format!("dominance({player}, {})", action.label()),
                    verdict: format!("{d:?}"),
                    detail: json!({ "opponent_profiles": opps.len() }),
                });
            }
            Check::BestResponse { player } => {
                check_player(game, player)?;
                let br = best_response(game, &profile, player, &game.candidates(player))?;
                let prescribed = profile.get(player).cloned();
                let ok = prescribed.as_ref().is_some_and(|a| br.best.contains(a));
                let rows: Vec<Value> =
                    br.payoffs.iter().map(|(a, u)| json!({ "action": a.label(), "payoff": u.to_string() })).collect();
                report.checks.push(CheckResult {
                    check: format!("best_response({player})"),
                    verdict: if ok { "prescribed_is_best".into() } else { "prescribed_not_best".into() },
                    detail: json!({ "payoffs": rows, "best": br.best.iter().map(|a| a.label()).collect::<Vec<_>>() }),
                });
            }
            Check::ForkWeights => {
                let AnyGame::Selfish(g) = &any else {
                    return Err(Error::Validation("fork weights exist only for the selfish-mining game".into()));
                };
                let w = g.fork_weights(&out)?;
                report.checks.push(CheckResult {
                    check: "fork_weights".into(),
                    verdict: if out.success { "adversarial_fork_wins".into() } else { "canonical_fork_wins".into() },
                    detail: to_value(&w),
                });
            }
            Check::Security => {
                let AnyGame::Dag(g) = &any else {
                    return Err(Error::Validation("the security check applies to the DAG scenario".into()));
                };
                let r = g.security_report(&search)?;
                report.checks.push(CheckResult {
                    check: format!("security({:?})", r.mechanism),
                    verdict: verdict_name(r.verdict).into(),
                    detail: to_value(&r),
                });
            }
            Check::Membership { draws } => {
                let AnyGame::Strong(g) = &any else {
                    return Err(Error::Validation("membership sampling applies to the strong simple game".into()));
                };
                let c = &g.inner.cfg;
                let est = sample_membership(seed, *draws, c.committee_size as usize, c.epoch_length as usize)?;
                report.checks.push(CheckResult {
                    check: "membership".into(),
                    verdict: format!("{:.4}", est.mean),
                    detail: to_value(&est),
                });
            }
        }
    }
    Ok(())
}

fn run_tendermint(spec: &TendermintSpec, report: &mut Report) -> Result<()> {
    match spec.kind {
        TendermintKind::Withholding => {
            let r = withholding_attack_scenario(spec.f, spec.m, spec.r)?;
            report.checks.push(CheckResult {
                check: "nash(withholding)".into(),
                verdict: verdict_name(r.nash.verdict).into(),
                detail: to_value(&r.nash),
            });
            report.details.insert("withholding".into(), to_value(&r));
        }
        TendermintKind::HonestAnchor => {
            let r = honest_anchor_scenario(spec.f)?;
            let all_best = r.best_responses.iter().all(|b| b.best == vec![crate::tendermint::TmAction::Protocol]);
            report.checks.push(CheckResult {
                check: "myopic_best_response".into(),
                verdict: if all_best { "protocol".into() } else { "deviation".into() },
                detail: to_value(&r.best_responses),
            });
            report.details.insert("honest_anchor".into(), to_value(&r));
        }
    }
    Ok(())
}

fn run_quantify(q: &QuantifySpec, report: &mut Report) -> Result<()> {
    let inc = altair_block_inclusion_reward(q.n_validators, q.stake_gwei, &VoteWeights::default())?;
    let gain = attack_gain_summary(&inc, parse_decimal(&q.mev_fail_eth)?, parse_decimal(&q.mev_success_eth)?, parse_decimal(&q.pool_share)?);
    let eth = |g: Gwei| decimal(g, 4);
    report.details.insert(
        "inclusion".into(),
        json!({
            "all_votes_eth": eth(gwei_to_eth(inc.all_three_votes)),
            "success_eth": eth(gwei_to_eth(inc.all_three_votes + inc.source_target_only)),
            "head_only_eth": eth(gwei_to_eth(inc.head_only)),
            "head_over_all": (inc.head_only / inc.all_three_votes).to_string(),
            "success_over_fail": ((inc.all_three_votes + inc.source_target_only) / inc.all_three_votes).to_string(),
        }),
    );
    report.details.insert(
        "attack_gain".into(),
        json!({
            "block_reward_fail_eth": eth(gain.fail_eth),
            "block_reward_success_eth": eth(gain.success_eth),
            "delta_eth": eth(gain.delta_eth),
            "delta_pct": decimal(gain.delta_pct, 1),
            "pool_head_loss_eth": eth(gain.pool_loss_eth),
            "pool_net_eth": eth(gain.pool_net_eth),
        }),
    );
    Ok(())
}

fn run_overhead(spec: &OverheadSpec, report: &mut Report) -> Result<()> {
    let rows: Vec<OverheadRow> = spec
        .grid
        .iter()
        .map(|p| {
            p.validate()?;
            overhead_row(p)
        })
        .collect::<Result<_>>()?;
    report.details.insert("overhead".into(), to_value(&rows));
    Ok(())
}

/// Runs a parsed scenario.
pub fn run_scenario(file: &ScenarioFile, opts: &RunOptions) -> Result<Report> {
    let sections = [file.game.is_some(), file.tendermint.is_some(), file.quantify.is_some(), file.overhead.is_some()];
    if sections.iter().filter(|x| **x).count() != 1 {
        return Err(Error::Validation("a scenario needs exactly one of game, tendermint, quantify, overhead".into()));
    }
    if file.game.is_none() && (!file.checks.is_empty() || file.profile.is_some()) {
        return Err(Error::Validation("checks and profiles apply to game scenarios only".into()));
    }
    let seed = opts.seed.or(file.seed).unwrap_or(0);
    let mut report = Report {
        scenario: file.scenario.clone(),
        description: file.description.clone(),
        seed,
        outcome: None,
        matrices: Vec::new(),
        checks: Vec::new(),
        details: BTreeMap::new(),
        trace: None,
    };
    if let Some(cfg) = &file.game {
        run_game(file, cfg.clone(), seed, opts, &mut report)?;
    } else if let Some(t) = &file.tendermint {
        run_tendermint(t, &mut report)?;
    } else if let Some(q) = &file.quantify {
        run_quantify(q, &mut report)?;
    } else if let Some(o) = &file.overhead {
        run_overhead(o, &mut report)?;
    }
    Ok(report)
}

pub fn run_scenario_path(path: &Path, opts: &RunOptions) -> Result<Report> {
    let text = std::fs::read_to_string(path)?;
    run_scenario(&parse_scenario(&text)?, opts)
}

/// Bundled scenarios as (id, JSON).
pub const BUNDLED: &[(&str, &str)] = &[
    ("dag-security", include_str!("../scenarios/dag-security.json")),
    ("extended-spne", include_str!("../scenarios/extended-spne.json")),
    ("inclusion-quantify", include_str!("../scenarios/inclusion-quantify.json")),
    ("overhead-grid", include_str!("../scenarios/overhead-grid.json")),
    ("pool-simple", include_str!("../scenarios/pool-simple.json")),
    ("selfish-mining", include_str!("../scenarios/selfish-mining.json")),
    ("simple-attack", include_str!("../scenarios/simple-attack.json")),
    ("strong-simple", include_str!("../scenarios/strong-simple.json")),
    ("tendermint-anchor", include_str!("../scenarios/tendermint-anchor.json")),
    ("tendermint-withholding", include_str!("../scenarios/tendermint-withholding.json")),
];

pub fn bundled(id: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(k, _)| *k == id).map(|(_, v)| *v)
}

/// Bundled scenarios plus the `*.json` files of `user_dir`, sorted by id.
pub fn list_scenarios(user_dir: Option<&Path>) -> Result<Vec<(String, String)>> {
    let mut out: BTreeMap<String, String> = BTreeMap::new();
    for (id, text) in BUNDLED {
        let f = parse_scenario(text)?;
        out.insert((*id).to_string(), f.description);
    }
    if let Some(dir) = user_dir {
        for (path, f) in read_dir_scenarios(dir)? {
            let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or(f.scenario.clone());
            out.insert(id, f.description);
        }
    }
    Ok(out.into_iter().collect())
}

fn json_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

fn read_dir_scenarios(dir: &Path) -> Result<Vec<(PathBuf, ScenarioFile)>> {
    json_files(dir)?
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p)?;
            Ok((p, parse_scenario(&text)?))
        })
        .collect()
}

/// Every `*.json` in `dir`, run in parallel, in file-name order.
pub fn run_batch(dir: &Path, opts: &RunOptions) -> Result<Vec<(PathBuf, Result<Report>)>> {
    use rayon::prelude::*;
    let files = json_files(dir)?;
    let opts = RunOptions { trace: None, ..opts.clone() };
    Ok(files.into_par_iter().map(|p| { let r = run_scenario_path(&p, &opts); (p, r) }).collect())
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "scenario: {}  (seed {})", self.scenario, self.seed);
        if !self.description.is_empty() {
            let _ = writeln!(s, "{}", self.description);
        }
        if let Some(o) = &self.outcome {
            let _ = writeln!(s, "\nprofile {}: success={}", o.profile, o.success);
            let _ = writeln!(s, "  final chain: {:?}", o.final_chain);
            let _ = writeln!(s, "  reorged:     {:?}", o.reorged);
            let _ = writeln!(s, "  equivocations by non-adversarial validators: {}", o.equivocations);
        }
        for m in &self.matrices {
            let _ = write!(s, "\n{}", m.render());
        }
        if !self.checks.is_empty() {
            let _ = writeln!(s);
            let width = self.checks.iter().map(|c| c.check.len()).max().unwrap_or(0);
            for c in &self.checks {
                let _ = writeln!(s, "{:width$}  {}", c.check, c.verdict);
            }
        }
        for (k, v) in &self.details {
            let _ = writeln!(s, "\n{k}:");
            match (k.as_str(), v) {
                ("overhead", Value::Array(rows)) => s.push_str(&render_overhead(rows)),
                (_, Value::Object(map)) => {
                    let width = map.keys().map(String::len).max().unwrap_or(0);
                    for (kk, vv) in map {
                        let shown = match vv {
                            Value::String(x) => x.clone(),
                            Value::Array(_) | Value::Object(_) => vv.to_string(),
                            other => other.to_string(),
                        };
                        let _ = writeln!(s, "  {kk:width$}  {shown}");
                    }
                }
                _ => {
                    let _ = writeln!(s, "  {v}");
                }
            }
        }
        s
    }
}

fn render_overhead(rows: &[Value]) -> String {
    let mut s = format!(
        "  {:>5} {:>7} {:>9} {:>10} {:>9} {:>7} {:>10}  {}\n",
        "N_agg", "N_limit", "current", "optimistic", "delta", "%delta", "worst", "verifier (optimistic)"
    );
    for r in rows {
        let frac = r["optimistic"]["fraction_of_block"].as_str().unwrap_or("0");
        let pct = crate::ratio_serde::parse(frac).map(|x| 100.0 * *x.numer() as f64 / *x.denom() as f64).unwrap_or(0.0);
        let bytes = |v: &Value| v.as_u64().map(|b| b.to_string()).or_else(|| v.as_str().map(str::to_string)).unwrap_or_default();
        let cv = &r["verifier_optimistic"];
        let _ = writeln!(
            s,
            "  {:>5} {:>7} {:>9} {:>10} {:>9} {:>6.2}% {:>10}  {} C_add + {} C_pair",
            r["n_agg"].as_u64().unwrap_or(0),
            r["n_limit"].as_u64().unwrap_or(0),
            bytes(&r["current_bytes"]),
            bytes(&r["optimistic"]["size"]),
            bytes(&r["optimistic"]["delta"]),
            pct,
            bytes(&r["worst_bytes"]),
            cv["add"],
            cv["pair"]
        );
    }
    s
}

impl Report {
    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Text => self.render_text(),
            Format::Json => self.to_json(),
        }
    }

    /// Whether every equilibrium check that ran came out as an equilibrium.
    pub fn all_equilibria(&self) -> bool {
        self.checks.iter().all(|c| c.verdict != "not_equilibrium")
    }
}

#[cfg(test)]
mod tests {
    use num_traits::Zero;

    use super::*;

    #[test]
    fn decimals() {
        assert_eq!(parse_decimal("0.082").unwrap(), Gwei::new(82, 1000));
        assert_eq!(parse_decimal("12").unwrap(), Gwei::from_integer(12));
        assert!(parse_decimal("1e3").is_err());
        assert!(parse_decimal("").is_err());
        assert!(Gwei::zero() < parse_decimal("0.278").unwrap());
    }

    #[test]
    fn syntax_vs_data_errors() {
        assert!(matches!(parse_scenario("{"), Err(Error::Parse(_))));
        assert!(matches!(parse_scenario(r#"{"scenario": "x", "bogus": 1}"#), Err(Error::Validation(_))));
    }

    #[test]
    fn every_bundled_scenario_parses() {
        for (id, text) in BUNDLED {
            let f = parse_scenario(text).unwrap_or_else(|e| panic!("{id}: {e}"));
            assert_eq!(&f.scenario, id);
        }
    }

    #[test]
    fn two_sections_rejected() {
        let f = parse_scenario(r#"{"scenario": "x", "tendermint": {"kind": "tendermint.honest-anchor", "f": 1},
            "overhead": {"grid": []}}"#)
        .unwrap();
        assert!(matches!(run_scenario(&f, &RunOptions::default()), Err(Error::Validation(_))));
    }

    #[test]
    fn unknown_profile_rejected() {
        let f = parse_scenario(r#"{"scenario": "x", "game": {"kind": "simple"}, "profile": {"base": "nope"}}"#).unwrap();
        assert!(matches!(run_scenario(&f, &RunOptions::default()), Err(Error::Validation(_))));
    }
}

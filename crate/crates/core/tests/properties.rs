mod common;

use proptest::prelude::*;

use commitlab::chain::{Slot, TieBreakPolicy};
use commitlab::overhead::{optimistic_growth, OverheadParams};
use commitlab::reward;
use commitlab::scenario::{parse_scenario, run_scenario, RunOptions, BUNDLED};
use commitlab::tendermint::{
    honest_anchor_scenario, tm_vote_reward, withholding_attack_scenario, TendermintMsg, TmKind, TmParams, WithholdingGame,
};
use commitlab::equilibrium::Verdict;

use common::{fork_choice, ids, TreeSpec};

fn tree_strategy() -> impl Strategy<Value = TreeSpec> {
    (2usize..9)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<usize>> = (1..n).map(|k| (0..k).boxed()).collect();
            let votes = prop::collection::vec((0u32..6, 0i64..=n as i64, 0..n), 0..14);
            (parents, prop::collection::vec(any::<bool>(), n), votes)
        })
        .prop_map(|(parents, adv, votes)| {
            let mut s = TreeSpec::chain_shaped(&parents);
            s.adversarial = adv;
            s.adversarial[0] = false;
            // A vote may not point at a block from its future.
            s.votes = votes.into_iter().map(|(v, slot, t)| (v, slot.max(s.slots[t]), t)).collect();
            s
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn fork_choice_matches_recount(spec in tree_strategy(), boost in 0u64..4, boosted in any::<prop::sample::Index>(), lex in any::<bool>()) {
        let tie = if lex { TieBreakPolicy::Lexicographic } else { TieBreakPolicy::AdversaryFavoring };
        let tree = spec.build();
        let b = boosted.index(spec.len());
        for now in [spec.slots[b], spec.slots[b] + 1] {
            let got = ids(&tree.canonical_chain(&fork_choice(now, Some(b), boost, tie)));
            prop_assert_eq!(got, spec.head(Some(b), boost, now, tie));
        }
    }

    #[test]
    fn canonical_chain_is_a_path_from_genesis(spec in tree_strategy()) {
        let tree = spec.build();
        let chain = ids(&tree.canonical_chain(&fork_choice(spec.len() as Slot, None, 0, TieBreakPolicy::AdversaryFavoring)));
        prop_assert_eq!(chain[0], 0);
        for w in chain.windows(2) {
            prop_assert_eq!(spec.parents[w[1]], Some(w[0]));
        }
    }

    #[test]
    fn vote_reward_monotone_in_evidence(f in 1u64..6, extra in 0usize..10, round in 1i64..5) {
        let params = TmParams { f };
        let vote = TendermintMsg::vote(TmKind::Prevote, 1, round, None, commitlab::chain::ValidatorId(0));
        let q = params.quorum();
        for k in 0..q + extra {
            let a = tm_vote_reward(&vote, (round + 1, 1), k, params);
            let b = tm_vote_reward(&vote, (round + 1, 1), k + 1, params);
            prop_assert!(!a || b);
            prop_assert_eq!(a, k >= q);
        }
    }

    #[test]
    fn optimistic_size_grows_by_sixteen_per_aggregator(n_agg in 1u64..512, limit in any::<prop::sample::Index>()) {
        let p = OverheadParams::with_agg(n_agg, 1 + limit.index(n_agg as usize) as u64);
        prop_assert_eq!(optimistic_growth(&p).size.exact_bytes(), Some(32_960 + 16 * n_agg));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn withholding_stalls_exactly_m_rounds(f in 1u64..=3, m in 1i64..=4, unit in 1i64..4) {
        let w = withholding_attack_scenario(f, m, reward(unit)).unwrap();
        prop_assert_eq!(w.stalled_rounds, m);
        prop_assert_eq!(w.finalized_round, Some(m + 1));
        prop_assert_eq!(w.payoff_per_validator, Some(reward(unit * m)));
        prop_assert_eq!(w.nash.verdict, Verdict::Nash);

        let g = WithholdingGame::new(f, m, reward(unit)).unwrap();
        let (out, _) = g.payoffs(&g.prescribed()).unwrap();
        prop_assert_eq!(out.invariant_breaks, 0);
        prop_assert!(out.states.iter().all(|s| s.valid_round >= s.locked_round));
        let values: std::collections::BTreeSet<_> = out.finalized.iter().map(|(_, b)| *b).collect();
        prop_assert!(values.len() <= 1);
    }

    #[test]
    fn honest_anchor_finalizes_first_round(f in 1u64..=3) {
        let a = honest_anchor_scenario(f).unwrap();
        prop_assert_eq!(a.first_finalized_round, Some(1));
        prop_assert_eq!(a.finalized_block, Some(a.honest_proposal));
        prop_assert!(a.reorg_resilient);
    }

    #[test]
    fn bundled_scenarios_are_reproducible(which in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let (id, text) = BUNDLED[which.index(BUNDLED.len())];
        let file = parse_scenario(text).unwrap();
        let opts = RunOptions { seed: Some(seed), ..RunOptions::default() };
        let a = run_scenario(&file, &opts).unwrap().to_json();
        let b = run_scenario(&file, &opts).unwrap().to_json();
        prop_assert!(a == b, "{} differs between runs", id);
    }
}

use commitlab::overhead::{
    aggregator_cost, current_block_aggregate_bytes, optimistic_growth, verifier_cost, worst_case_evidence_bytes, Mode, OverheadParams,
};

fn main() -> commitlab::Result<()> {
    for (n_agg, n_limit) in [(16, 8), (64, 32), (128, 64)] {
        let p = OverheadParams::with_agg(n_agg, n_limit);
        let g = optimistic_growth(&p);
        println!(
            "N_agg {n_agg:>3}: {} -> {} (+{}, {:.2}% of a block), worst {}",
            current_block_aggregate_bytes(&p),
            g.size,
            g.delta,
            g.percent(),
            worst_case_evidence_bytes(&p)
        );
        println!("  aggregator {}  verifier {}", aggregator_cost(&p, Mode::Practical)?, verifier_cost(&p, Mode::Optimistic)?);
    }
    Ok(())
}

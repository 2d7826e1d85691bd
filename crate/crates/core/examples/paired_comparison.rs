//! Paired t-test between two methods' per-trial scores.
//!
//! cargo run --example paired_comparison

use harmony::stats::paired_t_test;

fn main() -> anyhow::Result<()> {
    let forest = [0.72, 0.69, 0.75, 0.71, 0.74, 0.70, 0.73, 0.76, 0.68, 0.72];
    let baseline = [0.70, 0.66, 0.71, 0.70, 0.69, 0.67, 0.72, 0.71, 0.66, 0.70];
    let c = paired_t_test(&forest, &baseline)?;
    println!("mean {:.3} vs {:.3}", c.mean_a, c.mean_b);
    println!("diff {:+.4}, 95% CI [{:+.4}, {:+.4}]", c.mean_diff, c.ci95.0, c.ci95.1);
    println!("t({}) = {:.3}, p = {:.2e}", c.df, c.t_stat, c.p_value);
    Ok(())
}

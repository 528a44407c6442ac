//! Analytic rate budget, checked against a short Monte Carlo run.
use tripletsim::budget::{expected_rates, mc_vs_budget, RateBudget};
use tripletsim::config::bundled_config;

fn main() -> tripletsim::Result<()> {
    let full = bundled_config("paper_full_scale")?;
    let b = expected_rates(&full)?;
    println!("pairs detected: {:.2} /h", b.s3s4_pairs_detected_hz * 3600.0);
    println!("herald factor:  {:.4}", b.herald_factor);
    println!(
        "triples in {:.0} h: {:.1}",
        full.run.duration_ps as f64 * 1e-12 / 3600.0,
        RateBudget::count(b.triples_detected_hz, full.run.duration_ps)
    );
    println!("time to SNR {}: {:.0} h", b.target_snr, b.time_to_snr_s / 3600.0);

    let scaled = bundled_config("paper_s3s4_scaled")?;
    let report = mc_vs_budget(&scaled, 20_000_000_000_000, &[1, 2, 3])?;
    print!("{}", report.to_csv());
    println!("max |pull| {:.2}, passed: {}", report.max_abs_pull(), report.passed());

    let mut tiny = scaled.clone();
    tiny.run.duration_ps = 1_000_000_000;
    if let Err(e) = mc_vs_budget(&tiny, tiny.run.duration_ps, &[1]) {
        println!("{e}");
    }
    Ok(())
}

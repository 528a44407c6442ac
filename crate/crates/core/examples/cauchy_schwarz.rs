//! Cauchy-Schwarz tests with propagated uncertainties.
use tripletsim::correlator::CorrelationResult;
use tripletsim::nonclassicality::{cs_three, cs_two, DEFAULT_K_SIGMA};

fn main() -> tripletsim::Result<()> {
    let g = CorrelationResult::fixed;
    let r = cs_two(&g(126.7, 0.5), &g(1.16, 0.01), &g(1.17, 0.01), DEFAULT_K_SIGMA)?;
    print!("{}", r.to_kv());

    let r3 = cs_three(&g(11.03, 0.5), &g(1.16, 0.01), &g(1.0, 0.05), &g(1.0, 0.05), DEFAULT_K_SIGMA)?;
    println!("{}", tripletsim::nonclassicality::CsReport::csv_header());
    println!("{}", r3.csv_row());

    // classical light sits on the boundary
    let classical = cs_two(&g(2.0, 0.02), &g(2.0, 0.02), &g(2.0, 0.02), DEFAULT_K_SIGMA)?;
    println!("thermal light: R = {} violated = {}", classical.value, classical.violated);
    Ok(())
}

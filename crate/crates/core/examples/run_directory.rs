//! The command-line flow: simulate into a run directory, analyze it, report.
use tripletsim::cli::run;

fn main() -> tripletsim::Result<()> {
    let dir = std::env::temp_dir().join("tripletsim-example-run");
    let d = dir.to_str().expect("utf-8 temp path");
    let mut out = std::io::stdout();
    run(
        ["tripletsim", "simulate", "--config", "paper_s3s4_scaled", "--out", d, "--set", "run.seed=11"],
        &mut out,
    )?;
    run(["tripletsim", "analyze", "--tags", d, "--out", d], &mut std::io::sink())?;
    run(["tripletsim", "report", "--run", d], &mut out)?;
    Ok(())
}

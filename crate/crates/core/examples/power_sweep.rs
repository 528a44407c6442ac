//! Auto-correlation of one down-converted arm against pump power.
use tripletsim::cli::sweep;
use tripletsim::config::bundled_config;

fn main() -> tripletsim::Result<()> {
    let cfg = bundled_config("paper_coherent_s4")?;
    let csv = sweep(&cfg, "coherent_pump_rate_hz", &[3e11, 1e11, 1e10], true)?;
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let (g, s) = (col("g2_auto"), col("g2_auto_sigma"));
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        println!("pump {:>8} /s  g2 = {} ± {}", f[0], &f[g][..5], &f[s][..5]);
    }
    Ok(())
}

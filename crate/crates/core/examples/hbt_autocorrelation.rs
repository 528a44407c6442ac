//! Auto-correlation through a virtual 50/50 splitter.
//!
//! A thermal source gives g2(0) = 2 before detection. Behind a dead-time
//! limited detector the first bins after the dead time show the
//! recovery excess 1 + r*tau instead.
use tripletsim::correlator::{g2_auto, HistogramSpec};
use tripletsim::detector::{detect_free, DetectorParams};
use tripletsim::rng::{keyed_rng, stream};
use tripletsim::source::{process_events, Bunching};
use tripletsim::TagStream;

fn main() -> tripletsim::Result<()> {
    let duration = 20_000_000_000_000u64;
    let mut rng = keyed_rng(5, stream::id(0, stream::PAIR_TIMES), 0);
    let thermal = Bunching::Thermal {
        modes: 1.0,
        block_ps: 1_000_000,
    };
    let times = process_events(&mut rng, 50_000.0, thermal, 0, duration);
    let times: Vec<u64> = times.into_iter().filter(|&t| t < duration).collect();
    let light = TagStream::from_sorted_times(0, times, duration)?;

    let spec = HistogramSpec::new(100_000, (-5_000_000, 5_000_000), 0, 0)?;
    let (_, g) = g2_auto(&light, &spec, 0, 1)?;
    println!("thermal light: g2(0) = {:.3} ± {:.3}", g.value, g.stat_sigma);

    let det = DetectorParams {
        efficiency: 1.0,
        dark_rate_hz: 0.0,
        dead_time_ps: 1e6,
        jitter_sigma_ps: 0.0,
        ..DetectorParams::default()
    };
    let poisson = process_events(&mut rng, 200_000.0, Bunching::Poisson, 0, duration);
    let clicks = detect_free(&TagStream::from_sorted_times(0, poisson, duration)?, &det, 2)?;
    let spec = HistogramSpec::new(20_000, (-4_000_000, 4_000_000), 0, 0)?;
    let (_, g) = g2_auto(&clicks, &spec, 1_000_000, 1)?;
    println!(
        "Poisson light, 1 us dead time: g2 = {:.3} ± {:.3} (1 + r*tau = {:.3})",
        g.value,
        g.stat_sigma,
        1.0 + 200_000.0 * 1e-6
    );
    Ok(())
}

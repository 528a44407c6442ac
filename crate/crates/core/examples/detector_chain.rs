//! Free-running and gated detection: efficiency, darks, dead time, jitter.
use tripletsim::detector::{detect_free, detect_gated, DetectorMode, DetectorParams, GateParams};
use tripletsim::TagStream;

fn main() -> tripletsim::Result<()> {
    let seconds = 10;
    let dark_only = DetectorParams {
        efficiency: 0.5,
        dark_rate_hz: 400.0,
        dead_time_ps: 1e6,
        jitter_sigma_ps: 200.0,
        ..DetectorParams::default()
    };
    let clicks = detect_free(&TagStream::empty(seconds * 1_000_000_000_000), &dark_only, 3)?;
    println!("dark counts: {:.1} /s", clicks.rate_hz());

    let min_gap = clicks.times().windows(2).map(|w| w[1] - w[0]).min().unwrap_or(0);
    println!("closest clicks: {min_gap} ps apart");

    // two photons 0.5 us apart, 1 us dead time: only the first clicks
    let ideal = DetectorParams {
        efficiency: 1.0,
        dark_rate_hz: 0.0,
        dead_time_ps: 1e6,
        jitter_sigma_ps: 0.0,
        ..DetectorParams::default()
    };
    let photons = TagStream::from_sorted_times(0, vec![1_000_000, 1_500_000], 10_000_000)?;
    println!("dead time keeps {} of 2", detect_free(&photons, &ideal, 1)?.len());

    let gated = DetectorParams {
        mode: DetectorMode::Gated,
        ..ideal
    };
    let gate = GateParams {
        gate_delay_ps: 0.0,
        gate_width_ps: 10_000.0,
        dark_prob_per_gate: 0.0,
        trigger_channel: 3,
    };
    let triggers = TagStream::from_sorted_times(3, vec![0, 100_000], 200_000)?;
    let photons = TagStream::from_sorted_times(2, vec![5_000, 50_000, 104_000], 200_000)?;
    let out = detect_gated(&photons, &triggers, &gated, &gate, 1)?;
    println!("gated clicks: {:?}", out.times());
    Ok(())
}

//! Signal-1 / signal-2 pair emission and the rate, bandwidth and delay models
//! behind it.
use tripletsim::config::bundled_config;
use tripletsim::correlator::{cross_histogram, HistogramSpec};
use tripletsim::source::{generate_srs, FwmDelayModel};

fn main() -> tripletsim::Result<()> {
    let cfg = bundled_config("paper_pair_source")?;
    let rate = cfg.source.rate_model()?;
    for detuning in [850.0, 1200.0, 1570.0] {
        println!(
            "detuning {detuning} MHz: pair rate {:.3e} /s at {} mW",
            rate.pair_rate_hz(detuning, cfg.source.pump1_power_mw)?,
            cfg.source.pump1_power_mw
        );
    }
    let tau = cfg.source.correlation_model()?;
    for t in [70.0, 80.0, 90.0] {
        println!("cell {t} C: correlation time {} ps", tau.correlation_time_ps(t)?);
    }
    let fwm = FwmDelayModel {
        slope_ps_per_ghz: 5_000.0,
        ..cfg.source.fwm_model()
    };
    for d in [0.4, 0.8, 1.2] {
        println!("pump-1 detuning {d} GHz shifts the peak by {} ps", fwm.offset_shift_ps(d));
    }

    let params = cfg.source.resolve()?;
    let (s1, s2) = generate_srs(&params, 100_000_000_000, 7)?;
    println!("0.1 s: {} signal-1, {} signal-2 photons", s1.len(), s2.len());

    let spec = HistogramSpec::new(2_000, (0, 60_000), 0, 1)?;
    let h = cross_histogram(&s1, &s2, &spec)?;
    let k = h.argmax();
    println!("delay peak at {} ps with {} pairs", spec.bin_start(k), h.counts[k]);
    Ok(())
}

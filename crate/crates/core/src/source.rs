//! Emission-time generation for the cascaded source.
//!
//! The SRS stage is a correlated point process: pairs arrive at rate
//! `pair_rate_hz`, signal 1 is emitted at the pair time `t` and signal 2 at
//! `t + offset + E` with `E ~ Exp(correlation_time_ps)`. The SPDC stage
//! converts each signal-2 photon into a signal-3/signal-4 pair with a small
//! probability, or (coherent mode) generates pairs directly from a pump with
//! thermal multi-pair statistics.
//!
//! Bunched (thermal) emission is a Cox process on a fixed block grid: within
//! each block of length `block_ps` the intensity is `rate * G` with
//! `G ~ Gamma(K, 1/K)`, which gives `g2(0) = 1 + 1/K` decaying linearly to 1
//! at one block length.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, keyed_rng, stream, SimRng};
use crate::timetag::{channel, TagStream};

/// SRS pair source parameters, with rates and correlation time resolved.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceParams {
    pub pair_rate_hz: f64,
    pub two_photon_detuning_mhz: f64,
    pub pump1_detuning_ghz: f64,
    pub pump1_power_mw: f64,
    pub pump2_power_mw: f64,
    pub cell_temperature_c: f64,
    pub correlation_time_ps: f64,
    pub pair_delay_offset_ps: f64,
    pub noise_rate_s1_hz: f64,
    pub noise_rate_s2_hz: f64,
    /// Fibre collection efficiency of signal 2 (feeds both D1 and the waveguide).
    pub s2_collection_efficiency: f64,
    /// Thermal mode count of the pair emission; `None` is Poissonian.
    pub mode_count: Option<f64>,
    pub bunching_time_ps: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        Self {
            pair_rate_hz: 0.0,
            two_photon_detuning_mhz: 1570.0,
            pump1_detuning_ghz: 0.8,
            pump1_power_mw: 115.0,
            pump2_power_mw: 12.5,
            cell_temperature_c: 86.0,
            correlation_time_ps: 15_000.0,
            pair_delay_offset_ps: 26_000.0,
            noise_rate_s1_hz: 0.0,
            noise_rate_s2_hz: 0.0,
            s2_collection_efficiency: 0.70,
            mode_count: None,
            bunching_time_ps: 10_000_000.0,
        }
    }
}

fn finite_nonneg(key: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::config(key, format!("must be finite and >= 0, got {v}")));
    }
    Ok(())
}

fn probability(key: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::config(key, format!("must lie in [0, 1], got {v}")));
    }
    Ok(())
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        finite_nonneg("source.pair_rate_hz", self.pair_rate_hz)?;
        finite_nonneg("source.noise_rate_s1_hz", self.noise_rate_s1_hz)?;
        finite_nonneg("source.noise_rate_s2_hz", self.noise_rate_s2_hz)?;
        finite_nonneg("source.pair_delay_offset_ps", self.pair_delay_offset_ps)?;
        probability("source.s2_collection_efficiency", self.s2_collection_efficiency)?;
        for (k, v) in [
            ("source.two_photon_detuning_mhz", self.two_photon_detuning_mhz),
            ("source.pump1_detuning_ghz", self.pump1_detuning_ghz),
            ("source.cell_temperature_c", self.cell_temperature_c),
        ] {
            if !v.is_finite() {
                return Err(Error::config(k, "must be finite"));
            }
        }
        for (k, v) in [
            ("source.pump1_power_mw", self.pump1_power_mw),
            ("source.pump2_power_mw", self.pump2_power_mw),
            ("source.correlation_time_ps", self.correlation_time_ps),
            ("source.bunching_time_ps", self.bunching_time_ps),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::config(k, format!("must be > 0, got {v}")));
            }
        }
        if let Some(k) = self.mode_count {
            if !k.is_finite() || k < 1.0 {
                return Err(Error::config("source.mode_count", "must be >= 1"));
            }
        }
        Ok(())
    }

    fn check_duration(&self, duration_ps: u64) -> Result<()> {
        if duration_ps == 0 {
            return Err(Error::config("run.duration_ps", "must be > 0"));
        }
        let min = 10.0 * (self.pair_delay_offset_ps + self.correlation_time_ps);
        if (duration_ps as f64) <= min {
            return Err(Error::config(
                "run.duration_ps",
                format!("must exceed 10 x (offset + correlation time) = {min} ps"),
            ));
        }
        Ok(())
    }

    fn bunching(&self) -> Bunching {
        match self.mode_count {
            Some(k) => Bunching::Thermal {
                modes: k,
                block_ps: self.bunching_time_ps.round().max(1.0) as u64,
            },
            None => Bunching::Poisson,
        }
    }
}

/// SPDC waveguide parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdcParams {
    pub conversion_efficiency: f64,
    pub pair_jitter_ps: f64,
    pub coherent_pump_rate_hz: f64,
    pub mode_count: f64,
    /// Block length of the thermal intensity fluctuations in coherent mode.
    pub coherence_time_ps: f64,
    /// Input coupling of the waveguide; enters only the generated-triplet
    /// figure of the rate budget.
    pub input_coupling: f64,
}

impl Default for SpdcParams {
    fn default() -> Self {
        Self {
            conversion_efficiency: 1e-6,
            pair_jitter_ps: 10.0,
            coherent_pump_rate_hz: 0.0,
            mode_count: 50.0,
            coherence_time_ps: 1_000_000.0,
            input_coupling: 0.88,
        }
    }
}

impl SpdcParams {
    pub fn validate(&self) -> Result<()> {
        probability("spdc.conversion_efficiency", self.conversion_efficiency)?;
        probability("spdc.input_coupling", self.input_coupling)?;
        finite_nonneg("spdc.pair_jitter_ps", self.pair_jitter_ps)?;
        finite_nonneg("spdc.coherent_pump_rate_hz", self.coherent_pump_rate_hz)?;
        if !self.mode_count.is_finite() || self.mode_count < 1.0 {
            return Err(Error::config("spdc.mode_count", "must be >= 1"));
        }
        if !self.coherence_time_ps.is_finite() || self.coherence_time_ps < 1.0 {
            return Err(Error::config("spdc.coherence_time_ps", "must be >= 1"));
        }
        Ok(())
    }
}

/// Piecewise-linear lookup table without extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Table1D {
    what: &'static str,
    knots: Vec<(f64, f64)>,
}

impl Table1D {
    pub fn new(what: &'static str, mut knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::config_msg(format!("{what}: table is empty")));
        }
        if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::config_msg(format!("{what}: non-finite knot")));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::config_msg(format!("{what}: duplicate knot")));
        }
        Ok(Self { what, knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn range(&self) -> (f64, f64) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (min, max) = self.range();
        if !(min..=max).contains(&x) {
            return Err(Error::Range {
                what: self.what,
                value: x,
                min,
                max,
            });
        }
        let i = self.knots.partition_point(|k| k.0 < x);
        if self.knots[i].0 == x {
            return Ok(self.knots[i].1);
        }
        let (x0, y0) = self.knots[i - 1];
        let (x1, y1) = self.knots[i];
        Ok(y0 + (y1 - y0) * (x - x0) / (x1 - x0))
    }
}

/// Signal-2 singles versus two-photon detuning, linear in pump-1 power.
///
/// Knots store detected signal-2 singles per mW of pump 1. The generated pair
/// rate is the detected singles divided by the signal-2 collection and
/// detector efficiencies.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRateModel {
    pub singles_per_mw: Table1D,
    pub collection_efficiency: f64,
    pub detector_efficiency: f64,
}

impl PairRateModel {
    /// Anchors: 1e6 /s at 1570 MHz with 50 mW and 6e6 /s at 850 MHz with 115 mW.
    pub fn measured_anchors(detector_efficiency: f64) -> Self {
        let knots = vec![(850.0, 6.0e6 / 115.0), (1570.0, 1.0e6 / 50.0)];
        Self {
            singles_per_mw: Table1D::new("two_photon_detuning_mhz", knots).unwrap(),
            collection_efficiency: 0.70,
            detector_efficiency,
        }
    }

    pub fn detected_singles_hz(&self, detuning_mhz: f64, pump1_power_mw: f64) -> Result<f64> {
        Ok(self.singles_per_mw.eval(detuning_mhz)? * pump1_power_mw)
    }

    pub fn pair_rate_hz(&self, detuning_mhz: f64, pump1_power_mw: f64) -> Result<f64> {
        let eff = self.collection_efficiency * self.detector_efficiency;
        if eff <= 0.0 {
            return Err(Error::config_msg("pair rate model needs nonzero efficiency"));
        }
        Ok(self.detected_singles_hz(detuning_mhz, pump1_power_mw)? / eff)
    }
}

/// Generated pair rate at the given detuning and pump-1 power.
pub fn pair_rate_model(model: &PairRateModel, detuning_mhz: f64, pump1_power_mw: f64) -> Result<f64> {
    model.pair_rate_hz(detuning_mhz, pump1_power_mw)
}

/// Cell temperature to pair correlation time.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTimeModel {
    pub table: Table1D,
}

impl CorrelationTimeModel {
    /// Illustrative default, anchored at 15 ns for 86 °C and non-decreasing.
    pub fn default_table() -> Self {
        let knots = vec![
            (60.0, 8_000.0),
            (70.0, 10_500.0),
            (80.0, 13_000.0),
            (86.0, 15_000.0),
            (90.0, 16_000.0),
            (100.0, 18_000.0),
            (110.0, 19_500.0),
        ];
        Self::new(knots).unwrap()
    }

    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        let table = Table1D::new("cell_temperature_c", knots)?;
        if table.knots().windows(2).any(|w| w[1].1 < w[0].1) {
            return Err(Error::config_msg(
                "correlation time table must be non-decreasing in temperature",
            ));
        }
        if table.knots().iter().any(|k| k.1 <= 0.0) {
            return Err(Error::config_msg("correlation times must be > 0"));
        }
        Ok(Self { table })
    }

    pub fn correlation_time_ps(&self, temperature_c: f64) -> Result<f64> {
        self.table.eval(temperature_c)
    }
}

pub fn correlation_time_model(model: &CorrelationTimeModel, temperature_c: f64) -> Result<f64> {
    model.correlation_time_ps(temperature_c)
}

/// Linear shift of the pair delay with pump-1 detuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwmDelayModel {
    pub slope_ps_per_ghz: f64,
    pub reference_detuning_ghz: f64,
}

impl Default for FwmDelayModel {
    fn default() -> Self {
        Self {
            slope_ps_per_ghz: 0.0,
            reference_detuning_ghz: 0.8,
        }
    }
}

impl FwmDelayModel {
    pub fn offset_shift_ps(&self, pump1_detuning_ghz: f64) -> f64 {
        self.slope_ps_per_ghz * (pump1_detuning_ghz - self.reference_detuning_ghz)
    }
}

pub fn fwm_delay_model(model: &FwmDelayModel, pump1_detuning_ghz: f64) -> f64 {
    model.offset_shift_ps(pump1_detuning_ghz)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bunching {
    Poisson,
    Thermal { modes: f64, block_ps: u64 },
}

/// Event times of a (possibly bunched) stationary process in `[start, end)`.
///
/// For thermal bunching `start` must sit on the block grid; blocks are
/// generated while their start lies before `end`, and events past `end`
/// are kept (the caller owns the boundary).
pub fn process_events(rng: &mut SimRng, rate_hz: f64, bunching: Bunching, start: u64, end: u64) -> Vec<u64> {
    match bunching {
        Bunching::Poisson => rng::poisson_times(rng, rate_hz, start, end),
        Bunching::Thermal { modes, block_ps } => {
            thermal_block_events(rng, rate_hz, modes, block_ps, start, end)
        }
    }
}

fn thermal_block_events(
    rng: &mut SimRng,
    rate_hz: f64,
    modes: f64,
    block_ps: u64,
    start: u64,
    end: u64,
) -> Vec<u64> {
    let mut out = Vec::new();
    if rate_hz <= 0.0 || end <= start {
        return out;
    }
    let mu = rate_hz * block_ps as f64 * 1e-12;
    // negative binomial: P(0) = (1 + mu/K)^-K, ratio q = mu/(K+mu)
    let p_empty = (-modes * (mu / modes).ln_1p()).exp();
    let p_nonempty = 1.0 - p_empty;
    let q = mu / (modes + mu);
    let ln_empty = p_empty.ln();
    let mut block_start = start.div_ceil(block_ps) * block_ps;
    loop {
        // empty blocks skipped geometrically
        let u: f64 = 1.0 - rng.gen::<f64>();
        let skip = if p_nonempty >= 1.0 {
            0
        } else {
            (u.ln() / ln_empty).floor() as u64
        };
        block_start = match skip.checked_mul(block_ps).and_then(|d| block_start.checked_add(d)) {
            Some(b) => b,
            None => break,
        };
        if block_start >= end {
            break;
        }
        // N | N >= 1 by pmf inversion
        let mut n = 1u64;
        let mut pmf = p_empty * modes * q;
        let mut cdf = pmf;
        let target = rng.gen::<f64>() * p_nonempty;
        while cdf < target && pmf > 0.0 {
            pmf *= (n as f64 + modes) / (n as f64 + 1.0) * q;
            n += 1;
            cdf += pmf;
        }
        for _ in 0..n {
            out.push(block_start + rng.gen_range(0..block_ps));
        }
        block_start += block_ps;
    }
    out.sort_unstable();
    out
}

/// Per-segment output of the SRS generator. Times are sorted; signal-2 times
/// may run past the segment end by the pair delay.
#[derive(Debug, Default, Clone)]
pub struct SrsSegment {
    pub s1: Vec<u64>,
    pub s2: Vec<u64>,
}

/// Segment-wise SRS generator with optional per-arm pre-thinning.
///
/// `keep[0]` and `keep[1]` are independent retention probabilities for the
/// signal-1 and signal-2 photons. Pairs where neither photon is retained are
/// never drawn: the retained-pair process is simulated directly at rate
/// `pair_rate * (1 - (1-k1)(1-k2))` and each pair is then marked. This is
/// equal in law to generating every pair and thinning afterwards.
#[derive(Debug, Clone)]
pub struct SrsGenerator {
    pub params: SourceParams,
    pub delay_offset_ps: f64,
    pub seed: u64,
    pub keep: [f64; 2],
}

impl SrsGenerator {
    pub fn new(params: SourceParams, seed: u64) -> Self {
        let delay_offset_ps = params.pair_delay_offset_ps;
        Self {
            params,
            delay_offset_ps,
            seed,
            keep: [1.0, 1.0],
        }
    }

    pub fn with_keep(mut self, keep: [f64; 2]) -> Self {
        self.keep = keep;
        self
    }

    pub fn with_offset_shift(mut self, shift_ps: f64) -> Self {
        self.delay_offset_ps = (self.params.pair_delay_offset_ps + shift_ps).max(0.0);
        self
    }

    pub fn segment(&self, index: u64, start: u64, end: u64) -> SrsSegment {
        let p = &self.params;
        let [k1, k2] = self.keep;
        let p_rel = 1.0 - (1.0 - k1) * (1.0 - k2);
        let mut times_rng = keyed_rng(self.seed, stream::id(channel::S1, stream::PAIR_TIMES), index);
        let mut delay_rng = keyed_rng(self.seed, stream::id(channel::S2, stream::PAIR_DELAY), index);
        let mut mark_rng = keyed_rng(self.seed, stream::id(channel::S1, stream::MARKS), index);

        let pairs = process_events(&mut times_rng, p.pair_rate_hz * p_rel, p.bunching(), start, end);
        let p_both = k1 * k2 / p_rel.max(f64::MIN_POSITIVE);
        let p_first = k1 * (1.0 - k2) / p_rel.max(f64::MIN_POSITIVE);

        let mut seg = SrsSegment::default();
        for &t in &pairs {
            let u: f64 = mark_rng.gen();
            let (take1, take2) = if u < p_both {
                (true, true)
            } else if u < p_both + p_first {
                (true, false)
            } else {
                (false, true)
            };
            // the delay draw is consumed for every pair so marks never shift delays
            let delay = self.delay_offset_ps + rng::exp1(&mut delay_rng) * p.correlation_time_ps;
            if take1 {
                seg.s1.push(t);
            }
            if take2 {
                seg.s2.push(t + delay.round() as u64);
            }
        }
        let mut n1 = keyed_rng(self.seed, stream::id(channel::S1, stream::NOISE), index);
        let mut n2 = keyed_rng(self.seed, stream::id(channel::S2, stream::NOISE), index);
        seg.s1
            .extend(rng::poisson_times(&mut n1, p.noise_rate_s1_hz * k1, start, end));
        seg.s2
            .extend(rng::poisson_times(&mut n2, p.noise_rate_s2_hz * k2, start, end));
        seg.s1.sort_unstable();
        seg.s2.sort_unstable();
        seg
    }
}

/// Signal-1 and signal-2 emission streams over `[0, duration_ps]`.
pub fn generate_srs(params: &SourceParams, duration_ps: u64, seed: u64) -> Result<(TagStream, TagStream)> {
    params.validate()?;
    params.check_duration(duration_ps)?;
    let seg = SrsGenerator::new(params.clone(), seed).segment(0, 0, duration_ps);
    let s2: Vec<u64> = seg.s2.into_iter().filter(|&t| t <= duration_ps).collect();
    let s1: Vec<u64> = seg.s1.into_iter().filter(|&t| t <= duration_ps).collect();
    Ok((
        TagStream::from_sorted_times(channel::S1, s1, duration_ps)?,
        TagStream::from_sorted_times(channel::S2, s2, duration_ps)?,
    ))
}

/// Jittered signal-3/signal-4 emission times for one converted photon.
pub fn pair_times(rng: &mut SimRng, t: u64, jitter_ps: f64) -> (i64, i64) {
    if jitter_ps <= 0.0 {
        return (t as i64, t as i64);
    }
    let a = t as f64 + rng::clipped_normal(rng) * jitter_ps;
    let b = t as f64 + rng::clipped_normal(rng) * jitter_ps;
    (a.round() as i64, b.round() as i64)
}

fn into_stream(ch: u8, mut times: Vec<i64>, duration_ps: u64) -> Result<TagStream> {
    times.retain(|&t| t >= 0 && t as u64 <= duration_ps);
    times.sort_unstable();
    TagStream::from_sorted_times(ch, times.into_iter().map(|t| t as u64).collect(), duration_ps)
}

/// Converts each signal-2 tag into a signal-3/signal-4 pair with probability
/// `conversion_efficiency`.
pub fn spdc_convert(s2: &TagStream, params: &SpdcParams, seed: u64) -> Result<(TagStream, TagStream)> {
    params.validate()?;
    s2.validate()?;
    let mut pick = keyed_rng(seed, stream::id(channel::S2, stream::CONVERT), 0);
    let mut jit = keyed_rng(seed, stream::id(channel::S3, stream::PAIR_JITTER), 0);
    let eta = params.conversion_efficiency;
    let times = s2.times();
    let mut s3 = Vec::new();
    let mut s4 = Vec::new();
    if eta > 0.0 {
        let ln_miss = (-eta).ln_1p();
        let mut i = 0usize;
        loop {
            // geometric gap to the next converted photon
            if eta < 1.0 {
                let u: f64 = 1.0 - pick.gen::<f64>();
                let gap = (u.ln() / ln_miss).floor();
                if gap >= (times.len() - i.min(times.len())) as f64 {
                    break;
                }
                i += gap as usize;
            }
            if i >= times.len() {
                break;
            }
            let (a, b) = pair_times(&mut jit, times[i], params.pair_jitter_ps);
            s3.push(a);
            s4.push(b);
            i += 1;
        }
    }
    let d = s2.duration_ps();
    Ok((into_stream(channel::S3, s3, d)?, into_stream(channel::S4, s4, d)?))
}

/// Segment-wise coherent-pump SPDC generator.
#[derive(Debug, Clone)]
pub struct CoherentGenerator {
    pub params: SpdcParams,
    pub seed: u64,
}

impl CoherentGenerator {
    pub fn pair_rate_hz(&self) -> f64 {
        self.params.coherent_pump_rate_hz * self.params.conversion_efficiency
    }

    pub fn block_ps(&self) -> u64 {
        self.params.coherence_time_ps.round().max(1.0) as u64
    }

    /// Returns unsorted, possibly negative jittered (s3, s4) times.
    pub fn segment(&self, index: u64, start: u64, end: u64) -> (Vec<i64>, Vec<i64>) {
        let mut times_rng = keyed_rng(self.seed, stream::id(channel::S3, stream::PAIR_TIMES), index);
        let mut jit = keyed_rng(self.seed, stream::id(channel::S3, stream::PAIR_JITTER), index);
        let bunching = Bunching::Thermal {
            modes: self.params.mode_count,
            block_ps: self.block_ps(),
        };
        let events = process_events(&mut times_rng, self.pair_rate_hz(), bunching, start, end);
        let mut s3 = Vec::with_capacity(events.len());
        let mut s4 = Vec::with_capacity(events.len());
        for t in events {
            let (a, b) = pair_times(&mut jit, t, self.params.pair_jitter_ps);
            s3.push(a);
            s4.push(b);
        }
        (s3, s4)
    }
}

/// Pair streams from a weak coherent pump with thermal multi-pair statistics.
pub fn spdc_coherent(params: &SpdcParams, duration_ps: u64, seed: u64) -> Result<(TagStream, TagStream)> {
    params.validate()?;
    if params.coherent_pump_rate_hz <= 0.0 {
        return Err(Error::config("spdc.coherent_pump_rate_hz", "must be > 0 in coherent mode"));
    }
    if duration_ps == 0 {
        return Err(Error::config("run.duration_ps", "must be > 0"));
    }
    let gen = CoherentGenerator {
        params: params.clone(),
        seed,
    };
    let (s3, s4) = gen.segment(0, 0, duration_ps);
    Ok((
        into_stream(channel::S3, s3, duration_ps)?,
        into_stream(channel::S4, s4, duration_ps)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(rate: f64) -> SourceParams {
        SourceParams {
            pair_rate_hz: rate,
            correlation_time_ps: 15_000.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_rate_gives_empty_streams() {
        let (s1, s2) = generate_srs(&params(0.0), 1_000_000_000, 3).unwrap();
        assert!(s1.is_empty() && s2.is_empty());
    }

    #[test]
    fn pair_count_within_poisson_bound() {
        let (s1, s2) = generate_srs(&params(1e4), 1_000_000_000_000, 11).unwrap();
        let n = s1.len() as f64;
        assert!((n - 1e4).abs() <= 4.0 * 1e4f64.sqrt(), "n = {n}");
        assert!(s2.len() <= s1.len());
    }

    #[test]
    fn rejects_bad_duration_and_params() {
        assert!(generate_srs(&params(1.0), 0, 1).is_err());
        assert!(generate_srs(&params(1.0), 100_000, 1).is_err());
        let mut p = params(1.0);
        p.pair_rate_hz = f64::NAN;
        assert!(generate_srs(&p, 1_000_000_000, 1).is_err());
    }

    #[test]
    fn pair_rate_model_anchors() {
        let m = PairRateModel::measured_anchors(1.0);
        let d850 = m.detected_singles_hz(850.0, 115.0).unwrap();
        let d1570 = m.detected_singles_hz(1570.0, 50.0).unwrap();
        assert!((d850 - 6e6).abs() < 1e-6);
        assert!((d1570 - 1e6).abs() < 1e-6);
        let half = m.detected_singles_hz(1570.0, 25.0).unwrap();
        assert!((half - 0.5e6).abs() < 1e-6);
        // pair rate divides out collection x detector efficiency
        let r = pair_rate_model(&m, 1570.0, 50.0).unwrap();
        assert!((r * 0.70 - 1e6).abs() < 1e-3);
        assert!(matches!(m.pair_rate_hz(2000.0, 50.0), Err(Error::Range { .. })));
    }

    #[test]
    fn correlation_time_table() {
        let m = CorrelationTimeModel::default_table();
        let t80 = m.correlation_time_ps(80.0).unwrap();
        let t86 = m.correlation_time_ps(86.0).unwrap();
        let t90 = m.correlation_time_ps(90.0).unwrap();
        assert!(t80 <= t86 && t86 <= t90);
        assert_eq!(t86, 15_000.0);
        // midpoint of (80, 13000) and (86, 15000)
        assert_eq!(m.correlation_time_ps(83.0).unwrap(), 14_000.0);
        assert!(m.correlation_time_ps(200.0).is_err());
        assert!(CorrelationTimeModel::new(vec![(1.0, 5.0), (2.0, 4.0)]).is_err());
    }

    #[test]
    fn fwm_shift_linear() {
        assert_eq!(fwm_delay_model(&FwmDelayModel::default(), 3.0), 0.0);
        let m = FwmDelayModel {
            slope_ps_per_ghz: 1500.0,
            reference_detuning_ghz: 0.8,
        };
        assert!((fwm_delay_model(&m, 1.2) - 600.0).abs() < 1e-9);
    }

    #[test]
    fn spdc_convert_edge_cases() {
        let s2 = TagStream::from_sorted_times(channel::S2, vec![10, 20, 30, 400], 1000).unwrap();
        let zero = SpdcParams {
            conversion_efficiency: 0.0,
            ..Default::default()
        };
        let (a, b) = spdc_convert(&s2, &zero, 1).unwrap();
        assert!(a.is_empty() && b.is_empty());

        let full = SpdcParams {
            conversion_efficiency: 1.0,
            pair_jitter_ps: 0.0,
            ..Default::default()
        };
        let (a, b) = spdc_convert(&s2, &full, 1).unwrap();
        assert_eq!(a.times(), s2.times());
        assert_eq!(b.times(), s2.times());
    }

    #[test]
    fn spdc_convert_binomial_count() {
        // same binomial mean (600) as 6e6 /s for 100 s at 1e-6, with fewer tags
        let n = 6_000_000u64;
        let times: Vec<u64> = (0..n).map(|i| i * 166_666).collect();
        let dur = *times.last().unwrap() + 1;
        let s2 = TagStream::from_sorted_times(channel::S2, times, dur).unwrap();
        let p = SpdcParams {
            conversion_efficiency: 1e-4,
            ..Default::default()
        };
        let (a, b) = spdc_convert(&s2, &p, 5).unwrap();
        assert_eq!(a.len(), b.len());
        assert!((a.len() as f64 - 600.0).abs() <= 4.0 * 600f64.sqrt(), "{}", a.len());
    }

    #[test]
    fn thermal_blocks_mean_rate() {
        let mut rng = keyed_rng(1, 2, 3);
        let ev = thermal_block_events(&mut rng, 1e5, 2.0, 1_000_000, 0, 100_000_000_000);
        // 1e5 /s over 0.1 s, NB variance inflated by block clustering
        let n = ev.len() as f64;
        assert!((n - 1e4).abs() < 6.0 * (1e4f64 * (1.0 + 0.1 / 2.0)).sqrt(), "{n}");
    }
}

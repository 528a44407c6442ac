//! Experiment configuration.
//!
//! A flat, sectioned `key = value` text format. Units are part of the key
//! names (`_ps`, `_hz`, `_mw`). `#` starts a comment. Sections:
//!
//! ```text
//! [run]            mode, duration_ps, seed, segment_ps
//! [source]         SRS pair source and its rate / correlation-time tables
//! [spdc]           waveguide conversion and coherent-pump mode
//! [detector.N]     one per detector channel N
//! [gate.N]         gate settings for a gated detector N
//! [analysis]       histogram ranges, peak policy, k_sigma, calibrated autos
//! ```
//!
//! Overrides given as `section.key=value` replace file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::correlator::{HistogramSpec, PeakPolicy};
use crate::detector::{DetectorMode, DetectorParams, GateParams};
use crate::error::{Error, Result};
use crate::source::{CorrelationTimeModel, FwmDelayModel, PairRateModel, SourceParams, SpdcParams, Table1D};
use crate::timetag::channel;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    /// SRS pairs detected by D2 (signal 1) and D1 (signal 2).
    Pair,
    /// Signal 3 and signal 4 from converted signal 2, two free-running detectors.
    S3S4,
    /// Signal 1, gated signal 3 and signal 4.
    Triplet,
    /// Signal 3 and signal 4 from a weak coherent pump.
    Coherent,
}

impl RunMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RunMode::Pair => "pair",
            RunMode::S3S4 => "s3s4",
            RunMode::Triplet => "triplet",
            RunMode::Coherent => "coherent",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "pair" => RunMode::Pair,
            "s3s4" => RunMode::S3S4,
            "triplet" => RunMode::Triplet,
            "coherent" => RunMode::Coherent,
            _ => return None,
        })
    }

    /// Detector channels the mode produces.
    pub fn channels(self) -> &'static [u8] {
        match self {
            RunMode::Pair => &[channel::S1, channel::S2],
            RunMode::S3S4 | RunMode::Coherent => &[channel::S3, channel::S4],
            RunMode::Triplet => &[channel::S1, channel::S3, channel::S4],
        }
    }

    pub fn uses_srs(self) -> bool {
        self != RunMode::Coherent
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: RunMode,
    pub duration_ps: u64,
    pub seed: u64,
    /// Length of the independently generated time segments.
    pub segment_ps: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Pair,
            duration_ps: 1_000_000_000_000,
            seed: 1,
            segment_ps: 1_000_000_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceConfig {
    /// Explicit pair rate; when absent the rate comes from the singles table.
    pub pair_rate_hz: Option<f64>,
    pub two_photon_detuning_mhz: f64,
    pub pump1_detuning_ghz: f64,
    pub pump1_power_mw: f64,
    pub pump2_power_mw: f64,
    pub cell_temperature_c: f64,
    /// Explicit correlation time; when absent it comes from the temperature table.
    pub correlation_time_ps: Option<f64>,
    pub pair_delay_offset_ps: f64,
    pub noise_rate_s1_hz: f64,
    pub noise_rate_s2_hz: f64,
    pub s2_collection_efficiency: f64,
    pub mode_count: Option<f64>,
    pub bunching_time_ps: f64,
    /// Detector efficiency behind the signal-2 singles anchors.
    pub anchor_detector_efficiency: f64,
    /// Detected signal-2 singles per mW of pump 1 against two-photon detuning.
    pub singles_per_mw_table: Vec<(f64, f64)>,
    pub correlation_time_table: Vec<(f64, f64)>,
    pub fwm_slope_ps_per_ghz: f64,
    pub fwm_reference_detuning_ghz: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        let p = SourceParams::default();
        let fwm = FwmDelayModel::default();
        Self {
            pair_rate_hz: None,
            two_photon_detuning_mhz: p.two_photon_detuning_mhz,
            pump1_detuning_ghz: p.pump1_detuning_ghz,
            pump1_power_mw: p.pump1_power_mw,
            pump2_power_mw: p.pump2_power_mw,
            cell_temperature_c: p.cell_temperature_c,
            correlation_time_ps: None,
            pair_delay_offset_ps: p.pair_delay_offset_ps,
            noise_rate_s1_hz: p.noise_rate_s1_hz,
            noise_rate_s2_hz: p.noise_rate_s2_hz,
            s2_collection_efficiency: p.s2_collection_efficiency,
            mode_count: p.mode_count,
            bunching_time_ps: p.bunching_time_ps,
            anchor_detector_efficiency: 0.1,
            singles_per_mw_table: PairRateModel::measured_anchors(0.1).singles_per_mw.knots().to_vec(),
            correlation_time_table: CorrelationTimeModel::default_table().table.knots().to_vec(),
            fwm_slope_ps_per_ghz: fwm.slope_ps_per_ghz,
            fwm_reference_detuning_ghz: fwm.reference_detuning_ghz,
        }
    }
}

impl SourceConfig {
    pub fn rate_model(&self) -> Result<PairRateModel> {
        Ok(PairRateModel {
            singles_per_mw: Table1D::new("two_photon_detuning_mhz", self.singles_per_mw_table.clone())?,
            collection_efficiency: self.s2_collection_efficiency,
            detector_efficiency: self.anchor_detector_efficiency,
        })
    }

    pub fn correlation_model(&self) -> Result<CorrelationTimeModel> {
        CorrelationTimeModel::new(self.correlation_time_table.clone())
    }

    pub fn fwm_model(&self) -> FwmDelayModel {
        FwmDelayModel {
            slope_ps_per_ghz: self.fwm_slope_ps_per_ghz,
            reference_detuning_ghz: self.fwm_reference_detuning_ghz,
        }
    }

    /// Source parameters with table lookups and the delay shift applied.
    pub fn resolve(&self) -> Result<SourceParams> {
        let pair_rate_hz = match self.pair_rate_hz {
            Some(r) => r,
            None => self
                .rate_model()?
                .pair_rate_hz(self.two_photon_detuning_mhz, self.pump1_power_mw)?,
        };
        let correlation_time_ps = match self.correlation_time_ps {
            Some(t) => t,
            None => self.correlation_model()?.correlation_time_ps(self.cell_temperature_c)?,
        };
        let shift = self.fwm_model().offset_shift_ps(self.pump1_detuning_ghz);
        let p = SourceParams {
            pair_rate_hz,
            two_photon_detuning_mhz: self.two_photon_detuning_mhz,
            pump1_detuning_ghz: self.pump1_detuning_ghz,
            pump1_power_mw: self.pump1_power_mw,
            pump2_power_mw: self.pump2_power_mw,
            cell_temperature_c: self.cell_temperature_c,
            correlation_time_ps,
            pair_delay_offset_ps: (self.pair_delay_offset_ps + shift).max(0.0),
            noise_rate_s1_hz: self.noise_rate_s1_hz,
            noise_rate_s2_hz: self.noise_rate_s2_hz,
            s2_collection_efficiency: self.s2_collection_efficiency,
            mode_count: self.mode_count,
            bunching_time_ps: self.bunching_time_ps,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub bin_width_ps: u64,
    /// Signal 1 to signal 2 delay range.
    pub pair_range_ps: (i64, i64),
    /// Signal 3 to signal 4 delay range.
    pub s3s4_range_ps: (i64, i64),
    pub auto_bin_width_ps: u64,
    pub auto_range_ps: (i64, i64),
    pub triple_bin_width_ps: u64,
    pub triple_range_ps: (i64, i64),
    /// Look-back from a signal-3 click for its signal-4 partner; defaults to
    /// the gate delay plus width of the gated detector.
    pub triple_window_ps: Option<u64>,
    pub peak_bins_before: usize,
    pub peak_bins_after: usize,
    pub guard_bins: usize,
    pub k_sigma: f64,
    /// Calibrated signal-3 and signal-4 auto-correlations used in R3.
    pub g33: f64,
    pub g33_sigma: f64,
    pub g44: f64,
    pub g44_sigma: f64,
    /// Significance target for the budget's measurement-time estimate.
    pub target_snr: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            bin_width_ps: 2000,
            pair_range_ps: (-100_000, 100_000),
            s3s4_range_ps: (-51_000, 51_000),
            auto_bin_width_ps: 2000,
            auto_range_ps: (-20_000_000, 20_000_000),
            triple_bin_width_ps: 2000,
            triple_range_ps: (0, 1_000_000),
            triple_window_ps: None,
            peak_bins_before: 1,
            peak_bins_after: 8,
            guard_bins: 10,
            k_sigma: 3.0,
            g33: 1.0,
            g33_sigma: 0.05,
            g44: 1.0,
            g44_sigma: 0.05,
            target_snr: 5.0,
        }
    }
}

impl AnalysisConfig {
    pub fn triple_policy(&self) -> PeakPolicy {
        PeakPolicy {
            bins_before: self.peak_bins_before,
            bins_after: self.peak_bins_after,
            guard_bins: self.guard_bins,
        }
    }

    /// Single-bin peak with the configured guard, for two-fold SNRs.
    pub fn single_bin_policy(&self) -> PeakPolicy {
        PeakPolicy {
            bins_before: 0,
            bins_after: 0,
            guard_bins: self.guard_bins,
        }
    }

    pub fn spec(&self, which: &str, a: u8, b: u8) -> Result<HistogramSpec> {
        let (w, r) = match which {
            "pair" => (self.bin_width_ps, self.pair_range_ps),
            "s3s4" => (self.bin_width_ps, self.s3s4_range_ps),
            "auto" => (self.auto_bin_width_ps, self.auto_range_ps),
            "triple" => (self.triple_bin_width_ps, self.triple_range_ps),
            _ => return Err(Error::Usage(format!("unknown histogram `{which}`"))),
        };
        HistogramSpec::new(w, r, a, b).map_err(|e| match e {
            Error::Config { msg, .. } => Error::config(format!("analysis.{which}_range_ps"), msg),
            other => other,
        })
    }

    fn validate(&self) -> Result<()> {
        for (which, a, b) in [("pair", 0, 1), ("s3s4", 2, 3), ("auto", 0, 0), ("triple", 0, 2)] {
            self.spec(which, a, b)?;
        }
        if !self.k_sigma.is_finite() || self.k_sigma < 0.0 {
            return Err(Error::config("analysis.k_sigma", "must be finite and >= 0"));
        }
        for (k, v) in [("analysis.g33", self.g33), ("analysis.g44", self.g44), ("analysis.target_snr", self.target_snr)] {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::config(k, "must be > 0"));
            }
        }
        for (k, v) in [("analysis.g33_sigma", self.g33_sigma), ("analysis.g44_sigma", self.g44_sigma)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(k, "must be >= 0"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub source: SourceConfig,
    pub spdc: SpdcParams,
    pub detectors: BTreeMap<u8, DetectorParams>,
    pub gates: BTreeMap<u8, GateParams>,
    pub analysis: AnalysisConfig,
}

/// Parsed `key = value` document: sections in order, keys in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvDoc {
    pub sections: Vec<(String, Vec<(String, String)>)>,
}

impl KvDoc {
    pub fn parse(text: &str) -> Result<Self> {
        let mut doc = KvDoc::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| Error::config_msg(format!("line {}: unterminated section header", i + 1)))?;
                doc.sections.push((name.trim().to_string(), Vec::new()));
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config_msg(format!("line {}: expected `key = value`", i + 1)))?;
            let Some(section) = doc.sections.last_mut() else {
                return Err(Error::config(k.trim(), format!("line {}: key outside any section", i + 1)));
            };
            section.1.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(doc)
    }

    pub fn section(&self, name: &str) -> Option<&[(String, String)]> {
        self.sections.iter().find(|s| s.0 == name).map(|s| s.1.as_slice())
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.section(section)?
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn f(key: &str, v: &str) -> Result<f64> {
    let x: f64 = v
        .parse()
        .map_err(|_| Error::config(key, format!("expected a number, got `{v}`")))?;
    if x.is_nan() {
        return Err(Error::config(key, "NaN is not allowed"));
    }
    Ok(x)
}

fn u(key: &str, v: &str) -> Result<u64> {
    if let Ok(x) = v.parse::<u64>() {
        return Ok(x);
    }
    // accept integral floats such as 6e11
    let x = f(key, v)?;
    if x < 0.0 || x.fract() != 0.0 || x > u64::MAX as f64 {
        return Err(Error::config(key, format!("expected a non-negative integer, got `{v}`")));
    }
    Ok(x as u64)
}

fn range(key: &str, v: &str) -> Result<(i64, i64)> {
    let (a, b) = v
        .split_once(':')
        .ok_or_else(|| Error::config(key, format!("expected MIN:MAX, got `{v}`")))?;
    let p = |s: &str| {
        s.trim()
            .parse::<i64>()
            .map_err(|_| Error::config(key, format!("expected integer bound, got `{s}`")))
    };
    Ok((p(a)?, p(b)?))
}

pub fn parse_range(key: &str, v: &str) -> Result<(i64, i64)> {
    range(key, v)
}

fn table(key: &str, v: &str) -> Result<Vec<(f64, f64)>> {
    v.split(',')
        .map(|pair| {
            let (x, y) = pair
                .split_once(':')
                .ok_or_else(|| Error::config(key, format!("expected x:y pairs, got `{pair}`")))?;
            Ok((f(key, x.trim())?, f(key, y.trim())?))
        })
        .collect()
}

fn fmt_table(t: &[(f64, f64)]) -> String {
    t.iter().map(|(x, y)| format!("{x}:{y}")).collect::<Vec<_>>().join(",")
}

fn unknown(path: &str) -> Error {
    Error::config(path, "unknown key")
}

impl RunConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let path = format!("run.{key}");
        match key {
            "mode" => {
                self.mode = RunMode::parse(v)
                    .ok_or_else(|| Error::config(&path, format!("expected pair, s3s4, triplet or coherent, got `{v}`")))?
            }
            "duration_ps" => self.duration_ps = u(&path, v)?,
            "seed" => self.seed = u(&path, v)?,
            "segment_ps" => self.segment_ps = u(&path, v)?,
            _ => return Err(unknown(&path)),
        }
        Ok(())
    }

    fn write(&self, s: &mut String) {
        let _ = writeln!(s, "[run]");
        let _ = writeln!(s, "mode = {}", self.mode.as_str());
        let _ = writeln!(s, "duration_ps = {}", self.duration_ps);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "segment_ps = {}", self.segment_ps);
    }
}

impl SourceConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let path = format!("source.{key}");
        let p = path.as_str();
        match key {
            "pair_rate_hz" => self.pair_rate_hz = Some(f(p, v)?),
            "two_photon_detuning_mhz" => self.two_photon_detuning_mhz = f(p, v)?,
            "pump1_detuning_ghz" => self.pump1_detuning_ghz = f(p, v)?,
            "pump1_power_mw" => self.pump1_power_mw = f(p, v)?,
            "pump2_power_mw" => self.pump2_power_mw = f(p, v)?,
            "cell_temperature_c" => self.cell_temperature_c = f(p, v)?,
            "correlation_time_ps" => self.correlation_time_ps = Some(f(p, v)?),
            "pair_delay_offset_ps" => self.pair_delay_offset_ps = f(p, v)?,
            "noise_rate_s1_hz" => self.noise_rate_s1_hz = f(p, v)?,
            "noise_rate_s2_hz" => self.noise_rate_s2_hz = f(p, v)?,
            "s2_collection_efficiency" => self.s2_collection_efficiency = f(p, v)?,
            "mode_count" => self.mode_count = Some(f(p, v)?),
            "bunching_time_ps" => self.bunching_time_ps = f(p, v)?,
            "anchor_detector_efficiency" => self.anchor_detector_efficiency = f(p, v)?,
            "singles_per_mw_table" => self.singles_per_mw_table = table(p, v)?,
            "correlation_time_table" => self.correlation_time_table = table(p, v)?,
            "fwm_slope_ps_per_ghz" => self.fwm_slope_ps_per_ghz = f(p, v)?,
            "fwm_reference_detuning_ghz" => self.fwm_reference_detuning_ghz = f(p, v)?,
            _ => return Err(unknown(p)),
        }
        Ok(())
    }

    fn write(&self, s: &mut String) {
        let _ = writeln!(s, "[source]");
        if let Some(r) = self.pair_rate_hz {
            let _ = writeln!(s, "pair_rate_hz = {r}");
        }
        let _ = writeln!(s, "two_photon_detuning_mhz = {}", self.two_photon_detuning_mhz);
        let _ = writeln!(s, "pump1_detuning_ghz = {}", self.pump1_detuning_ghz);
        let _ = writeln!(s, "pump1_power_mw = {}", self.pump1_power_mw);
        let _ = writeln!(s, "pump2_power_mw = {}", self.pump2_power_mw);
        let _ = writeln!(s, "cell_temperature_c = {}", self.cell_temperature_c);
        if let Some(t) = self.correlation_time_ps {
            let _ = writeln!(s, "correlation_time_ps = {t}");
        }
        let _ = writeln!(s, "pair_delay_offset_ps = {}", self.pair_delay_offset_ps);
        let _ = writeln!(s, "noise_rate_s1_hz = {}", self.noise_rate_s1_hz);
        let _ = writeln!(s, "noise_rate_s2_hz = {}", self.noise_rate_s2_hz);
        let _ = writeln!(s, "s2_collection_efficiency = {}", self.s2_collection_efficiency);
        if let Some(k) = self.mode_count {
            let _ = writeln!(s, "mode_count = {k}");
        }
        let _ = writeln!(s, "bunching_time_ps = {}", self.bunching_time_ps);
        let _ = writeln!(s, "anchor_detector_efficiency = {}", self.anchor_detector_efficiency);
        let _ = writeln!(s, "singles_per_mw_table = {}", fmt_table(&self.singles_per_mw_table));
        let _ = writeln!(s, "correlation_time_table = {}", fmt_table(&self.correlation_time_table));
        let _ = writeln!(s, "fwm_slope_ps_per_ghz = {}", self.fwm_slope_ps_per_ghz);
        let _ = writeln!(s, "fwm_reference_detuning_ghz = {}", self.fwm_reference_detuning_ghz);
    }
}

fn set_spdc(p: &mut SpdcParams, key: &str, v: &str) -> Result<()> {
    let path = format!("spdc.{key}");
    let k = path.as_str();
    match key {
        "conversion_efficiency" => p.conversion_efficiency = f(k, v)?,
        "pair_jitter_ps" => p.pair_jitter_ps = f(k, v)?,
        "coherent_pump_rate_hz" => p.coherent_pump_rate_hz = f(k, v)?,
        "mode_count" => p.mode_count = f(k, v)?,
        "coherence_time_ps" => p.coherence_time_ps = f(k, v)?,
        "input_coupling" => p.input_coupling = f(k, v)?,
        _ => return Err(unknown(k)),
    }
    Ok(())
}

fn write_spdc(p: &SpdcParams, s: &mut String) {
    let _ = writeln!(s, "[spdc]");
    let _ = writeln!(s, "conversion_efficiency = {}", p.conversion_efficiency);
    let _ = writeln!(s, "pair_jitter_ps = {}", p.pair_jitter_ps);
    let _ = writeln!(s, "coherent_pump_rate_hz = {}", p.coherent_pump_rate_hz);
    let _ = writeln!(s, "mode_count = {}", p.mode_count);
    let _ = writeln!(s, "coherence_time_ps = {}", p.coherence_time_ps);
    let _ = writeln!(s, "input_coupling = {}", p.input_coupling);
}

fn set_detector(p: &mut DetectorParams, prefix: &str, key: &str, v: &str) -> Result<()> {
    let path = format!("{prefix}.{key}");
    let k = path.as_str();
    match key {
        "efficiency" => p.efficiency = f(k, v)?,
        "dark_rate_hz" => p.dark_rate_hz = f(k, v)?,
        "dead_time_ps" => p.dead_time_ps = f(k, v)?,
        "jitter_sigma_ps" => p.jitter_sigma_ps = f(k, v)?,
        "delay_ps" => p.delay_ps = f(k, v)?,
        "mode" => p.mode = v.parse().map_err(|e: String| Error::config(k, e))?,
        _ => return Err(unknown(k)),
    }
    Ok(())
}

fn write_detector(ch: u8, p: &DetectorParams, s: &mut String) {
    let _ = writeln!(s, "[detector.{ch}]");
    let _ = writeln!(s, "efficiency = {}", p.efficiency);
    let _ = writeln!(s, "dark_rate_hz = {}", p.dark_rate_hz);
    let _ = writeln!(s, "dead_time_ps = {}", p.dead_time_ps);
    let _ = writeln!(s, "jitter_sigma_ps = {}", p.jitter_sigma_ps);
    let _ = writeln!(s, "delay_ps = {}", p.delay_ps);
    let _ = writeln!(s, "mode = {}", p.mode.as_str());
}

fn set_gate(p: &mut GateParams, prefix: &str, key: &str, v: &str) -> Result<()> {
    let path = format!("{prefix}.{key}");
    let k = path.as_str();
    match key {
        "gate_delay_ps" => p.gate_delay_ps = f(k, v)?,
        "gate_width_ps" => p.gate_width_ps = f(k, v)?,
        "dark_prob_per_gate" => p.dark_prob_per_gate = f(k, v)?,
        "trigger_channel" => {
            p.trigger_channel = u8::try_from(u(k, v)?).map_err(|_| Error::config(k, "channel must fit in a byte"))?
        }
        _ => return Err(unknown(k)),
    }
    Ok(())
}

fn write_gate(ch: u8, p: &GateParams, s: &mut String) {
    let _ = writeln!(s, "[gate.{ch}]");
    let _ = writeln!(s, "gate_delay_ps = {}", p.gate_delay_ps);
    let _ = writeln!(s, "gate_width_ps = {}", p.gate_width_ps);
    let _ = writeln!(s, "dark_prob_per_gate = {}", p.dark_prob_per_gate);
    let _ = writeln!(s, "trigger_channel = {}", p.trigger_channel);
}

impl AnalysisConfig {
    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let path = format!("analysis.{key}");
        let k = path.as_str();
        match key {
            "bin_width_ps" => self.bin_width_ps = u(k, v)?,
            "pair_range_ps" => self.pair_range_ps = range(k, v)?,
            "s3s4_range_ps" => self.s3s4_range_ps = range(k, v)?,
            "auto_bin_width_ps" => self.auto_bin_width_ps = u(k, v)?,
            "auto_range_ps" => self.auto_range_ps = range(k, v)?,
            "triple_bin_width_ps" => self.triple_bin_width_ps = u(k, v)?,
            "triple_range_ps" => self.triple_range_ps = range(k, v)?,
            "triple_window_ps" => self.triple_window_ps = Some(u(k, v)?),
            "peak_bins_before" => self.peak_bins_before = u(k, v)? as usize,
            "peak_bins_after" => self.peak_bins_after = u(k, v)? as usize,
            "guard_bins" => self.guard_bins = u(k, v)? as usize,
            "k_sigma" => self.k_sigma = f(k, v)?,
            "g33" => self.g33 = f(k, v)?,
            "g33_sigma" => self.g33_sigma = f(k, v)?,
            "g44" => self.g44 = f(k, v)?,
            "g44_sigma" => self.g44_sigma = f(k, v)?,
            "target_snr" => self.target_snr = f(k, v)?,
            _ => return Err(unknown(k)),
        }
        Ok(())
    }

    fn write(&self, s: &mut String) {
        let r = |x: (i64, i64)| format!("{}:{}", x.0, x.1);
        let _ = writeln!(s, "[analysis]");
        let _ = writeln!(s, "bin_width_ps = {}", self.bin_width_ps);
        let _ = writeln!(s, "pair_range_ps = {}", r(self.pair_range_ps));
        let _ = writeln!(s, "s3s4_range_ps = {}", r(self.s3s4_range_ps));
        let _ = writeln!(s, "auto_bin_width_ps = {}", self.auto_bin_width_ps);
        let _ = writeln!(s, "auto_range_ps = {}", r(self.auto_range_ps));
        let _ = writeln!(s, "triple_bin_width_ps = {}", self.triple_bin_width_ps);
        let _ = writeln!(s, "triple_range_ps = {}", r(self.triple_range_ps));
        if let Some(w) = self.triple_window_ps {
            let _ = writeln!(s, "triple_window_ps = {w}");
        }
        let _ = writeln!(s, "peak_bins_before = {}", self.peak_bins_before);
        let _ = writeln!(s, "peak_bins_after = {}", self.peak_bins_after);
        let _ = writeln!(s, "guard_bins = {}", self.guard_bins);
        let _ = writeln!(s, "k_sigma = {}", self.k_sigma);
        let _ = writeln!(s, "g33 = {}", self.g33);
        let _ = writeln!(s, "g33_sigma = {}", self.g33_sigma);
        let _ = writeln!(s, "g44 = {}", self.g44);
        let _ = writeln!(s, "g44_sigma = {}", self.g44_sigma);
        let _ = writeln!(s, "target_snr = {}", self.target_snr);
    }
}

fn channel_of(section: &str, prefix: &str) -> Result<u8> {
    section[prefix.len()..]
        .parse()
        .map_err(|_| Error::config(section, "section suffix must be a channel number"))
}

impl ExperimentConfig {
    /// Parses and validates a configuration.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, &[])
    }

    /// Parses, applies `section.key=value` overrides in order, then validates.
    pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let doc = KvDoc::parse(text)?;
        let mut c = Self::from_doc(&doc, &[])?;
        for o in overrides {
            c.apply_override(o)?;
        }
        c.validate()?;
        Ok(c)
    }

    /// Builds a config from a document; sections listed in `skip` are ignored.
    pub fn from_doc(doc: &KvDoc, skip: &[&str]) -> Result<Self> {
        let mut c = Self::default();
        for (name, entries) in &doc.sections {
            if skip.contains(&name.as_str()) {
                continue;
            }
            for (k, v) in entries {
                c.set(name, k, v)?;
            }
        }
        Ok(c)
    }

    /// Sets one value. `section` is e.g. `source` or `detector.2`.
    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        match section {
            "run" => self.run.set(key, value),
            "source" => self.source.set(key, value),
            "spdc" => set_spdc(&mut self.spdc, key, value),
            "analysis" => self.analysis.set(key, value),
            s if s.starts_with("detector.") => {
                let ch = channel_of(s, "detector.")?;
                set_detector(self.detectors.entry(ch).or_default(), s, key, value)
            }
            s if s.starts_with("gate.") => {
                let ch = channel_of(s, "gate.")?;
                set_gate(self.gates.entry(ch).or_default(), s, key, value)
            }
            _ => Err(Error::config(section, "unknown section")),
        }
    }

    /// Applies `section.key=value`.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("override `{assignment}` is not section.key=value")))?;
        let (section, key) = path
            .trim()
            .rsplit_once('.')
            .ok_or_else(|| Error::Usage(format!("override key `{path}` has no section")))?;
        self.set(section, key, value.trim())
    }

    /// Removes a table override so the swept input drives the derived value.
    pub fn clear_derived_override(&mut self, parameter: &str) {
        match parameter {
            "two_photon_detuning_mhz" => self.source.pair_rate_hz = None,
            "cell_temperature_c" => self.source.correlation_time_ps = None,
            _ => {}
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        self.run.write(&mut s);
        s.push('\n');
        self.source.write(&mut s);
        s.push('\n');
        write_spdc(&self.spdc, &mut s);
        for (ch, d) in &self.detectors {
            s.push('\n');
            write_detector(*ch, d, &mut s);
        }
        for (ch, g) in &self.gates {
            s.push('\n');
            write_gate(*ch, g, &mut s);
        }
        s.push('\n');
        self.analysis.write(&mut s);
        s
    }

    pub fn detector(&self, ch: u8) -> Result<&DetectorParams> {
        self.detectors
            .get(&ch)
            .ok_or_else(|| Error::config(format!("detector.{ch}"), "missing detector section"))
    }

    pub fn gate(&self, ch: u8) -> Result<&GateParams> {
        self.gates
            .get(&ch)
            .ok_or_else(|| Error::config(format!("gate.{ch}"), "missing gate section for gated detector"))
    }

    /// Look-back window pairing a signal-3 click with its signal-4 trigger.
    pub fn triple_window_ps(&self) -> u64 {
        if let Some(w) = self.analysis.triple_window_ps {
            return w;
        }
        match self.gates.get(&channel::S3) {
            Some(g) => (g.gate_delay_ps + g.gate_width_ps).round() as u64 + 1,
            None => self.analysis.triple_bin_width_ps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.run.segment_ps == 0 {
            return Err(Error::config("run.segment_ps", "must be > 0"));
        }
        let mode = self.run.mode;
        if mode.uses_srs() {
            let p = self.source.resolve()?;
            if p.mode_count.is_some() {
                let block = p.bunching_time_ps.round() as u64;
                if block == 0 || !self.run.segment_ps.is_multiple_of(block) {
                    return Err(Error::config(
                        "run.segment_ps",
                        "must be a multiple of source.bunching_time_ps when mode_count is set",
                    ));
                }
            }
            if !(0.0..=1.0).contains(&self.source.anchor_detector_efficiency) || self.source.anchor_detector_efficiency == 0.0 {
                return Err(Error::config("source.anchor_detector_efficiency", "must lie in (0, 1]"));
            }
        }
        self.spdc.validate()?;
        if mode == RunMode::Coherent {
            if self.spdc.coherent_pump_rate_hz <= 0.0 {
                return Err(Error::config("spdc.coherent_pump_rate_hz", "must be > 0 in coherent mode"));
            }
            let block = self.spdc.coherence_time_ps.round() as u64;
            if !self.run.segment_ps.is_multiple_of(block) {
                return Err(Error::config(
                    "run.segment_ps",
                    "must be a multiple of spdc.coherence_time_ps",
                ));
            }
        }
        for (ch, d) in &self.detectors {
            d.validate(&format!("detector.{ch}"))?;
        }
        for &ch in mode.channels() {
            let d = self.detector(ch)?;
            if d.mode == DetectorMode::Gated {
                let g = self.gate(ch)?;
                g.validate(&format!("gate.{ch}"))?;
                let prefix = format!("gate.{ch}.trigger_channel");
                if g.trigger_channel == ch || !mode.channels().contains(&g.trigger_channel) {
                    return Err(Error::config(prefix, "trigger must be another detector of this run"));
                }
                if self.detector(g.trigger_channel)?.mode != DetectorMode::FreeRunning {
                    return Err(Error::config(prefix, "trigger detector must be free running"));
                }
            }
        }
        for &ch in mode.channels() {
            let gated = self.detector(ch)?.mode == DetectorMode::Gated;
            if gated && (ch != channel::S3 || mode == RunMode::Coherent) {
                return Err(Error::config(
                    format!("detector.{ch}.mode"),
                    "gating is only supported for signal 3 in s3s4 and triplet runs",
                ));
            }
        }
        self.analysis.validate()
    }
}

/// Named configurations shipped with the crate.
pub const BUNDLED: &[(&str, &str)] = &[
    ("paper_pair_source", include_str!("../configs/paper_pair_source.cfg")),
    ("paper_pair_stage", include_str!("../configs/paper_pair_stage.cfg")),
    ("paper_s3s4_scaled", include_str!("../configs/paper_s3s4_scaled.cfg")),
    ("paper_triplet_scaled", include_str!("../configs/paper_triplet_scaled.cfg")),
    ("paper_full_scale", include_str!("../configs/paper_full_scale.cfg")),
    ("paper_coherent_s4", include_str!("../configs/paper_coherent_s4.cfg")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn bundled_config(name: &str) -> Result<ExperimentConfig> {
    let text = bundled(name).ok_or_else(|| Error::Missing(format!("no bundled config named `{name}`")))?;
    ExperimentConfig::parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
[run]
mode = pair
duration_ps = 2e12   # two seconds
seed = 9

[detector.0]
efficiency = 0.5

[detector.1]
efficiency = 0.25
";

    #[test]
    fn parse_minimal_and_round_trip() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.run.duration_ps, 2_000_000_000_000);
        assert_eq!(c.run.seed, 9);
        assert_eq!(c.detectors[&1].efficiency, 0.25);
        assert_eq!(c.detectors[&1].dark_rate_hz, 400.0);
        let again = ExperimentConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn errors_carry_key_paths() {
        let bad = MINIMAL.replace("efficiency = 0.25", "efficiency = 1.5");
        match ExperimentConfig::parse(&bad) {
            Err(Error::Config { key: Some(k), .. }) => assert_eq!(k, "detector.1.efficiency"),
            other => panic!("{other:?}"),
        }
        match ExperimentConfig::parse(&MINIMAL.replace("seed = 9", "sed = 9")) {
            Err(Error::Config { key: Some(k), .. }) => assert_eq!(k, "run.sed"),
            other => panic!("{other:?}"),
        }
        let missing = "[run]\nmode = triplet\n";
        assert!(matches!(ExperimentConfig::parse(missing), Err(Error::Config { .. })));
    }

    #[test]
    fn overrides_beat_file_values() {
        let c = ExperimentConfig::parse_with_overrides(
            MINIMAL,
            &["run.seed=4".into(), "detector.0.dark_rate_hz = 12".into()],
        )
        .unwrap();
        assert_eq!(c.run.seed, 4);
        assert_eq!(c.detectors[&0].dark_rate_hz, 12.0);
        assert!(matches!(
            ExperimentConfig::parse_with_overrides(MINIMAL, &["seed4".into()]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn table_lookups_resolve() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        let p = c.source.resolve().unwrap();
        assert_eq!(p.correlation_time_ps, 15_000.0);
        // 1570 MHz, 115 mW, 0.7 collection, 0.1 detector
        assert!((p.pair_rate_hz - 20_000.0 * 115.0 / 0.07).abs() < 1e-6);
        let out = ExperimentConfig::parse(&format!("{MINIMAL}\n[source]\ntwo_photon_detuning_mhz = 2000\n"));
        assert!(matches!(out, Err(Error::Range { .. })));
    }

    #[test]
    fn bundled_configs_parse_and_round_trip() {
        for (name, text) in BUNDLED {
            let c = ExperimentConfig::parse(text).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c, "{name}");
        }
    }
}

//! Single-photon detector models.
//!
//! A detector turns emission times into click times: efficiency thinning,
//! optical/cable delay, Gaussian timing jitter (clipped at 8σ), dark counts
//! and a non-paralyzable dead time. The gated model only arms during gates
//! opened by an external trigger stream.
//!
//! Both models are incremental. Callers feed sorted inputs together with a
//! *horizon*: a promise that every later input is at or after it. Each call
//! releases the clicks that can no longer be reordered by later input, so a
//! long run can be processed segment by segment in bounded memory. The
//! one-shot [`detect_free`] and [`detect_gated`] wrap a single feed.

use std::collections::VecDeque;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{self, keyed_rng, stream, SimRng, JITTER_CLIP_SIGMA};
use crate::timetag::TagStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorMode {
    FreeRunning,
    Gated,
}

impl DetectorMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DetectorMode::FreeRunning => "free_running",
            DetectorMode::Gated => "gated",
        }
    }
}

impl std::str::FromStr for DetectorMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "free_running" => Ok(DetectorMode::FreeRunning),
            "gated" => Ok(DetectorMode::Gated),
            other => Err(format!("unknown detector mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    /// Coupling x quantum efficiency of the arm.
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub dead_time_ps: f64,
    pub jitter_sigma_ps: f64,
    pub mode: DetectorMode,
    /// Fixed fibre/cable delay added to every photon before detection.
    pub delay_ps: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            efficiency: 0.1,
            dark_rate_hz: 400.0,
            dead_time_ps: 1_000_000.0,
            jitter_sigma_ps: 200.0,
            mode: DetectorMode::FreeRunning,
            delay_ps: 0.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::config(format!("{prefix}.efficiency"), "must lie in [0, 1]"));
        }
        for (k, v) in [
            ("dark_rate_hz", self.dark_rate_hz),
            ("dead_time_ps", self.dead_time_ps),
            ("jitter_sigma_ps", self.jitter_sigma_ps),
            ("delay_ps", self.delay_ps),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!("{prefix}.{k}"), "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    fn jitter_reach(&self) -> i64 {
        (self.jitter_sigma_ps * JITTER_CLIP_SIGMA).ceil() as i64 + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateParams {
    /// Trigger-to-gate-open delay (delay generator setting).
    pub gate_delay_ps: f64,
    pub gate_width_ps: f64,
    pub dark_prob_per_gate: f64,
    pub trigger_channel: u8,
}

impl Default for GateParams {
    fn default() -> Self {
        Self {
            gate_delay_ps: 0.0,
            gate_width_ps: 100_000.0,
            dark_prob_per_gate: 1e-5,
            trigger_channel: crate::timetag::channel::S4,
        }
    }
}

impl GateParams {
    pub fn validate(&self, prefix: &str) -> Result<()> {
        if !self.gate_width_ps.is_finite() || self.gate_width_ps <= 0.0 {
            return Err(Error::config(format!("{prefix}.gate_width_ps"), "must be > 0"));
        }
        if !self.gate_delay_ps.is_finite() || self.gate_delay_ps < 0.0 {
            return Err(Error::config(format!("{prefix}.gate_delay_ps"), "must be >= 0"));
        }
        if !(0.0..=1.0).contains(&self.dark_prob_per_gate) {
            return Err(Error::config(format!("{prefix}.dark_prob_per_gate"), "must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Non-paralyzable dead time: a click is accepted only if it comes at least
/// `dead_ps` after the previously accepted click.
#[derive(Debug, Clone)]
pub struct DeadTimeFilter {
    dead_ps: i64,
    last: Option<i64>,
}

impl DeadTimeFilter {
    pub fn new(dead_ps: f64) -> Self {
        Self {
            dead_ps: dead_ps.ceil() as i64,
            last: None,
        }
    }

    pub fn accept(&mut self, t: i64) -> bool {
        match self.last {
            Some(l) if t < l + self.dead_ps => false,
            _ => {
                self.last = Some(t);
                true
            }
        }
    }
}

/// Sorted hold-back buffer feeding the dead-time filter.
#[derive(Debug, Clone)]
struct ReleaseBuffer {
    pending: Vec<i64>,
    dead: DeadTimeFilter,
    duration: i64,
}

impl ReleaseBuffer {
    fn new(dead_ps: f64, duration_ps: u64) -> Self {
        Self {
            pending: Vec::new(),
            dead: DeadTimeFilter::new(dead_ps),
            duration: duration_ps as i64,
        }
    }

    fn release_before(&mut self, threshold: i64) -> Vec<u64> {
        self.pending.sort_unstable();
        let cut = self.pending.partition_point(|&t| t < threshold);
        let mut out = Vec::with_capacity(cut);
        for t in self.pending.drain(..cut) {
            if t < 0 || t > self.duration {
                continue;
            }
            if self.dead.accept(t) {
                out.push(t as u64);
            }
        }
        out
    }
}

fn jitter(rng: &mut SimRng, sigma: f64) -> i64 {
    if sigma <= 0.0 {
        0
    } else {
        (rng::clipped_normal(rng) * sigma).round() as i64
    }
}

/// Incremental free-running detector.
#[derive(Debug, Clone)]
pub struct FreeDetector {
    params: DetectorParams,
    channel: u8,
    seed: u64,
    out: ReleaseBuffer,
    dark_from: u64,
    duration: u64,
}

impl FreeDetector {
    pub fn new(channel: u8, params: DetectorParams, seed: u64, duration_ps: u64) -> Self {
        Self {
            out: ReleaseBuffer::new(params.dead_time_ps, duration_ps),
            params,
            channel,
            seed,
            dark_from: 0,
            duration: duration_ps,
        }
    }

    /// Feeds sorted photons, all before `horizon`; later calls only bring
    /// photons at or after `horizon`. `block` keys the random streams and
    /// must be distinct per call.
    pub fn feed(&mut self, block: u64, photons: &[u64], horizon: u64) -> Vec<u64> {
        let p = &self.params;
        let mut thin = keyed_rng(self.seed, stream::id(self.channel, stream::THIN), block);
        let mut jit = keyed_rng(self.seed, stream::id(self.channel, stream::JITTER), block);
        let delay = p.delay_ps.round() as i64;
        for &t in photons {
            // both draws happen for every photon so efficiencies couple across runs
            let u: f64 = thin.gen();
            let j = jitter(&mut jit, p.jitter_sigma_ps);
            if u < p.efficiency {
                self.out.pending.push(t as i64 + delay + j);
            }
        }
        let dark_to = horizon.min(self.duration + 1);
        if dark_to > self.dark_from {
            let mut dark = keyed_rng(self.seed, stream::id(self.channel, stream::DARK), block);
            let d = rng::poisson_times(&mut dark, p.dark_rate_hz, self.dark_from, dark_to);
            self.out.pending.extend(d.into_iter().map(|t| t as i64));
            self.dark_from = dark_to;
        }
        self.out.release_before(horizon as i64 - p.jitter_reach())
    }

    /// Every click released later is at or after this time, given that the
    /// last feed promised no photons before `horizon`.
    pub fn release_threshold(&self, horizon: u64) -> u64 {
        (horizon as i64 - self.params.jitter_reach()).max(0) as u64
    }

    /// Releases everything still held back.
    pub fn finish(&mut self, block: u64) -> Vec<u64> {
        let mut out = self.feed(block, &[], self.duration + 1);
        out.extend(self.out.release_before(i64::MAX));
        out
    }
}

/// Incremental gated detector: armed only inside `[trigger + delay,
/// trigger + delay + width]`; overlapping gates merge into one interval.
#[derive(Debug, Clone)]
pub struct GatedDetector {
    params: DetectorParams,
    gate: GateParams,
    channel: u8,
    seed: u64,
    out: ReleaseBuffer,
    gates: VecDeque<(i64, i64)>,
    photons: VecDeque<i64>,
    trigger_horizon: i64,
    photon_horizon: i64,
    duration: u64,
}

impl GatedDetector {
    pub fn new(channel: u8, params: DetectorParams, gate: GateParams, seed: u64, duration_ps: u64) -> Self {
        Self {
            out: ReleaseBuffer::new(params.dead_time_ps, duration_ps),
            params,
            gate,
            channel,
            seed,
            gates: VecDeque::new(),
            photons: VecDeque::new(),
            trigger_horizon: i64::MIN,
            photon_horizon: i64::MIN,
            duration: duration_ps,
        }
    }

    /// Feeds photons (sorted, all before `photon_horizon`) and trigger clicks
    /// (sorted, all before `trigger_horizon`).
    pub fn feed(
        &mut self,
        block: u64,
        photons: &[u64],
        photon_horizon: u64,
        triggers: &[u64],
        trigger_horizon: u64,
    ) -> Vec<u64> {
        let delay = self.params.delay_ps.round() as i64;
        // integer times inside [t + delay, t + delay + width]
        let gd = self.gate.gate_delay_ps.ceil() as i64;
        let ge = (self.gate.gate_delay_ps + self.gate.gate_width_ps).floor() as i64;

        let mut gate_dark = keyed_rng(self.seed, stream::id(self.channel, stream::GATE_DARK), block);
        for &t in triggers {
            let start = t as i64 + gd;
            let end = t as i64 + ge;
            let dark = gate_dark.gen::<f64>() < self.gate.dark_prob_per_gate;
            if end < start {
                continue;
            }
            if dark {
                self.out.pending.push(gate_dark.gen_range(start..=end));
            }
            match self.gates.back_mut() {
                Some(last) if start <= last.1 => last.1 = last.1.max(end),
                _ => self.gates.push_back((start, end)),
            }
        }
        self.photons.extend(photons.iter().map(|&t| t as i64 + delay));
        self.trigger_horizon = self.trigger_horizon.max(trigger_horizon as i64);
        self.photon_horizon = self.photon_horizon.max(photon_horizon as i64);

        let decided = (self.trigger_horizon.saturating_add(gd)).min(self.photon_horizon.saturating_add(delay));
        let mut thin = keyed_rng(self.seed, stream::id(self.channel, stream::THIN), block);
        let mut jit = keyed_rng(self.seed, stream::id(self.channel, stream::JITTER), block);
        while let Some(&x) = self.photons.front() {
            if x >= decided {
                break;
            }
            self.photons.pop_front();
            while let Some(&(_, e)) = self.gates.front() {
                if e < x && self.gates.len() > 1 {
                    self.gates.pop_front();
                } else {
                    break;
                }
            }
            let u: f64 = thin.gen();
            let j = jitter(&mut jit, self.params.jitter_sigma_ps);
            let Some(&(s, e)) = self.gates.front() else { continue };
            if x < s || x > e || u >= self.params.efficiency {
                continue;
            }
            self.out.pending.push((x + j).clamp(s, e));
        }
        // gates entirely before every undecided photon are no longer needed
        while self.gates.len() > 1 && self.gates[0].1 < decided.min(self.photons.front().copied().unwrap_or(decided)) {
            self.gates.pop_front();
        }
        self.out.release_before(decided.saturating_sub(self.params.jitter_reach()))
    }

    pub fn finish(&mut self, block: u64) -> Vec<u64> {
        let end = self.duration + 1;
        let mut out = self.feed(block, &[], end, &[], end);
        out.extend(self.out.release_before(i64::MAX));
        out
    }
}

/// Free-running detection of a whole stream.
pub fn detect_free(stream: &TagStream, params: &DetectorParams, seed: u64) -> Result<TagStream> {
    params.validate("detector")?;
    if params.mode != DetectorMode::FreeRunning {
        return Err(Error::config("detector.mode", "detect_free needs a free_running detector"));
    }
    stream.validate()?;
    let ch = stream.channel_set().iter().next().copied().unwrap_or(0);
    let mut det = FreeDetector::new(ch, params.clone(), seed, stream.duration_ps());
    let mut clicks = det.feed(0, stream.times(), stream.duration_ps() + 1);
    clicks.extend(det.finish(1));
    TagStream::from_sorted_times(ch, clicks, stream.duration_ps())
}

/// Gated detection of a whole stream, with gates opened by `triggers`.
pub fn detect_gated(
    stream: &TagStream,
    triggers: &TagStream,
    params: &DetectorParams,
    gate: &GateParams,
    seed: u64,
) -> Result<TagStream> {
    params.validate("detector")?;
    gate.validate("gate")?;
    if params.mode != DetectorMode::Gated {
        return Err(Error::config("detector.mode", "detect_gated needs a gated detector"));
    }
    stream.validate()?;
    triggers.validate()?;
    let ch = stream.channel_set().iter().next().copied().unwrap_or(0);
    let end = stream.duration_ps() + 1;
    let mut det = GatedDetector::new(ch, params.clone(), gate.clone(), seed, stream.duration_ps());
    let mut clicks = det.feed(0, stream.times(), end, triggers.times(), end);
    clicks.extend(det.finish(1));
    TagStream::from_sorted_times(ch, clicks, stream.duration_ps())
}

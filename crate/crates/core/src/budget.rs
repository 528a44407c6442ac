//! Closed-form rate budget and its Monte Carlo cross-check.
//!
//! Rates follow the detection chain of the configured run:
//!
//! ```text
//! s2 flux           = (pair rate + signal-2 noise) * s2 collection
//! pairs generated   = s2 flux * conversion
//! pairs detected    = pairs generated * eta3 * eta4 * live3 * live4
//! triples detected  = pairs detected * eta1 * live1        (herald factor)
//! accidentals       = R_a * R_b * bin width                (per bin)
//! ```
//!
//! `live = 1 / (1 + r * dead_time)` is the fraction of time a
//! non-paralyzable detector with input rate `r` is armed. A gated detector
//! clicks only when a gate is open: for its partner photon with probability
//! `eta4 * live4`, otherwise with probability `R4 * gate_width`.
//! Emission is taken as Poissonian; thermal bunching is not included.

use std::fmt::Write as _;

use crate::analysis::{analyze, background_mean, Analysis};
use crate::correlator::{CoincidenceHistogram, PeakPolicy};
use crate::config::{ExperimentConfig, RunMode};
use crate::detector::{DetectorMode, DetectorParams};
use crate::error::{Error, Result};
use crate::pipeline::simulate;
use crate::timetag::channel;

/// Minimum expected count for a Monte Carlo comparison.
pub const MIN_EXPECTED_COUNTS: f64 = 25.0;
pub const PULL_LIMIT: f64 = 4.0;
pub const MEAN_PULL_LIMIT: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RateBudget {
    pub pair_rate_hz: f64,
    pub s2_flux_hz: f64,
    pub s1_singles_detected_hz: f64,
    pub s2_singles_detected_hz: f64,
    pub s3_singles_detected_hz: f64,
    pub s4_singles_detected_hz: f64,
    pub s1s2_coincidences_hz: f64,
    pub s3s4_pairs_generated_hz: f64,
    /// Pairs generated after the waveguide input coupling.
    pub triplets_generated_hz: f64,
    pub s3s4_pairs_detected_hz: f64,
    pub herald_factor: f64,
    pub triples_detected_hz: f64,
    /// Signal-1 / signal-2 accidentals per bin of the pair histogram.
    pub accidental_s1s2_hz: f64,
    /// Signal-3 / signal-4 accidentals per bin of the s3s4 histogram.
    pub accidental_pair_hz: f64,
    /// Three-fold accidentals per bin of the triple histogram.
    pub accidental_triple_hz: f64,
    pub target_snr: f64,
    /// Time for the headline coincidence peak of the run mode to reach
    /// `target_snr` standard deviations above its accidental floor.
    pub time_to_snr_s: f64,
}

fn live(input_hz: f64, d: &DetectorParams) -> f64 {
    1.0 / (1.0 + input_hz * d.dead_time_ps * 1e-12)
}

/// Detector input rate (signal plus dark), its live fraction and click rate.
fn free_chain(signal_hz: f64, d: Option<&DetectorParams>) -> (f64, f64) {
    match d {
        Some(d) => {
            let r = signal_hz * d.efficiency + d.dark_rate_hz;
            let l = live(r, d);
            (l, r * l)
        }
        None => (1.0, 0.0),
    }
}

/// Seconds for a peak of rate `s` over a floor of rate `b` to reach
/// `target` standard deviations: `T = target^2 (s + b) / s^2`.
pub fn time_to_snr(target: f64, s: f64, b: f64) -> f64 {
    if s <= 0.0 {
        return f64::INFINITY;
    }
    target * target * (s + b) / (s * s)
}

/// Analytic rates of the configured experiment.
pub fn expected_rates(cfg: &ExperimentConfig) -> Result<RateBudget> {
    cfg.validate()?;
    let mode = cfg.run.mode;
    let det = |ch: u8| cfg.detectors.get(&ch);
    let (pair_rate, noise1, noise2, coll) = if mode.uses_srs() {
        let s = cfg.source.resolve()?;
        (s.pair_rate_hz, s.noise_rate_s1_hz, s.noise_rate_s2_hz, s.s2_collection_efficiency)
    } else {
        (0.0, 0.0, 0.0, 0.0)
    };
    let s2_flux = (pair_rate + noise2) * coll;
    let eta_c = cfg.spdc.conversion_efficiency;
    let pairs_gen = match mode {
        RunMode::Coherent => cfg.spdc.coherent_pump_rate_hz * eta_c,
        _ => s2_flux * eta_c,
    };
    let triplets_gen = s2_flux * cfg.spdc.input_coupling * eta_c;

    let uses_s1 = matches!(mode, RunMode::Pair | RunMode::Triplet);
    let (live1, s1_singles) = free_chain(pair_rate + noise1, det(channel::S1).filter(|_| uses_s1));
    let (live2, s2_singles) = match det(channel::S2) {
        Some(d) if mode == RunMode::Pair => free_chain(s2_flux, Some(d)),
        _ => (1.0, 0.0),
    };
    let cascade = mode != RunMode::Pair;
    let d3 = det(channel::S3).filter(|_| cascade);
    let d4 = det(channel::S4).filter(|_| cascade);
    let (live4, s4_singles) = free_chain(pairs_gen, d4);
    let eta4 = d4.map_or(0.0, |d| d.efficiency);
    let (s3_singles, pairs_det) = match d3 {
        Some(d) if d.mode == DetectorMode::Gated => {
            let g = cfg.gate(channel::S3)?;
            let p_partner = eta4 * live4;
            let p_open = p_partner + (1.0 - p_partner) * s4_singles * g.gate_width_ps * 1e-12;
            let raw = pairs_gen * d.efficiency * p_open + s4_singles * g.dark_prob_per_gate;
            let l3 = live(raw, d);
            (raw * l3, pairs_gen * d.efficiency * p_partner * l3)
        }
        Some(d) => {
            let (l3, r3) = free_chain(pairs_gen, Some(d));
            (r3, pairs_gen * d.efficiency * eta4 * l3 * live4)
        }
        None => (0.0, 0.0),
    };
    let herald = if uses_s1 {
        det(channel::S1).map_or(0.0, |d| d.efficiency) * live1
    } else {
        0.0
    };
    let triples = if mode == RunMode::Triplet { pairs_det * herald } else { 0.0 };
    let s1s2 = if mode == RunMode::Pair {
        pair_rate * herald * coll * det(channel::S2).map_or(0.0, |d| d.efficiency) * live2
    } else {
        0.0
    };
    let a = &cfg.analysis;
    let w = a.bin_width_ps as f64 * 1e-12;
    let acc_s1s2 = s1_singles * s2_singles * w;
    let acc_pair = s3_singles * s4_singles * w;
    let acc_triple = s1_singles * s3_singles * a.triple_bin_width_ps as f64 * 1e-12;
    let time = match mode {
        RunMode::Pair => time_to_snr(a.target_snr, s1s2, acc_s1s2),
        RunMode::S3S4 => time_to_snr(a.target_snr, pairs_det, acc_pair),
        RunMode::Triplet => time_to_snr(a.target_snr, triples, acc_triple),
        RunMode::Coherent => f64::INFINITY,
    };
    Ok(RateBudget {
        pair_rate_hz: pair_rate,
        s2_flux_hz: s2_flux,
        s1_singles_detected_hz: s1_singles,
        s2_singles_detected_hz: s2_singles,
        s3_singles_detected_hz: s3_singles,
        s4_singles_detected_hz: s4_singles,
        s1s2_coincidences_hz: s1s2,
        s3s4_pairs_generated_hz: pairs_gen,
        triplets_generated_hz: triplets_gen,
        s3s4_pairs_detected_hz: pairs_det,
        herald_factor: herald,
        triples_detected_hz: triples,
        accidental_s1s2_hz: acc_s1s2,
        accidental_pair_hz: acc_pair,
        accidental_triple_hz: acc_triple,
        target_snr: a.target_snr,
        time_to_snr_s: time,
    })
}

impl RateBudget {
    pub fn fields(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("pair_rate_hz", self.pair_rate_hz),
            ("s2_flux_hz", self.s2_flux_hz),
            ("s1_singles_detected_hz", self.s1_singles_detected_hz),
            ("s2_singles_detected_hz", self.s2_singles_detected_hz),
            ("s3_singles_detected_hz", self.s3_singles_detected_hz),
            ("s4_singles_detected_hz", self.s4_singles_detected_hz),
            ("s1s2_coincidences_hz", self.s1s2_coincidences_hz),
            ("s3s4_pairs_generated_hz", self.s3s4_pairs_generated_hz),
            ("triplets_generated_hz", self.triplets_generated_hz),
            ("s3s4_pairs_detected_hz", self.s3s4_pairs_detected_hz),
            ("s3s4_pairs_detected_per_h", self.s3s4_pairs_detected_hz * 3600.0),
            ("herald_factor", self.herald_factor),
            ("triples_detected_hz", self.triples_detected_hz),
            ("triples_detected_per_h", self.triples_detected_hz * 3600.0),
            ("accidental_s1s2_hz", self.accidental_s1s2_hz),
            ("accidental_pair_hz", self.accidental_pair_hz),
            ("accidental_triple_hz", self.accidental_triple_hz),
            ("target_snr", self.target_snr),
            ("time_to_snr_s", self.time_to_snr_s),
        ]
    }

    /// Expected count of a rate over a run of `duration_ps`.
    pub fn count(rate_hz: f64, duration_ps: u64) -> f64 {
        rate_hz * duration_ps as f64 * 1e-12
    }

    pub fn to_kv(&self, duration_ps: u64) -> String {
        let mut s = String::new();
        for (k, v) in self.fields() {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "duration_ps = {duration_ps}");
        let _ = writeln!(s, "triples_per_run = {}", Self::count(self.triples_detected_hz, duration_ps));
        let _ = writeln!(s, "s3s4_pairs_per_run = {}", Self::count(self.s3s4_pairs_detected_hz, duration_ps));
        s
    }

    pub fn to_csv(&self) -> String {
        let f = self.fields();
        let head: Vec<&str> = f.iter().map(|(k, _)| *k).collect();
        let row: Vec<String> = f.iter().map(|(_, v)| v.to_string()).collect();
        format!("{}\n{}\n", head.join(","), row.join(","))
    }
}

/// One compared quantity of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub quantity: &'static str,
    pub expected: f64,
    /// Poisson variance of the measured value.
    pub variance: f64,
    pub measured: f64,
}

impl Comparison {
    pub fn pull(&self) -> f64 {
        if self.variance <= 0.0 {
            return if self.measured == self.expected { 0.0 } else { f64::INFINITY };
        }
        (self.measured - self.expected) / self.variance.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub seeds: Vec<u64>,
    /// Per seed, the compared quantities.
    pub runs: Vec<Vec<Comparison>>,
}

impl McReport {
    pub fn max_abs_pull(&self) -> f64 {
        self.runs
            .iter()
            .flatten()
            .map(|c| c.pull().abs())
            .fold(0.0, f64::max)
    }

    /// Mean pull over seeds, per quantity.
    pub fn mean_pulls(&self) -> Vec<(&'static str, f64)> {
        let Some(first) = self.runs.first() else {
            return Vec::new();
        };
        (0..first.len())
            .map(|i| {
                let m = self.runs.iter().map(|r| r[i].pull()).sum::<f64>() / self.runs.len() as f64;
                (first[i].quantity, m)
            })
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.max_abs_pull() <= PULL_LIMIT && self.mean_pulls().iter().all(|(_, m)| m.abs() <= MEAN_PULL_LIMIT)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("seed,quantity,expected,measured,pull\n");
        for (seed, run) in self.seeds.iter().zip(&self.runs) {
            for c in run {
                let _ = writeln!(s, "{seed},{},{},{},{}", c.quantity, c.expected, c.measured, c.pull());
            }
        }
        s
    }
}

/// Counts in `peak` above the floor measured in `background`, and the
/// variance of that difference for an expected signal `signal`.
fn peak_net(h: &CoincidenceHistogram, peak: &[usize], background: &[usize], signal: f64) -> (f64, f64) {
    let total: f64 = peak.iter().map(|&k| h.counts[k] as f64).sum();
    let floor = background_mean(h, background) * peak.len() as f64;
    let ratio = peak.len() as f64 / background.len().max(1) as f64;
    (total - floor, signal + floor * (1.0 + ratio))
}

/// Peak window of a two-fold histogram: from two bins before the maximum to
/// `tail_ps` after it, with the floor read beyond a two-bin guard.
fn two_fold_window(h: &CoincidenceHistogram, tail_ps: f64) -> (Vec<usize>, Vec<usize>) {
    let after = (tail_ps / h.spec.bin_width_ps as f64).ceil() as usize + 1;
    PeakPolicy {
        bins_before: 2,
        bins_after: after,
        guard_bins: 2,
    }
    .select(h)
}

/// Quantities compared for a run mode, with expected counts.
///
/// Coincidences are counted in a window around the peak above the floor
/// measured in the same histogram. Dead time after a coincidence depletes
/// the nearby floor, so the singles-based accidental level would bias them.
fn comparisons(cfg: &ExperimentConfig, b: &RateBudget, a: &Analysis) -> Result<Vec<Comparison>> {
    let d = cfg.run.duration_ps;
    let n = |r: f64| RateBudget::count(r, d);
    let singles = |ch: u8| a.singles.get(&ch).copied().unwrap_or(0) as f64;
    let single = |q: &'static str, ch: u8, rate: f64| Comparison {
        quantity: q,
        expected: n(rate),
        variance: n(rate),
        measured: singles(ch),
    };
    let hist = |name: &str| {
        a.histogram(name)
            .ok_or_else(|| Error::Missing(format!("missing: histogram {name}")))
    };
    let coincidences = |q: &'static str, h: &CoincidenceHistogram, peak: &[usize], bg: &[usize], rate: f64| {
        let (net, variance) = peak_net(h, peak, bg, n(rate));
        Comparison {
            quantity: q,
            expected: n(rate),
            variance,
            measured: net,
        }
    };
    let mut out = Vec::new();
    match cfg.run.mode {
        RunMode::Pair => {
            out.push(single("s1_singles", channel::S1, b.s1_singles_detected_hz));
            out.push(single("s2_singles", channel::S2, b.s2_singles_detected_hz));
            let h = hist("s1_s2")?;
            let tau = cfg.source.resolve()?.correlation_time_ps;
            let (peak, bg) = two_fold_window(h, 10.0 * tau);
            out.push(coincidences("s1s2_coincidences", h, &peak, &bg, b.s1s2_coincidences_hz));
        }
        RunMode::S3S4 => {
            out.push(single("s3_singles", channel::S3, b.s3_singles_detected_hz));
            out.push(single("s4_singles", channel::S4, b.s4_singles_detected_hz));
            let h = hist("s3_s4")?;
            let (peak, bg) = two_fold_window(h, 0.0);
            out.push(coincidences("s3s4_pairs", h, &peak, &bg, b.s3s4_pairs_detected_hz));
        }
        RunMode::Triplet => {
            out.push(single("s1_singles", channel::S1, b.s1_singles_detected_hz));
            out.push(single("s3_singles", channel::S3, b.s3_singles_detected_hz));
            out.push(single("s4_singles", channel::S4, b.s4_singles_detected_hz));
            let h = hist("s1_s3s4")?;
            let (peak, bg) = cfg.analysis.triple_policy().select(h);
            out.push(coincidences("triples", h, &peak, &bg, b.triples_detected_hz));
        }
        RunMode::Coherent => {
            out.push(single("s3_singles", channel::S3, b.s3_singles_detected_hz));
            out.push(single("s4_singles", channel::S4, b.s4_singles_detected_hz));
        }
    }
    Ok(out)
}

/// Runs the pipeline for each seed and compares measured counts with the
/// budget. Refuses when any compared quantity expects fewer than
/// [`MIN_EXPECTED_COUNTS`] counts.
pub fn mc_vs_budget(cfg: &ExperimentConfig, duration_ps: u64, seeds: &[u64]) -> Result<McReport> {
    let mut cfg = cfg.clone();
    cfg.run.duration_ps = duration_ps;
    let b = expected_rates(&cfg)?;
    let mut report = McReport {
        seeds: seeds.to_vec(),
        runs: Vec::new(),
    };
    for (i, &seed) in seeds.iter().enumerate() {
        cfg.run.seed = seed;
        let streams = simulate(&cfg)?;
        let a = analyze(&cfg, &streams)?;
        let rows = comparisons(&cfg, &b, &a)?;
        if i == 0 {
            for c in &rows {
                if c.expected < MIN_EXPECTED_COUNTS {
                    let need = duration_ps as f64 * MIN_EXPECTED_COUNTS / c.expected.max(f64::MIN_POSITIVE);
                    return Err(Error::config(
                        "run.duration_ps",
                        format!(
                            "underpowered: {} expects {:.2} counts; use duration_ps >= {:.0}",
                            c.quantity,
                            c.expected,
                            need.ceil()
                        ),
                    ));
                }
            }
        }
        report.runs.push(rows);
    }
    Ok(report)
}

//! Standard analysis of a simulated run, per run mode.
//!
//! | mode     | histograms              | correlations      | CS test |
//! |----------|-------------------------|-------------------|---------|
//! | pair     | s1_s2, s1_s1, s2_s2     | g12, g11, g22     | R       |
//! | s3s4     | s3_s4                   | g34               |         |
//! | triplet  | s1_s3s4, s1_s1          | g3, g11           | R3      |
//! | coherent | s3_s3, s4_s4            | g33, g44          |         |
//!
//! Two-fold peaks use the maximum bin; the three-fold peak uses the
//! configured window around the maximum bin. Auto-correlations are read just
//! outside the detector dead time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::{ExperimentConfig, RunMode};
use crate::correlator::{
    cross_histogram, g2_auto, g2_from_histogram, snr, triple_histogram, CoincidenceHistogram, CorrelationResult, Snr,
};
use crate::error::{Error, Result};
use crate::nonclassicality::{cs_three, cs_two, CsReport};
use crate::pipeline::ClickStreams;
use crate::timetag::{channel, TagStream};

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub histograms: Vec<(String, CoincidenceHistogram)>,
    pub correlations: Vec<(String, CorrelationResult)>,
    pub snrs: Vec<(String, Snr)>,
    pub cs: Vec<CsReport>,
    pub singles: BTreeMap<u8, u64>,
    pub duration_ps: u64,
}

impl Analysis {
    pub fn correlation(&self, name: &str) -> Option<&CorrelationResult> {
        self.correlations.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    pub fn histogram(&self, name: &str) -> Option<&CoincidenceHistogram> {
        self.histograms.iter().find(|(n, _)| n == name).map(|(_, h)| h)
    }

    pub fn snr(&self, name: &str) -> Option<&Snr> {
        self.snrs.iter().find(|(n, _)| n == name).map(|(_, s)| s)
    }

    pub fn correlations_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "duration_ps = {}", self.duration_ps);
        for (ch, n) in &self.singles {
            let _ = writeln!(s, "singles.ch{ch} = {n}");
        }
        for (name, c) in &self.correlations {
            let _ = writeln!(s, "{name}.value = {}", c.value);
            let _ = writeln!(s, "{name}.sigma = {}", c.stat_sigma);
            let _ = writeln!(s, "{name}.delay_ps = {}", c.delay_ps);
            if let Some(d2) = c.delay2_ps {
                let _ = writeln!(s, "{name}.delay2_ps = {d2}");
            }
            let _ = writeln!(s, "{name}.peak_counts = {}", c.peak_counts);
            let _ = writeln!(s, "{name}.accidental_estimate = {}", c.accidental_estimate);
            if let Some(b) = c.baseline_ratio {
                let _ = writeln!(s, "{name}.baseline_ratio = {b}");
            }
        }
        for (name, r) in &self.snrs {
            let _ = writeln!(s, "snr.{name}.value = {}", r.value);
            let _ = writeln!(s, "snr.{name}.background_zero = {}", r.background_zero);
        }
        s
    }

    pub fn cs_text(&self) -> String {
        let mut s = String::new();
        for r in &self.cs {
            for line in r.to_kv().lines() {
                let _ = writeln!(s, "{}.{line}", r.label());
            }
        }
        s
    }

    pub fn cs_csv(&self) -> String {
        let mut s = format!("name,{}\n", CsReport::csv_header());
        for r in &self.cs {
            let _ = writeln!(s, "{},{}", r.label(), r.csv_row());
        }
        s
    }

    /// Writes `hist_<name>.csv`, `correlations.txt`, `cs.txt` and `cs.csv`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io_at(dir, e))?;
        let put = |name: String, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io_at(&p, e))
        };
        for (name, h) in &self.histograms {
            put(format!("hist_{name}.csv"), h.to_csv())?;
        }
        put("correlations.txt".into(), self.correlations_text())?;
        put("cs.txt".into(), self.cs_text())?;
        put("cs.csv".into(), self.cs_csv())?;
        Ok(())
    }
}

fn stream(streams: &ClickStreams, ch: u8) -> Result<&TagStream> {
    streams
        .get(&ch)
        .ok_or_else(|| Error::Missing(format!("missing: clicks for channel {ch}")))
}

fn check_durations(streams: &ClickStreams) -> Result<u64> {
    let mut d = None;
    for (ch, s) in streams {
        match d {
            None => d = Some(s.duration_ps()),
            Some(x) if x != s.duration_ps() => {
                return Err(Error::config_msg(format!(
                    "channel {ch} duration {} differs from {x}",
                    s.duration_ps()
                )))
            }
            _ => {}
        }
    }
    Ok(d.unwrap_or(0))
}

struct Builder<'a> {
    cfg: &'a ExperimentConfig,
    out: Analysis,
}

impl Builder<'_> {
    fn two_fold(&mut self, name: &str, g: &str, a: &TagStream, b: &TagStream, which: &str, ca: u8, cb: u8) -> Result<()> {
        let spec = self.cfg.analysis.spec(which, ca, cb)?;
        let h = cross_histogram(a, b, &spec)?;
        let (peak, bg) = self.cfg.analysis.single_bin_policy().select(&h);
        self.out.correlations.push((g.into(), g2_from_histogram(&h, &peak, &bg)?));
        if !bg.is_empty() {
            self.out.snrs.push((name.into(), snr(&h, &peak, &bg)?));
        }
        self.out.histograms.push((name.into(), h));
        Ok(())
    }

    fn auto(&mut self, name: &str, g: &str, s: &TagStream, ch: u8) -> Result<()> {
        let spec = self.cfg.analysis.spec("auto", ch, ch)?;
        let dead = self.cfg.detector(ch)?.dead_time_ps.round() as u64;
        let (h, r) = g2_auto(s, &spec, dead, self.cfg.run.seed)?;
        self.out.correlations.push((g.into(), r));
        self.out.histograms.push((name.into(), h));
        Ok(())
    }
}

/// Histograms, correlations, SNRs and Cauchy-Schwarz reports of a run.
pub fn analyze(cfg: &ExperimentConfig, streams: &ClickStreams) -> Result<Analysis> {
    let duration_ps = check_durations(streams)?;
    let mut b = Builder {
        cfg,
        out: Analysis {
            histograms: Vec::new(),
            correlations: Vec::new(),
            snrs: Vec::new(),
            cs: Vec::new(),
            singles: streams.iter().map(|(&c, s)| (c, s.len() as u64)).collect(),
            duration_ps,
        },
    };
    let k = cfg.analysis.k_sigma;
    match cfg.run.mode {
        RunMode::Pair => {
            let s1 = stream(streams, channel::S1)?;
            let s2 = stream(streams, channel::S2)?;
            b.two_fold("s1_s2", "g12", s1, s2, "pair", channel::S1, channel::S2)?;
            b.auto("s1_s1", "g11", s1, channel::S1)?;
            b.auto("s2_s2", "g22", s2, channel::S2)?;
            let g = |n: &str| b.out.correlation(n).unwrap().clone();
            let r = cs_two(&g("g12"), &g("g11"), &g("g22"), k)?;
            b.out.cs.push(r);
        }
        RunMode::S3S4 => {
            let s3 = stream(streams, channel::S3)?;
            let s4 = stream(streams, channel::S4)?;
            b.two_fold("s3_s4", "g34", s3, s4, "s3s4", channel::S3, channel::S4)?;
        }
        RunMode::Triplet => {
            let s1 = stream(streams, channel::S1)?;
            let s3 = stream(streams, channel::S3)?;
            let s4 = stream(streams, channel::S4)?;
            let a = &cfg.analysis;
            let policy = a.triple_policy();
            let (h, g3) = triple_histogram(
                s1,
                s3,
                s4,
                cfg.triple_window_ps(),
                a.triple_bin_width_ps,
                a.triple_range_ps,
                &policy,
            )?;
            let (peak, bg) = policy.select(&h);
            if !bg.is_empty() {
                b.out.snrs.push(("s1_s3s4".into(), snr(&h, &peak, &bg)?));
            }
            b.out.histograms.push(("s1_s3s4".into(), h));
            b.out.correlations.push(("g3".into(), g3));
            b.auto("s1_s1", "g11", s1, channel::S1)?;
            let g3 = b.out.correlation("g3").unwrap().clone();
            let g11 = b.out.correlation("g11").unwrap().clone();
            let r = cs_three(
                &g3,
                &g11,
                &CorrelationResult::fixed(a.g33, a.g33_sigma),
                &CorrelationResult::fixed(a.g44, a.g44_sigma),
                k,
            )?;
            b.out.cs.push(r);
        }
        RunMode::Coherent => {
            let s3 = stream(streams, channel::S3)?;
            let s4 = stream(streams, channel::S4)?;
            b.auto("s3_s3", "g33", s3, channel::S3)?;
            b.auto("s4_s4", "g44", s4, channel::S4)?;
        }
    }
    Ok(b.out)
}

/// Mean background level of a histogram under the given policy.
pub fn background_mean(h: &CoincidenceHistogram, bg: &[usize]) -> f64 {
    if bg.is_empty() {
        return 0.0;
    }
    bg.iter().map(|&k| h.counts[k] as f64).sum::<f64>() / bg.len() as f64
}

//! Segmented end-to-end simulation: source, cascade and detectors.
//!
//! The run is cut into segments of `run.segment_ps`. Every random stream is
//! keyed by segment index, so segments are generated in parallel batches
//! and then fed in order through the incremental detectors. Output depends
//! only on the configuration, never on the number of worker threads.
//!
//! Detector efficiencies of the signal-1 and signal-2 arms are applied as
//! marks on the pair process (pairs with no retained photon are never
//! drawn), and the waveguide conversion of signal 2 is folded into the same
//! marks. Those detectors then run at unit efficiency.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::config::{ExperimentConfig, RunMode};
use crate::detector::{DetectorMode, FreeDetector, GatedDetector};
use crate::error::Result;
use crate::rng::{keyed_rng, stream, JITTER_CLIP_SIGMA};
use crate::source::{pair_times, CoherentGenerator, SrsGenerator};
use crate::timetag::{channel, TagStream};

/// Click streams keyed by detector channel.
pub type ClickStreams = BTreeMap<u8, TagStream>;

/// Sorted hold-back buffer for emission times that may cross a segment edge.
#[derive(Debug, Default)]
struct Carry {
    pending: Vec<i64>,
}

impl Carry {
    fn push(&mut self, times: impl IntoIterator<Item = i64>) {
        self.pending.extend(times);
    }

    fn release(&mut self, threshold: i64) -> Vec<u64> {
        self.pending.sort_unstable();
        let cut = self.pending.partition_point(|&t| t < threshold);
        self.pending
            .drain(..cut)
            .filter(|&t| t >= 0)
            .map(|t| t as u64)
            .collect()
    }
}

enum D3 {
    Free(FreeDetector),
    Gated(GatedDetector),
}

fn segment_bounds(cfg: &ExperimentConfig) -> Vec<(u64, u64, u64)> {
    let d = cfg.run.duration_ps;
    let seg = cfg.run.segment_ps;
    if d == 0 {
        return Vec::new();
    }
    let n = (d + 1).div_ceil(seg);
    (0..n).map(|k| (k, k * seg, ((k + 1) * seg).min(d + 1))).collect()
}

fn free(cfg: &ExperimentConfig, ch: u8, unit_efficiency: bool) -> Result<FreeDetector> {
    let mut p = cfg.detector(ch)?.clone();
    if unit_efficiency {
        p.efficiency = 1.0;
    }
    Ok(FreeDetector::new(ch, p, cfg.run.seed, cfg.run.duration_ps))
}

fn pair_reach(jitter_ps: f64) -> i64 {
    if jitter_ps <= 0.0 {
        0
    } else {
        (jitter_ps * JITTER_CLIP_SIGMA).ceil() as i64 + 1
    }
}

fn batch_size() -> usize {
    rayon::current_num_threads().max(1)
}

/// Runs the configured experiment and returns the click stream of every
/// detector channel of the run mode.
pub fn simulate(cfg: &ExperimentConfig) -> Result<ClickStreams> {
    cfg.validate()?;
    let mut out: BTreeMap<u8, Vec<u64>> = cfg.run.mode.channels().iter().map(|&c| (c, Vec::new())).collect();
    match cfg.run.mode {
        RunMode::Coherent => run_coherent(cfg, &mut out)?,
        _ => run_srs(cfg, &mut out)?,
    }
    let d = cfg.run.duration_ps;
    out.into_iter()
        .map(|(ch, v)| Ok((ch, TagStream::from_sorted_times(ch, v, d)?)))
        .collect()
}

fn run_srs(cfg: &ExperimentConfig, out: &mut BTreeMap<u8, Vec<u64>>) -> Result<()> {
    let mode = cfg.run.mode;
    let src = cfg.source.resolve()?;
    let seed = cfg.run.seed;
    let end_all = cfg.run.duration_ps + 1;

    let k1 = match mode {
        RunMode::Pair | RunMode::Triplet => cfg.detector(channel::S1)?.efficiency,
        _ => 0.0,
    };
    let k2 = match mode {
        RunMode::Pair => src.s2_collection_efficiency * cfg.detector(channel::S2)?.efficiency,
        _ => src.s2_collection_efficiency * cfg.spdc.conversion_efficiency,
    };
    let gen = SrsGenerator::new(src, seed).with_keep([k1, k2]);

    let mut d_s1 = match mode {
        RunMode::Pair | RunMode::Triplet => Some(free(cfg, channel::S1, true)?),
        _ => None,
    };
    let mut d_s2 = match mode {
        RunMode::Pair => Some(free(cfg, channel::S2, true)?),
        _ => None,
    };
    let cascade = matches!(mode, RunMode::S3S4 | RunMode::Triplet);
    let mut d4 = if cascade { Some(free(cfg, channel::S4, false)?) } else { None };
    let mut d3 = if cascade {
        let p = cfg.detector(channel::S3)?.clone();
        Some(match p.mode {
            DetectorMode::FreeRunning => D3::Free(FreeDetector::new(channel::S3, p, seed, cfg.run.duration_ps)),
            DetectorMode::Gated => D3::Gated(GatedDetector::new(
                channel::S3,
                p,
                cfg.gate(channel::S3)?.clone(),
                seed,
                cfg.run.duration_ps,
            )),
        })
    } else {
        None
    };
    let reach = pair_reach(cfg.spdc.pair_jitter_ps);

    let mut carry2 = Carry::default();
    let mut carry3 = Carry::default();
    let mut carry4 = Carry::default();
    let bounds = segment_bounds(cfg);
    let n = bounds.len() as u64;

    for batch in bounds.chunks(batch_size()) {
        let segs: Vec<_> = batch
            .par_iter()
            .map(|&(k, start, end)| gen.segment(k, start, end))
            .collect();
        for (&(k, _start, end), seg) in batch.iter().zip(segs) {
            let last = k + 1 == n;
            let horizon = if last { end_all } else { end };
            let s1: Vec<u64> = seg.s1;
            carry2.push(seg.s2.into_iter().map(|t| t as i64));
            let s2 = carry2.release(if last { i64::MAX } else { horizon as i64 });

            if let Some(d) = d_s1.as_mut() {
                let clicks = d.feed(k, &s1, horizon);
                out.get_mut(&channel::S1).unwrap().extend(clicks);
            }
            if let Some(d) = d_s2.as_mut() {
                let clicks = d.feed(k, &s2, horizon);
                out.get_mut(&channel::S2).unwrap().extend(clicks);
            }
            if !cascade {
                continue;
            }
            let mut jit = keyed_rng(seed, stream::id(channel::S3, stream::PAIR_JITTER), k);
            for &t in &s2 {
                let (a, b) = pair_times(&mut jit, t, cfg.spdc.pair_jitter_ps);
                carry3.pending.push(a);
                carry4.pending.push(b);
            }
            let h34 = if last { end_all } else { horizon.saturating_sub(reach as u64) };
            let cut = if last { i64::MAX } else { h34 as i64 };
            let s3 = carry3.release(cut);
            let s4 = carry4.release(cut);
            let d4 = d4.as_mut().unwrap();
            let clicks4 = d4.feed(k, &s4, h34);
            let trig_h = d4.release_threshold(h34);
            match d3.as_mut().unwrap() {
                D3::Free(d) => out.get_mut(&channel::S3).unwrap().extend(d.feed(k, &s3, h34)),
                D3::Gated(d) => out
                    .get_mut(&channel::S3)
                    .unwrap()
                    .extend(d.feed(k, &s3, h34, &clicks4, trig_h)),
            }
            out.get_mut(&channel::S4).unwrap().extend(clicks4);
        }
    }

    if let Some(d) = d_s1.as_mut() {
        out.get_mut(&channel::S1).unwrap().extend(d.finish(n));
    }
    if let Some(d) = d_s2.as_mut() {
        out.get_mut(&channel::S2).unwrap().extend(d.finish(n));
    }
    if cascade {
        let rest4 = d4.as_mut().unwrap().finish(n);
        match d3.as_mut().unwrap() {
            D3::Free(d) => out.get_mut(&channel::S3).unwrap().extend(d.finish(n)),
            D3::Gated(d) => {
                let mut c = d.feed(n, &[], end_all, &rest4, end_all);
                c.extend(d.finish(n + 1));
                out.get_mut(&channel::S3).unwrap().extend(c);
            }
        }
        out.get_mut(&channel::S4).unwrap().extend(rest4);
    }
    Ok(())
}

fn run_coherent(cfg: &ExperimentConfig, out: &mut BTreeMap<u8, Vec<u64>>) -> Result<()> {
    let gen = CoherentGenerator {
        params: cfg.spdc.clone(),
        seed: cfg.run.seed,
    };
    let end_all = cfg.run.duration_ps + 1;
    let mut d3 = free(cfg, channel::S3, false)?;
    let mut d4 = free(cfg, channel::S4, false)?;
    let reach = pair_reach(cfg.spdc.pair_jitter_ps) as u64;
    let mut carry3 = Carry::default();
    let mut carry4 = Carry::default();
    let bounds = segment_bounds(cfg);
    let n = bounds.len() as u64;
    for batch in bounds.chunks(batch_size()) {
        let segs: Vec<_> = batch
            .par_iter()
            .map(|&(k, start, end)| gen.segment(k, start, end))
            .collect();
        for (&(k, _, end), (s3, s4)) in batch.iter().zip(segs) {
            let last = k + 1 == n;
            carry3.push(s3);
            carry4.push(s4);
            let h = if last { end_all } else { end.saturating_sub(reach) };
            let cut = if last { i64::MAX } else { h as i64 };
            let a = carry3.release(cut);
            let b = carry4.release(cut);
            out.get_mut(&channel::S3).unwrap().extend(d3.feed(k, &a, h));
            out.get_mut(&channel::S4).unwrap().extend(d4.feed(k, &b, h));
        }
    }
    out.get_mut(&channel::S3).unwrap().extend(d3.finish(n));
    out.get_mut(&channel::S4).unwrap().extend(d4.finish(n));
    Ok(())
}

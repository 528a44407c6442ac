//! Coincidence histograms and normalized correlations.
//!
//! Delays are `t_b - t_a`. Bin `k` covers `[min + k*w, min + (k+1)*w)`.
//! Accidentals are estimated from singles: `R_a * R_b * w * T` counts per
//! bin, with `R = singles / T`. Statistical errors follow
//! `sigma_g = g * sqrt(1/N_peak + 1/N_acc)`, where `1/N_acc = 1/N_a + 1/N_b`
//! is the relative variance of the singles-based accidental estimate.

use std::borrow::Cow;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, stream};
use crate::timetag::TagStream;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistogramSpec {
    pub bin_width_ps: u64,
    pub range_ps: (i64, i64),
    pub channel_a: u8,
    pub channel_b: u8,
}

impl HistogramSpec {
    pub fn new(bin_width_ps: u64, range_ps: (i64, i64), channel_a: u8, channel_b: u8) -> Result<Self> {
        let spec = Self {
            bin_width_ps,
            range_ps,
            channel_a,
            channel_b,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (min, max) = self.range_ps;
        if self.bin_width_ps == 0 {
            return Err(Error::config("analysis.bin_width_ps", "must be > 0"));
        }
        if max <= min {
            return Err(Error::config("analysis.range_ps", "max must exceed min"));
        }
        if !((max - min) as u64).is_multiple_of(self.bin_width_ps) {
            return Err(Error::config(
                "analysis.range_ps",
                format!("bin width {} does not divide range {}", self.bin_width_ps, max - min),
            ));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        ((self.range_ps.1 - self.range_ps.0) as u64 / self.bin_width_ps) as usize
    }

    pub fn bin_start(&self, k: usize) -> i64 {
        self.range_ps.0 + k as i64 * self.bin_width_ps as i64
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.bin_start(k) as f64 + self.bin_width_ps as f64 / 2.0
    }

    /// Index of the bin containing `delay`, if inside the range.
    pub fn bin_of(&self, delay: i64) -> Option<usize> {
        if delay < self.range_ps.0 || delay >= self.range_ps.1 {
            return None;
        }
        Some(((delay - self.range_ps.0) as u64 / self.bin_width_ps) as usize)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub spec: HistogramSpec,
    pub counts: Vec<u64>,
    pub singles_a: u64,
    pub singles_b: u64,
    pub duration_ps: u64,
}

impl CoincidenceHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Expected accidental counts per bin from singles.
    pub fn accidental_per_bin(&self) -> f64 {
        if self.duration_ps == 0 {
            return 0.0;
        }
        self.singles_a as f64 * self.singles_b as f64 * self.spec.bin_width_ps as f64
            / self.duration_ps as f64
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (k, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = k;
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_start_ps,bin_end_ps,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let start = self.spec.bin_start(k);
            let _ = writeln!(s, "{},{},{}", start, start + self.spec.bin_width_ps as i64, c);
        }
        s
    }

    pub fn from_csv(text: &str, channel_a: u8, channel_b: u8) -> Result<(Vec<(i64, i64)>, Vec<u64>)> {
        let mut lines = text.lines();
        if lines.next() != Some("bin_start_ps,bin_end_ps,count") {
            return Err(Error::format(0, "missing histogram CSV header"));
        }
        let _ = (channel_a, channel_b);
        let mut edges = Vec::new();
        let mut counts = Vec::new();
        for (i, line) in lines.enumerate() {
            let cols: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| s.parse::<i64>().map_err(|_| Error::format(i as u64 + 1, "bad CSV number"));
            if cols.len() != 3 {
                return Err(Error::format(i as u64 + 1, "expected 3 columns"));
            }
            edges.push((parse(cols[0])?, parse(cols[1])?));
            counts.push(parse(cols[2])? as u64);
        }
        Ok((edges, counts))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationResult {
    pub value: f64,
    pub delay_ps: f64,
    /// Second delay of a three-fold correlation (signal 3 to signal 4).
    pub delay2_ps: Option<f64>,
    pub stat_sigma: f64,
    /// Total counts in the peak bins.
    pub peak_counts: f64,
    /// Expected accidental counts in the peak bins.
    pub accidental_estimate: f64,
    /// Mean count per baseline bin, divided by the singles-based accidental level.
    pub baseline_ratio: Option<f64>,
}

impl CorrelationResult {
    /// A calibrated value entered by hand rather than measured.
    pub fn fixed(value: f64, stat_sigma: f64) -> Self {
        Self {
            value,
            delay_ps: 0.0,
            delay2_ps: None,
            stat_sigma,
            peak_counts: 0.0,
            accidental_estimate: 0.0,
            baseline_ratio: None,
        }
    }
}

fn stream_times(s: &TagStream, ch: u8) -> Cow<'_, [u64]> {
    if s.channel_set().len() <= 1 {
        Cow::Borrowed(s.times())
    } else {
        Cow::Owned(s.channel_times(ch))
    }
}

/// Windowed two-pointer correlation of sorted timestamp slices.
pub fn histogram_times(a: &[u64], b: &[u64], spec: &HistogramSpec) -> Vec<u64> {
    let (min, max) = spec.range_ps;
    let w = spec.bin_width_ps as i64;
    let mut counts = vec![0u64; spec.bins()];
    let mut lo = 0usize;
    for &ta in a {
        let ta = ta as i64;
        while lo < b.len() && (b[lo] as i64) < ta + min {
            lo += 1;
        }
        let mut j = lo;
        while j < b.len() {
            let d = b[j] as i64 - ta;
            if d >= max {
                break;
            }
            counts[((d - min) / w) as usize] += 1;
            j += 1;
        }
    }
    counts
}

/// Delay histogram `t_b - t_a` between two sorted streams.
pub fn cross_histogram(a: &TagStream, b: &TagStream, spec: &HistogramSpec) -> Result<CoincidenceHistogram> {
    spec.validate()?;
    a.validate()?;
    b.validate()?;
    let ta = stream_times(a, spec.channel_a);
    let tb = stream_times(b, spec.channel_b);
    Ok(CoincidenceHistogram {
        counts: histogram_times(&ta, &tb, spec),
        spec: spec.clone(),
        singles_a: ta.len() as u64,
        singles_b: tb.len() as u64,
        duration_ps: a.duration_ps().max(b.duration_ps()),
    })
}

fn check_bins(h: &CoincidenceHistogram, peak: &[usize], baseline: &[usize]) -> Result<()> {
    if peak.is_empty() {
        return Err(Error::Domain("peak bin set is empty".into()));
    }
    let n = h.counts.len();
    if peak.iter().chain(baseline).any(|&k| k >= n) {
        return Err(Error::Domain("bin index out of range".into()));
    }
    if peak.iter().any(|k| baseline.contains(k)) {
        return Err(Error::Domain("peak and baseline bins overlap".into()));
    }
    Ok(())
}

/// Normalized correlation from peak bins; baseline bins give a diagnostic
/// estimate of the accidental level and are not substituted.
pub fn g2_from_histogram(h: &CoincidenceHistogram, peak_bins: &[usize], baseline_bins: &[usize]) -> Result<CorrelationResult> {
    check_bins(h, peak_bins, baseline_bins)?;
    let acc = h.accidental_per_bin();
    if acc <= 0.0 {
        return Err(Error::UndefinedCorrelation(format!(
            "no accidental level (singles {} x {})",
            h.singles_a, h.singles_b
        )));
    }
    let n_peak: u64 = peak_bins.iter().map(|&k| h.counts[k]).sum();
    let mean_peak = n_peak as f64 / peak_bins.len() as f64;
    let value = mean_peak / acc;
    let acc_counts = acc * peak_bins.len() as f64;
    // the singles-product estimate carries the counting error of both singles totals
    let acc_rel2 = 1.0 / h.singles_a as f64 + 1.0 / h.singles_b as f64;
    let stat_sigma = if n_peak > 0 {
        value * (1.0 / n_peak as f64 + acc_rel2).sqrt()
    } else {
        1.0 / acc_counts
    };
    let delay_ps = peak_bins.iter().map(|&k| h.spec.bin_center(k)).sum::<f64>() / peak_bins.len() as f64;
    let baseline_ratio = if baseline_bins.is_empty() {
        None
    } else {
        let mean: f64 = baseline_bins.iter().map(|&k| h.counts[k] as f64).sum::<f64>() / baseline_bins.len() as f64;
        Some(mean / acc)
    };
    Ok(CorrelationResult {
        value,
        delay_ps,
        delay2_ps: None,
        stat_sigma,
        peak_counts: n_peak as f64,
        accidental_estimate: acc_counts,
        baseline_ratio,
    })
}

/// Peak window around the histogram maximum and the background bins outside it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeakPolicy {
    pub bins_before: usize,
    pub bins_after: usize,
    /// Extra bins on each side of the peak window excluded from the background.
    pub guard_bins: usize,
}

impl Default for PeakPolicy {
    fn default() -> Self {
        Self {
            bins_before: 0,
            bins_after: 0,
            guard_bins: 10,
        }
    }
}

impl PeakPolicy {
    pub fn select(&self, h: &CoincidenceHistogram) -> (Vec<usize>, Vec<usize>) {
        self.select_around(h, h.argmax())
    }

    pub fn select_around(&self, h: &CoincidenceHistogram, center: usize) -> (Vec<usize>, Vec<usize>) {
        let n = h.counts.len();
        let lo = center.saturating_sub(self.bins_before);
        let hi = (center + self.bins_after).min(n - 1);
        let peak: Vec<usize> = (lo..=hi).collect();
        let glo = lo.saturating_sub(self.guard_bins);
        let ghi = hi + self.guard_bins;
        let background = (0..n).filter(|&k| k < glo || k > ghi).collect();
        (peak, background)
    }
}

/// Auto-correlation through a virtual 50/50 splitter.
///
/// Clicks are split by a fair coin keyed by `seed`, then correlated. A
/// physical detector never produces two clicks closer than its dead time, so
/// the zero-delay value is read from the bins adjacent to the exclusion zone
/// `(-exclusion_ps, exclusion_ps)`; with no exclusion it is the bin(s)
/// containing zero delay. Baseline bins are those in the outer quarter of
/// the range on each side.
pub fn g2_auto(clicks: &TagStream, spec: &HistogramSpec, exclusion_ps: u64, seed: u64) -> Result<(CoincidenceHistogram, CorrelationResult)> {
    spec.validate()?;
    clicks.validate()?;
    let times = stream_times(clicks, spec.channel_a);
    let mut coin = keyed_rng(seed, stream::id(spec.channel_a, stream::SPLITTER), 0);
    let mut a = Vec::with_capacity(times.len() / 2 + 1);
    let mut b = Vec::with_capacity(times.len() / 2 + 1);
    for &t in times.iter() {
        if coin.gen::<bool>() {
            a.push(t);
        } else {
            b.push(t);
        }
    }
    let h = CoincidenceHistogram {
        counts: histogram_times(&a, &b, spec),
        spec: spec.clone(),
        singles_a: a.len() as u64,
        singles_b: b.len() as u64,
        duration_ps: clicks.duration_ps(),
    };
    let ex = exclusion_ps as i64;
    let w = spec.bin_width_ps as i64;
    let mut peak = Vec::new();
    if ex == 0 {
        for k in 0..spec.bins() {
            let s = spec.bin_start(k);
            if s <= 0 && 0 < s + w || s == 0 || s + w == 0 {
                peak.push(k);
            }
        }
    } else {
        if let Some(k) = (0..spec.bins()).find(|&k| spec.bin_start(k) >= ex) {
            peak.push(k);
        }
        if let Some(k) = (0..spec.bins()).rev().find(|&k| spec.bin_start(k) + w <= -ex) {
            peak.push(k);
        }
    }
    peak.sort_unstable();
    peak.dedup();
    if peak.is_empty() {
        return Err(Error::Domain("histogram range does not reach past the exclusion zone".into()));
    }
    let (min, max) = spec.range_ps;
    let quarter = (max - min) / 4;
    let baseline: Vec<usize> = (0..spec.bins())
        .filter(|k| !peak.contains(k))
        .filter(|&k| spec.bin_start(k) < min + quarter || spec.bin_start(k) + w > max - quarter)
        .collect();
    let r = g2_from_histogram(&h, &peak, &baseline)?;
    Ok((h, r))
}

/// Signal-3 clicks that have a signal-4 click within `window_ps` before them.
pub fn s3s4_events(s3: &[u64], s4: &[u64], window_ps: u64) -> (Vec<u64>, f64) {
    let mut out = Vec::with_capacity(s3.len());
    let mut lo = 0usize;
    let mut delay_sum = 0.0;
    for &t3 in s3 {
        while lo < s4.len() && s4[lo] + window_ps < t3 {
            lo += 1;
        }
        // latest s4 click in [t3 - window, t3]
        let mut j = lo;
        let mut last = None;
        while j < s4.len() && s4[j] <= t3 {
            last = Some(s4[j]);
            j += 1;
        }
        if let Some(t4) = last {
            out.push(t3);
            delay_sum += (t3 - t4) as f64;
        }
    }
    let mean_delay = if out.is_empty() { 0.0 } else { delay_sum / out.len() as f64 };
    (out, mean_delay)
}

/// Triple-coincidence histogram of signal-3/signal-4 events against
/// signal-1 clicks, and its normalized three-fold correlation.
pub fn triple_histogram(
    s1: &TagStream,
    s3_gated: &TagStream,
    s4: &TagStream,
    window_ps: u64,
    bin_width_ps: u64,
    range_ps: (i64, i64),
    policy: &PeakPolicy,
) -> Result<(CoincidenceHistogram, CorrelationResult)> {
    use crate::timetag::channel;
    let spec = HistogramSpec::new(bin_width_ps, range_ps, channel::S1, channel::S3)?;
    s1.validate()?;
    s3_gated.validate()?;
    s4.validate()?;
    let t1 = stream_times(s1, channel::S1);
    let (events, tau1) = s3s4_events(&stream_times(s3_gated, channel::S3), &stream_times(s4, channel::S4), window_ps);
    if t1.is_empty() || events.is_empty() {
        return Err(Error::UndefinedCorrelation(format!(
            "empty herald stream (s1 clicks {}, s3&s4 events {})",
            t1.len(),
            events.len()
        )));
    }
    let h = CoincidenceHistogram {
        counts: histogram_times(&t1, &events, &spec),
        spec,
        singles_a: t1.len() as u64,
        singles_b: events.len() as u64,
        duration_ps: s1.duration_ps().max(s3_gated.duration_ps()),
    };
    let (peak, background) = policy.select(&h);
    let mut r = g2_from_histogram(&h, &peak, &background)?;
    r.delay2_ps = Some(tau1);
    Ok((h, r))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    pub value: f64,
    /// Set when the background mean is zero; `value` is then +inf.
    pub background_zero: bool,
}

pub fn snr_from_counts(peak: &[f64], background: &[f64]) -> Result<Snr> {
    if peak.is_empty() || background.is_empty() {
        return Err(Error::Domain("snr needs non-empty peak and background".into()));
    }
    let max = peak.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = background.iter().sum::<f64>() / background.len() as f64;
    if mean <= 0.0 {
        return Ok(Snr {
            value: f64::INFINITY,
            background_zero: true,
        });
    }
    Ok(Snr {
        value: max / mean,
        background_zero: false,
    })
}

/// Highest peak bin over mean background bin.
pub fn snr(h: &CoincidenceHistogram, peak_bins: &[usize], background_bins: &[usize]) -> Result<Snr> {
    if background_bins.is_empty() {
        return Err(Error::Domain("background bin set is empty".into()));
    }
    check_bins(h, peak_bins, background_bins)?;
    let p: Vec<f64> = peak_bins.iter().map(|&k| h.counts[k] as f64).collect();
    let b: Vec<f64> = background_bins.iter().map(|&k| h.counts[k] as f64).collect();
    snr_from_counts(&p, &b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(ch: u8, t: Vec<u64>, dur: u64) -> TagStream {
        TagStream::from_sorted_times(ch, t, dur).unwrap()
    }

    #[test]
    fn single_tag_zero_bin() {
        let spec = HistogramSpec::new(1000, (-10_000, 10_000), 0, 1).unwrap();
        let h = cross_histogram(&s(0, vec![5000], 10_000), &s(1, vec![5000], 10_000), &spec).unwrap();
        assert_eq!(h.total(), 1);
        assert_eq!(h.counts[spec.bin_of(0).unwrap()], 1);
    }

    #[test]
    fn spec_validation() {
        assert!(HistogramSpec::new(3, (0, 10), 0, 1).is_err());
        assert!(HistogramSpec::new(0, (0, 10), 0, 1).is_err());
        assert!(HistogramSpec::new(5, (10, 10), 0, 1).is_err());
    }

    #[test]
    fn unsorted_input_rejected() {
        let spec = HistogramSpec::new(10, (-100, 100), 0, 0).unwrap();
        let a = TagStream::from_tags(vec![crate::timetag::TimeTag::new(0, 5)], 10).unwrap();
        assert!(cross_histogram(&a, &a, &spec).is_ok());
        assert!(TagStream::from_sorted_times(0, vec![5, 3], 10).is_err());
    }

    #[test]
    fn g2_requires_accidentals() {
        let spec = HistogramSpec::new(10, (-100, 100), 0, 1).unwrap();
        let h = cross_histogram(&TagStream::empty(1000), &TagStream::empty(1000), &spec).unwrap();
        assert!(matches!(
            g2_from_histogram(&h, &[10], &[0]),
            Err(Error::UndefinedCorrelation(_))
        ));
        assert!(matches!(g2_from_histogram(&h, &[], &[0]), Err(Error::Domain(_))));
        assert!(matches!(g2_from_histogram(&h, &[1], &[1]), Err(Error::Domain(_))));
    }

    #[test]
    fn snr_fixtures() {
        let r = snr_from_counts(&[32.0], &[2.9]).unwrap();
        assert!((r.value - 32.0 / 2.9).abs() < 1e-12);
        let u = snr_from_counts(&[5.0, 5.0], &[5.0; 10]).unwrap();
        assert_eq!(u.value, 1.0);
        let r = snr_from_counts(&[16.7 * 3.0], &[3.0, 3.0]).unwrap();
        assert!((r.value - 16.7).abs() < 1e-12);
        let z = snr_from_counts(&[1.0], &[0.0]).unwrap();
        assert!(z.background_zero && z.value.is_infinite());
    }

    #[test]
    fn s3s4_event_window() {
        let (ev, tau) = s3s4_events(&[100, 500, 1000], &[90, 200], 50);
        assert_eq!(ev, vec![100]);
        assert_eq!(tau, 10.0);
    }

    #[test]
    fn csv_format() {
        let spec = HistogramSpec::new(5, (-10, 10), 0, 1).unwrap();
        let h = CoincidenceHistogram {
            spec,
            counts: vec![1, 2, 3, 4],
            singles_a: 1,
            singles_b: 1,
            duration_ps: 10,
        };
        let csv = h.to_csv();
        assert_eq!(csv, "bin_start_ps,bin_end_ps,count\n-10,-5,1\n-5,0,2\n0,5,3\n5,10,4\n");
        let (edges, counts) = CoincidenceHistogram::from_csv(&csv, 0, 1).unwrap();
        assert_eq!(edges[0], (-10, -5));
        assert_eq!(counts, vec![1, 2, 3, 4]);
    }
}

use std::io::Cursor;

use proptest::prelude::*;
use tripletsim::correlator::{cross_histogram, g2_from_histogram, histogram_times, HistogramSpec};
use tripletsim::correlator::CorrelationResult;
use tripletsim::detector::{detect_free, detect_gated, DetectorMode, DetectorParams, GateParams};
use tripletsim::nonclassicality::{cs_three, cs_two};
use tripletsim::rng::{keyed_rng, poisson_times};
use tripletsim::timetag::{merge_streams, read_tags, write_tags};
use tripletsim::{TagStream, TimeTag};

const DURATION: u64 = 1_000_000;

fn sorted_times(max_len: usize) -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0..=DURATION, 0..max_len).prop_map(|mut v| {
        v.sort_unstable();
        v
    })
}

fn tag_stream(max_len: usize) -> impl Strategy<Value = TagStream> {
    prop::collection::vec((0u8..4, 0..=DURATION), 0..max_len)
        .prop_map(|v| TagStream::from_tags(v.into_iter().map(|(c, t)| TimeTag::new(c, t)).collect(), DURATION).unwrap())
}

fn brute_force(a: &[u64], b: &[u64], spec: &HistogramSpec) -> Vec<u64> {
    let mut counts = vec![0; spec.bins()];
    for &ta in a {
        for &tb in b {
            if let Some(k) = spec.bin_of(tb as i64 - ta as i64) {
                counts[k] += 1;
            }
        }
    }
    counts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn read_after_write_is_identity(s in tag_stream(300)) {
        let mut buf = Vec::new();
        let n = write_tags(&s, &mut buf).unwrap();
        prop_assert_eq!(n as usize, buf.len());
        prop_assert_eq!(read_tags(Cursor::new(buf)).unwrap(), s);
    }

    #[test]
    fn merge_is_sorted_and_preserves_multiset(a in tag_stream(100), b in tag_stream(100), c in tag_stream(100)) {
        let m = merge_streams(&[a.clone(), b.clone(), c.clone()]).unwrap();
        prop_assert_eq!(m.len(), a.len() + b.len() + c.len());
        let tags = m.to_tags();
        prop_assert!(tags.windows(2).all(|w| (w[0].timestamp, w[0].channel) <= (w[1].timestamp, w[1].channel)));
        let mut all: Vec<TimeTag> = [a, b, c].iter().flat_map(|s| s.to_tags()).collect();
        all.sort_by_key(|t| (t.timestamp, t.channel));
        prop_assert_eq!(tags, all);
    }

    #[test]
    fn merge_is_order_independent(a in tag_stream(100), b in tag_stream(100)) {
        let ab = merge_streams(&[a.clone(), b.clone()]).unwrap();
        let ba = merge_streams(&[b, a]).unwrap();
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn histogram_matches_quadratic_oracle(
        a in sorted_times(400),
        b in sorted_times(400),
        width in 1u64..5_000,
        lo in 0i64..40,
        span in 1i64..40,
    ) {
        let w = width as i64;
        let spec = HistogramSpec::new(width, (-lo * w, (span - lo) * w), 0, 1).unwrap();
        prop_assert_eq!(histogram_times(&a, &b, &spec), brute_force(&a, &b, &spec));
    }

    #[test]
    fn g2_is_invariant_under_time_rescaling(a in sorted_times(300), b in sorted_times(300), scale in 1u64..50) {
        let spec = HistogramSpec::new(20_000, (-200_000, 200_000), 0, 1).unwrap();
        let sa = TagStream::from_sorted_times(0, a.clone(), DURATION).unwrap();
        let sb = TagStream::from_sorted_times(1, b.clone(), DURATION).unwrap();
        let h = cross_histogram(&sa, &sb, &spec).unwrap();

        let up = |v: &[u64], ch| TagStream::from_sorted_times(ch, v.iter().map(|t| t * scale).collect(), DURATION * scale).unwrap();
        let s = scale as i64;
        let spec2 = HistogramSpec::new(20_000 * scale, (-200_000 * s, 200_000 * s), 0, 1).unwrap();
        let h2 = cross_histogram(&up(&a, 0), &up(&b, 1), &spec2).unwrap();
        prop_assert_eq!(&h.counts, &h2.counts);
        prop_assume!(!a.is_empty() && !b.is_empty());
        let g = g2_from_histogram(&h, &[10], &[0, 19]).unwrap();
        let g2 = g2_from_histogram(&h2, &[10], &[0, 19]).unwrap();
        prop_assert!((g.value - g2.value).abs() <= 1e-12 * g.value.max(1.0));
    }

    #[test]
    fn cs_ratio_is_covariant_with_autocorrelation_scaling(
        g12 in 0.5f64..200.0,
        g11 in 0.5f64..3.0,
        g22 in 0.5f64..3.0,
        f in 0.2f64..5.0,
    ) {
        let c = |v: f64| CorrelationResult::fixed(v, 0.01 * v);
        let base = cs_two(&c(g12), &c(g11), &c(g22), 3.0).unwrap();
        // scaling g11 and g22 by f and g12 by f leaves R unchanged
        let scaled = cs_two(&c(g12 * f), &c(g11 * f), &c(g22 * f), 3.0).unwrap();
        prop_assert!((base.value - scaled.value).abs() <= 1e-9 * base.value);
        prop_assert!((base.sigma / base.value - scaled.sigma / scaled.value).abs() <= 1e-12);
        let swapped = cs_two(&c(g12), &c(g22), &c(g11), 3.0).unwrap();
        prop_assert!((base.value - swapped.value).abs() <= 1e-9 * base.value);
        prop_assert_eq!(base.violated, base.value - 3.0 * base.sigma > 1.0);
    }

    #[test]
    fn cs_three_is_symmetric_in_herald_arms(g3 in 0.5f64..50.0, g11 in 0.5f64..3.0, g33 in 0.5f64..3.0, g44 in 0.5f64..3.0) {
        let c = |v: f64| CorrelationResult::fixed(v, 0.02 * v);
        let a = cs_three(&c(g3), &c(g11), &c(g33), &c(g44), 3.0).unwrap();
        let b = cs_three(&c(g3), &c(g11), &c(g44), &c(g33), 3.0).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value);
        prop_assert!((a.value - g3 * g3 / (g11 * g33 * g44)).abs() <= 1e-9 * a.value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn clicks_respect_dead_time(seed in any::<u64>(), rate in 1e4f64..1e7, dead in 0f64..2e6, jitter in 0f64..500.0) {
        let dur = 50_000_000_000u64;
        let mut rng = keyed_rng(seed, 0, 0);
        let photons = TagStream::from_sorted_times(0, poisson_times(&mut rng, rate, 0, dur), dur).unwrap();
        let p = DetectorParams { efficiency: 0.7, dark_rate_hz: 1e4, dead_time_ps: dead, jitter_sigma_ps: jitter, ..DetectorParams::default() };
        let clicks = detect_free(&photons, &p, seed).unwrap();
        let t = clicks.times();
        prop_assert!(t.windows(2).all(|w| (w[1] - w[0]) as f64 >= dead));
        prop_assert!(t.iter().all(|&x| x <= dur));
    }

    #[test]
    fn raising_efficiency_never_removes_clicks(seed in any::<u64>(), lo in 0f64..1.0, hi in 0f64..1.0) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let dur = 10_000_000_000u64;
        let mut rng = keyed_rng(seed, 1, 0);
        let photons = TagStream::from_sorted_times(0, poisson_times(&mut rng, 1e6, 0, dur), dur).unwrap();
        let p = |e| DetectorParams { efficiency: e, dark_rate_hz: 0.0, dead_time_ps: 0.0, jitter_sigma_ps: 100.0, ..DetectorParams::default() };
        let a = detect_free(&photons, &p(lo), seed).unwrap();
        let b = detect_free(&photons, &p(hi), seed).unwrap();
        let mut j = 0;
        for &t in a.times() {
            while j < b.len() && b.times()[j] < t {
                j += 1;
            }
            prop_assert!(j < b.len() && b.times()[j] == t, "click at {} lost", t);
            j += 1;
        }
    }

    #[test]
    fn gated_clicks_lie_inside_gates(seed in any::<u64>(), delay in 0f64..1e5, width in 1f64..1e5, dark in 0f64..0.5) {
        let dur = 20_000_000_000u64;
        let mut rng = keyed_rng(seed, 2, 0);
        let triggers = TagStream::from_sorted_times(3, poisson_times(&mut rng, 2e5, 0, dur), dur).unwrap();
        let photons = TagStream::from_sorted_times(2, poisson_times(&mut rng, 1e6, 0, dur), dur).unwrap();
        let p = DetectorParams { efficiency: 0.8, dark_rate_hz: 0.0, dead_time_ps: 1e4, jitter_sigma_ps: 0.0, mode: DetectorMode::Gated, ..DetectorParams::default() };
        let g = GateParams { gate_delay_ps: delay, gate_width_ps: width, dark_prob_per_gate: dark, trigger_channel: 3 };
        let clicks = detect_gated(&photons, &triggers, &p, &g, seed).unwrap();
        let tr = triggers.times();
        for &c in clicks.times() {
            let c = c as f64;
            let i = tr.partition_point(|&t| (t as f64) + delay <= c - width - 1.0);
            let inside = tr[i..].iter().take_while(|&&t| t as f64 + delay <= c).any(|&t| c <= t as f64 + delay + width);
            prop_assert!(inside, "click at {} outside every gate", c);
        }
        prop_assert!(clicks.times().windows(2).all(|w| w[1] - w[0] >= 10_000));
    }
}

//! Time-tag event model, stream merging and the `.ttag` binary format.
//!
//! Timestamps are integer picoseconds since the start of a run. A stream is
//! kept sorted by `(timestamp, channel)` with ties resolved by insertion
//! order, which makes every downstream histogram bit-reproducible.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic "TTAGv01\0"
//! 8       8     duration_ps (u64)
//! 16      8     record count (u64)
//! 24      12*n  records: channel (u8), 3 zero bytes, timestamp_ps (u64)
//! ```

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};
use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const MAGIC: [u8; 8] = *b"TTAGv01\0";
pub const HEADER_LEN: usize = 24;
pub const RECORD_LEN: usize = 12;

/// Detector-role channel numbering.
pub mod channel {
    /// Signal 1 (telecom SRS photon), detector D2.
    pub const S1: u8 = 0;
    /// Signal 2 (780 nm SRS photon) before the waveguide.
    pub const S2: u8 = 1;
    /// Signal 3, detector D3.
    pub const S3: u8 = 2;
    /// Signal 4, detector D4.
    pub const S4: u8 = 3;

    pub fn name(ch: u8) -> String {
        match ch {
            S1 => "s1".into(),
            S2 => "s2".into(),
            S3 => "s3".into(),
            S4 => "s4".into(),
            other => format!("aux{other}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TimeTag {
    pub channel: u8,
    pub timestamp: u64,
}

impl TimeTag {
    pub fn new(channel: u8, timestamp: u64) -> Self {
        Self { channel, timestamp }
    }
}

/// A sorted, immutable run of time tags.
///
/// Stored column-wise: most streams hold a single channel and tens of
/// millions of tags, so the 9-byte layout matters.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TagStream {
    times: Vec<u64>,
    channels: Vec<u8>,
    duration_ps: u64,
    channel_set: BTreeSet<u8>,
}

impl TagStream {
    pub fn empty(duration_ps: u64) -> Self {
        Self {
            duration_ps,
            ..Default::default()
        }
    }

    /// Builds a stream from tags in arbitrary order. Sorting is stable, so
    /// equal `(timestamp, channel)` keys keep their input order.
    pub fn from_tags(mut tags: Vec<TimeTag>, duration_ps: u64) -> Result<Self> {
        if let Some(t) = tags.iter().find(|t| t.timestamp > duration_ps) {
            return Err(Error::Invariant(format!(
                "tag at {} ps exceeds duration {} ps",
                t.timestamp, duration_ps
            )));
        }
        tags.sort_by_key(|t| (t.timestamp, t.channel));
        let mut stream = Self::empty(duration_ps);
        stream.times.reserve(tags.len());
        stream.channels.reserve(tags.len());
        for t in tags {
            stream.push_unchecked(t);
        }
        Ok(stream)
    }

    /// Single-channel stream from already sorted timestamps.
    pub fn from_sorted_times(channel: u8, times: Vec<u64>, duration_ps: u64) -> Result<Self> {
        if let Some(w) = times.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::Invariant(format!(
                "timestamps not sorted at index {}",
                w + 1
            )));
        }
        if let Some(&last) = times.last() {
            if last > duration_ps {
                return Err(Error::Invariant(format!(
                    "tag at {last} ps exceeds duration {duration_ps} ps"
                )));
            }
        }
        let mut channel_set = BTreeSet::new();
        if !times.is_empty() {
            channel_set.insert(channel);
        }
        Ok(Self {
            channels: vec![channel; times.len()],
            times,
            duration_ps,
            channel_set,
        })
    }

    fn push_unchecked(&mut self, tag: TimeTag) {
        self.times.push(tag.timestamp);
        self.channels.push(tag.channel);
        self.channel_set.insert(tag.channel);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn duration_ps(&self) -> u64 {
        self.duration_ps
    }

    pub fn channel_set(&self) -> &BTreeSet<u8> {
        &self.channel_set
    }

    pub fn times(&self) -> &[u64] {
        &self.times
    }

    pub fn channels(&self) -> &[u8] {
        &self.channels
    }

    pub fn get(&self, i: usize) -> Option<TimeTag> {
        Some(TimeTag::new(*self.channels.get(i)?, self.times[i]))
    }

    pub fn iter(&self) -> impl Iterator<Item = TimeTag> + '_ {
        self.channels
            .iter()
            .zip(&self.times)
            .map(|(&c, &t)| TimeTag::new(c, t))
    }

    pub fn to_tags(&self) -> Vec<TimeTag> {
        self.iter().collect()
    }

    /// Timestamps of one channel, in order.
    pub fn channel_times(&self, ch: u8) -> Vec<u64> {
        if self.channel_set.len() == 1 && self.channel_set.contains(&ch) {
            return self.times.clone();
        }
        self.iter()
            .filter(|t| t.channel == ch)
            .map(|t| t.timestamp)
            .collect()
    }

    /// Mean event rate in Hz.
    pub fn rate_hz(&self) -> f64 {
        if self.duration_ps == 0 {
            0.0
        } else {
            self.len() as f64 / (self.duration_ps as f64 * 1e-12)
        }
    }

    /// Verifies the ordering and duration invariants.
    pub fn validate(&self) -> Result<()> {
        for i in 1..self.len() {
            let prev = (self.times[i - 1], self.channels[i - 1]);
            let cur = (self.times[i], self.channels[i]);
            if cur < prev {
                return Err(Error::Invariant(format!("stream unsorted at index {i}")));
            }
        }
        if let Some(&t) = self.times.last() {
            if t > self.duration_ps {
                return Err(Error::Invariant(format!(
                    "tag at {t} ps exceeds duration {} ps",
                    self.duration_ps
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MergeStats {
    pub comparisons: u64,
}

struct HeapEntry<'a> {
    key: (u64, u8, usize, usize),
    counter: &'a std::cell::Cell<u64>,
}

impl PartialEq for HeapEntry<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.key == other.key
    }
}
impl Eq for HeapEntry<'_> {}
impl PartialOrd for HeapEntry<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapEntry<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.counter.set(self.counter.get() + 1);
        // min-heap on (timestamp, channel, stream index, position)
        other.key.cmp(&self.key)
    }
}

/// k-way merge of sorted streams with a shared duration.
pub fn merge_streams(streams: &[TagStream]) -> Result<TagStream> {
    merge_streams_with_stats(streams).map(|(s, _)| s)
}

/// Like [`merge_streams`], also returning the number of key comparisons.
pub fn merge_streams_with_stats(streams: &[TagStream]) -> Result<(TagStream, MergeStats)> {
    let Some(first) = streams.first() else {
        return Ok((TagStream::empty(0), MergeStats::default()));
    };
    let duration = first.duration_ps;
    if let Some(bad) = streams.iter().find(|s| s.duration_ps != duration) {
        return Err(Error::config_msg(format!(
            "cannot merge streams with durations {} ps and {} ps",
            duration, bad.duration_ps
        )));
    }
    let total: usize = streams.iter().map(TagStream::len).sum();
    let mut out = TagStream::empty(duration);
    out.times.reserve(total);
    out.channels.reserve(total);
    for s in streams {
        out.channel_set.extend(s.channel_set.iter().copied());
    }

    let counter = std::cell::Cell::new(0u64);
    let mut heap = BinaryHeap::with_capacity(streams.len());
    for (si, s) in streams.iter().enumerate() {
        if let Some(t) = s.get(0) {
            heap.push(HeapEntry {
                key: (t.timestamp, t.channel, si, 0),
                counter: &counter,
            });
        }
    }
    while let Some(top) = heap.pop() {
        let (t, ch, si, pos) = top.key;
        out.times.push(t);
        out.channels.push(ch);
        if let Some(next) = streams[si].get(pos + 1) {
            heap.push(HeapEntry {
                key: (next.timestamp, next.channel, si, pos + 1),
                counter: &counter,
            });
        }
    }
    let stats = MergeStats {
        comparisons: counter.get(),
    };
    Ok((out, stats))
}

/// Writes the stream in `.ttag` format; returns the number of bytes written.
pub fn write_tags<W: Write>(stream: &TagStream, mut sink: W) -> Result<u64> {
    let mut header = [0u8; HEADER_LEN];
    header[..8].copy_from_slice(&MAGIC);
    header[8..16].copy_from_slice(&stream.duration_ps.to_le_bytes());
    header[16..24].copy_from_slice(&(stream.len() as u64).to_le_bytes());
    sink.write_all(&header)?;

    let mut buf = Vec::with_capacity(RECORD_LEN * 4096);
    for chunk in stream
        .channels
        .chunks(4096)
        .zip(stream.times.chunks(4096))
    {
        buf.clear();
        for (&c, &t) in chunk.0.iter().zip(chunk.1) {
            buf.extend_from_slice(&[c, 0, 0, 0]);
            buf.extend_from_slice(&t.to_le_bytes());
        }
        sink.write_all(&buf)?;
    }
    sink.flush()?;
    Ok((HEADER_LEN + RECORD_LEN * stream.len()) as u64)
}

fn read_full<R: Read>(source: &mut R, buf: &mut [u8]) -> std::io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Reads a `.ttag` stream, validating magic, record framing and ordering.
pub fn read_tags<R: Read>(mut source: R) -> Result<TagStream> {
    let mut header = [0u8; HEADER_LEN];
    let got = read_full(&mut source, &mut header)?;
    if got < 8 || header[..8] != MAGIC {
        return Err(Error::format(0, "bad magic"));
    }
    if got < HEADER_LEN {
        return Err(Error::format(got as u64, "truncated header"));
    }
    let duration = u64::from_le_bytes(header[8..16].try_into().unwrap());
    let count = u64::from_le_bytes(header[16..24].try_into().unwrap());

    let mut stream = TagStream::empty(duration);
    // cap the pre-allocation; a corrupt count must not trigger a huge alloc
    let reserve = count.min(1 << 24) as usize;
    stream.times.reserve(reserve);
    stream.channels.reserve(reserve);

    let mut rec = [0u8; RECORD_LEN];
    let mut prev: Option<(u64, u8)> = None;
    for i in 0..count {
        let offset = (HEADER_LEN as u64) + i * RECORD_LEN as u64;
        let got = read_full(&mut source, &mut rec)?;
        if got < RECORD_LEN {
            return Err(Error::format(
                offset + got as u64,
                format!("truncated record {i} of {count}"),
            ));
        }
        if rec[1..4] != [0, 0, 0] {
            return Err(Error::format(offset + 1, "nonzero padding"));
        }
        let ch = rec[0];
        let t = u64::from_le_bytes(rec[4..12].try_into().unwrap());
        if let Some(p) = prev {
            if (t, ch) < p {
                return Err(Error::format(offset, "non-monotonic timestamp"));
            }
        }
        if t > duration {
            return Err(Error::format(offset, "timestamp exceeds duration"));
        }
        prev = Some((t, ch));
        stream.push_unchecked(TimeTag::new(ch, t));
    }
    let mut extra = [0u8; 1];
    if read_full(&mut source, &mut extra)? != 0 {
        let offset = HEADER_LEN as u64 + count * RECORD_LEN as u64;
        return Err(Error::format(offset, "trailing bytes after last record"));
    }
    Ok(stream)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_two_empty() {
        let a = TagStream::empty(100);
        let m = merge_streams(&[a.clone(), a]).unwrap();
        assert!(m.is_empty());
        assert!(m.channel_set().is_empty());
    }

    #[test]
    fn merge_two_element_sort() {
        let a = TagStream::from_tags(vec![TimeTag::new(0, 100)], 1000).unwrap();
        let b = TagStream::from_tags(vec![TimeTag::new(1, 50)], 1000).unwrap();
        let m = merge_streams(&[a, b]).unwrap();
        assert_eq!(m.to_tags(), vec![TimeTag::new(1, 50), TimeTag::new(0, 100)]);
        assert_eq!(m.channel_set().len(), 2);
    }

    #[test]
    fn merge_tie_break_channel_then_order() {
        let a = TagStream::from_tags(vec![TimeTag::new(2, 10), TimeTag::new(2, 10)], 20).unwrap();
        let b = TagStream::from_tags(vec![TimeTag::new(1, 10)], 20).unwrap();
        let m = merge_streams(&[a, b]).unwrap();
        assert_eq!(
            m.to_tags(),
            vec![TimeTag::new(1, 10), TimeTag::new(2, 10), TimeTag::new(2, 10)]
        );
    }

    #[test]
    fn merge_rejects_mismatched_durations() {
        let a = TagStream::empty(10);
        let b = TagStream::empty(11);
        assert!(matches!(
            merge_streams(&[a, b]),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn empty_stream_is_header_only() {
        let mut buf = Vec::new();
        let n = write_tags(&TagStream::empty(5), &mut buf).unwrap();
        assert_eq!(n, 24);
        assert_eq!(buf.len(), 24);
        assert_eq!(&buf[..8], &[0x54, 0x54, 0x41, 0x47, 0x76, 0x30, 0x31, 0x00]);
        assert_eq!(read_tags(&buf[..]).unwrap(), TagStream::empty(5));
    }

    #[test]
    fn single_tag_record_layout() {
        let s = TagStream::from_tags(vec![TimeTag::new(3, 356_800)], 1_000_000).unwrap();
        let mut buf = Vec::new();
        assert_eq!(write_tags(&s, &mut buf).unwrap(), 36);
        assert_eq!(&buf[24..28], &[3, 0, 0, 0]);
        assert_eq!(u64::from_le_bytes(buf[28..36].try_into().unwrap()), 356_800);
        assert_eq!(read_tags(&buf[..]).unwrap(), s);
    }

    #[test]
    fn read_errors_carry_offsets() {
        let s = TagStream::from_tags(
            vec![TimeTag::new(0, 5), TimeTag::new(0, 9)],
            10,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_tags(&s, &mut buf).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_tags(&bad[..]), Err(Error::Format { offset: 0, .. })));

        let truncated = &buf[..buf.len() - 3];
        assert!(matches!(
            read_tags(truncated),
            Err(Error::Format { offset: 45, .. })
        ));

        let mut swapped = buf.clone();
        swapped[40..48].copy_from_slice(&2u64.to_le_bytes());
        assert!(matches!(
            read_tags(&swapped[..]),
            Err(Error::Format { offset: 36, .. })
        ));
    }

    #[test]
    fn from_tags_rejects_tag_past_duration() {
        assert!(TagStream::from_tags(vec![TimeTag::new(0, 11)], 10).is_err());
    }
}

//! Write two channels to `.ttag`, read them back and merge.
use std::io::Cursor;

use tripletsim::timetag::{merge_streams_with_stats, read_tags, write_tags};
use tripletsim::{TagStream, TimeTag};

fn main() -> tripletsim::Result<()> {
    let a = TagStream::from_sorted_times(0, vec![100, 2_000, 2_000, 9_000], 10_000)?;
    let b = TagStream::from_tags(vec![TimeTag::new(1, 2_000), TimeTag::new(1, 50)], 10_000)?;

    let mut buf = Vec::new();
    let bytes = write_tags(&a, &mut buf)?;
    println!("wrote {bytes} bytes");
    let back = read_tags(Cursor::new(&buf))?;
    assert_eq!(back, a);

    let (merged, stats) = merge_streams_with_stats(&[back, b])?;
    for tag in merged.iter() {
        println!("ch{} @ {} ps", tag.channel, tag.timestamp);
    }
    println!("{stats:?}");

    // a damaged record is reported with its byte offset
    buf[30] ^= 0xff;
    if let Err(e) = read_tags(Cursor::new(&buf)) {
        println!("corrupt file: {e}");
    }
    Ok(())
}

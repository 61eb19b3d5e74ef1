//! Stream file formats.
//!
//! Binary: a flat sequence of 9-byte records, `u8` detector id (1..=6)
//! followed by the `u64` little-endian timestamp in picoseconds.
//! CSV: header `detector,time_ps` then one `N,T` row per record, where `N`
//! is the detector number.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::types::{DetectorId, TimestampRecord};
use crate::error::{Error, Result};

const RECORD_BYTES: usize = 9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamFormat {
    Binary,
    Csv,
}

impl StreamFormat {
    /// `.csv` selects CSV; anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => StreamFormat::Csv,
            _ => StreamFormat::Binary,
        }
    }
}

pub fn write_binary<W: Write>(mut w: W, records: &[TimestampRecord]) -> Result<()> {
    let mut buf = [0u8; RECORD_BYTES];
    for r in records {
        buf[0] = r.detector.number();
        buf[1..].copy_from_slice(&r.time_ps.to_le_bytes());
        w.write_all(&buf)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_binary<R: Read>(r: R) -> Result<Vec<TimestampRecord>> {
    let mut r = BufReader::new(r);
    let mut out = Vec::new();
    let mut buf = [0u8; RECORD_BYTES];
    loop {
        let mut filled = 0;
        while filled < RECORD_BYTES {
            let n = r.read(&mut buf[filled..])?;
            if n == 0 {
                break;
            }
            filled += n;
        }
        if filled == 0 {
            return Ok(out);
        }
        if filled < RECORD_BYTES {
            return Err(Error::Parse(format!("truncated record after {} complete records", out.len())));
        }
        let det = DetectorId::from_number(buf[0])?;
        let mut t = [0u8; 8];
        t.copy_from_slice(&buf[1..]);
        out.push(TimestampRecord::new(det, u64::from_le_bytes(t)));
    }
}

pub fn write_csv<W: Write>(mut w: W, records: &[TimestampRecord]) -> Result<()> {
    writeln!(w, "detector,time_ps")?;
    for r in records {
        writeln!(w, "{},{}", r.detector.number(), r.time_ps)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<TimestampRecord>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (i == 0 && line.starts_with("detector")) {
            continue;
        }
        let (d, t) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected `detector,time_ps`", i + 1)))?;
        let det: DetectorId = d.parse()?;
        let time: u64 = t
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("line {}: bad timestamp `{t}`", i + 1)))?;
        out.push(TimestampRecord::new(det, time));
    }
    Ok(out)
}

pub fn read_stream_file(path: &Path) -> Result<Vec<TimestampRecord>> {
    let f = std::fs::File::open(path)?;
    match StreamFormat::from_path(path) {
        StreamFormat::Csv => read_csv(f),
        StreamFormat::Binary => read_binary(f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Vec<TimestampRecord> {
        vec![
            TimestampRecord::new(DetectorId::D1, 0),
            TimestampRecord::new(DetectorId::D4, 30),
            TimestampRecord::new(DetectorId::D6, u64::MAX),
        ]
    }

    #[test]
    fn binary_round_trip() {
        let mut buf = Vec::new();
        write_binary(&mut buf, &sample()).unwrap();
        assert_eq!(buf.len(), 27);
        assert_eq!(buf[9], 4);
        assert_eq!(&buf[10..18], &30u64.to_le_bytes());
        assert_eq!(read_binary(&buf[..]).unwrap(), sample());
        assert!(read_binary(&buf[..20]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &sample()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("detector,time_ps\n1,0\n4,30\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), sample());
        assert!(read_csv("detector,time_ps\n9,1\n".as_bytes()).is_err());
    }
}

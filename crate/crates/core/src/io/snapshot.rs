//! SPHM snapshot files.
//!
//! Layout, all little-endian: `b"SPHM"`, `u32` version, `u32` N, `f64` L, then the North
//! and South payloads, each `N*N` nodes of three `f64` in row-major order with `i`
//! fastest.

use crate::error::{HmError, Result};
use crate::field::{GridLayout, MapField, StencilOrder};
use crate::geometry::ChartId;
use crate::vec3::Vec3;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"SPHM";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 20;

/// Exact byte length of a snapshot with `n x n` charts.
pub fn snapshot_len(n: usize) -> usize {
    HEADER_LEN + 2 * n * n * 24
}

pub fn encode(field: &MapField) -> Vec<u8> {
    let n = field.n();
    let mut buf = Vec::with_capacity(snapshot_len(n));
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&field.half_width().to_le_bytes());
    for chart in [ChartId::North, ChartId::South] {
        for v in &field.chart(chart).values {
            for c in [v.x, v.y, v.z] {
                buf.extend_from_slice(&c.to_le_bytes());
            }
        }
    }
    buf
}

fn le_u32(b: &[u8]) -> u32 {
    u32::from_le_bytes(b.try_into().expect("4 bytes"))
}

fn le_f64(b: &[u8]) -> f64 {
    f64::from_le_bytes(b.try_into().expect("8 bytes"))
}

/// Parses a snapshot. Values are taken verbatim, so `encode(decode(b)) == b`.
pub fn decode(bytes: &[u8], order: StencilOrder) -> Result<MapField> {
    if bytes.len() < HEADER_LEN {
        return Err(HmError::Format(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if bytes[..4] != MAGIC {
        return Err(HmError::Format(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = le_u32(&bytes[4..8]);
    if version != VERSION {
        return Err(HmError::Format(format!("unsupported version {version}")));
    }
    let n = le_u32(&bytes[8..12]) as usize;
    let l = le_f64(&bytes[12..20]);
    let expected = snapshot_len(n);
    if bytes.len() != expected {
        return Err(HmError::Format(format!(
            "length {} does not match {expected} for N = {n}",
            bytes.len()
        )));
    }
    let mut charts = [Vec::with_capacity(n * n), Vec::with_capacity(n * n)];
    for (k, rec) in bytes[HEADER_LEN..].chunks_exact(24).enumerate() {
        let v = Vec3::new(le_f64(&rec[0..8]), le_f64(&rec[8..16]), le_f64(&rec[16..24]));
        if !v.is_finite() || (v.norm() - 1.0).abs() > 1e-6 {
            return Err(HmError::Format(format!("record {k} is not a unit vector")));
        }
        charts[k / (n * n)].push(v);
    }
    let [north, south] = charts;
    let layout = GridLayout::with_order(n, l, order)?;
    Ok(MapField::from_raw(layout, north, south))
}

pub fn write<W: Write>(mut w: W, field: &MapField) -> Result<()> {
    w.write_all(&encode(field))?;
    Ok(())
}

pub fn read<R: Read>(mut r: R, order: StencilOrder) -> Result<MapField> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes, order)
}

pub fn save(path: &Path, field: &MapField) -> Result<()> {
    std::fs::write(path, encode(field))?;
    Ok(())
}

pub fn load(path: &Path, order: StencilOrder) -> Result<MapField> {
    decode(&std::fs::read(path)?, order)
}

/// `run-<id>-t<time>.sphm`, with the shortest decimal that round-trips `t`.
pub fn snapshot_name(run_id: &str, t: f64) -> String {
    format!("run-{run_id}-t{t}.sphm")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::RationalMapSpec;
    use crate::field::sample_field;

    #[test]
    fn round_trip_is_byte_identical() {
        let f = sample_field(&RationalMapSpec::power(2), 65, 1.2).unwrap();
        let a = encode(&f);
        assert_eq!(a.len(), snapshot_len(65));
        let g = decode(&a, StencilOrder::Fourth).unwrap();
        assert_eq!(encode(&g), a);
        assert!(g == f);
    }

    #[test]
    fn rejects_bad_headers() {
        let f = sample_field(&RationalMapSpec::identity(), 65, 1.2).unwrap();
        let good = encode(&f);
        let mut b = good.clone();
        b[0] = b'X';
        assert!(matches!(decode(&b, StencilOrder::Fourth), Err(HmError::Format(_))));
        let mut b = good.clone();
        b[4] = 2;
        assert!(matches!(decode(&b, StencilOrder::Fourth), Err(HmError::Format(_))));
        assert!(decode(&good[..good.len() - 8], StencilOrder::Fourth).is_err());
        assert!(decode(&good[..10], StencilOrder::Fourth).is_err());
    }

    #[test]
    fn names() {
        assert_eq!(snapshot_name("abc", 0.5), "run-abc-t0.5.sphm");
        assert_eq!(snapshot_name("abc", 0.0), "run-abc-t0.sphm");
    }
}

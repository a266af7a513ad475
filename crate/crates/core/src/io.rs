//! File formats: binary PGM label maps and images, star-polygon JSON lines,
//! and the float weight-map raster.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{GeometryError, LabelMap, Raster, StarPolygon, Unit};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed PGM: {0}")]
    Pgm(String),
    #[error("label {0} does not fit in a 16-bit PGM sample")]
    LabelOverflow(u32),
    #[error("malformed weight map: {0}")]
    WeightMap(String),
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn next_token<R: Read>(bytes: &mut std::io::Bytes<R>) -> Result<String, IoError> {
    let mut tok = String::new();
    loop {
        let b = match bytes.next() {
            Some(b) => b?,
            None => break,
        };
        if b == b'#' && tok.is_empty() {
            // comment runs to end of line
            for b in bytes.by_ref() {
                if b? == b'\n' {
                    break;
                }
            }
            continue;
        }
        if b.is_ascii_whitespace() {
            if tok.is_empty() {
                continue;
            }
            return Ok(tok);
        }
        tok.push(b as char);
    }
    if tok.is_empty() {
        Err(IoError::Pgm("unexpected end of header".into()))
    } else {
        Ok(tok)
    }
}

/// Decoded binary PGM: samples widened to `u16`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

pub fn read_pgm<R: Read>(reader: R) -> Result<Pgm, IoError> {
    let mut bytes = BufReader::new(reader).bytes();
    let magic = next_token(&mut bytes)?;
    if magic != "P5" {
        return Err(IoError::Pgm(format!("expected P5, found {magic:?}")));
    }
    let parse = |s: String, what: &str| -> Result<usize, IoError> {
        s.parse::<usize>()
            .map_err(|_| IoError::Pgm(format!("bad {what}: {s:?}")))
    };
    let width = parse(next_token(&mut bytes)?, "width")?;
    let height = parse(next_token(&mut bytes)?, "height")?;
    let maxval = parse(next_token(&mut bytes)?, "maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(IoError::Pgm(format!("maxval {maxval} out of range")));
    }
    let wide = maxval > 255;
    let n = width * height;
    let mut raw = Vec::with_capacity(n * if wide { 2 } else { 1 });
    for b in bytes {
        raw.push(b?);
    }
    let need = n * if wide { 2 } else { 1 };
    if raw.len() < need {
        return Err(IoError::Pgm(format!("expected {need} sample bytes, found {}", raw.len())));
    }
    let samples = if wide {
        raw[..need]
            .chunks_exact(2)
            .map(|p| u16::from_be_bytes([p[0], p[1]]))
            .collect()
    } else {
        raw[..need].iter().map(|&b| b as u16).collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

fn write_pgm_header<W: Write>(w: &mut W, width: usize, height: usize, maxval: u32) -> std::io::Result<()> {
    write!(w, "P5\n{width} {height}\n{maxval}\n")
}

/// Writes a label map as P5 with maxval 65535 and big-endian samples.
pub fn write_label_pgm<W: Write>(mut w: W, labels: &LabelMap) -> Result<(), IoError> {
    write_pgm_header(&mut w, labels.width(), labels.height(), 65535)?;
    let mut buf = Vec::with_capacity(labels.ids().len() * 2);
    for &id in labels.ids() {
        let v = u16::try_from(id).map_err(|_| IoError::LabelOverflow(id))?;
        buf.extend_from_slice(&v.to_be_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Reads any P5 file as a label map; sample values are instance ids.
pub fn read_label_pgm<R: Read>(r: R) -> Result<LabelMap, IoError> {
    let pgm = read_pgm(r)?;
    Ok(LabelMap::from_vec(
        pgm.width,
        pgm.height,
        pgm.samples.into_iter().map(u32::from).collect(),
    )?)
}

/// Writes an 8-bit grayscale image as P5 with maxval 255.
pub fn write_gray_pgm<W: Write>(mut w: W, image: &Raster<u8>) -> Result<(), IoError> {
    write_pgm_header(&mut w, image.width(), image.height(), 255)?;
    w.write_all(image.as_slice())?;
    Ok(())
}

pub fn save_label_pgm(path: &Path, labels: &LabelMap) -> Result<(), IoError> {
    let mut buf = Vec::new();
    write_label_pgm(&mut buf, labels)?;
    write_atomic(path, &buf)
}

pub fn load_label_pgm(path: &Path) -> Result<LabelMap, IoError> {
    read_label_pgm(fs::File::open(path)?)
}

/// Writes via a temporary sibling file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// One line of a star-polygon JSON-lines file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonRecord {
    pub id: u32,
    pub center: [f64; 2],
    pub k: usize,
    pub unit: Unit,
    pub radii: Vec<f64>,
}

impl PolygonRecord {
    pub fn new(id: u32, poly: &StarPolygon) -> Self {
        Self {
            id,
            center: [poly.center.0, poly.center.1],
            k: poly.k(),
            unit: poly.unit,
            radii: poly.radii.clone(),
        }
    }

    pub fn polygon(&self) -> Result<StarPolygon, GeometryError> {
        if self.radii.len() != self.k {
            return Err(GeometryError::RadiiLength {
                k: self.k,
                got: self.radii.len(),
            });
        }
        StarPolygon::new((self.center[0], self.center[1]), self.radii.clone(), self.unit)
    }
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, records: &[T]) -> Result<(), IoError> {
    for (i, r) in records.iter().enumerate() {
        let line = serde_json::to_string(r).map_err(|e| IoError::Json { line: i + 1, source: e })?;
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_jsonl<R: Read, T: for<'de> Deserialize<'de>>(r: R) -> Result<Vec<T>, IoError> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| IoError::Json { line: i + 1, source: e })?);
    }
    Ok(out)
}

/// Magic bytes at the start of a weight-map raster.
pub const WEIGHT_MAP_MAGIC: &[u8; 8] = b"BUBWMAP1";

/// Writes `{magic[8], width u32 LE, height u32 LE}` followed by row-major
/// little-endian `f32` samples.
pub fn write_weight_map<W: Write>(mut w: W, map: &Raster<f64>) -> Result<(), IoError> {
    let mut buf = Vec::with_capacity(16 + 4 * map.len());
    buf.extend_from_slice(WEIGHT_MAP_MAGIC);
    buf.extend_from_slice(&(map.width() as u32).to_le_bytes());
    buf.extend_from_slice(&(map.height() as u32).to_le_bytes());
    for &v in map.as_slice() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn read_weight_map<R: Read>(mut r: R) -> Result<Raster<f32>, IoError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    if buf.len() < 16 || &buf[..8] != WEIGHT_MAP_MAGIC {
        return Err(IoError::WeightMap("bad header".into()));
    }
    let width = u32::from_le_bytes(buf[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(buf[12..16].try_into().unwrap()) as usize;
    let body = &buf[16..];
    if body.len() != 4 * width * height {
        return Err(IoError::WeightMap(format!(
            "expected {} sample bytes, found {}",
            4 * width * height,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(Raster::from_vec(width, height, data)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn label_pgm_layout_is_big_endian_16_bit() {
        let lm = LabelMap::from_vec(2, 1, vec![1, 0x0203]).unwrap();
        let mut buf = Vec::new();
        write_label_pgm(&mut buf, &lm).unwrap();
        assert_eq!(&buf[..13], b"P5\n2 1\n65535\n");
        assert_eq!(&buf[13..], &[0x00, 0x01, 0x02, 0x03]);
    }

    #[test]
    fn label_overflow_is_rejected() {
        let lm = LabelMap::from_vec(1, 1, vec![70000]).unwrap();
        assert!(matches!(
            write_label_pgm(Vec::new(), &lm),
            Err(IoError::LabelOverflow(70000))
        ));
    }

    #[test]
    fn reads_8_bit_and_comments() {
        let data = b"P5\n# made by hand\n3 1\n255\n\x00\x07\x02".to_vec();
        let lm = read_label_pgm(&data[..]).unwrap();
        assert_eq!(lm.ids(), &[0, 7, 2]);
        assert!(read_label_pgm(&b"P2\n1 1\n255\n0"[..]).is_err());
        assert!(read_label_pgm(&b"P5\n2 2\n255\n\x00"[..]).is_err());
    }

    #[test]
    fn polygon_record_shape() {
        let p = StarPolygon::new((1.5, 2.0), vec![1.0, 2.0, 3.0], Unit::Mm).unwrap();
        let s = serde_json::to_string(&PolygonRecord::new(4, &p)).unwrap();
        assert_eq!(s, r#"{"id":4,"center":[1.5,2.0],"k":3,"unit":"mm","radii":[1.0,2.0,3.0]}"#);
        let back: PolygonRecord = serde_json::from_str(&s).unwrap();
        assert_eq!(back.polygon().unwrap(), p);
    }

    proptest! {
        #[test]
        fn label_pgm_round_trip(w in 1usize..12, h in 1usize..12, seed in any::<u64>()) {
            let ids: Vec<u32> = (0..w * h)
                .map(|i| ((seed.wrapping_mul(6364136223846793005).wrapping_add((i as u64).wrapping_mul(1442695040888963407))) >> 48) as u32)
                .collect();
            let lm = LabelMap::from_vec(w, h, ids).unwrap();
            let mut buf = Vec::new();
            write_label_pgm(&mut buf, &lm).unwrap();
            prop_assert_eq!(read_label_pgm(&buf[..]).unwrap(), lm);
        }

        #[test]
        fn weight_map_round_trip(vals in proptest::collection::vec(prop_oneof![Just(0.05f64), Just(1.0), Just(10.0)], 1..40)) {
            let n = vals.len();
            let r = Raster::from_vec(n, 1, vals.clone()).unwrap();
            let mut buf = Vec::new();
            write_weight_map(&mut buf, &r).unwrap();
            prop_assert_eq!(buf.len(), 16 + 4 * n);
            let back = read_weight_map(&buf[..]).unwrap();
            for (a, b) in back.as_slice().iter().zip(&vals) {
                prop_assert_eq!(*a, *b as f32);
            }
        }
    }
}

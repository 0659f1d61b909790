//! Binary cache for dense flow fields.
//!
//! Layout (little endian): 4-byte magic `EGFL`, `u32` width, height and
//! frame index, then the `u` plane and the `v` plane as row-major `f32`.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};
use crate::imgproc::Plane;

pub const FLOW_MAGIC: [u8; 4] = *b"EGFL";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowHeader {
    pub width: u32,
    pub height: u32,
    pub frame_index: u32,
}

/// Cache file of the transition starting at `frame_index` inside `dir`.
pub fn flow_cache_path(dir: &Path, frame_index: usize) -> std::path::PathBuf {
    dir.join(format!("flow_{frame_index:06}.egfl"))
}

pub fn write_flow(path: &Path, frame_index: u32, flow: &FlowField) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(&FLOW_MAGIC)?;
    for v in [flow.width() as u32, flow.height() as u32, frame_index] {
        out.write_all(&v.to_le_bytes())?;
    }
    for plane in [&flow.u, &flow.v] {
        for v in &plane.data {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_flow(path: &Path) -> Result<(FlowHeader, FlowField)> {
    let format_err = |message: &str| Error::Format {
        path: path.to_path_buf(),
        message: message.to_string(),
    };
    let mut input = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 4];
    input
        .read_exact(&mut magic)
        .map_err(|_| format_err("truncated header"))?;
    if magic != FLOW_MAGIC {
        return Err(format_err("not a flow file"));
    }
    let mut word = [0u8; 4];
    let mut next_u32 = |input: &mut BufReader<fs::File>| -> Result<u32> {
        input
            .read_exact(&mut word)
            .map_err(|_| format_err("truncated header"))?;
        Ok(u32::from_le_bytes(word))
    };
    let header = FlowHeader {
        width: next_u32(&mut input)?,
        height: next_u32(&mut input)?,
        frame_index: next_u32(&mut input)?,
    };
    let (w, h) = (header.width as usize, header.height as usize);
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != 2 * w * h * 4 {
        return Err(format_err("payload size does not match header"));
    }
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let (u, v) = floats.split_at(w * h);
    let field = FlowField {
        u: Plane { width: w, height: h, data: u.to_vec() },
        v: Plane { width: w, height: h, data: v.to_vec() },
    };
    Ok((header, field))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.egfl");
        let mut flow = FlowField::zeros(5, 3);
        for (i, v) in flow.u.data.iter_mut().enumerate() {
            *v = i as f32 * 0.37 - 1.0;
        }
        flow.v.data[7] = f32::MIN_POSITIVE;
        write_flow(&path, 42, &flow).unwrap();
        let (header, back) = read_flow(&path).unwrap();
        assert_eq!(header, FlowHeader { width: 5, height: 3, frame_index: 42 });
        assert_eq!(back, flow);
    }

    #[test]
    fn rejects_bad_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad");
        fs::write(&path, b"NOPE0000").unwrap();
        assert!(matches!(read_flow(&path), Err(Error::Format { .. })));
        let mut bytes = FLOW_MAGIC.to_vec();
        for v in [2u32, 2, 0] {
            bytes.extend(v.to_le_bytes());
        }
        bytes.extend([0u8; 12]);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(read_flow(&path), Err(Error::Format { .. })));
    }
}

//! Binary candidate store with an optional sketch section.
//!
//! Layout (little endian): magic `EGTR`, `u32` count, then per trajectory
//! `u32` begin, `u32` length, `length` point pairs and `length` local-motion
//! pairs as `f32`, and the 11 features as `f32`. An optional trailer holds
//! the sketches: magic `EGSK`, `u32` K, `u32` count, then per trajectory
//! `2K` piece means, the two piece variances (all `f32`) and `u32` trimmed
//! length, where a trimmed length of 0 marks a trajectory shorter than K.

use std::fs;
use std::path::Path;

use super::{Candidate, CandidateFeatures, Trajectory, FEATURE_COUNT};
use crate::error::{Error, Result};
use crate::pruning::PaaSketch;

pub const STORE_MAGIC: [u8; 4] = *b"EGTR";
pub const SKETCH_MAGIC: [u8; 4] = *b"EGSK";

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateStore {
    pub candidates: Vec<Candidate>,
    /// Piece count and one sketch per candidate.
    pub sketches: Option<(usize, Vec<Option<PaaSketch>>)>,
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend((v as u32).to_le_bytes());
}

fn put_f32(buf: &mut Vec<u8>, v: f64) {
    buf.extend((v as f32).to_le_bytes());
}

pub fn write_store(path: &Path, store: &CandidateStore) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend(STORE_MAGIC);
    put_u32(&mut buf, store.candidates.len());
    for c in &store.candidates {
        let t = &c.trajectory;
        put_u32(&mut buf, t.begin);
        put_u32(&mut buf, t.len());
        for p in t.points.iter().chain(&t.local_motion) {
            buf.extend(p[0].to_le_bytes());
            buf.extend(p[1].to_le_bytes());
        }
        for v in c.features.to_array() {
            put_f32(&mut buf, v);
        }
    }
    if let Some((k, sketches)) = &store.sketches {
        if sketches.len() != store.candidates.len() {
            return Err(Error::InvalidArgument(format!(
                "{} sketches for {} candidates",
                sketches.len(),
                store.candidates.len()
            )));
        }
        buf.extend(SKETCH_MAGIC);
        put_u32(&mut buf, *k);
        put_u32(&mut buf, sketches.len());
        for s in sketches {
            match s {
                Some(s) => {
                    for v in s.pieces_u.iter().chain(&s.pieces_v) {
                        put_f32(&mut buf, *v);
                    }
                    put_f32(&mut buf, s.var_u);
                    put_f32(&mut buf, s.var_v);
                    put_u32(&mut buf, s.trimmed_length);
                }
                None => {
                    buf.extend(std::iter::repeat_n(0u8, (2 * k + 2) * 4));
                    put_u32(&mut buf, 0);
                }
            }
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl Cursor<'_> {
    fn err(&self, message: &str) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            message: format!("{message} at byte {}", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.err("unexpected end of file"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn pairs(&mut self, n: usize) -> Result<Vec<[f32; 2]>> {
        (0..n).map(|_| Ok([self.f32()?, self.f32()?])).collect()
    }
}

pub fn read_store(path: &Path) -> Result<CandidateStore> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
        path,
    };
    if cur.take(4)? != STORE_MAGIC {
        return Err(cur.err("not a candidate store"));
    }
    let count = cur.u32()?;
    let mut candidates = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let begin = cur.u32()?;
        let len = cur.u32()?;
        let points = cur.pairs(len)?;
        let local_motion = cur.pairs(len)?;
        let mut f = [0.0; FEATURE_COUNT];
        for v in f.iter_mut() {
            *v = cur.f32()? as f64;
        }
        candidates.push(Candidate {
            trajectory: Trajectory {
                begin,
                points,
                local_motion,
            },
            features: CandidateFeatures::from_array(f),
        });
    }
    let sketches = if cur.pos == bytes.len() {
        None
    } else {
        if cur.take(4)? != SKETCH_MAGIC {
            return Err(cur.err("unknown trailing section"));
        }
        let k = cur.u32()?;
        let n = cur.u32()?;
        if n != count {
            return Err(cur.err("sketch count differs from candidate count"));
        }
        let mut out = Vec::with_capacity(n);
        for c in &candidates {
            let mut vals = Vec::with_capacity(2 * k + 2);
            for _ in 0..2 * k + 2 {
                vals.push(cur.f32()? as f64);
            }
            let trimmed = cur.u32()?;
            out.push((trimmed > 0).then(|| PaaSketch {
                pieces_u: vals[..k].to_vec(),
                pieces_v: vals[k..2 * k].to_vec(),
                var_u: vals[2 * k],
                var_v: vals[2 * k + 1],
                trimmed_length: trimmed,
                original_length: c.trajectory.len(),
            }));
        }
        Some((k, out))
    };
    if cur.pos != bytes.len() {
        return Err(cur.err("trailing bytes"));
    }
    Ok(CandidateStore {
        candidates,
        sketches,
    })
}

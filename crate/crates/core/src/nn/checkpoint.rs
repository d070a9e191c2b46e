//! `ASCM` model checkpoints: magic, version, JSON topology, then
//! little-endian `f32` parameter blobs tagged with layer id and dims.

use std::path::Path;

use super::graph::ModelGraph;
use super::model::{Model, Param};
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ASCM";
const VERSION: u32 = 1;

fn fmt_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "ASCM",
        reason: reason.into(),
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], format: &'static str) -> Self {
        Self {
            buf,
            pos: 0,
            format,
        }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                format: self.format,
                reason: format!("truncated at byte {}", self.pos),
            }),
        }
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| fmt_err("blob too large"))?)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn header(&mut self, magic: &[u8; 4], version: u32) -> Result<()> {
        if self.take(4)? != magic {
            return Err(Error::Format {
                format: self.format,
                reason: "bad magic".into(),
            });
        }
        let v = self.u32()?;
        if v != version {
            return Err(Error::Format {
                format: self.format,
                reason: format!("unsupported version {v}"),
            });
        }
        Ok(())
    }

    pub(crate) fn graph(&mut self) -> Result<ModelGraph> {
        let n = self.u32()? as usize;
        let text = self.take(n)?;
        serde_json::from_slice(text).map_err(|e| Error::Format {
            format: self.format,
            reason: format!("topology: {e}"),
        })
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format {
                format: self.format,
                reason: format!("{} trailing bytes", self.buf.len() - self.pos),
            });
        }
        Ok(())
    }
}

pub(crate) fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_graph(out: &mut Vec<u8>, graph: &ModelGraph) {
    let text = serde_json::to_vec(graph).expect("graph serialises");
    put_u32(out, text.len() as u32);
    out.extend_from_slice(&text);
}

pub fn encode_checkpoint(model: &Model<f32>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_graph(&mut out, &model.graph);
    let blobs: Vec<(usize, usize, &Param<f32>)> = model
        .params
        .iter()
        .enumerate()
        .flat_map(|(id, ps)| ps.iter().enumerate().map(move |(i, p)| (id, i, p)))
        .collect();
    put_u32(&mut out, blobs.len() as u32);
    for (id, idx, p) in blobs {
        put_u32(&mut out, id as u32);
        put_u32(&mut out, idx as u32);
        put_u32(&mut out, p.dims.len() as u32);
        for &d in &p.dims {
            put_u32(&mut out, d as u32);
        }
        for v in &p.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Model<f32>> {
    let mut r = Reader::new(bytes, "ASCM");
    r.header(MAGIC, VERSION)?;
    let graph = r.graph()?;
    let n_blobs = r.u32()? as usize;
    let mut params: Vec<Vec<Param<f32>>> = vec![Vec::new(); graph.len()];
    for _ in 0..n_blobs {
        let id = r.u32()? as usize;
        let idx = r.u32()? as usize;
        if id >= graph.len() || idx != params[id].len() {
            return Err(fmt_err(format!("unexpected blob ({id}, {idx})")));
        }
        let nd = r.u32()? as usize;
        if nd > 8 {
            return Err(fmt_err(format!("blob with {nd} dims")));
        }
        let dims = (0..nd)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = dims
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| fmt_err("blob too large"))?;
        let data = r.f32s(n)?;
        params[id].push(Param { dims, data });
    }
    r.finish()?;
    Model::from_parts(graph, params)
}

pub fn save_checkpoint(path: &Path, model: &Model<f32>) -> Result<()> {
    std::fs::write(path, encode_checkpoint(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Model<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

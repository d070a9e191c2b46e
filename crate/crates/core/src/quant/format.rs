//! `ASCQ` quantized checkpoints: magic, version, JSON topology, then one
//! tagged blob per parameter. Int8 blobs carry an `f32` scale followed by
//! the raw bytes; float blobs are little-endian `f32`.

use std::path::Path;

use super::{is_weight_blob, QParam, QuantizedModel, QuantizedTensor};
use crate::nn::{checkpoint as reader, Model, Param};
use crate::quant::FileSections;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"ASCQ";
const VERSION: u32 = 1;
const KIND_FLOAT: u8 = 0;
const KIND_INT8: u8 = 1;

fn fmt_err(reason: impl Into<String>) -> Error {
    Error::Format {
        format: "ASCQ",
        reason: reason.into(),
    }
}

pub fn encode_quantized(qm: &QuantizedModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    reader::put_u32(&mut out, VERSION);
    reader::put_graph(&mut out, &qm.graph);
    reader::put_u32(
        &mut out,
        qm.params.iter().map(Vec::len).sum::<usize>() as u32,
    );
    for (id, ps) in qm.params.iter().enumerate() {
        for (idx, p) in ps.iter().enumerate() {
            reader::put_u32(&mut out, id as u32);
            reader::put_u32(&mut out, idx as u32);
            out.push(match p {
                QParam::Float(_) => KIND_FLOAT,
                QParam::Int8(_) => KIND_INT8,
            });
            reader::put_u32(&mut out, p.dims().len() as u32);
            for &d in p.dims() {
                reader::put_u32(&mut out, d as u32);
            }
            match p {
                QParam::Float(p) => {
                    for v in &p.data {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
                QParam::Int8(q) => {
                    out.extend_from_slice(&q.scale.to_le_bytes());
                    out.extend(q.values.iter().map(|&v| v as u8));
                }
            }
        }
    }
    out
}

pub fn decode_quantized(bytes: &[u8]) -> Result<QuantizedModel> {
    let mut r = reader::Reader::new(bytes, "ASCQ");
    r.header(MAGIC, VERSION)?;
    let graph = r.graph()?;
    let n_blobs = r.u32()? as usize;
    let mut params: Vec<Vec<QParam>> = vec![Vec::new(); graph.len()];
    for _ in 0..n_blobs {
        let id = r.u32()? as usize;
        let idx = r.u32()? as usize;
        if id >= graph.len() || idx != params[id].len() {
            return Err(fmt_err(format!("unexpected blob ({id}, {idx})")));
        }
        let kind = r.take(1)?[0];
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
        let want_int8 = is_weight_blob(&graph.nodes[id].spec, idx);
        let p = match kind {
            KIND_FLOAT if !want_int8 => QParam::Float(Param {
                dims,
                data: r.f32s(n)?,
            }),
            KIND_INT8 if want_int8 => {
                let scale = r.f32()?;
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(fmt_err(format!("blob ({id}, {idx}) has scale {scale}")));
                }
                let values: Vec<i8> = r.take(n)?.iter().map(|&b| b as i8).collect();
                if values.contains(&i8::MIN) {
                    return Err(fmt_err(format!("blob ({id}, {idx}) contains -128")));
                }
                QParam::Int8(QuantizedTensor {
                    dims,
                    values,
                    scale,
                })
            }
            _ => {
                return Err(fmt_err(format!(
                    "blob ({id}, {idx}) of {} has kind {kind}",
                    graph.nodes[id].spec.name()
                )))
            }
        };
        params[id].push(p);
    }
    r.finish()?;
    // dims are checked through the float view; the engine rejects mismatches
    let qm = QuantizedModel { graph, params };
    super::dequantize_model(&qm)?;
    super::check_accumulators(&qm.graph)?;
    Ok(qm)
}

pub fn save_quantized(path: &Path, qm: &QuantizedModel) -> Result<()> {
    std::fs::write(path, encode_quantized(qm)).map_err(|e| Error::io(path, e))
}

pub fn load_quantized(path: &Path) -> Result<QuantizedModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_quantized(&bytes)
}

fn header_bytes(graph: &crate::nn::ModelGraph) -> usize {
    let topo = serde_json::to_vec(graph).expect("graph serialises").len();
    4 + 4 + 4 + topo + 4
}

pub(crate) fn float_blob_bytes(dims: &[usize]) -> usize {
    12 + 4 * dims.len() + 4 * dims.iter().product::<usize>()
}

pub(crate) fn quant_blob_bytes(p: &QParam) -> usize {
    let dims = p.dims();
    let n: usize = dims.iter().product();
    13 + 4 * dims.len()
        + match p {
            QParam::Float(_) => 4 * n,
            QParam::Int8(_) => 4 + n,
        }
}

pub(crate) fn float_sections(model: &Model<f32>) -> FileSections {
    let header = header_bytes(&model.graph);
    let (mut weights, mut other) = (0, 0);
    for (node, ps) in model.graph.nodes.iter().zip(&model.params) {
        for (i, p) in ps.iter().enumerate() {
            let b = float_blob_bytes(&p.dims);
            if is_weight_blob(&node.spec, i) {
                weights += b;
            } else {
                other += b;
            }
        }
    }
    FileSections {
        header,
        weights,
        other,
        total: header + weights + other,
    }
}

pub(crate) fn quant_sections(qm: &QuantizedModel) -> FileSections {
    let header = header_bytes(&qm.graph);
    let (mut weights, mut other) = (0, 0);
    for ps in &qm.params {
        for p in ps {
            let b = quant_blob_bytes(p);
            match p {
                QParam::Int8(_) => weights += b,
                QParam::Float(_) => other += b,
            }
        }
    }
    FileSections {
        header,
        weights,
        other,
        total: header + weights + other,
    }
}

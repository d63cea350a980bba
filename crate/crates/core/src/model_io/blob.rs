//! Binary weight blob.
//!
//! ```text
//! magic    "HEWB"
//! version  u16
//! reserved u16
//! segments u32
//! total    u64   number of f64 values in the data section
//! index    segments * (layer u32, reserved u32, offset u64, weights u64, bias u64)
//! data     total little-endian f64, each segment's weights then its bias
//! ```
//!
//! Only layers with parameters get a segment, so offsets are strictly
//! increasing.

use super::ModelIoError;
use crate::nn::LayerParams;

pub const BLOB_MAGIC: &[u8; 4] = b"HEWB";
pub const BLOB_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 2 + 4 + 8;
const ENTRY_LEN: usize = 4 + 4 + 8 + 8 + 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub layer: usize,
    pub offset: usize,
    pub weights: usize,
    pub bias: usize,
}

pub fn encode(params: &[LayerParams]) -> Vec<u8> {
    let mut index = Vec::new();
    let mut offset = 0;
    for (layer, p) in params.iter().enumerate() {
        let len = p.weights.len() + p.bias.len();
        if len > 0 {
            index.push(Segment {
                layer,
                offset,
                weights: p.weights.len(),
                bias: p.bias.len(),
            });
            offset += len;
        }
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + ENTRY_LEN * index.len() + 8 * offset);
    buf.extend_from_slice(BLOB_MAGIC);
    buf.extend_from_slice(&BLOB_VERSION.to_le_bytes());
    buf.extend_from_slice(&0u16.to_le_bytes());
    buf.extend_from_slice(&(index.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(offset as u64).to_le_bytes());
    for s in &index {
        buf.extend_from_slice(&(s.layer as u32).to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        for v in [s.offset, s.weights, s.bias] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
    }
    for p in params {
        for x in p.weights.iter().chain(&p.bias) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    buf
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

/// Parses a blob against the expected `(weights, bias)` length of every layer.
pub fn decode(bytes: &[u8], shapes: &[(usize, usize)]) -> Result<Vec<LayerParams>, ModelIoError> {
    let format = |m: String| ModelIoError::Format(m);
    let disagree = |m: String| ModelIoError::ShapeDisagreement(m);
    if bytes.len() < HEADER_LEN {
        return Err(format("weight blob shorter than its header".into()));
    }
    if &bytes[..4] != BLOB_MAGIC {
        return Err(format("weight blob has a bad magic number".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != BLOB_VERSION {
        return Err(ModelIoError::VersionMismatch {
            what: "weight blob",
            found: version as u32,
            expected: BLOB_VERSION as u32,
        });
    }
    let segments = u32_at(bytes, 8) as usize;
    let total = u64_at(bytes, 12);
    let index_end = segments
        .checked_mul(ENTRY_LEN)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .filter(|&n| n <= bytes.len())
        .ok_or_else(|| disagree(format!("index of {segments} segments exceeds the blob")))?;

    let mut index = Vec::with_capacity(segments);
    let mut expected_offset = 0u64;
    for k in 0..segments {
        let at = HEADER_LEN + k * ENTRY_LEN;
        let s = (u32_at(bytes, at) as u64, u64_at(bytes, at + 8), u64_at(bytes, at + 16), u64_at(bytes, at + 24));
        let (layer, offset, weights, bias) = s;
        if offset != expected_offset || weights + bias == 0 {
            return Err(format(format!("segment {k}: offsets must be strictly increasing and contiguous")));
        }
        if let Some(prev) = index.last().map(|p: &Segment| p.layer as u64) {
            if layer <= prev {
                return Err(format(format!("segment {k}: layer indices must increase")));
            }
        }
        expected_offset += weights + bias;
        index.push(Segment {
            layer: layer as usize,
            offset: offset as usize,
            weights: weights as usize,
            bias: bias as usize,
        });
    }
    if expected_offset != total {
        return Err(format(format!("index covers {expected_offset} values, header says {total}")));
    }
    let data = &bytes[index_end..];
    if data.len() as u64 != total * 8 {
        return Err(disagree(format!(
            "weight data holds {} bytes, index expects {} values ({} bytes)",
            data.len(),
            total,
            total * 8
        )));
    }

    let mut out = vec![LayerParams::default(); shapes.len()];
    let mut segs = index.iter().peekable();
    for (layer, &(w, b)) in shapes.iter().enumerate() {
        let seg = match segs.peek() {
            Some(s) if s.layer == layer => segs.next().copied(),
            _ => None,
        };
        let (found_w, found_b) = seg.map_or((0, 0), |s| (s.weights, s.bias));
        if (found_w, found_b) != (w, b) {
            return Err(disagree(format!(
                "layer {layer}: manifest expects {w} weights and {b} biases, blob holds {found_w} and {found_b}"
            )));
        }
        if let Some(s) = seg {
            let read = |from: usize, n: usize| -> Vec<f64> {
                data[8 * from..8 * (from + n)]
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect()
            };
            out[layer] = LayerParams {
                weights: read(s.offset, s.weights),
                bias: read(s.offset + s.weights, s.bias),
            };
        }
    }
    if let Some(s) = segs.next() {
        return Err(disagree(format!("blob has a segment for layer {} beyond the model", s.layer)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> Vec<LayerParams> {
        vec![
            LayerParams {
                weights: vec![1.0, -2.5, f64::MIN_POSITIVE],
                bias: vec![0.125],
            },
            LayerParams::default(),
            LayerParams {
                weights: vec![3.0, 4.0],
                bias: vec![-0.0, 1e300],
            },
        ]
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = params();
        let bytes = encode(&p);
        let back = decode(&bytes, &[(3, 1), (0, 0), (2, 2)]).unwrap();
        for (a, b) in p.iter().zip(&back) {
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.weights), bits(&b.weights));
            assert_eq!(bits(&a.bias), bits(&b.bias));
        }
        assert_eq!(bytes.len(), HEADER_LEN + 2 * ENTRY_LEN + 8 * 8);
    }

    #[test]
    fn truncation_and_shape_mismatch_are_reported() {
        let bytes = encode(&params());
        let shapes = [(3, 1), (0, 0), (2, 2)];
        let cut = &bytes[..bytes.len() - 8];
        assert!(matches!(decode(cut, &shapes), Err(ModelIoError::ShapeDisagreement(_))));
        assert!(matches!(decode(&bytes, &[(3, 1), (0, 0), (2, 3)]), Err(ModelIoError::ShapeDisagreement(_))));
        assert!(matches!(decode(&bytes, &[(3, 1), (0, 0)]), Err(ModelIoError::ShapeDisagreement(_))));
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(decode(&bad, &shapes), Err(ModelIoError::VersionMismatch { .. })));
        bad = bytes;
        bad[0] = b'X';
        assert!(matches!(decode(&bad, &shapes), Err(ModelIoError::Format(_))));
    }

    #[test]
    fn offsets_must_be_contiguous() {
        let mut bytes = encode(&params());
        // Second segment's offset field.
        let at = HEADER_LEN + ENTRY_LEN + 8;
        bytes[at..at + 8].copy_from_slice(&3u64.to_le_bytes());
        assert!(matches!(decode(&bytes, &[(3, 1), (0, 0), (2, 2)]), Err(ModelIoError::Format(_))));
    }
}

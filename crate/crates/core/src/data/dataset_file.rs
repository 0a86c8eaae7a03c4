//! Binary dataset container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "HCCS" | version u16 = 1 | layer count u16
//! per layer: head count u16
//!   per head: head_id u16 | n u16 | row count u32 | scale f64 | rows * n int8
//! ```

use std::fs;
use std::path::Path;

use super::{CalibrationDataset, HeadRecord, LayerRecord};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: &[u8; 4] = b"HCCS";
const VERSION: u16 = 1;

pub fn encode_dataset(ds: &CalibrationDataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(16 + ds.row_count() * ds.n());
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&count_u16(ds.layers().len(), "layer count")?.to_le_bytes());
    for layer in ds.layers() {
        out.extend_from_slice(&count_u16(layer.heads.len(), "head count")?.to_le_bytes());
        for h in &layer.heads {
            out.extend_from_slice(&h.head_id.to_le_bytes());
            out.extend_from_slice(&count_u16(h.n(), "n")?.to_le_bytes());
            let rows = u32::try_from(h.row_count())
                .map_err(|_| Error::Schema("row count exceeds u32".into()))?;
            out.extend_from_slice(&rows.to_le_bytes());
            out.extend_from_slice(&h.scale.to_le_bytes());
            out.extend(h.logits().iter().map(|&v| v as u8));
        }
    }
    Ok(out)
}

fn count_u16(v: usize, what: &str) -> Result<u16> {
    u16::try_from(v).map_err(|_| Error::Schema(format!("{what} {v} exceeds u16")))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < k {
            return Err(Error::Parse {
                offset: self.pos as u64,
                msg: format!(
                    "truncated {what}: need {k} bytes, {} left",
                    self.buf.len() - self.pos
                ),
            });
        }
        let s = &self.buf[self.pos..self.pos + k];
        self.pos += k;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn error(&self, at: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            offset: at as u64,
            msg: msg.into(),
        }
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<CalibrationDataset> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let magic = r.take(4, "magic")?;
    if magic != DATASET_MAGIC {
        return Err(r.error(0, format!("bad magic {magic:02x?}, expected \"HCCS\"")));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(r.error(4, format!("unsupported version {version}")));
    }
    let layer_count = r.u16("layer count")?;
    let mut layers = Vec::with_capacity(layer_count as usize);
    for _ in 0..layer_count {
        let head_count = r.u16("head count")?;
        let mut heads = Vec::with_capacity(head_count as usize);
        for _ in 0..head_count {
            let at = r.pos;
            let head_id = r.u16("head id")?;
            let n = r.u16("n")? as usize;
            let rows = r.u32("row count")? as usize;
            let scale = r.f64("scale")?;
            if n == 0 {
                return Err(r.error(at + 2, "n must be positive"));
            }
            if !(scale.is_finite() && scale > 0.0) {
                return Err(r.error(at + 8, format!("scale must be positive, got {scale}")));
            }
            let len = rows
                .checked_mul(n)
                .ok_or_else(|| r.error(at + 4, "row block size overflows"))?;
            let data = r.take(len, "row data")?;
            let logits = data.iter().map(|&b| b as i8).collect();
            heads.push(HeadRecord::new(head_id, n, scale, logits)?);
        }
        layers.push(LayerRecord { heads });
    }
    if r.pos != bytes.len() {
        return Err(r.error(r.pos, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    CalibrationDataset::new(layers)
}

pub fn write_dataset(path: impl AsRef<Path>, ds: &CalibrationDataset) -> Result<()> {
    fs::write(path, encode_dataset(ds)?)?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<CalibrationDataset> {
    decode_dataset(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> CalibrationDataset {
        CalibrationDataset::new(vec![
            LayerRecord {
                heads: vec![
                    HeadRecord::new(0, 3, 0.25, vec![1, -2, 127, -128, 0, 5]).unwrap(),
                    HeadRecord::new(1, 3, 1.0, vec![9, 9, 9]).unwrap(),
                ],
            },
            LayerRecord {
                heads: vec![HeadRecord::new(2, 3, 0.125, vec![]).unwrap()],
            },
        ])
        .unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_dataset(&sample()).unwrap();
        assert_eq!(&bytes[..4], b"HCCS");
        assert_eq!(&bytes[4..8], &[1, 0, 2, 0]);
        // layer 0 head count, then head 0: id, n, rows, scale
        assert_eq!(&bytes[8..10], &[2, 0]);
        assert_eq!(&bytes[10..18], &[0, 0, 3, 0, 2, 0, 0, 0]);
        assert_eq!(&bytes[18..26], &0.25f64.to_le_bytes());
        assert_eq!(bytes[26..32], [1, 0xfe, 0x7f, 0x80, 0, 5]);
    }

    #[test]
    fn round_trip() {
        let ds = sample();
        assert_eq!(decode_dataset(&encode_dataset(&ds).unwrap()).unwrap(), ds);
    }

    #[test]
    fn corrupt_magic_names_offset() {
        let mut bytes = encode_dataset(&sample()).unwrap();
        bytes[1] = b'X';
        let err = decode_dataset(&bytes).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 0, .. }), "{err}");
        assert!(err.to_string().contains("offset 0"));
    }

    #[test]
    fn bad_version_and_truncation() {
        let mut bytes = encode_dataset(&sample()).unwrap();
        bytes[4] = 2;
        assert!(matches!(
            decode_dataset(&bytes),
            Err(Error::Parse { offset: 4, .. })
        ));

        let bytes = encode_dataset(&sample()).unwrap();
        for cut in [3, 7, 12, 20, bytes.len() - 1] {
            assert!(
                matches!(decode_dataset(&bytes[..cut]), Err(Error::Parse { .. })),
                "cut at {cut}"
            );
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(decode_dataset(&long), Err(Error::Parse { .. })));
    }

    #[test]
    fn bad_scale_rejected() {
        let mut bytes = encode_dataset(&sample()).unwrap();
        bytes[18..26].copy_from_slice(&(-1.0f64).to_le_bytes());
        assert!(matches!(
            decode_dataset(&bytes),
            Err(Error::Parse { offset: 18, .. })
        ));
    }

    proptest! {
        #[test]
        fn encode_decode_identity(
            n in 1usize..20,
            heads in prop::collection::vec((any::<u16>(), 0usize..6, 0.001f64..10.0), 1..5),
            seed in any::<u64>(),
        ) {
            let mut state = seed;
            let heads = heads
                .into_iter()
                .map(|(id, rows, scale)| {
                    let logits = (0..rows * n)
                        .map(|_| {
                            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                            (state >> 56) as i8
                        })
                        .collect();
                    HeadRecord::new(id, n, scale, logits).unwrap()
                })
                .collect();
            let ds = CalibrationDataset::new(vec![LayerRecord { heads }]).unwrap();
            let bytes = encode_dataset(&ds).unwrap();
            prop_assert_eq!(decode_dataset(&bytes).unwrap(), ds);
        }
    }
}

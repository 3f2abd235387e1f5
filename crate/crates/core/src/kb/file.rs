//! `ILSH-KB` binary format.

use std::path::Path;

use super::{Bucket, HashTable, KnowledgeBase};
use crate::binio::{self, Reader};
use crate::error::{Error, Result};
use crate::hash::{packed_len, BinaryKey};

const KB_MAGIC: &[u8] = b"ILSH-KB\0";
const KB_VERSION: u16 = 1;

impl KnowledgeBase {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(KB_MAGIC);
        binio::put_u16(&mut out, KB_VERSION);
        binio::put_u32(&mut out, self.tables.len() as u32);
        binio::put_u32(&mut out, self.code_len as u32);
        out.extend_from_slice(&self.fingerprint);
        for table in &self.tables {
            binio::put_u64(&mut out, table.len() as u64);
            for (key, bucket) in table {
                out.extend_from_slice(key.packed());
                binio::put_u64(&mut out, bucket.cnt);
                binio::put_f32s(&mut out, bucket.val());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader::new(bytes);
        rd.expect_magic(KB_MAGIC, "kb header")?;
        rd.version(KB_VERSION, "kb header")?;
        let at = rd.offset();
        let b = rd.u32("kb header")? as usize;
        let r = rd.u32("kb header")? as usize;
        if b == 0 || r == 0 {
            return Err(Error::format(
                "kb header",
                at,
                "zero table count or code length",
            ));
        }
        let fingerprint: [u8; 32] = rd.take(32, "kb fingerprint")?.try_into().unwrap();
        let key_bytes = packed_len(r);
        let mut tables = Vec::with_capacity(b);
        for t in 0..b {
            let section = format!("kb table {t}");
            let count = rd.u64(&section)?;
            let mut table = HashTable::new();
            for _ in 0..count {
                let at = rd.offset();
                let key = BinaryKey::from_packed(rd.take(key_bytes, &section)?, r)
                    .map_err(|e| Error::format(&section, at, e.to_string()))?;
                let cnt_at = rd.offset();
                let cnt = rd.u64(&section)?;
                if cnt == 0 {
                    return Err(Error::format(&section, cnt_at, "bucket with zero count"));
                }
                let mean = rd
                    .f32_vec(r, &section)?
                    .into_iter()
                    .map(f64::from)
                    .collect();
                if table.insert(key, Bucket { cnt, mean }).is_some() {
                    return Err(Error::format(&section, at, "duplicate key"));
                }
            }
            tables.push(table);
        }
        rd.finish("kb trailer")?;
        Ok(Self {
            tables,
            code_len: r,
            fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        binio::write_file(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&binio::read_file(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::{FeatureVector, HashEncoder};

    fn toy_kb() -> KnowledgeBase {
        let enc = HashEncoder::init(6, 3, 10, 4).unwrap();
        let f: Vec<FeatureVector> = (0..50)
            .map(|i| {
                FeatureVector::new(
                    "v",
                    i + 1,
                    (0..6).map(|d| ((i * 7 + d) as f64).sin()).collect(),
                )
            })
            .collect();
        KnowledgeBase::build(&enc, &f).unwrap()
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let kb = toy_kb();
        let bytes = kb.to_bytes();
        let back = KnowledgeBase::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.tables()[1].len(), kb.tables()[1].len());
    }

    #[test]
    fn empty_kb_round_trips() {
        let kb = KnowledgeBase::empty(4, 9, [7; 32]).unwrap();
        let bytes = kb.to_bytes();
        assert_eq!(bytes.len(), 8 + 2 + 8 + 32 + 4 * 8);
        assert_eq!(KnowledgeBase::from_bytes(&bytes).unwrap(), kb);
    }

    #[test]
    fn truncation_names_section() {
        let bytes = toy_kb().to_bytes();
        let err = KnowledgeBase::from_bytes(&bytes[..bytes.len() - 1]).unwrap_err();
        assert!(
            matches!(err, Error::Format { ref section, .. } if section == "kb table 2"),
            "{err}"
        );
        let err = KnowledgeBase::from_bytes(&bytes[..30]).unwrap_err();
        assert!(
            matches!(err, Error::Format { ref section, offset: 18, .. } if section == "kb fingerprint"),
            "{err}"
        );
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(
            KnowledgeBase::from_bytes(&bad),
            Err(Error::Format { offset: 8, .. })
        ));
        let mut extra = bytes;
        extra.push(0);
        assert!(
            matches!(KnowledgeBase::from_bytes(&extra), Err(Error::Format { ref section, .. }) if section == "kb trailer")
        );
    }
}

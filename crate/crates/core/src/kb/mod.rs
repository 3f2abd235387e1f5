//! Hash-table knowledge base of normal-event codes and retrieval scoring.

mod file;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::hash::{binarize, BinaryKey, FeatureVector, HashCodeSet, HashEncoder};

/// Count and running mean of the codes that hashed to one key.
///
/// The mean is accumulated in double precision; [`Bucket::val`] is the
/// single-precision value that is persisted and used for retrieval.
#[derive(Debug, Clone, PartialEq)]
pub struct Bucket {
    cnt: u64,
    mean: Vec<f64>,
}

impl Bucket {
    fn new(code: &[f64]) -> Self {
        Self {
            cnt: 1,
            mean: code.to_vec(),
        }
    }

    fn absorb(&mut self, code: &[f64]) {
        let c = self.cnt as f64;
        for (m, &h) in self.mean.iter_mut().zip(code) {
            *m = (*m * c + h) / (c + 1.0);
        }
        self.cnt += 1;
    }

    pub fn cnt(&self) -> u64 {
        self.cnt
    }

    pub fn val(&self) -> Vec<f32> {
        self.mean.iter().map(|&v| v as f32).collect()
    }

    pub fn mean_f64(&self) -> &[f64] {
        &self.mean
    }
}

pub type HashTable = BTreeMap<BinaryKey, Bucket>;

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    tables: Vec<HashTable>,
    code_len: usize,
    fingerprint: [u8; 32],
}

/// Per-table outcome of a lookup.
#[derive(Debug, Clone, PartialEq)]
pub enum TableHit {
    Miss,
    Hit { key: BinaryKey, distance: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalResult {
    pub score: f64,
    pub per_table: Vec<TableHit>,
}

impl KnowledgeBase {
    pub fn empty(num_tables: usize, code_len: usize, fingerprint: [u8; 32]) -> Result<Self> {
        if num_tables == 0 || code_len == 0 {
            return Err(Error::invalid("knowledge base needs B >= 1 and R >= 1"));
        }
        Ok(Self {
            tables: vec![HashTable::new(); num_tables],
            code_len,
            fingerprint,
        })
    }

    pub fn num_tables(&self) -> usize {
        self.tables.len()
    }

    pub fn code_len(&self) -> usize {
        self.code_len
    }

    pub fn fingerprint(&self) -> &[u8; 32] {
        &self.fingerprint
    }

    pub fn tables(&self) -> &[HashTable] {
        &self.tables
    }

    /// Miss penalty: the largest L2 distance between two codes in `[0,1]^R`.
    pub fn p_max(&self) -> f64 {
        (self.code_len as f64).sqrt()
    }

    pub fn insert(&mut self, set: &HashCodeSet) -> Result<()> {
        if set.num_codes() != self.tables.len() || set.code_len() != self.code_len {
            return Err(Error::invalid(format!(
                "code set is {}x{}, knowledge base expects {}x{}",
                set.num_codes(),
                set.code_len(),
                self.tables.len(),
                self.code_len
            )));
        }
        for (table, code) in self.tables.iter_mut().zip(&set.codes) {
            let key = binarize(code)?;
            match table.get_mut(&key) {
                Some(bucket) => bucket.absorb(code),
                None => {
                    table.insert(key, Bucket::new(code));
                }
            }
        }
        Ok(())
    }

    /// Encodes every feature and inserts it, in `(video_id, frame_index)` order.
    pub fn build(encoder: &HashEncoder, features: &[FeatureVector]) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::invalid(
                "cannot build a knowledge base from no features",
            ));
        }
        let mut ordered: Vec<&FeatureVector> = features.iter().collect();
        ordered.sort_by(|a, b| (&a.video_id, a.frame_index).cmp(&(&b.video_id, b.frame_index)));
        let mut kb = Self::empty(
            encoder.num_layers(),
            encoder.code_len(),
            encoder.fingerprint(),
        )?;
        for f in ordered {
            kb.insert(&encoder.encode(f)?)?;
        }
        Ok(kb)
    }

    /// Scores a code set: minimum distance to the retrieved bucket means, or
    /// `sqrt(R)` when every table misses.
    pub fn score_codes(&self, set: &HashCodeSet) -> Result<RetrievalResult> {
        if set.num_codes() != self.tables.len() || set.code_len() != self.code_len {
            return Err(Error::invalid(
                "code set dimensions do not match the knowledge base",
            ));
        }
        let mut score = self.p_max();
        let mut per_table = Vec::with_capacity(self.tables.len());
        for (table, code) in self.tables.iter().zip(&set.codes) {
            let key = binarize(code)?;
            match table.get(&key) {
                Some(bucket) => {
                    let distance = bucket
                        .val()
                        .iter()
                        .zip(code)
                        .map(|(&v, &h)| (f64::from(v) - h).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    if distance < score {
                        score = distance;
                    }
                    per_table.push(TableHit::Hit { key, distance });
                }
                None => per_table.push(TableHit::Miss),
            }
        }
        Ok(RetrievalResult { score, per_table })
    }

    pub fn retrieve_score(
        &self,
        encoder: &HashEncoder,
        feature: &FeatureVector,
    ) -> Result<RetrievalResult> {
        if encoder.fingerprint() != self.fingerprint {
            return Err(Error::InvalidState(
                "encoder fingerprint does not match the one the knowledge base was built with"
                    .into(),
            ));
        }
        self.score_codes(&encoder.encode(feature)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(codes: &[&[f64]]) -> HashCodeSet {
        HashCodeSet::new(codes.iter().map(|c| c.to_vec()).collect()).unwrap()
    }

    #[test]
    fn insert_examples() {
        let mut kb = KnowledgeBase::empty(1, 2, [0; 32]).unwrap();
        kb.insert(&set(&[&[0.2, 0.7]])).unwrap();
        let k01 = BinaryKey::from_bits(&[false, true]);
        assert_eq!(kb.tables()[0][&k01].cnt(), 1);
        assert_eq!(kb.tables()[0][&k01].mean_f64(), &[0.2, 0.7]);

        let mut kb = KnowledgeBase::empty(1, 2, [0; 32]).unwrap();
        kb.insert(&set(&[&[0.6, 0.8]])).unwrap();
        kb.insert(&set(&[&[0.8, 0.6]])).unwrap();
        let bucket = &kb.tables()[0][&BinaryKey::from_bits(&[true, true])];
        assert_eq!(bucket.cnt(), 2);
        assert_abs_diff_eq!(bucket.mean_f64()[0], 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(bucket.mean_f64()[1], 0.7, epsilon = 1e-12);

        assert!(matches!(
            kb.insert(&set(&[&[0.1, 0.2, 0.3]])),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn permuted_insertions_reach_exact_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        // all codes share key 1111
        let codes: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..4).map(|_| rng.random_range(0.5..0.999)).collect())
            .collect();
        let exact: Vec<f64> = (0..4)
            .map(|i| codes.iter().map(|c| c[i]).sum::<f64>() / codes.len() as f64)
            .collect();
        for trial in 0..3 {
            let mut order = codes.clone();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(trial));
            let mut kb = KnowledgeBase::empty(1, 4, [0; 32]).unwrap();
            for c in &order {
                kb.insert(&HashCodeSet::new(vec![c.clone()]).unwrap())
                    .unwrap();
            }
            let bucket = kb.tables()[0].values().next().unwrap();
            assert_eq!(bucket.cnt(), 1000);
            for (m, e) in bucket.mean_f64().iter().zip(&exact) {
                assert!((m - e).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn build_identical_and_singleton() {
        let enc = HashEncoder::init(5, 3, 6, 1).unwrap();
        let f: Vec<FeatureVector> = (0..7)
            .map(|i| FeatureVector::new("v", i + 1, vec![0.1, 0.4, -0.3, 0.9, 0.0]))
            .collect();
        let kb = KnowledgeBase::build(&enc, &f).unwrap();
        for t in kb.tables() {
            assert_eq!(t.len(), 1);
            assert_eq!(t.values().next().unwrap().cnt(), 7);
        }
        let kb = KnowledgeBase::build(&enc, &f[..1]).unwrap();
        let codes = enc.encode(&f[0]).unwrap();
        for (t, code) in kb.tables().iter().zip(&codes.codes) {
            assert_eq!(t.len(), 1);
            assert_eq!(t.values().next().unwrap().mean_f64(), code.as_slice());
        }
        assert!(KnowledgeBase::build(&enc, &[]).is_err());
    }

    #[test]
    fn retrieval_examples() {
        let mut kb = KnowledgeBase::empty(1, 2, [0; 32]).unwrap();
        kb.insert(&set(&[&[0.25, 0.75]])).unwrap();
        assert_eq!(kb.score_codes(&set(&[&[0.25, 0.75]])).unwrap().score, 0.0);

        let kb = KnowledgeBase::empty(3, 2, [0; 32]).unwrap();
        let r = kb
            .score_codes(&set(&[&[0.3, 0.3], &[0.6, 0.6], &[0.1, 0.9]]))
            .unwrap();
        assert_abs_diff_eq!(r.score, std::f64::consts::SQRT_2, epsilon = 1e-6);
        assert!(r.per_table.iter().all(|h| *h == TableHit::Miss));

        // table 1 misses, table 2 hits at distance 0.3
        let mut kb = KnowledgeBase::empty(2, 2, [0; 32]).unwrap();
        kb.insert(&set(&[&[0.1, 0.1], &[0.75, 0.5]])).unwrap();
        let r = kb.score_codes(&set(&[&[0.9, 0.9], &[0.75, 0.8]])).unwrap();
        assert_eq!(r.per_table[0], TableHit::Miss);
        assert_abs_diff_eq!(r.score, 0.3, epsilon = 1e-7);
    }

    #[test]
    fn fingerprint_enforced() {
        let enc = HashEncoder::init(3, 2, 4, 1).unwrap();
        let other = HashEncoder::init(3, 2, 4, 2).unwrap();
        let f = vec![FeatureVector::new("v", 1, vec![1.0, 2.0, 3.0])];
        let kb = KnowledgeBase::build(&enc, &f).unwrap();
        assert!(kb.retrieve_score(&enc, &f[0]).unwrap().score < kb.p_max());
        assert!(matches!(
            kb.retrieve_score(&other, &f[0]),
            Err(Error::InvalidState(_))
        ));
    }
}

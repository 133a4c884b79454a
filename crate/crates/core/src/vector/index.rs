use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use super::embed::{EmbeddingVector, Embedder};
use super::VectorError;

const MAGIC: &[u8; 4] = b"QVIX";
const VERSION: u16 = 1;

/// Exhaustive cosine index over unit vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    tag: String,
    ids: Vec<String>,
    values: Vec<f64>,
    positions: HashMap<String, usize>,
}

/// Descending score, then ascending id.
pub fn rank_order(a: &(String, f64), b: &(String, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then_with(|| a.0.cmp(&b.0))
}

impl VectorIndex {
    pub fn new(dim: usize, embedder_tag: impl Into<String>) -> Self {
        Self {
            dim,
            tag: embedder_tag.into(),
            ids: Vec::new(),
            values: Vec::new(),
            positions: HashMap::new(),
        }
    }

    pub fn build<I>(embedder: &dyn Embedder, items: I) -> Result<Self, VectorError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut index: Option<Self> = None;
        for (id, text) in items {
            let v = embedder.embed(&text)?;
            let idx = index.get_or_insert_with(|| Self::new(v.dim(), embedder.tag()));
            idx.insert(id, &v)?;
        }
        Ok(index.unwrap_or_else(|| Self::new(0, embedder.tag())))
    }

    pub fn insert(&mut self, id: String, vector: &EmbeddingVector) -> Result<(), VectorError> {
        if self.ids.is_empty() && self.dim == 0 {
            self.dim = vector.dim();
        }
        if vector.dim() != self.dim {
            return Err(VectorError::Dimension {
                expected: self.dim,
                got: vector.dim(),
            });
        }
        if self.positions.contains_key(&id) {
            return Err(VectorError::DuplicateId(id));
        }
        self.positions.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.values.extend_from_slice(vector.values());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn embedder_tag(&self) -> &str {
        &self.tag
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.positions.get(id).map(|&i| self.row(i))
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    fn check(&self, query: &EmbeddingVector, query_tag: &str) -> Result<(), VectorError> {
        if query_tag != self.tag {
            return Err(VectorError::EmbedderMismatch {
                index: self.tag.clone(),
                query: query_tag.to_string(),
            });
        }
        if !self.ids.is_empty() && query.dim() != self.dim {
            return Err(VectorError::Dimension {
                expected: self.dim,
                got: query.dim(),
            });
        }
        Ok(())
    }

    /// Cosine score of one entry.
    pub fn score(&self, query: &EmbeddingVector, query_tag: &str, id: &str) -> Result<Option<f64>, VectorError> {
        self.check(query, query_tag)?;
        Ok(self.positions.get(id).map(|&i| dot(query.values(), self.row(i))))
    }

    /// The `k` best entries by cosine, restricted to `filter` when given.
    pub fn top_k(
        &self,
        query: &EmbeddingVector,
        query_tag: &str,
        k: usize,
        filter: Option<&HashSet<String>>,
    ) -> Result<Vec<(String, f64)>, VectorError> {
        if k == 0 {
            return Err(VectorError::InvalidK);
        }
        self.check(query, query_tag)?;
        let q = query.values();
        let mut scored: Vec<(String, f64)> = match filter {
            Some(f) => f
                .iter()
                .filter_map(|id| self.positions.get(id).map(|&i| (id.clone(), dot(q, self.row(i)))))
                .collect(),
            None => self
                .ids
                .iter()
                .enumerate()
                .map(|(i, id)| (id.clone(), dot(q, self.row(i))))
                .collect(),
        };
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, rank_order);
            scored.truncate(k);
        }
        scored.sort_by(rank_order);
        Ok(scored)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), VectorError> {
        let dim = u16::try_from(self.dim).map_err(|_| VectorError::Format("dimension exceeds u16".into()))?;
        let count = u32::try_from(self.ids.len()).map_err(|_| VectorError::Format("too many entries".into()))?;
        let mut buf = Vec::with_capacity(16 + self.values.len() * 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&dim.to_le_bytes());
        buf.extend_from_slice(&count.to_le_bytes());
        write_str(&mut buf, &self.tag);
        for (i, id) in self.ids.iter().enumerate() {
            write_str(&mut buf, id);
            for v in self.row(i) {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out.write_all(&buf).map_err(|e| VectorError::Io(e.to_string()))
    }

    /// Loads a persisted index; vectors are renormalized after the
    /// single-precision round trip.
    pub fn read_from<R: Read>(mut input: R) -> Result<Self, VectorError> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes).map_err(|e| VectorError::Io(e.to_string()))?;
        let mut r = Cursor { bytes: &bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(VectorError::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(VectorError::Format(format!("unsupported version {version}")));
        }
        let dim = u16::from_le_bytes(r.array()?) as usize;
        let count = u32::from_le_bytes(r.array()?) as usize;
        let tag = r.string()?;
        let mut index = Self::new(dim, tag);
        for _ in 0..count {
            let id = r.string()?;
            let mut values = Vec::with_capacity(dim);
            for _ in 0..dim {
                values.push(f32::from_le_bytes(r.array()?) as f64);
            }
            index.insert(id, &EmbeddingVector::normalized(values)?)?;
        }
        if r.pos != bytes.len() {
            return Err(VectorError::Format("trailing bytes".into()));
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), VectorError> {
        let file = std::fs::File::create(path).map_err(|e| VectorError::Io(format!("{}: {e}", path.display())))?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self, VectorError> {
        let file = std::fs::File::open(path).map_err(|e| VectorError::Io(format!("{}: {e}", path.display())))?;
        Self::read_from(file)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>().clamp(-1.0, 1.0)
}

fn write_str(buf: &mut Vec<u8>, s: &str) {
    buf.extend_from_slice(&(s.len() as u32).to_le_bytes());
    buf.extend_from_slice(s.as_bytes());
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], VectorError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| VectorError::Format("truncated index file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], VectorError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn string(&mut self) -> Result<String, VectorError> {
        let len = u32::from_le_bytes(self.array()?) as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| VectorError::Format("id is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vector::LocalEmbedder;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random_index(n: usize, dim: usize, seed: u64) -> (VectorIndex, Vec<EmbeddingVector>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut idx = VectorIndex::new(dim, "t");
        let mut vs = Vec::new();
        for i in 0..n {
            let v = EmbeddingVector::normalized((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            idx.insert(format!("id{i:04}"), &v).unwrap();
            vs.push(v);
        }
        (idx, vs)
    }

    #[test]
    fn matches_brute_force_on_random_vectors() {
        let (idx, vs) = random_index(1000, 16, 3);
        let q = vs[17].clone();
        let mut brute: Vec<(String, f64)> = vs
            .iter()
            .enumerate()
            .map(|(i, v)| (format!("id{i:04}"), q.cosine(v)))
            .collect();
        brute.sort_by(rank_order);
        let got = idx.top_k(&q, "t", 25, None).unwrap();
        assert_eq!(got[0].0, "id0017");
        assert!((got[0].1 - 1.0).abs() < 1e-12);
        for (g, b) in got.iter().zip(&brute) {
            assert_eq!(g.0, b.0);
            assert!((g.1 - b.1).abs() < 1e-12);
        }
        assert_eq!(idx.top_k(&q, "t", 5000, None).unwrap().len(), 1000);
    }

    #[test]
    fn filter_and_ties() {
        let mut idx = VectorIndex::new(2, "t");
        let v = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        for id in ["b", "a", "c"] {
            idx.insert(id.into(), &v).unwrap();
        }
        let got = idx.top_k(&v, "t", 2, None).unwrap();
        assert_eq!(got.iter().map(|x| x.0.as_str()).collect::<Vec<_>>(), ["a", "b"]);
        let filter: HashSet<String> = ["c".to_string(), "zz".to_string()].into();
        assert_eq!(idx.top_k(&v, "t", 5, Some(&filter)).unwrap().len(), 1);
    }

    #[test]
    fn mismatches_rejected() {
        let (idx, vs) = random_index(3, 4, 1);
        assert!(matches!(idx.top_k(&vs[0], "other", 1, None), Err(VectorError::EmbedderMismatch { .. })));
        let short = EmbeddingVector::normalized(vec![1.0, 0.0]).unwrap();
        assert!(matches!(idx.top_k(&short, "t", 1, None), Err(VectorError::Dimension { .. })));
        assert!(matches!(idx.top_k(&vs[0], "t", 0, None), Err(VectorError::InvalidK)));
        let mut idx = idx;
        assert!(matches!(idx.insert("id0000".into(), &vs[1]), Err(VectorError::DuplicateId(_))));
    }

    #[test]
    fn persistence_round_trip() {
        let idx = VectorIndex::build(
            &LocalEmbedder,
            [("qc1", "flat package"), ("qc2", "resistor"), ("qc3", "")]
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string())),
        )
        .unwrap();
        let mut buf = Vec::new();
        idx.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"QVIX");
        let back = VectorIndex::read_from(buf.as_slice()).unwrap();
        assert_eq!(back.ids(), idx.ids());
        assert_eq!(back.embedder_tag(), idx.embedder_tag());
        for id in idx.ids() {
            let (a, b) = (idx.get(id).unwrap(), back.get(id).unwrap());
            let norm: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
            assert!(a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-6));
        }
        assert!(VectorIndex::read_from(&buf[..buf.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn appending_low_scorers_keeps_prefix(seed in 0u64..1000, k in 1usize..10) {
            let (mut idx, vs) = random_index(60, 8, seed);
            let q = vs[0].clone();
            let before = idx.top_k(&q, "t", k, None).unwrap();
            let kth = before.last().unwrap().1;
            let neg: Vec<f64> = q.values().iter().map(|x| -x).collect();
            let low = EmbeddingVector::normalized(neg).unwrap();
            if q.cosine(&low) < kth {
                idx.insert("zz-low".into(), &low).unwrap();
            }
            prop_assert_eq!(idx.top_k(&q, "t", k, None).unwrap(), before);
        }

        #[test]
        fn cosine_properties(a in proptest::collection::vec(-1.0f64..1.0, 8), b in proptest::collection::vec(-1.0f64..1.0, 8)) {
            let va = EmbeddingVector::normalized(a).unwrap();
            let vb = EmbeddingVector::normalized(b).unwrap();
            prop_assert!((va.cosine(&va) - 1.0).abs() < 1e-9);
            prop_assert!((va.cosine(&vb) - vb.cosine(&va)).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&va.cosine(&vb)));
        }
    }
}

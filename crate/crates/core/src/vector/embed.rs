use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::VectorError;

pub const LOCAL_DIM: usize = 256;

/// A unit-length embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `values` to unit length; an all-zero input becomes `e0`.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, VectorError> {
        if values.is_empty() {
            return Err(VectorError::Dimension { expected: 1, got: 0 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(VectorError::Format("embedding has non-finite entries".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            values[0] = 1.0;
        } else {
            values.iter_mut().for_each(|v| *v /= norm);
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        cosine(&self.0, &other.0)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

pub trait Embedder: Send + Sync {
    /// Identifies the model so indexes built by another embedder are refused.
    fn tag(&self) -> String;
    fn embed(&self, text: &str) -> Result<EmbeddingVector, VectorError>;
}

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Signed feature hashing of lowercased alphanumeric tokens into 256 buckets.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocalEmbedder;

impl LocalEmbedder {
    pub fn raw(text: &str) -> Vec<f64> {
        let mut v = vec![0.0; LOCAL_DIM];
        let lowered = text.to_lowercase();
        for token in lowered.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a64(token.as_bytes());
            let bucket = (h % LOCAL_DIM as u64) as usize;
            let sign = if (h >> 32) & 1 == 1 { -1.0 } else { 1.0 };
            v[bucket] += sign;
        }
        v
    }
}

impl Embedder for LocalEmbedder {
    fn tag(&self) -> String {
        format!("local-fnv1a-{LOCAL_DIM}")
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, VectorError> {
        EmbeddingVector::normalized(Self::raw(text))
    }
}

/// Client for an embedding service reached over HTTP.
pub struct RemoteEmbedder {
    endpoint: String,
    model: String,
    client: reqwest::blocking::Client,
    dim: Mutex<Option<usize>>,
}

impl RemoteEmbedder {
    pub const DEFAULT_MODEL: &'static str = "multilingual-e5-large-instruct";

    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Result<Self, VectorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| VectorError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            client,
            dim: Mutex::new(None),
        })
    }

    /// Reads `EMBED_ENDPOINT` and `EMBED_MODEL`.
    pub fn from_env() -> Result<Self, VectorError> {
        let endpoint = std::env::var("EMBED_ENDPOINT")
            .ok()
            .filter(|s| !s.trim().is_empty())
            .ok_or_else(|| VectorError::Transport("EMBED_ENDPOINT is not set".into()))?;
        let model = std::env::var("EMBED_MODEL")
            .ok()
            .filter(|s| !s.trim().is_empty())
            .unwrap_or_else(|| Self::DEFAULT_MODEL.to_string());
        Self::new(endpoint, model, Duration::from_secs(60))
    }

    fn extract(body: &Value) -> Option<Vec<f64>> {
        let arr = body
            .pointer("/data/0/embedding")
            .or_else(|| body.get("embedding"))
            .or(Some(body))
            .and_then(Value::as_array)?;
        arr.iter().map(Value::as_f64).collect()
    }
}

impl Embedder for RemoteEmbedder {
    fn tag(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector, VectorError> {
        let response = self
            .client
            .post(&self.endpoint)
            .json(&json!({ "model": self.model, "input": text }))
            .send()
            .map_err(|e| VectorError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(VectorError::Transport(format!("HTTP {status}")));
        }
        let body: Value = response.json().map_err(|e| VectorError::Transport(e.to_string()))?;
        let values = Self::extract(&body).ok_or_else(|| VectorError::Format("response has no embedding array".into()))?;
        let mut dim = self.dim.lock().expect("dim lock");
        match *dim {
            Some(d) if d != values.len() => {
                return Err(VectorError::Dimension {
                    expected: d,
                    got: values.len(),
                })
            }
            None => *dim = Some(values.len()),
            _ => {}
        }
        EmbeddingVector::normalized(values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    #[test]
    fn empty_text_is_e0() {
        let v = LocalEmbedder.embed("").unwrap();
        assert_eq!(v.values()[0], 1.0);
        assert!(v.values()[1..].iter().all(|x| *x == 0.0));
        assert_eq!(LocalEmbedder.embed(" ,;- ").unwrap(), v);
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn unit_norm_and_deterministic() {
        let a = LocalEmbedder.embed("R1 (pn P3333333) double component soldered").unwrap();
        let b = LocalEmbedder.embed("R1 (pn P3333333) double component soldered").unwrap();
        assert_eq!(a, b);
        let norm: f64 = a.values().iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        assert!((a.cosine(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn shared_token_beats_unrelated() {
        let s = "flat package reflow soldered polyimide";
        let base = LocalEmbedder.embed(s).unwrap();
        let near = LocalEmbedder.embed(&format!("{s} ceramic")).unwrap();
        let far = LocalEmbedder.embed("capacitor wave bath inspection lot").unwrap();
        assert!(base.cosine(&near) > base.cosine(&far));
    }

    #[test]
    fn pinned_fixture_vector() {
        let v = LocalEmbedder::raw("R1 (pn P3333333) double component soldered on double pad");
        let bytes: Vec<u8> = v.iter().flat_map(|x| (*x as i8).to_le_bytes()).collect();
        let digest = hex::encode(Sha256::digest(&bytes));
        let nonzero: Vec<(usize, f64)> = v.iter().copied().enumerate().filter(|(_, x)| *x != 0.0).collect();
        let tokens = ["r1", "pn", "p3333333", "double", "component", "soldered", "on", "pad"];
        let mut expected = vec![0.0; LOCAL_DIM];
        for t in tokens {
            let h = fnv1a64(t.as_bytes());
            let w = if t == "double" { 2.0 } else { 1.0 };
            expected[(h % 256) as usize] += if (h >> 32) & 1 == 1 { -w } else { w };
        }
        assert_eq!(v, expected, "nonzero buckets {nonzero:?}");
        assert_eq!(digest, PINNED_DIGEST);
    }

    const PINNED_DIGEST: &str = "7c4dfecb29780e7097e29c626f1f746dcc9f82fb26e897a91b03ca13597c5488";
}

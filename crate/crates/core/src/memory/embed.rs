use crate::hashing::stable_hash64;

/// Embedding dimensionality of the feature-hashing embedder.
pub const EMB_DIM: usize = 128;

/// Lowercases and splits on every non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Signed feature-hashing embedding, L2-normalized. Text without tokens maps
/// to the zero vector.
///
/// Each token's hash selects a bucket (`hash mod EMB_DIM`); the bit just above
/// the bucket bits picks the sign.
pub fn embed(text: &str) -> Vec<f32> {
    let mut acc = [0f64; EMB_DIM];
    for token in tokenize(text) {
        let h = stable_hash64(token.as_bytes());
        let index = (h % EMB_DIM as u64) as usize;
        let sign = if (h >> EMB_DIM.trailing_zeros()) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        acc[index] += sign;
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; EMB_DIM];
    }
    acc.iter().map(|v| (v / norm) as f32).collect()
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let mut dot = 0f64;
    let mut na = 0f64;
    let mut nb = 0f64;
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (f64::from(*x), f64::from(*y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

pub fn is_valid_embedding(v: &[f32]) -> bool {
    if v.len() != EMB_DIM || v.iter().any(|x| !x.is_finite()) {
        return false;
    }
    let norm = v.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    norm == 0.0 || (norm - 1.0).abs() <= 1e-6
}

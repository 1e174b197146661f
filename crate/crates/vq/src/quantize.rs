//! Nearest-codebook-entry quantization.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VqError};

/// Codebook indices over the latent grid, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VisualTokens {
    indices: Vec<u32>,
    grid: (usize, usize),
}

impl VisualTokens {
    pub fn new(indices: Vec<u32>, grid: (usize, usize)) -> Result<Self> {
        if indices.len() != grid.0 * grid.1 {
            return Err(VqError::Shape(format!(
                "{} tokens for a {}x{} latent grid",
                indices.len(),
                grid.0,
                grid.1
            )));
        }
        Ok(Self { indices, grid })
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn into_indices(self) -> Vec<u32> {
        self.indices
    }

    /// `(width, height)` of the latent grid.
    pub fn grid(&self) -> (usize, usize) {
        self.grid
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn check(&self, codebook_size: usize) -> Result<()> {
        match self.indices.iter().find(|&&i| i as usize >= codebook_size) {
            Some(&index) => Err(VqError::TokenRange {
                index,
                size: codebook_size,
            }),
            None => Ok(()),
        }
    }
}

/// Squared L2 distance, accumulated in order.
pub fn squared_distance(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// For each `dim`-vector in `latents`, the index of the closest codebook row.
/// Equidistant rows resolve to the lowest index.
pub fn nearest(latents: &[f32], codebook: &[f32], dim: usize) -> Result<Vec<u32>> {
    if dim == 0 || latents.len() % dim != 0 || codebook.len() % dim != 0 || codebook.is_empty() {
        return Err(VqError::Shape(format!(
            "latents {} / codebook {} not multiples of dim {dim}",
            latents.len(),
            codebook.len()
        )));
    }
    Ok(latents
        .chunks_exact(dim)
        .map(|z| {
            let mut best = (0u32, f32::INFINITY);
            for (i, e) in codebook.chunks_exact(dim).enumerate() {
                let d = squared_distance(z, e);
                if d < best.1 {
                    best = (i as u32, d);
                }
            }
            best.0
        })
        .collect())
}

/// Per-entry usage counts for a set of indices.
pub fn usage(indices: &[u32], codebook_size: usize) -> Vec<u64> {
    let mut counts = vec![0u64; codebook_size];
    for &i in indices {
        counts[i as usize] += 1;
    }
    counts
}

/// `exp(H)` of the empirical code distribution.
pub fn perplexity(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    let h: f64 = counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum();
    h.exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_neighbour_example() {
        let codebook = [0.0, 0.0, 1.0, 1.0];
        assert_eq!(nearest(&[0.9, 0.8], &codebook, 2).unwrap(), vec![1]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let codebook = [1.0, 0.0, -1.0, 0.0, 0.0, 1.0];
        assert_eq!(nearest(&[0.0, 0.0], &codebook, 2).unwrap(), vec![0]);
        let codebook = [5.0, 5.0, 1.0, 0.0, 1.0, 0.0];
        assert_eq!(nearest(&[1.0, 0.0], &codebook, 2).unwrap(), vec![1]);
    }

    #[test]
    fn token_length_is_checked() {
        assert!(VisualTokens::new(vec![0; 3], (2, 2)).is_err());
        let t = VisualTokens::new(vec![0, 1, 2, 7], (2, 2)).unwrap();
        assert!(t.check(8).is_ok());
        assert!(matches!(t.check(7), Err(VqError::TokenRange { index: 7, size: 7 })));
    }

    #[test]
    fn perplexity_of_uniform_usage() {
        assert!((perplexity(&[3, 3, 3, 3]) - 4.0).abs() < 1e-12);
        assert!((perplexity(&[5, 0, 0]) - 1.0).abs() < 1e-12);
        assert_eq!(perplexity(&[0, 0]), 0.0);
    }
}

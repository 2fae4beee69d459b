//! Candidate state spaces as projections of the union feature vector,
//! optionally augmented with seeded Gaussian noise features.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpaceSpec {
    pub name: String,
    /// Ordered subset of union-vector positions.
    pub indices: Vec<usize>,
    /// Zero-mean unit-variance noise features appended after projection.
    #[serde(default)]
    pub noise_dims: usize,
    /// Label of the RNG stream the noise is drawn from, so adding candidates
    /// never perturbs base-environment randomness.
    #[serde(default = "default_noise_stream")]
    pub noise_seed_stream: String,
}

fn default_noise_stream() -> String {
    "state-noise".to_string()
}

#[derive(Debug, thiserror::Error)]
pub enum SpaceError {
    #[error("state spec '{name}': index {index} out of bounds for union dimension {union_dim}")]
    IndexOutOfBounds { name: String, index: usize, union_dim: usize },
    #[error("state spec '{name}': duplicate index {index}")]
    DuplicateIndex { name: String, index: usize },
    #[error("state spec '{name}': input length {got}, union dimension {expected}")]
    BadInputLength { name: String, got: usize, expected: usize },
}

/// Positioned noise stream for one spec; projections at the same stream
/// position are identical across runs.
pub struct ProjectionStream {
    rng: ChaCha8Rng,
}

impl StateSpaceSpec {
    pub fn new(name: &str, indices: Vec<usize>, noise_dims: usize) -> Self {
        StateSpaceSpec {
            name: name.to_string(),
            indices,
            noise_dims,
            noise_seed_stream: default_noise_stream(),
        }
    }

    /// Identity over an `n`-dimensional union vector.
    pub fn identity(name: &str, n: usize) -> Self {
        StateSpaceSpec::new(name, (0..n).collect(), 0)
    }

    /// The full 8-feature lander space.
    pub fn lander_orig() -> Self {
        StateSpaceSpec::identity("S_orig", 8)
    }

    /// Original space plus two Gaussian noise features.
    pub fn lander_more() -> Self {
        StateSpaceSpec::new("S_more", (0..8).collect(), 2)
    }

    /// Position variables (x, y) omitted.
    pub fn lander_less() -> Self {
        StateSpaceSpec::new("S_less", vec![2, 3, 4, 5, 6, 7], 0)
    }

    pub fn lander_candidates() -> Vec<StateSpaceSpec> {
        vec![Self::lander_orig(), Self::lander_more(), Self::lander_less()]
    }

    /// Dimension of the projected vector.
    pub fn dim(&self) -> usize {
        self.indices.len() + self.noise_dims
    }

    pub fn validate(&self, union_dim: usize) -> Result<(), SpaceError> {
        let mut seen = vec![false; union_dim];
        for &i in &self.indices {
            if i >= union_dim {
                return Err(SpaceError::IndexOutOfBounds {
                    name: self.name.clone(),
                    index: i,
                    union_dim,
                });
            }
            if seen[i] {
                return Err(SpaceError::DuplicateIndex { name: self.name.clone(), index: i });
            }
            seen[i] = true;
        }
        Ok(())
    }

    /// Noise stream for this spec under a run seed. Independent per
    /// (seed, stream label, spec name).
    pub fn stream(&self, seed: u64) -> ProjectionStream {
        let label = format!("{}/{}", self.noise_seed_stream, self.name);
        ProjectionStream { rng: rng::stream(seed, &label) }
    }

    /// Restrict to `indices`, then append `noise_dims` standard-normal draws
    /// from the stream.
    pub fn project(
        &self,
        union_vec: &[f64],
        stream: &mut ProjectionStream,
    ) -> Result<Vec<f64>, SpaceError> {
        let mut out = Vec::with_capacity(self.dim());
        for &i in &self.indices {
            match union_vec.get(i) {
                Some(&v) => out.push(v),
                None => {
                    return Err(SpaceError::IndexOutOfBounds {
                        name: self.name.clone(),
                        index: i,
                        union_dim: union_vec.len(),
                    })
                }
            }
        }
        for _ in 0..self.noise_dims {
            out.push(rng::standard_normal(&mut stream.rng));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orig_spec_is_identity() {
        let spec = StateSpaceSpec::lander_orig();
        let v: Vec<f64> = (0..8).map(|i| i as f64 * 0.5).collect();
        let mut s = spec.stream(0);
        assert_eq!(spec.project(&v, &mut s).unwrap(), v);
    }

    #[test]
    fn less_spec_drops_positions() {
        let spec = StateSpaceSpec::lander_less();
        let v: Vec<f64> = vec![9.0, 8.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mut s = spec.stream(0);
        assert_eq!(spec.project(&v, &mut s).unwrap(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(spec.dim(), 6);
    }

    #[test]
    fn more_spec_appends_replayable_noise() {
        let spec = StateSpaceSpec::lander_more();
        let v: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let a = spec.project(&v, &mut spec.stream(7)).unwrap();
        let b = spec.project(&v, &mut spec.stream(7)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert_eq!(&a[..8], &v[..]);
        // Advancing the stream changes the noise, not the base features.
        let mut s = spec.stream(7);
        let first = spec.project(&v, &mut s).unwrap();
        let second = spec.project(&v, &mut s).unwrap();
        assert_eq!(&first[..8], &second[..8]);
        assert_ne!(&first[8..], &second[8..]);
    }

    #[test]
    fn out_of_bounds_index_rejected() {
        let spec = StateSpaceSpec::new("bad", vec![0, 9], 0);
        assert!(spec.validate(8).is_err());
        let mut s = spec.stream(0);
        assert!(spec.project(&[0.0; 8], &mut s).is_err());
    }

    #[test]
    fn duplicate_index_rejected() {
        let spec = StateSpaceSpec::new("dup", vec![1, 1], 0);
        assert!(matches!(
            spec.validate(8),
            Err(SpaceError::DuplicateIndex { index: 1, .. })
        ));
    }

    #[test]
    fn dim_counts_noise() {
        assert_eq!(StateSpaceSpec::lander_more().dim(), 10);
        assert_eq!(StateSpaceSpec::lander_orig().dim(), 8);
    }
}

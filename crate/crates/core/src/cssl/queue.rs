use crate::error::{CertError, Result};
use crate::numeric::{dot, Tensor};

/// Tolerance on the norm of stored keys.
pub const UNIT_NORM_TOL: f64 = 1e-10;

/// Fixed-capacity FIFO ring of unit-norm keys and their origin ids.
///
/// Once full, each enqueue evicts the oldest key, so the contents are always
/// the last `capacity` keys enqueued, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct MoCoQueue {
    capacity: usize,
    dim: usize,
    keys: Vec<f64>,
    origins: Vec<u64>,
    /// Slot of the oldest entry.
    start: usize,
    len: usize,
}

impl MoCoQueue {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return Err(CertError::Config(format!(
                "queue needs positive capacity and key width, got {capacity} x {dim}"
            )));
        }
        Ok(MoCoQueue {
            capacity,
            dim,
            keys: vec![0.0; capacity * dim],
            origins: vec![0; capacity],
            start: 0,
            len: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.capacity
    }

    pub fn clear(&mut self) {
        self.start = 0;
        self.len = 0;
    }

    fn slot(&self, i: usize) -> usize {
        (self.start + i) % self.capacity
    }

    pub fn enqueue(&mut self, key: &[f64], origin: u64) -> Result<()> {
        if key.len() != self.dim {
            return Err(CertError::Shape(format!(
                "key of width {} pushed to a queue of width {}",
                key.len(),
                self.dim
            )));
        }
        let norm = dot(key, key).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(CertError::Numeric(format!("queue key has norm {norm}, expected 1")));
        }
        let slot = if self.len < self.capacity {
            self.len += 1;
            self.slot(self.len - 1)
        } else {
            let s = self.start;
            self.start = (self.start + 1) % self.capacity;
            s
        };
        self.keys[slot * self.dim..(slot + 1) * self.dim].copy_from_slice(key);
        self.origins[slot] = origin;
        Ok(())
    }

    /// Enqueues each row of `keys` in order.
    pub fn enqueue_batch(&mut self, keys: &Tensor, origins: &[u64]) -> Result<()> {
        if keys.rows() != origins.len() || keys.cols() != self.dim {
            return Err(CertError::Shape(format!(
                "enqueue_batch: {} keys of width {} with {} origins",
                keys.rows(),
                keys.cols(),
                origins.len()
            )));
        }
        for (i, &o) in origins.iter().enumerate() {
            self.enqueue(keys.row(i), o)?;
        }
        Ok(())
    }

    /// `i`-th key counting from the oldest.
    pub fn key(&self, i: usize) -> &[f64] {
        assert!(i < self.len, "queue index {i} out of range {}", self.len);
        let s = self.slot(i);
        &self.keys[s * self.dim..(s + 1) * self.dim]
    }

    pub fn origin(&self, i: usize) -> u64 {
        assert!(i < self.len, "queue index {i} out of range {}", self.len);
        self.origins[self.slot(i)]
    }

    /// `(origin, key)` pairs, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = (u64, &[f64])> {
        (0..self.len).map(move |i| (self.origin(i), self.key(i)))
    }

    /// All keys as a `[len, dim]` matrix, oldest first.
    pub fn keys_matrix(&self) -> Option<Tensor> {
        if self.len == 0 {
            return None;
        }
        let data: Vec<f64> = (0..self.len).flat_map(|i| self.key(i).to_vec()).collect();
        Some(Tensor::matrix(self.len, self.dim, data).expect("consistent dims"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(dim: usize, i: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[i % dim] = 1.0;
        v
    }

    #[test]
    fn fills_then_evicts_oldest() {
        let mut q = MoCoQueue::new(3, 2).unwrap();
        for o in 0..5u64 {
            q.enqueue(&e(2, o as usize), o).unwrap();
            assert_eq!(q.len(), (o as usize + 1).min(3));
        }
        let origins: Vec<u64> = q.iter().map(|(o, _)| o).collect();
        assert_eq!(origins, vec![2, 3, 4]);
        assert_eq!(q.key(0), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_non_unit_and_wrong_width() {
        let mut q = MoCoQueue::new(2, 2).unwrap();
        assert!(q.enqueue(&[1.0, 1.0], 0).is_err());
        assert!(q.enqueue(&[1.0], 0).is_err());
        assert!(q.is_empty());
    }
}

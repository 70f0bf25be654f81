use rand::Rng;

use crate::error::{ensure_finite, ensure_len, Error, Result};

pub const DEFAULT_CAPACITY: usize = 100_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Fixed-capacity ring buffer; once full, the oldest transition is
/// overwritten first.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    state_dim: usize,
    action_dim: usize,
    storage: Vec<Transition>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, state_dim: usize, action_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::InvalidParameter("replay capacity must be positive".into()));
        }
        Ok(ReplayBuffer {
            capacity,
            state_dim,
            action_dim,
            storage: Vec::with_capacity(capacity.min(1 << 16)),
            cursor: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.storage.len()
    }

    pub fn is_empty(&self) -> bool {
        self.storage.is_empty()
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        ensure_len("transition state", self.state_dim, t.state.len())?;
        ensure_len("transition next state", self.state_dim, t.next_state.len())?;
        ensure_len("transition action", self.action_dim, t.action.len())?;
        ensure_finite("transition reward", &[t.reward])?;
        if self.storage.len() < self.capacity {
            self.storage.push(t);
        } else {
            self.storage[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Stored transitions from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.storage.len() < self.capacity {
            0
        } else {
            self.cursor
        };
        self.storage[split..].iter().chain(&self.storage[..split])
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample_batch<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Transition>> {
        if n == 0 {
            return Err(Error::InvalidParameter("batch size must be at least 1".into()));
        }
        if self.storage.len() < n {
            return Err(Error::InsufficientSamples {
                have: self.storage.len(),
                need: n,
            });
        }
        Ok(self
            .sample_indices(n, rng)
            .into_iter()
            .map(|i| self.storage[i].clone())
            .collect())
    }

    pub(crate) fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        let len = self.storage.len();
        (0..n).map(|_| rng.random_range(0..len)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tagged(tag: f64) -> Transition {
        Transition {
            state: vec![tag],
            action: vec![0.0],
            reward: tag,
            next_state: vec![tag],
            done: false,
        }
    }

    #[test]
    fn push_counts_and_overwrites_fifo() {
        let mut buf = ReplayBuffer::new(2, 1, 1).unwrap();
        buf.push(tagged(1.0)).unwrap();
        assert_eq!(buf.len(), 1);
        buf.push(tagged(2.0)).unwrap();
        buf.push(tagged(3.0)).unwrap();
        let kept: Vec<f64> = buf.iter_oldest_first().map(|t| t.reward).collect();
        assert_eq!(kept, vec![2.0, 3.0]);
    }

    #[test]
    fn size_capped_at_capacity() {
        let mut buf = ReplayBuffer::new(10_000, 1, 1).unwrap();
        for i in 0..100_000 {
            buf.push(tagged(i as f64)).unwrap();
        }
        assert_eq!(buf.len(), 10_000);
        assert_eq!(buf.iter_oldest_first().next().unwrap().reward, 90_000.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut buf = ReplayBuffer::new(4, 2, 1).unwrap();
        assert!(buf.push(tagged(0.0)).is_err());
        assert!(ReplayBuffer::new(0, 1, 1).is_err());
    }

    #[test]
    fn singleton_sample() {
        let mut buf = ReplayBuffer::new(4, 1, 1).unwrap();
        buf.push(tagged(7.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(buf.sample_batch(1, &mut rng).unwrap(), vec![tagged(7.0)]);
    }

    #[test]
    fn undersized_buffer_errors() {
        let mut buf = ReplayBuffer::new(4, 1, 1).unwrap();
        buf.push(tagged(7.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            buf.sample_batch(2, &mut rng),
            Err(Error::InsufficientSamples { have: 1, need: 2 })
        ));
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let mut buf = ReplayBuffer::new(100, 1, 1).unwrap();
        for i in 0..100 {
            buf.push(tagged(i as f64)).unwrap();
        }
        let a = buf.sample_batch(16, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = buf.sample_batch(16, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_is_uniform() {
        let mut buf = ReplayBuffer::new(10, 1, 1).unwrap();
        for i in 0..10 {
            buf.push(tagged(i as f64)).unwrap();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let draws = 100_000;
        let mut counts = [0usize; 10];
        for i in buf.sample_indices(draws, &mut rng) {
            counts[i] += 1;
        }
        // binomial(1e5, 0.1): sigma = sqrt(n p (1-p))
        let sigma = (draws as f64 * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - 10_000.0).abs() < 3.0 * sigma, "count {c}");
        }
    }
}

use ndarray::{Array1, Array2};
use rand::Rng;

use super::NnError;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub aux_cost: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Sampled minibatch, one row per transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub costs: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(items: &[&Transition]) -> Self {
        let b = items.len();
        let sd = items.first().map_or(0, |t| t.state.len());
        let ad = items.first().map_or(0, |t| t.action.len());
        let mut out = Self {
            states: Array2::zeros((b, sd)),
            actions: Array2::zeros((b, ad)),
            rewards: Array1::zeros(b),
            costs: Array1::zeros(b),
            next_states: Array2::zeros((b, sd)),
            dones: Array1::zeros(b),
        };
        for (i, t) in items.iter().enumerate() {
            out.states.row_mut(i).assign(&Array1::from(t.state.clone()));
            out.actions.row_mut(i).assign(&Array1::from(t.action.clone()));
            out.next_states.row_mut(i).assign(&Array1::from(t.next_state.clone()));
            out.rewards[i] = t.reward;
            out.costs[i] = t.aux_cost;
            out.dones[i] = if t.done { 1.0 } else { 0.0 };
        }
        out
    }
}

/// Fixed-capacity ring of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: Vec::new(), head: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Stored transitions, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (a, b) = self.items.split_at(self.head.min(self.items.len()));
        b.iter().chain(a.iter())
    }

    pub fn push(&mut self, t: Transition) -> Result<(), NnError> {
        if let Some(first) = self.items.first() {
            for (what, expected, got) in [
                ("transition state", first.state.len(), t.state.len()),
                ("transition next state", first.state.len(), t.next_state.len()),
                ("transition action", first.action.len(), t.action.len()),
            ] {
                if expected != got {
                    return Err(NnError::Shape { what, expected, got });
                }
            }
        } else if t.state.len() != t.next_state.len() {
            return Err(NnError::Shape {
                what: "transition next state",
                expected: t.state.len(),
                got: t.next_state.len(),
            });
        }
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
        Ok(())
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch, NnError> {
        if batch == 0 || self.items.len() < batch {
            return Err(NnError::Underfilled { size: self.items.len(), batch });
        }
        let picks: Vec<&Transition> = (0..batch)
            .map(|_| &self.items[rng.random_range(0..self.items.len())])
            .collect();
        Ok(Batch::from_transitions(&picks))
    }

    /// Indices drawn by [`sample`](Self::sample) for the same rng state.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<usize> {
        (0..batch).map(|_| rng.random_range(0..self.items.len())).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(r: f64) -> Transition {
        Transition {
            state: vec![r, 0.0],
            action: vec![0.0],
            reward: r,
            aux_cost: 0.0,
            next_state: vec![0.0, 0.0],
            done: false,
        }
    }

    #[test]
    fn evicts_oldest() {
        let mut buf = ReplayBuffer::new(2);
        for r in [1.0, 2.0, 3.0] {
            buf.push(tr(r)).unwrap();
        }
        assert_eq!(buf.len(), 2);
        let rewards: Vec<f64> = buf.iter().map(|t| t.reward).collect();
        assert_eq!(rewards, vec![2.0, 3.0]);
    }

    #[test]
    fn underfilled_and_shape_errors() {
        let mut buf = ReplayBuffer::new(4);
        buf.push(tr(1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buf.sample(2, &mut rng), Err(NnError::Underfilled { .. })));
        let mut bad = tr(2.0);
        bad.action = vec![0.0, 1.0];
        assert!(buf.push(bad).is_err());
    }

    #[test]
    fn seeded_sampling_is_reproducible() {
        let mut buf = ReplayBuffer::new(10);
        for r in 0..10 {
            buf.push(tr(r as f64)).unwrap();
        }
        let a = buf.sample(5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = buf.sample(5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_is_uniform() {
        let n = 10;
        let mut buf = ReplayBuffer::new(n);
        for r in 0..n {
            buf.push(tr(r as f64)).unwrap();
        }
        let draws = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = vec![0usize; n];
        for i in buf.sample_indices(draws, &mut rng) {
            counts[i] += 1;
        }
        let p = 1.0 / n as f64;
        let mean = draws as f64 * p;
        let sd = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - mean).abs() < 3.0 * sd, "{c} vs {mean} ± {sd}");
        }
    }
}

//! Binary indexed tree over nonnegative integer weights.

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fenwick {
    tree: Vec<u64>,
    weights: Vec<u64>,
    total: u64,
}

impl Fenwick {
    pub fn from_weights(weights: Vec<u64>) -> Self {
        let n = weights.len();
        let mut tree = vec![0u64; n + 1];
        for (i, w) in weights.iter().enumerate() {
            tree[i + 1] += w;
            let parent = (i + 1) + ((i + 1) & (i + 1).wrapping_neg());
            if parent <= n {
                tree[parent] += tree[i + 1];
            }
        }
        let total = weights.iter().sum();
        Self { tree, weights, total }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn weight(&self, i: usize) -> u64 {
        self.weights[i]
    }

    pub fn set(&mut self, i: usize, value: u64) {
        let old = self.weights[i];
        self.weights[i] = value;
        self.total = self.total - old + value;
        let mut k = i + 1;
        while k < self.tree.len() {
            self.tree[k] = self.tree[k] - old + value;
            k += k & k.wrapping_neg();
        }
    }

    /// Sum of weights `0..i`.
    pub fn prefix(&self, i: usize) -> u64 {
        let mut k = i;
        let mut s = 0;
        while k > 0 {
            s += self.tree[k];
            k &= k - 1;
        }
        s
    }

    /// Smallest `i` with `prefix(i + 1) > target`; requires `target < total`.
    pub fn find(&self, mut target: u64) -> usize {
        debug_assert!(target < self.total);
        let mut pos = 0;
        let mut step = self.tree.len().next_power_of_two() / 2;
        while step > 0 {
            let next = pos + step;
            if next < self.tree.len() && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step /= 2;
        }
        pos
    }
}

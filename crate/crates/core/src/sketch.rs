//! Greenwald-Khanna streaming quantile summary.
//!
//! The summary keeps an ordered list of `(value, g, delta)` tuples. For tuple
//! `i`, `g` is the gap between the minimum possible rank of `value` and that
//! of its predecessor, and `delta` bounds how far the maximum possible rank
//! exceeds the minimum. Keeping `g + delta <= floor(2 * epsilon * n)` for all
//! tuples guarantees that any quantile query is answered with a value whose
//! rank is within `epsilon * n` of the target rank.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct Tuple {
    value: f64,
    g: u64,
    delta: u64,
}

/// An epsilon-approximate quantile summary over a stream of reals.
#[derive(Debug, Clone)]
pub struct QuantileSketch {
    epsilon: f64,
    count: u64,
    tuples: Vec<Tuple>,
    compress_every: u64,
    since_compress: u64,
}

impl QuantileSketch {
    /// Create an empty sketch with rank-error bound `epsilon` in `(0, 0.5]`.
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 0.5) {
            return Err(Error::InvalidParameter(format!(
                "epsilon must lie in (0, 0.5], got {epsilon}"
            )));
        }
        let compress_every = ((1.0 / (2.0 * epsilon)).floor() as u64).max(1);
        Ok(Self {
            epsilon,
            count: 0,
            tuples: Vec::new(),
            compress_every,
            since_compress: 0,
        })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Number of observations inserted so far.
    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Number of stored tuples.
    pub fn tuple_count(&self) -> usize {
        self.tuples.len()
    }

    /// Current merge threshold `floor(2 * epsilon * n)`.
    fn band(&self) -> u64 {
        (2.0 * self.epsilon * self.count as f64).floor() as u64
    }

    pub fn insert(&mut self, x: f64) -> Result<()> {
        if !x.is_finite() {
            return Err(Error::InvalidObservation(x));
        }
        // Equal values go after existing ties.
        let pos = self.tuples.partition_point(|t| t.value <= x);
        let delta = if pos == 0 || pos == self.tuples.len() {
            0
        } else {
            let next = &self.tuples[pos];
            next.g + next.delta - 1
        };
        self.tuples.insert(pos, Tuple { value: x, g: 1, delta });
        self.count += 1;

        self.since_compress += 1;
        if self.since_compress >= self.compress_every {
            self.compress();
            self.since_compress = 0;
        }
        Ok(())
    }

    /// Insert every value from an iterator, stopping at the first invalid one.
    pub fn extend<I: IntoIterator<Item = f64>>(&mut self, values: I) -> Result<()> {
        for x in values {
            self.insert(x)?;
        }
        Ok(())
    }

    /// Merge adjacent tuples whose combined rank uncertainty fits the band.
    /// The first tuple is never removed, so the minimum stays exact; merging
    /// always keeps the right-hand value, so the maximum does too.
    fn compress(&mut self) {
        let band = self.band();
        if self.tuples.len() < 3 {
            return;
        }
        let mut out: Vec<Tuple> = Vec::with_capacity(self.tuples.len());
        // Walk right to left, folding tuple i into its right neighbour.
        let mut iter = self.tuples.iter().rev();
        let mut right = *iter.next().expect("non-empty");
        let mut remaining: Vec<Tuple> = iter.copied().collect();
        let first = remaining.pop().expect("at least three tuples");
        for t in remaining {
            if t.g + right.g + right.delta <= band {
                right.g += t.g;
            } else {
                out.push(right);
                right = t;
            }
        }
        out.push(right);
        out.push(first);
        out.reverse();
        self.tuples = out;
    }

    /// Return a value whose rank is within `epsilon * n` of `ceil(p * n)`.
    pub fn query(&self, p: f64) -> Result<f64> {
        if self.tuples.is_empty() {
            return Err(Error::EmptySummary);
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!(
                "probability must lie in [0, 1], got {p}"
            )));
        }
        let first = self.tuples[0].value;
        let last = self.tuples[self.tuples.len() - 1].value;
        if p == 0.0 {
            return Ok(first);
        }
        if p == 1.0 {
            return Ok(last);
        }
        let n = self.count as f64;
        // Guard against p * n landing a hair above an integer.
        let target = ((p * n - 1e-9).ceil()).max(1.0);
        let limit = target + self.epsilon * n;

        // The predecessor of the first tuple whose maximum rank overshoots
        // the target by more than epsilon * n is within the bound. The first
        // tuple always has exact rank 1, so it never overshoots.
        let mut rmin = 0u64;
        let mut prev = first;
        for t in &self.tuples {
            let rmax = rmin + t.g + t.delta;
            if rmax as f64 > limit {
                return Ok(prev);
            }
            rmin += t.g;
            prev = t.value;
        }
        Ok(last)
    }

    #[cfg(test)]
    fn check_invariants(&self) {
        let total: u64 = self.tuples.iter().map(|t| t.g).sum();
        assert_eq!(total, self.count, "sum of g must equal count");
        assert_eq!(self.count == 0, self.tuples.is_empty());
        for w in self.tuples.windows(2) {
            assert!(w[0].value <= w[1].value, "values out of order");
        }
        if self.count as f64 >= 1.0 / (2.0 * self.epsilon) {
            let band = self.band();
            for t in &self.tuples {
                assert!(t.g >= 1);
                assert!(
                    t.g + t.delta <= band,
                    "g + delta = {} exceeds band {band}",
                    t.g + t.delta
                );
            }
        }
    }
}

//! Approximate CDFs built from quantile sketches, and the binned densities
//! derived from them.
//!
//! An [`ApproxCdf`] stores `a` quantile values taken at probabilities spaced
//! linearly from `1/N` to `1`. Between two breakpoints the CDF is linear,
//! below the first breakpoint it is zero, and from the last one on it is one.
//! Runs of equal breakpoints are jumps; evaluation is right-continuous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sketch::QuantileSketch;

/// Default number of grid points per summary.
pub const DEFAULT_GRID_POINTS: usize = 100;

const GRID_TOLERANCE: f64 = 1e-9;

/// Piecewise-linear approximation of a cumulative distribution function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCdf")]
pub struct ApproxCdf {
    label: String,
    sample_count: u64,
    breakpoints: Vec<f64>,
    probabilities: Vec<f64>,
}

#[derive(Deserialize)]
struct RawCdf {
    label: String,
    sample_count: u64,
    breakpoints: Vec<f64>,
    probabilities: Vec<f64>,
}

impl TryFrom<RawCdf> for ApproxCdf {
    type Error = Error;

    fn try_from(raw: RawCdf) -> Result<Self> {
        ApproxCdf::from_parts(raw.label, raw.sample_count, raw.breakpoints, raw.probabilities)
    }
}

/// The linear probability grid from `1/n` to `1` with `points` entries.
fn probability_grid(n: u64, points: usize) -> Vec<f64> {
    let first = 1.0 / n as f64;
    if points == 1 {
        return vec![1.0];
    }
    let step = (1.0 - first) / (points - 1) as f64;
    let mut grid: Vec<f64> = (0..points).map(|i| first + step * i as f64).collect();
    grid[points - 1] = 1.0;
    grid
}

impl ApproxCdf {
    /// Query the sketch at `points` linearly spaced probabilities.
    ///
    /// With a single observation the grid collapses to one point regardless
    /// of `points`.
    pub fn build(sketch: &QuantileSketch, points: usize, label: impl Into<String>) -> Result<Self> {
        if sketch.is_empty() {
            return Err(Error::EmptySummary);
        }
        let n = sketch.count();
        if points == 0 {
            return Err(Error::InvalidParameter("grid size must be at least 1".into()));
        }
        if points == 1 && n > 1 {
            return Err(Error::InvalidParameter(
                "a single grid point is only valid for one observation".into(),
            ));
        }
        let points = if n == 1 { 1 } else { points };
        let probabilities = probability_grid(n, points);
        let breakpoints = probabilities
            .iter()
            .map(|&p| sketch.query(p))
            .collect::<Result<Vec<_>>>()?;
        Self::from_parts(label.into(), n, breakpoints, probabilities)
    }

    /// Assemble a summary from stored parts, checking every invariant.
    pub fn from_parts(
        label: String,
        sample_count: u64,
        breakpoints: Vec<f64>,
        probabilities: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("approximate CDF: {msg}")));
        if sample_count == 0 {
            return bad("sample_count must be at least 1".into());
        }
        if breakpoints.is_empty() || breakpoints.len() != probabilities.len() {
            return bad(format!(
                "need equal, non-zero numbers of breakpoints ({}) and probabilities ({})",
                breakpoints.len(),
                probabilities.len()
            ));
        }
        if breakpoints.iter().any(|b| !b.is_finite()) {
            return bad("breakpoints must be finite".into());
        }
        if breakpoints.windows(2).any(|w| w[0] > w[1]) {
            return bad("breakpoints must be non-decreasing".into());
        }
        let expected = probability_grid(sample_count, probabilities.len());
        if sample_count == 1 && probabilities.len() > 1 {
            return bad("a single observation has a one-point grid".into());
        }
        for (got, want) in probabilities.iter().zip(&expected) {
            if (got - want).abs() > GRID_TOLERANCE {
                return bad(format!(
                    "probability {got} deviates from the linear grid value {want}"
                ));
            }
        }
        Ok(Self {
            label,
            sample_count,
            breakpoints,
            probabilities,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn min(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn max(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1]
    }

    /// Evaluate the CDF at `x`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::InvalidObservation(x));
        }
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        let b = &self.breakpoints;
        let p = &self.probabilities;
        if x < b[0] {
            return 0.0;
        }
        if x >= b[b.len() - 1] {
            return 1.0;
        }
        // Last index with b[j] <= x; b[j + 1] > x so the segment is non-degenerate.
        let j = b.partition_point(|&v| v <= x) - 1;
        p[j] + (p[j + 1] - p[j]) * (x - b[j]) / (b[j + 1] - b[j])
    }

    /// Left limit `F(x-)`. Differs from [`eval`](Self::eval) only at jumps.
    pub(crate) fn eval_left(&self, x: f64) -> f64 {
        let b = &self.breakpoints;
        let p = &self.probabilities;
        if x <= b[0] {
            return 0.0;
        }
        if x > b[b.len() - 1] {
            return 1.0;
        }
        // First index with b[s] >= x; b[s - 1] < x.
        let s = b.partition_point(|&v| v < x);
        p[s - 1] + (p[s] - p[s - 1]) * (x - b[s - 1]) / (b[s] - b[s - 1])
    }
}

/// Probability masses over uniform bins.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDensity {
    bin_edges: Vec<f64>,
    masses: Vec<f64>,
    bin_width: f64,
}

impl BinnedDensity {
    /// Bin `cdf` over `bins` uniform bins on `[lo, hi]`.
    ///
    /// Bin `k` receives `F(right) - F(left)`; the first bin is closed on the
    /// left so that a point mass sitting exactly at `lo` is counted. Whatever
    /// mass falls outside `[lo, hi]` is spread evenly across all bins so the
    /// masses sum to one.
    pub fn from_cdf(cdf: &ApproxCdf, lo: f64, hi: f64, bins: usize) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::InvalidParameter(format!(
                "bin range must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        if bins == 0 {
            return Err(Error::InvalidParameter("need at least one bin".into()));
        }
        let width = (hi - lo) / bins as f64;
        let mut bin_edges: Vec<f64> = (0..=bins).map(|k| lo + width * k as f64).collect();
        bin_edges[bins] = hi;

        let mut cum = Vec::with_capacity(bins + 1);
        cum.push(cdf.eval_left(lo));
        cum.extend(bin_edges[1..].iter().map(|&e| cdf.eval_unchecked(e)));
        let raw: Vec<f64> = cum.windows(2).map(|w| w[1] - w[0]).collect();

        let correction = (1.0 - raw.iter().sum::<f64>()) / bins as f64;
        let mut masses: Vec<f64> = raw.iter().map(|m| (m + correction).max(0.0)).collect();
        let total: f64 = masses.iter().sum();
        for m in &mut masses {
            *m /= total;
        }
        Ok(Self {
            bin_edges,
            masses,
            bin_width: width,
        })
    }

    pub fn bin_edges(&self) -> &[f64] {
        &self.bin_edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    /// Density value `f(x)` for each bin, i.e. mass divided by width.
    pub fn densities(&self) -> Vec<f64> {
        self.masses.iter().map(|m| m / self.bin_width).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sketch_of(values: &[f64], eps: f64) -> QuantileSketch {
        let mut s = QuantileSketch::new(eps).unwrap();
        s.extend(values.iter().copied()).unwrap();
        s
    }

    fn cdf(b: &[f64], p: &[f64], n: u64) -> ApproxCdf {
        ApproxCdf::from_parts("x".into(), n, b.to_vec(), p.to_vec()).unwrap()
    }

    #[test]
    fn single_point() {
        let f = ApproxCdf::build(&sketch_of(&[5.0], 0.01), 1, "f").unwrap();
        assert_eq!(f.breakpoints(), &[5.0]);
        assert_eq!(f.probabilities(), &[1.0]);
        assert_eq!(f.eval(4.999).unwrap(), 0.0);
        assert_eq!(f.eval(5.0).unwrap(), 1.0);
    }

    #[test]
    fn rejects_bad_grid_sizes() {
        let s = sketch_of(&[1.0, 2.0, 3.0], 0.01);
        assert!(ApproxCdf::build(&s, 0, "f").is_err());
        assert!(ApproxCdf::build(&s, 1, "f").is_err());
        let empty = QuantileSketch::new(0.01).unwrap();
        assert!(matches!(ApproxCdf::build(&empty, 10, "f"), Err(Error::EmptySummary)));
    }

    #[test]
    fn breakpoints_track_sorted_quantiles() {
        let data: Vec<f64> = (1..=100).map(f64::from).collect();
        let f = ApproxCdf::build(&sketch_of(&data, 0.001), 100, "f").unwrap();
        for (i, b) in f.breakpoints().iter().enumerate() {
            assert!((b - (i + 1) as f64).abs() <= 1.0, "breakpoint {i} = {b}");
        }
        assert_eq!(f.probabilities()[0], 0.01);
        assert_eq!(f.probabilities()[99], 1.0);
    }

    #[test]
    fn interpolates_between_breakpoints() {
        let f = cdf(&[1.0, 3.0], &[0.5, 1.0], 2);
        assert_eq!(f.eval(2.0).unwrap(), 0.75);
        assert_eq!(f.eval(0.5).unwrap(), 0.0);
        assert_eq!(f.eval(3.0).unwrap(), 1.0);
        assert_eq!(f.eval(1.0).unwrap(), 0.5);
        assert!(f.eval(f64::NAN).is_err());
    }

    #[test]
    fn ties_are_right_continuous() {
        let f = cdf(&[0.0, 1.0, 1.0, 2.0], &[0.25, 0.5, 0.75, 1.0], 4);
        assert_eq!(f.eval(1.0).unwrap(), 0.75);
        assert_eq!(f.eval_left(1.0), 0.5);
        assert_eq!(f.eval(0.5).unwrap(), 0.375);
        assert_eq!(f.eval(1.5).unwrap(), 0.875);
        assert_eq!(f.eval_left(0.0), 0.0);
    }

    #[test]
    fn rejects_malformed_parts() {
        assert!(ApproxCdf::from_parts("x".into(), 2, vec![3.0, 1.0], vec![0.5, 1.0]).is_err());
        assert!(ApproxCdf::from_parts("x".into(), 2, vec![1.0], vec![0.5, 1.0]).is_err());
        assert!(ApproxCdf::from_parts("x".into(), 4, vec![1.0, 2.0], vec![0.3, 1.0]).is_err());
        assert!(ApproxCdf::from_parts("x".into(), 0, vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn serde_round_trip_validates() {
        let f = cdf(&[1.0, 3.0], &[0.5, 1.0], 2);
        let text = serde_json::to_string(&f).unwrap();
        let back: ApproxCdf = serde_json::from_str(&text).unwrap();
        assert_eq!(back, f);
        let broken = text.replace("0.5", "0.7");
        assert!(serde_json::from_str::<ApproxCdf>(&broken).is_err());
    }

    #[test]
    fn uniform_density() {
        // Quantiles of U(0, 1) at 1/4, 1/2, 3/4, 1 give F(x) = x on [1/4, 1].
        let f = cdf(&[0.25, 0.5, 0.75, 1.0], &[0.25, 0.5, 0.75, 1.0], 4);
        let d = BinnedDensity::from_cdf(&f, 0.0, 1.0, 4).unwrap();
        for m in d.masses() {
            assert!((m - 0.25).abs() < 1e-15);
        }
        assert_eq!(d.bin_width(), 0.25);
        assert_eq!(d.bin_edges(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(d.densities(), vec![1.0; 4]);
    }

    #[test]
    fn correction_vanishes_inside_range() {
        let f = cdf(&[1.0, 2.0, 3.0], &[1.0 / 3.0, 2.0 / 3.0, 1.0], 3);
        let d = BinnedDensity::from_cdf(&f, 0.0, 4.0, 8).unwrap();
        // By hand: F at edges 0, .5, 1, ..., 4 is 0, 0, 1/3, 1/2, 2/3, 5/6, 1, 1, 1.
        let third = 1.0 / 3.0;
        let hand = [0.0, third, third / 2.0, third / 2.0, third / 2.0, third / 2.0, 0.0, 0.0];
        for (m, h) in d.masses().iter().zip(hand) {
            assert!((m - h).abs() < 1e-15, "{m} vs {h}");
        }
    }

    #[test]
    fn partial_support_is_renormalised() {
        let data: Vec<f64> = (0..1000).map(|i| i as f64 / 100.0).collect();
        let f = ApproxCdf::build(&sketch_of(&data, 0.001), 100, "f").unwrap();
        let d = BinnedDensity::from_cdf(&f, 2.0, 5.0, 10).unwrap();
        let sum: f64 = d.masses().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(d.masses().iter().all(|m| *m >= 0.0));
        // Each bin holds about 3% of the data plus an even share of the 70% outside.
        for m in d.masses() {
            assert!((m - 0.1).abs() < 0.01, "{m}");
        }
    }

    #[test]
    fn density_rejects_bad_range() {
        let f = cdf(&[1.0, 3.0], &[0.5, 1.0], 2);
        assert!(BinnedDensity::from_cdf(&f, 1.0, 1.0, 4).is_err());
        assert!(BinnedDensity::from_cdf(&f, 2.0, 1.0, 4).is_err());
        assert!(BinnedDensity::from_cdf(&f, 0.0, 1.0, 0).is_err());
    }

    fn exact_ecdf(sorted: &[f64], x: f64) -> f64 {
        sorted.partition_point(|v| *v <= x) as f64 / sorted.len() as f64
    }

    proptest! {
        #[test]
        fn eval_is_monotone(data in prop::collection::vec(-50f64..50.0, 1..400),
                            grid in prop::collection::vec(-60f64..60.0, 2..200)) {
            let s = sketch_of(&data, 0.01);
            let points = if data.len() == 1 { 1 } else { 50 };
            let f = ApproxCdf::build(&s, points, "f").unwrap();
            let mut xs = grid.clone();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut prev = 0.0;
            for x in xs {
                let y = f.eval(x).unwrap();
                prop_assert!((0.0..=1.0).contains(&y));
                prop_assert!(y >= prev);
                prev = y;
            }
        }

        #[test]
        fn breakpoints_round_trip(data in prop::collection::vec(-1e3f64..1e3, 2..500)) {
            let f = ApproxCdf::build(&sketch_of(&data, 0.005), 40, "f").unwrap();
            let b = f.breakpoints();
            for i in 0..b.len() {
                let isolated = (i == 0 || b[i] > b[i - 1]) && (i + 1 == b.len() || b[i] < b[i + 1]);
                if isolated {
                    prop_assert!((f.eval(b[i]).unwrap() - f.probabilities()[i]).abs() <= 1e-12);
                }
            }
        }

        #[test]
        fn density_is_translation_equivariant(
            data in prop::collection::vec(-10f64..10.0, 2..300),
            shift in -100f64..100.0,
        ) {
            let shifted: Vec<f64> = data.iter().map(|x| x + shift).collect();
            let f1 = ApproxCdf::build(&sketch_of(&data, 0.01), 30, "f").unwrap();
            let f2 = ApproxCdf::build(&sketch_of(&shifted, 0.01), 30, "f").unwrap();
            let d1 = BinnedDensity::from_cdf(&f1, -12.0, 12.0, 16).unwrap();
            let d2 = BinnedDensity::from_cdf(&f2, -12.0 + shift, 12.0 + shift, 16).unwrap();
            for (a, b) in d1.masses().iter().zip(d2.masses()) {
                prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
            }
        }

        #[test]
        fn close_to_exact_ecdf(seed in 0u64..1000, n in 200usize..3000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let data: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 10.0).collect();
            let eps = 0.001;
            let a = 100usize.min(n);
            let f = ApproxCdf::build(&sketch_of(&data, eps), a, "f").unwrap();
            let mut sorted = data.clone();
            sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
            let bound = 1.0 / a as f64 + 2.0 * eps + 1.0 / n as f64;
            for k in 0..=2000 {
                let x = -0.5 + 11.0 * k as f64 / 2000.0;
                let err = (f.eval(x).unwrap() - exact_ecdf(&sorted, x)).abs();
                prop_assert!(err <= bound, "x={x} err={err} bound={bound}");
            }
        }
    }
}

// Stream values through a quantile sketch and compare with exact quantiles.

use driftwatch::QuantileSketch;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run() -> driftwatch::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let data: Vec<f64> = (0..100_000).map(|_| rng.random::<f64>().powi(3)).collect();

    let mut sketch = QuantileSketch::new(0.001)?;
    sketch.extend(data.iter().copied())?;

    let mut sorted = data.clone();
    sorted.sort_by(f64::total_cmp);
    println!(
        "{} values held in {} tuples (eps = {})",
        sketch.count(),
        sketch.tuple_count(),
        sketch.epsilon()
    );
    println!("{:>6}  {:>10}  {:>10}", "p", "sketch", "exact");
    for p in [0.01, 0.1, 0.25, 0.5, 0.75, 0.9, 0.99] {
        let exact = sorted[((p * sorted.len() as f64).ceil() as usize).max(1) - 1];
        println!("{p:>6}  {:>10.6}  {exact:>10.6}", sketch.query(p)?);
    }
    Ok(())
}

fn main() -> driftwatch::Result<()> {
    run()
}

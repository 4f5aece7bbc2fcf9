// Build an approximate CDF from a sketch, then bin it into a density.

use driftwatch::{ApproxCdf, BinnedDensity, QuantileSketch};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

pub fn run() -> driftwatch::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let exp = Exp::new(1.0).expect("valid rate");
    let mut sketch = QuantileSketch::new(0.001)?;
    sketch.extend((0..50_000).map(|_| exp.sample(&mut rng)))?;

    let cdf = ApproxCdf::build(&sketch, 100, "waiting_time")?;
    println!(
        "{}: n = {}, support [{:.4}, {:.4}], {} breakpoints",
        cdf.label(),
        cdf.sample_count(),
        cdf.min(),
        cdf.max(),
        cdf.breakpoints().len()
    );
    for x in [0.1f64, 0.5, 1.0, 2.0, 4.0] {
        println!("F({x}) = {:.4}   exact {:.4}", cdf.eval(x)?, 1.0 - (-x).exp());
    }

    let density = BinnedDensity::from_cdf(&cdf, 0.0, 5.0, 10)?;
    println!("density over [0, 5] in 10 bins:");
    for (edge, d) in density.bin_edges().iter().zip(density.densities()) {
        println!("  {edge:>4.1}  {d:.3}  {}", "#".repeat((d * 40.0).round() as usize));
    }
    Ok(())
}

fn main() -> driftwatch::Result<()> {
    run()
}

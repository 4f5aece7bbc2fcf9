// Score velocity forecasts with MAE and wMAPE.

use driftwatch::{actual_velocity, coefficient_of_variation, mae, wmape, VelocityPair};

pub fn run() -> driftwatch::Result<()> {
    // Daily sales over the week after the forecast date.
    let weeks = [
        ("store1/sku-a", 2.0, [1.0, 3.0, 2.0, 2.0, 4.0, 1.0, 1.0]),
        ("store1/sku-b", 0.5, [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
        ("store2/sku-a", 1.0, [0.0, 0.0, 7.0, 0.0, 0.0, 0.0, 0.0]),
    ];
    let mut pairs = Vec::new();
    for (unit, predicted, sales) in weeks {
        let actual = actual_velocity(&sales)?;
        println!("{unit:<14} predicted {predicted:.2}  actual {actual:.2}");
        pairs.push(VelocityPair::new(unit, predicted, actual)?);
    }
    println!("MAE   = {:.4} units/day", mae(&pairs)?);
    println!("wMAPE = {:.2} %", wmape(&pairs)?);

    let daily_mae = [0.41, 0.44, 0.39, 0.47, 0.42];
    println!("C_v of daily MAE = {:.4}", coefficient_of_variation(&daily_mae)?);
    Ok(())
}

fn main() -> driftwatch::Result<()> {
    run()
}

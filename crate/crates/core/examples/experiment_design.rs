//! Relative measurement time for a heating-rate measurement as a function of
//! detuning and heated energy.

use recool::estimation::measurement_time_auto;

fn main() -> recool::Result<()> {
    let deltas = [-3f64.sqrt(), -1.0, -1.0 / 3f64.sqrt(), -0.2];
    let means: Vec<f64> = (0..=8).map(|k| 10f64.powf(-1.0 + 0.25 * k as f64)).collect();
    print!("{:>8}", "eps r");
    for d in deltas {
        print!(" {:>11}", format!("d={d:.3}"));
    }
    println!();
    for &m in &means {
        print!("{m:>8.3}");
        for d in deltas {
            print!(" {:>11.4}", measurement_time_auto(d, m, 0.0)?);
        }
        println!();
    }
    let s = 0.9;
    println!("\nat s = {s} every entry is larger by sqrt(1+s) = {:.4}", (1.0f64 + s).sqrt());
    Ok(())
}

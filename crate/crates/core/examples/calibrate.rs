use std::time::Instant;

use pairfx_core::{
    default_dgm1, default_dgm2, generate_covariate_bank, run_monte_carlo, table3_recipes,
    table4_recipes, EstimandSpec, MonteCarloOptions,
};

fn main() {
    let which: u32 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);

    match which {
        3 => {
            let bank = generate_covariate_bank(1000, 101);
            let config = default_dgm1(bank, 7001);
            let options = MonteCarloOptions::new(1000, EstimandSpec::Spillover);
            let t = Instant::now();
            let report = run_monte_carlo(&config, &table3_recipes(), &options).unwrap();
            println!("criterion 3: {:.1}s truth={:.5}", t.elapsed().as_secs_f64(), report.truth);
            for row in &report.rows {
                let band = 3.0 * (row.variance / report.replications as f64).sqrt();
                println!(
                    "  {:<12} bias={:+.5} band={:.5} var={:.5} pass={} failed={}",
                    row.label,
                    row.bias,
                    band,
                    row.variance,
                    row.bias.abs() < band,
                    row.n_failed
                );
            }
        }
        5 => {
            let bank = generate_covariate_bank(1000, 303);
            let config = default_dgm2(bank, 7002);
            let options = MonteCarloOptions::new(2000, EstimandSpec::Spillover);
            let t = Instant::now();
            let report = run_monte_carlo(&config, &table4_recipes()[..2], &options).unwrap();
            println!("criterion 5: {:.1}s", t.elapsed().as_secs_f64());
            let m1 = &report.rows[0];
            let m2 = &report.rows[1];
            println!(
                "  var(m1)={:.6} var(m2)={:.6} ratio={:.4} pass={}",
                m1.variance,
                m2.variance,
                m2.variance / m1.variance,
                m2.variance <= 1.02 * m1.variance
            );
        }
        6 => {
            let bank = generate_covariate_bank(1000, 101);
            let config = default_dgm1(bank, 7001);
            let options = MonteCarloOptions::new(2000, EstimandSpec::Spillover);
            let t = Instant::now();
            let report = run_monte_carlo(&config, &table3_recipes()[..1], &options).unwrap();
            println!("criterion 6: {:.1}s", t.elapsed().as_secs_f64());
            let row = &report.rows[0];
            println!(
                "  mean_if_var={:.6} emp_var={:.6} ratio={:.4} pass={}",
                row.mean_if_variance,
                row.variance,
                row.mean_if_variance / row.variance,
                (0.75..=1.05).contains(&(row.mean_if_variance / row.variance))
            );
        }
        _ => eprintln!("unknown criterion"),
    }
}

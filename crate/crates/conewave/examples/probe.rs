use conewave::bulk::build;
use conewave::scaling::ScalingParams;
use conewave::series::TruncationConfig;

fn main() {
    let p = ScalingParams::new(0.3, 10.0).unwrap();
    let rich = TruncationConfig {
        zero_terms: 36,
        inf_terms: 18,
        mid_cheb: 110,
        ..TruncationConfig::default()
    };
    for (bd, k) in [(6u32, 3u32), (16, 3), (16, 1)] {
        let c = TruncationConfig { b_degree: bd, ..rich.clone() };
        let t = std::time::Instant::now();
        match build(&p, k, &c) {
            Ok(sol) => println!(
                "k={k} b_degree {bd}: ok in {:.1}s, failed memberships {}, max drop {:.2e}, terms {}",
                t.elapsed().as_secs_f64(),
                sol.manifest.memberships.iter().filter(|m| !m.pass).count(),
                sol.manifest
                    .dropped_residuals
                    .iter()
                    .map(|d| d.relative)
                    .fold(0.0f64, f64::max),
                sol.error.terms.len()
            ),
            Err(e) => println!("k={k} b_degree {bd}: error {e}"),
        }
    }
}

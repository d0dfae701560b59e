//! Writes a synthetic confounded cohort as CSV.
//!
//! ```text
//! cargo run -p hazard-iv-core --example synthetic_dataset -- out.csv [n] [seed]
//! ```
//!
//! Columns: `time`, `status`, `x` (treatment), `w` (continuous instrument),
//! `w_binary` (`w` dichotomized at 0), and `q`, a noisy measurement of the
//! hidden confounder. Generated with α_U = 3, α_W = 3, HR = 1.5.

use std::error::Error;

use hazard_iv_core::rng::CounterRng;
use hazard_iv_core::simulation::generate_replicate;
use hazard_iv_core::SimConfig;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn Error>> {
    let mut args = std::env::args().skip(1);
    let out = args.next().ok_or("usage: synthetic_dataset <out.csv> [n] [seed]")?;
    let n: usize = args.next().map_or(Ok(1000), |s| s.parse())?;
    let seed: u64 = args.next().map_or(Ok(20240917), |s| s.parse())?;

    let cfg = SimConfig {
        n,
        alpha_u: 3.0,
        alpha_w: 3.0,
        hr_x: 1.5,
        seed,
        ..SimConfig::default()
    };
    let rep = generate_replicate(&cfg, 0)?;
    let d = &rep.data;
    let w = d.instrument(0)?;
    let noise = Normal::new(0.0, 0.5)?;
    let mut rng = CounterRng::new(seed, &[0x0051]);

    let mut wr = csv::Writer::from_path(&out)?;
    wr.write_record(["time", "status", "x", "w", "w_binary", "q"])?;
    for i in 0..d.n() {
        let q = rep.truth.u[i] + noise.sample(&mut rng);
        wr.write_record([
            format!("{:.6}", d.time()[i]),
            (d.status()[i] as u8).to_string(),
            d.treatment()[i].to_string(),
            format!("{:.6}", w[i]),
            ((w[i] > 0.0) as u8).to_string(),
            format!("{q:.6}"),
        ])?;
    }
    wr.flush()?;
    eprintln!("wrote {n} rows to {out}");
    Ok(())
}

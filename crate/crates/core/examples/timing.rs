//! Times discovery on the synthetic benchmark tables.
//!
//! `cargo run --release --example timing -- sparse 75000 5000 200`
//! `cargo run --release --example timing -- dense 50000 1000 100`

use std::time::Instant;

use slicewise::discovery::{DiscoveryConfig, DiscoveryEngine};
use slicewise::ranking::RankingSpec;
use slicewise::synth::{binary_matrix, sparse_binary};

fn main() -> slicewise::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = args.first().map(String::as_str).unwrap_or("sparse");
    let arg = |i: usize, d: usize| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let (rows, width, n) = (arg(1, 75_000), arg(2, 5_000), arg(3, 200));
    let t = Instant::now();
    let m = match kind {
        "dense" => binary_matrix(rows, width, 1)?,
        _ => sparse_binary(rows, width, 1)?,
    };
    println!("generate {:.2}s", t.elapsed().as_secs_f64());
    let t = Instant::now();
    let engine = DiscoveryEngine::new(m)?;
    println!("index {:.2}s", t.elapsed().as_secs_f64());
    let mut c = DiscoveryConfig::new(vec![RankingSpec::<f64>::rate_high("y")]);
    c.n_samples = n;
    let t = Instant::now();
    let res = engine.discover(&c)?;
    println!(
        "discover {:.2}s, {} results",
        t.elapsed().as_secs_f64(),
        res.len()
    );
    if let Some(r) = res.first() {
        println!("top: {} ({} rows)", r.rule, r.size.evaluation);
    }
    Ok(())
}

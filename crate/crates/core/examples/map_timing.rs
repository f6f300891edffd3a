//! Times embedding and layout on a planted table.
//!
//! `cargo run --release --example map_timing -- 100000 12`

use std::time::Instant;

use slicewise::map::{build_layout, embed, MapOptions};
use slicewise::synth::{planted_table, PlantedGroup, PlantedTable};

fn main() -> slicewise::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let rows = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(100_000);
    let width = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(12);
    let groups = vec![
        PlantedGroup {
            length: 2,
            size: 0.1,
            rate: 0.8,
        },
        PlantedGroup {
            length: 1,
            size: 0.15,
            rate: 0.6,
        },
    ];
    let (m, planted) = planted_table(&PlantedTable::new(rows, width, groups, 1))?;
    let t = Instant::now();
    let e = embed(&m, 1)?;
    let t_embed = t.elapsed();
    let t = Instant::now();
    let layout = build_layout(&m, &e, "y", &planted, &MapOptions::default())?;
    println!(
        "rows={rows} width={width} embed={:.2}s layout={:.2}s bubbles={}",
        t_embed.as_secs_f64(),
        t.elapsed().as_secs_f64(),
        layout.bubbles.len()
    );
    Ok(())
}

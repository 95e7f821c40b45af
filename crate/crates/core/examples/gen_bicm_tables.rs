//! Regenerates the shipped BICM capacity tables in `data/`.

use std::fs;
use std::path::Path;

use ffmimo::link::esm::generate_capacity_table;

fn main() -> std::io::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    for (order, name) in [(2, "qpsk"), (4, "16qam"), (6, "64qam"), (8, "256qam")] {
        let mut out = String::from("snr_db,bits\n");
        for (db, bits) in generate_capacity_table(order) {
            out.push_str(&format!("{db},{bits:.17e}\n"));
        }
        fs::write(dir.join(format!("bicm_{name}.csv")), out)?;
    }
    Ok(())
}

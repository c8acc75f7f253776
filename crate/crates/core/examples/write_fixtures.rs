//! Writes `n` synthetic part models as JSON into a directory.
//!
//! `cargo run -p spcc-core --example write_fixtures -- <dir> [n] [seed]`

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures".into()));
    let n = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    std::fs::create_dir_all(&dir)?;
    for m in spcc_core::fixtures::synthetic_corpus(n, seed) {
        std::fs::write(dir.join(format!("{}.json", m.id)), m.to_json())?;
    }
    Ok(())
}

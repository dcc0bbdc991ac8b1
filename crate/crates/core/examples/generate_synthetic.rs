//! Regenerates `data/synthetic_ami.csv` and its metadata.
//!
//!     cargo run -p predvoi --example generate_synthetic

use std::path::PathBuf;

use predvoi::data::{count_events, save_csv};
use predvoi::synthetic::{bundled_ami, AMI_OUTCOME, BUNDLED_N, BUNDLED_SEED};

fn main() -> predvoi::Result<()> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data");
    std::fs::create_dir_all(&dir)?;
    let ds = bundled_ami();
    save_csv(&ds, dir.join("synthetic_ami.csv"))?;
    let meta = serde_json::json!({
        "generator": "predvoi::synthetic::generate_ami_like",
        "seed": BUNDLED_SEED,
        "n": BUNDLED_N,
        "outcome": AMI_OUTCOME,
        "events": count_events(&ds),
        "transform": predvoi::synthetic::ami_transform(),
    });
    std::fs::write(
        dir.join("synthetic_ami.meta.json"),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    println!("wrote {} rows with {} events", ds.n(), count_events(&ds));
    Ok(())
}

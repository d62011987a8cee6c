//! Regenerate the checked-in behaviour document under `assets/twins/`.
//!
//! Run from the repository root:
//!
//! ```text
//! cargo run -p twin-trust --example gen_assets
//! ```

use std::fs;
use std::path::Path;

use twin_trust::dt_model::{canonical_twin, serialize_twin};
use twin_trust::DroneId;

fn main() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let dir = root.join("assets/twins");
    fs::create_dir_all(&dir).expect("create assets/twins");
    let path = dir.join("canonical_alpha.json");
    fs::write(&path, serialize_twin(&canonical_twin(DroneId::new("alpha"))))
        .expect("write twin file");
    println!("wrote {}", path.display());
}

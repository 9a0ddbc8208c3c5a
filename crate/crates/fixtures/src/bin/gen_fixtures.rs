//! Regenerate the committed fixture directory.

use std::path::PathBuf;

fn main() -> std::io::Result<()> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(axe_fixtures::fixtures_dir);
    for f in axe_fixtures::all() {
        let manifest = f.write(&root)?;
        println!("{}", manifest.display());
    }
    Ok(())
}

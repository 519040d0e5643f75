use std::path::PathBuf;

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(deltashell_oracles::reference::REFERENCE_PATH)
    });
    let file = match deltashell_oracles::reference::compute_reference() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("oracle computation failed: {e}");
            std::process::exit(1);
        }
    };
    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir).expect("create reference directory");
    }
    let text = serde_json::to_string_pretty(&file).expect("reference serializes");
    std::fs::write(&out, text + "\n").expect("write reference file");
    println!("wrote {} entries to {}", file.entries.len(), out.display());
}

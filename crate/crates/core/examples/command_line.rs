// The `lungseg` command driven in-process: write phantoms, segment one,
// score it.

use std::path::PathBuf;

use lungseg::cli::run_with;

/// Returns the exit codes of the three commands and the output directory.
pub fn run_example() -> ([i32; 3], PathBuf) {
    let dir = std::env::temp_dir().join(format!("lungseg_cli_{}", std::process::id()));
    let d = |p: &str| dir.join(p).display().to_string();
    let phantom = run_with([
        "lungseg",
        "phantom",
        "--n",
        "5",
        "--seed",
        "1",
        "--size",
        "192",
        "--out",
        &d("suite"),
    ]);
    let segment = run_with([
        "lungseg",
        "segment",
        &d("suite/sample_000_image.png"),
        "--method",
        "fcm",
        "--correction",
        "amf",
        "--out",
        &d("run"),
    ]);
    let eval = run_with([
        "lungseg",
        "eval",
        &d("run/mask.png"),
        &d("suite/sample_000_truth.png"),
    ]);
    println!("exit codes: phantom {phantom}, segment {segment}, eval {eval}");
    ([phantom, segment, eval], dir)
}

fn main() {
    run_example();
}

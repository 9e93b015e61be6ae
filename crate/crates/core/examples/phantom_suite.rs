// Seeded synthetic slices with exact ground truth, written to disk.

use std::path::PathBuf;

use lungseg::io::{save_gray, save_mask};
use lungseg::phantom::{default_suite_sized, suite_composition};

/// Writes a ten-sample suite under the temp directory; returns the category
/// counts and the output directory.
pub fn run_example() -> lungseg::Result<([usize; 4], PathBuf)> {
    let n = 10;
    let suite = default_suite_sized(n, 7, 192)?;
    let dir = std::env::temp_dir().join(format!("lungseg_phantoms_{}", std::process::id()));
    let mut counts = [0; 4];
    for s in &suite {
        counts[s.category as usize] += 1;
        save_gray(&s.image, dir.join(format!("sample_{:03}_image.png", s.id)))?;
        save_mask(&s.truth, dir.join(format!("sample_{:03}_truth.png", s.id)))?;
        println!(
            "{:3} {:<14} noise {:>4.1}  nodules {}  vessels {}",
            s.id,
            s.category.name(),
            s.spec.noise_sigma,
            s.spec.nodules.len(),
            s.spec.vessels.len()
        );
    }
    assert_eq!(counts, suite_composition(n));
    println!("wrote {} samples to {}", suite.len(), dir.display());
    Ok((counts, dir))
}

fn main() -> lungseg::Result<()> {
    run_example().map(|_| ())
}

// Otsu thresholding pipeline on a synthetic slice.
//
// Run with `cargo run --release --example threshold_pipeline`.

use lungseg::metrics::evaluate;
use lungseg::morph::BorderCorrection;
use lungseg::phantom::{default_suite_sized, Category};
use lungseg::threshold::threshold_segment;

/// Segments a juxta-pleural phantom with and without AMF; returns the DSC of
/// both masks against ground truth.
pub fn run_example() -> lungseg::Result<(f64, f64)> {
    let suite = default_suite_sized(5, 11, 256)?;
    let sample = suite
        .iter()
        .find(|s| s.category == Category::JuxtaPleural)
        .expect("suite has juxta-pleural samples");

    let plain = threshold_segment(&sample.image, &BorderCorrection::None)?;
    let amf = threshold_segment(&sample.image, &BorderCorrection::amf())?;
    println!("Otsu threshold: {}", amf.threshold);
    for stage in &amf.stages {
        println!("  stage {}", stage.name);
    }
    let a = evaluate(&plain.mask, &sample.truth)?;
    let b = evaluate(&amf.mask, &sample.truth)?;
    println!("no correction: DSC {:.4}  HD {:?}", a.dsc, a.hausdorff);
    println!("AMF:           DSC {:.4}  HD {:?}", b.dsc, b.hausdorff);
    Ok((a.dsc, b.dsc))
}

fn main() -> lungseg::Result<()> {
    run_example().map(|_| ())
}

// Fuzzy c-means clustering of intensities and the FCM lung pipeline.

use lungseg::fcm::{fcm_cluster, fcm_segment};
use lungseg::metrics::evaluate;
use lungseg::morph::BorderCorrection;
use lungseg::phantom::default_suite_sized;

/// Clusters a toy sample, then segments a phantom. Returns the toy centers
/// and the phantom DSC.
pub fn run_example() -> lungseg::Result<(Vec<f64>, f64)> {
    let values = [10.0, 12.0, 11.0, 200.0, 198.0, 205.0, 13.0];
    let state = fcm_cluster(&values, 2, 2.0, 1e-6, 300, 42)?;
    println!(
        "centers {:?} after {} iterations",
        state.centers, state.iterations
    );
    for (i, v) in values.iter().enumerate() {
        println!("  {v:>5}: memberships {:?}", state.membership(i));
    }

    let suite = default_suite_sized(5, 3, 256)?;
    let sample = &suite[0];
    let r = fcm_segment(&sample.image, &BorderCorrection::amf(), 7)?;
    let ev = evaluate(&r.mask, &sample.truth)?;
    println!(
        "{} phantom: centers {:.1?}, DSC {:.4}",
        sample.category.name(),
        r.centers,
        ev.dsc
    );
    Ok((state.centers, ev.dsc))
}

fn main() -> lungseg::Result<()> {
    run_example().map(|_| ())
}

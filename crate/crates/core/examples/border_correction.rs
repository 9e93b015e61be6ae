// Border corrections compared on a juxta-pleural nodule.
//
// The uncorrected mask cuts the nodule out of the lung. AMF closes the
// indentation, the rolling ball closes every concavity up to its radius,
// and the GMM band correction relabels a strip along the border.

use lungseg::morph::{boundary_trace, local_concavity_depth, BorderCorrection};
use lungseg::phantom::{default_suite_sized, Category, NoduleKind};
use lungseg::pipeline::{candidate, finish, Method, PipelineConfig};

/// Returns `(correction, share of the nodule footprint inside the mask)`.
pub fn run_example() -> lungseg::Result<Vec<(String, f64)>> {
    let suite = default_suite_sized(5, 21, 512)?;
    let sample = suite
        .iter()
        .find(|s| s.category == Category::JuxtaPleural)
        .expect("suite has juxta-pleural samples");
    let k = sample
        .spec
        .nodules
        .iter()
        .position(|n| n.kind == NoduleKind::JuxtaPleural)
        .expect("juxta-pleural nodule");
    let footprint = &sample.nodule_footprints[k];

    let (cand, _) = candidate(&sample.image, Method::Threshold, &PipelineConfig::default())?;
    let contours = boundary_trace(&cand.mask)?;
    let deepest = contours
        .iter()
        .flat_map(|c| (0..c.len()).map(move |i| local_concavity_depth(c, i, 10)))
        .collect::<lungseg::Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    println!("deepest indentation on the candidate border: {deepest:.2} px");

    let mut out = Vec::new();
    for c in [
        BorderCorrection::None,
        BorderCorrection::amf(),
        BorderCorrection::rolling_ball(),
        BorderCorrection::gmm(),
    ] {
        let mask = finish(&sample.image, &cand, &c)?.mask;
        let share = footprint.intersection(&mask)?.count() as f64 / footprint.count() as f64;
        println!("{:<13} nodule inclusion {:5.1}%", c.name(), 100.0 * share);
        out.push((c.name().to_string(), share));
    }
    Ok(out)
}

fn main() -> lungseg::Result<()> {
    run_example().map(|_| ())
}

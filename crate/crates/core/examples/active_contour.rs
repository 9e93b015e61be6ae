// Two-phase Chan-Vese level set: a dark disk, then a full lung slice.

use lungseg::acm::{acm_segment, chan_vese_run, dark_phase, init_region, AcmParams};
use lungseg::imgcore::{BinaryMask, GrayImage};
use lungseg::metrics::{confusion_counts, dsc, evaluate};
use lungseg::morph::BorderCorrection;
use lungseg::phantom::default_suite_sized;

pub struct ContourSummary {
    pub disk_dsc: f64,
    /// Energy before the first iteration and after each one.
    pub energy: Vec<f64>,
    pub slice_dsc: f64,
}

pub fn run_example() -> lungseg::Result<ContourSummary> {
    let inside = |x: usize, y: usize| {
        let (dx, dy) = (x as f64 - 90.0, y as f64 - 80.0);
        dx * dx + dy * dy <= 40.0 * 40.0
    };
    let img = GrayImage::from_fn(160, 160, |x, y| if inside(x, y) { 40.0 } else { 200.0 })?;
    let truth = BinaryMask::from_fn(160, 160, inside);

    let run = chan_vese_run(&img, &init_region(&img)?, &AcmParams::default())?;
    let dark = dark_phase(&img, &run.phi)?;
    let disk_dsc = dsc(&confusion_counts(&dark, &truth)?);
    println!(
        "disk: {} iterations, energy {:.3e} -> {:.3e}, DSC {disk_dsc:.4}",
        run.iterations,
        run.energy[0],
        run.energy[run.energy.len() - 1]
    );

    let suite = default_suite_sized(5, 5, 256)?;
    let r = acm_segment(&suite[1].image, &BorderCorrection::amf())?;
    let slice_dsc = evaluate(&r.mask, &suite[1].truth)?.dsc;
    println!("slice: {} iterations, DSC {slice_dsc:.4}", r.iterations);
    Ok(ContourSummary {
        disk_dsc,
        energy: run.energy,
        slice_dsc,
    })
}

fn main() -> lungseg::Result<()> {
    run_example().map(|_| ())
}

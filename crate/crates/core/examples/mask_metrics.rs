// Overlap and boundary metrics between two masks.

use lungseg::imgcore::BinaryMask;
use lungseg::metrics::{evaluate, Evaluation};

pub fn run_example() -> lungseg::Result<Evaluation> {
    let truth = BinaryMask::from_fn(32, 32, |x, y| (8..24).contains(&x) && (8..24).contains(&y));
    // Shifted two pixels right, with one stray pixel.
    let pred = BinaryMask::from_fn(32, 32, |x, y| {
        ((10..26).contains(&x) && (8..24).contains(&y)) || (x, y) == (2, 2)
    });
    let ev = evaluate(&pred, &truth)?;
    println!("counts          {:?}", ev.counts);
    println!("DSC             {:.4}", ev.dsc);
    println!("recall          {:?}", ev.recall);
    println!("tp / (tp + fp)  {:?}", ev.sensitivity_eq4);
    println!("specificity     {:?}", ev.specificity);
    println!("Hausdorff (px)  {:?}", ev.hausdorff);
    Ok(ev)
}

fn main() -> lungseg::Result<()> {
    run_example().map(|_| ())
}

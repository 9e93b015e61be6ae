// Method x correction grid on a small phantom suite.

use lungseg::bench::{run_bench, BenchReport, BenchSample};
use lungseg::morph::BorderCorrection;
use lungseg::phantom::default_suite_sized;
use lungseg::pipeline::{Method, PipelineConfig};

pub fn run_example() -> lungseg::Result<BenchReport> {
    let samples: Vec<BenchSample> = default_suite_sized(6, 7, 192)?
        .into_iter()
        .map(BenchSample::from)
        .collect();
    let report = run_bench(
        &samples,
        &Method::ALL,
        &[
            BorderCorrection::None,
            BorderCorrection::amf(),
            BorderCorrection::rolling_ball(),
        ],
        &PipelineConfig::default(),
        2,
    )?;
    print!("{}", report.to_csv()?);
    Ok(report)
}

fn main() -> lungseg::Result<()> {
    run_example().map(|_| ())
}

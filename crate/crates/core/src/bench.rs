//! Method × correction benchmark grid over a set of labelled slices.
//!
//! Samples are processed in parallel, one worker per sample, and each
//! method's candidate mask is computed once and shared by all corrections.
//! Rows come back in sample order, so the reports do not depend on the
//! number of workers.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imgcore::{BinaryMask, GrayImage};
use crate::metrics::evaluate;
use crate::morph::BorderCorrection;
use crate::phantom::{NoduleKind, PhantomSample};
use crate::pipeline::{candidate, finish, Method, PipelineConfig};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "LUNGSEG_WORKERS";

/// Fraction of grid runs that must succeed for the bench to count as passed.
pub const MIN_SUCCESS_RATE: f64 = 0.9;

/// Worker count from [`WORKERS_ENV`], else the available parallelism.
pub fn workers_from_env() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::InvalidParameter(format!(
                "{WORKERS_ENV} must be a positive integer, got '{v}'"
            ))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// One labelled slice.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSample {
    pub id: usize,
    pub category: String,
    pub image: GrayImage,
    pub truth: BinaryMask,
    /// Footprints of juxta-pleural nodules, if known.
    pub juxta_footprints: Vec<BinaryMask>,
}

impl From<PhantomSample> for BenchSample {
    fn from(s: PhantomSample) -> Self {
        let juxta_footprints = s
            .spec
            .nodules
            .iter()
            .zip(s.nodule_footprints)
            .filter(|(n, _)| n.kind == NoduleKind::JuxtaPleural)
            .map(|(_, f)| f)
            .collect();
        BenchSample {
            id: s.id,
            category: s.category.name().to_string(),
            image: s.image,
            truth: s.truth,
            juxta_footprints,
        }
    }
}

/// Metrics of one (sample, method, correction) run. On failure every metric
/// is empty and `error` holds the message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub sample: usize,
    pub category: String,
    pub method: Method,
    pub correction: String,
    pub dsc: Option<f64>,
    pub hausdorff_px: Option<f64>,
    pub recall: Option<f64>,
    pub sensitivity_eq4: Option<f64>,
    pub specificity: Option<f64>,
    /// Share of each juxta-pleural footprint inside the mask.
    pub juxta_inclusion: Vec<f64>,
    pub error: Option<String>,
}

impl BenchRow {
    pub fn succeeded(&self) -> bool {
        self.error.is_none()
    }
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// `None` for an empty list. The deviation of a single value is 0.
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Stat { mean, std })
    }
}

/// Aggregate of one grid cell. DSC is in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchCell {
    pub method: Method,
    pub correction: String,
    pub samples: usize,
    pub failed: usize,
    pub hd: Option<Stat>,
    pub dsc_pct: Option<Stat>,
    pub recall: Option<Stat>,
    pub sensitivity_eq4: Option<Stat>,
    pub specificity: Option<Stat>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub cells: Vec<BenchCell>,
}

impl BenchReport {
    pub fn success_rate(&self) -> f64 {
        if self.rows.is_empty() {
            return 0.0;
        }
        self.rows.iter().filter(|r| r.succeeded()).count() as f64 / self.rows.len() as f64
    }

    pub fn passed(&self) -> bool {
        self.success_rate() >= MIN_SUCCESS_RATE
    }

    /// Cell of a method and correction name.
    pub fn cell(&self, method: Method, correction: &str) -> Option<&BenchCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.correction == correction)
    }

    pub const CSV_HEADER: [&'static str; 14] = [
        "method",
        "correction",
        "samples",
        "failed",
        "hd_mean",
        "hd_std",
        "dsc_pct_mean",
        "dsc_pct_std",
        "recall_mean",
        "recall_std",
        "sensitivity_eq4_mean",
        "sensitivity_eq4_std",
        "specificity_mean",
        "specificity_std",
    ];

    /// One line per cell; statistics to four decimals, blank when undefined.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| Error::InvalidData(format!("csv: {e}"));
        w.write_record(Self::CSV_HEADER).map_err(csv_err)?;
        for c in &self.cells {
            let mut rec = vec![
                c.method.name().to_string(),
                c.correction.clone(),
                c.samples.to_string(),
                c.failed.to_string(),
            ];
            for s in [c.hd, c.dsc_pct, c.recall, c.sensitivity_eq4, c.specificity] {
                match s {
                    Some(s) => {
                        rec.push(format!("{:.4}", s.mean));
                        rec.push(format!("{:.4}", s.std));
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()
            .map_err(|e| Error::InvalidData(format!("csv: {e}")))?;
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::InvalidData(e.to_string()))
    }

    /// Per-run rows, pretty-printed.
    pub fn rows_json(&self) -> String {
        serde_json::to_string_pretty(&self.rows).expect("rows serialize")
    }
}

/// Cells in method-then-correction order from a row list.
pub fn aggregate(
    rows: &[BenchRow],
    methods: &[Method],
    corrections: &[BorderCorrection],
) -> Vec<BenchCell> {
    let mut cells = Vec::new();
    for &m in methods {
        for c in corrections {
            let name = c.name();
            let cell_rows: Vec<&BenchRow> = rows
                .iter()
                .filter(|r| r.method == m && r.correction == name)
                .collect();
            let ok: Vec<&&BenchRow> = cell_rows.iter().filter(|r| r.succeeded()).collect();
            let pick = |f: &dyn Fn(&BenchRow) -> Option<f64>| {
                Stat::of(&ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>())
            };
            cells.push(BenchCell {
                method: m,
                correction: name.to_string(),
                samples: cell_rows.len(),
                failed: cell_rows.len() - ok.len(),
                hd: pick(&|r| r.hausdorff_px),
                dsc_pct: pick(&|r| r.dsc.map(|d| 100.0 * d)),
                recall: pick(&|r| r.recall),
                sensitivity_eq4: pick(&|r| r.sensitivity_eq4),
                specificity: pick(&|r| r.specificity),
            });
        }
    }
    cells
}

fn failed_row(s: &BenchSample, m: Method, c: &BorderCorrection, e: &Error) -> BenchRow {
    BenchRow {
        sample: s.id,
        category: s.category.clone(),
        method: m,
        correction: c.name().to_string(),
        dsc: None,
        hausdorff_px: None,
        recall: None,
        sensitivity_eq4: None,
        specificity: None,
        juxta_inclusion: Vec::new(),
        error: Some(e.to_string()),
    }
}

fn run_sample(
    s: &BenchSample,
    methods: &[Method],
    corrections: &[BorderCorrection],
    config: &PipelineConfig,
) -> Vec<BenchRow> {
    let mut rows = Vec::with_capacity(methods.len() * corrections.len());
    for &m in methods {
        let cand = candidate(&s.image, m, config);
        for c in corrections {
            let result = cand.as_ref().map_err(clone_err).and_then(|(cand, _)| {
                let done = finish(&s.image, cand, c)?;
                let ev = evaluate(&done.mask, &s.truth)?;
                let inclusion = s
                    .juxta_footprints
                    .iter()
                    .map(|f| {
                        let inside = f.intersection(&done.mask)?.count();
                        Ok(inside as f64 / f.count().max(1) as f64)
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((ev, inclusion))
            });
            rows.push(match result {
                Ok((ev, juxta_inclusion)) => BenchRow {
                    sample: s.id,
                    category: s.category.clone(),
                    method: m,
                    correction: c.name().to_string(),
                    dsc: Some(ev.dsc),
                    hausdorff_px: ev.hausdorff,
                    recall: ev.recall,
                    sensitivity_eq4: ev.sensitivity_eq4,
                    specificity: ev.specificity,
                    juxta_inclusion,
                    error: None,
                },
                Err(e) => failed_row(s, m, c, &e),
            });
        }
    }
    rows
}

// Errors carry io sources that are not Clone; rows only need the message.
fn clone_err(e: &Error) -> Error {
    Error::InvalidData(e.to_string())
}

/// Runs every method and correction on every sample using `workers` threads.
pub fn run_bench(
    samples: &[BenchSample],
    methods: &[Method],
    corrections: &[BorderCorrection],
    config: &PipelineConfig,
    workers: usize,
) -> Result<BenchReport> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter(
            "bench needs at least one sample".into(),
        ));
    }
    if methods.is_empty() || corrections.is_empty() {
        return Err(Error::InvalidParameter(
            "bench needs at least one method and one correction".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let mut per_sample: Vec<(usize, Vec<BenchRow>)> = pool.install(|| {
        samples
            .par_iter()
            .map(|s| (s.id, run_sample(s, methods, corrections, config)))
            .collect()
    });
    per_sample.sort_by_key(|(id, _)| *id);
    let rows: Vec<BenchRow> = per_sample.into_iter().flat_map(|(_, r)| r).collect();
    let cells = aggregate(&rows, methods, corrections);
    Ok(BenchReport { rows, cells })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::default_suite_sized;

    fn small_suite() -> Vec<BenchSample> {
        default_suite_sized(5, 3, 128)
            .unwrap()
            .into_iter()
            .map(BenchSample::from)
            .collect()
    }

    #[test]
    fn stat_of_values() {
        assert_eq!(Stat::of(&[]), None);
        assert_eq!(
            Stat::of(&[2.0]),
            Some(Stat {
                mean: 2.0,
                std: 0.0
            })
        );
        let s = Stat::of(&[1.0, 3.0]).unwrap();
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn worker_count_does_not_change_rows() {
        let suite = small_suite();
        let cfg = PipelineConfig::default();
        let corr = [BorderCorrection::None, BorderCorrection::amf()];
        let methods = [Method::Threshold, Method::Fcm];
        let a = run_bench(&suite, &methods, &corr, &cfg, 1).unwrap();
        let b = run_bench(&suite, &methods, &corr, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 5 * 4);
        assert_eq!(a.cells.len(), 4);
        assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    }

    #[test]
    fn single_cell_report() {
        let suite = small_suite();
        let r = run_bench(
            &suite[..1],
            &[Method::Threshold],
            &[BorderCorrection::None],
            &PipelineConfig::default(),
            1,
        )
        .unwrap();
        assert_eq!(r.cells.len(), 1);
        assert_eq!(r.cells[0].samples, 1);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.starts_with("method,correction,samples,failed,hd_mean"));
    }

    #[test]
    fn failures_become_rows() {
        let mut suite = small_suite();
        suite.truncate(1);
        suite[0].image = GrayImage::filled(64, 64, 0.0).unwrap();
        suite[0].truth = BinaryMask::filled(64, 64, false);
        let r = run_bench(
            &suite,
            &[Method::Threshold],
            &[BorderCorrection::None],
            &PipelineConfig::default(),
            1,
        )
        .unwrap();
        assert!(r.rows[0].error.is_some());
        assert!(!r.passed());
        assert_eq!(r.cells[0].failed, 1);
        assert_eq!(r.cells[0].dsc_pct, None);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let cfg = PipelineConfig::default();
        assert!(run_bench(&[], &[Method::Fcm], &[BorderCorrection::None], &cfg, 1).is_err());
        let suite = small_suite();
        assert!(run_bench(&suite, &[], &[BorderCorrection::None], &cfg, 1).is_err());
    }
}

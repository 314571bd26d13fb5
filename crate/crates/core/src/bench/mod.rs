//! Dataset evaluation: run estimators over a manifest, write per-image and
//! summary CSVs, and sweep parameter grids.
//!
//! Work is parallel over images; every image runs all estimators so each
//! file is decoded once. Results are merged back in manifest order, so the
//! CSV output is byte-identical for any degree of parallelism.

mod synth;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{estimate, EstimatorSpec, Illuminant, Method};
use crate::error::{Error, Result};
use crate::imgio::{load_image, load_manifest, Image, ManifestEntry};
use crate::metrics::{recovery_error, reproduction_error, summarize, ErrorStats};
use crate::pooling::PoolingSpec;

pub use synth::{generate_synthetic, write_corpus, ChromaticityRange, SyntheticSceneSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub manifest_path: PathBuf,
    pub estimators: Vec<EstimatorSpec>,
    /// Detail CSV; the summary goes next to it as `<stem>_summary.csv`.
    #[serde(default)]
    pub output_path: PathBuf,
    #[serde(default = "one")]
    pub parallelism: usize,
    /// Recorded for reproducibility; estimation itself is deterministic.
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.estimators.is_empty() {
            return Err(Error::config("run config lists no estimators"));
        }
        if self.parallelism < 1 {
            return Err(Error::config("parallelism must be >= 1"));
        }
        if self.manifest_path.as_os_str().is_empty() {
            return Err(Error::config("no manifest path given"));
        }
        if self.output_path.as_os_str().is_empty() {
            return Err(Error::config("no output path given"));
        }
        self.estimators.iter().try_for_each(EstimatorSpec::validate)
    }
}

/// Parameter grid for a sweep. Methods without a free sigma or k ignore
/// those axes; Grey-World also ignores the pooling axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub sigmas: Vec<f64>,
    #[serde(default)]
    pub ks: Vec<f64>,
    pub methods: Vec<Method>,
    pub poolings: Vec<PoolingSpec>,
}

impl SweepGrid {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.poolings.is_empty() || self.sigmas.is_empty() {
            return Err(Error::config("sweep grid needs non-empty methods, poolings and sigmas"));
        }
        if self.ks.is_empty() && self.methods.iter().any(Method::needs_k) {
            return Err(Error::config("double_opponency in a sweep needs at least one k"));
        }
        self.estimators().iter().try_for_each(EstimatorSpec::validate)
    }

    /// Expands the grid in method, sigma, k, pooling order.
    pub fn estimators(&self) -> Vec<EstimatorSpec> {
        let mut out = Vec::new();
        for &m in &self.methods {
            if m == Method::GreyWorld {
                out.push(EstimatorSpec::new(m, PoolingSpec::Minkowski { p: 1.0 }));
                continue;
            }
            let sigmas: Vec<Option<f64>> = if m.needs_sigma() {
                self.sigmas.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            let ks: Vec<Option<f64>> = if m.needs_k() {
                self.ks.iter().copied().map(Some).collect()
            } else {
                vec![None]
            };
            for &sigma in &sigmas {
                for &k in &ks {
                    for &p in &self.poolings {
                        out.push(EstimatorSpec {
                            method: m,
                            sigma,
                            k_surround: k,
                            pooling: Some(p),
                        });
                    }
                }
            }
        }
        out
    }
}

/// An in-memory test scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub name: String,
    pub image: Image,
    pub truth: Illuminant,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetailRow {
    pub image: String,
    pub estimator: usize,
    pub x_percent: Option<[f64; 3]>,
    pub estimate: Illuminant,
    pub recovery_deg: f64,
    pub reproduction_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub image: String,
    pub estimator: usize,
    pub reason: String,
}

/// Recovery-error statistics of one estimator; `stats` is `None` when every
/// image failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub spec: EstimatorSpec,
    pub stats: Option<ErrorStats>,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub estimators: Vec<EstimatorSpec>,
    pub details: Vec<DetailRow>,
    pub failures: Vec<Failure>,
    pub summaries: Vec<SummaryRow>,
}

impl BenchReport {
    pub fn summary(&self, spec: &EstimatorSpec) -> Option<&SummaryRow> {
        self.summaries.iter().find(|s| s.spec == *spec)
    }

    /// Per-image recovery errors of one estimator, in scene order.
    pub fn recovery_errors(&self, estimator: usize) -> Vec<f64> {
        self.details
            .iter()
            .filter(|d| d.estimator == estimator)
            .map(|d| d.recovery_deg)
            .collect()
    }
}

enum Outcome {
    Done(DetailRow),
    Failed(Failure),
}

fn evaluate_one(name: &str, img: &Image, truth: &Illuminant, estimators: &[EstimatorSpec]) -> Vec<Outcome> {
    estimators
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let scored = estimate(img, spec).and_then(|est| {
                let e = est.illuminant.as_array();
                Ok(DetailRow {
                    image: name.to_string(),
                    estimator: j,
                    x_percent: est.pool.x_percent(),
                    estimate: est.illuminant,
                    recovery_deg: recovery_error(e, truth.as_array())?,
                    reproduction_deg: reproduction_error(e, truth.as_array())?,
                })
            });
            match scored {
                Ok(row) => Outcome::Done(row),
                Err(err) => {
                    log::warn!("{name}: {} {} failed: {err}", spec.method, spec.pooling_label());
                    Outcome::Failed(Failure {
                        image: name.to_string(),
                        estimator: j,
                        reason: err.to_string(),
                    })
                }
            }
        })
        .collect()
}

fn run_parallel<F>(n: usize, estimators: &[EstimatorSpec], parallelism: usize, load: F) -> Result<BenchReport>
where
    F: Fn(usize) -> Result<(String, Image, Illuminant)> + Sync,
{
    if estimators.is_empty() {
        return Err(Error::config("no estimators to run"));
    }
    estimators.iter().try_for_each(EstimatorSpec::validate)?;
    if parallelism < 1 {
        return Err(Error::config("parallelism must be >= 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    let per_image: Vec<Vec<Outcome>> = pool.install(|| {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let (name, img, truth) = load(i)?;
                Ok(evaluate_one(&name, &img, &truth, estimators))
            })
            .collect::<Result<_>>()
    })?;

    let mut details = Vec::new();
    let mut failures = Vec::new();
    for outcome in per_image.into_iter().flatten() {
        match outcome {
            Outcome::Done(d) => details.push(d),
            Outcome::Failed(f) => failures.push(f),
        }
    }
    let summaries = estimators
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let errs: Vec<f64> = details
                .iter()
                .filter(|d| d.estimator == j)
                .map(|d| d.recovery_deg)
                .collect();
            Ok(SummaryRow {
                spec: *spec,
                stats: if errs.is_empty() { None } else { Some(summarize(&errs)?) },
                n_failed: failures.iter().filter(|f| f.estimator == j).count(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(BenchReport {
        estimators: estimators.to_vec(),
        details,
        failures,
        summaries,
    })
}

/// Evaluates estimators on in-memory scenes.
pub fn evaluate_scenes(scenes: &[Scene], estimators: &[EstimatorSpec], parallelism: usize) -> Result<BenchReport> {
    run_parallel(scenes.len(), estimators, parallelism, |i| {
        let s = &scenes[i];
        Ok((s.name.clone(), s.image.clone(), s.truth))
    })
}

/// Evaluates estimators on manifest entries, loading each image on demand.
pub fn evaluate_manifest(
    entries: &[ManifestEntry],
    estimators: &[EstimatorSpec],
    parallelism: usize,
) -> Result<BenchReport> {
    run_parallel(entries.len(), estimators, parallelism, |i| {
        let e = &entries[i];
        let img = load_image(&e.image_path, &e.preprocess_spec())?;
        Ok((e.image_path.display().to_string(), img, e.ground_truth))
    })
}

/// `dir/name.csv` becomes `dir/name<suffix>.csv`.
pub fn sibling_path(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| format!(".{}", e.to_string_lossy())).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}{ext}"))
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn finish_csv(mut w: csv::Writer<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_detail_csv(report: &BenchReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "image",
        "method",
        "pooling",
        "sigma",
        "k",
        "x_r",
        "x_g",
        "x_b",
        "est_r",
        "est_g",
        "est_b",
        "recovery_deg",
        "reproduction_deg",
    ])?;
    for d in &report.details {
        let spec = &report.estimators[d.estimator];
        let x = d.x_percent.map_or([None; 3], |x| x.map(Some));
        let e = d.estimate.as_array();
        w.write_record([
            d.image.clone(),
            spec.method.to_string(),
            spec.pooling_label(),
            opt(spec.sigma),
            opt(spec.k_surround),
            opt(x[0]),
            opt(x[1]),
            opt(x[2]),
            e[0].to_string(),
            e[1].to_string(),
            e[2].to_string(),
            d.recovery_deg.to_string(),
            d.reproduction_deg.to_string(),
        ])?;
    }
    finish_csv(w, path)
}

pub fn write_summary_csv(report: &BenchReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "method", "pooling", "sigma", "k", "n", "mean", "median", "trimean", "best25", "worst25", "n_failed",
    ])?;
    for s in &report.summaries {
        let st = s.stats;
        w.write_record([
            s.spec.method.to_string(),
            s.spec.pooling_label(),
            opt(s.spec.sigma),
            opt(s.spec.k_surround),
            st.map_or(0, |t| t.n).to_string(),
            opt(st.map(|t| t.mean)),
            opt(st.map(|t| t.median)),
            opt(st.map(|t| t.trimean)),
            opt(st.map(|t| t.best25)),
            opt(st.map(|t| t.worst25)),
            s.n_failed.to_string(),
        ])?;
    }
    finish_csv(w, path)
}

/// Runs a benchmark from its config, writing the detail CSV to
/// `output_path` and the summary CSV beside it.
pub fn run_bench(cfg: &RunConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let entries = load_manifest(&cfg.manifest_path)?;
    let report = evaluate_manifest(&entries, &cfg.estimators, cfg.parallelism)?;
    write_detail_csv(&report, &cfg.output_path)?;
    write_summary_csv(&report, &sibling_path(&cfg.output_path, "_summary"))?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub spec: EstimatorSpec,
    /// `None` when every image failed.
    pub stats: Option<ErrorStats>,
}

/// Best and worst surround weight for one method, pooling and sigma.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepExtreme {
    pub best: SweepRow,
    pub worst: SweepRow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub extremes: Vec<SweepExtreme>,
}

impl SweepReport {
    fn from_bench(report: &BenchReport) -> Self {
        let rows: Vec<SweepRow> = report
            .summaries
            .iter()
            .map(|s| SweepRow {
                spec: s.spec,
                stats: s.stats,
            })
            .collect();

        // Group by everything except k; BTreeMap on the first-seen index keeps grid order.
        let mut groups: BTreeMap<usize, Vec<&SweepRow>> = BTreeMap::new();
        let mut first_seen: Vec<(EstimatorSpec, usize)> = Vec::new();
        for (i, row) in rows.iter().enumerate() {
            let key = EstimatorSpec {
                k_surround: None,
                ..row.spec
            };
            let g = match first_seen.iter().find(|(k, _)| *k == key) {
                Some(&(_, g)) => g,
                None => {
                    first_seen.push((key, i));
                    i
                }
            };
            groups.entry(g).or_default().push(row);
        }
        let extremes = groups
            .into_values()
            .filter_map(|members| {
                let scored: Vec<(&SweepRow, f64)> = members
                    .into_iter()
                    .filter_map(|r| r.stats.map(|s| (r, s.median)))
                    .collect();
                // First occurrence wins ties, so results are independent of float noise in ordering.
                let best = scored.iter().fold(None, |acc: Option<&(&SweepRow, f64)>, c| match acc {
                    Some(a) if a.1 <= c.1 => Some(a),
                    _ => Some(c),
                })?;
                let worst = scored.iter().fold(None, |acc: Option<&(&SweepRow, f64)>, c| match acc {
                    Some(a) if a.1 >= c.1 => Some(a),
                    _ => Some(c),
                })?;
                Some(SweepExtreme {
                    best: best.0.clone(),
                    worst: worst.0.clone(),
                })
            })
            .collect();
        Self { rows, extremes }
    }

    pub fn row(&self, spec: &EstimatorSpec) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.spec == *spec)
    }
}

pub fn sweep_scenes(scenes: &[Scene], grid: &SweepGrid, parallelism: usize) -> Result<SweepReport> {
    grid.validate()?;
    let report = evaluate_scenes(scenes, &grid.estimators(), parallelism)?;
    Ok(SweepReport::from_bench(&report))
}

pub fn write_sweep_csv(report: &SweepReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["method", "pooling", "sigma", "k", "median", "trimean", "mean"])?;
    for r in &report.rows {
        w.write_record([
            r.spec.method.to_string(),
            r.spec.pooling_label(),
            opt(r.spec.sigma),
            opt(r.spec.k_surround),
            opt(r.stats.map(|s| s.median)),
            opt(r.stats.map(|s| s.trimean)),
            opt(r.stats.map(|s| s.mean)),
        ])?;
    }
    finish_csv(w, path)
}

pub fn write_extremes_csv(report: &SweepReport, path: &Path) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["method", "pooling", "sigma", "which", "k", "median", "trimean", "mean"])?;
    for ex in &report.extremes {
        for (which, r) in [("best", &ex.best), ("worst", &ex.worst)] {
            w.write_record([
                r.spec.method.to_string(),
                r.spec.pooling_label(),
                opt(r.spec.sigma),
                which.to_string(),
                opt(r.spec.k_surround),
                opt(r.stats.map(|s| s.median)),
                opt(r.stats.map(|s| s.trimean)),
                opt(r.stats.map(|s| s.mean)),
            ])?;
        }
    }
    finish_csv(w, path)
}

/// Runs a sweep over a manifest, writing the long-format table to `out` and
/// best/worst-k rows to `<stem>_extremes.csv`.
pub fn run_sweep(manifest: &Path, grid: &SweepGrid, out: &Path, parallelism: usize) -> Result<SweepReport> {
    grid.validate()?;
    let entries = load_manifest(manifest)?;
    let report = SweepReport::from_bench(&evaluate_manifest(&entries, &grid.estimators(), parallelism)?);
    write_sweep_csv(&report, out)?;
    write_extremes_csv(&report, &sibling_path(out, "_extremes"))?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenes(n: usize) -> Vec<Scene> {
        let spec = SyntheticSceneSpec {
            width: 48,
            height: 48,
            noise_sigma: 0.01,
            ..Default::default()
        };
        (0..n)
            .map(|i| {
                let (image, truth) = generate_synthetic(&spec, i as u64).unwrap();
                Scene {
                    name: format!("s{i}"),
                    image,
                    truth,
                }
            })
            .collect()
    }

    #[test]
    fn grid_expansion() {
        let grid = SweepGrid {
            sigmas: vec![1.0, 2.0],
            ks: vec![0.3, 0.5, 0.7],
            methods: vec![Method::WhitePatch, Method::GreyWorld, Method::GreyEdge1, Method::DoubleOpponency],
            poolings: vec![PoolingSpec::Max, PoolingSpec::cvp()],
        };
        grid.validate().unwrap();
        let est = grid.estimators();
        // 2 + 1 + 2*2 + 2*3*2
        assert_eq!(est.len(), 19);
        assert!(est.iter().all(|e| e.validate().is_ok()));
    }

    #[test]
    fn grid_validation() {
        let grid = SweepGrid {
            sigmas: vec![1.0],
            ks: vec![],
            methods: vec![Method::DoubleOpponency],
            poolings: vec![PoolingSpec::Max],
        };
        assert!(grid.validate().unwrap_err().is_config());
        let grid = SweepGrid {
            methods: vec![Method::GreyEdge1],
            ..grid
        };
        grid.validate().unwrap();
        assert!(SweepGrid { poolings: vec![], ..grid }.validate().is_err());
    }

    #[test]
    fn sibling_names() {
        assert_eq!(sibling_path(Path::new("out/r.csv"), "_summary"), Path::new("out/r_summary.csv"));
        assert_eq!(sibling_path(Path::new("r"), "_x"), Path::new("r_x"));
    }

    #[test]
    fn failures_are_counted_not_fatal() {
        let mut s = scenes(2);
        s.push(Scene {
            name: "black".into(),
            image: Image::from_fn(48, 48, |_, _| [0.0; 3]),
            truth: Illuminant::neutral(),
        });
        let est = [EstimatorSpec::new(Method::WhitePatch, PoolingSpec::Max)];
        let r = evaluate_scenes(&s, &est, 2).unwrap();
        assert_eq!(r.details.len(), 2);
        assert_eq!(r.failures.len(), 1);
        assert_eq!(r.summaries[0].n_failed, 1);
        assert_eq!(r.summaries[0].stats.unwrap().n, 2);
    }

    #[test]
    fn order_independent_of_threads() {
        let s = scenes(6);
        let est = [
            EstimatorSpec::new(Method::WhitePatch, PoolingSpec::cvp()),
            EstimatorSpec::new(Method::GreyEdge1, PoolingSpec::TopX { x: 2.0, bins: None }).with_sigma(1.0),
        ];
        let a = evaluate_scenes(&s, &est, 1).unwrap();
        let b = evaluate_scenes(&s, &est, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.details[0].image, "s0");
        assert_eq!(a.details[1].estimator, 1);
    }

    #[test]
    fn sweep_extremes_pick_min_and_max_median() {
        let grid = SweepGrid {
            sigmas: vec![1.0],
            ks: vec![0.0, 0.5, 1.0],
            methods: vec![Method::DoubleOpponency],
            poolings: vec![PoolingSpec::Max],
        };
        let r = sweep_scenes(&scenes(4), &grid, 2).unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.extremes.len(), 1);
        let medians: Vec<f64> = r.rows.iter().map(|r| r.stats.unwrap().median).collect();
        let lo = medians.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = medians.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.extremes[0].best.stats.unwrap().median, lo);
        assert_eq!(r.extremes[0].worst.stats.unwrap().median, hi);
    }

    #[test]
    fn run_config_json() {
        let cfg: RunConfig = serde_json::from_str(
            r#"{"estimators": [{"method": "grey_edge_1", "sigma": 2, "pooling": {"kind": "cvp"}}], "parallelism": 3}"#,
        )
        .unwrap();
        assert_eq!(cfg.parallelism, 3);
        assert_eq!(cfg.estimators[0].pooling, Some(PoolingSpec::cvp()));
        assert!(cfg.validate().unwrap_err().is_config());
        assert!(serde_json::from_str::<RunConfig>(r#"{"estimators": [], "threads": 2}"#).is_err());
    }
}

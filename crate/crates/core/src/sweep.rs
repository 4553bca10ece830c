//! Sweep orchestration: runs every (k, alpha) grid cell for every
//! replicate, each with a matched baseline run, computes the reported
//! metrics, and writes a result bundle (manifest.json, raw.csv,
//! aggregate.csv) atomically via a temp directory rename.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, TaskKind};
use crate::data::Dataset;
use crate::dataset::load_dataset;
use crate::distributions::{sample_test_set, PopulationSource};
use crate::engine::{run_baseline, run_competition, Alpha, CompetitionConfig, SelectionRule};
use crate::error::Error;
use crate::metrics;
use crate::rng;
use crate::Result;

/// One raw measurement: a metric value for a (k, alpha, replicate) cell.
/// `alpha` is serialized text ("inf" for the argmax limit, "na" for tasks
/// without an alpha axis).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub metric: String,
    pub k: usize,
    pub alpha: String,
    pub replicate: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub metric: String,
    pub k: usize,
    pub alpha: String,
    pub mean: f64,
    pub se: f64,
}

/// Everything needed to reproduce the sweep. Deliberately excludes timing:
/// output files are byte-identical across reruns and worker counts, so wall
/// time is reported on stderr by the CLI instead.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub raw_rows: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepBundle {
    pub manifest: Manifest,
    pub raw: Vec<RawRow>,
    pub aggregate: Vec<AggregateRow>,
}

fn alpha_text(alpha: Alpha) -> String {
    alpha.to_string()
}

/// Seed for one grid cell and replicate: the replicate axis uses the
/// documented splitting function, the cell axes are mixed into the root so
/// no two cells share a stream.
fn cell_seed(root: u64, k_idx: usize, alpha_idx: usize, replicate: usize) -> u64 {
    let cell = rng::mix(root ^ rng::mix((k_idx as u64) << 32 | alpha_idx as u64));
    rng::replicate_seed(cell, replicate as u64)
}

enum EvalData {
    Synthetic(crate::distributions::PopulationSpec, Dataset),
    Empirical(crate::dataset::LoadedData),
}

fn prepare_eval(config: &ExperimentConfig) -> Result<EvalData> {
    if let Some(spec) = &config.population {
        let mut test_rng = rng::substream(config.rng_seed, u64::MAX - 1);
        let test = sample_test_set(spec, config.test_points, &mut test_rng)?;
        return Ok(EvalData::Synthetic(spec.clone(), test));
    }
    let ds = config
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("supervised sweep needs a population or dataset".into()))?;
    let mut split_rng = rng::substream(config.rng_seed, u64::MAX - 2);
    let loaded = load_dataset(&ds.path, &ds.schema, config.test_fraction, &mut split_rng)?;
    Ok(EvalData::Empirical(loaded))
}

fn supervised_cell(
    config: &ExperimentConfig,
    eval: &EvalData,
    k: usize,
    alpha: Alpha,
    seed: u64,
    replicate: usize,
) -> Result<Vec<RawRow>> {
    let mut selection = SelectionRule {
        alpha,
        per_user_alpha: config.per_user_alpha,
        clamp_negative: true,
        quality_kind: config.quality_kind(),
    };
    if let EvalData::Empirical(_) = eval {
        selection.quality_kind = crate::engine::QualityKind::ClassificationIndicator;
    }
    let run_config = CompetitionConfig {
        k,
        seed_size: config.seed_size,
        rounds: config.rounds,
        rng_seed: seed,
        learner: config.learner.clone(),
        selection,
        test_fraction: config.test_fraction,
    };
    let (mut source, test): (PopulationSource, &Dataset) = match eval {
        EvalData::Synthetic(spec, test) => (PopulationSource::synthetic(spec.clone())?, test),
        EvalData::Empirical(loaded) => {
            let mut shuffle_rng = rng::substream(seed, u64::MAX - 3);
            (
                PopulationSource::empirical(loaded.train.data.clone(), &mut shuffle_rng),
                &loaded.test,
            )
        }
    };
    let mut baseline_source = source.clone();
    let trace = run_competition(&run_config, &mut source)?;
    let baseline = run_baseline(&run_config, &mut baseline_source)?;

    let alpha = alpha_text(alpha);
    let mut rows = vec![
        RawRow {
            metric: "user_quality".into(),
            k,
            alpha: alpha.clone(),
            replicate,
            value: metrics::user_quality(&trace),
        },
        RawRow {
            metric: "risk".into(),
            k,
            alpha: alpha.clone(),
            replicate,
            value: metrics::trace_risk(&trace, test)?,
        },
        RawRow {
            metric: "baseline_risk".into(),
            k,
            alpha: alpha.clone(),
            replicate,
            value: metrics::trace_risk(&baseline, test)?,
        },
    ];
    if test.num_classes > 0 {
        rows.push(RawRow {
            metric: "accuracy_delta_pp".into(),
            k,
            alpha: alpha.clone(),
            replicate,
            value: metrics::population_accuracy_delta(&trace, &baseline, test)?,
        });
        let m = metrics::specialization_matrix(&trace.final_learners, test)?;
        rows.push(RawRow {
            metric: "specialization".into(),
            k,
            alpha,
            replicate,
            value: m.iter().map(|v| v.abs()).sum::<f64>() / m.len() as f64,
        });
    }
    Ok(rows)
}

fn cf_cell(config: &ExperimentConfig, k: usize, seed: u64, replicate: usize) -> Result<Vec<RawRow>> {
    let cf = config.cf.as_ref().expect("validated cf section");
    let params = cf.params(k, seed);
    let trace = crate::cf::run_cf_market(&params)?;
    let baseline = crate::cf::run_cf_baseline(&params)?;
    let pctrs = trace.pctrs();
    let alpha = "na".to_string();
    Ok(vec![
        RawRow {
            metric: "cf_user_quality".into(),
            k,
            alpha: alpha.clone(),
            replicate,
            value: trace.mean_user_quality(),
        },
        RawRow {
            metric: "cf_baseline_user_quality".into(),
            k,
            alpha: alpha.clone(),
            replicate,
            value: baseline.mean_user_quality(),
        },
        RawRow {
            metric: "cf_mean_pctr".into(),
            k,
            alpha,
            replicate,
            value: pctrs.iter().sum::<f64>() / pctrs.len() as f64,
        },
    ])
}

fn aggregate(raw: &[RawRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, usize, String)> = raw
        .iter()
        .map(|r| (r.metric.clone(), r.k, r.alpha.clone()))
        .collect();
    keys.sort();
    keys.dedup();
    let mut out = Vec::with_capacity(keys.len());
    for (metric, k, alpha) in keys {
        let values: Vec<f64> = raw
            .iter()
            .filter(|r| r.metric == metric && r.k == k && r.alpha == alpha)
            .map(|r| r.value)
            .collect();
        let (mean, se) = metrics::mean_se(&values);
        out.push(AggregateRow { metric, k, alpha, mean, se });
    }
    // Risk ratios against the monopoly cell, when the grid includes k = 1.
    let risk_rows: Vec<AggregateRow> = out
        .iter()
        .filter(|r| r.metric == "risk")
        .cloned()
        .collect();
    for row in &risk_rows {
        let Some(mono) = risk_rows.iter().find(|r| r.k == 1 && r.alpha == row.alpha) else {
            continue;
        };
        let (mean, infinite) = if mono.mean == 0.0 {
            (f64::INFINITY, true)
        } else {
            (row.mean / mono.mean, false)
        };
        // SE from per-replicate ratios against the mean monopoly risk.
        let se = if infinite || mono.mean == 0.0 {
            0.0
        } else {
            let ratios: Vec<f64> = raw
                .iter()
                .filter(|r| r.metric == "risk" && r.k == row.k && r.alpha == row.alpha)
                .map(|r| r.value / mono.mean)
                .collect();
            metrics::mean_se(&ratios).1
        };
        out.push(AggregateRow {
            metric: "risk_ratio".into(),
            k: row.k,
            alpha: row.alpha.clone(),
            mean,
            se,
        });
    }
    out.sort_by(|a, b| {
        (&a.metric, a.k, &a.alpha).cmp(&(&b.metric, b.k, &b.alpha))
    });
    out
}

/// Runs the configured sweep. If `out_dir` is given it must not already
/// exist; the bundle appears there atomically or not at all.
pub fn run_sweep(config: &ExperimentConfig, out_dir: Option<&Path>) -> Result<SweepBundle> {
    config.validate()?;
    let start = Instant::now();
    log::info!("sweep started");
    let cells: Vec<(usize, usize, usize)> = match config.task {
        TaskKind::Theory => {
            return Err(Error::Config("theory task runs through verify, not sweep".into()))
        }
        _ => {
            let mut cells = Vec::new();
            for (ki, _) in config.grid.k.iter().enumerate() {
                for (ai, _) in config.grid.alpha.iter().enumerate() {
                    for rep in 0..config.replicates {
                        cells.push((ki, ai, rep));
                    }
                    if config.task == TaskKind::Cf {
                        // CF has no alpha axis; one pass over it suffices.
                        break;
                    }
                }
            }
            cells
        }
    };

    let eval = match config.task {
        TaskKind::Supervised => Some(prepare_eval(config)?),
        _ => None,
    };

    let mut raw: Vec<RawRow> = cells
        .par_iter()
        .map(|&(ki, ai, rep)| {
            let k = config.grid.k[ki];
            let seed = cell_seed(config.rng_seed, ki, ai, rep);
            let rows = match config.task {
                TaskKind::Supervised => {
                    let alpha = config.grid.alpha[ai];
                    supervised_cell(config, eval.as_ref().unwrap(), k, alpha, seed, rep)
                }
                TaskKind::Cf => cf_cell(config, k, seed, rep),
                TaskKind::Theory => unreachable!(),
            };
            rows.map_err(|e| {
                Error::Config(format!(
                    "cell (k={k}, alpha_index={ai}, replicate={rep}) failed: {e}"
                ))
            })
        })
        .collect::<Result<Vec<Vec<RawRow>>>>()?
        .into_iter()
        .flatten()
        .collect();
    // Sorted before write so output is identical for any worker count.
    raw.sort_by(|a, b| {
        (&a.metric, a.k, &a.alpha, a.replicate).cmp(&(&b.metric, b.k, &b.alpha, b.replicate))
    });

    let aggregate = aggregate(&raw);
    log::info!("sweep finished: {} raw rows in {:.1}s", raw.len(), start.elapsed().as_secs_f64());
    let bundle = SweepBundle {
        manifest: Manifest {
            config: config.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            raw_rows: raw.len(),
        },
        raw,
        aggregate,
    };
    if let Some(dir) = out_dir {
        write_bundle(&bundle, dir)?;
    }
    Ok(bundle)
}

fn write_bundle(bundle: &SweepBundle, out_dir: &Path) -> Result<()> {
    if out_dir.exists() {
        return Err(Error::Config(format!(
            "output directory {} already exists",
            out_dir.display()
        )));
    }
    let parent = out_dir.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(parent)?;
    let tmp = tempfile::Builder::new().prefix(".sweep-tmp-").tempdir_in(parent)?;

    let manifest = std::fs::File::create(tmp.path().join("manifest.json"))?;
    serde_json::to_writer_pretty(manifest, &bundle.manifest)
        .map_err(|e| Error::Config(format!("cannot write manifest: {e}")))?;
    write_csv(&tmp.path().join("raw.csv"), &bundle.raw)?;
    write_csv(&tmp.path().join("aggregate.csv"), &bundle.aggregate)?;

    std::fs::rename(tmp.keep(), out_dir)?;
    Ok(())
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a bundle back from disk (used by tests and downstream tooling).
pub fn read_bundle(dir: &Path) -> Result<SweepBundle> {
    let manifest: Manifest =
        serde_json::from_reader(std::fs::File::open(dir.join("manifest.json"))?)
            .map_err(|e| Error::Config(format!("cannot parse manifest: {e}")))?;
    let mut raw = Vec::new();
    for row in csv::Reader::from_path(dir.join("raw.csv"))?.deserialize() {
        raw.push(row?);
    }
    let mut aggregate = Vec::new();
    for row in csv::Reader::from_path(dir.join("aggregate.csv"))?.deserialize() {
        aggregate.push(row?);
    }
    Ok(SweepBundle { manifest, raw, aggregate })
}

/// Summary of one competition run with its matched baseline, for the CLI's
/// single-run mode (first grid cell, replicate 0).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub k: usize,
    pub alpha: String,
    pub rounds: usize,
    pub user_quality: f64,
    pub final_sizes: Vec<usize>,
    pub risk: f64,
    pub baseline_risk: f64,
    pub accuracy_delta_pp: Option<f64>,
}

pub fn run_single(config: &ExperimentConfig) -> Result<RunSummary> {
    config.validate()?;
    if config.task != TaskKind::Supervised {
        return Err(Error::Config("single-run mode is for the supervised task".into()));
    }
    let eval = prepare_eval(config)?;
    let k = config.grid.k[0];
    let alpha = config.grid.alpha[0];
    let seed = cell_seed(config.rng_seed, 0, 0, 0);
    let rows = supervised_cell(config, &eval, k, alpha, seed, 0)?;
    let find = |name: &str| rows.iter().find(|r| r.metric == name).map(|r| r.value);
    // Rebuild the final sizes from a fresh identical run (cells don't keep
    // their traces).
    let selection = SelectionRule {
        alpha,
        per_user_alpha: config.per_user_alpha,
        clamp_negative: true,
        quality_kind: config.quality_kind(),
    };
    let run_config = CompetitionConfig {
        k,
        seed_size: config.seed_size,
        rounds: config.rounds,
        rng_seed: seed,
        learner: config.learner.clone(),
        selection,
        test_fraction: config.test_fraction,
    };
    let final_sizes = match &eval {
        EvalData::Synthetic(spec, _) => {
            let mut source = PopulationSource::synthetic(spec.clone())?;
            run_competition(&run_config, &mut source)?.final_sizes().to_vec()
        }
        EvalData::Empirical(loaded) => {
            let mut shuffle_rng = rng::substream(seed, u64::MAX - 3);
            let mut source =
                PopulationSource::empirical(loaded.train.data.clone(), &mut shuffle_rng);
            run_competition(&run_config, &mut source)?.final_sizes().to_vec()
        }
    };
    Ok(RunSummary {
        k,
        alpha: alpha_text(alpha),
        rounds: config.rounds,
        user_quality: find("user_quality").unwrap_or(f64::NAN),
        final_sizes,
        risk: find("risk").unwrap_or(f64::NAN),
        baseline_risk: find("baseline_risk").unwrap_or(f64::NAN),
        accuracy_delta_pp: find("accuracy_delta_pp"),
    })
}

/// Re-export for the CLI: where results go when no directory is given.
pub fn default_out_dir() -> PathBuf {
    std::env::var_os("COMPETE_OUT_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GridSpec;
    use crate::distributions::PopulationSpec;
    use crate::learners::LearnerSpec;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            task: TaskKind::Supervised,
            rng_seed: 42,
            replicates: 2,
            rounds: 20,
            seed_size: 1,
            test_fraction: 0.2,
            test_points: 50,
            out_dir: None,
            grid: GridSpec { k: vec![1, 2], alpha: vec![Alpha::Finite(0.0), Alpha::Infinite] },
            learner: LearnerSpec::NearestNeighbor,
            population: Some(PopulationSpec::NoisyConstant { eps: 0.3 }),
            dataset: None,
            cf: None,
            per_user_alpha: false,
        }
    }

    #[test]
    fn every_cell_present_exactly_once() {
        let bundle = run_sweep(&small_config(), None).unwrap();
        for metric in ["user_quality", "risk", "accuracy_delta_pp", "specialization"] {
            for &k in &[1usize, 2] {
                for alpha in ["0", "inf"] {
                    for rep in 0..2 {
                        let n = bundle
                            .raw
                            .iter()
                            .filter(|r| {
                                r.metric == metric
                                    && r.k == k
                                    && r.alpha == alpha
                                    && r.replicate == rep
                            })
                            .count();
                        assert_eq!(n, 1, "{metric} k={k} alpha={alpha} rep={rep}");
                    }
                }
            }
        }
    }

    #[test]
    fn rerun_is_identical() {
        let a = run_sweep(&small_config(), None).unwrap();
        let b = run_sweep(&small_config(), None).unwrap();
        assert_eq!(a.raw, b.raw);
        assert_eq!(a.aggregate, b.aggregate);
    }

    #[test]
    fn aggregates_recomputable_from_raw() {
        let bundle = run_sweep(&small_config(), None).unwrap();
        for agg in bundle.aggregate.iter().filter(|a| a.metric != "risk_ratio") {
            let values: Vec<f64> = bundle
                .raw
                .iter()
                .filter(|r| r.metric == agg.metric && r.k == agg.k && r.alpha == agg.alpha)
                .map(|r| r.value)
                .collect();
            let (mean, se) = metrics::mean_se(&values);
            assert_eq!((agg.mean, agg.se), (mean, se));
        }
        // Risk ratio of k=1 against itself is 1 (or absent if risk is 0).
        if let Some(rr) = bundle
            .aggregate
            .iter()
            .find(|a| a.metric == "risk_ratio" && a.k == 1 && a.alpha == "0")
        {
            assert!((rr.mean - 1.0).abs() < 1e-12 || rr.mean.is_infinite());
        }
    }

    #[test]
    fn bundle_round_trips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("bundle");
        let bundle = run_sweep(&small_config(), Some(&out)).unwrap();
        let back = read_bundle(&out).unwrap();
        assert_eq!(bundle.raw, back.raw);
        assert_eq!(bundle.aggregate, back.aggregate);
        assert_eq!(bundle.manifest.config, back.manifest.config);
        // A second write to the same directory must refuse.
        assert!(run_sweep(&small_config(), Some(&out)).is_err());
        // No temp litter left behind.
        let litter: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with(".sweep-tmp-"))
            .collect();
        assert!(litter.is_empty());
    }

    #[test]
    fn cf_sweep_runs() {
        let mut cfg = small_config();
        cfg.task = TaskKind::Cf;
        cfg.population = None;
        cfg.cf = Some(crate::config::CfConfig {
            items: 4,
            users: 6,
            rounds: 200,
            gamma: 0.1,
            lambda: 1e-4,
            latent_dim: 4,
            generating_rank: 3,
            optimistic_unpulled: false,
        });
        let bundle = run_sweep(&cfg, None).unwrap();
        // 3 metrics x 2 k values x 2 replicates.
        assert_eq!(bundle.raw.len(), 12);
        assert!(bundle.raw.iter().all(|r| r.alpha == "na"));
    }

    #[test]
    fn single_run_summary() {
        let summary = run_single(&small_config()).unwrap();
        assert_eq!(summary.k, 1);
        assert_eq!(summary.final_sizes, vec![21]);
        assert!((0.0..=1.0).contains(&summary.user_quality));
    }
}

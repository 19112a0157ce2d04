//! Sweep orchestration: train once per (loss, seed), then synthesize and
//! evaluate every (variant, S) cell against the shared trained models.
//! Every artifact path is a pure function of the config hash and the cell
//! coordinates; completed cells are skipped on rerun.

use super::report::{write_ru_map_csv, write_ru_map_svg, RuRow};
use super::{child_seed, CellCoords, ExperimentConfig, Variant};
use crate::data::{infer_schema_from_raw, DataTransformer, Dataset, RawTable};
use crate::error::{Error, Result};
use crate::eval::{evaluate_replicates, pareto_front, selection_score, EvalReport, EvalTable};
use crate::gan::{load_checkpoint, save_checkpoint, train, CondFrequencies, LossKind, TrainedModel};
use crate::nn::nets::GeneratorNet;
use crate::swag::{
    load_posterior, save_posterior, synthesize, synthesize_point_estimate, PosteriorArtifact,
    SwagState, SynthesisOptions, DEFAULT_ALPHA,
};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

/// Sidecar metadata written next to every synthetic CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSidecar {
    pub label: String,
    pub loss: Option<String>,
    pub k: Option<usize>,
    pub alpha: Option<f64>,
    pub s_samples: usize,
    pub seed: u64,
    pub posterior_hash: String,
    pub batches_run: usize,
}

/// Loaded shared inputs for an experiment.
pub struct ExperimentData {
    pub raw: RawTable,
    pub dataset: Dataset,
    pub transformer: DataTransformer,
    pub original_eval: EvalTable,
}

pub fn load_experiment_data(cfg: &ExperimentConfig) -> Result<ExperimentData> {
    let raw = RawTable::read_csv(&cfg.dataset)?;
    let mut overrides = cfg.schema_overrides.clone();
    for (name, kind) in &cfg.eval.spec.schema_overrides {
        overrides.entry(name.clone()).or_insert(*kind);
    }
    let schema = infer_schema_from_raw(&raw, &overrides)?;
    let dataset = Dataset::from_raw(&raw, &schema)?;
    let transformer = DataTransformer::fit(&dataset, cfg.train.max_modes)?;
    let original_eval = EvalTable::from_raw(&raw, &schema)?;
    Ok(ExperimentData {
        raw,
        dataset,
        transformer,
        original_eval,
    })
}

pub struct TrainPaths {
    pub dir: PathBuf,
    pub checkpoint: PathBuf,
    pub posterior: PathBuf,
    pub log: PathBuf,
}

pub fn train_paths(out_dir: &Path, loss: LossKind, seed_label: u64) -> TrainPaths {
    let dir = out_dir.join("train").join(format!("{loss}_s{seed_label}"));
    TrainPaths {
        checkpoint: dir.join("checkpoint.bin"),
        posterior: dir.join("posterior.bin"),
        log: dir.join("train_log.csv"),
        dir,
    }
}

fn write_train_log(path: &Path, model: &TrainedModel) -> Result<()> {
    let mut out = String::from("epoch,d_loss,g_loss\n");
    for l in &model.epoch_log {
        out.push_str(&format!("{},{},{}\n", l.epoch, l.d_loss, l.g_loss));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Trains every (loss, seed) pair that is missing its artifacts. Returns the
/// artifact paths per pair.
pub fn train_all(
    cfg: &ExperimentConfig,
    data: &ExperimentData,
) -> Result<Vec<(LossKind, u64, TrainPaths)>> {
    let mut out = Vec::new();
    for &loss in &cfg.train.losses {
        for &seed_label in &cfg.seed_labels() {
            let paths = train_paths(&cfg.output_dir, loss, seed_label);
            if !(paths.checkpoint.exists() && paths.posterior.exists()) {
                std::fs::create_dir_all(&paths.dir).map_err(|e| Error::io(&paths.dir, e))?;
                let train_cfg = cfg.train_config(loss, seed_label);
                log::info!("training loss={loss} seed={seed_label} (rng seed {})", train_cfg.seed);
                let k_max = cfg.max_rank();
                let mut swag: Option<SwagState> = None;
                let model = train(&data.dataset, &data.transformer, &train_cfg, |_, theta| {
                    swag.get_or_insert_with(|| SwagState::new(theta.len(), k_max))
                        .collect(theta)
                        .expect("snapshot dimensions are fixed");
                })?;
                let swag = swag.ok_or_else(|| {
                    Error::Usage(format!(
                        "t_collect {} leaves no collection epochs (epochs {})",
                        train_cfg.t_collect, train_cfg.epochs
                    ))
                })?;
                let posterior = swag.finalize(DEFAULT_ALPHA)?;
                save_checkpoint(&paths.checkpoint, &model)?;
                save_posterior(&paths.posterior, &PosteriorArtifact::new(posterior, &model))?;
                write_train_log(&paths.log, &model)?;
            }
            out.push((loss, seed_label, paths));
        }
    }
    Ok(out)
}

fn file_hash(path: &Path) -> Result<String> {
    use sha2::{Digest, Sha256};
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellOutcome {
    pub coords: CellCoords,
    pub report: Option<EvalReport>,
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct SweepOutcome {
    pub cells_total: usize,
    pub cells_failed: usize,
    pub rows: Vec<RuRow>,
}

struct CellJob {
    coords: CellCoords,
    dir: PathBuf,
}

type BaselineBits = (GeneratorNet, DataTransformer, CondFrequencies);

struct SharedCtx {
    cfg: ExperimentConfig,
    original_eval: EvalTable,
    posteriors: BTreeMap<(String, u64), Arc<PosteriorArtifact>>,
    posterior_hashes: BTreeMap<(String, u64), String>,
    baselines: BTreeMap<(String, u64), Arc<BaselineBits>>,
}

fn run_cell(ctx: &SharedCtx, job: &CellJob) -> Result<EvalReport> {
    let coords = &job.coords;
    std::fs::create_dir_all(&job.dir).map_err(|e| Error::io(&job.dir, e))?;
    let key = (coords.loss.to_string(), coords.seed_label);
    let n = ctx.cfg.synthesis.n_sample;
    let batch = ctx.cfg.synthesis.batch;
    let mut replicates = Vec::with_capacity(ctx.cfg.synthesis.replicates);
    for r in 0..ctx.cfg.synthesis.replicates {
        let csv_path = job.dir.join(format!("rep{r}.csv"));
        let meta_path = job.dir.join(format!("rep{r}.meta.json"));
        let seed = child_seed(
            ctx.cfg.seed,
            &format!(
                "synth/loss={}/variant={}/S={}/seed={}/rep={}",
                coords.loss,
                coords.variant.dir_name(),
                coords.s_samples,
                coords.seed_label,
                r
            ),
        );
        if !csv_path.exists() {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let (table, report, k, alpha, hash) = match coords.variant {
                Variant::Baseline => {
                    let bits = &ctx.baselines[&key];
                    let mut gen = bits.0.clone();
                    let (table, report) =
                        synthesize_point_estimate(&mut gen, &bits.1, &bits.2, n, batch, &mut rng)?;
                    (table, report, None, None, String::new())
                }
                Variant::Posterior { k, alpha } => {
                    let artifact = &ctx.posteriors[&key];
                    let mut opts = SynthesisOptions::new(n, batch, coords.s_samples);
                    opts.bn_batches = ctx.cfg.synthesis.bn_batches;
                    opts.alpha = Some(alpha);
                    opts.rank = Some(k);
                    let (table, report) = synthesize(artifact, &opts, &mut rng)?;
                    (
                        table,
                        report,
                        Some(k),
                        Some(alpha),
                        ctx.posterior_hashes[&key].clone(),
                    )
                }
            };
            table.write_csv(&csv_path)?;
            let sidecar = SynthSidecar {
                label: coords.variant.config_label(coords.loss, coords.s_samples),
                loss: Some(coords.loss.to_string()),
                k,
                alpha,
                s_samples: coords.s_samples,
                seed,
                posterior_hash: hash,
                batches_run: report.batches_run,
            };
            std::fs::write(
                &meta_path,
                serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
            )
            .map_err(|e| Error::io(&meta_path, e))?;
        }
        let raw = RawTable::read_csv(&csv_path)?;
        // type the synthetic table with the original's headers/kinds
        let schema = schema_of_eval(&ctx.original_eval);
        replicates.push(EvalTable::from_raw(&raw, &schema)?);
    }
    evaluate_replicates(
        &ctx.original_eval,
        &replicates,
        &ctx.cfg.eval.spec,
        ctx.cfg.eval.phi,
    )
}

fn schema_of_eval(t: &EvalTable) -> Vec<crate::data::ColumnSchema> {
    t.headers
        .iter()
        .zip(&t.columns)
        .map(|(h, c)| match c {
            crate::eval::EvalColumn::Num(_) => crate::data::ColumnSchema::continuous(h.clone()),
            crate::eval::EvalColumn::Cat(_) => {
                crate::data::ColumnSchema::categorical(h.clone(), vec!["_".into()])
            }
        })
        .collect()
}

/// Full sweep: train (or reuse) every model, run every cell through
/// synthesis and evaluation in a worker pool, and write the aggregated
/// risk-utility map, gain table, and summary.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutcome> {
    let data = load_experiment_data(cfg)?;
    let trained = train_all(cfg, &data)?;

    let mut posteriors = BTreeMap::new();
    let mut posterior_hashes = BTreeMap::new();
    let mut baselines = BTreeMap::new();
    for (loss, seed_label, paths) in &trained {
        let key = (loss.to_string(), *seed_label);
        posteriors.insert(key.clone(), Arc::new(load_posterior(&paths.posterior)?));
        posterior_hashes.insert(key.clone(), file_hash(&paths.posterior)?);
        let model = load_checkpoint(&paths.checkpoint)?;
        baselines.insert(
            key,
            Arc::new((model.generator, model.transformer, model.cond_freqs)),
        );
    }

    // enumerate cells: baseline per (loss, seed); posterior per
    // (loss, K, alpha, S, seed)
    let mut jobs = Vec::new();
    for &loss in &cfg.train.losses {
        for &seed_label in &cfg.seed_labels() {
            let base = cfg
                .output_dir
                .join("cells")
                .join(format!("{loss}_s{seed_label}"));
            jobs.push(CellJob {
                coords: CellCoords {
                    variant: Variant::Baseline,
                    loss,
                    s_samples: 1,
                    seed_label,
                },
                dir: base.join("ctgan"),
            });
            for &k in &cfg.swag.k {
                for &alpha in &cfg.swag.alpha {
                    for &s in &cfg.synthesis.s {
                        jobs.push(CellJob {
                            coords: CellCoords {
                                variant: Variant::Posterior { k, alpha },
                                loss,
                                s_samples: s,
                                seed_label,
                            },
                            dir: base.join(format!("K{k}_a{alpha}_S{s}")),
                        });
                    }
                }
            }
        }
    }

    let ctx = Arc::new(SharedCtx {
        cfg: cfg.clone(),
        original_eval: data.original_eval,
        posteriors,
        posterior_hashes,
        baselines,
    });

    let workers = worker_count(jobs.len());
    let queue = Arc::new(Mutex::new(jobs));
    let outcomes: Arc<Mutex<Vec<CellOutcome>>> = Arc::new(Mutex::new(Vec::new()));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let queue = Arc::clone(&queue);
            let outcomes = Arc::clone(&outcomes);
            let ctx = Arc::clone(&ctx);
            scope.spawn(move || loop {
                let job = { queue.lock().unwrap().pop() };
                let Some(job) = job else { break };
                let metrics_path = job.dir.join("metrics.json");
                let result = if metrics_path.exists() {
                    serde_json::from_str::<CellOutcome>(
                        &std::fs::read_to_string(&metrics_path).unwrap_or_default(),
                    )
                    .map(|c| c.report)
                    .ok()
                    .flatten()
                    .ok_or_else(|| Error::format(&metrics_path, "unreadable cell metrics"))
                } else {
                    run_cell(&ctx, &job)
                };
                let outcome = match result {
                    Ok(report) => CellOutcome {
                        coords: job.coords.clone(),
                        report: Some(report),
                        error: None,
                    },
                    Err(e) => {
                        log::warn!("cell {:?} failed: {e}", job.coords);
                        CellOutcome {
                            coords: job.coords.clone(),
                            report: None,
                            error: Some(e.to_string()),
                        }
                    }
                };
                if outcome.error.is_none() && !metrics_path.exists() {
                    if let Ok(json) = serde_json::to_string_pretty(&outcome) {
                        let _ = std::fs::write(&metrics_path, json);
                    }
                }
                outcomes.lock().unwrap().push(outcome);
            });
        }
    });

    let outcomes = Arc::try_unwrap(outcomes)
        .expect("workers joined")
        .into_inner()
        .unwrap();
    let cells_total = outcomes.len();
    let cells_failed = outcomes.iter().filter(|o| o.error.is_some()).count();

    let rows = aggregate_rows(cfg, &outcomes)?;
    write_ru_map_csv(&cfg.output_dir.join("ru_map.csv"), &rows)?;
    write_ru_map_svg(&cfg.output_dir.join("ru_map.svg"), &rows)?;
    write_gains_csv(&cfg.output_dir.join("gains.csv"), &rows)?;
    write_summary(cfg, &rows, cells_total, cells_failed)?;
    Ok(SweepOutcome {
        cells_total,
        cells_failed,
        rows,
    })
}

pub(crate) fn worker_count(jobs: usize) -> usize {
    let cap = std::env::var("GACTGAN_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1);
    let hw = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    cap.unwrap_or(hw).min(jobs.max(1))
}

/// Mean metrics per (variant, loss, S) across training seeds; the selection
/// score is recomputed from the aggregated utility and risk; Pareto flags
/// and the utility cutoff are applied to the aggregated points.
fn aggregate_rows(cfg: &ExperimentConfig, outcomes: &[CellOutcome]) -> Result<Vec<RuRow>> {
    let mut groups: BTreeMap<String, (CellCoords, Vec<&EvalReport>)> = BTreeMap::new();
    for o in outcomes {
        let Some(report) = &o.report else { continue };
        let label = o.coords.variant.config_label(o.coords.loss, o.coords.s_samples);
        groups
            .entry(label)
            .or_insert_with(|| (o.coords.clone(), Vec::new()))
            .1
            .push(report);
    }
    let mut rows = Vec::new();
    for (label, (coords, reports)) in groups {
        let n = reports.len() as f64;
        let utility = reports.iter().map(|r| r.utility).sum::<f64>() / n;
        let risk = reports.iter().map(|r| r.risk).sum::<f64>() / n;
        let ss = selection_score(utility.clamp(0.0, 1.0), risk.clamp(0.0, 1.0), cfg.eval.phi)?;
        let (k, alpha) = match coords.variant {
            Variant::Baseline => (None, None),
            Variant::Posterior { k, alpha } => (Some(k), Some(alpha)),
        };
        rows.push(RuRow {
            config: label,
            loss: coords.loss.to_string(),
            k,
            alpha,
            s_samples: coords.s_samples,
            utility,
            risk,
            selection_score: ss,
            pareto: false,
            cutoff_pass: utility > 0.4,
        });
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.utility, r.risk)).collect();
    for (row, on_front) in rows.iter_mut().zip(pareto_front(&pts)) {
        row.pareto = on_front;
    }
    Ok(rows)
}

/// Per (loss, rank, phi): the best-scoring alpha cell against the baseline,
/// as percentage-point differences of utility and risk.
fn write_gains_csv(path: &Path, rows: &[RuRow]) -> Result<()> {
    let mut out = String::from("phi,loss,K,alpha,utility_gain_pct,risk_gain_pct\n");
    for &phi in &[0.75, 1.0] {
        let mut losses: Vec<&str> = rows.iter().map(|r| r.loss.as_str()).collect();
        losses.sort_unstable();
        losses.dedup();
        for loss in losses {
            let Some(baseline) = rows
                .iter()
                .find(|r| r.loss == loss && r.k.is_none())
            else {
                continue;
            };
            let mut ks: Vec<usize> = rows
                .iter()
                .filter(|r| r.loss == loss)
                .filter_map(|r| r.k)
                .collect();
            ks.sort_unstable();
            ks.dedup();
            for k in ks {
                let best = rows
                    .iter()
                    .filter(|r| r.loss == loss && r.k == Some(k))
                    .max_by(|a, b| {
                        let sa = phi * a.utility + (1.0 - phi) * (1.0 - a.risk);
                        let sb = phi * b.utility + (1.0 - phi) * (1.0 - b.risk);
                        sa.partial_cmp(&sb).unwrap()
                    });
                if let Some(best) = best {
                    out.push_str(&format!(
                        "{phi},{loss},{k},{},{:.4},{:.4}\n",
                        best.alpha.unwrap_or(0.0),
                        (best.utility - baseline.utility) * 100.0,
                        (best.risk - baseline.risk) * 100.0,
                    ));
                }
            }
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn write_summary(
    cfg: &ExperimentConfig,
    rows: &[RuRow],
    cells_total: usize,
    cells_failed: usize,
) -> Result<()> {
    #[derive(Serialize)]
    struct Summary<'a> {
        config_hash: String,
        cells_total: usize,
        cells_failed: usize,
        best_by_selection_score: Option<&'a RuRow>,
        pareto_front: Vec<&'a str>,
    }
    let best = rows
        .iter()
        .max_by(|a, b| a.selection_score.partial_cmp(&b.selection_score).unwrap());
    let summary = Summary {
        config_hash: cfg.config_hash(),
        cells_total,
        cells_failed,
        best_by_selection_score: best,
        pareto_front: rows
            .iter()
            .filter(|r| r.pareto)
            .map(|r| r.config.as_str())
            .collect(),
    };
    let path = cfg.output_dir.join("summary.json");
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(|e| Error::io(&path, e))
}

/// Standalone evaluation of a directory of synthetic CSVs against an
/// original table: replicates are grouped by their sidecar labels, each
/// group becomes one risk-utility row, Pareto flags span the groups.
pub fn evaluate_dir(
    original_csv: &Path,
    synthetic_dir: &Path,
    spec: &crate::eval::UtilitySpec,
    phi: f64,
    out_json: &Path,
) -> Result<()> {
    let raw = RawTable::read_csv(original_csv)?;
    let schema = infer_schema_from_raw(&raw, &spec.schema_overrides)?;
    let original = EvalTable::from_raw(&raw, &schema)?;

    let mut files: Vec<PathBuf> = std::fs::read_dir(synthetic_dir)
        .map_err(|e| Error::io(synthetic_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "csv").unwrap_or(false))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!(
            "no synthetic CSVs in {}",
            synthetic_dir.display()
        )));
    }

    let mut groups: BTreeMap<String, (Option<SynthSidecar>, Vec<EvalTable>)> = BTreeMap::new();
    for f in &files {
        let sidecar_path = f.with_extension("meta.json");
        let sidecar: Option<SynthSidecar> = std::fs::read_to_string(&sidecar_path)
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok());
        let label = sidecar
            .as_ref()
            .map(|s| s.label.clone())
            .unwrap_or_else(|| "default".to_string());
        let table = EvalTable::from_raw(&RawTable::read_csv(f)?, &schema)?;
        let entry = groups.entry(label).or_insert_with(|| (sidecar, Vec::new()));
        entry.1.push(table);
    }

    #[derive(Serialize)]
    struct GroupResult {
        label: String,
        report: Option<EvalReport>,
        error: Option<String>,
        pareto: bool,
        cutoff_pass: bool,
    }
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for (label, (sidecar, tables)) in &groups {
        match evaluate_replicates(&original, tables, spec, phi) {
            Ok(report) => {
                rows.push(RuRow {
                    config: label.clone(),
                    loss: sidecar
                        .as_ref()
                        .and_then(|s| s.loss.clone())
                        .unwrap_or_default(),
                    k: sidecar.as_ref().and_then(|s| s.k),
                    alpha: sidecar.as_ref().and_then(|s| s.alpha),
                    s_samples: sidecar.as_ref().map(|s| s.s_samples).unwrap_or(1),
                    utility: report.utility,
                    risk: report.risk,
                    selection_score: report.selection_score,
                    pareto: false,
                    cutoff_pass: report.utility > 0.4,
                });
                results.push(GroupResult {
                    label: label.clone(),
                    report: Some(report),
                    error: None,
                    pareto: false,
                    cutoff_pass: false,
                });
            }
            Err(e) => {
                log::warn!("evaluation of group '{label}' failed: {e}");
                results.push(GroupResult {
                    label: label.clone(),
                    report: None,
                    error: Some(e.to_string()),
                    pareto: false,
                    cutoff_pass: false,
                });
            }
        }
    }
    let pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.utility, r.risk)).collect();
    for (row, flag) in rows.iter_mut().zip(pareto_front(&pts)) {
        row.pareto = flag;
    }
    for result in &mut results {
        if let Some(row) = rows.iter().find(|r| r.config == result.label) {
            result.pareto = row.pareto;
            result.cutoff_pass = row.cutoff_pass;
        }
    }

    std::fs::write(
        out_json,
        serde_json::to_string_pretty(&results).expect("results serialize"),
    )
    .map_err(|e| Error::io(out_json, e))?;
    let csv_path = out_json.with_extension("ru.csv");
    write_ru_map_csv(&csv_path, &rows)?;
    write_ru_map_svg(&out_json.with_extension("ru.svg"), &rows)?;
    Ok(())
}

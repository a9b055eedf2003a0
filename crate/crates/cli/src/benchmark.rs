use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use rwpnn::data::load_csv;
use rwpnn::detector::PipelineConfig;
use rwpnn::experiment::{run_experiment, MetricSummary};
use rwpnn::mrwpn::ReceptiveFieldSet;
use rwpnn::wavelet::SplineOrder;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::commands::write_text;
use crate::config::{GridConfig, RunConfig};
use crate::ConfigError;

pub const RESULTS_FILE: &str = "benchmark.jsonl";
pub const BEST_FILE: &str = "best.json";

/// One point of the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cell {
    pub j0: u32,
    pub order: SplineOrder,
    pub gammas: ReceptiveFieldSet,
    pub encoder: Vec<usize>,
    pub decoder: Vec<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Cell {
    fn apply(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        cfg.j0 = self.j0;
        cfg.order = self.order;
        cfg.gammas = self.gammas.clone();
        cfg.encoder = self.encoder.clone();
        cfg.decoder = self.decoder.clone();
        cfg.train.learning_rate = self.learning_rate;
        cfg.train.batch_size = self.batch_size;
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub cell_hash: String,
    pub cell: Cell,
    pub clean: MetricSummary,
    pub drifted: Option<MetricSummary>,
}

fn axis<T: Clone>(values: &[T], fallback: T) -> Vec<T> {
    if values.is_empty() {
        vec![fallback]
    } else {
        values.to_vec()
    }
}

/// Cartesian product of the grid axes, `j0` varying slowest.
pub fn expand(grid: &GridConfig, base: &PipelineConfig) -> Vec<Cell> {
    let j0s = axis(&grid.j0, base.j0);
    let orders = axis(&grid.order, base.order);
    let gammas = axis(&grid.gammas, base.gammas.clone());
    let layers = axis(&grid.layers, (base.encoder.clone(), base.decoder.clone()));
    let rates = axis(&grid.learning_rate, base.train.learning_rate);
    let batches = axis(&grid.batch_size, base.train.batch_size);
    let mut cells = Vec::new();
    for &j0 in &j0s {
        for &order in &orders {
            for g in &gammas {
                for (encoder, decoder) in &layers {
                    for &learning_rate in &rates {
                        for &batch_size in &batches {
                            cells.push(Cell {
                                j0,
                                order,
                                gammas: g.clone(),
                                encoder: encoder.clone(),
                                decoder: decoder.clone(),
                                learning_rate,
                                batch_size,
                            });
                        }
                    }
                }
            }
        }
    }
    cells
}

/// Identifies a cell together with everything else that affects its result.
pub fn cell_hash(run: &RunConfig, pipeline: &PipelineConfig) -> Result<String> {
    let key = json!({
        "dataset": run.dataset.to_string_lossy(),
        "csv": run.csv,
        "split_p": run.split_p,
        "drift": run.drift,
        "repeats": run.repeats,
        "seed": run.seed,
        "pipeline": pipeline,
    });
    let digest = Sha256::digest(serde_json::to_vec(&key)?);
    Ok(hex::encode(digest))
}

/// Highest mean F1; ties go to the smaller `j0`, then to the earlier cell.
pub fn best_cell(results: &[CellResult]) -> Option<&CellResult> {
    results.iter().reduce(|best, r| {
        let (a, b) = (r.clean.f1.mean, best.clean.f1.mean);
        if a > b || (a == b && r.cell.j0 < best.cell.j0) {
            r
        } else {
            best
        }
    })
}

fn read_previous(path: &Path) -> Result<Vec<CellResult>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line)
                .map_err(|e| ConfigError::Config(format!("{} line {}: {e}", path.display(), i + 1)).into())
        })
        .collect()
}

fn write_results(path: &Path, results: &[CellResult]) -> Result<()> {
    let mut text = String::new();
    for r in results {
        text.push_str(&serde_json::to_string(r)?);
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn run(
    config_path: &Path,
    grid_path: &Path,
    out: Option<PathBuf>,
    repeats: Option<usize>,
    seed: Option<u64>,
) -> Result<()> {
    let mut run = RunConfig::load(config_path)?;
    if let Some(r) = repeats {
        run.repeats = r;
    }
    if let Some(s) = seed {
        run.seed = s;
    }
    run.validate()?;
    let grid = GridConfig::load(grid_path)?;
    let out = out.unwrap_or_else(|| run.output_dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;

    let cells = expand(&grid, &run.pipeline);
    let mut planned = Vec::with_capacity(cells.len());
    for cell in cells {
        let pipeline = cell.apply(&run.pipeline);
        pipeline
            .validate(run.csv.dim)
            .map_err(|e| ConfigError::Config(format!("grid cell {cell:?}: {e}")))?;
        let hash = cell_hash(&run, &pipeline)?;
        planned.push((cell, pipeline, hash));
    }

    let results_path = out.join(RESULTS_FILE);
    let previous = read_previous(&results_path)?;
    let dataset = load_csv(&run.dataset, &run.csv)?;
    let mut results = Vec::with_capacity(planned.len());
    for (i, (cell, pipeline, hash)) in planned.into_iter().enumerate() {
        if let Some(done) = previous.iter().find(|r| r.cell_hash == hash) {
            eprintln!("cell {}: already complete, skipping", i + 1);
            results.push(done.clone());
            continue;
        }
        eprintln!("cell {}: j0 {} order {} ...", i + 1, cell.j0, cell.order.order());
        let report = run_experiment(&dataset, run.split_p, run.drift.as_ref(), &pipeline, run.repeats, run.seed)?;
        results.push(CellResult {
            cell_hash: hash,
            cell,
            clean: report.clean,
            drifted: report.drifted,
        });
        write_results(&results_path, &results)?;
    }
    write_results(&results_path, &results)?;

    if let Some(best) = best_cell(&results) {
        let mut text = serde_json::to_string_pretty(best)?;
        text.push('\n');
        write_text(&out.join(BEST_FILE), &text)?;
    }
    println!("{:>4} {:>3} {:>2} {:>17} {:>17}", "cell", "j0", "m", "F1 clean", "F1 drifted");
    for (i, r) in results.iter().enumerate() {
        let drifted = r
            .drifted
            .map(|d| format!("{:.4} ± {:.4}", d.f1.mean, d.f1.std))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:>4} {:>3} {:>2} {:>8.4} ± {:.4} {:>17}",
            i + 1,
            r.cell.j0,
            r.cell.order.order(),
            r.clean.f1.mean,
            r.clean.f1.std,
            drifted
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rwpnn::experiment::MeanStd;

    fn result(j0: u32, f1: f64) -> CellResult {
        let m = MeanStd { mean: f1, std: 0.0 };
        let base = PipelineConfig::default();
        CellResult {
            cell_hash: String::new(),
            cell: Cell {
                j0,
                order: SplineOrder::Quadratic,
                gammas: base.gammas,
                encoder: base.encoder,
                decoder: base.decoder,
                learning_rate: 1e-3,
                batch_size: 8,
            },
            clean: MetricSummary {
                precision: m,
                recall: m,
                f1: m,
            },
            drifted: None,
        }
    }

    #[test]
    fn two_by_two_grid_has_four_cells() {
        let grid = GridConfig {
            j0: vec![1, 2],
            order: vec![SplineOrder::Linear, SplineOrder::Cubic],
            ..GridConfig::default()
        };
        let cells = expand(&grid, &PipelineConfig::default());
        assert_eq!(cells.len(), 4);
        assert_eq!(cells.iter().map(|c| c.j0).collect::<Vec<_>>(), vec![1, 1, 2, 2]);
    }

    #[test]
    fn empty_grid_is_the_base_config() {
        let base = PipelineConfig::default();
        let cells = expand(&GridConfig::default(), &base);
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].apply(&base), base);
    }

    #[test]
    fn best_cell_prefers_f1_then_smaller_j0() {
        let rs = vec![result(3, 0.8), result(2, 0.9), result(1, 0.9), result(4, 0.7)];
        assert_eq!(best_cell(&rs).unwrap().cell.j0, 1);
        let rs = vec![result(1, 0.5), result(2, 0.6)];
        assert_eq!(best_cell(&rs).unwrap().cell.j0, 2);
        assert!(best_cell(&[]).is_none());
    }
}

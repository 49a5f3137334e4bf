//! Command implementations behind the `isdarts` binary. Each command is a
//! plain function over paths, so tests and examples can drive them
//! in-process; the binary maps their errors onto stable exit codes.
//!
//! Exit codes: 0 success, 2 configuration or input problem, 3 non-finite
//! loss during training, 4 search-space fingerprint mismatch, 5 mask
//! missing from an oracle table.

use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{Method, RunConfig};
use crate::darts::{run_darts, swap_experiment, ArchParams, SwapPlan};
use crate::data::synth_generate;
use crate::error::{Error, Result};
use crate::oracle::{build_oracle, rank_correlation, OracleTable};
use crate::shrink::run_search;
use crate::space::{Mask, Subsets};
use crate::supernet::Supernet;

/// Process exit code for an error. Anything not covered by a dedicated
/// code is an input or configuration problem.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NonFinite { .. } => 3,
        Error::Fingerprint(_) => 4,
        Error::Lookup(_) => 5,
        _ => 2,
    }
}

/// What `search` hands back for in-process callers.
#[derive(Debug, Clone)]
pub struct SearchSummary {
    pub method: Method,
    pub out_dir: PathBuf,
    pub final_mask: Mask,
    pub val_accuracy: f64,
    pub epochs_run: usize,
}

/// Runs the configured search method and writes the run directory.
///
/// The config is loaded and fully validated before anything touches the
/// filesystem, so a broken config leaves no half-written run directory.
/// `seed` and `out` override the config when given.
pub fn cmd_search(
    config_path: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<SearchSummary> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    if let Some(dir) = out {
        config.out = Some(dir.to_path_buf());
    }
    let space = config.validate()?;
    let out_dir = config.out.clone().ok_or_else(|| {
        Error::Config("search needs an output directory: set `out` in the config or pass --out".into())
    })?;

    let data = synth_generate(&config.dataset)?;
    std::fs::create_dir_all(&out_dir)?;
    // The resolved config (overrides applied) makes the run directory
    // self-describing; compare and export read the space back from it.
    serde_json::to_writer_pretty(std::fs::File::create(out_dir.join("config.json"))?, &config)?;

    let mut net = Supernet::<f32>::build(&space, config.seed)?;
    let summary = match config.method {
        Method::IsDarts | Method::IDarts => {
            let schedule = config.effective_schedule();
            let result = run_search(
                &mut net,
                &data,
                &schedule,
                &config.hyper,
                config.iim_samples,
                config.seed,
                Some(&out_dir),
            )?;
            SearchSummary {
                method: config.method,
                out_dir: out_dir.clone(),
                final_mask: result.final_mask,
                val_accuracy: result.val_accuracy,
                epochs_run: result.epochs_run,
            }
        }
        Method::Darts => {
            let result = run_darts(
                &mut net,
                &data,
                config.darts_epochs(),
                &config.hyper,
                config.alpha_lr,
                config.seed,
                Some(&out_dir),
            )?;
            SearchSummary {
                method: config.method,
                out_dir: out_dir.clone(),
                final_mask: result.selected,
                val_accuracy: result.val_accuracy,
                epochs_run: result.epochs_run,
            }
        }
    };

    println!("method {}", summary.method);
    println!("run directory {}", summary.out_dir.display());
    println!("final mask {}", summary.final_mask.id_string());
    println!("val accuracy {:.4}", summary.val_accuracy);
    println!("epochs {}", summary.epochs_run);
    Ok(summary)
}

/// What `oracle` hands back for in-process callers.
#[derive(Debug, Clone)]
pub struct OracleSummary {
    pub out_file: PathBuf,
    pub subnets: usize,
    pub best_mask: String,
    pub best_val_accuracy: f64,
    pub fingerprint: String,
}

/// Trains every subnet of the configured space and writes the table.
pub fn cmd_oracle(config_path: &Path, out_file: &Path) -> Result<OracleSummary> {
    let config = RunConfig::load(config_path)?;
    let space = config.validate()?;
    let data = synth_generate(&config.dataset)?;
    let table = build_oracle(
        &space,
        &data,
        &config.hyper,
        config.oracle_train_budget,
        config.seed,
        config.oracle_cap as u128,
    )?;
    if let Some(parent) = out_file.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    table.save(out_file)?;
    let best = table.best();
    let summary = OracleSummary {
        out_file: out_file.to_path_buf(),
        subnets: table.records.len(),
        best_mask: best.mask_id.clone(),
        best_val_accuracy: best.val_accuracy,
        fingerprint: table.space_fingerprint.clone(),
    };
    println!("oracle file {}", summary.out_file.display());
    println!("subnets {}", summary.subnets);
    println!("best mask {}", summary.best_mask);
    println!("best val accuracy {:.4}", summary.best_val_accuracy);
    Ok(summary)
}

/// What `eval` hands back for in-process callers.
#[derive(Debug, Clone)]
pub struct EvalSummary {
    pub mask_id: String,
    pub val_accuracy: f64,
    pub regret: f64,
}

/// Looks one mask up in an oracle table and prints its regret.
pub fn cmd_eval(mask_path: &Path, oracle_path: &Path) -> Result<EvalSummary> {
    let mask: Mask = serde_json::from_reader(std::fs::File::open(mask_path)?)?;
    let table = OracleTable::load(oracle_path)?;
    let record = table.lookup(&mask)?;
    let summary = EvalSummary {
        mask_id: record.mask_id.clone(),
        val_accuracy: record.val_accuracy,
        regret: table.max_val_accuracy() - record.val_accuracy,
    };
    println!("mask {}", summary.mask_id);
    println!("val accuracy {:.4}", summary.val_accuracy);
    println!("regret {:.4}", summary.regret);
    Ok(summary)
}

/// One search run scored against the oracle. Method-specific fields stay
/// `None` where they do not apply (e.g. no α trajectory in a shrink run).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub dir: String,
    pub method: Method,
    pub mask_id: String,
    pub val_accuracy: f64,
    pub regret: f64,
    /// Kendall tau between α-based subnet scores and oracle accuracy.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha_tau: Option<f64>,
    /// Kendall tau between importance-based subnet scores and oracle
    /// accuracy (first measurement step, all candidates still active).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iim_tau: Option<f64>,
    /// Number of accuracy *increases* along the winner→loser swap
    /// sequence; each one contradicts the α ordering.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swap_violations: Option<usize>,
    /// Oracle accuracies along the swap sequence, starting at the
    /// selected mask.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub swap_accuracies: Option<Vec<f64>>,
}

/// Everything `compare` prints: per-run scores plus the oracle optimum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompareReport {
    pub oracle_best_mask: String,
    pub oracle_best_val_accuracy: f64,
    pub runs: Vec<RunReport>,
}

/// Scores one or more run directories against an oracle table and prints
/// a JSON report. `run_root` may be a single run directory or a parent
/// whose immediate subdirectories are runs.
pub fn cmd_compare(run_root: &Path, oracle_path: &Path) -> Result<CompareReport> {
    let table = OracleTable::load(oracle_path)?;
    let dirs = discover_runs(run_root)?;
    let mut runs = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        runs.push(report_run(dir, &table)?);
    }
    let best = table.best();
    let report = CompareReport {
        oracle_best_mask: best.mask_id.clone(),
        oracle_best_val_accuracy: best.val_accuracy,
        runs,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(report)
}

/// What `export-heatmap` hands back for in-process callers.
#[derive(Debug, Clone)]
pub struct HeatmapSummary {
    pub out_file: PathBuf,
    pub steps: usize,
    pub candidates: usize,
}

/// Pivots a run directory's per-step importance files into one
/// step-by-candidate matrix CSV. Cells of already-discarded candidates
/// are left empty.
pub fn cmd_export_heatmap(run_dir: &Path, out_file: &Path) -> Result<HeatmapSummary> {
    let config = RunConfig::load(&run_dir.join("config.json"))?;
    let space = config.validate()?;
    let subsets = space.subsets();
    let total = subsets.edge_slot.len();

    let mut steps: Vec<(usize, Vec<IimCsvRow>)> = Vec::new();
    let mut z = 1usize;
    loop {
        let path = run_dir.join(format!("iim_step_{z}.csv"));
        if !path.is_file() {
            break;
        }
        steps.push((z, read_iim_csv(&path)?));
        z += 1;
    }
    if steps.is_empty() {
        return Err(Error::Config(format!(
            "no iim_step_*.csv files under {} — export-heatmap needs a shrink-method run directory",
            run_dir.display()
        )));
    }

    // Rows of each step file list active candidates in ascending global
    // order; the mask in force during that measurement (all ones before
    // step 1, the previous step's mask afterwards) recovers the indices.
    let mut matrix: Vec<(usize, Vec<Option<f64>>)> = Vec::with_capacity(steps.len());
    for (z, rows) in &steps {
        let active: Vec<usize> = if *z == 1 {
            (0..total).collect()
        } else {
            let mask_path = run_dir.join(format!("mask_step_{}.json", z - 1));
            let mask: Mask = serde_json::from_reader(std::fs::File::open(&mask_path)?)?;
            mask.validate_against(&subsets)?;
            (0..total).filter(|&g| {
                let (h, pos) = subsets.position[g];
                mask.groups[h][pos]
            }).collect()
        };
        if rows.len() != active.len() {
            return Err(Error::Format(format!(
                "iim_step_{z}.csv holds {} rows but {} candidates were active",
                rows.len(),
                active.len()
            )));
        }
        let mut cells = vec![None; total];
        for (&g, row) in active.iter().zip(rows) {
            cells[g] = Some(row.iim);
        }
        matrix.push((*z, cells));
    }

    let labels = candidate_labels(&space, &subsets);
    let mut out = std::io::BufWriter::new(std::fs::File::create(out_file)?);
    writeln!(out, "step,{}", labels.join(","))?;
    for (z, cells) in &matrix {
        write!(out, "{z}")?;
        for cell in cells {
            match cell {
                Some(v) => write!(out, ",{v:.17e}")?,
                None => write!(out, ",")?,
            }
        }
        writeln!(out)?;
    }
    drop(out);

    let summary =
        HeatmapSummary { out_file: out_file.to_path_buf(), steps: matrix.len(), candidates: total };
    println!(
        "wrote {}: {} steps x {} candidates",
        summary.out_file.display(),
        summary.steps,
        summary.candidates
    );
    Ok(summary)
}

/// Human-readable column names, one per global candidate index. Falls
/// back to globally indexed names if edge+kind alone would collide.
fn candidate_labels(space: &crate::space::SearchSpace, subsets: &Subsets) -> Vec<String> {
    let total = subsets.edge_slot.len();
    let short: Vec<String> = (0..total)
        .map(|g| {
            let (edge, _) = subsets.edge_slot[g];
            format!("e{edge}_{}", space.candidate_kind(g).as_str())
        })
        .collect();
    if short.iter().collect::<HashSet<_>>().len() == total {
        return short;
    }
    short.into_iter().enumerate().map(|(g, s)| format!("c{g}_{s}")).collect()
}

fn discover_runs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join("config.json").is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut dirs = Vec::new();
    if root.is_dir() {
        for entry in std::fs::read_dir(root)? {
            let path = entry?.path();
            if path.join("config.json").is_file() {
                dirs.push(path);
            }
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Config(format!(
            "{} is not a run directory: expected config.json there or in an immediate subdirectory",
            root.display()
        )));
    }
    Ok(dirs)
}

fn report_run(dir: &Path, table: &OracleTable) -> Result<RunReport> {
    let config = RunConfig::load(&dir.join("config.json"))?;
    let space = config.validate()?;
    table.check_fingerprint(&space)?;
    let subsets = space.subsets();

    let mask: Mask = serde_json::from_reader(std::fs::File::open(dir.join("final_mask.json"))?)?;
    let record = table.lookup(&mask)?;
    let mut report = RunReport {
        dir: dir.display().to_string(),
        method: config.method,
        mask_id: record.mask_id.clone(),
        val_accuracy: record.val_accuracy,
        regret: table.max_val_accuracy() - record.val_accuracy,
        alpha_tau: None,
        iim_tau: None,
        swap_violations: None,
        swap_accuracies: None,
    };

    match config.method {
        Method::IsDarts | Method::IDarts => {
            let values = read_step1_iim_values(dir, &subsets)?;
            let scores = subnet_scores(&values, &subsets, table)?;
            report.iim_tau = Some(rank_correlation(&scores, table)?);
        }
        Method::Darts => {
            let alpha = read_final_alpha(dir, &subsets)?;
            let mut weights = vec![0.0f64; subsets.edge_slot.len()];
            for h in 0..alpha.vectors.len() {
                for (pos, s) in alpha.softmax(h).into_iter().enumerate() {
                    weights[subsets.groups[h].members[pos]] = s;
                }
            }
            let scores = subnet_scores(&weights, &subsets, table)?;
            report.alpha_tau = Some(rank_correlation(&scores, table)?);

            let plan = SwapPlan::from_alpha(&alpha, &mask);
            let feasible = max_feasible_swaps(&plan);
            if feasible > 0 {
                let outcome = swap_experiment(&mask, &plan, table, feasible)?;
                report.swap_violations = Some(outcome.violations);
                report.swap_accuracies = Some(outcome.accuracies);
            }
        }
    }
    Ok(report)
}

/// Longest prefix of the winner list whose subsets still hold an unused
/// loser — the largest swap count `swap_experiment` accepts for the plan.
fn max_feasible_swaps(plan: &SwapPlan) -> usize {
    let mut used = vec![0usize; plan.losers.len()];
    let mut feasible = 0;
    for (h, _, _) in &plan.winners {
        if used[*h] < plan.losers[*h].len() {
            used[*h] += 1;
            feasible += 1;
        } else {
            break;
        }
    }
    feasible
}

/// Per-subnet score: sum of per-candidate values over the subnet's active
/// candidates, for every mask in the table.
fn subnet_scores(
    values: &[f64],
    subsets: &Subsets,
    table: &OracleTable,
) -> Result<Vec<(String, f64)>> {
    let mut scores = Vec::with_capacity(table.records.len());
    for record in &table.records {
        let mask = Mask::from_id_string(&record.mask_id)?;
        mask.validate_against(subsets)?;
        let mut total = 0.0;
        for (h, group) in mask.groups.iter().enumerate() {
            for (pos, &bit) in group.iter().enumerate() {
                if bit {
                    total += values[subsets.groups[h].members[pos]];
                }
            }
        }
        scores.push((record.mask_id.clone(), total));
    }
    Ok(scores)
}

/// One parsed row of a per-step importance CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct IimCsvRow {
    pub step: usize,
    pub subset: String,
    pub edge: usize,
    pub kind: String,
    pub iim: f64,
    pub n_samples: usize,
}

/// Reads an `iim_step_{z}.csv` file back into rows.
pub fn read_iim_csv(path: &Path) -> Result<Vec<IimCsvRow>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?;
    if header != "step,subset_id,edge,candidate_kind,iim,n_samples" {
        return Err(Error::Format(format!(
            "{} has unexpected header '{header}'",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Format(format!(
                "{} line {}: expected 6 fields, found {}",
                path.display(),
                i + 2,
                fields.len()
            )));
        }
        let bad = |what: &str| {
            Error::Format(format!("{} line {}: invalid {what}", path.display(), i + 2))
        };
        rows.push(IimCsvRow {
            step: fields[0].parse().map_err(|_| bad("step"))?,
            subset: fields[1].to_string(),
            edge: fields[2].parse().map_err(|_| bad("edge"))?,
            kind: fields[3].to_string(),
            iim: fields[4].parse().map_err(|_| bad("iim"))?,
            n_samples: fields[5].parse().map_err(|_| bad("n_samples"))?,
        });
    }
    Ok(rows)
}

/// Values of every candidate at the first measurement step, indexed by
/// global candidate. Step 1 runs before any discard, so the file must
/// cover the whole space.
fn read_step1_iim_values(dir: &Path, subsets: &Subsets) -> Result<Vec<f64>> {
    let path = dir.join("iim_step_1.csv");
    let rows = read_iim_csv(&path)?;
    let total = subsets.edge_slot.len();
    if rows.len() != total {
        return Err(Error::Format(format!(
            "{} covers {} of {} candidates; the first step should cover all of them",
            path.display(),
            rows.len(),
            total
        )));
    }
    Ok(rows.into_iter().map(|r| r.iim).collect())
}

/// Reconstructs the final α snapshot from a darts run's `alpha.csv`.
fn read_final_alpha(dir: &Path, subsets: &Subsets) -> Result<ArchParams> {
    let path = dir.join("alpha.csv");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::Format(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{} is empty", path.display())))?;
    if header != "step,subset_id,candidate,alpha,softmax" {
        return Err(Error::Format(format!(
            "{} has unexpected header '{header}'",
            path.display()
        )));
    }

    let total = subsets.edge_slot.len();
    let mut parsed: Vec<(usize, usize, f64)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!(
                "{} line {}: expected 5 fields, found {}",
                path.display(),
                i + 2,
                fields.len()
            )));
        }
        let bad = |what: &str| {
            Error::Format(format!("{} line {}: invalid {what}", path.display(), i + 2))
        };
        let step: usize = fields[0].parse().map_err(|_| bad("step"))?;
        let candidate: usize = fields[2].parse().map_err(|_| bad("candidate"))?;
        let alpha: f64 = fields[3].parse().map_err(|_| bad("alpha"))?;
        if candidate >= total {
            return Err(bad("candidate index"));
        }
        parsed.push((step, candidate, alpha));
    }
    let last = parsed
        .iter()
        .map(|(s, _, _)| *s)
        .max()
        .ok_or_else(|| Error::Format(format!("{} holds no snapshot rows", path.display())))?;

    let mut params = ArchParams::new(subsets);
    let mut seen = vec![false; total];
    for (step, candidate, alpha) in parsed {
        if step != last {
            continue;
        }
        let (h, pos) = subsets.position[candidate];
        params.vectors[h][pos] = alpha;
        seen[candidate] = true;
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::Format(format!(
            "{} final snapshot covers {} of {total} candidates",
            path.display(),
            seen.iter().filter(|s| **s).count()
        )));
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darts::{write_alpha_csv, AlphaRow};
    use crate::iim::IimReport;
    use crate::space::SearchSpace;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Format("x".into())), 2);
        assert_eq!(exit_code(&Error::Usage("x".into())), 2);
        assert_eq!(exit_code(&Error::NonFinite { epoch: 3, detail: "x".into() }), 3);
        assert_eq!(exit_code(&Error::Fingerprint("x".into())), 4);
        assert_eq!(exit_code(&Error::Lookup("x".into())), 5);
    }

    #[test]
    fn iim_csv_round_trips_through_the_reader() {
        let space = SearchSpace::micro();
        let subsets = space.subsets();
        let report = IimReport {
            step: 2,
            values: (0..9).map(|g| if g == 4 { None } else { Some(g as f64 / 7.0) }).collect(),
            n_samples: 16,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("iim_step_2.csv");
        let kind_of = |g: usize| space.candidate_kind(g).as_str().to_string();
        report.write_csv(&path, &subsets, &kind_of).unwrap();

        let rows = read_iim_csv(&path).unwrap();
        assert_eq!(rows.len(), 8, "the None candidate has no row");
        assert!(rows.iter().all(|r| r.step == 2 && r.n_samples == 16));
        assert_eq!(rows[0].iim, 0.0);
        assert_eq!(rows[7].iim, 8.0 / 7.0);
        assert_eq!(rows[0].kind, "zero");
    }

    #[test]
    fn final_alpha_round_trips_through_the_reader() {
        let space = SearchSpace::micro();
        let subsets = space.subsets();
        let mut rows = Vec::new();
        for step in [0usize, 3] {
            for g in 0..9usize {
                let (h, _) = subsets.position[g];
                rows.push(AlphaRow {
                    step,
                    subset: subsets.groups[h].label.clone(),
                    candidate: g,
                    alpha: step as f64 + g as f64 / 10.0,
                    softmax: 1.0 / 3.0,
                });
            }
        }
        let dir = tempfile::tempdir().unwrap();
        write_alpha_csv(&dir.path().join("alpha.csv"), &rows).unwrap();

        let alpha = read_final_alpha(dir.path(), &subsets).unwrap();
        // Only the step-3 snapshot survives.
        for g in 0..9usize {
            let (h, pos) = subsets.position[g];
            assert_eq!(alpha.vectors[h][pos], 3.0 + g as f64 / 10.0);
        }
    }

    #[test]
    fn feasible_swaps_stop_at_the_first_starved_subset() {
        // Two subsets; subset 0 has one loser, subset 1 none. Winners are
        // ordered so the starved subset appears second.
        let plan = SwapPlan {
            winners: vec![(0, 0, 3.0), (1, 0, 2.0), (0, 1, 1.0)],
            losers: vec![vec![(2, 0.5)], vec![]],
        };
        assert_eq!(max_feasible_swaps(&plan), 1);
        let plan = SwapPlan {
            winners: vec![(0, 0, 3.0), (0, 1, 1.0)],
            losers: vec![vec![(2, 0.5), (3, 0.1)]],
        };
        assert_eq!(max_feasible_swaps(&plan), 2);
    }

    #[test]
    fn discover_runs_finds_single_and_nested_layouts() {
        let root = tempfile::tempdir().unwrap();
        // No config.json anywhere: an error naming the path.
        let err = discover_runs(root.path()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        // Nested layout: two runs under the root, sorted by name.
        std::fs::create_dir_all(root.path().join("b_run")).unwrap();
        std::fs::create_dir_all(root.path().join("a_run")).unwrap();
        std::fs::write(root.path().join("a_run/config.json"), "{}").unwrap();
        std::fs::write(root.path().join("b_run/config.json"), "{}").unwrap();
        let dirs = discover_runs(root.path()).unwrap();
        assert_eq!(dirs.len(), 2);
        assert!(dirs[0].ends_with("a_run"));

        // A config.json at the top level wins: single-run layout.
        std::fs::write(root.path().join("config.json"), "{}").unwrap();
        let dirs = discover_runs(root.path()).unwrap();
        assert_eq!(dirs, vec![root.path().to_path_buf()]);
    }

    #[test]
    fn candidate_labels_are_unique_for_presets() {
        for space in [SearchSpace::micro(), SearchSpace::bench(), SearchSpace::wide()] {
            let subsets = space.subsets();
            let labels = candidate_labels(&space, &subsets);
            assert_eq!(labels.len(), subsets.edge_slot.len());
            assert_eq!(labels.iter().collect::<HashSet<_>>().len(), labels.len());
        }
        let micro = SearchSpace::micro();
        let labels = candidate_labels(&micro, &micro.subsets());
        assert_eq!(labels[0], "e0_zero");
        assert_eq!(labels[8], "e2_conv3x3");
    }
}

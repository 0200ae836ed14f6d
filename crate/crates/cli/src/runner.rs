//! The `run`, `sweep` and `compare` verbs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use evosearch_core::baselines::{best_of_n, particle_sampling};
use evosearch_core::evosearch::evosearch_run;
use evosearch_core::metrics::{angular_coverage, diversity_l2, events_to_batch, mode_coverage};
use evosearch_core::{Event, SearchResult};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method, Resolved};
use crate::error::{CliError, CliResult};
use crate::io::{read_events, read_summary, write_events, write_summary, SummaryRow};
use crate::plot::{line_chart_svg, scatter_svg};

/// Command-line overrides shared by `run` and `sweep`.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed_override: Option<u64>,
    pub output_dir: Option<PathBuf>,
}

/// Identity of a run directory, used by `compare`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub reward: String,
    pub methods: Vec<String>,
    pub seeds: Vec<u64>,
    pub nfe_budget: Option<u64>,
}

pub fn execute(resolved: &Resolved, method: Method, seed: u64) -> CliResult<SearchResult> {
    let s = &resolved.sampler;
    let f = &resolved.reward;
    Ok(match method {
        Method::Evosearch => evosearch_run(&resolved.evo, s, f, seed)?,
        Method::BestOfN => best_of_n(resolved.best_of_n, s, f, seed)?,
        Method::ParticleSampling => particle_sampling(&resolved.particle, s, f, seed)?,
    })
}

/// Events sorted by descending reward, ties by evaluation order.
fn ranked(events: &[Event]) -> Vec<&Event> {
    let mut order: Vec<&Event> = events.iter().collect();
    order.sort_by(|a, b| b.reward.total_cmp(&a.reward).then(a.index.cmp(&b.index)));
    order
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Per-run metrics, computed from an event log alone (plus the reward-call
/// count, which events do not carry).
pub fn summarize(
    method: Method,
    seed: u64,
    events: &[Event],
    reward_calls: u64,
    resolved: &Resolved,
) -> CliResult<SummaryRow> {
    let order = ranked(events);
    let best = order.first().ok_or_else(|| {
        CliError::Runtime(format!("{} seed {seed}: empty event log", method.name()))
    })?;
    let top: Vec<&Event> = order.iter().take(resolved.top_k).copied().collect();
    let div: Vec<&Event> = order.iter().take(resolved.diversity_top).copied().collect();
    let top_batch = events_to_batch(&top)?;
    let diversity = if div.len() >= 2 {
        diversity_l2(&events_to_batch(&div)?)?
    } else {
        f64::NAN
    };
    Ok(SummaryRow {
        method: method.name().to_string(),
        seed,
        model_calls: events.iter().map(|e| e.cumulative_nfe).max().unwrap_or(0),
        reward_calls,
        num_events: events.len(),
        best_reward: best.reward,
        top_mean_reward: mean(top.iter().map(|e| e.reward)),
        diversity,
        diversity_mean_reward: mean(div.iter().map(|e| e.reward)),
        angular_coverage: angular_coverage(&top_batch, &resolved.coverage),
        mode_coverage: mode_coverage(&top_batch, resolved.sampler.model(), &resolved.coverage),
    })
}

/// Mean and sample standard deviation of the running best reward over seeds,
/// at every NFE value where all seeds have at least one evaluation.
pub fn mean_best_curve(logs: &[Vec<Event>]) -> Vec<(u64, f64, f64)> {
    let curves: Vec<Vec<(u64, f64)>> = logs
        .iter()
        .map(|events| {
            let mut best = f64::NEG_INFINITY;
            let mut order: Vec<&Event> = events.iter().collect();
            order.sort_by_key(|e| (e.cumulative_nfe, e.index));
            order
                .iter()
                .map(|e| {
                    best = best.max(e.reward);
                    (e.cumulative_nfe, best)
                })
                .collect()
        })
        .collect();
    let mut grid: Vec<u64> = curves.iter().flatten().map(|p| p.0).collect();
    grid.sort_unstable();
    grid.dedup();
    grid.into_iter()
        .filter_map(|x| {
            let vals: Option<Vec<f64>> = curves
                .iter()
                .map(|c| c.iter().take_while(|p| p.0 <= x).last().map(|p| p.1))
                .collect();
            let vals = vals?;
            let m = mean(vals.iter().copied());
            let sd = if vals.len() > 1 {
                (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            Some((x, m, sd))
        })
        .collect()
}

fn create_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn events_path(dir: &Path, method: Method, seed: u64) -> PathBuf {
    dir.join("events")
        .join(format!("{}_seed{seed}.csv", method.name()))
}

/// Runs every (method, seed) pair of one budget into `dir` and writes event
/// logs, `summary.csv`, `curves.csv` and plots. Summaries and plots are
/// computed from the event logs as read back from disk.
pub fn run_block(
    cfg: &ExperimentConfig,
    resolved: &Resolved,
    seeds: &[u64],
    dir: &Path,
) -> CliResult<Vec<SummaryRow>> {
    create_dir(&dir.join("events"))?;
    create_dir(&dir.join("plots"))?;
    let mut rows = Vec::new();
    let mut curve_series = Vec::new();
    let mut scatter_groups = Vec::new();
    let mut curve_csv = String::from("method,nfe,mean_best,std_best,seeds\n");

    for &method in &cfg.methods {
        let mut logs = Vec::new();
        for &seed in seeds {
            let result = execute(resolved, method, seed)?;
            let path = events_path(dir, method, seed);
            write_events(&path, &result.events)?;
            let events = read_events(&path)?;
            let row = summarize(method, seed, &events, result.ledger.reward_calls, resolved)?;
            log::info!(
                "{} seed {seed}: best reward {:.4}, {} model calls",
                method.name(),
                row.best_reward,
                row.model_calls
            );
            rows.push(row);
            logs.push(events);
        }
        let curve = mean_best_curve(&logs);
        for (nfe, m, sd) in &curve {
            curve_csv.push_str(&format!(
                "{},{nfe},{m},{sd},{}\n",
                method.name(),
                seeds.len()
            ));
        }
        curve_series.push((
            method.name().to_string(),
            curve
                .iter()
                .map(|&(x, y, _)| (x as f64, y))
                .collect::<Vec<_>>(),
        ));
        let pts: Vec<[f64; 2]> = logs
            .iter()
            .flat_map(|events| {
                ranked(events)
                    .into_iter()
                    .take(resolved.top_k)
                    .map(|e| [e.x[0], e.x.get(1).copied().unwrap_or(0.0)])
                    .collect::<Vec<_>>()
            })
            .collect();
        let group = vec![(method.name().to_string(), pts)];
        write_text(
            &dir.join("plots")
                .join(format!("scatter_{}.svg", method.name())),
            &scatter_svg(
                resolved.sampler.model(),
                &resolved.reward,
                &group,
                &format!("{}: top {} per seed", method.name(), resolved.top_k),
            ),
        )?;
        scatter_groups.extend(group);
    }

    write_summary(&dir.join("summary.csv"), &rows)?;
    write_text(&dir.join("curves.csv"), &curve_csv)?;
    write_text(
        &dir.join("plots").join("reward_vs_nfe.svg"),
        &line_chart_svg(
            &curve_series,
            "Best reward vs NFE (mean over seeds)",
            "NFE",
            "best reward",
            false,
        ),
    )?;
    write_text(
        &dir.join("plots").join("scatter_all.svg"),
        &scatter_svg(
            resolved.sampler.model(),
            &resolved.reward,
            &scatter_groups,
            "Top samples, all methods",
        ),
    )?;
    Ok(rows)
}

fn prepare(
    config_path: &Path,
    opts: &RunOptions,
) -> CliResult<(ExperimentConfig, Vec<u64>, PathBuf, String)> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    let cfg = ExperimentConfig::load(config_path)?;
    let seeds = match opts.seed_override {
        Some(s) => vec![s],
        None => cfg.seeds.clone(),
    };
    let out = opts
        .output_dir
        .clone()
        .unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, seeds, out, text))
}

fn write_manifest(
    dir: &Path,
    cfg: &ExperimentConfig,
    resolved: &Resolved,
    seeds: &[u64],
) -> CliResult<()> {
    let manifest = Manifest {
        reward: resolved.reward.describe(),
        methods: cfg.methods.iter().map(|m| m.name().to_string()).collect(),
        seeds: seeds.to_vec(),
        nfe_budget: resolved.budget,
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&dir.join("manifest.toml"), &text)
}

/// `run`: one budget, every configured method and seed.
pub fn run(config_path: &Path, opts: &RunOptions) -> CliResult<Vec<SummaryRow>> {
    let (cfg, seeds, out, text) = prepare(config_path, opts)?;
    let resolved = cfg.resolve(None)?;
    create_dir(&out)?;
    write_text(&out.join("config.toml"), &text)?;
    write_manifest(&out, &cfg, &resolved, &seeds)?;
    run_block(&cfg, &resolved, &seeds, &out)
}

/// `sweep`: one run block per budget under `budget_<B>/`, plus `sweep.csv`
/// and a scaling plot of the mean best reward against budget.
pub fn sweep(
    config_path: &Path,
    budgets: Option<Vec<u64>>,
    opts: &RunOptions,
) -> CliResult<Vec<(u64, SummaryRow)>> {
    let (cfg, seeds, out, text) = prepare(config_path, opts)?;
    let budgets = budgets
        .or_else(|| cfg.sweep.budgets.clone())
        .ok_or_else(|| CliError::Config("sweep.budgets: no budgets given".into()))?;
    if budgets.is_empty() || budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Config(format!(
            "sweep.budgets: {budgets:?} must be non-empty and strictly ascending"
        )));
    }
    // resolve every budget before spending compute on any
    let resolved: Vec<Resolved> = budgets
        .iter()
        .map(|&b| cfg.resolve(Some(b)))
        .collect::<CliResult<_>>()?;
    create_dir(&out)?;
    write_text(&out.join("config.toml"), &text)?;

    let mut all = Vec::new();
    for (b, r) in budgets.iter().zip(&resolved) {
        let dir = out.join(format!("budget_{b}"));
        create_dir(&dir)?;
        write_manifest(&dir, &cfg, r, &seeds)?;
        for row in run_block(&cfg, r, &seeds, &dir)? {
            all.push((*b, row));
        }
    }

    let mut csv = String::from("budget,method,seed,model_calls,best_reward\n");
    let mut by_method: BTreeMap<&str, BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for (b, row) in &all {
        csv.push_str(&format!(
            "{b},{},{},{},{}\n",
            row.method, row.seed, row.model_calls, row.best_reward
        ));
        by_method
            .entry(row.method.as_str())
            .or_default()
            .entry(*b)
            .or_default()
            .push(row.best_reward);
    }
    write_text(&out.join("sweep.csv"), &csv)?;
    let series: Vec<(String, Vec<(f64, f64)>)> = cfg
        .methods
        .iter()
        .filter_map(|m| by_method.get(m.name()).map(|v| (m.name(), v)))
        .map(|(name, per_budget)| {
            let pts = per_budget
                .iter()
                .map(|(b, v)| (*b as f64, mean(v.iter().copied())))
                .collect();
            (name.to_string(), pts)
        })
        .collect();
    write_text(
        &out.join("scaling.svg"),
        &line_chart_svg(
            &series,
            "Best reward vs budget (mean over seeds)",
            "NFE budget",
            "best reward",
            true,
        ),
    )?;
    Ok(all)
}

/// One aggregated line of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub run: String,
    pub method: String,
    pub seeds: usize,
    pub best_mean: f64,
    pub best_std: f64,
    pub diversity_mean: f64,
    pub coverage_mean: f64,
    pub model_calls_mean: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let m = mean(v.iter().copied());
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (m, sd)
}

/// `compare`: one row per (run directory, method), in directory order and
/// then method order of first appearance.
pub fn compare(run_dirs: &[PathBuf]) -> CliResult<(Vec<CompareRow>, String, String)> {
    if run_dirs.is_empty() {
        return Err(CliError::Config(
            "compare: at least one run directory is required".into(),
        ));
    }
    let mut reward: Option<String> = None;
    let mut rows = Vec::new();
    for dir in run_dirs {
        let path = dir.join("manifest.toml");
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let manifest: Manifest = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        match &reward {
            None => reward = Some(manifest.reward.clone()),
            Some(r) if *r != manifest.reward => {
                return Err(CliError::Config(format!(
                    "{}: reward `{}` differs from `{r}`",
                    dir.display(),
                    manifest.reward
                )))
            }
            Some(_) => {}
        }
        let summary = read_summary(&dir.join("summary.csv"))?;
        let mut methods: Vec<&str> = Vec::new();
        for row in &summary {
            if !methods.contains(&row.method.as_str()) {
                methods.push(&row.method);
            }
        }
        for method in methods {
            let sel: Vec<&SummaryRow> = summary.iter().filter(|r| r.method == method).collect();
            let pick = |f: fn(&SummaryRow) -> f64| sel.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let (best_mean, best_std) = mean_std(&pick(|r| r.best_reward));
            rows.push(CompareRow {
                run: dir.display().to_string(),
                method: method.to_string(),
                seeds: sel.len(),
                best_mean,
                best_std,
                diversity_mean: mean_std(&pick(|r| r.diversity)).0,
                coverage_mean: mean_std(&pick(|r| r.angular_coverage)).0,
                model_calls_mean: mean_std(&pick(|r| r.model_calls as f64)).0,
            });
        }
    }

    let mut md = String::from(
        "| run | method | seeds | best reward | diversity | angular coverage | NFE |\n|---|---|---|---|---|---|---|\n",
    );
    let mut csv = String::from(
        "run,method,seeds,best_mean,best_std,diversity_mean,coverage_mean,model_calls_mean\n",
    );
    for r in &rows {
        md.push_str(&format!(
            "| {} | {} | {} | {:.4} ± {:.4} | {:.4} | {:.3} | {:.0} |\n",
            r.run,
            r.method,
            r.seeds,
            r.best_mean,
            r.best_std,
            r.diversity_mean,
            r.coverage_mean,
            r.model_calls_mean
        ));
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.run,
            r.method,
            r.seeds,
            r.best_mean,
            r.best_std,
            r.diversity_mean,
            r.coverage_mean,
            r.model_calls_mean
        ));
    }
    Ok((rows, md, csv))
}

/// Writes `compare.md` and `compare.csv` into `dir`.
pub fn write_comparison(dir: &Path, md: &str, csv: &str) -> CliResult<()> {
    create_dir(dir)?;
    write_text(&dir.join("compare.md"), md)?;
    write_text(&dir.join("compare.csv"), csv)
}

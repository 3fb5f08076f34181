//! Experiment orchestration: fold ingestion, per-fold bias models, staged
//! solve and evaluation cells with completion markers, and deterministic
//! CSV assembly.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use ndarray::Array2;
use rayon::prelude::*;

use crate::bias::{
    fit_biases, from_interactions, load_bias_model, save_bias_model, to_interactions, BiasConfig,
    BiasModel,
};
use crate::dataset::{
    load_fold_cache, make_folds, parse_movielens_100k, parse_movielens_1m, save_fold_cache,
    FoldSplit, GenreMatrix,
};
use crate::error::{Error, Result};
use crate::experiment::config::{DatasetKind, ExperimentConfig, StrategyKind};
use crate::metrics::{evaluate_lists, frequency_distribution, EvalReport, REPORT_HEADER};
use crate::rank::{
    candidate_sets, rank_rerank, rank_standard, CandidatePolicy, RecommendationList, Strategy,
};
use crate::solver::{
    build_diversity_operator, load_matrix, save_matrix, solve_mc, solve_mcad, DiversityOperator,
    SolveMeta, SolverConfig, SolverState, ZInit,
};

/// Rounds to 12 significant digits so swept values make stable keys and
/// file names.
pub fn round_sig(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let mag = v.abs().log10().floor();
    let scale = 10f64.powf(11.0 - mag);
    (v * scale).round() / scale
}

/// One solver invocation: unique per (fold, replication, lambda pair).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveKey {
    pub fold: usize,
    pub rep: usize,
    pub lambda_n: f64,
    pub lambda_d: f64,
}

impl SolveKey {
    pub fn id(&self) -> String {
        format!(
            "f{}_r{}_ln{}_ld{}",
            self.fold, self.rep, self.lambda_n, self.lambda_d
        )
    }

    fn dedupe_key(&self) -> (usize, usize, u64, u64) {
        (
            self.fold,
            self.rep,
            self.lambda_n.to_bits(),
            self.lambda_d.to_bits(),
        )
    }
}

/// One evaluation cell: a strategy at one grid point of one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCell {
    pub fold: usize,
    pub rep: usize,
    pub strategy: StrategyKind,
    pub lambda_n: f64,
    pub lambda_d: f64,
    pub t_r: Option<f64>,
}

impl EvalCell {
    pub fn id(&self) -> String {
        let mut id = format!(
            "f{}_r{}_{}_ln{}",
            self.fold, self.rep, self.strategy, self.lambda_n
        );
        if self.strategy == StrategyKind::Mcad {
            id.push_str(&format!("_ld{}", self.lambda_d));
        }
        if let Some(t) = self.t_r {
            id.push_str(&format!("_tr{t}"));
        }
        id
    }

    pub fn solve_key(&self) -> SolveKey {
        SolveKey {
            fold: self.fold,
            rep: self.rep,
            lambda_n: self.lambda_n,
            lambda_d: self.lambda_d,
        }
    }
}

/// The resolved grid: deduplicated solves plus evaluation cells in
/// deterministic order.
#[derive(Debug, Clone)]
pub struct Plan {
    pub solves: Vec<SolveKey>,
    pub evals: Vec<EvalCell>,
}

pub fn plan(config: &ExperimentConfig) -> Plan {
    let mut solves: Vec<SolveKey> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut evals = Vec::new();
    let mut push_solve = |key: SolveKey| {
        if seen.insert(key.dedupe_key()) {
            solves.push(key);
        }
    };

    for fold in config.active_folds() {
        for rep in 0..config.replications {
            for &lambda_n in &config.lambda_n_grid {
                for &strategy in &config.strategies {
                    match strategy {
                        StrategyKind::Mc => {
                            let cell = EvalCell {
                                fold,
                                rep,
                                strategy,
                                lambda_n,
                                lambda_d: 0.0,
                                t_r: None,
                            };
                            push_solve(cell.solve_key());
                            evals.push(cell);
                        }
                        StrategyKind::Mcad => {
                            for &ratio in &config.lambda_ratio_grid {
                                let cell = EvalCell {
                                    fold,
                                    rep,
                                    strategy,
                                    lambda_n,
                                    lambda_d: round_sig(ratio * lambda_n),
                                    t_r: None,
                                };
                                push_solve(cell.solve_key());
                                evals.push(cell);
                            }
                        }
                        StrategyKind::McIa | StrategyKind::McRprv => {
                            for &t_r in &config.t_r_grid {
                                let cell = EvalCell {
                                    fold,
                                    rep,
                                    strategy,
                                    lambda_n,
                                    lambda_d: 0.0,
                                    t_r: Some(t_r),
                                };
                                push_solve(cell.solve_key());
                                evals.push(cell);
                            }
                        }
                    }
                }
            }
        }
    }
    Plan { solves, evals }
}

/// Immutable shared state for one run.
#[derive(Debug)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub folds: Vec<FoldSplit>,
    pub genres: GenreMatrix,
    pub divop: DiversityOperator,
}

impl RunContext {
    fn dir(&self, sub: &str) -> PathBuf {
        self.config.output_dir.join(sub)
    }

    fn bias_path(&self, fold: usize, rep: usize) -> PathBuf {
        self.dir("bias").join(format!("bias_f{fold}_r{rep}.txt"))
    }

    fn solve_path(&self, key: &SolveKey) -> PathBuf {
        self.dir("solves").join(format!("z_{}.bin", key.id()))
    }

    fn trace_path(&self, key: &SolveKey) -> PathBuf {
        self.dir("traces").join(format!("trace_{}.csv", key.id()))
    }

    fn rows_path(&self, cell: &EvalCell) -> PathBuf {
        self.dir("cells").join(format!("{}.rows.csv", cell.id()))
    }

    fn freq_path(&self, cell: &EvalCell, n: usize) -> PathBuf {
        self.dir("freq")
            .join(format!("freqdist_{}_n{n}.csv", cell.id()))
    }
}

fn bias_seed(seed: u64, fold: usize, rep: usize) -> u64 {
    let mut z = seed ^ (fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (rep as u64).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 31)
}

/// Parses (or reuses the cached) dataset, builds folds and the diversity
/// operator.
pub fn ingest(config: &ExperimentConfig) -> Result<RunContext> {
    config.validate()?;
    let cache_dir = config.output_dir.join("folds");
    let (folds, genres) = if cache_dir.join("manifest.json").exists() {
        let (folds, genres, label) = load_fold_cache(&cache_dir)?;
        if label != config.dataset.label() {
            return Err(Error::Config(format!(
                "fold cache at {} holds dataset {label:?} but config expects {:?}",
                cache_dir.display(),
                config.dataset.label()
            )));
        }
        if folds.len() != config.folds {
            return Err(Error::Config(format!(
                "fold cache holds {} folds but config expects {}",
                folds.len(),
                config.folds
            )));
        }
        if let Some(fold) = folds.first() {
            if fold.seed != config.seed {
                return Err(Error::Config(format!(
                    "fold cache at {} was split with seed {} but config says {}; \
                     clear the cache or restore the seed",
                    cache_dir.display(),
                    fold.seed,
                    config.seed
                )));
            }
        }
        log::info!("reusing fold cache at {}", cache_dir.display());
        (folds, genres)
    } else {
        let (triples, genres) = match config.dataset {
            DatasetKind::Ml100k => parse_movielens_100k(
                &config.data_dir.join("u.data"),
                &config.data_dir.join("u.item"),
            )?,
            DatasetKind::Ml1m => parse_movielens_1m(
                &config.data_dir.join("ratings.dat"),
                &config.data_dir.join("movies.dat"),
            )?,
        };
        log::info!(
            "parsed {} ratings over {} users x {} items",
            triples.len(),
            triples.num_users,
            triples.num_items
        );
        let folds = make_folds(&triples, config.folds, config.seed)?;
        save_fold_cache(&cache_dir, config.dataset.label(), &folds, &genres)?;
        (folds, genres)
    };
    let divop = build_diversity_operator(&genres)?;
    Ok(RunContext {
        config: config.clone(),
        folds,
        genres,
        divop,
    })
}

fn ensure_bias(ctx: &RunContext, fold: usize, rep: usize) -> Result<BiasModel> {
    let path = ctx.bias_path(fold, rep);
    if path.exists() {
        return load_bias_model(&path);
    }
    let config = BiasConfig {
        delta: ctx.config.bias_delta,
        learning_rate: ctx.config.bias_learning_rate,
        epochs: ctx.config.bias_epochs,
        seed: bias_seed(ctx.config.seed, fold, rep),
    };
    let model = fit_biases(&ctx.folds[fold].train, &config)?;
    save_bias_model(&path, &model)?;
    Ok(model)
}

fn solver_config(ctx: &RunContext, key: &SolveKey) -> SolverConfig {
    // eta only damps the step when lambda_d = 0, so plain MC solves take
    // the undamped iteration; split solves keep eta small (iteration count
    // grows like 1 + eta, and eta = lambda_n stalls past the iteration
    // budget at MovieLens scale)
    let eta = if key.lambda_d == 0.0 {
        Some(0.0)
    } else {
        ctx.config.eta.or(Some(key.lambda_n.min(0.3)))
    };
    SolverConfig {
        lambda_n: key.lambda_n,
        lambda_d: key.lambda_d,
        eta,
        max_iter: ctx.config.max_iter,
        tol: ctx.config.tol,
        w_mode: ctx.config.w_mode,
        init: ZInit::Zeros,
        seed: ctx.config.seed,
    }
}

fn write_trace(path: &Path, state: &SolverState) -> Result<()> {
    let mut out = String::from("iteration,objective\n");
    for (k, obj) in state.objective_trace.iter().enumerate() {
        out.push_str(&format!("{k},{obj}\n"));
    }
    write_atomic(path, out.as_bytes())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Runs one solve cell and persists the completed matrix plus its
/// objective trace. Reuses an existing artifact.
pub fn ensure_solve(ctx: &RunContext, key: &SolveKey) -> Result<PathBuf> {
    let path = ctx.solve_path(key);
    if path.exists() {
        return Ok(path);
    }
    let bias = ensure_bias(ctx, key.fold, key.rep)?;
    let y = to_interactions(&ctx.folds[key.fold].train, &bias)?;
    let config = solver_config(ctx, key);
    let state = if key.lambda_d == 0.0 {
        solve_mc(&y, &config)?
    } else {
        solve_mcad(&y, &ctx.divop, &config)?
    };
    if !state.converged {
        log::warn!(
            "solve {} hit max_iter = {} without meeting the delta rule",
            key.id(),
            config.max_iter
        );
    }
    write_trace(&ctx.trace_path(key), &state)?;
    let tmp = path.with_extension("bin.tmp");
    save_matrix(&tmp, &state.z, &SolveMeta::from_state(&state))?;
    fs::rename(&tmp, &path)?;
    log::info!(
        "solved {} in {} iterations (rank {}, objective {:.6})",
        key.id(),
        state.iterations,
        state.rank,
        state.final_objective()
    );
    Ok(path)
}

fn lists_for_cell(
    ctx: &RunContext,
    cell: &EvalCell,
    preds: &Array2<f64>,
    policy: CandidatePolicy,
    n: usize,
) -> Result<Vec<RecommendationList>> {
    let fold = &ctx.folds[cell.fold];
    let candidates = candidate_sets(&fold.train, Some(&fold.test), policy)?;
    let lists = match cell.strategy {
        StrategyKind::Mc | StrategyKind::Mcad => rank_standard(&preds.view(), &candidates, n),
        StrategyKind::McIa => rank_rerank(
            &preds.view(),
            &fold.train,
            &candidates,
            Strategy::ItemAverage,
            cell.t_r.expect("IA cell carries a threshold"),
            n,
        ),
        StrategyKind::McRprv => rank_rerank(
            &preds.view(),
            &fold.train,
            &candidates,
            Strategy::ReversePredicted,
            cell.t_r.expect("RPRV cell carries a threshold"),
            n,
        ),
    };
    Ok(lists)
}

fn write_freq_csv(
    ctx: &RunContext,
    cell: &EvalCell,
    n: usize,
    lists: &[RecommendationList],
) -> Result<()> {
    let fold = &ctx.folds[cell.fold];
    let dist = frequency_distribution(lists, fold.train.num_items);
    let mut out = String::from("item_id,count\n");
    for &(item, count) in &dist.ranked {
        out.push_str(&format!(
            "{},{}\n",
            fold.train.item_ids[item as usize],
            count
        ));
    }
    write_atomic(&ctx.freq_path(cell, n), out.as_bytes())
}

type CellLists = Vec<(usize, CandidatePolicy, Vec<RecommendationList>)>;

fn evaluate_cell_inner(ctx: &RunContext, cell: &EvalCell) -> Result<(Vec<EvalReport>, CellLists)> {
    let z_path = ctx.solve_path(&cell.solve_key());
    if !z_path.exists() {
        return Err(Error::Validation(format!(
            "cell {}: solve artifact {} is missing",
            cell.id(),
            z_path.display()
        )));
    }
    let (z, _meta) = load_matrix(&z_path)?;
    let bias = load_bias_model(&ctx.bias_path(cell.fold, cell.rep))?;
    let preds = from_interactions(&z, &bias);
    let fold = &ctx.folds[cell.fold];

    let mut rows = Vec::new();
    let mut all_lists = Vec::new();
    for &n in &ctx.config.n_values {
        for &policy in &ctx.config.candidate_policies {
            let lists = lists_for_cell(ctx, cell, &preds, policy, n)?;
            let (precision, recall, mae, rmse, id, ad, nv, gini) = evaluate_lists(
                &lists,
                &preds.view(),
                &fold.train,
                &fold.test,
                &ctx.genres,
                ctx.config.relevance_threshold,
            );
            if policy == CandidatePolicy::AllUnrated {
                write_freq_csv(ctx, cell, n, &lists)?;
            }
            rows.push(EvalReport {
                dataset: ctx.config.dataset.label().to_string(),
                fold: cell.fold,
                strategy: cell.strategy.to_string(),
                lambda_n: cell.lambda_n,
                lambda_d: cell.lambda_d,
                t_r: cell.t_r,
                n,
                candidate_policy: policy.to_string(),
                precision,
                recall,
                mae,
                rmse,
                individual_diversity: id,
                aggregate_diversity: ad,
                novelty: nv,
                gini,
            });
            all_lists.push((n, policy, lists));
        }
    }
    Ok((rows, all_lists))
}

/// Evaluates one cell: ranks and scores every (N, policy) combination from
/// the saved matrix.
pub fn evaluate_cell(ctx: &RunContext, cell: &EvalCell) -> Result<Vec<EvalReport>> {
    evaluate_cell_inner(ctx, cell).map(|(rows, _)| rows)
}

fn write_cell_rows(ctx: &RunContext, cell: &EvalCell, rows: &[EvalReport]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&row.to_csv_row());
        out.push('\n');
    }
    write_atomic(&ctx.rows_path(cell), out.as_bytes())
}

/// Outcome summary of a sweep.
#[derive(Debug)]
pub struct RunSummary {
    pub reports_path: PathBuf,
    pub cells_total: usize,
    pub cells_failed: usize,
    pub rows_written: usize,
}

/// Executes the full grid: stage 1 solves, stage 2 evaluations, then
/// assembles `reports.csv` in plan order. Completed cells are skipped on
/// rerun; failures are recorded in `errors.csv` and abort only their own
/// cell.
pub fn run_experiment(ctx: &RunContext) -> Result<RunSummary> {
    for sub in ["bias", "solves", "traces", "cells", "freq"] {
        fs::create_dir_all(ctx.dir(sub))?;
    }
    // artifacts encode (fold, rep, lambda) but not the other knobs, so a
    // resumed sweep must run under the settings that produced them
    let fingerprint = ctx.config.fingerprint();
    let fingerprint_path = ctx.config.output_dir.join("run_config.txt");
    if fingerprint_path.exists() {
        let stored = fs::read_to_string(&fingerprint_path)?;
        if stored != fingerprint {
            return Err(Error::Config(format!(
                "{} holds artifacts from a different configuration; use a fresh \
                 output_dir or restore the recorded settings:\n{stored}",
                ctx.config.output_dir.display()
            )));
        }
    } else {
        fs::write(&fingerprint_path, &fingerprint)?;
    }
    let plan = plan(&ctx.config);
    let errors: Mutex<Vec<(String, String, String)>> = Mutex::new(Vec::new());

    // bias models are shared per (fold, rep); fit them up front
    for fold in ctx.config.active_folds() {
        for rep in 0..ctx.config.replications {
            if let Err(e) = ensure_bias(ctx, fold, rep) {
                errors.lock().unwrap().push((
                    format!("bias_f{fold}_r{rep}"),
                    "bias".into(),
                    e.to_string(),
                ));
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.config.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;

    pool.install(|| {
        plan.solves.par_iter().for_each(|key| {
            if let Err(e) = ensure_solve(ctx, key) {
                errors
                    .lock()
                    .unwrap()
                    .push((key.id(), "solve".into(), e.to_string()));
            }
        });
        plan.evals.par_iter().for_each(|cell| {
            if ctx.rows_path(cell).exists() {
                return;
            }
            match evaluate_cell(ctx, cell) {
                Ok(rows) => {
                    if let Err(e) = write_cell_rows(ctx, cell, &rows) {
                        errors
                            .lock()
                            .unwrap()
                            .push((cell.id(), "write".into(), e.to_string()));
                    }
                }
                Err(e) => {
                    errors
                        .lock()
                        .unwrap()
                        .push((cell.id(), "evaluate".into(), e.to_string()));
                }
            }
        });
    });

    // deterministic assembly in plan order
    let mut report = String::from(REPORT_HEADER);
    report.push('\n');
    let mut rows_written = 0usize;
    let mut cells_failed = 0usize;
    for cell in &plan.evals {
        match fs::read_to_string(ctx.rows_path(cell)) {
            Ok(rows) => {
                rows_written += rows.lines().count();
                report.push_str(&rows);
            }
            Err(_) => cells_failed += 1,
        }
    }
    let reports_path = ctx.config.output_dir.join("reports.csv");
    write_atomic(&reports_path, report.as_bytes())?;

    let mut errs = errors.into_inner().unwrap();
    errs.sort();
    let errors_path = ctx.config.output_dir.join("errors.csv");
    if errs.is_empty() {
        let _ = fs::remove_file(&errors_path);
    } else {
        let mut out = String::from("cell,stage,error\n");
        for (cell, stage, error) in &errs {
            out.push_str(&format!("{},{},{:?}\n", cell, stage, error));
        }
        write_atomic(&errors_path, out.as_bytes())?;
        log::warn!("{} cells failed; see {}", errs.len(), errors_path.display());
    }

    if cells_failed == plan.evals.len() && !plan.evals.is_empty() {
        return Err(Error::Validation(format!(
            "all {} cells failed; see {}",
            cells_failed,
            errors_path.display()
        )));
    }
    Ok(RunSummary {
        reports_path,
        cells_total: plan.evals.len(),
        cells_failed,
        rows_written,
    })
}

/// Runs one solve and prints its objective trace (`fit` subcommand).
pub fn cmd_fit(ctx: &RunContext, key: &SolveKey) -> Result<PathBuf> {
    for sub in ["bias", "solves", "traces"] {
        fs::create_dir_all(ctx.dir(sub))?;
    }
    let path = ensure_solve(ctx, key)?;
    let trace = fs::read_to_string(ctx.trace_path(key))?;
    print!("{trace}");
    Ok(path)
}

/// Evaluates one cell from its saved matrix and prints the report rows
/// (`evaluate` subcommand). With `export_lists` the per-user rankings are
/// written as CSV under `<output_dir>/lists/`.
pub fn cmd_evaluate(ctx: &RunContext, cell: &EvalCell, export_lists: bool) -> Result<Vec<EvalReport>> {
    for sub in ["cells", "freq"] {
        fs::create_dir_all(ctx.dir(sub))?;
    }
    let (rows, all_lists) = evaluate_cell_inner(ctx, cell)?;
    write_cell_rows(ctx, cell, &rows)?;
    if export_lists {
        let lists_dir = ctx.dir("lists");
        fs::create_dir_all(&lists_dir)?;
        for (n, policy, lists) in &all_lists {
            let path = lists_dir.join(format!("lists_{}_n{n}_{policy}.csv", cell.id()));
            crate::rank::write_lists_csv(&path, lists, &ctx.folds[cell.fold].train, cell.fold)?;
            log::info!("wrote {}", path.display());
        }
    }
    println!("{REPORT_HEADER}");
    for row in &rows {
        println!("{}", row.to_csv_row());
    }
    Ok(rows)
}

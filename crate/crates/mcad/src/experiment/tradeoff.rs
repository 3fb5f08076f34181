//! Matched-precision-loss comparison: for each target loss level, pick each
//! strategy's nearest swept grid point and report its diversity changes
//! relative to the baseline.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::EvalReport;

/// Accuracy comes from one candidate policy, diversity metrics from
/// another: headline precision presupposes a restricted candidate pool
/// while catalog-exposure metrics presuppose catalog-wide ranking.
#[derive(Debug, Clone)]
pub struct TradeoffOptions {
    pub baseline_strategy: String,
    pub accuracy_policy: String,
    pub diversity_policy: String,
    /// Target precision-loss levels in percent.
    pub targets: Vec<f64>,
    /// A grid point qualifies when within this distance of the target.
    pub tolerance_pct: f64,
    pub n: usize,
}

impl Default for TradeoffOptions {
    fn default() -> Self {
        TradeoffOptions {
            baseline_strategy: "MC".into(),
            accuracy_policy: "test-only".into(),
            diversity_policy: "all-unrated".into(),
            targets: vec![3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0, 6.5],
            tolerance_pct: 1.0,
            n: 5,
        }
    }
}

/// Fold-averaged metrics of one swept grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub strategy: String,
    pub lambda_n: f64,
    pub lambda_d: f64,
    pub t_r: Option<f64>,
    pub precision: f64,
    pub aggregate_diversity: f64,
    pub individual_diversity: f64,
    pub novelty: f64,
    pub gini: f64,
    pub folds: usize,
}

#[derive(Debug, Clone)]
pub struct TradeoffRow {
    pub target_loss_pct: f64,
    pub strategy: String,
    /// `None` when no grid point lands within the tolerance.
    pub point: Option<GridPoint>,
    pub actual_loss_pct: f64,
    pub ad_change_pct: f64,
    pub id_change_pct: f64,
    pub nv_change_pct: f64,
    pub gc_change_pct: f64,
}

pub const TRADEOFF_HEADER: &str = "target_loss_pct,strategy,actual_loss_pct,lambda_n,lambda_d,T_R,ad_change_pct,id_change_pct,nv_change_pct,gc_change_pct";

impl TradeoffRow {
    pub fn to_csv_row(&self) -> String {
        match &self.point {
            Some(p) => format!(
                "{},{},{:.4},{},{},{},{:.4},{:.4},{:.4},{:.4}",
                self.target_loss_pct,
                self.strategy,
                self.actual_loss_pct,
                p.lambda_n,
                p.lambda_d,
                p.t_r.map(|t| t.to_string()).unwrap_or_default(),
                self.ad_change_pct,
                self.id_change_pct,
                self.nv_change_pct,
                self.gc_change_pct
            ),
            None => format!("{},{},,,,,,,,", self.target_loss_pct, self.strategy),
        }
    }
}

fn parse_f64(tok: &str, what: &str, line: usize) -> Result<f64> {
    tok.parse()
        .map_err(|_| Error::Validation(format!("reports line {line}: bad {what} {tok:?}")))
}

/// Reads rows written under [`crate::metrics::REPORT_HEADER`].
pub fn parse_reports(path: &Path) -> Result<Vec<EvalReport>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == crate::metrics::REPORT_HEADER => {}
        _ => {
            return Err(Error::Validation(format!(
                "{}: missing report header",
                path.display()
            )))
        }
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 16 {
            return Err(Error::Validation(format!(
                "{} line {}: expected 16 fields, got {}",
                path.display(),
                lineno,
                f.len()
            )));
        }
        rows.push(EvalReport {
            dataset: f[0].to_string(),
            fold: parse_f64(f[1], "fold", lineno)? as usize,
            strategy: f[2].to_string(),
            lambda_n: parse_f64(f[3], "lambda_n", lineno)?,
            lambda_d: parse_f64(f[4], "lambda_d", lineno)?,
            t_r: if f[5].is_empty() {
                None
            } else {
                Some(parse_f64(f[5], "T_R", lineno)?)
            },
            n: parse_f64(f[6], "N", lineno)? as usize,
            candidate_policy: f[7].to_string(),
            precision: parse_f64(f[8], "precision", lineno)?,
            recall: parse_f64(f[9], "recall", lineno)?,
            mae: parse_f64(f[10], "mae", lineno)?,
            rmse: parse_f64(f[11], "rmse", lineno)?,
            individual_diversity: parse_f64(f[12], "id", lineno)?,
            aggregate_diversity: parse_f64(f[13], "ad", lineno)? as usize,
            novelty: parse_f64(f[14], "novelty", lineno)?,
            gini: parse_f64(f[15], "gini", lineno)?,
        });
    }
    Ok(rows)
}

type PointKey = (String, u64, u64, Option<u64>);

fn point_key(row: &EvalReport) -> PointKey {
    (
        row.strategy.clone(),
        row.lambda_n.to_bits(),
        row.lambda_d.to_bits(),
        row.t_r.map(|t| t.to_bits()),
    )
}

/// Collapses report rows into fold-averaged grid points, taking precision
/// from `accuracy_policy` rows and the diversity metrics from
/// `diversity_policy` rows.
pub fn grid_points(reports: &[EvalReport], options: &TradeoffOptions) -> Vec<GridPoint> {
    #[derive(Default)]
    struct Acc {
        precision_sum: f64,
        precision_count: usize,
        ad_sum: f64,
        id_sum: f64,
        nv_sum: f64,
        gini_sum: f64,
        diversity_count: usize,
        lambda_n: f64,
        lambda_d: f64,
        t_r: Option<f64>,
        strategy: String,
    }

    let mut groups: BTreeMap<PointKey, Acc> = BTreeMap::new();
    for row in reports {
        if row.n != options.n {
            continue;
        }
        let acc = groups.entry(point_key(row)).or_default();
        acc.strategy = row.strategy.clone();
        acc.lambda_n = row.lambda_n;
        acc.lambda_d = row.lambda_d;
        acc.t_r = row.t_r;
        if row.candidate_policy == options.accuracy_policy {
            acc.precision_sum += row.precision;
            acc.precision_count += 1;
        }
        if row.candidate_policy == options.diversity_policy {
            acc.ad_sum += row.aggregate_diversity as f64;
            acc.id_sum += row.individual_diversity;
            acc.nv_sum += row.novelty;
            acc.gini_sum += row.gini;
            acc.diversity_count += 1;
        }
    }
    groups
        .into_values()
        .filter(|a| a.precision_count > 0 && a.diversity_count > 0)
        .map(|a| GridPoint {
            strategy: a.strategy,
            lambda_n: a.lambda_n,
            lambda_d: a.lambda_d,
            t_r: a.t_r,
            precision: a.precision_sum / a.precision_count as f64,
            aggregate_diversity: a.ad_sum / a.diversity_count as f64,
            individual_diversity: a.id_sum / a.diversity_count as f64,
            novelty: a.nv_sum / a.diversity_count as f64,
            gini: a.gini_sum / a.diversity_count as f64,
            folds: a.precision_count,
        })
        .collect()
}

/// The baseline grid point: the baseline strategy's best-precision sweep
/// point (the tuned lambda_n).
pub fn baseline_point(points: &[GridPoint], options: &TradeoffOptions) -> Result<GridPoint> {
    points
        .iter()
        .filter(|p| p.strategy == options.baseline_strategy)
        .max_by(|a, b| a.precision.partial_cmp(&b.precision).unwrap())
        .cloned()
        .ok_or_else(|| {
            Error::Validation(format!(
                "no rows for baseline strategy {:?}",
                options.baseline_strategy
            ))
        })
}

fn pct_change(value: f64, base: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        100.0 * (value - base) / base
    }
}

/// Builds the matched-loss table from parsed report rows.
pub fn tradeoff_table(reports: &[EvalReport], options: &TradeoffOptions) -> Result<Vec<TradeoffRow>> {
    let points = grid_points(reports, options);
    let base = baseline_point(&points, options)?;

    let mut strategies: Vec<String> = Vec::new();
    for p in &points {
        if !strategies.contains(&p.strategy) {
            strategies.push(p.strategy.clone());
        }
    }

    let mut rows = Vec::new();
    for &target in &options.targets {
        for strategy in &strategies {
            let best = points
                .iter()
                .filter(|p| &p.strategy == strategy)
                .map(|p| {
                    let loss = 100.0 * (base.precision - p.precision) / base.precision;
                    (p, loss)
                })
                .filter(|(_, loss)| (loss - target).abs() <= options.tolerance_pct)
                .min_by(|a, b| {
                    (a.1 - target)
                        .abs()
                        .partial_cmp(&(b.1 - target).abs())
                        .unwrap()
                });
            let row = match best {
                Some((p, loss)) => TradeoffRow {
                    target_loss_pct: target,
                    strategy: strategy.clone(),
                    actual_loss_pct: loss,
                    ad_change_pct: pct_change(p.aggregate_diversity, base.aggregate_diversity),
                    id_change_pct: pct_change(p.individual_diversity, base.individual_diversity),
                    nv_change_pct: pct_change(p.novelty, base.novelty),
                    gc_change_pct: pct_change(p.gini, base.gini),
                    point: Some(p.clone()),
                },
                None => TradeoffRow {
                    target_loss_pct: target,
                    strategy: strategy.clone(),
                    actual_loss_pct: f64::NAN,
                    ad_change_pct: f64::NAN,
                    id_change_pct: f64::NAN,
                    nv_change_pct: f64::NAN,
                    gc_change_pct: f64::NAN,
                    point: None,
                },
            };
            rows.push(row);
        }
    }
    Ok(rows)
}

/// Reads a reports CSV and writes the tradeoff CSV next to it.
pub fn write_tradeoff_csv(
    reports_path: &Path,
    out_path: &Path,
    options: &TradeoffOptions,
) -> Result<Vec<TradeoffRow>> {
    let reports = parse_reports(reports_path)?;
    let rows = tradeoff_table(&reports, options)?;
    let mut out = String::from(TRADEOFF_HEADER);
    out.push('\n');
    for row in &rows {
        out.push_str(&row.to_csv_row());
        out.push('\n');
    }
    fs::write(out_path, out)?;
    Ok(rows)
}

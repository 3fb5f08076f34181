//! Top-N list construction: conventional ranking by predicted value plus
//! the threshold re-ranking baselines (item-average and reverse-predicted).

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;

use crate::dataset::RatingTriples;
use crate::error::{Error, Result};

/// Which items are eligible for a user's list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CandidatePolicy {
    /// Every item outside the user's training support (catalog-wide).
    AllUnrated,
    /// Only the user's test items. The usual protocol behind headline
    /// precision numbers; diversity metrics are better served by
    /// `AllUnrated`.
    TestOnly,
}

impl fmt::Display for CandidatePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidatePolicy::AllUnrated => write!(f, "all-unrated"),
            CandidatePolicy::TestOnly => write!(f, "test-only"),
        }
    }
}

impl std::str::FromStr for CandidatePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "all-unrated" => Ok(CandidatePolicy::AllUnrated),
            "test-only" => Ok(CandidatePolicy::TestOnly),
            other => Err(Error::Config(format!("unknown candidate policy {other:?}"))),
        }
    }
}

/// Ranking strategy tag carried on each list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Standard,
    /// Items above the threshold re-ranked by ascending item average
    /// training rating.
    ItemAverage,
    /// Items above the threshold re-ranked by ascending predicted rating.
    ReversePredicted,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Strategy::Standard => write!(f, "standard"),
            Strategy::ItemAverage => write!(f, "IA"),
            Strategy::ReversePredicted => write!(f, "RPRV"),
        }
    }
}

/// One user's ordered recommendations.
#[derive(Debug, Clone)]
pub struct RecommendationList {
    pub user: u32,
    pub items: Vec<u32>,
    pub scores: Vec<f64>,
    pub strategy: Strategy,
    pub t_r: Option<f64>,
    /// True when the candidate pool was smaller than the requested length.
    pub short: bool,
}

/// Per-user candidate item sets under a policy, sorted by item index.
/// `TestOnly` requires the fold's test triples.
pub fn candidate_sets(
    train: &RatingTriples,
    test: Option<&RatingTriples>,
    policy: CandidatePolicy,
) -> Result<Vec<Vec<u32>>> {
    match policy {
        CandidatePolicy::AllUnrated => {
            let rated = train.items_by_user();
            Ok((0..train.num_users)
                .map(|u| {
                    (0..train.num_items as u32)
                        .filter(|item| !rated[u].contains(item))
                        .collect()
                })
                .collect())
        }
        CandidatePolicy::TestOnly => {
            let test = test.ok_or_else(|| {
                Error::Config("test-only candidate policy requires test triples".into())
            })?;
            let mut sets = vec![Vec::new(); train.num_users];
            for e in &test.entries {
                sets[e.user as usize].push(e.item);
            }
            for set in &mut sets {
                set.sort_unstable();
            }
            Ok(sets)
        }
    }
}

fn take_top(
    user: u32,
    order: Vec<u32>,
    preds: &ArrayView2<f64>,
    n: usize,
    strategy: Strategy,
    t_r: Option<f64>,
) -> RecommendationList {
    let short = order.len() < n;
    let items: Vec<u32> = order.into_iter().take(n).collect();
    let scores = items
        .iter()
        .map(|&i| preds[(user as usize, i as usize)])
        .collect();
    RecommendationList {
        user,
        items,
        scores,
        strategy,
        t_r,
        short,
    }
}

/// Sorts candidates by predicted rating descending, ties broken by
/// ascending item index.
fn standard_order(user: usize, candidates: &[u32], preds: &ArrayView2<f64>) -> Vec<u32> {
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| {
        preds[(user, b as usize)]
            .partial_cmp(&preds[(user, a as usize)])
            .expect("predictions must be finite")
            .then(a.cmp(&b))
    });
    order
}

/// Conventional per-user top-N ranking over the candidate sets.
pub fn rank_standard(
    preds: &ArrayView2<f64>,
    candidates: &[Vec<u32>],
    n: usize,
) -> Vec<RecommendationList> {
    assert!(n >= 1, "list length must be at least 1");
    candidates
        .iter()
        .enumerate()
        .map(|(user, cands)| {
            let order = standard_order(user, cands, preds);
            take_top(user as u32, order, preds, n, Strategy::Standard, None)
        })
        .collect()
}

/// Mean training rating per item; items never rated in train fall back
/// to 0 so the re-ranking promotes them first.
pub fn item_average_ratings(train: &RatingTriples) -> Vec<f64> {
    let mut sums = vec![0.0; train.num_items];
    let mut counts = vec![0usize; train.num_items];
    for e in &train.entries {
        sums[e.item as usize] += e.rating;
        counts[e.item as usize] += 1;
    }
    sums.iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

/// Threshold re-ranking: candidates predicted at or above `t_r` form a
/// block re-ranked by the strategy key (ascending); the remaining
/// candidates follow in standard order.
pub fn rank_rerank(
    preds: &ArrayView2<f64>,
    train: &RatingTriples,
    candidates: &[Vec<u32>],
    strategy: Strategy,
    t_r: f64,
    n: usize,
) -> Vec<RecommendationList> {
    assert!(n >= 1, "list length must be at least 1");
    assert!(
        strategy != Strategy::Standard,
        "rank_rerank needs a re-ranking strategy"
    );
    let item_avg = match strategy {
        Strategy::ItemAverage => item_average_ratings(train),
        _ => Vec::new(),
    };

    candidates
        .iter()
        .enumerate()
        .map(|(user, cands)| {
            let order = standard_order(user, cands, preds);
            let (mut block, rest): (Vec<u32>, Vec<u32>) = order
                .into_iter()
                .partition(|&i| preds[(user, i as usize)] >= t_r);
            if block.is_empty() {
                log::debug!("user {user}: no prediction reaches T_R = {t_r}; standard order kept");
            }
            let key = |i: u32| -> f64 {
                match strategy {
                    Strategy::ItemAverage => item_avg[i as usize],
                    Strategy::ReversePredicted => preds[(user, i as usize)],
                    Strategy::Standard => unreachable!(),
                }
            };
            block.sort_by(|&a, &b| {
                key(a)
                    .partial_cmp(&key(b))
                    .expect("ranking keys must be finite")
                    .then(a.cmp(&b))
            });
            block.extend(rest);
            take_top(user as u32, block, preds, n, strategy, Some(t_r))
        })
        .collect()
}

/// One ranking per threshold grid point.
pub fn sweep_threshold(
    preds: &ArrayView2<f64>,
    train: &RatingTriples,
    candidates: &[Vec<u32>],
    strategy: Strategy,
    grid: &[f64],
    n: usize,
) -> Result<Vec<(f64, Vec<RecommendationList>)>> {
    if grid.is_empty() {
        return Err(Error::Config("threshold grid is empty".into()));
    }
    Ok(grid
        .iter()
        .map(|&t_r| (t_r, rank_rerank(preds, train, candidates, strategy, t_r, n)))
        .collect())
}

/// Writes lists as `user_id,rank,item_id,score,strategy,T_R,fold` using the
/// original MovieLens ids carried by `triples`.
pub fn write_lists_csv(
    path: &Path,
    lists: &[RecommendationList],
    triples: &RatingTriples,
    fold: usize,
) -> Result<()> {
    let mut out = String::from("user_id,rank,item_id,score,strategy,T_R,fold\n");
    for list in lists {
        for (pos, (&item, &score)) in list.items.iter().zip(&list.scores).enumerate() {
            let t_r = list.t_r.map(|t| t.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                triples.user_ids[list.user as usize],
                pos + 1,
                triples.item_ids[item as usize],
                score,
                list.strategy,
                t_r,
                fold
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Checks the exclusion invariant: no recommended item may sit in its
/// user's training support.
pub fn verify_training_exclusion(lists: &[RecommendationList], train: &RatingTriples) -> bool {
    let rated: Vec<HashSet<u32>> = train.items_by_user();
    lists.iter().all(|list| {
        list.items
            .iter()
            .all(|item| !rated[list.user as usize].contains(item))
    })
}

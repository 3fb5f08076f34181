//! Accuracy and diversity evaluation: precision/recall, MAE/RMSE,
//! individual and aggregate diversity, novelty, Gini coefficient, and the
//! recommendation-frequency distribution.

use std::collections::HashSet;

use ndarray::ArrayView2;

use crate::dataset::{GenreMatrix, RatingTriples};
use crate::rank::RecommendationList;

/// Default relevance bar: a test rating of 4 or higher counts as relevant.
pub const RELEVANCE_THRESHOLD: f64 = 4.0;

/// One evaluated configuration, ready for CSV serialization.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub dataset: String,
    pub fold: usize,
    pub strategy: String,
    pub lambda_n: f64,
    pub lambda_d: f64,
    pub t_r: Option<f64>,
    pub n: usize,
    pub candidate_policy: String,
    pub precision: f64,
    pub recall: f64,
    pub mae: f64,
    pub rmse: f64,
    pub individual_diversity: f64,
    pub aggregate_diversity: usize,
    pub novelty: f64,
    pub gini: f64,
}

pub const REPORT_HEADER: &str =
    "dataset,fold,strategy,lambda_n,lambda_d,T_R,N,candidate_policy,precision,recall,mae,rmse,id,ad,novelty,gini";

impl EvalReport {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.fold,
            self.strategy,
            self.lambda_n,
            self.lambda_d,
            self.t_r.map(|t| t.to_string()).unwrap_or_default(),
            self.n,
            self.candidate_policy,
            self.precision,
            self.recall,
            self.mae,
            self.rmse,
            self.individual_diversity,
            self.aggregate_diversity,
            self.novelty,
            self.gini
        )
    }
}

/// Per-user sets of relevant test items (rating at or above the threshold).
fn relevant_sets(test: &RatingTriples, threshold: f64) -> Vec<HashSet<u32>> {
    let mut sets = vec![HashSet::new(); test.num_users];
    for e in &test.entries {
        if e.rating >= threshold {
            sets[e.user as usize].insert(e.item);
        }
    }
    sets
}

/// Macro-averaged precision and recall at the given relevance threshold.
/// Users with an empty list are excluded from the precision average; users
/// with no relevant test items are excluded from the recall average.
pub fn precision_recall(
    lists: &[RecommendationList],
    test: &RatingTriples,
    relevance_threshold: f64,
) -> (f64, f64) {
    let relevant = relevant_sets(test, relevance_threshold);
    let mut precision_sum = 0.0;
    let mut precision_users = 0usize;
    let mut recall_sum = 0.0;
    let mut recall_users = 0usize;
    for list in lists {
        let rel = &relevant[list.user as usize];
        let tp = list.items.iter().filter(|i| rel.contains(i)).count();
        if !list.items.is_empty() {
            precision_sum += tp as f64 / list.items.len() as f64;
            precision_users += 1;
        }
        if !rel.is_empty() {
            recall_sum += tp as f64 / rel.len() as f64;
            recall_users += 1;
        }
    }
    let precision = if precision_users > 0 {
        precision_sum / precision_users as f64
    } else {
        0.0
    };
    let recall = if recall_users > 0 {
        recall_sum / recall_users as f64
    } else {
        0.0
    };
    (precision, recall)
}

/// Mean absolute and root-mean-square error over the test cells.
pub fn mae_rmse(preds: &ArrayView2<f64>, test: &RatingTriples) -> (f64, f64) {
    if test.is_empty() {
        return (0.0, 0.0);
    }
    let mut abs = 0.0;
    let mut sq = 0.0;
    for e in &test.entries {
        let d = e.rating - preds[(e.user as usize, e.item as usize)];
        abs += d.abs();
        sq += d * d;
    }
    let count = test.len() as f64;
    (abs / count, (sq / count).sqrt())
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        None
    } else {
        Some(dot / (na * nb))
    }
}

/// Mean pairwise genre dissimilarity `1 - cos(g_i, g_j)` within each list,
/// averaged over users. Pairs involving an item without genre flags count
/// as maximally dissimilar. Lists with fewer than two items contribute 0.
pub fn individual_diversity(lists: &[RecommendationList], genres: &GenreMatrix) -> f64 {
    if lists.is_empty() {
        return 0.0;
    }
    let mut total = 0.0;
    let mut singleton_lists = 0usize;
    let mut zero_genre_pairs = 0usize;
    for list in lists {
        let len = list.items.len();
        if len < 2 {
            singleton_lists += 1;
            continue;
        }
        let vectors: Vec<Vec<f64>> = list
            .items
            .iter()
            .map(|&i| genres.item_genres(i).to_vec())
            .collect();
        let mut sum = 0.0;
        for i in 0..len {
            for j in 0..len {
                if i == j {
                    continue;
                }
                match cosine(&vectors[i], &vectors[j]) {
                    Some(c) => sum += 1.0 - c,
                    None => {
                        zero_genre_pairs += 1;
                        sum += 1.0;
                    }
                }
            }
        }
        total += sum / (len * (len - 1)) as f64;
    }
    if singleton_lists > 0 {
        log::debug!("{singleton_lists} lists shorter than 2 items contribute zero diversity");
    }
    if zero_genre_pairs > 0 {
        log::debug!("{zero_genre_pairs} pairs with an all-zero genre vector counted as dissimilar");
    }
    total / lists.len() as f64
}

/// Number of distinct items recommended to anyone.
pub fn aggregate_diversity(lists: &[RecommendationList]) -> usize {
    lists
        .iter()
        .flat_map(|l| l.items.iter().cloned())
        .collect::<HashSet<u32>>()
        .len()
}

/// Mean `log2(num_users / #i)` over recommended items, where `#i` is the
/// item's training rating count; never-rated items use `#i = 1`.
pub fn novelty(lists: &[RecommendationList], train: &RatingTriples) -> f64 {
    let counts = train.item_counts();
    let num_users = train.num_users as f64;
    let mut total = 0.0;
    let mut user_count = 0usize;
    let mut unrated = 0usize;
    for list in lists {
        if list.items.is_empty() {
            continue;
        }
        let sum: f64 = list
            .items
            .iter()
            .map(|&i| {
                let c = counts[i as usize];
                if c == 0 {
                    unrated += 1;
                }
                (num_users / c.max(1) as f64).log2()
            })
            .sum();
        total += sum / list.items.len() as f64;
        user_count += 1;
    }
    if unrated > 0 {
        log::debug!("novelty clamped #i to 1 for {unrated} recommendations of never-rated items");
    }
    if user_count == 0 {
        0.0
    } else {
        total / user_count as f64
    }
}

/// Recommendation counts per item.
pub fn recommendation_counts(lists: &[RecommendationList], n_items: usize) -> Vec<u64> {
    let mut counts = vec![0u64; n_items];
    for list in lists {
        for &item in &list.items {
            counts[item as usize] += 1;
        }
    }
    counts
}

/// Gini coefficient of the recommendation-probability distribution over the
/// whole catalog (never-recommended items enter with probability zero):
/// `(1/J) sum_k (2k - J - 1) p_k` with probabilities sorted ascending.
pub fn gini_coefficient(lists: &[RecommendationList], n_items: usize) -> f64 {
    gini_from_counts(&recommendation_counts(lists, n_items))
}

/// Gini over an explicit nonnegative count vector.
pub fn gini_from_counts(counts: &[u64]) -> f64 {
    let j = counts.len();
    let total: u64 = counts.iter().sum();
    if j == 0 || total == 0 {
        return 0.0;
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let total = total as f64;
    let j_f = j as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(idx, &c)| {
            let k = (idx + 1) as f64;
            (2.0 * k - j_f - 1.0) * (c as f64 / total)
        })
        .sum::<f64>()
        / j_f
}

/// Recommendation-frequency histogram sorted by count descending (ties by
/// item index ascending).
#[derive(Debug, Clone)]
pub struct FrequencyDistribution {
    /// `(item, count)` for every item with a nonzero count.
    pub ranked: Vec<(u32, u64)>,
    pub n_items: usize,
    pub total: u64,
}

impl FrequencyDistribution {
    /// Counts of the `top_t` most-recommended items.
    pub fn top(&self, top_t: usize) -> &[(u32, u64)] {
        &self.ranked[..top_t.min(self.ranked.len())]
    }

    /// The `count`-lowest nonzero entries, least recommended first.
    pub fn tail(&self, count: usize) -> Vec<(u32, u64)> {
        let mut tail: Vec<(u32, u64)> = self
            .ranked
            .iter()
            .rev()
            .take(count)
            .cloned()
            .collect();
        tail.sort_by_key(|&(item, count)| (count, item));
        tail
    }

    pub fn max_count(&self) -> u64 {
        self.ranked.first().map(|&(_, c)| c).unwrap_or(0)
    }

    /// Number of items recommended at least once.
    pub fn nonzero_items(&self) -> usize {
        self.ranked.len()
    }
}

/// Histogram of how often each item appears across all lists.
pub fn frequency_distribution(
    lists: &[RecommendationList],
    n_items: usize,
) -> FrequencyDistribution {
    let counts = recommendation_counts(lists, n_items);
    let mut ranked: Vec<(u32, u64)> = counts
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c > 0)
        .map(|(i, &c)| (i as u32, c))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let total = ranked.iter().map(|&(_, c)| c).sum();
    FrequencyDistribution {
        ranked,
        n_items,
        total,
    }
}

/// Convenience bundle: all eight quantities for one list set.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_lists(
    lists: &[RecommendationList],
    preds: &ArrayView2<f64>,
    train: &RatingTriples,
    test: &RatingTriples,
    genres: &GenreMatrix,
    relevance_threshold: f64,
) -> (f64, f64, f64, f64, f64, usize, f64, f64) {
    let (precision, recall) = precision_recall(lists, test, relevance_threshold);
    let (mae, rmse) = mae_rmse(preds, test);
    let id = individual_diversity(lists, genres);
    let ad = aggregate_diversity(lists);
    let nv = novelty(lists, train);
    let gini = gini_coefficient(lists, train.num_items);
    (precision, recall, mae, rmse, id, ad, nv, gini)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{triples_from_entries, Rating};
    use crate::rank::Strategy;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn entry(user: u32, item: u32, rating: f64) -> Rating {
        Rating {
            user,
            item,
            rating,
            timestamp: 0,
        }
    }

    fn list(user: u32, items: Vec<u32>) -> RecommendationList {
        RecommendationList {
            user,
            scores: vec![0.0; items.len()],
            items,
            strategy: Strategy::Standard,
            t_r: None,
            short: false,
        }
    }

    #[test]
    fn all_relevant_recommendations_give_full_precision() {
        let test = triples_from_entries(
            vec![entry(0, 0, 4.0), entry(0, 1, 5.0), entry(0, 2, 2.0)],
            1,
            3,
        )
        .unwrap();
        let (p, _) = precision_recall(&[list(0, vec![0, 1])], &test, 4.0);
        assert_eq!(p, 1.0);
    }

    #[test]
    fn precision_and_recall_match_formula() {
        // t_p = 2, f_p = 3 -> precision 0.4; relevant = 8 -> recall 0.25
        let mut entries = vec![];
        for i in 0..8 {
            entries.push(entry(0, i, 5.0));
        }
        for i in 8..11 {
            entries.push(entry(0, i, 1.0));
        }
        let test = triples_from_entries(entries, 1, 16).unwrap();
        let lists = [list(0, vec![0, 1, 8, 9, 10])];
        let (p, r) = precision_recall(&lists, &test, 4.0);
        assert_abs_diff_eq!(p, 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn users_without_test_items_are_excluded() {
        let test = triples_from_entries(vec![entry(0, 0, 5.0)], 2, 2).unwrap();
        let lists = [list(0, vec![0]), list(1, vec![1])];
        let (p, r) = precision_recall(&lists, &test, 4.0);
        // user 1 has no relevant items; only user 0 counts for recall
        assert_eq!(r, 1.0);
        // precision counts both lists: user0 = 1, user1 = 0
        assert_abs_diff_eq!(p, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn perfect_predictions_have_zero_error() {
        let test = triples_from_entries(vec![entry(0, 0, 4.0), entry(1, 1, 2.0)], 2, 2).unwrap();
        let preds = array![[4.0, 1.0], [1.0, 2.0]];
        let (mae, rmse) = mae_rmse(&preds.view(), &test);
        assert_eq!((mae, rmse), (0.0, 0.0));
    }

    #[test]
    fn error_metrics_match_hand_values() {
        let test = triples_from_entries(vec![entry(0, 0, 3.0), entry(0, 1, 3.0)], 1, 2).unwrap();
        // residuals +1, -1
        let preds = array![[2.0, 4.0]];
        let (mae, rmse) = mae_rmse(&preds.view(), &test);
        assert_abs_diff_eq!(mae, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rmse, 1.0, epsilon = 1e-12);
        // residuals 0, 2
        let preds = array![[3.0, 1.0]];
        let (mae, rmse) = mae_rmse(&preds.view(), &test);
        assert_abs_diff_eq!(mae, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rmse, 2.0f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn rmse_dominates_mae() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut entries = vec![];
        for i in 0..12 {
            entries.push(entry(0, i, rng.random_range(1..=5) as f64));
        }
        let test = triples_from_entries(entries, 1, 12).unwrap();
        let preds = Array2::from_shape_fn((1, 12), |_| rng.random_range(1.0..5.0));
        let (mae, rmse) = mae_rmse(&preds.view(), &test);
        assert!(rmse >= mae - 1e-12);
    }

    fn genre_matrix(rows: Vec<Vec<f64>>) -> GenreMatrix {
        let d = rows[0].len();
        let n = rows.len();
        let mut g = Array2::zeros((n, d));
        for (i, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                g[(i, j)] = v;
            }
        }
        GenreMatrix::new(g, (0..d).map(|j| format!("g{j}")).collect()).unwrap()
    }

    #[test]
    fn identical_genre_vectors_have_zero_diversity() {
        let genres = genre_matrix(vec![vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        let id = individual_diversity(&[list(0, vec![0, 1, 2])], &genres);
        assert_abs_diff_eq!(id, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn orthogonal_genre_vectors_have_full_diversity() {
        let genres = genre_matrix(vec![
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let id = individual_diversity(&[list(0, vec![0, 1, 2])], &genres);
        assert_abs_diff_eq!(id, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn individual_diversity_matches_pairwise_hand_oracle() {
        let genres = genre_matrix(vec![
            vec![1.0, 0.0, 0.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let id = individual_diversity(&[list(0, vec![0, 1, 2])], &genres);
        // pairs (0,1): 1 - 1/sqrt(2); (0,2): 1; (1,2): 1; doubled, over 6
        let expected = (2.0 * ((1.0 - 1.0 / 2.0f64.sqrt()) + 1.0 + 1.0)) / 6.0;
        assert_abs_diff_eq!(id, expected, epsilon = 1e-12);
    }

    #[test]
    fn zero_genre_rows_count_as_dissimilar() {
        let genres = genre_matrix(vec![vec![0.0, 0.0], vec![1.0, 0.0]]);
        let id = individual_diversity(&[list(0, vec![0, 1])], &genres);
        assert_abs_diff_eq!(id, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn aggregate_diversity_counts_distinct_items() {
        let same: Vec<RecommendationList> =
            (0..7).map(|u| list(u, vec![0, 1, 2, 3, 4])).collect();
        assert_eq!(aggregate_diversity(&same), 5);
        let disjoint: Vec<RecommendationList> = (0..10)
            .map(|u| list(u, (u * 5..u * 5 + 5).collect()))
            .collect();
        assert_eq!(aggregate_diversity(&disjoint), 50);
    }

    #[test]
    fn novelty_is_zero_when_everyone_rated_everything() {
        let mut entries = vec![];
        for u in 0..4 {
            for i in 0..3 {
                entries.push(entry(u, i, 3.0));
            }
        }
        let train = triples_from_entries(entries, 4, 3).unwrap();
        let lists: Vec<RecommendationList> = (0..4).map(|u| list(u, vec![0, 1, 2])).collect();
        assert_abs_diff_eq!(novelty(&lists, &train), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn half_popularity_contributes_one_bit() {
        let mut entries = vec![];
        for u in 0..4 {
            entries.push(entry(u, 0, 3.0));
        }
        entries.push(entry(0, 1, 3.0));
        entries.push(entry(1, 1, 3.0));
        let train = triples_from_entries(entries, 4, 2).unwrap();
        // item 1 rated by half the users -> log2(2) = 1
        let lists = [list(2, vec![1])];
        assert_abs_diff_eq!(novelty(&lists, &train), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn uniform_distribution_has_zero_gini() {
        let lists: Vec<RecommendationList> = (0..4).map(|u| list(u, vec![u])).collect();
        assert_abs_diff_eq!(gini_coefficient(&lists, 4), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn single_item_concentration_hits_the_upper_bound() {
        let lists: Vec<RecommendationList> = (0..6).map(|u| list(u, vec![2])).collect();
        // J = 4 items, all mass on one -> (J-1)/J = 0.75
        assert_abs_diff_eq!(gini_coefficient(&lists, 4), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn gini_stays_in_bounds_and_grows_under_concentration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let j = rng.random_range(2..12);
            let mut counts: Vec<u64> = (0..j).map(|_| rng.random_range(0..20)).collect();
            if counts.iter().all(|&c| c == 0) {
                counts[0] = 1;
            }
            let g = gini_from_counts(&counts);
            let bound = (j as f64 - 1.0) / j as f64;
            assert!((0.0..=bound + 1e-12).contains(&g), "gini {g} outside [0, {bound}]");

            // move mass from a low-count to a high-count item
            let (lo, hi) = {
                let mut idx: Vec<usize> = (0..counts.len()).collect();
                idx.sort_by_key(|&i| counts[i]);
                (idx[0], *idx.last().unwrap())
            };
            if counts[lo] > 0 && lo != hi {
                let mut moved = counts.clone();
                moved[lo] -= 1;
                moved[hi] += 1;
                assert!(gini_from_counts(&moved) >= g - 1e-12);
            }
        }
    }

    #[test]
    fn frequency_counts_are_conserved() {
        let lists: Vec<RecommendationList> = (0..5)
            .map(|u| list(u, vec![0, 1, (u % 3) + 2]))
            .collect();
        let dist = frequency_distribution(&lists, 8);
        assert_eq!(dist.total, 15);
        let counts = recommendation_counts(&lists, 8);
        assert_eq!(counts.iter().sum::<u64>(), 15);
        // per-item counts for a single user are 0 or 1
        let single = frequency_distribution(&[list(0, vec![3, 5])], 8);
        assert!(single.ranked.iter().all(|&(_, c)| c == 1));
    }

    #[test]
    fn frequency_ranking_sorts_desc_with_index_ties() {
        let lists = vec![list(0, vec![0, 2]), list(1, vec![2, 3])];
        let dist = frequency_distribution(&lists, 5);
        assert_eq!(dist.ranked, vec![(2, 2), (0, 1), (3, 1)]);
        assert_eq!(dist.top(1), &[(2, 2)]);
        assert_eq!(dist.tail(2), vec![(0, 1), (3, 1)]);
        assert_eq!(dist.max_count(), 2);
        assert_eq!(dist.nonzero_items(), 3);
    }

    /// Brute-force scalar-loop oracle across every metric on small random
    /// instances.
    #[test]
    fn metrics_match_brute_force_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for round in 0..20 {
            let num_users = rng.random_range(2..=10);
            let n_items = rng.random_range(4..=20);
            let n = rng.random_range(1..=4usize);

            // random train/test triples
            let mut train_entries = vec![];
            let mut test_entries = vec![];
            for u in 0..num_users as u32 {
                for i in 0..n_items as u32 {
                    let draw: f64 = rng.random();
                    if draw < 0.3 {
                        train_entries.push(entry(u, i, rng.random_range(1..=5) as f64));
                    } else if draw < 0.5 {
                        test_entries.push(entry(u, i, rng.random_range(1..=5) as f64));
                    }
                }
            }
            if test_entries.is_empty() {
                continue;
            }
            let train = triples_from_entries(train_entries, num_users, n_items).unwrap();
            let test = triples_from_entries(test_entries, num_users, n_items).unwrap();

            // random lists over items, unique per user
            let lists: Vec<RecommendationList> = (0..num_users as u32)
                .map(|u| {
                    let mut pool: Vec<u32> = (0..n_items as u32).collect();
                    let mut items = vec![];
                    for _ in 0..n {
                        let k = rng.random_range(0..pool.len());
                        items.push(pool.swap_remove(k));
                    }
                    list(u, items)
                })
                .collect();

            // oracle: precision / recall
            let mut p_sum = 0.0;
            let mut r_sum = 0.0;
            let mut r_users = 0;
            for u in 0..num_users as u32 {
                let rel: HashSet<u32> = test
                    .entries
                    .iter()
                    .filter(|e| e.user == u && e.rating >= 4.0)
                    .map(|e| e.item)
                    .collect();
                let items = &lists[u as usize].items;
                let tp = items.iter().filter(|i| rel.contains(i)).count();
                p_sum += tp as f64 / items.len() as f64;
                if !rel.is_empty() {
                    r_sum += tp as f64 / rel.len() as f64;
                    r_users += 1;
                }
            }
            let (p, r) = precision_recall(&lists, &test, 4.0);
            assert_abs_diff_eq!(p, p_sum / num_users as f64, epsilon = 1e-12);
            if r_users > 0 {
                assert_abs_diff_eq!(r, r_sum / r_users as f64, epsilon = 1e-12);
            }

            // oracle: novelty
            let mut nov_sum = 0.0;
            for l in &lists {
                let mut s = 0.0;
                for &i in &l.items {
                    let c = train.entries.iter().filter(|e| e.item == i).count().max(1);
                    s += (num_users as f64 / c as f64).log2();
                }
                nov_sum += s / l.items.len() as f64;
            }
            assert_abs_diff_eq!(
                novelty(&lists, &train),
                nov_sum / num_users as f64,
                epsilon = 1e-12
            );

            // oracle: aggregate diversity
            let mut seen = HashSet::new();
            for l in &lists {
                seen.extend(l.items.iter().cloned());
            }
            assert_eq!(aggregate_diversity(&lists), seen.len());

            // oracle: gini via direct formula on probabilities
            let mut counts = vec![0u64; n_items];
            for l in &lists {
                for &i in &l.items {
                    counts[i as usize] += 1;
                }
            }
            let total: u64 = counts.iter().sum();
            let mut probs: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
            probs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let j = n_items as f64;
            let gini_oracle: f64 = probs
                .iter()
                .enumerate()
                .map(|(idx, p)| (2.0 * (idx + 1) as f64 - j - 1.0) * p)
                .sum::<f64>()
                / j;
            assert_abs_diff_eq!(
                gini_coefficient(&lists, n_items),
                gini_oracle,
                epsilon = 1e-12
            );

            // conservation invariant
            assert_eq!(total, (num_users * n) as u64, "round {round}");
        }
    }

    #[test]
    fn individual_diversity_is_order_free() {
        let genres = genre_matrix(vec![
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
        ]);
        let a = individual_diversity(&[list(0, vec![0, 1, 2, 3])], &genres);
        let b = individual_diversity(&[list(0, vec![3, 2, 1, 0])], &genres);
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn report_row_round_trips_through_the_header() {
        let report = EvalReport {
            dataset: "ml100k".into(),
            fold: 0,
            strategy: "MC".into(),
            lambda_n: 10.0,
            lambda_d: 0.0,
            t_r: None,
            n: 5,
            candidate_policy: "test-only".into(),
            precision: 0.5,
            recall: 0.25,
            mae: 0.75,
            rmse: 0.9,
            individual_diversity: 0.3,
            aggregate_diversity: 42,
            novelty: 1.5,
            gini: 0.9,
        };
        let row = report.to_csv_row();
        assert_eq!(row.split(',').count(), REPORT_HEADER.split(',').count());
        assert!(row.starts_with("ml100k,0,MC,10,0,,5,test-only,"));
    }
}

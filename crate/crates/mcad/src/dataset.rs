//! MovieLens ingestion: rating triples, the item-genre matrix, and
//! reproducible per-user five-fold train/test splits.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The 18 MovieLens genre labels, in the flag order of the 100K `u.item`
/// file (after the leading "unknown" flag, which is dropped).
pub const MOVIELENS_GENRES: [&str; 18] = [
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
];

/// One observed rating after dense index remapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: i64,
}

/// Sparse (user, item, rating, timestamp) observations over a dense
/// `num_users x num_items` index space. `user_ids` / `item_ids` map the
/// dense indices back to the original MovieLens ids.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingTriples {
    pub entries: Vec<Rating>,
    pub num_users: usize,
    pub num_items: usize,
    pub user_ids: Vec<u32>,
    pub item_ids: Vec<u32>,
}

impl RatingTriples {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry indices grouped by user, in entry order.
    pub fn by_user(&self) -> Vec<Vec<usize>> {
        let mut per_user = vec![Vec::new(); self.num_users];
        for (k, e) in self.entries.iter().enumerate() {
            per_user[e.user as usize].push(k);
        }
        per_user
    }

    /// Per-user sets of rated item indices.
    pub fn items_by_user(&self) -> Vec<HashSet<u32>> {
        let mut sets = vec![HashSet::new(); self.num_users];
        for e in &self.entries {
            sets[e.user as usize].insert(e.item);
        }
        sets
    }

    /// Number of training ratings per item.
    pub fn item_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.num_items];
        for e in &self.entries {
            counts[e.item as usize] += 1;
        }
        counts
    }

    fn validate(&self) -> Result<()> {
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if (e.user as usize) >= self.num_users || (e.item as usize) >= self.num_items {
                return Err(Error::Validation(format!(
                    "entry ({}, {}) outside {}x{} index space",
                    e.user, e.item, self.num_users, self.num_items
                )));
            }
            if !is_valid_rating(e.rating) {
                return Err(Error::Validation(format!(
                    "rating {} for (user {}, item {}) not in {{1..5}}",
                    e.rating, e.user, e.item
                )));
            }
            if !seen.insert((e.user, e.item)) {
                return Err(Error::Validation(format!(
                    "duplicate rating for (user {}, item {})",
                    e.user, e.item
                )));
            }
        }
        Ok(())
    }
}

fn is_valid_rating(r: f64) -> bool {
    r.fract() == 0.0 && (1.0..=5.0).contains(&r)
}

/// Binary item-genre membership with per-genre movie counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GenreMatrix {
    /// `num_items x num_genres` matrix of 0/1 flags.
    pub g: Array2<f64>,
    pub genre_names: Vec<String>,
    /// Column sums: movies per genre.
    pub mu: Vec<f64>,
}

impl GenreMatrix {
    pub fn new(g: Array2<f64>, genre_names: Vec<String>) -> Result<Self> {
        if g.ncols() != genre_names.len() {
            return Err(Error::Validation(format!(
                "genre matrix has {} columns but {} names",
                g.ncols(),
                genre_names.len()
            )));
        }
        if g.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Validation(
                "genre matrix entries must be 0 or 1".into(),
            ));
        }
        let mu = (0..g.ncols()).map(|j| g.column(j).sum()).collect();
        Ok(GenreMatrix { g, genre_names, mu })
    }

    pub fn num_items(&self) -> usize {
        self.g.nrows()
    }

    pub fn num_genres(&self) -> usize {
        self.g.ncols()
    }

    /// Drops genre columns no movie belongs to. Items left with an all-zero
    /// row are retained; they simply contribute nothing to the diversity
    /// operator.
    pub fn drop_empty_genres(&self) -> GenreMatrix {
        let keep: Vec<usize> = (0..self.num_genres())
            .filter(|&j| self.mu[j] >= 1.0)
            .collect();
        if keep.len() == self.num_genres() {
            return self.clone();
        }
        let dropped: Vec<&str> = (0..self.num_genres())
            .filter(|j| !keep.contains(j))
            .map(|j| self.genre_names[j].as_str())
            .collect();
        log::info!("dropping empty genre columns: {}", dropped.join(", "));
        let g = self.g.select(ndarray::Axis(1), &keep);
        let genre_names = keep.iter().map(|&j| self.genre_names[j].clone()).collect();
        GenreMatrix::new(g, genre_names).expect("column selection preserves validity")
    }

    /// Row of genre flags for one item.
    pub fn item_genres(&self, item: u32) -> ndarray::ArrayView1<'_, f64> {
        self.g.row(item as usize)
    }
}

/// One train/test split of a k-fold partition.
#[derive(Debug, Clone)]
pub struct FoldSplit {
    pub fold_id: usize,
    pub train: RatingTriples,
    pub test: RatingTriples,
    pub seed: u64,
}

// The GroupLens files are Latin-1 encoded (accented movie titles), so read
// bytes and decode lossily; everything we parse out of them is ASCII.
fn read_lines(path: &Path) -> Result<Vec<String>> {
    let bytes = fs::read(path).map_err(|e| {
        Error::Validation(format!("cannot open {}: {}", path.display(), e))
    })?;
    Ok(bytes
        .split(|&b| b == b'\n')
        .map(|line| {
            let line = line.strip_suffix(b"\r").unwrap_or(line);
            String::from_utf8_lossy(line).into_owned()
        })
        .collect())
}

struct RawTriple {
    user_id: u32,
    item_id: u32,
    rating: f64,
    timestamp: i64,
}

fn parse_raw_triples(path: &Path, sep: &str) -> Result<Vec<RawTriple>> {
    let mut out = Vec::new();
    for (lineno, line) in read_lines(path)?.iter().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                lineno,
                format!("expected 4 fields separated by {sep:?}, got {}", fields.len()),
            ));
        }
        let user_id: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad user id {:?}", fields[0])))?;
        let item_id: u32 = fields[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad item id {:?}", fields[1])))?;
        let rating: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad rating {:?}", fields[2])))?;
        if !is_valid_rating(rating) {
            return Err(Error::Validation(format!(
                "{} line {}: rating {} not in {{1..5}}",
                path.display(),
                lineno,
                rating
            )));
        }
        let timestamp: i64 = fields[3]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad timestamp {:?}", fields[3])))?;
        out.push(RawTriple {
            user_id,
            item_id,
            rating,
            timestamp,
        });
    }
    if out.is_empty() {
        return Err(Error::Validation(format!(
            "no ratings parsed from {}",
            path.display()
        )));
    }
    Ok(out)
}

/// Remaps raw ids to dense 0-based indices (sorted by original id) and
/// validates that every rated item is known to the item file.
fn assemble(
    raw: Vec<RawTriple>,
    item_ids_in_file: Vec<u32>,
    genre_rows: Vec<Vec<f64>>,
    genre_names: Vec<String>,
) -> Result<(RatingTriples, GenreMatrix)> {
    let user_ids: Vec<u32> = raw
        .iter()
        .map(|t| t.user_id)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let user_index: HashMap<u32, u32> = user_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i as u32))
        .collect();

    let mut order: Vec<usize> = (0..item_ids_in_file.len()).collect();
    order.sort_by_key(|&i| item_ids_in_file[i]);
    let item_ids: Vec<u32> = order.iter().map(|&i| item_ids_in_file[i]).collect();
    let item_index: HashMap<u32, u32> = item_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i as u32))
        .collect();
    if item_index.len() != item_ids.len() {
        return Err(Error::Validation("duplicate item id in item file".into()));
    }

    let d = genre_names.len();
    let mut g = Array2::<f64>::zeros((item_ids.len(), d));
    for (file_pos, row) in genre_rows.into_iter().enumerate() {
        let dense = item_index[&item_ids_in_file[file_pos]] as usize;
        for (j, v) in row.into_iter().enumerate() {
            g[(dense, j)] = v;
        }
    }

    let mut entries = Vec::with_capacity(raw.len());
    for t in &raw {
        let item = *item_index.get(&t.item_id).ok_or_else(|| {
            Error::Validation(format!(
                "item {} referenced in ratings but absent from item file",
                t.item_id
            ))
        })?;
        entries.push(Rating {
            user: user_index[&t.user_id],
            item,
            rating: t.rating,
            timestamp: t.timestamp,
        });
    }
    entries.sort_by_key(|e| (e.user, e.item));

    let triples = RatingTriples {
        num_users: user_ids.len(),
        num_items: item_ids.len(),
        entries,
        user_ids,
        item_ids,
    };
    triples.validate()?;
    let genres = GenreMatrix::new(g, genre_names)?.drop_empty_genres();
    Ok((triples, genres))
}

/// Parses the MovieLens 100K `u.data` / `u.item` pair.
///
/// `u.data` is tab-separated `user<TAB>item<TAB>rating<TAB>timestamp`;
/// `u.item` is pipe-separated with 19 trailing binary genre flags, the first
/// of which ("unknown") is dropped. Items whose only flag was "unknown" keep
/// an all-zero genre row.
pub fn parse_movielens_100k(
    data_path: &Path,
    item_path: &Path,
) -> Result<(RatingTriples, GenreMatrix)> {
    let raw = parse_raw_triples(data_path, "\t")?;

    let mut item_ids = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in read_lines(item_path)?.iter().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() != 24 {
            return Err(Error::parse(
                item_path,
                lineno,
                format!("expected 24 pipe-separated fields, got {}", fields.len()),
            ));
        }
        let id: u32 = fields[0]
            .trim()
            .parse()
            .map_err(|_| Error::parse(item_path, lineno, format!("bad item id {:?}", fields[0])))?;
        // fields[5] is the "unknown" flag; fields[6..24] are the 18 genres.
        let mut row = Vec::with_capacity(18);
        for (k, f) in fields[6..24].iter().enumerate() {
            let v: u8 = f.trim().parse().map_err(|_| {
                Error::parse(
                    item_path,
                    lineno,
                    format!("bad genre flag {:?} for {}", f, MOVIELENS_GENRES[k]),
                )
            })?;
            if v > 1 {
                return Err(Error::parse(
                    item_path,
                    lineno,
                    format!("genre flag {} is not binary", v),
                ));
            }
            row.push(v as f64);
        }
        item_ids.push(id);
        rows.push(row);
    }
    if item_ids.is_empty() {
        return Err(Error::Validation(format!(
            "no items parsed from {}",
            item_path.display()
        )));
    }

    let names = MOVIELENS_GENRES.iter().map(|s| s.to_string()).collect();
    assemble(raw, item_ids, rows, names)
}

/// Parses the MovieLens 1M `ratings.dat` / `movies.dat` pair
/// (`::`-separated records, genres as `|`-separated names).
pub fn parse_movielens_1m(
    ratings_path: &Path,
    movies_path: &Path,
) -> Result<(RatingTriples, GenreMatrix)> {
    let raw = parse_raw_triples(ratings_path, "::")?;

    let genre_index: HashMap<String, usize> = MOVIELENS_GENRES
        .iter()
        .enumerate()
        .map(|(i, s)| (s.to_lowercase(), i))
        .collect();

    let mut item_ids = Vec::new();
    let mut rows = Vec::new();
    for (lineno, line) in read_lines(movies_path)?.iter().enumerate() {
        let lineno = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split("::").collect();
        if fields.len() != 3 {
            return Err(Error::parse(
                movies_path,
                lineno,
                format!("expected 3 ::-separated fields, got {}", fields.len()),
            ));
        }
        let id: u32 = fields[0].trim().parse().map_err(|_| {
            Error::parse(movies_path, lineno, format!("bad movie id {:?}", fields[0]))
        })?;
        let mut row = vec![0.0; MOVIELENS_GENRES.len()];
        for token in fields[2].split('|') {
            let token = token.trim();
            if token.is_empty() {
                continue;
            }
            match genre_index.get(&token.to_lowercase()) {
                Some(&j) => row[j] = 1.0,
                None => {
                    return Err(Error::Validation(format!(
                        "{} line {}: unknown genre {:?}",
                        movies_path.display(),
                        lineno,
                        token
                    )))
                }
            }
        }
        item_ids.push(id);
        rows.push(row);
    }
    if item_ids.is_empty() {
        return Err(Error::Validation(format!(
            "no items parsed from {}",
            movies_path.display()
        )));
    }

    let names = MOVIELENS_GENRES.iter().map(|s| s.to_string()).collect();
    assemble(raw, item_ids, rows, names)
}

fn mix_seed(seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer over seed xor salted golden ratio
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-user stratified k-fold partition. Each user's ratings are shuffled
/// with a seed derived from (`seed`, user) and split into k near-equal
/// shares; fold i's test set is every user's i-th share. Users with fewer
/// than k ratings keep all their ratings in train for every fold.
pub fn make_folds(data: &RatingTriples, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::Config(format!("fold count {k} must be >= 2")));
    }
    if data.is_empty() {
        return Err(Error::Validation("cannot split empty rating set".into()));
    }

    // share[entry] = fold whose test set holds the entry, or usize::MAX
    let mut share = vec![usize::MAX; data.len()];
    let mut skipped_users = 0usize;
    for (user, entry_ids) in data.by_user().into_iter().enumerate() {
        let count = entry_ids.len();
        if count == 0 {
            continue;
        }
        if count < k {
            skipped_users += 1;
            continue;
        }
        let mut order = entry_ids;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, user as u64));
        order.shuffle(&mut rng);
        for f in 0..k {
            let lo = f * count / k;
            let hi = (f + 1) * count / k;
            for &entry in &order[lo..hi] {
                share[entry] = f;
            }
        }
    }
    if skipped_users > 0 {
        log::warn!(
            "{} users have fewer than {} ratings; their ratings stay in train for every fold",
            skipped_users,
            k
        );
    }

    let mut folds = Vec::with_capacity(k);
    for f in 0..k {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (entry, &s) in share.iter().enumerate() {
            if s == f {
                test.push(data.entries[entry]);
            } else {
                train.push(data.entries[entry]);
            }
        }
        train.sort_by_key(|e| (e.user, e.item));
        test.sort_by_key(|e| (e.user, e.item));
        folds.push(FoldSplit {
            fold_id: f,
            train: RatingTriples {
                entries: train,
                num_users: data.num_users,
                num_items: data.num_items,
                user_ids: data.user_ids.clone(),
                item_ids: data.item_ids.clone(),
            },
            test: RatingTriples {
                entries: test,
                num_users: data.num_users,
                num_items: data.num_items,
                user_ids: data.user_ids.clone(),
                item_ids: data.item_ids.clone(),
            },
            seed,
        });
    }
    Ok(folds)
}

#[derive(Debug, Serialize, Deserialize)]
struct FoldManifestEntry {
    fold_id: usize,
    train_file: String,
    test_file: String,
    train_count: usize,
    test_count: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct FoldManifest {
    dataset: String,
    seed: u64,
    k: usize,
    num_users: usize,
    num_items: usize,
    user_ids: Vec<u32>,
    item_ids: Vec<u32>,
    genre_names: Vec<String>,
    folds: Vec<FoldManifestEntry>,
}

fn write_triples_tsv(path: &Path, triples: &RatingTriples) -> Result<()> {
    let mut out = String::new();
    for e in &triples.entries {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            e.user, e.item, e.rating, e.timestamp
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

fn read_triples_tsv(
    path: &Path,
    num_users: usize,
    num_items: usize,
    user_ids: &[u32],
    item_ids: &[u32],
) -> Result<RatingTriples> {
    let mut entries = Vec::new();
    for (lineno, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, lineno + 1, "expected 4 tab fields"));
        }
        entries.push(Rating {
            user: fields[0]
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, "bad user index"))?,
            item: fields[1]
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, "bad item index"))?,
            rating: fields[2]
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, "bad rating"))?,
            timestamp: fields[3]
                .parse()
                .map_err(|_| Error::parse(path, lineno + 1, "bad timestamp"))?,
        });
    }
    let triples = RatingTriples {
        entries,
        num_users,
        num_items,
        user_ids: user_ids.to_vec(),
        item_ids: item_ids.to_vec(),
    };
    triples.validate()?;
    Ok(triples)
}

/// Writes folds, genre matrix, and a JSON manifest under `dir`.
pub fn save_fold_cache(
    dir: &Path,
    dataset: &str,
    folds: &[FoldSplit],
    genres: &GenreMatrix,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let first = folds.first().ok_or_else(|| {
        Error::Validation("cannot cache an empty fold list".into())
    })?;

    let mut entries = Vec::new();
    for fold in folds {
        let train_file = format!("fold_{}.train.tsv", fold.fold_id);
        let test_file = format!("fold_{}.test.tsv", fold.fold_id);
        write_triples_tsv(&dir.join(&train_file), &fold.train)?;
        write_triples_tsv(&dir.join(&test_file), &fold.test)?;
        entries.push(FoldManifestEntry {
            fold_id: fold.fold_id,
            train_count: fold.train.len(),
            test_count: fold.test.len(),
            train_file,
            test_file,
        });
    }

    let mut gtsv = String::new();
    for i in 0..genres.num_items() {
        let row: Vec<String> = genres
            .g
            .row(i)
            .iter()
            .map(|&v| format!("{}", v as u8))
            .collect();
        gtsv.push_str(&row.join("\t"));
        gtsv.push('\n');
    }
    fs::write(dir.join("genres.tsv"), gtsv)?;

    let manifest = FoldManifest {
        dataset: dataset.to_string(),
        seed: first.seed,
        k: folds.len(),
        num_users: first.train.num_users,
        num_items: first.train.num_items,
        user_ids: first.train.user_ids.clone(),
        item_ids: first.train.item_ids.clone(),
        genre_names: genres.genre_names.clone(),
        folds: entries,
    };
    let mut file = fs::File::create(dir.join("manifest.json"))?;
    file.write_all(serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    Ok(())
}

/// Reads a fold cache written by [`save_fold_cache`].
pub fn load_fold_cache(dir: &Path) -> Result<(Vec<FoldSplit>, GenreMatrix, String)> {
    let manifest: FoldManifest =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?;

    let d = manifest.genre_names.len();
    let mut g = Array2::<f64>::zeros((manifest.num_items, d));
    for (i, line) in read_lines(&dir.join("genres.tsv"))?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        for (j, tok) in line.split('\t').enumerate() {
            if j >= d {
                return Err(Error::parse(dir.join("genres.tsv"), i + 1, "too many columns"));
            }
            g[(i, j)] = tok
                .parse::<u8>()
                .map_err(|_| Error::parse(dir.join("genres.tsv"), i + 1, "bad flag"))?
                as f64;
        }
    }
    let genres = GenreMatrix::new(g, manifest.genre_names.clone())?;

    let mut folds = Vec::new();
    for entry in &manifest.folds {
        let train = read_triples_tsv(
            &dir.join(&entry.train_file),
            manifest.num_users,
            manifest.num_items,
            &manifest.user_ids,
            &manifest.item_ids,
        )?;
        let test = read_triples_tsv(
            &dir.join(&entry.test_file),
            manifest.num_users,
            manifest.num_items,
            &manifest.user_ids,
            &manifest.item_ids,
        )?;
        folds.push(FoldSplit {
            fold_id: entry.fold_id,
            train,
            test,
            seed: manifest.seed,
        });
    }
    Ok((folds, genres, manifest.dataset))
}

/// Recounts per-genre membership straight from a parsed matrix; used to
/// cross-check `mu` against the raw files.
pub fn recount_genre_membership(genres: &GenreMatrix) -> Vec<usize> {
    (0..genres.num_genres())
        .map(|j| genres.g.column(j).iter().filter(|&&v| v == 1.0).count())
        .collect()
}

/// Builds a `RatingTriples` from explicit entries; indices must already be
/// dense. Intended for tests and synthetic data.
pub fn triples_from_entries(
    entries: Vec<Rating>,
    num_users: usize,
    num_items: usize,
) -> Result<RatingTriples> {
    let triples = RatingTriples {
        entries,
        num_users,
        num_items,
        user_ids: (0..num_users as u32).collect(),
        item_ids: (0..num_items as u32).collect(),
    };
    triples.validate()?;
    Ok(triples)
}

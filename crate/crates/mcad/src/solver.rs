//! Split Bregman solver for nuclear-norm matrix completion with an optional
//! genre-variance regularizer.
//!
//! The full objective is
//!
//! ```text
//! min_Z ||Y - M(Z)||_F^2 + lambda_n ||Z||_*  + lambda_d ||Z F||_F^2
//! ```
//!
//! where `F = G_mu (I - J/d)` removes each row's mean across genre-average
//! columns, so `||Z F||_F^2` is the summed per-user variance of
//! genre-averaged interactions. A proxy variable W carries the diversity
//! term and a Bregman variable B absorbs the Z-W gap:
//!
//! * sub-problem 1: one singular-value-thresholding step on the stacked
//!   least-squares term at step `1/alpha`, `alpha = 1 + eta`;
//! * sub-problem 2: solve `W (eta I + lambda_d F F^T) = eta (Z + B)`;
//! * Bregman update `B <- B + Z - W`.
//!
//! With `lambda_d = 0` the loop collapses to the plain SVT iteration used
//! for the matrix-completion baseline.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use ndarray_linalg::InverseC;

use crate::dataset::GenreMatrix;
use crate::error::{Error, Result};
use crate::lowrank::{masked_residual_sq, svt, SparseObservations};

/// Refuse dense solves beyond this element count.
pub const MAX_DENSE_ELEMENTS: usize = 100_000_000;

/// Genre-deviation operator. For any Z, row u of `Z F` holds user u's
/// genre-average interactions with their mean across genres removed, so
/// every row of `Z F` sums to zero.
#[derive(Debug, Clone)]
pub struct DiversityOperator {
    /// `num_items x d` deviation-from-genre-mean operator.
    pub f: Array2<f64>,
    /// `num_items x d` membership scaled by 1/mu_g.
    pub g_mu: Array2<f64>,
    pub genre_count: usize,
}

impl DiversityOperator {
    pub fn num_items(&self) -> usize {
        self.f.nrows()
    }

    /// `||Z F||_F^2`, the summed per-user genre variance.
    pub fn variance_penalty(&self, z: &ArrayView2<f64>) -> f64 {
        z.dot(&self.f).iter().map(|v| v * v).sum()
    }
}

/// Builds `G_mu` and `F` from a genre matrix. Every genre column must have
/// at least one member; ingestion is responsible for dropping empty columns
/// first.
pub fn build_diversity_operator(genres: &GenreMatrix) -> Result<DiversityOperator> {
    let d = genres.num_genres();
    if d == 0 {
        return Err(Error::Validation("genre matrix has no columns".into()));
    }
    for (j, &mu) in genres.mu.iter().enumerate() {
        if mu < 1.0 {
            return Err(Error::Validation(format!(
                "genre column {:?} has zero membership; drop empty genres before building the operator",
                genres.genre_names[j]
            )));
        }
    }
    let mut g_mu = genres.g.clone();
    for (j, mut col) in g_mu.columns_mut().into_iter().enumerate() {
        col /= genres.mu[j];
    }
    // F(i, j) = G_mu(i, j) - rowmean_i, i.e. G_mu (I - J/d)
    let row_means = g_mu.sum_axis(Axis(1)) / d as f64;
    let mut f = g_mu.clone();
    for (mut row, &mean) in f.rows_mut().into_iter().zip(row_means.iter()) {
        row -= mean;
    }
    Ok(DiversityOperator {
        f,
        g_mu,
        genre_count: d,
    })
}

/// How sub-problem 2 is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WSolveMode {
    /// Woodbury identity through a d x d factorization; exact.
    #[default]
    Direct,
    /// Conjugate gradients on the matrix equation, falling back to direct
    /// mode if it fails to converge within `10 * n` steps.
    Iterative,
}

/// Initial iterate for Z (and W).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ZInit {
    #[default]
    Zeros,
    /// Uniform entries in [-0.5, 0.5), seeded from `SolverConfig::seed`.
    Random,
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub lambda_n: f64,
    pub lambda_d: f64,
    /// Proxy coupling weight; `None` defaults to `lambda_n`.
    pub eta: Option<f64>,
    pub max_iter: usize,
    /// Convergence threshold on the objective delta; the effective bound is
    /// `max(tol, tol * objective(initial Z))` so the rule is scale-free.
    pub tol: f64,
    pub w_mode: WSolveMode,
    pub init: ZInit,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            lambda_n: 10.0,
            lambda_d: 0.0,
            eta: None,
            max_iter: 500,
            tol: 1e-7,
            w_mode: WSolveMode::Direct,
            init: ZInit::Zeros,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn resolved_eta(&self) -> f64 {
        self.eta.unwrap_or(self.lambda_n)
    }

    fn validate(&self, shape: (usize, usize)) -> Result<()> {
        if shape.0 * shape.1 > MAX_DENSE_ELEMENTS {
            return Err(Error::Config(format!(
                "{}x{} dense problem exceeds the {} element guard",
                shape.0, shape.1, MAX_DENSE_ELEMENTS
            )));
        }
        if self.lambda_n < 0.0 || self.lambda_d < 0.0 {
            return Err(Error::Config("regularization weights must be >= 0".into()));
        }
        if self.tol <= 0.0 {
            return Err(Error::Config("tol must be positive".into()));
        }
        if self.max_iter < 1 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        Ok(())
    }
}

/// Final state of a solve: the completed interaction matrix plus the
/// iteration diagnostics.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub z: Array2<f64>,
    /// Proxy variable; empty (0x0) for the plain MC path.
    pub w: Array2<f64>,
    /// Bregman variable; empty (0x0) for the plain MC path.
    pub b: Array2<f64>,
    pub lambda_n: f64,
    pub lambda_d: f64,
    pub eta: f64,
    pub alpha: f64,
    pub iterations: usize,
    /// Objective value at the initial iterate followed by one value per
    /// iteration.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
    /// `||Z - W||_F / ||Z||_F` at termination; 0 for the plain MC path.
    pub proxy_gap: f64,
    /// Rank of Z after the final thresholding step.
    pub rank: usize,
}

impl SolverState {
    pub fn final_objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Solver for `W (eta I + lambda_d F F^T) = eta (Z + B)`. The d x d
/// Woodbury core `K = (eta / lambda_d) I + F^T F` is factorized once and
/// reused across iterations.
pub struct WSolver {
    f: Array2<f64>,
    eta: f64,
    lambda_d: f64,
    mode: WSolveMode,
    /// `K^{-1}`; `None` when `lambda_d = 0` (identity system).
    k_inv: Option<Array2<f64>>,
}

impl WSolver {
    pub fn new(divop: &DiversityOperator, eta: f64, lambda_d: f64, mode: WSolveMode) -> Result<Self> {
        if eta <= 0.0 {
            return Err(Error::Config(format!("eta {eta} must be positive")));
        }
        if lambda_d < 0.0 {
            return Err(Error::Config(format!("lambda_d {lambda_d} must be >= 0")));
        }
        let k_inv = if lambda_d == 0.0 {
            None
        } else {
            let d = divop.genre_count;
            let mut k = divop.f.t().dot(&divop.f);
            for i in 0..d {
                k[(i, i)] += eta / lambda_d;
            }
            // K = eta/lambda_d I + F^T F is symmetric positive definite;
            // invert through its Cholesky factor, computed once per run
            Some(k.invc().map_err(|e| {
                Error::Numerical(format!("failed to invert {d}x{d} Woodbury core: {e}"))
            })?)
        };
        Ok(WSolver {
            f: divop.f.clone(),
            eta,
            lambda_d,
            mode,
            k_inv,
        })
    }

    /// Applies the system operator `W -> W (eta I + lambda_d F F^T)`.
    fn apply(&self, w: &Array2<f64>) -> Array2<f64> {
        let mut out = w * self.eta;
        if self.lambda_d != 0.0 {
            out += &(w.dot(&self.f).dot(&self.f.t()) * self.lambda_d);
        }
        out
    }

    fn solve_direct(&self, rhs_base: &Array2<f64>) -> Array2<f64> {
        match &self.k_inv {
            // identity system: W = Z + B exactly
            None => rhs_base.clone(),
            Some(k_inv) => {
                // Woodbury: (eta I + lambda_d F F^T)^{-1}
                //   = (1/eta) (I - F K^{-1} F^T)
                // so W = C - (C F) K^{-1} F^T with C = Z + B.
                let cf = rhs_base.dot(&self.f);
                rhs_base - &cf.dot(k_inv).dot(&self.f.t())
            }
        }
    }

    fn solve_iterative(&self, rhs_base: &Array2<f64>) -> Option<Array2<f64>> {
        if self.k_inv.is_none() {
            return Some(rhs_base.clone());
        }
        let rhs = rhs_base * self.eta;
        let rhs_norm = frob(&rhs);
        if rhs_norm == 0.0 {
            return Some(Array2::zeros(rhs_base.dim()));
        }
        // CG over matrices with the Frobenius inner product; the operator is
        // self-adjoint positive definite with at most d + 1 distinct
        // eigenvalues, so convergence is fast.
        let mut w = rhs_base.clone();
        let mut r = &rhs - &self.apply(&w);
        let mut p = r.clone();
        let mut rs = frob_sq(&r);
        let tol = 1e-8 * rhs_norm;
        let max_steps = 10 * self.f.nrows();
        for _ in 0..max_steps {
            if rs.sqrt() <= tol {
                return Some(w);
            }
            let ap = self.apply(&p);
            let denom = inner(&p, &ap);
            if denom <= 0.0 {
                return None;
            }
            let alpha = rs / denom;
            w.scaled_add(alpha, &p);
            r.scaled_add(-alpha, &ap);
            let rs_new = frob_sq(&r);
            let beta = rs_new / rs;
            rs = rs_new;
            p = &r + &(p * beta);
        }
        if rs.sqrt() <= tol {
            Some(w)
        } else {
            None
        }
    }

    /// Solves for W given Z and B.
    pub fn solve(&self, z: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let rhs_base = z + b;
        match self.mode {
            WSolveMode::Direct => self.solve_direct(&rhs_base),
            WSolveMode::Iterative => self.solve_iterative(&rhs_base).unwrap_or_else(|| {
                log::warn!("W sub-problem CG did not converge; falling back to direct solve");
                self.solve_direct(&rhs_base)
            }),
        }
    }

    /// Relative residual `||W A - eta (Z + B)||_F / ||eta (Z + B)||_F`.
    pub fn relative_residual(&self, w: &Array2<f64>, z: &Array2<f64>, b: &Array2<f64>) -> f64 {
        let rhs = (z + b) * self.eta;
        let rhs_norm = frob(&rhs);
        if rhs_norm == 0.0 {
            return frob(&self.apply(w));
        }
        frob(&(self.apply(w) - rhs)) / rhs_norm
    }
}

fn frob_sq(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum()
}

fn frob(a: &Array2<f64>) -> f64 {
    frob_sq(a).sqrt()
}

fn inner(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// One-shot solve of sub-problem 2.
pub fn solve_w_subproblem(
    z: &Array2<f64>,
    b: &Array2<f64>,
    divop: &DiversityOperator,
    eta: f64,
    lambda_d: f64,
    mode: WSolveMode,
) -> Result<Array2<f64>> {
    Ok(WSolver::new(divop, eta, lambda_d, mode)?.solve(z, b))
}

fn initial_z(config: &SolverConfig, shape: (usize, usize)) -> Array2<f64> {
    match config.init {
        ZInit::Zeros => Array2::zeros(shape),
        ZInit::Random => {
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
            Array2::from_shape_fn(shape, |_| rng.random_range(-0.5..0.5))
        }
    }
}

/// Shared loop. `divop = None` runs the plain SVT iteration (no proxy);
/// `Some` runs the full split. Both use alpha = 1 + eta.
fn run_iterations(
    y: &SparseObservations,
    divop: Option<&DiversityOperator>,
    config: &SolverConfig,
    context: &str,
) -> Result<SolverState> {
    let shape = y.shape();
    config.validate(shape)?;

    let coupled = divop.is_some();
    let eta = config.resolved_eta();
    if coupled && eta <= 0.0 {
        return Err(Error::Config(
            "eta must be positive; set eta explicitly when lambda_n = 0".into(),
        ));
    }
    if !coupled && eta < 0.0 {
        return Err(Error::Config("eta must be >= 0".into()));
    }
    // spectrum of M^T M + eta I lies in [eta, 1 + eta] because M is a 0/1
    // elementwise sampler, so alpha = 1 + eta is an exact step bound. The
    // plain MC path keeps the same rule, which makes the lambda_d = 0 split
    // iteration coincide with it step for step; eta = 0 gives the undamped
    // MC step.
    let alpha = 1.0 + eta;
    let threshold = config.lambda_n / (2.0 * alpha);

    let wsolver = match divop {
        Some(op) => {
            if op.num_items() != shape.1 {
                return Err(Error::Validation(format!(
                    "diversity operator spans {} items but observations span {}",
                    op.num_items(),
                    shape.1
                )));
            }
            Some(WSolver::new(op, eta, config.lambda_d, config.w_mode)?)
        }
        None => {
            if config.lambda_d != 0.0 {
                return Err(Error::Config(
                    "plain matrix completion requires lambda_d = 0".into(),
                ));
            }
            None
        }
    };

    let mut z = initial_z(config, shape);
    let mut w = if coupled { z.clone() } else { Array2::zeros((0, 0)) };
    let mut b = if coupled {
        Array2::zeros(shape)
    } else {
        Array2::zeros((0, 0))
    };

    let objective = |z: &Array2<f64>, nuclear: f64| -> f64 {
        let mut obj = masked_residual_sq(y, &z.view()) + config.lambda_n * nuclear;
        if let Some(op) = divop {
            if config.lambda_d != 0.0 {
                obj += config.lambda_d * op.variance_penalty(&z.view());
            }
        }
        obj
    };

    let initial_nuclear = if config.lambda_n != 0.0 && config.init == ZInit::Random {
        crate::lowrank::nuclear_norm(&z.view())?
    } else {
        0.0 // zero iterate has zero nuclear norm
    };
    let obj0 = objective(&z, initial_nuclear);
    let delta_bound = config.tol.max(config.tol * obj0);

    let mut trace = Vec::with_capacity(config.max_iter + 1);
    trace.push(obj0);
    let mut converged = false;
    let mut iterations = 0;
    let mut rank = 0;

    for iter in 1..=config.max_iter {
        // gradient step on the (stacked) least-squares term:
        // G = Z + (1/alpha) [ M^T(Y - M(Z)) + eta (W - B - Z) ]
        let mut g = if coupled {
            let mut g = z.clone();
            ndarray::azip!((g in &mut g, &w in &w, &b in &b, &z in &z) {
                *g += (eta / alpha) * (w - b - z);
            });
            g
        } else {
            z.clone()
        };
        for (k, &(r, c)) in y.mask.support().iter().enumerate() {
            let idx = (r as usize, c as usize);
            g[idx] += (y.values[k] - z[idx]) / alpha;
        }

        let shrunk = svt(&g.view(), threshold)?;
        z = shrunk.matrix;
        rank = shrunk.rank_after;

        if let Some(ws) = &wsolver {
            w = ws.solve(&z, &b);
            ndarray::azip!((b in &mut b, &z in &z, &w in &w) *b += z - w);
        }

        let obj = objective(&z, shrunk.nuclear_norm);
        if !obj.is_finite() {
            return Err(Error::Divergence {
                context: context.to_string(),
                iteration: iter,
            });
        }
        let delta = (trace.last().unwrap() - obj).abs();
        trace.push(obj);
        iterations = iter;
        if delta <= delta_bound {
            converged = true;
            break;
        }
    }

    let proxy_gap = if coupled {
        let zn = frob(&z);
        if zn == 0.0 {
            frob(&(&z - &w))
        } else {
            frob(&(&z - &w)) / zn
        }
    } else {
        0.0
    };

    Ok(SolverState {
        z,
        w,
        b,
        lambda_n: config.lambda_n,
        lambda_d: config.lambda_d,
        eta,
        alpha,
        iterations,
        objective_trace: trace,
        converged,
        proxy_gap,
        rank,
    })
}

/// Plain nuclear-norm matrix completion:
/// `Z <- svt(Z + (1/alpha) M^T(Y - M(Z)), lambda_n / (2 alpha))` until the
/// objective delta rule fires. Requires `lambda_d = 0`. `alpha = 1 + eta`
/// as in the split iteration; eta here is pure step damping, so `eta = 0`
/// gives the fastest valid step.
pub fn solve_mc(y: &SparseObservations, config: &SolverConfig) -> Result<SolverState> {
    if config.lambda_d != 0.0 {
        return Err(Error::Config(
            "solve_mc requires lambda_d = 0; use solve_mcad for the diversity term".into(),
        ));
    }
    run_iterations(y, None, config, "matrix completion")
}

/// Full split Bregman iteration with the genre-variance term.
pub fn solve_mcad(
    y: &SparseObservations,
    divop: &DiversityOperator,
    config: &SolverConfig,
) -> Result<SolverState> {
    run_iterations(y, Some(divop), config, "MCAD")
}

/// Metadata stored alongside a completed matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveMeta {
    pub lambda_n: f64,
    pub lambda_d: f64,
    pub eta: f64,
    pub iterations: usize,
    pub final_objective: f64,
    pub converged: bool,
}

impl SolveMeta {
    pub fn from_state(state: &SolverState) -> Self {
        SolveMeta {
            lambda_n: state.lambda_n,
            lambda_d: state.lambda_d,
            eta: state.eta,
            iterations: state.iterations,
            final_objective: state.final_objective(),
            converged: state.converged,
        }
    }
}

/// Writes a completed matrix as a text header plus row-major little-endian
/// f64 payload.
pub fn save_matrix(path: &Path, z: &Array2<f64>, meta: &SolveMeta) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "MCADZ1")?;
    writeln!(out, "{} {}", z.nrows(), z.ncols())?;
    writeln!(out, "lambda_n {:e}", meta.lambda_n)?;
    writeln!(out, "lambda_d {:e}", meta.lambda_d)?;
    writeln!(out, "eta {:e}", meta.eta)?;
    writeln!(out, "iterations {}", meta.iterations)?;
    writeln!(out, "final_objective {:e}", meta.final_objective)?;
    writeln!(out, "converged {}", meta.converged as u8)?;
    writeln!(out, "DATA")?;
    for v in z.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a matrix written by [`save_matrix`].
pub fn load_matrix(path: &Path) -> Result<(Array2<f64>, SolveMeta)> {
    let mut reader = BufReader::new(fs::File::open(path)?);
    let mut header = Vec::new();
    // read byte-wise until the DATA marker so the payload offset is exact
    loop {
        let mut byte = [0u8; 1];
        reader.read_exact(&mut byte)?;
        header.push(byte[0]);
        if header.ends_with(b"DATA\n") {
            break;
        }
        if header.len() > 4096 {
            return Err(Error::Validation(format!(
                "{}: header too long or missing DATA marker",
                path.display()
            )));
        }
    }
    let header = String::from_utf8_lossy(&header);
    let mut lines = header.lines();
    let bad = |msg: &str| Error::Validation(format!("{}: {}", path.display(), msg));
    if lines.next() != Some("MCADZ1") {
        return Err(bad("not an MCADZ1 container"));
    }
    let dims: Vec<usize> = lines
        .next()
        .ok_or_else(|| bad("missing shape line"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| bad("bad shape")))
        .collect::<Result<_>>()?;
    if dims.len() != 2 {
        return Err(bad("shape line must hold two integers"));
    }
    let mut fields = std::collections::HashMap::new();
    for line in lines {
        if line == "DATA" {
            break;
        }
        if let Some((k, v)) = line.split_once(' ') {
            fields.insert(k.to_string(), v.to_string());
        }
    }
    let getf = |k: &str| -> Result<f64> {
        fields
            .get(k)
            .ok_or_else(|| bad(&format!("missing {k}")))?
            .parse()
            .map_err(|_| bad(&format!("bad {k}")))
    };
    let meta = SolveMeta {
        lambda_n: getf("lambda_n")?,
        lambda_d: getf("lambda_d")?,
        eta: getf("eta")?,
        iterations: getf("iterations")? as usize,
        final_objective: getf("final_objective")?,
        converged: getf("converged")? != 0.0,
    };

    let (m, n) = (dims[0], dims[1]);
    let mut payload = vec![0u8; m * n * 8];
    reader.read_exact(&mut payload)?;
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let z = Array2::from_shape_vec((m, n), data)
        .map_err(|e| bad(&format!("payload shape mismatch: {e}")))?;
    Ok((z, meta))
}

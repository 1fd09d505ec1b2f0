//! k-means candidate classes.
//!
//! k-means++ seeding, Lloyd iterations with farthest-point repair of empty
//! clusters, best-of-n restarts by inertia, and silhouette-based choice of k.
//!
//! Tie rules: a point equidistant from several centroids goes to the lowest
//! centroid index; restarts with equal inertia resolve to the lowest trial.

use ndarray::{Array2, ArrayView2, CowArray, Ix2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub k: usize,
    pub restarts: usize,
    pub max_iters: usize,
    /// Stop once the relative inertia improvement of an iteration drops
    /// below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 15,
            restarts: 10,
            max_iters: 300,
            tol: 1e-4,
            seed: 0,
        }
    }
}

impl KMeansConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.restarts == 0 || self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "kmeans needs k >= 1, restarts >= 1, tol >= 0 (got k={}, restarts={}, tol={})",
                self.k, self.restarts, self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub centroids: Array2<f64>,
    pub assignments: Vec<usize>,
    /// Sum of squared distances of points to their assigned centroid.
    pub inertia: f64,
    pub iterations_run: usize,
    /// Inertia after the initial assignment and after every iteration.
    pub inertia_trace: Vec<f64>,
}

impl Clustering {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k()];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Members of every cluster, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k()];
        for (i, &a) in self.assignments.iter().enumerate() {
            out[a].push(i);
        }
        out
    }
}

/// Row-major view over a point matrix.
struct Points<'a> {
    data: CowArray<'a, f64, Ix2>,
    n: usize,
    d: usize,
}

impl<'a> Points<'a> {
    fn new(points: ArrayView2<'a, f64>) -> Self {
        let (n, d) = points.dim();
        Points {
            data: if points.is_standard_layout() {
                CowArray::from(points)
            } else {
                CowArray::from(points.to_owned())
            },
            n,
            d,
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        let s = self.data.as_slice().expect("standard layout");
        &s[i * self.d..(i + 1) * self.d]
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding: the first centroid is a uniformly random point, each
/// further one is drawn with probability proportional to its squared
/// distance to the nearest centroid chosen so far.
pub fn kmeanspp_init(points: ArrayView2<f64>, k: usize, seed: u64) -> Result<Array2<f64>> {
    let pts = Points::new(points);
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if k > pts.n {
        return Err(Error::TooFewPoints { k, n: pts.n });
    }
    let mut rng = seed::rng(seed);
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; pts.n];
    let first = rng.random_range(0..pts.n);
    chosen.push(first);
    taken[first] = true;
    let mut d2: Vec<f64> = (0..pts.n).map(|i| sq_dist(pts.row(i), pts.row(first))).collect();

    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    acc += w;
                    pick = Some(i);
                    if acc > target {
                        break;
                    }
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // Every remaining point coincides with a centroid.
            let free: Vec<usize> = (0..pts.n).filter(|&i| !taken[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen.push(next);
        taken[next] = true;
        for (i, w) in d2.iter_mut().enumerate() {
            let d = sq_dist(pts.row(i), pts.row(next));
            if d < *w {
                *w = d;
            }
        }
    }

    let mut centroids = Array2::zeros((k, pts.d));
    for (mut row, &i) in centroids.rows_mut().into_iter().zip(&chosen) {
        row.iter_mut().zip(pts.row(i)).for_each(|(c, &x)| *c = x);
    }
    Ok(centroids)
}

fn assign(pts: &Points<'_>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    let cents: Vec<&[f64]> = centroids
        .rows()
        .into_iter()
        .map(|r| r.to_slice().expect("owned centroids are contiguous"))
        .collect();
    let (assignments, dists) = (0..pts.n)
        .into_par_iter()
        .map(|i| {
            let x = pts.row(i);
            let mut best = (0, f64::INFINITY);
            for (j, c) in cents.iter().enumerate() {
                let d = sq_dist(x, c);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip();
    (assignments, dists)
}

fn update(pts: &Points<'_>, k: usize, assignments: &[usize], dists: &[f64]) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, pts.d));
    let mut counts = vec![0usize; k];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        sums.row_mut(a).iter_mut().zip(pts.row(i)).for_each(|(s, &x)| *s += x);
    }
    let mut reseeded = vec![false; pts.n];
    for (j, &count) in counts.iter().enumerate() {
        if count > 0 {
            sums.row_mut(j).mapv_inplace(|s| s / count as f64);
            continue;
        }
        // Empty cluster: move it onto the point farthest from its centroid.
        let mut far = None;
        for (i, &d) in dists.iter().enumerate() {
            if !reseeded[i] && far.is_none_or(|(_, best)| d > best) {
                far = Some((i, d));
            }
        }
        if let Some((i, _)) = far {
            reseeded[i] = true;
            sums.row_mut(j).iter_mut().zip(pts.row(i)).for_each(|(s, &x)| *s = x);
        }
    }
    sums
}

/// Lloyd iterations from the given centroids until the assignment stops
/// changing, `max_iters` updates have run, or an update improves inertia by
/// less than `tol` (relative).
///
/// The returned centroids are the ones the returned assignment was computed
/// against, so every point is assigned to its nearest centroid and
/// `inertia` is exact for them.
pub fn lloyd_fit(points: ArrayView2<f64>, init_centroids: &Array2<f64>, max_iters: usize, tol: f64) -> Result<Clustering> {
    let pts = Points::new(points);
    if pts.n == 0 {
        return Err(Error::Empty("no points to cluster"));
    }
    if init_centroids.ncols() != pts.d {
        return Err(Error::ShapeMismatch {
            expected: pts.d,
            got: init_centroids.ncols(),
        });
    }
    if init_centroids.nrows() == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let k = init_centroids.nrows();
    let mut centroids = init_centroids.as_standard_layout().into_owned();
    let (mut assignments, mut dists) = assign(&pts, &centroids);
    let mut inertia: f64 = dists.iter().sum();
    let mut trace = vec![inertia];
    let mut iterations_run = 0;

    for it in 1..=max_iters {
        let next = update(&pts, k, &assignments, &dists);
        let (a, d) = assign(&pts, &next);
        let next_inertia: f64 = d.iter().sum();
        trace.push(next_inertia);
        iterations_run = it;
        let fixpoint = a == assignments;
        let improvement = if inertia > 0.0 {
            (inertia - next_inertia) / inertia
        } else {
            0.0
        };
        centroids = next;
        assignments = a;
        dists = d;
        inertia = next_inertia;
        if fixpoint || improvement < tol {
            break;
        }
    }

    Ok(Clustering {
        centroids,
        assignments,
        inertia,
        iterations_run,
        inertia_trace: trace,
    })
}

/// Seed of restart trial `trial`.
pub fn trial_seed(cfg: &KMeansConfig, trial: usize) -> u64 {
    cfg.seed.wrapping_add(trial as u64)
}

/// Runs every restart trial (k-means++ then Lloyd) and returns all of them in
/// trial order.
pub fn fit_trials(points: ArrayView2<f64>, cfg: &KMeansConfig) -> Result<Vec<Clustering>> {
    cfg.validate()?;
    if points.nrows() == 0 {
        return Err(Error::Empty("no points to cluster"));
    }
    let points = points.as_standard_layout();
    (0..cfg.restarts)
        .into_par_iter()
        .map(|t| {
            let init = kmeanspp_init(points.view(), cfg.k, trial_seed(cfg, t))?;
            lloyd_fit(points.view(), &init, cfg.max_iters, cfg.tol)
        })
        .collect()
}

/// Index of the minimum-inertia trial, lowest index on ties.
pub fn best_trial(trials: &[Clustering]) -> Option<usize> {
    trials
        .iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, c)| match best {
            Some((_, b)) if c.inertia >= b => best,
            _ => Some((i, c.inertia)),
        })
        .map(|(i, _)| i)
}

pub fn fit_with_restarts(points: ArrayView2<f64>, cfg: &KMeansConfig) -> Result<Clustering> {
    let mut trials = fit_trials(points, cfg)?;
    let best = best_trial(&trials).expect("restarts >= 1");
    Ok(trials.swap_remove(best))
}

/// Mean silhouette coefficient. A sample alone in its cluster scores 0, as
/// does a sample whose intra- and nearest-cluster distances are both 0.
pub fn silhouette_score(points: ArrayView2<f64>, assignments: &[usize]) -> Result<f64> {
    let pts = Points::new(points);
    if assignments.len() != pts.n {
        return Err(Error::ShapeMismatch {
            expected: pts.n,
            got: assignments.len(),
        });
    }
    let labels: std::collections::BTreeSet<usize> = assignments.iter().copied().collect();
    if labels.len() < 2 {
        return Err(Error::Degenerate("silhouette needs at least 2 clusters".into()));
    }
    let index: std::collections::BTreeMap<usize, usize> =
        labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let compact: Vec<usize> = assignments.iter().map(|a| index[a]).collect();
    let k = labels.len();
    let mut sizes = vec![0usize; k];
    for &c in &compact {
        sizes[c] += 1;
    }

    let scores: Vec<f64> = (0..pts.n)
        .into_par_iter()
        .map(|i| {
            let own = compact[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; k];
            let xi = pts.row(i);
            for j in 0..pts.n {
                if j != i {
                    sums[compact[j]] += sq_dist(xi, pts.row(j)).sqrt();
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..k)
                .filter(|&c| c != own)
                .map(|c| sums[c] / sizes[c] as f64)
                .fold(f64::INFINITY, f64::min);
            let denom = a.max(b);
            if denom > 0.0 {
                (b - a) / denom
            } else {
                0.0
            }
        })
        .collect();
    Ok(scores.iter().sum::<f64>() / pts.n as f64)
}

/// Mean silhouette of the best restart clustering for every k in the range.
pub fn silhouette_profile(points: ArrayView2<f64>, k_min: usize, k_max: usize, cfg: &KMeansConfig) -> Result<Vec<(usize, f64)>> {
    if k_min < 2 || k_max < k_min {
        return Err(Error::InvalidConfig(format!(
            "k range needs 2 <= k_min <= k_max (got {k_min}..={k_max})"
        )));
    }
    if points.nrows() <= k_max {
        return Err(Error::TooFewPoints {
            k: k_max,
            n: points.nrows(),
        });
    }
    (k_min..=k_max)
        .map(|k| {
            let c = fit_with_restarts(points, &KMeansConfig { k, ..cfg.clone() })?;
            Ok((k, silhouette_score(points, &c.assignments)?))
        })
        .collect()
}

/// The k with the highest mean silhouette; ties go to the smaller k.
pub fn choose_k(points: ArrayView2<f64>, k_min: usize, k_max: usize, cfg: &KMeansConfig) -> Result<usize> {
    let profile = silhouette_profile(points, k_min, k_max, cfg)?;
    Ok(profile
        .iter()
        .fold((0, f64::NEG_INFINITY), |best, &(k, s)| if s > best.1 { (k, s) } else { best })
        .0)
}

//! Lloyd's k-means with k-means++ seeding and independent restarts.
//!
//! Restart `r` draws from ChaCha8 seeded with `seed` on stream `r`, so
//! restarts are independent of each other and of evaluation order. The
//! lowest-inertia restart wins; ties go to the lowest restart index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SotError};
use crate::matrix::{sq_euclidean, Mat};
use crate::par;

pub const DEFAULT_RESTARTS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub k: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansParams {
            k,
            restarts: DEFAULT_RESTARTS,
            max_iter: DEFAULT_MAX_ITER,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    /// k×d
    pub centroids: Mat,
    /// Sum of squared distances to the assigned centroid.
    pub inertia: f64,
    pub restarts_used: usize,
    /// Restart that produced this result.
    pub best_restart: usize,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_history: Vec<f64>,
}

pub fn kmeans(data: &Mat, k: usize, seed: u64, restarts: usize) -> Result<ClusteringResult> {
    kmeans_with(
        data,
        &KMeansParams {
            restarts,
            ..KMeansParams::new(k, seed)
        },
    )
}

pub fn kmeans_with(data: &Mat, p: &KMeansParams) -> Result<ClusteringResult> {
    let n = data.rows();
    if p.k < 2 || p.k > n {
        return Err(SotError::InvalidParams(format!(
            "k must satisfy 2 <= k <= n (k = {}, n = {n})",
            p.k
        )));
    }
    if p.restarts == 0 || p.max_iter == 0 {
        return Err(SotError::InvalidParams(
            "restarts and max_iter must be >= 1".into(),
        ));
    }
    if (1..n).all(|i| data.row(i) == data.row(0)) {
        return Err(SotError::DegenerateInput("all points are identical"));
    }

    let runs = par::map_range(p.restarts, |r| single_run(data, p, r));
    let (best_restart, best) = runs
        .into_iter()
        .enumerate()
        .fold(None::<(usize, Run)>, |acc, (r, run)| match acc {
            Some((br, b)) if b.inertia <= run.inertia => Some((br, b)),
            _ => Some((r, run)),
        })
        .expect("at least one restart");
    Ok(ClusteringResult {
        assignments: best.assign,
        centroids: best.centroids,
        inertia: best.inertia,
        restarts_used: p.restarts,
        best_restart,
        inertia_history: best.history,
    })
}

struct Run {
    assign: Vec<usize>,
    centroids: Mat,
    inertia: f64,
    history: Vec<f64>,
}

fn single_run(data: &Mat, p: &KMeansParams, restart: usize) -> Run {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(restart as u64);
    let mut centroids = plus_plus_init(data, p.k, &mut rng);
    let (mut assign, inertia) = assign_points(data, &centroids);
    let mut history = vec![inertia];

    for _ in 0..p.max_iter {
        centroids = update_centroids(data, &mut assign, p.k);
        let (next, inertia) = assign_points(data, &centroids);
        history.push(inertia);
        if next == assign {
            break;
        }
        assign = next;
    }
    centroids = update_centroids(data, &mut assign, p.k);
    let inertia = total_inertia(data, &centroids, &assign);
    Run {
        assign,
        centroids,
        inertia,
        history,
    }
}

/// Greedy k-means++: each step draws `2 + ln k` candidates by D² sampling
/// and keeps the one giving the lowest potential.
fn plus_plus_init(data: &Mat, k: usize, rng: &mut ChaCha8Rng) -> Mat {
    let n = data.rows();
    let trials = 2 + (k as f64).ln() as usize;
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_euclidean(data.row(i), data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let mut best: Option<(f64, usize, Vec<f64>)> = None;
        for _ in 0..trials {
            let cand = if total > 0.0 { sample_d2(&d2, rng.random::<f64>() * total) } else { rng.random_range(0..n) };
            let nd: Vec<f64> = d2
                .iter()
                .enumerate()
                .map(|(i, &d)| d.min(sq_euclidean(data.row(i), data.row(cand))))
                .collect();
            let pot: f64 = nd.iter().sum();
            if best.as_ref().is_none_or(|b| pot < b.0) {
                best = Some((pot, cand, nd));
            }
        }
        let (_, next, nd) = best.expect("at least one trial");
        chosen.push(next);
        d2 = nd;
    }
    data.select_rows(&chosen)
}

fn sample_d2(d2: &[f64], target: f64) -> usize {
    let mut acc = 0.0;
    let mut pick = None;
    for (i, &w) in d2.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        pick = Some(i);
        if acc > target {
            break;
        }
    }
    pick.expect("positive total weight")
}

/// Nearest centroid per point (ties to the lower index) and the inertia.
fn assign_points(data: &Mat, centroids: &Mat) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assign = data
        .iter_rows()
        .map(|x| {
            let (best, dist) = centroids
                .iter_rows()
                .map(|c| sq_euclidean(x, c))
                .enumerate()
                .fold((0, f64::INFINITY), |(bi, bd), (i, d)| if d < bd { (i, d) } else { (bi, bd) });
            inertia += dist;
            best
        })
        .collect();
    (assign, inertia)
}

fn total_inertia(data: &Mat, centroids: &Mat, assign: &[usize]) -> f64 {
    data.iter_rows()
        .zip(assign)
        .map(|(x, &c)| sq_euclidean(x, centroids.row(c)))
        .sum()
}

/// Cluster means. An empty cluster takes over the point farthest from its
/// own centroid among clusters with at least two members.
fn update_centroids(data: &Mat, assign: &mut [usize], k: usize) -> Mat {
    let d = data.cols();
    loop {
        let mut sums = Mat::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (x, &c) in data.iter_rows().zip(assign.iter()) {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                sums.row_mut(c).iter_mut().for_each(|s| *s *= inv);
            }
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return sums;
        };
        let donor = data
            .iter_rows()
            .zip(assign.iter())
            .enumerate()
            .filter(|(_, (_, &c))| counts[c] >= 2)
            .map(|(i, (x, &c))| (i, sq_euclidean(x, sums.row(c))))
            .fold(None::<(usize, f64)>, |acc, (i, dist)| match acc {
                Some((_, bd)) if bd >= dist => acc,
                _ => Some((i, dist)),
            })
            .map(|(i, _)| i)
            .expect("k <= n leaves a cluster with two members");
        assign[donor] = empty;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[[f64; 2]]) -> Mat {
        Mat::from_rows(rows).unwrap()
    }

    #[test]
    fn two_tight_pairs() {
        // Each pair's inertia is half its squared spread: 1/2 + 4/2.
        let data = m(&[[0.0, 0.0], [0.0, 1.0], [10.0, 0.0], [10.0, 2.0]]);
        let r = kmeans(&data, 2, 42, 10).unwrap();
        assert!((r.inertia - 2.5).abs() < 1e-12);
        assert_eq!(r.assignments[0], r.assignments[1]);
        assert_eq!(r.assignments[2], r.assignments[3]);
        assert_ne!(r.assignments[0], r.assignments[2]);
    }

    #[test]
    fn k_equals_n() {
        let data = m(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [5.0, 5.0], [2.0, 3.0]]);
        let r = kmeans(&data, 5, 3, 4).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut a = r.assignments.clone();
        a.sort();
        assert_eq!(a, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn identical_points_rejected() {
        let data = m(&[[1.0, 2.0]; 6]);
        assert_eq!(
            kmeans(&data, 2, 0, 1).unwrap_err(),
            SotError::DegenerateInput("all points are identical")
        );
    }

    #[test]
    fn invalid_k_rejected() {
        let data = m(&[[0.0, 0.0], [1.0, 1.0]]);
        assert!(kmeans(&data, 1, 0, 1).is_err());
        assert!(kmeans(&data, 3, 0, 1).is_err());
        assert!(kmeans(&data, 2, 0, 0).is_err());
    }

    #[test]
    fn empty_cluster_reseeded() {
        // Three distinct locations but many duplicates; k = 3 must still
        // produce three nonempty clusters.
        let mut rows = vec![[0.0, 0.0]; 5];
        rows.extend([[1.0, 0.0]; 5]);
        rows.push([9.0, 9.0]);
        let r = kmeans(&m(&rows), 3, 1, 5).unwrap();
        let mut counts = [0; 3];
        r.assignments.iter().for_each(|&a| counts[a] += 1);
        assert!(counts.iter().all(|&c| c > 0));
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let rows: Vec<[f64; 2]> = (0..40).map(|i| [((i * 7) % 11) as f64, ((i * 3) % 5) as f64]).collect();
        let a = kmeans(&m(&rows), 4, 9, 6).unwrap();
        let b = kmeans(&m(&rows), 4, 9, 6).unwrap();
        assert_eq!(a, b);
        let seq = par::with_workers(1, || kmeans(&m(&rows), 4, 9, 6).unwrap());
        assert_eq!(a, seq);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn lloyd_inertia_is_monotone(
            pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 12..60),
            k in 2usize..6,
            seed in any::<u64>(),
        ) {
            let rows: Vec<[f64; 2]> = pts.into_iter().map(|(a, b)| [a, b]).collect();
            let data = m(&rows);
            let r = kmeans(&data, k, seed, 3).unwrap();
            for w in r.inertia_history.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9 * w[0].max(1.0));
            }
            prop_assert!(r.inertia >= 0.0);
            prop_assert!(r.inertia <= r.inertia_history.last().unwrap() + 1e-9);
            prop_assert!(r.assignments.iter().all(|&a| a < k));
            let mut restart_best = f64::INFINITY;
            for rr in 0..3 {
                let single = single_run(&data, &KMeansParams { restarts: 3, ..KMeansParams::new(k, seed) }, rr);
                restart_best = restart_best.min(single.inertia);
            }
            prop_assert_eq!(r.inertia, restart_best);
        }
    }
}

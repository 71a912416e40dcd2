//! Entropy-regularized self-transport with a masked diagonal.
//!
//! Solves `min ⟨D∞, W⟩ − h(W)/λ` over nonnegative `W` with every row and
//! column summing to one. The diagonal is excluded from the support, so the
//! kernel is `exp(−λ d_ij)` off the diagonal and exactly zero on it.
//!
//! One sweep is a column normalization followed by a row normalization, so
//! the returned plan always has exact unit row sums and `marginal_err`
//! measures the remaining column deviation.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SotError};
use crate::matrix::{DistanceMatrix, Mat};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinkhornParams {
    /// Entropy regularization weight; larger means closer to the exact plan.
    pub lambda: f64,
    /// Upper bound on row+column sweeps.
    pub max_sweeps: usize,
    /// Stop early once the marginal L1 error drops to this value. Zero
    /// disables early stopping and always runs `max_sweeps`.
    pub marginal_tol: f64,
    pub log_domain: bool,
}

impl Default for SinkhornParams {
    fn default() -> Self {
        SinkhornParams {
            lambda: 0.1,
            max_sweeps: 10,
            marginal_tol: 0.0,
            log_domain: true,
        }
    }
}

impl SinkhornParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(SotError::InvalidParams(format!(
                "lambda must be positive and finite, got {}",
                self.lambda
            )));
        }
        if self.max_sweeps == 0 {
            return Err(SotError::InvalidParams("max_sweeps must be >= 1".into()));
        }
        if self.marginal_tol.is_nan() || self.marginal_tol < 0.0 {
            return Err(SotError::InvalidParams(format!(
                "marginal_tol must be >= 0, got {}",
                self.marginal_tol
            )));
        }
        Ok(())
    }
}

/// Output of [`sinkhorn_solve`]: a nonnegative n×n plan of total mass n.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportPlan {
    pub w: Mat,
    /// Max over rows and columns of `|sum − 1|`.
    pub marginal_err: f64,
    pub sweeps_used: usize,
}

impl TransportPlan {
    pub fn n(&self) -> usize {
        self.w.rows()
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.w)
    }
}

/// `h(W) = −Σ w log w` with `0 log 0 = 0`.
pub fn entropy(w: &Mat) -> f64 {
    -w.as_slice()
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| x * x.ln())
        .sum::<f64>()
}

/// Max over all rows and columns of `|sum − 1|`.
pub fn marginal_error(w: &Mat) -> f64 {
    w.row_sums()
        .into_iter()
        .chain(w.col_sums())
        .map(|s| (s - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `Σ_i |r_i − 1| + Σ_j |c_j − 1|`; the quantity early stopping watches.
pub fn marginal_l1_error(w: &Mat) -> f64 {
    w.row_sums()
        .into_iter()
        .chain(w.col_sums())
        .map(|s| (s - 1.0).abs())
        .sum()
}

fn log_sum_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn sinkhorn_solve(cost: &DistanceMatrix, p: &SinkhornParams) -> Result<TransportPlan> {
    p.validate()?;
    if !cost.is_masked() {
        return Err(SotError::InvalidCost("self-transport requires a masked diagonal"));
    }
    let n = cost.n();
    if n < 2 {
        return Err(SotError::Infeasible);
    }
    let w = if p.log_domain {
        solve_log(cost, p)
    } else {
        solve_linear(cost, p)?
    };
    let (mut w, sweeps_used) = w;
    for i in 0..n {
        w.set(i, i, 0.0);
    }
    let marginal_err = marginal_error(&w);
    Ok(TransportPlan {
        w,
        marginal_err,
        sweeps_used,
    })
}

/// Returns the log-kernel and its transpose (`−∞` on the diagonal).
fn log_kernel(cost: &DistanceMatrix, lambda: f64) -> (Mat, Mat) {
    let n = cost.n();
    let mut lk = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = if i == j {
                f64::NEG_INFINITY
            } else {
                -lambda * cost.get(i, j)
            };
            lk.set(i, j, v);
        }
    }
    let lkt = lk.transpose();
    (lk, lkt)
}

fn solve_log(cost: &DistanceMatrix, p: &SinkhornParams) -> (Mat, usize) {
    let n = cost.n();
    let (lk, lkt) = log_kernel(cost, p.lambda);
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut sweeps = 0;
    let assemble = |f: &[f64], g: &[f64]| {
        let mut w = Mat::zeros(n, n);
        par::for_each_row_mut(w.as_mut_slice(), n, |i, row| {
            let lrow = lk.row(i);
            for j in 0..n {
                row[j] = (lrow[j] + f[i] + g[j]).exp();
            }
        });
        w
    };
    for _ in 0..p.max_sweeps {
        g = par::map_range(n, |j| {
            -log_sum_exp(lkt.row(j).iter().zip(&f).map(|(k, fi)| k + fi))
        });
        f = par::map_range(n, |i| {
            -log_sum_exp(lk.row(i).iter().zip(&g).map(|(k, gj)| k + gj))
        });
        sweeps += 1;
        if p.marginal_tol > 0.0 && marginal_l1_error(&assemble(&f, &g)) <= p.marginal_tol {
            break;
        }
    }
    (assemble(&f, &g), sweeps)
}

fn solve_linear(cost: &DistanceMatrix, p: &SinkhornParams) -> Result<(Mat, usize)> {
    let n = cost.n();
    let (lk, lkt) = log_kernel(cost, p.lambda);
    let k = Mat::new(n, n, lk.as_slice().iter().map(|v| v.exp()).collect())?;
    let kt = Mat::new(n, n, lkt.as_slice().iter().map(|v| v.exp()).collect())?;
    let mut u = vec![1.0; n];
    let mut v = vec![1.0; n];
    let mut sweeps = 0;

    let scale = |m: &Mat, other: &[f64], axis: &'static str| -> Result<Vec<f64>> {
        let sums = par::map_range(n, |i| {
            m.row(i).iter().zip(other).map(|(a, b)| a * b).sum::<f64>()
        });
        sums.into_iter()
            .enumerate()
            .map(|(i, s)| {
                let r = 1.0 / s;
                if s > 0.0 && r.is_finite() {
                    Ok(r)
                } else {
                    Err(SotError::NumericalUnderflow { axis, index: i })
                }
            })
            .collect()
    };
    let assemble = |u: &[f64], v: &[f64]| {
        let mut w = Mat::zeros(n, n);
        par::for_each_row_mut(w.as_mut_slice(), n, |i, row| {
            let krow = k.row(i);
            for j in 0..n {
                row[j] = u[i] * krow[j] * v[j];
            }
        });
        w
    };
    for _ in 0..p.max_sweeps {
        v = scale(&kt, &u, "column")?;
        u = scale(&k, &v, "row")?;
        sweeps += 1;
        if p.marginal_tol > 0.0 && marginal_l1_error(&assemble(&u, &v)) <= p.marginal_tol {
            break;
        }
    }
    Ok((assemble(&u, &v), sweeps))
}

/// Minimum-cost fixed-point-free permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfMatch {
    /// `perm[i]` is the item matched to `i`; never equal to `i`.
    pub perm: Vec<usize>,
    pub objective: f64,
}

/// Largest n accepted by [`exact_selfmatch_oracle`].
pub const ORACLE_MAX_N: usize = 10;

/// Exhaustive search over derangements.
///
/// A linear objective over doubly-stochastic matrices with a forbidden
/// diagonal is minimized at a derangement, so this is the exact optimum of
/// the unregularized problem. Ties go to the lexicographically smallest
/// permutation.
pub fn exact_selfmatch_oracle(cost: &DistanceMatrix) -> Result<SelfMatch> {
    let n = cost.n();
    if n < 2 {
        return Err(SotError::Infeasible);
    }
    if n > ORACLE_MAX_N {
        return Err(SotError::TooLarge(n));
    }
    struct Search<'a> {
        cost: &'a DistanceMatrix,
        used: Vec<bool>,
        cur: Vec<usize>,
        best: Option<(Vec<usize>, f64)>,
    }
    impl Search<'_> {
        // Values are tried in increasing order, so derangements are visited
        // lexicographically and the incumbent precedes everything still
        // unexplored; pruning on `>=` therefore keeps the lexicographic
        // tie-break.
        fn go(&mut self, pos: usize, partial: f64) {
            let n = self.used.len();
            if let Some((_, b)) = &self.best {
                if partial >= *b {
                    return;
                }
            }
            if pos == n {
                self.best = Some((self.cur.clone(), partial));
                return;
            }
            for v in 0..n {
                if v == pos || self.used[v] {
                    continue;
                }
                self.used[v] = true;
                self.cur.push(v);
                self.go(pos + 1, partial + self.cost.get(pos, v));
                self.cur.pop();
                self.used[v] = false;
            }
        }
    }
    let mut s = Search {
        cost,
        used: vec![false; n],
        cur: Vec::with_capacity(n),
        best: None,
    };
    s.go(0, 0.0);
    let (perm, objective) = s.best.ok_or(SotError::Infeasible)?;
    Ok(SelfMatch { perm, objective })
}

/// Upper bound on `h(W)` for a zero-diagonal plan with unit marginals.
pub fn max_entropy_bound(n: usize) -> f64 {
    if n < 2 {
        return 0.0;
    }
    n as f64 * ((n - 1) as f64).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::{cosine_similarity, pairwise_sq_distances, FeatureMatrix};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn masked(rows: &[Vec<f64>]) -> DistanceMatrix {
        DistanceMatrix::from_mat(Mat::from_rows(rows).unwrap())
            .unwrap()
            .mask_diagonal()
            .unwrap()
    }

    pub(crate) fn random_cost(n: usize, seed: u64) -> DistanceMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in (i + 1)..n {
                let v = rng.random_range(0.0..4.0);
                m.set(i, j, v);
                m.set(j, i, v);
            }
        }
        DistanceMatrix::from_mat(m).unwrap().mask_diagonal().unwrap()
    }

    fn params(lambda: f64, sweeps: usize) -> SinkhornParams {
        SinkhornParams {
            lambda,
            max_sweeps: sweeps,
            ..SinkhornParams::default()
        }
    }

    /// Every permutation of 0..n, lexicographic.
    fn all_perms(n: usize) -> Vec<Vec<usize>> {
        fn rec(n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            if cur.len() == n {
                out.push(cur.clone());
                return;
            }
            for v in 0..n {
                if !cur.contains(&v) {
                    cur.push(v);
                    rec(n, cur, out);
                    cur.pop();
                }
            }
        }
        let mut out = Vec::new();
        rec(n, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn n2_is_forced() {
        for mode in [true, false] {
            let c = masked(&[vec![0.0, 3.7], vec![3.7, 0.0]]);
            let p = SinkhornParams {
                log_domain: mode,
                ..params(0.1, 10)
            };
            let plan = sinkhorn_solve(&c, &p).unwrap();
            let expect = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
            assert!(plan.w.max_abs_diff(&expect) < 1e-12);
            assert!(entropy(&plan.w).abs() < 1e-12);
        }
    }

    #[test]
    fn n3_equal_costs_split_evenly() {
        let c = masked(&[
            vec![0.0, 1.3, 1.3],
            vec![1.3, 0.0, 1.3],
            vec![1.3, 1.3, 0.0],
        ]);
        let plan = sinkhorn_solve(&c, &params(0.1, 10)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 0.5 };
                assert!((plan.w.get(i, j) - want).abs() < 1e-9);
            }
        }
        assert!((plan.entropy() - 3.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn unmasked_cost_rejected() {
        let c = DistanceMatrix::from_mat(Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap()).unwrap();
        assert!(matches!(
            sinkhorn_solve(&c, &params(0.1, 10)),
            Err(SotError::InvalidCost(_))
        ));
    }

    #[test]
    fn bad_params_rejected() {
        let c = random_cost(4, 1);
        for p in [params(0.0, 10), params(-1.0, 10), params(f64::NAN, 10), params(1.0, 0)] {
            assert!(matches!(sinkhorn_solve(&c, &p), Err(SotError::InvalidParams(_))));
        }
    }

    #[test]
    fn linear_domain_underflows_where_log_domain_does_not() {
        let c = masked(&[
            vec![0.0, 4.0, 4.0],
            vec![4.0, 0.0, 4.0],
            vec![4.0, 4.0, 0.0],
        ]);
        let lin = SinkhornParams {
            log_domain: false,
            ..params(500.0, 10)
        };
        assert!(matches!(
            sinkhorn_solve(&c, &lin),
            Err(SotError::NumericalUnderflow { .. })
        ));
        let plan = sinkhorn_solve(&c, &params(500.0, 10)).unwrap();
        assert!(plan.marginal_err < 1e-12);
    }

    #[test]
    fn linear_and_log_agree_when_both_stable() {
        let c = random_cost(7, 3);
        let a = sinkhorn_solve(&c, &params(2.0, 50)).unwrap();
        let b = sinkhorn_solve(
            &c,
            &SinkhornParams {
                log_domain: false,
                ..params(2.0, 50)
            },
        )
        .unwrap();
        assert!(a.w.max_abs_diff(&b.w) < 1e-12);
    }

    #[test]
    fn early_stop_honours_tolerance() {
        let c = random_cost(20, 9);
        let p = SinkhornParams {
            marginal_tol: 1e-8,
            ..params(1.0, 1000)
        };
        let plan = sinkhorn_solve(&c, &p).unwrap();
        assert!(plan.sweeps_used < 1000);
        assert!(marginal_l1_error(&plan.w) <= 1e-8);
        let fixed = sinkhorn_solve(&c, &params(1.0, 7)).unwrap();
        assert_eq!(fixed.sweeps_used, 7);
    }

    #[test]
    fn rows_exact_columns_reported() {
        let c = random_cost(30, 4);
        let plan = sinkhorn_solve(&c, &params(5.0, 3)).unwrap();
        for s in plan.w.row_sums() {
            assert!((s - 1.0).abs() < 1e-12);
        }
        assert_eq!(plan.marginal_err, marginal_error(&plan.w));
        assert!(plan.marginal_err > 0.0);
    }

    #[test]
    fn marginal_error_examples() {
        let ds = Mat::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(marginal_error(&ds), 0.0);
        assert_eq!(marginal_error(&Mat::zeros(3, 3)), 1.0);
        let two = Mat::from_rows(&[[0.0, 2.0], [2.0, 0.0]]).unwrap();
        assert_eq!(marginal_error(&two), 1.0);
    }

    #[test]
    fn oracle_small_cases() {
        let c = masked(&[vec![0.0, 0.4], vec![0.4, 0.0]]);
        let m = exact_selfmatch_oracle(&c).unwrap();
        assert_eq!(m.perm, vec![1, 0]);
        assert!((m.objective - 0.8).abs() < 1e-15);

        // The two derangements of S3 are the 3-cycles (1,2,0) and (2,0,1);
        // both cost 0.1 + 1.0 + 1.0, so the lexicographically first wins.
        let c = masked(&[
            vec![0.0, 0.1, 1.0],
            vec![0.1, 0.0, 1.0],
            vec![1.0, 1.0, 0.0],
        ]);
        let m = exact_selfmatch_oracle(&c).unwrap();
        assert_eq!(m.perm, vec![1, 2, 0]);
        assert!((m.objective - 2.1).abs() < 1e-12);
    }

    #[test]
    fn oracle_beats_every_derangement_n4() {
        for seed in 0..20 {
            let c = random_cost(4, seed);
            let m = exact_selfmatch_oracle(&c).unwrap();
            let derangements: Vec<_> = all_perms(4)
                .into_iter()
                .filter(|p| p.iter().enumerate().all(|(i, &v)| i != v))
                .collect();
            assert_eq!(derangements.len(), 9);
            let mut best: Option<(Vec<usize>, f64)> = None;
            for p in &derangements {
                let obj: f64 = p.iter().enumerate().map(|(i, &j)| c.get(i, j)).sum();
                assert!(m.objective <= obj + 1e-15);
                if best.as_ref().is_none_or(|(_, b)| obj < *b) {
                    best = Some((p.clone(), obj));
                }
            }
            assert_eq!(best.unwrap().0, m.perm);
        }
    }

    #[test]
    fn oracle_guards() {
        assert_eq!(exact_selfmatch_oracle(&random_cost(11, 0)).unwrap_err(), SotError::TooLarge(11));
        let one = FeatureMatrix::from_rows(&[[1.0]]).unwrap();
        let d = pairwise_sq_distances(&cosine_similarity(&one).unwrap());
        assert_eq!(exact_selfmatch_oracle(&d).unwrap_err(), SotError::Infeasible);
    }

    #[test]
    fn large_lambda_approaches_oracle_n5() {
        for seed in 0..10 {
            let c = random_cost(5, 100 + seed);
            let oracle = exact_selfmatch_oracle(&c).unwrap();
            let plan = sinkhorn_solve(&c, &params(50.0, 500)).unwrap();
            let gap = c.frobenius(&plan.w) - oracle.objective;
            assert!(gap <= max_entropy_bound(5) / 50.0, "gap {gap}");
        }
    }

    #[test]
    fn transport_cost_decreases_with_lambda() {
        for seed in 0..10 {
            let n = 4 + (seed as usize % 5);
            let c = random_cost(n, 200 + seed);
            let oracle = exact_selfmatch_oracle(&c).unwrap().objective;
            let costs: Vec<f64> = [1.0, 10.0, 50.0]
                .iter()
                .map(|&l| c.frobenius(&sinkhorn_solve(&c, &params(l, 2000)).unwrap().w))
                .collect();
            assert!(costs[0] >= costs[1] - 1e-9 && costs[1] >= costs[2] - 1e-9, "{costs:?}");
            assert!(costs[2] - oracle <= max_entropy_bound(n) / 50.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn plan_invariants(n in 2usize..40, seed in any::<u64>(), lambda in 0.05f64..10.0, sweeps in 1usize..30) {
            let c = random_cost(n, seed);
            let plan = sinkhorn_solve(&c, &params(lambda, sweeps)).unwrap();
            for i in 0..n {
                prop_assert_eq!(plan.w.get(i, i), 0.0);
            }
            prop_assert!(plan.w.as_slice().iter().all(|&v| v >= 0.0));
            prop_assert!(plan.entropy() >= 0.0);
            prop_assert!(plan.entropy() <= max_entropy_bound(n) + 1e-9);
        }

        #[test]
        fn equivariant_under_permutation(
            seed in any::<u64>(),
            perm in Just((0..12).collect::<Vec<usize>>()).prop_shuffle(),
        ) {
            let c = random_cost(12, seed);
            let p = params(3.0, 25);
            let plan = sinkhorn_solve(&c, &p).unwrap();
            let pplan = sinkhorn_solve(&c.permute(&perm).unwrap(), &p).unwrap();
            prop_assert!(pplan.w.max_abs_diff(&plan.w.permute_square(&perm).unwrap()) < 1e-10);
        }

        #[test]
        fn converged_plan_is_nearly_symmetric(n in 3usize..60, seed in any::<u64>(), lambda in 0.1f64..10.0) {
            let c = random_cost(n, seed);
            // Near-degenerate supports can need far more sweeps; only judge converged plans.
            let p = SinkhornParams { marginal_tol: 1e-7, ..params(lambda, 20_000) };
            let plan = sinkhorn_solve(&c, &p).unwrap();
            prop_assume!(plan.marginal_err < 1e-6);
            prop_assert!(plan.w.asymmetry() < 1e-3);
        }
    }
}

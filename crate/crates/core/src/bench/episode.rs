//! Nearest-prototype classification on synthetic few-shot episodes, with
//! and without a transductive SOT pass over support ∪ query.

use serde::{Deserialize, Serialize};

use super::{mean, sign_test_p_value};
use crate::error::{Result, SotError};
use crate::matrix::{sq_euclidean, FeatureMatrix, Mat};
use crate::par;
use crate::sot::{sot_transform, SotConfig};
use crate::synth::{prepare_dataset, sample_episode, EpisodeSpec, LabeledDataset, SphereTaskSpec};

/// Query accuracy of nearest-prototype classification on one episode.
///
/// With `use_sot`, support and query rows are transformed jointly and split
/// back before prototypes are formed; otherwise `cfg` is ignored.
pub fn episode_prototype_eval(ds: &LabeledDataset, ep: &EpisodeSpec, cfg: &SotConfig, use_sot: bool) -> Result<f64> {
    let episode = sample_episode(ds, ep)?;
    let ns = episode.support.n();
    let all_idx: Vec<usize> = episode.support_idx.iter().chain(&episode.query_idx).copied().collect();
    let joint = ds.features.mat().select_rows(&all_idx);
    let feats = if use_sot {
        sot_transform(&FeatureMatrix::new(joint)?, cfg)?.w
    } else {
        joint
    };

    let d = feats.cols();
    let mut protos = Mat::zeros(ep.n_way, d);
    let mut counts = vec![0usize; ep.n_way];
    for (i, &l) in episode.support.labels.iter().enumerate() {
        counts[l] += 1;
        for (p, v) in protos.row_mut(l).iter_mut().zip(feats.row(i)) {
            *p += v;
        }
    }
    for (c, &cnt) in counts.iter().enumerate() {
        if cnt == 0 {
            return Err(SotError::InsufficientPoints { class: c, available: 0, needed: 1 });
        }
        protos.row_mut(c).iter_mut().for_each(|p| *p /= cnt as f64);
    }

    let correct = episode
        .query
        .labels
        .iter()
        .enumerate()
        .filter(|&(q, &truth)| {
            let x = feats.row(ns + q);
            let pred = (0..ep.n_way)
                .map(|c| sq_euclidean(x, protos.row(c)))
                .enumerate()
                .fold((0, f64::INFINITY), |(bc, bd), (c, dist)| if dist < bd { (c, dist) } else { (bc, bd) })
                .0;
            pred == truth
        })
        .count();
    Ok(correct as f64 / episode.query.n() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub baseline: Vec<f64>,
    pub sot: Vec<f64>,
    pub mean_baseline: f64,
    pub mean_sot: f64,
    /// Episodes where SOT beat / lost to / tied the baseline.
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    /// One-sided sign-test p-value for "SOT better than baseline".
    pub sign_test_p: f64,
}

/// Runs `count` paired episodes. Episode `e` draws a fresh dataset with seed
/// `task.seed + e` and samples the episode with seed `ep.seed + e`; both arms
/// see the same episode.
pub fn run_episodes(task: &SphereTaskSpec, ep: &EpisodeSpec, count: usize, cfg: &SotConfig) -> Result<EpisodeReport> {
    if count == 0 {
        return Err(SotError::InvalidSpec("episode count must be >= 1".into()));
    }
    let pairs: Vec<(f64, f64)> = par::map_range(count, |e| {
        let ds = prepare_dataset(&SphereTaskSpec { seed: task.seed.wrapping_add(e as u64), ..*task })?;
        let spec = EpisodeSpec { seed: ep.seed.wrapping_add(e as u64), ..*ep };
        Ok((
            episode_prototype_eval(&ds, &spec, cfg, false)?,
            episode_prototype_eval(&ds, &spec, cfg, true)?,
        ))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let (baseline, sot): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let wins = baseline.iter().zip(&sot).filter(|(b, s)| s > b).count();
    let losses = baseline.iter().zip(&sot).filter(|(b, s)| s < b).count();
    Ok(EpisodeReport {
        mean_baseline: mean(&baseline),
        mean_sot: mean(&sot),
        ties: count - wins - losses,
        sign_test_p: sign_test_p_value(wins, losses),
        wins,
        losses,
        baseline,
        sot,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(sigma: f64) -> SphereTaskSpec {
        SphereTaskSpec { dim: 30, sigma, ..SphereTaskSpec::default() }
    }

    #[test]
    fn noiseless_episode_is_perfect() {
        let ds = prepare_dataset(&task(0.0)).unwrap();
        let ep = EpisodeSpec::default();
        assert_eq!(episode_prototype_eval(&ds, &ep, &SotConfig::default(), false).unwrap(), 1.0);
        assert_eq!(episode_prototype_eval(&ds, &ep, &SotConfig::default(), true).unwrap(), 1.0);
    }

    #[test]
    fn one_way_episode_is_trivially_correct() {
        let ds = prepare_dataset(&task(0.5)).unwrap();
        let ep = EpisodeSpec { n_way: 1, k_shot: 1, q_query: 3, seed: 2 };
        assert_eq!(episode_prototype_eval(&ds, &ep, &SotConfig::default(), true).unwrap(), 1.0);
        assert_eq!(episode_prototype_eval(&ds, &ep, &SotConfig::default(), false).unwrap(), 1.0);
    }

    #[test]
    fn baseline_ignores_sot_config() {
        let ds = prepare_dataset(&task(0.4)).unwrap();
        let ep = EpisodeSpec::default();
        let a = episode_prototype_eval(&ds, &ep, &SotConfig::default(), false).unwrap();
        let b = episode_prototype_eval(&ds, &ep, &SotConfig::default().with_lambda(7.0).with_sweeps(1), false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn report_counts_add_up() {
        let r = run_episodes(&task(0.3), &EpisodeSpec::default(), 12, &SotConfig::default()).unwrap();
        assert_eq!(r.wins + r.losses + r.ties, 12);
        assert_eq!(r.baseline.len(), 12);
        let again = run_episodes(&task(0.3), &EpisodeSpec::default(), 12, &SotConfig::default()).unwrap();
        assert_eq!(r, again);
    }
}

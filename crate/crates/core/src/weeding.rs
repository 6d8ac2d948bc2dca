//! Union-of-inliers match filter.
//!
//! Each iteration draws four distinct matches, fits a homography and collects
//! its inliers over the *whole* input. Any inlier set larger than `delta`
//! is merged into the reliable set. Nothing is ever removed from the input,
//! so matches on several independent planes all survive.
//!
//! Randomness comes from [`ChaCha8Rng`] seeded with `seed`; stream `k` (set
//! with `set_stream`) drives the `k`-th chunk of iterations. Because the
//! result is a union, splitting the budget across `n` streams and merging is
//! identical to running those streams back to back.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{fit_homography, inliers, Correspondence};

/// Draws allowed per iteration before the iteration is skipped.
pub const MAX_RESAMPLES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeedParams {
    pub iterations: usize,
    /// An inlier set must be strictly larger than this to be merged.
    pub delta: usize,
    /// Symmetric transfer error threshold, normalized units.
    pub eps: f64,
    pub seed: u64,
}

impl WeedParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParameter("weeding iterations must be >= 1".into()));
        }
        if self.delta < 4 {
            return Err(Error::InvalidParameter("weeding delta must be >= 4".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::InvalidParameter("weeding eps must be > 0".into()));
        }
        Ok(())
    }
}

/// `max(12, ceil(0.15 * n))`.
pub fn default_delta(n: usize) -> usize {
    12usize.max((n * 15).div_ceil(100))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeedOutcome {
    /// Sorted indices into the input of the reliable matches.
    pub kept: Vec<usize>,
    /// For every input index, the size of the largest merged inlier set that
    /// contained it (0 when never merged).
    pub witness: Vec<usize>,
    /// `|M|` after each iteration. Filled by the serial routes only.
    pub growth: Vec<usize>,
}

/// Running reliable set. Membership is `witness[i] > 0`.
struct Reliable {
    witness: Vec<usize>,
    size: usize,
    growth: Vec<usize>,
}

impl Reliable {
    fn new(n: usize) -> Self {
        Self {
            witness: vec![0; n],
            size: 0,
            growth: Vec::new(),
        }
    }

    fn merge_set(&mut self, set: &[usize]) {
        for &i in set {
            if self.witness[i] == 0 {
                self.size += 1;
            }
            self.witness[i] = self.witness[i].max(set.len());
        }
    }

    fn union(&mut self, other: &Reliable) {
        for (i, &w) in other.witness.iter().enumerate() {
            if w > 0 && self.witness[i] == 0 {
                self.size += 1;
            }
            self.witness[i] = self.witness[i].max(w);
        }
    }

    fn finish(self) -> WeedOutcome {
        let kept = (0..self.witness.len()).filter(|&i| self.witness[i] > 0).collect();
        WeedOutcome {
            kept,
            witness: self.witness,
            growth: self.growth,
        }
    }
}

fn check_input(pairs: &[Correspondence], params: &WeedParams) -> Result<()> {
    params.validate()?;
    if pairs.len() < 4 {
        return Err(Error::NotEnoughMatches {
            needed: 4,
            got: pairs.len(),
        });
    }
    Ok(())
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs `iterations` iterations of one RNG stream into `state`.
fn run_stream(
    pairs: &[Correspondence],
    iterations: usize,
    params: &WeedParams,
    stream: u64,
    state: &mut Reliable,
    trace: bool,
) {
    let n = pairs.len();
    let mut rng = stream_rng(params.seed, stream);
    for _ in 0..iterations {
        for _ in 0..MAX_RESAMPLES {
            let idx = sample(&mut rng, n, 4);
            let sample4 = [
                pairs[idx.index(0)],
                pairs[idx.index(1)],
                pairs[idx.index(2)],
                pairs[idx.index(3)],
            ];
            let Ok(h) = fit_homography(&sample4) else {
                continue;
            };
            let set = inliers(&h, pairs, params.eps);
            if set.len() > params.delta {
                state.merge_set(&set);
            }
            break;
        }
        if trace {
            state.growth.push(state.size);
        }
    }
}

/// Serial filter on stream 0.
pub fn weed(pairs: &[Correspondence], params: &WeedParams) -> Result<WeedOutcome> {
    check_input(pairs, params)?;
    let mut state = Reliable::new(pairs.len());
    run_stream(pairs, params.iterations, params, 0, &mut state, true);
    Ok(state.finish())
}

fn split(params: &WeedParams, workers: usize) -> Result<usize> {
    if workers == 0 {
        return Err(Error::InvalidParameter("worker count must be >= 1".into()));
    }
    if !params.iterations.is_multiple_of(workers) {
        return Err(Error::InvalidParameter(format!(
            "iterations {} not divisible by {workers}",
            params.iterations
        )));
    }
    Ok(params.iterations / workers)
}

/// Runs streams `0..n` back to back, each for `iterations / n` iterations,
/// accumulating into one reliable set.
pub fn weed_streams_serial(pairs: &[Correspondence], params: &WeedParams, n: usize) -> Result<WeedOutcome> {
    check_input(pairs, params)?;
    let per = split(params, n)?;
    let mut state = Reliable::new(pairs.len());
    for k in 0..n {
        run_stream(pairs, per, params, k as u64, &mut state, true);
    }
    Ok(state.finish())
}

/// Splits the budget over `n` independent streams run concurrently and
/// merges their reliable sets.
pub fn weed_parallel(pairs: &[Correspondence], params: &WeedParams, n: usize) -> Result<WeedOutcome> {
    check_input(pairs, params)?;
    let per = split(params, n)?;
    let parts: Vec<Reliable> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut state = Reliable::new(pairs.len());
            run_stream(pairs, per, params, k as u64, &mut state, false);
            state
        })
        .collect();
    let mut merged = Reliable::new(pairs.len());
    for part in &parts {
        merged.union(part);
    }
    Ok(merged.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coords::Pt2;
    use crate::geometry::Homography;
    use nalgebra::Matrix3;
    use rand::{Rng, SeedableRng};

    const EPS: f64 = 4.0 / 640.0;

    fn plane(h: &Homography, n: usize, rng: &mut ChaCha8Rng) -> Vec<Correspondence> {
        (0..n)
            .map(|_| {
                let p = Pt2::new(rng.random_range(-0.9..0.9), rng.random_range(-0.7..0.7));
                Correspondence::new(p, h.apply(p).unwrap())
            })
            .collect()
    }

    fn random_pairs(n: usize, rng: &mut ChaCha8Rng) -> Vec<Correspondence> {
        (0..n)
            .map(|_| {
                Correspondence::new(
                    Pt2::new(rng.random_range(-1.0..1.0), rng.random_range(-0.75..0.75)),
                    Pt2::new(rng.random_range(-1.0..1.0), rng.random_range(-0.75..0.75)),
                )
            })
            .collect()
    }

    fn two_planes(seed: u64) -> Vec<Correspondence> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Homography::from_matrix(Matrix3::new(1.01, 0.01, 0.02, -0.01, 0.99, -0.01, 0.01, 0.0, 1.0))
            .unwrap();
        let b = Homography::translation(-0.04, 0.015);
        let mut v = plane(&a, 30, &mut rng);
        v.extend(plane(&b, 30, &mut rng));
        v.extend(random_pairs(10, &mut rng));
        v
    }

    fn params(iterations: usize, delta: usize, seed: u64) -> WeedParams {
        WeedParams {
            iterations,
            delta,
            eps: EPS,
            seed,
        }
    }

    #[test]
    fn delta_rule() {
        assert_eq!(default_delta(10), 12);
        assert_eq!(default_delta(80), 12);
        assert_eq!(default_delta(81), 13);
        assert_eq!(default_delta(200), 30);
    }

    #[test]
    fn single_plane_keeps_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = Homography::translation(0.02, -0.01);
        let pairs = plane(&h, 50, &mut rng);
        let out = weed(&pairs, &params(64, 20, 5)).unwrap();
        assert_eq!(out.kept, (0..50).collect::<Vec<_>>());
    }

    #[test]
    fn random_correspondences_are_rejected() {
        for seed in 0..100 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let pairs = random_pairs(50, &mut rng);
            let out = weed(&pairs, &params(64, 20, seed)).unwrap();
            assert!(out.kept.is_empty(), "seed {seed}");
        }
    }

    #[test]
    fn two_planes_recovered() {
        let mut ok = 0;
        for seed in 0..100 {
            let pairs = two_planes(seed);
            let out = weed(&pairs, &params(256, 20, seed)).unwrap();
            if out.kept == (0..60).collect::<Vec<_>>() {
                ok += 1;
            }
        }
        assert!(ok >= 99, "{ok}/100");
    }

    #[test]
    fn growth_is_monotone_and_witnessed() {
        let pairs = two_planes(3);
        let p = params(256, 20, 3);
        let out = weed(&pairs, &p).unwrap();
        assert_eq!(out.growth.len(), 256);
        assert!(out.growth.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(*out.growth.last().unwrap(), out.kept.len());
        for &i in &out.kept {
            assert!(out.witness[i] > p.delta);
        }
        assert!(out.kept.iter().all(|&i| i < pairs.len()));
    }

    #[test]
    fn parallel_matches_serial_streams() {
        for seed in 0..5 {
            let pairs = two_planes(50 + seed);
            let p = params(256, 20, seed);
            assert_eq!(
                weed_parallel(&pairs, &p, 1).unwrap().kept,
                weed(&pairs, &p).unwrap().kept
            );
            for n in [2, 4, 8] {
                let par = weed_parallel(&pairs, &p, n).unwrap();
                let ser = weed_streams_serial(&pairs, &p, n).unwrap();
                assert_eq!(par.kept, ser.kept);
                assert_eq!(par.witness, ser.witness);
            }
        }
    }

    #[test]
    fn parallel_all_inliers() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pairs = plane(&Homography::translation(0.01, 0.03), 50, &mut rng);
        let out = weed_parallel(&pairs, &params(64, 20, 1), 8).unwrap();
        assert_eq!(out.kept.len(), 50);
    }

    #[test]
    fn input_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pairs = random_pairs(3, &mut rng);
        assert!(matches!(
            weed(&pairs, &params(10, 4, 0)),
            Err(Error::NotEnoughMatches { .. })
        ));
        let pairs = random_pairs(10, &mut rng);
        assert!(weed(&pairs, &params(0, 4, 0)).is_err());
        assert!(weed(&pairs, &params(10, 3, 0)).is_err());
        assert!(weed_parallel(&pairs, &params(10, 4, 0), 3).is_err());
        assert!(weed_parallel(&pairs, &params(10, 4, 0), 0).is_err());
    }
}

//! Synthetic plausible-pose manifolds with a ground-truth distance oracle,
//! plus the two-stage nearest-neighbor labeling used to build training data.
//!
//! A manifold is a smooth map from a low-dimensional latent cube `[0,1]^m`
//! into pose space: each joint rotates about a fixed axis by a bounded
//! sinusoidal function of the latents. Because the map is cheap, a dense
//! latent grid gives an exact (to grid resolution) distance-to-manifold
//! oracle for validating learned fields.

use crate::dataset::Tier;
use crate::error::{Error, Result};
use crate::so3::{perturb_pose, pose_distance, Pose, SkeletonTopology, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Per-joint angle map: `angle(u) = clamp(center + sum_j amp_j * sin(freq_j * u_j + phase_j))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointAngleMap {
    /// Unit rotation axis for this joint.
    pub axis: [f64; 3],
    pub center: f64,
    pub amplitudes: Vec<f64>,
    pub frequencies: Vec<f64>,
    pub phases: Vec<f64>,
    /// Hard angle range `[lo, hi]` in radians.
    pub clamp: [f64; 2],
}

impl JointAngleMap {
    fn angle(&self, u: &[f64]) -> f64 {
        let mut a = self.center;
        for j in 0..self.amplitudes.len() {
            a += self.amplitudes[j] * (self.frequencies[j] * u[j] + self.phases[j]).sin();
        }
        a.clamp(self.clamp[0], self.clamp[1])
    }
}

/// Deterministic latent-to-pose map defining the synthetic manifold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticManifoldSpec {
    pub latent_dim: usize,
    pub joints: Vec<JointAngleMap>,
    /// Seed the spec was generated from, kept for provenance.
    pub seed: u64,
}

impl SyntheticManifoldSpec {
    /// Randomly generates a smooth manifold spec for `k` joints.
    ///
    /// Amplitude budgets are chosen so the clamp range is never active,
    /// keeping the latent-to-pose map smooth everywhere.
    pub fn random(k: usize, latent_dim: usize, seed: u64) -> Result<Self> {
        if k == 0 || latent_dim == 0 {
            return Err(Error::Config("manifold needs k >= 1 joints and latent_dim >= 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clamp = [-1.2, 1.2];
        let joints = (0..k)
            .map(|_| {
                let axis = loop {
                    let a = [
                        rng.gen::<f64>() * 2.0 - 1.0,
                        rng.gen::<f64>() * 2.0 - 1.0,
                        rng.gen::<f64>() * 2.0 - 1.0,
                    ];
                    let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
                    if n > 0.2 {
                        break [a[0] / n, a[1] / n, a[2] / n];
                    }
                };
                let center = rng.gen_range(-0.3..0.3);
                let budget = rng.gen_range(0.4..0.8);
                let mut raw: Vec<f64> = (0..latent_dim).map(|_| rng.gen_range(0.2..1.0)).collect();
                let total: f64 = raw.iter().sum();
                for r in &mut raw {
                    *r *= budget / total;
                }
                let frequencies = (0..latent_dim).map(|_| rng.gen_range(1.0..5.0)).collect();
                let phases =
                    (0..latent_dim).map(|_| rng.gen_range(0.0..std::f64::consts::TAU)).collect();
                JointAngleMap {
                    axis,
                    center,
                    amplitudes: raw,
                    frequencies,
                    phases,
                    clamp,
                }
            })
            .collect();
        let spec = SyntheticManifoldSpec { latent_dim, joints, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, j) in self.joints.iter().enumerate() {
            if j.amplitudes.len() != self.latent_dim
                || j.frequencies.len() != self.latent_dim
                || j.phases.len() != self.latent_dim
            {
                return Err(Error::Config(format!(
                    "joint {k}: coefficient lengths must equal latent_dim {}",
                    self.latent_dim
                )));
            }
            let reach: f64 = j.amplitudes.iter().map(|a| a.abs()).sum();
            if j.center - reach < j.clamp[0] || j.center + reach > j.clamp[1] {
                return Err(Error::Config(format!(
                    "joint {k}: angle map can leave the clamp range [{}, {}]",
                    j.clamp[0], j.clamp[1]
                )));
            }
            let n = (j.axis[0] * j.axis[0] + j.axis[1] * j.axis[1] + j.axis[2] * j.axis[2]).sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::Config(format!("joint {k}: axis must be unit length")));
            }
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.joints.len()
    }

    /// Maps a latent point to its pose on the manifold.
    pub fn pose_at(&self, u: &[f64]) -> Pose {
        debug_assert_eq!(u.len(), self.latent_dim);
        Pose::new(
            self.joints
                .iter()
                .map(|j| {
                    UnitQuaternion::from_axis_angle(j.axis, j.angle(u))
                        .expect("validated unit axis")
                })
                .collect(),
        )
    }
}

/// Hex SHA-256 of the spec's canonical JSON, recorded in dataset metadata.
pub fn spec_hash(spec: &SyntheticManifoldSpec) -> String {
    let json = serde_json::to_string(spec).expect("spec serializes");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Draws `n` manifold poses from i.i.d. uniform latents.
pub fn sample_manifold(spec: &SyntheticManifoldSpec, n: usize, seed: u64) -> Result<Vec<Pose>> {
    if n == 0 {
        return Err(Error::Config("sample_manifold needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut latent = vec![0.0; spec.latent_dim];
    Ok((0..n)
        .map(|_| {
            for u in &mut latent {
                *u = rng.gen();
            }
            spec.pose_at(&latent)
        })
        .collect())
}

/// Dense-grid ground-truth oracle: min pose distance over a lattice of
/// `grid^m` manifold points (`u_j = i / (grid - 1)`).
pub struct ManifoldOracle {
    poses: Vec<Pose>,
    grid: usize,
}

impl ManifoldOracle {
    pub fn build(spec: &SyntheticManifoldSpec, grid: usize) -> Result<Self> {
        if grid < 2 {
            return Err(Error::Config("oracle grid must be at least 2 per dimension".into()));
        }
        let m = spec.latent_dim;
        let total = grid.checked_pow(m as u32).ok_or_else(|| {
            Error::Config(format!("oracle grid {grid}^{m} overflows"))
        })?;
        let mut poses = Vec::with_capacity(total);
        let mut idx = vec![0usize; m];
        let mut latent = vec![0.0; m];
        loop {
            for (j, i) in idx.iter().enumerate() {
                latent[j] = *i as f64 / (grid - 1) as f64;
            }
            poses.push(spec.pose_at(&latent));
            // odometer over the lattice
            let mut j = 0;
            loop {
                if j == m {
                    return Ok(ManifoldOracle { poses, grid });
                }
                idx[j] += 1;
                if idx[j] < grid {
                    break;
                }
                idx[j] = 0;
                j += 1;
            }
        }
    }

    pub fn grid(&self) -> usize {
        self.grid
    }

    pub fn distance(&self, query: &Pose, skel: &SkeletonTopology) -> Result<f64> {
        let mut best = f64::INFINITY;
        for p in &self.poses {
            let d = pose_distance(query, p, skel)?;
            if d < best {
                best = d;
            }
        }
        Ok(best)
    }
}

/// One-shot oracle evaluation; build a [`ManifoldOracle`] once when querying
/// many poses.
pub fn oracle_manifold_distance(
    query: &Pose,
    spec: &SyntheticManifoldSpec,
    grid: usize,
    skel: &SkeletonTopology,
) -> Result<f64> {
    ManifoldOracle::build(spec, grid)?.distance(query, skel)
}

/// Maps a perturbation scale to its curriculum tier bucket.
pub fn tier_for_sigma(sigma: f64) -> Tier {
    if sigma <= 0.25 {
        Tier::Near
    } else if sigma <= 0.6 {
        Tier::Mid
    } else {
        Tier::Far
    }
}

/// Generates off-manifold poses by perturbing uniformly chosen manifold
/// poses, `per_sigma` poses at each scale. Every joint is perturbed
/// (inclusion probability 1); the tier records the sigma bucket.
pub fn build_negatives(
    manifold: &[Pose],
    sigmas: &[f64],
    per_sigma: usize,
    seed: u64,
) -> Result<Vec<(Pose, Tier)>> {
    if manifold.is_empty() {
        return Err(Error::InsufficientData { needed: 1, have: 0 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(sigmas.len() * per_sigma);
    for &sigma in sigmas {
        let tier = tier_for_sigma(sigma);
        for _ in 0..per_sigma {
            let idx = rng.gen_range(0..manifold.len());
            out.push((perturb_pose(&manifold[idx], sigma, 1.0, &mut rng), tier));
        }
    }
    Ok(out)
}

/// Two-stage nearest-neighbor labeler over a fixed manifold set.
///
/// Stage one ranks by squared Euclidean distance on sign-canonicalized
/// flattened quaternion coordinates and keeps the `kprime` closest; stage
/// two re-ranks those by the geodesic pose metric and returns the mean of
/// the `k` smallest. Ties break on dataset index.
pub struct KnnLabeler<'a> {
    manifold: &'a [Pose],
    flats: Vec<f64>,
    dim: usize,
    kprime: usize,
    k: usize,
}

impl<'a> KnnLabeler<'a> {
    pub fn new(manifold: &'a [Pose], kprime: usize, k: usize) -> Result<Self> {
        if k < 1 || kprime < k {
            return Err(Error::Config(format!(
                "need kprime >= k >= 1, got kprime={kprime}, k={k}"
            )));
        }
        if manifold.len() < kprime {
            return Err(Error::InsufficientData { needed: kprime, have: manifold.len() });
        }
        let dim = 4 * manifold[0].len();
        let mut flats = Vec::with_capacity(manifold.len() * dim);
        for p in manifold {
            flats.extend_from_slice(&p.canonicalized().to_ambient());
        }
        Ok(KnnLabeler { manifold, flats, dim, kprime, k })
    }

    pub fn label(&self, query: &Pose, skel: &SkeletonTopology) -> Result<f64> {
        let qflat = query.canonicalized().to_ambient();
        if qflat.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim / 4,
                got: query.len(),
            });
        }
        // stage 1: coarse L2 prefilter
        let mut ranked: Vec<(f64, usize)> = self
            .flats
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(i, row)| {
                let d2: f64 =
                    row.iter().zip(&qflat).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let kp = self.kprime.min(ranked.len());
        ranked.select_nth_unstable_by(kp - 1, cmp_dist_idx);
        ranked.truncate(kp);
        // stage 2: exact geodesic re-rank of the survivors
        let mut exact: Vec<(f64, usize)> = ranked
            .iter()
            .map(|&(_, i)| Ok((pose_distance(query, &self.manifold[i], skel)?, i)))
            .collect::<Result<_>>()?;
        Ok(mean_of_k_smallest(&mut exact, self.k))
    }
}

fn cmp_dist_idx(a: &(f64, usize), b: &(f64, usize)) -> std::cmp::Ordering {
    a.0.partial_cmp(&b.0).expect("finite distance").then(a.1.cmp(&b.1))
}

fn mean_of_k_smallest(dists: &mut [(f64, usize)], k: usize) -> f64 {
    dists.sort_unstable_by(cmp_dist_idx);
    let k = k.min(dists.len());
    dists[..k].iter().map(|(d, _)| d).sum::<f64>() / k as f64
}

/// Convenience wrapper over [`KnnLabeler`] for one-off queries.
pub fn knn_label(
    query: &Pose,
    manifold: &[Pose],
    kprime: usize,
    k: usize,
    skel: &SkeletonTopology,
) -> Result<f64> {
    KnnLabeler::new(manifold, kprime, k)?.label(query, skel)
}

/// Brute-force oracle for [`knn_label`]: geodesic distance to every manifold
/// pose, mean of the `k` smallest.
pub fn exact_label(
    query: &Pose,
    manifold: &[Pose],
    k: usize,
    skel: &SkeletonTopology,
) -> Result<f64> {
    if k < 1 {
        return Err(Error::Config("exact_label needs k >= 1".into()));
    }
    if manifold.len() < k {
        return Err(Error::InsufficientData { needed: k, have: manifold.len() });
    }
    let mut dists: Vec<(f64, usize)> = manifold
        .iter()
        .enumerate()
        .map(|(i, p)| Ok((pose_distance(query, p, skel)?, i)))
        .collect::<Result<_>>()?;
    Ok(mean_of_k_smallest(&mut dists, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::so3::random_pose;

    fn spec8() -> SyntheticManifoldSpec {
        SyntheticManifoldSpec::random(8, 2, 42).unwrap()
    }

    #[test]
    fn random_spec_is_deterministic_and_valid() {
        let a = spec8();
        let b = spec8();
        assert_eq!(a, b);
        a.validate().unwrap();
    }

    #[test]
    fn sample_manifold_deterministic() {
        let spec = spec8();
        let a = sample_manifold(&spec, 50, 7).unwrap();
        let b = sample_manifold(&spec, 50, 7).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert_eq!(p.len(), 8);
            for q in p.joints() {
                assert!((q.norm() - 1.0).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn samples_lie_near_oracle_grid() {
        let spec = spec8();
        let skel = SkeletonTopology::binary_tree(8).unwrap();
        let oracle = ManifoldOracle::build(&spec, 60).unwrap();
        for p in sample_manifold(&spec, 20, 3).unwrap() {
            let d = oracle.distance(&p, &skel).unwrap();
            assert!(d < 0.08, "sampled pose {d} beyond grid resolution bound");
        }
    }

    #[test]
    fn oracle_zero_on_grid_latents() {
        let spec = spec8();
        let skel = SkeletonTopology::binary_tree(8).unwrap();
        let oracle = ManifoldOracle::build(&spec, 21).unwrap();
        let q = spec.pose_at(&[5.0 / 20.0, 17.0 / 20.0]);
        assert!(oracle.distance(&q, &skel).unwrap() <= 1e-12);
    }

    #[test]
    fn oracle_refinement_never_increases() {
        let spec = spec8();
        let skel = SkeletonTopology::binary_tree(8).unwrap();
        let coarse = ManifoldOracle::build(&spec, 20).unwrap();
        // lattice at 2g-1 points contains the g-point lattice
        let fine = ManifoldOracle::build(&spec, 39).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let q = random_pose(8, &mut rng);
            let dc = coarse.distance(&q, &skel).unwrap();
            let df = fine.distance(&q, &skel).unwrap();
            assert!(df <= dc + 1e-15, "refined grid increased distance: {df} > {dc}");
        }
    }

    #[test]
    fn oracle_bounded_by_injected_perturbation() {
        let spec = spec8();
        let skel = SkeletonTopology::binary_tree(8).unwrap();
        let oracle = ManifoldOracle::build(&spec, 50).unwrap();
        let base = sample_manifold(&spec, 10, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(6);
        for p in &base {
            let noisy = perturb_pose(p, 0.3, 1.0, &mut rng);
            let injected = pose_distance(&noisy, p, &skel).unwrap();
            let d = oracle.distance(&noisy, &skel).unwrap();
            assert!(d <= injected + 1e-12, "oracle {d} above injected distance {injected}");
        }
    }

    #[test]
    fn build_negatives_counts_and_zero_sigma() {
        let spec = spec8();
        let manifold = sample_manifold(&spec, 30, 1).unwrap();
        let neg = build_negatives(&manifold, &[0.0, 0.3], 10, 2).unwrap();
        assert_eq!(neg.len(), 20);
        for (p, tier) in &neg[..10] {
            assert!(manifold.contains(p), "sigma 0 output must be a manifold pose");
            assert_eq!(*tier, Tier::Near);
        }
        assert!(build_negatives(&[], &[0.1], 5, 3).is_err());
    }

    #[test]
    fn negative_labels_grow_with_sigma() {
        let spec = spec8();
        let skel = SkeletonTopology::binary_tree(8).unwrap();
        let manifold = sample_manifold(&spec, 2000, 1).unwrap();
        let labeler = KnnLabeler::new(&manifold, 100, 5).unwrap();
        let median_label = |sigma: f64| -> f64 {
            let neg = build_negatives(&manifold, &[sigma], 60, 9).unwrap();
            let mut labels: Vec<f64> =
                neg.iter().map(|(p, _)| labeler.label(p, &skel).unwrap()).collect();
            labels.sort_by(|a, b| a.partial_cmp(b).unwrap());
            labels[labels.len() / 2]
        };
        assert!(median_label(0.5) > median_label(0.1));
    }

    #[test]
    fn knn_label_trivial_cases() {
        let spec = spec8();
        let skel = SkeletonTopology::binary_tree(8).unwrap();
        let manifold = sample_manifold(&spec, 40, 1).unwrap();
        // query in the set, k = 1
        let d = knn_label(&manifold[3], &manifold, 10, 1, &skel).unwrap();
        assert_eq!(d, 0.0);
        // singleton manifold, exact label
        let single = vec![manifold[0].clone()];
        let q = &manifold[1];
        let expect = pose_distance(q, &manifold[0], &skel).unwrap();
        assert_eq!(exact_label(q, &single, 1, &skel).unwrap(), expect);
        assert_eq!(exact_label(&manifold[0], &manifold, 1, &skel).unwrap(), 0.0);
    }

    #[test]
    fn knn_label_three_pose_full_mean() {
        let spec = spec8();
        let skel = SkeletonTopology::binary_tree(8).unwrap();
        let manifold = sample_manifold(&spec, 3, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let q = random_pose(8, &mut rng);
        let byhand = manifold
            .iter()
            .map(|p| pose_distance(&q, p, &skel).unwrap())
            .sum::<f64>()
            / 3.0;
        let got = knn_label(&q, &manifold, 3, 3, &skel).unwrap();
        assert!((got - byhand).abs() < 1e-15);
    }

    #[test]
    fn knn_label_insufficient_data() {
        let spec = spec8();
        let manifold = sample_manifold(&spec, 5, 1).unwrap();
        assert!(matches!(
            KnnLabeler::new(&manifold, 10, 2),
            Err(Error::InsufficientData { needed: 10, have: 5 })
        ));
    }

    #[test]
    fn knn_equals_exact_when_unfiltered() {
        let spec = spec8();
        let skel = SkeletonTopology::binary_tree(8).unwrap();
        let manifold = sample_manifold(&spec, 100, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let q = random_pose(8, &mut rng);
            let a = knn_label(&q, &manifold, 100, 1, &skel).unwrap();
            let b = exact_label(&q, &manifold, 1, &skel).unwrap();
            assert!((a - b).abs() <= 1e-15);
            // label with k=1 and full prefilter is the exact NN distance
            let nn = manifold
                .iter()
                .map(|p| pose_distance(&q, p, &skel).unwrap())
                .fold(f64::INFINITY, f64::min);
            assert!((a - nn).abs() <= 1e-15);
            // any k-mean is at least the NN distance
            let k5 = exact_label(&q, &manifold, 5, &skel).unwrap();
            assert!(k5 >= nn - 1e-15);
        }
    }

    #[test]
    fn labels_are_sign_flip_invariant() {
        let spec = spec8();
        let skel = SkeletonTopology::binary_tree(8).unwrap();
        let manifold = sample_manifold(&spec, 60, 1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let q = random_pose(8, &mut rng);
            let mut flipped = q.clone();
            for k in 0..8 {
                if rng.gen::<bool>() {
                    flipped.joints_mut()[k] = flipped.joint(k).negated();
                }
            }
            let a = knn_label(&q, &manifold, 20, 5, &skel).unwrap();
            let b = knn_label(&flipped, &manifold, 20, 5, &skel).unwrap();
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn spec_hash_is_stable_and_sensitive() {
        let a = spec_hash(&spec8());
        let b = spec_hash(&spec8());
        assert_eq!(a, b);
        assert_eq!(a.len(), 64);
        let other = SyntheticManifoldSpec::random(8, 2, 43).unwrap();
        assert_ne!(a, spec_hash(&other));
    }
}

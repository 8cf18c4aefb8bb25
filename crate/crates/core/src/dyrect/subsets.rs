use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::AcquisitionGeometry;

pub const MIN_SUBSET_VIEWS: usize = 8;
/// Fraction of the scan duration every subset's view times must cover.
pub const MIN_SUBSET_SPAN: f64 = 0.8;
const MAX_DRAWS: usize = 64;

/// Random partition of the views into ordered subsets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetPlan {
    pub subsets: Vec<Vec<usize>>,
    pub rng_seed: u64,
}

impl SubsetPlan {
    pub fn len(&self) -> usize {
        self.subsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsets.is_empty()
    }
}

/// Splits the views into `n_subsets` groups of near-equal size.
///
/// The time axis is cut into consecutive blocks of `n_subsets` views and
/// every block hands exactly one of its views to each subset, in random
/// order. Each subset therefore samples every part of the scan, which keeps
/// both covariance windows populated for any transition time.
pub fn make_subsets(geometry: &AcquisitionGeometry, n_subsets: usize, rng_seed: u64) -> Result<SubsetPlan> {
    let n = geometry.n_views();
    if n_subsets == 0 || n_subsets > n {
        return Err(Error::invalid(format!("cannot split {n} views into {n_subsets} subsets")));
    }
    if n_subsets == 1 {
        return Ok(SubsetPlan { subsets: vec![(0..n).collect()], rng_seed });
    }
    if n / n_subsets < MIN_SUBSET_VIEWS {
        return Err(Error::invalid(format!(
            "{n_subsets} subsets of {n} views leave fewer than {MIN_SUBSET_VIEWS} views per subset"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let times: Vec<f64> = geometry.views().iter().map(|v| v.time).collect();
    let span = times[n - 1] - times[0];
    for _ in 0..MAX_DRAWS {
        let plan = draw(n, n_subsets, &mut rng);
        let ok = plan.iter().all(|s| {
            let first = times[s[0]];
            let last = times[s[s.len() - 1]];
            last - first >= MIN_SUBSET_SPAN * span - 1e-12
        });
        if ok {
            return Ok(SubsetPlan { subsets: plan, rng_seed });
        }
    }
    Err(Error::invalid(format!(
        "no split of {n} views into {n_subsets} subsets gives each a {:.0}% temporal span",
        MIN_SUBSET_SPAN * 100.0
    )))
}

/// Block-stratified split of an arbitrary view list, without the span rule.
pub(crate) fn split_views(views: &[usize], n_subsets: usize, rng_seed: u64) -> Vec<Vec<usize>> {
    let k = n_subsets.clamp(1, views.len().max(1));
    if k == 1 {
        return vec![views.to_vec()];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    draw(views.len(), k, &mut rng).into_iter().map(|s| s.into_iter().map(|i| views[i]).collect()).collect()
}

fn draw(n: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut subsets: Vec<Vec<usize>> = vec![Vec::with_capacity(n / k + 1); k];
    let mut order: Vec<usize> = (0..k).collect();
    // the partial tail block must not always favour the same subsets
    let mut first_order = None;
    for (b, start) in (0..n).step_by(k).enumerate() {
        let end = (start + k).min(n);
        order.shuffle(rng);
        if b == 0 {
            first_order = Some(order.clone());
        } else if end - start == k && start + 2 * k > n {
            // last full block mirrors the first so every subset reaches both ends
            order.clone_from(first_order.as_ref().expect("first block seen"));
        }
        for (offset, view) in (start..end).enumerate() {
            subsets[order[offset]].push(view);
        }
    }
    for s in &mut subsets {
        s.sort_unstable();
    }
    subsets.shuffle(rng);
    subsets
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Beam;

    fn geom(n_views: usize, ppr: usize) -> AcquisitionGeometry {
        AcquisitionGeometry::circular(Beam::Parallel, 0.0, 1, 1, 1.0, ppr, n_views, 0.0).unwrap()
    }

    fn assert_partition(plan: &SubsetPlan, n: usize) {
        let mut all: Vec<usize> = plan.subsets.iter().flatten().copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn single_subset_is_everything() {
        let plan = make_subsets(&geom(30, 10), 1, 7).unwrap();
        assert_eq!(plan.subsets, vec![(0..30).collect::<Vec<_>>()]);
    }

    #[test]
    fn even_split_of_240_views() {
        let plan = make_subsets(&geom(240, 80), 4, 3).unwrap();
        assert_partition(&plan, 240);
        for s in &plan.subsets {
            assert_eq!(s.len(), 60);
        }
    }

    #[test]
    fn sizes_differ_by_at_most_one_and_span_the_scan() {
        for (n, k) in [(540, 10), (250, 7), (97, 3), (400, 50)] {
            let g = geom(n, 180);
            let plan = make_subsets(&g, k, 11).unwrap();
            assert_partition(&plan, n);
            let sizes: Vec<usize> = plan.subsets.iter().map(Vec::len).collect();
            let (lo, hi) = (sizes.iter().min().unwrap(), sizes.iter().max().unwrap());
            assert!(hi - lo <= 1, "{n}/{k}: {sizes:?}");
            let span = g.views()[n - 1].time - g.views()[0].time;
            for s in &plan.subsets {
                let t = |i: usize| g.views()[i].time;
                assert!(t(s[s.len() - 1]) - t(s[0]) >= 0.8 * span);
            }
        }
    }

    #[test]
    fn every_rotation_is_represented() {
        // counting oracle over several seeds
        let (ppr, rotations, k) = (60, 3, 5);
        let g = geom(ppr * rotations, ppr);
        for seed in 0..20 {
            let plan = make_subsets(&g, k, seed).unwrap();
            for s in &plan.subsets {
                let mut per_rot = vec![0usize; rotations];
                for &v in s {
                    per_rot[v / ppr] += 1;
                }
                let need = (s.len() / rotations).saturating_sub(1);
                assert!(per_rot.iter().all(|&c| c >= need), "seed {seed}: {per_rot:?}");
            }
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let g = geom(300, 100);
        assert_eq!(make_subsets(&g, 6, 42).unwrap(), make_subsets(&g, 6, 42).unwrap());
        assert_ne!(make_subsets(&g, 6, 42).unwrap(), make_subsets(&g, 6, 43).unwrap());
    }

    #[test]
    fn rejects_tiny_subsets() {
        assert!(make_subsets(&geom(60, 20), 8, 0).is_err());
        assert!(make_subsets(&geom(60, 20), 0, 0).is_err());
        assert!(make_subsets(&geom(60, 20), 61, 0).is_err());
        assert!(make_subsets(&geom(64, 20), 8, 0).is_ok());
    }
}

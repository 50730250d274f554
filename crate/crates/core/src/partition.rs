//! Support-point Voronoi tessellation (SPVT) with overlapping cells.
//!
//! Sites are support points of the training locations. Cell `k` holds the
//! points whose nearest site is `u_k`; the overlapping region `S_k` widens it
//! by `delta` across every bisector:
//!
//! `s in S_k  <=>  b_kj(s) >= -delta for all j != k`
//!
//! where `b_kj(s) = (|s - u_j|^2 - |s - u_k|^2) / (2 |u_k - u_j|)` is the
//! signed distance to the `(k, j)` bisector, positive on `u_k`'s side.
//!
//! Horizontal weights use the truncated localization kernel
//! `exp(-|s - u_k|^2 / dist(s, boundary(S_k)))` on member regions, where the
//! boundary distance is the squared distance to the nearest expanded
//! bisector. Only inter-region seams count as boundary; the outer edge of the
//! domain does not.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Location;
use crate::rng::derive_seed;
use crate::support_points::{support_points, SpConfig};

/// One overlapping region of a partition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub index: usize,
    pub site: Location,
    pub delta: f64,
    /// Local support points used as inducing points.
    pub inducing: Vec<Location>,
    /// Indices of the training locations inside `S_k`.
    pub members: Vec<usize>,
}

/// One resolution level: sites, overlap radius and per-region data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub sites: Vec<Location>,
    pub delta: f64,
    pub regions: Vec<Region>,
}

/// Default overlap: a tenth of the median pairwise distance between sites
/// (zero for a single site).
pub fn default_delta(sites: &[Location]) -> f64 {
    let mut d: Vec<f64> = Vec::new();
    for i in 0..sites.len() {
        for j in (i + 1)..sites.len() {
            d.push(sites[i].dist(&sites[j]));
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(|a, b| a.total_cmp(b));
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 1 {
        d[mid]
    } else {
        0.5 * (d[mid - 1] + d[mid])
    };
    0.1 * median
}

/// Number of local support points for a region with `members` observations.
pub fn local_inducing_count(m: usize, members: usize) -> usize {
    m.min((members / 2).max(1))
}

impl Partition {
    /// Builds an SPVT partition: `k` sites as support points of
    /// `locations`, then `m` local support points per overlapping region.
    /// `delta = None` selects [`default_delta`].
    pub fn build(
        locations: &[Location],
        k: usize,
        m: usize,
        delta: Option<f64>,
        cfg: &SpConfig,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Input("number of regions K must be >= 1".into()));
        }
        let sites = support_points(locations, k, cfg)?;
        Self::from_sites(locations, sites, m, delta, cfg)
    }

    /// Builds a partition around fixed sites.
    pub fn from_sites(
        locations: &[Location],
        sites: Vec<Location>,
        m: usize,
        delta: Option<f64>,
        cfg: &SpConfig,
    ) -> Result<Self> {
        if sites.is_empty() {
            return Err(Error::Input("a partition needs at least one site".into()));
        }
        if m == 0 {
            return Err(Error::Input("local support-point count m must be >= 1".into()));
        }
        let delta = delta.unwrap_or_else(|| default_delta(&sites));
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::Input(format!("overlap delta must be >= 0, got {delta}")));
        }
        let mut shell = Partition {
            regions: Vec::new(),
            sites,
            delta,
        };

        let k = shell.sites.len();
        let mut members = vec![Vec::new(); k];
        for (i, s) in locations.iter().enumerate() {
            for r in shell.membership(s) {
                members[r].push(i);
            }
        }
        if let Some(empty) = members.iter().position(Vec::is_empty) {
            return Err(Error::Build(format!(
                "region {empty} of {k} has no training observations; try a smaller K"
            )));
        }

        let mut regions = Vec::with_capacity(k);
        for (index, member_idx) in members.into_iter().enumerate() {
            let local: Vec<Location> = member_idx.iter().map(|&i| locations[i]).collect();
            let count = local_inducing_count(m, local.len());
            let local_cfg = cfg.with_seed(derive_seed(cfg.seed, 0x5EED_0000 + index as u64));
            let inducing = support_points(&local, count, &local_cfg)?;
            regions.push(Region {
                index,
                site: shell.sites[index],
                delta,
                inducing,
                members: member_idx,
            });
        }
        shell.regions = regions;
        Ok(shell)
    }

    pub fn k(&self) -> usize {
        self.sites.len()
    }

    /// Nearest site, lowest index on ties.
    pub fn nearest_site(&self, s: &Location) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, u) in self.sites.iter().enumerate() {
            let d = u.dist2(s);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    /// Signed distance from `s` to the `(k, j)` bisector, given the squared
    /// distances from `s` to every site.
    fn bisector(&self, d2: &[f64], k: usize, j: usize) -> f64 {
        let sep = self.sites[k].dist(&self.sites[j]);
        if sep == 0.0 {
            // coincident sites share a cell; the bisector is undefined
            return f64::INFINITY;
        }
        (d2[j] - d2[k]) / (2.0 * sep)
    }

    fn site_dist2(&self, s: &Location) -> Vec<f64> {
        self.sites.iter().map(|u| u.dist2(s)).collect()
    }

    /// Minimum over `j != k` of the signed bisector distance (`+inf` for
    /// a single region).
    fn min_bisector(&self, d2: &[f64], k: usize) -> f64 {
        (0..self.k())
            .filter(|&j| j != k)
            .map(|j| self.bisector(d2, k, j))
            .fold(f64::INFINITY, f64::min)
    }

    /// Indices of the regions `S_k` containing `s`, in increasing order.
    pub fn membership(&self, s: &Location) -> Vec<usize> {
        let d2 = self.site_dist2(s);
        let nearest = self.nearest_site(s);
        (0..self.k())
            .filter(|&k| k == nearest || self.min_bisector(&d2, k) >= -self.delta)
            .collect()
    }

    /// Squared distance from `s` to the nearest expanded-bisector face of
    /// `S_k`; `+inf` when the partition has a single region.
    pub fn boundary_distance(&self, k: usize, s: &Location) -> Result<f64> {
        if k >= self.k() {
            return Err(Error::Domain(format!("region {k} does not exist")));
        }
        let d2 = self.site_dist2(s);
        let nearest = self.nearest_site(s);
        let b = self.min_bisector(&d2, k);
        if k != nearest && b < -self.delta {
            return Err(Error::Domain(format!("location ({}, {}) is outside region {k}", s.x, s.y)));
        }
        Ok(boundary_from_bisector(b, self.delta))
    }

    /// Normalized localization weights over all regions at `s_star`.
    pub fn horizontal_weights(&self, s_star: &Location) -> Vec<f64> {
        let k_total = self.k();
        let d2 = self.site_dist2(s_star);
        let nearest = self.nearest_site(s_star);
        let mut w = vec![0.0; k_total];
        let mut total = 0.0;
        for k in 0..k_total {
            let b = self.min_bisector(&d2, k);
            if k != nearest && b < -self.delta {
                continue;
            }
            let dist = boundary_from_bisector(b, self.delta);
            w[k] = localization_kernel(d2[k], dist);
            total += w[k];
        }
        if total > 0.0 && total.is_finite() {
            for v in &mut w {
                *v /= total;
            }
        } else {
            w.iter_mut().for_each(|v| *v = 0.0);
            w[nearest] = 1.0;
        }
        w
    }
}

fn boundary_from_bisector(b: f64, delta: f64) -> f64 {
    if b.is_infinite() {
        return f64::INFINITY;
    }
    let g = (b + delta).max(0.0);
    g * g
}

/// `exp(-d2 / boundary)`, equal to 1 without a boundary and 0 on it.
fn localization_kernel(d2: f64, boundary: f64) -> f64 {
    if boundary.is_infinite() || d2 == 0.0 {
        1.0
    } else if boundary <= 0.0 {
        0.0
    } else {
        (-d2 / boundary).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn uniform(n: usize, seed: u64) -> Vec<Location> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| Location::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)))
            .collect()
    }

    fn two_site(delta: f64, locations: &[Location]) -> Partition {
        Partition::from_sites(
            locations,
            vec![Location::new(-1.0, 0.0), Location::new(1.0, 0.0)],
            4,
            Some(delta),
            &SpConfig::default(),
        )
        .unwrap()
    }

    #[test]
    fn single_region_holds_everything() {
        let locs = uniform(200, 1);
        let p = Partition::build(&locs, 1, 10, None, &SpConfig::default()).unwrap();
        assert_eq!(p.k(), 1);
        assert_eq!(p.delta, 0.0);
        assert_eq!(p.regions[0].members, (0..200).collect::<Vec<_>>());
        assert_eq!(p.regions[0].inducing.len(), 10);
        assert_eq!(p.boundary_distance(0, &Location::new(0.5, 0.5)).unwrap(), f64::INFINITY);
        assert_eq!(p.horizontal_weights(&Location::new(2.0, -1.0)), vec![1.0]);
    }

    #[test]
    fn four_regions_balanced_and_disjoint() {
        let locs = uniform(2000, 2);
        let p = Partition::build(&locs, 4, 10, Some(0.0), &SpConfig::default()).unwrap();
        let mut count = vec![0usize; 2000];
        for r in &p.regions {
            assert!((250..=750).contains(&r.members.len()), "{}", r.members.len());
            for &i in &r.members {
                count[i] += 1;
            }
        }
        assert!(count.iter().all(|&c| c == 1));
    }

    #[test]
    fn overlap_band_membership() {
        let locs = uniform(1000, 3);
        let p = two_site(0.2, &locs);
        for (i, s) in locs.iter().enumerate() {
            let both = p.regions[0].members.contains(&i) && p.regions[1].members.contains(&i);
            assert_eq!(both, s.x.abs() <= 0.2, "point {s:?}");
        }
        assert_eq!(p.membership(&Location::new(0.1, 0.0)), vec![0, 1]);
        assert_eq!(p.membership(&Location::new(0.5, 0.0)), vec![1]);
        let p0 = two_site(0.0, &locs);
        assert_eq!(p0.membership(&Location::new(0.1, 0.0)), vec![1]);
    }

    #[test]
    fn boundary_distances() {
        let locs = uniform(200, 4);
        let p = two_site(0.0, &locs);
        let d = p.boundary_distance(0, &Location::new(-0.5, 0.0)).unwrap();
        assert!((d - 0.25).abs() < 1e-15);
        let pd = two_site(0.2, &locs);
        assert!(pd.boundary_distance(0, &Location::new(0.2, 0.3)).unwrap() < 1e-24);
        assert!(matches!(pd.boundary_distance(0, &Location::new(0.5, 0.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn kernel_weight_examples() {
        let locs = uniform(200, 5);
        let p = two_site(0.0, &locs);
        let s = Location::new(-0.5, 0.0);
        let d2 = (s.dist2(&p.sites[0]), p.boundary_distance(0, &s).unwrap());
        assert!((localization_kernel(d2.0, d2.1) - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(p.horizontal_weights(&s), vec![1.0, 0.0]);
        assert_eq!(p.horizontal_weights(&Location::new(-1.0, 0.0)), vec![1.0, 0.0]);
    }

    #[test]
    fn weight_vanishes_toward_exited_boundary() {
        let locs = uniform(200, 6);
        let p = two_site(0.2, &locs);
        // moving right from inside region 0 toward the edge of S_0 at x = 0.2
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let x = -0.2 + 0.4 * i as f64 / 200.0;
            let w = p.horizontal_weights(&Location::new(x, 0.1))[0];
            assert!(w <= prev + 1e-15);
            prev = w;
        }
        let near = p.horizontal_weights(&Location::new(0.2 - 1e-3, 0.1))[0];
        assert!(near < 1e-3, "{near}");
    }

    #[test]
    fn weights_are_a_distribution() {
        let locs = uniform(1500, 7);
        let p = Partition::build(&locs, 9, 8, None, &SpConfig::default()).unwrap();
        assert!(p.delta > 0.0);
        for s in uniform(10_000, 8) {
            let w = p.horizontal_weights(&s);
            let total: f64 = w.iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            assert!(w.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn overlap_nesting() {
        let locs = uniform(800, 9);
        let sites = uniform(6, 10);
        let small = Partition::from_sites(&locs, sites.clone(), 4, Some(0.05), &SpConfig::default()).unwrap();
        let large = Partition::from_sites(&locs, sites, 4, Some(0.3), &SpConfig::default()).unwrap();
        for s in &locs {
            let a = small.membership(s);
            let b = large.membership(s);
            assert!(!a.is_empty());
            assert!(a.iter().all(|k| b.contains(k)));
        }
    }

    #[test]
    fn local_inducing_clamp_and_bounds() {
        let locs = uniform(1000, 11);
        let p = Partition::build(&locs, 16, 200, None, &SpConfig::default()).unwrap();
        for r in &p.regions {
            assert_eq!(r.inducing.len(), local_inducing_count(200, r.members.len()));
            let xs = r.members.iter().map(|&i| locs[i].x);
            let ys = r.members.iter().map(|&i| locs[i].y);
            let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            let (px, py) = (0.1 * (x1 - x0), 0.1 * (y1 - y0));
            for q in &r.inducing {
                assert!(q.x >= x0 - px && q.x <= x1 + px && q.y >= y0 - py && q.y <= y1 + py);
            }
        }
        // balance diagnostic: counts within a factor 4 of n / K
        let target = 1000.0 / 16.0;
        for r in &p.regions {
            let c = r.members.len() as f64;
            assert!(c >= target / 4.0 && c <= target * 4.0);
        }
    }

    #[test]
    fn empty_region_is_build_error() {
        let locs = uniform(50, 12);
        let sites = vec![Location::new(0.0, 0.0), Location::new(100.0, 100.0)];
        let err = Partition::from_sites(&locs, sites, 2, Some(0.0), &SpConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Build(_)));
    }

    #[test]
    fn json_round_trip() {
        let locs = uniform(300, 13);
        let p = Partition::build(&locs, 3, 5, None, &SpConfig::default()).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let back: Partition = serde_json::from_str(&s).unwrap();
        assert_eq!(p, back);
    }
}

//! Energy distance and support-point selection.
//!
//! Support points minimize the energy distance between a small candidate set
//! and an empirical sample. The solver is the convex-concave
//! majorization-minimization iteration: every point is moved simultaneously
//! to
//!
//! ```text
//! s_i <- [ (N/m) sum_{j!=i} (s_i - s_j)/|s_i - s_j| + sum_n x_n/|x_n - s_i| ]
//!        / sum_n 1/|x_n - s_i|
//! ```
//!
//! starting from `m` sample points drawn without replacement.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Location;
use crate::rng::rng_from_seed;

const SINGULAR_DIST: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpConfig {
    pub max_iters: usize,
    /// Stop once the relative change in energy falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl Default for SpConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl SpConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Config("support-point max_iters must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("support-point tol must be positive".into()));
        }
        Ok(())
    }
}

fn mean_pairwise(a: &[Location], b: &[Location]) -> f64 {
    let mut total = 0.0;
    for p in a {
        for q in b {
            total += p.dist(q);
        }
    }
    total / (a.len() as f64 * b.len() as f64)
}

/// Energy distance between the empirical law of `sample` and the uniform
/// law on `candidates`:
///
/// `2 E|x - s| - E|x - x'| - E|s - s'|`
///
/// with every expectation taken over all ordered pairs of the empirical
/// measures (diagonal included), so identical multisets give zero.
pub fn energy_distance(sample: &[Location], candidates: &[Location]) -> f64 {
    EnergyEvaluator::new(sample).eval(candidates)
}

/// Caches the sample-only term of the energy distance.
pub struct EnergyEvaluator<'a> {
    sample: &'a [Location],
    self_term: f64,
}

impl<'a> EnergyEvaluator<'a> {
    pub fn new(sample: &'a [Location]) -> Self {
        assert!(!sample.is_empty(), "energy distance needs a nonempty sample");
        Self {
            sample,
            self_term: mean_pairwise(sample, sample),
        }
    }

    pub fn eval(&self, candidates: &[Location]) -> f64 {
        assert!(!candidates.is_empty(), "energy distance needs nonempty candidates");
        let e = 2.0 * mean_pairwise(self.sample, candidates)
            - self.self_term
            - mean_pairwise(candidates, candidates);
        e.max(0.0)
    }
}

/// Result of one support-point solve.
#[derive(Clone, Debug, PartialEq)]
pub struct SpSolution {
    pub points: Vec<Location>,
    /// Energy of the initialization followed by the energy after each
    /// iteration.
    pub energies: Vec<f64>,
    pub converged: bool,
}

impl SpSolution {
    pub fn energy(&self) -> f64 {
        *self.energies.last().expect("at least the initial energy")
    }
}

/// `m` support points of `sample`.
pub fn support_points(sample: &[Location], m: usize, cfg: &SpConfig) -> Result<Vec<Location>> {
    Ok(solve(sample, m, cfg)?.points)
}

/// Seeded support-point solve returning the full energy trace.
pub fn solve(sample: &[Location], m: usize, cfg: &SpConfig) -> Result<SpSolution> {
    cfg.validate()?;
    if m == 0 {
        return Err(Error::Input("number of support points must be >= 1".into()));
    }
    if sample.len() < m {
        return Err(Error::Input(format!(
            "requested {m} support points from only {} sample points",
            sample.len()
        )));
    }
    if let Some(i) = sample.iter().position(|p| !p.is_finite()) {
        return Err(Error::Input(format!("sample point {i} is not finite")));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut picks = index::sample(&mut rng, sample.len(), m).into_vec();
    picks.sort_unstable();
    let init: Vec<Location> = picks.into_iter().map(|i| sample[i]).collect();
    Ok(solve_from(sample, init, cfg))
}

/// Runs the MM iteration from an explicit initialization.
pub fn solve_from(sample: &[Location], init: Vec<Location>, cfg: &SpConfig) -> SpSolution {
    let energy = EnergyEvaluator::new(sample);
    let mut points = init;
    let mut current = energy.eval(&points);
    let mut energies = vec![current];
    let mut converged = false;

    for _ in 0..cfg.max_iters {
        if current <= f64::EPSILON * energy.self_term.max(1.0) {
            converged = true;
            break;
        }
        let proposal = mm_step(sample, &points);
        // The MM surrogate guarantees descent; the backtracking only guards
        // the snapped steps taken at sample points.
        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..8 {
            let trial: Vec<Location> = if t == 1.0 {
                proposal.clone()
            } else {
                points
                    .iter()
                    .zip(&proposal)
                    .map(|(p, q)| Location::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)))
                    .collect()
            };
            let e = energy.eval(&trial);
            if e <= current + 1e-12 * current.max(1e-300) {
                accepted = Some((trial, e));
                break;
            }
            t *= 0.5;
        }
        let Some((next, e)) = accepted else {
            converged = true;
            break;
        };
        let rel = (current - e).abs() / current.max(f64::MIN_POSITIVE);
        points = next;
        current = e;
        energies.push(e);
        if rel < cfg.tol {
            converged = true;
            break;
        }
    }
    SpSolution {
        points,
        energies,
        converged,
    }
}

/// One simultaneous MM update of every point.
fn mm_step(sample: &[Location], points: &[Location]) -> Vec<Location> {
    let ratio = sample.len() as f64 / points.len() as f64;
    points
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (mut rx, mut ry) = (0.0, 0.0);
            for (j, t) in points.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = s.dist(t);
                if d >= SINGULAR_DIST {
                    rx += (s.x - t.x) / d;
                    ry += (s.y - t.y) / d;
                }
            }
            let (mut ax, mut ay, mut den) = (0.0, 0.0, 0.0);
            let mut snapped: Option<Location> = None;
            for x in sample {
                let d = s.dist(x);
                if d < SINGULAR_DIST {
                    snapped.get_or_insert(*x);
                    continue;
                }
                ax += x.x / d;
                ay += x.y / d;
                den += 1.0 / d;
            }
            if den == 0.0 {
                return snapped.unwrap_or(*s);
            }
            let update = Location::new((ratio * rx + ax) / den, (ratio * ry + ay) / den);
            match snapped {
                // Sitting on a sample point: the singular term is dropped and
                // the point only moves halfway toward the remaining update.
                Some(anchor) => Location::new(0.5 * (anchor.x + update.x), 0.5 * (anchor.y + update.y)),
                None => update,
            }
        })
        .collect()
}

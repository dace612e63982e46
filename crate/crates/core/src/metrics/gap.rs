use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{FcviError, Result};
use crate::problem::{ProblemInstance, SimpleSet};

/// Constraint tolerance a probe must meet to count as feasible.
pub const PROBE_FEASIBILITY_TOL: f64 = 1e-9;
/// Tolerance on membership of `X` for probes.
pub const PROBE_SET_TOL: f64 = 1e-12;
/// Number of rejection-sampled probes in the default probe set.
pub const DEFAULT_SAMPLED_PROBES: usize = 64;
pub const DEFAULT_PROBE_SEED: u64 = 0x7072_6f62_6573;
/// Largest dimension the grid oracles enumerate.
pub const MAX_GRID_DIM: usize = 3;

const MAX_PROBE_VERTICES: usize = 64;
const REJECTION_ATTEMPTS: usize = 100_000;
const BISECTION_STEPS: usize = 60;

/// `‖[g(x)]₊‖`
pub fn infeasibility(instance: &ProblemInstance, x: &DVector<f64>) -> Result<f64> {
    Ok(positive_part_norm(&instance.eval_constraints(x)?))
}

pub fn positive_part_norm(values: &DVector<f64>) -> f64 {
    values.iter().map(|v| v.max(0.0).powi(2)).sum::<f64>().sqrt()
}

pub fn is_feasible(instance: &ProblemInstance, x: &DVector<f64>, tol: f64) -> bool {
    instance.in_set(x, PROBE_SET_TOL) && instance.constraints().values(x).iter().all(|v| *v <= tol)
}

/// A validated set of feasible points with their operator values cached.
#[derive(Debug, Clone)]
pub struct ProbeSet {
    points: Vec<DVector<f64>>,
    values: Vec<DVector<f64>>,
}

impl ProbeSet {
    pub fn new(instance: &ProblemInstance, points: Vec<DVector<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(FcviError::Config("probe set is empty".into()));
        }
        let mut values = Vec::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            if p.len() != instance.dim() {
                return Err(FcviError::Input(format!("probe {i} has dimension {}", p.len())));
            }
            if !instance.in_set(p, PROBE_SET_TOL) {
                return Err(FcviError::Input(format!("probe {i} {:?} lies outside X", p.as_slice())));
            }
            let g = instance.constraints().values(p);
            if let Some(j) = g.iter().position(|v| *v > PROBE_FEASIBILITY_TOL) {
                return Err(FcviError::Input(format!(
                    "probe {i} {:?} violates constraint {j} (g = {:e})",
                    p.as_slice(),
                    g[j]
                )));
            }
            values.push(instance.operator().eval(p));
        }
        Ok(Self { points, values })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[DVector<f64>] {
        &self.points
    }

    /// `max_p ⟨F(p), x̄ − p⟩`
    pub fn gap(&self, x_bar: &DVector<f64>) -> f64 {
        self.points
            .iter()
            .zip(&self.values)
            .map(|(p, f)| f.dot(&(x_bar - p)))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Gap restricted to `probes`: a lower bound on the true weak gap.
pub fn restricted_weak_gap(instance: &ProblemInstance, x_bar: &DVector<f64>, probes: &[DVector<f64>]) -> Result<f64> {
    if x_bar.len() != instance.dim() {
        return Err(FcviError::Input(format!("x̄ has dimension {}", x_bar.len())));
    }
    Ok(ProbeSet::new(instance, probes.to_vec())?.gap(x_bar))
}

/// Largest `a ∈ [0, 1]` with `anchor + a (target − anchor)` feasible, found
/// by bisection (the feasible part of the segment is an interval by
/// convexity).
fn pull_toward_feasible(instance: &ProblemInstance, anchor: &DVector<f64>, target: &DVector<f64>) -> DVector<f64> {
    let point = |a: f64| anchor + (target - anchor) * a;
    if is_feasible(instance, target, 0.0) {
        return target.clone();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if is_feasible(instance, &point(mid), 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    point(lo)
}

/// Known `x*`, extreme points of `X` pulled back to feasibility along the
/// segment from a feasible anchor, and seeded rejection samples.
pub fn default_probes(instance: &ProblemInstance, samples: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled = Vec::with_capacity(samples);
    let mut attempts = 0;
    while sampled.len() < samples && attempts < REJECTION_ATTEMPTS {
        attempts += 1;
        let p = instance.set().sample_uniform(&mut rng);
        if is_feasible(instance, &p, 0.0) {
            sampled.push(p);
        }
    }
    let anchor = instance
        .known_solution()
        .map(|k| k.x.clone())
        .filter(|x| is_feasible(instance, x, 0.0))
        .or_else(|| sampled.first().cloned());
    let mut probes = Vec::new();
    if let Some(k) = instance.known_solution() {
        probes.push(k.x.clone());
    }
    if let (Some(anchor), Some(extremes)) = (&anchor, instance.set().extreme_points(MAX_PROBE_VERTICES)) {
        for e in extremes {
            probes.push(pull_toward_feasible(instance, anchor, &e));
        }
    }
    probes.extend(sampled);
    if probes.is_empty() {
        return Err(FcviError::Config(
            "could not find any feasible probe point; supply probes explicitly".into(),
        ));
    }
    Ok(probes)
}

pub(crate) fn lattice(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=count).map(|k| (lo + k as f64 * step).min(hi)).collect()
}

/// Every lattice point of spacing `step` that lies in `X ∩ {g <= 0}`.
///
/// Boxes and balls use the lattice anchored at the lower corner of the
/// bounding box; simplices use a lattice on the first `n - 1` coordinates with
/// the last one fixed by the sum constraint.
pub fn feasible_grid(instance: &ProblemInstance, step: f64) -> Result<Vec<DVector<f64>>> {
    let n = instance.dim();
    if n > MAX_GRID_DIM {
        return Err(FcviError::Unsupported(format!(
            "grid enumeration supports n <= {MAX_GRID_DIM}, instance has n = {n}"
        )));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(FcviError::Parameter(format!("grid step must be > 0, got {step}")));
    }
    let (lower, upper) = instance.set().bounding_box();
    let free = match instance.set() {
        SimpleSet::Simplex { .. } => n - 1,
        _ => n,
    };
    let axes: Vec<Vec<f64>> = (0..free).map(|i| lattice(lower[i], upper[i], step)).collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let points: Vec<DVector<f64>> = (0..total)
        .into_par_iter()
        .filter_map(|mut idx| {
            let mut p = DVector::zeros(n);
            for (i, axis) in axes.iter().enumerate() {
                p[i] = axis[idx % axis.len()];
                idx /= axis.len();
            }
            if let SimpleSet::Simplex { scale, .. } = instance.set() {
                let rest = scale - p.rows(0, free).sum();
                if rest < -1e-12 {
                    return None;
                }
                p[n - 1] = rest.max(0.0);
            }
            let inside = match instance.set() {
                SimpleSet::Simplex { .. } => true,
                set => set.contains(&p, 0.0),
            };
            (inside && instance.constraints().values(&p).iter().all(|v| *v <= 0.0)).then_some(p)
        })
        .collect();
    if points.is_empty() {
        return Err(FcviError::Config(format!("no feasible grid point at step {step}")));
    }
    Ok(points)
}

/// Exhaustive weak gap over the feasible grid (n <= 3).
pub fn brute_force_weak_gap(instance: &ProblemInstance, x_bar: &DVector<f64>, grid_step: f64) -> Result<f64> {
    if x_bar.len() != instance.dim() {
        return Err(FcviError::Input(format!("x̄ has dimension {}", x_bar.len())));
    }
    let grid = feasible_grid(instance, grid_step)?;
    Ok(grid
        .par_iter()
        .map(|p| instance.operator().eval(p).dot(&(x_bar - p)))
        .reduce(|| f64::NEG_INFINITY, f64::max))
}

/// `𝓛(x̄, λ*) − 𝓛(x*, λ̄)` with `𝓛(x, λ) = ⟨F(x*), x⟩ + ⟨λ, g(x)⟩`.
pub fn lagrangian_gap(instance: &ProblemInstance, x_bar: &DVector<f64>, lambda_bar: &DVector<f64>) -> Result<f64> {
    let known = instance
        .known_solution()
        .ok_or_else(|| FcviError::Config("lagrangian gap needs a known solution".into()))?;
    if lambda_bar.len() != instance.num_constraints() {
        return Err(FcviError::Input(format!("λ̄ has length {}", lambda_bar.len())));
    }
    let f_star = instance.eval_operator(&known.x)?;
    let g_bar = instance.eval_constraints(x_bar)?;
    let g_star = instance.eval_constraints(&known.x)?;
    Ok(f_star.dot(&(x_bar - &known.x)) + known.lambda.dot(&g_bar) - lambda_bar.dot(&g_star))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{canonical, ConstraintSet, Operator};
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn infeasibility_examples() {
        assert_eq!(positive_part_norm(&v(&[-1.0, 0.5])), 0.5);
        assert_eq!(positive_part_norm(&v(&[3.0, 4.0])), 5.0);
        let inst = canonical::qc1();
        assert_eq!(infeasibility(&inst, &v(&[0.0, 0.0])).unwrap(), 0.0);
        assert!(infeasibility(&inst, &v(&[1.0, 1.0])).unwrap() > 0.0);
    }

    #[test]
    fn self_gap_is_zero() {
        let inst = canonical::qc1();
        let x = inst.known_solution().unwrap().x.clone();
        assert_eq!(restricted_weak_gap(&inst, &x, std::slice::from_ref(&x)).unwrap(), 0.0);
    }

    #[test]
    fn single_probe_gap() {
        let inst = canonical::qc1();
        let p = v(&[-0.5, 0.5]);
        let x = v(&[0.1, -0.3]);
        // F(p) = A p + b = (0.5 - 1.75, 1.5 - 0.75) = (-1.25, 0.75); x - p = (0.6, -0.8)
        let expected = -1.25 * 0.6 + 0.75 * -0.8;
        assert!((restricted_weak_gap(&inst, &x, &[p]).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn infeasible_probe_rejected() {
        let inst = canonical::qc1();
        let err = restricted_weak_gap(&inst, &v(&[0.0, 0.0]), &[v(&[0.9, 0.9])]).unwrap_err();
        assert!(matches!(err, FcviError::Input(m) if m.contains("probe 0")));
        assert!(matches!(
            restricted_weak_gap(&inst, &v(&[0.0, 0.0]), &[]),
            Err(FcviError::Config(_))
        ));
    }

    #[test]
    fn default_probes_are_feasible() {
        for inst in [canonical::qc1(), canonical::qc2(), canonical::qc1_nonsmooth()] {
            let probes = default_probes(&inst, DEFAULT_SAMPLED_PROBES, DEFAULT_PROBE_SEED).unwrap();
            assert_eq!(probes[0], inst.known_solution().unwrap().x);
            assert!(probes.len() >= 1 + 4 + DEFAULT_SAMPLED_PROBES);
            ProbeSet::new(&inst, probes).unwrap();
        }
    }

    #[test]
    fn one_dimensional_brute_force() {
        let set = SimpleSet::symmetric_box(1, 1.0).unwrap();
        let op = Operator::affine(DMatrix::identity(1, 1), DVector::zeros(1)).unwrap();
        let inst = ProblemInstance::new("id", set.clone(), op, ConstraintSet::empty(&set)).unwrap();
        assert_eq!(brute_force_weak_gap(&inst, &v(&[0.0]), 0.01).unwrap(), 0.0);
    }

    #[test]
    fn brute_force_at_solution_is_within_resolution() {
        let inst = canonical::qc1();
        let c = inst.constants();
        let step = 0.005;
        let gap = brute_force_weak_gap(&inst, &v(&[0.25, 0.25]), step).unwrap();
        assert!(gap.abs() <= c.l * c.d_x * step, "gap = {gap}");
    }

    #[test]
    fn grid_refinement_is_consistent() {
        let inst = canonical::qc2();
        let c = inst.constants();
        let x = v(&[0.4, -0.2]);
        let coarse = brute_force_weak_gap(&inst, &x, 0.02).unwrap();
        let fine = brute_force_weak_gap(&inst, &x, 0.01).unwrap();
        assert!((coarse - fine).abs() <= c.l * c.d_x * 0.02);
    }

    #[test]
    fn restricted_equals_brute_force_on_the_grid() {
        let inst = canonical::qc1();
        let grid = feasible_grid(&inst, 0.01).unwrap();
        let x = v(&[0.0, 0.0]);
        let a = restricted_weak_gap(&inst, &x, &grid).unwrap();
        let b = brute_force_weak_gap(&inst, &x, 0.01).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn simplex_grid_lies_on_the_simplex() {
        let set = SimpleSet::new_simplex(3, 1.0).unwrap();
        let op = Operator::affine(DMatrix::identity(3, 3), DVector::zeros(3)).unwrap();
        let inst = ProblemInstance::new("s", set.clone(), op, ConstraintSet::empty(&set)).unwrap();
        let grid = feasible_grid(&inst, 0.1).unwrap();
        assert_eq!(grid.len(), 66);
        assert!(grid.iter().all(|p| set.contains(p, 1e-12)));
    }

    #[test]
    fn grid_rejects_high_dimension() {
        let set = SimpleSet::symmetric_box(4, 1.0).unwrap();
        let op = Operator::affine(DMatrix::identity(4, 4), DVector::zeros(4)).unwrap();
        let inst = ProblemInstance::new("big", set.clone(), op, ConstraintSet::empty(&set)).unwrap();
        assert!(matches!(
            brute_force_weak_gap(&inst, &DVector::zeros(4), 0.1),
            Err(FcviError::Unsupported(_))
        ));
    }

    #[test]
    fn lagrangian_gap_examples() {
        let inst = canonical::qc1();
        let k = inst.known_solution().unwrap().clone();
        assert!(lagrangian_gap(&inst, &k.x, &k.lambda).unwrap().abs() < 1e-15);
        // F(x*) = (-1, -1): <F(x*), -x*> = 0.5, and λ* g(0) = -0.5.
        assert!(lagrangian_gap(&inst, &v(&[0.0, 0.0]), &v(&[0.0])).unwrap().abs() < 1e-15);
        let x = v(&[-0.6, 0.2]);
        let by_hand = inst.eval_operator(&k.x).unwrap().dot(&(&x - &k.x)) + inst.eval_constraints(&x).unwrap()[0];
        assert!((lagrangian_gap(&inst, &x, &k.lambda).unwrap() - by_hand).abs() < 1e-15);
    }
}

use nalgebra::DVector;

use crate::error::{FcviError, Result};
use crate::problem::SimpleSet;

/// `argmin_{λ ≥ 0} ⟨−s, λ⟩ + τ/2 ‖λ − λ₀‖² = [λ₀ + s/τ]₊`
pub fn prox_dual(lambda: &DVector<f64>, s: &DVector<f64>, tau: f64) -> Result<DVector<f64>> {
    if !(tau > 0.0) {
        return Err(FcviError::Parameter(format!("dual step τ must be > 0, got {tau}")));
    }
    Ok(lambda.zip_map(s, |l, s| (l + s / tau).max(0.0)))
}

/// `argmin_{x ∈ X} ⟨d, x⟩ + η/2 ‖x − x₀‖² = Π_X(x₀ − d/η)`
pub fn prox_primal(x: &DVector<f64>, d: &DVector<f64>, eta: f64, set: &SimpleSet) -> Result<DVector<f64>> {
    if !(eta > 0.0) {
        return Err(FcviError::Parameter(format!("primal step η must be > 0, got {eta}")));
    }
    set.project(&(x - d / eta))
}

//! Seeded stochastic oracles for `F`, `g` and `grad g`.
//!
//! Noise is additive and depends only on `(master_seed, t, stream, channel)`,
//! never on the query point. Two queries with the same sample at different
//! points therefore see the same realization, which is how the dual step of
//! the fully stochastic method re-linearizes at two points with one `ξ̄ᵗ`.
//!
//! Each draw uses its own ChaCha8 stream whose id packs the iteration, the
//! substream and the channel, so results do not depend on evaluation order.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FcviError, Result};
use crate::problem::{linearize_constraints, ProblemInstance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseShape {
    /// Per-component std `σ/√k`, so `E‖δ‖² = σ²`.
    #[default]
    Gaussian,
    /// Per-component uniform on `[-σ/√k, σ/√k]`, so `‖δ‖ ≤ σ` almost surely.
    BoundedUniform,
}

/// The two independent samples drawn at each iteration: `ξᵗ` and `ξ̄ᵗ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Primary,
    Bar,
}

#[derive(Debug, Clone, Copy)]
enum Channel {
    Operator = 1,
    Values = 2,
    Jacobian = 3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochasticOracleSpec {
    #[serde(default)]
    pub sigma_f: f64,
    #[serde(default)]
    pub sigma_g: f64,
    /// Per-constraint gradient noise; empty means zero for every constraint.
    #[serde(default)]
    pub sigma_gamma: Vec<f64>,
    #[serde(default)]
    pub noise_shape: NoiseShape,
    #[serde(default)]
    pub master_seed: u64,
}

impl Default for StochasticOracleSpec {
    fn default() -> Self {
        Self::deterministic(0)
    }
}

impl StochasticOracleSpec {
    pub fn deterministic(master_seed: u64) -> Self {
        Self {
            sigma_f: 0.0,
            sigma_g: 0.0,
            sigma_gamma: Vec::new(),
            noise_shape: NoiseShape::Gaussian,
            master_seed,
        }
    }

    pub fn with_seed(&self, master_seed: u64) -> Self {
        Self {
            master_seed,
            ..self.clone()
        }
    }

    pub fn validate(&self, num_constraints: usize) -> Result<()> {
        let all = [self.sigma_f, self.sigma_g]
            .into_iter()
            .chain(self.sigma_gamma.iter().copied());
        for s in all {
            if !(s.is_finite() && s >= 0.0) {
                return Err(FcviError::Config(format!(
                    "noise parameters must be finite and >= 0, got {s}"
                )));
            }
        }
        if !self.sigma_gamma.is_empty() && self.sigma_gamma.len() != num_constraints {
            return Err(FcviError::Config(format!(
                "sigma_gamma has {} entries, the instance has {num_constraints} constraints",
                self.sigma_gamma.len()
            )));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_f == 0.0 && self.sigma_g == 0.0 && self.sigma_gamma.iter().all(|s| *s == 0.0)
    }

    pub fn constraint_noise_is_zero(&self) -> bool {
        self.sigma_g == 0.0 && self.sigma_gamma.iter().all(|s| *s == 0.0)
    }

    /// `‖σ_Γ‖`
    pub fn sigma_gamma_norm(&self) -> f64 {
        self.sigma_gamma.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    fn sigma_gamma_at(&self, j: usize) -> f64 {
        self.sigma_gamma.get(j).copied().unwrap_or(0.0)
    }

    fn rng(&self, t: usize, stream: Stream, channel: Channel) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        let s = match stream {
            Stream::Primary => 0u64,
            Stream::Bar => 1,
        };
        rng.set_stream(((t as u64) << 8) | (s << 4) | channel as u64);
        rng
    }

    fn component<R: Rng>(&self, rng: &mut R, scale: f64) -> f64 {
        match self.noise_shape {
            NoiseShape::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                scale * z
            }
            NoiseShape::BoundedUniform => scale * rng.random_range(-1.0..=1.0),
        }
    }

    /// Additive operator noise for draw `(t, stream)`; `None` when `σ = 0`.
    pub fn operator_noise(&self, n: usize, t: usize, stream: Stream) -> Option<DVector<f64>> {
        if self.sigma_f == 0.0 {
            return None;
        }
        let mut rng = self.rng(t, stream, Channel::Operator);
        let scale = self.sigma_f / (n as f64).sqrt();
        Some(DVector::from_fn(n, |_, _| self.component(&mut rng, scale)))
    }

    /// Additive value noise for draw `(t, stream)`; `None` when `σ_𝔤 = 0`.
    pub fn value_noise(&self, m: usize, t: usize, stream: Stream) -> Option<DVector<f64>> {
        if self.sigma_g == 0.0 || m == 0 {
            return None;
        }
        let mut rng = self.rng(t, stream, Channel::Values);
        let scale = self.sigma_g / (m as f64).sqrt();
        Some(DVector::from_fn(m, |_, _| self.component(&mut rng, scale)))
    }

    /// Additive Jacobian noise (n x m, column `j` scaled by `σ_j`); `None`
    /// when every `σ_j` is zero.
    pub fn jacobian_noise(&self, n: usize, m: usize, t: usize, stream: Stream) -> Option<DMatrix<f64>> {
        if self.sigma_gamma.iter().all(|s| *s == 0.0) || m == 0 {
            return None;
        }
        let mut rng = self.rng(t, stream, Channel::Jacobian);
        let root_n = (n as f64).sqrt();
        let mut out = DMatrix::zeros(n, m);
        for j in 0..m {
            let scale = self.sigma_gamma_at(j) / root_n;
            for i in 0..n {
                out[(i, j)] = self.component(&mut rng, scale);
            }
        }
        Some(out)
    }
}

/// `𝔉(x, ξ)` for the sample identified by `(t, stream)`.
pub fn sample_operator(
    instance: &ProblemInstance,
    spec: &StochasticOracleSpec,
    x: &DVector<f64>,
    t: usize,
    stream: Stream,
) -> DVector<f64> {
    let mut f = instance.operator().eval(x);
    if let Some(noise) = spec.operator_noise(x.len(), t, stream) {
        f += noise;
    }
    f
}

/// `(𝔤(x, ξ), Γ(x, ξ))` for the sample identified by `(t, stream)`.
pub fn sample_constraints(
    instance: &ProblemInstance,
    spec: &StochasticOracleSpec,
    x: &DVector<f64>,
    t: usize,
    stream: Stream,
) -> (DVector<f64>, DMatrix<f64>) {
    let m = instance.num_constraints();
    let mut values = instance.constraints().values(x);
    let mut jac = instance.constraints().jacobian(x);
    if let Some(noise) = spec.value_noise(m, t, stream) {
        values += noise;
    }
    if let Some(noise) = spec.jacobian_noise(x.len(), m, t, stream) {
        jac += noise;
    }
    (values, jac)
}

/// `𝔤(x_prev, ξ̄) + Γ(x_prev, ξ̄)ᵀ(x - x_prev)`.
pub fn stochastic_linearize(
    g_prev: &DVector<f64>,
    gamma_prev: &DMatrix<f64>,
    x_prev: &DVector<f64>,
    x: &DVector<f64>,
) -> DVector<f64> {
    linearize_constraints(g_prev, gamma_prev, x_prev, x)
}

//! Stochastic oracles: replay of the two-stream update and Monte-Carlo
//! checks of unbiasedness and variance.

use fcvi::algorithms::{make_policy, Method, PolicyName, PolicySpec, Solver};
use fcvi::oracles::{sample_constraints, sample_operator, NoiseShape, StochasticOracleSpec, Stream};
use fcvi::problem::canonical::{qc1_nonsmooth, qc2};
use fcvi::problem::ProblemInstance;
use nalgebra::{DMatrix, DVector};

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn noisy(shape: NoiseShape, seed: u64) -> StochasticOracleSpec {
    StochasticOracleSpec {
        sigma_f: 0.4,
        sigma_g: 0.3,
        sigma_gamma: vec![0.2, 0.5],
        noise_shape: shape,
        master_seed: seed,
    }
}

/// Replays one fully stochastic iteration from the raw draws:
/// the dual step linearizes g at the two previous points with the same bar
/// sample, the primal step uses the primary sample's Jacobian at the current point.
#[allow(clippy::too_many_arguments)]
fn replay(
    inst: &ProblemInstance,
    noise: &StochasticOracleSpec,
    t: usize,
    xs: &[DVector<f64>],
    lambda: &DVector<f64>,
    f_cur: &DVector<f64>,
    f_prev: &DVector<f64>,
    eta: f64,
    tau: f64,
) -> (DVector<f64>, DVector<f64>) {
    let (n, m) = (inst.dim(), inst.num_constraints());
    let x = &xs[t];
    let x1 = if t >= 1 { &xs[t - 1] } else { &xs[0] };
    let x2 = if t >= 2 { &xs[t - 2] } else { &xs[0] };
    let dg = noise.value_noise(m, t, Stream::Bar).unwrap();
    let dj = noise.jacobian_noise(n, m, t, Stream::Bar).unwrap();
    let g = |p: &DVector<f64>| inst.constraints().values(p);
    let j = |p: &DVector<f64>| inst.constraints().jacobian(p);
    let lin_cur = g(x1) + &dg + (j(x1) + &dj).transpose() * (x - x1);
    let lin_prev = g(x2) + &dg + (j(x2) + &dj).transpose() * (x1 - x2);
    let s = lin_cur * 2.0 - lin_prev;
    let lambda_next = (lambda + s / tau).map(|l| l.max(0.0));
    let jac = j(x) + noise.jacobian_noise(n, m, t, Stream::Primary).unwrap();
    let d = f_cur * 2.0 - f_prev + jac * &lambda_next;
    let x_next = inst.set().project(&(x - d / eta)).unwrap();
    (x_next, lambda_next)
}

#[test]
fn fully_stochastic_step_replays_from_raw_draws() {
    let inst = qc1_nonsmooth();
    for shape in [NoiseShape::Gaussian, NoiseShape::BoundedUniform] {
        let noise = noisy(shape, 11);
        let policy = PolicySpec::new(PolicyName::FullyStochB).with_b(2.0);
        let schedule = make_policy(&policy, &inst, &noise, 50).unwrap();
        let mut solver = Solver::new(&inst, Method::Fstopconex, schedule, noise.clone(), &v(&[0.9, -0.4])).unwrap();
        let mut xs = vec![solver.state().x.clone()];
        let mut fs = vec![sample_operator(&inst, &noise, &xs[0], 0, Stream::Primary)];
        let mut lambda = DVector::zeros(2);
        for t in 0..50 {
            let p = solver.step().unwrap();
            assert_eq!((p.gamma, p.theta), (1.0, 1.0));
            let f_prev = if t >= 1 { &fs[t - 1] } else { &fs[0] };
            let (x, l) = replay(&inst, &noise, t, &xs, &lambda, &fs[t], f_prev, p.eta, p.tau);
            let st = solver.state();
            assert!((&st.x - &x).amax() <= 1e-12, "t = {t}: {} vs {}", st.x, x);
            assert!((&st.lambda - &l).amax() <= 1e-12, "t = {t}");
            fs.push(sample_operator(&inst, &noise, &st.x, t + 1, Stream::Primary));
            xs.push(st.x.clone());
            lambda = st.lambda.clone();
        }
    }
}

#[test]
fn oracles_are_unbiased_with_bounded_variance() {
    let inst = qc2();
    let x = v(&[0.3, -0.7]);
    let f = inst.operator().eval(&x);
    let g = inst.constraints().values(&x);
    let jac = inst.constraints().jacobian(&x);
    let count = 20_000;
    for shape in [NoiseShape::Gaussian, NoiseShape::BoundedUniform] {
        let noise = StochasticOracleSpec {
            sigma_f: 0.4,
            sigma_g: 0.3,
            sigma_gamma: vec![0.5],
            noise_shape: shape,
            master_seed: 5,
        };
        let (mut sf, mut sg, mut sj) = (DVector::zeros(2), DVector::zeros(1), DMatrix::zeros(2, 1));
        let (mut vf, mut vg, mut vj) = (0.0, 0.0, 0.0);
        for t in 0..count {
            for stream in [Stream::Primary, Stream::Bar] {
                let df = sample_operator(&inst, &noise, &x, t, stream) - &f;
                let (gv, jv) = sample_constraints(&inst, &noise, &x, t, stream);
                let (dg, dj) = (gv - &g, jv - &jac);
                vf += df.norm_squared();
                vg += dg.norm_squared();
                vj += dj.norm_squared();
                sf += df;
                sg += dg;
                sj += dj;
            }
        }
        let k = 2.0 * count as f64;
        // Means within 5 standard errors of zero.
        assert!((sf / k).amax() <= 5.0 * 0.4 / k.sqrt(), "{shape:?} operator bias");
        assert!((sg / k).amax() <= 5.0 * 0.3 / k.sqrt(), "{shape:?} value bias");
        assert!((sj / k).amax() <= 5.0 * 0.5 / k.sqrt(), "{shape:?} jacobian bias");
        // Second moments at most sigma^2 (equal for Gaussian draws).
        for (name, second, sigma) in [
            ("operator", vf / k, 0.4),
            ("value", vg / k, 0.3),
            ("jacobian", vj / k, 0.5),
        ] {
            let s2: f64 = sigma * sigma;
            assert!(second <= s2 * 1.03, "{shape:?} {name}: {second} > {s2}");
            if shape == NoiseShape::Gaussian {
                assert!(second >= s2 * 0.97, "{shape:?} {name}: {second} < {s2}");
            }
        }
    }
}

#[test]
fn draws_depend_only_on_seed_iteration_and_stream() {
    let noise = noisy(NoiseShape::Gaussian, 9);
    let a = noise.operator_noise(3, 17, Stream::Primary).unwrap();
    assert_eq!(a, noise.operator_noise(3, 17, Stream::Primary).unwrap());
    assert_ne!(a, noise.operator_noise(3, 17, Stream::Bar).unwrap());
    assert_ne!(a, noise.operator_noise(3, 18, Stream::Primary).unwrap());
    assert_ne!(a, noise.with_seed(10).operator_noise(3, 17, Stream::Primary).unwrap());
}

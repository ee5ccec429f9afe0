//! Shared generators and independent oracles for the integration suite.
//!
//! Everything here is deliberately naive: brute-force enumeration and
//! direct simulation stand in as ground truth for the optimized paths
//! under test.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use dempc_core::{BoxSet, DataTrajectory, EmpcConfig, LinearCost, LinearProgram, StateSpace};

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

/// Random stable minimal plant with n <= 4 states and at most two inputs
/// and outputs. Rejection-samples until minimality holds, which for random
/// dense matrices is almost immediate.
pub fn random_minimal_system(rng: &mut ChaCha12Rng) -> StateSpace {
    loop {
        let n = rng.gen_range(1..=4);
        let m = rng.gen_range(1..=2);
        let p = rng.gen_range(1..=2);
        if let Some(sys) = try_random_system(rng, n, m, p) {
            return sys;
        }
    }
}

fn try_random_system(rng: &mut ChaCha12Rng, n: usize, m: usize, p: usize) -> Option<StateSpace> {
    let mut a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let radius = a
        .complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0_f64, f64::max);
    if radius > 1e-12 {
        let target = rng.gen_range(0.3..0.9);
        a *= target / radius;
    }
    let b = DMatrix::from_fn(n, m, |_, _| rng.gen_range(-1.0..1.0));
    let c = DMatrix::from_fn(p, n, |_, _| rng.gen_range(-1.0..1.0));
    let d = DMatrix::zeros(p, m);
    let sys = StateSpace::new(a, b, c, d).ok()?;
    sys.is_minimal().then_some(sys)
}

/// Excited dataset long enough for window-length predictions on `sys`,
/// i.e. with input excitation of order `window + n`.
pub fn excited_data(sys: &StateSpace, window: usize, seed: u64) -> DataTrajectory {
    let order = window + sys.state_dim();
    let samples = (sys.input_dim() + 1) * order + 14;
    let lo = DVector::from_element(sys.input_dim(), -1.0);
    let hi = DVector::from_element(sys.input_dim(), 1.0);
    sys.generate_pe_data(samples, &lo, &hi, seed)
        .expect("data generation for a valid plant")
}

/// Stacks a window as the predictor expects: all input samples first
/// (slot-major), then all output samples.
pub fn stack_window(inputs: &[DVector<f64>], outputs: &[DVector<f64>]) -> DVector<f64> {
    let window = inputs.len();
    let m = inputs[0].len();
    let p = outputs[0].len();
    let mut w = DVector::zeros(window * (m + p));
    for (s, u) in inputs.iter().enumerate() {
        w.rows_mut(s * m, m).copy_from(u);
    }
    for (s, y) in outputs.iter().enumerate() {
        w.rows_mut(window * m + s * p, p).copy_from(y);
    }
    w
}

/// Inverse of [`stack_window`].
pub fn split_stacked(
    w: &DVector<f64>,
    window: usize,
    m: usize,
    p: usize,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let inputs = (0..window)
        .map(|s| DVector::from(w.rows(s * m, m).clone_owned()))
        .collect();
    let outputs = (0..window)
        .map(|s| DVector::from(w.rows(window * m + s * p, p).clone_owned()))
        .collect();
    (inputs, outputs)
}

/// Least-squares coefficients explaining `target` through `predictor`.
pub fn least_squares(predictor: &DMatrix<f64>, target: &DVector<f64>) -> DVector<f64> {
    let svd = predictor.clone().svd(true, true);
    let cutoff = 1e-12 * svd.singular_values.max().max(1e-300);
    svd.solve(target, cutoff).expect("least squares is defined")
}

/// Exhaustive minimum objective over all basic solutions of an all-finite
/// box-constrained equality-form LP; None when no basis is feasible.
/// Ground truth for the simplex on small instances.
pub fn brute_force_vertex_minimum(lp: &LinearProgram) -> Option<f64> {
    let nv = lp.num_vars();
    let nr = lp.num_rows();
    assert!(nr >= 1 && nr <= nv, "oracle expects a nondegenerate shape");
    assert!(nv <= 16, "oracle is exhaustive; keep instances small");
    for j in 0..nv {
        let (lo, hi) = lp.bounds(j);
        assert!(
            lo.is_finite() && hi.is_finite(),
            "vertex enumeration needs finite boxes"
        );
    }

    let a = lp.dense_matrix();
    let rhs = DVector::from_column_slice(lp.rhs());
    let mut best: Option<f64> = None;
    let mut basis: Vec<usize> = (0..nr).collect();
    loop {
        scan_basis(lp, &a, &rhs, &basis, &mut best);
        if !next_combination(&mut basis, nv) {
            break;
        }
    }
    best
}

fn scan_basis(
    lp: &LinearProgram,
    a: &DMatrix<f64>,
    rhs: &DVector<f64>,
    basis: &[usize],
    best: &mut Option<f64>,
) {
    let nv = lp.num_vars();
    let nr = basis.len();
    let nonbasic: Vec<usize> = (0..nv).filter(|j| !basis.contains(j)).collect();
    let mut a_b = DMatrix::zeros(nr, nr);
    for (col, &j) in basis.iter().enumerate() {
        a_b.set_column(col, &a.column(j));
    }
    let lu = a_b.clone().full_piv_lu();
    if !lu.is_invertible() {
        return;
    }

    for mask in 0..(1_u64 << nonbasic.len()) {
        let mut rhs_eff = rhs.clone();
        let mut x = vec![0.0; nv];
        for (bit, &j) in nonbasic.iter().enumerate() {
            let (lo, hi) = lp.bounds(j);
            let v = if mask >> bit & 1 == 0 { lo } else { hi };
            x[j] = v;
            rhs_eff -= a.column(j) * v;
        }
        let Some(x_b) = lu.solve(&rhs_eff) else {
            continue;
        };
        if (&a_b * &x_b - &rhs_eff).amax() > 1e-8 * (1.0 + rhs_eff.amax()) {
            continue;
        }
        let mut feasible = true;
        for (col, &j) in basis.iter().enumerate() {
            let (lo, hi) = lp.bounds(j);
            let tol = 1e-9 * (1.0 + x_b[col].abs());
            if x_b[col] < lo - tol || x_b[col] > hi + tol {
                feasible = false;
                break;
            }
            x[j] = x_b[col];
        }
        if !feasible {
            continue;
        }
        let objective: f64 = lp.costs().iter().zip(x.iter()).map(|(c, v)| c * v).sum();
        if best.map_or(true, |b| objective < b) {
            *best = Some(objective);
        }
    }
}

/// Advances `combo` to the next lexicographic k-combination of 0..n.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Random equality-form LP over finite boxes, feasible by construction:
/// the right-hand side is the image of an interior point.
pub fn random_feasible_box_lp(rng: &mut ChaCha12Rng) -> LinearProgram {
    let nv = rng.gen_range(3..=9);
    let nr = rng.gen_range(1..=3.min(nv - 1));
    let mut lp = LinearProgram::new();
    let mut interior = Vec::with_capacity(nv);
    for j in 0..nv {
        let lo = rng.gen_range(-3.0..0.0);
        let hi = rng.gen_range(0.1..3.0);
        let cost = rng.gen_range(-1.0..1.0);
        lp.add_var(format!("x{j}"), lo, hi, cost);
        interior.push(lo + rng.gen_range(0.2..0.8) * (hi - lo));
    }
    for _ in 0..nr {
        let coeffs: Vec<(usize, f64)> = (0..nv).map(|j| (j, rng.gen_range(-2.0..2.0))).collect();
        let rhs: f64 = coeffs.iter().map(|&(j, c)| c * interior[j]).sum();
        lp.add_eq(&coeffs, rhs);
    }
    lp
}

/// Randomized feasible closed-loop scenario: a random minimal plant, a
/// random linear cost, boxes wide enough that every excited response fits,
/// and a rest initial window so the zero equilibrium is always available.
pub struct RandomScenario {
    pub sys: StateSpace,
    pub data: DataTrajectory,
    pub cfg: EmpcConfig,
    pub cost: LinearCost,
}

pub fn random_feasible_scenario(rng: &mut ChaCha12Rng, seed: u64) -> RandomScenario {
    use dempc_core::CostMode;

    let sys = random_minimal_system(rng);
    let n = sys.state_dim();
    let m = sys.input_dim();
    let p = sys.output_dim();
    let horizon = n + rng.gen_range(4..=8);

    let cost = LinearCost::new(
        DVector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0)),
        DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0)),
    )
    .unwrap();

    let input_half = rng.gen_range(1.0..2.0);
    // The impulse-response l1 gain bounds every output reachable from rest
    // under the input box, so a box sized by it can never go active.
    let mut reach = DMatrix::identity(n, n);
    let mut gain = sys.d().map(f64::abs);
    for _ in 0..200 {
        gain += (sys.c() * &reach * sys.b()).map(f64::abs);
        reach = sys.a() * reach;
    }
    let output_half = 1.0 + 2.0 * input_half * gain.column_sum().max();

    let order = horizon + 2 * n + 1;
    let samples = (m + 1) * order + 14;
    let lo = DVector::from_element(m, -input_half);
    let hi = DVector::from_element(m, input_half);
    let data = sys.generate_pe_data(samples, &lo, &hi, seed).unwrap();

    let cfg = EmpcConfig::new(
        horizon,
        n,
        10.0,
        BoxSet::symmetric(m, input_half).unwrap(),
        BoxSet::symmetric(p, output_half).unwrap(),
        CostMode::Known(cost.clone()),
    )
    .unwrap();

    RandomScenario {
        sys,
        data,
        cfg,
        cost,
    }
}

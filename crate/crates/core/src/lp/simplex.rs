//! Two-phase revised simplex over bounded variables.
//!
//! Variables live in [lower, upper] with either end possibly infinite; free
//! variables are handled natively (a free nonbasic variable rests at zero),
//! never split into positive/negative parts. Phase one minimizes the sum of
//! per-row artificials, phase two the real objective. The basis inverse is
//! kept explicitly (stored transposed so every hot loop walks contiguous
//! columns), updated by elementary row operations per pivot and rebuilt
//! from scratch periodically and before any verdict.
//!
//! Conditioning is defended on three levels. Direction entries below a
//! relative noise floor never block the ratio test, so rounding noise is
//! not pivoted on. A column whose best blocking pivot is tiny against the
//! direction's scale is set aside for the round ([`PIVOT_ACCEPT`]): one
//! such pivot multiplies the basis condition number by its growth factor
//! `amax(w)/|w_r|`. And every rebuild recomputes the basic values exactly
//! and checks them against their bounds, so drift in a long eta chain
//! cannot silently carry the walk to an infeasible basis: a failed check
//! abandons the attempt, and the solve restarts with a stricter
//! refactorization schedule ([`ATTEMPTS`]), ending at a rebuild per pivot.
//! Verdicts are only ever reported from a state that survived a fresh
//! factorization.
//!
//! Pricing is Dantzig's rule with lowest-index tie-breaking. A run of
//! [`DEGENERATE_SWITCH`] zero-step pivots switches to Bland's rule, which
//! cannot cycle; any later strict improvement switches back. All choices
//! are index-deterministic: the same problem yields the same pivot path.

use nalgebra::{DMatrix, DVector};

use super::{LinearProgram, LpOptions, LpResult, LpStatus};

/// Escalation ladder: (pivots between refactorizations, pivot magnitude
/// that forces an early one). Ill-conditioned instances walk down until
/// the inverse is rebuilt on every pivot.
const ATTEMPTS: [(usize, f64); 3] = [(64, 1e-6), (8, 1e-5), (1, f64::INFINITY)];
const DEGENERATE_SWITCH: usize = 64;
/// Direction entries below this fraction of the direction's own scale are
/// treated as zero in the ratio test: such entries are rounding noise, and
/// pivoting on one multiplies the basis condition number by the growth
/// factor `amax(w) / |w_r|`.
const RATIO_EPS: f64 = 1e-9;
/// Minimum acceptable blocking pivot, as a fraction of the direction's
/// scale. A column whose best pivot falls below this is set aside for the
/// current pricing round and another column is tried; columns this
/// ill-aligned with the basis are only pivoted when nothing else improves.
const PIVOT_ACCEPT: f64 = 1e-6;
/// Step lengths below this count as degenerate.
const DEGENERATE_STEP: f64 = 1e-12;
/// Post-refactor bound violations beyond this scale-relative slack mean
/// the walk went through a bad inverse and the attempt must be abandoned.
const FEAS_REVEAL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, PartialEq)]
enum Location {
    Basic(usize),
    AtLower,
    AtUpper,
    /// Nonbasic free variable, resting at zero.
    FreeAtZero,
}

enum PhaseEnd {
    Converged,
    Unbounded,
    IterationCap,
    SingularBasis,
    /// A rebuild exposed basic values outside their bounds: the eta chain
    /// had degraded and the walk is untrustworthy.
    LostFeasibility,
}

struct Simplex {
    nrows: usize,
    nstruct: usize,
    ntotal: usize,
    /// nrows x ntotal column store (structurals then artificials).
    cols: DMatrix<f64>,
    rhs: DVector<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    /// Phase-two objective over structural variables.
    struct_costs: Vec<f64>,
    x: Vec<f64>,
    location: Vec<Location>,
    basis: Vec<usize>,
    /// Transpose of the basis inverse.
    binv_t: DMatrix<f64>,
    scratch: Vec<f64>,
    pivots_since_refactor: usize,
    iterations: usize,
    degenerate_streak: usize,
    bland: bool,
    feas_tol: f64,
    opt_tol: f64,
    max_iterations: usize,
    refactor_period: usize,
    /// Pivot magnitudes below this force an immediate refactorization.
    pivot_refactor: f64,
}

pub(super) fn solve(lp: &LinearProgram, options: &LpOptions) -> LpResult {
    let mut spent = 0;
    for (attempt, &(period, pivot_refactor)) in ATTEMPTS.iter().enumerate() {
        let mut simplex = Simplex::new(lp, options, period, pivot_refactor);
        let status = simplex.run();
        spent += simplex.iterations;
        if status != LpStatus::NumericalFailure || attempt == ATTEMPTS.len() - 1 {
            let objective = match status {
                LpStatus::Optimal => simplex.structural_objective(),
                _ => f64::NAN,
            };
            let x = match status {
                LpStatus::Optimal => {
                    Some(DVector::from_column_slice(&simplex.x[..simplex.nstruct]))
                }
                _ => None,
            };
            return LpResult {
                status,
                x,
                objective,
                iterations: spent,
            };
        }
    }
    unreachable!("the final attempt always returns")
}

impl Simplex {
    fn new(
        lp: &LinearProgram,
        options: &LpOptions,
        refactor_period: usize,
        pivot_refactor: f64,
    ) -> Self {
        let nrows = lp.num_rows();
        let nstruct = lp.num_vars();
        let ntotal = nstruct + nrows;

        let mut cols = DMatrix::zeros(nrows, ntotal);
        for i in 0..nrows {
            for &(j, v) in lp.row(i) {
                cols[(i, j)] += v;
            }
        }
        let rhs = DVector::from_column_slice(lp.rhs());

        let mut lower = Vec::with_capacity(ntotal);
        let mut upper = Vec::with_capacity(ntotal);
        let mut x = Vec::with_capacity(ntotal);
        let mut location = Vec::with_capacity(ntotal);
        for j in 0..nstruct {
            let (lo, hi) = lp.bounds(j);
            lower.push(lo);
            upper.push(hi);
            if lo.is_finite() {
                x.push(lo);
                location.push(Location::AtLower);
            } else if hi.is_finite() {
                x.push(hi);
                location.push(Location::AtUpper);
            } else {
                x.push(0.0);
                location.push(Location::FreeAtZero);
            }
        }

        // Residual the artificial variables must absorb.
        let mut residual = rhs.clone();
        for (j, &v) in x.iter().enumerate().take(nstruct) {
            if v != 0.0 {
                residual -= cols.column(j) * v;
            }
        }
        let mut basis = Vec::with_capacity(nrows);
        let mut binv_t = DMatrix::zeros(nrows, nrows);
        for i in 0..nrows {
            let sign = if residual[i] >= 0.0 { 1.0 } else { -1.0 };
            cols[(i, nstruct + i)] = sign;
            lower.push(0.0);
            upper.push(f64::INFINITY);
            x.push(residual[i].abs());
            location.push(Location::Basic(i));
            basis.push(nstruct + i);
            binv_t[(i, i)] = sign;
        }

        let max_iterations = options
            .max_iterations
            .unwrap_or(1000 + 50 * (nrows + ntotal));
        Self {
            nrows,
            nstruct,
            ntotal,
            cols,
            rhs,
            lower,
            upper,
            cost: vec![0.0; ntotal],
            struct_costs: lp.costs().to_vec(),
            x,
            location,
            basis,
            binv_t,
            scratch: vec![0.0; nrows],
            pivots_since_refactor: 0,
            iterations: 0,
            degenerate_streak: 0,
            bland: false,
            feas_tol: options.feas_tol,
            opt_tol: options.opt_tol,
            max_iterations,
            refactor_period,
            pivot_refactor,
        }
    }

    fn run(&mut self) -> LpStatus {
        // Phase one: drive the artificial variables to zero.
        if self.nrows > 0 {
            for j in self.nstruct..self.ntotal {
                self.cost[j] = 1.0;
            }
            // A converged phase only counts once it survives a rebuilt
            // inverse; rounding in long eta chains can fake convergence.
            let mut rounds = 0;
            loop {
                match self.run_phase() {
                    PhaseEnd::Converged => {
                        if !matches!(self.refactor(), Ok(true)) {
                            return LpStatus::NumericalFailure;
                        }
                        if self.entering_candidate(None).is_none() {
                            break;
                        }
                    }
                    // The artificial sum is bounded below by zero, so an
                    // unbounded ray here is a numerical artifact.
                    PhaseEnd::Unbounded
                    | PhaseEnd::SingularBasis
                    | PhaseEnd::IterationCap
                    | PhaseEnd::LostFeasibility => {
                        return LpStatus::NumericalFailure;
                    }
                }
                rounds += 1;
                if rounds > 4 {
                    return LpStatus::NumericalFailure;
                }
            }
            let infeasibility: f64 = (self.nstruct..self.ntotal)
                .map(|j| self.x[j].max(0.0))
                .sum();
            let inf_tol = 100.0 * self.feas_tol * (1.0 + self.rhs.amax());
            if infeasibility > inf_tol {
                return LpStatus::Infeasible;
            }
            if !self.retire_artificials() {
                return LpStatus::NumericalFailure;
            }
        }

        // Phase two: real objective, artificials frozen at zero.
        self.cost[..self.nstruct].copy_from_slice(&self.struct_costs);
        for j in self.nstruct..self.ntotal {
            self.cost[j] = 0.0;
        }
        self.degenerate_streak = 0;
        self.bland = false;

        let mut rounds = 0;
        loop {
            match self.run_phase() {
                PhaseEnd::Converged => {
                    if !matches!(self.refactor(), Ok(true)) {
                        return LpStatus::NumericalFailure;
                    }
                    if self.entering_candidate(None).is_none() {
                        break;
                    }
                }
                PhaseEnd::Unbounded => {
                    // Trust the ray only when the inverse is fresh.
                    if self.pivots_since_refactor == 0 {
                        return LpStatus::Unbounded;
                    }
                    if !matches!(self.refactor(), Ok(true)) {
                        return LpStatus::NumericalFailure;
                    }
                }
                PhaseEnd::SingularBasis | PhaseEnd::IterationCap | PhaseEnd::LostFeasibility => {
                    return LpStatus::NumericalFailure;
                }
            }
            rounds += 1;
            if rounds > 4 {
                return LpStatus::NumericalFailure;
            }
        }
        self.verify()
    }

    /// Pivots until the current phase objective is optimal.
    fn run_phase(&mut self) -> PhaseEnd {
        let mut banned = vec![false; self.ntotal];
        loop {
            if self.iterations >= self.max_iterations {
                return PhaseEnd::IterationCap;
            }
            if self.pivots_since_refactor >= self.refactor_period {
                match self.refactor() {
                    Err(()) => return PhaseEnd::SingularBasis,
                    Ok(false) => return PhaseEnd::LostFeasibility,
                    Ok(true) => {}
                }
            }

            // Pick an improving column whose blocking pivot is sound;
            // columns rejected for pivot quality come back into play only
            // when no clean candidate is left.
            banned.fill(false);
            let mut any_banned = false;
            let (entering, direction, w, step, blocking) = loop {
                let candidate = self.entering_candidate(Some(&banned)).or_else(|| {
                    if any_banned {
                        self.entering_candidate(None)
                    } else {
                        None
                    }
                });
                let Some((entering, direction)) = candidate else {
                    return PhaseEnd::Converged;
                };
                let w = self.ftran(entering);
                let (step, blocking) = self.ratio_test(entering, direction, &w);
                let acceptable = match blocking {
                    Some((row, _)) => {
                        banned[entering] || w[row].abs() >= PIVOT_ACCEPT * (1.0 + w.amax())
                    }
                    // Bound flips and rays involve no pivot element.
                    None => true,
                };
                if acceptable {
                    break (entering, direction, w, step, blocking);
                }
                banned[entering] = true;
                any_banned = true;
            };
            self.iterations += 1;

            if step.is_infinite() {
                return PhaseEnd::Unbounded;
            }

            match blocking {
                None => self.bound_flip(entering, direction, step, &w),
                Some((row, to_upper)) => {
                    if let Some(end) = self.pivot(entering, direction, step, row, to_upper, &w) {
                        return end;
                    }
                }
            }

            if step.abs() <= DEGENERATE_STEP {
                self.degenerate_streak += 1;
                if self.degenerate_streak >= DEGENERATE_SWITCH {
                    self.bland = true;
                }
            } else {
                self.degenerate_streak = 0;
                self.bland = false;
            }
        }
    }

    /// Most negative effective reduced cost (Dantzig) or first eligible
    /// index (Bland), skipping columns in `banned`. Returns the entering
    /// variable and its direction of increase.
    fn entering_candidate(&self, banned: Option<&[bool]>) -> Option<(usize, f64)> {
        let pi = self.btran_basis_costs();
        let pi = pi.as_slice();
        let cols = self.cols.as_slice();
        let scale = 1.0 + self.cost.iter().fold(0.0_f64, |acc, c| acc.max(c.abs()));
        let threshold = self.opt_tol * scale;

        let mut best: Option<(f64, usize, f64)> = None;
        for j in 0..self.ntotal {
            if matches!(self.location[j], Location::Basic(_)) {
                continue;
            }
            if self.lower[j] >= self.upper[j] {
                continue; // fixed variables never move
            }
            if banned.is_some_and(|b| b[j]) {
                continue;
            }
            let col = &cols[j * self.nrows..(j + 1) * self.nrows];
            let mut dot = 0.0;
            for (a, b) in col.iter().zip(pi.iter()) {
                dot += a * b;
            }
            let reduced = self.cost[j] - dot;
            let candidate = match self.location[j] {
                Location::AtLower if reduced < -threshold => Some((-reduced, 1.0)),
                Location::AtUpper if reduced > threshold => Some((reduced, -1.0)),
                Location::FreeAtZero if reduced.abs() > threshold => {
                    Some((reduced.abs(), if reduced < 0.0 { 1.0 } else { -1.0 }))
                }
                _ => None,
            };
            let Some((score, direction)) = candidate else {
                continue;
            };
            if self.bland {
                return Some((j, direction));
            }
            if best.map_or(true, |(s, _, _)| score > s) {
                best = Some((score, j, direction));
            }
        }
        best.map(|(_, j, direction)| (j, direction))
    }

    /// Simplex multipliers for the current phase costs: pi = binv' c_B.
    fn btran_basis_costs(&self) -> DVector<f64> {
        let c_b = DVector::from_iterator(self.nrows, self.basis.iter().map(|&j| self.cost[j]));
        // binv_t * c_B  ==  (binv)' c_B
        &self.binv_t * c_b
    }

    /// Basis-space image of a column: w = binv * a_j.
    fn ftran(&self, j: usize) -> DVector<f64> {
        let cols = self.cols.as_slice();
        let binv_t = self.binv_t.as_slice();
        let col = &cols[j * self.nrows..(j + 1) * self.nrows];
        DVector::from_iterator(
            self.nrows,
            (0..self.nrows).map(|r| {
                let row = &binv_t[r * self.nrows..(r + 1) * self.nrows];
                let mut dot = 0.0;
                for (a, b) in row.iter().zip(col.iter()) {
                    dot += a * b;
                }
                dot
            }),
        )
    }

    /// Maximum step for the entering variable and the first blocking basic
    /// variable, if any. `None` blocking with a finite step means the
    /// entering variable reaches its own opposite bound (a bound flip).
    fn ratio_test(
        &self,
        entering: usize,
        direction: f64,
        w: &DVector<f64>,
    ) -> (f64, Option<(usize, bool)>) {
        let own_range = self.upper[entering] - self.lower[entering];
        let zero_tol = RATIO_EPS * (1.0 + if self.nrows > 0 { w.amax() } else { 0.0 });
        let mut best_step = f64::INFINITY;
        let mut blocking: Option<(usize, bool, f64)> = None; // row, hits upper, |pivot|

        for r in 0..self.nrows {
            let delta = -direction * w[r];
            if delta.abs() <= zero_tol {
                continue;
            }
            let i = self.basis[r];
            let (bound, to_upper) = if delta > 0.0 {
                (self.upper[i], true)
            } else {
                (self.lower[i], false)
            };
            if !bound.is_finite() {
                continue;
            }
            let step = ((bound - self.x[i]) / delta).max(0.0);
            let tie = best_step.is_finite()
                && (step - best_step).abs() <= 1e-10 * (1.0 + best_step.abs());
            let better = if tie {
                match &blocking {
                    // Prefer the larger pivot for stability; break exact
                    // ties by variable index so runs are reproducible.
                    Some((row, _, mag)) => {
                        if self.bland {
                            i < self.basis[*row]
                        } else {
                            delta.abs() > *mag || (delta.abs() == *mag && i < self.basis[*row])
                        }
                    }
                    None => true,
                }
            } else {
                step < best_step
            };
            if better {
                best_step = best_step.min(step);
                blocking = Some((r, to_upper, delta.abs()));
            }
        }

        if own_range.is_finite() && own_range <= best_step {
            return (own_range, None);
        }
        match blocking {
            Some((row, to_upper, _)) => (best_step, Some((row, to_upper))),
            None => (f64::INFINITY, None),
        }
    }

    /// Entering variable jumps to its opposite bound; the basis is unchanged.
    fn bound_flip(&mut self, entering: usize, direction: f64, step: f64, w: &DVector<f64>) {
        for r in 0..self.nrows {
            let i = self.basis[r];
            self.x[i] -= direction * step * w[r];
        }
        if direction > 0.0 {
            self.x[entering] = self.upper[entering];
            self.location[entering] = Location::AtUpper;
        } else {
            self.x[entering] = self.lower[entering];
            self.location[entering] = Location::AtLower;
        }
    }

    /// Standard basis exchange at `row`. Returns the abnormal phase end
    /// when the pivot is degenerate beyond repair or a forced rebuild
    /// discredits the walk.
    fn pivot(
        &mut self,
        entering: usize,
        direction: f64,
        step: f64,
        row: usize,
        to_upper: bool,
        w: &DVector<f64>,
    ) -> Option<PhaseEnd> {
        let pivot = w[row];
        if pivot.abs() <= RATIO_EPS * (1.0 + w.amax()) {
            return Some(PhaseEnd::SingularBasis);
        }
        for r in 0..self.nrows {
            let i = self.basis[r];
            self.x[i] -= direction * step * w[r];
        }
        self.x[entering] += direction * step;

        let leaving = self.basis[row];
        self.x[leaving] = if to_upper {
            self.upper[leaving]
        } else {
            self.lower[leaving]
        };
        self.location[leaving] = if to_upper {
            Location::AtUpper
        } else {
            Location::AtLower
        };
        self.basis[row] = entering;
        self.location[entering] = Location::Basic(row);

        self.apply_eta(row, w);
        self.pivots_since_refactor += 1;
        if pivot.abs() < self.pivot_refactor {
            // Small pivots poison the eta chain; rebuild at once.
            return match self.refactor() {
                Err(()) => Some(PhaseEnd::SingularBasis),
                Ok(false) => Some(PhaseEnd::LostFeasibility),
                Ok(true) => None,
            };
        }
        None
    }

    /// Rank-one update of the transposed inverse after a basis exchange:
    /// new binv = E * binv with E the eta matrix for (row, w). On the
    /// transpose these are column operations, contiguous in memory.
    fn apply_eta(&mut self, row: usize, w: &DVector<f64>) {
        let m = self.nrows;
        let pivot = w[row];
        let data = self.binv_t.as_mut_slice();
        {
            let col = &mut data[row * m..(row + 1) * m];
            let inv = 1.0 / pivot;
            for v in col.iter_mut() {
                *v *= inv;
            }
            self.scratch.copy_from_slice(col);
        }
        for i in 0..m {
            if i == row {
                continue;
            }
            let factor = w[i];
            if factor == 0.0 {
                continue;
            }
            let col = &mut data[i * m..(i + 1) * m];
            for (v, s) in col.iter_mut().zip(self.scratch.iter()) {
                *v -= factor * s;
            }
        }
    }

    /// Rebuilds the inverse from the basis columns and recomputes the basic
    /// values from the bound-resting nonbasics. `Ok(true)` means the exact
    /// values still satisfy their bounds; `Ok(false)` means the preceding
    /// eta chain had drifted and carried the walk somewhere infeasible.
    fn refactor(&mut self) -> Result<bool, ()> {
        if self.nrows == 0 {
            self.pivots_since_refactor = 0;
            return Ok(true);
        }
        let mut b = DMatrix::zeros(self.nrows, self.nrows);
        for (k, &j) in self.basis.iter().enumerate() {
            b.column_mut(k).copy_from(&self.cols.column(j));
        }
        let Some(binv) = b.try_inverse() else {
            return Err(());
        };
        self.binv_t = binv.transpose();

        let mut effective = self.rhs.clone();
        for j in 0..self.ntotal {
            if matches!(self.location[j], Location::Basic(_)) {
                continue;
            }
            let v = self.x[j];
            if v != 0.0 {
                effective -= self.cols.column(j) * v;
            }
        }
        let xb = self.binv_t.tr_mul(&effective);
        for r in 0..self.nrows {
            self.x[self.basis[r]] = xb[r];
        }
        self.pivots_since_refactor = 0;

        for r in 0..self.nrows {
            let i = self.basis[r];
            let v = self.x[i];
            let slack = FEAS_REVEAL_TOL * (1.0 + v.abs());
            if v < self.lower[i] - slack || v > self.upper[i] + slack {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Swaps still-basic artificials for structural columns; rows that
    /// admit no replacement are redundant and keep their artificial frozen
    /// at zero. Nonbasic artificials are frozen outright.
    fn retire_artificials(&mut self) -> bool {
        for row in 0..self.nrows {
            if self.basis[row] < self.nstruct {
                continue;
            }
            let mut replacement: Option<usize> = None;
            {
                let binv_t = self.binv_t.as_slice();
                let pivot_row = &binv_t[row * self.nrows..(row + 1) * self.nrows];
                let cols = self.cols.as_slice();
                for j in 0..self.nstruct {
                    if matches!(self.location[j], Location::Basic(_)) {
                        continue;
                    }
                    // A fixed variable in the basis would have its exact
                    // pinned value replaced by a recomputed one; keep the
                    // zero artificial instead.
                    if self.lower[j] >= self.upper[j] {
                        continue;
                    }
                    let col = &cols[j * self.nrows..(j + 1) * self.nrows];
                    let mut dot = 0.0;
                    for (a, b) in col.iter().zip(pivot_row.iter()) {
                        dot += a * b;
                    }
                    if dot.abs() > 1e-7 {
                        replacement = Some(j);
                        break;
                    }
                }
            }
            if let Some(j) = replacement {
                let w = self.ftran(j);
                let artificial = self.basis[row];
                // Zero-step exchange: values are already feasible.
                self.x[artificial] = 0.0;
                self.location[artificial] = Location::AtLower;
                self.upper[artificial] = 0.0;
                self.basis[row] = j;
                self.location[j] = Location::Basic(row);
                self.apply_eta(row, &w);
                self.pivots_since_refactor += 1;
            } else {
                self.upper[self.basis[row]] = 0.0;
            }
        }
        for j in self.nstruct..self.ntotal {
            if !matches!(self.location[j], Location::Basic(_)) {
                self.x[j] = 0.0;
                self.location[j] = Location::AtLower;
                self.upper[j] = 0.0;
            }
        }
        matches!(self.refactor(), Ok(true))
    }

    /// Final feasibility certificate: equality residual within `feas_tol`
    /// (after iterative refinement if needed) and bounds within `feas_tol`.
    fn verify(&mut self) -> LpStatus {
        for _ in 0..4 {
            let residual = self.residual_inf_norm();
            if residual <= self.feas_tol {
                break;
            }
            // One refinement step: correct basic values by binv * residual.
            let r = self.residual_vector();
            let correction = self.binv_t.tr_mul(&r);
            for row in 0..self.nrows {
                self.x[self.basis[row]] += correction[row];
            }
        }
        if self.residual_inf_norm() > self.feas_tol {
            return LpStatus::NumericalFailure;
        }
        for j in 0..self.ntotal {
            let v = self.x[j];
            // Absolute near zero, relative against large bounds: a basic
            // variable resting on its bound is only known to the accuracy
            // of the recomputed basic solution.
            let lo_tol = self.feas_tol * (1.0 + self.lower[j].abs());
            let hi_tol = self.feas_tol * (1.0 + self.upper[j].abs());
            if v < self.lower[j] - lo_tol || v > self.upper[j] + hi_tol {
                return LpStatus::NumericalFailure;
            }
        }
        LpStatus::Optimal
    }

    fn residual_vector(&self) -> DVector<f64> {
        let mut r = self.rhs.clone();
        for j in 0..self.ntotal {
            let v = self.x[j];
            if v != 0.0 {
                r -= self.cols.column(j) * v;
            }
        }
        r
    }

    fn residual_inf_norm(&self) -> f64 {
        if self.nrows == 0 {
            return 0.0;
        }
        self.residual_vector().amax()
    }

    fn structural_objective(&self) -> f64 {
        (0..self.nstruct)
            .map(|j| self.struct_costs[j] * self.x[j])
            .sum()
    }
}

//! Projected-gradient solver for small dense box-constrained problems,
//! with optional rate coupling between consecutive variables.
//!
//! Iterates `x ← P(x − α∇f)` with a Barzilai–Borwein trial step and
//! monotone Armijo backtracking along the projection arc. `P` clamps to the
//! box and enforces the rate chains by cyclic pairwise projection followed
//! by one forward clamping sweep, so every returned point is feasible.

use std::cmp::Ordering;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A scalar objective. Implementors may also provide an analytic gradient.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    /// Writes ∇f into `grad` and returns f, or `None` when no analytic
    /// gradient exists.
    fn value_and_gradient(&self, _x: &[f64], _grad: &mut [f64]) -> Option<f64> {
        None
    }
}

impl<F: Fn(&[f64]) -> f64> Objective for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GradientMode {
    /// Central differences with step `max(rel·|x_i|, abs)`.
    FiniteDifference { rel: f64, abs: f64 },
    Supplied,
}

impl Default for GradientMode {
    fn default() -> Self {
        GradientMode::FiniteDifference {
            rel: 1e-4,
            abs: 1e-6,
        }
    }
}

/// `|x[i+1] − x[i]| ≤ max_step` along `indices`; with an anchor, also
/// `|x[indices[0]] − anchor| ≤ max_step`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateChain {
    pub indices: Vec<usize>,
    pub max_step: f64,
    pub anchor: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxProblem {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub rate: Vec<RateChain>,
    pub gradient: GradientMode,
    pub max_iter: usize,
    /// Stop once the projected-gradient norm drops below `tol` times its
    /// value at the starting point.
    pub tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    IterationLimit,
    /// Line search found no decrease; the incumbent is returned.
    Stalled,
    /// Objective non-finite at the start point.
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// ∞-norm of `x − P(x − ∇f)` at the returned point.
    pub residual: f64,
    pub evaluations: usize,
}

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 40;
const PROJECTION_SWEEPS: usize = 50;

impl BoxProblem {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let p = BoxProblem {
            lower,
            upper,
            rate: Vec::new(),
            gradient: GradientMode::default(),
            max_iter: 200,
            tol: 1e-8,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.is_empty() {
            return Err(Error::Config("problem dimension must be at least 1".into()));
        }
        if self.lower.len() != self.upper.len() {
            return Err(Error::LengthMismatch {
                left: self.lower.len(),
                right: self.upper.len(),
            });
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l <= u) {
                return Err(Error::Config(format!("bounds of variable {i} are inverted")));
            }
        }
        for c in &self.rate {
            if !(c.max_step >= 0.0) || c.indices.iter().any(|&i| i >= self.dim()) {
                return Err(Error::Config("malformed rate chain".into()));
            }
        }
        Ok(())
    }

    fn clamp_box(&self, x: &mut [f64]) {
        for ((v, l), u) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*l, *u);
        }
    }

    fn rate_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for c in &self.rate {
            if let (Some(a), Some(&i0)) = (c.anchor, c.indices.first()) {
                worst = worst.max((x[i0] - a).abs() - c.max_step);
            }
            for w in c.indices.windows(2) {
                worst = worst.max((x[w[1]] - x[w[0]]).abs() - c.max_step);
            }
        }
        worst
    }

    /// Maps `x` onto the feasible set in place.
    pub fn project(&self, x: &mut [f64]) {
        self.clamp_box(x);
        if self.rate.is_empty() {
            return;
        }
        for _ in 0..PROJECTION_SWEEPS {
            if self.rate_violation(x) <= 0.0 {
                return;
            }
            for c in &self.rate {
                let r = c.max_step;
                if let (Some(a), Some(&i0)) = (c.anchor, c.indices.first()) {
                    x[i0] = x[i0].clamp(a - r, a + r);
                }
                for w in c.indices.windows(2) {
                    let (i, j) = (w[0], w[1]);
                    let d = x[j] - x[i];
                    if d.abs() > r {
                        let excess = 0.5 * (d.abs() - r) * d.signum();
                        x[i] += excess;
                        x[j] -= excess;
                    }
                }
            }
            self.clamp_box(x);
        }
        // Exact feasibility: walk each chain, clamping to the box intersected
        // with the band around the previous value.
        for c in &self.rate {
            let mut prev = c.anchor;
            for &i in &c.indices {
                let (l, u) = (self.lower[i], self.upper[i]);
                x[i] = match prev {
                    Some(p) => {
                        let (lo, hi) = (l.max(p - c.max_step), u.min(p + c.max_step));
                        if lo <= hi {
                            x[i].clamp(lo, hi)
                        } else {
                            p.clamp(l, u)
                        }
                    }
                    None => x[i].clamp(l, u),
                };
                prev = Some(x[i]);
            }
        }
    }

    pub fn is_feasible(&self, x: &[f64], slack: f64) -> bool {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .all(|((v, l), u)| *v >= l - slack && *v <= u + slack)
            && self.rate_violation(x) <= slack
    }
}

/// Central-difference gradient with per-component step `max(rel·|x_i|, abs)`.
pub fn finite_diff_grad<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    rel: f64,
    abs: f64,
) -> Result<Vec<f64>> {
    if !(rel >= 0.0) || !(abs > 0.0) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let mut g = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        let h = (rel * x[i].abs()).max(abs);
        probe[i] = x[i] + h;
        let fp = obj.value(&probe);
        probe[i] = x[i] - h;
        let fm = obj.value(&probe);
        probe[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFinite(format!("objective near component {i}")));
        }
        g[i] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}

struct Evaluator<'a, O: Objective + ?Sized> {
    obj: &'a O,
    lower: &'a [f64],
    upper: &'a [f64],
    mode: GradientMode,
    count: usize,
}

impl<O: Objective + ?Sized> Evaluator<'_, O> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.count += 1;
        self.obj.value(x)
    }

    fn gradient(&mut self, x: &[f64], f: f64, g: &mut [f64]) -> Option<f64> {
        if let GradientMode::Supplied = self.mode {
            self.count += 1;
            if let Some(v) = self.obj.value_and_gradient(x, g) {
                return Some(v);
            }
        }
        let (rel, abs) = match self.mode {
            GradientMode::FiniteDifference { rel, abs } => (rel, abs),
            GradientMode::Supplied => (1e-4, 1e-6),
        };
        self.count += 2 * x.len();
        box_fd_grad(self.obj, x, f, self.lower, self.upper, rel, abs, g).ok()?;
        Some(f)
    }
}

/// Finite differences that never probe outside the box: central where both
/// neighbours are admissible and finite, one-sided otherwise.
#[allow(clippy::too_many_arguments)]
fn box_fd_grad<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    fx: f64,
    lower: &[f64],
    upper: &[f64],
    rel: f64,
    abs: f64,
    g: &mut [f64],
) -> Result<()> {
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        if lower[i] == upper[i] {
            g[i] = 0.0;
            continue;
        }
        let h = (rel * x[i].abs()).max(abs);
        let mut side = |step: f64| -> Option<f64> {
            let v = x[i] + step;
            if v > upper[i] || v < lower[i] {
                return None;
            }
            probe[i] = v;
            let f = obj.value(&probe);
            probe[i] = x[i];
            f.is_finite().then_some(f)
        };
        let fp = side(h);
        let fm = side(-h);
        g[i] = match (fp, fm) {
            (Some(p), Some(m)) => (p - m) / (2.0 * h),
            (Some(p), None) => (p - fx) / h,
            (None, Some(m)) => (fx - m) / h,
            (None, None) => {
                // box thinner than the step: use its full width
                let (a, b) = (lower[i], upper[i]);
                probe[i] = a;
                let fa = obj.value(&probe);
                probe[i] = b;
                let fb = obj.value(&probe);
                probe[i] = x[i];
                if !fa.is_finite() || !fb.is_finite() {
                    return Err(Error::NonFinite(format!("objective near component {i}")));
                }
                (fb - fa) / (b - a)
            }
        };
    }
    Ok(())
}

fn projected_residual(p: &BoxProblem, x: &[f64], g: &[f64], scratch: &mut [f64]) -> f64 {
    for i in 0..x.len() {
        scratch[i] = x[i] - g[i];
    }
    p.project(scratch);
    x.iter()
        .zip(scratch.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

pub fn solve<O: Objective + ?Sized>(p: &BoxProblem, obj: &O, x0: &[f64]) -> SolveResult {
    let n = p.dim();
    let mut ev = Evaluator {
        obj,
        lower: &p.lower,
        upper: &p.upper,
        mode: p.gradient,
        count: 0,
    };
    let mut x = x0.to_vec();
    if x.len() != n || x.iter().any(|v| !v.is_finite()) {
        return failed(x, 0);
    }
    p.project(&mut x);
    let mut f = ev.value(&x);
    if !f.is_finite() {
        return failed(x, ev.count);
    }
    let mut g = vec![0.0; n];
    match ev.gradient(&x, f, &mut g) {
        Some(v) => f = v,
        None => return failed(x, ev.count),
    }

    let mut scratch = vec![0.0; n];
    let mut residual = projected_residual(p, &x, &g, &mut scratch);
    let target = p.tol * residual;
    let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let width = p
        .lower
        .iter()
        .zip(&p.upper)
        .map(|(l, u)| u - l)
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let mut alpha = if gmax > 0.0 { 0.1 * width / gmax } else { 1.0 };

    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;
    let mut status = SolveStatus::IterationLimit;
    while iterations < p.max_iter {
        if residual <= target || residual == 0.0 {
            status = SolveStatus::Converged;
            break;
        }
        iterations += 1;
        let mut t = alpha;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            for i in 0..n {
                trial[i] = x[i] - t * g[i];
            }
            p.project(&mut trial);
            let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            if decrease >= 0.0 {
                // projection arc collapsed onto x
                break;
            }
            let ft = ev.value(&trial);
            if ft.is_finite() && ft <= f + ARMIJO * decrease {
                accepted = Some(ft);
                break;
            }
            t *= 0.5;
        }
        let Some(ft) = accepted else {
            status = SolveStatus::Stalled;
            break;
        };
        let Some(ft) = ev.gradient(&trial, ft, &mut g_new) else {
            status = SolveStatus::Stalled;
            break;
        };
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let s = trial[i] - x[i];
            let y = g_new[i] - g[i];
            ss += s * s;
            sy += s * y;
        }
        alpha = if sy > 0.0 {
            (ss / sy).clamp(1e-12 * alpha.max(1e-300), 1e12 * alpha.max(1e-300))
        } else {
            2.0 * t
        };
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        f = ft;
        residual = projected_residual(p, &x, &g, &mut scratch);
    }
    if status == SolveStatus::IterationLimit && (residual <= target || residual == 0.0) {
        status = SolveStatus::Converged;
    }
    SolveResult {
        x,
        value: f,
        iterations,
        status,
        residual,
        evaluations: ev.count,
    }
}

fn failed(x: Vec<f64>, evaluations: usize) -> SolveResult {
    SolveResult {
        x,
        value: f64::INFINITY,
        iterations: 0,
        status: SolveStatus::Failed,
        residual: f64::INFINITY,
        evaluations,
    }
}

/// `count` starting points: the `preferred` points in order, then the
/// projected origin and the box midpoint, then seeded uniform draws from the
/// box. Duplicates are replaced by draws.
pub fn default_starts(p: &BoxProblem, preferred: &[Vec<f64>], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut c: Vec<f64> = p
            .lower
            .iter()
            .zip(&p.upper)
            .map(|(l, u)| if l < u { rng.gen_range(*l..*u) } else { *l })
            .collect();
        p.project(&mut c);
        c
    };
    let mut candidates: Vec<Vec<f64>> = preferred.to_vec();
    candidates.push(vec![0.0; p.dim()]);
    candidates.push(
        p.lower
            .iter()
            .zip(&p.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect(),
    );
    let degenerate = p.lower.iter().zip(&p.upper).all(|(l, u)| l == u);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    let mut candidates = candidates.into_iter();
    while out.len() < count {
        let mut c = match candidates.next() {
            Some(mut c) => {
                p.project(&mut c);
                c
            }
            None => draw(&mut rng),
        };
        if !degenerate && out.contains(&c) {
            c = draw(&mut rng);
        }
        out.push(c);
    }
    out
}

/// Total order used to pick the best of several runs: lower objective
/// first, ties broken lexicographically on the argument.
pub fn compare_results(a: &SolveResult, b: &SolveResult) -> Ordering {
    a.value.total_cmp(&b.value).then_with(|| {
        a.x.iter()
            .zip(&b.x)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// Solves from every start and returns all results, best first.
pub fn solve_multistart<O: Objective + ?Sized>(
    p: &BoxProblem,
    obj: &O,
    starts: &[Vec<f64>],
) -> Vec<SolveResult> {
    let mut all: Vec<SolveResult> = starts.iter().map(|s| solve(p, obj, s)).collect();
    all.sort_by(compare_results);
    all
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad(x: &[f64]) -> f64 {
        (x[0] - 3.0).powi(2)
    }

    #[test]
    fn interior_quadratic() {
        let p = BoxProblem::new(vec![0.0], vec![10.0]).unwrap();
        let r = solve(&p, &quad, &[0.0]);
        assert!((r.x[0] - 3.0).abs() < 1e-6, "{r:?}");
        assert_eq!(r.status, SolveStatus::Converged);
    }

    #[test]
    fn active_bound_quadratic() {
        let p = BoxProblem::new(vec![4.0], vec![10.0]).unwrap();
        let r = solve(&p, &quad, &[7.0]);
        assert_eq!(r.x[0], 4.0);
    }

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn rosenbrock_reaches_valley_floor() {
        // A 401×401 grid over the box puts the minimum at (1, 1) with f = 0.
        let grid_min = (0..=400)
            .flat_map(|i| (0..=400).map(move |j| (i, j)))
            .map(|(i, j)| rosenbrock(&[-2.0 + 0.01 * i as f64, -2.0 + 0.01 * j as f64]))
            .fold(f64::INFINITY, f64::min);
        assert!(grid_min < 1e-12);
        let mut p = BoxProblem::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
        p.max_iter = 5000;
        p.tol = 1e-12;
        let r = solve(&p, &rosenbrock, &[-1.2, 1.0]);
        assert!(r.value < 1e-4, "{r:?}");
    }

    #[test]
    fn fd_gradient_of_linear_is_exact() {
        let a = [1.5, -2.0, 0.25];
        let f = |x: &[f64]| a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
        let g = finite_diff_grad(&f, &[0.3, 2.0, -1.0], 1e-4, 1e-6).unwrap();
        for (gi, ai) in g.iter().zip(a) {
            assert!((gi - ai).abs() < 1e-9);
        }
    }

    #[test]
    fn fd_gradient_zero_at_symmetry_point() {
        let f = |x: &[f64]| (x[0] - 1.0).powi(4) + x[1] * x[1] * x[0];
        let g = finite_diff_grad(&f, &[1.0, 0.0], 1e-4, 1e-6).unwrap();
        assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12, "{g:?}");
    }

    #[test]
    fn fd_gradient_names_bad_component() {
        let f = |x: &[f64]| if x[1] > 0.5 { f64::NAN } else { x[0] };
        let e = finite_diff_grad(&f, &[0.0, 0.5], 0.0, 1e-3).unwrap_err();
        assert!(e.to_string().contains("component 1"), "{e}");
    }

    #[test]
    fn nonfinite_start_fails() {
        let p = BoxProblem::new(vec![0.0], vec![1.0]).unwrap();
        let r = solve(&p, &|_: &[f64]| f64::NAN, &[0.5]);
        assert_eq!(r.status, SolveStatus::Failed);
    }

    #[test]
    fn rate_projection_is_feasible() {
        let mut p = BoxProblem::new(vec![0.0; 6], vec![10.0; 6]).unwrap();
        p.rate.push(RateChain {
            indices: vec![0, 1, 2, 3, 4, 5],
            max_step: 1.0,
            anchor: Some(2.0),
        });
        let mut x = vec![9.0, 0.0, 9.0, 0.0, 9.0, 0.0];
        p.project(&mut x);
        assert!(p.is_feasible(&x, 0.0), "{x:?}");
        let before = x.clone();
        p.project(&mut x);
        assert_eq!(x, before);
    }

    #[test]
    fn rate_constrained_tracking() {
        // Track a jump from 0 to 10 with steps limited to 2.
        let mut p = BoxProblem::new(vec![-20.0; 8], vec![20.0; 8]).unwrap();
        p.rate.push(RateChain {
            indices: (0..8).collect(),
            max_step: 2.0,
            anchor: Some(0.0),
        });
        let f = |x: &[f64]| x.iter().map(|v| (v - 10.0).powi(2)).sum::<f64>();
        let r = solve(&p, &f, &[0.0; 8]);
        assert!(p.is_feasible(&r.x, 0.0));
        let expected = [2.0, 4.0, 6.0, 8.0, 10.0, 10.0, 10.0, 10.0];
        for (a, b) in r.x.iter().zip(expected) {
            assert!((a - b).abs() < 1e-3, "{:?}", r.x);
        }
    }

    #[test]
    fn collapsed_box_returns_the_point() {
        let p = BoxProblem::new(vec![2.5, -1.0], vec![2.5, -1.0]).unwrap();
        let r = solve(&p, &|x: &[f64]| x[0] * x[1], &[0.0, 0.0]);
        assert_eq!(r.x, vec![2.5, -1.0]);
        assert_eq!(r.status, SolveStatus::Converged);
    }

    #[test]
    fn multistart_dedupes_and_orders() {
        let p = BoxProblem::new(vec![-5.0], vec![5.0]).unwrap();
        let starts = default_starts(&p, &[vec![-5.0]], 4, 1);
        assert_eq!(starts.len(), 4);
        assert_eq!(starts[0], vec![-5.0]);
        assert_eq!(starts[1], vec![0.0]);
        assert_ne!(starts[2], vec![0.0]);
        assert!(starts[3] != starts[2] && starts[3] != starts[0]);
        assert_eq!(default_starts(&p, &[], 5, 1).len(), 5);
        let f = |x: &[f64]| (x[0] * x[0] - 4.0).powi(2) + 0.1 * x[0];
        let all = solve_multistart(&p, &f, &starts);
        assert!(all.windows(2).all(|w| compare_results(&w[0], &w[1]).is_le()));
        assert!(all[0].x[0] < 0.0);
    }

    proptest::proptest! {
        #[test]
        fn iterates_stay_in_box_and_descend(
            c in proptest::collection::vec(-8.0f64..8.0, 3),
            x0 in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            let p = BoxProblem::new(vec![-2.0, 0.0, -1.0], vec![2.0, 5.0, 1.0]).unwrap();
            let f = |x: &[f64]| {
                x.iter().zip(&c).map(|(a, b)| (a - b).powi(2)).sum::<f64>() + x[0] * x[1]
            };
            let mut start = x0.clone();
            p.project(&mut start);
            let r = solve(&p, &f, &x0);
            proptest::prop_assert!(p.is_feasible(&r.x, 0.0));
            proptest::prop_assert!(r.value <= f(&start) + 1e-12);
        }

        #[test]
        fn argmin_invariant_under_scaling(s in 0.01f64..100.0, c in -3.0f64..3.0) {
            let p = BoxProblem::new(vec![-2.0, -2.0], vec![2.0, 2.0]).unwrap();
            let f = move |x: &[f64]| (x[0] - c).powi(2) + 2.0 * (x[1] + 0.5 * c).powi(2) + x[0] * x[1];
            let g = move |x: &[f64]| s * f(x);
            let a = solve(&p, &f, &[0.0, 0.0]);
            let b = solve(&p, &g, &[0.0, 0.0]);
            for (u, v) in a.x.iter().zip(&b.x) {
                proptest::prop_assert!((u - v).abs() < 1e-5, "{:?} vs {:?}", a.x, b.x);
            }
            proptest::prop_assert!((b.value - s * a.value).abs() <= 1e-6 * (1.0 + b.value.abs()));
        }
    }
}

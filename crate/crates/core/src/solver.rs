//! Safeguarded Newton root finding for scalar estimating equations.
//!
//! The score is first scanned on a uniform grid over `[-L, L]`, with `L`
//! doubling from the initial half-width up to the maximum, to locate sign
//! changes. Each sign-change bracket is refined by Newton steps with step
//! halving, falling back to bisection whenever a step leaves the bracket or
//! the derivative is too flat. A bracket whose sign change is a pole (the
//! score diverges instead of vanishing) yields no root.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub initial_half_width: f64,
    pub max_half_width: f64,
    pub grid_points: usize,
    pub max_iterations: usize,
    /// Absolute tolerance on the score at the root.
    pub score_tol: f64,
    pub step_tol: f64,
    /// Below this derivative magnitude Newton steps are replaced by bisection.
    pub min_derivative: f64,
}

impl SolverOptions {
    /// Defaults scaled to a sample of size `n`: `|U| <= 1e-10 (1 + n)`.
    pub fn for_sample_size(n: usize) -> Self {
        Self {
            initial_half_width: 10.0,
            max_half_width: 40.0,
            grid_points: 64,
            max_iterations: 100,
            score_tol: 1e-10 * (1.0 + n as f64),
            step_tol: 1e-9,
            min_derivative: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub beta: f64,
    pub score: f64,
    pub derivative: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RootSet {
    /// Converged roots in ascending order.
    pub roots: Vec<Root>,
}

impl RootSet {
    /// The root nearest `reference`.
    pub fn closest_to(&self, reference: f64) -> Root {
        *self
            .roots
            .iter()
            .min_by(|a, b| {
                (a.beta - reference)
                    .abs()
                    .total_cmp(&(b.beta - reference).abs())
            })
            .expect("root set is never empty")
    }

    pub fn is_unique(&self) -> bool {
        self.roots.len() == 1
    }
}

/// Finds every root of `f` detectable on the bracket grid.
///
/// `f` returns the score and its derivative. Points where `f` errors are
/// treated as undefined and skipped during the scan.
pub fn find_roots<F>(mut f: F, opts: &SolverOptions) -> Result<RootSet>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    let mut half = opts.initial_half_width;
    let (brackets, lo_end, hi_end) = loop {
        let grid = linspace(-half, half, opts.grid_points);
        let values: Vec<Option<(f64, f64)>> = grid
            .iter()
            .map(|&b| f(b).ok().filter(|(u, d)| u.is_finite() && d.is_finite()))
            .collect();
        let mut brackets = Vec::new();
        for k in 0..grid.len() {
            if let Some((u, d)) = values[k] {
                if u == 0.0 {
                    brackets.push(Bracket::Exact(Root {
                        beta: grid[k],
                        score: 0.0,
                        derivative: d,
                        iterations: 0,
                    }));
                    continue;
                }
            }
            if k + 1 < grid.len() {
                if let (Some((ua, _)), Some((ub, _))) = (values[k], values[k + 1]) {
                    if ua != 0.0 && ub != 0.0 && (ua < 0.0) != (ub < 0.0) {
                        brackets.push(Bracket::Interval {
                            a: grid[k],
                            b: grid[k + 1],
                            fa: ua,
                            fb: ub,
                        });
                    }
                }
            }
        }
        let first = values.first().copied().flatten().map_or(f64::NAN, |v| v.0);
        let last = values.last().copied().flatten().map_or(f64::NAN, |v| v.0);
        if !brackets.is_empty() || half >= opts.max_half_width {
            break (brackets, first, last);
        }
        half = (half * 2.0).min(opts.max_half_width);
    };

    if brackets.is_empty() {
        return Err(Error::NoSolution {
            lower: -half,
            upper: half,
            score_lower: lo_end,
            score_upper: hi_end,
        });
    }

    let mut roots = Vec::new();
    let mut last_err = None;
    for br in brackets {
        match br {
            Bracket::Exact(r) => roots.push(r),
            Bracket::Interval { a, b, fa, fb } => match refine(&mut f, a, b, fa, fb, opts) {
                Ok(r) => roots.push(r),
                Err(e) => last_err = Some(e),
            },
        }
    }
    if roots.is_empty() {
        return Err(last_err.expect("a bracket failed"));
    }
    roots.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    Ok(RootSet { roots })
}

enum Bracket {
    Exact(Root),
    Interval { a: f64, b: f64, fa: f64, fb: f64 },
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|k| if k == n - 1 { hi } else { lo + step * k as f64 })
        .collect()
}

/// Newton iteration with step halving, kept inside a sign-change bracket.
fn refine<F>(f: &mut F, a: f64, b: f64, fa: f64, fb: f64, opts: &SolverOptions) -> Result<Root>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    // `neg` is the endpoint with negative score.
    let (mut neg, mut pos) = if fa < 0.0 { (a, b) } else { (b, a) };
    let (mut f_neg, mut f_pos) = if fa < 0.0 { (fa, fb) } else { (fb, fa) };

    let mut x = if a <= 0.0 && 0.0 <= b {
        0.0
    } else if fa.abs() < fb.abs() {
        a
    } else {
        b
    };
    let (mut fx, mut dx_) = f(x)?;
    let fail = |iterations: usize, neg: f64, pos: f64, f_neg: f64, f_pos: f64| {
        let (lower, upper, score_lower, score_upper) = if neg < pos {
            (neg, pos, f_neg, f_pos)
        } else {
            (pos, neg, f_pos, f_neg)
        };
        Error::NonConvergence {
            lower,
            upper,
            score_lower,
            score_upper,
            iterations,
        }
    };

    for it in 1..=opts.max_iterations {
        if fx.abs() <= opts.score_tol
            && (fx == 0.0 || (dx_.abs() >= opts.min_derivative && (fx / dx_).abs() <= opts.step_tol))
        {
            // One last Newton step is nearly free and removes the residual O(step_tol) error.
            if fx != 0.0 {
                let cand = x - fx / dx_;
                if let Ok((fc, dc)) = f(cand) {
                    if fc.is_finite() && fc.abs() <= fx.abs() {
                        return Ok(Root {
                            beta: cand,
                            score: fc,
                            derivative: dc,
                            iterations: it,
                        });
                    }
                }
            }
            return Ok(Root {
                beta: x,
                score: fx,
                derivative: dx_,
                iterations: it - 1,
            });
        }
        let (lo, hi) = if neg < pos { (neg, pos) } else { (pos, neg) };
        let mut next = None;
        if dx_.abs() >= opts.min_derivative && fx.is_finite() {
            let mut step = -fx / dx_;
            for _ in 0..8 {
                let cand = x + step;
                if cand > lo && cand < hi {
                    if let Ok((fc, dc)) = f(cand) {
                        if fc.is_finite() && fc.abs() <= fx.abs() {
                            next = Some((cand, fc, dc));
                            break;
                        }
                    }
                }
                step *= 0.5;
            }
        }
        let (xn, fxn, dxn) = match next {
            Some(v) => v,
            None => {
                let mid = 0.5 * (lo + hi);
                let (fm, dm) = f(mid)?;
                (mid, fm, dm)
            }
        };
        let step = (xn - x).abs();
        x = xn;
        fx = fxn;
        dx_ = dxn;
        if fx < 0.0 {
            neg = x;
            f_neg = fx;
        } else if fx > 0.0 {
            pos = x;
            f_pos = fx;
        }

        if fx.abs() <= opts.score_tol && (step <= opts.step_tol || fx == 0.0) {
            return Ok(Root {
                beta: x,
                score: fx,
                derivative: dx_,
                iterations: it,
            });
        }
        if (pos - neg).abs() <= opts.step_tol * 1e-3 {
            if fx.abs() <= opts.score_tol {
                return Ok(Root {
                    beta: x,
                    score: fx,
                    derivative: dx_,
                    iterations: it,
                });
            }
            // Collapsed onto a pole.
            return Err(fail(it, neg, pos, f_neg, f_pos));
        }
    }
    Err(fail(opts.max_iterations, neg, pos, f_neg, f_pos))
}

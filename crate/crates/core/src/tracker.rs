//! Predictor-corrector path tracking from `t = 0` to `t = 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{lu_decompose, norm, ComplexMatrix, ComplexScalar};
use crate::scheduler::{self, JobKind, JobMessage, JobStatus, Schedule};

/// A square system `h(x, t) = 0` that can be followed in `t`.
pub trait PathHomotopy {
    /// Number of unknowns, equal to the number of equations.
    fn dimension(&self) -> usize;

    fn evaluate(&self, x: &[ComplexScalar], t: f64) -> Vec<ComplexScalar>;

    /// `dh/dx` at `(x, t)`.
    fn jacobian_x(&self, x: &[ComplexScalar], t: f64) -> ComplexMatrix;

    /// `dh/dt` at `(x, t)`.
    fn derivative_t(&self, x: &[ComplexScalar], t: f64) -> Vec<ComplexScalar>;
}

impl<H: PathHomotopy + ?Sized> PathHomotopy for &H {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn evaluate(&self, x: &[ComplexScalar], t: f64) -> Vec<ComplexScalar> {
        (**self).evaluate(x, t)
    }
    fn jacobian_x(&self, x: &[ComplexScalar], t: f64) -> ComplexMatrix {
        (**self).jacobian_x(x, t)
    }
    fn derivative_t(&self, x: &[ComplexScalar], t: f64) -> Vec<ComplexScalar> {
        (**self).derivative_t(x, t)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum OptionsError {
    #[error("step sizes must satisfy 0 < h_min <= h_init <= h_max <= 1")]
    StepBounds,
    #[error("tolerances must be positive")]
    Tolerance,
    #[error("max_steps and max_corrector_iters must be positive")]
    Counts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerOptions {
    pub max_steps: usize,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub corrector_tol: f64,
    pub residual_tol: f64,
    pub max_corrector_iters: usize,
    pub divergence_norm: f64,
    /// Newton iterations allowed when polishing at `t = 1`.
    pub polish_iters: usize,
}

impl Default for TrackerOptions {
    fn default() -> Self {
        Self {
            max_steps: 10_000,
            h_init: 0.05,
            h_min: 1e-8,
            h_max: 0.1,
            corrector_tol: 1e-10,
            residual_tol: 1e-8,
            max_corrector_iters: 4,
            divergence_norm: 1e8,
            polish_iters: 5,
        }
    }
}

impl TrackerOptions {
    pub fn validate(&self) -> Result<(), OptionsError> {
        let ok = 0.0 < self.h_min
            && self.h_min <= self.h_init
            && self.h_init <= self.h_max
            && self.h_max <= 1.0;
        if !ok {
            return Err(OptionsError::StepBounds);
        }
        if !(self.corrector_tol > 0.0 && self.residual_tol > 0.0 && self.divergence_norm > 0.0) {
            return Err(OptionsError::Tolerance);
        }
        if self.max_steps == 0 || self.max_corrector_iters == 0 {
            return Err(OptionsError::Counts);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PathStatus {
    Converged,
    Diverged,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub status: PathStatus,
    pub endpoint: Vec<ComplexScalar>,
    pub t_reached: f64,
    pub residual: f64,
    pub steps_used: usize,
    pub newton_iters_total: usize,
}

impl PathResult {
    pub fn converged(&self) -> bool {
        self.status == PathStatus::Converged
    }
}

/// One predictor-corrector attempt, for diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    pub t_from: f64,
    pub t_to: f64,
    pub step_size: f64,
    pub accepted: bool,
    pub corrector_iters: usize,
    pub last_update: f64,
}

struct Correction {
    x: Vec<ComplexScalar>,
    iters: usize,
    last_update: f64,
}

fn converged_update(update: f64, x: &[ComplexScalar], tol: f64) -> bool {
    update <= tol * norm(x).max(1.0)
}

/// Newton at fixed `t`. Fails on a singular Jacobian, on a non-contracting
/// update sequence, or when the iteration budget runs out.
fn correct<H: PathHomotopy + ?Sized>(
    h: &H,
    mut x: Vec<ComplexScalar>,
    t: f64,
    max_iters: usize,
    tol: f64,
) -> Result<Correction, usize> {
    let mut previous = f64::INFINITY;
    for iter in 1..=max_iters {
        let rhs: Vec<ComplexScalar> = h.evaluate(&x, t).into_iter().map(|v| -v).collect();
        let lu = lu_decompose(&h.jacobian_x(&x, t)).map_err(|_| iter)?;
        let dx = lu.solve(&rhs).map_err(|_| iter)?;
        let update = norm(&dx);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        if converged_update(update, &x, tol) {
            return Ok(Correction {
                x,
                iters: iter,
                last_update: update,
            });
        }
        if update > 0.5 * previous || !update.is_finite() {
            return Err(iter);
        }
        previous = update;
    }
    Err(max_iters)
}

/// Newton at fixed `t` for at most `iters` steps, stopping as soon as a step
/// would increase the residual or falls to roundoff. Returns the point and
/// the number of steps taken.
pub fn newton_polish<H: PathHomotopy + ?Sized>(
    h: &H,
    mut x: Vec<ComplexScalar>,
    t: f64,
    iters: usize,
) -> (Vec<ComplexScalar>, usize) {
    let mut taken = 0;
    for _ in 0..iters {
        let rhs: Vec<ComplexScalar> = h.evaluate(&x, t).into_iter().map(|v| -v).collect();
        let Ok(lu) = lu_decompose(&h.jacobian_x(&x, t)) else {
            break;
        };
        let Ok(dx) = lu.solve(&rhs) else { break };
        let candidate: Vec<ComplexScalar> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
        if norm(&h.evaluate(&candidate, t)) > norm(&rhs) {
            break;
        }
        taken += 1;
        x = candidate;
        if norm(&dx) <= f64::EPSILON * norm(&x).max(1.0) {
            break;
        }
    }
    (x, taken)
}

/// Follows the path through `x0` at `t = 0` up to `t = 1`.
pub fn track_path<H: PathHomotopy + ?Sized>(
    h: &H,
    x0: &[ComplexScalar],
    opts: &TrackerOptions,
) -> PathResult {
    track_path_traced(h, x0, opts, None)
}

pub fn track_path_traced<H: PathHomotopy + ?Sized>(
    h: &H,
    x0: &[ComplexScalar],
    opts: &TrackerOptions,
    mut trace: Option<&mut Vec<TraceStep>>,
) -> PathResult {
    let fail = |x: Vec<ComplexScalar>,
                t: f64,
                residual: f64,
                steps: usize,
                newton: usize,
                status: PathStatus| PathResult {
        status,
        endpoint: x,
        t_reached: t,
        residual,
        steps_used: steps,
        newton_iters_total: newton,
    };

    if x0.len() != h.dimension() || opts.validate().is_err() {
        return fail(x0.to_vec(), 0.0, f64::INFINITY, 0, 0, PathStatus::Failed);
    }
    let start_residual = norm(&h.evaluate(x0, 0.0));
    if !(start_residual <= opts.residual_tol) {
        return fail(x0.to_vec(), 0.0, start_residual, 0, 0, PathStatus::Failed);
    }

    let mut x = x0.to_vec();
    let mut t = 0.0_f64;
    let mut step = opts.h_init;
    let mut successes = 0usize;
    let mut steps = 0usize;
    let mut newton_total = 0usize;

    while t < 1.0 {
        if steps >= opts.max_steps {
            let r = norm(&h.evaluate(&x, t));
            return fail(x, t, r, steps, newton_total, PathStatus::Failed);
        }
        steps += 1;

        let t_new = if t + step >= 1.0 - 1e-14 {
            1.0
        } else {
            t + step
        };
        let dt = t_new - t;

        let predicted = lu_decompose(&h.jacobian_x(&x, t)).ok().and_then(|lu| {
            let rhs: Vec<ComplexScalar> =
                h.derivative_t(&x, t).into_iter().map(|v| -v * dt).collect();
            lu.solve(&rhs).ok()
        });
        let outcome = match predicted {
            Some(dx) => {
                let guess: Vec<ComplexScalar> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
                correct(
                    h,
                    guess,
                    t_new,
                    opts.max_corrector_iters,
                    opts.corrector_tol,
                )
            }
            None => Err(0),
        };

        match outcome {
            Ok(c) => {
                newton_total += c.iters;
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(TraceStep {
                        t_from: t,
                        t_to: t_new,
                        step_size: step,
                        accepted: true,
                        corrector_iters: c.iters,
                        last_update: c.last_update,
                    });
                }
                x = c.x;
                t = t_new;
                if norm(&x) >= opts.divergence_norm {
                    let r = norm(&h.evaluate(&x, t));
                    return fail(x, t, r, steps, newton_total, PathStatus::Diverged);
                }
                successes += 1;
                if successes >= 3 {
                    step = (step * 1.5).min(opts.h_max);
                    successes = 0;
                }
            }
            Err(iters) => {
                newton_total += iters;
                if let Some(tr) = trace.as_deref_mut() {
                    tr.push(TraceStep {
                        t_from: t,
                        t_to: t_new,
                        step_size: step,
                        accepted: false,
                        corrector_iters: iters,
                        last_update: f64::NAN,
                    });
                }
                successes = 0;
                step *= 0.5;
                if step < opts.h_min {
                    let r = norm(&h.evaluate(&x, t));
                    let status = if norm(&x) >= opts.divergence_norm {
                        PathStatus::Diverged
                    } else {
                        PathStatus::Failed
                    };
                    return fail(x, t, r, steps, newton_total, status);
                }
            }
        }
    }

    // polish on the target system itself
    let (x, polished) = newton_polish(h, x, 1.0, opts.polish_iters);
    newton_total += polished;
    let residual = norm(&h.evaluate(&x, 1.0));
    let status = if residual <= opts.residual_tol {
        PathStatus::Converged
    } else {
        PathStatus::Failed
    };
    fail(x, 1.0, residual, steps, newton_total, status)
}

/// Tracks every start through the worker pool. Results come back in start
/// order and do not depend on the schedule or the worker count.
pub fn track_all<H: PathHomotopy + Sync + ?Sized>(
    h: &H,
    starts: &[Vec<ComplexScalar>],
    schedule: Schedule,
    workers: usize,
    opts: &TrackerOptions,
) -> Vec<PathResult> {
    let jobs: Vec<JobMessage<Vec<ComplexScalar>>> = starts
        .iter()
        .enumerate()
        .map(|(i, s)| JobMessage::new(i as u64, JobKind::IndependentPath, s.clone()))
        .collect();
    let work = |start: &Vec<ComplexScalar>| {
        let result = track_path(h, start, opts);
        let status = if result.converged() {
            JobStatus::Completed
        } else {
            JobStatus::Failed
        };
        (status, result)
    };
    let results = match schedule {
        Schedule::Static => scheduler::run_static(jobs, workers, work),
        Schedule::Dynamic => {
            scheduler::run_dynamic(scheduler::FixedJobs::new(jobs), workers, work).results
        }
    };
    results
        .into_iter()
        .zip(starts)
        .map(|(r, start)| {
            r.payload.unwrap_or_else(|| PathResult {
                status: PathStatus::Failed,
                endpoint: start.clone(),
                t_reached: 0.0,
                residual: f64::INFINITY,
                steps_used: 0,
                newton_iters_total: 0,
            })
        })
        .collect()
}

//! Adaptive embedded Runge-Kutta integration of small complex systems.
//!
//! The solver advances `y' = f(x, y)` with the Verner 9(8) pair. Integration is
//! split at caller-supplied breakpoints so that a step never straddles a jump
//! of the coefficients.

use crate::error::{Error, Result};
use crate::tableau::{A, B_HIGH, B_LOW, C, STAGES};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { atol: 1e-12, rtol: 1e-10, max_steps: 400_000 }
    }
}

impl Tolerance {
    pub fn tight() -> Self {
        Tolerance { atol: 1e-14, rtol: 1e-13, max_steps: 1_000_000 }
    }
}

pub type State<const N: usize> = [Complex64; N];

/// Integrate from `x0` to `x1` (either direction). `observer` sees every
/// accepted step, including the final point.
pub fn integrate<const N: usize, F, O>(
    rhs: &F,
    x0: f64,
    x1: f64,
    y0: State<N>,
    breaks: &[f64],
    tol: &Tolerance,
    energy: Complex64,
    observer: &mut O,
) -> Result<State<N>>
where
    F: Fn(f64, &State<N>) -> State<N>,
    O: FnMut(f64, &State<N>),
{
    if x0 == x1 {
        return Ok(y0);
    }
    let dir = (x1 - x0).signum();
    let mut nodes: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|&b| (b - x0) * dir > 1e-14 && (x1 - b) * dir > 1e-14)
        .collect();
    nodes.sort_by(|a, b| (dir * a).partial_cmp(&(dir * b)).unwrap());
    nodes.push(x1);

    let mut y = y0;
    let mut x = x0;
    let mut h_hint: Option<f64> = None;
    let mut steps = 0usize;
    for &end in &nodes {
        let (y_end, h_next) = segment(rhs, x, end, y, tol, energy, h_hint, &mut steps, observer)?;
        y = y_end;
        x = end;
        h_hint = Some(h_next);
    }
    Ok(y)
}

/// Convenience wrapper without an observer.
pub fn propagate<const N: usize, F>(
    rhs: &F,
    x0: f64,
    x1: f64,
    y0: State<N>,
    breaks: &[f64],
    tol: &Tolerance,
    energy: Complex64,
) -> Result<State<N>>
where
    F: Fn(f64, &State<N>) -> State<N>,
{
    integrate(rhs, x0, x1, y0, breaks, tol, energy, &mut |_, _| {})
}

#[allow(clippy::too_many_arguments)]
fn segment<const N: usize, F, O>(
    rhs: &F,
    x0: f64,
    x1: f64,
    y0: State<N>,
    tol: &Tolerance,
    energy: Complex64,
    h_hint: Option<f64>,
    steps: &mut usize,
    observer: &mut O,
) -> Result<(State<N>, f64)>
where
    F: Fn(f64, &State<N>) -> State<N>,
    O: FnMut(f64, &State<N>),
{
    let span = x1 - x0;
    let dir = span.signum();
    let len = span.abs();
    let mut y = y0;
    let mut x = x0;

    let mut h = match h_hint {
        Some(h) => h.abs().min(len),
        None => {
            let f0 = rhs(x0, &y0);
            let d0 = max_norm(&y0);
            let d1 = max_norm(&f0);
            let h = if d1 > 0.0 && d0 > 0.0 { 0.05 * d0 / d1 } else { 0.05 * len };
            h.min(len).max(1e-6 * len)
        }
    };

    // Stage abscissae stay strictly inside the segment so that a coefficient
    // with a jump at a node is sampled from this segment's side.
    let (lo, hi) = (x0.min(x1), x0.max(x1));
    let nudge = 4.0 * f64::EPSILON * (1.0 + lo.abs().max(hi.abs()));
    let inside = |xs: f64| if hi - lo > 2.0 * nudge { xs.clamp(lo + nudge, hi - nudge) } else { 0.5 * (lo + hi) };

    let mut k = [[Complex64::new(0.0, 0.0); N]; STAGES];
    loop {
        let remaining = (x1 - x) * dir;
        if remaining <= 1e-15 * (1.0 + x1.abs()) {
            break;
        }
        // Stretch a step that would stop just short of the node instead of leaving a sliver.
        let last = h * (1.0 + 1e-8) >= remaining;
        let step = if last { remaining } else { h };
        let hs = step * dir;

        for i in 0..STAGES {
            let mut yi = y;
            for (j, &a) in A[i].iter().enumerate() {
                if a != 0.0 {
                    for m in 0..N {
                        yi[m] += k[j][m] * (a * hs);
                    }
                }
            }
            k[i] = rhs(inside(x + C[i] * hs), &yi);
        }
        let mut y_high = y;
        let mut err = 0.0f64;
        for m in 0..N {
            let mut hi = Complex64::new(0.0, 0.0);
            let mut lo = Complex64::new(0.0, 0.0);
            for i in 0..STAGES {
                hi += k[i][m] * B_HIGH[i];
                lo += k[i][m] * B_LOW[i];
            }
            y_high[m] += hi * hs;
            let scale = tol.atol + tol.rtol * y[m].norm().max(y_high[m].norm());
            err = err.max(((hi - lo) * hs).norm() / scale);
        }
        *steps += 1;
        if *steps > tol.max_steps || !err.is_finite() {
            return Err(Error::StepFailure { x, energy });
        }
        if err <= 1.0 {
            x = if last { x1 } else { x + hs };
            y = y_high;
            observer(x, &y);
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-1.0 / 9.0)).clamp(0.2, 5.0) };
            if !last || factor < 1.0 {
                h = step * factor;
            }
        } else {
            h = step * (0.9 * err.powf(-1.0 / 9.0)).clamp(0.1, 0.9);
            if h < 1e-13 * (1.0 + x.abs()) {
                return Err(Error::StepFailure { x, energy });
            }
        }
    }
    Ok((y, h))
}

fn max_norm<const N: usize>(v: &State<N>) -> f64 {
    v.iter().fold(0.0, |m, c| m.max(c.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oscillator(w: Complex64) -> impl Fn(f64, &State<2>) -> State<2> {
        move |_x, y| [y[1], -w * w * y[0]]
    }

    #[test]
    fn harmonic_oscillator_matches_closed_form() {
        let w = Complex64::new(20.0, 3.0);
        let rhs = oscillator(w);
        let y = propagate(&rhs, 0.0, 1.0, [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], &[], &Tolerance::default(), w * w)
            .unwrap();
        let exact = w.cos();
        assert!((y[0] - exact).norm() / exact.norm() < 1e-9, "{} vs {}", y[0], exact);
        assert!((y[1] + w * w.sin()).norm() / (w * w.sin()).norm() < 1e-9);
    }

    #[test]
    fn backward_integration_inverts_forward() {
        let w = Complex64::new(7.0, -1.0);
        let rhs = oscillator(w);
        let tol = Tolerance::tight();
        let y0 = [Complex64::new(0.3, 0.1), Complex64::new(-1.0, 2.0)];
        let y1 = propagate(&rhs, 0.0, 1.3, y0, &[0.5], &tol, w * w).unwrap();
        let back = propagate(&rhs, 1.3, 0.0, y1, &[0.5], &tol, w * w).unwrap();
        for m in 0..2 {
            assert!((back[m] - y0[m]).norm() < 1e-11);
        }
    }

    #[test]
    fn fixed_step_convergence_is_ninth_order() {
        // Drive single steps of fixed size through a non-autonomous scalar problem
        // y' = cos(x) y, y(0) = 1, exact exp(sin x).
        let rhs = |x: f64, y: &State<1>| [y[0] * x.cos()];
        let run = |n: usize| {
            let tol = Tolerance { atol: 1e30, rtol: 0.0, max_steps: 10_000 };
            let h = 2.0 / n as f64;
            let mut y = [Complex64::new(1.0, 0.0)];
            for i in 0..n {
                let x = i as f64 * h;
                y = segment(&rhs, x, x + h, y, &tol, Complex64::new(0.0, 0.0), Some(h), &mut 0, &mut |_, _| {})
                    .unwrap()
                    .0;
            }
            (y[0].re - 2.0f64.sin().exp()).abs()
        };
        let e1 = run(4);
        let e2 = run(8);
        let order = (e1 / e2).log2();
        assert!(order > 8.0, "observed order {order}");
    }

    #[test]
    fn observer_sees_monotone_steps_ending_at_target() {
        let w = Complex64::new(5.0, 0.0);
        let rhs = oscillator(w);
        let mut xs = Vec::new();
        propagate(&rhs, 0.0, 1.0, [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)], &[], &Tolerance::default(), w * w)
            .unwrap();
        integrate(&rhs, 0.0, 1.0, [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)], &[0.25], &Tolerance::default(), w * w, &mut |x, _| xs.push(x))
            .unwrap();
        assert!(xs.windows(2).all(|p| p[1] > p[0]));
        assert_eq!(*xs.last().unwrap(), 1.0);
        assert!(xs.contains(&0.25));
    }
}

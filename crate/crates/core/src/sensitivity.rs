//! Error algebra for expected fulfilments: ranges around point EFs, when two
//! ranges can be told apart, and the EF ratio needed for a given accuracy.

use std::fmt::Write as _;

use thiserror::Error;

use crate::exec::Execution;

/// A probability and fulfilment with relative errors on each.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorBoundedEF {
    pub p: f64,
    pub f: f64,
    pub p_err: f64,
    pub f_err: f64,
}

impl ErrorBoundedEF {
    pub fn new(p: f64, f: f64, p_err: f64, f_err: f64) -> Self {
        ErrorBoundedEF { p, f, p_err, f_err }
    }

    pub fn exact(p: f64, f: f64) -> Self {
        ErrorBoundedEF::new(p, f, 0.0, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EFRange {
    pub center: f64,
    pub epsilon_max: f64,
}

impl EFRange {
    pub fn low(&self) -> f64 {
        self.center - self.epsilon_max
    }

    pub fn high(&self) -> f64 {
        self.center + self.epsilon_max
    }
}

pub fn ef_range(x: &ErrorBoundedEF) -> EFRange {
    let center = x.p * x.f;
    EFRange {
        center,
        epsilon_max: (x.p_err + x.f_err + x.p_err * x.f_err) * center,
    }
}

/// Whether the larger EF stays larger under the worst-case errors of both.
/// Returns the verdict and the margin `gap - (eps_a + eps_b)`.
pub fn distinguishable(a: &ErrorBoundedEF, b: &ErrorBoundedEF) -> (bool, f64) {
    let (ra, rb) = {
        let (x, y) = (ef_range(a), ef_range(b));
        if x.center >= y.center {
            (x, y)
        } else {
            (y, x)
        }
    };
    let gap = ra.center - rb.center;
    let margin = gap - (ra.epsilon_max + rb.epsilon_max);
    (gap > 0.0 && margin >= 0.0, margin)
}

/// Smallest EF ratio that is meaningful when probability and fulfilment
/// errors are gamma and delta, split equally between the two actions.
pub fn ratio_threshold(gamma: f64, delta: f64) -> f64 {
    2.0 * (gamma + delta + gamma * delta) + 1.0
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensitivityError {
    #[error("empty range {0}:{1}")]
    EmptyRange(f64, f64),
    #[error("range {0}:{1} is not within [0,1]")]
    OutOfBounds(f64, f64),
    #[error("step must be positive, got {0}")]
    BadStep(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensitivityGrid {
    /// (gamma, delta, threshold), gamma-major.
    pub cells: Vec<(f64, f64, f64)>,
    /// (ratio, gamma, delta) points on the contour of each integer ratio.
    pub contours: Vec<(u32, f64, f64)>,
}

fn snap(x: f64) -> f64 {
    (x * 1e12).round() / 1e12
}

fn axis(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>, SensitivityError> {
    if !step.is_finite() || step <= 0.0 {
        return Err(SensitivityError::BadStep(step));
    }
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(SensitivityError::EmptyRange(lo, hi));
    }
    if lo < 0.0 || hi > 1.0 {
        return Err(SensitivityError::OutOfBounds(lo, hi));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize + 1;
    Ok((0..n).map(|i| snap(lo + i as f64 * step)).collect())
}

pub fn sensitivity_grid(
    gamma: (f64, f64),
    delta: (f64, f64),
    step: f64,
) -> Result<SensitivityGrid, SensitivityError> {
    sensitivity_grid_with(gamma, delta, step, Execution::default())
}

pub fn sensitivity_grid_with(
    gamma: (f64, f64),
    delta: (f64, f64),
    step: f64,
    exec: Execution,
) -> Result<SensitivityGrid, SensitivityError> {
    let gs = axis(gamma.0, gamma.1, step)?;
    let ds = axis(delta.0, delta.1, step)?;
    let rows = exec.map(&gs, |&g| {
        ds.iter()
            .map(|&d| (g, d, ratio_threshold(g, d)))
            .collect::<Vec<_>>()
    });
    let cells: Vec<(f64, f64, f64)> = rows.into_iter().flatten().collect();

    let lo = ratio_threshold(gamma.0, delta.0);
    let hi = ratio_threshold(gamma.1, delta.1);
    let mut contours = Vec::new();
    for r in (lo.ceil() as u32)..=(hi.floor() as u32) {
        for &g in &gs {
            // Solve 2(g + d + g d) + 1 = r for d.
            let d = ((f64::from(r) - 1.0) / 2.0 - g) / (1.0 + g);
            let d = snap(d);
            if d >= delta.0 - 1e-12 && d <= delta.1 + 1e-12 {
                contours.push((r, g, d));
            }
        }
    }
    Ok(SensitivityGrid { cells, contours })
}

/// Six significant digits, trailing zeros trimmed.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

impl SensitivityGrid {
    pub fn grid_csv(&self) -> String {
        let mut out = String::from("gamma,delta,threshold\n");
        for &(g, d, t) in &self.cells {
            let _ = writeln!(out, "{},{},{}", fmt_sig6(g), fmt_sig6(d), fmt_sig6(t));
        }
        out
    }

    pub fn contours_csv(&self) -> String {
        let mut out = String::from("ratio,gamma,delta\n");
        for &(r, g, d) in &self.contours {
            let _ = writeln!(out, "{r},{},{}", fmt_sig6(g), fmt_sig6(d));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn range_examples() {
        let r = ef_range(&ErrorBoundedEF::exact(0.85, 1000.0));
        assert_eq!((r.low(), r.high()), (850.0, 850.0));
        let r = ef_range(&ErrorBoundedEF::new(0.5, 100.0, 0.1, 0.1));
        assert!((r.epsilon_max - 10.5).abs() < 1e-12);
        let r = ef_range(&ErrorBoundedEF::new(0.5, 0.0, 0.3, 0.3));
        assert_eq!((r.low(), r.high()), (0.0, 0.0));
    }

    #[test]
    fn distinguishable_examples() {
        let a = ErrorBoundedEF::new(0.5, 100.0, 0.1, 0.1);
        let (ok, m) = distinguishable(&a, &a);
        assert!(!ok);
        assert!((m + 21.0).abs() < 1e-12);

        let (ok, m) = distinguishable(
            &ErrorBoundedEF::exact(0.7, 1000.0),
            &ErrorBoundedEF::exact(0.85, 1000.0),
        );
        assert!(ok);
        assert!((m - 150.0).abs() < 1e-9);

        // eps = 30 on each side: relative error 30/850 and 30/810 on p only.
        let a = ErrorBoundedEF::new(0.85, 1000.0, 30.0 / 850.0, 0.0);
        let b = ErrorBoundedEF::new(0.81, 1000.0, 30.0 / 810.0, 0.0);
        let (ok, m) = distinguishable(&a, &b);
        assert!(!ok);
        assert!((m + 20.0).abs() < 1e-9);
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(ratio_threshold(0.2, 0.3), 2.12);
        assert_eq!(ratio_threshold(0.0, 0.0), 1.0);
        assert!((ratio_threshold(0.1, 0.1) - 1.42).abs() < 1e-12);
    }

    #[test]
    fn grid_shape_and_values() {
        let g = sensitivity_grid((0.0, 0.5), (0.0, 0.5), 0.1).unwrap();
        assert_eq!(g.cells.len(), 36);
        assert!(g
            .cells
            .iter()
            .any(|&(x, y, t)| x == 0.2 && y == 0.3 && t == 2.12));
        assert_eq!(g.cells[0], (0.0, 0.0, 1.0));
        assert!(g.grid_csv().contains("\n0.2,0.3,2.12\n"));
        assert_eq!(g.grid_csv().lines().count(), 37);
        for &(r, x, y) in &g.contours {
            assert!((ratio_threshold(x, y) - f64::from(r)).abs() < 1e-9);
        }
    }

    #[test]
    fn bad_ranges_are_rejected() {
        assert!(sensitivity_grid((0.5, 0.1), (0.0, 0.5), 0.1).is_err());
        assert!(sensitivity_grid((0.0, 0.5), (0.0, 1.5), 0.1).is_err());
        assert!(sensitivity_grid((0.0, 0.5), (0.0, 0.5), 0.0).is_err());
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(fmt_sig6(2.12), "2.12");
        assert_eq!(fmt_sig6(1.0), "1");
        assert_eq!(fmt_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_sig6(1234567.0), "1234567");
        assert_eq!(fmt_sig6(0.0), "0");
    }
}

//! Value of a database's advanced service as a function of its own market share.

use serde::{Deserialize, Serialize};

use crate::error::{check_fraction, Error, Result};
use crate::market::MarketParams;
use crate::numeric::bisect;

/// Slack allowed when checking concavity and monotonicity of samples.
const SHAPE_TOL: f64 = 1e-9;

/// Non-decreasing, concave map from a database's share to the utility of its
/// advanced service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExternalityCurve {
    /// `alpha + (beta - alpha) * eta^gamma`.
    Parametric { alpha: f64, beta: f64, gamma: f64 },
    /// Piecewise-linear interpolation through `(share, value)` knots spanning `[0, 1]`.
    Tabulated { points: Vec<(f64, f64)> },
}

impl ExternalityCurve {
    pub fn parametric(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite()) || alpha > beta {
            return Err(Error::InvalidCurve(format!(
                "need finite alpha <= beta, got alpha={alpha}, beta={beta}"
            )));
        }
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidCurve(format!("gamma must be in (0, 1], got {gamma}")));
        }
        Ok(Self::Parametric { alpha, beta, gamma })
    }

    /// A curve that does not depend on the share.
    pub fn flat(value: f64) -> Result<Self> {
        Self::parametric(value, value, 1.0)
    }

    /// Tabulated curve from knots that already satisfy the shape requirements.
    ///
    /// Knots must start at share 0, end at share 1, be strictly increasing in
    /// share, and have non-decreasing, concave values.
    pub fn tabulated(points: Vec<(f64, f64)>) -> Result<Self> {
        check_knots(&points)?;
        for w in points.windows(2) {
            if w[1].1 < w[0].1 - SHAPE_TOL {
                return Err(Error::InvalidCurve(format!(
                    "values decrease between shares {} and {}",
                    w[0].0, w[1].0
                )));
            }
        }
        let slopes = slopes(&points);
        for (i, w) in slopes.windows(2).enumerate() {
            if w[1] > w[0] + SHAPE_TOL {
                return Err(Error::InvalidCurve(format!(
                    "not concave at share {}",
                    points[i + 1].0
                )));
            }
        }
        Ok(Self::Tabulated { points })
    }

    /// Tabulated curve from noisy knots: projects onto the least concave
    /// majorant and then flattens any decreasing tail.
    pub fn tabulated_majorant(points: Vec<(f64, f64)>) -> Result<Self> {
        check_knots(&points)?;
        let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
        for &p in &points {
            while hull.len() >= 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                // Drop b when it lies on or below the chord from a to p.
                let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
                if cross >= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        // Concave and capped at its running maximum stays concave.
        let mut out = Vec::with_capacity(hull.len());
        let mut running = f64::NEG_INFINITY;
        for (x, y) in hull {
            running = running.max(y);
            out.push((x, running));
        }
        Self::tabulated(out)
    }

    /// Curve value at share `eta`.
    pub fn value(&self, eta: f64) -> Result<f64> {
        check_fraction("share", eta)?;
        Ok(self.eval(eta))
    }

    /// Value without the domain check; shares are clamped to `[0, 1]`.
    pub fn eval(&self, eta: f64) -> f64 {
        let eta = eta.clamp(0.0, 1.0);
        match self {
            Self::Parametric { alpha, beta, gamma } => alpha + (beta - alpha) * eta.powf(*gamma),
            Self::Tabulated { points } => {
                let i = segment_index(points, eta);
                let (x0, y0) = points[i];
                let (x1, y1) = points[i + 1];
                y0 + (y1 - y0) * (eta - x0) / (x1 - x0)
            }
        }
    }

    /// Derivative in the share. Infinite at 0 for parametric curves with
    /// `gamma < 1`; one-sided slopes at tabulated knots (right slope, except at 1).
    pub fn slope(&self, eta: f64) -> f64 {
        let eta = eta.clamp(0.0, 1.0);
        match self {
            Self::Parametric { alpha, beta, gamma } => {
                if beta == alpha {
                    0.0
                } else if *gamma == 1.0 {
                    beta - alpha
                } else if eta == 0.0 {
                    f64::INFINITY
                } else {
                    (beta - alpha) * gamma * eta.powf(gamma - 1.0)
                }
            }
            Self::Tabulated { points } => {
                let i = segment_index(points, eta);
                let (x0, y0) = points[i];
                let (x1, y1) = points[i + 1];
                (y1 - y0) / (x1 - x0)
            }
        }
    }

    pub fn min_value(&self) -> f64 {
        self.eval(0.0)
    }

    pub fn max_value(&self) -> f64 {
        self.eval(1.0)
    }

    /// Smallest share whose value reaches `target`, clamped to `[0, 1]`.
    pub fn share_for_value(&self, target: f64) -> f64 {
        if target <= self.min_value() {
            return 0.0;
        }
        if target > self.max_value() {
            return 1.0;
        }
        bisect(|e| self.eval(e) - target, 0.0, 1.0, 1e-15)
    }

    /// Checks the curve against the market: values must stay within
    /// `[basic_utility, sensing_utility]`, and the shape must hold on a grid.
    pub fn validate(&self, market: &MarketParams) -> Result<()> {
        let (lo, hi) = (self.min_value(), self.max_value());
        if lo < market.basic_utility || hi > market.sensing_utility {
            return Err(Error::InvalidCurve(format!(
                "values [{lo}, {hi}] leave [{}, {}]",
                market.basic_utility, market.sensing_utility
            )));
        }
        let n = 1000;
        let vals: Vec<f64> = (0..=n).map(|i| self.eval(i as f64 / n as f64)).collect();
        for (i, w) in vals.windows(2).enumerate() {
            if w[1] < w[0] - SHAPE_TOL {
                return Err(Error::InvalidCurve(format!("decreasing near share {}", i as f64 / n as f64)));
            }
        }
        for (i, w) in vals.windows(3).enumerate() {
            if w[2] - 2.0 * w[1] + w[0] > SHAPE_TOL {
                return Err(Error::InvalidCurve(format!(
                    "not concave near share {}",
                    (i + 1) as f64 / n as f64
                )));
            }
        }
        Ok(())
    }
}

fn check_knots(points: &[(f64, f64)]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::InvalidCurve("need at least two knots".into()));
    }
    if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
        return Err(Error::InvalidCurve("knots must span shares 0 to 1".into()));
    }
    if points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::InvalidCurve("non-finite knot".into()));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::InvalidCurve("knot shares must be strictly increasing".into()));
    }
    Ok(())
}

fn slopes(points: &[(f64, f64)]) -> Vec<f64> {
    points
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect()
}

fn segment_index(points: &[(f64, f64)], eta: f64) -> usize {
    let k = points.partition_point(|p| p.0 <= eta);
    k.saturating_sub(1).min(points.len() - 2)
}

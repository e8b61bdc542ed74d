//! Local convex cost functions.
//!
//! Three families are provided: quadratics `(c/2)x^2 + bx` (strongly convex,
//! globally Lipschitz derivative), quartics `w(x-a)^4` whose derivative is
//! Lipschitz only on a bounded interval and is therefore certified on a
//! declared derivative envelope, and a derivative-table stub that supplies
//! slopes without a closed-form value (used to drive the protocol from given
//! `(x, f')` pairs).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A node's local convex cost.
///
/// Every variant can evaluate its derivative anywhere; `value` and
/// `inverse_derivative` are available only where the family defines them.
/// Values are immutable after construction and safe to share across threads.
#[derive(Clone, Debug, PartialEq)]
pub enum Cost {
    /// `f(x) = (c/2) x^2 + b x` with `c > 0`.
    Quadratic { c: f64, b: f64 },
    /// `f(x) = w (x - a)^4` with `w >= 0`; `envelope` is the closed interval
    /// of derivative values on which the Lipschitz constant is certified.
    Quartic { w: f64, a: f64, envelope: (f64, f64) },
    /// Derivative-only stub: `f'(x) = slope` for all x, with a declared
    /// uniform Lipschitz constant. No value function, no inverse.
    Table { slope: f64, lipschitz: f64 },
}

impl Cost {
    /// Quadratic cost `(c/2)x^2 + bx`. Rejects `c <= 0`.
    pub fn quadratic(c: f64, b: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quadratic requires finite c > 0 and finite b, got c={c}, b={b}"
            )));
        }
        Ok(Cost::Quadratic { c, b })
    }

    /// Quartic cost `w(x-a)^4` certified on the derivative interval
    /// `envelope`. `w = 0` is allowed and yields a constant function, which
    /// is flagged via [`Cost::is_constant`] so the oracle can exclude it.
    pub fn quartic(w: f64, a: f64, envelope: (f64, f64)) -> Result<Self> {
        let (lo, hi) = envelope;
        if !(w >= 0.0) || !w.is_finite() || !a.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "quartic requires finite w >= 0 and finite a, got w={w}, a={a}"
            )));
        }
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return Err(Error::InvalidParameter(format!(
                "quartic envelope must be a nonempty finite interval, got [{lo}, {hi}]"
            )));
        }
        Ok(Cost::Quartic { w, a, envelope })
    }

    /// Derivative-table stub: constant slope with a declared Lipschitz bound.
    pub fn table(slope: f64, lipschitz: f64) -> Result<Self> {
        if !slope.is_finite() || !(lipschitz >= 0.0) || !lipschitz.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "table requires finite slope and lipschitz >= 0, got slope={slope}, L={lipschitz}"
            )));
        }
        Ok(Cost::Table { slope, lipschitz })
    }

    /// Cost value, when the family defines one (the table stub does not).
    pub fn value(&self, x: f64) -> Option<f64> {
        match *self {
            Cost::Quadratic { c, b } => Some(0.5 * c * x * x + b * x),
            Cost::Quartic { w, a, .. } => {
                let d = x - a;
                Some(w * d * d * d * d)
            }
            Cost::Table { .. } => None,
        }
    }

    /// Derivative `f'(x)`.
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Cost::Quadratic { c, b } => c * x + b,
            Cost::Quartic { w, a, .. } => {
                let d = x - a;
                4.0 * w * d * d * d
            }
            Cost::Table { slope, .. } => slope,
        }
    }

    /// Lipschitz constant of the derivative on [`Cost::validity_interval`].
    ///
    /// For quartics this is `12 w M^2` where `M = (E / (4w))^(1/3)` and `E`
    /// is the largest absolute envelope endpoint: the second derivative
    /// `12 w (x-a)^2` is maximized at distance `M` from the center, and every
    /// point whose derivative lies in the envelope is within `M` of it.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Cost::Quadratic { c, .. } => c,
            Cost::Quartic { w, envelope: (lo, hi), .. } => {
                if w == 0.0 {
                    return 0.0;
                }
                let m = (lo.abs().max(hi.abs()) / (4.0 * w)).cbrt();
                12.0 * w * m * m
            }
            Cost::Table { lipschitz, .. } => lipschitz,
        }
    }

    /// Strong-convexity modulus, when the family has one.
    pub fn strong_convexity(&self) -> Option<f64> {
        match *self {
            Cost::Quadratic { c, .. } => Some(c),
            _ => None,
        }
    }

    /// Closed interval of allocations on which the Lipschitz constant is
    /// certified; the whole line for quadratics and tables.
    pub fn validity_interval(&self) -> (f64, f64) {
        match *self {
            Cost::Quartic { w, a, envelope: (lo, hi) } if w > 0.0 => {
                (a + (lo / (4.0 * w)).cbrt(), a + (hi / (4.0 * w)).cbrt())
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Monotone inverse of the derivative, when it exists.
    pub fn inverse_derivative(&self, slope: f64) -> Option<f64> {
        match *self {
            Cost::Quadratic { c, b } => Some((slope - b) / c),
            Cost::Quartic { w, a, .. } if w > 0.0 => Some(a + (slope / (4.0 * w)).cbrt()),
            _ => None,
        }
    }

    /// True for costs whose derivative is identically zero (`w = 0`
    /// quartics): any allocation is optimal for them, so the oracle excludes
    /// them from bisection and assigns them the residual resource.
    pub fn is_constant(&self) -> bool {
        matches!(*self, Cost::Quartic { w, .. } if w == 0.0)
    }
}

/// Total objective `F(x) = sum_i f_i(x_i)`, or `None` if any cost lacks a
/// value function.
pub fn total_cost(costs: &[Cost], x: &[f64]) -> Option<f64> {
    debug_assert_eq!(costs.len(), x.len());
    let mut sum = 0.0;
    for (cost, &xi) in costs.iter().zip(x) {
        sum += cost.value(xi)?;
    }
    Some(sum)
}

/// Draws `n` quartic parameter pairs `(w_i, a_i)`, each coordinate uniform on
/// `[0, 1)`, from a ChaCha8 stream seeded with `seed`. The same seed always
/// produces the same list.
pub fn sample_uniform_quartics(n: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    if n == 0 {
        return Err(Error::InvalidParameter(
            "sample_uniform_quartics requires n >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect())
}

/// Smallest interval containing every entry of `derivs`, inflated about its
/// center by `safety` (>= 1). Used to certify per-run quartic Lipschitz
/// constants: the derivative envelope only shrinks along a trajectory, so an
/// inflation of the initial envelope covers every point a valid run visits.
pub fn derivative_envelope(derivs: &[f64], safety: f64) -> Result<(f64, f64)> {
    if derivs.is_empty() {
        return Err(Error::InvalidParameter(
            "derivative_envelope requires at least one derivative".into(),
        ));
    }
    if !(safety >= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "envelope safety factor must be >= 1, got {safety}"
        )));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &d in derivs {
        if !d.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite derivative {d} in envelope computation"
            )));
        }
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo) * safety;
    Ok((center - half, center + half))
}

/// Materializes quartic costs from sampled `(w, a)` pairs with per-run
/// Lipschitz constants certified on the inflated initial derivative envelope
/// at `x0`.
pub fn quartics_from_params(params: &[(f64, f64)], x0: &[f64], safety: f64) -> Result<Vec<Cost>> {
    if params.len() != x0.len() {
        return Err(Error::InvalidParameter(format!(
            "quartics_from_params: {} parameter pairs but {} initial allocations",
            params.len(),
            x0.len()
        )));
    }
    let derivs: Vec<f64> = params
        .iter()
        .zip(x0)
        .map(|(&(w, a), &x)| {
            let d = x - a;
            4.0 * w * d * d * d
        })
        .collect();
    let envelope = derivative_envelope(&derivs, safety)?;
    params
        .iter()
        .map(|&(w, a)| Cost::quartic(w, a, envelope))
        .collect()
}

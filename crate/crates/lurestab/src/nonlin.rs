//! Nonlinearity classes, concrete test nonlinearities, and numeric checks of
//! the pointwise and integral inequalities the stability criteria rest on.
//!
//! Class membership is defined by universally quantified inequalities, so the
//! verifiers are grid-based; the bundled kinds are piecewise linear or smooth
//! with breakpoints well inside the standard grid range.

use crate::system::SectorSlopeSpec;
use crate::{Error, Result};

/// Pointwise tolerance for class verifiers.
pub const POINTWISE_TOL: f64 = 1e-12;
/// Slack for integral-bound comparisons (absorbs quadrature error).
pub const INTEGRAL_TOL: f64 = 1e-8;
/// Absolute tolerance for adaptive quadrature.
pub const QUAD_TOL: f64 = 1e-10;

/// Bundled scalar nonlinearity shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// `clamp(xi*s, -xi, xi)`: slope in {0, xi}, sector [0, xi], odd.
    Saturation,
    /// Zero inside the unit deadzone, then a slope-`mu` ramp that rejoins the
    /// sector boundary `xi*s` at `s* = mu/(mu - xi)`; odd extension.
    DeadzoneRamp,
    /// `(xi^2/mu) * tanh((mu/xi) s)`: smooth, slope at zero `xi`, sector [0, xi].
    SmoothTanh,
}

impl Kind {
    pub fn parse(s: &str) -> Result<Kind> {
        match s {
            "saturation" => Ok(Kind::Saturation),
            "deadzone_ramp" => Ok(Kind::DeadzoneRamp),
            "smooth_tanh" => Ok(Kind::SmoothTanh),
            _ => Err(Error::InvalidArgument(format!(
                "unknown nonlinearity kind '{s}' (saturation | deadzone_ramp | smooth_tanh)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Kind::Saturation => "saturation",
            Kind::DeadzoneRamp => "deadzone_ramp",
            Kind::SmoothTanh => "smooth_tanh",
        }
    }
}

/// One scalar channel with its declared sector/slope bounds.
#[derive(Debug, Clone, Copy)]
pub struct Channel {
    pub kind: Kind,
    pub xi: f64,
    pub mu: f64,
}

impl Channel {
    pub fn new(kind: Kind, xi: f64, mu: f64) -> Result<Self> {
        if !(xi > 0.0) || !(mu > 0.0) || !xi.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidArgument("xi and mu must be positive finite".into()));
        }
        if mu < xi {
            return Err(Error::InvalidArgument(format!(
                "{} needs mu >= xi (slope reaches xi at the origin or on a segment); got xi={xi}, mu={mu}",
                kind.name()
            )));
        }
        Ok(Self { kind, xi, mu })
    }

    /// Rejoin point of the deadzone ramp with the sector boundary; infinite
    /// when mu == xi (the ramp never rejoins but stays inside the sector).
    fn rejoin(&self) -> f64 {
        if self.mu > self.xi {
            self.mu / (self.mu - self.xi)
        } else {
            f64::INFINITY
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        let (xi, mu) = (self.xi, self.mu);
        match self.kind {
            Kind::Saturation => (xi * s).clamp(-xi, xi),
            Kind::DeadzoneRamp => {
                let t = s.abs();
                let sign = if s < 0.0 { -1.0 } else { 1.0 };
                let sr = self.rejoin();
                let v = if t <= 1.0 {
                    0.0
                } else if t <= sr {
                    mu * (t - 1.0)
                } else {
                    xi * t
                };
                sign * v
            }
            Kind::SmoothTanh => (xi * xi / mu) * ((mu / xi) * s).tanh(),
        }
    }

    /// Closed-form `int_0^q phi(s) ds`. Even in `q` because the channel is odd.
    pub fn integral_from_zero(&self, q: f64) -> f64 {
        let (xi, mu) = (self.xi, self.mu);
        let t = q.abs();
        match self.kind {
            Kind::Saturation => {
                if t <= 1.0 {
                    0.5 * xi * t * t
                } else {
                    0.5 * xi + xi * (t - 1.0)
                }
            }
            Kind::DeadzoneRamp => {
                let sr = self.rejoin();
                if t <= 1.0 {
                    0.0
                } else if t <= sr {
                    0.5 * mu * (t - 1.0) * (t - 1.0)
                } else {
                    0.5 * mu * (sr - 1.0) * (sr - 1.0) + 0.5 * xi * (t * t - sr * sr)
                }
            }
            Kind::SmoothTanh => {
                let a = mu / xi;
                (xi * xi / mu) / a * ln_cosh(a * t)
            }
        }
    }

    /// Closed-form `int_{qa}^{qb} phi`.
    pub fn integral(&self, qa: f64, qb: f64) -> f64 {
        self.integral_from_zero(qb) - self.integral_from_zero(qa)
    }
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (0.5 * (1.0 + (-2.0 * a).exp())).ln()
}

/// Diagonal static nonlinearity: one scalar channel per loop signal, plus the
/// declared class flags shared by all channels.
#[derive(Debug, Clone)]
pub struct DiagonalNonlinearity {
    channels: Vec<Channel>,
}

impl DiagonalNonlinearity {
    pub fn new(channels: Vec<Channel>) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidArgument("need at least one channel".into()));
        }
        Ok(Self { channels })
    }

    pub fn n_q(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, i: usize) -> &Channel {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    /// Evaluate all channels at `q`.
    pub fn eval(&self, q: &[f64]) -> Vec<f64> {
        q.iter().zip(&self.channels).map(|(&s, ch)| ch.eval(s)).collect()
    }

    /// All bundled kinds are odd by construction.
    pub fn declared_odd(&self) -> bool {
        true
    }

    /// Largest slope bound over channels (well-posedness checks).
    pub fn max_mu(&self) -> f64 {
        self.channels.iter().map(|c| c.mu).fold(0.0, f64::max)
    }
}

/// Build the bundled test nonlinearity with per-channel bounds from `spec`.
pub fn make_test_nonlinearity(spec: &SectorSlopeSpec, kind: Kind) -> Result<DiagonalNonlinearity> {
    let channels = (0..spec.n_q())
        .map(|i| Channel::new(kind, spec.xi[i], spec.mu[i]))
        .collect::<Result<Vec<_>>>()?;
    DiagonalNonlinearity::new(channels)
}

/// Standard verification grid for one channel: 10_001 symmetric points over
/// `[-100*max(1, 1/xi), 100*max(1, 1/xi)]`.
pub fn standard_grid(xi: f64) -> Vec<f64> {
    let half = 100.0 * (1.0f64).max(1.0 / xi);
    let n = 10_001usize;
    (0..n).map(|k| -half + 2.0 * half * (k as f64) / ((n - 1) as f64)).collect()
}

/// Sector check: `phi(s) (xi^{-1} phi(s) - s) <= tol` at every grid point,
/// per channel.
pub fn verify_sector(phi: &DiagonalNonlinearity, xi: &[f64], grid: &[f64]) -> bool {
    phi.channels.iter().zip(xi).all(|(ch, &x)| {
        grid.iter().all(|&s| {
            let v = ch.eval(s);
            v * (v / x - s) <= POINTWISE_TOL
        })
    })
}

/// Slope check over the grid. Every pairwise difference quotient is a convex
/// combination of adjacent-point quotients, so checking consecutive pairs is
/// equivalent to checking all pairs, including the tolerance.
pub fn verify_slope(phi: &DiagonalNonlinearity, mu: &[f64], grid: &[f64]) -> bool {
    if grid.len() < 2 {
        return false;
    }
    phi.channels.iter().zip(mu).all(|(ch, &m)| {
        grid.windows(2).all(|w| {
            let dq = w[1] - w[0];
            if dq == 0.0 {
                return true;
            }
            let r = (ch.eval(w[1]) - ch.eval(w[0])) / dq;
            r >= -POINTWISE_TOL && r <= m + POINTWISE_TOL
        })
    })
}

/// Odd check: `|phi(s) + phi(-s)| <= tol` over the grid.
pub fn verify_odd(phi: &DiagonalNonlinearity, grid: &[f64]) -> bool {
    phi.channels
        .iter()
        .all(|ch| grid.iter().all(|&s| (ch.eval(s) + ch.eval(-s)).abs() <= POINTWISE_TOL))
}

/// Run all declared verifiers for every channel on its standard grid.
pub fn verify_declared(phi: &DiagonalNonlinearity) -> bool {
    phi.channels.iter().all(|ch| {
        let grid = standard_grid(ch.xi);
        let single = DiagonalNonlinearity::new(vec![*ch]).unwrap();
        verify_sector(&single, &[ch.xi], &grid)
            && verify_slope(&single, &[ch.mu], &grid)
            && verify_odd(&single, &grid)
    })
}

/// Adaptive Simpson quadrature with absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-14 {
            return Ok(left + right + delta / 15.0);
        }
        if depth == 0 {
            return Err(Error::Numerical("quadrature did not converge".into()));
        }
        Ok(recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)?
            + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)?)
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 60)
}

/// Slope-restriction upper bound on the running integral of one channel:
///
/// ```text
/// int_{qa}^{qb} phi(s) ds  <=  phi(qb)(qb - qa) - (phi(qb) - phi(qa))^2 / (2 mu)
/// ```
///
/// Returns `(lhs, rhs)`; the contract is `lhs <= rhs + INTEGRAL_TOL`. The
/// left side is evaluated by adaptive quadrature so the bound is exercised
/// independently of the closed-form integrals.
pub fn check_integral_bound_q(ch: &Channel, qa: f64, qb: f64, mu: f64) -> Result<(f64, f64)> {
    let lhs = adaptive_simpson(&|s| ch.eval(s), qa, qb, QUAD_TOL)?;
    let dphi = ch.eval(qb) - ch.eval(qa);
    let rhs = ch.eval(qb) * (qb - qa) - dphi * dphi / (2.0 * mu);
    Ok((lhs, rhs))
}

/// Matching upper bound for the sector-complement integrand:
///
/// ```text
/// int_{qa}^{qb} (xi s - phi(s)) ds
///   <=  -(phi(qb)-phi(qa))^2/(2 mu) - phi(qa)(qb - qa) + (xi/2)(qb^2 - qa^2)
/// ```
pub fn check_integral_bound_qtilde(
    ch: &Channel,
    qa: f64,
    qb: f64,
    xi: f64,
    mu: f64,
) -> Result<(f64, f64)> {
    let lhs = adaptive_simpson(&|s| xi * s - ch.eval(s), qa, qb, QUAD_TOL)?;
    let dphi = ch.eval(qb) - ch.eval(qa);
    let rhs =
        -dphi * dphi / (2.0 * mu) - ch.eval(qa) * (qb - qa) + 0.5 * xi * (qb * qb - qa * qa);
    Ok((lhs, rhs))
}

/// One sampled transition of a single channel.
#[derive(Debug, Clone, Copy)]
pub struct PointwiseSample {
    pub q_k: f64,
    pub q_k1: f64,
    pub phi_k: f64,
    pub phi_k1: f64,
}

/// Check the pointwise constraints the S-procedure terms encode, on sampled
/// data of one channel:
///
/// - sector at time k:          `phi_k (xi^{-1} phi_k - q_k) <= tol`
/// - slope across the step:     `dphi (mu^{-1} dphi - dq) <= tol`
/// - odd members additionally satisfy the two-sided bound
///   `-2 q_k phi_k <= dq (phi_k1 + phi_k) - phi_k xi^{-1} phi_k1 <= 2 q_k1 phi_k1`.
pub fn check_pointwise_constraints(
    samples: &[PointwiseSample],
    xi: f64,
    mu: f64,
    odd: bool,
) -> bool {
    let tol = POINTWISE_TOL;
    samples.iter().all(|s| {
        let sector = s.phi_k * (s.phi_k / xi - s.q_k) <= tol;
        let dphi = s.phi_k1 - s.phi_k;
        let dq = s.q_k1 - s.q_k;
        let slope = dphi * (dphi / mu - dq) <= tol;
        let odd_ok = if odd {
            let mid = dq * (s.phi_k1 + s.phi_k) - s.phi_k * s.phi_k1 / xi;
            mid >= -2.0 * s.q_k * s.phi_k - tol && mid <= 2.0 * s.q_k1 * s.phi_k1 + tol
        } else {
            true
        };
        sector && slope && odd_ok
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::SectorSlopeSpec;
    use nalgebra::DVector;

    fn one_channel(kind: Kind, xi: f64, mu: f64) -> Channel {
        Channel::new(kind, xi, mu).unwrap()
    }

    #[test]
    fn sector_verifier_basics() {
        let grid: Vec<f64> = (-500..=500).map(|k| k as f64 / 50.0).collect();
        let sat = DiagonalNonlinearity::new(vec![one_channel(Kind::Saturation, 1.0, 1.0)]).unwrap();
        assert!(verify_sector(&sat, &[1.0], &grid));
        // exceeding the sector: saturation declared against a smaller xi
        assert!(!verify_sector(&sat, &[0.99], &grid));
    }

    #[test]
    fn slope_verifier_rejects_negative_slope() {
        // phi(s) = s^2 is not slope-restricted on a symmetric grid
        struct Sq;
        let grid: Vec<f64> = (-10..=10).map(|k| k as f64 / 10.0).collect();
        let vals: Vec<f64> = grid.iter().map(|&s| s * s).collect();
        let ok = grid.windows(2).zip(vals.windows(2)).all(|(w, v)| {
            let r = (v[1] - v[0]) / (w[1] - w[0]);
            (-POINTWISE_TOL..=1.0 + POINTWISE_TOL).contains(&r)
        });
        assert!(!ok);
        let _ = Sq;
    }

    #[test]
    fn odd_verifier() {
        let grid: Vec<f64> = (-100..=100).map(|k| k as f64 / 10.0).collect();
        let tanh = DiagonalNonlinearity::new(vec![one_channel(Kind::SmoothTanh, 1.0, 1.0)]).unwrap();
        assert!(verify_odd(&tanh, &grid));
    }

    #[test]
    fn deadzone_ramp_values() {
        let ch = one_channel(Kind::DeadzoneRamp, 1.0, 2.0);
        assert_eq!(ch.eval(1.0), 0.0);
        assert!((ch.eval(2.0) - 2.0).abs() < 1e-15); // rejoin at s* = 2
        assert!((ch.eval(3.0) - 3.0).abs() < 1e-15); // on xi*s beyond
        assert!((ch.eval(-2.0) + 2.0).abs() < 1e-15);
        // chord at the rejoin point sits on the sector boundary
        assert!((ch.eval(2.0) / 2.0 - 1.0).abs() < 1e-15);
    }

    #[test]
    fn saturation_values() {
        let ch = one_channel(Kind::Saturation, 1.0, 1.0);
        assert!((ch.eval(0.5) - 0.5).abs() < 1e-15);
        assert!((ch.eval(10.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn smooth_tanh_matches_plain_tanh_at_unit_bounds() {
        let ch = one_channel(Kind::SmoothTanh, 1.0, 1.0);
        for s in [-2.0, -0.3, 0.0, 0.7, 1.9] {
            assert!((ch.eval(s) - s.tanh()).abs() < 1e-15);
        }
        // slope at zero is xi = 1
        let h = 1e-6;
        let slope = (ch.eval(h) - ch.eval(-h)) / (2.0 * h);
        assert!((slope - 1.0).abs() < 1e-9);
    }

    #[test]
    fn all_kinds_pass_declared_verifiers_on_standard_grid() {
        for kind in [Kind::Saturation, Kind::DeadzoneRamp, Kind::SmoothTanh] {
            for (xi, mu) in [(1.0, 1.0), (0.5, 1.0), (2.0, 4.0)] {
                if kind == Kind::DeadzoneRamp && mu == xi {
                    continue; // degenerate ramp allowed but exercised separately
                }
                let spec =
                    SectorSlopeSpec::new(DVector::from_element(2, xi), DVector::from_element(2, mu))
                        .unwrap();
                let phi = make_test_nonlinearity(&spec, kind).unwrap();
                assert!(verify_declared(&phi), "{kind:?} xi={xi} mu={mu}");
            }
        }
    }

    #[test]
    fn deadzone_ramp_with_equal_bounds_stays_in_class() {
        let spec = SectorSlopeSpec::uniform(1, 1.0, 1.0).unwrap();
        let phi = make_test_nonlinearity(&spec, Kind::DeadzoneRamp).unwrap();
        assert!(verify_declared(&phi));
    }

    #[test]
    fn make_rejects_mu_below_xi() {
        let spec = SectorSlopeSpec::new(
            DVector::from_element(1, 2.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        assert!(make_test_nonlinearity(&spec, Kind::Saturation).is_err());
    }

    #[test]
    fn integral_bound_q_linear_is_tight() {
        // phi = mu * s realized as saturation with xi = mu on [0, 1] (linear there)
        let mu = 1.7;
        let ch = one_channel(Kind::Saturation, mu, mu);
        let (lhs, rhs) = check_integral_bound_q(&ch, 0.0, 1.0, mu).unwrap();
        assert!((lhs - mu / 2.0).abs() < 1e-9);
        assert!((rhs - mu / 2.0).abs() < 1e-12);
        assert!(lhs <= rhs + INTEGRAL_TOL);
    }

    #[test]
    fn integral_bound_q_saturation_tight_at_two() {
        let ch = one_channel(Kind::Saturation, 1.0, 1.0);
        let (lhs, rhs) = check_integral_bound_q(&ch, 0.0, 2.0, 1.0).unwrap();
        assert!((lhs - 1.5).abs() < 1e-9, "lhs = {lhs}");
        assert!((rhs - 1.5).abs() < 1e-12, "rhs = {rhs}");
    }

    #[test]
    fn integral_bound_qtilde_boundary_cases() {
        // phi = xi*s with mu = xi: both sides zero on [0, 1]
        let xi = 1.3;
        let ch = one_channel(Kind::Saturation, xi, xi);
        let (lhs, rhs) = check_integral_bound_qtilde(&ch, 0.0, 0.9, xi, xi).unwrap();
        assert!(lhs.abs() < 1e-9);
        assert!(rhs.abs() >= lhs - INTEGRAL_TOL);
        // deadzone: phi = 0 inside the deadzone, integrand is xi*s
        let ch = one_channel(Kind::DeadzoneRamp, 1.0, 2.0);
        let (lhs, rhs) = check_integral_bound_qtilde(&ch, 0.0, 1.0, 1.0, 2.0).unwrap();
        assert!((lhs - 0.5).abs() < 1e-9);
        assert!((rhs - 0.5).abs() < 1e-12);
    }

    #[test]
    fn integral_bounds_hold_on_random_pairs_every_kind() {
        let mut state = 0x243f6a8885a308d3u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 12.0 - 6.0
        };
        for kind in [Kind::Saturation, Kind::DeadzoneRamp, Kind::SmoothTanh] {
            let ch = one_channel(kind, 1.0, 2.0);
            for _ in 0..1000 {
                let (qa, qb) = (next(), next());
                let (l1, r1) = check_integral_bound_q(&ch, qa, qb, ch.mu).unwrap();
                assert!(
                    l1 <= r1 + INTEGRAL_TOL,
                    "{kind:?} Q bound violated at ({qa}, {qb}): {l1} > {r1}"
                );
                let (l2, r2) = check_integral_bound_qtilde(&ch, qa, qb, ch.xi, ch.mu).unwrap();
                assert!(
                    l2 <= r2 + INTEGRAL_TOL,
                    "{kind:?} Qtilde bound violated at ({qa}, {qb}): {l2} > {r2}"
                );
            }
        }
    }

    #[test]
    fn closed_form_integrals_match_quadrature() {
        for kind in [Kind::Saturation, Kind::DeadzoneRamp, Kind::SmoothTanh] {
            let ch = one_channel(kind, 1.0, 2.0);
            for (qa, qb) in [(0.0, 0.5), (-1.5, 2.5), (3.0, -0.2), (0.7, 0.7)] {
                let quad = adaptive_simpson(&|s| ch.eval(s), qa, qb, QUAD_TOL).unwrap();
                let closed = ch.integral(qa, qb);
                assert!((quad - closed).abs() < 1e-8, "{kind:?} on ({qa},{qb})");
            }
        }
    }

    #[test]
    fn pointwise_all_zero_sample_passes() {
        let s = [PointwiseSample { q_k: 0.0, q_k1: 0.0, phi_k: 0.0, phi_k1: 0.0 }];
        assert!(check_pointwise_constraints(&s, 1.0, 1.0, true));
    }

    #[test]
    fn pointwise_linear_boundary_member() {
        let xi = 1.4;
        let (q_k, q_k1) = (1.0, 2.0);
        let s = [PointwiseSample { q_k, q_k1, phi_k: xi * q_k, phi_k1: xi * q_k1 }];
        assert!(check_pointwise_constraints(&s, xi, xi, true));
    }

    #[test]
    fn pointwise_sector_violation_detected() {
        let xi = 1.0;
        let s = [PointwiseSample { q_k: 1.0, q_k1: 1.0, phi_k: 2.0 * xi, phi_k1: 2.0 * xi }];
        assert!(!check_pointwise_constraints(&s, xi, xi, false));
    }

    #[test]
    fn pointwise_random_tuples_from_odd_kinds() {
        let mut state = 0x13198a2e03707344u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 10.0 - 5.0
        };
        for kind in [Kind::Saturation, Kind::DeadzoneRamp, Kind::SmoothTanh] {
            let ch = one_channel(kind, 1.0, 2.0);
            let samples: Vec<PointwiseSample> = (0..1000)
                .map(|_| {
                    let q_k = next();
                    let q_k1 = next();
                    PointwiseSample { q_k, q_k1, phi_k: ch.eval(q_k), phi_k1: ch.eval(q_k1) }
                })
                .collect();
            assert!(
                check_pointwise_constraints(&samples, ch.xi, ch.mu, true),
                "{kind:?} violated pointwise constraints"
            );
        }
    }
}

//! Skid-steer vehicle model and fixed-step propagation.
//!
//! The state is `(x, y, theta, v_left, v_right)`: planar pose plus the two
//! tread velocities. Controls are tread accelerations. Integration is
//! classical fixed-step RK4, which keeps propagation deterministic and
//! replayable: identical inputs always produce bit-identical trajectories.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::Trajectory;
use crate::scalar::{real, to_f64, Real};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("maneuver duration {duration} is not a positive multiple of dt = {dt}")]
    MisalignedDuration { duration: f64, dt: f64 },
    #[error("invalid dynamics parameters: {0}")]
    InvalidParams(String),
}

/// Vehicle state. `theta` is kept in `(-pi, pi]`; tread velocities are
/// clamped to `[-v_max, v_max]` after every integration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State<T> {
    pub x: T,
    pub y: T,
    pub theta: T,
    pub v_left: T,
    pub v_right: T,
}

impl<T: Real> State<T> {
    pub fn new(x: T, y: T, theta: T, v_left: T, v_right: T) -> Self {
        Self { x, y, theta, v_left, v_right }
    }

    /// Workspace projection `(x, y)`.
    #[inline]
    pub fn position(&self) -> [T; 2] {
        [self.x, self.y]
    }
}

/// Tread accelerations, each within `[-a_max, a_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Control<T> {
    pub a_left: T,
    pub a_right: T,
}

impl<T: Real> Control<T> {
    pub fn new(a_left: T, a_right: T) -> Self {
        Self { a_left, a_right }
    }

    pub fn zero() -> Self {
        Self { a_left: T::zero(), a_right: T::zero() }
    }
}

/// A piecewise-constant control applied for a fixed duration. Durations are
/// positive integer multiples of the integration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Maneuver<T> {
    pub control: Control<T>,
    pub duration: T,
}

impl<T: Real> Maneuver<T> {
    pub fn new(a_left: T, a_right: T, duration: T) -> Self {
        Self { control: Control::new(a_left, a_right), duration }
    }
}

/// Vehicle and integrator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicsParams<T> {
    /// Lateral distance between the treads (meters).
    pub tread_separation: T,
    /// Tread speed limit (m/s).
    pub v_max: T,
    /// Tread acceleration limit (m/s^2).
    pub a_max: T,
    /// Integration step (seconds).
    pub dt: T,
}

impl<T: Real> Default for DynamicsParams<T> {
    fn default() -> Self {
        Self {
            tread_separation: real(0.5),
            v_max: real(2.0),
            a_max: real(1.0),
            dt: real(0.02),
        }
    }
}

impl<T: Real> DynamicsParams<T> {
    pub fn validate(&self) -> Result<(), SimError> {
        let fields = [
            ("tread_separation", self.tread_separation),
            ("v_max", self.v_max),
            ("a_max", self.a_max),
            ("dt", self.dt),
        ];
        for (name, v) in fields {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(SimError::InvalidParams(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Number of integration steps for `duration`, rejecting durations that
    /// are not positive multiples of `dt` (up to floating-point slack).
    pub fn steps_for(&self, duration: T) -> Result<usize, SimError> {
        let ratio = duration / self.dt;
        let rounded = ratio.round();
        let steps = rounded.to_f64().unwrap_or(-1.0);
        let tol = rounded.max(T::one()) * T::epsilon() * real(256.0);
        if !(duration > T::zero()) || steps < 1.0 || (ratio - rounded).abs() > tol {
            return Err(SimError::MisalignedDuration {
                duration: to_f64(duration),
                dt: to_f64(self.dt),
            });
        }
        Ok(steps as usize)
    }
}

/// Time derivative of a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative<T> {
    pub dx: T,
    pub dy: T,
    pub dtheta: T,
    pub dv_left: T,
    pub dv_right: T,
}

/// Normalize an angle into `(-pi, pi]`.
#[inline]
pub fn normalize_angle<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut r = a % two_pi;
    if r > T::PI() {
        r = r - two_pi;
    } else if r <= -T::PI() {
        r = r + two_pi;
    }
    r
}

#[inline]
fn clamp_speed<T: Real>(v: T, v_max: T) -> T {
    v.min(v_max).max(-v_max)
}

/// Dynamics `f(x, u)`. The kinematic rates use tread speeds saturated at
/// `v_max`, so the workspace speed never exceeds `v_max` even for the
/// intermediate integrator stages that momentarily overshoot the limit;
/// this is what makes the time-scaled heuristic a true lower bound.
pub fn derivative<T: Real>(s: &State<T>, u: &Control<T>, p: &DynamicsParams<T>) -> StateDerivative<T> {
    let vl = clamp_speed(s.v_left, p.v_max);
    let vr = clamp_speed(s.v_right, p.v_max);
    let half = real::<T>(0.5);
    let v = (vl + vr) * half;
    StateDerivative {
        dx: v * s.theta.cos(),
        dy: v * s.theta.sin(),
        dtheta: (vr - vl) / p.tread_separation,
        dv_left: u.a_left,
        dv_right: u.a_right,
    }
}

#[inline]
fn advanced<T: Real>(s: &State<T>, d: &StateDerivative<T>, h: T) -> State<T> {
    State {
        x: s.x + d.dx * h,
        y: s.y + d.dy * h,
        theta: s.theta + d.dtheta * h,
        v_left: s.v_left + d.dv_left * h,
        v_right: s.v_right + d.dv_right * h,
    }
}

/// Advance one step of size `p.dt` with classical RK4, then clamp tread
/// velocities to `[-v_max, v_max]` and renormalize the heading.
pub fn step<T: Real>(s: &State<T>, u: &Control<T>, p: &DynamicsParams<T>) -> State<T> {
    let dt = p.dt;
    let half = real::<T>(0.5);
    let sixth = T::one() / real(6.0);
    let two = real::<T>(2.0);

    let k1 = derivative(s, u, p);
    let k2 = derivative(&advanced(s, &k1, dt * half), u, p);
    let k3 = derivative(&advanced(s, &k2, dt * half), u, p);
    let k4 = derivative(&advanced(s, &k3, dt), u, p);

    let combined = StateDerivative {
        dx: k1.dx + two * k2.dx + two * k3.dx + k4.dx,
        dy: k1.dy + two * k2.dy + two * k3.dy + k4.dy,
        dtheta: k1.dtheta + two * k2.dtheta + two * k3.dtheta + k4.dtheta,
        dv_left: k1.dv_left + two * k2.dv_left + two * k3.dv_left + k4.dv_left,
        dv_right: k1.dv_right + two * k2.dv_right + two * k3.dv_right + k4.dv_right,
    };
    let mut out = advanced(s, &combined, dt * sixth);
    out.v_left = clamp_speed(out.v_left, p.v_max);
    out.v_right = clamp_speed(out.v_right, p.v_max);
    out.theta = normalize_angle(out.theta);
    out
}

/// Propagate `m` from `s0`, returning `steps + 1` time-stamped states.
pub fn propagate<T: Real>(
    s0: &State<T>,
    m: &Maneuver<T>,
    p: &DynamicsParams<T>,
) -> Result<Trajectory<T>, SimError> {
    let steps = p.steps_for(m.duration)?;
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push((T::zero(), *s0));
    let mut s = *s0;
    for k in 1..=steps {
        s = step(&s, &m.control, p);
        let t = if k == steps {
            m.duration
        } else {
            T::from_usize(k).unwrap() * p.dt
        };
        samples.push((t, s));
    }
    Ok(Trajectory::new(samples, *m))
}

/// Sample a maneuver with accelerations uniform in `[-a_max, a_max]` and a
/// duration uniform over the `dt` multiples inside `dur_range` (bounds must
/// themselves be `dt` multiples).
pub fn sample_random_maneuver<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    p: &DynamicsParams<T>,
    dur_range: (T, T),
) -> Maneuver<T> {
    let a_left = rng.gen_range(-p.a_max..=p.a_max);
    let a_right = rng.gen_range(-p.a_max..=p.a_max);
    let k_lo = p
        .steps_for(dur_range.0)
        .expect("duration range lower bound must be a positive multiple of dt");
    let k_hi = p
        .steps_for(dur_range.1)
        .expect("duration range upper bound must be a positive multiple of dt");
    assert!(k_lo <= k_hi, "empty duration range");
    let k = rng.gen_range(k_lo..=k_hi);
    Maneuver {
        control: Control { a_left, a_right },
        duration: T::from_usize(k).unwrap() * p.dt,
    }
}

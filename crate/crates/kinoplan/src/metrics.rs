//! Trajectories, plans, duration cost, and the trajectory dispersion metric.
//!
//! Dispersion approximates the area between the workspace projections of two
//! trajectories: both are resampled at `k` synchronized points in normalized
//! time, and the inter-trajectory distance is integrated trapezoidally
//! against the mean of the two arc-length increments. The formula is
//! symmetric by construction and exact for parallel straight segments.

use std::io::{self, Write};

use thiserror::Error;

use crate::scalar::{real, Real};
use crate::sim::{Maneuver, State};

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Time-stamped state sequence induced by propagating one maneuver.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    samples: Vec<(T, State<T>)>,
    source: Maneuver<T>,
}

impl<T: Real> Trajectory<T> {
    /// `samples` must be non-empty with strictly increasing timestamps
    /// starting at zero; `sim::propagate` guarantees this.
    pub fn new(samples: Vec<(T, State<T>)>, source: Maneuver<T>) -> Self {
        debug_assert!(!samples.is_empty());
        debug_assert!(samples[0].0 == T::zero());
        debug_assert!(samples.windows(2).all(|w| w[0].0 < w[1].0));
        Self { samples, source }
    }

    pub fn samples(&self) -> &[(T, State<T>)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn start_state(&self) -> &State<T> {
        &self.samples[0].1
    }

    pub fn end_state(&self) -> &State<T> {
        &self.samples[self.samples.len() - 1].1
    }

    /// Final timestamp; equals the source maneuver duration.
    pub fn duration(&self) -> T {
        self.samples[self.samples.len() - 1].0
    }

    pub fn source(&self) -> &Maneuver<T> {
        &self.source
    }
}

/// Non-negative trajectory cost in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Cost<T>(pub T);

/// Duration cost: the final timestamp of the trajectory.
pub fn trajectory_cost<T: Real>(t: &Trajectory<T>) -> Cost<T> {
    assert!(!t.is_empty(), "cost of an empty trajectory is undefined");
    Cost(t.duration())
}

/// An ordered maneuver sequence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Plan<T> {
    pub maneuvers: Vec<Maneuver<T>>,
}

impl<T: Real> Plan<T> {
    pub fn total_duration(&self) -> T {
        self.maneuvers.iter().fold(T::zero(), |acc, m| acc + m.duration)
    }
}

/// Workspace points at `k` parameter values equally spaced in normalized
/// time, linearly interpolated between stored states. Endpoints are copied
/// bit-exactly.
pub fn resample<T: Real>(t: &Trajectory<T>, k: usize) -> Vec<[T; 2]> {
    assert!(k >= 2, "resample needs at least two points");
    let samples = t.samples();
    let total = t.duration();
    let mut out = Vec::with_capacity(k);
    out.push(samples[0].1.position());
    if samples.len() > 1 && total > T::zero() {
        let last = T::from_usize(k - 1).unwrap();
        let mut seg = 0usize;
        for m in 1..k - 1 {
            let tau = T::from_usize(m).unwrap() / last * total;
            while seg + 2 < samples.len() && samples[seg + 1].0 <= tau {
                seg += 1;
            }
            let (t0, s0) = samples[seg];
            let (t1, s1) = samples[seg + 1];
            let w = (tau - t0) / (t1 - t0);
            out.push([s0.x + w * (s1.x - s0.x), s0.y + w * (s1.y - s0.y)]);
        }
    } else {
        for _ in 1..k - 1 {
            out.push(samples[0].1.position());
        }
    }
    out.push(samples[samples.len() - 1].1.position());
    out
}

#[inline]
fn dist<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    (dx * dx + dy * dy).sqrt()
}

/// Dispersion between two resampled polylines (both length `k`).
pub fn dispersion_of_points<T: Real>(pa: &[[T; 2]], pb: &[[T; 2]]) -> T {
    assert_eq!(pa.len(), pb.len());
    assert!(pa.len() >= 2);
    let half = real::<T>(0.5);
    let mut total = T::zero();
    for i in 0..pa.len() - 1 {
        let d0 = dist(pa[i], pb[i]);
        let d1 = dist(pa[i + 1], pb[i + 1]);
        let ds = (dist(pa[i + 1], pa[i]) + dist(pb[i + 1], pb[i])) * half;
        total = total + (d0 + d1) * half * ds;
    }
    total
}

/// Approximate area between the workspace projections of two trajectories.
pub fn dispersion<T: Real>(a: &Trajectory<T>, b: &Trajectory<T>, k: usize) -> T {
    dispersion_of_points(&resample(a, k), &resample(b, k))
}

/// Number of resample points used by the curation dispersion metric
/// (32 segments).
pub const DISPERSION_POINTS: usize = 33;

/// Write trajectories in the text dump format: one `t x y theta v_l v_r`
/// line per sample, trajectories separated by a blank line.
pub fn write_trajectory_blocks<T: Real, W: Write>(
    blocks: &[&[(T, State<T>)]],
    out: &mut W,
) -> io::Result<()> {
    for (i, block) in blocks.iter().enumerate() {
        if i > 0 {
            writeln!(out)?;
        }
        for (t, s) in block.iter() {
            writeln!(out, "{} {} {} {} {} {}", t, s.x, s.y, s.theta, s.v_left, s.v_right)?;
        }
    }
    Ok(())
}

/// Parse the dump format back into per-trajectory sample lists.
pub fn read_trajectory_blocks(input: &str) -> Result<Vec<Vec<(f64, State<f64>)>>, DumpError> {
    let mut blocks: Vec<Vec<(f64, State<f64>)>> = Vec::new();
    let mut current: Vec<(f64, State<f64>)> = Vec::new();
    for (idx, raw) in input.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            if !current.is_empty() {
                blocks.push(std::mem::take(&mut current));
            }
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(DumpError::Parse {
                line: idx + 1,
                msg: format!("expected 6 numbers, got {}", fields.len()),
            });
        }
        let mut v = [0.0f64; 6];
        for (slot, f) in v.iter_mut().zip(&fields) {
            *slot = f.parse().map_err(|_| DumpError::Parse {
                line: idx + 1,
                msg: format!("bad number {f:?}"),
            })?;
        }
        current.push((v[0], State::new(v[1], v[2], v[3], v[4], v[5])));
    }
    if !current.is_empty() {
        blocks.push(current);
    }
    Ok(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{propagate, DynamicsParams, Maneuver};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight(x0: f64, y0: f64, speed: f64, dur: f64) -> Trajectory<f64> {
        let p = DynamicsParams::default();
        propagate(&State::new(x0, y0, 0.0, speed, speed), &Maneuver::new(0.0, 0.0, dur), &p).unwrap()
    }

    fn random_trajectory(rng: &mut ChaCha8Rng) -> Trajectory<f64> {
        let p = DynamicsParams::default();
        let s0 = State::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-1.5..1.5),
            rng.gen_range(-1.5..1.5),
        );
        let m = crate::sim::sample_random_maneuver(rng, &p, (0.5, 2.0));
        propagate(&s0, &m, &p).unwrap()
    }

    #[test]
    fn cost_of_single_state_is_zero() {
        let t = Trajectory::new(vec![(0.0, State::new(0.0, 0.0, 0.0, 0.0, 0.0))], Maneuver::new(0.0, 0.0, 1.0));
        assert_eq!(trajectory_cost(&t).0, 0.0);
    }

    #[test]
    fn cost_counts_duration() {
        let t = straight(0.0, 0.0, 1.0, 1.0);
        assert_eq!(t.len(), 51);
        assert!((trajectory_cost(&t).0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plan_duration_is_additive() {
        let a = straight(0.0, 0.0, 1.0, 0.8);
        let b = straight(0.8, 0.0, 1.0, 1.4);
        let plan = Plan { maneuvers: vec![*a.source(), *b.source()] };
        let sum = trajectory_cost(&a).0 + trajectory_cost(&b).0;
        assert!((plan.total_duration() - sum).abs() < 1e-12);
    }

    #[test]
    fn resample_straight_three_points() {
        let t = straight(0.0, 0.0, 1.0, 2.0);
        let pts = resample(&t, 3);
        assert_eq!(pts[0], [0.0, 0.0]);
        assert!((pts[1][0] - 1.0).abs() < 1e-9 && pts[1][1].abs() < 1e-12);
        assert!((pts[2][0] - 2.0).abs() < 1e-9 && pts[2][1].abs() < 1e-12);
    }

    #[test]
    fn resample_two_points_returns_endpoints() {
        let t = straight(0.3, -0.7, 1.3, 1.5);
        let pts = resample(&t, 2);
        assert_eq!(pts[0], t.start_state().position());
        assert_eq!(pts[1], t.end_state().position());
    }

    #[test]
    fn resample_start_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let t = random_trajectory(&mut rng);
            let pts = resample(&t, 17);
            assert_eq!(pts[0], t.start_state().position());
            assert_eq!(pts[16], t.end_state().position());
        }
    }

    #[test]
    fn dispersion_identical_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let t = random_trajectory(&mut rng);
            assert_eq!(dispersion(&t, &t, DISPERSION_POINTS), 0.0);
        }
    }

    #[test]
    fn dispersion_parallel_lines_is_rectangle_area() {
        // Two 4 m straight segments, 1 m apart: area = 4.
        let a = straight(0.0, 0.0, 2.0, 2.0);
        let b = straight(0.0, 1.0, 2.0, 2.0);
        let d = dispersion(&a, &b, 33);
        assert!((d - 4.0).abs() < 1e-9, "d = {d}");
    }

    #[test]
    fn dispersion_is_exactly_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let a = random_trajectory(&mut rng);
            let b = random_trajectory(&mut rng);
            assert_eq!(dispersion(&a, &b, 33), dispersion(&b, &a, 33));
        }
    }

    #[test]
    fn dispersion_nonnegative_and_positive_for_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let a = random_trajectory(&mut rng);
            let b = random_trajectory(&mut rng);
            assert!(dispersion(&a, &b, 33) >= 0.0);
        }
        let a = straight(0.0, 0.0, 1.0, 1.0);
        let b = straight(0.0, 3.0, 1.0, 1.0);
        assert!(dispersion(&a, &b, 33) > 0.0);
    }

    #[test]
    fn dispersion_rigid_motion_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let rotate = |t: &Trajectory<f64>, ang: f64, tx: f64, ty: f64| {
            let (sin, cos) = ang.sin_cos();
            let samples = t
                .samples()
                .iter()
                .map(|(ts, s)| {
                    (
                        *ts,
                        State::new(
                            cos * s.x - sin * s.y + tx,
                            sin * s.x + cos * s.y + ty,
                            s.theta + ang,
                            s.v_left,
                            s.v_right,
                        ),
                    )
                })
                .collect();
            Trajectory::new(samples, *t.source())
        };
        for _ in 0..20 {
            let a = random_trajectory(&mut rng);
            let b = random_trajectory(&mut rng);
            let base = dispersion(&a, &b, 33);
            let moved = dispersion(&rotate(&a, 0.83, 3.0, -1.5), &rotate(&b, 0.83, 3.0, -1.5), 33);
            assert!((base - moved).abs() < 1e-9);
        }
    }

    #[test]
    fn dispersion_refines_as_k_doubles() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let pairs: Vec<_> = (0..50)
            .map(|_| (random_trajectory(&mut rng), random_trajectory(&mut rng)))
            .collect();
        let mean_gap = |k: usize| {
            pairs
                .iter()
                .map(|(a, b)| (dispersion(a, b, k) - dispersion(a, b, 2 * k)).abs())
                .sum::<f64>()
                / pairs.len() as f64
        };
        let g8 = mean_gap(8);
        let g16 = mean_gap(16);
        let g32 = mean_gap(32);
        assert!(g8 > g16 && g16 > g32, "gaps {g8} {g16} {g32}");
    }

    #[test]
    fn trajectory_dump_round_trip() {
        let a = straight(0.25, -1.5, 1.0, 0.5);
        let b = straight(0.0, 2.0, -0.5, 1.0);
        let mut buf = Vec::new();
        write_trajectory_blocks(&[a.samples(), b.samples()], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let blocks = read_trajectory_blocks(&text).unwrap();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].len(), a.len());
        for ((t0, s0), (t1, s1)) in a.samples().iter().zip(&blocks[0]) {
            assert_eq!(t0, t1);
            assert_eq!(s0, s1);
        }
    }

    #[test]
    fn trajectory_dump_reports_bad_line() {
        let err = read_trajectory_blocks("0 0 0 0 0 0\n0.02 nope 0 0 0 0\n").unwrap_err();
        match err {
            DumpError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}

//! 2D workspaces: bounds, box obstacles, goal regions, collision queries,
//! the cost-to-go heuristic, local map rasterization, and random
//! environment generation.
//!
//! Obstacles are axis-aligned rectangles and the robot footprint is an
//! oriented rectangle, so collision checks are exact separating-axis tests.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::{self, Write};
use thiserror::Error;

use crate::metrics::Trajectory;
use crate::scalar::{real, Real};
use crate::sim::State;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("coverage target unreachable after {rejections} consecutive rejections ({placed} obstacles placed)")]
    InfeasibleCoverage { rejections: usize, placed: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Axis-aligned rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub x_min: T,
    pub y_min: T,
    pub x_max: T,
    pub y_max: T,
}

impl<T: Real> Rect<T> {
    pub fn new(x_min: T, y_min: T, x_max: T, y_max: T) -> Self {
        Self { x_min, y_min, x_max, y_max }
    }

    pub fn width(&self) -> T {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> T {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    /// Closed containment test.
    #[inline]
    pub fn contains(&self, x: T, y: T) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    /// Area of the intersection with `other` (zero if disjoint).
    pub fn intersection_area(&self, other: &Rect<T>) -> T {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w > T::zero() && h > T::zero() {
            w * h
        } else {
            T::zero()
        }
    }

    /// Squared distance from a point to the rectangle (zero inside).
    #[inline]
    pub fn point_dist_sq(&self, x: T, y: T) -> T {
        let dx = (self.x_min - x).max(T::zero()).max(x - self.x_max);
        let dy = (self.y_min - y).max(T::zero()).max(y - self.y_max);
        dx * dx + dy * dy
    }

    pub fn corners(&self) -> [[T; 2]; 4] {
        [
            [self.x_min, self.y_min],
            [self.x_max, self.y_min],
            [self.x_max, self.y_max],
            [self.x_min, self.y_max],
        ]
    }
}

/// Robot footprint rectangle: `length` along the heading, `width` lateral,
/// centered on `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint<T> {
    pub length: T,
    pub width: T,
}

impl<T: Real> Default for Footprint<T> {
    fn default() -> Self {
        Self { length: real(1.0), width: real(0.6) }
    }
}

/// Goal disc in the workspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalRegion<T> {
    pub cx: T,
    pub cy: T,
    pub radius: T,
}

impl<T: Real> GoalRegion<T> {
    pub fn new(cx: T, cy: T, radius: T) -> Self {
        Self { cx, cy, radius }
    }
}

/// Which scale the cost-to-go heuristic reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HeuristicMode {
    /// Distance to the goal disc divided by `v_max` (seconds). Never
    /// overestimates the remaining duration, so pruning stays sound.
    #[default]
    TimeScaled,
    /// Raw workspace distance to the goal disc (meters).
    Euclidean,
}

/// Distance from a state's workspace projection to the goal disc, either in
/// meters or scaled to a duration lower bound.
pub fn heuristic_in_mode<T: Real>(s: &State<T>, g: &GoalRegion<T>, v_max: T, mode: HeuristicMode) -> T {
    let dx = s.x - g.cx;
    let dy = s.y - g.cy;
    let surplus = ((dx * dx + dy * dy).sqrt() - g.radius).max(T::zero());
    match mode {
        HeuristicMode::TimeScaled => surplus / v_max,
        HeuristicMode::Euclidean => surplus,
    }
}

/// Admissible cost-to-go estimate in seconds.
pub fn heuristic<T: Real>(s: &State<T>, g: &GoalRegion<T>, v_max: T) -> T {
    heuristic_in_mode(s, g, v_max, HeuristicMode::TimeScaled)
}

/// Goal membership: closed disc.
pub fn in_goal<T: Real>(s: &State<T>, g: &GoalRegion<T>) -> bool {
    let dx = s.x - g.cx;
    let dy = s.y - g.cy;
    dx * dx + dy * dy <= g.radius * g.radius
}

/// Corners of the oriented footprint at a state.
pub fn footprint_corners<T: Real>(s: &State<T>, fp: &Footprint<T>) -> [[T; 2]; 4] {
    let (sin, cos) = s.theta.sin_cos();
    let half = real::<T>(0.5);
    let hl = fp.length * half;
    let hw = fp.width * half;
    let ax = [cos * hl, sin * hl];
    let lat = [-sin * hw, cos * hw];
    [
        [s.x + ax[0] + lat[0], s.y + ax[1] + lat[1]],
        [s.x + ax[0] - lat[0], s.y + ax[1] - lat[1]],
        [s.x - ax[0] - lat[0], s.y - ax[1] - lat[1]],
        [s.x - ax[0] + lat[0], s.y - ax[1] + lat[1]],
    ]
}

/// Workspace: bounds, obstacles, and the robot footprint used for state
/// collision checks. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workspace<T> {
    pub bounds: Rect<T>,
    pub obstacles: Vec<Rect<T>>,
    pub footprint: Footprint<T>,
}

impl<T: Real> Workspace<T> {
    pub fn empty(bounds: Rect<T>, footprint: Footprint<T>) -> Self {
        Self { bounds, obstacles: Vec::new(), footprint }
    }

    /// Point membership in the obstacle set (closed rectangles).
    #[inline]
    pub fn point_in_obstacle(&self, x: T, y: T) -> bool {
        self.obstacles.iter().any(|o| o.contains(x, y))
    }

    /// True iff the oriented footprint at `s` intersects an obstacle or
    /// exits the bounds. Exact separating-axis test; touching counts as
    /// a collision.
    pub fn state_in_collision(&self, s: &State<T>) -> bool {
        let corners = footprint_corners(s, &self.footprint);
        for c in &corners {
            if !self.bounds.contains(c[0], c[1]) {
                return true;
            }
        }
        if self.obstacles.is_empty() {
            return false;
        }
        let half = real::<T>(0.5);
        let hl = self.footprint.length * half;
        let hw = self.footprint.width * half;
        let circ_sq = hl * hl + hw * hw;
        let (sin, cos) = s.theta.sin_cos();
        for obs in &self.obstacles {
            if obs.point_dist_sq(s.x, s.y) > circ_sq {
                continue;
            }
            if obb_overlaps_rect(&corners, s, (cos, sin), hl, hw, obs) {
                return true;
            }
        }
        false
    }

    /// True iff every stored state of the trajectory is collision free.
    pub fn trajectory_collision_free(&self, t: &Trajectory<T>) -> bool {
        assert!(!t.is_empty());
        t.samples().iter().all(|(_, s)| !self.state_in_collision(s))
    }
}

/// SAT overlap between the footprint (given by corners, center and axes)
/// and an axis-aligned rectangle.
fn obb_overlaps_rect<T: Real>(
    corners: &[[T; 2]; 4],
    s: &State<T>,
    (cos, sin): (T, T),
    hl: T,
    hw: T,
    rect: &Rect<T>,
) -> bool {
    // World axes: project footprint corners against the rect extents.
    let mut min_x = corners[0][0];
    let mut max_x = min_x;
    let mut min_y = corners[0][1];
    let mut max_y = min_y;
    for c in &corners[1..] {
        min_x = min_x.min(c[0]);
        max_x = max_x.max(c[0]);
        min_y = min_y.min(c[1]);
        max_y = max_y.max(c[1]);
    }
    if max_x < rect.x_min || min_x > rect.x_max || max_y < rect.y_min || min_y > rect.y_max {
        return false;
    }
    // Footprint axes: project rect corners against the footprint extents.
    for (axis, extent) in [([cos, sin], hl), ([-sin, cos], hw)] {
        let center = s.x * axis[0] + s.y * axis[1];
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for c in rect.corners() {
            let p = c[0] * axis[0] + c[1] * axis[1];
            lo = lo.min(p);
            hi = hi.max(p);
        }
        if hi < center - extent || lo > center + extent {
            return false;
        }
    }
    true
}

/// Configuration of the egocentric local window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMapConfig<T> {
    /// Cells per side (`G >= 2`).
    pub grid_size: usize,
    /// Window side length in meters.
    pub window_side: T,
}

impl<T: Real> Default for LocalMapConfig<T> {
    fn default() -> Self {
        Self { grid_size: 32, window_side: real(10.0) }
    }
}

/// Egocentric occupancy and normalized-heuristic grids. Row-major with
/// `index = row * grid_size + col`; columns follow +x, rows follow +y.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalMaps<T> {
    pub grid_size: usize,
    /// 1 where the cell center lies inside an obstacle or out of bounds.
    pub occupancy: Vec<u8>,
    /// Heuristic at the cell centers, min-max normalized into [0, 1]
    /// (all-zero when the window is constant).
    pub heuristic: Vec<T>,
}

impl<T: Real> LocalMaps<T> {
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.grid_size + col
    }
}

/// Sample the axis-aligned square window of side `window_side` centered on
/// the state's workspace projection at `G x G` cell centers.
pub fn rasterize_local<T: Real>(
    w: &Workspace<T>,
    g: &GoalRegion<T>,
    s: &State<T>,
    cfg: &LocalMapConfig<T>,
) -> LocalMaps<T> {
    assert!(cfg.grid_size >= 2, "local grid needs at least 2 cells per side");
    assert!(cfg.window_side > T::zero());
    let gsz = cfg.grid_size;
    let cell = cfg.window_side / T::from_usize(gsz).unwrap();
    let half = real::<T>(0.5);
    let x0 = s.x - cfg.window_side * half;
    let y0 = s.y - cfg.window_side * half;

    let mut occupancy = Vec::with_capacity(gsz * gsz);
    let mut heuristic = Vec::with_capacity(gsz * gsz);
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for row in 0..gsz {
        let cy = y0 + (T::from_usize(row).unwrap() + half) * cell;
        for col in 0..gsz {
            let cx = x0 + (T::from_usize(col).unwrap() + half) * cell;
            let blocked = !w.bounds.contains(cx, cy) || w.point_in_obstacle(cx, cy);
            occupancy.push(blocked as u8);
            let dx = cx - g.cx;
            let dy = cy - g.cy;
            let h = ((dx * dx + dy * dy).sqrt() - g.radius).max(T::zero());
            lo = lo.min(h);
            hi = hi.max(h);
            heuristic.push(h);
        }
    }
    let span = hi - lo;
    if span > T::zero() {
        for h in heuristic.iter_mut() {
            *h = (*h - lo) / span;
        }
    } else {
        for h in heuristic.iter_mut() {
            *h = T::zero();
        }
    }
    LocalMaps { grid_size: gsz, occupancy, heuristic }
}

/// Disc kept free of obstacles (start/goal clearance).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Disc<T> {
    pub cx: T,
    pub cy: T,
    pub radius: T,
}

/// Random environment generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomEnvConfig<T> {
    pub bounds: Rect<T>,
    /// Target obstacle coverage fraction of the bounds area, in (0, 1).
    pub coverage: T,
    /// Obstacle side lengths are sampled uniformly from this range.
    pub side_range: (T, T),
    /// Discs rejected obstacles may not intersect.
    pub keep_clear: Vec<Disc<T>>,
    /// Monte-Carlo points used for the running coverage estimate.
    pub coverage_samples: usize,
    /// Consecutive rejections tolerated before giving up.
    pub max_rejections: usize,
}

impl<T: Real> RandomEnvConfig<T> {
    pub fn new(bounds: Rect<T>, coverage: T) -> Self {
        Self {
            bounds,
            coverage,
            side_range: (real(0.5), real(2.0)),
            keep_clear: Vec::new(),
            coverage_samples: 100_000,
            max_rejections: 10_000,
        }
    }
}

fn rect_intersects_disc<T: Real>(r: &Rect<T>, d: &Disc<T>) -> bool {
    r.point_dist_sq(d.cx, d.cy) <= d.radius * d.radius
}

/// Place random axis-aligned obstacles until the Monte-Carlo estimate of the
/// obstacle-union coverage reaches the target fraction, keeping the
/// configured clearance discs free.
pub fn random_environment<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &RandomEnvConfig<T>,
    footprint: Footprint<T>,
) -> Result<Workspace<T>, WorldError> {
    if !(cfg.coverage > T::zero() && cfg.coverage < T::one()) {
        return Err(WorldError::InvalidConfig(format!(
            "coverage fraction must be in (0, 1), got {}",
            cfg.coverage
        )));
    }
    if !(cfg.side_range.0 > T::zero() && cfg.side_range.0 <= cfg.side_range.1) {
        return Err(WorldError::InvalidConfig("bad obstacle side range".into()));
    }
    let b = cfg.bounds;
    if !(b.width() > T::zero() && b.height() > T::zero()) {
        return Err(WorldError::InvalidConfig("degenerate bounds".into()));
    }

    let points: Vec<[T; 2]> = (0..cfg.coverage_samples)
        .map(|_| [rng.gen_range(b.x_min..=b.x_max), rng.gen_range(b.y_min..=b.y_max)])
        .collect();
    let mut covered = vec![false; points.len()];
    let mut covered_count = 0usize;
    let target = (cfg.coverage.to_f64().unwrap() * points.len() as f64).ceil() as usize;

    let half = real::<T>(0.5);
    let mut obstacles: Vec<Rect<T>> = Vec::new();
    let mut rejections = 0usize;
    while covered_count < target {
        let w = rng.gen_range(cfg.side_range.0..=cfg.side_range.1);
        let h = rng.gen_range(cfg.side_range.0..=cfg.side_range.1);
        let cx = rng.gen_range(b.x_min..=b.x_max);
        let cy = rng.gen_range(b.y_min..=b.y_max);
        let rect = Rect::new(cx - w * half, cy - h * half, cx + w * half, cy + h * half);
        if cfg.keep_clear.iter().any(|d| rect_intersects_disc(&rect, d)) {
            rejections += 1;
            if rejections > cfg.max_rejections {
                return Err(WorldError::InfeasibleCoverage { rejections, placed: obstacles.len() });
            }
            continue;
        }
        rejections = 0;
        for (flag, p) in covered.iter_mut().zip(&points) {
            if !*flag && rect.contains(p[0], p[1]) {
                *flag = true;
                covered_count += 1;
            }
        }
        obstacles.push(rect);
    }
    Ok(Workspace { bounds: b, obstacles, footprint })
}

/// A complete planning problem: workspace, start state, goal region.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment<T> {
    pub workspace: Workspace<T>,
    pub start: State<T>,
    pub goal: GoalRegion<T>,
}

/// Write the environment in the line-based text format:
///
/// ```text
/// bounds    x_min y_min x_max y_max
/// footprint length width
/// start     x y theta v_left v_right
/// goal      cx cy radius
/// obstacle  x_min y_min x_max y_max   (zero or more)
/// ```
///
/// Values are written with the shortest representation that parses back to
/// the identical number, so save/load round-trips are lossless.
pub fn save_environment<T: Real, W: Write>(env: &Environment<T>, out: &mut W) -> io::Result<()> {
    let ws = &env.workspace;
    writeln!(out, "# kinoplan environment")?;
    writeln!(out, "bounds {} {} {} {}", ws.bounds.x_min, ws.bounds.y_min, ws.bounds.x_max, ws.bounds.y_max)?;
    writeln!(out, "footprint {} {}", ws.footprint.length, ws.footprint.width)?;
    writeln!(
        out,
        "start {} {} {} {} {}",
        env.start.x, env.start.y, env.start.theta, env.start.v_left, env.start.v_right
    )?;
    writeln!(out, "goal {} {} {}", env.goal.cx, env.goal.cy, env.goal.radius)?;
    for o in &ws.obstacles {
        writeln!(out, "obstacle {} {} {} {}", o.x_min, o.y_min, o.x_max, o.y_max)?;
    }
    Ok(())
}

fn parse_numbers<T: Real>(line: usize, fields: &[&str], expect: usize) -> Result<Vec<T>, WorldError> {
    if fields.len() != expect {
        return Err(WorldError::Parse {
            line,
            msg: format!("expected {expect} numbers, got {}", fields.len()),
        });
    }
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .ok()
                .and_then(T::from_f64)
                .ok_or_else(|| WorldError::Parse { line, msg: format!("bad number {f:?}") })
        })
        .collect()
}

/// Parse the environment text format. Validates the documented invariants.
pub fn load_environment<T: Real>(text: &str) -> Result<Environment<T>, WorldError> {
    let mut bounds: Option<Rect<T>> = None;
    let mut footprint: Option<Footprint<T>> = None;
    let mut start: Option<State<T>> = None;
    let mut goal: Option<GoalRegion<T>> = None;
    let mut obstacles: Vec<Rect<T>> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let key = it.next().unwrap();
        let rest: Vec<&str> = it.collect();
        match key {
            "bounds" => {
                let v = parse_numbers::<T>(line, &rest, 4)?;
                bounds = Some(Rect::new(v[0], v[1], v[2], v[3]));
            }
            "footprint" => {
                let v = parse_numbers::<T>(line, &rest, 2)?;
                if !(v[0] > T::zero() && v[1] > T::zero()) {
                    return Err(WorldError::Parse { line, msg: "footprint dimensions must be positive".into() });
                }
                footprint = Some(Footprint { length: v[0], width: v[1] });
            }
            "start" => {
                let v = parse_numbers::<T>(line, &rest, 5)?;
                start = Some(State::new(v[0], v[1], v[2], v[3], v[4]));
            }
            "goal" => {
                let v = parse_numbers::<T>(line, &rest, 3)?;
                if !(v[2] > T::zero()) {
                    return Err(WorldError::Parse { line, msg: "goal radius must be positive".into() });
                }
                goal = Some(GoalRegion::new(v[0], v[1], v[2]));
            }
            "obstacle" => {
                let v = parse_numbers::<T>(line, &rest, 4)?;
                let r = Rect::new(v[0], v[1], v[2], v[3]);
                if !(r.width() > T::zero() && r.height() > T::zero()) {
                    return Err(WorldError::Parse { line, msg: "degenerate obstacle".into() });
                }
                obstacles.push(r);
            }
            other => {
                return Err(WorldError::Parse { line, msg: format!("unknown directive {other:?}") });
            }
        }
    }

    let bounds = bounds.ok_or(WorldError::Parse { line: 0, msg: "missing bounds".into() })?;
    let footprint = footprint.ok_or(WorldError::Parse { line: 0, msg: "missing footprint".into() })?;
    let start = start.ok_or(WorldError::Parse { line: 0, msg: "missing start".into() })?;
    let goal = goal.ok_or(WorldError::Parse { line: 0, msg: "missing goal".into() })?;
    if !bounds.contains(goal.cx, goal.cy) {
        return Err(WorldError::Parse { line: 0, msg: "goal center outside bounds".into() });
    }
    for o in &obstacles {
        if !(o.intersection_area(&bounds) > T::zero()) {
            return Err(WorldError::Parse { line: 0, msg: "obstacle does not overlap bounds".into() });
        }
    }
    Ok(Environment { workspace: Workspace { bounds, obstacles, footprint }, start, goal })
}

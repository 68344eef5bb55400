//! Online curation of maneuver sets.
//!
//! From a large pool of random candidates propagated at a state, curation
//! picks one exploitative maneuver (the collision-free candidate whose
//! endpoint minimizes the cost-to-go heuristic) and then greedily adds
//! exploratory maneuvers, each maximizing its minimum dispersion to every
//! trajectory already selected.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::metrics::{dispersion_of_points, resample, Trajectory, DISPERSION_POINTS};
use crate::scalar::{real, Real};
use crate::sim::{propagate, sample_random_maneuver, DynamicsParams, Maneuver, State};
use crate::world::{heuristic, GoalRegion, Workspace};

/// Random candidates propagated from a shared root state.
#[derive(Debug, Clone)]
pub struct CandidateSet<T> {
    pub maneuvers: Vec<Maneuver<T>>,
    pub trajectories: Vec<Trajectory<T>>,
    pub collision_free: Vec<bool>,
}

impl<T: Real> CandidateSet<T> {
    pub fn len(&self) -> usize {
        self.maneuvers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maneuvers.is_empty()
    }
}

/// One selected maneuver and its propagated trajectory.
#[derive(Debug, Clone)]
pub struct ManeuverEntry<T> {
    pub maneuver: Maneuver<T>,
    pub trajectory: Trajectory<T>,
}

/// Ordered maneuver set: entry 0 is exploitative, the rest exploratory in
/// selection order. Every entry's trajectory is collision free.
#[derive(Debug, Clone, Default)]
pub struct ManeuverSet<T> {
    pub entries: Vec<ManeuverEntry<T>>,
}

impl<T: Real> ManeuverSet<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn maneuvers(&self) -> impl Iterator<Item = &Maneuver<T>> {
        self.entries.iter().map(|e| &e.maneuver)
    }
}

/// Curation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig<T> {
    /// Candidate pool size M.
    pub pool_size: usize,
    /// Number of exploratory maneuvers N (set size is at most N + 1).
    pub exploratory: usize,
    /// Candidate duration range, bounds multiples of dt.
    pub dur_range: (T, T),
    /// Resample points used by the dispersion metric.
    pub dispersion_points: usize,
}

impl<T: Real> Default for CurationConfig<T> {
    fn default() -> Self {
        Self {
            pool_size: 1000,
            exploratory: 4,
            dur_range: (real(0.5), real(2.0)),
            dispersion_points: DISPERSION_POINTS,
        }
    }
}

/// Sample `m` random maneuvers, propagate each from `root`, and record which
/// trajectories are collision free. Sampling consumes `rng` sequentially;
/// propagation is order-preserving, so the result is deterministic.
pub fn generate_candidates<T: Real, R: Rng + ?Sized>(
    root: &State<T>,
    m: usize,
    w: &Workspace<T>,
    p: &DynamicsParams<T>,
    dur_range: (T, T),
    rng: &mut R,
) -> CandidateSet<T> {
    assert!(m >= 1, "candidate pool must be non-empty");
    let maneuvers: Vec<Maneuver<T>> =
        (0..m).map(|_| sample_random_maneuver(rng, p, dur_range)).collect();
    let propagated: Vec<(Trajectory<T>, bool)> = maneuvers
        .par_iter()
        .with_min_len(128)
        .map(|mv| {
            let t = propagate(root, mv, p).expect("sampled durations are dt-aligned");
            let free = w.trajectory_collision_free(&t);
            (t, free)
        })
        .collect();
    let mut trajectories = Vec::with_capacity(m);
    let mut collision_free = Vec::with_capacity(m);
    for (t, free) in propagated {
        trajectories.push(t);
        collision_free.push(free);
    }
    CandidateSet { maneuvers, trajectories, collision_free }
}

/// Index of the collision-free candidate whose endpoint minimizes the
/// heuristic; ties break to the lowest index. `None` when every candidate
/// collides (a dead state for the planner).
pub fn select_exploitative<T: Real>(
    c: &CandidateSet<T>,
    g: &GoalRegion<T>,
    v_max: T,
) -> Option<usize> {
    let mut best: Option<(usize, T)> = None;
    for i in 0..c.len() {
        if !c.collision_free[i] {
            continue;
        }
        let h = heuristic(c.trajectories[i].end_state(), g, v_max);
        match best {
            Some((_, bh)) if h >= bh => {}
            _ => best = Some((i, h)),
        }
    }
    best.map(|(i, _)| i)
}

/// Greedily pick up to `n_remaining` collision-free candidates, each
/// maximizing its minimum dispersion to everything selected so far (the
/// anchors in `already` plus earlier picks). `taken` lists candidate
/// indices that are already in the set and must not be re-picked. Ties
/// break to the lowest index; the result is shorter when candidates run out.
pub fn select_exploratory<T: Real>(
    c: &CandidateSet<T>,
    already: &ManeuverSet<T>,
    taken: &[usize],
    n_remaining: usize,
    dispersion_points: usize,
) -> Vec<usize> {
    debug_assert!(!already.is_empty(), "exploratory selection needs at least one anchor");
    let k = dispersion_points;
    let cand_points: Vec<Option<Vec<[T; 2]>>> = c
        .trajectories
        .iter()
        .zip(&c.collision_free)
        .map(|(t, &free)| free.then(|| resample(t, k)))
        .collect();

    let mut excluded = vec![false; c.len()];
    for &i in taken {
        excluded[i] = true;
    }

    // Running minimum dispersion from each candidate to the selected set.
    let mut min_disp: Vec<T> = vec![T::infinity(); c.len()];
    for entry in &already.entries {
        let anchor = resample(&entry.trajectory, k);
        for (i, pts) in cand_points.iter().enumerate() {
            if let Some(pts) = pts {
                min_disp[i] = min_disp[i].min(dispersion_of_points(pts, &anchor));
            }
        }
    }

    let mut picks = Vec::with_capacity(n_remaining);
    for _ in 0..n_remaining {
        let mut best: Option<(usize, T)> = None;
        for i in 0..c.len() {
            if excluded[i] || cand_points[i].is_none() {
                continue;
            }
            match best {
                Some((_, bd)) if min_disp[i] <= bd => {}
                _ => best = Some((i, min_disp[i])),
            }
        }
        let Some((chosen, _)) = best else { break };
        excluded[chosen] = true;
        picks.push(chosen);
        let anchor = cand_points[chosen].as_ref().unwrap().clone();
        for (i, pts) in cand_points.iter().enumerate() {
            if let Some(pts) = pts {
                min_disp[i] = min_disp[i].min(dispersion_of_points(pts, &anchor));
            }
        }
    }
    picks
}

/// Per-step record of the greedy exploratory selection, for auditing the
/// max-min property.
#[derive(Debug, Clone)]
pub struct CurationTrace<T> {
    pub exploitative: usize,
    /// `(candidate index, its min dispersion to the set at pick time)`.
    pub exploratory: Vec<(usize, T)>,
}

/// Full curation: candidates, exploitative argmin, greedy exploratory picks.
/// Returns `None` iff no candidate is collision free.
pub fn curate<T: Real, R: Rng + ?Sized>(
    root: &State<T>,
    w: &Workspace<T>,
    g: &GoalRegion<T>,
    cfg: &CurationConfig<T>,
    p: &DynamicsParams<T>,
    rng: &mut R,
) -> Option<ManeuverSet<T>> {
    curate_traced(root, w, g, cfg, p, rng).map(|(set, _)| set)
}

/// `curate` plus the selection trace.
pub fn curate_traced<T: Real, R: Rng + ?Sized>(
    root: &State<T>,
    w: &Workspace<T>,
    g: &GoalRegion<T>,
    cfg: &CurationConfig<T>,
    p: &DynamicsParams<T>,
    rng: &mut R,
) -> Option<(ManeuverSet<T>, CurationTrace<T>)> {
    assert!(cfg.pool_size >= cfg.exploratory + 1, "pool must cover the requested set size");
    let cands = generate_candidates(root, cfg.pool_size, w, p, cfg.dur_range, rng);
    let first = select_exploitative(&cands, g, p.v_max)?;
    let mut set = ManeuverSet {
        entries: vec![ManeuverEntry {
            maneuver: cands.maneuvers[first],
            trajectory: cands.trajectories[first].clone(),
        }],
    };
    let picks = select_exploratory(&cands, &set, &[first], cfg.exploratory, cfg.dispersion_points);
    let mut trace = CurationTrace { exploitative: first, exploratory: Vec::with_capacity(picks.len()) };
    // Recompute each pick's margin against the set it joined (audit data).
    for &i in &picks {
        let picked = resample(&cands.trajectories[i], cfg.dispersion_points);
        let margin = set
            .entries
            .iter()
            .map(|e| dispersion_of_points(&picked, &resample(&e.trajectory, cfg.dispersion_points)))
            .fold(T::infinity(), T::min);
        trace.exploratory.push((i, margin));
        set.entries.push(ManeuverEntry {
            maneuver: cands.maneuvers[i],
            trajectory: cands.trajectories[i].clone(),
        });
    }
    Some((set, trace))
}

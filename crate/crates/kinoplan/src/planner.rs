//! Informed tree planner.
//!
//! Each iteration selects a tree node (greedily by `g + h` with some
//! probability, uniformly at random otherwise) and expands it. The first
//! time a node is selected, its maneuver provider is queried and the whole
//! informed set is propagated as a blossom; afterwards the node reverts to
//! random controls. Nodes that cannot beat the incumbent solution are
//! pruned by branch-and-bound against the admissible heuristic, and a
//! witness grid keeps only the cheapest node per workspace cell selectable
//! so the tree stays sparse.

use std::collections::{BinaryHeap, HashMap};
use std::io::{self, Write};
use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curation::{curate, CurationConfig, ManeuverEntry, ManeuverSet};
use crate::metrics::{Cost, Plan, Trajectory};
use crate::scalar::{real, to_f64, Real};
use crate::sim::{propagate, sample_random_maneuver, DynamicsParams, Maneuver, SimError, State};
use crate::world::{heuristic, heuristic_in_mode, in_goal, GoalRegion, HeuristicMode, Workspace};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("start state is in collision")]
    StartInCollision,
    #[error("invalid planner configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Index into the planner's node arena.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Why a node became unselectable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PruneReason<T> {
    /// `g + h` reached the incumbent cost recorded here.
    Bound { incumbent: T },
    /// Displaced by a cheaper witness-cell representative.
    Witness,
}

/// Search tree node.
#[derive(Debug, Clone)]
pub struct TreeNode<T> {
    pub state: State<T>,
    pub parent: Option<NodeId>,
    pub incoming: Option<Maneuver<T>>,
    /// Cost from the start (seconds).
    pub g: T,
    /// Selection-mode heuristic value (cached).
    pub h_sel: T,
    /// Admissible heuristic value used for pruning (cached).
    pub h_adm: T,
    pub children: Vec<NodeId>,
    /// Set once the informed maneuver set has been requested and consumed;
    /// informed sets are generated lazily at the node's first selection.
    pub informed_consumed: bool,
    pub pruned: Option<PruneReason<T>>,
}

impl<T: Real> TreeNode<T> {
    #[inline]
    pub fn is_pruned(&self) -> bool {
        self.pruned.is_some()
    }
}

/// Source of informed maneuver sets (and of the fallback random controls).
pub trait ManeuverProvider<T: Real>: Sync {
    /// Informed maneuver set for a node state, with trajectories already
    /// propagated from that state and collision filtered. `None` signals
    /// that no informed maneuver is available (a dead state for curation).
    fn informed(
        &self,
        state: &State<T>,
        w: &Workspace<T>,
        goal: &GoalRegion<T>,
        p: &DynamicsParams<T>,
        rng: &mut dyn RngCore,
    ) -> Option<ManeuverSet<T>>;

    /// One fallback control for blossom expansion after the informed set is
    /// consumed. Defaults to a uniformly random maneuver.
    fn blossom(&self, p: &DynamicsParams<T>, dur_range: (T, T), rng: &mut dyn RngCore) -> Maneuver<T> {
        sample_random_maneuver(rng, p, dur_range)
    }

    fn label(&self) -> &'static str;
}

/// Informed sets of freshly sampled random maneuvers (the baseline).
#[derive(Debug, Clone)]
pub struct RandomProvider {
    pub set_size: usize,
    pub dur_range: (f64, f64),
}

impl Default for RandomProvider {
    fn default() -> Self {
        Self { set_size: 5, dur_range: (0.5, 2.0) }
    }
}

impl<T: Real> ManeuverProvider<T> for RandomProvider {
    fn informed(
        &self,
        state: &State<T>,
        w: &Workspace<T>,
        _goal: &GoalRegion<T>,
        p: &DynamicsParams<T>,
        rng: &mut dyn RngCore,
    ) -> Option<ManeuverSet<T>> {
        let dur = (real(self.dur_range.0), real(self.dur_range.1));
        let mut entries = Vec::with_capacity(self.set_size);
        for _ in 0..self.set_size {
            let maneuver = sample_random_maneuver(rng, p, dur);
            let trajectory = propagate(state, &maneuver, p).expect("sampled durations are aligned");
            if w.trajectory_collision_free(&trajectory) {
                entries.push(ManeuverEntry { maneuver, trajectory });
            }
        }
        (!entries.is_empty()).then_some(ManeuverSet { entries })
    }

    fn label(&self) -> &'static str {
        "random"
    }
}

/// Online curation at every informed query (expensive but high quality).
#[derive(Debug, Clone, Default)]
pub struct CuratedProvider<T> {
    pub cfg: CurationConfig<T>,
}

impl<T: Real> ManeuverProvider<T> for CuratedProvider<T> {
    fn informed(
        &self,
        state: &State<T>,
        w: &Workspace<T>,
        goal: &GoalRegion<T>,
        p: &DynamicsParams<T>,
        rng: &mut dyn RngCore,
    ) -> Option<ManeuverSet<T>> {
        curate(state, w, goal, &self.cfg, p, rng)
    }

    fn label(&self) -> &'static str {
        "curated"
    }
}

/// Planner knobs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig<T> {
    pub max_iterations: usize,
    /// Probability of picking the best `g + h` node instead of a uniform one.
    pub greedy_selection_prob: f64,
    /// Witness grid cell size in meters; 0 disables sparsification.
    pub witness_radius: T,
    /// Fallback random maneuvers propagated per selection of a node whose
    /// informed set is consumed.
    pub random_blossom_count: usize,
    /// Duration range for fallback random maneuvers.
    pub dur_range: (T, T),
    /// Scale of the heuristic inside the selection score `g + h`. Pruning
    /// always uses the time-scaled (admissible) heuristic; selection defaults
    /// to the raw Euclidean scale, which actually draws the search toward
    /// the goal (with the admissible scale, `g + h` is non-decreasing along
    /// every propagated edge, so the argmin would sit at the root forever).
    pub selection_heuristic: HeuristicMode,
}

impl<T: Real> Default for PlannerConfig<T> {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            greedy_selection_prob: 0.5,
            witness_radius: real(0.2),
            random_blossom_count: 1,
            dur_range: (real(0.5), real(2.0)),
            selection_heuristic: HeuristicMode::Euclidean,
        }
    }
}

impl<T: Real> PlannerConfig<T> {
    pub fn validate(&self, params: &DynamicsParams<T>) -> Result<(), PlanError> {
        if !(0.0..=1.0).contains(&self.greedy_selection_prob) {
            return Err(PlanError::InvalidConfig("greedy_selection_prob must be in [0, 1]".into()));
        }
        if self.witness_radius < T::zero() {
            return Err(PlanError::InvalidConfig("witness_radius must be >= 0".into()));
        }
        if self.random_blossom_count == 0 {
            return Err(PlanError::InvalidConfig("random_blossom_count must be >= 1".into()));
        }
        params.validate()?;
        params.steps_for(self.dur_range.0)?;
        params.steps_for(self.dur_range.1)?;
        if self.dur_range.0 > self.dur_range.1 {
            return Err(PlanError::InvalidConfig("empty duration range".into()));
        }
        Ok(())
    }
}

/// True iff a node with cost-from-start `g` and admissible cost-to-go `h`
/// cannot improve on the incumbent (ties are prunable).
#[inline]
pub fn should_prune<T: Real>(g: T, h: T, incumbent: Option<T>) -> bool {
    match incumbent {
        Some(best) => g + h >= best,
        None => false,
    }
}

/// One recorded incumbent improvement.
#[derive(Debug, Clone)]
pub struct SolutionRecord<T> {
    pub plan: Plan<T>,
    pub cost: Cost<T>,
    pub found_at_iteration: usize,
    /// Wall-clock seconds since planning started.
    pub elapsed_seconds: f64,
}

/// Run statistics.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlanStats {
    pub iterations: usize,
    pub nodes_created: usize,
    pub informed_queries: usize,
    pub wall_time_seconds: f64,
}

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct PlanOutcome<T> {
    pub best: Option<SolutionRecord<T>>,
    pub history: Vec<SolutionRecord<T>>,
    pub stats: PlanStats,
}

/// Workspace-cell witness bookkeeping: at most one selectable representative
/// per cell, replaced only by strictly cheaper candidates.
#[derive(Debug, Clone, Default)]
pub struct WitnessGrid<T> {
    cells: HashMap<(i64, i64), (NodeId, T)>,
}

/// Outcome of offering a candidate node to the witness grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WitnessDecision {
    Accept,
    /// Accepted; the previous representative must be marked pruned.
    AcceptDisplacing(NodeId),
    Reject,
}

impl<T: Real> WitnessGrid<T> {
    pub fn consider(&mut self, radius: T, x: T, y: T, g: T, id: NodeId) -> WitnessDecision {
        if radius <= T::zero() {
            return WitnessDecision::Accept;
        }
        let key = (
            (x / radius).floor().to_i64().unwrap_or(0),
            (y / radius).floor().to_i64().unwrap_or(0),
        );
        match self.cells.get_mut(&key) {
            None => {
                self.cells.insert(key, (id, g));
                WitnessDecision::Accept
            }
            Some(entry) => {
                if g < entry.1 {
                    let displaced = entry.0;
                    *entry = (id, g);
                    WitnessDecision::AcceptDisplacing(displaced)
                } else {
                    WitnessDecision::Reject
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct HeapEntry<T> {
    f: T,
    id: u32,
}

impl<T: Real> PartialEq for HeapEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f && self.id == other.id
    }
}
impl<T: Real> Eq for HeapEntry<T> {}
impl<T: Real> PartialOrd for HeapEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for HeapEntry<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Max-heap: order by descending f, then descending id, so the heap
        // top is the lowest f with ties to the oldest node.
        other
            .f
            .partial_cmp(&self.f)
            .expect("selection scores are finite")
            .then(other.id.cmp(&self.id))
    }
}

/// The tree planner. Single-threaded; multiple planners over shared
/// immutable workspaces may run concurrently.
pub struct Planner<'a, T: Real> {
    workspace: &'a Workspace<T>,
    goal: GoalRegion<T>,
    params: DynamicsParams<T>,
    cfg: PlannerConfig<T>,
    provider: &'a dyn ManeuverProvider<T>,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode<T>>,
    heap: BinaryHeap<HeapEntry<T>>,
    alive: Vec<NodeId>,
    witnesses: WitnessGrid<T>,
    history: Vec<SolutionRecord<T>>,
    incumbent: Option<T>,
    stats: PlanStats,
    started: Instant,
}

impl<'a, T: Real> Planner<'a, T> {
    pub fn new(
        start: &State<T>,
        workspace: &'a Workspace<T>,
        goal: GoalRegion<T>,
        provider: &'a dyn ManeuverProvider<T>,
        params: DynamicsParams<T>,
        cfg: PlannerConfig<T>,
        seed: u64,
    ) -> Result<Self, PlanError> {
        cfg.validate(&params)?;
        if workspace.state_in_collision(start) {
            return Err(PlanError::StartInCollision);
        }
        let mut planner = Self {
            workspace,
            goal,
            params,
            cfg,
            provider,
            rng: ChaCha8Rng::seed_from_u64(seed),
            nodes: Vec::new(),
            heap: BinaryHeap::new(),
            alive: Vec::new(),
            witnesses: WitnessGrid::default(),
            history: Vec::new(),
            incumbent: None,
            stats: PlanStats::default(),
            started: Instant::now(),
        };
        planner.push_node(*start, None, None, T::zero());
        if in_goal(start, &planner.goal) {
            planner.incumbent = Some(T::zero());
            planner.history.push(SolutionRecord {
                plan: Plan::default(),
                cost: Cost(T::zero()),
                found_at_iteration: 0,
                elapsed_seconds: 0.0,
            });
        }
        Ok(planner)
    }

    fn push_node(
        &mut self,
        state: State<T>,
        parent: Option<NodeId>,
        incoming: Option<Maneuver<T>>,
        g: T,
    ) -> NodeId {
        let h_sel = heuristic_in_mode(&state, &self.goal, self.params.v_max, self.cfg.selection_heuristic);
        let h_adm = heuristic(&state, &self.goal, self.params.v_max);
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(TreeNode {
            state,
            parent,
            incoming,
            g,
            h_sel,
            h_adm,
            children: Vec::new(),
            informed_consumed: false,
            pruned: None,
        });
        if let Some(p) = parent {
            self.nodes[p.index()].children.push(id);
        }
        self.heap.push(HeapEntry { f: g + h_sel, id: id.0 });
        self.alive.push(id);
        self.stats.nodes_created += 1;
        id
    }

    /// Greedy pick: valid heap top (lowest `g + h_sel`, oldest on ties).
    fn peek_best(&mut self) -> Option<NodeId> {
        while let Some(top) = self.heap.peek() {
            let id = NodeId(top.id);
            if self.nodes[id.index()].is_pruned() {
                self.heap.pop();
                continue;
            }
            return Some(id);
        }
        None
    }

    /// Uniform pick over non-pruned nodes, dropping stale entries lazily.
    fn random_alive(&mut self) -> Option<NodeId> {
        while !self.alive.is_empty() {
            let i = self.rng.gen_range(0..self.alive.len());
            let id = self.alive[i];
            if self.nodes[id.index()].is_pruned() {
                self.alive.swap_remove(i);
                continue;
            }
            return Some(id);
        }
        None
    }

    fn select_node(&mut self) -> Option<NodeId> {
        if self.rng.gen::<f64>() < self.cfg.greedy_selection_prob {
            self.peek_best()
        } else {
            self.random_alive()
        }
    }

    /// Maneuver chain from the root to `id`.
    pub fn chain_maneuvers(&self, id: NodeId) -> Vec<Maneuver<T>> {
        let mut chain = Vec::new();
        let mut cursor = Some(id);
        while let Some(c) = cursor {
            let node = &self.nodes[c.index()];
            if let Some(m) = node.incoming {
                chain.push(m);
            }
            cursor = node.parent;
        }
        chain.reverse();
        chain
    }

    /// Re-propagate the maneuver chain from the root; bit-identical to the
    /// stored node state because expansion used the same integrator.
    pub fn replay_chain(&self, id: NodeId) -> Result<State<T>, SimError> {
        let mut state = self.nodes[0].state;
        for m in self.chain_maneuvers(id) {
            state = *propagate(&state, &m, &self.params)?.end_state();
        }
        Ok(state)
    }

    fn record_solution(&mut self, parent: NodeId, maneuver: Maneuver<T>, cost: T, iteration: usize) {
        let mut plan = Plan { maneuvers: self.chain_maneuvers(parent) };
        plan.maneuvers.push(maneuver);
        self.incumbent = Some(cost);
        self.history.push(SolutionRecord {
            plan,
            cost: Cost(cost),
            found_at_iteration: iteration,
            elapsed_seconds: self.started.elapsed().as_secs_f64(),
        });
        self.prune_sweep();
    }

    /// Mark every node that can no longer beat the incumbent.
    fn prune_sweep(&mut self) {
        let Some(best) = self.incumbent else { return };
        for node in self.nodes.iter_mut() {
            if node.pruned.is_none() && node.g + node.h_adm >= best {
                node.pruned = Some(PruneReason::Bound { incumbent: best });
            }
        }
    }

    /// Insert a propagated edge if it survives the goal/bound/witness gates.
    fn consider_child(
        &mut self,
        parent: NodeId,
        maneuver: Maneuver<T>,
        trajectory: &Trajectory<T>,
        iteration: usize,
    ) -> Option<NodeId> {
        let state = *trajectory.end_state();
        let g = self.nodes[parent.index()].g + maneuver.duration;
        if in_goal(&state, &self.goal) && self.incumbent.map_or(true, |b| g < b) {
            self.record_solution(parent, maneuver, g, iteration);
        }
        let h_adm = heuristic(&state, &self.goal, self.params.v_max);
        if should_prune(g, h_adm, self.incumbent) {
            return None;
        }
        let id = NodeId(self.nodes.len() as u32);
        match self.witnesses.consider(self.cfg.witness_radius, state.x, state.y, g, id) {
            WitnessDecision::Reject => return None,
            WitnessDecision::Accept => {}
            WitnessDecision::AcceptDisplacing(old) => {
                self.nodes[old.index()].pruned = Some(PruneReason::Witness);
            }
        }
        Some(self.push_node(state, Some(parent), Some(maneuver), g))
    }

    /// Expand a selected node: informed blossom on first selection, random
    /// controls afterwards. Returns the nodes created this iteration.
    fn expand(&mut self, id: NodeId, iteration: usize) -> Vec<NodeId> {
        let mut created = Vec::new();
        let state = self.nodes[id.index()].state;
        if !self.nodes[id.index()].informed_consumed {
            self.nodes[id.index()].informed_consumed = true;
            self.stats.informed_queries += 1;
            let set = self.provider.informed(&state, self.workspace, &self.goal, &self.params, &mut self.rng);
            if let Some(set) = set {
                if !set.is_empty() {
                    for entry in &set.entries {
                        if let Some(child) = self.consider_child(id, entry.maneuver, &entry.trajectory, iteration) {
                            created.push(child);
                        }
                    }
                    return created;
                }
            }
            // No informed maneuvers: fall through to random controls.
        }
        for _ in 0..self.cfg.random_blossom_count {
            let maneuver = self.provider.blossom(&self.params, self.cfg.dur_range, &mut self.rng);
            let trajectory =
                propagate(&state, &maneuver, &self.params).expect("blossom durations are aligned");
            if !self.workspace.trajectory_collision_free(&trajectory) {
                continue;
            }
            if let Some(child) = self.consider_child(id, maneuver, &trajectory, iteration) {
                created.push(child);
            }
        }
        created
    }

    /// One select-expand cycle. Returns false once no selectable node is
    /// left (everything pruned) or the iteration budget is exhausted.
    pub fn step_iteration(&mut self) -> bool {
        if self.stats.iterations >= self.cfg.max_iterations {
            return false;
        }
        let t0 = Instant::now();
        self.stats.iterations += 1;
        let iteration = self.stats.iterations;
        let Some(id) = self.select_node() else {
            self.stats.iterations -= 1;
            self.stats.wall_time_seconds += t0.elapsed().as_secs_f64();
            return false;
        };
        self.expand(id, iteration);
        self.stats.wall_time_seconds += t0.elapsed().as_secs_f64();
        true
    }

    /// Run until the iteration budget is exhausted or the tree is fully
    /// pruned.
    pub fn run(&mut self) {
        while self.step_iteration() {}
    }

    pub fn nodes(&self) -> &[TreeNode<T>] {
        &self.nodes
    }

    pub fn history(&self) -> &[SolutionRecord<T>] {
        &self.history
    }

    pub fn best(&self) -> Option<&SolutionRecord<T>> {
        self.history.last()
    }

    pub fn incumbent(&self) -> Option<T> {
        self.incumbent
    }

    pub fn stats(&self) -> PlanStats {
        self.stats
    }

    pub fn goal(&self) -> &GoalRegion<T> {
        &self.goal
    }

    pub fn params(&self) -> &DynamicsParams<T> {
        &self.params
    }

    pub fn into_outcome(self) -> PlanOutcome<T> {
        PlanOutcome { best: self.history.last().cloned(), history: self.history, stats: self.stats }
    }

    /// Write every tree edge as a trajectory block (re-propagated from the
    /// parent state, which reproduces the stored edge exactly).
    pub fn export_tree<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let mut first = true;
        for node in &self.nodes {
            let (Some(parent), Some(incoming)) = (node.parent, node.incoming) else { continue };
            let trajectory = propagate(&self.nodes[parent.index()].state, &incoming, &self.params)
                .expect("stored maneuvers are aligned");
            if !first {
                writeln!(out)?;
            }
            first = false;
            for (t, s) in trajectory.samples() {
                writeln!(out, "{} {} {} {} {} {}", t, s.x, s.y, s.theta, s.v_left, s.v_right)?;
            }
        }
        Ok(())
    }
}

/// Convenience wrapper: build a planner, run it, return the outcome.
pub fn plan<T: Real>(
    start: &State<T>,
    workspace: &Workspace<T>,
    goal: GoalRegion<T>,
    provider: &dyn ManeuverProvider<T>,
    params: DynamicsParams<T>,
    cfg: PlannerConfig<T>,
    seed: u64,
) -> Result<PlanOutcome<T>, PlanError> {
    let mut planner = Planner::new(start, workspace, goal, provider, params, cfg, seed)?;
    planner.run();
    Ok(planner.into_outcome())
}

/// Replay a plan from `start` and check that the motion is collision free
/// and ends inside the goal region.
pub fn verify_plan<T: Real>(
    start: &State<T>,
    plan: &Plan<T>,
    w: &Workspace<T>,
    goal: &GoalRegion<T>,
    params: &DynamicsParams<T>,
) -> bool {
    let mut state = *start;
    if w.state_in_collision(&state) {
        return false;
    }
    for m in &plan.maneuvers {
        let Ok(trajectory) = propagate(&state, m, params) else { return false };
        if !w.trajectory_collision_free(&trajectory) {
            return false;
        }
        state = *trajectory.end_state();
    }
    in_goal(&state, goal)
}

/// Write the run log: one line per incumbent improvement. The time column
/// is zeroed unless timing is explicitly enabled so that fixed-seed runs
/// produce identical logs.
pub fn write_run_log<T: Real, W: Write>(
    history: &[SolutionRecord<T>],
    include_time: bool,
    out: &mut W,
) -> io::Result<()> {
    for rec in history {
        let t = if include_time { rec.elapsed_seconds } else { 0.0 };
        writeln!(out, "iter={} time={:.6} cost={}", rec.found_at_iteration, t, to_f64(rec.cost.0))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Footprint, Rect};

    fn open_workspace(half: f64) -> Workspace<f64> {
        Workspace::empty(Rect::new(-half, -half, half, half), Footprint::default())
    }

    fn rest(x: f64, y: f64) -> State<f64> {
        State::new(x, y, 0.0, 0.0, 0.0)
    }

    fn quick_cfg() -> PlannerConfig<f64> {
        PlannerConfig { max_iterations: 2000, ..Default::default() }
    }

    // Provider stub with a fixed discrete maneuver library: informed sets
    // are the whole library, blossom picks one uniformly.
    struct LibraryProvider {
        library: Vec<Maneuver<f64>>,
    }

    impl ManeuverProvider<f64> for LibraryProvider {
        fn informed(
            &self,
            state: &State<f64>,
            w: &Workspace<f64>,
            _goal: &GoalRegion<f64>,
            p: &DynamicsParams<f64>,
            _rng: &mut dyn RngCore,
        ) -> Option<ManeuverSet<f64>> {
            let mut entries = Vec::new();
            for &maneuver in &self.library {
                let trajectory = propagate(state, &maneuver, p).unwrap();
                if w.trajectory_collision_free(&trajectory) {
                    entries.push(ManeuverEntry { maneuver, trajectory });
                }
            }
            (!entries.is_empty()).then_some(ManeuverSet { entries })
        }

        fn blossom(&self, _p: &DynamicsParams<f64>, _dur: (f64, f64), rng: &mut dyn RngCore) -> Maneuver<f64> {
            self.library[rng.gen_range(0..self.library.len())]
        }

        fn label(&self) -> &'static str {
            "library"
        }
    }

    #[test]
    fn single_node_tree_selects_root() {
        let w = open_workspace(10.0);
        let provider = RandomProvider::default();
        let mut planner = Planner::new(
            &rest(0.0, 0.0),
            &w,
            GoalRegion::new(5.0, 0.0, 1.0),
            &provider,
            DynamicsParams::default(),
            quick_cfg(),
            1,
        )
        .unwrap();
        assert_eq!(planner.select_node(), Some(NodeId(0)));
    }

    #[test]
    fn greedy_selection_takes_argmin_score() {
        // v_max = 1 makes both heuristic scales coincide; scores are then
        // g + distance-to-goal: 4, 48, 2, 9 for the four nodes below.
        let w = open_workspace(100.0);
        let provider = RandomProvider::default();
        let params = DynamicsParams { v_max: 1.0, ..Default::default() };
        let cfg = PlannerConfig { greedy_selection_prob: 1.0, witness_radius: 0.0, ..quick_cfg() };
        let goal = GoalRegion::new(50.0, 0.0, 1e-9);
        let mut planner =
            Planner::new(&rest(46.0, 0.0), &w, goal, &provider, params, cfg, 3).unwrap();
        planner.push_node(rest(12.0, 0.0), None, None, 10.0);
        planner.push_node(rest(49.0, 0.0), None, None, 1.0);
        planner.push_node(rest(42.0, 0.0), None, None, 1.0);
        assert_eq!(planner.select_node(), Some(NodeId(2)));
    }

    #[test]
    fn uniform_selection_frequencies() {
        let w = open_workspace(100.0);
        let provider = RandomProvider::default();
        let cfg = PlannerConfig { greedy_selection_prob: 0.0, ..quick_cfg() };
        let goal = GoalRegion::new(50.0, 0.0, 1.0);
        let mut planner =
            Planner::new(&rest(0.0, 0.0), &w, goal, &provider, DynamicsParams::default(), cfg, 9).unwrap();
        for i in 1..4 {
            planner.push_node(rest(i as f64, 0.0), None, None, i as f64);
        }
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            counts[planner.select_node().unwrap().index()] += 1;
        }
        // Multinomial: sigma = sqrt(n p (1 - p)) with p = 1/4.
        let sigma = (draws as f64 * 0.25 * 0.75).sqrt();
        for &c in &counts {
            assert!((c as f64 - 2500.0).abs() < 3.0 * sigma, "counts {counts:?}");
        }
    }

    #[test]
    fn informed_set_consumed_then_random_blossom() {
        let w = open_workspace(50.0);
        let library: Vec<Maneuver<f64>> = [(0.4, 0.4), (-0.4, -0.4), (0.4, -0.4), (-0.4, 0.4), (0.8, 0.8)]
            .iter()
            .map(|&(l, r)| Maneuver::new(l, r, 1.0))
            .collect();
        let provider = LibraryProvider { library };
        let cfg = PlannerConfig {
            greedy_selection_prob: 1.0,
            witness_radius: 0.0,
            random_blossom_count: 1,
            ..quick_cfg()
        };
        let goal = GoalRegion::new(40.0, 0.0, 1.0);
        let mut planner =
            Planner::new(&rest(0.0, 0.0), &w, goal, &provider, DynamicsParams::default(), cfg, 4).unwrap();

        let created = planner.expand(NodeId(0), 1);
        assert_eq!(created.len(), 5, "all five informed maneuvers are collision free");
        assert!(planner.nodes[0].informed_consumed);

        let before = planner.nodes.len();
        planner.expand(NodeId(0), 2);
        let delta = planner.nodes.len() - before;
        assert!(delta <= 1, "consumed node blossoms at most one random child");
    }

    #[test]
    fn expansion_with_everything_colliding_leaves_node_selectable() {
        // Walls within braking distance of a fast root: no child survives.
        let mut w = open_workspace(50.0);
        w.obstacles.push(Rect::new(0.7, -3.0, 3.0, 3.0));
        w.obstacles.push(Rect::new(-3.0, -3.0, -0.7, 3.0));
        w.obstacles.push(Rect::new(-0.7, 0.5, 0.7, 3.0));
        w.obstacles.push(Rect::new(-0.7, -3.0, 0.7, -0.5));
        let provider = RandomProvider::default();
        let goal = GoalRegion::new(40.0, 0.0, 1.0);
        let start = State::new(0.0, 0.0, 0.0, 2.0, 2.0);
        let mut planner = Planner::new(
            &start,
            &w,
            goal,
            &provider,
            DynamicsParams::default(),
            quick_cfg(),
            5,
        )
        .unwrap();
        for iter in 1..=20 {
            let created = planner.expand(NodeId(0), iter);
            assert!(created.is_empty());
        }
        assert!(!planner.nodes[0].is_pruned());
        assert_eq!(planner.select_node(), Some(NodeId(0)));
    }

    #[test]
    fn should_prune_boundaries() {
        assert!(!should_prune(10.0, 5.0, None));
        assert!(should_prune(10.0, 5.0, Some(15.0)));
        assert!(!should_prune(10.0, 4.9, Some(15.0)));
    }

    #[test]
    fn witness_grid_rules() {
        let mut grid = WitnessGrid::<f64>::default();
        // Radius zero disables sparsification.
        assert_eq!(grid.consider(0.0, 0.3, 0.3, 5.0, NodeId(1)), WitnessDecision::Accept);
        assert_eq!(grid.consider(0.0, 0.3, 0.3, 9.0, NodeId(2)), WitnessDecision::Accept);

        let mut grid = WitnessGrid::<f64>::default();
        assert_eq!(grid.consider(1.0, 0.3, 0.3, 5.0, NodeId(1)), WitnessDecision::Accept);
        assert_eq!(
            grid.consider(1.0, 0.4, 0.4, 3.0, NodeId(2)),
            WitnessDecision::AcceptDisplacing(NodeId(1))
        );
        assert_eq!(grid.consider(1.0, 0.5, 0.5, 5.0, NodeId(3)), WitnessDecision::Reject);
    }

    #[test]
    fn start_inside_goal_solves_at_iteration_zero() {
        let w = open_workspace(10.0);
        let provider = RandomProvider::default();
        let outcome = plan(
            &rest(0.0, 0.0),
            &w,
            GoalRegion::new(0.2, 0.0, 1.0),
            &provider,
            DynamicsParams::default(),
            quick_cfg(),
            7,
        )
        .unwrap();
        let best = outcome.best.unwrap();
        assert_eq!(best.cost.0, 0.0);
        assert_eq!(best.found_at_iteration, 0);
        assert!(best.plan.maneuvers.is_empty());
    }

    #[test]
    fn start_in_collision_is_rejected() {
        let mut w = open_workspace(10.0);
        w.obstacles.push(Rect::new(-1.0, -1.0, 1.0, 1.0));
        let provider = RandomProvider::default();
        let err = plan(
            &rest(0.0, 0.0),
            &w,
            GoalRegion::new(5.0, 0.0, 1.0),
            &provider,
            DynamicsParams::default(),
            quick_cfg(),
            7,
        )
        .unwrap_err();
        assert!(matches!(err, PlanError::StartInCollision));
    }

    #[test]
    fn open_space_smoke_all_providers() {
        // Open 20 x 20 workspace, goal 5 m ahead: every provider solves it.
        let w = open_workspace(10.0);
        let goal = GoalRegion::new(5.0, 0.0, 1.0);
        let params = DynamicsParams::default();
        let cfg = PlannerConfig { max_iterations: 50_000, ..Default::default() };
        let random = RandomProvider::default();
        let curated = CuratedProvider::<f64> {
            cfg: CurationConfig { pool_size: 64, exploratory: 4, ..Default::default() },
        };
        let providers: [&dyn ManeuverProvider<f64>; 2] = [&random, &curated];
        for provider in providers {
            for seed in [1, 2, 3] {
                let outcome = plan(&rest(-2.0, 0.0), &w, goal, provider, params, cfg, seed).unwrap();
                let best = outcome.best.expect("open-space problem must be solved");
                assert!(verify_plan(&rest(-2.0, 0.0), &best.plan, &w, &goal, &params));
                // History costs strictly decrease.
                for pair in outcome.history.windows(2) {
                    assert!(pair[1].cost.0 < pair[0].cost.0);
                }
            }
        }
    }

    #[test]
    fn tree_replay_and_collision_soundness() {
        let mut w = open_workspace(10.0);
        w.obstacles.push(Rect::new(-1.0, 1.0, 1.0, 3.0));
        w.obstacles.push(Rect::new(2.0, -3.0, 4.0, -1.0));
        let provider = RandomProvider::default();
        let goal = GoalRegion::new(6.0, 2.0, 1.0);
        let params = DynamicsParams::default();
        let cfg = PlannerConfig { max_iterations: 1500, ..Default::default() };
        let mut planner = Planner::new(&rest(-6.0, -2.0), &w, goal, &provider, params, cfg, 11).unwrap();
        planner.run();
        assert!(planner.nodes().len() > 100);
        for id in 0..planner.nodes().len() {
            let node = &planner.nodes()[id];
            assert!(!w.state_in_collision(&node.state));
            let replayed = planner.replay_chain(NodeId(id as u32)).unwrap();
            assert_eq!(replayed, node.state, "replay must be bit-exact");
            if let Some(p) = node.parent {
                let expect = planner.nodes()[p.index()].g + node.incoming.unwrap().duration;
                assert_eq!(node.g, expect);
            }
        }
    }

    #[test]
    fn pruning_is_sound_against_exhaustive_enumeration() {
        // Discrete 4-maneuver library; enumerate every plan of length <= 3
        // and check that no bound-pruned node prefixes a solution strictly
        // better than the incumbent recorded at prune time.
        let w = open_workspace(10.0);
        let library: Vec<Maneuver<f64>> = [(1.0, 1.0), (-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0)]
            .iter()
            .map(|&(l, r)| Maneuver::new(l, r, 1.0))
            .collect();
        let provider = LibraryProvider { library: library.clone() };
        let goal = GoalRegion::new(2.0, 0.0, 0.35);
        let params = DynamicsParams::default();
        let cfg = PlannerConfig {
            max_iterations: 6000,
            witness_radius: 0.0,
            greedy_selection_prob: 0.5,
            ..Default::default()
        };
        let start = rest(0.0, 0.0);
        let mut planner = Planner::new(&start, &w, goal, &provider, params, cfg, 13).unwrap();
        planner.run();
        let best = planner.best().expect("two-maneuver solution exists").cost.0;
        assert!((best - 2.0).abs() < 1e-9, "best cost {best}");

        // Enumerate plans of length <= 3.
        let mut solutions: Vec<(Vec<Maneuver<f64>>, f64)> = Vec::new();
        let mut stack: Vec<Vec<Maneuver<f64>>> = library.iter().map(|&m| vec![m]).collect();
        while let Some(chain) = stack.pop() {
            let mut state = start;
            let mut free = true;
            for m in &chain {
                let t = propagate(&state, m, &params).unwrap();
                if !w.trajectory_collision_free(&t) {
                    free = false;
                    break;
                }
                state = *t.end_state();
            }
            if free {
                if in_goal(&state, planner.goal()) {
                    let cost = chain.iter().map(|m| m.duration).sum();
                    solutions.push((chain.clone(), cost));
                }
                if chain.len() < 3 {
                    for &m in &library {
                        let mut next = chain.clone();
                        next.push(m);
                        stack.push(next);
                    }
                }
            }
        }
        assert!(!solutions.is_empty());
        let best_enum = solutions.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        assert!((best - best_enum).abs() < 1e-9);

        // Walk each solution's prefixes through the tree.
        for (chain, cost) in &solutions {
            let mut frontier = vec![NodeId(0)];
            for m in chain {
                let mut next = Vec::new();
                for id in frontier {
                    for &c in &planner.nodes()[id.index()].children {
                        if planner.nodes()[c.index()].incoming == Some(*m) {
                            next.push(c);
                        }
                    }
                }
                for &id in &next {
                    if let Some(PruneReason::Bound { incumbent }) = planner.nodes()[id.index()].pruned {
                        assert!(
                            *cost >= incumbent - 1e-9,
                            "pruned a prefix of a solution with cost {cost} < incumbent {incumbent}"
                        );
                    }
                }
                frontier = next;
            }
        }
    }

    #[test]
    fn run_log_format_is_deterministic() {
        let w = open_workspace(10.0);
        let provider = RandomProvider::default();
        let goal = GoalRegion::new(5.0, 0.0, 1.0);
        let params = DynamicsParams::default();
        let cfg = PlannerConfig { max_iterations: 20_000, ..Default::default() };
        let render = |seed| {
            let outcome = plan(&rest(-2.0, 0.0), &w, goal, &provider, params, cfg, seed).unwrap();
            let mut buf = Vec::new();
            write_run_log(&outcome.history, false, &mut buf).unwrap();
            String::from_utf8(buf).unwrap()
        };
        let a = render(21);
        let b = render(21);
        assert_eq!(a, b);
        assert!(a.lines().count() >= 1);
        assert!(a.starts_with("iter="));
    }
}

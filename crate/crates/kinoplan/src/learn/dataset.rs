//! Training records, the binary dataset format, and dataset generation.
//!
//! One record is captured per informed-set query of a curated-provider
//! planner run. The recorded root state is the f32 rounding of the node
//! state and the curation RNG is seeded from `(dataset seed, environment
//! id, rounded state bits)`, so any record can be re-validated later by
//! regenerating the environment from its id and re-running curation on the
//! stored state: the targets must match bit for bit.

use std::io::{self, Read, Write};
use std::sync::Mutex;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::{DataError, MANEUVER_DIM};
use crate::curation::{curate, CurationConfig, ManeuverEntry, ManeuverSet};
use crate::planner::{ManeuverProvider, Planner, PlannerConfig};
use crate::scalar::{real, to_f64, Real};
use crate::sim::{propagate, DynamicsParams, Maneuver, State};
use crate::world::{
    random_environment, rasterize_local, Disc, Environment, Footprint, GoalRegion, LocalMapConfig,
    RandomEnvConfig, Rect, Workspace,
};

/// One training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord<T> {
    /// Environment the sample came from; the environment regenerates
    /// deterministically from this id and the dataset seed.
    pub env_id: u32,
    /// Rounded node state the curation ran on.
    pub root_state: [T; 5],
    /// `(cos theta, sin theta, v_left / v_max, v_right / v_max)`.
    pub features: [T; 4],
    /// Occupancy grid, G*G values in {0, 1}.
    pub occupancy: Vec<T>,
    /// Normalized heuristic grid, G*G values in [0, 1].
    pub heuristic_map: Vec<T>,
    /// `slots` rows of normalized maneuvers; rows past `valid_count` are 0.
    pub targets: Vec<[T; MANEUVER_DIM]>,
    pub valid_count: usize,
}

/// Normalization context shared by every record of a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetMeta<T> {
    pub grid_size: usize,
    /// Exploratory slots N; targets carry N + 1 rows.
    pub exploratory: usize,
    pub dynamics: DynamicsParams<T>,
    pub dur_range: (T, T),
}

/// A loaded dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub meta: DatasetMeta<T>,
    pub records: Vec<DatasetRecord<T>>,
}

/// `(cos theta, sin theta, v_left / v_max, v_right / v_max)`.
pub fn state_features<T: Real>(s: &State<T>, v_max: T) -> [T; 4] {
    [s.theta.cos(), s.theta.sin(), s.v_left / v_max, s.v_right / v_max]
}

/// Normalize a maneuver into `[-1, 1]^2 x [0, 1]`.
pub fn normalize_maneuver<T: Real>(m: &Maneuver<T>, a_max: T, dur_range: (T, T)) -> [T; MANEUVER_DIM] {
    let span = dur_range.1 - dur_range.0;
    let dur = if span > T::zero() { (m.duration - dur_range.0) / span } else { T::zero() };
    [m.control.a_left / a_max, m.control.a_right / a_max, dur]
}

/// Everything `encode_record` needs.
#[derive(Debug, Clone, Copy)]
pub struct EncodeConfig<T> {
    pub local: LocalMapConfig<T>,
    pub dynamics: DynamicsParams<T>,
    pub dur_range: (T, T),
    /// Target rows per record (N + 1).
    pub slots: usize,
}

/// Build one record from a curated set at a node state: state features,
/// local maps, and normalized targets (missing exploratory slots zero-filled
/// and masked by `valid_count`).
pub fn encode_record<T: Real>(
    env_id: u32,
    state: &State<T>,
    w: &Workspace<T>,
    goal: &GoalRegion<T>,
    curated: &ManeuverSet<T>,
    cfg: &EncodeConfig<T>,
) -> DatasetRecord<T> {
    assert!(!curated.is_empty(), "cannot encode an empty maneuver set");
    assert!(curated.len() <= cfg.slots);
    let maps = rasterize_local(w, goal, state, &cfg.local);
    let mut targets = vec![[T::zero(); MANEUVER_DIM]; cfg.slots];
    for (row, entry) in targets.iter_mut().zip(&curated.entries) {
        *row = normalize_maneuver(&entry.maneuver, cfg.dynamics.a_max, cfg.dur_range);
    }
    DatasetRecord {
        env_id,
        root_state: [state.x, state.y, state.theta, state.v_left, state.v_right],
        features: state_features(state, cfg.dynamics.v_max),
        occupancy: maps.occupancy.iter().map(|&o| T::from_u8(o).unwrap()).collect(),
        heuristic_map: maps.heuristic,
        targets,
        valid_count: curated.len(),
    }
}

const DATASET_MAGIC: &[u8; 4] = b"KPDS";
const DATASET_VERSION: u32 = 1;

fn write_f32<W: Write>(out: &mut W, v: f32) -> io::Result<()> {
    out.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, DataError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf).map_err(|_| DataError::Truncated)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f32<R: Read>(input: &mut R) -> Result<f32, DataError> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf).map_err(|_| DataError::Truncated)?;
    Ok(f32::from_le_bytes(buf))
}

/// Binary layout: `KPDS`, version, G, N, record count, then six f32s
/// (tread separation, v_max, a_max, dt, duration min/max), then fixed-size
/// records of little-endian f32s: env id (u32), root state (5), features
/// (4), occupancy (G*G), heuristic (G*G), targets ((N+1) x 3), valid count
/// (u32).
pub fn save_dataset<T: Real, W: Write>(ds: &Dataset<T>, out: &mut W) -> io::Result<()> {
    out.write_all(DATASET_MAGIC)?;
    out.write_all(&DATASET_VERSION.to_le_bytes())?;
    out.write_all(&(ds.meta.grid_size as u32).to_le_bytes())?;
    out.write_all(&(ds.meta.exploratory as u32).to_le_bytes())?;
    out.write_all(&(ds.records.len() as u32).to_le_bytes())?;
    let d = &ds.meta.dynamics;
    for v in [d.tread_separation, d.v_max, d.a_max, d.dt, ds.meta.dur_range.0, ds.meta.dur_range.1] {
        write_f32(out, v.to_f32().expect("finite meta"))?;
    }
    let cells = ds.meta.grid_size * ds.meta.grid_size;
    let slots = ds.meta.exploratory + 1;
    for r in &ds.records {
        assert_eq!(r.occupancy.len(), cells);
        assert_eq!(r.heuristic_map.len(), cells);
        assert_eq!(r.targets.len(), slots);
        out.write_all(&r.env_id.to_le_bytes())?;
        for &v in &r.root_state {
            write_f32(out, v.to_f32().unwrap())?;
        }
        for &v in &r.features {
            write_f32(out, v.to_f32().unwrap())?;
        }
        for &v in &r.occupancy {
            write_f32(out, v.to_f32().unwrap())?;
        }
        for &v in &r.heuristic_map {
            write_f32(out, v.to_f32().unwrap())?;
        }
        for row in &r.targets {
            for &v in row {
                write_f32(out, v.to_f32().unwrap())?;
            }
        }
        out.write_all(&(r.valid_count as u32).to_le_bytes())?;
    }
    Ok(())
}

pub fn load_dataset<T: Real, R: Read>(input: &mut R) -> Result<Dataset<T>, DataError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic).map_err(|_| DataError::Truncated)?;
    if &magic != DATASET_MAGIC {
        return Err(DataError::BadMagic { expected: "KPDS" });
    }
    let version = read_u32(input)?;
    if version != DATASET_VERSION {
        return Err(DataError::BadVersion(version));
    }
    let grid_size = read_u32(input)? as usize;
    let exploratory = read_u32(input)? as usize;
    let count = read_u32(input)? as usize;
    let mut meta_vals = [0f32; 6];
    for v in meta_vals.iter_mut() {
        *v = read_f32(input)?;
    }
    let meta = DatasetMeta {
        grid_size,
        exploratory,
        dynamics: DynamicsParams {
            tread_separation: real(meta_vals[0] as f64),
            v_max: real(meta_vals[1] as f64),
            a_max: real(meta_vals[2] as f64),
            dt: real(meta_vals[3] as f64),
        },
        dur_range: (real(meta_vals[4] as f64), real(meta_vals[5] as f64)),
    };
    let cells = grid_size * grid_size;
    let slots = exploratory + 1;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let env_id = read_u32(input)?;
        let mut root_state = [T::zero(); 5];
        for v in root_state.iter_mut() {
            *v = real(read_f32(input)? as f64);
        }
        let mut features = [T::zero(); 4];
        for v in features.iter_mut() {
            *v = real(read_f32(input)? as f64);
        }
        let mut occupancy = Vec::with_capacity(cells);
        for _ in 0..cells {
            occupancy.push(real(read_f32(input)? as f64));
        }
        let mut heuristic_map = Vec::with_capacity(cells);
        for _ in 0..cells {
            heuristic_map.push(real(read_f32(input)? as f64));
        }
        let mut targets = Vec::with_capacity(slots);
        for _ in 0..slots {
            let mut row = [T::zero(); MANEUVER_DIM];
            for v in row.iter_mut() {
                *v = real(read_f32(input)? as f64);
            }
            targets.push(row);
        }
        let valid_count = read_u32(input)? as usize;
        if valid_count == 0 || valid_count > slots {
            return Err(DataError::DimensionMismatch(format!("bad valid_count {valid_count}")));
        }
        records.push(DatasetRecord { env_id, root_state, features, occupancy, heuristic_map, targets, valid_count });
    }
    Ok(Dataset { meta, records })
}

/// Dataset generation settings (planning precision).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetGenConfig {
    pub records: usize,
    pub seed: u64,
    pub grid_size: usize,
    pub window_side: f64,
    /// Curation pool size M.
    pub pool_size: usize,
    /// Exploratory maneuvers N.
    pub exploratory: usize,
    pub bounds: Rect<f64>,
    /// Obstacle coverage fraction of each generated environment.
    pub coverage: f64,
    pub goal_radius: f64,
    /// Minimum start-goal separation when sampling problems.
    pub min_separation: f64,
    /// Planner iterations spent per environment before moving on.
    pub iterations_per_env: usize,
    /// Records captured per environment before moving on.
    pub records_per_env: usize,
    pub dynamics: DynamicsParams<f64>,
    pub dur_range: (f64, f64),
    pub planner: PlannerConfig<f64>,
}

impl Default for DatasetGenConfig {
    fn default() -> Self {
        Self {
            records: 1000,
            seed: 42,
            grid_size: 32,
            window_side: 10.0,
            pool_size: 1000,
            exploratory: 4,
            bounds: Rect::new(-10.0, -10.0, 10.0, 10.0),
            coverage: 1.0 / 3.0,
            goal_radius: 1.0,
            min_separation: 8.0,
            iterations_per_env: 400,
            records_per_env: 200,
            dynamics: DynamicsParams::default(),
            dur_range: (0.5, 2.0),
            planner: PlannerConfig::default(),
        }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Curation seed for one record, mixed from the dataset seed, the
/// environment id, and the f32 bit patterns of the rounded root state.
pub fn record_curation_seed(base_seed: u64, env_id: u32, root: &[f32; 5]) -> u64 {
    let mut h = splitmix(base_seed ^ 0x6b70_6453_6565_64u64);
    h = splitmix(h ^ env_id as u64);
    for v in root {
        h = splitmix(h ^ v.to_bits() as u64);
    }
    h
}

/// Deterministically rebuild the environment (workspace, start, goal) used
/// for a given environment id under a generation config.
pub fn environment_for_id(cfg: &DatasetGenConfig, env_id: u32) -> Result<Environment<f64>, crate::world::WorldError> {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ 0x656e_76u64) ^ env_id as u64);
    let b = cfg.bounds;
    let margin = 1.5;
    let sample_point = |rng: &mut ChaCha8Rng| {
        (
            rng.gen_range(b.x_min + margin..=b.x_max - margin),
            rng.gen_range(b.y_min + margin..=b.y_max - margin),
        )
    };
    let (sx, sy) = sample_point(&mut rng);
    let (mut gx, mut gy) = sample_point(&mut rng);
    for _ in 0..10_000 {
        if ((gx - sx).powi(2) + (gy - sy).powi(2)).sqrt() >= cfg.min_separation {
            break;
        }
        (gx, gy) = sample_point(&mut rng);
    }
    let theta = rng.gen_range(-std::f64::consts::PI..=std::f64::consts::PI);
    let start = State::new(sx, sy, theta, 0.0, 0.0);
    let goal = GoalRegion::new(gx, gy, cfg.goal_radius);
    let mut env_cfg = RandomEnvConfig::new(b, cfg.coverage);
    env_cfg.keep_clear = vec![
        Disc { cx: sx, cy: sy, radius: 1.0 },
        Disc { cx: gx, cy: gy, radius: 1.0 },
    ];
    let workspace = random_environment(&mut rng, &env_cfg, Footprint::default())?;
    Ok(Environment { workspace, start, goal })
}

/// Curated provider that captures one dataset record per informed query.
///
/// The node state is rounded to f32 before curating, and the curation runs
/// on its own RNG stream derived from `(seed, env id, state bits)`, which is
/// what makes records re-validatable. The maneuvers handed back to the
/// planner are re-propagated from the exact (unrounded) node state.
struct RecordingProvider<'a> {
    base_seed: u64,
    env_id: u32,
    curation: CurationConfig<f64>,
    encode: EncodeConfig<f64>,
    cap: usize,
    sink: &'a Mutex<Vec<DatasetRecord<f32>>>,
}

fn round_state_f32(s: &State<f64>) -> ([f32; 5], State<f64>) {
    let bits = [s.x as f32, s.y as f32, s.theta as f32, s.v_left as f32, s.v_right as f32];
    let widened = State::new(
        bits[0] as f64,
        bits[1] as f64,
        bits[2] as f64,
        bits[3] as f64,
        bits[4] as f64,
    );
    (bits, widened)
}

fn cast_record(r: &DatasetRecord<f64>) -> DatasetRecord<f32> {
    DatasetRecord {
        env_id: r.env_id,
        root_state: r.root_state.map(|v| v as f32),
        features: r.features.map(|v| v as f32),
        occupancy: r.occupancy.iter().map(|&v| v as f32).collect(),
        heuristic_map: r.heuristic_map.iter().map(|&v| v as f32).collect(),
        targets: r.targets.iter().map(|row| row.map(|v| v as f32)).collect(),
        valid_count: r.valid_count,
    }
}

/// Re-run the record's curation from its stored state and environment.
/// Returns the freshly encoded record; exact equality with the stored one
/// is the dataset integrity check.
pub fn revalidate_record(
    cfg: &DatasetGenConfig,
    record: &DatasetRecord<f32>,
) -> Result<Option<DatasetRecord<f32>>, crate::world::WorldError> {
    let env = environment_for_id(cfg, record.env_id)?;
    let root = State::new(
        record.root_state[0] as f64,
        record.root_state[1] as f64,
        record.root_state[2] as f64,
        record.root_state[3] as f64,
        record.root_state[4] as f64,
    );
    let curation = CurationConfig {
        pool_size: cfg.pool_size,
        exploratory: cfg.exploratory,
        dur_range: cfg.dur_range,
        ..Default::default()
    };
    let encode = EncodeConfig {
        local: LocalMapConfig { grid_size: cfg.grid_size, window_side: cfg.window_side },
        dynamics: cfg.dynamics,
        dur_range: cfg.dur_range,
        slots: cfg.exploratory + 1,
    };
    let seed = record_curation_seed(cfg.seed, record.env_id, &record.root_state);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Some(set) = curate(&root, &env.workspace, &env.goal, &curation, &cfg.dynamics, &mut rng) else {
        return Ok(None);
    };
    let rebuilt = encode_record(record.env_id, &root, &env.workspace, &env.goal, &set, &encode);
    Ok(Some(cast_record(&rebuilt)))
}

impl ManeuverProvider<f64> for RecordingProvider<'_> {
    fn informed(
        &self,
        state: &State<f64>,
        w: &Workspace<f64>,
        goal: &GoalRegion<f64>,
        p: &DynamicsParams<f64>,
        _rng: &mut dyn RngCore,
    ) -> Option<ManeuverSet<f64>> {
        let (bits, rounded) = round_state_f32(state);
        let seed = record_curation_seed(self.base_seed, self.env_id, &bits);
        let mut curation_rng = ChaCha8Rng::seed_from_u64(seed);
        let set = curate(&rounded, w, goal, &self.curation, p, &mut curation_rng)?;
        {
            let mut sink = self.sink.lock().expect("record sink poisoned");
            if sink.len() < self.cap {
                let record = encode_record(self.env_id, &rounded, w, goal, &set, &self.encode);
                sink.push(cast_record(&record));
            }
        }
        // Hand the planner trajectories propagated from the exact state.
        let mut entries = Vec::with_capacity(set.len());
        for e in &set.entries {
            let trajectory = propagate(state, &e.maneuver, p).expect("curated durations are aligned");
            if w.trajectory_collision_free(&trajectory) {
                entries.push(ManeuverEntry { maneuver: e.maneuver, trajectory });
            }
        }
        (!entries.is_empty()).then_some(ManeuverSet { entries })
    }

    fn label(&self) -> &'static str {
        "curated-recording"
    }
}

/// Run curated-provider planners on freshly generated random environments,
/// capturing one record per curation event, until `cfg.records` records
/// exist; the records are then shuffled with the dataset seed.
pub fn generate_dataset(cfg: &DatasetGenConfig) -> Result<Dataset<f32>, crate::world::WorldError> {
    let curation = CurationConfig {
        pool_size: cfg.pool_size,
        exploratory: cfg.exploratory,
        dur_range: cfg.dur_range,
        ..Default::default()
    };
    let encode = EncodeConfig {
        local: LocalMapConfig { grid_size: cfg.grid_size, window_side: cfg.window_side },
        dynamics: cfg.dynamics,
        dur_range: cfg.dur_range,
        slots: cfg.exploratory + 1,
    };
    let mut records: Vec<DatasetRecord<f32>> = Vec::with_capacity(cfg.records);
    let mut env_id: u32 = 0;
    while records.len() < cfg.records {
        let env = environment_for_id(cfg, env_id)?;
        let sink = Mutex::new(Vec::new());
        let provider = RecordingProvider {
            base_seed: cfg.seed,
            env_id,
            curation,
            encode,
            cap: cfg.records_per_env.min(cfg.records - records.len()),
            sink: &sink,
        };
        let planner_cfg = PlannerConfig { max_iterations: cfg.iterations_per_env, ..cfg.planner };
        let planner_seed = splitmix(cfg.seed ^ 0x706c_616eu64) ^ env_id as u64;
        let mut planner = Planner::new(
            &env.start,
            &env.workspace,
            env.goal,
            &provider,
            cfg.dynamics,
            planner_cfg,
            planner_seed,
        )
        .map_err(|e| crate::world::WorldError::InvalidConfig(format!("planner setup failed: {e}")))?;
        while planner.step_iteration() {
            if sink.lock().unwrap().len() >= provider.cap {
                break;
            }
        }
        drop(planner);
        records.extend(sink.into_inner().unwrap());
        env_id += 1;
        if env_id > 100_000 {
            return Err(crate::world::WorldError::InvalidConfig(
                "dataset generation made no progress".into(),
            ));
        }
    }
    // Seeded shuffle, then trim to the exact count.
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(splitmix(cfg.seed ^ 0x7368_7566u64));
    for i in (1..records.len()).rev() {
        let j = shuffle_rng.gen_range(0..=i);
        records.swap(i, j);
    }
    records.truncate(cfg.records);
    Ok(Dataset {
        meta: DatasetMeta {
            grid_size: cfg.grid_size,
            exploratory: cfg.exploratory,
            dynamics: DynamicsParams {
                tread_separation: real(cfg.dynamics.tread_separation as f32 as f64),
                v_max: real(cfg.dynamics.v_max as f32 as f64),
                a_max: real(cfg.dynamics.a_max as f32 as f64),
                dt: real(cfg.dynamics.dt as f32 as f64),
            },
            dur_range: (real(cfg.dur_range.0 as f32 as f64), real(cfg.dur_range.1 as f32 as f64)),
        },
        records,
    })
}

/// Invariant check used by tests: every normalized value within bounds and
/// zero rows past `valid_count`.
pub fn record_is_valid<T: Real>(r: &DatasetRecord<T>, slots: usize) -> bool {
    let one = T::one();
    if r.valid_count == 0 || r.valid_count > slots || r.targets.len() != slots {
        return false;
    }
    let in_unit = |v: T| v >= T::zero() && v <= one;
    let in_sym = |v: T| v >= -one && v <= one;
    r.features.iter().all(|&v| in_sym(v))
        && r.occupancy.iter().all(|&v| v == T::zero() || v == one)
        && r.heuristic_map.iter().all(|&v| in_unit(v))
        && r.targets[..r.valid_count]
            .iter()
            .all(|row| in_sym(row[0]) && in_sym(row[1]) && in_unit(row[2]))
        && r.targets[r.valid_count..]
            .iter()
            .all(|row| row.iter().all(|&v| v == T::zero()))
}

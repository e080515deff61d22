//! File formats: JSON problem descriptions and CSV tabular output.
//!
//! Problem files are human-writable JSON; every tabular artifact (trajectory,
//! boundary trace, control schedule, sweep report) is CSV with a fixed header
//! line so fixtures stay diff-able. No binary formats.

use std::io::{Read as _, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::SweepEntry;
use crate::error::{Error, Result};
use crate::linalg::{Mat, Tolerances};
use crate::syncalg::{GroupPartition, SyncProblem};
use crate::wavesim::{half_sine_state, ControlSchedule, Grid1D, SimConfig, WaveState, WaveTrajectory};

/// Grid block of a problem file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub intervals: usize,
}

/// Time-stepping block of a problem file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimSpec {
    pub t_final: f64,
    pub dt: f64,
    #[serde(default)]
    pub post_time: f64,
}

/// Initial-data block: either a named preset or explicit arrays.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InitSpec {
    /// `"zero"` or `"half_sine"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Component amplitudes for the `half_sine` preset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    /// Explicit `N x (J+1)` displacement samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u: Option<Vec<Vec<f64>>>,
    /// Explicit `N x (J+1)` velocity samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<Vec<Vec<f64>>>,
}

/// On-disk problem description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemFile {
    pub n: usize,
    pub m: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
    /// Partition cut points (strictly increasing, interior); empty = one group.
    #[serde(default)]
    pub partition: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitSpec>,
}

fn rows_to_matrix(rows: &[Vec<f64>], nrows: usize, ncols: usize, what: &str) -> Result<Mat> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Input(format!(
            "{what} must be a {nrows} x {ncols} array of numbers"
        )));
    }
    if rows.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Input(format!("{what} has non-finite entries")));
    }
    Ok(Mat::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl ProblemFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let mut buf = String::new();
        std::fs::File::open(path)?.read_to_string(&mut buf)?;
        Self::from_json(&buf)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        if file.n == 0 || file.m == 0 {
            return Err(Error::Input("n and m must be positive".into()));
        }
        Ok(file)
    }

    pub fn to_json(&self) -> String {
        // serde_json can only fail on non-string map keys; not possible here
        serde_json::to_string_pretty(self).expect("problem file serialization")
    }

    /// Build the validated in-memory problem. With `allow_unchecked` the
    /// rank/symmetrizability requirements on `D` and `B` are skipped for
    /// exploratory runs.
    pub fn to_problem(&self, allow_unchecked: bool) -> Result<SyncProblem> {
        let a = rows_to_matrix(&self.a, self.n, self.n, "a")?;
        let b = rows_to_matrix(&self.b, self.n, self.n, "b")?;
        let d = rows_to_matrix(&self.d, self.n, self.m, "d")?;
        let mut cut_points = Vec::with_capacity(self.partition.len() + 2);
        cut_points.push(0);
        cut_points.extend_from_slice(&self.partition);
        cut_points.push(self.n);
        let partition = GroupPartition::new(cut_points)?;
        if allow_unchecked {
            SyncProblem::new_unchecked(a, b, d, partition)
        } else {
            SyncProblem::new(a, b, d, partition, &Tolerances::default())
        }
    }

    pub fn grid(&self, override_j: Option<usize>) -> Result<Grid1D> {
        let j = override_j
            .or(self.grid.as_ref().map(|g| g.intervals))
            .unwrap_or(100);
        Grid1D::new(j)
    }

    /// Default horizon T = 4: two round trips of the unit-speed wave.
    pub fn sim_config(
        &self,
        grid: &Grid1D,
        override_t: Option<f64>,
        override_dt: Option<f64>,
    ) -> Result<SimConfig> {
        let spec = self.sim.as_ref();
        let t = override_t.or(spec.map(|s| s.t_final)).unwrap_or(4.0);
        let dt = override_dt
            .or(spec.map(|s| s.dt))
            .unwrap_or(0.5 * grid.h());
        let cfg = SimConfig::new(t, dt, grid)?;
        Ok(cfg.with_post_time(spec.map(|s| s.post_time).unwrap_or(0.0)))
    }

    pub fn initial_state(&self, grid: &Grid1D) -> Result<WaveState> {
        let spec = match &self.init {
            None => return Ok(WaveState::zero(self.n, grid)),
            Some(s) => s,
        };
        let state = match (spec.preset.as_deref(), &spec.u, &spec.v) {
            (Some("zero"), None, None) => WaveState::zero(self.n, grid),
            (Some("half_sine"), None, None) => {
                let amps = spec.amplitudes.clone().unwrap_or_else(|| vec![1.0; self.n]);
                if amps.len() != self.n {
                    return Err(Error::Input(format!(
                        "half_sine needs {} amplitudes, got {}",
                        self.n,
                        amps.len()
                    )));
                }
                half_sine_state(&amps, grid)
            }
            (None, Some(u), Some(v)) => WaveState {
                u: rows_to_matrix(u, self.n, grid.nodes(), "init.u")?,
                v: rows_to_matrix(v, self.n, grid.nodes(), "init.v")?,
            },
            (Some(other), None, None) => {
                return Err(Error::Input(format!("unknown init preset '{other}'")))
            }
            _ => {
                return Err(Error::Input(
                    "init must be either a preset or explicit u/v arrays".into(),
                ))
            }
        };
        state.validate(self.n, grid)?;
        Ok(state)
    }
}

/// On-disk subspace description for D synthesis: spanning vectors of the
/// subspace the controls must not excite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubspaceFile {
    pub n: usize,
    /// Spanning vectors, each of length `n`; may be empty (zero subspace).
    #[serde(default)]
    pub vectors: Vec<Vec<f64>>,
}

impl SubspaceFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let mut buf = String::new();
        std::fs::File::open(path)?.read_to_string(&mut buf)?;
        let file: SubspaceFile = serde_json::from_str(&buf)?;
        if file.n == 0 {
            return Err(Error::Input("n must be positive".into()));
        }
        Ok(file)
    }

    /// Spanning matrix with the vectors as columns (n x 0 when empty).
    pub fn spanning_matrix(&self) -> Result<Mat> {
        if self.vectors.iter().any(|v| v.len() != self.n) {
            return Err(Error::Input(format!(
                "every vector must have length {}",
                self.n
            )));
        }
        if self.vectors.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::Input("vectors have non-finite entries".into()));
        }
        Ok(Mat::from_fn(self.n, self.vectors.len(), |i, j| {
            self.vectors[j][i]
        }))
    }
}

/// Matrix output of D synthesis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixFile {
    pub rows: Vec<Vec<f64>>,
}

impl MatrixFile {
    pub fn from_matrix(m: &Mat) -> Self {
        MatrixFile {
            rows: matrix_to_rows(m),
        }
    }
}

pub const TRAJECTORY_HEADER: [&str; 5] = ["t", "k", "j", "u", "v"];
pub const TRACE_HEADER: [&str; 3] = ["t", "k", "value"];
pub const SCHEDULE_HEADER: [&str; 3] = ["t", "control_index", "value"];
pub const SWEEP_HEADER: [&str; 5] = [
    "epsilon",
    "iterations",
    "terminal_dev",
    "control_energy",
    "full_energy_ratio",
];

pub fn write_trajectory_csv<W: std::io::Write>(w: W, traj: &WaveTrajectory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRAJECTORY_HEADER)?;
    for (nstep, state) in traj.states.iter().enumerate() {
        let t = traj.time(nstep);
        for k in 0..state.u.nrows() {
            for j in 0..state.u.ncols() {
                out.write_record(&[
                    t.to_string(),
                    k.to_string(),
                    j.to_string(),
                    state.u[(k, j)].to_string(),
                    state.v[(k, j)].to_string(),
                ])?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_trace_csv<W: std::io::Write>(w: W, traj: &WaveTrajectory) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(TRACE_HEADER)?;
    for nstep in 0..=traj.steps() {
        let t = traj.time(nstep);
        for k in 0..traj.trace.nrows() {
            out.write_record(&[
                t.to_string(),
                k.to_string(),
                traj.trace[(k, nstep)].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn write_schedule_csv<W: std::io::Write>(
    w: W,
    schedule: &ControlSchedule,
    dt: f64,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SCHEDULE_HEADER)?;
    for nstep in 0..schedule.samples.ncols() {
        let t = nstep as f64 * dt;
        for k in 0..schedule.samples.nrows() {
            out.write_record(&[
                t.to_string(),
                k.to_string(),
                schedule.samples[(k, nstep)].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Parse a schedule CSV against a fixed step grid. Rows may be sparse:
/// unlisted samples are zero. Times must sit on multiples of `cfg.dt`.
pub fn read_schedule_csv<R: std::io::Read>(
    r: R,
    m: usize,
    cfg: &SimConfig,
) -> Result<ControlSchedule> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r);
    {
        let headers = reader.headers()?;
        let expected: Vec<&str> = SCHEDULE_HEADER.to_vec();
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(Error::Input(format!(
                "schedule header must be '{}', got '{}'",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
    }
    let steps = cfg.main_steps();
    let mut schedule = ControlSchedule::zero(m, cfg);
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 3 {
            return Err(Error::Input(format!(
                "schedule row {} has {} fields, expected 3",
                line + 2,
                record.len()
            )));
        }
        let t: f64 = record[0]
            .parse()
            .map_err(|_| Error::Input(format!("schedule row {}: bad time", line + 2)))?;
        let k: usize = record[1]
            .parse()
            .map_err(|_| Error::Input(format!("schedule row {}: bad control index", line + 2)))?;
        let value: f64 = record[2]
            .parse()
            .map_err(|_| Error::Input(format!("schedule row {}: bad value", line + 2)))?;
        if !t.is_finite() || !value.is_finite() {
            return Err(Error::Input(format!(
                "schedule row {}: non-finite entry",
                line + 2
            )));
        }
        let nstep = (t / cfg.dt).round();
        if !(0.0..=(steps as f64 + 0.5)).contains(&nstep)
            || (t - nstep * cfg.dt).abs() > 1e-8 * cfg.dt.max(t.abs())
        {
            return Err(Error::Input(format!(
                "schedule row {}: time {t} is not a step multiple of dt = {} within [0, T]",
                line + 2,
                cfg.dt
            )));
        }
        if k >= m {
            return Err(Error::Input(format!(
                "schedule row {}: control index {k} out of range (m = {m})",
                line + 2
            )));
        }
        schedule.samples[(k, nstep as usize)] = value;
    }
    Ok(schedule)
}

pub fn read_schedule_csv_path(path: &Path, m: usize, cfg: &SimConfig) -> Result<ControlSchedule> {
    read_schedule_csv(std::fs::File::open(path)?, m, cfg)
}

pub fn write_sweep_csv<W: std::io::Write>(w: W, entries: &[SweepEntry]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for entry in entries {
        out.write_record(&[
            entry.epsilon.to_string(),
            entry.result.iterations.to_string(),
            entry.result.terminal_dev.to_string(),
            entry.result.control_energy.to_string(),
            entry.full_energy_ratio.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Write a string to a path, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"{
        "n": 2, "m": 1,
        "a": [[2.0, -1.0], [-1.0, 2.0]],
        "b": [[1.0, 0.0], [0.0, 1.0]],
        "d": [[0.7071067811865475], [-0.7071067811865475]],
        "partition": [],
        "grid": {"intervals": 20},
        "sim": {"t_final": 1.0, "dt": 0.025},
        "init": {"preset": "half_sine", "amplitudes": [1.0, -0.5]}
    }"#;

    #[test]
    fn round_trips_problem_json() {
        let file = ProblemFile::from_json(FIXTURE).unwrap();
        let again = ProblemFile::from_json(&file.to_json()).unwrap();
        assert_eq!(file.n, again.n);
        assert_eq!(file.a, again.a);
        let problem = file.to_problem(false).unwrap();
        assert_eq!(problem.n(), 2);
        assert_eq!(problem.m(), 1);
    }

    #[test]
    fn rejects_malformed_json() {
        assert!(ProblemFile::from_json("{ not json").is_err());
        assert!(ProblemFile::from_json(r#"{"n": 0, "m": 1, "a": [], "b": [], "d": []}"#).is_err());
    }

    #[test]
    fn rejects_shape_mismatch() {
        let file = ProblemFile::from_json(
            r#"{"n": 2, "m": 1, "a": [[1.0]], "b": [[1.0, 0.0], [0.0, 1.0]], "d": [[1.0], [0.0]]}"#,
        )
        .unwrap();
        assert!(file.to_problem(false).is_err());
    }

    #[test]
    fn unchecked_override_skips_rank_check() {
        // rank-deficient D
        let file = ProblemFile::from_json(
            r#"{"n": 2, "m": 2,
                "a": [[1.0, 0.0], [0.0, 1.0]],
                "b": [[1.0, 0.0], [0.0, 1.0]],
                "d": [[1.0, 1.0], [1.0, 1.0]]}"#,
        )
        .unwrap();
        assert!(file.to_problem(false).is_err());
        assert!(file.to_problem(true).is_ok());
    }

    #[test]
    fn init_presets() {
        let file = ProblemFile::from_json(FIXTURE).unwrap();
        let grid = file.grid(None).unwrap();
        let state = file.initial_state(&grid).unwrap();
        assert!(state.u[(0, grid.intervals())] > 0.99);
        assert!(state.u[(1, grid.intervals())] < -0.49);
    }

    #[test]
    fn schedule_csv_round_trip() {
        let file = ProblemFile::from_json(FIXTURE).unwrap();
        let grid = file.grid(None).unwrap();
        let cfg = file.sim_config(&grid, None, None).unwrap();
        let mut schedule = ControlSchedule::zero(1, &cfg);
        for n in 0..schedule.samples.ncols() {
            schedule.samples[(0, n)] = (n as f64 * 0.17).sin();
        }
        let mut buf = Vec::new();
        write_schedule_csv(&mut buf, &schedule, cfg.dt).unwrap();
        let parsed = read_schedule_csv(buf.as_slice(), 1, &cfg).unwrap();
        assert_eq!(parsed.samples, schedule.samples);
    }

    #[test]
    fn schedule_csv_rejects_bad_rows() {
        let file = ProblemFile::from_json(FIXTURE).unwrap();
        let grid = file.grid(None).unwrap();
        let cfg = file.sim_config(&grid, None, None).unwrap();
        let bad_header = "time,idx,val\n0.0,0,1.0\n";
        assert!(read_schedule_csv(bad_header.as_bytes(), 1, &cfg).is_err());
        let off_grid = "t,control_index,value\n0.013,0,1.0\n";
        assert!(read_schedule_csv(off_grid.as_bytes(), 1, &cfg).is_err());
        let bad_index = "t,control_index,value\n0.0,5,1.0\n";
        assert!(read_schedule_csv(bad_index.as_bytes(), 1, &cfg).is_err());
    }

    #[test]
    fn sweep_csv_header() {
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "epsilon,iterations,terminal_dev,control_energy,full_energy_ratio"
        );
    }

    #[test]
    fn subspace_file_parses() {
        let file: SubspaceFile = serde_json::from_str(
            r#"{"n": 2, "vectors": [[0.7071067811865475, 0.7071067811865475]]}"#,
        )
        .unwrap();
        let m = file.spanning_matrix().unwrap();
        assert_eq!(m.shape(), (2, 1));
    }
}

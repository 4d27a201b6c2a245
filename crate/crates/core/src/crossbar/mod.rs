//! Passive crossbar topology: device grid, line naming and bias roles.
//!
//! An array has one or two layers of `rows x cols` crosspoints. In a
//! two-layer stack with `shared_middle` set, the column electrodes are the
//! same physical lines for both layers, so a stack is solved as one network
//! over `2*rows + cols` lines.

mod io;
mod solver;

pub use io::{read_conductance_csv, write_conductance_csv, CsvError};
pub use solver::{group_current, solve_network, SolveResult, SolverError, SolverOptions};

use serde::{Deserialize, Serialize};

use crate::device::{self, DeviceError, DeviceParams, DeviceState, ProcessVariation};
use crate::rng::Stream;

/// Position of one crosspoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeviceAddr {
    pub layer: usize,
    pub row: usize,
    pub col: usize,
}

impl DeviceAddr {
    pub fn new(layer: usize, row: usize, col: usize) -> Self {
        DeviceAddr { layer, row, col }
    }
}

/// One electrode line of the array.
///
/// Row lines are per layer. Column lines are per layer too unless the stack
/// shares its middle electrodes, in which case all column lines carry
/// `layer: 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Line {
    Row { layer: usize, index: usize },
    Col { layer: usize, index: usize },
}

/// Electrical role of a line in one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LineRole {
    /// Source at a fixed potential (V).
    Driven(f64),
    /// Held at 0 V by a sense amplifier; its current is measured.
    VirtualGround,
    /// Tied to ground, current not measured.
    Grounded,
    /// Disconnected; voltage settles by KCL.
    Floating,
}

/// Dimension/index bookkeeping shared by arrays and bias configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineMap {
    pub layers: usize,
    pub rows: usize,
    pub cols: usize,
    pub shared_middle: bool,
}

impl LineMap {
    fn col_layers(&self) -> usize {
        if self.layers == 2 && !self.shared_middle {
            2
        } else {
            1
        }
    }

    pub fn line_count(&self) -> usize {
        self.layers * self.rows + self.col_layers() * self.cols
    }

    pub fn index_of(&self, line: Line) -> Option<usize> {
        match line {
            Line::Row { layer, index } if layer < self.layers && index < self.rows => {
                Some(layer * self.rows + index)
            }
            Line::Col { layer, index } if layer < self.col_layers() && index < self.cols => {
                Some(self.layers * self.rows + layer * self.cols + index)
            }
            _ => None,
        }
    }

    pub fn line_at(&self, idx: usize) -> Option<Line> {
        let row_lines = self.layers * self.rows;
        if idx < row_lines {
            Some(Line::Row { layer: idx / self.rows, index: idx % self.rows })
        } else {
            let c = idx - row_lines;
            if c < self.col_layers() * self.cols {
                Some(Line::Col { layer: c / self.cols, index: c % self.cols })
            } else {
                None
            }
        }
    }

    /// All row lines, in index order; the row pool that challenges select from.
    pub fn row_pool(&self) -> Vec<Line> {
        (0..self.layers * self.rows).filter_map(|i| self.line_at(i)).collect()
    }

    /// All column lines, in index order; the driven pool.
    pub fn col_pool(&self) -> Vec<Line> {
        (self.layers * self.rows..self.line_count()).filter_map(|i| self.line_at(i)).collect()
    }

    /// The column line a device at `addr` touches.
    pub fn device_col_line(&self, addr: DeviceAddr) -> Line {
        let layer = if self.shared_middle || self.layers == 1 { 0 } else { addr.layer };
        Line::Col { layer, index: addr.col }
    }
}

/// One crosspoint: its sampled parameters plus the tunable state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crosspoint {
    pub params: DeviceParams,
    pub state: DeviceState,
}

/// Dense per-device conductance values for a whole array (S).
///
/// Used for target maps, state snapshots and CSV interchange.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceGrid {
    pub layers: usize,
    pub rows: usize,
    pub cols: usize,
    values: Vec<f64>,
}

impl ConductanceGrid {
    pub fn filled(layers: usize, rows: usize, cols: usize, value: f64) -> Self {
        ConductanceGrid { layers, rows, cols, values: vec![value; layers * rows * cols] }
    }

    pub fn from_values(layers: usize, rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), layers * rows * cols);
        ConductanceGrid { layers, rows, cols, values }
    }

    fn offset(&self, addr: DeviceAddr) -> usize {
        (addr.layer * self.rows + addr.row) * self.cols + addr.col
    }

    pub fn get(&self, addr: DeviceAddr) -> f64 {
        self.values[self.offset(addr)]
    }

    pub fn set(&mut self, addr: DeviceAddr, value: f64) {
        let i = self.offset(addr);
        self.values[i] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn addrs(&self) -> impl Iterator<Item = DeviceAddr> + '_ {
        let (rows, cols) = (self.rows, self.cols);
        (0..self.layers).flat_map(move |l| {
            (0..rows).flat_map(move |r| (0..cols).map(move |c| DeviceAddr::new(l, r, c)))
        })
    }

    /// Largest absolute difference to another grid of the same shape.
    pub fn max_abs_diff(&self, other: &ConductanceGrid) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// An M x N (optionally two-layer stacked) grid of analog crosspoints.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossbarArray {
    map: LineMap,
    devices: Vec<Crosspoint>,
}

impl CrossbarArray {
    /// Sample a fresh array from a process-variation model.
    pub fn sample(
        layers: usize,
        rows: usize,
        cols: usize,
        shared_middle: bool,
        process: &ProcessVariation,
        rng: &mut Stream,
    ) -> Result<Self, DeviceError> {
        if !(layers == 1 || layers == 2) || rows == 0 || cols == 0 {
            return Err(DeviceError::InvalidParams(
                "array needs 1 or 2 layers and nonzero dimensions".into(),
            ));
        }
        process.validate()?;
        let map = LineMap { layers, rows, cols, shared_middle };
        let devices = (0..layers * rows * cols)
            .map(|_| {
                let (params, state) = device::sample(process, rng);
                Crosspoint { params, state }
            })
            .collect();
        Ok(CrossbarArray { map, devices })
    }

    /// Build an array from explicit crosspoints (layer-major, then row-major).
    pub fn from_crosspoints(
        layers: usize,
        rows: usize,
        cols: usize,
        shared_middle: bool,
        devices: Vec<Crosspoint>,
    ) -> Self {
        assert_eq!(devices.len(), layers * rows * cols, "device grid dimensions must match");
        CrossbarArray { map: LineMap { layers, rows, cols, shared_middle }, devices }
    }

    /// Single-layer array with every device in the same uniform state.
    pub fn uniform(rows: usize, cols: usize, params: DeviceParams, g_ref: f64) -> Self {
        let xp = Crosspoint { params, state: DeviceState::new(g_ref) };
        Self::from_crosspoints(1, rows, cols, false, vec![xp; rows * cols])
    }

    pub fn line_map(&self) -> LineMap {
        self.map
    }

    pub fn layers(&self) -> usize {
        self.map.layers
    }

    pub fn rows(&self) -> usize {
        self.map.rows
    }

    pub fn cols(&self) -> usize {
        self.map.cols
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }

    fn offset(&self, addr: DeviceAddr) -> usize {
        debug_assert!(addr.layer < self.map.layers && addr.row < self.map.rows && addr.col < self.map.cols);
        (addr.layer * self.map.rows + addr.row) * self.map.cols + addr.col
    }

    pub fn device(&self, addr: DeviceAddr) -> &Crosspoint {
        &self.devices[self.offset(addr)]
    }

    pub fn device_mut(&mut self, addr: DeviceAddr) -> &mut Crosspoint {
        let i = self.offset(addr);
        &mut self.devices[i]
    }

    pub fn addrs(&self) -> impl Iterator<Item = DeviceAddr> + '_ {
        let map = self.map;
        (0..map.layers).flat_map(move |l| {
            (0..map.rows)
                .flat_map(move |r| (0..map.cols).map(move |c| DeviceAddr::new(l, r, c)))
        })
    }

    pub fn crosspoints(&self) -> impl Iterator<Item = (DeviceAddr, &Crosspoint)> + '_ {
        self.addrs().map(move |a| (a, self.device(a)))
    }

    /// The two lines a device connects.
    pub fn device_lines(&self, addr: DeviceAddr) -> (Line, Line) {
        (Line::Row { layer: addr.layer, index: addr.row }, self.map.device_col_line(addr))
    }

    /// Mean RESET threshold over the array (V); the reference for rattling
    /// pulse amplitudes.
    pub fn mean_v_reset(&self) -> f64 {
        let sum: f64 = self.devices.iter().map(|d| d.params.v_reset).sum();
        sum / self.devices.len() as f64
    }

    /// Snapshot of all `g_ref` values.
    pub fn conductance_grid(&self) -> ConductanceGrid {
        let mut grid = ConductanceGrid::filled(self.map.layers, self.map.rows, self.map.cols, 0.0);
        for (addr, xp) in self.crosspoints() {
            grid.set(addr, xp.state.g_ref);
        }
        grid
    }

    /// Overwrite device states from a snapshot, leaving `nl_state` untouched.
    ///
    /// Values may deviate from the dynamic range by a tiny rounding margin
    /// (CSV files carry 9 significant digits) and are clamped back; anything
    /// further out is an error.
    pub fn set_conductances(&mut self, grid: &ConductanceGrid) -> Result<(), DeviceError> {
        let map = self.map;
        if grid.layers != map.layers || grid.rows != map.rows || grid.cols != map.cols {
            return Err(DeviceError::InvalidParams(format!(
                "grid is {}x{}x{} but the array is {}x{}x{}",
                grid.layers, grid.rows, grid.cols, map.layers, map.rows, map.cols
            )));
        }
        for addr in grid.addrs() {
            let g = grid.get(addr);
            let (lo, hi) = {
                let p = &self.device(addr).params;
                (p.g_min, p.g_max)
            };
            if !g.is_finite() || g < lo * (1.0 - 1e-8) || g > hi * (1.0 + 1e-8) {
                return Err(DeviceError::InvalidParams(format!(
                    "g_ref {g:e} S at layer {} row {} col {} outside [{lo:e}, {hi:e}]",
                    addr.layer, addr.row, addr.col
                )));
            }
            self.device_mut(addr).state.g_ref = g.clamp(lo, hi);
        }
        Ok(())
    }
}

/// Per-line electrical roles for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasConfig {
    map: LineMap,
    roles: Vec<LineRole>,
}

impl BiasConfig {
    /// Start from all lines floating.
    pub fn all_floating(array: &CrossbarArray) -> Self {
        let map = array.line_map();
        BiasConfig { map, roles: vec![LineRole::Floating; map.line_count()] }
    }

    pub fn set(&mut self, line: Line, role: LineRole) -> Result<(), SolverError> {
        let idx = self.map.index_of(line).ok_or(SolverError::UnknownLine(line))?;
        self.roles[idx] = role;
        Ok(())
    }

    pub fn role(&self, line: Line) -> Option<LineRole> {
        self.map.index_of(line).map(|i| self.roles[i])
    }

    pub fn line_map(&self) -> LineMap {
        self.map
    }

    pub(crate) fn roles(&self) -> &[LineRole] {
        &self.roles
    }

    /// Validity for solving: one role per line (by construction), at least
    /// one driven and one virtually grounded line, finite drive voltages.
    pub fn validate(&self, array: &CrossbarArray) -> Result<(), SolverError> {
        if self.map != array.line_map() {
            return Err(SolverError::DimensionMismatch);
        }
        let mut driven = 0;
        let mut sensed = 0;
        for role in &self.roles {
            match role {
                LineRole::Driven(v) => {
                    if !v.is_finite() {
                        return Err(SolverError::InvalidBias("non-finite drive voltage".into()));
                    }
                    driven += 1;
                }
                LineRole::VirtualGround => sensed += 1,
                _ => {}
            }
        }
        if driven == 0 || sensed == 0 {
            return Err(SolverError::InvalidBias(
                "need at least one driven and one virtually grounded line".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_indexing_round_trips() {
        for &(layers, shared) in &[(1usize, false), (2, true), (2, false)] {
            let map = LineMap { layers, rows: 3, cols: 4, shared_middle: shared };
            for i in 0..map.line_count() {
                let line = map.line_at(i).unwrap();
                assert_eq!(map.index_of(line), Some(i));
            }
            assert_eq!(map.line_at(map.line_count()), None);
            assert_eq!(map.row_pool().len(), layers * 3);
            let col_layers = if layers == 2 && !shared { 2 } else { 1 };
            assert_eq!(map.col_pool().len(), col_layers * 4);
        }
    }

    #[test]
    fn shared_middle_merges_column_lines() {
        let map = LineMap { layers: 2, rows: 3, cols: 4, shared_middle: true };
        let bottom = map.device_col_line(DeviceAddr::new(0, 1, 2));
        let top = map.device_col_line(DeviceAddr::new(1, 0, 2));
        assert_eq!(bottom, top);
        let unshared = LineMap { shared_middle: false, ..map };
        assert_ne!(
            unshared.device_col_line(DeviceAddr::new(0, 1, 2)),
            unshared.device_col_line(DeviceAddr::new(1, 0, 2))
        );
    }

    #[test]
    fn grid_snapshot_and_restore() {
        let params = DeviceParams::default();
        let mut array = CrossbarArray::uniform(2, 2, params, 10e-6);
        let mut grid = array.conductance_grid();
        grid.set(DeviceAddr::new(0, 1, 0), 55e-6);
        array.set_conductances(&grid).unwrap();
        assert_eq!(array.device(DeviceAddr::new(0, 1, 0)).state.g_ref, 55e-6);

        let mut bad = grid.clone();
        bad.set(DeviceAddr::new(0, 0, 0), 1e-3);
        assert!(array.set_conductances(&bad).is_err());
    }
}

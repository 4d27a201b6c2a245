//! Nonlinear nodal analysis of a biased crossbar.
//!
//! Unknowns are the floating-line voltages. Newton iteration on KCL with the
//! analytic per-device slope converges in a handful of steps for these
//! monotone networks; steps are damped whenever the residual grows.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::{BiasConfig, CrossbarArray, Crosspoint, Line, LineMap, LineRole};
use crate::device;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid bias configuration: {0}")]
    InvalidBias(String),
    #[error("line {0:?} does not exist in this array")]
    UnknownLine(Line),
    #[error("bias configuration built for a different array shape")]
    DimensionMismatch,
    #[error("no convergence after {iterations} iterations (KCL residual {residual:e} A)")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian")]
    Singular,
    #[error("line {0:?} is not virtually grounded")]
    NotVirtualGround(Line),
}

/// Tolerances and limits for [`solve_network`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Absolute KCL tolerance at the 1 uA current scale (A).
    pub tol_abs: f64,
    /// Current scale that `tol_abs` refers to (A).
    pub scale_ref: f64,
    /// Newton iteration limit.
    pub max_iterations: usize,
    /// Step shrink factor when the residual grows.
    pub damping: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tol_abs: 1e-12, scale_ref: 1e-6, max_iterations: 100, damping: 0.5 }
    }
}

/// DC operating point of the network.
#[derive(Debug, Clone)]
pub struct SolveResult {
    map: LineMap,
    roles: Vec<LineRole>,
    voltages: Vec<f64>,
    terminal_currents: Vec<f64>,
    /// Largest KCL residual over the floating lines (A).
    pub residual: f64,
    /// Newton updates taken.
    pub iterations: usize,
}

impl SolveResult {
    /// Voltage of a line (V); floating lines carry the solved values.
    pub fn voltage(&self, line: Line) -> Option<f64> {
        self.map.index_of(line).map(|i| self.voltages[i])
    }

    /// Current absorbed by the line terminal from the network (A); positive
    /// for sinks (the virtually grounded collectors), negative for sources.
    pub fn terminal_current(&self, line: Line) -> Option<f64> {
        self.map.index_of(line).map(|i| self.terminal_currents[i])
    }

    pub fn role(&self, line: Line) -> Option<LineRole> {
        self.map.index_of(line).map(|i| self.roles[i])
    }

    /// Sum of all terminal currents (A); zero up to solver tolerance.
    pub fn conservation_error(&self) -> f64 {
        self.terminal_currents.iter().sum()
    }

    pub fn line_map(&self) -> LineMap {
        self.map
    }
}

struct DeviceEdge {
    row_line: usize,
    col_line: usize,
}

/// Solve for the DC operating point of `array` under `bias`.
///
/// Deterministic; returns an explicit error (with the last residual) if the
/// Newton iteration does not reach tolerance.
pub fn solve_network(
    array: &CrossbarArray,
    bias: &BiasConfig,
    opts: &SolverOptions,
) -> Result<SolveResult, SolverError> {
    bias.validate(array)?;
    let map = array.line_map();
    let roles = bias.roles().to_vec();
    let line_count = map.line_count();

    let crosspoints: Vec<&Crosspoint> = array.addrs().map(|a| array.device(a)).collect();
    // The sinh coefficients are fixed during a solve; cache them.
    let coeffs: Vec<(f64, f64)> =
        crosspoints.iter().map(|xp| device::sinh_coeffs(&xp.state, &xp.params)).collect();
    let edges: Vec<DeviceEdge> = array
        .addrs()
        .map(|addr| {
            let (row, col) = array.device_lines(addr);
            DeviceEdge {
                row_line: map.index_of(row).expect("row line in map"),
                col_line: map.index_of(col).expect("col line in map"),
            }
        })
        .collect();

    let mut voltages = vec![0.0; line_count];
    let mut is_unknown = vec![false; line_count];
    let mut driven_sum = 0.0;
    let mut driven_count = 0usize;
    for (i, role) in roles.iter().enumerate() {
        match role {
            LineRole::Driven(v) => {
                voltages[i] = *v;
                driven_sum += v;
                driven_count += 1;
            }
            LineRole::VirtualGround | LineRole::Grounded => voltages[i] = 0.0,
            LineRole::Floating => is_unknown[i] = true,
        }
    }

    // Floating lines whose connected component holds no fixed-potential line
    // carry no current at any common potential; pin them to 0 V.
    pin_isolated_components(&edges, &roles, &mut is_unknown);

    let unknowns: Vec<usize> = (0..line_count).filter(|&i| is_unknown[i]).collect();
    let mut unk_index = vec![usize::MAX; line_count];
    for (k, &u) in unknowns.iter().enumerate() {
        unk_index[u] = k;
    }
    let init = driven_sum / driven_count as f64 / 2.0;
    for &u in &unknowns {
        voltages[u] = init;
    }

    // KCL residual (current leaving each floating line) plus the largest
    // device current, which sets the convergence scale.
    let eval = |voltages: &[f64], residual: &mut [f64]| -> f64 {
        residual.iter_mut().for_each(|r| *r = 0.0);
        let mut i_scale = 0.0f64;
        for (edge, &(a, b)) in edges.iter().zip(&coeffs) {
            let dv = voltages[edge.row_line] - voltages[edge.col_line];
            let i = a * (b * dv).sinh();
            i_scale = i_scale.max(i.abs());
            let kr = unk_index[edge.row_line];
            let kc = unk_index[edge.col_line];
            if kr != usize::MAX {
                residual[kr] += i;
            }
            if kc != usize::MAX {
                residual[kc] -= i;
            }
        }
        i_scale
    };
    let max_abs = |r: &[f64]| r.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let n = unknowns.len();
    let mut residual = vec![0.0; n];
    let mut trial_res = vec![0.0; n];
    let mut iterations = 0usize;
    let mut converged = n == 0;
    let mut last_residual = 0.0;
    let mut i_scale = if n == 0 { 0.0 } else { eval(&voltages, &mut residual) };
    while !converged {
        let res_norm = max_abs(&residual);
        last_residual = res_norm;
        let tol = opts.tol_abs * 1.0f64.max(i_scale / opts.scale_ref);
        if res_norm <= tol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iterations {
            break;
        }

        let mut jac = DMatrix::<f64>::zeros(n, n);
        for (edge, &(a, b)) in edges.iter().zip(&coeffs) {
            let dv = voltages[edge.row_line] - voltages[edge.col_line];
            let g = a * b * (b * dv).cosh();
            let kr = unk_index[edge.row_line];
            let kc = unk_index[edge.col_line];
            if kr != usize::MAX {
                jac[(kr, kr)] += g;
                if kc != usize::MAX {
                    jac[(kr, kc)] -= g;
                }
            }
            if kc != usize::MAX {
                jac[(kc, kc)] += g;
                if kr != usize::MAX {
                    jac[(kc, kr)] -= g;
                }
            }
        }
        let rhs = DVector::from_iterator(n, residual.iter().map(|r| -r));
        let step = jac.lu().solve(&rhs).ok_or(SolverError::Singular)?;

        // Damp the step while it makes the residual worse; the accepted
        // trial's residual carries into the next iteration.
        let mut alpha = 1.0;
        let mut trial = voltages.clone();
        loop {
            for (k, &u) in unknowns.iter().enumerate() {
                trial[u] = voltages[u] + alpha * step[k];
            }
            i_scale = eval(&trial, &mut trial_res);
            if max_abs(&trial_res) < res_norm || alpha < 1e-6 {
                break;
            }
            alpha *= opts.damping;
        }
        voltages = trial;
        std::mem::swap(&mut residual, &mut trial_res);
        iterations += 1;
    }

    if !converged {
        return Err(SolverError::NonConvergence { iterations, residual: last_residual });
    }

    // Terminal currents: current absorbed by each line from the network.
    let mut absorbed = vec![0.0; line_count];
    for (edge, &(a, b)) in edges.iter().zip(&coeffs) {
        let dv = voltages[edge.row_line] - voltages[edge.col_line];
        let i = a * (b * dv).sinh();
        absorbed[edge.row_line] -= i;
        absorbed[edge.col_line] += i;
    }
    let mut residual_floating = 0.0f64;
    for (i, role) in roles.iter().enumerate() {
        if matches!(role, LineRole::Floating) {
            residual_floating = residual_floating.max(absorbed[i].abs());
        }
    }

    Ok(SolveResult {
        map,
        roles,
        voltages,
        terminal_currents: absorbed,
        residual: residual_floating,
        iterations,
    })
}

fn pin_isolated_components(edges: &[DeviceEdge], roles: &[LineRole], is_unknown: &mut [bool]) {
    let line_count = roles.len();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); line_count];
    for e in edges {
        adj[e.row_line].push(e.col_line);
        adj[e.col_line].push(e.row_line);
    }
    let mut reachable = vec![false; line_count];
    let mut stack: Vec<usize> = (0..line_count)
        .filter(|&i| !matches!(roles[i], LineRole::Floating))
        .collect();
    for &s in &stack {
        reachable[s] = true;
    }
    while let Some(i) = stack.pop() {
        for &j in &adj[i] {
            if !reachable[j] {
                reachable[j] = true;
                stack.push(j);
            }
        }
    }
    for i in 0..line_count {
        if is_unknown[i] && !reachable[i] {
            is_unknown[i] = false;
        }
    }
}

/// Signed sum of the terminal currents of a set of virtually grounded lines.
pub fn group_current(result: &SolveResult, lines: &[Line]) -> Result<f64, SolverError> {
    let mut sum = 0.0;
    for &line in lines {
        match result.role(line) {
            Some(LineRole::VirtualGround) => {
                sum += result.terminal_current(line).expect("role implies index");
            }
            Some(_) => return Err(SolverError::NotVirtualGround(line)),
            None => return Err(SolverError::UnknownLine(line)),
        }
    }
    Ok(sum)
}

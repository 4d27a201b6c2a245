//! Independent cross-checks of the Newton solver: a coordinate-bisection
//! KCL oracle for small nonlinear fixtures and a direct linear-system
//! solution for the linear limit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use nlpuf_core::crossbar::{
    solve_network, BiasConfig, CrossbarArray, Crosspoint, Line, LineRole, SolverOptions,
};
use nlpuf_core::device::{self, DeviceParams, DeviceState, ProcessVariation};
use nlpuf_core::puf::{respond_bit, Challenge, UnselectedMap};
use nlpuf_core::rng::{substream, Stream};

/// Brute-force reference: sweep the floating lines, bisecting each line's
/// KCL residual (monotone in its own voltage) while holding the others,
/// until a fixed point. Independent of the Newton path.
fn oracle_solve(array: &CrossbarArray, roles: &[(Line, LineRole)]) -> Vec<(Line, f64)> {
    let all_lines: Vec<Line> = roles.iter().map(|(l, _)| *l).collect();
    let mut voltage: Vec<f64> = Vec::new();
    let mut floating: Vec<usize> = Vec::new();
    let mut v_lo = 0.0f64;
    let mut v_hi = 0.0f64;
    for (i, (_, role)) in roles.iter().enumerate() {
        match role {
            LineRole::Driven(v) => {
                voltage.push(*v);
                v_lo = v_lo.min(*v);
                v_hi = v_hi.max(*v);
            }
            LineRole::VirtualGround | LineRole::Grounded => voltage.push(0.0),
            LineRole::Floating => {
                voltage.push(0.0);
                floating.push(i);
            }
        }
    }
    let line_pos = |line: Line| all_lines.iter().position(|l| *l == line).unwrap();
    // Net current leaving line `i` at the candidate voltages.
    let leaving = |i: usize, voltages: &[f64]| -> f64 {
        let mut sum = 0.0;
        for addr in array.addrs() {
            let (row, col) = array.device_lines(addr);
            let (r, c) = (line_pos(row), line_pos(col));
            if r != i && c != i {
                continue;
            }
            let xp = array.device(addr);
            let i_dev = device::current_raw(&xp.state, &xp.params, voltages[r] - voltages[c]);
            sum += if r == i { i_dev } else { -i_dev };
        }
        sum
    };
    for &f in &floating {
        voltage[f] = (v_lo + v_hi) / 2.0;
    }
    for _sweep in 0..10_000 {
        let mut max_change = 0.0f64;
        for &f in &floating {
            let before_sweep = voltage[f];
            let (mut lo, mut hi) = (v_lo, v_hi);
            for _ in 0..64 {
                let mid = 0.5 * (lo + hi);
                voltage[f] = mid;
                if leaving(f, &voltage) > 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let settled = 0.5 * (lo + hi);
            max_change = max_change.max((settled - before_sweep).abs());
            voltage[f] = settled;
        }
        if max_change < 1e-12 {
            break;
        }
    }
    all_lines.iter().map(|l| (*l, voltage[line_pos(*l)])).collect()
}

fn random_fixture(rng: &mut Stream) -> (CrossbarArray, Vec<(Line, LineRole)>) {
    let process = ProcessVariation::default();
    loop {
        let rows = rng.random_range(1..=4usize);
        let cols = rng.random_range(1..=4usize);
        let array = CrossbarArray::sample(1, rows, cols, false, &process, rng).unwrap();
        let mut roles: Vec<(Line, LineRole)> = Vec::new();
        let mut floating = 0usize;
        let mut driven = 0usize;
        let mut sensed = 0usize;
        for line in array
            .line_map()
            .row_pool()
            .into_iter()
            .chain(array.line_map().col_pool())
        {
            let role = match rng.random_range(0..4u8) {
                0 => {
                    driven += 1;
                    LineRole::Driven(0.1 + 0.6 * rng.random::<f64>())
                }
                1 => {
                    sensed += 1;
                    LineRole::VirtualGround
                }
                2 => LineRole::Grounded,
                _ if floating < 3 => {
                    floating += 1;
                    LineRole::Floating
                }
                _ => LineRole::Grounded,
            };
            roles.push((line, role));
        }
        if driven >= 1 && sensed >= 1 {
            return (array, roles);
        }
    }
}

fn apply_roles(array: &CrossbarArray, roles: &[(Line, LineRole)]) -> BiasConfig {
    let mut bias = BiasConfig::all_floating(array);
    for (line, role) in roles {
        bias.set(*line, *role).unwrap();
    }
    bias
}

#[test]
fn newton_matches_bisection_oracle_on_small_fixtures() {
    let mut rng = substream(101, "oracle", 0);
    let opts = SolverOptions::default();
    for case in 0..50 {
        let (array, roles) = random_fixture(&mut rng);
        let bias = apply_roles(&array, &roles);
        let result = solve_network(&array, &bias, &opts)
            .unwrap_or_else(|e| panic!("case {case}: solver failed: {e}"));
        for (line, v_oracle) in oracle_solve(&array, &roles) {
            let v_newton = result.voltage(line).unwrap();
            assert!(
                (v_newton - v_oracle).abs() <= 1e-6,
                "case {case}: {line:?} newton {v_newton} vs oracle {v_oracle}"
            );
        }
        let mut i_scale = 0.0f64;
        for addr in array.addrs() {
            let (row, col) = array.device_lines(addr);
            let dv = result.voltage(row).unwrap() - result.voltage(col).unwrap();
            let xp = array.device(addr);
            i_scale = i_scale.max(device::current_raw(&xp.state, &xp.params, dv).abs());
        }
        assert!(result.residual <= 1e-12 * 1.0f64.max(i_scale / 1e-6));
    }
}

#[test]
fn linear_limit_matches_direct_linear_solve() {
    let linear_process = ProcessVariation {
        nominal: DeviceParams { b_nl: 1e-6, ..DeviceParams::default() },
        sigma_ln_b: 0.0,
        ..ProcessVariation::default()
    };
    let mut rng = substream(102, "linear", 0);
    let opts = SolverOptions::default();
    for case in 0..20 {
        let array = CrossbarArray::sample(1, 10, 10, false, &linear_process, &mut rng).unwrap();
        let map = array.line_map();
        // Random roles: a few driven columns, sensed rows, rest floating.
        let mut roles: Vec<(Line, LineRole)> = Vec::new();
        for (i, line) in map.col_pool().into_iter().enumerate() {
            let role = if i < 4 {
                LineRole::Driven(0.2 + 0.05 * i as f64)
            } else if rng.random::<f64>() < 0.5 {
                LineRole::Grounded
            } else {
                LineRole::Floating
            };
            roles.push((line, role));
        }
        for (i, line) in map.row_pool().into_iter().enumerate() {
            let role = if i < 2 { LineRole::VirtualGround } else { LineRole::Floating };
            roles.push((line, role));
        }
        let bias = apply_roles(&array, &roles);
        let result = solve_network(&array, &bias, &opts).unwrap();

        // Direct conductance-matrix solution over the floating lines.
        let idx = |line: Line| roles.iter().position(|(l, _)| *l == line).unwrap();
        let fixed_voltage = |k: usize| match roles[k].1 {
            LineRole::Driven(v) => Some(v),
            LineRole::VirtualGround | LineRole::Grounded => Some(0.0),
            LineRole::Floating => None,
        };
        let unknowns: Vec<usize> =
            (0..roles.len()).filter(|&k| fixed_voltage(k).is_none()).collect();
        let pos_of: Vec<Option<usize>> = (0..roles.len())
            .map(|k| unknowns.iter().position(|&u| u == k))
            .collect();
        let n = unknowns.len();
        let mut a = DMatrix::<f64>::zeros(n, n);
        let mut b = DVector::<f64>::zeros(n);
        for addr in array.addrs() {
            let (row, col) = array.device_lines(addr);
            let g = array.device(addr).state.g_ref;
            let (kr, kc) = (idx(row), idx(col));
            for (this, other) in [(kr, kc), (kc, kr)] {
                if let Some(p) = pos_of[this] {
                    a[(p, p)] += g;
                    match pos_of[other] {
                        Some(q) => a[(p, q)] -= g,
                        None => b[p] += g * fixed_voltage(other).unwrap(),
                    }
                }
            }
        }
        let x = a.lu().solve(&b).expect("linear system solvable");
        let v_scale = 0.35;
        for (p, &k) in unknowns.iter().enumerate() {
            let newton = result.voltage(roles[k].0).unwrap();
            assert!(
                (newton - x[p]).abs() / v_scale <= 1e-10,
                "case {case}: line {:?} newton {newton} vs direct {}",
                roles[k].0,
                x[p]
            );
        }
    }
}

#[test]
fn respond_bit_sign_matches_oracle_on_3x3() {
    let process = ProcessVariation::default();
    let mut rng = substream(103, "respond", 0);
    for case in 0..20 {
        let array = CrossbarArray::sample(1, 3, 3, false, &process, &mut rng).unwrap();
        // Columns 0 and 2 driven, rows 0 and 2 sensed, row 1 and column 1
        // floating: a sneak-coupled fixture.
        let ch = Challenge {
            cols: vec![0, 2],
            rows: vec![0, 2],
            group_a: vec![0],
            unselected: UnselectedMap::AllFloating,
            bias_code: None,
        };
        let v_b = 0.6;
        let bit = respond_bit(&array, &ch, v_b, None).unwrap();

        let map = array.line_map();
        let roles: Vec<(Line, LineRole)> = map
            .row_pool()
            .into_iter()
            .chain(map.col_pool())
            .map(|line| {
                let role = match line {
                    Line::Row { index: 0, .. } | Line::Row { index: 2, .. } => {
                        LineRole::VirtualGround
                    }
                    Line::Col { index: 0, .. } | Line::Col { index: 2, .. } => {
                        LineRole::Driven(v_b)
                    }
                    _ => LineRole::Floating,
                };
                (line, role)
            })
            .collect();
        let voltages = oracle_solve(&array, &roles);
        let v_of = |line: Line| voltages.iter().find(|(l, _)| *l == line).unwrap().1;
        let row_current = |r: usize| -> f64 {
            (0..3)
                .map(|c| {
                    let xp = array.device(nlpuf_core::crossbar::DeviceAddr::new(0, r, c));
                    let dv = v_of(Line::Row { layer: 0, index: r })
                        - v_of(Line::Col { layer: 0, index: c });
                    // Absorbed current is the negative of what leaves the row.
                    -device::current_raw(&xp.state, &xp.params, dv)
                })
                .sum()
        };
        let delta = row_current(0) - row_current(2);
        assert_eq!(bit, delta > 0.0, "case {case}: delta {delta}");
    }
}

#[test]
fn solver_handles_extreme_conductance_contrast() {
    let params = DeviceParams::default();
    let mk = |g: f64| Crosspoint { params, state: DeviceState::new(g) };
    let array = CrossbarArray::from_crosspoints(
        1,
        2,
        2,
        false,
        vec![mk(200e-6), mk(1e-6), mk(1e-6), mk(200e-6)],
    );
    let mut bias = BiasConfig::all_floating(&array);
    bias.set(Line::Col { layer: 0, index: 0 }, LineRole::Driven(0.72)).unwrap();
    bias.set(Line::Row { layer: 0, index: 0 }, LineRole::VirtualGround).unwrap();
    let res = solve_network(&array, &bias, &SolverOptions::default()).unwrap();
    let roles: Vec<(Line, LineRole)> = vec![
        (Line::Row { layer: 0, index: 0 }, LineRole::VirtualGround),
        (Line::Row { layer: 0, index: 1 }, LineRole::Floating),
        (Line::Col { layer: 0, index: 0 }, LineRole::Driven(0.72)),
        (Line::Col { layer: 0, index: 1 }, LineRole::Floating),
    ];
    for (line, v_oracle) in oracle_solve(&array, &roles) {
        assert!((res.voltage(line).unwrap() - v_oracle).abs() <= 1e-6);
    }
}

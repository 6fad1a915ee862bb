use cweno_swe::reconstruction::{Cweno, STENCIL_LEN, STENCIL_OFFSETS};
use cweno_swe::scenarios::{
    init_spherical_rest, init_step_lake, relative_drift, thacker_field, RestParams, StepLakeParams, ThackerParams,
};
use cweno_swe::solver::{stable_dt, SolverError};
use cweno_swe::{
    build_grid, fill_ghosts, BoundaryKind, BoundarySpec, Grid, GridConfig, SchemeConfig, Solver, StateField, Variant,
};

const VARIANTS: [Variant; 3] = [Variant::P2P1, Variant::P3P1, Variant::P3P2];

fn run_steps(solver: &mut Solver, field: &mut StateField, steps: usize) {
    solver.prepare(field);
    let mut t = 0.0;
    for _ in 0..steps {
        let dt = solver.stable_dt(field).unwrap();
        solver.step(field, dt, t).unwrap();
        t += dt;
    }
}

fn max_rate(solver: &mut Solver, field: &StateField) -> f64 {
    solver.rhs(field).iter().map(|r| r.max_abs()).fold(0.0, f64::max)
}

#[test]
fn c_property_cartesian() {
    let bc = BoundarySpec::uniform(BoundaryKind::Wall);
    let grid = build_grid(&GridConfig::cartesian((0.0, 1.0), (0.0, 1.0), 24, 24), &bc).unwrap();
    for v in VARIANTS {
        let mut field = init_step_lake(&grid, &StepLakeParams::default());
        let mut solver = Solver::new(&grid, &bc, &SchemeConfig::for_variant(v)).unwrap();
        solver.prepare(&mut field);
        let rate = max_rate(&mut solver, &field);
        assert!(rate <= 1e-13, "{v:?}: rate {rate:e}");
        let start = field.clone();
        run_steps(&mut solver, &mut field, 100);
        let drift = relative_drift(&field, &start, &grid);
        assert!(drift <= 1e-12, "{v:?}: drift {drift:e}");
    }
}

fn coarse_sphere() -> (Grid, BoundarySpec) {
    let bc = BoundarySpec::channel();
    let cfg = GridConfig::spherical_deg(1.0e4, (-180.0, 180.0), (-88.0, 88.0), 4.0);
    (build_grid(&cfg, &bc).unwrap(), bc)
}

#[test]
fn c_property_spherical() {
    let (grid, bc) = coarse_sphere();
    for v in VARIANTS {
        let mut field = init_spherical_rest(&grid, &RestParams { noise: 0.2, seed: 7 });
        let mut solver = Solver::new(&grid, &bc, &SchemeConfig::for_variant(v)).unwrap();
        solver.prepare(&mut field);
        let rate = max_rate(&mut solver, &field);
        assert!(rate <= 1e-13, "{v:?}: rate {rate:e}");
        let start = field.clone();
        run_steps(&mut solver, &mut field, 100);
        let drift = relative_drift(&field, &start, &grid);
        assert!(drift <= 1e-12, "{v:?}: drift {drift:e}");
    }
}

/// Flat bottom with a smooth hump, centred on the grid.
fn hump(grid: &Grid) -> StateField {
    let mut field = StateField::new(grid);
    for j in 0..grid.ny as isize {
        for i in 0..grid.nx as isize {
            let (x, y) = grid.center(i, j);
            let k = grid.index(i, j);
            field.bathy[k] = 1.0;
            field.a[k] = 1.0 + 0.2 * (-8.0 * (x * x + y * y)).exp();
        }
    }
    field
}

#[test]
fn periodic_flat_bottom_conserves_volume_and_momentum() {
    let bc = BoundarySpec::uniform(BoundaryKind::Periodic);
    let grid = build_grid(&GridConfig::cartesian((-1.0, 1.0), (-1.0, 1.0), 32, 32), &bc).unwrap();
    for v in [Variant::P2P1, Variant::P3P2] {
        let mut field = hump(&grid);
        for (i, j) in field.clone().interior() {
            let k = grid.index(i, j);
            field.m1[k] = 0.3 * field.a[k];
        }
        let mut solver = Solver::new(&grid, &bc, &SchemeConfig::for_variant(v)).unwrap();
        let v0 = field.total_volume(&grid);
        let p0: f64 = field.interior().map(|(i, j)| field.m1[grid.index(i, j)]).sum();
        run_steps(&mut solver, &mut field, 50);
        let v1 = field.total_volume(&grid);
        let p1: f64 = field.interior().map(|(i, j)| field.m1[grid.index(i, j)]).sum();
        assert!(((v1 - v0) / v0).abs() < 1e-13, "{v:?}: volume {v0} → {v1}");
        assert!(((p1 - p0) / p0).abs() < 1e-12, "{v:?}: momentum {p0} → {p1}");
    }
}

#[test]
fn walls_conserve_volume_and_mirror_symmetry() {
    let bc = BoundarySpec::uniform(BoundaryKind::Wall);
    let grid = build_grid(&GridConfig::cartesian((-1.0, 1.0), (-1.0, 1.0), 30, 30), &bc).unwrap();
    for v in [Variant::P2P1, Variant::P3P1] {
        let mut field = hump(&grid);
        let mut solver = Solver::new(&grid, &bc, &SchemeConfig::for_variant(v)).unwrap();
        let v0 = field.total_volume(&grid);
        run_steps(&mut solver, &mut field, 40);
        assert!(((field.total_volume(&grid) - v0) / v0).abs() < 1e-13);
        for j in 0..30 {
            for i in 0..30 {
                let (a, b) = (field.a[grid.index(i, j)], field.a[grid.index(j, i)]);
                assert!((a - b).abs() <= 1e-13, "{v:?}: h({i},{j}) = {a} vs {b}");
                let (u, w) = (field.m1[grid.index(i, j)], field.m2[grid.index(j, i)]);
                assert!((u - w).abs() <= 1e-13);
            }
        }
    }
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let bc = BoundarySpec::uniform(BoundaryKind::Wall);
    let grid = build_grid(&GridConfig::cartesian((-2.0, 2.0), (-2.0, 2.0), 40, 40), &bc).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut field = thacker_field(&grid, &ThackerParams::default(), 0.0, 3, 9.81);
            let mut solver = Solver::new(&grid, &bc, &SchemeConfig::for_variant(Variant::P3P2)).unwrap();
            run_steps(&mut solver, &mut field, 15);
            field
        })
    };
    let one = run(1);
    for threads in [2, 4] {
        let other = run(threads);
        assert!(one.a.iter().zip(&other.a).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(one.m1.iter().zip(&other.m1).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(one.m2.iter().zip(&other.m2).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

fn uniform_field(grid: &Grid, h: f64) -> StateField {
    let mut field = StateField::new(grid);
    for (i, j) in field.clone().interior() {
        field.a[grid.index(i, j)] = h;
    }
    field
}

#[test]
fn stable_dt_examples() {
    let bc = BoundarySpec::uniform(BoundaryKind::Wall);
    let grid = build_grid(&GridConfig::cartesian((0.0, 3.0), (0.0, 3.0), 3, 3), &bc).unwrap();
    let mut field = uniform_field(&grid, 1.0);
    let cfg = SchemeConfig::default();
    let dt = stable_dt(&field, &grid, &cfg).unwrap();
    assert!((dt - 0.5 / (2.0 * 9.81f64.sqrt())).abs() < 1e-15);
    assert!((dt - 0.0798189).abs() < 1e-7);
    let doubled = stable_dt(&field, &grid, &SchemeConfig { cfl: 1.0, ..cfg }).unwrap();
    assert!((doubled - 2.0 * dt).abs() < 1e-16);
    field.m1[grid.index(1, 1)] = 2.0;
    assert!(stable_dt(&field, &grid, &cfg).unwrap() < dt);
    let dry = StateField::new(&grid);
    assert!(matches!(stable_dt(&dry, &grid, &cfg), Err(SolverError::AllDry)));
}

#[test]
fn rest_and_constant_states_are_untouched() {
    let bc = BoundarySpec::uniform(BoundaryKind::Periodic);
    let grid = build_grid(&GridConfig::cartesian((0.0, 1.0), (0.0, 1.0), 8, 8), &bc).unwrap();
    let mut field = uniform_field(&grid, 1.5);
    for (i, j) in field.clone().interior() {
        let k = grid.index(i, j);
        field.m1[k] = 0.4;
        field.m2[k] = -0.1;
    }
    let mut solver = Solver::new(&grid, &bc, &SchemeConfig::default()).unwrap();
    solver.prepare(&mut field);
    assert!(solver.rhs(&field).iter().all(|r| r.a == 0.0 && r.m1 == 0.0 && r.m2 == 0.0));
    let before = field.clone();
    solver.step(&mut field, 0.01, 0.0).unwrap();
    for (x, y) in field.a.iter().chain(&field.m1).chain(&field.m2).zip(before.a.iter().chain(&before.m1).chain(&before.m2)) {
        assert!((x - y).abs() <= 1e-15 * y.abs());
    }

    let (log, out) = {
        let mut f = before.clone();
        let log = solver.advance(&mut f, 0.0, 0.0, &mut []).unwrap();
        (log, f)
    };
    assert_eq!(log.steps, 0);
    assert_eq!(out, before);
}

#[test]
fn advance_lands_on_end_time() {
    let bc = BoundarySpec::uniform(BoundaryKind::Wall);
    let grid = build_grid(&GridConfig::cartesian((-1.0, 1.0), (-1.0, 1.0), 16, 16), &bc).unwrap();
    let mut field = hump(&grid);
    let mut solver = Solver::new(&grid, &bc, &SchemeConfig::default()).unwrap();
    let log = solver.advance(&mut field, 0.0, 0.137, &mut []).unwrap();
    assert_eq!(log.t_final, 0.137);
    assert!(log.steps > 1);
    let mut capped = hump(&grid);
    let mut solver = Solver::new(&grid, &bc, &SchemeConfig { max_steps: 2, ..SchemeConfig::default() }).unwrap();
    assert!(matches!(solver.advance(&mut capped, 0.0, 1.0, &mut []), Err(SolverError::MaxSteps(2))));
}

fn stencil_cells(grid: &Grid, i: isize, j: isize) -> [usize; STENCIL_LEN] {
    STENCIL_OFFSETS.map(|(di, dj)| grid.index(i + di as isize, j + dj as isize))
}

#[test]
fn fluctuation_data_examples() {
    let (grid, bc) = coarse_sphere();
    let mut field = init_spherical_rest(&grid, &RestParams::default());
    // lift the whole lake so η̄ ≠ 0
    for (i, j) in field.clone().interior() {
        let k = grid.index(i, j);
        field.a[k] += 0.3 * field.sigma_bar[k];
    }
    fill_ghosts(&mut field, &grid, &bc);
    let solver = Solver::new(&grid, &bc, &SchemeConfig::default()).unwrap();
    for (i, j) in [(0, 0), (10, 20), (89, 43), (45, 1)] {
        // zero up to the rounding of the lift itself
        let k = grid.index(i as isize, j as isize);
        assert!(solver.fluctuation_data(&field, i, j).iter().all(|&f| f.abs() <= 1e-15 * field.a[k]));
    }

    // per-cell surfaces c_j·σ̄_j
    let mut c = 0.0;
    for (i, j) in field.clone().interior() {
        let k = grid.index(i, j);
        c += 0.37;
        field.a[k] = field.bathy[k] + (c % 1.0) * field.sigma_bar[k];
    }
    fill_ghosts(&mut field, &grid, &bc);
    for (i, j) in [(3, 7), (50, 22), (0, 43)] {
        let cells = stencil_cells(&grid, i as isize, j as isize);
        let eta_i = field.eta(cells[0]);
        let f = solver.fluctuation_data(&field, i, j);
        for s in 1..STENCIL_LEN {
            let k = cells[s];
            let want = (field.a[k] - field.bathy[k]) - eta_i * field.sigma_bar[k];
            assert_eq!(f[s], want);
            let eta_j = field.eta(k);
            assert!((f[s] - (eta_j - eta_i) * field.sigma_bar[k]).abs() < 1e-12);
        }
    }

    let bc = BoundarySpec::uniform(BoundaryKind::Wall);
    let grid = build_grid(&GridConfig::cartesian((0.0, 1.0), (0.0, 1.0), 10, 10), &bc).unwrap();
    let mut field = init_step_lake(&grid, &StepLakeParams::default());
    fill_ghosts(&mut field, &grid, &bc);
    let solver = Solver::new(&grid, &bc, &SchemeConfig::default()).unwrap();
    assert!(solver.fluctuation_data(&field, 4, 4).iter().all(|&f| f == 0.0));
}

#[test]
fn reconstruct_all_examples() {
    let bc = BoundarySpec::uniform(BoundaryKind::Periodic);
    let grid = build_grid(&GridConfig::cartesian((-1.0, 1.0), (-1.0, 1.0), 20, 20), &bc).unwrap();
    let mut field = uniform_field(&grid, 2.0);
    let mut solver = Solver::new(&grid, &bc, &SchemeConfig::default()).unwrap();
    solver.prepare(&mut field);
    for r in solver.reconstruct_all(&field) {
        assert_eq!(r.h.degree, 0);
        assert!(r.f.coeffs.iter().all(|&c| c == 0.0));
    }

    // smooth data: each component equals the plain CWENO of that component
    for v in VARIANTS {
        let cfg = SchemeConfig::for_variant(v);
        let mut field = hump(&grid);
        for (i, j) in field.clone().interior() {
            let (x, y) = grid.center(i, j);
            let k = grid.index(i, j);
            field.m1[k] = (2.0 * x).sin();
            field.m2[k] = (3.0 * y).cos() * x;
        }
        let mut solver = Solver::new(&grid, &bc, &cfg).unwrap();
        solver.prepare(&mut field);
        let recon = solver.reconstruct_all(&field);
        let cweno = Cweno::new(&cfg.cweno_params(), grid.dx, grid.dy).unwrap();
        for (i, j) in [(0, 0), (7, 13), (19, 4)] {
            let cells = stencil_cells(&grid, i, j);
            let r = &recon[j as usize * grid.nx + i as usize];
            for (data, got) in [(&field.a, &r.h), (&field.m1, &r.m1), (&field.m2, &r.m2)] {
                let want = cweno.reconstruct(&cells.map(|k| data[k]), u16::MAX);
                for k in 0..want.coeffs.len() {
                    assert!((got.coeffs[k] - want.coeffs[k]).abs() <= 1e-12 * (1.0 + want.coeffs[k].abs()));
                }
            }
        }
    }

    // one dry neighbour drops the central polynomial
    let bc = BoundarySpec::uniform(BoundaryKind::Wall);
    let grid = build_grid(&GridConfig::cartesian((0.0, 1.0), (0.0, 1.0), 10, 10), &bc).unwrap();
    let mut field = StateField::new(&grid);
    for (i, j) in field.clone().interior() {
        let k = grid.index(i, j);
        field.a[k] = 1.0 + 0.1 * i as f64 + 0.05 * (j * j) as f64;
    }
    field.a[grid.index(5, 5)] = 0.0;
    let cfg = SchemeConfig::default();
    let mut solver = Solver::new(&grid, &bc, &cfg).unwrap();
    solver.prepare(&mut field);
    let r = solver.reconstruct_all(&field)[4 * 10 + 4];
    let cweno = Cweno::new(&cfg.cweno_params(), grid.dx, grid.dy).unwrap();
    let cells = stencil_cells(&grid, 4, 4);
    let mask = (0..STENCIL_LEN).filter(|&s| field.a[cells[s]] > 0.0).fold(0u16, |m, s| m | 1 << s);
    let want = cweno.reconstruct(&cells.map(|k| field.a[k]), mask);
    assert_eq!(want.degree, 1);
    assert!(want.coeffs[3..].iter().all(|&c| c == 0.0));
    for k in 0..3 {
        assert!((r.h.coeffs[k] - want.coeffs[k]).abs() < 1e-12);
    }
}

#[test]
fn thacker_positivity_and_clamps() {
    let p = ThackerParams::default();
    let bc = BoundarySpec::uniform(BoundaryKind::Wall);
    let grid = build_grid(&GridConfig::cartesian((-2.0, 2.0), (-2.0, 2.0), 100, 100), &bc).unwrap();
    let mut field = thacker_field(&grid, &p, 0.0, 2, 9.81);
    let mut solver = Solver::new(&grid, &bc, &SchemeConfig::default()).unwrap();

    struct NonNegative(bool);
    impl cweno_swe::solver::Observer for NonNegative {
        fn observe(&mut self, _: f64, f: &StateField, g: &Grid) -> Result<(), String> {
            self.0 &= f.interior().all(|(i, j)| f.a[g.index(i, j)] >= 0.0);
            Ok(())
        }
    }
    let mut probe = NonNegative(true);
    let log = solver.advance(&mut field, 0.0, p.period(9.81), &mut [&mut probe]).unwrap();
    assert!(probe.0);
    // clamps only ever remove thin-layer round-off, never real water
    assert!(log.clamp_depth < SchemeConfig::default().h_vel, "deepest clamp {}", log.clamp_depth);
    assert!(log.steps < 2000, "{} steps", log.steps);
}

#[test]
fn desingularized_velocity_is_bounded() {
    use cweno_swe::solver::desingularize;
    assert_eq!(desingularize(1e-4, 1e-4), 1.0);
    assert_eq!(desingularize(0.5, 1e-4), 1.0);
    // continuous at the threshold
    assert!((desingularize(1e-4 * (1.0 - 1e-12), 1e-4) - 1.0).abs() < 1e-10);
    // with m fixed, u ≤ √2·m·h/ε² and shrinks as the column thins
    let eps = 1e-4;
    let mut last = f64::INFINITY;
    for k in 5..12 {
        let h = 10f64.powi(-k);
        let u = 1e-6 * desingularize(h, eps) / h;
        assert!(u <= 1e-6 * std::f64::consts::SQRT_2 * h / eps.powi(2) * (1.0 + 1e-12));
        assert!(u < last);
        last = u;
    }
}

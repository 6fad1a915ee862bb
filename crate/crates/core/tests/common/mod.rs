//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the reconstruction internals: basis functions are
//! expanded into monomials by hand, cell averages come from tensor Gauss
//! quadrature and least-squares problems are solved through the normal
//! equations with Gaussian elimination.

#![allow(dead_code)]

use rand::Rng;

use cweno_swe::reconstruction::{N_COEFFS, STENCIL_LEN, STENCIL_OFFSETS};

/// Four-point Gauss-Legendre rule on [-1/2, 1/2], weights summing to one.
pub const GAUSS4: [(f64, f64); 4] = [
    (-0.430_568_155_797_026_3, 0.173_927_422_568_726_9),
    (-0.169_990_521_792_428_1, 0.326_072_577_431_273_1),
    (0.169_990_521_792_428_1, 0.326_072_577_431_273_1),
    (0.430_568_155_797_026_3, 0.173_927_422_568_726_9),
];

/// Five-point rule on [-1/2, 1/2].
pub const GAUSS5: [(f64, f64); 5] = [
    (-0.453_089_922_969_332_2, 0.118_463_442_528_094_5),
    (-0.269_234_655_052_841_4, 0.239_314_335_249_683_2),
    (0.0, 0.284_444_444_444_444_4),
    (0.269_234_655_052_841_4, 0.239_314_335_249_683_2),
    (0.453_089_922_969_332_2, 0.118_463_442_528_094_5),
];

/// Dense bivariate polynomial, `c[px][py]` multiplies ξ^px ζ^py.
pub type Monomials = [[f64; 4]; 4];

/// Basis function `k` written out in monomials of the local offsets.
pub fn basis_monomials(k: usize, dx: f64, dy: f64) -> Monomials {
    let mut m = [[0.0; 4]; 4];
    match k {
        0 => m[0][0] = 1.0,
        1 => m[1][0] = 1.0,
        2 => m[0][1] = 1.0,
        3 => {
            m[2][0] = 1.0;
            m[0][0] = -dx * dx / 12.0;
        }
        4 => {
            m[0][2] = 1.0;
            m[0][0] = -dy * dy / 12.0;
        }
        5 => m[1][1] = 1.0,
        6 => m[3][0] = 1.0,
        7 => m[0][3] = 1.0,
        8 => m[1][2] = 1.0,
        9 => m[2][1] = 1.0,
        _ => unreachable!(),
    }
    m
}

pub fn expand(coeffs: &[f64; N_COEFFS], dx: f64, dy: f64) -> Monomials {
    let mut out = [[0.0; 4]; 4];
    for (k, &c) in coeffs.iter().enumerate() {
        let m = basis_monomials(k, dx, dy);
        for px in 0..4 {
            for py in 0..4 {
                out[px][py] += c * m[px][py];
            }
        }
    }
    out
}

pub fn eval_monomials(m: &Monomials, x: f64, y: f64) -> f64 {
    let mut s = 0.0;
    for px in 0..4 {
        for py in 0..4 {
            if m[px][py] != 0.0 {
                s += m[px][py] * x.powi(px as i32) * y.powi(py as i32);
            }
        }
    }
    s
}

fn derivative(m: &Monomials, ax: usize, ay: usize) -> Monomials {
    let mut out = [[0.0; 4]; 4];
    for px in ax..4 {
        for py in ay..4 {
            let mut c = m[px][py];
            for t in 0..ax {
                c *= (px - t) as f64;
            }
            for t in 0..ay {
                c *= (py - t) as f64;
            }
            out[px - ax][py - ay] = c;
        }
    }
    out
}

/// Mean of `f` over the cell of size dx × dy centred at `(cx, cy)`.
pub fn cell_mean(f: impl Fn(f64, f64) -> f64, cx: f64, cy: f64, dx: f64, dy: f64) -> f64 {
    let mut s = 0.0;
    for &(sy, wy) in &GAUSS4 {
        for &(sx, wx) in &GAUSS4 {
            s += wx * wy * f(cx + sx * dx, cy + sy * dy);
        }
    }
    s
}

/// Average of basis `k` (anchored at the origin cell) over the cell at
/// integer offset `(i, j)`.
pub fn basis_average(k: usize, i: i32, j: i32, dx: f64, dy: f64) -> f64 {
    let m = basis_monomials(k, dx, dy);
    cell_mean(|x, y| eval_monomials(&m, x, y), i as f64 * dx, j as f64 * dy, dx, dy)
}

/// Σ_{1≤|α|≤3} h^{2|α|-2} ∫_cell (∂^α P)² by 5×5 Gauss quadrature, each
/// multi-index counted once.
pub fn indicator_by_quadrature(coeffs: &[f64; N_COEFFS], dx: f64, dy: f64) -> f64 {
    let p = expand(coeffs, dx, dy);
    let h2 = dx * dx + dy * dy;
    let mut total = 0.0;
    for order in 1..=3usize {
        let weight = h2.powi(order as i32 - 1);
        for ax in 0..=order {
            let d = derivative(&p, ax, order - ax);
            let mut integral = 0.0;
            for &(sy, wy) in &GAUSS5 {
                for &(sx, wx) in &GAUSS5 {
                    let v = eval_monomials(&d, sx * dx, sy * dy);
                    integral += wx * wy * v * v;
                }
            }
            total += weight * integral * dx * dy;
        }
    }
    total
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        assert!(a[col][col] != 0.0, "singular normal equations");
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != 0.0 {
                for c in col..n {
                    a[r][c] -= f * a[col][c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for c in r + 1..n {
            s -= a[r][c] * x[c];
        }
        x[r] = s / a[r][r];
    }
    x
}

pub fn n_basis(degree: u8) -> usize {
    match degree {
        0 => 1,
        1 => 3,
        2 => 6,
        _ => 10,
    }
}

/// Constrained least-squares fit through the normal equations: the mean
/// equals `u0`, the remaining coefficients minimise the misfit of the
/// neighbour averages. Columns are equilibrated before forming AᵀA.
pub fn lsq_oracle(cells: &[usize], u: &[f64; STENCIL_LEN], degree: u8, dx: f64, dy: f64) -> [f64; N_COEFFS] {
    let n = n_basis(degree) - 1;
    let rows: Vec<Vec<f64>> = cells
        .iter()
        .map(|&c| {
            let (i, j) = STENCIL_OFFSETS[c];
            (1..=n).map(|k| basis_average(k, i, j, dx, dy)).collect()
        })
        .collect();
    let rhs: Vec<f64> = cells.iter().map(|&c| u[c] - u[0]).collect();
    let norms: Vec<f64> = (0..n).map(|k| rows.iter().map(|r| r[k] * r[k]).sum::<f64>().sqrt()).collect();
    let mut ata = vec![vec![0.0; n]; n];
    let mut atb = vec![0.0; n];
    for (r, &b) in rows.iter().zip(&rhs) {
        for p in 0..n {
            atb[p] += r[p] / norms[p] * b;
            for q in 0..n {
                ata[p][q] += r[p] / norms[p] * r[q] / norms[q];
            }
        }
    }
    let y = gauss_solve(ata, atb);
    let mut c = [0.0; N_COEFFS];
    c[0] = u[0];
    for k in 0..n {
        c[k + 1] = y[k] / norms[k];
    }
    c
}

/// Natural size of coefficient `k`: the power of the cell size it carries.
pub fn coeff_scale(k: usize, dx: f64, dy: f64) -> f64 {
    const POW: [(i32, i32); N_COEFFS] =
        [(0, 0), (1, 0), (0, 1), (2, 0), (0, 2), (1, 1), (3, 0), (0, 3), (1, 2), (2, 1)];
    dx.powi(POW[k].0) * dy.powi(POW[k].1)
}

/// Largest coefficient difference measured in cell-size units, relative to
/// the largest reference coefficient in the same units.
pub fn relative_coeff_error(got: &[f64; N_COEFFS], want: &[f64; N_COEFFS], dx: f64, dy: f64) -> f64 {
    let mut num: f64 = 0.0;
    let mut den: f64 = 0.0;
    for k in 0..N_COEFFS {
        let s = coeff_scale(k, dx, dy);
        num = num.max((got[k] - want[k]).abs() * s);
        den = den.max(want[k].abs() * s);
    }
    num / den.max(f64::MIN_POSITIVE)
}

pub fn random_stencil(rng: &mut impl Rng) -> ([f64; STENCIL_LEN], f64, f64) {
    let mut u = [0.0; STENCIL_LEN];
    for v in &mut u {
        *v = rng.gen_range(-1.0..1.0);
    }
    (u, rng.gen_range(0.05..5.0), rng.gen_range(0.05..5.0))
}

/// Cell averages over the stencil of the cell centred at `(cx, cy)`.
pub fn sample_stencil(f: impl Fn(f64, f64) -> f64, cx: f64, cy: f64, dx: f64, dy: f64) -> [f64; STENCIL_LEN] {
    STENCIL_OFFSETS.map(|(i, j)| cell_mean(&f, cx + i as f64 * dx, cy + j as f64 * dy, dx, dy))
}

/// Least-squares slope of log(err) against log(h).
pub fn fitted_order(h: &[f64], err: &[f64]) -> f64 {
    let n = h.len() as f64;
    let xs: Vec<f64> = h.iter().map(|v| v.ln()).collect();
    let ys: Vec<f64> = err.iter().map(|v| v.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Prints one acceptance line and returns whether the criterion passed.
pub fn report(id: &str, pass: bool, detail: &str) -> bool {
    println!("[{}] criterion {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

/// Worst relative disagreement of one family of closed-form fits with the
/// normal-equation oracle and with `fit_least_squares`.
#[derive(Clone, Debug)]
pub struct FitCheck {
    pub name: &'static str,
    pub vs_oracle: f64,
    pub vs_library_lsq: f64,
}

pub fn check_closed_form_fits(fixtures: usize, seed: u64) -> Vec<FitCheck> {
    use cweno_swe::reconstruction::{
        fit_least_squares, fit_p1_sector, fit_p2_central, fit_p2_sector, fit_p3_central, Poly, StencilData,
        P1_SECTORS, P2_SECTORS,
    };
    use rand::SeedableRng;

    type Fit = fn(&StencilData) -> Poly;
    let central: [(&'static str, Fit, Vec<usize>, u8); 2] = [
        ("P2 central", fit_p2_central, (1..9).collect(), 2),
        ("P3 central", fit_p3_central, (1..13).collect(), 3),
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let run = |name: &'static str, fit: &dyn Fn(&StencilData) -> Poly, cells: &[usize], degree: u8, rng: &mut rand_chacha::ChaCha8Rng| {
        let mut check = FitCheck { name, vs_oracle: 0.0, vs_library_lsq: 0.0 };
        for _ in 0..fixtures {
            let (u, dx, dy) = random_stencil(rng);
            let s = StencilData::new(u, dx, dy);
            let oracle = lsq_oracle(cells, &u, degree, dx, dy);
            let closed = fit(&s);
            let offsets: Vec<(i32, i32)> = cells.iter().map(|&c| STENCIL_OFFSETS[c]).collect();
            let values: Vec<f64> = cells.iter().map(|&c| u[c]).collect();
            let lib = fit_least_squares(&offsets, &values, u[0], degree, dx, dy).expect("full rank stencil");
            check.vs_oracle = check.vs_oracle.max(relative_coeff_error(&closed.coeffs, &oracle, dx, dy));
            check.vs_library_lsq = check.vs_library_lsq.max(relative_coeff_error(&closed.coeffs, &lib.coeffs, dx, dy));
        }
        check
    };
    for (name, fit, cells, degree) in central {
        out.push(run(name, &fit, &cells, degree, &mut rng));
    }
    let p1_names = ["P1 sector NE", "P1 sector SE", "P1 sector SW", "P1 sector NW"];
    let p2_names = ["P2 sector NE", "P2 sector SE", "P2 sector SW", "P2 sector NW"];
    for r in 0..4 {
        out.push(run(p1_names[r], &|s: &StencilData| fit_p1_sector(r, s), &P1_SECTORS[r], 1, &mut rng));
    }
    for r in 0..4 {
        out.push(run(p2_names[r], &|s: &StencilData| fit_p2_sector(r, s), &P2_SECTORS[r], 2, &mut rng));
    }
    out
}

/// Worst relative gap between the indicator quadratic form and direct
/// quadrature over random polynomials of every degree.
pub fn check_indicator_form(samples: usize, seed: u64) -> f64 {
    use cweno_swe::reconstruction::{smoothness_indicator, IndicatorForm, Poly};
    use rand::SeedableRng;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for n in 0..samples {
        let degree = (n % 3 + 1) as u8;
        let dx = rng.gen_range(0.01..3.0);
        let dy = rng.gen_range(0.01..3.0);
        let mut c = [0.0; N_COEFFS];
        for k in 0..n_basis(degree) {
            c[k] = rng.gen_range(-1.0..1.0) / coeff_scale(k, dx, dy);
        }
        let want = indicator_by_quadrature(&c, dx, dy);
        let got = smoothness_indicator(&Poly::from_coeffs(c, degree, dx, dy));
        let form = IndicatorForm::new(dx, dy).eval(&c);
        worst = worst.max((got - want).abs() / want).max((form - want).abs() / want);
    }
    worst
}

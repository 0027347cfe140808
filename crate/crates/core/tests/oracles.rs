//! Checks against independent reference computations.

use std::collections::HashMap;
use std::f64::consts::PI;

use qhplasma::bargmann_ed::{partition_count, single_particle_energy};
use qhplasma::plasma_mc::{
    free_energy_quadrature, onsager_functional, run_chain, ScalarRecorder,
};
use qhplasma::quadrature::{gauss_legendre_on, ln_factorial};
use qhplasma::{
    coulomb_energy, lower_bound_e, newton_potential, pair_matrix_element, sector_spectrum,
    yrast_curve, ModelParams, NewtonPotential, RadialDensity, RadialGrid, RadialMeasure,
    SamplerConfig,
};

type Poly = HashMap<Vec<u32>, i64>;

fn mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_default() += ca * cb;
        }
    }
    out.retain(|_, c| *c != 0);
    out
}

/// `−(1/N) log ∫ |P|² e^{−N Σ|z|²}` with `P = Π z_i^m Π_{i<j} (z_i − z_j)²`,
/// using the orthogonality of monomials.
fn free_energy_by_expansion(n: usize, m: u32) -> f64 {
    let mut p: Poly = HashMap::from([(vec![m; n], 1)]);
    for i in 0..n {
        for j in i + 1..n {
            let mut ei = vec![0; n];
            ei[i] = 1;
            let mut ej = vec![0; n];
            ej[j] = 1;
            let f: Poly = HashMap::from([(ei, 1), (ej, -1)]);
            p = mul(&p, &f);
            p = mul(&p, &f);
        }
    }
    let nf = n as f64;
    let z: f64 = p
        .iter()
        .map(|(e, c)| {
            let log_norm: f64 = e
                .iter()
                .map(|&a| PI.ln() + ln_factorial(a as u64) - (a as f64 + 1.0) * nf.ln())
                .sum();
            (*c as f64).powi(2) * log_norm.exp()
        })
        .sum();
    -z.ln() / nf
}

#[test]
fn free_energy_matches_monomial_expansion() {
    for n in 1..=3 {
        for m in [0u32, 1, 3] {
            let want = free_energy_by_expansion(n, m);
            let got = free_energy_quadrature(&ModelParams::new(n, m as u64)).unwrap();
            assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "N={n} m={m}: {got} vs {want}");
        }
    }
    // Z = π²/2 for two particles without vortex.
    let f2 = free_energy_quadrature(&ModelParams::new(2, 0)).unwrap();
    assert!((f2 + 0.5 * (PI * PI / 2.0).ln()).abs() < 1e-12);
}

#[test]
fn newton_potential_matches_plane_quadrature() {
    let grid = RadialGrid::uniform(1.5, 16).unwrap();
    let values: Vec<f64> = grid.nodes().iter().map(|r| 1.0 + (3.0 * r).sin()).collect();
    let mu = RadialDensity::normalized(grid.clone(), values).unwrap();
    let (xg, wg) = gauss_legendre_on(12, 0.0, 1.0);
    let n_phi = 4000;
    for &x in &[0.0, 0.37, 0.81, 1.3, 2.5] {
        let mut h = 0.0;
        for j in 0..grid.n_bins() {
            let (a, b) = (grid.edges()[j], grid.edges()[j + 1]);
            for (t, w) in xg.iter().zip(&wg) {
                let rho = a + (b - a) * t;
                let mut ring = 0.0;
                for k in 0..n_phi {
                    let phi = (k as f64 + 0.5) * 2.0 * PI / n_phi as f64;
                    let d2 = x * x + rho * rho - 2.0 * x * rho * phi.cos();
                    ring -= 0.5 * d2.ln();
                }
                h += w * (b - a) * rho * mu.values()[j] * ring * 2.0 * PI / n_phi as f64;
            }
        }
        let exact = newton_potential(&mu, x).unwrap();
        assert!((h - exact).abs() < 2e-3, "x={x}: {h} vs {exact}");
    }
}

#[test]
fn pair_element_matches_radial_quadrature() {
    // ∫ conj(f_a f_b) f_c f_d e^{−2|z|²}, f_l = z^l / √(π l!)
    let (u, w) = gauss_legendre_on(200, 0.0, 8.0);
    for &(a, b, c, d) in &[(0u64, 0, 0, 0), (1, 0, 0, 1), (2, 1, 3, 0), (2, 2, 1, 3), (5, 0, 2, 3)] {
        let l = a + b;
        assert_eq!(l, c + d);
        let radial: f64 = u
            .iter()
            .zip(&w)
            .map(|(r, w)| w * 2.0 * PI * r * r.powi(2 * l as i32) * (-2.0 * r * r).exp())
            .sum();
        let log_fact = ln_factorial(a) + ln_factorial(b) + ln_factorial(c) + ln_factorial(d);
        let norm = PI * PI * (0.5 * log_fact).exp();
        let want = radial / norm;
        let got = pair_matrix_element(a, b, c, d);
        assert!((got - want).abs() < 1e-12 * want.max(1e-3), "{a}{b}{c}{d}: {got} vs {want}");
    }
}

#[test]
fn kernel_counts_quasi_hole_states() {
    for n in 2..=4usize {
        let laughlin = n * (n - 1);
        for l in 0..=laughlin + 4 {
            let s = sector_spectrum(n, l).unwrap();
            let want = if l < laughlin { 0 } else { partition_count(l - laughlin, n) as usize };
            assert_eq!(s.kernel_dim, want, "N={n} L={l}");
            assert!(!s.ambiguous());
        }
    }
}

#[test]
fn yrast_is_nonincreasing() {
    for n in 2..=5 {
        let y = yrast_curve(n, n * (n - 1) + 2).unwrap();
        for w in y.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "{y:?}");
        }
        assert!(y.last().unwrap().abs() < 1e-10);
    }
}

#[test]
fn product_state_attains_momentum_lower_bound() {
    let p = ModelParams::new(4, 0).with_trap(-0.02, 0.003);
    for l in [0u64, 4, 8, 12, 16] {
        let direct = 4.0 * single_particle_energy(&p, l / 4);
        assert!((direct - lower_bound_e(&p, l)).abs() < 1e-12);
    }
}

#[test]
fn one_particle_gibbs_law() {
    // N = 1, T = 1: u = r² is Gamma(m + 1, 1).
    for m in [0u64, 2] {
        let p = ModelParams::new(1, m);
        let s = SamplerConfig {
            n_samples: 40_000,
            n_burnin: 500,
            seed: 11 + m,
            ..SamplerConfig::default()
        };
        let mut rec = ScalarRecorder::default();
        run_chain(&p, &s, |b, z| rec.push(b, z[0][0].powi(2) + z[0][1].powi(2))).unwrap();
        let est = rec.finish();
        let want = (m + 1) as f64;
        assert!((est.mean - want).abs() < 4.0 * est.stderr, "m={m}: {} ± {}", est.mean, est.stderr);
    }
}

#[test]
fn onsager_functional_vanishes_for_matching_disc() {
    let l = 0.3;
    let grid = RadialGrid::uniform(l, 3001).unwrap();
    let rho = RadialDensity::normalized(grid.clone(), vec![1.0; grid.n_bins()]).unwrap();
    let pot = NewtonPotential::new(&rho);
    let self_energy = coulomb_energy(&rho, &rho).unwrap();
    let v = onsager_functional(&pot, self_energy, &[[0.0, 0.0]], l);
    assert!(v.abs() < 1e-3, "{v}");
    let off = onsager_functional(&pot, self_energy, &[[0.2, 0.0]], l);
    assert!(off > v);
}

//! Mean-field functionals, their explicit minimizers, the numerical minimizer
//! of `E^MF` and the calibrated decay envelope of `ρ^MF`.

use std::f64::consts::PI;

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::radial_measures::{
    coulomb_energy, NewtonPotential, RadialDensity, RadialGrid, RadialMeasure,
};

/// Density cap `1/(2π)` of the mean-field minimizer.
pub const DENSITY_CAP: f64 = 1.0 / (2.0 * PI);
/// Relative slack on [`DENSITY_CAP`] allowed for discretization.
pub const DENSITY_CAP_TOL: f64 = 1e-3;
/// Densities below this are excluded from the Euler–Lagrange residual.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// `W_m(r) = r² − 2(m/N) log r`; `+∞` at the origin when `m > 0`.
pub fn potential_w(params: &ModelParams, r: f64) -> f64 {
    let a = params.vortex_charge();
    if a == 0.0 {
        return r * r;
    }
    if r <= 0.0 {
        return f64::INFINITY;
    }
    r * r - 2.0 * a * r.ln()
}

/// Exact cell averages of `W_m` (the log singularity is integrated analytically).
pub fn cell_average_w(params: &ModelParams, grid: &RadialGrid) -> Vec<f64> {
    let a = params.vortex_charge();
    grid.edges()
        .windows(2)
        .zip(grid.areas())
        .map(|(e, area)| {
            let (lo, hi) = (e[0], e[1]);
            let r2 = 0.5 * (lo * lo + hi * hi);
            if a == 0.0 {
                return r2;
            }
            let int_log = if lo == 0.0 {
                0.5 * hi * hi * hi.ln() - 0.25 * hi * hi
            } else {
                let d2 = (hi - lo) * (hi + lo);
                0.5 * (d2 * hi.ln() + lo * lo * ((hi - lo) / lo).ln_1p()) - 0.25 * d2
            };
            r2 - 2.0 * a * 2.0 * PI * int_log / area
        })
        .collect()
}

/// `ρ^el` on the default grid.
pub fn electrostatic_profile(params: &ModelParams) -> Result<RadialDensity> {
    params.validate()?;
    electrostatic_profile_on(params, &RadialGrid::for_params(params)?)
}

/// `ρ^el`: `1/(2π)` on the annulus `[√(m/N), √(2+m/N)]` (the disc of radius √2
/// for `m = 0`). Cells cut by an edge carry the cell average.
pub fn electrostatic_profile_on(params: &ModelParams, grid: &RadialGrid) -> Result<RadialDensity> {
    let (r_in, r_out) = params.electrostatic_radii();
    if r_out > grid.r_max() {
        return Err(Error::Domain(format!(
            "grid r_max {} does not cover the support edge {r_out}",
            grid.r_max()
        )));
    }
    let values = grid
        .edges()
        .windows(2)
        .zip(grid.areas())
        .map(|(e, area)| {
            let lo = e[0].max(r_in);
            let hi = e[1].min(r_out);
            if hi <= lo {
                0.0
            } else {
                DENSITY_CAP * PI * (hi - lo) * (hi + lo) / area
            }
        })
        .collect();
    RadialDensity::new(grid.clone(), values, 1.0)
}

/// `log Z^th` for `Z^th = ∫ exp(−W_m/T)`, in closed form:
/// `π T^{a+1} Γ(a+1)` with `a = m/(NT)`.
pub fn thermal_log_partition(params: &ModelParams) -> f64 {
    let t = params.temperature;
    let a = params.vortex_charge() / t;
    PI.ln() + (a + 1.0) * t.ln() + ln_gamma(a + 1.0)
}

/// `E^th = −T log Z^th`.
pub fn thermal_energy(params: &ModelParams) -> f64 {
    -params.temperature * thermal_log_partition(params)
}

/// `ρ^th` on the default grid.
pub fn thermal_profile(params: &ModelParams) -> Result<RadialDensity> {
    params.validate()?;
    thermal_profile_on(params, &RadialGrid::for_params(params)?)
}

/// `ρ^th = exp(−W_m/T)/Z^th`, which at `T = 1/N` is `N^{m+1}/(π m!) r^{2m} e^{−N r²}`.
/// Evaluated in log space.
pub fn thermal_profile_on(params: &ModelParams, grid: &RadialGrid) -> Result<RadialDensity> {
    let t = params.temperature;
    let log_z = thermal_log_partition(params);
    let a = params.vortex_charge();
    let values = grid.cell_averages(|r| {
        if r <= 0.0 {
            return if a == 0.0 { (-log_z).exp() } else { 0.0 };
        }
        (-(r * r - 2.0 * a * r.ln()) / t - log_z).exp()
    });
    RadialDensity::new(grid.clone(), values, 1.0)
}

/// Terms of the three mean-field functionals evaluated at one density.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FunctionalEnergies {
    /// `∫ W_m ρ`
    pub potential: f64,
    /// `D(ρ, ρ)`
    pub interaction: f64,
    /// `∫ ρ log ρ`
    pub entropy: f64,
    pub e_mf: f64,
    pub e_el: f64,
    pub e_th: f64,
}

/// `E^MF = ∫Wρ + 2D(ρ,ρ) + T∫ρ log ρ`; `E^el` drops the entropy, `E^th` drops `D`.
pub fn functional_energies(params: &ModelParams, rho: &RadialDensity) -> Result<FunctionalEnergies> {
    let mass = rho.total_mass();
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::Mass {
            declared: 1.0,
            found: mass,
        });
    }
    let grid = rho.grid();
    let w = cell_average_w(params, grid);
    let mut potential = 0.0;
    let mut entropy = 0.0;
    for ((&v, &area), &wi) in rho.values().iter().zip(grid.areas()).zip(&w) {
        if v > 0.0 {
            potential += v * area * wi;
            entropy += v * area * v.ln();
        }
    }
    let interaction = coulomb_energy(rho, rho)?;
    let t = params.temperature;
    Ok(FunctionalEnergies {
        potential,
        interaction,
        entropy,
        e_mf: potential + 2.0 * interaction + t * entropy,
        e_el: potential + 2.0 * interaction,
        e_th: potential + t * entropy,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanFieldSolution {
    #[serde(skip)]
    pub density: RadialDensity,
    pub energy: f64,
    /// `E^MF + 2D(ρ^MF, ρ^MF)`
    pub lagrange_constant: f64,
    pub interaction: f64,
    pub iterations: usize,
    pub residual: f64,
    pub residual_history: Vec<f64>,
    pub max_density: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub gmres_restart: usize,
    pub gmres_max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 200,
            gmres_restart: 120,
            gmres_max_iterations: 2000,
        }
    }
}

/// Minimizes `E^MF` on the default grid.
pub fn mf_minimize(params: &ModelParams, tol: f64) -> Result<MeanFieldSolution> {
    params.validate()?;
    let grid = RadialGrid::for_params(params)?;
    mf_minimize_on(params, &grid, tol, SolverOptions::default())
}

/// Solves the Euler–Lagrange equation `ρ = Z⁻¹ exp(−(W_m + 4h_ρ)/T)`.
///
/// The unknown is the effective potential `φ = W_m + 4h_ρ` on the cells; the
/// fixed-point equation `φ − W − 4h[ρ(φ)] = 0` is solved by Newton's method
/// with GMRES for the linear steps and a backtracking line search.
pub fn mf_minimize_on(
    params: &ModelParams,
    grid: &RadialGrid,
    tol: f64,
    opts: SolverOptions,
) -> Result<MeanFieldSolution> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be > 0, got {tol}")));
    }
    params.validate()?;
    let t = params.temperature;
    let w = cell_average_w(params, grid);
    let areas = grid.areas().to_vec();
    let init = if params.is_thermal() {
        thermal_profile_on(params, grid)?
    } else {
        electrostatic_profile_on(params, grid)?
    };

    let h_of = |dens: &[f64]| NewtonPotential::from_values(grid, dens).cell_averages();
    let masses = |phi: &[f64]| -> Vec<f64> {
        let s: Vec<f64> = phi
            .iter()
            .zip(&areas)
            .map(|(p, a)| a.ln() - p / t)
            .collect();
        let smax = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|x| (x - smax).exp()).collect();
        let z: f64 = e.iter().sum();
        e.into_iter().map(|x| x / z).collect()
    };
    let density_of = |q: &[f64]| -> Vec<f64> { q.iter().zip(&areas).map(|(q, a)| q / a).collect() };
    let residual_fn = |phi: &[f64], q: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let h = h_of(&density_of(q));
        let f = phi
            .iter()
            .zip(&w)
            .zip(&h)
            .map(|((p, w), h)| p - w - 4.0 * h)
            .collect();
        (f, h)
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();

    let h0 = h_of(init.values());
    let mut phi: Vec<f64> = w.iter().zip(&h0).map(|(w, h)| w + 4.0 * h).collect();
    let mut history = Vec::new();
    let mut q = masses(&phi);
    let (mut f, mut h) = residual_fn(&phi, &q);
    for iter in 0..=opts.max_iterations {
        let res = el_residual(&w, &h, &density_of(&q), &areas, t);
        history.push(res);
        if res <= tol {
            let density = RadialDensity::from_cell_masses(grid.clone(), &q)?;
            let e = functional_energies(params, &density)?;
            let max_density = density.max_value();
            return Ok(MeanFieldSolution {
                density,
                energy: e.e_mf,
                lagrange_constant: e.e_mf + 2.0 * e.interaction,
                interaction: e.interaction,
                iterations: iter,
                residual: res,
                residual_history: history,
                max_density,
            });
        }
        if iter == opts.max_iterations {
            break;
        }
        let qc = q.clone();
        let apply = |v: &[f64]| -> Vec<f64> {
            let qv: f64 = qc.iter().zip(v).map(|(a, b)| a * b).sum();
            let sv: Vec<f64> = qc
                .iter()
                .zip(v)
                .zip(&areas)
                .map(|((q, v), a)| (q * v - q * qv) / a)
                .collect();
            let ks = h_of(&sv);
            v.iter().zip(&ks).map(|(v, k)| v + 4.0 / t * k).collect()
        };
        let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
        let fnorm = norm(&f);
        let forcing = (0.1f64).min(fnorm.sqrt()).max(1e-10);
        let delta = gmres(apply, &rhs, forcing, opts.gmres_restart, opts.gmres_max_iterations);
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = phi.iter().zip(&delta).map(|(p, d)| p + step * d).collect();
            let tq = masses(&trial);
            let (tf, th) = residual_fn(&trial, &tq);
            if norm(&tf) <= (1.0 - 1e-4 * step) * fnorm || step < 1e-8 {
                phi = trial;
                q = tq;
                f = tf;
                h = th;
                break;
            }
            step *= 0.5;
        }
    }
    let residual = *history.last().unwrap();
    Err(Error::Convergence {
        iterations: opts.max_iterations,
        residual,
        history,
    })
}

/// `sup |ρ − Z⁻¹ exp(−(W + 4h_ρ)/T)|` over cells where `ρ > 1e-12`.
fn el_residual(w: &[f64], h: &[f64], rho: &[f64], areas: &[f64], t: f64) -> f64 {
    let s: Vec<f64> = w.iter().zip(h).map(|(w, h)| -(w + 4.0 * h) / t).collect();
    let smax = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = s.iter().zip(areas).map(|(s, a)| a * (s - smax).exp()).sum();
    rho.iter()
        .zip(&s)
        .filter(|(r, _)| **r > RESIDUAL_FLOOR)
        .map(|(r, s)| (r - (s - smax).exp() / z).abs())
        .fold(0.0, f64::max)
}

/// Restarted GMRES without preconditioning.
fn gmres(
    apply: impl Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    rel_tol: f64,
    restart: usize,
    max_iter: usize,
) -> Vec<f64> {
    let n = b.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return x;
    }
    let mut total = 0;
    while total < max_iter {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = dot(&r, &r).sqrt();
        if beta <= rel_tol * bnorm {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut hcols: Vec<Vec<f64>> = Vec::new();
        let mut cs: Vec<f64> = Vec::new();
        let mut sn: Vec<f64> = Vec::new();
        let mut g = vec![beta];
        let mut k = 0;
        while k < restart && total < max_iter {
            let mut wv = apply(&v[k]);
            let mut hcol = vec![0.0; k + 2];
            for (i, vi) in v.iter().enumerate() {
                let hij = dot(&wv, vi);
                hcol[i] = hij;
                for (wj, vj) in wv.iter_mut().zip(vi) {
                    *wj -= hij * vj;
                }
            }
            let hn = dot(&wv, &wv).sqrt();
            hcol[k + 1] = hn;
            for i in 0..k {
                let tmp = cs[i] * hcol[i] + sn[i] * hcol[i + 1];
                hcol[i + 1] = -sn[i] * hcol[i] + cs[i] * hcol[i + 1];
                hcol[i] = tmp;
            }
            let den = hcol[k].hypot(hcol[k + 1]);
            let (c, s) = if den == 0.0 { (1.0, 0.0) } else { (hcol[k] / den, hcol[k + 1] / den) };
            cs.push(c);
            sn.push(s);
            hcol[k] = den;
            hcol[k + 1] = 0.0;
            g.push(-s * g[k]);
            g[k] *= c;
            hcols.push(hcol);
            total += 1;
            k += 1;
            if g[k].abs() <= rel_tol * bnorm || hn == 0.0 {
                break;
            }
            v.push(wv.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= hcols[j][i] * y[j];
            }
            y[i] = s / hcols[i][i];
        }
        for (j, yj) in y.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(&v[j]) {
                *xi += yj * vi;
            }
        }
        if g[k].abs() <= rel_tol * bnorm {
            break;
        }
    }
    x
}

/// Gaussian envelope `A exp(−c N (r − r_opt)²)` for the density outside the
/// bulk, with `A` and `c` calibrated on a solution.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayEnvelope {
    pub n: usize,
    pub r_opt: f64,
    /// The envelope applies for `r < inner_edge` and `r > outer_edge`.
    pub inner_edge: f64,
    pub outer_edge: f64,
    pub prefactor: f64,
    pub rate: f64,
    /// Rate of the unhalved least-squares fit.
    pub fitted_rate: f64,
}

/// Multiple of `N^{-1/2}` added around the electrostatic support to form the bulk.
pub const BULK_PAD: f64 = 3.0;

impl DecayEnvelope {
    /// Bulk `[R⁻ − 3N^{-1/2}, R⁺ + 3N^{-1/2}]` around the electrostatic support.
    pub fn bulk(params: &ModelParams) -> (f64, f64) {
        let (r_in, r_out) = params.electrostatic_radii();
        let pad = BULK_PAD / params.nf().sqrt();
        (r_in - pad, r_out + pad)
    }

    /// Fits the decay rate on the far region of `rho` and halves it, then picks
    /// the smallest prefactor that keeps `rho` below the envelope there.
    pub fn calibrate(params: &ModelParams, rho: &RadialDensity) -> Self {
        let n = params.nf();
        let r_opt = params.r_opt();
        let (lo, hi) = Self::bulk(params);
        let pts: Vec<(f64, f64)> = rho
            .grid()
            .nodes()
            .iter()
            .zip(rho.values())
            .filter(|(r, v)| (**r < lo || **r > hi) && **v > 1e-300)
            .map(|(r, v)| (n * (r - r_opt).powi(2), v.ln()))
            .collect();
        let fitted_rate = if pts.len() >= 3 {
            let k = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
            if sxx > 0.0 { -sxy / sxx } else { 0.0 }
        } else {
            0.0
        };
        let rate = if fitted_rate > 0.0 { 0.5 * fitted_rate } else { 0.1 };
        let log_pref = pts
            .iter()
            .map(|(x, y)| y + rate * x)
            .fold(f64::NEG_INFINITY, f64::max);
        let prefactor = if log_pref.is_finite() {
            log_pref.exp().max(f64::MIN_POSITIVE)
        } else {
            DENSITY_CAP
        };
        DecayEnvelope {
            n: params.n,
            r_opt,
            inner_edge: lo,
            outer_edge: hi,
            prefactor,
            rate,
            fitted_rate,
        }
    }

    /// Envelope value, `None` inside the bulk where it does not apply.
    pub fn value(&self, r: f64) -> Option<f64> {
        if r >= self.inner_edge && r <= self.outer_edge {
            return None;
        }
        let d = r - self.r_opt;
        Some(self.prefactor * (-self.rate * self.n as f64 * d * d).exp())
    }
}

/// `m_opt`: 0 for `ω ≥ −2kN`, otherwise the nonnegative integer nearest to
/// `−ω/(2k) − N` (ties to the smaller value).
pub fn optimal_vortex(params: &ModelParams) -> Result<u64> {
    params.validate()?;
    let n = params.nf();
    if params.omega < 0.0 && params.k == 0.0 {
        return Err(Error::Unbounded);
    }
    if params.omega >= -2.0 * params.k * n {
        return Ok(0);
    }
    let x = -params.omega / (2.0 * params.k) - n;
    let lo = x.floor();
    let m = if x - lo > 0.5 { lo + 1.0 } else { lo };
    Ok(m.max(0.0) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radial_measures::{total_variation, SignedRadialMeasure};

    #[test]
    fn trap_potential() {
        let p = ModelParams::new(10, 0);
        assert_eq!(potential_w(&p, 2.0), 4.0);
        let p = ModelParams::new(10, 10);
        assert_eq!(potential_w(&p, 1.0), 1.0);
        assert_eq!(potential_w(&p, 0.0), f64::INFINITY);
        let p = ModelParams::new(10, 40);
        let h = 1e-5;
        let d = (potential_w(&p, 2.0 + h) - potential_w(&p, 2.0 - h)) / (2.0 * h);
        assert!(d.abs() < 1e-8);
        assert!((potential_w(&p, 2.0) - (4.0 - 8.0 * 2f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn profiles_have_unit_mass() {
        for (n, m) in [(1, 0), (10, 0), (10, 1), (100, 100), (10, 1000), (30, 90000)] {
            let p = ModelParams::new(n, m);
            let el = electrostatic_profile(&p).unwrap();
            let th = thermal_profile(&p).unwrap();
            assert!((el.total_mass() - 1.0).abs() < 1e-9);
            assert!((th.total_mass() - 1.0).abs() < 1e-9, "{n} {m}");
        }
    }

    #[test]
    fn thermal_closed_form() {
        let p = ModelParams::new(1, 0);
        let th = thermal_profile(&p).unwrap();
        for r in [0.3, 1.0, 2.0] {
            let v = th.value_at(r);
            let node = th.grid().nodes()[th.grid().cell_of(r).unwrap()];
            assert!((v / ((-node * node).exp() / PI) - 1.0).abs() < 1e-5);
        }
        // Gibbs form at a non-default temperature has the same closed-form normalization.
        let p = ModelParams::new(4, 3).with_temperature(0.7);
        assert!((thermal_profile(&p).unwrap().total_mass() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn thermal_peak_near_r_opt() {
        let p = ModelParams::new(10, 1000);
        let th = thermal_profile(&p).unwrap();
        let (i, _) = th
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let r = th.grid().nodes()[i];
        assert!((r / 10.0 - 1.0).abs() < 0.02, "{r}");
    }

    #[test]
    fn electrostatic_energies() {
        let p = ModelParams::new(100, 0);
        let el = electrostatic_profile(&p).unwrap();
        let e = functional_energies(&p, &el).unwrap();
        assert!((e.e_el - (1.5 - 2f64.ln())).abs() < 1e-5, "{}", e.e_el);
        assert!((e.entropy + (2.0 * PI).ln()).abs() < 1e-3);
        let p = ModelParams::new(100, 100);
        let el = electrostatic_profile(&p).unwrap();
        assert!((el.value_at(1.5) - DENSITY_CAP).abs() < 1e-15);
        assert_eq!(el.value_at(0.9), 0.0);
        assert_eq!(el.value_at(1.8), 0.0);
    }

    #[test]
    fn thermal_energy_is_log_partition() {
        let p = ModelParams::new(10, 3);
        let th = thermal_profile(&p).unwrap();
        let e = functional_energies(&p, &th).unwrap();
        assert!((e.e_th - thermal_energy(&p)).abs() < 1e-6, "{} {}", e.e_th, thermal_energy(&p));
    }

    #[test]
    fn vortex_rounding() {
        let p = ModelParams::new(50, 0).with_trap(-4.0 * 1e-5 * 50.0, 1e-5);
        assert_eq!(optimal_vortex(&p).unwrap(), 50);
        let p = ModelParams::new(50, 0).with_trap(-1e-5 * 50.0, 1e-5);
        assert_eq!(optimal_vortex(&p).unwrap(), 0);
        // x = 2.5 exactly: ties go down
        let p = ModelParams::new(10, 0).with_trap(-25.0, 1.0);
        assert_eq!(optimal_vortex(&p).unwrap(), 2);
        let p = ModelParams::new(10, 0).with_trap(-1.0, 0.0);
        assert_eq!(optimal_vortex(&p), Err(Error::Unbounded));
    }

    #[test]
    fn solver_small_n() {
        let p = ModelParams::new(10, 0);
        let s = mf_minimize(&p, 1e-10).unwrap();
        assert!(s.residual <= 1e-10);
        assert!(s.max_density <= DENSITY_CAP * (1.0 + DENSITY_CAP_TOL));
        let el = electrostatic_profile(&p).unwrap();
        let th = thermal_profile(&p).unwrap();
        for other in [&el, &th] {
            assert!(s.energy <= functional_energies(&p, other).unwrap().e_mf + 1e-12);
        }
        let d = SignedRadialMeasure::difference(&s.density, &el).unwrap();
        assert!(total_variation(&d) < 0.5);
    }
}

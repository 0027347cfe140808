//! Energies of the quasi-hole trial states `Ψ^qh_m` in the anharmonic trap
//! `ω r² + k N r⁴`, their closed-form main terms and bounds, and the
//! `(ω, k, N)` phase diagram.

use serde::Serialize;

use crate::bargmann_ed::{momentum_regime, RegimeCase};
use crate::error::{Error, Result};
use crate::meanfield::{electrostatic_profile, mf_minimize, optimal_vortex, thermal_profile, DecayEnvelope};
use crate::params::ModelParams;
use crate::plasma_mc::{run_chain, ChainRun, DensityRecorder, SamplerConfig, ScalarRecorder, MIN_BIN_COUNT};
use crate::quadrature::gauss_legendre_on;
use crate::radial_measures::{RadialDensity, RadialGrid, RadialMeasure};

/// Total angular momentum `N(N−1) + N m` of `Ψ^qh_m`.
pub fn trial_momentum(n: usize, m: u64) -> u64 {
    let n = n as u64;
    n * (n - 1) + n * m
}

/// `ωN²(1 + m/N) + kN³(4/3 + 2m/N + m²/N²)`, i.e. `N² ∫ (ω r² + k N r⁴) ρ^el`.
pub fn main_term_energy(params: &ModelParams, m: u64) -> f64 {
    let n = params.nf();
    let a = m as f64 / n;
    params.omega * n * n * (1.0 + a) + params.k * n.powi(3) * (4.0 / 3.0 + 2.0 * a + a * a)
}

/// `−Nω²/(4k) + kN³/3`, the main term minimized over real `m ≥ 0` when `ω < −2kN`.
pub fn optimized_main_term(params: &ModelParams) -> Result<f64> {
    let (w, k, n) = (params.omega, params.k, params.nf());
    if k == 0.0 && w < 0.0 {
        return Err(Error::Unbounded);
    }
    if w >= -2.0 * k * n {
        return Ok(main_term_energy(params, 0));
    }
    Ok(-n * w * w / (4.0 * k) + k * n.powi(3) / 3.0)
}

/// `e(L) = (ω + 3k)L + kL²/N`, the minimal one-body energy at momentum `L`.
pub fn lower_bound_e(params: &ModelParams, l: u64) -> f64 {
    let l = l as f64;
    (params.omega + 3.0 * params.k) * l + params.k * l * l / params.nf()
}

fn smooth_step(t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= 1.0 {
        return 1.0;
    }
    let f = |s: f64| if s > 0.0 { (-1.0 / s).exp() } else { 0.0 };
    let a = f(t);
    a / (a + f(1.0 - t))
}

/// Smooth radial partition of unity `χ_in + χ_out = 1`: `χ_in ≡ 1` on
/// `[inner, outer]` and `≡ 0` outside `[inner − width, outer + width]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffPair {
    pub inner: f64,
    pub outer: f64,
    pub width: f64,
}

impl CutoffPair {
    pub fn new(inner: f64, outer: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) || !(outer > inner) || !outer.is_finite() {
            return Err(Error::Domain(format!(
                "bad cut-off (inner {inner}, outer {outer}, width {width})"
            )));
        }
        Ok(CutoffPair { inner, outer, width })
    }

    /// Pad `δ` around the electrostatic support: `max(√(log N / N), 3/√N)`,
    /// so that `χ_out` lives where the decay envelope applies.
    pub fn pad(params: &ModelParams) -> f64 {
        let n = params.nf();
        (n.ln() / n).sqrt().max(crate::meanfield::BULK_PAD / n.sqrt())
    }

    /// Bulk `[R⁻ − δ, R⁺ + δ]`; the transition spans one decade of the envelope.
    pub fn for_params(params: &ModelParams, envelope: &DecayEnvelope) -> Result<Self> {
        let (r_in, r_out) = params.electrostatic_radii();
        let d = Self::pad(params);
        let (inner, outer) = (r_in - d, r_out + d);
        let n = params.nf();
        let r_opt = params.r_opt();
        let decade = |edge: f64| {
            let dist = (edge - r_opt).abs().max(1e-12);
            (std::f64::consts::LN_10 / (2.0 * envelope.rate * n * dist)).clamp(1e-3, d)
        };
        let width = if inner > 0.0 {
            decade(outer).min(decade(inner))
        } else {
            decade(outer)
        };
        Self::new(inner, outer, width)
    }

    pub fn chi_out(&self, r: f64) -> f64 {
        if r > self.outer {
            smooth_step((r - self.outer) / self.width)
        } else if r < self.inner {
            smooth_step((self.inner - r) / self.width)
        } else {
            0.0
        }
    }

    pub fn chi_in(&self, r: f64) -> f64 {
        1.0 - self.chi_out(r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DensityRegime {
    /// `m ≤ N²`, compared against `ρ^el`
    Electrostatic,
    /// `m > N²`, compared against `ρ^th`
    Thermal,
}

impl DensityRegime {
    pub fn of(params: &ModelParams) -> Self {
        if params.is_thermal() {
            DensityRegime::Thermal
        } else {
            DensityRegime::Electrostatic
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundCase {
    pub label: &'static str,
    pub value: f64,
    pub validity: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct UpperBound {
    /// One entry, or two inside the unproven window.
    pub cases: Vec<BoundCase>,
    pub unproven_window: bool,
    /// The bounds carry `(1 + o(1))` factors, reported as 0.
    pub o1_caveat: bool,
}

/// Energy upper bound for the regime of `params`.
pub fn upper_bound(params: &ModelParams) -> Result<UpperBound> {
    let (w, k, n) = (params.omega, params.k, params.nf());
    if k == 0.0 && w < 0.0 {
        return Err(Error::Unbounded);
    }
    let case1 = || BoundCase {
        label: "case-1",
        value: w * n * n + 4.0 / 3.0 * k * n.powi(3),
        validity: "omega >= -2kN",
    };
    let case2 = || BoundCase {
        label: "case-2",
        value: -n * w * w / (4.0 * k) + k * n.powi(3) / 3.0,
        validity: "omega <= -2kN and |omega| << k N^(7/5) log N",
    };
    let case3 = || BoundCase {
        label: "case-3",
        value: -n * w * w / (4.0 * k) - 1.5 * w * n,
        validity: "|omega| >> k N^(10/3)",
    };
    let (cases, window) = if w >= -2.0 * k * n {
        (vec![case1()], false)
    } else if w.abs() < k * n.powf(1.4) * n.ln() {
        (vec![case2()], false)
    } else if w.abs() > k * n.powf(10.0 / 3.0) {
        (vec![case3()], false)
    } else {
        (vec![case2(), case3()], true)
    };
    Ok(UpperBound {
        cases,
        unproven_window: window,
        o1_caveat: true,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub m: u64,
    pub momentum: u64,
    pub main_term: f64,
    /// `N² ∫ χ_in V ρ`
    pub reference_term: f64,
    /// `N² ∫ χ_in V (μ^(1) − ρ)`
    pub fluctuation_term: f64,
    /// `N² ∫ χ_out V μ^(1)`
    pub exterior_term: f64,
    /// Sum of the three terms above, `N² ∫ V μ^(1)`.
    pub mc_term: f64,
    pub stderr: f64,
    /// `N² ∫ χ_out |V| × envelope`, bounding the exterior term.
    pub cutoff_error: f64,
    pub lower_bound: f64,
    pub upper_bound: UpperBound,
    pub regime: DensityRegime,
    pub cutoffs: CutoffPair,
    pub envelope: DecayEnvelope,
    pub run: Option<ChainRun>,
}

fn trap(params: &ModelParams, r: f64) -> f64 {
    let r2 = r * r;
    params.omega * r2 + params.k * params.nf() * r2 * r2
}

/// `N² ∫ χ_out |V| A e^{−cN(r − r_opt)²} dA` over the region where `χ_out > 0`.
fn cutoff_bound(params: &ModelParams, cut: &CutoffPair, env: &DecayEnvelope) -> f64 {
    let n = params.nf();
    let tail = 12.0 / (env.rate * n).sqrt();
    let f = |r: f64| {
        let e = env.value(r).unwrap_or(0.0);
        2.0 * std::f64::consts::PI * r * cut.chi_out(r) * trap(params, r).abs() * e
    };
    let mut total = 0.0;
    let mut panels = |a: f64, b: f64| {
        let k = 400;
        let h = (b - a) / k as f64;
        for i in 0..k {
            let (x, w) = gauss_legendre_on(6, a + i as f64 * h, a + (i + 1) as f64 * h);
            total += x.iter().zip(&w).map(|(x, w)| w * f(*x)).sum::<f64>();
        }
    };
    if cut.inner > 0.0 {
        panels(0.0, cut.inner);
    }
    let start = cut.outer.max(0.0);
    panels(start, start.max(env.r_opt) + tail + cut.width);
    n * n * total
}

/// Energy `N² ∫ (ω r² + k N r⁴) μ_N^(1)` of `Ψ^qh_m`, split by the cut-offs.
///
/// With `sampler = None` the density `ρ` itself stands in for `μ_N^(1)`.
pub fn evaluate_trial_energy(
    params: &ModelParams,
    m: u64,
    sampler: Option<&SamplerConfig>,
) -> Result<EnergyReport> {
    let p = params.with_m(m);
    p.validate()?;
    let regime = DensityRegime::of(&p);
    let rho: RadialDensity = match regime {
        DensityRegime::Electrostatic => electrostatic_profile(&p)?,
        DensityRegime::Thermal => thermal_profile(&p)?,
    };
    let mf = mf_minimize(&p, 1e-10).map(|s| s.density).unwrap_or_else(|_| rho.clone());
    let envelope = DecayEnvelope::calibrate(&p, &mf);
    let cutoffs = CutoffPair::for_params(&p, &envelope)?;
    let n2 = p.nf() * p.nf();
    let v = |r: f64| trap(&p, r);
    let reference_term = n2 * rho.integrate(|r| cutoffs.chi_in(r) * v(r));
    let cutoff_error = cutoff_bound(&p, &cutoffs, &envelope);

    let (fluctuation_term, exterior_term, stderr, run) = match sampler {
        None => (0.0, n2 * rho.integrate(|r| cutoffs.chi_out(r) * v(r)), 0.0, None),
        Some(s) => {
            let grid = RadialGrid::uniform(RadialGrid::default_r_max(&p), 256)?;
            let mut hist = DensityRecorder::new(grid.clone());
            let mut inner = ScalarRecorder::default();
            let mut outer = ScalarRecorder::default();
            let mut total = ScalarRecorder::default();
            let (_, run) = run_chain(&p, s, |b, z| {
                let (mut si, mut so) = (0.0, 0.0);
                for q in z {
                    let r = q[0].hypot(q[1]);
                    let c = cutoffs.chi_out(r);
                    si += (1.0 - c) * v(r);
                    so += c * v(r);
                }
                let k = z.len() as f64;
                inner.push(b, si / k);
                outer.push(b, so / k);
                total.push(b, (si + so) / k);
                hist.record(b, z);
            })?;
            let est = hist.finish();
            for (i, e) in grid.edges().windows(2).enumerate() {
                if cutoffs.chi_out(e[0]) == 0.0 && cutoffs.chi_out(e[1]) == 0.0 {
                    continue;
                }
                if est.counts[i] < MIN_BIN_COUNT {
                    continue;
                }
                // largest envelope value over the cell
                let nearest = env_nearest(&envelope, e[0], e[1]);
                let bound = match envelope.value(nearest) {
                    Some(b) => b,
                    None => continue,
                };
                if est.density[i] - 3.0 * est.stderr[i] > bound {
                    return Err(Error::Integrity(format!(
                        "sampled density {:e} exceeds the decay envelope {:e} at r = {}",
                        est.density[i], bound, grid.nodes()[i]
                    )));
                }
            }
            let fl = n2 * inner.finish().mean - reference_term;
            let ex = n2 * outer.finish().mean;
            (fl, ex, n2 * total.finish().stderr, Some(run))
        }
    };
    let momentum = trial_momentum(p.n, m);
    Ok(EnergyReport {
        m,
        momentum,
        main_term: main_term_energy(&p, m),
        reference_term,
        fluctuation_term,
        exterior_term,
        mc_term: reference_term + fluctuation_term + exterior_term,
        stderr,
        cutoff_error,
        lower_bound: lower_bound_e(&p, momentum),
        upper_bound: upper_bound(&p)?,
        regime,
        cutoffs,
        envelope,
        run,
    })
}

fn env_nearest(env: &DecayEnvelope, a: f64, b: f64) -> f64 {
    if env.r_opt < a {
        a
    } else if env.r_opt > b {
        b
    } else {
        env.r_opt
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PhasePoint {
    pub omega: f64,
    pub m_opt: u64,
    pub momentum: u64,
    pub main_term: f64,
    pub upper_bound: UpperBound,
    pub case: RegimeCase,
    pub regime: DensityRegime,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseDiagram {
    pub n: usize,
    pub k: f64,
    pub points: Vec<PhasePoint>,
    /// `−2kN`, where `m_opt` leaves 0.
    pub vortex_boundary: f64,
    /// `−2k(N² + N)`, where `m_opt` reaches `N²`.
    pub thermal_boundary: f64,
    /// Grid points on either side of the first change of `m_opt = 0`.
    pub observed_vortex_boundary: Option<(f64, f64)>,
    /// Grid points on either side of the first change of the density regime.
    pub observed_thermal_boundary: Option<(f64, f64)>,
}

/// Closed-form phase diagram over a monotone `ω` grid.
pub fn phase_diagram(n: usize, k: f64, omegas: &[f64]) -> Result<PhaseDiagram> {
    if omegas.len() >= 2 {
        let up = omegas.windows(2).all(|w| w[1] > w[0]);
        let down = omegas.windows(2).all(|w| w[1] < w[0]);
        if !up && !down {
            return Err(Error::InvalidParams("omega grid must be strictly monotone".into()));
        }
    }
    let mut points = Vec::with_capacity(omegas.len());
    for &omega in omegas {
        let p = ModelParams::new(n, 0).with_trap(omega, k);
        p.validate()?;
        let m_opt = optimal_vortex(&p)?;
        let pm = p.with_m(m_opt);
        points.push(PhasePoint {
            omega,
            m_opt,
            momentum: trial_momentum(n, m_opt),
            main_term: main_term_energy(&pm, m_opt),
            upper_bound: upper_bound(&p)?,
            case: momentum_regime(&p)?.case,
            regime: DensityRegime::of(&pm),
        });
    }
    let change = |f: &dyn Fn(&PhasePoint) -> bool| {
        points
            .windows(2)
            .find(|w| f(&w[0]) != f(&w[1]))
            .map(|w| (w[0].omega, w[1].omega))
    };
    let nf = n as f64;
    Ok(PhaseDiagram {
        n,
        k,
        vortex_boundary: -2.0 * k * nf,
        thermal_boundary: -2.0 * k * (nf * nf + nf),
        observed_vortex_boundary: change(&|p| p.m_opt == 0),
        observed_thermal_boundary: change(&|p| p.regime == DensityRegime::Thermal),
        points,
    })
}

//! Logarithmic potential theory for radial measures on a radial grid.
//!
//! A grid measure is piecewise constant on annular cells. Node `i` sits at
//! radius `nodes[i]` and owns the cell between the midpoints to its
//! neighbours; node 0 is at the origin and owns the half-bin `[0, Δr/2]`.
//! For such measures Newton's theorem gives the potential in closed form,
//! so potentials, Coulomb energies and entropies are exact up to rounding.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::quadrature::gauss_legendre;

/// Default number of radial nodes.
pub const DEFAULT_BINS: usize = 2048;
/// Tolerance on the mass of a constructed density.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    nodes: Vec<f64>,
    edges: Vec<f64>,
    areas: Vec<f64>,
}

impl RadialGrid {
    /// Uniform nodes `0, Δr, …, r_max` with `n_bins` nodes.
    pub fn uniform(r_max: f64, n_bins: usize) -> Result<Self> {
        if !(r_max > 0.0) || !r_max.is_finite() {
            return Err(Error::Domain(format!("r_max must be positive, got {r_max}")));
        }
        if n_bins < 2 {
            return Err(Error::Domain("n_bins must be >= 2".into()));
        }
        let dr = r_max / (n_bins - 1) as f64;
        let mut nodes: Vec<f64> = (0..n_bins).map(|i| i as f64 * dr).collect();
        nodes[n_bins - 1] = r_max;
        Self::from_nodes(nodes)
    }

    /// Grid from explicit nodes; the first node must be 0.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        let n = nodes.len();
        if n < 2 {
            return Err(Error::Domain("need at least 2 nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::Domain("first node must be at r = 0".into()));
        }
        if nodes.iter().any(|r| !r.is_finite()) || nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("nodes must be finite and strictly increasing".into()));
        }
        let mut edges = Vec::with_capacity(n + 1);
        edges.push(0.0);
        for w in nodes.windows(2) {
            edges.push(0.5 * (w[0] + w[1]));
        }
        edges.push(nodes[n - 1]);
        let areas = edges
            .windows(2)
            .map(|e| PI * (e[1] - e[0]) * (e[1] + e[0]))
            .collect();
        Ok(RadialGrid { nodes, edges, areas })
    }

    /// Three uniform pieces: coarse on `[0, lo]`, fine on `[lo, hi]`, coarse on `[hi, r_max]`.
    pub fn focused(lo: f64, hi: f64, r_max: f64, n_bins: usize) -> Result<Self> {
        if !(0.0 < lo && lo < hi && hi < r_max) || n_bins < 16 {
            return Err(Error::Domain(format!(
                "bad focused grid lo={lo} hi={hi} r_max={r_max} n={n_bins}"
            )));
        }
        let n_in = n_bins / 8;
        let n_out = n_bins / 8;
        let n_mid = n_bins - n_in - n_out;
        let mut nodes = Vec::with_capacity(n_bins);
        for i in 0..n_in {
            nodes.push(lo * i as f64 / n_in as f64);
        }
        for i in 0..n_mid {
            nodes.push(lo + (hi - lo) * i as f64 / (n_mid - 1) as f64);
        }
        for i in 1..=n_out {
            nodes.push(hi + (r_max - hi) * i as f64 / n_out as f64);
        }
        Self::from_nodes(nodes)
    }

    /// `max(3, 2√(2+m/N))`, widened to `r_opt + 6√T` so thermal tails fit.
    pub fn default_r_max(params: &ModelParams) -> f64 {
        let a = params.vortex_charge();
        let thermal = a.sqrt() + 6.0 * params.temperature.sqrt();
        3f64.max(2.0 * (2.0 + a).sqrt()).max(thermal)
    }

    /// Default grid for a parameter set.
    pub fn for_params(params: &ModelParams) -> Result<Self> {
        Self::for_params_with_bins(params, DEFAULT_BINS)
    }

    /// Uniform when it resolves the √T edge layer, otherwise focused on the
    /// support of the electrostatic/thermal profiles.
    pub fn for_params_with_bins(params: &ModelParams, n_bins: usize) -> Result<Self> {
        let r_max = Self::default_r_max(params);
        let width = params.temperature.sqrt();
        if r_max / (n_bins - 1) as f64 <= width / 40.0 {
            return Self::uniform(r_max, n_bins);
        }
        let (r_in, r_out) = params.electrostatic_radii();
        let pad = 8.0 * width;
        let lo = r_in.min(params.r_opt()) - pad;
        let hi = r_out + pad;
        if lo <= 0.1 * hi {
            return Self::uniform(r_max.max(hi), n_bins);
        }
        Self::focused(lo, hi, r_max.max(hi + pad), n_bins)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Cell boundaries, `n_bins + 1` of them, starting at 0.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Area of each cell.
    pub fn areas(&self) -> &[f64] {
        &self.areas
    }

    pub fn n_bins(&self) -> usize {
        self.nodes.len()
    }

    pub fn r_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Index of the cell containing `r`, `None` beyond `r_max`.
    pub fn cell_of(&self, r: f64) -> Option<usize> {
        if !(r >= 0.0) || r > self.r_max() {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= r);
        Some(i.saturating_sub(1).min(self.n_bins() - 1))
    }

    /// Cell averages of `f`, by Gauss–Legendre on each cell with the area element.
    pub fn cell_averages(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let (x, w) = gauss_legendre(8);
        self.edges
            .windows(2)
            .zip(&self.areas)
            .map(|(e, &area)| {
                let h = 0.5 * (e[1] - e[0]);
                let c = 0.5 * (e[1] + e[0]);
                let s: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(t, wt)| {
                        let r = c + h * t;
                        wt * h * 2.0 * PI * r * f(r)
                    })
                    .sum();
                s / area
            })
            .collect()
    }

    fn check_same(&self, other: &RadialGrid) -> Result<()> {
        if self.nodes != other.nodes {
            return Err(Error::Dimension(format!(
                "grids differ ({} vs {} nodes, r_max {} vs {})",
                self.n_bins(),
                other.n_bins(),
                self.r_max(),
                other.r_max()
            )));
        }
        Ok(())
    }

    /// The grid dilated by factor `s`.
    pub fn dilated(&self, s: f64) -> Result<Self> {
        Self::from_nodes(self.nodes.iter().map(|r| r * s).collect())
    }
}

/// Common view of positive and signed grid measures.
pub trait RadialMeasure {
    fn grid(&self) -> &RadialGrid;
    /// Density per unit area on each cell.
    fn values(&self) -> &[f64];

    fn total_mass(&self) -> f64 {
        self.values()
            .iter()
            .zip(self.grid().areas())
            .map(|(v, a)| v * a)
            .sum()
    }

    /// Piecewise-constant density at radius `r` (0 beyond the grid).
    fn value_at(&self, r: f64) -> f64 {
        self.grid().cell_of(r).map_or(0.0, |i| self.values()[i])
    }

    /// Integral of a radial function against the measure, by cell averages.
    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let avg = self.grid().cell_averages(f);
        self.values()
            .iter()
            .zip(self.grid().areas())
            .zip(&avg)
            .map(|((v, a), f)| if *v == 0.0 { 0.0 } else { v * a * f })
            .sum()
    }
}

/// Nonnegative radial density with a declared mass.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialDensity {
    grid: RadialGrid,
    values: Vec<f64>,
    mass: f64,
}

impl RadialDensity {
    pub fn new(grid: RadialGrid, values: Vec<f64>, mass: f64) -> Result<Self> {
        if values.len() != grid.n_bins() {
            return Err(Error::Dimension(format!(
                "{} values for {} nodes",
                values.len(),
                grid.n_bins()
            )));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("density values must be finite and >= 0".into()));
        }
        let d = RadialDensity { grid, values, mass };
        let found = d.total_mass();
        if (found - mass).abs() > MASS_TOL * mass.abs().max(1.0) {
            return Err(Error::Mass {
                declared: mass,
                found,
            });
        }
        Ok(d)
    }

    /// Rescales `values` to unit mass. This is the only renormalizing constructor.
    pub fn normalized(grid: RadialGrid, mut values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_bins() {
            return Err(Error::Dimension("value count differs from node count".into()));
        }
        let m: f64 = values.iter().zip(grid.areas()).map(|(v, a)| v * a).sum();
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::Domain(format!("cannot normalize mass {m}")));
        }
        for v in &mut values {
            *v /= m;
        }
        Self::new(grid, values, 1.0)
    }

    /// Unit-mass density from cell masses.
    pub fn from_cell_masses(grid: RadialGrid, masses: &[f64]) -> Result<Self> {
        let values = masses.iter().zip(grid.areas()).map(|(q, a)| q / a).collect();
        Self::new(grid, values, 1.0)
    }

    pub fn declared_mass(&self) -> f64 {
        self.mass
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Support as `[inner edge, outer edge]` of the nonzero cells.
    pub fn support(&self) -> Option<(f64, f64)> {
        let first = self.values.iter().position(|v| *v > 0.0)?;
        let last = self.values.iter().rposition(|v| *v > 0.0)?;
        Some((self.grid.edges[first], self.grid.edges[last + 1]))
    }

    /// Dilation `ρ_R(x) = R^{-2} ρ(x/R)`; preserves mass.
    pub fn dilated(&self, s: f64) -> Result<Self> {
        let grid = self.grid.dilated(s)?;
        let values = self.values.iter().map(|v| v / (s * s)).collect();
        Self::new(grid, values, self.mass)
    }

    pub fn as_signed(&self) -> SignedRadialMeasure {
        SignedRadialMeasure {
            grid: self.grid.clone(),
            values: self.values.clone(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("# qhplasma radial-density v1 mass={}\nr,value\n", self.mass);
        for (r, v) in self.grid.nodes.iter().zip(&self.values) {
            let _ = writeln!(s, "{r},{v}");
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut mass = None;
        let mut nodes = Vec::new();
        let mut values = Vec::new();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(m) = rest.split_whitespace().find_map(|t| t.strip_prefix("mass=")) {
                    mass = Some(m.parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
                }
                continue;
            }
            if line.starts_with('r') {
                continue;
            }
            let mut it = line.split(',');
            let (Some(r), Some(v), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::Parse(format!("bad row '{line}'")));
            };
            nodes.push(r.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
            values.push(v.trim().parse::<f64>().map_err(|e| Error::Parse(e.to_string()))?);
        }
        let mass = mass.ok_or_else(|| Error::Parse("missing mass header".into()))?;
        Self::new(RadialGrid::from_nodes(nodes)?, values, mass)
    }
}

impl RadialMeasure for RadialDensity {
    fn grid(&self) -> &RadialGrid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Signed radial measure, e.g. a difference of densities.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedRadialMeasure {
    grid: RadialGrid,
    values: Vec<f64>,
}

impl SignedRadialMeasure {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_bins() {
            return Err(Error::Dimension("value count differs from node count".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("values must be finite".into()));
        }
        Ok(SignedRadialMeasure { grid, values })
    }

    pub fn zero(grid: RadialGrid) -> Self {
        let n = grid.n_bins();
        SignedRadialMeasure {
            grid,
            values: vec![0.0; n],
        }
    }

    /// `a − b` on a common grid.
    pub fn difference(a: &impl RadialMeasure, b: &impl RadialMeasure) -> Result<Self> {
        a.grid().check_same(b.grid())?;
        let values = a.values().iter().zip(b.values()).map(|(x, y)| x - y).collect();
        Self::new(a.grid().clone(), values)
    }

    pub fn scaled(&self, s: f64) -> Self {
        SignedRadialMeasure {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
        }
    }
}

impl RadialMeasure for SignedRadialMeasure {
    fn grid(&self) -> &RadialGrid {
        &self.grid
    }
    fn values(&self) -> &[f64] {
        &self.values
    }
}

/// `∫_0^s r log r dr`.
fn g_prim(s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        0.5 * s * s * s.ln() - 0.25 * s * s
    }
}

/// `∫_0^s r³ log r dr`.
fn h_prim(s: f64) -> f64 {
    if s == 0.0 {
        0.0
    } else {
        let s4 = s * s * s * s;
        0.25 * s4 * s.ln() - s4 / 16.0
    }
}

/// `∫_a^b r log r dr`, arranged to avoid cancellation at large radii.
fn g_diff(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        return g_prim(b);
    }
    let d2 = (b - a) * (b + a);
    0.5 * (d2 * b.ln() + a * a * ((b - a) / a).ln_1p()) - 0.25 * d2
}

/// Potential `h_μ` of a grid measure, precomputed for O(1) evaluation per cell.
#[derive(Debug, Clone)]
pub struct NewtonPotential {
    edges: Vec<f64>,
    areas: Vec<f64>,
    c: Vec<f64>,
    /// Mass in cells `< j`.
    inner: Vec<f64>,
    /// `∫ log|y| dμ` over cells `>= j`.
    tail: Vec<f64>,
    r_max: f64,
}

impl NewtonPotential {
    pub fn new(mu: &impl RadialMeasure) -> Self {
        let grid = mu.grid();
        Self::from_values(grid, mu.values())
    }

    pub fn from_values(grid: &RadialGrid, c: &[f64]) -> Self {
        let n = grid.n_bins();
        let edges = grid.edges().to_vec();
        let mut inner = vec![0.0; n + 1];
        for j in 0..n {
            inner[j + 1] = inner[j] + c[j] * grid.areas()[j];
        }
        let mut tail = vec![0.0; n + 1];
        for j in (0..n).rev() {
            tail[j] = tail[j + 1] + c[j] * 2.0 * PI * g_diff(edges[j], edges[j + 1]);
        }
        NewtonPotential {
            edges,
            areas: grid.areas().to_vec(),
            c: c.to_vec(),
            inner,
            tail,
            r_max: grid.r_max(),
        }
    }

    pub fn total_mass(&self) -> f64 {
        *self.inner.last().unwrap()
    }

    fn in_cell(&self, j: usize, r: f64) -> f64 {
        let (a, b, c) = (self.edges[j], self.edges[j + 1], self.c[j]);
        let outer = self.tail[j + 1] + 2.0 * PI * c * g_diff(r, b);
        if r == 0.0 {
            return -outer;
        }
        let inside = self.inner[j] + c * PI * (r - a) * (r + a);
        -r.ln() * inside - outer
    }

    /// `h_μ(r)`; beyond the grid this is the point-charge tail `−M log r`.
    pub fn at(&self, r: f64) -> f64 {
        if r >= self.r_max {
            return -self.total_mass() * r.ln();
        }
        let j = self.edges.partition_point(|&e| e <= r).saturating_sub(1);
        self.in_cell(j.min(self.c.len() - 1), r)
    }

    /// `∫_{cell j} h_μ 2πr dr`.
    pub fn cell_integral(&self, j: usize) -> f64 {
        let (a, b, c) = (self.edges[j], self.edges[j + 1], self.c[j]);
        if a < 4.0 * (b - a) {
            let i1 = -2.0 * PI * (g_prim(b) - g_prim(a));
            let hd = h_prim(b) - h_prim(a);
            let i2 = -2.0 * PI * hd;
            let i4 = 2.0 * PI * (0.5 * hd - (b.powi(4) - a.powi(4)) / 16.0);
            (self.inner[j] - c * PI * a * a) * i1 + c * PI * i2
                - (self.tail[j + 1] + 2.0 * PI * c * g_prim(b)) * self.areas[j]
                + 2.0 * PI * c * i4
        } else {
            let (x, w) = gl6();
            let h = 0.5 * (b - a);
            let mid = 0.5 * (b + a);
            x.iter()
                .zip(w.iter())
                .map(|(t, wt)| {
                    let r = mid + h * t;
                    wt * h * 2.0 * PI * r * self.in_cell(j, r)
                })
                .sum()
        }
    }

    /// Cell averages of `h_μ`.
    pub fn cell_averages(&self) -> Vec<f64> {
        (0..self.c.len())
            .map(|j| self.cell_integral(j) / self.areas[j])
            .collect()
    }

    /// Average of `h_μ` over the disc `B(x, l)` for a point at distance `x` from the origin.
    pub fn disc_average(&self, x: f64, l: f64) -> f64 {
        disc_average_of(|r| self.at(r), x, l)
    }
}

fn gl6() -> ([f64; 6], [f64; 6]) {
    (
        [
            -0.932_469_514_203_152,
            -0.661_209_386_466_264_5,
            -0.238_619_186_083_196_9,
            0.238_619_186_083_196_9,
            0.661_209_386_466_264_5,
            0.932_469_514_203_152,
        ],
        [
            0.171_324_492_379_170_35,
            0.360_761_573_048_138_6,
            0.467_913_934_572_691,
            0.467_913_934_572_691,
            0.360_761_573_048_138_6,
            0.171_324_492_379_170_35,
        ],
    )
}

/// Average of a radial function `f(|y|)` over the disc of radius `l` centred at distance `x`.
pub fn disc_average_of(f: impl Fn(f64) -> f64, x: f64, l: f64) -> f64 {
    const NT: usize = 24;
    const NPHI: usize = 64;
    let (t, w) = gauss_legendre(NT);
    let mut s = 0.0;
    for (ti, wi) in t.iter().zip(&w) {
        let rho = 0.5 * l * (ti + 1.0);
        let mut ring = 0.0;
        for p in 0..NPHI {
            let phi = 2.0 * PI * (p as f64 + 0.5) / NPHI as f64;
            let r2 = x * x + rho * rho + 2.0 * x * rho * phi.cos();
            ring += f(r2.max(0.0).sqrt());
        }
        s += wi * 0.5 * l * rho * ring * 2.0 * PI / NPHI as f64;
    }
    s / (PI * l * l)
}

/// `h_μ(r)`, see [`NewtonPotential`].
pub fn newton_potential(mu: &impl RadialMeasure, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("radius must be >= 0, got {r}")));
    }
    Ok(NewtonPotential::new(mu).at(r))
}

/// `D(μ, ν) = ∫ h_ν dμ`.
pub fn coulomb_energy(mu: &impl RadialMeasure, nu: &impl RadialMeasure) -> Result<f64> {
    mu.grid().check_same(nu.grid())?;
    let pot = NewtonPotential::new(nu);
    Ok(mu
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, v)| v * pot.cell_integral(j))
        .sum())
}

/// `∫ μ log(μ/ν)` for unit-mass densities.
pub fn relative_entropy(mu: &RadialDensity, nu: &RadialDensity) -> Result<f64> {
    mu.grid().check_same(nu.grid())?;
    for d in [mu, nu] {
        if (d.total_mass() - 1.0).abs() > MASS_TOL {
            return Err(Error::Mass {
                declared: 1.0,
                found: d.total_mass(),
            });
        }
    }
    let mut s = 0.0;
    for ((&a, &b), (&area, &r)) in mu
        .values()
        .iter()
        .zip(nu.values())
        .zip(mu.grid().areas().iter().zip(mu.grid().nodes()))
    {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return Err(Error::SingularSupport(r));
        }
        s += area * a * (a / b).ln();
    }
    Ok(s)
}

/// `∫|μ|`.
pub fn total_variation(mu: &impl RadialMeasure) -> f64 {
    mu.values()
        .iter()
        .zip(mu.grid().areas())
        .map(|(v, a)| v.abs() * a)
        .sum()
}

/// `D(ρ, δ_x − μ_x)` where `μ_x` is the uniform unit charge on `B(x, l)` and
/// `x` is a point at distance `x` from the origin.
pub fn smeared_charge_correction(rho: &RadialDensity, l: f64, x: f64) -> Result<f64> {
    if !(l > 0.0) {
        return Err(Error::Domain(format!("smearing radius must be > 0, got {l}")));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("center radius must be >= 0, got {x}")));
    }
    let Some((lo, hi)) = rho.support() else {
        return Ok(0.0);
    };
    // h_ρ is harmonic off the support: mean-value property.
    if x - l >= hi || x + l <= lo {
        return Ok(0.0);
    }
    let pot = NewtonPotential::new(rho);
    Ok(pot.at(x) - pot.disc_average(x, l))
}

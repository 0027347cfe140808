//! Metropolis sampling of the Coulomb-gas Gibbs measure `exp(−H_N/T)`,
//! batch-means estimators, the Onsager fluctuation diagnostic and a
//! tensor-quadrature free energy for `N ≤ 3`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meanfield::{electrostatic_profile, potential_w, thermal_profile};
use crate::params::ModelParams;
use crate::quadrature::gauss_laguerre;
use crate::radial_measures::{disc_average_of, NewtonPotential, RadialDensity, RadialGrid, RadialMeasure};

pub type Point = [f64; 2];

/// Number of batches for batch-means error bars.
pub const N_BATCHES: usize = 32;
/// Accepted moves between full recomputations of the cached energy.
pub const REFRESH_INTERVAL: usize = 1000;
/// Allowed drift of the cached energy at a refresh, relative to `max(1, |H_N|)`.
pub const CACHE_TOL: f64 = 1e-8;
/// Proposals closer than this to another particle (or the origin for m > 0) are rejected.
pub const COINCIDENCE: f64 = 1e-12;
/// Bins with fewer counts are flagged as under-sampled.
pub const MIN_BIN_COUNT: u64 = 16;

const CHECKPOINT_MAGIC: &[u8; 4] = b"QHPC";
const CHECKPOINT_VERSION: u32 = 1;

/// `H_N = Σ W_m(z_j) − (2/N) Σ_{i≠j} log|z_i − z_j|`; `+∞` on coincident points.
pub fn hamiltonian(params: &ModelParams, positions: &[Point]) -> f64 {
    let n = positions.len();
    let mut h: f64 = positions.iter().map(|z| potential_w(params, z[0].hypot(z[1]))).sum();
    let mut pair = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let d2 = dist2(positions[i], positions[j]);
            if d2 == 0.0 {
                return f64::INFINITY;
            }
            pair += 0.5 * d2.ln();
        }
    }
    h -= 4.0 / params.nf() * pair;
    h
}

/// `H_N(z with z_i → new) − H_N(z)`.
pub fn move_delta(params: &ModelParams, positions: &[Point], i: usize, new: Point) -> f64 {
    let old = positions[i];
    let mut s = 0.0;
    for (j, z) in positions.iter().enumerate() {
        if j != i {
            s += 0.5 * (dist2(new, *z).ln() - dist2(old, *z).ln());
        }
    }
    potential_w(params, new[0].hypot(new[1])) - potential_w(params, old[0].hypot(old[1]))
        - 4.0 / params.nf() * s
}

fn dist2(a: Point, b: Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}

/// Particle positions together with the cached value of `H_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlasmaConfiguration {
    pub positions: Vec<Point>,
    pub cached_energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Initial proposal standard deviation; `<= 0` picks `√T`.
    pub step_size: f64,
    pub n_burnin: usize,
    pub n_samples: usize,
    pub thinning: usize,
    pub seed: u64,
    pub target_acceptance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            step_size: 0.0,
            n_burnin: 1000,
            n_samples: 10_000,
            thinning: 1,
            seed: 1,
            target_acceptance: 0.35,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::InvalidParams("target_acceptance must be in (0, 1)".into()));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidParams("thinning must be >= 1".into()));
        }
        if !self.step_size.is_finite() {
            return Err(Error::InvalidParams("step_size must be finite".into()));
        }
        Ok(())
    }

    fn n_records(&self) -> usize {
        self.n_samples / self.thinning
    }
}

/// One Metropolis chain: positions, pair-log cache, proposal scale and RNG.
#[derive(Debug, Clone)]
pub struct Chain {
    params: ModelParams,
    pos: Vec<Point>,
    logs: Vec<f64>,
    energy: f64,
    step: f64,
    rng: ChaCha8Rng,
    since_refresh: usize,
    max_drift: f64,
    proposals: u64,
    accepted: u64,
    sweeps: u64,
    scratch: Vec<f64>,
}

impl Chain {
    /// Chain started from i.i.d. draws of `ρ^el` (or `ρ^th` when `m > N²`).
    pub fn new(params: &ModelParams, sampler: &SamplerConfig) -> Result<Self> {
        params.validate()?;
        sampler.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
        let n = params.n;
        let mut pos = Vec::with_capacity(n);
        let (r_in, r_out) = params.electrostatic_radii();
        let gamma = Gamma::new(params.vortex_charge() / params.temperature + 1.0, 1.0)
            .map_err(|e| Error::InvalidParams(e.to_string()))?;
        while pos.len() < n {
            let r = if params.is_thermal() {
                (params.temperature * rng.sample(gamma)).sqrt()
            } else {
                let u: f64 = rng.random();
                (r_in * r_in + u * (r_out * r_out - r_in * r_in)).sqrt()
            };
            let th: f64 = 2.0 * PI * rng.random::<f64>();
            let z = [r * th.cos(), r * th.sin()];
            if admissible(params, &pos, z, usize::MAX) {
                pos.push(z);
            }
        }
        let step = if sampler.step_size > 0.0 {
            sampler.step_size
        } else {
            params.temperature.sqrt()
        };
        Self::assemble(params, pos, step, rng)
    }

    /// Chain started from given positions.
    pub fn from_positions(params: &ModelParams, positions: Vec<Point>, step: f64, seed: u64) -> Result<Self> {
        params.validate()?;
        if positions.len() != params.n {
            return Err(Error::Dimension(format!(
                "{} positions for N = {}",
                positions.len(),
                params.n
            )));
        }
        Self::assemble(params, positions, step, ChaCha8Rng::seed_from_u64(seed))
    }

    fn assemble(params: &ModelParams, pos: Vec<Point>, step: f64, rng: ChaCha8Rng) -> Result<Self> {
        let n = pos.len();
        let energy = hamiltonian(params, &pos);
        if !energy.is_finite() {
            return Err(Error::Domain("initial configuration has infinite energy".into()));
        }
        let mut logs = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    logs[i * n + j] = 0.5 * dist2(pos[i], pos[j]).ln();
                }
            }
        }
        Ok(Chain {
            params: *params,
            pos,
            logs,
            energy,
            step,
            rng,
            since_refresh: 0,
            max_drift: 0.0,
            proposals: 0,
            accepted: 0,
            sweeps: 0,
            scratch: vec![0.0; n],
        })
    }

    pub fn positions(&self) -> &[Point] {
        &self.pos
    }

    pub fn configuration(&self) -> PlasmaConfiguration {
        PlasmaConfiguration {
            positions: self.pos.clone(),
            cached_energy: self.energy,
        }
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    /// Largest cache drift seen at a refresh.
    pub fn max_cache_drift(&self) -> f64 {
        self.max_drift
    }

    /// Acceptance fraction over all proposals so far.
    pub fn acceptance(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }

    /// N single-particle Gaussian proposals; returns the number accepted.
    pub fn sweep(&mut self) -> Result<usize> {
        let n = self.pos.len();
        let inv_t = 1.0 / self.params.temperature;
        let coupling = 4.0 / self.params.nf();
        let mut acc = 0;
        for i in 0..n {
            let gx: f64 = self.rng.sample(StandardNormal);
            let gy: f64 = self.rng.sample(StandardNormal);
            let u: f64 = self.rng.random();
            self.proposals += 1;
            let old = self.pos[i];
            let new = [old[0] + self.step * gx, old[1] + self.step * gy];
            if !admissible(&self.params, &self.pos, new, i) {
                continue;
            }
            let mut s = 0.0;
            for j in 0..n {
                if j != i {
                    let l = 0.5 * dist2(new, self.pos[j]).ln();
                    self.scratch[j] = l;
                    s += l - self.logs[i * n + j];
                }
            }
            let dh = potential_w(&self.params, new[0].hypot(new[1]))
                - potential_w(&self.params, old[0].hypot(old[1]))
                - coupling * s;
            if dh <= 0.0 || u < (-dh * inv_t).exp() {
                self.pos[i] = new;
                for j in 0..n {
                    if j != i {
                        self.logs[i * n + j] = self.scratch[j];
                        self.logs[j * n + i] = self.scratch[j];
                    }
                }
                self.energy += dh;
                self.accepted += 1;
                acc += 1;
                self.since_refresh += 1;
                if self.since_refresh >= REFRESH_INTERVAL {
                    self.refresh()?;
                }
            }
        }
        self.sweeps += 1;
        Ok(acc)
    }

    fn refresh(&mut self) -> Result<()> {
        let full = hamiltonian(&self.params, &self.pos);
        let drift = (full - self.energy).abs();
        self.max_drift = self.max_drift.max(drift);
        self.since_refresh = 0;
        self.energy = full;
        if drift > CACHE_TOL * full.abs().max(1.0) {
            return Err(Error::Integrity(format!("energy cache drifted by {drift:e}")));
        }
        Ok(())
    }

    /// Burn-in sweeps, adapting the step size towards `target` acceptance.
    /// The step is frozen afterwards.
    pub fn burn_in(&mut self, sweeps: usize, target: f64) -> Result<()> {
        const BLOCK: usize = 20;
        let n = self.pos.len();
        let mut done = 0;
        while done < sweeps {
            let len = BLOCK.min(sweeps - done);
            let mut acc = 0;
            for _ in 0..len {
                acc += self.sweep()?;
            }
            done += len;
            let rate = acc as f64 / (len * n) as f64;
            let factor = ((rate + 0.01) / (target + 0.01)).clamp(0.5, 2.0);
            self.step *= factor;
        }
        self.proposals = 0;
        self.accepted = 0;
        Ok(())
    }

    /// Versioned binary checkpoint of the chain state.
    pub fn checkpoint(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(96 + 16 * self.pos.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.params.n as u64).to_le_bytes());
        out.extend_from_slice(&self.params.m.to_le_bytes());
        out.extend_from_slice(&self.params.temperature.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.sweeps.to_le_bytes());
        out.extend_from_slice(&self.rng.get_seed());
        out.extend_from_slice(&self.rng.get_stream().to_le_bytes());
        out.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        for z in &self.pos {
            out.extend_from_slice(&z[0].to_le_bytes());
            out.extend_from_slice(&z[1].to_le_bytes());
        }
        out
    }

    /// Restores a chain written by [`Chain::checkpoint`]; `params` must match.
    pub fn restore(params: &ModelParams, bytes: &[u8]) -> Result<Self> {
        let mut rd = Reader { b: bytes, at: 0 };
        if rd.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Parse("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(rd.take(4)?.try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("unsupported checkpoint version {version}")));
        }
        let n = rd.u64()? as usize;
        let m = rd.u64()?;
        let t = rd.f64()?;
        if n != params.n || m != params.m || t != params.temperature {
            return Err(Error::InvalidParams(format!(
                "checkpoint is for N={n}, m={m}, T={t}"
            )));
        }
        let step = rd.f64()?;
        let sweeps = rd.u64()?;
        let seed: [u8; 32] = rd.take(32)?.try_into().unwrap();
        let stream = rd.u64()?;
        let word_pos = u128::from_le_bytes(rd.take(16)?.try_into().unwrap());
        let mut pos = Vec::with_capacity(n);
        for _ in 0..n {
            pos.push([rd.f64()?, rd.f64()?]);
        }
        if rd.at != bytes.len() {
            return Err(Error::Parse("trailing bytes in checkpoint".into()));
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(stream);
        rng.set_word_pos(word_pos);
        let mut chain = Self::assemble(params, pos, step, rng)?;
        chain.sweeps = sweeps;
        Ok(chain)
    }
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, k: usize) -> Result<&'a [u8]> {
        let s = self
            .b
            .get(self.at..self.at + k)
            .ok_or_else(|| Error::Parse("truncated checkpoint".into()))?;
        self.at += k;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn admissible(params: &ModelParams, pos: &[Point], z: Point, skip: usize) -> bool {
    if !z[0].is_finite() || !z[1].is_finite() {
        return false;
    }
    if params.m > 0 && z[0].hypot(z[1]) < COINCIDENCE {
        return false;
    }
    let c2 = COINCIDENCE * COINCIDENCE;
    pos.iter()
        .enumerate()
        .all(|(j, w)| j == skip || dist2(z, *w) >= c2)
}

/// One sweep of `chain`; see [`Chain::sweep`].
pub fn metropolis_sweep(chain: &mut Chain) -> Result<usize> {
    chain.sweep()
}

/// Summary of a finished chain.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChainRun {
    pub acceptance: f64,
    pub step_size: f64,
    pub max_cache_drift: f64,
    pub n_records: usize,
    pub sweeps: u64,
}

/// Burns in, then samples `n_samples` sweeps and calls `record(batch, positions)`
/// every `thinning` sweeps. Batches split the records into [`N_BATCHES`] blocks.
pub fn run_chain(
    params: &ModelParams,
    sampler: &SamplerConfig,
    record: impl FnMut(usize, &[Point]),
) -> Result<(Chain, ChainRun)> {
    let mut chain = Chain::new(params, sampler)?;
    chain.burn_in(sampler.n_burnin, sampler.target_acceptance)?;
    let run = continue_chain(&mut chain, sampler, record)?;
    Ok((chain, run))
}

/// Samples from an existing (already equilibrated) chain.
pub fn continue_chain(
    chain: &mut Chain,
    sampler: &SamplerConfig,
    mut record: impl FnMut(usize, &[Point]),
) -> Result<ChainRun> {
    sampler.validate()?;
    let n_rec = sampler.n_records();
    if n_rec == 0 {
        return Err(Error::InvalidParams("n_samples / thinning must be >= 1".into()));
    }
    let batches = N_BATCHES.min(n_rec);
    let mut k = 0;
    for s in 1..=n_rec * sampler.thinning {
        chain.sweep()?;
        if s % sampler.thinning == 0 {
            record(k * batches / n_rec, &chain.pos);
            k += 1;
        }
    }
    Ok(ChainRun {
        acceptance: chain.acceptance(),
        step_size: chain.step,
        max_cache_drift: chain.max_drift,
        n_records: n_rec,
        sweeps: chain.sweeps,
    })
}

/// Mean and batch-means standard error of a scalar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalarEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub batch_means: Vec<f64>,
}

impl ScalarEstimate {
    pub fn from_batches(sums: &[f64], counts: &[u64]) -> Self {
        let means: Vec<f64> = sums
            .iter()
            .zip(counts)
            .filter(|(_, c)| **c > 0)
            .map(|(s, c)| s / *c as f64)
            .collect();
        let total: u64 = counts.iter().sum();
        let mean = sums.iter().sum::<f64>() / total.max(1) as f64;
        let b = means.len() as f64;
        let stderr = if means.len() > 1 {
            let mb = means.iter().sum::<f64>() / b;
            (means.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / (b - 1.0) / b).sqrt()
        } else {
            0.0
        };
        ScalarEstimate {
            mean,
            stderr,
            batch_means: means,
        }
    }
}

/// Per-batch tallies of a radial histogram.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct Batch {
    counts: Vec<u64>,
    overflow: u64,
}

/// Binned one-particle density with batch-means error bars.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub grid: RadialGrid,
    pub counts: Vec<u64>,
    pub density: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Samples beyond the grid.
    pub overflow: u64,
    pub total: u64,
    pub undersampled: Vec<bool>,
    batches: Vec<Batch>,
}

impl DensityEstimate {
    fn from_batches(grid: RadialGrid, mut batches: Vec<Batch>) -> Self {
        batches.sort();
        let nb = grid.n_bins();
        let mut counts = vec![0u64; nb];
        let mut overflow = 0;
        for b in &batches {
            for (c, x) in counts.iter_mut().zip(&b.counts) {
                *c += x;
            }
            overflow += b.overflow;
        }
        let total = counts.iter().sum::<u64>() + overflow;
        let areas = grid.areas();
        let density: Vec<f64> = counts
            .iter()
            .zip(areas)
            .map(|(c, a)| *c as f64 / (total.max(1) as f64 * a))
            .collect();
        let used: Vec<&Batch> = batches
            .iter()
            .filter(|b| b.counts.iter().sum::<u64>() + b.overflow > 0)
            .collect();
        let k = used.len() as f64;
        let stderr = (0..nb)
            .map(|i| {
                if used.len() < 2 {
                    return 0.0;
                }
                let d: Vec<f64> = used
                    .iter()
                    .map(|b| {
                        let tot = b.counts.iter().sum::<u64>() + b.overflow;
                        b.counts[i] as f64 / (tot as f64 * areas[i])
                    })
                    .collect();
                let m = d.iter().sum::<f64>() / k;
                (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
            })
            .collect();
        let undersampled = counts.iter().map(|c| *c < MIN_BIN_COUNT).collect();
        DensityEstimate {
            grid,
            counts,
            density,
            stderr,
            overflow,
            total,
            undersampled,
            batches,
        }
    }

    /// Pools two estimates on the same grid. Associative and order independent.
    pub fn merge(&self, other: &DensityEstimate) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::Dimension("density estimates on different grids".into()));
        }
        let mut b = self.batches.clone();
        b.extend(other.batches.iter().cloned());
        Ok(Self::from_batches(self.grid.clone(), b))
    }

    /// Mass captured on the grid, `1 − overflow/total`.
    pub fn mass(&self) -> f64 {
        self.density.iter().zip(self.grid.areas()).map(|(d, a)| d * a).sum()
    }

    pub fn n_batches(&self) -> usize {
        self.batches.len()
    }

    /// The estimate as a unit-mass density (explicitly renormalized for overflow).
    pub fn to_density(&self) -> Result<RadialDensity> {
        RadialDensity::normalized(self.grid.clone(), self.density.clone())
    }
}

/// Histogram recorder usable as the `record` callback of [`run_chain`].
pub struct DensityRecorder {
    grid: RadialGrid,
    batches: Vec<Batch>,
}

impl DensityRecorder {
    pub fn new(grid: RadialGrid) -> Self {
        let nb = grid.n_bins();
        DensityRecorder {
            grid,
            batches: vec![
                Batch {
                    counts: vec![0; nb],
                    overflow: 0
                };
                N_BATCHES
            ],
        }
    }

    pub fn record(&mut self, batch: usize, positions: &[Point]) {
        let b = &mut self.batches[batch];
        for z in positions {
            match self.grid.cell_of(z[0].hypot(z[1])) {
                Some(i) => b.counts[i] += 1,
                None => b.overflow += 1,
            }
        }
    }

    pub fn finish(self) -> DensityEstimate {
        DensityEstimate::from_batches(self.grid, self.batches)
    }
}

/// Scalar accumulator per batch.
#[derive(Debug, Clone)]
pub struct ScalarRecorder {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl Default for ScalarRecorder {
    fn default() -> Self {
        ScalarRecorder {
            sums: vec![0.0; N_BATCHES],
            counts: vec![0; N_BATCHES],
        }
    }
}

impl ScalarRecorder {
    pub fn push(&mut self, batch: usize, x: f64) {
        self.sums[batch] += x;
        self.counts[batch] += 1;
    }

    pub fn finish(&self) -> ScalarEstimate {
        ScalarEstimate::from_batches(&self.sums, &self.counts)
    }
}

/// Binned `μ_N^{(1)}` on `grid` from one chain.
pub fn estimate_density(
    params: &ModelParams,
    sampler: &SamplerConfig,
    grid: &RadialGrid,
) -> Result<(DensityEstimate, ChainRun)> {
    let mut rec = DensityRecorder::new(grid.clone());
    let (_, run) = run_chain(params, sampler, |b, z| rec.record(b, z))?;
    Ok((rec.finish(), run))
}

/// Outcome of a one-body test-function check.
#[derive(Debug, Clone, Serialize)]
pub struct PairTestReport {
    pub mc: ScalarEstimate,
    /// `∫ V ρ` with `ρ = ρ^el` (or `ρ^th` in the thermal regime).
    pub reference: f64,
    pub difference: f64,
    /// `N^{-1/2} log N ‖∇V‖_∞` over the sampled support.
    pub rate: f64,
    /// `|difference| / rate`, the empirical constant.
    pub calibrated_constant: f64,
    pub run: ChainRun,
}

/// MC estimate of `∫ V μ_N^{(1)}` against the mean-field prediction.
pub fn pair_test_function(
    params: &ModelParams,
    sampler: &SamplerConfig,
    v: impl Fn(f64) -> f64,
) -> Result<PairTestReport> {
    let rho = if params.is_thermal() {
        thermal_profile(params)?
    } else {
        electrostatic_profile(params)?
    };
    let grid = rho.grid().clone();
    let mut grad: f64 = 0.0;
    for w in grid.nodes().windows(2) {
        let (a, b) = (v(w[0]), v(w[1]));
        if !a.is_finite() || !b.is_finite() {
            return Err(Error::Domain(format!("test function not finite near r = {}", w[0])));
        }
        grad = grad.max(((b - a) / (w[1] - w[0])).abs());
    }
    let reference = rho.integrate(&v);
    let mut rec = ScalarRecorder::default();
    let mut out_of_grid = false;
    let (_, run) = run_chain(params, sampler, |b, z| {
        let mut s = 0.0;
        for p in z {
            let r = p[0].hypot(p[1]);
            out_of_grid |= r > grid.r_max();
            s += v(r);
        }
        rec.push(b, s / z.len() as f64);
    })?;
    if out_of_grid && !v(grid.r_max() * 2.0).is_finite() {
        return Err(Error::Domain("test function not finite on the sampled support".into()));
    }
    let mc = rec.finish();
    let difference = mc.mean - reference;
    let n = params.nf();
    let rate = n.powf(-0.5) * n.ln().max(1.0) * grad;
    Ok(PairTestReport {
        calibrated_constant: if rate > 0.0 { difference.abs() / rate } else { 0.0 },
        mc,
        reference,
        difference,
        rate,
        run,
    })
}

/// Mutual Coulomb energy of two uniform unit discs of radius `l` at distance `d`.
pub fn disc_pair_energy(l: f64, d: f64) -> f64 {
    if d >= 2.0 * l {
        return -d.ln();
    }
    disc_average_of(
        |s| {
            if s < l {
                -l.ln() + 0.5 * (1.0 - s * s / (l * l))
            } else {
                -s.ln()
            }
        },
        d,
        l,
    )
}

/// `D(Nρ − Σ μ_{x_i}, Nρ − Σ μ_{x_i})` for one configuration, with `μ_x`
/// the uniform unit charge on `B(x, l)`.
pub fn onsager_functional(rho_pot: &NewtonPotential, rho_self: f64, positions: &[Point], l: f64) -> f64 {
    let n = positions.len() as f64;
    let mut cross = 0.0;
    for z in positions {
        cross += rho_pot.disc_average(z[0].hypot(z[1]), l);
    }
    let mut pairs = 0.0;
    for (i, a) in positions.iter().enumerate() {
        for b in &positions[i + 1..] {
            pairs += disc_pair_energy(l, dist2(*a, *b).sqrt());
        }
    }
    let selfs = n * (0.25 - l.ln());
    n * n * rho_self - 2.0 * n * cross + 2.0 * pairs + selfs
}

/// MC estimate of `E[D(Nρ − Σμ_{x_i}, ·)]` with smearing radius `l`.
pub fn onsager_fluctuation(
    params: &ModelParams,
    sampler: &SamplerConfig,
    rho: &RadialDensity,
    l: f64,
) -> Result<(ScalarEstimate, ChainRun)> {
    if !(l > 0.0) {
        return Err(Error::Domain(format!("smearing radius must be > 0, got {l}")));
    }
    let pot = NewtonPotential::new(rho);
    let rho_self = crate::radial_measures::coulomb_energy(rho, rho)?;
    let mut rec = ScalarRecorder::default();
    let (_, run) = run_chain(params, sampler, |b, z| {
        rec.push(b, onsager_functional(&pot, rho_self, z, l));
    })?;
    Ok((rec.finish(), run))
}

/// `F_N = −T log Z_N` by tensor quadrature, for `N ≤ 3` at `T = 1/N`.
///
/// With `u = N r²` each particle carries the weight `u^m e^{−u}` and the
/// remaining integrand is a polynomial in `u` and a trigonometric polynomial
/// in the angles, so generalized Gauss–Laguerre in `u` and the trapezoid rule
/// in the angles are exact once enough nodes are used.
pub fn free_energy_quadrature(params: &ModelParams) -> Result<f64> {
    params.validate()?;
    let n = params.n;
    if n > 3 {
        return Err(Error::Unsupported(format!("free-energy quadrature needs N <= 3, got {n}")));
    }
    if !params.is_default_temperature() {
        return Err(Error::Unsupported("free-energy quadrature needs T = 1/N".into()));
    }
    let nf = n as f64;
    let m = params.m as f64;
    let (u, lw) = gauss_laguerre(2 * n + 2, m);
    let n_theta = 4 * n + 4;
    let r: Vec<f64> = u.iter().map(|u| (u / nf).sqrt()).collect();
    let lw_max = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = lw.iter().map(|l| (l - lw_max).exp()).collect();
    let angles: Vec<(f64, f64)> = (0..n_theta)
        .map(|k| {
            let t = 2.0 * PI * k as f64 / n_theta as f64;
            (t.cos(), t.sin())
        })
        .collect();

    let nu = u.len();
    let mut total = 0.0;
    let mut idx = vec![0usize; n];
    let mut ang = vec![0usize; n];
    loop {
        let weight: f64 = idx.iter().map(|&i| w[i]).product();
        // angle of particle 0 fixed by rotation invariance
        loop {
            let pts: Vec<Point> = (0..n)
                .map(|j| {
                    let (c, s) = angles[ang[j]];
                    [r[idx[j]] * c, r[idx[j]] * s]
                })
                .collect();
            let mut f = 1.0;
            for i in 0..n {
                for j in i + 1..n {
                    let d2 = dist2(pts[i], pts[j]);
                    f *= d2 * d2;
                }
            }
            total += weight * f;
            if !advance(&mut ang[1..], n_theta) {
                break;
            }
        }
        if !advance(&mut idx, nu) {
            break;
        }
    }
    let angular = 2.0 * PI * (2.0 * PI / n_theta as f64).powi(n as i32 - 1);
    let log_z = total.ln() + angular.ln() + nf * lw_max - nf * (2.0 * nf).ln() - m * nf * nf.ln();
    Ok(-params.temperature * log_z)
}

fn advance(idx: &mut [usize], base: usize) -> bool {
    for d in idx.iter_mut() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

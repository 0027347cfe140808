//! Exact diagonalization of the lowest-Landau-level contact interaction
//! `I_N = Σ_{i<j} δ(z_i − z_j)` at fixed total angular momentum, in the
//! orthonormal bosonic Fock basis over the orbitals `f_ℓ = (π ℓ!)^{-1/2} z^ℓ`.

use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::quadrature::ln_factorial;

/// Eigenvalues below this count as zero.
pub const ZERO_THRESHOLD: f64 = 1e-10;
/// Eigenvalues in `[ZERO_THRESHOLD, QUARANTINE)` are neither zero nor gap.
pub const QUARANTINE: f64 = 1e-7;
/// Largest sector handled by the dense eigensolver.
pub const DENSE_LIMIT: usize = 2000;
/// Default cap on the sector dimension.
pub const DEFAULT_DIM_BUDGET: usize = 200_000;

/// Bosonic occupation state `|n_0, n_1, …⟩`, stored without trailing zeros.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct FockState {
    occupations: Vec<u16>,
}

impl FockState {
    pub fn from_occupations(mut occupations: Vec<u16>) -> Self {
        while occupations.last() == Some(&0) {
            occupations.pop();
        }
        FockState { occupations }
    }

    /// Occupations `n_0, n_1, …` up to the highest occupied orbital.
    pub fn occupations(&self) -> &[u16] {
        &self.occupations
    }

    pub fn occupation(&self, l: usize) -> u16 {
        self.occupations.get(l).copied().unwrap_or(0)
    }

    pub fn particles(&self) -> usize {
        self.occupations.iter().map(|&n| n as usize).sum()
    }

    pub fn momentum(&self) -> usize {
        self.occupations
            .iter()
            .enumerate()
            .map(|(l, &n)| l * n as usize)
            .sum()
    }

    /// Orbital indices with multiplicity, ascending.
    pub fn orbitals(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.particles());
        for (l, &n) in self.occupations.iter().enumerate() {
            out.extend(std::iter::repeat_n(l, n as usize));
        }
        out
    }
}

/// Number of partitions of `l` into at most `n` parts.
pub fn partition_count(l: usize, n: usize) -> u128 {
    // p(l, ≤n) = p(l, parts ≤ n): coin-change over part sizes 1..=n
    let mut p = vec![0u128; l + 1];
    p[0] = 1;
    for part in 1..=n.min(l.max(1)) {
        for s in part..=l {
            p[s] += p[s - part];
        }
    }
    p[l]
}

/// All Fock states with `n` bosons and total momentum `l`.
pub fn enumerate_basis(n: usize, l: usize) -> Vec<FockState> {
    let mut out = Vec::new();
    let mut parts = Vec::with_capacity(n);
    partitions(l, l, n, &mut parts, &mut |p| {
        let mut occ = vec![0u16; l + 1];
        occ[0] = (n - p.len()) as u16;
        for &x in p {
            occ[x] += 1;
        }
        out.push(FockState::from_occupations(occ));
    });
    out
}

fn partitions(rem: usize, max: usize, slots: usize, parts: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
    if rem == 0 {
        f(parts);
        return;
    }
    if slots == 0 {
        return;
    }
    for x in (1..=max.min(rem)).rev() {
        // the remaining slots must be able to hold what is left
        if x * slots < rem {
            break;
        }
        parts.push(x);
        partitions(rem - x, x, slots - 1, parts, f);
        parts.pop();
    }
}

/// `⟨f_a f_b | δ | f_c f_d⟩ = (2π)⁻¹ 2^{−L} L! / √(a! b! c! d!)` when `a + b = c + d = L`.
pub fn pair_matrix_element(a: u64, b: u64, c: u64, d: u64) -> f64 {
    if a + b != c + d {
        return 0.0;
    }
    let l = a + b;
    let ln = ln_factorial(l) - l as f64 * std::f64::consts::LN_2
        - 0.5 * (ln_factorial(a) + ln_factorial(b) + ln_factorial(c) + ln_factorial(d));
    ln.exp() / (2.0 * PI)
}

/// Real symmetric matrix stored by rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    dim: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSymmetric {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (yi, row) in y.iter_mut().zip(&self.rows) {
            *yi = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }

    /// Largest `|A_ij − A_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                let t = self.rows[j]
                    .iter()
                    .find(|(k, _)| *k == i)
                    .map_or(0.0, |(_, w)| *w);
                worst = worst.max((v - t).abs());
            }
        }
        worst
    }
}

/// Fock basis of one `(N, L)` sector with its index.
#[derive(Debug, Clone)]
pub struct Sector {
    pub n: usize,
    pub l: usize,
    pub basis: Vec<FockState>,
    index: HashMap<FockState, usize>,
}

impl Sector {
    pub fn new(n: usize, l: usize, budget: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParams("N must be >= 1".into()));
        }
        if n > u16::MAX as usize {
            return Err(Error::InvalidParams(format!("N = {n} too large")));
        }
        let dim = partition_count(l, n);
        if dim > budget as u128 {
            return Err(Error::Resource {
                dim: dim.min(usize::MAX as u128) as usize,
                budget,
            });
        }
        let basis = enumerate_basis(n, l);
        let index = basis.iter().cloned().enumerate().map(|(i, s)| (s, i)).collect();
        Ok(Sector { n, l, basis, index })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn index_of(&self, s: &FockState) -> Option<usize> {
        self.index.get(s).copied()
    }
}

/// `I_N = ½ Σ V_{abcd} a†_a a†_b a_d a_c` restricted to the sector.
pub fn build_interaction(n: usize, l: usize) -> Result<SparseSymmetric> {
    build_interaction_in(&Sector::new(n, l, DEFAULT_DIM_BUDGET)?)
}

pub fn build_interaction_in(sector: &Sector) -> Result<SparseSymmetric> {
    let l = sector.l;
    let mut rows = Vec::with_capacity(sector.dim());
    let mut occ = vec![0u16; l + 1];
    for state in &sector.basis {
        let mut acc: HashMap<usize, f64> = HashMap::new();
        let src = state.occupations();
        for c in 0..src.len() {
            for d in 0..src.len() {
                occ.iter_mut().for_each(|x| *x = 0);
                occ[..src.len()].copy_from_slice(src);
                if occ[c] == 0 {
                    continue;
                }
                let mut amp = (occ[c] as f64).sqrt();
                occ[c] -= 1;
                if occ[d] == 0 {
                    continue;
                }
                amp *= (occ[d] as f64).sqrt();
                occ[d] -= 1;
                let total = c + d;
                for a in 0..=total {
                    let b = total - a;
                    let mut o = occ.clone();
                    let mut amp2 = amp * ((o[b] + 1) as f64).sqrt();
                    o[b] += 1;
                    amp2 *= ((o[a] + 1) as f64).sqrt();
                    o[a] += 1;
                    let v = pair_matrix_element(a as u64, b as u64, c as u64, d as u64);
                    let j = sector
                        .index_of(&FockState::from_occupations(o))
                        .ok_or_else(|| Error::Integrity("interaction left the sector".into()))?;
                    *acc.entry(j).or_insert(0.0) += 0.5 * v * amp2;
                }
            }
        }
        let mut row: Vec<(usize, f64)> = acc.into_iter().filter(|(_, v)| *v != 0.0).collect();
        row.sort_by_key(|(j, _)| *j);
        rows.push(row);
    }
    let m = SparseSymmetric {
        dim: sector.dim(),
        rows,
    };
    Ok(m)
}

#[derive(Debug, Clone, Serialize)]
pub struct SectorSpectrum {
    pub n: usize,
    pub l: usize,
    pub basis_dim: usize,
    /// Ascending. Complete for dense sectors; the lowest part otherwise.
    pub interaction_eigenvalues: Vec<f64>,
    pub complete: bool,
    pub kernel_dim: usize,
    /// Smallest eigenvalue `≥ QUARANTINE`.
    pub gap: Option<f64>,
    /// Eigenvalues in `[ZERO_THRESHOLD, QUARANTINE)`, needing manual review.
    pub quarantined: Vec<f64>,
}

impl SectorSpectrum {
    /// Lowest interaction eigenvalue `I(L)`.
    pub fn ground_energy(&self) -> f64 {
        self.interaction_eigenvalues[0]
    }

    /// True when some eigenvalue fell in the quarantine band.
    pub fn ambiguous(&self) -> bool {
        !self.quarantined.is_empty()
    }

    fn classify(n: usize, l: usize, dim: usize, eigenvalues: Vec<f64>, complete: bool) -> Self {
        let kernel_dim = eigenvalues.iter().filter(|&&e| e < ZERO_THRESHOLD).count();
        let quarantined = eigenvalues
            .iter()
            .copied()
            .filter(|&e| (ZERO_THRESHOLD..QUARANTINE).contains(&e))
            .collect();
        let gap = eigenvalues.iter().copied().find(|&e| e >= QUARANTINE);
        SectorSpectrum {
            n,
            l,
            basis_dim: dim,
            interaction_eigenvalues: eigenvalues,
            complete,
            kernel_dim,
            gap,
            quarantined,
        }
    }
}

/// Spectrum of `I_N` at total momentum `L`.
pub fn sector_spectrum(n: usize, l: usize) -> Result<SectorSpectrum> {
    sector_spectrum_with_budget(n, l, DEFAULT_DIM_BUDGET)
}

pub fn sector_spectrum_with_budget(n: usize, l: usize, budget: usize) -> Result<SectorSpectrum> {
    let sector = Sector::new(n, l, budget)?;
    let h = build_interaction_in(&sector)?;
    let dim = h.dim();
    if dim <= DENSE_LIMIT {
        let mut ev: Vec<f64> = h.to_dense().symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        Ok(SectorSpectrum::classify(n, l, dim, ev, true))
    } else {
        let ev = lowest_until_gap(&h, l as u64)?;
        let complete = ev.len() == dim;
        Ok(SectorSpectrum::classify(n, l, dim, ev, complete))
    }
}

/// Lowest eigenvalues up to and including the first one above the quarantine
/// band, by restarted block Krylov iteration with Rayleigh–Ritz extraction.
///
/// A block of size `b` resolves eigenvalues of multiplicity up to `b`; when the
/// number of eigenvalues below the gap reaches `b` the block is doubled. Falls
/// back to the dense solver once the Krylov basis would not be much smaller
/// than the sector.
fn lowest_until_gap(h: &SparseSymmetric, seed: u64) -> Result<Vec<f64>> {
    const RESTARTS: usize = 40;
    const TOL: f64 = 1e-8;
    let dim = h.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed ^ seed);
    let mut b = 32;
    let mut history = Vec::new();
    loop {
        let cap = (8 * b).max(240);
        if 2 * cap >= dim {
            let mut ev: Vec<f64> = h.to_dense().symmetric_eigenvalues().iter().copied().collect();
            ev.sort_by(f64::total_cmp);
            return Ok(ev);
        }
        let mut block: Vec<Vec<f64>> = (0..b)
            .map(|_| (0..dim).map(|_| rng.random::<f64>() - 0.5).collect())
            .collect();
        let mut grow = false;
        for _ in 0..RESTARTS {
            let mut q: Vec<Vec<f64>> = Vec::with_capacity(cap);
            let mut aq: Vec<Vec<f64>> = Vec::with_capacity(cap);
            while q.len() < cap {
                let mut added: Vec<Vec<f64>> = Vec::new();
                for mut v in block {
                    for _ in 0..2 {
                        orthogonalize(&mut v, &q);
                        orthogonalize(&mut v, &added);
                    }
                    let nv = norm(&v);
                    if nv > 1e-8 {
                        v.iter_mut().for_each(|x| *x /= nv);
                        added.push(v);
                    }
                    if q.len() + added.len() >= cap {
                        break;
                    }
                }
                if added.is_empty() {
                    break;
                }
                let a_added: Vec<Vec<f64>> = added
                    .iter()
                    .map(|v| {
                        let mut w = vec![0.0; dim];
                        h.matvec(v, &mut w);
                        w
                    })
                    .collect();
                block = a_added.clone();
                q.extend(added);
                aq.extend(a_added);
            }
            let k = q.len();
            let mut proj = DMatrix::zeros(k, k);
            for i in 0..k {
                for j in i..k {
                    let v = 0.5 * (dot(&q[i], &aq[j]) + dot(&q[j], &aq[i]));
                    proj[(i, j)] = v;
                    proj[(j, i)] = v;
                }
            }
            let eig = SymmetricEigen::new(proj);
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
            let mut converged = Vec::new();
            let mut ritz = Vec::with_capacity(b);
            let mut worst: f64 = 0.0;
            let mut prefix = true;
            for &i in order.iter().take(b) {
                let theta = eig.eigenvalues[i];
                let y = eig.eigenvectors.column(i);
                let mut u = vec![0.0; dim];
                let mut au = vec![0.0; dim];
                for j in 0..k {
                    let c = y[j];
                    u.iter_mut().zip(&q[j]).for_each(|(a, x)| *a += c * x);
                    au.iter_mut().zip(&aq[j]).for_each(|(a, x)| *a += c * x);
                }
                let r = au
                    .iter()
                    .zip(&u)
                    .map(|(a, x)| (a - theta * x).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if prefix && r < TOL {
                    converged.push(theta);
                } else {
                    prefix = false;
                    worst = worst.max(r);
                }
                ritz.push(u);
            }
            history.push(worst);
            if let Some(pos) = converged.iter().position(|&v| v >= QUARANTINE) {
                if pos < b - 1 {
                    converged.truncate(pos + 1);
                    return Ok(converged);
                }
                grow = true;
                break;
            }
            if converged.len() >= b {
                grow = true;
                break;
            }
            block = ritz;
        }
        if !grow {
            return Err(Error::Convergence {
                iterations: history.len(),
                residual: history.last().copied().unwrap_or(f64::NAN),
                history,
            });
        }
        b *= 2;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    for q in against {
        let c = dot(v, q);
        v.iter_mut().zip(q).for_each(|(x, y)| *x -= c * y);
    }
}

/// `I(L)` for `L = 0..=l_max`.
pub fn yrast_curve(n: usize, l_max: usize) -> Result<Vec<f64>> {
    (0..=l_max)
        .map(|l| sector_spectrum(n, l).map(|s| s.ground_energy()))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GapSequence {
    pub n: usize,
    pub momenta: Vec<usize>,
    pub gaps: Vec<Option<f64>>,
    /// `gap(N(N−1) − N)` when that sector exists.
    pub reference_gap: Option<f64>,
    /// Whether `gap(L) = gap(N(N−1) − N)` (to 1e-9 relative) for every tested
    /// `L ≥ N(N−1) − N`; `None` if nothing was tested there.
    pub conjecture_holds: Option<bool>,
}

/// `gap(L)` over `momenta` and the status of the constant-gap conjecture.
pub fn gap_sequence(n: usize, momenta: impl IntoIterator<Item = usize>) -> Result<GapSequence> {
    let momenta: Vec<usize> = momenta.into_iter().collect();
    let gaps = momenta
        .iter()
        .map(|&l| sector_spectrum(n, l).map(|s| s.gap))
        .collect::<Result<Vec<_>>>()?;
    let l_ref = (n * n.saturating_sub(1)).checked_sub(n);
    let reference_gap = match l_ref {
        Some(l) => sector_spectrum(n, l)?.gap,
        None => None,
    };
    let conjecture_holds = match (l_ref, reference_gap) {
        (Some(lr), Some(g0)) => {
            let tested: Vec<f64> = momenta
                .iter()
                .zip(&gaps)
                .filter(|(l, _)| **l >= lr)
                .filter_map(|(_, g)| *g)
                .collect();
            if tested.is_empty() {
                None
            } else {
                Some(tested.iter().all(|g| (g - g0).abs() <= 1e-9 * g0.abs().max(1.0)))
            }
        }
        _ => None,
    };
    Ok(GapSequence {
        n,
        momenta,
        gaps,
        reference_gap,
        conjecture_holds,
    })
}

/// Normalized Laughlin state (the kernel of sector `N(N−1)`) in Fock coordinates.
pub fn laughlin_state(n: usize) -> Result<Vec<(FockState, f64)>> {
    let l = n * (n - 1);
    let sector = Sector::new(n, l, DENSE_LIMIT)?;
    let h = build_interaction_in(&sector)?;
    let eig = SymmetricEigen::new(h.to_dense());
    let (idx, val) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    if val.abs() >= ZERO_THRESHOLD {
        return Err(Error::Integrity(format!("lowest eigenvalue {val:e} in the Laughlin sector")));
    }
    let mut v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
    let imax = v.iamax();
    if v[imax] < 0.0 {
        v.neg_mut();
    }
    Ok(sector.basis.into_iter().zip(v.iter().copied()).collect())
}

/// Eigenvalue `(ω + 3k)ℓ + kℓ²` of the one-body operator on `f_ℓ`.
pub fn single_particle_energy(params: &ModelParams, l: u64) -> f64 {
    let l = l as f64;
    (params.omega + 3.0 * params.k) * l + params.k * l * l
}

/// Integer `ℓ ≥ 0` minimizing [`single_particle_energy`].
pub fn single_particle_minimizer(params: &ModelParams) -> Result<u64> {
    if params.k == 0.0 {
        return if params.omega + 3.0 * params.k >= 0.0 {
            Ok(0)
        } else {
            Err(Error::Unbounded)
        };
    }
    let x = -(params.omega + 3.0 * params.k) / (2.0 * params.k);
    if x <= 0.0 {
        return Ok(0);
    }
    let lo = x.floor() as u64;
    let best = [lo, lo + 1]
        .into_iter()
        .min_by(|a, b| single_particle_energy(params, *a).total_cmp(&single_particle_energy(params, *b)))
        .unwrap();
    Ok(best)
}

/// `min ⟨Σ_j h_j⟩` over the Fock basis of sector `L`: the one-body operator
/// is diagonal there, so this is the exact ground energy of `Σ h_j`.
pub fn min_single_particle_energy(params: &ModelParams, l: usize) -> Result<f64> {
    let n = params.n;
    let sector = Sector::new(n, l, DEFAULT_DIM_BUDGET)?;
    Ok(sector
        .basis
        .iter()
        .map(|s| {
            s.occupations()
                .iter()
                .enumerate()
                .map(|(o, &c)| c as f64 * single_particle_energy(params, o as u64))
                .sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegimeCase {
    /// `ω ≥ 0`
    Case1,
    /// `−2kN ≤ ω < 0`
    Case2,
    /// `ω < −2kN`, `|ω|/k ≤ N²`
    Case3,
    /// `ω < −2kN`, `|ω|/k > N²`
    Case4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentumRegime {
    pub case: RegimeCase,
    /// `−ωN/(2k)` for `ω < 0`, without the unspecified `O(1)`.
    pub l_qh: Option<f64>,
    /// Window for the ground-state momentum `L_0`.
    pub window: (f64, f64),
}

/// Regime classification and momentum window.
pub fn momentum_regime(params: &ModelParams) -> Result<MomentumRegime> {
    params.validate()?;
    let (w, k, n) = (params.omega, params.k, params.nf());
    if k == 0.0 && w < 0.0 {
        return Err(Error::Unbounded);
    }
    let l_qh = (w < 0.0).then(|| -w * n / (2.0 * k));
    let case = if w >= 0.0 {
        RegimeCase::Case1
    } else if w >= -2.0 * k * n {
        RegimeCase::Case2
    } else if -w / k <= n * n {
        RegimeCase::Case3
    } else {
        RegimeCase::Case4
    };
    let window = match (case, l_qh) {
        (RegimeCase::Case3, Some(lq)) => ((lq - 3f64.sqrt() * n * n).max(0.0), lq + 3f64.sqrt() * n * n),
        (RegimeCase::Case4, Some(lq)) => {
            let h = 3f64.sqrt() * lq.sqrt() * n;
            ((lq - h).max(0.0), lq + h)
        }
        _ => (0.0, 2.0 * n * n),
    };
    Ok(MomentumRegime { case, l_qh, window })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationGaps {
    /// `gap(2N²)`
    pub delta1: Option<f64>,
    /// `gap(L_qh + √3 N²)`, rounded to the nearest momentum.
    pub delta3: Option<f64>,
    /// `gap(L_qh + √3 L_qh^{1/2} N)`, rounded to the nearest momentum.
    pub delta4: Option<f64>,
    pub l1: usize,
    pub l3: Option<usize>,
    pub l4: Option<usize>,
}

/// The gap inputs of the strong-correlation criteria at small `N`.
/// `Δ₃`, `Δ₄` need `ω < 0` (so that `L_qh` exists).
pub fn correlation_gaps(params: &ModelParams) -> Result<CorrelationGaps> {
    let n = params.n;
    let regime = momentum_regime(params)?;
    let nf = params.nf();
    let l1 = 2 * n * n;
    let delta1 = sector_spectrum(n, l1)?.gap;
    let (mut l3, mut l4, mut delta3, mut delta4) = (None, None, None, None);
    if let Some(lq) = regime.l_qh {
        let a = (lq + 3f64.sqrt() * nf * nf).round() as usize;
        let b = (lq + 3f64.sqrt() * lq.sqrt() * nf).round() as usize;
        delta3 = sector_spectrum(n, a)?.gap;
        delta4 = sector_spectrum(n, b)?.gap;
        l3 = Some(a);
        l4 = Some(b);
    }
    Ok(CorrelationGaps {
        delta1,
        delta3,
        delta4,
        l1,
        l3,
        l4,
    })
}

use qhplasma::bargmann_ed::{laughlin_state, sector_spectrum, SectorSpectrum};
use qhplasma::meanfield::{
    electrostatic_profile_on, mf_minimize, mf_minimize_on, thermal_profile_on, SolverOptions,
};
use qhplasma::plasma_mc::{continue_chain, onsager_functional, DensityRecorder, ScalarRecorder};
use qhplasma::trial_energy::DensityRegime;
use qhplasma::{
    coulomb_energy, evaluate_trial_energy, functional_energies, optimal_vortex, phase_diagram,
    total_variation, Chain, DecayEnvelope, NewtonPotential, RadialGrid, RadialMeasure,
    SignedRadialMeasure,
};
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{num, opt, write_file, write_json, Artifacts, Table};
use crate::Failure;

/// Histogram bins for `sample` when none are configured.
const SAMPLE_BINS: usize = 100;
/// Configurations used for the in-run fluctuation estimate.
const FLUCTUATION_SAMPLES: usize = 500;

pub fn meanfield(cfg: &RunConfig) -> Result<Artifacts, Failure> {
    let p = &cfg.params;
    let grid = match cfg.r_max {
        Some(r) => RadialGrid::uniform(r, cfg.mf_bins())?,
        None => RadialGrid::for_params_with_bins(p, cfg.mf_bins())?,
    };
    let sol = mf_minimize_on(p, &grid, cfg.tol, SolverOptions::default())?;
    let el = electrostatic_profile_on(p, &grid)?;
    let th = thermal_profile_on(p, &grid)?;
    let env = DecayEnvelope::calibrate(p, &sol.density);
    let energies = functional_energies(p, &sol.density)?;
    let d_el = coulomb_energy(
        &SignedRadialMeasure::difference(&sol.density, &el)?,
        &SignedRadialMeasure::difference(&sol.density, &el)?,
    )?;
    let tv_th = total_variation(&SignedRadialMeasure::difference(&sol.density, &th)?);

    let mut t = Table::new("meanfield", &["r", "rho_mf", "rho_el", "rho_th", "envelope"]);
    for (i, r) in grid.nodes().iter().enumerate() {
        t.row(&[
            num(*r),
            num(sol.density.values()[i]),
            num(el.values()[i]),
            num(th.values()[i]),
            opt(env.value(*r)),
        ]);
    }
    let path = cfg.out_dir.join("meanfield.csv");
    t.write(&path)?;
    Ok(Artifacts {
        outputs: vec![path],
        diagnostics: json!({
            "solution": sol,
            "energies": energies,
            "coulomb_distance_to_electrostatic": d_el,
            "tv_distance_to_thermal": tv_th,
            "m_opt": optimal_vortex(p).ok(),
        }),
        constants: json!({ "envelope": env }),
    })
}

pub fn sample(cfg: &RunConfig, checkpoint: Option<&std::path::Path>, resume: Option<&std::path::Path>) -> Result<Artifacts, Failure> {
    let p = &cfg.params;
    let r_max = cfg.r_max.unwrap_or_else(|| RadialGrid::default_r_max(p));
    let grid = RadialGrid::uniform(r_max, cfg.n_bins.unwrap_or(SAMPLE_BINS))?;
    let mf = mf_minimize(p, 1e-10)?;
    let env = DecayEnvelope::calibrate(p, &mf.density);
    let pot = NewtonPotential::new(&mf.density);
    let rho_self = coulomb_energy(&mf.density, &mf.density)?;
    let l = p.nf().powf(-0.5);

    let mut chain = match resume {
        Some(path) => {
            let bytes = std::fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
            Chain::restore(p, &bytes)?
        }
        None => {
            let mut c = Chain::new(p, &cfg.sampler)?;
            c.burn_in(cfg.sampler.n_burnin, cfg.sampler.target_acceptance)?;
            c
        }
    };
    let n_records = cfg.sampler.n_samples / cfg.sampler.thinning;
    let stride = (n_records / FLUCTUATION_SAMPLES).max(1);
    let mut hist = DensityRecorder::new(grid.clone());
    let mut fluct = ScalarRecorder::default();
    let mut k = 0usize;
    let run = continue_chain(&mut chain, &cfg.sampler, |b, z| {
        hist.record(b, z);
        if k % stride == 0 {
            fluct.push(b, onsager_functional(&pot, rho_self, z, l));
        }
        k += 1;
    })?;
    let est = hist.finish();
    let fluct = fluct.finish();
    let el = electrostatic_profile_on(p, &grid)?;
    let th = thermal_profile_on(p, &grid)?;
    let reference = if p.is_thermal() { &th } else { &el };
    let tv = total_variation(&SignedRadialMeasure::difference(&est.to_density()?, reference)?);

    let mut t = Table::new(
        "sample",
        &["r", "density", "stderr", "rho_el", "rho_th", "envelope", "undersampled"],
    );
    for (i, r) in grid.nodes().iter().enumerate() {
        t.row(&[
            num(*r),
            num(est.density[i]),
            num(est.stderr[i]),
            num(el.values()[i]),
            num(th.values()[i]),
            opt(env.value(*r)),
            (est.undersampled[i] as u8).to_string(),
        ]);
    }
    let csv = cfg.out_dir.join("sample.csv");
    t.write(&csv)?;
    let nb = est.n_batches() as f64;
    let batch_variance: Vec<f64> = est.stderr.iter().map(|s| s * s * nb).collect();
    let diagnostics = json!({
        "run": run,
        "mass_on_grid": est.mass(),
        "overflow": est.overflow,
        "undersampled_bins": est.undersampled.iter().filter(|u| **u).count(),
        "max_batch_variance": batch_variance.iter().cloned().fold(0.0, f64::max),
        "mean_batch_variance": batch_variance.iter().sum::<f64>() / batch_variance.len() as f64,
        "tv_distance_to_reference": tv,
        "fluctuation": { "smearing_radius": l, "estimate": fluct, "stride": stride },
    });
    let json_path = cfg.out_dir.join("sample.json");
    write_json(&json_path, &diagnostics)?;
    let mut outputs = vec![csv, json_path];
    if let Some(path) = checkpoint {
        write_file(path, &chain.checkpoint())?;
        outputs.push(path.to_path_buf());
    }
    Ok(Artifacts {
        outputs,
        diagnostics,
        constants: json!({ "envelope": env }),
    })
}

pub fn ed(cfg: &RunConfig) -> Result<Artifacts, Failure> {
    let n = cfg.params.n;
    let mut t = Table::new("ed", &["L", "dim", "I", "gap", "kernel_dim", "quarantined"]);
    let mut spectra: Vec<SectorSpectrum> = Vec::new();
    for l in cfg.l_min..=cfg.l_max {
        let s = sector_spectrum(n, l)?;
        t.row(&[
            l.to_string(),
            s.basis_dim.to_string(),
            num(s.ground_energy()),
            opt(s.gap),
            s.kernel_dim.to_string(),
            s.quarantined.len().to_string(),
        ]);
        spectra.push(s);
    }
    let path = cfg.out_dir.join("ed.csv");
    t.write(&path)?;
    let mut outputs = vec![path];

    let yrast_monotone = spectra
        .windows(2)
        .all(|w| w[1].ground_energy() <= w[0].ground_energy() + 1e-10);
    let gaps: Vec<f64> = spectra.iter().filter_map(|s| s.gap).collect();
    let gap_monotone = gaps.windows(2).all(|w| w[1] <= w[0] + 1e-10);
    let reference = (n * n.saturating_sub(1)).checked_sub(n);
    let reference_gap = reference.and_then(|lr| spectra.iter().find(|s| s.l == lr)).and_then(|s| s.gap);
    let conjecture = reference_gap.map(|g0| {
        spectra
            .iter()
            .filter(|s| Some(s.l) >= reference)
            .filter_map(|s| s.gap)
            .all(|g| (g - g0).abs() <= 1e-9 * g0.max(1.0))
    });
    let delta1 = spectra.iter().find(|s| s.l == 2 * n * n).and_then(|s| s.gap);
    if cfg.laughlin {
        let mut lt = Table::new("ed-laughlin", &["occupations", "amplitude"]);
        for (state, a) in laughlin_state(n)? {
            let occ: Vec<String> = state.occupations().iter().map(|x| x.to_string()).collect();
            lt.row(&[occ.join(" "), num(a)]);
        }
        let lp = cfg.out_dir.join("ed_laughlin.csv");
        lt.write(&lp)?;
        outputs.push(lp);
    }
    Ok(Artifacts {
        outputs,
        diagnostics: json!({
            "yrast_nonincreasing": yrast_monotone,
            "gap_nonincreasing": gap_monotone,
            "ambiguous_sectors": spectra.iter().filter(|s| s.ambiguous()).map(|s| s.l).collect::<Vec<_>>(),
            "reference_gap": reference_gap,
            "constant_gap_conjecture": conjecture,
            "delta1": delta1,
        }),
        constants: json!({}),
    })
}

pub fn energy(cfg: &RunConfig) -> Result<Artifacts, Failure> {
    let p = &cfg.params;
    let ms = match &cfg.m_values {
        Some(v) => v.clone(),
        None => vec![optimal_vortex(p)?],
    };
    let sampler = cfg.mc.then_some(&cfg.sampler);
    let mut t = Table::new(
        "energy",
        &[
            "m", "L", "main_term", "reference_term", "fluctuation_term", "exterior_term",
            "mc_term", "stderr", "cutoff_error", "lower_bound", "bound_case", "bound", "regime",
        ],
    );
    let mut reports = Vec::new();
    for &m in &ms {
        let r = evaluate_trial_energy(p, m, sampler)?;
        let labels: Vec<&str> = r.upper_bound.cases.iter().map(|c| c.label).collect();
        t.row(&[
            m.to_string(),
            r.momentum.to_string(),
            num(r.main_term),
            num(r.reference_term),
            num(r.fluctuation_term),
            num(r.exterior_term),
            num(r.mc_term),
            num(r.stderr),
            num(r.cutoff_error),
            num(r.lower_bound),
            labels.join("|"),
            num(r.upper_bound.cases[0].value),
            regime_name(r.regime).into(),
        ]);
        reports.push(r);
    }
    let csv = cfg.out_dir.join("energy.csv");
    t.write(&csv)?;
    let js = cfg.out_dir.join("energy.json");
    write_json(&js, &reports)?;
    let envelopes: Vec<_> = reports.iter().map(|r| json!({ "m": r.m, "envelope": r.envelope })).collect();
    Ok(Artifacts {
        outputs: vec![csv, js],
        diagnostics: json!({
            "m_opt": optimal_vortex(p)?,
            "lower_bound_respected": reports.iter().all(|r| r.lower_bound <= r.mc_term + 3.0 * r.stderr),
        }),
        constants: json!({ "envelopes": envelopes }),
    })
}

fn regime_name(r: DensityRegime) -> &'static str {
    match r {
        DensityRegime::Electrostatic => "electrostatic",
        DensityRegime::Thermal => "thermal",
    }
}

pub fn phase(cfg: &RunConfig) -> Result<Artifacts, Failure> {
    let p = &cfg.params;
    let steps = (cfg.points - 1) as f64;
    let omegas: Vec<f64> = (0..cfg.points)
        .map(|i| cfg.omega_min + (cfg.omega_max - cfg.omega_min) * i as f64 / steps)
        .collect();
    let diagram = phase_diagram(p.n, p.k, &omegas)?;
    let mut columns = vec!["omega", "m_opt", "L", "main_term", "bound", "case", "regime_case", "regime_flag"];
    if cfg.mc {
        columns.extend(["mc_term", "stderr"]);
    }
    let mut t = Table::new("phase-diagram", &columns);
    for pt in &diagram.points {
        let labels: Vec<&str> = pt.upper_bound.cases.iter().map(|c| c.label).collect();
        let mut row = vec![
            num(pt.omega),
            pt.m_opt.to_string(),
            pt.momentum.to_string(),
            num(pt.main_term),
            num(pt.upper_bound.cases[0].value),
            labels.join("|"),
            format!("{:?}", pt.case).to_lowercase(),
            regime_name(pt.regime).into(),
        ];
        if cfg.mc {
            let q = p.with_trap(pt.omega, p.k);
            let r = evaluate_trial_energy(&q, pt.m_opt, Some(&cfg.sampler))?;
            row.extend([num(r.mc_term), num(r.stderr)]);
        }
        t.row(&row);
    }
    let path = cfg.out_dir.join("phase_diagram.csv");
    t.write(&path)?;
    let step = (cfg.omega_max - cfg.omega_min) / steps;
    let within = |closed: f64, seen: Option<(f64, f64)>| {
        seen.map(|(a, b)| (closed - a).abs() <= step + 1e-12 || (closed - b).abs() <= step + 1e-12)
    };
    Ok(Artifacts {
        outputs: vec![path],
        diagnostics: json!({
            "vortex_boundary": diagram.vortex_boundary,
            "observed_vortex_boundary": diagram.observed_vortex_boundary,
            "vortex_boundary_within_step": within(diagram.vortex_boundary, diagram.observed_vortex_boundary),
            "thermal_boundary": diagram.thermal_boundary,
            "observed_thermal_boundary": diagram.observed_thermal_boundary,
            "thermal_boundary_within_step": within(diagram.thermal_boundary, diagram.observed_thermal_boundary),
        }),
        constants: json!({}),
    })
}

//! The six experiments behind the CLI subcommands.

use rayon::prelude::*;
use rqw::appendix::{
    conditional_moment_check, graf_diagnostic, haar_unitary, poisson_convergence, ConditionalMomentConfig,
    GrafConfig, TestFunction,
};
use rqw::dynamics::{collar_for_horizon, transport_series, StateVector, TransportSeries};
use rqw::green::{
    axis_pairs, correlator_decay_experiment, fractional_moment_sweep, spectral_gap_probe, CorrelatorConfig,
    FractionalMomentConfig, SpectralParameter, SpectrumMethod,
};
use rqw::localized::{alpha_phase, orbit, orbit_spectrum, spectral_mismatch};
use rqw::seeding::derive_seed;
use rqw::stats::fit_line;
use rqw::BasisLabel;
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::RunError;
use crate::output::RunOutput;

/// Agreement required between an orbit block's eigenvalues and the oracle.
pub const SPECTRUM_TOL: f64 = 1e-10;

fn seeds(master: u64, n: usize) -> Vec<u64> {
    (0..n as u64).map(|i| derive_seed(master, i)).collect()
}

fn coin_summary(cfg: &ExperimentConfig) -> Result<serde_json::Value, RunError> {
    let (_, _, delta) = cfg.coin()?;
    eprintln!("coin distance ‖C − C_π‖ = {delta:.12}");
    Ok(json!({ "spec": cfg.coin, "distance_to_permutation_coin": delta }))
}

#[derive(Serialize)]
struct SpectrumRow {
    realization: usize,
    seed: u64,
    blocks: usize,
    matched: usize,
    max_mismatch: f64,
}

pub fn spectrum(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let model = cfg.model()?;
    if !model.is_localized() {
        return Err(RunError::config(
            "coin",
            "spectrum compares against the orbit oracle and needs a permutation coin",
        ));
    }
    let lattice = model.lattice();
    let task_seeds = seeds(cfg.seed, cfg.samples);
    let rows = task_seeds
        .par_iter()
        .enumerate()
        .map(|(i, &seed)| -> Result<SpectrumRow, RunError> {
            let field = model.sample_field(seed);
            let u = model.restriction(&field)?;
            let comps = u.components();
            let mut matched = 0;
            let mut worst: f64 = 0.0;
            for members in &comps.members {
                let o = orbit(model.perm(), u.basis().label(members[0]))?;
                let same = o.members.len() == members.len() && members.iter().all(|&m| o.contains(&u.basis().label(m)));
                let exact = orbit_spectrum(alpha_phase(&field, &o)?, lattice);
                let numeric = u
                    .dense_block(members)
                    .eigenvalues()
                    .map_err(|e| RunError::Numerical(format!("eigenvalues failed: {e:?}")))?;
                let mismatch = if same {
                    spectral_mismatch(&exact.eigenvalues, &numeric)
                } else {
                    f64::INFINITY
                };
                worst = worst.max(mismatch);
                if mismatch <= SPECTRUM_TOL {
                    matched += 1;
                }
            }
            Ok(SpectrumRow {
                realization: i,
                seed,
                blocks: comps.members.len(),
                matched,
                max_mismatch: worst,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let blocks: usize = rows.iter().map(|r| r.blocks).sum();
    let matched: usize = rows.iter().map(|r| r.matched).sum();
    let worst = rows.iter().map(|r| r.max_mismatch).fold(0.0, f64::max);
    let mut out = RunOutput::default();
    let mut csv = String::from("realization,seed,blocks,matched,max_mismatch\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{:.6e}\n",
            r.realization, r.seed, r.blocks, r.matched, r.max_mismatch
        ));
    }
    out.csv("spectrum.csv", csv);
    out.summary = json!({
        "subcommand": "spectrum",
        "realizations": rows.len(),
        "blocks": blocks,
        "matched_blocks": matched,
        "match_fraction": matched as f64 / blocks.max(1) as f64,
        "max_mismatch": worst,
        "tolerance": SPECTRUM_TOL,
    });
    out.task_seeds.insert("realizations".into(), task_seeds);
    if matched != blocks {
        out.failure = Some(format!("{} of {blocks} orbit blocks disagree with the oracle", blocks - matched));
    }
    Ok(out)
}

pub fn transport(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let window = cfg.l.max(collar_for_horizon(cfg.horizon, 0));
    let model = cfg.model()?.with_l(window)?;
    let lattice = model.lattice();
    let start = BasisLabel::new(lattice.coin(1)?, lattice.origin());
    let task_seeds = seeds(cfg.seed, cfg.samples);
    let series = task_seeds
        .par_iter()
        .map(|&seed| -> Result<TransportSeries, RunError> {
            let u = model.realization(seed)?;
            let psi = StateVector::basis_state(u.basis().clone(), &start)?;
            Ok(transport_series(&u, &psi, cfg.horizon, cfg.p)?)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let avg = TransportSeries::average(&series)?;
    let mut out = RunOutput::default();
    out.csv("transport.csv", avg.to_csv());
    let mut per = String::from("realization,seed,exponent,sup\n");
    for (i, (s, seed)) in series.iter().zip(&task_seeds).enumerate() {
        per.push_str(&format!(
            "{i},{seed},{:.6e},{:.12e}\n",
            s.exponent.unwrap_or(f64::NAN),
            s.sup
        ));
    }
    out.csv("transport_realizations.csv", per);
    let exps: Vec<f64> = series.iter().filter_map(|s| s.exponent).collect();
    out.summary = json!({
        "subcommand": "transport",
        "coin": coin_summary(cfg)?,
        "window_l": window,
        "horizon": cfg.horizon,
        "p": cfg.p,
        "initial_state": start.to_string(),
        "realizations": series.len(),
        "exponent": avg.exponent,
        "fit": avg.fit,
        "sup": avg.sup,
        "mean_realization_exponent": rqw::stats::mean(&exps),
        "max_realization_sup": series.iter().map(|s| s.sup).fold(0.0, f64::max),
    });
    out.task_seeds.insert("realizations".into(), task_seeds);
    Ok(out)
}

fn s_label(s: f64) -> String {
    format!("{s}")
}

pub fn green(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let model = cfg.model()?;
    let (a, b) = cfg.distance_range();
    let pairs = axis_pairs(model.lattice(), a..=b);
    let z_grid = cfg.spectral_grid().map_err(|e| RunError::config("z_grid", e))?;
    let mut out = RunOutput::default();
    let mut per_s = Vec::new();
    for (k, &s) in cfg.s.iter().enumerate() {
        let fm = FractionalMomentConfig {
            s,
            samples: cfg.samples,
            z_grid: z_grid.clone(),
            pairs: pairs.clone(),
            seed: derive_seed(cfg.seed, k as u64),
            bootstrap_resamples: cfg.bootstrap_resamples,
        };
        let r = fractional_moment_sweep(&fm, &model)?;
        let label = s_label(s);
        out.csv(format!("green_s{label}.csv"), r.to_csv());
        out.csv(format!("green_s{label}_cells.csv"), r.cells_csv());
        let entry = match r.fit(a..=b) {
            Ok(fit) => {
                let ci = r.gamma_interval(a..=b, cfg.bootstrap_resamples, 0.95, derive_seed(fm.seed, u64::MAX));
                json!({
                    "s": s,
                    "fit": fit,
                    "gamma_ci95": ci,
                    "localized": fit.is_localized() && ci.0 > 0.0,
                    "failures": r.failures,
                    "first_failure": r.first_failure,
                })
            }
            Err(e) if e.is_numerical() => json!({
                "s": s,
                "fit": null,
                "no_fit_reason": e.to_string(),
                "failures": r.failures,
                "first_failure": r.first_failure,
            }),
            Err(e) => return Err(e.into()),
        };
        per_s.push(entry);
        out.task_seeds.insert(format!("s={label}"), r.task_seeds);
    }
    out.summary = json!({
        "subcommand": "green",
        "coin": coin_summary(cfg)?,
        "l": cfg.l,
        "samples": cfg.samples,
        "distances": [a, b],
        "z_points": z_grid.len(),
        "results": per_s,
    });
    Ok(out)
}

pub fn correlator(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let model = cfg.model()?;
    let (a, b) = cfg.distance_range();
    let cc = CorrelatorConfig {
        samples: cfg.samples,
        pairs: axis_pairs(model.lattice(), 0..=b),
        seed: cfg.seed,
        fit_range: Some((a, b)),
        bootstrap_resamples: cfg.bootstrap_resamples,
    };
    let r = correlator_decay_experiment(&model, &cc)?;
    let mut out = RunOutput::default();
    out.csv("correlator.csv", r.sweep.to_csv());
    out.csv("correlator_cells.csv", r.sweep.cells_csv());
    out.summary = json!({
        "subcommand": "correlator",
        "coin": coin_summary(cfg)?,
        "l": cfg.l,
        "samples": cfg.samples,
        "fit_distances": [a, b],
        "outcome": r.outcome,
        "failures": r.sweep.failures,
        "first_failure": r.sweep.first_failure,
    });
    out.task_seeds.insert("realizations".into(), r.sweep.task_seeds);
    Ok(out)
}

pub fn gap(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let model = cfg.model()?;
    let z = SpectralParameter::polar(cfg.gap.z_radius, cfg.gap.z_angle)
        .map_err(|e| RunError::config("gap.z_radius", e.to_string()))?;
    let method = if model.is_localized() {
        SpectrumMethod::OrbitOracle
    } else {
        SpectrumMethod::Dense
    };
    let est = spectral_gap_probe(&model, z, &cfg.gap.etas, cfg.samples, cfg.seed, method)?;
    let mut csv = String::from(
        "eta,successes,samples,gap_probability,wilson_low,wilson_high,close_probability,close_over_eta\n",
    );
    for g in &est {
        csv.push_str(&format!(
            "{:.6e},{},{},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
            g.eta,
            g.successes,
            g.samples,
            g.probability,
            g.wilson_low,
            g.wilson_high,
            g.failure_probability(),
            g.failure_probability() / g.eta
        ));
    }
    let ratios: Vec<f64> = est.iter().map(|g| g.failure_probability() / g.eta).collect();
    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let close: Vec<&rqw::green::GapEstimate> = est.iter().filter(|g| g.failure_probability() > 0.0).collect();
    let xs: Vec<f64> = close.iter().map(|g| g.eta.ln()).collect();
    let ys: Vec<f64> = close.iter().map(|g| g.failure_probability().ln()).collect();
    let rows: Vec<serde_json::Value> = est
        .iter()
        .map(|g| json!({"estimate": g, "close_probability": g.failure_probability()}))
        .collect();
    let mut out = RunOutput::default();
    out.csv("gap.csv", csv);
    out.summary = json!({
        "subcommand": "gap",
        "coin": coin_summary(cfg)?,
        "l": cfg.l,
        "z": z,
        "method": method,
        "estimates": rows,
        "ratio_spread": if lo > 0.0 { Some(hi / lo) } else { None },
        "loglog_slope": fit_line(&xs, &ys).map(|f| f.slope),
    });
    out.task_seeds.insert("realizations".into(), seeds(cfg.seed, cfg.samples));
    Ok(out)
}

fn function_label(f: &TestFunction) -> &'static str {
    match f {
        TestFunction::One => "1",
        TestFunction::Z => "z",
        TestFunction::Z2 => "z^2",
        TestFunction::RealPart => "re z",
        TestFunction::SmoothArc { .. } => "smooth-arc",
        TestFunction::Tabulated { .. } => "tabulated",
    }
}

pub fn appendix(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    let spec = &cfg.appendix;
    let model = cfg.model()?;
    let z_grid = cfg.spectral_grid().map_err(|e| RunError::config("z_grid", e))?;
    let mut out = RunOutput::default();

    let poisson_master = derive_seed(cfg.seed, 0);
    let unitary_seeds = seeds(poisson_master, spec.dims.len());
    let mut csv = String::from("dim,seed,function,r,grid,error\n");
    let mut worst = Vec::new();
    for (&n, &seed) in spec.dims.iter().zip(&unitary_seeds) {
        let u = haar_unitary(n, seed);
        for row in poisson_convergence(u.as_ref(), &spec.radii, spec.grid, &spec.functions)? {
            csv.push_str(&format!(
                "{n},{seed},{},{},{},{:.6e}\n",
                function_label(&row.function),
                row.r,
                row.grid,
                row.error
            ));
            worst.push(json!({"dim": n, "function": function_label(&row.function), "r": row.r, "error": row.error}));
        }
    }
    out.csv("poisson.csv", csv);
    out.task_seeds.insert("poisson_unitaries".into(), unitary_seeds);

    let sizes = if spec.graf_sizes.is_empty() {
        vec![cfg.l]
    } else {
        spec.graf_sizes.clone()
    };
    let (ga, gb) = spec.graf_distances;
    let graf_master = derive_seed(cfg.seed, 1);
    let mut graf_csv = String::new();
    let mut ks = Vec::new();
    for (j, &l) in sizes.iter().enumerate() {
        let m = model.with_l(l)?;
        let gc = GrafConfig {
            s: cfg.s[0],
            samples: cfg.samples,
            z_grid: z_grid.clone(),
            pairs: axis_pairs(m.lattice(), ga..=gb),
            seed: derive_seed(graf_master, j as u64),
            reach: 4,
        };
        let rep = graf_diagnostic(&m, &gc)?;
        let body = rep.to_csv();
        if graf_csv.is_empty() {
            graf_csv.push_str(&body);
        } else {
            graf_csv.extend(body.lines().skip(1).map(|line| format!("{line}\n")));
        }
        ks.push(json!({"l": l, "fitted_k": rep.fitted_k}));
        out.task_seeds.insert(format!("graf_l={l}"), rep.task_seeds);
    }
    out.csv("graf.csv", graf_csv);
    let kv: Vec<f64> = ks.iter().filter_map(|k| k["fitted_k"].as_f64()).collect();
    let kmax = kv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let kmin = kv.iter().copied().fold(f64::INFINITY, f64::min);

    let conditional = if model.distribution().has_density() {
        let lattice = model.lattice();
        let pair = axis_pairs(lattice, ga..=ga)[0];
        let cc = ConditionalMomentConfig {
            pair,
            z_grid: z_grid.clone(),
            s_values: cfg.s.clone(),
            backgrounds: spec.backgrounds,
            seed: derive_seed(cfg.seed, 2),
            quadrature: 64,
        };
        let rep = conditional_moment_check(&model, &cc)?;
        let mut csv = String::from("s,z_re,z_im,max_estimate,mean_estimate\n");
        for r in &rep.rows {
            let z = r.z.value();
            csv.push_str(&format!(
                "{},{:.6},{:.6},{:.12e},{:.12e}\n",
                r.s, z.re, z.im, r.max_estimate, r.mean_estimate
            ));
        }
        out.csv("conditional.csv", csv);
        json!({"pair": [pair.row.to_string(), pair.col.to_string()], "spread": rep.spread})
    } else {
        json!(null)
    };

    out.summary = json!({
        "subcommand": "appendix",
        "coin": coin_summary(cfg)?,
        "poisson": worst,
        "graf": {
            "fitted_k": ks,
            "k_spread": if kmin > 0.0 { Some(kmax / kmin) } else { None },
        },
        "conditional_moments": conditional,
    });
    Ok(out)
}

//! The subcommands, each split into a pure computation returning data and a
//! thin writer that stores it under the output directory.

use std::path::{Path, PathBuf};

use landau_core::chaos::{
    ckp_check, convergence_slope, histogram_l1, jackknife, knn_kl, sample_from_field, sliced_w2, RateFit, SampleSet,
};
use landau_core::limit::{max_stable_dt, solve, write_field, DensityField, Snapshot};
use landau_core::particle::{run, RunOutput, SimConfig};
use landau_core::rng::replica_rng;
use landau_core::statistics::moment_bound_check;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ChaosConfig, ExperimentConfig, Pooling};
use crate::error::{CliError, CliResult};
use crate::manifest::{axis_master, ManifestBuilder, RunManifest};
use crate::table::{self, num, Table};

/// Where outputs go and how many worker threads to use.
#[derive(Clone, Debug)]
pub struct Options {
    pub out: PathBuf,
    pub workers: usize,
}

/// Auxiliary stream indices, far from any replica index.
const LIMIT_STREAM: u64 = u64::MAX;
const SANITY_STREAM: u64 = u64::MAX - 1;
const PROJECTION_STREAM: u64 = u64::MAX - 2;

fn prepare_out(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", dir.display())))
}

fn thread_pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    if workers == 0 {
        return Err(CliError::Config("--workers must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {workers} workers: {e}")))
}

/// Runs replicas 0..R of `sim` on `workers` threads. The result is ordered
/// by replica index whatever the completion order.
pub fn run_replicas(sim: &SimConfig, replicas: usize, workers: usize) -> CliResult<Vec<RunOutput>> {
    let pool = thread_pool(workers)?;
    let outs = pool.install(|| {
        (0..replicas as u64).into_par_iter().map(|r| run(sim, r)).collect::<landau_core::Result<Vec<_>>>()
    })?;
    Ok(outs)
}

fn blow_up_note(o: &RunOutput) -> Option<String> {
    o.blow_up.map(|b| {
        format!("replica {} blew up at step {} (t = {}), particle {}", o.replica, b.step, b.time, b.particle)
    })
}

/// One CSV of statistics per replica.
pub fn cmd_simulate(cfg: &ExperimentConfig, opts: &Options) -> CliResult<RunManifest> {
    prepare_out(&opts.out)?;
    let mut m = ManifestBuilder::new("simulate", cfg, opts.workers);
    m.seeds(cfg.sim.seed, cfg.sim.n, cfg.replicas);
    let outs = run_replicas(&cfg.sim, cfg.replicas, opts.workers)?;
    m.stage("integrate");
    let mut blown = Vec::new();
    for o in &outs {
        let name = format!("replica_{:04}.csv", o.replica);
        table::stats_table(&o.records)?.write(&opts.out.join(&name))?;
        m.output(&name);
        if let Some(note) = blow_up_note(o) {
            m.flag(note.clone());
            blown.push(note);
        }
    }
    m.stage("write");
    let manifest = m.write(&opts.out)?;
    if !blown.is_empty() {
        return Err(CliError::Numerical(blown.join("; ")));
    }
    Ok(manifest)
}

/// Largest step not above 0.95 of `dt_max` that lands on every time in
/// `times` (all measured from t = 0).
pub fn auto_dt(dt_max: f64, times: &[f64]) -> CliResult<f64> {
    let unit = times.iter().copied().filter(|t| *t > 0.0).fold(f64::INFINITY, f64::min);
    if !unit.is_finite() {
        return Ok(0.95 * dt_max);
    }
    // Smallest positive gap, so that 0.1, 0.25 and 0.5 resolve to 0.05.
    let mut sorted: Vec<f64> = times.iter().copied().filter(|t| *t > 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let mut base = unit;
    for w in sorted.windows(2) {
        if w[1] - w[0] > 1e-12 {
            base = base.min(w[1] - w[0]);
        }
    }
    let mut g = base;
    for _ in 0..64 {
        let fits = sorted.iter().all(|t| {
            let k = (t / g).round();
            (k * g - t).abs() <= 1e-9 * t.max(1.0)
        });
        if fits {
            let k = (g / (0.95 * dt_max)).ceil().max(1.0);
            return Ok(g / k);
        }
        g /= 2.0;
    }
    Err(CliError::Config("output times share no common step; set solve.dt explicitly".into()))
}

/// Solves the limit equation from the configured initial law, with snapshots
/// at `times`. Returns the snapshots and the step used.
pub fn limit_solve(cfg: &ExperimentConfig, times: &[f64]) -> CliResult<(Vec<Snapshot>, f64)> {
    let s = cfg.solve.as_ref().ok_or_else(|| CliError::Config("this command needs a [solve] section".into()))?;
    let law = &cfg.sim.initial;
    let moments = law.moment_state()?;
    let f0 = DensityField::from_law(s.grid()?, law)?;
    let mode = s.coefficient_mode(&cfg.sim)?;
    let dt = match s.dt {
        Some(dt) => dt,
        None => auto_dt(max_stable_dt(&f0, &mode), times)?,
    };
    Ok((solve(&f0, dt, times, &mode, &moments)?, dt))
}

pub fn diagnostics_table(snaps: &[Snapshot]) -> Table {
    let header = [
        "time", "mass", "momentum_1", "momentum_2", "energy", "E11_grid", "E22_grid", "E11_closed", "E22_closed",
        "max_diag_deviation", "off_diagonal", "grad_ratio", "hess_ratio",
    ];
    let mut t = Table::new(table::DIAGNOSTICS, header.iter().map(|s| s.to_string()).collect());
    for s in snaps {
        let d = &s.diagnostics;
        t.push(vec![
            num(d.time),
            num(d.conserved.mass),
            num(d.conserved.momentum[0]),
            num(d.conserved.momentum[1]),
            num(d.conserved.energy),
            num(d.consistency.grid[0]),
            num(d.consistency.grid[1]),
            num(d.consistency.closed_form[0]),
            num(d.consistency.closed_form[1]),
            num(d.consistency.max_diag_deviation),
            num(d.consistency.off_diagonal),
            num(d.grad_ratio),
            num(d.hess_ratio),
        ]);
    }
    t
}

/// Field snapshots plus a diagnostics table.
pub fn cmd_solve(cfg: &ExperimentConfig, opts: &Options) -> CliResult<RunManifest> {
    prepare_out(&opts.out)?;
    let s = cfg.solve.as_ref().ok_or_else(|| CliError::Config("solve needs a [solve] section".into()))?;
    let mut m = ManifestBuilder::new("solve", cfg, opts.workers);
    let (snaps, dt) = limit_solve(cfg, &s.output_times)?;
    m.note(format!("solve dt = {dt}"));
    m.stage("solve");
    let aniso = cfg.sim.initial.moment_state()?;
    for (k, snap) in snaps.iter().enumerate() {
        let (c, j) = (format!("field_{k:03}.csv"), format!("field_{k:03}.json"));
        write_field(&snap.field, Some(aniso.anisotropy()), &opts.out.join(&c), &opts.out.join(&j))?;
        m.output(&c);
        m.output(&j);
    }
    diagnostics_table(&snaps).write(&opts.out.join("diagnostics.csv"))?;
    m.output("diagnostics.csv");
    m.stage("write");
    m.write(&opts.out)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `sim` run to the last of `times`, recording on a schedule that hits
/// every one of them.
fn schedule(sim: &SimConfig, n: usize, times: &[f64]) -> CliResult<SimConfig> {
    let mut s = sim.clone();
    s.n = n;
    s.t_end = times.iter().copied().fold(0.0, f64::max);
    let mut every = 0usize;
    for &t in times {
        let k = (t / s.dt).round();
        if (k * s.dt - t).abs() > 1e-9 * t.max(1.0) {
            return Err(CliError::Config(format!("time {t} is not a whole number of steps dt = {}", s.dt)));
        }
        every = gcd(every, k as usize);
    }
    s.record_every = every.max(1);
    s.validate()?;
    Ok(s)
}

fn record_at<'a>(o: &'a RunOutput, t: f64) -> CliResult<&'a landau_core::StatRecord> {
    o.records
        .iter()
        .find(|r| (r.time - t).abs() <= 1e-9 * t.max(1.0))
        .ok_or_else(|| CliError::Numerical(format!("replica {} has no record at t = {t}", o.replica)))
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 { x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LlnRow {
    pub n: usize,
    pub time: f64,
    pub mean: f64,
    pub sd: f64,
    pub replicas: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeFit {
    pub time: f64,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LlnSweep {
    pub rows: Vec<LlnRow>,
    pub fits: Vec<TimeFit>,
}

fn fit_or_error(points: &[(f64, f64)]) -> (Option<RateFit>, Option<String>) {
    match convergence_slope(points) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

/// Replica-mean law-of-large-numbers functional over the N axis.
pub fn sweep_lln(cfg: &ExperimentConfig, workers: usize, m: Option<&mut ManifestBuilder>) -> CliResult<LlnSweep> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| CliError::Config("sweep-lln needs a [sweep] section".into()))?;
    if sw.n_values.len() < 4 {
        return Err(CliError::Config(format!("sweep-lln needs at least 4 N values, got {}", sw.n_values.len())));
    }
    let mut rows = Vec::new();
    let mut m = m;
    for &n in &sw.n_values {
        let mut sim = schedule(&cfg.sim, n, &sw.times)?;
        sim.seed = axis_master(cfg.sim.seed, n);
        if let Some(m) = m.as_deref_mut() {
            m.seeds(sim.seed, n, sw.replicas);
        }
        let outs = run_replicas(&sim, sw.replicas, workers)?;
        if let Some(note) = outs.iter().find_map(blow_up_note) {
            return Err(CliError::Numerical(format!("N = {n}: {note}")));
        }
        for &t in &sw.times {
            let vals = outs.iter().map(|o| record_at(o, t).map(|r| r.lln_value)).collect::<CliResult<Vec<_>>>()?;
            let (mean, sd) = mean_sd(&vals);
            rows.push(LlnRow { n, time: t, mean, sd, replicas: sw.replicas });
        }
        if let Some(m) = m.as_deref_mut() {
            m.stage(&format!("N = {n}"));
        }
    }
    let fits = sw
        .times
        .iter()
        .map(|&t| {
            let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.time == t).map(|r| (r.n as f64, r.mean)).collect();
            let (fit, error) = fit_or_error(&pts);
            TimeFit { time: t, fit, error }
        })
        .collect();
    Ok(LlnSweep { rows, fits })
}

pub fn cmd_sweep_lln(cfg: &ExperimentConfig, opts: &Options) -> CliResult<RunManifest> {
    prepare_out(&opts.out)?;
    let mut m = ManifestBuilder::new("sweep-lln", cfg, opts.workers);
    let sweep = sweep_lln(cfg, opts.workers, Some(&mut m))?;
    let mut t = Table::new(table::LLN, ["N", "time", "mean", "sd", "replicas"].iter().map(|s| s.to_string()).collect());
    for r in &sweep.rows {
        t.push(vec![r.n.to_string(), num(r.time), num(r.mean), num(r.sd), r.replicas.to_string()]);
    }
    t.write(&opts.out.join("lln.csv"))?;
    std::fs::write(opts.out.join("lln_fit.json"), serde_json::to_string_pretty(&sweep.fits)? + "\n")?;
    m.output("lln.csv");
    m.output("lln_fit.json");
    m.write(&opts.out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChaosRow {
    /// `particles` for a sweep point, `limit_vs_limit` for the sanity row.
    pub label: String,
    pub n: usize,
    pub samples: usize,
    pub sliced_w2: f64,
    pub knn_kl: f64,
    pub l1: f64,
    pub ckp_margin: f64,
    /// Jackknife standard error of the margin.
    pub ckp_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricFit {
    pub metric: String,
    pub fit: Option<RateFit>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChaosSweep {
    pub rows: Vec<ChaosRow>,
    pub fits: Vec<MetricFit>,
    pub limit_acceptance: f64,
    pub solve_dt: f64,
}

fn chaos_row(label: &str, n: usize, pool: &SampleSet, limit: &SampleSet, c: &ChaosConfig, seed: u64) -> CliResult<ChaosRow> {
    let proj_seed = landau_core::rng::replica_seed(seed, PROJECTION_STREAM);
    let margin = |s: &SampleSet| -> landau_core::Result<f64> {
        let kl = knn_kl(s, limit, c.knn_k)?;
        let l1 = histogram_l1(s, limit, c.bins, c.histogram_half_width)?;
        Ok(ckp_check(kl, l1, 1))
    };
    let (ckp_margin, ckp_sd) = jackknife(pool, c.jackknife_groups, margin)?;
    Ok(ChaosRow {
        label: label.into(),
        n,
        samples: pool.len(),
        sliced_w2: sliced_w2(pool, limit, c.n_proj, proj_seed)?,
        knn_kl: knn_kl(pool, limit, c.knn_k)?,
        l1: histogram_l1(pool, limit, c.bins, c.histogram_half_width)?,
        ckp_margin,
        ckp_sd,
    })
}

/// Distances between pooled particle marginals and draws from the limit
/// density at `chaos.time`, over the N axis.
pub fn sweep_chaos(cfg: &ExperimentConfig, workers: usize, m: Option<&mut ManifestBuilder>) -> CliResult<ChaosSweep> {
    let c = cfg.chaos.as_ref().ok_or_else(|| CliError::Config("sweep-chaos needs a [chaos] section".into()))?;
    let mut m = m;
    let (snaps, solve_dt) = limit_solve(cfg, &[c.time])?;
    let field = &snaps[0].field;
    let limit = sample_from_field(field, c.limit_samples, &mut replica_rng(cfg.sim.seed, LIMIT_STREAM))?;
    let limit_acceptance = limit.acceptance().unwrap_or(1.0);
    if let Some(m) = m.as_deref_mut() {
        m.note(format!("limit solve dt = {solve_dt}, sampler acceptance = {limit_acceptance}"));
        m.stage("limit");
    }

    let mut rows = Vec::new();
    for &n in &c.n_values {
        let mut sim = schedule(&cfg.sim, n, &[c.time])?;
        sim.seed = axis_master(cfg.sim.seed, n);
        sim.record_every = sim.steps()?.max(1);
        if let Some(m) = m.as_deref_mut() {
            m.seeds(sim.seed, n, c.replicas);
        }
        let outs = run_replicas(&sim, c.replicas, workers)?;
        if let Some(note) = outs.iter().find_map(blow_up_note) {
            return Err(CliError::Numerical(format!("N = {n}: {note}")));
        }
        let states: Vec<_> = outs.into_iter().map(|o| o.final_state).collect();
        let pool = match c.pool {
            Pooling::Particle => SampleSet::pool_particle(&states, c.particle_index)?,
            Pooling::All => SampleSet::pool_all(&states)?,
        };
        rows.push(chaos_row("particles", n, &pool, &limit, c, cfg.sim.seed)?);
        if let Some(m) = m.as_deref_mut() {
            m.stage(&format!("N = {n}"));
        }
    }
    // Same estimator on two independent limit draws of the particle pool's size.
    let size = rows.first().map_or(c.replicas, |r| r.samples).max(2 * c.jackknife_groups);
    let twin = sample_from_field(field, size, &mut replica_rng(cfg.sim.seed, SANITY_STREAM))?;
    rows.push(chaos_row("limit_vs_limit", 0, &twin, &limit, c, cfg.sim.seed)?);

    let sweep_rows: Vec<&ChaosRow> = rows.iter().filter(|r| r.label == "particles").collect();
    let metrics: [(&str, fn(&ChaosRow) -> f64); 3] =
        [("sliced_w2", |r| r.sliced_w2), ("knn_kl", |r| r.knn_kl), ("l1", |r| r.l1)];
    let fits = metrics
        .iter()
        .map(|(name, get)| {
            let pts: Vec<(f64, f64)> = sweep_rows.iter().map(|r| (r.n as f64, get(r))).collect();
            let (fit, error) = fit_or_error(&pts);
            MetricFit { metric: name.to_string(), fit, error }
        })
        .collect();
    Ok(ChaosSweep { rows, fits, limit_acceptance, solve_dt })
}

pub fn cmd_sweep_chaos(cfg: &ExperimentConfig, opts: &Options) -> CliResult<RunManifest> {
    prepare_out(&opts.out)?;
    let mut m = ManifestBuilder::new("sweep-chaos", cfg, opts.workers);
    let sweep = sweep_chaos(cfg, opts.workers, Some(&mut m))?;
    let header = ["label", "N", "samples", "sliced_w2", "knn_kl", "l1", "ckp_margin", "ckp_sd"];
    let mut t = Table::new(table::CHAOS, header.iter().map(|s| s.to_string()).collect());
    for r in &sweep.rows {
        t.push(vec![
            r.label.clone(),
            r.n.to_string(),
            r.samples.to_string(),
            num(r.sliced_w2),
            num(r.knn_kl),
            num(r.l1),
            num(r.ckp_margin),
            num(r.ckp_sd),
        ]);
    }
    t.write(&opts.out.join("chaos.csv"))?;
    std::fs::write(opts.out.join("chaos_fit.json"), serde_json::to_string_pretty(&sweep.fits)? + "\n")?;
    m.output("chaos.csv");
    m.output("chaos_fit.json");
    m.write(&opts.out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub replica: u64,
    pub time: f64,
    pub mp: f64,
    pub bound: f64,
    pub margin: f64,
}

/// Empirical M_p against its a-priori bound at every record of every
/// replica.
pub fn verify_moments(cfg: &ExperimentConfig, workers: usize) -> CliResult<Vec<MomentRow>> {
    let sim = &cfg.sim;
    let p = sim.moment_p;
    let outs = run_replicas(sim, cfg.replicas, workers)?;
    if let Some(note) = outs.iter().find_map(blow_up_note) {
        return Err(CliError::Numerical(note));
    }
    let mut rows = Vec::new();
    for o in &outs {
        let mp0 = o.records[0].mp;
        for r in &o.records {
            let margin = moment_bound_check(r.mp, mp0, p, sim.d, sim.n, r.time)?;
            rows.push(MomentRow { replica: o.replica, time: r.time, mp: r.mp, bound: r.mp + margin, margin });
        }
    }
    Ok(rows)
}

pub fn cmd_verify_moments(cfg: &ExperimentConfig, opts: &Options) -> CliResult<RunManifest> {
    prepare_out(&opts.out)?;
    let mut m = ManifestBuilder::new("verify-moments", cfg, opts.workers);
    m.seeds(cfg.sim.seed, cfg.sim.n, cfg.replicas);
    let rows = verify_moments(cfg, opts.workers)?;
    m.stage("integrate");
    let mut t =
        Table::new(table::MOMENTS, ["replica", "time", "Mp", "bound", "margin"].iter().map(|s| s.to_string()).collect());
    for r in &rows {
        t.push(vec![r.replica.to_string(), num(r.time), num(r.mp), num(r.bound), num(r.margin)]);
    }
    t.write(&opts.out.join("moments.csv"))?;
    m.output("moments.csv");
    let bad: Vec<&MomentRow> = rows.iter().filter(|r| !(r.margin > 0.0)).collect();
    if let Some(worst) = bad.first() {
        let msg = format!(
            "{} records violate the moment bound, first at replica {} t = {} (margin {})",
            bad.len(),
            worst.replica,
            worst.time,
            worst.margin
        );
        m.flag(msg.clone());
        m.write(&opts.out)?;
        return Err(CliError::Gate(msg));
    }
    m.write(&opts.out)
}

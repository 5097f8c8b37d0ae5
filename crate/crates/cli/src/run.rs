//! Executes a scenario and writes its CSV artifacts and manifest.

use crate::error::CliError;
use crate::scenario::{Resolved, Scenario, SweepAxisName, SweepSpec, TransportSpec};
use bh_core::dynamics::{schedule, Propagator};
use bh_core::lattice::{classical_energy, Layout, Region, SiteGraph};
use bh_core::lyapunov::{
    ensemble_lyapunov, lyapunov_sweep, write_sweep_csv, LyapunovOptions, SweepAxis, SweepConfig,
};
use bh_core::observables::{
    be_refit, extract_gamma, max_deviation, populations_and_counts, spdm, spdm_bloch, transport_fit, Histogram,
    TransportRecord, energies_per_site,
};
use bh_core::stats::Estimate;
use bh_core::thermal::{sample_lattice_ensemble, solve_beta_mu, RegionState, ThermalPoint};
use bh_core::{Execution, FieldState};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub name: String,
    pub version: &'static str,
    pub seed: u64,
    pub scenario: Scenario,
    pub derived: Derived,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Derived {
    pub regions: Vec<RegionInfo>,
    /// Bose-Einstein state with the mean density and energy of the two rings.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<PointInfo>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub refits: Vec<RefitInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<LyapunovSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub transport: Vec<TransportSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointInfo {
    pub beta: f64,
    /// Absent at infinite temperature.
    pub mu: Option<f64>,
    pub n_bar: f64,
    pub e_bar: f64,
}

impl From<&ThermalPoint> for PointInfo {
    fn from(p: &ThermalPoint) -> Self {
        PointInfo { beta: p.beta, mu: p.mu.is_finite().then_some(p.mu), n_bar: p.n_bar, e_bar: p.e_bar }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionInfo {
    pub region: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thermal: Option<PointInfo>,
    pub shifted: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RefitInfo {
    pub region: &'static str,
    pub point: PointInfo,
    pub max_dev_refit: f64,
    pub max_dev_initial: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovSummary {
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TransportSummary {
    pub epsilon: f64,
    pub seeds: Vec<u64>,
    pub kappa: f64,
    pub kappa_stderr: f64,
    pub gamma: Option<f64>,
    pub thermalization_rate: Option<f64>,
    pub decay_rate: f64,
    /// Worst fit quality of `ln ΔN` over the seeds.
    pub r_squared_min: f64,
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        self.files.push(name.to_string());
        File::create(&path).map(BufWriter::new).map_err(|e| CliError::io(&path, e))
    }

    fn write_with<F>(&mut self, name: &str, f: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let path = self.dir.join(name);
        let mut w = self.create(name)?;
        f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))
    }
}

fn io_at(dir: &Path, name: &str) -> impl Fn(std::io::Error) -> CliError {
    let path = dir.join(name);
    move |e| CliError::io(&path, e)
}

/// Runs `scenario` and writes every artifact into `out`.
pub fn run_scenario(scenario: &Scenario, out: &Path) -> Result<Manifest, CliError> {
    let resolved = scenario.resolve()?;
    std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
    let mut output = Output { dir: out.to_path_buf(), files: Vec::new() };
    let mut warnings = Vec::new();
    let mut derived = Derived::default();
    let Resolved { graph, inits, times } = &resolved;

    for (region, state) in inits {
        derived.regions.push(match state {
            RegionState::Thermal { point, shifted } => {
                RegionInfo { region: region.label(), thermal: Some(point.into()), shifted: *shifted }
            }
            RegionState::Empty => RegionInfo { region: region.label(), thermal: None, shifted: false },
        });
    }
    let ring_points: Vec<&ThermalPoint> = inits
        .iter()
        .filter_map(|(r, s)| match s {
            RegionState::Thermal { point, shifted: false } if graph.is_ring(*r) => Some(point),
            _ => None,
        })
        .collect();
    if ring_points.len() == 2 {
        let n = 0.5 * (ring_points[0].n_bar + ring_points[1].n_bar);
        let e = 0.5 * (ring_points[0].e_bar + ring_points[1].e_bar);
        let eq = solve_beta_mu(n, e, graph.layout().ring_size(), graph.hop())?;
        output.write_with("equilibrium.csv", |w| {
            writeln!(w, "k,n_k")?;
            for (k, n) in eq.occupations(false).iter().enumerate() {
                writeln!(w, "{k},{n}")?;
            }
            Ok(())
        })?;
        derived.equilibrium = Some((&eq).into());
    }

    let run = &scenario.run;
    let ens = sample_lattice_ensemble(graph, inits, run.n_traj, run.seed)?;
    let analysis = &scenario.analysis;
    let initial_states = ens.states.clone();

    let mut recorder = Recorder::new(&mut output, scenario, graph, inits)?;
    let (steps, snap_warnings) = schedule(times, run.dt)?;
    warnings.extend(snap_warnings);
    let prop = Propagator::new(graph, run.dt)?;
    let mut states = ens.states;
    let mut done = 0;
    for &s in &steps {
        prop.advance_states(&mut states, s - done, Execution::Auto);
        done = s;
        recorder.record(s as f64 * run.dt, &states)?;
    }
    let record = recorder.finish()?;

    if analysis.spdm {
        for (region, _) in graph.regions() {
            let t = done as f64 * run.dt;
            let site = spdm(&states, graph, region, t)?;
            let name = format!("spdm_{}_site.csv", region.label());
            output.write_with(&name, |w| site.write_csv(w))?;
            if graph.is_ring(region) {
                let bloch = spdm_bloch(&states, graph, region, t)?;
                let name = format!("spdm_{}_bloch.csv", region.label());
                output.write_with(&name, |w| bloch.write_csv(w))?;
            }
        }
    }

    if let Some(h) = &analysis.histogram {
        let first = energies_per_site(&initial_states, graph, h.component)?;
        let last = energies_per_site(&states, graph, h.component)?;
        let range = h.range.map(|[a, b]| (a, b)).or_else(|| {
            let lo = first.iter().chain(&last).cloned().fold(f64::INFINITY, f64::min);
            let hi = first.iter().chain(&last).cloned().fold(f64::NEG_INFINITY, f64::max);
            Some((lo, hi))
        });
        let h0 = Histogram::from_values(&first, h.bins, range);
        let h1 = Histogram::from_values(&last, h.bins, range);
        output.write_with("histogram_initial.csv", |w| h0.write_csv(w))?;
        output.write_with("histogram_final.csv", |w| h1.write_csv(w))?;
    }

    if analysis.refit {
        let mut rows = Vec::new();
        for (region, _) in graph.regions() {
            if !graph.is_ring(region) {
                continue;
            }
            let fit = be_refit(&states, graph, region)?;
            let initial = inits.iter().find_map(|(r, s)| match s {
                RegionState::Thermal { point, shifted: false } if *r == region => Some(max_deviation(&fit.diagonal, point)),
                _ => None,
            });
            rows.push(RefitInfo {
                region: region.label(),
                point: (&fit.point).into(),
                max_dev_refit: fit.max_dev,
                max_dev_initial: initial,
            });
        }
        output.write_with("refit.csv", |w| {
            writeln!(w, "region,beta,mu,n_bar,e_kin,max_dev_refit,max_dev_initial")?;
            rows.iter().try_for_each(|r| {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    r.region,
                    r.point.beta,
                    opt(r.point.mu),
                    r.point.n_bar,
                    r.point.e_bar,
                    r.max_dev_refit,
                    opt(r.max_dev_initial)
                )
            })
        })?;
        derived.refits = rows;
    }

    if let Some(l) = &analysis.lyapunov {
        let n = l.n_traj.unwrap_or(initial_states.len()).min(initial_states.len());
        let subset = &initial_states[..n];
        let runs = ensemble_lyapunov(graph, subset, &l.options(), run.seed, Execution::Auto)?;
        let energies: Vec<f64> = subset
            .iter()
            .map(|s| classical_energy(graph, s).map(|e| e.total / graph.n_sites() as f64))
            .collect::<Result<_, _>>()?;
        output.write_with("lyapunov.csv", |w| {
            writeln!(w, "trajectory,lambda,energy")?;
            for (i, (r, e)) in runs.iter().zip(&energies).enumerate() {
                writeln!(w, "{i},{},{e}", r.lambda)?;
            }
            Ok(())
        })?;
        output.write_with("lyapunov_running.csv", |w| {
            writeln!(w, "trajectory,t,lambda")?;
            for (i, r) in runs.iter().enumerate() {
                for (t, v) in &r.running {
                    writeln!(w, "{i},{t},{v}")?;
                }
            }
            Ok(())
        })?;
        let lambdas: Vec<f64> = runs.iter().map(|r| r.lambda).collect();
        let est = Estimate::from_samples(&lambdas);
        derived.lyapunov = Some(LyapunovSummary {
            n: lambdas.len(),
            mean: est.mean,
            stderr: est.stderr,
            min: lambdas.iter().cloned().fold(f64::INFINITY, f64::min),
            max: lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        });
    }

    if let (Some(spec), Some(main)) = (&analysis.transport, record) {
        derived.transport = transport_scan(&mut output, scenario, &resolved, spec, main, &mut warnings)?;
    }

    for (i, s) in analysis.sweep.iter().enumerate() {
        let config = sweep_config(scenario, s);
        let rows = lyapunov_sweep(&config, Execution::Auto)?;
        let axis = match s.axis {
            SweepAxisName::Beta => "beta",
            SweepAxisName::G => "g",
            SweepAxisName::M => "m",
        };
        let name = format!("sweep_{i}_{axis}{}.csv", if s.shifted { "_shifted" } else { "" });
        output.write_with(&name, |w| write_sweep_csv(&rows, w))?;
    }

    let mut manifest = Manifest {
        name: scenario.name.clone(),
        version: env!("CARGO_PKG_VERSION"),
        seed: run.seed,
        scenario: scenario.clone(),
        derived,
        warnings,
        files: Vec::new(),
    };
    let toml_text = scenario.to_toml();
    output.write_with("resolved_scenario.toml", |w| w.write_all(toml_text.as_bytes()))?;
    output.files.push("manifest.json".into());
    manifest.files = output.files.clone();
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(out.join("manifest.json"), json + "\n").map_err(io_at(out, "manifest.json"))?;
    Ok(manifest)
}

/// Lyapunov sweep around the scenario's single-ring thermal state.
pub fn sweep_config(scenario: &Scenario, s: &SweepSpec) -> SweepConfig {
    let whole = scenario.initial.whole.expect("checked by resolve");
    SweepConfig {
        axis: match s.axis {
            SweepAxisName::Beta => SweepAxis::Beta(s.values.clone()),
            SweepAxisName::G => SweepAxis::G(s.values.clone()),
            SweepAxisName::M => SweepAxis::M(s.values.iter().map(|v| *v as usize).collect()),
        },
        m: scenario.layout.ring_size(),
        g: scenario.physics.g_ring,
        beta: whole.beta.expect("checked by resolve"),
        n_bar: whole.n_bar.expect("checked by resolve"),
        hop: scenario.physics.j,
        shifted: s.shifted,
        n_samples: s.n_samples,
        options: LyapunovOptions { t_total: s.t_total, tau_r: s.tau_r, dt: s.dt, ..Default::default() },
        seed: scenario.run.seed,
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-sample time series of the main run.
struct Recorder<'a> {
    graph: &'a SiteGraph,
    counts: BufWriter<File>,
    populations: Option<BufWriter<File>>,
    bloch: Option<(BufWriter<File>, BufWriter<File>)>,
    energies: Option<BufWriter<File>>,
    reference: Vec<(Region, Vec<f64>)>,
    transport: Option<TransportRecord>,
    dir: PathBuf,
}

impl<'a> Recorder<'a> {
    fn new(
        output: &mut Output,
        scenario: &Scenario,
        graph: &'a SiteGraph,
        inits: &[(Region, RegionState)],
    ) -> Result<Recorder<'a>, CliError> {
        let a = &scenario.analysis;
        let dir = output.dir.clone();
        let mut counts = output.create("counts.csv")?;
        writeln!(counts, "t,region,N,stderr").map_err(io_at(&dir, "counts.csv"))?;
        let populations = if a.populations {
            let mut w = output.create("populations.csv")?;
            writeln!(w, "t,site,n,stderr").map_err(io_at(&dir, "populations.csv"))?;
            Some(w)
        } else {
            None
        };
        let bloch = if a.spdm {
            let mut d = output.create("bloch_diag.csv")?;
            writeln!(d, "t,region,k,rho,stderr,be").map_err(io_at(&dir, "bloch_diag.csv"))?;
            let mut s = output.create("spdm_summary.csv")?;
            writeln!(s, "t,region,trace,max_offdiag_z,hermiticity").map_err(io_at(&dir, "spdm_summary.csv"))?;
            Some((d, s))
        } else {
            None
        };
        let energies = if a.energies {
            let mut w = output.create("energies.csv")?;
            writeln!(w, "t,E_K,E_K_err,E_P,E_P_err,E,E_err").map_err(io_at(&dir, "energies.csv"))?;
            Some(w)
        } else {
            None
        };
        let reference = inits
            .iter()
            .filter_map(|(r, s)| match s {
                RegionState::Thermal { point, shifted } => Some((*r, point.occupations(*shifted))),
                RegionState::Empty => None,
            })
            .collect();
        let transport = (!graph.junction_path().is_empty()).then(|| TransportRecord::new(graph.layout().ring_size()));
        Ok(Recorder { graph, counts, populations, bloch, energies, reference, transport, dir })
    }

    fn record(&mut self, t: f64, states: &[FieldState]) -> Result<(), CliError> {
        let graph = self.graph;
        let pops = populations_and_counts(states, graph)?;
        let dir = self.dir.clone();
        let e = io_at(&dir, "counts.csv");
        for (region, est) in &pops.regions {
            writeln!(self.counts, "{t},{},{},{}", region.label(), est.mean, est.stderr).map_err(&e)?;
        }
        writeln!(self.counts, "{t},total,{},0", pops.total).map_err(&e)?;
        if let Some(w) = &mut self.populations {
            let e = io_at(&dir, "populations.csv");
            for (site, est) in pops.sites.iter().enumerate() {
                writeln!(w, "{t},{site},{},{}", est.mean, est.stderr).map_err(&e)?;
            }
        }
        if let Some((diag, summary)) = &mut self.bloch {
            let e = io_at(&dir, "bloch_diag.csv");
            for (region, _) in graph.regions() {
                if !graph.is_ring(region) {
                    continue;
                }
                let rho = spdm_bloch(states, graph, region, t)?;
                let se = rho.stderr.as_ref().expect("averaged spdm has errors");
                let reference = self.reference.iter().find(|(r, _)| *r == region).map(|(_, v)| v);
                for (k, d) in rho.diagonal().iter().enumerate() {
                    let be = reference.map(|v| v[k].to_string()).unwrap_or_default();
                    writeln!(diag, "{t},{},{k},{d},{},{be}", region.label(), se[(k, k)]).map_err(&e)?;
                }
                writeln!(
                    summary,
                    "{t},{},{},{},{}",
                    region.label(),
                    rho.trace(),
                    rho.max_offdiag_z().unwrap_or(0.0),
                    rho.hermiticity_error()
                )
                .map_err(io_at(&dir, "spdm_summary.csv"))?;
            }
        }
        if let Some(w) = &mut self.energies {
            let n = graph.n_sites() as f64;
            let per: Vec<_> = states.iter().map(|s| classical_energy(graph, s)).collect::<Result<_, _>>()?;
            let est = |f: &dyn Fn(&bh_core::lattice::Energy) -> f64| {
                Estimate::from_samples(&per.iter().map(|e| f(e) / n).collect::<Vec<_>>())
            };
            let (k, p, tot) = (est(&|e| e.kinetic), est(&|e| e.potential), est(&|e| e.total));
            writeln!(w, "{t},{},{},{},{},{},{}", k.mean, k.stderr, p.mean, p.stderr, tot.mean, tot.stderr)
                .map_err(io_at(&dir, "energies.csv"))?;
        }
        if let Some(rec) = &mut self.transport {
            rec.push(states, graph, t)?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<Option<TransportRecord>, CliError> {
        let dir = self.dir.clone();
        self.counts.flush().map_err(io_at(&dir, "counts.csv"))?;
        for w in [self.populations.as_mut(), self.energies.as_mut()].into_iter().flatten() {
            w.flush().map_err(io_at(&dir, "populations.csv"))?;
        }
        if let Some((d, s)) = &mut self.bloch {
            d.flush().map_err(io_at(&dir, "bloch_diag.csv"))?;
            s.flush().map_err(io_at(&dir, "spdm_summary.csv"))?;
        }
        Ok(self.transport)
    }
}

/// Evolves a two-ring ensemble and records only the transport observables.
pub fn transport_run(
    graph: &SiteGraph,
    inits: &[(Region, RegionState)],
    n_traj: usize,
    seed: u64,
    dt: f64,
    times: &[f64],
) -> Result<TransportRecord, CliError> {
    let ens = sample_lattice_ensemble(graph, inits, n_traj, seed)?;
    let (steps, _) = schedule(times, dt)?;
    let prop = Propagator::new(graph, dt)?;
    let mut states = ens.states;
    let mut rec = TransportRecord::new(graph.layout().ring_size());
    let mut done = 0;
    for s in steps {
        prop.advance_states(&mut states, s - done, Execution::Auto);
        done = s;
        rec.push(&states, graph, s as f64 * dt)?;
    }
    Ok(rec)
}

fn transport_scan(
    output: &mut Output,
    scenario: &Scenario,
    resolved: &Resolved,
    spec: &TransportSpec,
    main: TransportRecord,
    warnings: &mut Vec<String>,
) -> Result<Vec<TransportSummary>, CliError> {
    let base_eps = match scenario.layout {
        Layout::TwoRingsPoint { epsilon, .. } | Layout::TwoRingsChain { epsilon, .. } => epsilon,
        Layout::Ring { .. } => unreachable!("checked by resolve"),
    };
    output.write_with("transport.csv", |w| main.write_csv(w))?;
    let epsilons = if spec.epsilon_scan.is_empty() { vec![base_eps] } else { spec.epsilon_scan.clone() };
    let seeds = if spec.seeds.is_empty() { vec![scenario.run.seed] } else { spec.seeds.clone() };
    let hop = scenario.physics.j;
    let mut fit_rows = Vec::new();
    let mut summaries = Vec::new();
    for (ie, &eps) in epsilons.iter().enumerate() {
        let layout = match scenario.layout {
            Layout::TwoRingsPoint { m, .. } => Layout::TwoRingsPoint { m, epsilon: eps },
            Layout::TwoRingsChain { m, chain_len, .. } => Layout::TwoRingsChain { m, chain_len, epsilon: eps },
            Layout::Ring { .. } => unreachable!(),
        };
        let graph = layout.build(&scenario.couplings())?;
        let mut kappas = Vec::new();
        let mut rates = Vec::new();
        let mut r2_min = f64::NAN;
        for &seed in &seeds {
            let rec = if eps == base_eps && seed == scenario.run.seed {
                main.clone()
            } else {
                transport_run(&graph, &resolved.inits, scenario.run.n_traj, seed, scenario.run.dt, &resolved.times)?
            };
            output.write_with(&format!("transport_eps{ie}_seed{seed}.csv"), |w| rec.write_csv(w))?;
            let window = match spec.window {
                Some([a, b]) => Some((a, b)),
                None => rec.auto_window(),
            };
            let Some(window) = window else {
                warnings.push(format!("epsilon {eps}, seed {seed}: no fit window"));
                continue;
            };
            let fit = transport_fit(&rec, window);
            let gamma = extract_gamma(&rec, hop, eps, window);
            if let Err(e) = &fit {
                warnings.push(format!("epsilon {eps}, seed {seed}: {e}"));
            }
            if let Err(e) = &gamma {
                warnings.push(format!("epsilon {eps}, seed {seed}: {e}"));
            }
            let (s, z, r2) = fit.as_ref().map_or((f64::NAN, f64::NAN, f64::NAN), |f| (f.decay_rate, f.z_slope, f.r_squared));
            if let Ok(f) = &fit {
                rates.push(f.decay_rate);
                r2_min = if r2_min.is_nan() { f.r_squared } else { r2_min.min(f.r_squared) };
            }
            let (kappa, kerr, big_g, rate) = match &gamma {
                Ok(g) => (g.kappa, g.kappa_stderr, g.gamma, g.thermalization_rate),
                Err(_) => (f64::NAN, f64::NAN, f64::NAN, f64::NAN),
            };
            if gamma.is_ok() {
                kappas.push(kappa);
            }
            fit_rows.push(format!(
                "{eps},{seed},{},{},{s},{z},{r2},{kappa},{kerr},{big_g},{rate}",
                window.0, window.1
            ));
        }
        let k = Estimate::from_samples(&kappas);
        let g = bh_core::observables::relaxation_rate(k.mean, hop).ok();
        summaries.push(TransportSummary {
            epsilon: eps,
            seeds: seeds.clone(),
            kappa: k.mean,
            kappa_stderr: k.stderr,
            gamma: g,
            thermalization_rate: g.map(|g| eps * eps / g),
            decay_rate: Estimate::from_samples(&rates).mean,
            r_squared_min: r2_min,
        });
    }
    output.write_with("transport_fit.csv", |w| {
        writeln!(w, "epsilon,seed,t_lo,t_hi,decay_rate,z_slope,r_squared,kappa,kappa_stderr,Gamma,gamma_rate")?;
        fit_rows.iter().try_for_each(|r| writeln!(w, "{r}"))
    })?;
    output.write_with("transport_summary.csv", |w| {
        writeln!(w, "epsilon,n_seeds,kappa,kappa_stderr,Gamma,gamma_rate,decay_rate,r_squared_min")?;
        summaries.iter().try_for_each(|s| {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                s.epsilon,
                s.seeds.len(),
                s.kappa,
                s.kappa_stderr,
                opt(s.gamma),
                opt(s.thermalization_rate),
                s.decay_rate,
                s.r_squared_min
            )
        })
    })?;
    Ok(summaries)
}

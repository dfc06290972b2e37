use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use zoll_core::coherent::{propagate_beam, SphereState};
use zoll_core::config::ExperimentConfig;
use zoll_core::detector::detect;
use zoll_core::flow::PeriodicOrbit;
use zoll_core::functionals::{g2, g2_prime, g2_t, PhaseGrid};
use zoll_core::gramian::{observability_constant, sandwich_bracket, GramianBase, Horizon, DEFAULT_BASIS_CAP};
use zoll_core::measures::{
    decompose_along, g1, g1_prime, g1_second, invariant_family, measure_eval, parse_measure, ql_family, FamilySettings,
    InvariantMeasure, Variant,
};
use zoll_core::observable::Observable;
use zoll_core::plots::{emit_plots, PlotStyle};
use zoll_core::region::{parse_number, Region};
use zoll_core::spectral::eigenbasis;
use zoll_core::suites::{functional_settings, load_spectrum, measure_settings, run_suite, write_artifacts};
use zoll_core::{Error, Result};

/// Geodesic-flow functionals, spectral observability and Zoll detection.
#[derive(Parser)]
#[command(name = "zoll-lab", version)]
struct Cli {
    /// Experiment configuration (`[section]` + `key = value`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Model when no configuration is given: sphere, torus, zoll_revolution_demo, round_revolution.
    #[arg(long, global = true)]
    model: Option<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a named suite: chain, zoll-equalities, sphere-ql, torus-witness, observability, detector, coherent.
    Suite {
        name: String,
        /// Also write SVG plots.
        #[arg(long)]
        plots: bool,
    },
    /// Geometric functionals of one observable.
    Functionals(FunctionalsArgs),
    /// Invariant measures and spectral functionals.
    Measures {
        #[command(subcommand)]
        cmd: MeasuresCmd,
    },
    /// Spectral Zoll test on a built-in spectrum (`sphere`, `torus`) or a file of eigenvalues.
    DetectZoll {
        #[arg(long)]
        spectrum: Option<String>,
        #[arg(long)]
        cutoff: Option<String>,
        /// Exit with status 2 unless the verdict matches.
        #[arg(long)]
        expect: Option<String>,
    },
    /// Observability constants C_T and their bracket.
    Observability {
        #[arg(long)]
        region: Option<String>,
        /// Comma-separated horizons, e.g. `2*pi,4*pi`.
        #[arg(long = "T-list")]
        t_list: Option<String>,
        #[arg(long)]
        lmax: Option<String>,
    },
    /// Gaussian beam on the round sphere.
    Coherent {
        #[arg(long)]
        k: Option<String>,
        /// `lat,lon`.
        #[arg(long)]
        center: Option<String>,
        #[arg(long)]
        direction: Option<String>,
        #[arg(long = "t-list")]
        t_list: Option<String>,
        #[arg(long = "tube-r")]
        tube_r: Option<String>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    All,
    G2t,
    G2,
    G2p,
}

#[derive(Args)]
struct FunctionalsArgs {
    /// `const(c)`, `indicator(R)`, `mollifier(R,k)` or `smooth(name)`.
    #[arg(long, conflicts_with = "region")]
    observable: Option<String>,
    /// Region descriptor; its indicator is the observable.
    #[arg(long)]
    region: Option<String>,
    #[arg(long = "T")]
    t: Option<String>,
    #[arg(long)]
    doublings: Option<usize>,
    /// `BASExDIRECTIONS`, e.g. `48x64`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_enum, default_value = "all")]
    functional: Which,
}

#[derive(Args)]
struct ObsArgs {
    #[arg(long, conflicts_with = "region")]
    observable: Option<String>,
    #[arg(long)]
    region: Option<String>,
}

#[derive(Subcommand)]
enum MeasuresCmd {
    /// ∫ a dμ for a measure given as text (`liouville`, `great_circle(a,b,c)`, `0.5*M1 + 0.5*M2`, …) or a JSON file.
    Eval {
        #[arg(long)]
        measure: String,
        #[command(flatten)]
        obs: ObsArgs,
    },
    /// Truncated spectral functional g1.
    G1 {
        #[command(flatten)]
        obs: ObsArgs,
        #[arg(long)]
        lmax: Option<String>,
    },
    /// Infimum over the built-in invariant family.
    G1pp {
        #[command(flatten)]
        obs: ObsArgs,
    },
    /// Infimum over known quantum-limit candidates.
    G1p {
        #[command(flatten)]
        obs: ObsArgs,
    },
    /// Splits off the component of a measure carried by a periodic orbit.
    Decompose {
        #[arg(long)]
        measure: String,
        /// A single periodic-orbit measure, e.g. `great_circle(0,0,1)`.
        #[arg(long)]
        orbit: String,
    },
}

fn num(text: &str, flag: &str) -> Result<f64> {
    parse_number(text.trim()).map_err(|_| Error::Input(format!("--{flag}: `{text}` is not a number")))
}

fn nums(text: &str, flag: &str) -> Result<Vec<f64>> {
    text.split(',').map(|x| num(x, flag)).collect()
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    match (&cli.config, &cli.model) {
        (Some(path), model) => {
            let cfg = ExperimentConfig::parse(&std::fs::read_to_string(path)?)?;
            if let Some(m) = model {
                if m != cfg.model.name() {
                    return Err(Error::Input(format!(
                        "--model {m} contradicts the configuration's {}",
                        cfg.model.name()
                    )));
                }
            }
            Ok(cfg)
        }
        (None, model) => ExperimentConfig::defaults(model.as_deref().unwrap_or("sphere")),
    }
}

fn observable(cfg: &ExperimentConfig, obs: &Option<String>, region: &Option<String>) -> Result<Observable> {
    match (obs, region) {
        (Some(o), _) => Observable::parse(cfg.model, o),
        (None, Some(r)) => Ok(Observable::indicator(&Region::parse(cfg.model, r)?)),
        (None, None) => Err(Error::Input("give --observable or --region".into())),
    }
}

fn measure(cfg: &ExperimentConfig, text: &str) -> Result<InvariantMeasure> {
    if text.ends_with(".json") {
        let m: InvariantMeasure = serde_json::from_str(&std::fs::read_to_string(text)?)?;
        if m.model != cfg.model {
            return Err(Error::Input(format!("measure lives on the {}, not the {}", m.model.name(), cfg.model.name())));
        }
        Ok(m)
    } else {
        parse_measure(cfg.model, text)
    }
}

fn write_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value)?)?;
    Ok(path)
}

fn write_csv(out: &Path, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e.to_string()));
    let mut w = csv::Writer::from_path(&path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string())).map_err(io)?;
    }
    w.flush()?;
    Ok(path)
}

/// Ok(true) on pass, Ok(false) on a failed verdict.
fn run(cli: &Cli) -> Result<bool> {
    let mut cfg = load_config(cli)?;
    let out = cli.out.as_path();
    match &cli.cmd {
        Cmd::Suite { name, plots } => {
            let report = run_suite(name, &cfg, None)?;
            for c in &report.checks {
                println!(
                    "{} {}: {} {:?} {} (tol {})",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.lhs,
                    c.relation,
                    c.rhs,
                    c.tol
                );
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            for p in write_artifacts(&report, out)? {
                println!("wrote {}", p.display());
            }
            if *plots {
                let (files, warnings) = emit_plots(&report, out, &PlotStyle::default())?;
                warnings.iter().for_each(|w| eprintln!("warning: {w}"));
                files.iter().for_each(|p| println!("wrote {}", p.display()));
            }
            println!("suite {name}: {}", if report.pass { "pass" } else { "fail" });
            Ok(report.pass)
        }
        Cmd::Functionals(a) => {
            let o = observable(&cfg, &a.observable, &a.region)?;
            if let Some(t) = &a.t {
                cfg.t = num(t, "T")?;
            }
            if let Some(k) = a.doublings {
                cfg.doublings = k;
            }
            if let Some(g) = &a.grid {
                let (b, d) = g.split_once('x').ok_or_else(|| Error::Input("--grid expects BASExDIRECTIONS".into()))?;
                cfg.grid_base = b.parse().map_err(|_| Error::Input(format!("--grid: bad base count `{b}`")))?;
                cfg.grid_directions =
                    d.parse().map_err(|_| Error::Input(format!("--grid: bad direction count `{d}`")))?;
            }
            let grid = PhaseGrid::new(cfg.model, cfg.grid_base, cfg.grid_directions)?;
            let fs = functional_settings(&cfg);
            let mut reports = Vec::new();
            if matches!(a.functional, Which::All | Which::G2t) {
                reports.push(g2_t(&o, cfg.t, &grid, &fs)?);
            }
            if matches!(a.functional, Which::All | Which::G2) {
                reports.push(g2(&o, cfg.t, cfg.doublings, &grid, &fs)?);
            }
            if matches!(a.functional, Which::All | Which::G2p) {
                reports.push(g2_prime(&o, &grid, &cfg.horizons, &fs)?);
            }
            for r in &reports {
                println!("{} {} = {}", r.functional, r.observable, r.value);
                r.warnings.iter().for_each(|w| eprintln!("warning: {w}"));
            }
            println!("wrote {}", write_json(out, "functionals.json", &reports)?.display());
            Ok(true)
        }
        Cmd::Measures { cmd } => {
            let ms = measure_settings(&cfg);
            let value = match cmd {
                MeasuresCmd::Eval { measure: m, obs } => {
                    let mu = measure(&cfg, m)?;
                    let a = observable(&cfg, &obs.observable, &obs.region)?;
                    let v = measure_eval(&mu, &a, &ms)?;
                    println!("{} = {v}", a.describe());
                    json!({ "measure": mu, "observable": a.describe(), "value": v })
                }
                MeasuresCmd::G1 { obs, lmax } => {
                    let a = observable(&cfg, &obs.observable, &obs.region)?;
                    let l = lmax.as_deref().map(|x| num(x, "lmax")).transpose()?.unwrap_or(cfg.lambda_max);
                    let r = g1(&a, &eigenbasis(&cfg.model, l)?)?;
                    println!("g1 {} = {}", r.observable, r.value);
                    serde_json::to_value(r)?
                }
                MeasuresCmd::G1pp { obs } => {
                    let a = observable(&cfg, &obs.observable, &obs.region)?;
                    let r = g1_second(&a, &invariant_family(cfg.model, &FamilySettings::default())?, &ms)?;
                    println!("g1_second {} = {}", r.observable, r.value);
                    serde_json::to_value(r)?
                }
                MeasuresCmd::G1p { obs } => {
                    let a = observable(&cfg, &obs.observable, &obs.region)?;
                    let r = g1_prime(&a, &ql_family(cfg.model, &FamilySettings::default())?, &ms)?;
                    println!("g1_prime {} = {}", r.observable, r.value);
                    serde_json::to_value(r)?
                }
                MeasuresCmd::Decompose { measure: m, orbit } => {
                    let mu = measure(&cfg, m)?;
                    let o = measure(&cfg, orbit)?;
                    let Variant::DiracPeriodicOrbit { start, period } = o.variant else {
                        return Err(Error::Input("--orbit must name a single periodic orbit".into()));
                    };
                    let (rest, a) = decompose_along(&mu, &PeriodicOrbit { start, period, residual: 0.0 })?;
                    println!("weight on the orbit = {a}");
                    json!({ "weight": a, "rest": rest })
                }
            };
            println!("wrote {}", write_json(out, "measures.json", &value)?.display());
            Ok(true)
        }
        Cmd::DetectZoll { spectrum, cutoff, expect } => {
            let source = spectrum.clone().unwrap_or(cfg.detector.source.clone());
            let cutoff = cutoff.as_deref().map(|c| num(c, "cutoff")).transpose()?.unwrap_or(cfg.detector.cutoff);
            let v = detect(&load_spectrum(&source, cutoff)?, &source, &cfg.detector.settings)?;
            let verdict = serde_json::to_value(v.verdict)?;
            let verdict = verdict.as_str().unwrap_or_default().to_string();
            println!("verdict: {verdict}");
            if let Some(n) = &v.net {
                println!("period {} sigma {} residual {}", n.period, n.sigma, n.max_residual);
            }
            println!("wrote {}", write_json(out, "detect-zoll.json", &v)?.display());
            match expect {
                Some(e) => Ok(*e == verdict),
                None => Ok(true),
            }
        }
        Cmd::Observability { region, t_list, lmax } => {
            let o = &mut cfg.observability;
            if let Some(r) = region {
                o.region = r.clone();
            }
            if let Some(t) = t_list {
                o.t_list = nums(t, "T-list")?;
            }
            if let Some(l) = lmax {
                o.lmax = num(l, "lmax")?;
            }
            let o = cfg.observability.clone();
            let table = eigenbasis(&cfg.model, o.lmax)?;
            let omega = Region::parse(cfg.model, &o.region)?;
            let w = Observable::indicator(&omega);
            let base = GramianBase::new(&table, &w, DEFAULT_BASIS_CAP)?;
            let grid = PhaseGrid::new(cfg.model, cfg.grid_base, cfg.grid_directions)?;
            let fs = functional_settings(&cfg);
            let g1v = g1(&w, &table)?.value;
            let g2o = g2(&Observable::indicator(&omega.interior()), cfg.t0, cfg.doublings, &grid, &fs)?.value;
            let g2c = g2(&Observable::indicator(&omega.closure()), cfg.t0, cfg.doublings, &grid, &fs)?.value;
            let (lo, hi) = sandwich_bracket(g1v, g2o, g2c);
            let mut rows = Vec::new();
            let mut pass = true;
            for &t in &o.t_list {
                let c = observability_constant(&base.at(Horizon::Finite(t))?)?;
                pass &= c >= lo - 5e-2 && c <= hi + 5e-2;
                println!("T = {t}: C_T = {c} bracket [{lo}, {hi}]");
                rows.push(vec![t, c, lo, hi]);
            }
            let csv = write_csv(out, "observability.csv", &["T", "C_T", "bracket_low", "bracket_high"], &rows)?;
            let meta = json!({
                "schema_version": zoll_core::report::SCHEMA_VERSION,
                "model": cfg.model.name(), "region": omega.descriptor(), "lmax": o.lmax,
                "g1": g1v, "g2_open": g2o, "g2_closed": g2c, "slack": 5e-2, "config_hash": cfg.hash,
            });
            let js = write_json(out, "observability.json", &meta)?;
            println!("wrote {}\nwrote {}", csv.display(), js.display());
            Ok(pass)
        }
        Cmd::Coherent { k, center, direction, t_list, tube_r } => {
            let c = &mut cfg.coherent;
            if let Some(v) = k {
                c.k = num(v, "k")?;
            }
            if let Some(v) = center {
                let v = nums(v, "center")?;
                if v.len() != 2 {
                    return Err(Error::Input("--center expects `lat,lon`".into()));
                }
                c.center = [v[0], v[1]];
            }
            if let Some(v) = direction {
                c.direction = num(v, "direction")?;
            }
            if let Some(v) = t_list {
                c.t_list = nums(v, "t-list")?;
            }
            if let Some(v) = tube_r {
                c.tube_r = num(v, "tube-r")?;
            }
            let c = cfg.coherent.clone();
            let state = SphereState::full(c.center, c.direction, c.k)?;
            let mut rows = Vec::new();
            let mut pass = true;
            for &t in &c.t_list {
                let b = propagate_beam(&state, t, c.tube_r)?;
                pass &= b.tube_mass >= c.min_mass && (b.total_mass - 1.0).abs() <= 1e-8;
                println!("t = {t}: mass in tube {} (total {})", b.tube_mass, b.total_mass);
                rows.push(vec![t, b.tube_mass]);
            }
            let csv = write_csv(out, "coherent.csv", &["t", "mass_in_tube"], &rows)?;
            let meta = json!({
                "schema_version": zoll_core::report::SCHEMA_VERSION,
                "k": c.k, "center": c.center, "direction": c.direction, "tube_r": c.tube_r,
                "degree": state.lmax, "min_mass": c.min_mass, "config_hash": cfg.hash,
            });
            let js = write_json(out, "coherent.json", &meta)?;
            println!("wrote {}\nwrote {}", csv.display(), js.display());
            Ok(pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

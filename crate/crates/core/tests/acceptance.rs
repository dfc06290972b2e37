//! Acceptance suite: twelve criteria, one PASS/FAIL line each.
//!
//! The lines go straight to stderr so they show up without `--nocapture`.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::Write;
use std::time::{Duration, Instant};

use zoll_core::config::ExperimentConfig;
use zoll_core::detector::{builtin_spectrum, detect, ulf_test, DetectorSettings, Verdict};
use zoll_core::functionals::{g2_t, FunctionalSettings, PhaseGrid};
use zoll_core::observable::Observable;
use zoll_core::region::Region;
use zoll_core::report::Certificate;
use zoll_core::suites::{run_suite, RunReport};
use zoll_core::surface::{cross, SurfaceModel};

struct Outcome {
    pass: bool,
    detail: String,
}

fn suite(name: &str, cfg: &str) -> (RunReport, Duration) {
    let cfg = ExperimentConfig::parse(cfg).unwrap();
    let t = Instant::now();
    let r = run_suite(name, &cfg, None).unwrap();
    (r, t.elapsed())
}

fn checks_with(r: &RunReport, pred: impl Fn(&str) -> bool) -> (bool, usize, Vec<String>) {
    let sel: Vec<_> = r.checks.iter().filter(|c| pred(&c.name)).collect();
    let failed: Vec<String> = sel
        .iter()
        .filter(|c| !c.pass)
        .map(|c| format!("{}: {} {:?} {} (tol {})", c.name, c.lhs, c.relation, c.rhs, c.tol))
        .collect();
    (!sel.is_empty() && failed.is_empty(), sel.len(), failed)
}

fn value(r: &RunReport, name: &str) -> f64 {
    r.find(name).unwrap_or_else(|| panic!("missing check `{name}`")).lhs
}

/// Fraction of a great circle of inclination `inc` with latitude satisfying
/// `inside`, by dense sampling; minimized over inclinations in 0.05° steps.
fn inclination_oracle(inside: impl Fn(f64) -> bool) -> (f64, f64) {
    let n = 20_000;
    let mut best = (f64::INFINITY, 0.0);
    for d in 0..=1800 {
        let inc = (d as f64 * 0.05).to_radians();
        let hits = (0..n)
            .filter(|&j| {
                let s = TAU * (j as f64 + 0.5) / n as f64;
                inside((inc.sin() * s.sin()).asin())
            })
            .count();
        let f = hits as f64 / n as f64;
        if f < best.0 {
            best = (f, inc);
        }
    }
    best
}

fn c1_chain() -> Outcome {
    let (s, ts) = suite("chain", "[model]\nkind = sphere\n");
    let (t, tt) = suite("chain", "[model]\nkind = torus\n");
    let obs = s.series("chain").unwrap().rows.len() + t.series("chain").unwrap().rows.len();
    let (ps, ns, fs) = checks_with(&s, |_| true);
    let (pt, nt, ft) = checks_with(&t, |_| true);
    let secs = (ts + tt).as_secs_f64();
    // Oracle: every great circle averages z to zero, so all five functionals of z vanish.
    let z = s.series("chain").unwrap().rows[0].clone();
    let z_ok = z[1..].iter().all(|v| v.abs() <= 2e-3);
    Outcome {
        pass: ps && pt && z_ok && obs == 20 && secs <= 300.0,
        detail: format!(
            "{obs} observables, {} chain relations, z oracle {z_ok}, {secs:.1}s; failures {:?}",
            ns + nt,
            [fs, ft].concat()
        ),
    }
}

fn c2_g1_vs_g1p(ql: &RunReport, secs: f64) -> Outcome {
    let (pc, n, f) = checks_with(ql, |c| c.ends_with("g1 <= g1_prime"));
    let g1o = value(ql, "open hemisphere: g1 = 1/2");
    let g1po = value(ql, "open hemisphere: g1_prime = 0");
    let open = (g1o - 0.5).abs() <= 1e-4 && g1po == 0.0;
    Outcome {
        pass: pc && n == 8 && open && secs <= 120.0,
        detail: format!(
            "{n} closed regions; open hemisphere g1 = {g1o:.6}, g1' = {g1po}; sphere-ql {secs:.1}s; failures {f:?}"
        ),
    }
}

fn c3_zoll(z: &RunReport, w: &RunReport) -> Outcome {
    let (pe, n, f) = checks_with(z, |c| c.contains(" = "));
    // Oracle: g2 at 2π on a zonal region is the least fraction of a great circle inside it.
    let cfg = ExperimentConfig::defaults("sphere").unwrap();
    let rows = &z.series("equalities").unwrap().rows;
    let mut worst: f64 = 0.0;
    for (text, row) in cfg.zoll.regions.iter().zip(rows) {
        let r = Region::parse(SurfaceModel::sphere(), text).unwrap();
        let (oracle, _) = inclination_oracle(|lat| r.contains(&[lat.cos(), 0.0, lat.sin()]));
        worst = worst.max((row[1] - oracle).abs());
    }
    let stab: Vec<f64> = z.series("stabilization").unwrap().rows.iter().map(|r| r[2]).collect();
    let (pw, _, fw) = checks_with(w, |_| true);
    let g2w = value(w, "witness: g2");
    let tail = value(w, "witness: tail average at K = 8");
    Outcome {
        pass: pe && worst <= 2e-3 && pw,
        detail: format!(
            "{n} sphere checks, max |g2_2pi - oracle| {worst:.2e}, T_stab {stab:?}; torus witness g2 = {g2w}, tail average {tail:.4}; failures {:?}",
            [f, fw].concat()
        ),
    }
}

fn c4_band() -> Outcome {
    let s = SurfaceModel::sphere();
    let band = Observable::indicator(&Region::parse(s, "band(|lat|<=pi/6)").unwrap());
    let r = g2_t(&band, TAU, &PhaseGrid::default_for(s).unwrap(), &FunctionalSettings::default()).unwrap();
    let (oracle, oracle_inc) = inclination_oracle(|lat| lat.abs() <= PI / 6.0);
    let Certificate::PhasePoint { point, .. } = r.certificate else { panic!("no minimizer") };
    let st = s.to_state(&point);
    let inc = cross(&st.p, &st.v)[2].abs().min(1.0).acos();
    let pass =
        (r.value - 1.0 / 3.0).abs() <= 1e-3 && (r.value - oracle).abs() <= 1e-3 && (inc - FRAC_PI_2).abs() <= 0.02;
    Outcome {
        pass,
        detail: format!(
            "g2_2pi = {:.6}, oracle {oracle:.6} at {oracle_inc:.4}, minimizer inclination {inc:.4}",
            r.value
        ),
    }
}

fn c5_hemisphere(ql: &RunReport) -> Outcome {
    let d = value(ql, "closed hemisphere: max |diagonal - 1/2|");
    let g = value(ql, "closed hemisphere: g1 = 1/2");
    let lmax = ql.series("hemisphere_diagonals").unwrap().rows.last().unwrap()[0];
    Outcome {
        pass: d <= 1e-6 && (g - 0.5).abs() <= 1e-6 && lmax >= 30.0,
        detail: format!("l <= {lmax}, max |diag - 1/2| = {d:.2e}, g1 = {g:.10}"),
    }
}

fn c6_detector() -> Outcome {
    let t = Instant::now();
    let set = DetectorSettings::default();
    let sv = detect(&builtin_spectrum("sphere", 60.0).unwrap(), "sphere", &set).unwrap();
    let tv = detect(&builtin_spectrum("torus", 40.0).unwrap(), "torus", &set).unwrap();
    let ulf = ulf_test(&builtin_spectrum("torus", 40.0).unwrap(), 0.5, 5).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let net = sv.net.clone().unwrap();
    let pass = sv.verdict == Verdict::ZollConsistent
        && (net.period - TAU).abs() <= 0.01 * TAU
        && (net.sigma - 0.5).abs() <= 0.02
        && net.max_residual <= 0.023
        && tv.verdict == Verdict::NotZollConsistent
        && !ulf.flag
        && tv.histogram.covered_fraction >= 0.8
        && secs <= 30.0;
    Outcome {
        pass,
        detail: format!(
            "sphere T = {:.5}, sigma = {:.4}, residual {:.2e}; torus ULF worst count {} at {:.3}, covered {:.3}; {secs:.2}s",
            net.period, net.sigma, net.max_residual, ulf.worst, ulf.at, tv.histogram.covered_fraction
        ),
    }
}

fn c7_sandwich(o: &RunReport) -> Outcome {
    let (p, n, f) = checks_with(o, |c| c.starts_with("T = ") && !c.starts_with("T = inf"));
    let rows = &o.series("sandwich").unwrap().rows;
    let raw: Vec<String> = rows.iter().map(|r| format!("C_{:.4} = {:.3e}", r[0], r[1])).collect();
    Outcome {
        pass: p && n == 9,
        detail: format!(
            "{} bracket [{:.3e}, {:.3e}] +- 0.05; {}; failures {f:?}",
            n,
            rows[0][2],
            rows[0][3],
            raw.join(", ")
        ),
    }
}

fn c8_convergence(o: &RunReport) -> Outcome {
    let slope = value(o, "probe: envelope log-log slope");
    let raw = o.warnings.iter().find(|w| w.contains("raw log-log slope")).cloned().unwrap_or_default();
    let (p, _, f) = checks_with(o, |c| c.starts_with("probe") || c.starts_with("T = inf"));
    Outcome {
        pass: p && (-1.25..=-0.75).contains(&slope),
        detail: format!("envelope slope {slope:.4} ({raw}); failures {f:?}"),
    }
}

fn c9_mv(o: &RunReport) -> Outcome {
    let v = value(o, "bilinear inequality: violations");
    let ratio = o.warnings.iter().find(|w| w.contains("lhs/bound")).cloned().unwrap_or_default();
    Outcome { pass: v == 0.0, detail: format!("100 trials, {v} violations ({ratio})") }
}

fn c10_coherent(c: &RunReport) -> Outcome {
    let (p, n, f) = checks_with(c, |_| true);
    let min_mass = c.series("beam").unwrap().column("mass_in_tube").unwrap().into_iter().fold(f64::INFINITY, f64::min);
    Outcome { pass: p, detail: format!("{n} checks, least beam mass in tube {min_mass:.6}; failures {f:?}") }
}

fn c11_mixtures(ql: &RunReport) -> Outcome {
    let w = value(ql, "mixtures: max weight error");
    let d = value(ql, "mixtures: max pushforward defect");
    let n = ql.series("mixtures").unwrap().rows.len();
    Outcome {
        pass: n == 50 && w <= 1e-12 && d <= 1e-8,
        detail: format!("{n} mixtures, weight error {w:.2e}, pushforward defect on 10 functions {d:.2e}"),
    }
}

fn c12_mollifiers(ql: &RunReport) -> Outcome {
    let (p, _, f) = checks_with(ql, |c| c.contains("h_k"));
    let rows = &ql.series("mollifiers").unwrap().rows;
    let (last, lim) = (&rows[rows.len() - 2], &rows[rows.len() - 1]);
    Outcome {
        pass: p,
        detail: format!(
            "open: g2_2pi(h_32) = {:.5} vs {:.5}; closed: g1(h_32) = {:.6} vs {:.6}; failures {f:?}",
            last[1], lim[1], last[2], lim[2]
        ),
    }
}

#[test]
fn acceptance() {
    let t = Instant::now();
    let (ql, ql_time) = suite("sphere-ql", "[model]\nkind = sphere\n");
    let (zoll, _) = suite("zoll-equalities", "[model]\nkind = sphere\n");
    let (witness, _) = suite("torus-witness", "[model]\nkind = torus\n[witness]\nk_max = 8\n");
    let (obs, _) = suite(
        "observability",
        "[model]\nkind = sphere\n[observability]\nregion = cap(lat>=pi/4)\nlmax = 12\ntrials = 100\n",
    );
    let (coh, _) = suite("coherent", "[model]\nkind = sphere\n[coherent]\nk = 400\ntube_r = 0.3\n");

    let outcomes = [
        ("inequality chain", c1_chain()),
        ("g1 <= g1' and the open hemisphere", c2_g1_vs_g1p(&ql, ql_time.as_secs_f64())),
        ("Zoll equalities and torus witness", c3_zoll(&zoll, &witness)),
        ("band closed form", c4_band()),
        ("hemisphere mass diagonals", c5_hemisphere(&ql)),
        ("spectral detector", c6_detector()),
        ("observability sandwich", c7_sandwich(&obs)),
        ("norm convergence under a gap", c8_convergence(&obs)),
        ("bilinear inequality", c9_mv(&obs)),
        ("coherent states", c10_coherent(&coh)),
        ("mixture decomposition", c11_mixtures(&ql)),
        ("mollifier limits", c12_mollifiers(&ql)),
    ];
    let mut err = std::io::stderr().lock();
    let mut failed = Vec::new();
    for (i, (name, o)) in outcomes.iter().enumerate() {
        writeln!(err, "{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail).unwrap();
        if !o.pass {
            failed.push(i + 1);
        }
    }
    writeln!(err, "acceptance total {:.1}s", t.elapsed().as_secs_f64()).unwrap();
    assert!(failed.is_empty(), "failed criteria {failed:?}");
}

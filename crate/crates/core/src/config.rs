//! Experiment configuration files.
//!
//! Grammar (UTF-8, one item per line):
//!
//! ```text
//! line    := blank | comment | header | pair
//! comment := ('#' | ';') any                  first non-blank character
//! header  := '[' name ']'
//! pair    := name '=' value [ws '#' any]      value is trimmed
//! name    := [a-z0-9_]+
//! ```
//!
//! Keys are addressed as `section.name`. Number values accept the region
//! syntax (`0.5`, `pi/6`, `2*pi`); number lists are comma-separated and
//! descriptor lists (regions, observables) are semicolon-separated. Unknown
//! sections or keys, duplicates and malformed values are errors naming the
//! line and key.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::detector::{DetectorSettings, Verdict};
use crate::error::{Error, Result};
use crate::flow::FlowSettings;
use crate::region::{parse_number, Region};
use crate::surface::SurfaceModel;

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "model.kind",
    "model.profile",
    "flow.step",
    "flow.nodes_per_unit_time",
    "flow.period_tol",
    "functionals.grid_base",
    "functionals.grid_directions",
    "functionals.refine_seeds",
    "functionals.t",
    "functionals.t0",
    "functionals.doublings",
    "functionals.horizons",
    "functionals.tolerance",
    "observables.smooth",
    "observables.regions",
    "observables.mollifier_k",
    "spectral.lambda_max",
    "measures.mixtures",
    "measures.closed_regions",
    "measures.mollifier_open",
    "measures.mollifier_closed",
    "measures.mollifier_ks",
    "zoll.regions",
    "zoll.stab_regions",
    "zoll.stab_tol",
    "detector.source",
    "detector.cutoff",
    "detector.window",
    "detector.bins",
    "detector.expect",
    "observability.region",
    "observability.t_list",
    "observability.lmax",
    "observability.trials",
    "observability.probe_region",
    "observability.probe_horizons",
    "coherent.k",
    "coherent.center",
    "coherent.direction",
    "coherent.t_list",
    "coherent.tube_r",
    "coherent.min_mass",
    "coherent.pairing_k",
    "coherent.symbols",
    "witness.k_max",
    "witness.tube_radius",
    "witness.t0",
    "witness.doublings",
    "run.seed",
];

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

/// Parsed `section.key → value` pairs with their line numbers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Entry>,
}

fn valid_name(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let t = raw.trim();
            if t.is_empty() || t.starts_with('#') || t.starts_with(';') {
                continue;
            }
            if let Some(rest) = t.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .map(str::trim)
                    .filter(|n| valid_name(n))
                    .ok_or_else(|| Error::Config { line, key: t.into(), msg: "malformed section header".into() })?;
                if !KEYS.iter().any(|k| k.split('.').next() == Some(name)) {
                    return Err(Error::Config { line, key: name.into(), msg: "unknown section".into() });
                }
                section = Some(name.into());
                continue;
            }
            let Some((k, v)) = t.split_once('=') else {
                return Err(Error::Config { line, key: t.into(), msg: "expected `key = value`".into() });
            };
            let k = k.trim();
            let Some(sec) = &section else {
                return Err(Error::Config { line, key: k.into(), msg: "key outside any section".into() });
            };
            if !valid_name(k) {
                return Err(Error::Config { line, key: k.into(), msg: "malformed key".into() });
            }
            let full = format!("{sec}.{k}");
            if !KEYS.contains(&full.as_str()) {
                return Err(Error::Config { line, key: full, msg: "unknown key".into() });
            }
            let mut value = v.trim();
            if let Some(pos) = value.find(" #").or_else(|| value.find("\t#")) {
                value = value[..pos].trim_end();
            }
            if value.is_empty() {
                return Err(Error::Config { line, key: full, msg: "empty value".into() });
            }
            if let Some(prev) = entries.get(&full) {
                let prev: &Entry = prev;
                return Err(Error::Config {
                    line,
                    key: full,
                    msg: format!("duplicate key (first set on line {})", prev.line),
                });
            }
            entries.insert(full, Entry { value: value.into(), line });
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn line_of(&self, key: &str) -> usize {
        self.entries.get(key).map_or(0, |e| e.line)
    }

    fn err(&self, key: &str, msg: impl Into<String>) -> Error {
        Error::Config { line: self.line_of(key), key: key.into(), msg: msg.into() }
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => parse_number(v).map_err(|_| self.err(key, format!("`{v}` is not a number"))),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| self.err(key, format!("`{v}` is not a non-negative integer"))),
        }
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|x| parse_number(x.trim()).map_err(|_| self.err(key, format!("`{}` is not a number", x.trim()))))
                .collect(),
        }
    }

    pub fn str_list_or(&self, key: &str, default: &[&str]) -> Vec<String> {
        match self.get(key) {
            None => default.iter().map(|s| s.to_string()).collect(),
            Some(v) => v.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Built-in model tag or a path to a text file of eigenvalues.
    pub source: String,
    pub cutoff: f64,
    pub expect: Option<Verdict>,
    pub settings: DetectorSettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityConfig {
    pub region: String,
    pub t_list: Vec<f64>,
    pub lmax: f64,
    pub trials: usize,
    /// Region and horizons for the norm-convergence probe.
    pub probe_region: String,
    pub probe_horizons: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasuresConfig {
    pub mixtures: usize,
    /// Closed regions for g1 ≤ g1′.
    pub closed_regions: Vec<String>,
    /// Open region whose g2ᵀ is approached by mollifiers from below.
    pub mollifier_open: String,
    /// Closed region whose g1 is approached by mollifiers from above.
    pub mollifier_closed: String,
    pub mollifier_ks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZollConfig {
    pub regions: Vec<String>,
    /// Regions for the stabilization horizon; they must not be antipodally
    /// symmetric, or the infimum is already attained at T = π.
    pub stab_regions: Vec<String>,
    pub stab_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessConfig {
    pub k_max: usize,
    pub tube_radius: f64,
    pub t0: f64,
    pub doublings: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherentConfig {
    pub k: f64,
    /// (latitude, longitude).
    pub center: [f64; 2],
    pub direction: f64,
    pub t_list: Vec<f64>,
    pub tube_r: f64,
    pub min_mass: f64,
    pub pairing_k: Vec<f64>,
    pub symbols: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: SurfaceModel,
    pub flow: FlowSettings,
    pub grid_base: usize,
    pub grid_directions: usize,
    pub refine_seeds: usize,
    pub t: f64,
    pub t0: f64,
    pub doublings: usize,
    pub horizons: Vec<f64>,
    pub tolerance: f64,
    pub smooth: Vec<String>,
    pub regions: Vec<String>,
    pub mollifier_k: f64,
    pub lambda_max: f64,
    pub measures: MeasuresConfig,
    pub zoll: ZollConfig,
    pub detector: DetectorConfig,
    pub observability: ObservabilityConfig,
    pub coherent: CoherentConfig,
    pub witness: WitnessConfig,
    pub seed: u64,
    /// SHA-256 of the configuration text.
    pub hash: String,
}

fn model_from(raw: &RawConfig) -> Result<SurfaceModel> {
    let kind = raw.get("model.kind").unwrap_or("sphere");
    let name = match (kind, raw.get("model.profile")) {
        ("revolution", Some("zoll_demo") | None) => "zoll_revolution_demo",
        ("revolution", Some("round")) => "round_revolution",
        ("revolution", Some(p)) => return Err(raw.err("model.profile", format!("unknown profile `{p}`"))),
        (k, Some(_)) if k != "revolution" => {
            return Err(raw.err("model.profile", "profiles apply to `revolution` only"))
        }
        (k, _) => k,
    };
    SurfaceModel::from_name(name).map_err(|e| raw.err("model.kind", e.to_string()))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw = RawConfig::parse(text)?;
        let model = model_from(&raw)?;
        let fd = FlowSettings::default();
        let flow = FlowSettings {
            step: raw.f64_or("flow.step", fd.step)?,
            nodes_per_unit_time: raw.usize_or("flow.nodes_per_unit_time", fd.nodes_per_unit_time)?,
            period_tol: raw.f64_or("flow.period_tol", fd.period_tol)?,
            ..fd
        };
        if !(flow.step > 0.0) {
            return Err(raw.err("flow.step", "must be positive"));
        }
        if flow.nodes_per_unit_time == 0 {
            return Err(raw.err("flow.nodes_per_unit_time", "must be positive"));
        }
        let default_horizons: Vec<f64> = (4..=16).map(|k| TAU * k as f64).collect();
        let (default_smooth, default_regions): (&[&str], &[&str]) = match model.name() {
            "torus" => (
                &["cos_x1", "cos_x1_plus_cos_x2", "sin2_x2_cos_x1", "xi1_sq", "xi1_sq_cos_x1"],
                &["strip(0,1)", "strip(1,3,x2)", "tube(torus_diag,0.3)", "tube(torus_h,0.5)", "strip(0,pi)"],
            ),
            "sphere" => (
                &["z", "z2", "x2_minus_z2", "one_plus_xy", "lz2_half_z"],
                &["cap(lat>=pi/6)", "band(|lat|<=pi/6)", "tube(meridian,0.3)", "cap(lat<=-pi/4)", "band(|lat|<=pi/4)"],
            ),
            _ => (&[], &["cap(lat>=pi/6)", "band(|lat|<=pi/6)"]),
        };
        let dd = DetectorSettings::default();
        let expect = match raw.get("detector.expect") {
            None => None,
            Some("zoll-consistent") => Some(Verdict::ZollConsistent),
            Some("not-zoll-consistent") => Some(Verdict::NotZollConsistent),
            Some("inconclusive") => Some(Verdict::Inconclusive),
            Some(v) => return Err(raw.err("detector.expect", format!("unknown verdict `{v}`"))),
        };
        let center = raw.f64_list_or("coherent.center", &[0.0, 0.0])?;
        if center.len() != 2 {
            return Err(raw.err("coherent.center", "expected `lat, lon`"));
        }
        let cfg = Self {
            model,
            flow,
            grid_base: raw.usize_or("functionals.grid_base", 48)?,
            grid_directions: raw.usize_or("functionals.grid_directions", 64)?,
            refine_seeds: raw.usize_or("functionals.refine_seeds", 8)?,
            t: raw.f64_or("functionals.t", TAU)?,
            t0: raw.f64_or("functionals.t0", TAU)?,
            doublings: raw.usize_or("functionals.doublings", 3)?,
            horizons: raw.f64_list_or("functionals.horizons", &default_horizons)?,
            tolerance: raw.f64_or("functionals.tolerance", 2e-3)?,
            smooth: raw.str_list_or("observables.smooth", default_smooth),
            regions: raw.str_list_or("observables.regions", default_regions),
            mollifier_k: raw.f64_or("observables.mollifier_k", 8.0)?,
            lambda_max: raw.f64_or("spectral.lambda_max", 30.0)?,
            measures: MeasuresConfig {
                mixtures: raw.usize_or("measures.mixtures", 50)?,
                closed_regions: raw.str_list_or(
                    "measures.closed_regions",
                    &[
                        "cap(lat>=pi/6)",
                        "cap(lat>=-pi/6)",
                        "band(|lat|<=pi/6)",
                        "band(|lat|<=pi/4)",
                        "cap(lat<=-pi/4)",
                        "tube(meridian,0.3)",
                        "closure(nbhd(equator,0.2))",
                        "cap(lat>=0)",
                    ],
                ),
                mollifier_open: raw.get("measures.mollifier_open").unwrap_or("cap(lat>-pi/6)").into(),
                mollifier_closed: raw.get("measures.mollifier_closed").unwrap_or("cap(lat>=0)").into(),
                mollifier_ks: raw.f64_list_or("measures.mollifier_ks", &[1.0, 2.0, 4.0, 8.0, 16.0, 32.0])?,
            },
            zoll: ZollConfig {
                regions: raw.str_list_or(
                    "zoll.regions",
                    &[
                        "band(|lat|<=pi/6)",
                        "band(|lat|<=pi/4)",
                        "cap(lat>=pi/6)",
                        "cap(lat>=-pi/6)",
                        "cap(lat<=-pi/4)",
                        "band(|lat|<=pi/3)",
                    ],
                ),
                stab_regions: raw.str_list_or("zoll.stab_regions", &["cap(lat>=-pi/6)", "cap(lat>=-pi/4)"]),
                stab_tol: raw.f64_or("zoll.stab_tol", 1e-3)?,
            },
            detector: DetectorConfig {
                source: raw.get("detector.source").unwrap_or(model.name()).into(),
                cutoff: raw.f64_or("detector.cutoff", if model.is_torus() { 40.0 } else { 60.0 })?,
                expect,
                settings: DetectorSettings {
                    window: raw.f64_or("detector.window", dd.window)?,
                    bins: raw.usize_or("detector.bins", dd.bins)?,
                    ..dd
                },
            },
            observability: ObservabilityConfig {
                region: raw.get("observability.region").unwrap_or("cap(lat>=pi/4)").into(),
                t_list: raw.f64_list_or("observability.t_list", &[TAU, 2.0 * TAU, 4.0 * TAU])?,
                lmax: raw.f64_or("observability.lmax", 12.0)?,
                trials: raw.usize_or("observability.trials", 100)?,
                probe_region: raw.get("observability.probe_region").unwrap_or("cap(lat>=0)").into(),
                probe_horizons: raw
                    .f64_list_or("observability.probe_horizons", &[4.0 * PI, 8.0 * PI, 16.0 * PI, 32.0 * PI])?,
            },
            coherent: CoherentConfig {
                k: raw.f64_or("coherent.k", 400.0)?,
                center: [center[0], center[1]],
                direction: raw.f64_or("coherent.direction", 0.0)?,
                t_list: raw
                    .f64_list_or("coherent.t_list", &(0..=8).map(|i| TAU / 16.0 * i as f64).collect::<Vec<_>>())?,
                tube_r: raw.f64_or("coherent.tube_r", 0.3)?,
                min_mass: raw.f64_or("coherent.min_mass", 0.9)?,
                pairing_k: raw.f64_list_or("coherent.pairing_k", &[1e2, 1e3, 1e4])?,
                symbols: raw.str_list_or("coherent.symbols", &["x1sq", "xi1sq", "cos", "x1xi1", "gauss"]),
            },
            witness: WitnessConfig {
                k_max: raw.usize_or("witness.k_max", 8)?,
                tube_radius: raw.f64_or("witness.tube_radius", 0.01)?,
                t0: raw.f64_or("witness.t0", 1.0)?,
                doublings: raw.usize_or("witness.doublings", 3)?,
            },
            seed: raw.usize_or("run.seed", 7)? as u64,
            hash: hex::encode(Sha256::digest(text.as_bytes())),
        };
        if cfg.doublings < 2 {
            return Err(raw.err("functionals.doublings", "need at least 2"));
        }
        if cfg.coherent.k <= 0.0 {
            return Err(raw.err("coherent.k", "must be positive"));
        }
        if cfg.horizons.windows(2).any(|w| w[1] <= w[0]) {
            return Err(raw.err("functionals.horizons", "must be increasing"));
        }
        let lists: [(&str, &[String]); 4] = [
            ("observables.regions", &cfg.regions),
            ("zoll.regions", &cfg.zoll.regions),
            ("zoll.stab_regions", &cfg.zoll.stab_regions),
            ("measures.closed_regions", &cfg.measures.closed_regions),
        ];
        let singles = [
            ("measures.mollifier_open", &cfg.measures.mollifier_open),
            ("measures.mollifier_closed", &cfg.measures.mollifier_closed),
            ("observability.region", &cfg.observability.region),
            ("observability.probe_region", &cfg.observability.probe_region),
        ];
        // Region lists default to sphere descriptors; only explicitly set keys are checked on other models.
        for (key, list) in lists {
            if raw.get(key).is_none() && !cfg.model.is_sphere() && key != "observables.regions" {
                continue;
            }
            for (i, r) in list.iter().enumerate() {
                Region::parse(cfg.model, r).map_err(|e| raw.err(key, format!("entry {}: {e}", i + 1)))?;
            }
        }
        for (key, r) in singles {
            if raw.get(key).is_none() && !cfg.model.is_sphere() {
                continue;
            }
            Region::parse(cfg.model, r).map_err(|e| raw.err(key, e.to_string()))?;
        }
        if cfg.witness.doublings < 2 {
            return Err(raw.err("witness.doublings", "need at least 2"));
        }
        Ok(cfg)
    }

    /// All defaults for the given model.
    pub fn defaults(model: &str) -> Result<Self> {
        Self::parse(&format!("[model]\nkind = {model}\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: &str = "\
# chain on the torus
[model]
kind = torus

[flow]
nodes_per_unit_time = 32   # coarse
step = 1e-3

[functionals]
horizons = 4*pi, 6*pi, 8*pi
tolerance = 0.002

[observables]
regions = strip(0,1); tube(torus_diag,0.3)
smooth = cos_x1
";

    #[test]
    fn golden_file() {
        let c = ExperimentConfig::parse(GOLDEN).unwrap();
        assert!(c.model.is_torus());
        assert_eq!(c.flow.nodes_per_unit_time, 32);
        assert_eq!(c.horizons, vec![4.0 * PI, 6.0 * PI, 8.0 * PI]);
        assert_eq!(c.regions, vec!["strip(0,1)".to_string(), "tube(torus_diag,0.3)".to_string()]);
        assert_eq!(c.smooth, vec!["cos_x1".to_string()]);
        assert_eq!(c.detector.cutoff, 40.0);
        assert_eq!(c.hash.len(), 64);
    }

    fn err_at(text: &str) -> (usize, String) {
        match ExperimentConfig::parse(text).unwrap_err() {
            Error::Config { line, key, .. } => (line, key),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn errors_name_line_and_key() {
        assert_eq!(err_at("[model]\nkind = sphere\n[flow]\nstepp = 1\n"), (4, "flow.stepp".into()));
        assert_eq!(err_at("[nope]\n"), (1, "nope".into()));
        assert_eq!(err_at("kind = sphere\n"), (1, "kind".into()));
        assert_eq!(err_at("[flow]\nstep = fast\n"), (2, "flow.step".into()));
        assert_eq!(err_at("[flow]\nstep = 1\nstep = 2\n"), (3, "flow.step".into()));
        assert_eq!(err_at("[observables]\n\nregions = cap(lat>=0); blob(1)\n"), (3, "observables.regions".into()));
        assert_eq!(err_at("[model]\nkind = klein\n"), (2, "model.kind".into()));
        assert_eq!(err_at("[model]\nkind\n"), (2, "kind".into()));
    }

    #[test]
    fn revolution_profiles() {
        let c = ExperimentConfig::parse("[model]\nkind = revolution\nprofile = round\n").unwrap();
        assert_eq!(c.model.name(), "round_revolution");
        assert_eq!(err_at("[model]\nkind = sphere\nprofile = round\n"), (3, "model.profile".into()));
    }

    #[test]
    fn hash_tracks_text() {
        let a = ExperimentConfig::parse("[run]\nseed = 1\n").unwrap();
        let b = ExperimentConfig::parse("[run]\nseed = 2\n").unwrap();
        assert_ne!(a.hash, b.hash);
        assert_eq!(a.hash, ExperimentConfig::parse("[run]\nseed = 1\n").unwrap().hash);
    }
}

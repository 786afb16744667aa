//! Scenario-driven verification harness: parses flat key=value scenario
//! files, runs the check suites, and assembles deterministic reports.

pub mod fields;
mod geometry_suite;
mod kernel_suite;
mod maxreg_suite;
mod transport_suite;

pub use geometry_suite::suite_geometry;
pub use kernel_suite::suite_kernel;
pub use maxreg_suite::suite_maxreg;
pub use transport_suite::suite_transport;

use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

use crate::chain::{ChainParams, DiffusionProfile};
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileTag {
    Constant,
    Sinusoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Kernel,
    Transport,
    Maxreg,
    Geometry,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Kernel, Suite::Transport, Suite::Maxreg, Suite::Geometry];

    pub fn parse(s: &str) -> Result<Vec<Suite>> {
        match s {
            "all" => Ok(Self::ALL.to_vec()),
            "kernel" => Ok(vec![Suite::Kernel]),
            "transport" => Ok(vec![Suite::Transport]),
            "maxreg" => Ok(vec![Suite::Maxreg]),
            "geometry" => Ok(vec![Suite::Geometry]),
            other => Err(Error::UnknownSuite(other.into())),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Suite::Kernel => "kernel",
            Suite::Transport => "transport",
            Suite::Maxreg => "maxreg",
            Suite::Geometry => "geometry",
        }
    }
}

/// One run configuration, parsed from a flat key = value file.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub params: ChainParams,
    pub profile_tag: ProfileTag,
    pub a0: f64,
    pub seed: u64,
    /// Points per axis (all blocks share the count at base resolution).
    pub pts: usize,
    /// Half-length of every block's box.
    pub half_len: f64,
    pub lambda: f64,
    pub alphas: Vec<f64>,
    pub ensemble: usize,
    pub suites: Vec<Suite>,
    pub refine: bool,
    pub tol_slope: f64,
    pub tol_drift: f64,
    pub tol_residual: f64,
    raw: BTreeMap<String, String>,
}

impl Scenario {
    pub fn profile(&self) -> Result<DiffusionProfile> {
        match self.profile_tag {
            ProfileTag::Constant => DiffusionProfile::constant_scalar(&self.params, self.a0),
            ProfileTag::Sinusoidal => Ok(DiffusionProfile::smooth_periodic(&self.params)),
        }
    }

    /// Baseline settings for a chain shape; scenario files override fields.
    pub fn default_for(n: usize, d: usize) -> Result<Scenario> {
        let params = ChainParams::new(n, d, 2.0)?;
        // resolution budget shrinks with the number of axes
        let pts = match n * d {
            2 => 256,
            3 => 48,
            4 => 16,
            _ => 16,
        };
        Ok(Scenario {
            name: format!("n{n}d{d}-constant"),
            params,
            profile_tag: ProfileTag::Constant,
            a0: 0.5,
            seed: 7,
            pts,
            half_len: 8.0,
            lambda: 1.0,
            alphas: vec![0.5, 1.0, 2.0],
            ensemble: 20,
            suites: Suite::ALL.to_vec(),
            refine: false,
            tol_slope: 0.07,
            tol_drift: 0.15,
            tol_residual: 5e-2,
            raw: BTreeMap::new(),
        })
    }

    pub fn parse(text: &str) -> Result<Scenario> {
        let mut map = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidScenario(format!("line {}: expected key = value", lineno + 1))
            })?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| map.get(k).map(|s| s.as_str());
        let schema: u32 = parse_field(get("schema"), "schema")?.unwrap_or(SCHEMA_VERSION);
        if schema != SCHEMA_VERSION {
            return Err(Error::InvalidScenario(format!("unsupported schema {schema}")));
        }
        let n: usize = parse_field(get("n"), "n")?
            .ok_or_else(|| Error::InvalidScenario("missing key n".into()))?;
        let d: usize = parse_field(get("d"), "d")?
            .ok_or_else(|| Error::InvalidScenario("missing key d".into()))?;
        let mut sc = Scenario::default_for(n, d)?;
        if let Some(kappa) = parse_field::<f64>(get("kappa"), "kappa")? {
            sc.params = ChainParams::new(n, d, kappa)?;
        }
        for key in map.keys() {
            const KNOWN: [&str; 16] = [
                "schema", "name", "n", "d", "kappa", "profile", "a0", "seed", "pts", "half_len",
                "lambda", "alphas", "ensemble", "suites", "refine", "tolerances",
            ];
            let known = KNOWN.contains(&key.as_str())
                || ["tol_slope", "tol_drift", "tol_residual"].contains(&key.as_str());
            if !known {
                return Err(Error::InvalidScenario(format!("unknown key {key}")));
            }
        }
        if let Some(name) = get("name") {
            sc.name = name.to_string();
        }
        if let Some(p) = get("profile") {
            sc.profile_tag = match p {
                "constant" => ProfileTag::Constant,
                "sinusoidal" => ProfileTag::Sinusoidal,
                other => {
                    return Err(Error::InvalidScenario(format!("unknown profile {other}")))
                }
            };
        }
        if let Some(v) = parse_field(get("a0"), "a0")? {
            sc.a0 = v;
        }
        if let Some(v) = parse_field(get("seed"), "seed")? {
            sc.seed = v;
        }
        if let Some(v) = parse_field(get("pts"), "pts")? {
            sc.pts = v;
        }
        if let Some(v) = parse_field(get("half_len"), "half_len")? {
            sc.half_len = v;
        }
        if let Some(v) = parse_field(get("lambda"), "lambda")? {
            sc.lambda = v;
        }
        if let Some(list) = get("alphas") {
            sc.alphas = list
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidScenario(format!("bad alpha {t}")))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = parse_field(get("ensemble"), "ensemble")? {
            sc.ensemble = v;
        }
        if let Some(list) = get("suites") {
            let mut suites = Vec::new();
            for t in list.split(',') {
                suites.extend(Suite::parse(t.trim())?);
            }
            suites.sort();
            suites.dedup();
            sc.suites = suites;
        }
        if let Some(v) = get("refine") {
            sc.refine = match v {
                "true" => true,
                "false" => false,
                other => return Err(Error::InvalidScenario(format!("bad refine {other}"))),
            };
        }
        if let Some(v) = parse_field(get("tol_slope"), "tol_slope")? {
            sc.tol_slope = v;
        }
        if let Some(v) = parse_field(get("tol_drift"), "tol_drift")? {
            sc.tol_drift = v;
        }
        if let Some(v) = parse_field(get("tol_residual"), "tol_residual")? {
            sc.tol_residual = v;
        }
        sc.raw = map;
        Ok(sc)
    }

    pub fn echo(&self) -> BTreeMap<String, String> {
        let mut m = self.raw.clone();
        let p = &self.params;
        m.entry("schema".into()).or_insert(SCHEMA_VERSION.to_string());
        m.entry("name".into()).or_insert(self.name.clone());
        m.entry("n".into()).or_insert(p.n().to_string());
        m.entry("d".into()).or_insert(p.d().to_string());
        m.entry("kappa".into()).or_insert(p.kappa().to_string());
        m.entry("seed".into()).or_insert(self.seed.to_string());
        m.entry("pts".into()).or_insert(self.pts.to_string());
        m
    }
}

fn parse_field<T: std::str::FromStr>(v: Option<&str>, key: &str) -> Result<Option<T>> {
    match v {
        None => Ok(None),
        Some(s) => s
            .parse::<T>()
            .map(Some)
            .map_err(|_| Error::InvalidScenario(format!("bad value for {key}: {s}"))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Recorded,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub paper_ref: String,
    pub measured: Vec<f64>,
    pub predicted: Option<f64>,
    pub tolerance: Option<f64>,
    pub status: Status,
    pub note: String,
}

impl CheckRecord {
    /// Scored against a predicted value with a relative tolerance.
    pub fn scored(
        name: &str,
        paper_ref: &str,
        measured: f64,
        predicted: f64,
        tol: f64,
        note: &str,
    ) -> Self {
        let scale = predicted.abs().max(1.0);
        let ok = (measured - predicted).abs() <= tol * scale;
        CheckRecord {
            name: name.into(),
            paper_ref: paper_ref.into(),
            measured: vec![measured],
            predicted: Some(predicted),
            tolerance: Some(tol),
            status: if ok { Status::Pass } else { Status::Fail },
            note: note.into(),
        }
    }

    /// Pass/fail on a boolean condition, keeping the measurements.
    pub fn gated(name: &str, paper_ref: &str, measured: Vec<f64>, ok: bool, note: &str) -> Self {
        CheckRecord {
            name: name.into(),
            paper_ref: paper_ref.into(),
            measured,
            predicted: None,
            tolerance: None,
            status: if ok { Status::Pass } else { Status::Fail },
            note: note.into(),
        }
    }

    /// Empirical value with no paper prediction.
    pub fn recorded(name: &str, paper_ref: &str, measured: Vec<f64>, note: &str) -> Self {
        CheckRecord {
            name: name.into(),
            paper_ref: paper_ref.into(),
            measured,
            predicted: None,
            tolerance: None,
            status: Status::Recorded,
            note: note.into(),
        }
    }

    pub fn failed(name: &str, paper_ref: &str, err: &Error) -> Self {
        CheckRecord {
            name: name.into(),
            paper_ref: paper_ref.into(),
            measured: Vec::new(),
            predicted: None,
            tolerance: None,
            status: Status::Fail,
            note: format!("error: {err}"),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: Vec<CheckRecord>,
}

impl SuiteReport {
    pub fn new(suite: Suite, mut checks: Vec<CheckRecord>) -> Self {
        checks.sort_by(|a, b| a.name.cmp(&b.name));
        SuiteReport {
            suite: suite.name().into(),
            checks,
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }
}

/// A suite's scored records plus any CSV tables it produced.
pub struct SuiteOutput {
    pub report: SuiteReport,
    /// (file name, CSV text)
    pub tables: Vec<(String, String)>,
}

/// Deterministic payload: everything except wall-clock metadata.
#[derive(Debug, Clone, Serialize)]
pub struct ReportPayload {
    pub schema_version: u32,
    pub scenario: BTreeMap<String, String>,
    pub paper_map: BTreeMap<String, String>,
    pub suites: Vec<SuiteReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportMeta {
    pub generated_unix_ms: u128,
    pub wall_ms: u128,
    pub toolkit_version: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub meta: ReportMeta,
    pub payload: ReportPayload,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.payload.suites.iter().all(|s| s.passed())
    }

    pub fn payload_json(&self) -> String {
        serde_json::to_string_pretty(&self.payload).expect("payload serialization")
    }
}

/// Section anchors every check record must reference.
pub fn paper_map() -> BTreeMap<String, String> {
    [
        ("Lemma 2.1", "two-sided Gaussian kernel bounds, Eq. HJ2/HJ4"),
        ("Eq. HJ2", "normalized covariance floor 2 c0 / kappa"),
        ("Eq. HJ4", "Gaussian derivative bound with constants (C, c)"),
        ("Corollary 2.2", "derivative decay exponents, Eq. EK2/EK22"),
        ("Eq. EK2", "sup-norm decay exponent arithmetic"),
        ("Lemma 2.3(i)", "dilation scaling of the gauge ell"),
        ("Lemma 2.3(ii)", "ball volume proportional to r^(n^2 d + 2)"),
        ("Lemma 2.3(iii)", "quasi-triangle inequality, Eq. Tri"),
        ("Lemma 2.3(iv)", "engulfing of intersecting balls, Eq. EL1"),
        ("Lemma 2.3(v)", "comparison of one-sided and symmetrized balls"),
        ("Eq. Tri", "factors 3 and 12 in the quasi-triangle inequality"),
        ("Eq. ES2", "subadditivity of the gauge"),
        ("Eq. EL1", "factor 20 engulfing"),
        ("Theorem 2.5", "Fefferman-Stein bounds on the anisotropic geometry"),
        ("Section 2.2", "maximal, sharp, and BMO definitions"),
        ("Theorem 3.1", "transport propagation of regularity, Eq. E4"),
        ("Eq. E4", "fractional gain alpha/(2(1+alpha)) one block down"),
        ("Eq. EV7", "chained exponents against the diffusive block"),
        ("Theorem 1.1", "maximal L^p regularity of the resolvent"),
        ("Eq. 1.12", "resolvent equation whose discrete residual is checked"),
        ("Eq. Tran", "pure transport resolvent equation"),
        ("Lemma 4.2", "scaling property of the localized resolvent average"),
        ("Section 4.1", "p = 2 Fourier representation of the resolvent"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .collect()
}

/// Runs the scenario's suites (optionally filtered), assembles the report,
/// and writes artifacts when an output directory is given.
pub fn run(
    scenario: &Scenario,
    filter: Option<&[Suite]>,
    out_dir: Option<&Path>,
) -> Result<VerificationReport> {
    let started = std::time::Instant::now();
    let suites: Vec<Suite> = scenario
        .suites
        .iter()
        .copied()
        .filter(|s| filter.map(|f| f.contains(s)).unwrap_or(true))
        .collect();
    let mut reports = Vec::new();
    let mut tables = Vec::new();
    for suite in suites {
        let out = match suite {
            Suite::Kernel => suite_kernel(scenario)?,
            Suite::Transport => suite_transport(scenario)?,
            Suite::Maxreg => suite_maxreg(scenario)?,
            Suite::Geometry => suite_geometry(scenario)?,
        };
        reports.push(out.report);
        tables.extend(out.tables);
    }
    let map = paper_map();
    for rep in &reports {
        for c in &rep.checks {
            debug_assert!(map.contains_key(&c.paper_ref), "unmapped ref {}", c.paper_ref);
        }
    }
    let report = VerificationReport {
        meta: ReportMeta {
            generated_unix_ms: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            wall_ms: started.elapsed().as_millis(),
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        },
        payload: ReportPayload {
            schema_version: SCHEMA_VERSION,
            scenario: scenario.echo(),
            paper_map: map,
            suites: reports,
        },
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(
            dir.join("report.json"),
            serde_json::to_string_pretty(&report).expect("report serialization"),
        )?;
        let tdir = dir.join("tables");
        std::fs::create_dir_all(&tdir)?;
        for (name, text) in tables {
            std::fs::write(tdir.join(name), text)?;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = "
schema = 1
name = tiny
n = 2
d = 1
kappa = 2.0
profile = constant
a0 = 0.75
seed = 11
pts = 32
half_len = 4.0
lambda = 1.0
suites = geometry
";

    #[test]
    fn scenario_round_trip() {
        let sc = Scenario::parse(TINY).unwrap();
        assert_eq!(sc.name, "tiny");
        assert_eq!(sc.params.n(), 2);
        assert_eq!(sc.pts, 32);
        assert_eq!(sc.suites, vec![Suite::Geometry]);
        assert_eq!(sc.profile_tag, ProfileTag::Constant);
        let echo = sc.echo();
        assert_eq!(echo["seed"], "11");
        assert_eq!(echo["a0"], "0.75");
    }

    #[test]
    fn scenario_rejects_unknown_keys_and_bad_values() {
        assert!(Scenario::parse(&format!("{TINY}\nbogus = 1")).is_err());
        assert!(Scenario::parse(&TINY.replace("n = 2", "n = 1")).is_err());
        assert!(Scenario::parse(&TINY.replace("schema = 1", "schema = 9")).is_err());
        assert!(Scenario::parse(&TINY.replace("constant", "wavelet")).is_err());
    }

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(Suite::parse(s.name()).unwrap(), vec![s]);
        }
        assert_eq!(Suite::parse("all").unwrap(), Suite::ALL.to_vec());
        assert!(Suite::parse("nonsense").is_err());
    }

    #[test]
    fn scored_record_applies_relative_tolerance() {
        let ok = CheckRecord::scored("a", "Eq. Tri", 10.05, 10.0, 0.01, "");
        assert_eq!(ok.status, Status::Pass);
        let bad = CheckRecord::scored("a", "Eq. Tri", 10.2, 10.0, 0.01, "");
        assert_eq!(bad.status, Status::Fail);
        // small predicted values fall back to an absolute scale of one
        let small = CheckRecord::scored("a", "Eq. Tri", 0.005, 0.0, 0.01, "");
        assert_eq!(small.status, Status::Pass);
    }

    #[test]
    fn report_payload_is_deterministic() {
        let sc = Scenario::parse(TINY).unwrap();
        let r1 = run(&sc, None, None).unwrap();
        let r2 = run(&sc, None, None).unwrap();
        assert!(r1.passed(), "tiny geometry scenario should pass");
        assert_eq!(r1.payload_json(), r2.payload_json());
    }

    #[test]
    fn payload_schema_is_frozen() {
        // golden serialization: any field rename or reorder must be a
        // deliberate schema bump
        let payload = ReportPayload {
            schema_version: SCHEMA_VERSION,
            scenario: [("n".to_string(), "2".to_string())].into_iter().collect(),
            paper_map: [("Eq. Tri".to_string(), "factors".to_string())]
                .into_iter()
                .collect(),
            suites: vec![SuiteReport::new(
                Suite::Geometry,
                vec![CheckRecord::scored("a", "Eq. Tri", 1.0, 1.0, 0.5, "n")],
            )],
        };
        let golden = r#"{
  "schema_version": 1,
  "scenario": {
    "n": "2"
  },
  "paper_map": {
    "Eq. Tri": "factors"
  },
  "suites": [
    {
      "suite": "geometry",
      "checks": [
        {
          "name": "a",
          "paper_ref": "Eq. Tri",
          "measured": [
            1.0
          ],
          "predicted": 1.0,
          "tolerance": 0.5,
          "status": "pass",
          "note": "n"
        }
      ]
    }
  ]
}"#;
        assert_eq!(
            serde_json::to_string_pretty(&payload).unwrap(),
            golden,
            "report payload schema changed; bump SCHEMA_VERSION"
        );
    }

    #[test]
    fn paper_map_entries_are_nonempty() {
        for (k, v) in paper_map() {
            assert!(!k.is_empty() && !v.is_empty());
        }
    }
}

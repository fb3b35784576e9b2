//! Scenario files, batch runner and deterministic report emission.

mod kinds;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use serde_json::Value;
use thiserror::Error;

pub const KINDS: [&str; 10] = [
    "dual_checks",
    "perturbed_reeb",
    "orbit",
    "return_map",
    "thickening",
    "spectrum",
    "cylinder_decay",
    "three_interval",
    "center_of_mass",
    "action_charge",
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl ScenarioError {
    /// 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 2,
            ScenarioError::Numerical(_) | ScenarioError::Io(_) => 1,
        }
    }
}

impl From<io::Error> for ScenarioError {
    fn from(e: io::Error) -> Self {
        ScenarioError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub kind: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: Value,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
        if !KINDS.contains(&s.kind.as_str()) {
            return Err(ScenarioError::Config(format!("unknown scenario kind '{}'", s.kind)));
        }
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|e| ScenarioError::Config(format!("{}: {e}", path.display())))?;
        Scenario::parse(&text)
    }

    pub fn display_name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.kind.clone())
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Verdict {
    pub name: String,
    /// "pass" or "fail".
    pub verdict: String,
    pub value: f64,
    pub tolerance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub offending: Option<u64>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.verdict == "pass"
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub name: String,
    pub kind: String,
    pub seed: u64,
    /// Parameters after defaults were applied.
    pub params: Value,
    pub scalars: BTreeMap<String, f64>,
    pub verdicts: Vec<Verdict>,
    pub tables: BTreeMap<String, Table>,
    pub passed: bool,
    #[serde(skip)]
    pub wall_time: f64,
}

/// Collects results while a scenario runs.
#[derive(Debug, Default)]
pub(crate) struct ReportBuilder {
    scalars: BTreeMap<String, f64>,
    verdicts: Vec<Verdict>,
    tables: BTreeMap<String, Table>,
}

impl ReportBuilder {
    pub fn scalar(&mut self, key: &str, v: f64) {
        self.scalars.insert(key.to_string(), v);
    }

    pub fn verdict(&mut self, name: &str, passed: bool, value: f64, tolerance: f64, offending: Option<usize>) {
        self.verdicts.push(Verdict {
            name: name.to_string(),
            verdict: if passed { "pass" } else { "fail" }.to_string(),
            value,
            tolerance,
            offending: if passed { None } else { offending.map(|i| i as u64) },
        });
    }

    /// Passes when value < tolerance (NaN fails).
    pub fn below(&mut self, name: &str, value: f64, tolerance: f64, offending: Option<usize>) {
        self.verdict(name, value < tolerance, value, tolerance, offending);
    }

    pub fn table(&mut self, name: &str, columns: &[&str], rows: Vec<Vec<f64>>) {
        self.tables.insert(name.to_string(), Table { columns: columns.iter().map(|c| c.to_string()).collect(), rows });
    }
}

/// Independent ChaCha8 stream `stream` of the generator keyed by `seed`.
pub fn sample_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Size the global thread pool from CONTACTLAB_THREADS, if set.
pub fn init_threads() -> Result<(), ScenarioError> {
    if let Ok(v) = std::env::var("CONTACTLAB_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| ScenarioError::Config(format!("CONTACTLAB_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(ScenarioError::Config("CONTACTLAB_THREADS must be positive".into()));
        }
        // A pool may already exist when embedded; keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn run_scenario(s: &Scenario) -> Result<Report, ScenarioError> {
    let start = Instant::now();
    let mut b = ReportBuilder::default();
    let params = kinds::dispatch(s, &mut b)?;
    let passed = b.verdicts.iter().all(Verdict::passed);
    Ok(Report {
        name: s.display_name(),
        kind: s.kind.clone(),
        seed: s.seed,
        params,
        scalars: b.scalars,
        verdicts: b.verdicts,
        tables: b.tables,
        passed,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

pub fn run_path(path: &Path, seed: Option<u64>) -> Result<Report, ScenarioError> {
    let mut s = Scenario::load(path)?;
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if s.name.is_none() {
        s.name = path.file_stem().map(|x| x.to_string_lossy().into_owned());
    }
    run_scenario(&s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Pretty JSON with floats written as `{:.16e}` and non-finite values as null.
struct FloatFormatter<'a>(PrettyFormatter<'a>);

impl Formatter for FloatFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        write!(w, "{v:.16e}")
    }
    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }
    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

pub fn report_json(report: &Report) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FloatFormatter(PrettyFormatter::with_indent(b"  ")));
    report.serialize(&mut ser).expect("reports serialize");
    out.push(b'\n');
    String::from_utf8(out).expect("JSON is UTF-8")
}

/// Scalar fields of an emitted JSON report; null reads back as NaN.
pub fn parse_report_scalars(json: &str) -> Result<BTreeMap<String, f64>, ScenarioError> {
    let v: Value = serde_json::from_str(json).map_err(|e| ScenarioError::Config(e.to_string()))?;
    let obj = v.get("scalars").and_then(Value::as_object).ok_or_else(|| ScenarioError::Config("report has no scalars".into()))?;
    Ok(obj.iter().map(|(k, x)| (k.clone(), x.as_f64().unwrap_or(f64::NAN))).collect())
}

fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        String::new()
    }
}

/// CSV documents of a report: scalars, verdicts and one per table.
pub fn report_csv(report: &Report) -> BTreeMap<String, String> {
    let mut files = BTreeMap::new();
    let write = |header: Vec<String>, rows: Vec<Vec<String>>| -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).expect("in-memory CSV");
        for r in rows {
            w.write_record(&r).expect("in-memory CSV");
        }
        String::from_utf8(w.into_inner().expect("in-memory CSV")).expect("CSV is UTF-8")
    };
    files.insert(
        "scalars.csv".to_string(),
        write(vec!["key".into(), "value".into()], report.scalars.iter().map(|(k, v)| vec![k.clone(), fmt_float(*v)]).collect()),
    );
    files.insert(
        "verdicts.csv".to_string(),
        write(
            ["name", "verdict", "value", "tolerance", "offending"].iter().map(|s| s.to_string()).collect(),
            report
                .verdicts
                .iter()
                .map(|v| vec![v.name.clone(), v.verdict.clone(), fmt_float(v.value), fmt_float(v.tolerance), v.offending.map(|i| i.to_string()).unwrap_or_default()])
                .collect(),
        ),
    );
    for (name, t) in &report.tables {
        files.insert(format!("{name}.csv"), write(t.columns.clone(), t.rows.iter().map(|r| r.iter().map(|v| fmt_float(*v)).collect()).collect()));
    }
    files
}

/// Write a report under `dir`; JSON goes to `<name>.json`, CSV files to `<name>/`.
pub fn write_report(report: &Report, dir: &Path, format: Format) -> Result<Vec<PathBuf>, ScenarioError> {
    fs::create_dir_all(dir)?;
    match format {
        Format::Json => {
            let p = dir.join(format!("{}.json", report.name));
            fs::write(&p, report_json(report))?;
            Ok(vec![p])
        }
        Format::Csv => {
            let sub = dir.join(&report.name);
            fs::create_dir_all(&sub)?;
            let mut out = Vec::new();
            for (file, body) in report_csv(report) {
                let p = sub.join(file);
                fs::write(&p, body)?;
                out.push(p);
            }
            Ok(out)
        }
    }
}

/// Outcome of one file in a suite run.
#[derive(Debug)]
pub struct SuiteEntry {
    pub path: PathBuf,
    pub result: Result<Report, ScenarioError>,
}

/// Run every `*.json` scenario in `dir` in file-name order.
pub fn run_suite(dir: &Path, seed: Option<u64>) -> Result<Vec<SuiteEntry>, ScenarioError> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| ScenarioError::Config(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    Ok(paths.into_iter().map(|p| SuiteEntry { result: run_path(&p, seed), path: p }).collect())
}

/// Suite exit code: 2 if any scenario had a config error, else 1 if any failed, else 0.
pub fn suite_exit_code(entries: &[SuiteEntry]) -> i32 {
    let mut code = 0;
    for e in entries {
        let c = match &e.result {
            Ok(r) if r.passed => 0,
            Ok(_) => 1,
            Err(err) => err.exit_code(),
        };
        code = code.max(c);
    }
    code
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_kind_and_keys_are_config_errors() {
        let e = Scenario::parse(r#"{"kind": "spectre"}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let e = Scenario::parse(r#"{"kind": "spectrum", "colour": 1}"#).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        let s = Scenario::parse(r#"{"kind": "spectrum", "params": {"n_mode": 4}}"#).unwrap();
        assert_eq!(run_scenario(&s).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn float_format_and_nulls() {
        let mut b = ReportBuilder::default();
        b.scalar("x", 0.1);
        b.scalar("bad", f64::NAN);
        let r = Report {
            name: "t".into(),
            kind: "spectrum".into(),
            seed: 0,
            params: Value::Null,
            scalars: b.scalars,
            verdicts: vec![],
            tables: BTreeMap::new(),
            passed: true,
            wall_time: 1.0,
        };
        let j = report_json(&r);
        assert!(j.contains("\"x\": 1.0000000000000001e-1"));
        assert!(j.contains("\"bad\": null"));
        assert!(!j.contains("wall"));
        let back = parse_report_scalars(&j).unwrap();
        assert_eq!(back["x"], 0.1);
        assert!(back["bad"].is_nan());
    }

    #[test]
    fn rng_streams_are_independent_of_order() {
        use rand::Rng;
        let a: f64 = sample_rng(5, 3).random();
        let _: f64 = sample_rng(5, 2).random();
        let b: f64 = sample_rng(5, 3).random();
        assert_eq!(a, b);
        let c: f64 = sample_rng(5, 4).random();
        assert_ne!(a, c);
    }
}

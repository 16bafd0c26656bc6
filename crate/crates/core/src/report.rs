//! Run configuration, command execution and report rendering for the
//! `affsym` binary.
//!
//! A run produces one JSON document
//! `{schema, meta: {version, command, surface, config_hash, seed, timestamp}, summary, results}`
//! and an equivalent CSV table. Numbers are written in shortest round-trip
//! form in both, so the two carry identical values. The timestamp is the only
//! field that differs between repeated runs of the same configuration.

use std::collections::BTreeMap;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::affine_core::apparatus;
use crate::catalog::{
    default_surface, sphere, validate_definiteness, CurveSpec, SphereName, SurfaceKind, SurfaceSpec,
};
use crate::cubic::conjugate_unchecked;
use crate::error::GeomError;
use crate::symmetry::{random_rotation, stabilizer_pair, symmetry_residual, Group, SymmetryReport};
use crate::verifier::{
    check_fundamental, check_structure, scan, warped_case, Axis, Grid, ResidualRecord, ScanOptions,
    TLine, WarpedLabel,
};

pub const SCHEMA: u32 = 1;

/// Number of seeded random conjugations `classify` cross-checks against.
pub const CONJUGATION_DRAWS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Classify,
    Scan,
    Verify,
    Construct,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Scan => "scan",
            Command::Verify => "verify",
            Command::Construct => "construct",
        }
    }
}

impl FromStr for Command {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, RunError> {
        Ok(match s {
            "classify" => Command::Classify,
            "scan" => Command::Scan,
            "verify" => Command::Verify,
            "construct" => Command::Construct,
            other => return Err(RunError::Config(format!("unknown command `{other}`"))),
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = RunError;
    fn from_str(s: &str) -> Result<Self, RunError> {
        match s {
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            other => Err(RunError::Config(format!("unknown format `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    ProperWarped,
    ImproperWarped,
    TranslationWarped,
}

/// Warped product over a named two-dimensional affine sphere, with curve
/// coefficients in the basis `{1, t, t², t³, e^t, e^-t, cosh t, sinh t}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposedSurface {
    pub family: Family,
    pub sphere: SphereName,
    pub gamma1: [f64; 8],
    pub gamma2: [f64; 8],
    pub t_domain: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SurfaceConfig {
    Id(String),
    Composed(ComposedSurface),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Zero threshold of the classifier.
    pub classify: f64,
    /// Identities evaluated from point data only.
    pub point: f64,
    /// Identities with one finite-difference layer.
    pub fd: f64,
    /// Structure equations along `t` lines (two layers).
    pub structure: f64,
    /// Invariance of `(C, S)` under the reported group.
    pub symmetry: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            classify: 1e-7,
            point: 1e-8,
            fd: 1e-5,
            structure: 1e-4,
            symmetry: 1e-6,
        }
    }
}

impl Tolerances {
    fn for_check(&self, name: &str) -> f64 {
        match name {
            "codazzi_metric" | "shape_symmetry" | "cubic_consistency" | "apolarity" | "volume" => {
                self.point
            }
            "gauss" | "codazzi_cubic" | "codazzi_shape" | "gauss_levi_civita" => self.fd,
            _ => self.structure,
        }
    }

    fn rescore(&self, r: &ResidualRecord) -> ResidualRecord {
        ResidualRecord::new(&r.name, r.value * r.scale, r.scale, self.for_check(&r.name))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Standard output when absent.
    pub path: Option<String>,
    pub format: Format,
}

/// Declarative description of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub surface: SurfaceConfig,
    #[serde(default)]
    pub point: Option<[f64; 3]>,
    /// `t=start:stop:count,u=...,v=...`; missing axes sit at the domain center.
    #[serde(default)]
    pub grid: Option<String>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Geom(#[from] GeomError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    /// Configuration, domain and I/O problems all map to status 2.
    pub fn exit_code(&self) -> u8 {
        2
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig, RunError> {
    let cfg: RunConfig = serde_json::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
    Ok(cfg)
}

fn parse_f64(s: &str, what: &str) -> Result<f64, RunError> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| RunError::Config(format!("bad number `{s}` in {what}")))
}

pub fn parse_point(s: &str) -> Result<[f64; 3], RunError> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(RunError::Config(format!(
            "point `{s}` needs three comma-separated values"
        )));
    }
    Ok([
        parse_f64(parts[0], "point")?,
        parse_f64(parts[1], "point")?,
        parse_f64(parts[2], "point")?,
    ])
}

/// Parses `t=a:b:n,u=a:b:n,v=a:b:n` against the surface domain.
pub fn parse_grid(s: &str, surface: &SurfaceSpec) -> Result<Grid, RunError> {
    let c = surface.domain.center();
    let mut axes: [Option<Axis>; 3] = [None; 3];
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (name, range) = part
            .split_once('=')
            .ok_or_else(|| RunError::Config(format!("grid axis `{part}` lacks `=`")))?;
        let k = match name.trim() {
            "t" => 0,
            "u" => 1,
            "v" => 2,
            other => return Err(RunError::Config(format!("unknown grid axis `{other}`"))),
        };
        let f: Vec<&str> = range.split(':').collect();
        if f.len() != 3 {
            return Err(RunError::Config(format!(
                "grid axis `{part}` must be start:stop:count"
            )));
        }
        let count: usize = f[2]
            .trim()
            .parse()
            .map_err(|_| RunError::Config(format!("bad count in grid axis `{part}`")))?;
        if count < 1 {
            return Err(RunError::Config(format!(
                "grid count must be at least 1 in `{part}`"
            )));
        }
        if axes[k].is_some() {
            return Err(RunError::Config(format!("grid axis `{name}` given twice")));
        }
        axes[k] = Some(Axis {
            start: parse_f64(f[0], "grid")?,
            stop: parse_f64(f[1], "grid")?,
            count,
        });
    }
    let ax = |k: usize| {
        axes[k].unwrap_or(Axis {
            start: c[k],
            stop: c[k],
            count: 1,
        })
    };
    Ok(Grid {
        t: ax(0),
        u: ax(1),
        v: ax(2),
    })
}

fn composed(c: &ComposedSurface) -> Result<SurfaceSpec, RunError> {
    let curve = CurveSpec::new(c.gamma1, c.gamma2, c.t_domain);
    if !(c.t_domain[0] < c.t_domain[1]) {
        return Err(RunError::Config(
            "t_domain must be an increasing interval".into(),
        ));
    }
    let sph = sphere(c.sphere);
    let uv = sph.uv_domain();
    let (kind, prefix) = match c.family {
        Family::ProperWarped => (
            SurfaceKind::ProperWarped {
                sphere: sph.clone(),
                curve,
            },
            "proper_warped",
        ),
        Family::ImproperWarped => (
            SurfaceKind::ImproperWarped {
                sphere: sph.clone(),
                curve,
                translation_only: false,
            },
            "improper_warped",
        ),
        Family::TranslationWarped => (
            SurfaceKind::ImproperWarped {
                sphere: sph.clone(),
                curve,
                translation_only: true,
            },
            "translation_warped",
        ),
    };
    let proper = c.family == Family::ProperWarped;
    if proper == (sph.kind == crate::catalog::SphereKind::ImproperGraph) {
        return Err(RunError::Config(format!(
            "family {prefix} does not fit sphere {:?}",
            c.sphere
        )));
    }
    Ok(SurfaceSpec {
        id: format!("{prefix}:{}", crate::catalog::sphere_id(c.sphere)),
        kind,
        domain: crate::catalog::Domain([c.t_domain, uv[0], uv[1]]),
        expected_group: Some(if sph.is_quadric {
            Group::SO2
        } else {
            Group::Z3
        }),
    })
}

/// Builds the surface without enforcing definiteness, so that `construct`
/// can report a violated sign condition instead of refusing.
pub fn resolve_surface(cfg: &SurfaceConfig) -> Result<SurfaceSpec, RunError> {
    match cfg {
        SurfaceConfig::Id(id) => Ok(default_surface(id)?),
        SurfaceConfig::Composed(c) => composed(c),
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let t = &self.tolerances;
        for (name, v) in [
            ("classify", t.classify),
            ("point", t.point),
            ("fd", t.fd),
            ("structure", t.structure),
            ("symmetry", t.symmetry),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RunError::Config(format!(
                    "tolerance `{name}` must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// SHA-256 over the fields that determine the results (the output
    /// destination is excluded).
    pub fn hash(&self) -> String {
        let body = json!({
            "command": self.command,
            "surface": self.surface,
            "point": self.point,
            "grid": self.grid,
            "tolerances": self.tolerances,
            "seed": self.seed,
        });
        hex::encode(Sha256::digest(body.to_string().as_bytes()))
    }
}

/// Everything a run produces.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub document: Value,
    pub csv: String,
    /// 0 when every check passes, 1 otherwise.
    pub status: u8,
}

impl RunOutput {
    pub fn json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.document).expect("serializable");
        s.push('\n');
        s
    }

    pub fn rendered(&self, format: Format) -> String {
        match format {
            Format::Json => self.json(),
            Format::Csv => self.csv.clone(),
        }
    }
}

fn unix_time() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Executes a validated configuration.
pub fn run(cfg: &RunConfig) -> Result<RunOutput, RunError> {
    cfg.validate()?;
    let surface = resolve_surface(&cfg.surface)?;
    let (summary, results, csv, ok) = match cfg.command {
        Command::Classify => classify(cfg, &surface)?,
        Command::Scan => scan_cmd(cfg, &surface)?,
        Command::Verify => verify(cfg, &surface)?,
        Command::Construct => construct(cfg, &surface)?,
    };
    let document = json!({
        "schema": SCHEMA,
        "meta": {
            "version": env!("CARGO_PKG_VERSION"),
            "command": cfg.command,
            "surface": surface.id,
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
            "timestamp": unix_time(),
        },
        "summary": summary,
        "results": results,
    });
    Ok(RunOutput {
        document,
        csv,
        status: if ok { 0 } else { 1 },
    })
}

type CommandOutput = (Value, Vec<Value>, String, bool);

fn num(x: f64) -> String {
    // same text as the JSON document; non-finite values become empty cells
    if x.is_finite() {
        serde_json::to_string(&x).expect("finite")
    } else {
        String::new()
    }
}

/// Serde name of a unit enum variant, as it appears in the JSON document.
fn tag<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        _ => String::new(),
    }
}

fn grid_or_point(cfg: &RunConfig, surface: &SurfaceSpec) -> Result<Grid, RunError> {
    match (&cfg.grid, cfg.point) {
        (Some(g), _) => parse_grid(g, surface),
        (None, Some(p)) => {
            let ax = |x: f64| Axis {
                start: x,
                stop: x,
                count: 1,
            };
            Ok(Grid {
                t: ax(p[0]),
                u: ax(p[1]),
                v: ax(p[2]),
            })
        }
        (None, None) => parse_grid("", surface),
    }
}

fn require_inside(surface: &SurfaceSpec, grid: &Grid) -> Result<Vec<[f64; 3]>, RunError> {
    let pts = grid.points();
    if let Some(x) = pts.iter().find(|x| !surface.domain.contains(**x)) {
        return Err(GeomError::OutsideDomain(x[0], x[1], x[2]).into());
    }
    Ok(pts)
}

const CLASSIFY_COLUMNS: [&str; 15] = [
    "t",
    "u",
    "v",
    "group",
    "cubic_label",
    "lambda",
    "mu",
    "a",
    "b",
    "c",
    "d",
    "form_residual",
    "symmetry_residual",
    "ambiguous",
    "error",
];

/// CSV document built from pre-rendered cells.
struct Table(csv::Writer<Vec<u8>>);

impl Table {
    fn new(header: &[&str]) -> Self {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).expect("in-memory write");
        Table(w)
    }

    fn row<I: IntoIterator<Item = String>>(&mut self, cells: I) {
        let cells: Vec<String> = cells.into_iter().collect();
        self.0.write_record(&cells).expect("in-memory write");
    }

    fn finish(self) -> String {
        let bytes = self.0.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("cells are UTF-8")
    }
}

fn classify_row(x: [f64; 3], r: &SymmetryReport, symmetry: f64) -> Vec<String> {
    let pr = r.params;
    let mut cells: Vec<String> = x.iter().map(|&c| num(c)).collect();
    cells.push(r.group.to_string());
    cells.push(tag(&r.cubic_label));
    cells.extend(
        [
            pr.lambda,
            pr.mu,
            pr.a,
            pr.b,
            pr.c,
            pr.d,
            r.form_residual,
            symmetry,
        ]
        .map(num),
    );
    cells.push(r.ambiguous.to_string());
    cells.push(String::new());
    cells
}

fn classify(cfg: &RunConfig, surface: &SurfaceSpec) -> Result<CommandOutput, RunError> {
    let x = cfg.point.unwrap_or_else(|| surface.domain.center());
    if !surface.domain.contains(x) {
        return Err(GeomError::OutsideDomain(x[0], x[1], x[2]).into());
    }
    let tol = cfg.tolerances.classify;
    let app = apparatus(surface, x)?;
    let report = stabilizer_pair(&app.cubic, &app.shape, tol)?;
    let sym = symmetry_residual(&report, &app.cubic, &app.shape);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut agree = 0;
    for _ in 0..CONJUGATION_DRAWS {
        let r = random_rotation(&mut rng);
        let (c1, s1) = conjugate_unchecked(&app.cubic, &app.shape, &r);
        if stabilizer_pair(&c1, &s1, tol)
            .map(|rep| rep.group == report.group)
            .unwrap_or(false)
        {
            agree += 1;
        }
    }
    let expected_ok = surface.expected_group.is_none_or(|g| g == report.group);
    let ok = sym.max <= cfg.tolerances.symmetry && agree == CONJUGATION_DRAWS && expected_ok;
    let mut table = Table::new(&CLASSIFY_COLUMNS);
    table.row(classify_row(x, &report, sym.max));
    let csv = table.finish();
    let result = json!({
        "point": x,
        "group": report.group,
        "report": report,
        "symmetry_residual": sym,
        "cubic": app.cubic,
        "shape": [[app.shape[(0, 0)], app.shape[(0, 1)], app.shape[(0, 2)]],
                  [app.shape[(1, 0)], app.shape[(1, 1)], app.shape[(1, 2)]],
                  [app.shape[(2, 0)], app.shape[(2, 1)], app.shape[(2, 2)]]],
        "diagnostics": app.diagnostics,
    });
    let summary = json!({
        "pass": ok,
        "expected_group": surface.expected_group,
        "conjugation_draws": CONJUGATION_DRAWS,
        "conjugation_agree": agree,
    });
    Ok((summary, vec![result], csv, ok))
}

fn scan_cmd(cfg: &RunConfig, surface: &SurfaceSpec) -> Result<CommandOutput, RunError> {
    let grid = grid_or_point(cfg, surface)?;
    require_inside(surface, &grid)?;
    let opts = ScanOptions {
        tol: cfg.tolerances.classify,
        residuals: true,
        frames: true,
    };
    let mut gs = scan(surface, &grid, &opts);
    for p in &mut gs.points {
        p.residuals = p
            .residuals
            .iter()
            .map(|r| cfg.tolerances.rescore(r))
            .collect();
    }
    gs.summary = crate::verifier::summarize(&gs.points);
    let expected_ok = surface
        .expected_group
        .is_none_or(|g| gs.summary.histogram.get(g.name()).copied() == Some(gs.summary.points));
    let sym_ok = gs.summary.worst_symmetry_residual <= cfg.tolerances.symmetry;
    let ok = gs.summary.errors == 0 && gs.summary.failed_checks == 0 && expected_ok && sym_ok;

    let mut table = Table::new(&CLASSIFY_COLUMNS);
    for p in &gs.points {
        match &p.report {
            Some(r) => table.row(classify_row(
                p.point,
                r,
                p.symmetry_residual.unwrap_or(f64::NAN),
            )),
            None => {
                let mut cells: Vec<String> = p.point.iter().map(|&c| num(c)).collect();
                cells.resize(CLASSIFY_COLUMNS.len() - 1, String::new());
                cells.push(p.error.clone().unwrap_or_default());
                table.row(cells);
            }
        }
    }
    let csv = table.finish();
    let summary = json!({
        "pass": ok,
        "expected_group": surface.expected_group,
        "grid": gs.grid,
        "scan": gs.summary,
    });
    let results = gs
        .points
        .iter()
        .map(|p| serde_json::to_value(p).expect("serializable"))
        .collect();
    Ok((summary, results, csv, ok))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyRow {
    /// `None` for checks attached to a line or the whole grid.
    pub point: Option<[f64; 3]>,
    #[serde(flatten)]
    pub record: ResidualRecord,
}

fn verify(cfg: &RunConfig, surface: &SurfaceSpec) -> Result<CommandOutput, RunError> {
    let grid = grid_or_point(cfg, surface)?;
    let pts = require_inside(surface, &grid)?;
    let tol = cfg.tolerances;
    let per_point: Vec<Vec<VerifyRow>> = crate::verifier::thread_pool().install(|| {
        use rayon::prelude::*;
        pts.par_iter()
            .map(|&x| -> Result<Vec<VerifyRow>, RunError> {
                let mut rows: Vec<VerifyRow> = check_fundamental(surface, x)?
                    .iter()
                    .map(|r| VerifyRow {
                        point: Some(x),
                        record: tol.rescore(r),
                    })
                    .collect();
                let app = apparatus(surface, x)?;
                let rep = stabilizer_pair(&app.cubic, &app.shape, tol.classify)?;
                let sym = symmetry_residual(&rep, &app.cubic, &app.shape);
                rows.push(VerifyRow {
                    point: Some(x),
                    record: ResidualRecord::new("symmetry", sym.max, 1.0, tol.symmetry),
                });
                if let Some(g) = surface.expected_group {
                    let miss = if rep.group == g { 0.0 } else { 1.0 };
                    rows.push(VerifyRow {
                        point: Some(x),
                        record: ResidualRecord::new("expected_group", miss, 1.0, 0.5),
                    });
                }
                Ok(rows)
            })
            .collect::<Result<_, RunError>>()
    })?;
    let mut rows: Vec<VerifyRow> = per_point.into_iter().flatten().collect();

    let mut warped = Value::Null;
    if matches!(
        surface.kind,
        SurfaceKind::ProperWarped { .. } | SurfaceKind::ImproperWarped { .. }
    ) {
        let [lo, hi] = surface.domain.0[0];
        let margin = 0.05 * (hi - lo);
        let line = TLine {
            u: grid.u.start,
            v: grid.v.start,
            t: [lo + margin, hi - margin],
            count: 21,
        };
        let sc = check_structure(surface, &line)?;
        rows.extend(sc.records.iter().map(|r| VerifyRow {
            point: None,
            record: tol.rescore(r),
        }));
        let case = warped_case(surface, &grid)?;
        let expected = expected_warped_label(surface);
        let miss = match expected {
            Some(l) if l != case.label => 1.0,
            _ if case.label == WarpedLabel::DichotomyViolated => 1.0,
            _ => 0.0,
        };
        rows.push(VerifyRow {
            point: None,
            record: ResidualRecord::new("warped_case", miss, 1.0, 0.5),
        });
        warped = json!({ "case": case, "expected": expected, "line": line });
    }

    let ok = rows.iter().all(|r| r.record.pass);
    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for r in &rows {
        let w = worst.entry(r.record.name.clone()).or_insert(0.0);
        *w = w.max(r.record.value);
    }
    let failed = rows.iter().filter(|r| !r.record.pass).count();
    let mut table = Table::new(&[
        "t",
        "u",
        "v",
        "check",
        "value",
        "scale",
        "tolerance",
        "pass",
    ]);
    for r in &rows {
        let mut cells: Vec<String> = match r.point {
            Some(p) => p.iter().map(|&c| num(c)).collect(),
            None => vec![String::new(); 3],
        };
        let rec = &r.record;
        cells.push(rec.name.clone());
        cells.extend([rec.value, rec.scale, rec.tolerance].map(num));
        cells.push(rec.pass.to_string());
        table.row(cells);
    }
    let csv = table.finish();
    let summary = json!({
        "pass": ok,
        "checks": rows.len(),
        "failed": failed,
        "worst": worst,
        "warped": warped,
    });
    let results = rows
        .iter()
        .map(|r| serde_json::to_value(r).expect("serializable"))
        .collect();
    Ok((summary, results, csv, ok))
}

/// Branch of the `ν` alternative each warped family is built to realize.
pub fn expected_warped_label(surface: &SurfaceSpec) -> Option<WarpedLabel> {
    match &surface.kind {
        SurfaceKind::ProperWarped { .. } => Some(WarpedLabel::NuNonzero),
        SurfaceKind::ImproperWarped {
            translation_only: false,
            ..
        } => Some(WarpedLabel::NuZeroLambdaNeqEta),
        SurfaceKind::ImproperWarped {
            translation_only: true,
            ..
        } => Some(WarpedLabel::NuZeroLambdaEqEta),
        _ => None,
    }
}

/// `|(x₁ - x₃²/2)(x₂ - x₄²/2) - 1|` for the Z2×Z2 model.
pub fn z2z2_implicit_residual(x: &[f64; 4]) -> f64 {
    ((x[0] - 0.5 * x[2] * x[2]) * (x[1] - 0.5 * x[3] * x[3]) - 1.0).abs()
}

fn construct(cfg: &RunConfig, surface: &SurfaceSpec) -> Result<CommandOutput, RunError> {
    let grid = grid_or_point(cfg, surface)?;
    let pts = require_inside(surface, &grid)?;
    let validity = validate_definiteness(surface);
    let positions: Vec<[f64; 4]> = pts.iter().map(|&x| surface.position(x)).collect();
    let implicit = if surface.kind == SurfaceKind::Z2Z2 {
        Some(
            positions
                .iter()
                .map(z2z2_implicit_residual)
                .fold(0.0f64, f64::max),
        )
    } else {
        None
    };
    let ok = validity.passes() && implicit.is_none_or(|r| r <= 1e-12);
    let mut table = Table::new(&["t", "u", "v", "x1", "x2", "x3", "x4"]);
    let mut results = Vec::with_capacity(pts.len());
    for (x, f) in pts.iter().zip(&positions) {
        table.row(x.iter().chain(f.iter()).map(|&c| num(c)));
        results.push(json!({ "point": x, "position": f }));
    }
    let csv = table.finish();
    let summary = json!({
        "pass": ok,
        "expected_group": surface.expected_group,
        "domain": surface.domain,
        "definiteness": validity,
        "implicit_residual": implicit,
    });
    Ok((summary, results, csv, ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        parse_config(text).unwrap()
    }

    #[test]
    fn config_rejects_unknown_keys() {
        let e = parse_config(r#"{"command":"classify","surface":"z2z2","bogus":1}"#).unwrap_err();
        assert!(matches!(e, RunError::Config(_)));
        let e = parse_config(r#"{"command":"classify","surface":"z2z2","tolerances":{"nope":1}}"#)
            .unwrap_err();
        assert!(matches!(e, RunError::Config(_)));
    }

    #[test]
    fn composed_surface_parses() {
        let c = cfg(
            r#"{"command":"construct","surface":{"family":"translation_warped","sphere":"elliptic_paraboloid",
            "gamma1":[0,1,0,0,0,0,0,0],"gamma2":[0,0,1,0,0,0,0,0],"t_domain":[1,2]}}"#,
        );
        let s = resolve_surface(&c.surface).unwrap();
        assert_eq!(s.id, "translation_warped:elliptic_paraboloid");
        assert!(validate_definiteness(&s).passes());
    }

    #[test]
    fn grid_parsing() {
        let s = default_surface("unit_sphere3").unwrap();
        let g = parse_grid("t=0:1:3,u=0:1:3,v=0:1:3", &s).unwrap();
        assert_eq!(g.points().len(), 27);
        let g = parse_grid("u=0:0.5:2", &s).unwrap();
        assert_eq!(g.points().len(), 2);
        assert!(parse_grid("t=0:1:0", &s).is_err());
        assert!(parse_grid("w=0:1:2", &s).is_err());
        assert!(parse_grid("t=0:1", &s).is_err());
    }

    #[test]
    fn tolerances_must_be_positive() {
        let c = cfg(r#"{"command":"classify","surface":"z2z2","tolerances":{"fd":0}}"#);
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_destination() {
        let a = cfg(r#"{"command":"classify","surface":"z2z2","output":{"path":"a.json"}}"#);
        let b = cfg(
            r#"{"command":"classify","surface":"z2z2","output":{"path":"b.json","format":"csv"}}"#,
        );
        let c = cfg(r#"{"command":"classify","surface":"z2z2","seed":3}"#);
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn classify_z2z2_origin() {
        let out = run(&cfg(
            r#"{"command":"classify","surface":"z2z2","point":[0,0,0]}"#,
        ))
        .unwrap();
        assert_eq!(out.status, 0);
        assert_eq!(out.document["results"][0]["group"], "Z2xZ2");
        assert_eq!(out.document["schema"], 1);
    }

    #[test]
    fn unknown_surface_is_a_config_error() {
        let e = run(&cfg(r#"{"command":"classify","surface":"torus"}"#)).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn construct_flags_bad_curve() {
        let out = run(&cfg(r#"{"command":"construct","surface":{"family":"translation_warped","sphere":"elliptic_paraboloid",
            "gamma1":[0,1,0,0,0,0,0,0],"gamma2":[0,0,0,1,0,0,0,0],"t_domain":[-1,1]},"grid":"t=-1:1:3"}"#))
        .unwrap();
        assert_eq!(out.status, 1);
        assert_eq!(out.document["summary"]["definiteness"]["consistent"], false);
    }
}

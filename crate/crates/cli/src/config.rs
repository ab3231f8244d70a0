//! Run configuration: JSON schema validation and named presets.
//!
//! Validation walks the whole document and reports every problem with its
//! key path, so a config can be fixed in one pass.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::path::PathBuf;

use num_complex::Complex64;
use rodeo::observables::Tolerance;
use rodeo::{
    CMatrix64, CVector64, Channel, CoefficientFn, HamiltonianTerm, MasterEquation64, Strategy64,
};
use serde_json::{Map, Value};

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_T_MAX: f64 = 3.0;
pub const DEFAULT_N_TRAJ: usize = 10_000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_OUT_DIR: &str = "rodeo-out";

/// Names accepted by the `model` key.
pub const PRESETS: [&str; 4] = [
    "dephasing",
    "pauli_cp",
    "pauli_nonPdiv_demo",
    "unphysical_dephasing",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Exact,
    Jump,
    Nmqj,
    Witness,
    Compare,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Exact,
        Mode::Jump,
        Mode::Nmqj,
        Mode::Witness,
        Mode::Compare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::Jump => "jump",
            Mode::Nmqj => "nmqj",
            Mode::Witness => "witness",
            Mode::Compare => "compare",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

/// A schema violation at a dotted key path such as `model.pauli.gamma_x`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let path = if self.path.is_empty() {
            "<root>"
        } else {
            &self.path
        };
        write!(f, "{path}: {}", self.message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub dir: PathBuf,
    pub trajectory_csv: String,
    pub populations_csv: String,
    pub plot_svg: String,
    pub summary_json: String,
}

impl OutputPaths {
    pub fn trajectory(&self) -> PathBuf {
        self.dir.join(&self.trajectory_csv)
    }

    pub fn populations(&self) -> PathBuf {
        self.dir.join(&self.populations_csv)
    }

    pub fn plot(&self) -> PathBuf {
        self.dir.join(&self.plot_svg)
    }

    pub fn summary(&self) -> PathBuf {
        self.dir.join(&self.summary_json)
    }
}

impl Default for OutputPaths {
    fn default() -> Self {
        Self {
            dir: PathBuf::from(DEFAULT_OUT_DIR),
            trajectory_csv: "trajectory.csv".into(),
            populations_csv: "populations.csv".into(),
            plot_svg: "bloch.svg".into(),
            summary_json: "summary.json".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    /// Preset name, or `pauli` / `custom` for inline models.
    pub model_name: String,
    pub model: MasterEquation64,
    pub initial_state: CVector64,
    pub strategy: Strategy64,
    pub dt: f64,
    pub t_max: f64,
    pub n_traj: usize,
    pub seed: u64,
    pub max_event_prob: f64,
    pub threads: Option<usize>,
    pub output: OutputPaths,
    pub tolerance: Tolerance,
    /// The validated document with defaults filled in, echoed in the summary.
    pub resolved: Value,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<String>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

struct Preset {
    model: MasterEquation64,
    initial_state: CVector64,
    strategy: Strategy64,
}

fn plus() -> CVector64 {
    let h = 0.5f64.sqrt();
    CVector64::from_f64_pairs(&[(h, 0.0), (h, 0.0)])
}

fn preset(name: &str) -> Option<Preset> {
    let zero = || Strategy64::Zero;
    let p = match name {
        "dephasing" => Preset {
            model: MasterEquation64::pauli_constant(0.0, 0.0, 1.0, 0.0),
            initial_state: plus(),
            strategy: zero(),
        },
        "pauli_cp" => Preset {
            model: MasterEquation64::pauli_constant(1.0, 1.0, 1.0, 1.0),
            initial_state: plus(),
            strategy: zero(),
        },
        // γ_x = γ_y = 0.3, γ_z = 0.5 cos 2t, β = 1 + 0.5 sin t: CP throughout
        // [0, 5] but γ_x + γ_z < 0 on (1.107, 2.034)
        "pauli_nonPdiv_demo" => Preset {
            model: MasterEquation64::pauli(
                CoefficientFn::Constant(0.3),
                CoefficientFn::Constant(0.3),
                CoefficientFn::Sinusoid {
                    amplitude: 0.5,
                    omega: 2.0,
                    phase: FRAC_PI_2,
                    offset: 0.0,
                },
                CoefficientFn::Sinusoid {
                    amplitude: 0.5,
                    omega: 1.0,
                    phase: 0.0,
                    offset: 1.0,
                },
            )
            .expect("demo preset is well formed"),
            initial_state: plus(),
            strategy: Strategy64::computational_basis(),
        },
        "unphysical_dephasing" => Preset {
            model: MasterEquation64::pauli_constant(0.0, 0.0, -0.5, 0.0),
            initial_state: plus(),
            strategy: zero(),
        },
        _ => return None,
    };
    Some(p)
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, Vec<SchemaError>> {
    parse_config_with(text, &Overrides::default())
}

/// [`parse_config`] with command-line overrides applied before validation.
pub fn parse_config_with(text: &str, overrides: &Overrides) -> Result<RunConfig, Vec<SchemaError>> {
    let mut doc: Value = serde_json::from_str(text).map_err(|e| {
        vec![SchemaError {
            path: String::new(),
            message: format!("invalid JSON: {e}"),
        }]
    })?;
    let Some(root) = doc.as_object_mut() else {
        return Err(vec![SchemaError {
            path: String::new(),
            message: "expected a JSON object".into(),
        }]);
    };
    if let Some(m) = &overrides.mode {
        root.insert("mode".into(), Value::from(m.clone()));
    }
    if let Some(s) = overrides.seed {
        root.insert("seed".into(), Value::from(s));
    }
    if let Some(t) = overrides.threads {
        root.insert("threads".into(), Value::from(t));
    }
    if let Some(dir) = &overrides.out_dir {
        let out = root
            .entry("output")
            .or_insert_with(|| Value::Object(Map::new()));
        if let Some(o) = out.as_object_mut() {
            o.insert(
                "dir".into(),
                Value::from(dir.to_string_lossy().into_owned()),
            );
        }
    }
    let mut v = Validator::default();
    let cfg = v.run_config(&doc);
    match cfg {
        Some(c) if v.errors.is_empty() => Ok(c),
        _ => Err(v.errors),
    }
}

/// Output directory named by a document, if it can be read at all; used to
/// place the summary of a run whose config failed validation.
pub fn output_dir_hint(text: &str, overrides: &Overrides) -> PathBuf {
    if let Some(d) = &overrides.out_dir {
        return d.clone();
    }
    serde_json::from_str::<Value>(text)
        .ok()
        .and_then(|v| v.get("output")?.get("dir")?.as_str().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

#[derive(Default)]
struct Validator {
    errors: Vec<SchemaError>,
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn index(path: &str, i: usize) -> String {
    format!("{path}[{i}]")
}

impl Validator {
    fn err(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(SchemaError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    /// Checks that `value` is an object with keys drawn from `allowed`.
    fn object<'a>(
        &mut self,
        path: &str,
        value: &'a Value,
        allowed: &[&str],
    ) -> Option<&'a Map<String, Value>> {
        let Some(obj) = value.as_object() else {
            self.err(path, "expected an object");
            return None;
        };
        for key in obj.keys() {
            if !allowed.contains(&key.as_str()) {
                self.err(
                    &join(path, key),
                    format!("unknown key (allowed: {})", allowed.join(", ")),
                );
            }
        }
        Some(obj)
    }

    fn number(&mut self, path: &str, value: &Value) -> Option<f64> {
        match value.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.err(path, "expected a finite number");
                None
            }
        }
    }

    fn positive(&mut self, path: &str, value: &Value) -> Option<f64> {
        let x = self.number(path, value)?;
        if x > 0.0 {
            Some(x)
        } else {
            self.err(path, format!("must be positive, got {x}"));
            None
        }
    }

    fn integer(&mut self, path: &str, value: &Value, min: u64) -> Option<u64> {
        match value.as_u64() {
            Some(n) if n >= min => Some(n),
            _ => {
                self.err(path, format!("expected an integer >= {min}"));
                None
            }
        }
    }

    fn string<'a>(&mut self, path: &str, value: &'a Value) -> Option<&'a str> {
        let s = value.as_str();
        if s.is_none() {
            self.err(path, "expected a string");
        }
        s
    }

    fn complex(&mut self, path: &str, value: &Value) -> Option<Complex64> {
        if let Some(x) = value.as_f64() {
            return Some(Complex64::new(x, 0.0));
        }
        match value.as_array().map(Vec::as_slice) {
            Some([re, im]) => match (re.as_f64(), im.as_f64()) {
                (Some(re), Some(im)) if re.is_finite() && im.is_finite() => {
                    Some(Complex64::new(re, im))
                }
                _ => {
                    self.err(path, "expected [re, im] with finite numbers");
                    None
                }
            },
            _ => {
                self.err(path, "expected a number or [re, im]");
                None
            }
        }
    }

    fn vector(&mut self, path: &str, value: &Value) -> Option<Vec<Complex64>> {
        let Some(items) = value.as_array() else {
            self.err(path, "expected an array of amplitudes");
            return None;
        };
        let out: Vec<_> = items
            .iter()
            .enumerate()
            .map(|(i, x)| self.complex(&index(path, i), x))
            .collect();
        out.into_iter().collect()
    }

    fn matrix(&mut self, path: &str, value: &Value, dim: Option<usize>) -> Option<CMatrix64> {
        let Some(rows) = value.as_array() else {
            self.err(path, "expected an array of rows");
            return None;
        };
        let rows: Option<Vec<Vec<Complex64>>> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| self.vector(&index(path, i), r))
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        let rows = rows?;
        if let Some(d) = dim {
            if rows.len() != d {
                self.err(path, format!("expected {d} rows, got {}", rows.len()));
                return None;
            }
        }
        match CMatrix64::from_rows(rows) {
            Ok(m) => Some(m),
            Err(e) => {
                self.err(path, format!("not a square matrix: {e}"));
                None
            }
        }
    }

    fn coefficient(&mut self, path: &str, value: &Value) -> Option<CoefficientFn<f64>> {
        if let Some(x) = value.as_f64() {
            return self.number(path, value).map(|_| CoefficientFn::Constant(x));
        }
        let obj = self.object(
            path,
            value,
            &["sinusoid", "tanh_ramp", "polynomial", "piecewise_linear"],
        )?;
        if obj.len() != 1 {
            self.err(
                path,
                "expected exactly one of sinusoid, tanh_ramp, polynomial, piecewise_linear",
            );
            return None;
        }
        let (kind, body) = obj.iter().next()?;
        let p = join(path, kind);
        let coeff = match kind.as_str() {
            "sinusoid" => {
                let o = self.object(&p, body, &["amplitude", "omega", "phase", "offset"])?;
                let mut field = |k: &str| match o.get(k) {
                    Some(x) => self.number(&join(&p, k), x),
                    None => Some(0.0),
                };
                let (amplitude, omega, phase, offset) = (
                    field("amplitude"),
                    field("omega"),
                    field("phase"),
                    field("offset"),
                );
                CoefficientFn::Sinusoid {
                    amplitude: amplitude?,
                    omega: omega?,
                    phase: phase?,
                    offset: offset?,
                }
            }
            "tanh_ramp" => {
                let o = self.object(&p, body, &["amplitude", "steepness"])?;
                let mut field = |k: &str| match o.get(k) {
                    Some(x) => self.number(&join(&p, k), x),
                    None => {
                        self.err(&join(&p, k), "required");
                        None
                    }
                };
                let (amplitude, steepness) = (field("amplitude"), field("steepness"));
                CoefficientFn::TanhRamp {
                    amplitude: amplitude?,
                    steepness: steepness?,
                }
            }
            "polynomial" => {
                let Some(items) = body.as_array() else {
                    self.err(&p, "expected an array of coefficients");
                    return None;
                };
                let c: Vec<_> = items
                    .iter()
                    .enumerate()
                    .map(|(i, x)| self.number(&index(&p, i), x))
                    .collect();
                CoefficientFn::Polynomial(c.into_iter().collect::<Option<_>>()?)
            }
            _ => {
                let Some(items) = body.as_array() else {
                    self.err(&p, "expected an array of [t, value] pairs");
                    return None;
                };
                let mut samples = Vec::with_capacity(items.len());
                for (i, item) in items.iter().enumerate() {
                    match item.as_array().map(Vec::as_slice) {
                        Some([t, v]) => {
                            let q = index(&p, i);
                            let (t, v) = (self.number(&q, t), self.number(&q, v));
                            samples.push((t?, v?));
                        }
                        _ => self.err(&index(&p, i), "expected [t, value]"),
                    }
                }
                CoefficientFn::PiecewiseLinear(samples)
            }
        };
        match coeff.validate() {
            Ok(()) => Some(coeff),
            Err(e) => {
                self.err(&p, e.to_string());
                None
            }
        }
    }

    /// Returns the model, its name and the preset defaults it carries.
    fn model(
        &mut self,
        path: &str,
        value: &Value,
    ) -> Option<(String, MasterEquation64, Option<Preset>)> {
        if let Some(name) = value.as_str() {
            return match preset(name) {
                Some(p) => Some((name.to_string(), p.model.clone(), Some(p))),
                None => {
                    self.err(
                        path,
                        format!("unknown preset '{name}' (known: {})", PRESETS.join(", ")),
                    );
                    None
                }
            };
        }
        let obj = self.object(path, value, &["pauli", "custom"])?;
        if obj.len() != 1 {
            self.err(
                path,
                "expected a preset name or exactly one of pauli, custom",
            );
            return None;
        }
        if let Some(body) = obj.get("pauli") {
            let p = join(path, "pauli");
            let o = self.object(&p, body, &["gamma_x", "gamma_y", "gamma_z", "beta"])?;
            let mut coeff = |k: &str| match o.get(k) {
                Some(x) => self.coefficient(&join(&p, k), x),
                None => Some(CoefficientFn::Constant(0.0)),
            };
            let (gx, gy, gz, beta) = (
                coeff("gamma_x"),
                coeff("gamma_y"),
                coeff("gamma_z"),
                coeff("beta"),
            );
            let me = MasterEquation64::pauli(gx?, gy?, gz?, beta?);
            return self
                .model_result(&p, me)
                .map(|m| ("pauli".to_string(), m, None));
        }
        let p = join(path, "custom");
        let body = obj.get("custom")?;
        let o = self.object(&p, body, &["dim", "hamiltonian", "channels"])?;
        let dim = match o.get("dim") {
            Some(d) => self.integer(&join(&p, "dim"), d, 2).map(|d| d as usize),
            None => {
                self.err(&join(&p, "dim"), "required");
                None
            }
        };
        let mut hamiltonian = Vec::new();
        if let Some(h) = o.get("hamiltonian") {
            let hp = join(&p, "hamiltonian");
            match h.as_array() {
                Some(items) => {
                    for (i, item) in items.iter().enumerate() {
                        let ip = index(&hp, i);
                        if let Some(t) = self.object(&ip, item, &["coefficient", "matrix"]) {
                            let c = match t.get("coefficient") {
                                Some(c) => self.coefficient(&join(&ip, "coefficient"), c),
                                None => Some(CoefficientFn::Constant(1.0)),
                            };
                            let m = match t.get("matrix") {
                                Some(m) => self.matrix(&join(&ip, "matrix"), m, dim),
                                None => {
                                    self.err(&join(&ip, "matrix"), "required");
                                    None
                                }
                            };
                            if let (Some(coefficient), Some(matrix)) = (c, m) {
                                hamiltonian.push(HamiltonianTerm {
                                    coefficient,
                                    matrix,
                                });
                            }
                        }
                    }
                }
                None => self.err(&hp, "expected an array of terms"),
            }
        }
        let mut channels = Vec::new();
        if let Some(ch) = o.get("channels") {
            let cp = join(&p, "channels");
            match ch.as_array() {
                Some(items) => {
                    for (i, item) in items.iter().enumerate() {
                        let ip = index(&cp, i);
                        if let Some(t) = self.object(&ip, item, &["rate", "operator"]) {
                            let r = match t.get("rate") {
                                Some(r) => self.coefficient(&join(&ip, "rate"), r),
                                None => {
                                    self.err(&join(&ip, "rate"), "required");
                                    None
                                }
                            };
                            let m = match t.get("operator") {
                                Some(m) => self.matrix(&join(&ip, "operator"), m, dim),
                                None => {
                                    self.err(&join(&ip, "operator"), "required");
                                    None
                                }
                            };
                            if let (Some(rate), Some(operator)) = (r, m) {
                                channels.push(Channel { rate, operator });
                            }
                        }
                    }
                }
                None => self.err(&cp, "expected an array of channels"),
            }
        }
        let dim = dim?;
        let me = MasterEquation64::new(dim, hamiltonian, channels);
        self.model_result(&p, me)
            .map(|m| ("custom".to_string(), m, None))
    }

    fn model_result(
        &mut self,
        path: &str,
        me: rodeo::Result<MasterEquation64>,
    ) -> Option<MasterEquation64> {
        match me {
            Ok(m) => Some(m),
            Err(e) => {
                self.err(path, e.to_string());
                None
            }
        }
    }

    fn initial_state(&mut self, path: &str, value: &Value, dim: usize) -> Option<CVector64> {
        if let Some(name) = value.as_str() {
            let h = 0.5f64.sqrt();
            let mut v = vec![Complex64::new(0.0, 0.0); dim];
            match name {
                "zero" => v[0] = Complex64::new(1.0, 0.0),
                "one" => v[1] = Complex64::new(1.0, 0.0),
                "plus" | "minus" => {
                    v[0] = Complex64::new(h, 0.0);
                    v[1] = Complex64::new(if name == "plus" { h } else { -h }, 0.0);
                }
                _ => {
                    self.err(
                        path,
                        format!("unknown state '{name}' (known: zero, one, plus, minus)"),
                    );
                    return None;
                }
            }
            return Some(CVector64::from_vec(v));
        }
        let amps = self.vector(path, value)?;
        if amps.len() != dim {
            self.err(
                path,
                format!("expected {dim} amplitudes, got {}", amps.len()),
            );
            return None;
        }
        match CVector64::from_vec(amps).normalized() {
            Ok(v) => Some(v),
            Err(_) => {
                self.err(path, "state vector is zero");
                None
            }
        }
    }

    fn strategy(&mut self, path: &str, value: &Value, dim: usize) -> Option<Strategy64> {
        let s = match value.as_str() {
            Some("zero") => Strategy64::Zero,
            Some("target_basis") => Strategy64::computational_basis(),
            Some(other) => {
                self.err(
                    path,
                    format!("unknown strategy '{other}' (known: zero, target_basis)"),
                );
                return None;
            }
            None => {
                let obj = self.object(path, value, &["state_scaled", "target_basis"])?;
                if obj.len() != 1 {
                    self.err(path, "expected exactly one of state_scaled, target_basis");
                    return None;
                }
                if let Some(c) = obj.get("state_scaled") {
                    Strategy64::StateScaled(self.complex(&join(path, "state_scaled"), c)?)
                } else {
                    let p = join(path, "target_basis");
                    let Some(items) = obj.get("target_basis").and_then(Value::as_array) else {
                        self.err(&p, "expected an array of two basis vectors");
                        return None;
                    };
                    let basis: Vec<_> = items
                        .iter()
                        .enumerate()
                        .map(|(i, v)| self.vector(&index(&p, i), v).map(CVector64::from_vec))
                        .collect();
                    let basis: Vec<CVector64> = basis.into_iter().collect::<Option<_>>()?;
                    if basis.len() != 2 || basis.iter().any(|v| v.dim() != 2) {
                        self.err(&p, "expected two qubit vectors");
                        return None;
                    }
                    let orthonormal = basis.iter().all(|v| (v.norm_sqr() - 1.0).abs() < 1e-10)
                        && basis[0].inner(&basis[1]).norm() < 1e-10;
                    if !orthonormal {
                        self.err(&p, "basis is not orthonormal");
                        return None;
                    }
                    Strategy64::TargetBasis(basis)
                }
            }
        };
        if matches!(s, Strategy64::TargetBasis(_)) && dim != 2 {
            self.err(
                path,
                format!("target_basis requires a qubit model, got dimension {dim}"),
            );
            return None;
        }
        Some(s)
    }

    fn output(&mut self, path: &str, value: Option<&Value>) -> OutputPaths {
        let mut out = OutputPaths::default();
        let Some(value) = value else { return out };
        let allowed = [
            "dir",
            "trajectory_csv",
            "populations_csv",
            "plot_svg",
            "summary_json",
        ];
        let Some(obj) = self.object(path, value, &allowed) else {
            return out;
        };
        for (k, v) in obj {
            let Some(s) = self.string(&join(path, k), v) else {
                continue;
            };
            if s.is_empty() {
                self.err(&join(path, k), "must not be empty");
                continue;
            }
            match k.as_str() {
                "dir" => out.dir = PathBuf::from(s),
                "trajectory_csv" => out.trajectory_csv = s.into(),
                "populations_csv" => out.populations_csv = s.into(),
                "plot_svg" => out.plot_svg = s.into(),
                "summary_json" => out.summary_json = s.into(),
                _ => {}
            }
        }
        out
    }

    fn tolerance(&mut self, path: &str, value: Option<&Value>) -> Tolerance {
        let mut tol = Tolerance::default();
        let Some(value) = value else { return tol };
        if let Some(obj) = self.object(path, value, &["sigmas", "floor"]) {
            if let Some(s) = obj.get("sigmas") {
                tol.sigmas = self
                    .positive(&join(path, "sigmas"), s)
                    .unwrap_or(tol.sigmas);
            }
            if let Some(f) = obj.get("floor") {
                match self.number(&join(path, "floor"), f) {
                    Some(x) if x >= 0.0 => tol.floor = x,
                    Some(x) => self.err(
                        &join(path, "floor"),
                        format!("must be non-negative, got {x}"),
                    ),
                    None => {}
                }
            }
        }
        tol
    }

    fn run_config(&mut self, doc: &Value) -> Option<RunConfig> {
        let allowed = [
            "mode",
            "model",
            "initial_state",
            "strategy",
            "dt",
            "t_max",
            "n_traj",
            "seed",
            "max_event_prob",
            "threads",
            "output",
            "tolerance",
        ];
        let root = self.object("", doc, &allowed)?;

        let mode = match root.get("mode") {
            Some(m) => self.string("mode", m).and_then(|s| {
                let m = Mode::parse(s);
                if m.is_none() {
                    let names: Vec<_> = Mode::ALL.iter().map(|m| m.name()).collect();
                    self.err(
                        "mode",
                        format!("unknown mode '{s}' (known: {})", names.join(", ")),
                    );
                }
                m
            }),
            None => {
                self.err("mode", "required");
                None
            }
        };
        let model = match root.get("model") {
            Some(m) => self.model("model", m),
            None => {
                self.err("model", "required");
                None
            }
        };
        let dim = model.as_ref().map(|(_, m, _)| m.dim());
        if let Some(d) = dim.filter(|&d| d != 2) {
            self.err(
                "model",
                format!(
                    "outputs are Bloch components, so the model must be a qubit; got dimension {d}"
                ),
            );
        }

        let dt = match root.get("dt") {
            Some(v) => self.positive("dt", v),
            None => Some(DEFAULT_DT),
        };
        let t_max = match root.get("t_max") {
            Some(v) => self.positive("t_max", v),
            None => Some(DEFAULT_T_MAX),
        };
        if let (Some(dt), Some(t_max)) = (dt, t_max) {
            if dt > t_max {
                self.err("dt", format!("dt = {dt} exceeds t_max = {t_max}"));
            }
        }
        let n_traj = match root.get("n_traj") {
            Some(v) => self.integer("n_traj", v, 1).map(|n| n as usize),
            None => Some(DEFAULT_N_TRAJ),
        };
        let seed = match root.get("seed") {
            Some(v) => self.integer("seed", v, 0),
            None => Some(DEFAULT_SEED),
        };
        let max_event_prob = match root.get("max_event_prob") {
            Some(v) => self.number("max_event_prob", v).and_then(|p| {
                if p > 0.0 && p < 1.0 {
                    Some(p)
                } else {
                    self.err("max_event_prob", format!("must lie in (0, 1), got {p}"));
                    None
                }
            }),
            None => Some(0.1),
        };
        let threads = match root.get("threads") {
            Some(Value::Null) | None => Some(None),
            Some(v) => self.integer("threads", v, 1).map(|n| Some(n as usize)),
        };
        let initial_state = match (root.get("initial_state"), dim, &model) {
            (Some(v), Some(d), _) => self.initial_state("initial_state", v, d),
            (None, _, Some((_, _, Some(p)))) => Some(p.initial_state.clone()),
            (None, Some(d), _) => self.initial_state("initial_state", &Value::from("zero"), d),
            _ => None,
        };
        let strategy = match (root.get("strategy"), dim, &model) {
            (Some(v), Some(d), _) => self.strategy("strategy", v, d),
            (None, _, Some((_, _, Some(p)))) => Some(p.strategy.clone()),
            (None, Some(_), _) => Some(Strategy64::Zero),
            _ => None,
        };
        let output = self.output("output", root.get("output"));
        let tolerance = self.tolerance("tolerance", root.get("tolerance"));

        let mode = mode?;
        let (model_name, model, _) = model?;
        let (dt, t_max, n_traj, seed, max_event_prob, threads) =
            (dt?, t_max?, n_traj?, seed?, max_event_prob?, threads?);
        let (initial_state, strategy) = (initial_state?, strategy?);
        if matches!(mode, Mode::Nmqj | Mode::Witness | Mode::Compare)
            && n_traj < rodeo::nmqj::MIN_MEMBERS
        {
            self.err(
                "n_traj",
                format!(
                    "{} mode needs at least {} members",
                    mode.name(),
                    rodeo::nmqj::MIN_MEMBERS
                ),
            );
            return None;
        }
        let resolved = serde_json::json!({
            "mode": mode.name(),
            "model": model_name,
            "initial_state": initial_state.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
            "strategy": strategy.name(),
            "dt": dt,
            "t_max": t_max,
            "n_traj": n_traj,
            "seed": seed,
            "max_event_prob": max_event_prob,
            "threads": threads,
            "tolerance": { "sigmas": tolerance.sigmas, "floor": tolerance.floor },
        });
        Some(RunConfig {
            mode,
            model_name,
            model,
            initial_state,
            strategy,
            dt,
            t_max,
            n_traj,
            seed,
            max_event_prob,
            threads,
            output,
            tolerance,
            resolved,
        })
    }
}

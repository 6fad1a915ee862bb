//! Run configuration, ESRI ASCII rasters, and CSV outputs.
//!
//! Configuration files are line oriented: `section.key = value`, with `#`
//! starting a comment. Sections are `grid`, `bc`, `scheme`, `scenario`,
//! `raster` and `output`; later assignments override earlier ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::grid::{BoundaryKind, BoundarySpec, Geometry, Grid, StateField};
use crate::grid::GridConfig;
use crate::reconstruction::{EpsLaw, Variant};
use crate::scenarios::Scenario;
use crate::solver::{GaussRule, Observer, SchemeConfig};

#[derive(Debug, Error, PartialEq)]
#[error("{origin}: `{key}`: {message}")]
pub struct ConfigError {
    /// Where the offending line came from, e.g. `line 7` or `override 2`.
    pub origin: String,
    pub key: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::Io { path: path.to_path_buf(), source }
    }

    fn format(path: &Path, message: impl Into<String>) -> Self {
        IoError::Format { path: path.to_path_buf(), message: message.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NodataPolicy {
    /// Substitute a fixed elevation (dry land when above the lake level).
    Fill(f64),
    Error,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RasterSettings {
    pub path: PathBuf,
    /// Raster values are depths (positive down) rather than elevations.
    pub positive_down: bool,
    pub nodata_policy: NodataPolicy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputSettings {
    pub dir: PathBuf,
    pub prefix: String,
    /// Snapshot instants in addition to the final one.
    pub snapshot_times: Vec<f64>,
    pub snapshot_every: Option<f64>,
    /// Gauge positions in grid coordinates (degrees on a sphere).
    pub gauges: Vec<(f64, f64)>,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("output"),
            prefix: String::new(),
            snapshot_times: Vec::new(),
            snapshot_every: None,
            gauges: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub bc: BoundarySpec,
    pub scheme: SchemeConfig,
    pub scenario: Scenario,
    pub raster: Option<RasterSettings>,
    pub output: OutputSettings,
}

const KEYS: &[&str] = &[
    "grid.geometry",
    "grid.radius",
    "grid.x_min",
    "grid.x_max",
    "grid.y_min",
    "grid.y_max",
    "grid.nx",
    "grid.ny",
    "grid.dx",
    "grid.dy",
    "grid.n",
    "bc.all",
    "bc.west",
    "bc.east",
    "bc.south",
    "bc.north",
    "scheme.variant",
    "scheme.order",
    "scheme.cfl",
    "scheme.g",
    "scheme.quad_edge",
    "scheme.quad_vol",
    "scheme.end_time",
    "scheme.h_dry",
    "scheme.h_vel",
    "scheme.eps_law",
    "scheme.d0",
    "scheme.dr",
    "scheme.max_steps",
    "scenario.name",
    "scenario.seed",
    "scenario.noise",
    "scenario.h0",
    "scenario.vbar",
    "scenario.alpha",
    "scenario.eps_reg",
    "scenario.a",
    "scenario.sigma",
    "scenario.printed_variant",
    "scenario.amplitude",
    "scenario.width",
    "scenario.gauge",
    "scenario.eta0",
    "scenario.deep",
    "scenario.shallow",
    "raster.path",
    "raster.positive_down",
    "raster.nodata_policy",
    "raster.nodata_elevation",
    "output.dir",
    "output.prefix",
    "output.snapshot_times",
    "output.snapshot_every",
    "output.gauges",
];

struct Entry {
    origin: String,
    value: String,
}

struct Entries(BTreeMap<String, Entry>);

impl Entries {
    fn err(&self, key: &str, message: impl Into<String>) -> ConfigError {
        let origin = self.0.get(key).map(|e| e.origin.clone()).unwrap_or_else(|| "config".into());
        ConfigError { origin, key: key.to_string(), message: message.into() }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(|e| e.value.as_str())
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| self.err(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn f64(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v = self.parse::<f64>(key)?;
        match v {
            Some(x) if !x.is_finite() => Err(self.err(key, "value must be finite")),
            _ => Ok(v),
        }
    }

    fn bool(&self, key: &str) -> Result<Option<bool>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "1" | "on" => Ok(Some(true)),
                "false" | "no" | "0" | "off" => Ok(Some(false)),
                _ => Err(self.err(key, format!("expected a boolean, got `{v}`"))),
            },
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) if v.trim().is_empty() => Ok(Some(Vec::new())),
            Some(v) => v
                .split([',', ' '])
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| self.err(key, format!("cannot parse `{s}` as a number"))))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }
}

fn collect(text: &str, overrides: &[String]) -> Result<Entries, ConfigError> {
    let mut map = BTreeMap::new();
    let lines = text
        .lines()
        .enumerate()
        .map(|(n, l)| (format!("line {}", n + 1), l.to_string()))
        .chain(overrides.iter().enumerate().map(|(n, l)| (format!("override {}", n + 1), l.clone())));
    for (origin, line) in lines {
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(ConfigError { origin, key: content.to_string(), message: "expected `section.key = value`".into() });
        };
        let key = key.trim().to_ascii_lowercase();
        if !KEYS.contains(&key.as_str()) {
            let message = if key.contains('.') { "unknown key" } else { "keys must be written as section.key" };
            return Err(ConfigError { origin, key, message: message.into() });
        }
        map.insert(key, Entry { origin, value: value.trim().to_string() });
    }
    Ok(Entries(map))
}

/// Parses a configuration text followed by `section.key=value` overrides.
pub fn parse_config_with(text: &str, overrides: &[String]) -> Result<RunConfig, ConfigError> {
    let e = collect(text, overrides)?;

    let mut scenario = match e.raw("scenario.name") {
        Some(name) => Scenario::from_name(name).ok_or_else(|| e.err("scenario.name", format!("unknown scenario `{name}`")))?,
        None => Scenario::from_name("vortex").expect("built-in scenario"),
    };
    apply_scenario_keys(&e, &mut scenario)?;

    let mut grid = scenario.default_grid();
    if let Some(geom) = e.raw("grid.geometry") {
        grid.geometry = match geom.to_ascii_lowercase().as_str() {
            "cartesian" => Geometry::Cartesian,
            "spherical" => match grid.geometry {
                Geometry::Spherical { radius } => Geometry::Spherical { radius },
                Geometry::Cartesian => Geometry::Spherical { radius: 6.371e6 },
            },
            _ => return Err(e.err("grid.geometry", "expected cartesian or spherical")),
        };
    }
    if let Some(r) = e.f64("grid.radius")? {
        if !(r > 0.0) {
            return Err(e.err("grid.radius", "radius must be positive"));
        }
        grid.geometry = Geometry::Spherical { radius: r };
    }
    for (key, slot) in [
        ("grid.x_min", &mut grid.x_min),
        ("grid.x_max", &mut grid.x_max),
        ("grid.y_min", &mut grid.y_min),
        ("grid.y_max", &mut grid.y_max),
    ] {
        if let Some(v) = e.f64(key)? {
            *slot = v;
        }
    }
    let n = e.parse::<usize>("grid.n")?;
    let nx = e.parse::<usize>("grid.nx")?.or(n);
    let ny = e.parse::<usize>("grid.ny")?.or(n);
    let dx = e.f64("grid.dx")?;
    let dy = e.f64("grid.dy")?;
    if nx.is_some() || dx.is_some() {
        grid.nx = nx;
        grid.dx = dx;
    }
    if ny.is_some() || dy.is_some() {
        grid.ny = ny;
        grid.dy = dy;
    }
    if grid.x_max <= grid.x_min {
        return Err(e.err("grid.x_max", "x_max must exceed x_min"));
    }
    if grid.y_max <= grid.y_min {
        return Err(e.err("grid.y_max", "y_max must exceed y_min"));
    }
    for key in ["grid.nx", "grid.ny", "grid.n"] {
        if e.parse::<usize>(key)? == Some(0) {
            return Err(e.err(key, "cell count must be positive"));
        }
    }
    for key in ["grid.dx", "grid.dy"] {
        if let Some(d) = e.f64(key)? {
            if !(d > 0.0) {
                return Err(e.err(key, "cell size must be positive"));
            }
        }
    }

    let mut bc = scenario.default_bc();
    let parse_kind = |key: &str| -> Result<Option<BoundaryKind>, ConfigError> {
        match e.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<BoundaryKind>().map(Some).map_err(|m| e.err(key, m)),
        }
    };
    if let Some(k) = parse_kind("bc.all")? {
        bc = BoundarySpec::uniform(k);
    }
    for (key, slot) in [
        ("bc.west", &mut bc.west),
        ("bc.east", &mut bc.east),
        ("bc.south", &mut bc.south),
        ("bc.north", &mut bc.north),
    ] {
        if let Some(k) = parse_kind(key)? {
            *slot = k;
        }
    }
    bc.validate().map_err(|err| e.err("bc.west", err.to_string()))?;

    let mut variant = Variant::P2P1;
    if let Some(order) = e.parse::<u32>("scheme.order")? {
        variant = match order {
            3 => Variant::P2P1,
            4 => Variant::P3P1,
            _ => return Err(e.err("scheme.order", "order must be 3 or 4")),
        };
    }
    if let Some(v) = e.raw("scheme.variant") {
        variant = v.parse::<Variant>().map_err(|m| e.err("scheme.variant", m))?;
        if let Some(order) = e.parse::<u32>("scheme.order")? {
            if order != variant.order() {
                return Err(e.err("scheme.order", format!("variant {} has order {}", variant.name(), variant.order())));
            }
        }
    }
    let mut scheme = SchemeConfig::for_variant(variant);
    scheme.end_time = scenario.default_end_time(scheme.g);
    if let Some(v) = e.f64("scheme.cfl")? {
        if !(v > 0.0 && v <= 1.0) {
            return Err(e.err("scheme.cfl", format!("cfl must lie in (0, 1], got {v}")));
        }
        scheme.cfl = v;
    }
    if let Some(v) = e.f64("scheme.g")? {
        if !(v > 0.0) {
            return Err(e.err("scheme.g", "gravity must be positive"));
        }
        scheme.g = v;
        if e.raw("scheme.end_time").is_none() {
            scheme.end_time = scenario.default_end_time(v);
        }
    }
    for (key, slot) in [("scheme.quad_edge", &mut scheme.quad_edge), ("scheme.quad_vol", &mut scheme.quad_vol)] {
        if let Some(q) = e.parse::<usize>(key)? {
            if !(2..=3).contains(&q) || q < if variant.order() == 3 { 2 } else { 3 } {
                return Err(e.err(key, format!("{q} Gauss points cannot integrate an order-{} scheme", variant.order())));
            }
            *slot = q;
        }
    }
    if let Some(v) = e.f64("scheme.end_time")? {
        if v < 0.0 {
            return Err(e.err("scheme.end_time", "end time must be non-negative"));
        }
        scheme.end_time = v;
    }
    if let Some(v) = e.f64("scheme.h_dry")? {
        if !(v > 0.0) {
            return Err(e.err("scheme.h_dry", "dry threshold must be positive"));
        }
        scheme.h_dry = v;
    }
    if let Some(v) = e.f64("scheme.h_vel")? {
        if !(v >= 0.0) {
            return Err(e.err("scheme.h_vel", "velocity threshold must be non-negative"));
        }
        scheme.h_vel = v;
    }
    if let Some(v) = e.raw("scheme.eps_law") {
        scheme.eps_law = v.parse::<EpsLaw>().map_err(|m| e.err("scheme.eps_law", m))?;
        if let EpsLaw::Constant(c) = scheme.eps_law {
            if !(c > 0.0) {
                return Err(e.err("scheme.eps_law", "constant epsilon must be positive"));
            }
        }
    }
    let d0 = e.f64("scheme.d0")?;
    let dr = e.f64("scheme.dr")?;
    match (d0, dr) {
        (Some(a), None) => {
            scheme.d0 = a;
            scheme.dr = (1.0 - a) / 4.0;
        }
        (None, Some(b)) => {
            scheme.dr = b;
            scheme.d0 = 1.0 - 4.0 * b;
        }
        (Some(a), Some(b)) => {
            scheme.d0 = a;
            scheme.dr = b;
        }
        (None, None) => {}
    }
    if !(scheme.d0 > 0.0 && scheme.d0 <= 1.0 && scheme.dr >= 0.0) || (scheme.d0 + 4.0 * scheme.dr - 1.0).abs() > 1e-12 {
        return Err(e.err(
            if d0.is_some() { "scheme.d0" } else { "scheme.dr" },
            "linear weights must satisfy d0 > 0, dr >= 0 and d0 + 4 dr = 1",
        ));
    }
    if let Some(v) = e.parse::<u64>("scheme.max_steps")? {
        scheme.max_steps = v;
    }

    let raster = match e.raw("raster.path") {
        None => None,
        Some(p) => {
            let policy = match e.raw("raster.nodata_policy").map(|s| s.to_ascii_lowercase()) {
                None => NodataPolicy::Fill(e.f64("raster.nodata_elevation")?.unwrap_or(10.0)),
                Some(s) if s == "dry" || s == "fill" => {
                    NodataPolicy::Fill(e.f64("raster.nodata_elevation")?.unwrap_or(10.0))
                }
                Some(s) if s == "error" => NodataPolicy::Error,
                Some(s) => return Err(e.err("raster.nodata_policy", format!("expected dry or error, got `{s}`"))),
            };
            Some(RasterSettings {
                path: PathBuf::from(p),
                positive_down: e.bool("raster.positive_down")?.unwrap_or(false),
                nodata_policy: policy,
            })
        }
    };

    let mut output = OutputSettings::default();
    if let Some(d) = e.raw("output.dir") {
        output.dir = PathBuf::from(d);
    }
    if let Some(p) = e.raw("output.prefix") {
        output.prefix = p.to_string();
    }
    if let Some(mut times) = e.list("output.snapshot_times")? {
        if times.iter().any(|&t| t < 0.0) {
            return Err(e.err("output.snapshot_times", "times must be non-negative"));
        }
        times.sort_by(f64::total_cmp);
        output.snapshot_times = times;
    }
    if let Some(v) = e.f64("output.snapshot_every")? {
        if !(v > 0.0) {
            return Err(e.err("output.snapshot_every", "interval must be positive"));
        }
        output.snapshot_every = Some(v);
    }
    if let Some(g) = e.raw("output.gauges") {
        output.gauges = parse_points(g).map_err(|m| e.err("output.gauges", m))?;
    } else if let Scenario::SimpleWave(p) = &scenario {
        output.gauges = vec![p.gauge];
    }

    Ok(RunConfig { grid, bc, scheme, scenario, raster, output })
}

/// Parses a configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with(text, &[])
}

fn parse_points(s: &str) -> Result<Vec<(f64, f64)>, String> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let v: Vec<f64> = p
                .split([',', ' '])
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| format!("cannot parse `{s}` as a number")))
                .collect::<Result<_, _>>()?;
            match v.as_slice() {
                [x, y] => Ok((*x, *y)),
                _ => Err(format!("expected `x y` pairs separated by `;`, got `{p}`")),
            }
        })
        .collect()
}

fn apply_scenario_keys(e: &Entries, scenario: &mut Scenario) -> Result<(), ConfigError> {
    let allowed: &[&str] = match scenario {
        Scenario::Vortex(_) => &["scenario.h0", "scenario.vbar", "scenario.alpha", "scenario.eps_reg"],
        Scenario::Thacker(_) => &["scenario.h0", "scenario.a", "scenario.sigma", "scenario.printed_variant"],
        Scenario::SphericalRest(_) => &["scenario.seed", "scenario.noise"],
        Scenario::SimpleWave(_) => &["scenario.amplitude", "scenario.width", "scenario.gauge"],
        Scenario::StepLake(_) => &["scenario.eta0", "scenario.deep", "scenario.shallow"],
        Scenario::Bathymetry { .. } => &["scenario.eta0"],
    };
    for key in e.0.keys().filter(|k| k.starts_with("scenario.") && *k != "scenario.name") {
        if !allowed.contains(&key.as_str()) {
            return Err(e.err(key, format!("not a parameter of scenario `{}`", scenario.name())));
        }
    }
    let set = |key: &str, slot: &mut f64| -> Result<(), ConfigError> {
        if let Some(v) = e.f64(key)? {
            *slot = v;
        }
        Ok(())
    };
    match scenario {
        Scenario::Vortex(p) => {
            set("scenario.h0", &mut p.h0)?;
            set("scenario.vbar", &mut p.vbar)?;
            set("scenario.alpha", &mut p.alpha)?;
            set("scenario.eps_reg", &mut p.eps_reg)?;
            if !(p.alpha > 0.0) {
                return Err(e.err("scenario.alpha", "alpha must be positive"));
            }
        }
        Scenario::Thacker(p) => {
            set("scenario.h0", &mut p.h0)?;
            set("scenario.a", &mut p.a)?;
            set("scenario.sigma", &mut p.sigma)?;
            if let Some(b) = e.bool("scenario.printed_variant")? {
                p.printed_variant = b;
            }
            if !(p.h0 > 0.0 && p.a > 0.0) {
                return Err(e.err("scenario.h0", "h0 and a must be positive"));
            }
        }
        Scenario::SphericalRest(p) => {
            if let Some(s) = e.parse::<u64>("scenario.seed")? {
                p.seed = s;
            }
            set("scenario.noise", &mut p.noise)?;
            if p.noise < 0.0 {
                return Err(e.err("scenario.noise", "noise amplitude must be non-negative"));
            }
        }
        Scenario::SimpleWave(p) => {
            set("scenario.amplitude", &mut p.amplitude)?;
            set("scenario.width", &mut p.width)?;
            if let Some(g) = e.raw("scenario.gauge") {
                let pts = parse_points(g).map_err(|m| e.err("scenario.gauge", m))?;
                match pts.as_slice() {
                    [pt] => p.gauge = *pt,
                    _ => return Err(e.err("scenario.gauge", "expected a single `lon lat` pair")),
                }
            }
            if !(p.width > 0.0) {
                return Err(e.err("scenario.width", "width must be positive"));
            }
        }
        Scenario::StepLake(p) => {
            set("scenario.eta0", &mut p.eta0)?;
            set("scenario.deep", &mut p.deep)?;
            set("scenario.shallow", &mut p.shallow)?;
        }
        Scenario::Bathymetry { eta0 } => set("scenario.eta0", eta0)?,
    }
    Ok(())
}

/// Reads and parses a configuration file.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig, IoError> {
    let text = fs::read_to_string(path).map_err(|err| IoError::io(path, err))?;
    Ok(parse_config_with(&text, overrides)?)
}

/// ESRI ASCII grid. Row 0 is the northernmost row.
#[derive(Clone, Debug, PartialEq)]
pub struct RasterGrid {
    pub ncols: usize,
    pub nrows: usize,
    pub xllcorner: f64,
    pub yllcorner: f64,
    pub cellsize: f64,
    pub nodata: f64,
    pub values: Vec<f64>,
}

pub fn parse_raster(text: &str, path: &Path) -> Result<RasterGrid, IoError> {
    let mut tokens = text.split_whitespace().peekable();
    let mut header: BTreeMap<String, f64> = BTreeMap::new();
    while let Some(&tok) = tokens.peek() {
        if tok.parse::<f64>().is_ok() {
            break;
        }
        let name = tok.to_ascii_lowercase();
        tokens.next();
        let value = tokens
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| IoError::format(path, format!("header field {name} has no numeric value")))?;
        header.insert(name, value);
    }
    let get = |names: &[&str]| names.iter().find_map(|n| header.get(*n).copied());
    let ncols = get(&["ncols"]).ok_or_else(|| IoError::format(path, "missing NCOLS"))?;
    let nrows = get(&["nrows"]).ok_or_else(|| IoError::format(path, "missing NROWS"))?;
    if ncols < 1.0 || nrows < 1.0 || ncols.fract() != 0.0 || nrows.fract() != 0.0 {
        return Err(IoError::format(path, "NCOLS and NROWS must be positive integers"));
    }
    let cellsize = get(&["cellsize"]).ok_or_else(|| IoError::format(path, "missing CELLSIZE"))?;
    if !(cellsize > 0.0) {
        return Err(IoError::format(path, "CELLSIZE must be positive"));
    }
    let (ncols, nrows) = (ncols as usize, nrows as usize);
    let xll = match (get(&["xllcorner"]), get(&["xllcenter"])) {
        (Some(c), _) => c,
        (None, Some(c)) => c - 0.5 * cellsize,
        _ => return Err(IoError::format(path, "missing XLLCORNER")),
    };
    let yll = match (get(&["yllcorner"]), get(&["yllcenter"])) {
        (Some(c), _) => c,
        (None, Some(c)) => c - 0.5 * cellsize,
        _ => return Err(IoError::format(path, "missing YLLCORNER")),
    };
    let nodata = get(&["nodata_value"]).unwrap_or(-9999.0);
    let values: Vec<f64> = tokens
        .map(|t| t.parse::<f64>().map_err(|_| IoError::format(path, format!("bad raster value `{t}`"))))
        .collect::<Result<_, _>>()?;
    if values.len() != ncols * nrows {
        return Err(IoError::format(
            path,
            format!("expected {} values for {ncols}x{nrows}, found {}", ncols * nrows, values.len()),
        ));
    }
    if values.iter().all(|&v| v == nodata) {
        return Err(IoError::format(path, "raster contains only nodata values"));
    }
    Ok(RasterGrid { ncols, nrows, xllcorner: xll, yllcorner: yll, cellsize, nodata, values })
}

pub fn read_raster(path: &Path) -> Result<RasterGrid, IoError> {
    let text = fs::read_to_string(path).map_err(|err| IoError::io(path, err))?;
    parse_raster(&text, path)
}

impl RasterGrid {
    fn value(&self, col: usize, row_from_south: usize, policy: NodataPolicy) -> Option<f64> {
        let row = self.nrows - 1 - row_from_south;
        let v = self.values[row * self.ncols + col];
        if v == self.nodata {
            match policy {
                NodataPolicy::Fill(fill) => Some(fill),
                NodataPolicy::Error => None,
            }
        } else {
            Some(v)
        }
    }

    /// Bilinear interpolation between cell-centre values, clamped to the
    /// outermost centres. `None` when a nodata value is hit under
    /// [`NodataPolicy::Error`].
    pub fn sample(&self, x: f64, y: f64, policy: NodataPolicy) -> Option<f64> {
        let fx = ((x - self.xllcorner) / self.cellsize - 0.5).clamp(0.0, (self.ncols - 1) as f64);
        let fy = ((y - self.yllcorner) / self.cellsize - 0.5).clamp(0.0, (self.nrows - 1) as f64);
        let (c0, r0) = (fx.floor() as usize, fy.floor() as usize);
        let (c1, r1) = ((c0 + 1).min(self.ncols - 1), (r0 + 1).min(self.nrows - 1));
        let (tx, ty) = (fx - c0 as f64, fy - r0 as f64);
        let v00 = self.value(c0, r0, policy)?;
        let v10 = self.value(c1, r0, policy)?;
        let v01 = self.value(c0, r1, policy)?;
        let v11 = self.value(c1, r1, policy)?;
        Some((1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11))
    }

    /// Cell-averaged depths (positive down) on the interior of `grid`,
    /// row-major. Spherical grids query the raster in degrees.
    pub fn depths_on(&self, grid: &Grid, settings: &RasterSettings, quad: usize, path: &Path) -> Result<Vec<f64>, IoError> {
        let rule = GaussRule::new(quad);
        let conv = |v: f64| if grid.is_spherical() { v.to_degrees() } else { v };
        let sign = if settings.positive_down { 1.0 } else { -1.0 };
        let mut out = Vec::with_capacity(grid.nx * grid.ny);
        for j in 0..grid.ny as isize {
            for i in 0..grid.nx as isize {
                let missing = std::cell::Cell::new(false);
                let avg = rule.cell_average(grid.center(i, j), grid.dx, grid.dy, |x, y| {
                    self.sample(conv(x), conv(y), settings.nodata_policy).unwrap_or_else(|| {
                        missing.set(true);
                        0.0
                    })
                });
                if missing.get() {
                    return Err(IoError::format(path, format!("nodata value under grid cell ({i}, {j})")));
                }
                out.push(sign * avg);
            }
        }
        Ok(out)
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), IoError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|err| IoError::io(parent, err))?;
        }
    }
    fs::write(path, contents).map_err(|err| IoError::io(path, err))
}

/// CSV `x,y,h,qx,qy,eta,H`, one row per interior cell. Spherical grids are
/// written in degrees with the σ̄ factor removed.
pub fn write_snapshot(field: &StateField, grid: &Grid, time: f64, path: &Path) -> Result<(), IoError> {
    log::debug!("snapshot at t = {time} -> {}", path.display());
    let mut s = String::from("x,y,h,qx,qy,eta,H\n");
    for j in 0..grid.ny as isize {
        for i in 0..grid.nx as isize {
            let k = grid.index(i, j);
            let (mut x, mut y) = grid.center(i, j);
            if grid.is_spherical() {
                x = x.to_degrees();
                y = y.to_degrees();
            }
            let sb = field.sigma_bar[k];
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{}",
                x,
                y,
                field.a[k] / sb,
                field.m1[k] / sb,
                field.m2[k] / sb,
                (field.a[k] - field.bathy[k]) / sb,
                field.bathy[k] / sb
            );
        }
    }
    write_file(path, &s)
}

/// Reads a snapshot written by [`write_snapshot`] back onto `grid`.
pub fn read_snapshot(grid: &Grid, path: &Path) -> Result<StateField, IoError> {
    let text = fs::read_to_string(path).map_err(|err| IoError::io(path, err))?;
    let mut field = StateField::new(grid);
    let mut lines = text.lines();
    if lines.next() != Some("x,y,h,qx,qy,eta,H") {
        return Err(IoError::format(path, "unexpected snapshot header"));
    }
    let mut count = 0;
    for (n, line) in lines.enumerate() {
        let v: Vec<f64> = line
            .split(',')
            .map(|s| s.parse::<f64>().map_err(|_| IoError::format(path, format!("bad number on row {}", n + 2))))
            .collect::<Result<_, _>>()?;
        if v.len() != 7 || n >= grid.nx * grid.ny {
            return Err(IoError::format(path, format!("malformed row {}", n + 2)));
        }
        let (i, j) = ((n % grid.nx) as isize, (n / grid.nx) as isize);
        let k = grid.index(i, j);
        let sb = field.sigma_bar[k];
        field.a[k] = v[2] * sb;
        field.m1[k] = v[3] * sb;
        field.m2[k] = v[4] * sb;
        field.bathy[k] = v[6] * sb;
        count += 1;
    }
    if count != grid.nx * grid.ny {
        return Err(IoError::format(path, format!("expected {} rows, found {count}", grid.nx * grid.ny)));
    }
    Ok(field)
}

/// Free-surface samples at a fixed location.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeSeries {
    pub location: (f64, f64),
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl GaugeSeries {
    pub fn new(location: (f64, f64)) -> Self {
        Self { location, times: Vec::new(), values: Vec::new() }
    }

    /// Appends a sample; times that do not advance are ignored.
    pub fn push(&mut self, t: f64, eta: f64) {
        if self.times.last().is_none_or(|&last| t > last) {
            self.times.push(t);
            self.values.push(eta);
        }
    }

    /// Cell index of the location on `grid`, if inside. Spherical
    /// locations are in degrees.
    pub fn cell(&self, grid: &Grid) -> Option<usize> {
        let (mut x, mut y) = self.location;
        if grid.is_spherical() {
            x = x.to_radians();
            y = y.to_radians();
        }
        let fi = ((x - grid.x0) / grid.dx).floor();
        let fj = ((y - grid.y0) / grid.dy).floor();
        if fi < 0.0 || fj < 0.0 || fi >= grid.nx as f64 || fj >= grid.ny as f64 {
            return None;
        }
        Some(grid.index(fi as isize, fj as isize))
    }
}

pub fn write_gauges(series: &GaugeSeries, path: &Path) -> Result<(), IoError> {
    let mut s = String::from("t,eta\n");
    for (t, v) in series.times.iter().zip(&series.values) {
        let _ = writeln!(s, "{t},{v}");
    }
    write_file(path, &s)
}

/// Writes a snapshot whenever the run reaches one of `times`.
pub struct SnapshotWriter {
    dir: PathBuf,
    prefix: String,
    times: Vec<f64>,
    next: usize,
    pub written: Vec<PathBuf>,
}

impl SnapshotWriter {
    pub fn new(dir: &Path, prefix: &str, mut times: Vec<f64>) -> Self {
        times.sort_by(f64::total_cmp);
        times.dedup();
        Self { dir: dir.to_path_buf(), prefix: prefix.to_string(), times, next: 0, written: Vec::new() }
    }

    pub fn path_for(&self, t: f64) -> PathBuf {
        self.dir.join(format!("{}snapshot_t{}.csv", self.prefix, t))
    }
}

impl Observer for SnapshotWriter {
    fn sample_times(&self) -> Vec<f64> {
        self.times.clone()
    }

    fn observe(&mut self, t: f64, field: &StateField, grid: &Grid) -> Result<(), String> {
        while self.next < self.times.len() && self.times[self.next] < t {
            self.next += 1;
        }
        if self.next < self.times.len() && self.times[self.next] == t {
            let path = self.path_for(t);
            write_snapshot(field, grid, t, &path).map_err(|e| e.to_string())?;
            self.written.push(path);
            self.next += 1;
        }
        Ok(())
    }
}

/// Records the cell-average free surface under each gauge after every step.
pub struct GaugeRecorder {
    pub series: Vec<GaugeSeries>,
    cells: Vec<usize>,
}

impl GaugeRecorder {
    pub fn new(locations: &[(f64, f64)], grid: &Grid) -> Result<Self, String> {
        let series: Vec<GaugeSeries> = locations.iter().map(|&p| GaugeSeries::new(p)).collect();
        let cells = series
            .iter()
            .map(|s| s.cell(grid).ok_or_else(|| format!("gauge at {:?} lies outside the grid", s.location)))
            .collect::<Result<_, _>>()?;
        Ok(Self { series, cells })
    }
}

impl Observer for GaugeRecorder {
    fn observe(&mut self, t: f64, field: &StateField, _grid: &Grid) -> Result<(), String> {
        for (s, &k) in self.series.iter_mut().zip(&self.cells) {
            s.push(t, field.eta(k));
        }
        Ok(())
    }
}

/// L¹ errors of (h, q_x, q_y) on one grid of a refinement study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub err: [f64; 3],
}

/// Observed orders log2(e_{n−1}/e_n) for consecutive rows; `None` on the
/// first row.
pub fn convergence_rates(rows: &[ConvergenceRow]) -> Vec<[Option<f64>; 3]> {
    rows.iter()
        .enumerate()
        .map(|(n, r)| {
            if n == 0 {
                [None; 3]
            } else {
                let prev = rows[n - 1];
                let ratio = r.n as f64 / prev.n as f64;
                [0, 1, 2].map(|c| Some((prev.err[c] / r.err[c]).ln() / ratio.ln()))
            }
        })
        .collect()
}

/// CSV `N,err_h,rate_h,err_qx,rate_qx,err_qy,rate_qy`; first-row rates are empty.
pub fn write_table(rows: &[ConvergenceRow], path: &Path) -> Result<(), IoError> {
    write_file(path, &format_table(rows))
}

pub fn format_table(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("N,err_h,rate_h,err_qx,rate_qx,err_qy,rate_qy\n");
    for (r, rates) in rows.iter().zip(convergence_rates(rows)) {
        let _ = write!(s, "{}", r.n);
        for c in 0..3 {
            let rate = rates[c].map(|x| x.to_string()).unwrap_or_default();
            let _ = write!(s, ",{},{}", r.err[c], rate);
        }
        s.push('\n');
    }
    s
}

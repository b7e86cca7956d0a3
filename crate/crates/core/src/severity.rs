//! Severity table: maps `(kind, level)` to engine parameters by even
//! interpolation between level-1 and level-5 endpoints.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chemical::{BandSpec, BlobSpec, ScaleMode, StainCorruptionParams};
use crate::error::{Error, Result};
use crate::kind::{CorruptionKind, CorruptionSpec, Severity};
use crate::mechanical::{DeformationKind, DeformationParams};
use crate::optical::{CoverageKind, CoverageParams, DefocusParams, OpticalParams};
use crate::rng;

pub const DEFAULT_TABLE_TOML: &str = include_str!("../data/severity_default.toml");

/// Environment variable consulted by the CLI when `--severity-config` is absent.
pub const CONFIG_ENV_VAR: &str = "OMNICE_SEVERITY_CONFIG";

/// Feather width of residue blob edges, pixels.
const BLOB_FEATHER_PX: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Endpoints {
    pub level1: f64,
    pub level5: f64,
}

impl Endpoints {
    pub fn new(level1: f64, level5: f64) -> Self {
        Endpoints { level1, level5 }
    }

    pub fn at(&self, severity: Severity) -> f64 {
        match severity.level() {
            1 => self.level1,
            5 => self.level5,
            _ => self.level1 + severity.fraction() * (self.level5 - self.level1),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticsConfig {
    pub wavelengths_nm: [f64; 3],
    pub numerical_aperture: f64,
    pub refractive_index: f64,
    pub pixel_pitch_um: f64,
}

impl Default for OpticsConfig {
    fn default() -> Self {
        OpticsConfig {
            wavelengths_nm: [640.0, 540.0, 460.0],
            numerical_aperture: 0.75,
            refractive_index: 1.0,
            pixel_pitch_um: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
    Fixed,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Increasing => "increases with severity",
            Direction::Decreasing => "decreases with severity",
            Direction::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSchema {
    pub name: &'static str,
    pub direction: Direction,
    pub min: f64,
    pub max: f64,
    pub doc: &'static str,
}

const fn p(name: &'static str, direction: Direction, min: f64, max: f64, doc: &'static str) -> ParamSchema {
    ParamSchema {
        name,
        direction,
        min,
        max,
        doc,
    }
}

use Direction::{Decreasing, Fixed, Increasing};

const UNDER_STAIN: &[ParamSchema] = &[p("alpha", Decreasing, 0.0, 1.0, "stain concentration multiplier")];
const OVER_STAIN: &[ParamSchema] = &[p("alpha", Increasing, 1.0, 10.0, "stain concentration multiplier")];
const RESIDUE: &[ParamSchema] = &[
    p("coverage", Increasing, 0.0, 1.0, "fraction of the frame under residue blobs"),
    p("alpha", Fixed, 0.0, 10.0, "stain multiplier inside blobs"),
];
const THICK_THIN: &[ParamSchema] = &[
    p("band_width_px", Increasing, 1.0, 1.0e5, "band width in pixels"),
    p("alpha_low", Decreasing, 0.0, 1.0, "multiplier in thin bands"),
    p("alpha_high", Increasing, 1.0, 10.0, "multiplier in thick bands"),
];
const COUNT: &[ParamSchema] = &[p("count", Increasing, 0.0, 1000.0, "number of overlay stamps")];
const CRACK: &[ParamSchema] = &[p("gap_width", Increasing, 0.0, 0.5, "maximum crack opening, frame units")];
const VENETIAN: &[ParamSchema] = &[p("coverage", Increasing, 0.0, 1.0, "area fraction covered by strips (beta)")];
const FOLD: &[ParamSchema] = &[p("band_width", Increasing, 0.0, 0.45, "folded band width, frame units")];
const CAST: &[ParamSchema] = &[p("shift", Increasing, 0.0, 1.0, "relative red/blue gain shift")];
const OVER_EXP: &[ParamSchema] = &[p("gain", Increasing, 1.0, 20.0, "intensity gain")];
const UNDER_EXP: &[ParamSchema] = &[p("gain", Decreasing, 0.0, 1.0, "intensity gain")];
const DEFOCUS: &[ParamSchema] = &[p("defocus_um", Increasing, 0.0, 200.0, "axial defocus distance, micrometres")];

pub fn schema(kind: CorruptionKind) -> &'static [ParamSchema] {
    use CorruptionKind::*;
    match kind {
        UnderStainedHe | UnderStainedH | UnderStainedE => UNDER_STAIN,
        OverStainedHe | OverStainedH | OverStainedE => OVER_STAIN,
        ResidualWax | ResidualXylene | ResidualAlkali => RESIDUE,
        ThickAndThin => THICK_THIN,
        StainDeposit | Bubble | KnifeLine => COUNT,
        Crack => CRACK,
        Venetian => VENETIAN,
        Fold => FOLD,
        ColdColor | WarmColor => CAST,
        Overexposure => OVER_EXP,
        Underexposure => UNDER_EXP,
        Defocus => DEFOCUS,
    }
}

/// Fully resolved engine parameters for one corruption application.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "kebab-case")]
pub enum CorruptionParams {
    Stain(StainCorruptionParams),
    Deformation(DeformationParams),
    ColorGains { red: f64, green: f64, blue: f64 },
    Exposure { gain: f64 },
    Defocus(DefocusParams),
    Coverage(CoverageParams),
}

impl CorruptionParams {
    /// Stable hex digest of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("params serialize");
        format!("{:016x}", rng::StableHasher::new().str(&json).finish())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    MissingKind(CorruptionKind),
    MissingParam { kind: CorruptionKind, param: String },
    UnknownParam { kind: CorruptionKind, param: String },
    NonFinite { kind: CorruptionKind, param: String },
    OutOfRange { kind: CorruptionKind, param: String, value: f64, min: f64, max: f64 },
    WrongDirection { kind: CorruptionKind, param: String, expected: Direction, endpoints: Endpoints },
    Optics(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingKind(k) => write!(f, "missing kind `{k}`"),
            Violation::MissingParam { kind, param } => write!(f, "{kind}: missing parameter `{param}`"),
            Violation::UnknownParam { kind, param } => write!(f, "{kind}: unknown parameter `{param}`"),
            Violation::NonFinite { kind, param } => write!(f, "{kind}.{param}: endpoints must be finite"),
            Violation::OutOfRange { kind, param, value, min, max } => {
                write!(f, "{kind}.{param}: {value} outside [{min}, {max}]")
            }
            Violation::WrongDirection { kind, param, expected, endpoints } => write!(
                f,
                "{kind}.{param}: expected parameter that {expected}, got level1={} level5={}",
                endpoints.level1, endpoints.level5
            ),
            Violation::Optics(msg) => write!(f, "optics: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeverityTable {
    pub optics: OpticsConfig,
    pub kinds: BTreeMap<CorruptionKind, BTreeMap<String, Endpoints>>,
}

impl Default for SeverityTable {
    fn default() -> Self {
        Self::builtin()
    }
}

impl SeverityTable {
    /// The compiled-in defaults.
    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_TABLE_TOML).expect("shipped severity table parses")
    }

    /// Parses a complete table; no defaults are filled in.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut table = SeverityTable {
            optics: OpticsConfig::default(),
            kinds: BTreeMap::new(),
        };
        table.merge_toml(text)?;
        Ok(table)
    }

    /// Applies per-key overrides from `text` on top of this table.
    pub fn with_overrides(&self, text: &str) -> Result<Self> {
        let mut table = self.clone();
        table.merge_toml(text)?;
        Ok(table)
    }

    /// Built-in defaults overridden by the file at `path`.
    pub fn load_with_defaults(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::builtin().with_overrides(&text)
    }

    fn merge_toml(&mut self, text: &str) -> Result<()> {
        let doc: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for (section, value) in doc {
            let body = value
                .as_table()
                .ok_or_else(|| Error::Config(format!("`{section}` must be a table")))?;
            if section == "optics" {
                self.merge_optics(body)?;
                continue;
            }
            let kind: CorruptionKind = section
                .parse()
                .map_err(|e: Error| Error::Config(format!("unknown section `{section}`: {e}")))?;
            let params = self.kinds.entry(kind).or_default();
            for (name, v) in body {
                let entry = params.entry(name.clone()).or_insert(Endpoints::new(f64::NAN, f64::NAN));
                let t = v.as_table().ok_or_else(|| {
                    Error::Config(format!("{section}.{name} must be {{ level1 = .., level5 = .. }}"))
                })?;
                for (key, slot) in [("level1", &mut entry.level1), ("level5", &mut entry.level5)] {
                    if let Some(x) = t.get(key) {
                        *slot = number(x).ok_or_else(|| {
                            Error::Config(format!("{section}.{name}.{key} must be a number"))
                        })?;
                    }
                }
                if let Some(extra) = t.keys().find(|k| *k != "level1" && *k != "level5") {
                    return Err(Error::Config(format!("{section}.{name}: unexpected key `{extra}`")));
                }
            }
        }
        Ok(())
    }

    fn merge_optics(&mut self, body: &toml::Table) -> Result<()> {
        for (key, v) in body {
            let bad = || Error::Config(format!("optics.{key} has the wrong type"));
            match key.as_str() {
                "wavelengths_nm" => {
                    let arr = v.as_array().ok_or_else(bad)?;
                    if arr.len() != 3 {
                        return Err(Error::Config("optics.wavelengths_nm needs 3 values".into()));
                    }
                    for (slot, x) in self.optics.wavelengths_nm.iter_mut().zip(arr) {
                        *slot = number(x).ok_or_else(bad)?;
                    }
                }
                "numerical_aperture" => self.optics.numerical_aperture = number(v).ok_or_else(bad)?,
                "refractive_index" => self.optics.refractive_index = number(v).ok_or_else(bad)?,
                "pixel_pitch_um" => self.optics.pixel_pitch_um = number(v).ok_or_else(bad)?,
                other => return Err(Error::Config(format!("unknown optics key `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn to_toml_string(&self) -> String {
        let mut out = String::new();
        let o = &self.optics;
        out.push_str("[optics]\n");
        out.push_str(&format!(
            "wavelengths_nm = [{:?}, {:?}, {:?}]\nnumerical_aperture = {:?}\nrefractive_index = {:?}\npixel_pitch_um = {:?}\n",
            o.wavelengths_nm[0], o.wavelengths_nm[1], o.wavelengths_nm[2],
            o.numerical_aperture, o.refractive_index, o.pixel_pitch_um
        ));
        for (kind, params) in &self.kinds {
            out.push_str(&format!("\n[{kind}]\n"));
            for (name, e) in params {
                out.push_str(&format!("{name} = {{ level1 = {:?}, level5 = {:?} }}\n", e.level1, e.level5));
            }
        }
        out
    }

    pub fn endpoints(&self, kind: CorruptionKind, param: &str) -> Result<Endpoints> {
        self.kinds
            .get(&kind)
            .and_then(|m| m.get(param))
            .copied()
            .ok_or_else(|| Error::Config(format!("no `{param}` configured for `{kind}`")))
    }

    pub fn value(&self, kind: CorruptionKind, param: &str, severity: Severity) -> Result<f64> {
        Ok(self.endpoints(kind, param)?.at(severity))
    }

    /// Resolves by kind identifier; unknown identifiers list the valid ones.
    pub fn params_for_id(&self, kind: &str, severity: u8, seed: u64) -> Result<CorruptionParams> {
        self.params_for(&CorruptionSpec::parse(kind, severity, seed)?)
    }

    pub fn params_for(&self, spec: &CorruptionSpec) -> Result<CorruptionParams> {
        use CorruptionKind::*;
        let kind = spec.kind;
        let s = spec.severity;
        let v = |name: &str| self.value(kind, name, s);
        let params = match kind {
            UnderStainedHe | OverStainedHe => stain_global(v("alpha")?, v("alpha")?),
            UnderStainedH | OverStainedH => stain_global(v("alpha")?, 1.0),
            UnderStainedE | OverStainedE => stain_global(1.0, v("alpha")?),
            ResidualWax | ResidualXylene | ResidualAlkali => {
                let alpha = v("alpha")?;
                let (alpha_h, alpha_e) = match kind {
                    ResidualWax => (alpha, alpha),
                    ResidualXylene => (alpha, 1.0),
                    _ => (1.0, alpha),
                };
                CorruptionParams::Stain(StainCorruptionParams {
                    alpha_h,
                    alpha_e,
                    mode: ScaleMode::Region(BlobSpec {
                        coverage: v("coverage")?,
                        feather_px: BLOB_FEATHER_PX,
                        seed: rng::sub_seed(spec.seed, "residue-blobs"),
                    }),
                })
            }
            ThickAndThin => {
                let angle = rng::stream(spec.seed, "band-orientation").random_range(0.0..std::f64::consts::PI);
                CorruptionParams::Stain(StainCorruptionParams {
                    alpha_h: 1.0,
                    alpha_e: 1.0,
                    mode: ScaleMode::Band(BandSpec {
                        angle_rad: angle,
                        width_px: v("band_width_px")?,
                        alpha_low: v("alpha_low")?,
                        alpha_high: v("alpha_high")?,
                    }),
                })
            }
            StainDeposit | Bubble | KnifeLine => CorruptionParams::Coverage(CoverageParams {
                kind: match kind {
                    StainDeposit => CoverageKind::StainDeposit,
                    Bubble => CoverageKind::Bubble,
                    _ => CoverageKind::KnifeLine,
                },
                count: v("count")?.round().max(0.0) as usize,
                max_count: self.endpoints(kind, "count")?.level1.max(self.endpoints(kind, "count")?.level5).round().max(0.0) as usize,
                seed: spec.seed,
            }),
            Crack | Venetian | Fold => {
                let (dk, name) = match kind {
                    Crack => (DeformationKind::Crack, "gap_width"),
                    Venetian => (DeformationKind::Venetian, "coverage"),
                    _ => (DeformationKind::Fold, "band_width"),
                };
                CorruptionParams::Deformation(DeformationParams {
                    kind: dk,
                    magnitude: v(name)?,
                    seed: spec.seed,
                })
            }
            ColdColor => {
                let d = v("shift")?;
                CorruptionParams::ColorGains { red: 1.0 - d, green: 1.0, blue: 1.0 + d }
            }
            WarmColor => {
                let d = v("shift")?;
                CorruptionParams::ColorGains { red: 1.0 + d, green: 1.0, blue: 1.0 - d }
            }
            Overexposure | Underexposure => CorruptionParams::Exposure { gain: v("gain")? },
            Defocus => CorruptionParams::Defocus(DefocusParams {
                optics: OpticalParams {
                    wavelengths_nm: self.optics.wavelengths_nm,
                    numerical_aperture: self.optics.numerical_aperture,
                    refractive_index: self.optics.refractive_index,
                    defocus_um: v("defocus_um")?,
                },
                pixel_pitch_um: self.optics.pixel_pitch_um,
            }),
        };
        Ok(params)
    }
}

fn stain_global(alpha_h: f64, alpha_e: f64) -> CorruptionParams {
    CorruptionParams::Stain(StainCorruptionParams {
        alpha_h,
        alpha_e,
        mode: ScaleMode::Global,
    })
}

fn number(v: &toml::Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|i| i as f64))
}

/// Completeness, sanity-range and direction checks. Empty means valid.
pub fn validate_table(table: &SeverityTable) -> Vec<Violation> {
    let mut out = Vec::new();
    let o = &table.optics;
    if let Err(e) = (OpticalParams {
        wavelengths_nm: o.wavelengths_nm,
        numerical_aperture: o.numerical_aperture,
        refractive_index: o.refractive_index,
        defocus_um: 0.0,
    })
    .validate()
    {
        out.push(Violation::Optics(e.to_string()));
    }
    if !(o.pixel_pitch_um > 0.0 && o.pixel_pitch_um.is_finite()) {
        out.push(Violation::Optics("pixel_pitch_um must be positive".into()));
    }
    for kind in CorruptionKind::ALL {
        let Some(params) = table.kinds.get(&kind) else {
            out.push(Violation::MissingKind(kind));
            continue;
        };
        let schema = schema(kind);
        for name in params.keys() {
            if !schema.iter().any(|s| s.name == name) {
                out.push(Violation::UnknownParam { kind, param: name.clone() });
            }
        }
        for s in schema {
            let param = s.name.to_string();
            let Some(e) = params.get(s.name) else {
                out.push(Violation::MissingParam { kind, param });
                continue;
            };
            if !e.level1.is_finite() || !e.level5.is_finite() {
                out.push(Violation::NonFinite { kind, param });
                continue;
            }
            for value in [e.level1, e.level5] {
                if value < s.min || value > s.max {
                    out.push(Violation::OutOfRange { kind, param: param.clone(), value, min: s.min, max: s.max });
                }
            }
            let ok = match s.direction {
                Direction::Increasing => e.level5 > e.level1,
                Direction::Decreasing => e.level5 < e.level1,
                Direction::Fixed => e.level5 == e.level1,
            };
            if !ok {
                out.push(Violation::WrongDirection { kind, param, expected: s.direction, endpoints: *e });
            }
        }
    }
    out
}

/// Human-readable catalog: one line per kind with its parameter schema.
pub fn kind_listing(table: &SeverityTable) -> String {
    let mut out = String::new();
    for kind in CorruptionKind::ALL {
        out.push_str(kind.id());
        out.push('\n');
        for s in schema(kind) {
            let e = table.endpoints(kind, s.name).ok();
            let range = e
                .map(|e| format!("level1={} level5={}", e.level1, e.level5))
                .unwrap_or_else(|| "unset".into());
            out.push_str(&format!("    {} ({}; {}): {}\n", s.name, s.direction, range, s.doc));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_examples() {
        let e = Endpoints::new(1.2, 2.2);
        let at = |l| e.at(Severity::new(l).unwrap());
        assert!((at(3) - 1.7).abs() < 1e-12);
        assert_eq!(at(1), 1.2);
        assert_eq!(at(5), 2.2);
    }

    #[test]
    fn builtin_table_is_valid() {
        let table = SeverityTable::builtin();
        let v = validate_table(&table);
        assert!(v.is_empty(), "{v:?}");
        assert_eq!(table.kinds.len(), 21);
    }

    #[test]
    fn missing_defocus_is_reported() {
        let mut table = SeverityTable::builtin();
        table.kinds.remove(&CorruptionKind::Defocus);
        let v = validate_table(&table);
        assert_eq!(v, vec![Violation::MissingKind(CorruptionKind::Defocus)]);
        assert!(v[0].to_string().contains("defocus"));
    }

    #[test]
    fn underexposure_direction_violation() {
        let table = SeverityTable::builtin()
            .with_overrides("[underexposure]\ngain = { level1 = 0.8, level5 = 1.2 }\n")
            .unwrap();
        let v = validate_table(&table);
        assert!(v.iter().any(|x| matches!(x,
            Violation::WrongDirection { kind: CorruptionKind::Underexposure, expected: Direction::Decreasing, .. })));
    }

    #[test]
    fn overrides_are_per_key() {
        let table = SeverityTable::builtin()
            .with_overrides("[optics]\nnumerical_aperture = 0.5\n[crack]\ngap_width = { level5 = 0.1 }\n")
            .unwrap();
        assert_eq!(table.optics.numerical_aperture, 0.5);
        assert_eq!(table.optics.refractive_index, 1.0);
        let e = table.endpoints(CorruptionKind::Crack, "gap_width").unwrap();
        assert_eq!((e.level1, e.level5), (0.01, 0.1));
    }

    #[test]
    fn bad_config_errors() {
        let base = SeverityTable::builtin();
        assert!(base.with_overrides("[not-a-kind]\nx = { level1 = 1, level5 = 2 }").is_err());
        assert!(base.with_overrides("[crack]\ngap_width = 3").is_err());
        assert!(base.with_overrides("[optics]\nfocal = 3").is_err());
        assert!(base.with_overrides("[crack\n").is_err());
    }

    #[test]
    fn toml_roundtrip() {
        let table = SeverityTable::builtin();
        let again = SeverityTable::from_toml_str(&table.to_toml_string()).unwrap();
        assert_eq!(again, table);
    }

    #[test]
    fn params_for_is_pure_and_checks_kind() {
        let table = SeverityTable::builtin();
        for kind in CorruptionKind::ALL {
            for s in 1..=5 {
                let spec = CorruptionSpec::new(kind, s, 99).unwrap();
                let a = table.params_for(&spec).unwrap();
                assert_eq!(a, table.params_for(&spec).unwrap());
                assert_eq!(a.digest(), table.params_for(&spec).unwrap().digest());
            }
        }
        let err = table.params_for_id("motion-blur", 1, 0).unwrap_err().to_string();
        assert!(err.contains("defocus") && err.contains("under-stained-he"));
        assert!(table.params_for_id("crack", 0, 0).is_err());
    }

    #[test]
    fn stain_kinds_touch_the_right_channels() {
        let table = SeverityTable::builtin();
        let get = |id: &str| match table.params_for_id(id, 5, 1).unwrap() {
            CorruptionParams::Stain(p) => (p.alpha_h, p.alpha_e),
            other => panic!("{other:?}"),
        };
        assert_eq!(get("under-stained-h"), (0.30, 1.0));
        assert_eq!(get("over-stained-e"), (1.0, 2.2));
        assert_eq!(get("over-stained-he"), (2.2, 2.2));
        assert_eq!(get("residual-alkali"), (1.0, 0.575));
        assert_eq!(get("residual-xylene"), (0.575, 1.0));
    }
}

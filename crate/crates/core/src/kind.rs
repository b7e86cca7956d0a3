//! The corruption catalog: the 21 kinds, their engine family, and the
//! `(kind, severity, seed)` triple that fully determines one application.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! kinds {
    ($($variant:ident => $id:literal, $group:ident;)*) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(into = "String", try_from = "String")]
        pub enum CorruptionKind {
            $($variant,)*
        }

        impl CorruptionKind {
            /// Every kind in catalog order.
            pub const ALL: [CorruptionKind; 21] = [$(CorruptionKind::$variant,)*];

            pub fn id(self) -> &'static str {
                match self {
                    $(CorruptionKind::$variant => $id,)*
                }
            }

            pub fn group(self) -> KindGroup {
                match self {
                    $(CorruptionKind::$variant => KindGroup::$group,)*
                }
            }
        }
    };
}

kinds! {
    UnderStainedHe => "under-stained-he", Stain;
    OverStainedHe => "over-stained-he", Stain;
    UnderStainedH => "under-stained-h", Stain;
    OverStainedH => "over-stained-h", Stain;
    UnderStainedE => "under-stained-e", Stain;
    OverStainedE => "over-stained-e", Stain;
    ResidualWax => "residual-wax", Stain;
    ResidualXylene => "residual-xylene", Stain;
    ResidualAlkali => "residual-alkali", Stain;
    ThickAndThin => "thick-and-thin", Stain;
    StainDeposit => "stain-deposit", DeformationCoverage;
    Bubble => "bubble", DeformationCoverage;
    KnifeLine => "knife-line", DeformationCoverage;
    Crack => "crack", DeformationCoverage;
    Venetian => "venetian", DeformationCoverage;
    Fold => "fold", DeformationCoverage;
    ColdColor => "cold-color", Optical;
    WarmColor => "warm-color", Optical;
    Overexposure => "overexposure", Optical;
    Underexposure => "underexposure", Optical;
    Defocus => "defocus", Optical;
}

/// Row grouping used when rendering metric tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum KindGroup {
    Stain,
    DeformationCoverage,
    Optical,
}

impl KindGroup {
    pub fn label(self) -> &'static str {
        match self {
            KindGroup::Stain => "stain",
            KindGroup::DeformationCoverage => "deformation+coverage",
            KindGroup::Optical => "optical",
        }
    }
}

/// Engine that owns a kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Engine {
    Chemical,
    Mechanical,
    Optical,
}

impl CorruptionKind {
    pub fn engine(self) -> Engine {
        use CorruptionKind::*;
        match self {
            Crack | Venetian | Fold => Engine::Mechanical,
            StainDeposit | Bubble | KnifeLine | ColdColor | WarmColor | Overexposure
            | Underexposure | Defocus => Engine::Optical,
            _ => Engine::Chemical,
        }
    }

    /// Kinds whose output pixel depends only on the same input pixel and
    /// frame-global parameters.
    pub fn is_pixelwise(self) -> bool {
        !matches!(
            self,
            CorruptionKind::Crack
                | CorruptionKind::Venetian
                | CorruptionKind::Fold
                | CorruptionKind::Defocus
        )
    }

    pub fn is_deformation(self) -> bool {
        self.engine() == Engine::Mechanical
    }

    /// Kinds the default benchmark profile reserves for slide-level data.
    pub fn slide_level_only(self) -> bool {
        matches!(self, CorruptionKind::Venetian | CorruptionKind::Fold)
    }

    pub fn valid_ids() -> String {
        Self::ALL.iter().map(|k| k.id()).collect::<Vec<_>>().join(", ")
    }

    /// Position in [`CorruptionKind::ALL`].
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&k| k == self).unwrap_or(0)
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let needle = s.trim();
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.id() == needle)
            .ok_or_else(|| Error::UnknownKind {
                given: s.to_string(),
                valid: Self::valid_ids(),
            })
    }
}

impl From<CorruptionKind> for String {
    fn from(k: CorruptionKind) -> String {
        k.id().to_string()
    }
}

impl TryFrom<String> for CorruptionKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Severity level, always in `1..=5`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct Severity(u8);

impl Severity {
    pub const MIN: u8 = 1;
    pub const MAX: u8 = 5;

    pub fn new(level: u8) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&level) {
            Ok(Severity(level))
        } else {
            Err(Error::SeverityOutOfRange(level))
        }
    }

    pub fn all() -> impl Iterator<Item = Severity> {
        (Self::MIN..=Self::MAX).map(Severity)
    }

    pub fn level(self) -> u8 {
        self.0
    }

    /// Position between level 1 (0.0) and level 5 (1.0).
    pub fn fraction(self) -> f64 {
        f64::from(self.0 - 1) / 4.0
    }
}

impl TryFrom<u8> for Severity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Severity::new(v)
    }
}

impl From<Severity> for u8 {
    fn from(s: Severity) -> u8 {
        s.0
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: Severity,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8, seed: u64) -> Result<Self> {
        Ok(CorruptionSpec {
            kind,
            severity: Severity::new(severity)?,
            seed,
        })
    }

    /// Parses the kind from its identifier as well.
    pub fn parse(kind: &str, severity: u8, seed: u64) -> Result<Self> {
        Self::new(kind.parse()?, severity, seed)
    }
}

impl fmt::Display for CorruptionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} severity {} seed {}",
            self.kind, self.severity, self.seed
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_has_21_unique_ids() {
        let mut ids: Vec<_> = CorruptionKind::ALL.iter().map(|k| k.id()).collect();
        assert_eq!(ids.len(), 21);
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 21);
        assert!(ids.contains(&"defocus"));
    }

    #[test]
    fn parse_roundtrip_and_unknown() {
        for k in CorruptionKind::ALL {
            assert_eq!(k.id().parse::<CorruptionKind>().unwrap(), k);
        }
        let err = "gaussian-noise".parse::<CorruptionKind>().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("gaussian-noise"));
        for k in CorruptionKind::ALL {
            assert!(msg.contains(k.id()));
        }
    }

    #[test]
    fn severity_range() {
        assert!(Severity::new(0).is_err());
        assert!(Severity::new(6).is_err());
        assert_eq!(Severity::new(3).unwrap().fraction(), 0.5);
        assert_eq!(Severity::all().count(), 5);
    }

    #[test]
    fn engine_split() {
        let count = |e| CorruptionKind::ALL.iter().filter(|k| k.engine() == e).count();
        assert_eq!(count(Engine::Chemical), 10);
        assert_eq!(count(Engine::Mechanical), 3);
        assert_eq!(count(Engine::Optical), 8);
    }
}

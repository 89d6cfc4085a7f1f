use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Harm severity codes, least to most severe. E–I are harm events.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Severity {
    A,
    B1,
    B2,
    C,
    D,
    E,
    F,
    G,
    H,
    I,
}

impl Severity {
    pub const ALL: [Severity; 10] = [
        Severity::A,
        Severity::B1,
        Severity::B2,
        Severity::C,
        Severity::D,
        Severity::E,
        Severity::F,
        Severity::G,
        Severity::H,
        Severity::I,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn code(self) -> &'static str {
        ["A", "B1", "B2", "C", "D", "E", "F", "G", "H", "I"][self.index()]
    }

    pub fn is_harm(self) -> bool {
        self >= Severity::E
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Severity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Severity::ALL
            .iter()
            .copied()
            .find(|sev| sev.code().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Data(format!("unknown severity code {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemaName {
    Binary,
    FourLevel,
    Full,
}

impl FromStr for SchemaName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "binary" => Ok(SchemaName::Binary),
            "four_level" => Ok(SchemaName::FourLevel),
            "full" => Ok(SchemaName::Full),
            other => Err(Error::Config(format!(
                "unknown schema {other:?}; expected binary, four_level or full"
            ))),
        }
    }
}

impl fmt::Display for SchemaName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemaName::Binary => "binary",
            SchemaName::FourLevel => "four_level",
            SchemaName::Full => "full",
        })
    }
}

/// Default four-way grouping, indexed by [`Severity::index`]:
/// A → unsafe, B1/B2 → near miss, C/D → reached without harm, E–I → harm.
pub const FOUR_LEVEL_DEFAULT: [usize; 10] = [0, 1, 1, 2, 2, 3, 3, 3, 3, 3];

/// Maps the ten severity codes onto task classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub name: SchemaName,
    mapping: [usize; 10],
    class_names: Vec<String>,
}

impl LabelSchema {
    pub fn binary() -> Self {
        LabelSchema {
            name: SchemaName::Binary,
            mapping: [0, 0, 0, 0, 0, 1, 1, 1, 1, 1],
            class_names: ["no-harm", "harm"].map(ToOwned::to_owned).to_vec(),
        }
    }

    pub fn four_level() -> Self {
        Self::four_level_with(FOUR_LEVEL_DEFAULT).expect("default mapping is valid")
    }

    /// Four-level schema with a custom code → group assignment. Every group
    /// 0..4 must receive at least one code. Group names follow the default
    /// ordering (unsafe, near-miss, reached-no-harm, temp/perm-harm).
    pub fn four_level_with(mapping: [usize; 10]) -> Result<Self> {
        for class in 0..4 {
            if !mapping.contains(&class) {
                return Err(Error::Config(format!(
                    "four-level mapping leaves class {class} empty"
                )));
            }
        }
        if let Some(bad) = mapping.iter().find(|&&c| c >= 4) {
            return Err(Error::Config(format!(
                "four-level mapping uses class {bad}"
            )));
        }
        Ok(LabelSchema {
            name: SchemaName::FourLevel,
            mapping,
            class_names: ["unsafe", "near-miss", "reached-no-harm", "temp/perm-harm"]
                .map(ToOwned::to_owned)
                .to_vec(),
        })
    }

    pub fn full() -> Self {
        LabelSchema {
            name: SchemaName::Full,
            mapping: [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
            class_names: Severity::ALL.iter().map(|s| s.code().to_owned()).collect(),
        }
    }

    pub fn from_name(name: SchemaName) -> Self {
        match name {
            SchemaName::Binary => Self::binary(),
            SchemaName::FourLevel => Self::four_level(),
            SchemaName::Full => Self::full(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn mapping(&self) -> [usize; 10] {
        self.mapping
    }

    pub fn map(&self, severity: Severity) -> usize {
        self.mapping[severity.index()]
    }

    /// The class collecting exactly the harm codes E–I, if there is one.
    pub fn harm_class(&self) -> Option<usize> {
        let class = self.map(Severity::E);
        let exact = Severity::ALL
            .iter()
            .all(|&s| (self.map(s) == class) == s.is_harm());
        exact.then_some(class)
    }
}

/// Class index of `severity` under `schema`.
pub fn map_label(severity: Severity, schema: &LabelSchema) -> usize {
    schema.map(severity)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_follows_harm_codes() {
        let s = LabelSchema::binary();
        assert_eq!(map_label(Severity::A, &s), 0);
        assert_eq!(map_label(Severity::I, &s), 1);
        assert_eq!(map_label(Severity::E, &s), 1);
        assert_eq!(map_label(Severity::D, &s), 0);
        assert_eq!(s.harm_class(), Some(1));
    }

    #[test]
    fn four_level_default_groups() {
        let s = LabelSchema::four_level();
        assert_eq!(s.class_names()[map_label(Severity::B2, &s)], "near-miss");
        assert_eq!(s.class_names()[map_label(Severity::A, &s)], "unsafe");
        assert_eq!(
            s.class_names()[map_label(Severity::C, &s)],
            "reached-no-harm"
        );
        assert_eq!(s.harm_class(), Some(3));
        assert!(LabelSchema::four_level_with([0; 10]).is_err());
    }

    #[test]
    fn full_keeps_b1_b2_distinct() {
        let s = LabelSchema::full();
        assert_eq!(s.num_classes(), 10);
        assert_ne!(s.map(Severity::B1), s.map(Severity::B2));
        assert_eq!(s.harm_class(), None);
    }

    #[test]
    fn every_schema_is_total_and_in_range() {
        for schema in [
            LabelSchema::binary(),
            LabelSchema::four_level(),
            LabelSchema::full(),
        ] {
            for sev in Severity::ALL {
                assert!(schema.map(sev) < schema.num_classes());
            }
        }
    }

    #[test]
    fn parse_codes() {
        assert_eq!("b2".parse::<Severity>().unwrap(), Severity::B2);
        assert!(matches!("Z".parse::<Severity>(), Err(Error::Data(_))));
        assert!(matches!("B".parse::<Severity>(), Err(Error::Data(_))));
        assert_eq!(
            "four-level".parse::<SchemaName>().unwrap(),
            SchemaName::FourLevel
        );
    }
}

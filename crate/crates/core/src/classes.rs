//! The six structural classes and subsets of them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Morphology label of an ion image.
///
/// The discriminant is the index into [`crate::scoring::ClassProbabilities`]
/// and the position on the annotation keyboard (`1` = `Structured`, ...,
/// `6` = `Negative`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralClass {
    Structured = 0,
    WeaklyStructured = 1,
    Localized = 2,
    Fragmented = 3,
    Unstructured = 4,
    Negative = 5,
}

impl StructuralClass {
    pub const COUNT: usize = 6;

    pub const ALL: [StructuralClass; 6] = [
        StructuralClass::Structured,
        StructuralClass::WeaklyStructured,
        StructuralClass::Localized,
        StructuralClass::Fragmented,
        StructuralClass::Unstructured,
        StructuralClass::Negative,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            StructuralClass::Structured => "structured",
            StructuralClass::WeaklyStructured => "weakly_structured",
            StructuralClass::Localized => "localized",
            StructuralClass::Fragmented => "fragmented",
            StructuralClass::Unstructured => "unstructured",
            StructuralClass::Negative => "negative",
        }
    }
}

impl fmt::Display for StructuralClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown structural class {0:?}")]
pub struct UnknownClass(pub String);

impl FromStr for StructuralClass {
    type Err = UnknownClass;

    /// Accepts snake_case, CamelCase and hyphenated spellings.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_lowercase())
            .collect();
        match norm.as_str() {
            "structured" => Ok(StructuralClass::Structured),
            "weaklystructured" => Ok(StructuralClass::WeaklyStructured),
            "localized" => Ok(StructuralClass::Localized),
            "fragmented" => Ok(StructuralClass::Fragmented),
            "unstructured" => Ok(StructuralClass::Unstructured),
            "negative" => Ok(StructuralClass::Negative),
            _ => Err(UnknownClass(s.to_string())),
        }
    }
}

/// A subset of the six classes, stored as a bit mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TargetSet(u8);

impl TargetSet {
    pub const EMPTY: TargetSet = TargetSet(0);
    pub const ALL: TargetSet = TargetSet(0b11_1111);

    /// Structured, Negative and Localized: the subset that ranks spatially
    /// informative ion images best.
    pub fn default_informative() -> Self {
        [
            StructuralClass::Structured,
            StructuralClass::Negative,
            StructuralClass::Localized,
        ]
        .into_iter()
        .collect()
    }

    /// Builds a set from the low six bits of `bits`.
    pub fn from_bits(bits: u8) -> Self {
        TargetSet(bits & Self::ALL.0)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, class: StructuralClass) -> bool {
        self.0 & (1 << class.index()) != 0
    }

    pub fn insert(&mut self, class: StructuralClass) {
        self.0 |= 1 << class.index();
    }

    pub fn is_subset(self, other: TargetSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = StructuralClass> {
        StructuralClass::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    /// Parses a comma-separated class list such as `structured,negative,localized`.
    pub fn parse_list(s: &str) -> Result<Self, UnknownClass> {
        s.split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(StructuralClass::from_str)
            .collect()
    }
}

impl FromIterator<StructuralClass> for TargetSet {
    fn from_iter<I: IntoIterator<Item = StructuralClass>>(iter: I) -> Self {
        let mut set = TargetSet::EMPTY;
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl FromStr for TargetSet {
    type Err = UnknownClass;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TargetSet::parse_list(s)
    }
}

impl fmt::Display for TargetSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(StructuralClass::name).collect();
        f.write_str(&names.join(","))
    }
}

impl Serialize for TargetSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for TargetSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let classes = Vec::<StructuralClass>::deserialize(d)?;
        Ok(classes.into_iter().collect())
    }
}

use std::fmt;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

/// Attribute weight in thousandths. Fixed-point keeps score sums exact and
/// independent of summation order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Weight(u32);

pub const MAX_WEIGHT: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("weight {0} outside [0, {MAX_WEIGHT}]")]
pub struct WeightOutOfRange(pub f64);

impl Weight {
    pub const ZERO: Weight = Weight(0);

    pub const fn from_milli(milli: u32) -> Self {
        Weight(milli)
    }

    pub fn new(value: f64) -> Result<Self, WeightOutOfRange> {
        if !(0.0..=MAX_WEIGHT).contains(&value) {
            return Err(WeightOutOfRange(value));
        }
        Ok(Weight((value * 1000.0).round() as u32))
    }

    pub fn milli(self) -> u32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.0) / 1000.0
    }
}

impl Serialize for Weight {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

/// Sum of attribute weights, same fixed-point scale as [`Weight`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Score(u64);

impl Score {
    pub fn milli(self) -> u64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl AddAssign<Weight> for Score {
    fn add_assign(&mut self, w: Weight) {
        self.0 += u64::from(w.0);
    }
}

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_f64())
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_f64())
    }
}

/// Where an indexed text comes from. Drives the attribute weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    SystematicTitle,
    AdditionalTitle,
    Inclusion,
    Exclusion,
    Note,
    AlphabeticalEntry,
    AlphabeticalIndentation,
    NeoplasmEntry,
    NeoplasmIndentation,
    GlossaryPhysicians,
    GlossaryRareDiseases,
    GlossaryEmergency,
    GlossaryMesh,
    GlossaryOther,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; 14] = [
        AttributeKind::SystematicTitle,
        AttributeKind::AdditionalTitle,
        AttributeKind::Inclusion,
        AttributeKind::Exclusion,
        AttributeKind::Note,
        AttributeKind::AlphabeticalEntry,
        AttributeKind::AlphabeticalIndentation,
        AttributeKind::NeoplasmEntry,
        AttributeKind::NeoplasmIndentation,
        AttributeKind::GlossaryPhysicians,
        AttributeKind::GlossaryRareDiseases,
        AttributeKind::GlossaryEmergency,
        AttributeKind::GlossaryMesh,
        AttributeKind::GlossaryOther,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttributeKind::SystematicTitle => "systematic_title",
            AttributeKind::AdditionalTitle => "additional_title",
            AttributeKind::Inclusion => "inclusion",
            AttributeKind::Exclusion => "exclusion",
            AttributeKind::Note => "note",
            AttributeKind::AlphabeticalEntry => "alphabetical_entry",
            AttributeKind::AlphabeticalIndentation => "alphabetical_indentation",
            AttributeKind::NeoplasmEntry => "neoplasm_entry",
            AttributeKind::NeoplasmIndentation => "neoplasm_indentation",
            AttributeKind::GlossaryPhysicians => "glossary_physicians",
            AttributeKind::GlossaryRareDiseases => "glossary_rare_diseases",
            AttributeKind::GlossaryEmergency => "glossary_emergency",
            AttributeKind::GlossaryMesh => "glossary_mesh",
            AttributeKind::GlossaryOther => "glossary_other",
        }
    }

    /// Kinds whose term strings are offered as autocomplete suggestions.
    pub fn is_suggestion_source(self) -> bool {
        !matches!(self, AttributeKind::Inclusion | AttributeKind::Exclusion | AttributeKind::Note)
    }

    /// Kinds whose tokens are counted for related-term suggestions: the
    /// systematic title, its additional terms and inclusions, and
    /// alphabetical-index entry terms.
    pub fn feeds_related_terms(self) -> bool {
        matches!(
            self,
            AttributeKind::SystematicTitle
                | AttributeKind::AdditionalTitle
                | AttributeKind::Inclusion
                | AttributeKind::AlphabeticalEntry
                | AttributeKind::AlphabeticalIndentation
        )
    }
}

/// Weight per attribute kind, each in `[0, 10]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributeWeightTable {
    weights: [Weight; AttributeKind::ALL.len()],
}

impl Default for AttributeWeightTable {
    fn default() -> Self {
        use AttributeKind::*;
        let mut weights = [Weight::ZERO; AttributeKind::ALL.len()];
        let defaults = [
            (SystematicTitle, 10_000),
            (AdditionalTitle, 7_500),
            (Inclusion, 2_500),
            (AlphabeticalEntry, 2_500),
            (AlphabeticalIndentation, 100),
            (NeoplasmEntry, 2_500),
            (NeoplasmIndentation, 100),
            (GlossaryPhysicians, 100),
            (GlossaryRareDiseases, 100),
            (GlossaryEmergency, 100),
            (GlossaryMesh, 100),
        ];
        for (kind, milli) in defaults {
            weights[kind.slot()] = Weight::from_milli(milli);
        }
        AttributeWeightTable { weights }
    }
}

impl AttributeWeightTable {
    pub fn get(&self, kind: AttributeKind) -> Weight {
        self.weights[kind.slot()]
    }

    pub fn set(&mut self, kind: AttributeKind, value: f64) -> Result<(), WeightOutOfRange> {
        self.weights[kind.slot()] = Weight::new(value)?;
        Ok(())
    }

    pub fn with(mut self, kind: AttributeKind, value: f64) -> Result<Self, WeightOutOfRange> {
        self.set(kind, value)?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table() {
        let t = AttributeWeightTable::default();
        use AttributeKind::*;
        let expect = [
            (SystematicTitle, 10.0),
            (AdditionalTitle, 7.5),
            (Inclusion, 2.5),
            (Exclusion, 0.0),
            (Note, 0.0),
            (AlphabeticalEntry, 2.5),
            (AlphabeticalIndentation, 0.1),
            (NeoplasmEntry, 2.5),
            (NeoplasmIndentation, 0.1),
            (GlossaryPhysicians, 0.1),
            (GlossaryRareDiseases, 0.1),
            (GlossaryEmergency, 0.1),
            (GlossaryMesh, 0.1),
            (GlossaryOther, 0.0),
        ];
        for (kind, w) in expect {
            assert_eq!(t.get(kind).as_f64(), w, "{kind:?}");
        }
    }

    #[test]
    fn out_of_range() {
        assert!(Weight::new(10.5).is_err());
        assert!(Weight::new(-0.1).is_err());
        assert!(Weight::new(f64::NAN).is_err());
        assert_eq!(Weight::new(0.1).unwrap().milli(), 100);
    }

    #[test]
    fn ordinal_slots_match_all() {
        for (i, k) in AttributeKind::ALL.iter().enumerate() {
            assert_eq!(k.slot(), i);
        }
    }
}

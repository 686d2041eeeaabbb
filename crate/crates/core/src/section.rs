//! The seven business-plan sections and a total map keyed by them.

use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One business-plan module. The declaration order is the canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    UserPainPoints,
    MarketAnalysis,
    ProductOverview,
    CompetitiveAnalysis,
    FeasibilityAnalysis,
    FundingPlan,
    Team,
}

impl Section {
    pub const COUNT: usize = 7;

    pub const ALL: [Section; Section::COUNT] = [
        Section::UserPainPoints,
        Section::MarketAnalysis,
        Section::ProductOverview,
        Section::CompetitiveAnalysis,
        Section::FeasibilityAnalysis,
        Section::FundingPlan,
        Section::Team,
    ];

    /// Stable serialization tag, e.g. `market_analysis`.
    pub fn tag(self) -> &'static str {
        match self {
            Section::UserPainPoints => "user_pain_points",
            Section::MarketAnalysis => "market_analysis",
            Section::ProductOverview => "product_overview",
            Section::CompetitiveAnalysis => "competitive_analysis",
            Section::FeasibilityAnalysis => "feasibility_analysis",
            Section::FundingPlan => "funding_plan",
            Section::Team => "team",
        }
    }

    /// Human-readable heading, e.g. `Market Analysis`.
    pub fn label(self) -> &'static str {
        match self {
            Section::UserPainPoints => "User Pain Points",
            Section::MarketAnalysis => "Market Analysis",
            Section::ProductOverview => "Product Overview",
            Section::CompetitiveAnalysis => "Competitive Analysis",
            Section::FeasibilityAnalysis => "Feasibility Analysis",
            Section::FundingPlan => "Funding Plan",
            Section::Team => "Team",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown section tag `{0}`")]
pub struct UnknownSection(pub String);

impl FromStr for Section {
    type Err = UnknownSection;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Section::ALL
            .into_iter()
            .find(|section| section.tag() == s)
            .ok_or_else(|| UnknownSection(s.to_string()))
    }
}

/// A map with exactly one value per [`Section`].
///
/// Serialized as a JSON object keyed by section tag in canonical order;
/// deserialization rejects objects that miss a section or name an unknown one.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SectionMap<T> {
    entries: [T; Section::COUNT],
}

impl<T> SectionMap<T> {
    pub fn from_fn(mut f: impl FnMut(Section) -> T) -> Self {
        Self {
            entries: Section::ALL.map(&mut f),
        }
    }

    pub fn get(&self, section: Section) -> &T {
        &self.entries[section.index()]
    }

    pub fn get_mut(&mut self, section: Section) -> &mut T {
        &mut self.entries[section.index()]
    }

    /// Entries in canonical section order.
    pub fn iter(&self) -> impl Iterator<Item = (Section, &T)> {
        Section::ALL.into_iter().zip(self.entries.iter())
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (Section, &mut T)> {
        Section::ALL.into_iter().zip(self.entries.iter_mut())
    }

    pub fn map<U>(&self, mut f: impl FnMut(Section, &T) -> U) -> SectionMap<U> {
        SectionMap::from_fn(|section| f(section, self.get(section)))
    }
}

impl<T> Index<Section> for SectionMap<T> {
    type Output = T;

    fn index(&self, section: Section) -> &T {
        self.get(section)
    }
}

impl<T> IndexMut<Section> for SectionMap<T> {
    fn index_mut(&mut self, section: Section) -> &mut T {
        self.get_mut(section)
    }
}

impl<T: Serialize> Serialize for SectionMap<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(Section::COUNT))?;
        for (section, value) in self.iter() {
            map.serialize_entry(section.tag(), value)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for SectionMap<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SectionMapVisitor<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de>> Visitor<'de> for SectionMapVisitor<T> {
            type Value = SectionMap<T>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("an object with one entry per business-plan section")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut slots: [Option<T>; Section::COUNT] = Default::default();
                while let Some(key) = access.next_key::<String>()? {
                    let section = key.parse::<Section>().map_err(de::Error::custom)?;
                    let slot = &mut slots[section.index()];
                    if slot.is_some() {
                        return Err(de::Error::custom(format!("duplicate section `{key}`")));
                    }
                    *slot = Some(access.next_value()?);
                }
                let mut missing = Vec::new();
                for section in Section::ALL {
                    if slots[section.index()].is_none() {
                        missing.push(section.tag());
                    }
                }
                if !missing.is_empty() {
                    return Err(de::Error::custom(format!(
                        "missing sections: {}",
                        missing.join(", ")
                    )));
                }
                Ok(SectionMap {
                    entries: slots.map(|slot| slot.expect("checked above")),
                })
            }
        }

        deserializer.deserialize_map(SectionMapVisitor(std::marker::PhantomData))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_matches_declaration() {
        let mut sorted = Section::ALL;
        sorted.sort();
        assert_eq!(sorted, Section::ALL);
        for (i, section) in Section::ALL.iter().enumerate() {
            assert_eq!(section.index(), i);
        }
    }

    #[test]
    fn tags_parse_back() {
        for section in Section::ALL {
            assert_eq!(section.tag().parse::<Section>().unwrap(), section);
            let json = serde_json::to_string(&section).unwrap();
            assert_eq!(json, format!("\"{}\"", section.tag()));
        }
        assert!("marketing".parse::<Section>().is_err());
    }

    #[test]
    fn section_map_requires_every_section() {
        let full = SectionMap::from_fn(|s| s.index() as u32);
        let json = serde_json::to_value(&full).unwrap();
        let back: SectionMap<u32> = serde_json::from_value(json.clone()).unwrap();
        assert_eq!(back, full);

        let mut partial = json.as_object().unwrap().clone();
        partial.remove("team");
        let err = serde_json::from_value::<SectionMap<u32>>(partial.into()).unwrap_err();
        assert!(err.to_string().contains("team"));

        let mut extra = json.as_object().unwrap().clone();
        extra.insert("marketing".into(), 3.into());
        assert!(serde_json::from_value::<SectionMap<u32>>(extra.into()).is_err());
    }

    #[test]
    fn serialization_keeps_canonical_key_order() {
        let map = SectionMap::from_fn(|_| 0u8);
        let text = serde_json::to_string(&map).unwrap();
        let positions: Vec<usize> = Section::ALL
            .iter()
            .map(|s| text.find(&format!("\"{}\"", s.tag())).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }
}

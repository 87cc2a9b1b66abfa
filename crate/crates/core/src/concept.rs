//! Concept categories, comparison relations and measurement units.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Color,
    Shape,
    Material,
    Size,
    Height,
    Mass,
    Temperature,
    Hardness,
}

impl Category {
    pub const ALL: [Category; 8] = [
        Category::Color,
        Category::Shape,
        Category::Material,
        Category::Size,
        Category::Height,
        Category::Mass,
        Category::Temperature,
        Category::Hardness,
    ];

    /// Attribute-selection tasks pick one of two tail options; the rest are
    /// relation comparisons between two objects.
    pub fn is_attribute(self) -> bool {
        matches!(self, Category::Color | Category::Shape | Category::Material)
    }

    pub fn is_comparison(self) -> bool {
        !self.is_attribute()
    }

    /// The (greater, lesser) relation pair for comparison categories.
    pub fn relation_pair(self) -> Option<(Relation, Relation)> {
        use Relation::*;
        match self {
            Category::Mass => Some((HeavierThan, LighterThan)),
            Category::Temperature => Some((HotterThan, ColderThan)),
            Category::Hardness => Some((HarderThan, SofterThan)),
            Category::Size => Some((LargerThan, SmallerThan)),
            Category::Height => Some((TallerThan, ShorterThan)),
            _ => None,
        }
    }

    /// Measurement unit of the builder-backed categories.
    pub fn unit(self) -> Option<Unit> {
        match self {
            Category::Mass => Some(Unit::Pounds),
            Category::Temperature => Some(Unit::DegreesCelsius),
            Category::Hardness => Some(Unit::MohsHardness),
            _ => None,
        }
    }

    /// Perceptibility threshold used when building pairs.
    pub fn default_threshold(self) -> Option<f64> {
        match self {
            Category::Mass => Some(1.0),
            Category::Temperature => Some(10.0),
            Category::Hardness => Some(1.0),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Color => "color",
            Category::Shape => "shape",
            Category::Material => "material",
            Category::Size => "size",
            Category::Height => "height",
            Category::Mass => "mass",
            Category::Temperature => "temperature",
            Category::Hardness => "hardness",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .or(match s.as_str() {
                "weight" => Some(Category::Mass),
                _ => None,
            })
            .ok_or_else(|| Error::validation("category", format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    HeavierThan,
    LighterThan,
    HotterThan,
    ColderThan,
    HarderThan,
    SofterThan,
    LargerThan,
    SmallerThan,
    TallerThan,
    ShorterThan,
}

impl Relation {
    pub const ALL: [Relation; 10] = [
        Relation::HeavierThan,
        Relation::LighterThan,
        Relation::HotterThan,
        Relation::ColderThan,
        Relation::HarderThan,
        Relation::SofterThan,
        Relation::LargerThan,
        Relation::SmallerThan,
        Relation::TallerThan,
        Relation::ShorterThan,
    ];

    /// Whether `head rel tail` asserts value(head) > value(tail).
    pub fn is_greater(self) -> bool {
        use Relation::*;
        matches!(self, HeavierThan | HotterThan | HarderThan | LargerThan | TallerThan)
    }

    pub fn category(self) -> Category {
        use Relation::*;
        match self {
            HeavierThan | LighterThan => Category::Mass,
            HotterThan | ColderThan => Category::Temperature,
            HarderThan | SofterThan => Category::Hardness,
            LargerThan | SmallerThan => Category::Size,
            TallerThan | ShorterThan => Category::Height,
        }
    }

    /// Ground truth of `head rel tail` given the two measurements.
    pub fn holds(self, head: f64, tail: f64) -> bool {
        if self.is_greater() {
            head > tail
        } else {
            head < tail
        }
    }

    pub fn as_str(self) -> &'static str {
        use Relation::*;
        match self {
            HeavierThan => "heavier_than",
            LighterThan => "lighter_than",
            HotterThan => "hotter_than",
            ColderThan => "colder_than",
            HarderThan => "harder_than",
            SofterThan => "softer_than",
            LargerThan => "larger_than",
            SmallerThan => "smaller_than",
            TallerThan => "taller_than",
            ShorterThan => "shorter_than",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == norm)
            .ok_or_else(|| Error::validation("relation", format!("unknown relation {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    Pounds,
    DegreesCelsius,
    MohsHardness,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Pounds => "pounds",
            Unit::DegreesCelsius => "degrees-celsius",
            Unit::MohsHardness => "mohs-hardness",
        }
    }

    pub fn category(self) -> Category {
        match self {
            Unit::Pounds => Category::Mass,
            Unit::DegreesCelsius => Category::Temperature,
            Unit::MohsHardness => Category::Hardness,
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pounds" | "pound" | "lbs" | "lb" => Ok(Unit::Pounds),
            "degrees-celsius" | "celsius" | "c" | "°c" | "degc" => Ok(Unit::DegreesCelsius),
            "mohs-hardness" | "mohs" => Ok(Unit::MohsHardness),
            other => Err(Error::validation("unit", format!("unknown unit {other:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relation_pairs_are_opposite_polarity() {
        for cat in Category::ALL.into_iter().filter(|c| c.is_comparison()) {
            let (g, l) = cat.relation_pair().unwrap();
            assert!(g.is_greater());
            assert!(!l.is_greater());
            assert_eq!(g.category(), cat);
            assert_eq!(l.category(), cat);
        }
    }

    #[test]
    fn parse_round_trips() {
        for r in Relation::ALL {
            assert_eq!(r.as_str().parse::<Relation>().unwrap(), r);
        }
        for c in Category::ALL {
            assert_eq!(c.as_str().parse::<Category>().unwrap(), c);
        }
        assert_eq!("lbs".parse::<Unit>().unwrap(), Unit::Pounds);
        assert_eq!("colder than".parse::<Relation>().unwrap(), Relation::ColderThan);
        assert!("furlongs".parse::<Unit>().is_err());
    }
}

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{RelationCatalog, RelationId};

pub const NYT_GROUP_A: [&str; 8] = [
    "/people/person/ethnicity",
    "/location/location/contains",
    "/sports/sports_team_location/teams",
    "/business/company/founders",
    "/people/person/nationality",
    "/business/company/advisors",
    "/business/person/company",
    "/location/country/capital",
];

pub const NYT_GROUP_B: [&str; 8] = [
    "/people/person/place_lived",
    "/business/company_shareholder/major_shareholder_of",
    "/people/ethnicity/people",
    "/location/neighborhood/neighborhood_of",
    "/business/company/major_shareholders",
    "/people/person/place_of_birth",
    "/business/company/place_founded",
    "/sports/sports_team/location",
];

pub const NYT_GROUP_C: [&str; 8] = [
    "/location/administrative_division/country",
    "/location/country/administrative_divisions",
    "/people/person/profession",
    "/people/ethnicity/geographic_distribution",
    "/people/person/religion",
    "/people/person/children",
    "/business/company/industry",
    "/people/deceased_person/place_of_death",
];

const INTRA_SOURCE_TYPES: [&str; 3] = ["location", "business", "sports"];
const INTRA_TARGET_TYPE: &str = "people";

/// The 24 NYT relation categories, groups A, B and C in order.
pub fn nyt24_catalog() -> RelationCatalog {
    RelationCatalog::from_names(NYT_GROUP_A.iter().chain(&NYT_GROUP_B).chain(&NYT_GROUP_C))
        .expect("static names are unique and non-empty")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Group A is the target domain, B and C the source.
    InterA,
    InterB,
    InterC,
    /// Source: location, business and sports categories; target: people.
    Intra,
    /// Explicit name lists.
    Custom { source: Vec<String>, target: Vec<String> },
}

impl std::str::FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "inter-a" | "a" => Ok(SplitMode::InterA),
            "inter-b" | "b" => Ok(SplitMode::InterB),
            "inter-c" | "c" => Ok(SplitMode::InterC),
            "intra" => Ok(SplitMode::Intra),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplitMode::InterA => f.write_str("INTER-A"),
            SplitMode::InterB => f.write_str("INTER-B"),
            SplitMode::InterC => f.write_str("INTER-C"),
            SplitMode::Intra => f.write_str("INTRA"),
            SplitMode::Custom { .. } => f.write_str("CUSTOM"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskSplit {
    pub name: String,
    pub source: Vec<RelationId>,
    pub target: Vec<RelationId>,
}

impl TaskSplit {
    pub fn source_set(&self) -> HashSet<RelationId> {
        self.source.iter().copied().collect()
    }

    pub fn target_set(&self) -> HashSet<RelationId> {
        self.target.iter().copied().collect()
    }
}

fn resolve(catalog: &RelationCatalog, names: &[&str]) -> Result<Vec<RelationId>> {
    names.iter().map(|n| catalog.id(n)).collect()
}

fn coarse_type(name: &str) -> Option<&str> {
    name.split('/').find(|s| !s.is_empty())
}

pub fn build_split(catalog: &RelationCatalog, mode: &SplitMode) -> Result<TaskSplit> {
    let groups = [&NYT_GROUP_A[..], &NYT_GROUP_B[..], &NYT_GROUP_C[..]];
    let inter = |target: usize| -> Result<TaskSplit> {
        let target_ids = resolve(catalog, groups[target])?;
        let mut source = Vec::new();
        for (g, names) in groups.iter().enumerate() {
            if g != target {
                source.extend(resolve(catalog, names)?);
            }
        }
        Ok(TaskSplit { name: mode.to_string(), source, target: target_ids })
    };
    let split = match mode {
        SplitMode::InterA => inter(0)?,
        SplitMode::InterB => inter(1)?,
        SplitMode::InterC => inter(2)?,
        SplitMode::Intra => {
            let mut source = Vec::new();
            let mut target = Vec::new();
            for e in catalog.iter() {
                match coarse_type(&e.name) {
                    Some(t) if INTRA_SOURCE_TYPES.contains(&t) => source.push(e.id),
                    Some(INTRA_TARGET_TYPE) => target.push(e.id),
                    _ => {}
                }
            }
            if target.is_empty() || source.is_empty() {
                return Err(Error::Config("catalog has no categories for the INTRA split".into()));
            }
            TaskSplit { name: mode.to_string(), source, target }
        }
        SplitMode::Custom { source, target } => {
            let s: Vec<&str> = source.iter().map(String::as_str).collect();
            let t: Vec<&str> = target.iter().map(String::as_str).collect();
            TaskSplit { name: mode.to_string(), source: resolve(catalog, &s)?, target: resolve(catalog, &t)? }
        }
    };
    let src = split.source_set();
    if split.target.iter().any(|t| src.contains(t)) {
        return Err(Error::Config("source and target relations overlap".into()));
    }
    Ok(split)
}

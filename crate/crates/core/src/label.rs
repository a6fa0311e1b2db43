use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Localization classes: the eleven core units followed by the two sentinel
/// classes. The declaration order is the fixed tie-break order used whenever
/// scores are ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UnitLabel {
    Fetch,
    Decode,
    Issue,
    Rename,
    Execute,
    Branch,
    Registers,
    LoadStoreQueue,
    Memory,
    ReOrderBuffer,
    Commit,
    BugFree,
    Unknown,
}

/// The eleven units a bug can be localized to.
pub const UNITS: [UnitLabel; 11] = [
    UnitLabel::Fetch,
    UnitLabel::Decode,
    UnitLabel::Issue,
    UnitLabel::Rename,
    UnitLabel::Execute,
    UnitLabel::Branch,
    UnitLabel::Registers,
    UnitLabel::LoadStoreQueue,
    UnitLabel::Memory,
    UnitLabel::ReOrderBuffer,
    UnitLabel::Commit,
];

impl UnitLabel {
    pub fn is_unit(self) -> bool {
        !matches!(self, UnitLabel::BugFree | UnitLabel::Unknown)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            UnitLabel::Fetch => "Fetch",
            UnitLabel::Decode => "Decode",
            UnitLabel::Issue => "Issue",
            UnitLabel::Rename => "Rename",
            UnitLabel::Execute => "Execute",
            UnitLabel::Branch => "Branch",
            UnitLabel::Registers => "Registers",
            UnitLabel::LoadStoreQueue => "LoadStoreQueue",
            UnitLabel::Memory => "Memory",
            UnitLabel::ReOrderBuffer => "ReOrderBuffer",
            UnitLabel::Commit => "Commit",
            UnitLabel::BugFree => "BugFree",
            UnitLabel::Unknown => "Unknown",
        }
    }
}

impl fmt::Display for UnitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for UnitLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        UNITS
            .iter()
            .copied()
            .chain([UnitLabel::BugFree, UnitLabel::Unknown])
            .find(|u| u.as_str() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown label {s:?}")))
    }
}

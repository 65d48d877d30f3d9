//! Measure identifiers shared by the CLI, the sweep configuration and the
//! report `measure` column.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    #[serde(rename = "aligned_cos")]
    AlignedCos,
    #[serde(rename = "dist_corr")]
    DistCorr,
    KnnJaccard,
    #[serde(rename = "second_cos")]
    SecondCos,
    Disagreement,
    NormDisagreement,
    StableCore,
    Jsd,
    Accuracy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    /// Compares two embedding matrices.
    Representational,
    /// Compares two output matrices.
    Functional,
    /// Summarizes a whole group of outputs.
    Group,
    /// One value per run.
    PerRun,
}

impl Measure {
    pub const ALL: [Measure; 9] = [
        Measure::AlignedCos,
        Measure::DistCorr,
        Measure::KnnJaccard,
        Measure::SecondCos,
        Measure::Disagreement,
        Measure::NormDisagreement,
        Measure::StableCore,
        Measure::Jsd,
        Measure::Accuracy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Measure::AlignedCos => "aligned_cos",
            Measure::DistCorr => "dist_corr",
            Measure::KnnJaccard => "knn_jaccard",
            Measure::SecondCos => "second_cos",
            Measure::Disagreement => "disagreement",
            Measure::NormDisagreement => "norm_disagreement",
            Measure::StableCore => "stable_core",
            Measure::Jsd => "jsd",
            Measure::Accuracy => "accuracy",
        }
    }

    pub fn kind(self) -> MeasureKind {
        match self {
            Measure::AlignedCos | Measure::DistCorr | Measure::KnnJaccard | Measure::SecondCos => {
                MeasureKind::Representational
            }
            Measure::Disagreement | Measure::NormDisagreement | Measure::Jsd => MeasureKind::Functional,
            Measure::StableCore => MeasureKind::Group,
            Measure::Accuracy => MeasureKind::PerRun,
        }
    }

    /// Whether the measure is computed over pairs of runs.
    pub fn is_pairwise(self) -> bool {
        matches!(self.kind(), MeasureKind::Representational | MeasureKind::Functional)
    }

    /// Closed interval of attainable values.
    pub fn range(self) -> (f64, f64) {
        match self {
            Measure::AlignedCos | Measure::SecondCos => (-1.0, 1.0),
            Measure::Jsd => (0.0, std::f64::consts::LN_2),
            _ => (0.0, 1.0),
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Measure::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let known: Vec<&str> = Measure::ALL.iter().map(|m| m.name()).collect();
                Error::InvalidArgument(format!("unknown measure {s:?}; expected one of {}", known.join(", ")))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip_through_serde_and_from_str() {
        for m in Measure::ALL {
            assert_eq!(m.name().parse::<Measure>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("cka".parse::<Measure>().is_err());
    }
}

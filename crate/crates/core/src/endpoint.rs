//! Composite endpoint (Fail or Withdrawn) re-labelling for the sensitivity
//! pass. Risk scores and censoring weights are taken from the primary run.

use serde::Serialize;

use crate::ingestion::{Enrollment, FinalResult};
use crate::metrics::Outcome;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Primary,
    Composite,
}

impl Endpoint {
    pub fn name(self) -> &'static str {
        match self {
            Endpoint::Primary => "primary",
            Endpoint::Composite => "composite",
        }
    }

    pub fn definition(self) -> &'static str {
        match self {
            Endpoint::Primary => "Withdrawn with valid unregistration date",
            Endpoint::Composite => "Fail OR Withdrawn (Fail at last observed week)",
        }
    }

    pub fn outcome(self, e: &Enrollment) -> Outcome {
        match self {
            Endpoint::Primary => Outcome::primary(e),
            Endpoint::Composite => composite_outcome(e),
        }
    }
}

impl std::str::FromStr for Endpoint {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "primary" => Ok(Endpoint::Primary),
            "composite" => Ok(Endpoint::Composite),
            other => Err(crate::Error::Argument(format!(
                "unknown endpoint `{other}` (expected primary or composite)"
            ))),
        }
    }
}

/// Withdrawn-with-date keeps its event week; Fail becomes an event at the
/// last observed week; everything else is as in the primary endpoint.
pub fn composite_outcome(e: &Enrollment) -> Outcome {
    if e.event {
        Outcome::primary(e)
    } else if e.final_result == FinalResult::Fail {
        Outcome {
            event: true,
            time: e.t_last_obs,
        }
    } else {
        Outcome::primary(e)
    }
}

pub fn composite_labels(enrollments: &[Enrollment]) -> Vec<Outcome> {
    enrollments.iter().map(composite_outcome).collect()
}

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingestion::Enrollment;
use crate::person_period::PersonPeriodTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    TotalClicks,
    StudiedCredits,
    NumOfPrevAttempts,
    Recency,
    Streak,
    SubmittedThisWeek,
    Week,
    CodeModule,
    CodePresentation,
    HighestEducation,
    AgeBand,
    Gender,
}

impl Feature {
    pub const ALL: [Feature; 12] = [
        Feature::TotalClicks,
        Feature::StudiedCredits,
        Feature::NumOfPrevAttempts,
        Feature::Recency,
        Feature::Streak,
        Feature::SubmittedThisWeek,
        Feature::Week,
        Feature::CodeModule,
        Feature::CodePresentation,
        Feature::HighestEducation,
        Feature::AgeBand,
        Feature::Gender,
    ];

    pub fn is_numeric(self) -> bool {
        matches!(
            self,
            Feature::TotalClicks
                | Feature::StudiedCredits
                | Feature::NumOfPrevAttempts
                | Feature::Recency
                | Feature::Streak
                | Feature::SubmittedThisWeek
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::TotalClicks => "total_clicks",
            Feature::StudiedCredits => "studied_credits",
            Feature::NumOfPrevAttempts => "num_of_prev_attempts",
            Feature::Recency => "recency",
            Feature::Streak => "streak",
            Feature::SubmittedThisWeek => "submitted_this_week",
            Feature::Week => "week",
            Feature::CodeModule => "code_module",
            Feature::CodePresentation => "code_presentation",
            Feature::HighestEducation => "highest_education",
            Feature::AgeBand => "age_band",
            Feature::Gender => "gender",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Named feature subsets used by the ablation battery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoRecencyStreak,
    NoActivity,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoRecencyStreak, Variant::NoActivity];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRecencyStreak => "no_recency_streak",
            Variant::NoActivity => "no_activity",
        }
    }

    pub fn features(self) -> FeatureSet {
        let drop: &[Feature] = match self {
            Variant::Full => &[],
            Variant::NoRecencyStreak => &[Feature::Recency, Feature::Streak],
            Variant::NoActivity => &[Feature::TotalClicks],
        };
        FeatureSet(Feature::ALL.iter().copied().filter(|f| !drop.contains(f)).collect())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown ablation variant `{s}`")))
    }
}

/// Ordered set of model inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet(pub Vec<Feature>);

impl FeatureSet {
    pub fn full() -> Self {
        Variant::Full.features()
    }

    pub fn contains(&self, f: Feature) -> bool {
        self.0.contains(&f)
    }

    pub fn numeric(&self) -> impl Iterator<Item = Feature> + '_ {
        self.0.iter().copied().filter(|f| f.is_numeric())
    }

    pub fn categorical(&self) -> impl Iterator<Item = Feature> + '_ {
        self.0.iter().copied().filter(|f| !f.is_numeric())
    }
}

/// Raw (unencoded) inputs for one enrollment-week. Dynamic values are held
/// as floats so counterfactual rows can carry fractional clicks.
#[derive(Debug, Clone, Copy)]
pub struct FeatureRow<'a> {
    pub week: u32,
    pub total_clicks: f64,
    pub recency: f64,
    pub streak: f64,
    pub submitted: f64,
    pub enrollment: &'a Enrollment,
}

impl<'a> FeatureRow<'a> {
    pub fn from_table(table: &'a PersonPeriodTable, r: usize) -> Self {
        FeatureRow {
            week: table.week[r],
            total_clicks: table.total_clicks[r],
            recency: f64::from(table.recency[r]),
            streak: f64::from(table.streak[r]),
            submitted: if table.submitted[r] { 1.0 } else { 0.0 },
            enrollment: table.enrollment_of(r),
        }
    }

    pub fn numeric(&self, f: Feature) -> f64 {
        let s = &self.enrollment.statics;
        match f {
            Feature::TotalClicks => self.total_clicks,
            Feature::StudiedCredits => s.studied_credits,
            Feature::NumOfPrevAttempts => s.num_of_prev_attempts,
            Feature::Recency => self.recency,
            Feature::Streak => self.streak,
            Feature::SubmittedThisWeek => self.submitted,
            _ => panic!("{f} is categorical"),
        }
    }

    pub fn categorical(&self, f: Feature) -> Cow<'a, str> {
        let e = self.enrollment;
        match f {
            Feature::Week => Cow::Owned(self.week.to_string()),
            Feature::CodeModule => Cow::Borrowed(&e.key.code_module),
            Feature::CodePresentation => Cow::Borrowed(&e.key.code_presentation),
            Feature::HighestEducation => Cow::Borrowed(&e.statics.highest_education),
            Feature::AgeBand => Cow::Borrowed(&e.statics.age_band),
            Feature::Gender => Cow::Borrowed(&e.statics.gender),
            _ => panic!("{f} is numeric"),
        }
    }
}

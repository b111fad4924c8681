//! Report trust scoring and the validation state machine.
//!
//! A report's score is the author's reputation at submission time plus the
//! reputation-weighted sum of community votes:
//!
//! ```text
//! score = author_reputation_at_submit + Σ vote_i × rater_reputation_i
//! ```
//!
//! Every function here is pure: it takes a [`TrustState`] and returns a new
//! one, plus any reputation adjustments the caller must apply to profiles.
//! The score is always recomputed from the rating set in rater-id order, so
//! an incrementally maintained state and one rebuilt from an event log agree
//! bit for bit.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::TrustError;
use crate::model::{Provenance, ReportId, ReporterProfile, ReporterRef, UserId, ValidationStatus};

/// Reputation every newly registered user starts with.
pub const INITIAL_REPUTATION: f64 = 0.5;
/// Fixed author weight used for anonymous reports.
pub const ANONYMOUS_AUTHOR_WEIGHT: f64 = 0.3;
/// Default community validation threshold.
pub const DEFAULT_THRESHOLD: f64 = 1.5;
/// Author reward when a report is validated (by community or admin).
pub const VALIDATION_REWARD: f64 = 0.05;
/// Author penalty when an admin rejects a report.
pub const REJECTION_PENALTY: f64 = 0.10;
/// Rater adjustment for agreeing (or disagreeing) with an admin verdict.
pub const RATER_AGREEMENT_DELTA: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Vote {
    Support,
    Dispute,
}

impl Vote {
    pub fn sign(self) -> f64 {
        match self {
            Vote::Support => 1.0,
            Vote::Dispute => -1.0,
        }
    }
}

impl From<Vote> for i8 {
    fn from(v: Vote) -> i8 {
        match v {
            Vote::Support => 1,
            Vote::Dispute => -1,
        }
    }
}

impl TryFrom<i8> for Vote {
    type Error = String;

    fn try_from(v: i8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Vote::Support),
            -1 => Ok(Vote::Dispute),
            other => Err(format!("vote must be +1 or -1, got {other}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub report_id: ReportId,
    pub rater_id: UserId,
    pub vote: Vote,
    pub rater_reputation_at_vote: f64,
    pub time: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustState {
    pub report_id: ReportId,
    pub author: ReporterRef,
    pub author_reputation_at_submit: f64,
    /// At most one rating per rater; keyed for a canonical summation order.
    pub ratings: BTreeMap<UserId, Rating>,
    pub score: f64,
    pub status: ValidationStatus,
}

impl TrustState {
    pub fn new(report_id: ReportId, author: ReporterRef, author_reputation_at_submit: f64) -> Self {
        let mut state = TrustState {
            report_id,
            author,
            author_reputation_at_submit,
            ratings: BTreeMap::new(),
            score: 0.0,
            status: ValidationStatus::Pending,
        };
        state.score = trust_score(&state);
        state
    }
}

/// A signed change to one user's reputation. Applied with clamping to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReputationDelta {
    pub user_id: UserId,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Confirm,
    Reject,
}

/// Result of a state transition: the new state and the reputation
/// adjustments it implies, in application order.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: TrustState,
    pub deltas: Vec<ReputationDelta>,
}

pub fn trust_score(state: &TrustState) -> f64 {
    state
        .ratings
        .values()
        .fold(state.author_reputation_at_submit, |acc, r| {
            acc + r.vote.sign() * r.rater_reputation_at_vote
        })
}

/// Records `rating`, replacing any earlier vote by the same rater, and
/// recomputes the score. Status is left untouched.
pub fn apply_rating(state: &TrustState, rating: Rating) -> Result<TrustState, TrustError> {
    if rating.report_id != state.report_id {
        return Err(TrustError::UnknownReport);
    }
    if state.author.user_id() == Some(&rating.rater_id) {
        return Err(TrustError::SelfRating);
    }
    if state.status.is_rejected() {
        return Err(TrustError::ReportRejected);
    }
    let mut next = state.clone();
    next.ratings.insert(rating.rater_id.clone(), rating);
    next.score = trust_score(&next);
    Ok(next)
}

/// Community validation: a pending report whose score reaches `threshold`
/// becomes validated and its registered author earns a reward. Below the
/// threshold nothing changes; the community never rejects.
pub fn evaluate(state: &TrustState, threshold: f64) -> Result<Transition, TrustError> {
    if !state.status.is_pending() {
        return Err(TrustError::NotPending);
    }
    let mut next = state.clone();
    let mut deltas = Vec::new();
    if trust_score(state) >= threshold {
        next.status = ValidationStatus::Validated(Provenance::Community);
        if let Some(author) = state.author.user_id() {
            deltas.push(ReputationDelta {
                user_id: author.clone(),
                delta: VALIDATION_REWARD,
            });
        }
    }
    Ok(Transition {
        state: next,
        deltas,
    })
}

/// Admin confirmation or rejection. Overrides community status; raters whose
/// vote agrees with the verdict gain reputation, the others lose it.
pub fn admin_verdict(
    state: &TrustState,
    verdict: Verdict,
    admin: &ReporterProfile,
) -> Result<Transition, TrustError> {
    if !admin.is_admin() {
        return Err(TrustError::NotAdmin);
    }
    match (state.status, verdict) {
        (ValidationStatus::Rejected(_), _) => return Err(TrustError::ReportRejected),
        (ValidationStatus::Validated(Provenance::Admin), Verdict::Confirm) => {
            return Err(TrustError::AlreadyConfirmed)
        }
        _ => {}
    }

    let (status, author_delta, agreeing_vote) = match verdict {
        Verdict::Confirm => (
            ValidationStatus::Validated(Provenance::Admin),
            VALIDATION_REWARD,
            Vote::Support,
        ),
        Verdict::Reject => (
            ValidationStatus::Rejected(Provenance::Admin),
            -REJECTION_PENALTY,
            Vote::Dispute,
        ),
    };
    debug_assert!(state.status.may_become(status));

    let mut deltas = Vec::with_capacity(state.ratings.len() + 1);
    if let Some(author) = state.author.user_id() {
        deltas.push(ReputationDelta {
            user_id: author.clone(),
            delta: author_delta,
        });
    }
    for rating in state.ratings.values() {
        let delta = if rating.vote == agreeing_vote {
            RATER_AGREEMENT_DELTA
        } else {
            -RATER_AGREEMENT_DELTA
        };
        deltas.push(ReputationDelta {
            user_id: rating.rater_id.clone(),
            delta,
        });
    }

    let mut next = state.clone();
    next.status = status;
    Ok(Transition {
        state: next,
        deltas,
    })
}

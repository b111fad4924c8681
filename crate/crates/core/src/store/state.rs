//! Current-state views derived from the event log.
//!
//! Every mutation goes through [`DerivedState::prepare`] and
//! [`DerivedState::commit`]. The live service prepares an event, appends it
//! to the log, then commits; replay runs the same two steps over the log.
//! Live and replayed state are therefore produced by the same code.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{DraftError, StoreError, TrustError};
use crate::model::{
    validate_draft, DisplayNames, Report, ReportDraft, ReportId, ReporterProfile, ReporterRef, UserId,
};
use crate::store::event::{Event, EventPayload, UserRecord};
use crate::trust::{self, ReputationDelta, TrustState, ANONYMOUS_AUTHOR_WEIGHT};

/// Namespace in which a client idempotency key is unique.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KeyScope {
    User(UserId),
    Anonymous,
}

impl KeyScope {
    pub fn of(author: &ReporterRef) -> Self {
        match author {
            ReporterRef::Registered(id) => KeyScope::User(id.clone()),
            ReporterRef::Anonymous => KeyScope::Anonymous,
        }
    }
}

/// Why an event cannot be applied to the current state.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ApplyError {
    #[error(transparent)]
    Trust(#[from] TrustError),
    #[error(transparent)]
    Draft(#[from] DraftError),
    #[error("display name already taken")]
    NameTaken,
    #[error("user id already registered")]
    DuplicateUser,
    #[error("unknown user {0}")]
    UnknownUser(UserId),
    #[error("client key already used in this scope")]
    DuplicateClientKey,
    #[error("expected report id {expected}, got {found}")]
    ReportIdMismatch { expected: ReportId, found: ReportId },
    #[error("recorded {what} {recorded} differs from derived {derived}")]
    ReputationMismatch { what: &'static str, recorded: f64, derived: f64 },
    #[error("report is not in its initial state")]
    NotInitialState,
    #[error("score has not reached threshold {0}")]
    BelowThreshold(f64),
    #[error("expected seq {expected}, got {found}")]
    SeqMismatch { expected: u64, found: u64 },
}

/// Change of a report's presence on authority views (map, stats).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Visibility {
    Entered(ReportId),
    Left(ReportId),
}

#[derive(Debug, Clone, PartialEq)]
enum Change {
    AddUser(UserRecord),
    AddReport { report: Report, trust: TrustState },
    UpdateTrust { trust: TrustState, deltas: Vec<ReputationDelta> },
}

/// A validated, not yet applied, state change for one event.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    seq: u64,
    change: Change,
}

/// Effect of a committed event.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Applied {
    pub visibility: Option<Visibility>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DerivedState {
    users: BTreeMap<UserId, UserRecord>,
    names: BTreeMap<String, UserId>,
    reports: BTreeMap<ReportId, Report>,
    trust: BTreeMap<ReportId, TrustState>,
    client_keys: HashMap<(KeyScope, String), ReportId>,
    last_seq: u64,
}

fn name_key(name: &str) -> String {
    name.trim().to_lowercase()
}

fn same_bits(what: &'static str, recorded: f64, derived: f64) -> Result<(), ApplyError> {
    if recorded.to_bits() == derived.to_bits() {
        Ok(())
    } else {
        Err(ApplyError::ReputationMismatch {
            what,
            recorded,
            derived,
        })
    }
}

impl DerivedState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds state from a complete log.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Self, StoreError> {
        let mut state = DerivedState::new();
        for event in events {
            state
                .apply(event)
                .map_err(|e| StoreError::corrupt(event.seq, e.to_string()))?;
        }
        Ok(state)
    }

    pub fn apply(&mut self, event: &Event) -> Result<Applied, ApplyError> {
        let prepared = self.prepare(event)?;
        Ok(self.commit(prepared))
    }

    pub fn last_seq(&self) -> u64 {
        self.last_seq
    }

    pub fn next_report_id(&self) -> ReportId {
        ReportId(self.reports.keys().next_back().map_or(1, |id| id.0 + 1))
    }

    pub fn user(&self, id: &UserId) -> Option<&UserRecord> {
        self.users.get(id)
    }

    pub fn profile(&self, id: &UserId) -> Option<&ReporterProfile> {
        self.users.get(id).map(|u| &u.profile)
    }

    pub fn user_by_name(&self, name: &str) -> Option<&UserRecord> {
        self.names.get(&name_key(name)).and_then(|id| self.users.get(id))
    }

    pub fn profiles(&self) -> impl Iterator<Item = &ReporterProfile> {
        self.users.values().map(|u| &u.profile)
    }

    pub fn report(&self, id: ReportId) -> Option<&Report> {
        self.reports.get(&id)
    }

    pub fn reports(&self) -> impl DoubleEndedIterator<Item = &Report> {
        self.reports.values()
    }

    pub fn validated_reports(&self) -> impl Iterator<Item = &Report> {
        self.reports.values().filter(|r| r.status.is_validated())
    }

    pub fn trust(&self, id: ReportId) -> Option<&TrustState> {
        self.trust.get(&id)
    }

    pub fn trust_states(&self) -> impl Iterator<Item = &TrustState> {
        self.trust.values()
    }

    pub fn lookup_client_key(&self, scope: &KeyScope, client_key: &str) -> Option<ReportId> {
        self.client_keys
            .get(&(scope.clone(), client_key.to_string()))
            .copied()
    }

    /// Author weight a new report by `author` would start with.
    pub fn author_weight(&self, author: &ReporterRef) -> Result<f64, ApplyError> {
        match author {
            ReporterRef::Anonymous => Ok(ANONYMOUS_AUTHOR_WEIGHT),
            ReporterRef::Registered(id) => self
                .profile(id)
                .map(|p| p.reputation)
                .ok_or_else(|| ApplyError::UnknownUser(id.clone())),
        }
    }

    fn trust_of(&self, id: ReportId) -> Result<&TrustState, ApplyError> {
        self.trust.get(&id).ok_or(ApplyError::Trust(TrustError::UnknownReport))
    }

    /// Checks an event against the current state without changing it.
    pub fn prepare(&self, event: &Event) -> Result<Prepared, ApplyError> {
        if event.seq != self.last_seq + 1 {
            return Err(ApplyError::SeqMismatch {
                expected: self.last_seq + 1,
                found: event.seq,
            });
        }
        let change = match &event.payload {
            EventPayload::UserRegistered(record) => {
                if self.users.contains_key(&record.profile.user_id) {
                    return Err(ApplyError::DuplicateUser);
                }
                if self.names.contains_key(&name_key(&record.profile.display_name)) {
                    return Err(ApplyError::NameTaken);
                }
                let mut record = record.clone();
                record.profile.reputation = crate::model::clamp_reputation(record.profile.reputation);
                Change::AddUser(record)
            }
            EventPayload::ReportSubmitted {
                report,
                author_reputation_at_submit,
            } => {
                let expected = self.next_report_id();
                if report.report_id != expected {
                    return Err(ApplyError::ReportIdMismatch {
                        expected,
                        found: report.report_id,
                    });
                }
                if !report.status.is_pending() {
                    return Err(ApplyError::NotInitialState);
                }
                if report.anonymous && report.author != ReporterRef::Anonymous {
                    return Err(ApplyError::NotInitialState);
                }
                validate_draft(ReportDraft {
                    categories: report.categories.clone(),
                    location: report.location,
                    text: report.text.clone(),
                    attachment: report.attachment.clone(),
                    anonymous: report.anonymous,
                    client_key: report.client_key.clone(),
                    client_time: report.client_time,
                })?;
                let scope = KeyScope::of(&report.author);
                if self.lookup_client_key(&scope, &report.client_key).is_some() {
                    return Err(ApplyError::DuplicateClientKey);
                }
                let weight = self.author_weight(&report.author)?;
                same_bits("author reputation", *author_reputation_at_submit, weight)?;
                let trust = TrustState::new(report.report_id, report.author.clone(), weight);
                let mut report = report.clone();
                report.server_time = event.server_time;
                Change::AddReport { report, trust }
            }
            EventPayload::RatingApplied(rating) => {
                let state = self.trust_of(rating.report_id)?;
                let rater = self
                    .profile(&rating.rater_id)
                    .ok_or_else(|| ApplyError::UnknownUser(rating.rater_id.clone()))?;
                same_bits("rater reputation", rating.rater_reputation_at_vote, rater.reputation)?;
                Change::UpdateTrust {
                    trust: trust::apply_rating(state, rating.clone())?,
                    deltas: Vec::new(),
                }
            }
            EventPayload::CommunityValidated {
                report_id,
                threshold,
            } => {
                let state = self.trust_of(*report_id)?;
                let t = trust::evaluate(state, *threshold)?;
                if !t.state.status.is_validated() {
                    return Err(ApplyError::BelowThreshold(*threshold));
                }
                Change::UpdateTrust {
                    trust: t.state,
                    deltas: t.deltas,
                }
            }
            EventPayload::AdminVerdict {
                report_id,
                verdict,
                admin_id,
            } => {
                let state = self.trust_of(*report_id)?;
                let admin = self
                    .profile(admin_id)
                    .ok_or_else(|| ApplyError::UnknownUser(admin_id.clone()))?;
                let t = trust::admin_verdict(state, *verdict, admin)?;
                Change::UpdateTrust {
                    trust: t.state,
                    deltas: t.deltas,
                }
            }
        };
        Ok(Prepared {
            seq: event.seq,
            change,
        })
    }

    /// Applies a change produced by [`prepare`](Self::prepare) on this same
    /// state. Infallible.
    pub fn commit(&mut self, prepared: Prepared) -> Applied {
        debug_assert_eq!(prepared.seq, self.last_seq + 1);
        self.last_seq = prepared.seq;
        match prepared.change {
            Change::AddUser(record) => {
                self.names
                    .insert(name_key(&record.profile.display_name), record.profile.user_id.clone());
                self.users.insert(record.profile.user_id.clone(), record);
                Applied::default()
            }
            Change::AddReport { report, trust } => {
                let id = report.report_id;
                self.client_keys
                    .insert((KeyScope::of(&report.author), report.client_key.clone()), id);
                self.reports.insert(id, report);
                self.trust.insert(id, trust);
                Applied::default()
            }
            Change::UpdateTrust { trust, deltas } => {
                let id = trust.report_id;
                let report = self.reports.get_mut(&id).expect("prepared against this state");
                let before = report.status;
                report.status = trust.status;
                let after = trust.status;
                self.trust.insert(id, trust);
                for d in deltas {
                    if let Some(user) = self.users.get_mut(&d.user_id) {
                        user.profile.adjust_reputation(d.delta);
                    }
                }
                let visibility = match (before.is_validated(), after.is_validated()) {
                    (false, true) => Some(Visibility::Entered(id)),
                    (true, false) => Some(Visibility::Left(id)),
                    _ => None,
                };
                Applied { visibility }
            }
        }
    }
}

impl DisplayNames for DerivedState {
    fn display_name(&self, user: &UserId) -> Option<&str> {
        self.profile(user).map(|p| p.display_name.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Category, GeoPoint, LocationSource, Role, ValidationStatus};
    use crate::trust::{Rating, Verdict, Vote, INITIAL_REPUTATION};
    use chrono::{DateTime, TimeZone, Utc};

    fn t() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2016, 12, 1, 0, 0, 0).unwrap()
    }

    struct Harness {
        state: DerivedState,
        log: Vec<Event>,
    }

    impl Harness {
        fn new() -> Self {
            Harness {
                state: DerivedState::new(),
                log: Vec::new(),
            }
        }

        fn push(&mut self, payload: EventPayload) -> Result<Applied, ApplyError> {
            let event = Event {
                seq: self.state.last_seq() + 1,
                server_time: t(),
                payload,
            };
            let applied = self.state.apply(&event)?;
            self.log.push(event);
            Ok(applied)
        }

        fn register(&mut self, name: &str, role: Role) -> UserId {
            let id = UserId(format!("u-{name}"));
            self.push(EventPayload::UserRegistered(UserRecord {
                profile: ReporterProfile {
                    user_id: id.clone(),
                    display_name: name.into(),
                    reputation: INITIAL_REPUTATION,
                    role,
                },
                credential_hash: String::new(),
            }))
            .unwrap();
            id
        }

        fn submit(&mut self, author: Option<&UserId>, key: &str) -> Result<ReportId, ApplyError> {
            let draft = ReportDraft {
                categories: [Category::Garbage].into(),
                location: GeoPoint::new(23.75, 90.37, LocationSource::Gps),
                text: "canal blocked".into(),
                attachment: None,
                anonymous: author.is_none(),
                client_key: key.into(),
                client_time: t(),
            };
            let report = Report::from_draft(self.state.next_report_id(), draft, author.cloned(), t());
            let weight = self.state.author_weight(&report.author)?;
            let id = report.report_id;
            self.push(EventPayload::ReportSubmitted {
                report,
                author_reputation_at_submit: weight,
            })?;
            Ok(id)
        }

        fn rate(&mut self, rater: &UserId, id: ReportId, vote: Vote) -> Result<Applied, ApplyError> {
            let rep = self.state.profile(rater).unwrap().reputation;
            self.push(EventPayload::RatingApplied(Rating {
                report_id: id,
                rater_id: rater.clone(),
                vote,
                rater_reputation_at_vote: rep,
                time: t(),
            }))
        }
    }

    #[test]
    fn empty_log_replays_to_empty_state() {
        assert_eq!(DerivedState::replay(&[]).unwrap(), DerivedState::new());
    }

    #[test]
    fn full_lifecycle_replays_identically() {
        let mut h = Harness::new();
        let author = h.register("Rahim", Role::Citizen);
        let raters: Vec<_> = ["A", "B", "C"].iter().map(|n| h.register(n, Role::Citizen)).collect();
        let admin = h.register("Boss", Role::Admin);
        let id = h.submit(Some(&author), "k1").unwrap();
        for r in &raters[..2] {
            h.rate(r, id, Vote::Support).unwrap();
        }
        let applied = h
            .push(EventPayload::CommunityValidated {
                report_id: id,
                threshold: 1.5,
            })
            .unwrap();
        assert_eq!(applied.visibility, Some(Visibility::Entered(id)));
        assert!((h.state.profile(&author).unwrap().reputation - 0.55).abs() < 1e-12);

        let applied = h
            .push(EventPayload::AdminVerdict {
                report_id: id,
                verdict: Verdict::Reject,
                admin_id: admin,
            })
            .unwrap();
        assert_eq!(applied.visibility, Some(Visibility::Left(id)));
        assert_eq!(h.state.report(id).unwrap().status.label(), "rejected");

        let replayed = DerivedState::replay(&h.log).unwrap();
        assert_eq!(replayed, h.state);
        assert_eq!(DerivedState::replay(&h.log).unwrap(), replayed);
    }

    #[test]
    fn client_keys_are_scoped_per_user() {
        let mut h = Harness::new();
        let a = h.register("A", Role::Citizen);
        let b = h.register("B", Role::Citizen);
        assert_eq!(h.state.lookup_client_key(&KeyScope::User(a.clone()), "k"), None);
        let ra = h.submit(Some(&a), "k").unwrap();
        let rb = h.submit(Some(&b), "k").unwrap();
        assert_ne!(ra, rb);
        assert_eq!(h.state.lookup_client_key(&KeyScope::User(a.clone()), "k"), Some(ra));
        assert_eq!(h.state.lookup_client_key(&KeyScope::User(b), "k"), Some(rb));
        assert_eq!(h.submit(Some(&a), "k"), Err(ApplyError::DuplicateClientKey));
        let anon = h.submit(None, "k").unwrap();
        assert_eq!(h.state.lookup_client_key(&KeyScope::Anonymous, "k"), Some(anon));
    }

    #[test]
    fn names_are_unique_case_insensitively() {
        let mut h = Harness::new();
        h.register("Rahim", Role::Citizen);
        let err = h
            .push(EventPayload::UserRegistered(UserRecord {
                profile: ReporterProfile {
                    user_id: UserId("other".into()),
                    display_name: "rahim".into(),
                    reputation: 0.5,
                    role: Role::Citizen,
                },
                credential_hash: String::new(),
            }))
            .unwrap_err();
        assert_eq!(err, ApplyError::NameTaken);
    }

    #[test]
    fn failed_prepare_leaves_state_untouched() {
        let mut h = Harness::new();
        let a = h.register("A", Role::Citizen);
        let id = h.submit(Some(&a), "k").unwrap();
        let before = h.state.clone();
        assert_eq!(
            h.rate(&a, id, Vote::Support),
            Err(ApplyError::Trust(TrustError::SelfRating))
        );
        assert_eq!(h.state, before);
    }

    #[test]
    fn validation_below_threshold_is_rejected_as_event() {
        let mut h = Harness::new();
        let a = h.register("A", Role::Citizen);
        let id = h.submit(Some(&a), "k").unwrap();
        assert_eq!(
            h.push(EventPayload::CommunityValidated {
                report_id: id,
                threshold: 1.5
            }),
            Err(ApplyError::BelowThreshold(1.5))
        );
        assert_eq!(h.state.report(id).unwrap().status, ValidationStatus::Pending);
    }

    #[test]
    fn tampered_reputation_is_detected_on_replay() {
        let mut h = Harness::new();
        let a = h.register("A", Role::Citizen);
        let b = h.register("B", Role::Citizen);
        let id = h.submit(Some(&a), "k").unwrap();
        h.rate(&b, id, Vote::Support).unwrap();
        let mut log = h.log.clone();
        if let EventPayload::RatingApplied(r) = &mut log[3].payload {
            r.rater_reputation_at_vote = 1.0;
        }
        match DerivedState::replay(&log) {
            Err(StoreError::CorruptLog { seq, .. }) => assert_eq!(seq, 4),
            other => panic!("expected corruption, got {other:?}"),
        }
    }

    #[test]
    fn seq_must_follow_on() {
        let state = DerivedState::new();
        let event = Event {
            seq: 2,
            server_time: t(),
            payload: EventPayload::CommunityValidated {
                report_id: ReportId(1),
                threshold: 1.0,
            },
        };
        assert!(matches!(state.prepare(&event), Err(ApplyError::SeqMismatch { .. })));
    }
}

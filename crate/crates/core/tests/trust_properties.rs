use std::collections::BTreeMap;

use chrono::{TimeZone, Utc};
use civicsense_core::model::{ReporterProfile, Role};
use civicsense_core::trust::{admin_verdict, apply_rating, evaluate, trust_score};
use civicsense_core::{Rating, ReportId, ReporterRef, TrustState, UserId, Verdict, Vote};
use proptest::prelude::*;

fn rating(rater: u32, vote: Vote, rep: f64) -> Rating {
    Rating {
        report_id: ReportId(1),
        rater_id: UserId(format!("r{rater:03}")),
        vote,
        rater_reputation_at_vote: rep,
        time: Utc.with_ymd_and_hms(2016, 12, 1, 0, 0, 0).unwrap(),
    }
}

prop_compose! {
    fn arb_state()(
        author_rep in 0.0f64..=1.0,
        votes in prop::collection::vec((0u32..50, any::<bool>(), 0.0f64..=1.0), 0..30),
    ) -> TrustState {
        let mut s = TrustState::new(ReportId(1), ReporterRef::Registered(UserId("author".into())), author_rep);
        for (rater, support, rep) in votes {
            let vote = if support { Vote::Support } else { Vote::Dispute };
            s = apply_rating(&s, rating(rater, vote, rep)).unwrap();
        }
        s
    }
}

fn scaled(state: &TrustState, c: f64) -> TrustState {
    let mut s = state.clone();
    s.author_reputation_at_submit *= c;
    for r in s.ratings.values_mut() {
        r.rater_reputation_at_vote *= c;
    }
    s.score = trust_score(&s);
    s
}

proptest! {
    #[test]
    fn new_support_never_lowers_and_new_dispute_never_raises(
        s in arb_state(),
        rep in 0.0f64..=1.0,
    ) {
        let before = trust_score(&s);
        let up = apply_rating(&s, rating(999, Vote::Support, rep)).unwrap();
        let down = apply_rating(&s, rating(999, Vote::Dispute, rep)).unwrap();
        prop_assert!(trust_score(&up) >= before);
        prop_assert!(trust_score(&down) <= before);
    }

    #[test]
    fn power_of_two_scaling_preserves_validation(
        s in arb_state(),
        tau in 0.0f64..3.0,
        k in -8i32..=8,
    ) {
        let c = 2f64.powi(k);
        let a = evaluate(&s, tau).unwrap().state.status;
        let b = evaluate(&scaled(&s, c), tau * c).unwrap().state.status;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn positive_scaling_preserves_validation_away_from_ties(
        s in arb_state(),
        tau in 0.0f64..3.0,
        c in 0.01f64..100.0,
    ) {
        // Outside a relative 1e-9 band around τ rounding cannot flip the outcome.
        prop_assume!((trust_score(&s) - tau).abs() > 1e-9 * (1.0 + tau.abs()));
        let a = evaluate(&s, tau).unwrap().state.status;
        let b = evaluate(&scaled(&s, c), tau * c).unwrap().state.status;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn reputations_stay_in_unit_interval(
        ops in prop::collection::vec((0usize..6, 0usize..6, any::<bool>(), 0u8..4), 1..200),
    ) {
        let mut profiles: BTreeMap<UserId, ReporterProfile> = (0..6)
            .map(|i| {
                let id = UserId(format!("r{i:03}"));
                (id.clone(), ReporterProfile { user_id: id, display_name: format!("p{i}"), reputation: 0.5, role: Role::Citizen })
            })
            .collect();
        let admin = ReporterProfile { user_id: UserId("admin".into()), display_name: "admin".into(), reputation: 0.5, role: Role::Admin };
        let mut states: Vec<TrustState> = Vec::new();
        for (author, rater, support, op) in ops {
            let author_id = UserId(format!("r{author:03}"));
            match op {
                0 => states.push(TrustState::new(ReportId(1), ReporterRef::Registered(author_id.clone()), profiles[&author_id].reputation)),
                1 if !states.is_empty() => {
                    let i = rater % states.len();
                    let vote = if support { Vote::Support } else { Vote::Dispute };
                    let rep = profiles[&UserId(format!("r{rater:03}"))].reputation;
                    if let Ok(next) = apply_rating(&states[i], rating(rater as u32, vote, rep)) {
                        states[i] = next;
                    }
                }
                2 if !states.is_empty() => {
                    let i = author % states.len();
                    if let Ok(t) = evaluate(&states[i], 1.0) {
                        for d in &t.deltas { profiles.get_mut(&d.user_id).unwrap().adjust_reputation(d.delta); }
                        states[i] = t.state;
                    }
                }
                3 if !states.is_empty() => {
                    let i = author % states.len();
                    let verdict = if support { Verdict::Confirm } else { Verdict::Reject };
                    let before = states[i].status;
                    if let Ok(t) = admin_verdict(&states[i], verdict, &admin) {
                        prop_assert!(before.may_become(t.state.status));
                        for d in &t.deltas { profiles.get_mut(&d.user_id).unwrap().adjust_reputation(d.delta); }
                        states[i] = t.state;
                    }
                }
                _ => {}
            }
            prop_assert!(profiles.values().all(|p| (0.0..=1.0).contains(&p.reputation)));
        }
    }
}

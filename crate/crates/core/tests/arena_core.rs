mod common;

use proptest::prelude::*;
use rwgrade_core::arena::{
    framework_vote, match_quality, match_rate, next_pair, update_ratings, ArenaCriterion, ArenaState, Choice, Command,
    ExpertJudgment, FrameworkVote, MatchRecord, Outcome, Rating, Side, Slot, TrueSkillParams,
};
use rwgrade_core::judge::{StubJudge, TaskId};
use rwgrade_core::pipeline::stub::{StubFeedback, StubGenerator, StubMode};
use rwgrade_core::pipeline::{run, IterationRecord, Participants, RunConfig};

const TOL: f64 = 1e-9;

fn r(mu: f64, sigma: f64) -> Rating {
    Rating { mu, sigma }
}

struct Vector {
    a: Rating,
    b: Rating,
    outcome: Outcome,
    want: [f64; 4],
    quality: f64,
}

// Reference values from an independent TrueSkill implementation with the
// default environment (mu 25, sigma 25/3, beta sigma/2, tau sigma/100, draw 0.1).
fn vectors() -> Vec<Vector> {
    let s0 = 25.0 / 3.0;
    vec![
        Vector {
            a: r(25.0, s0),
            b: r(25.0, s0),
            outcome: Outcome::AWins,
            want: [29.395831692991514, 7.17147580700922, 20.604168307008486, 7.17147580700922],
            quality: 0.4472135954999579,
        },
        Vector {
            a: r(25.0, s0),
            b: r(25.0, s0),
            outcome: Outcome::Draw,
            want: [25.0, 6.457515683245051, 25.0, 6.457515683245051],
            quality: 0.4472135954999579,
        },
        Vector {
            a: r(20.0, 4.0),
            b: r(32.0, 3.0),
            outcome: Outcome::AWins,
            want: [24.278335656365968, 3.5083901323915163, 29.592624144769346, 2.799292597732173],
            quality: 0.22838018954340125,
        },
        Vector {
            a: r(28.0, 5.5),
            b: r(22.0, 7.0),
            outcome: Outcome::Draw,
            want: [26.40988696052068, 4.715748246622963, 24.57549408299416, 5.2887385114211805],
            quality: 0.4713187554664118,
        },
        Vector {
            a: r(30.0, 1.5),
            b: r(18.0, 2.0),
            outcome: Outcome::AWins,
            want: [30.03117854564529, 1.4955403946421462, 17.944646089731286, 1.9856858781642583],
            quality: 0.15881022313258597,
        },
    ]
}

#[test]
fn trueskill_matches_reference_vectors() {
    let p = TrueSkillParams::default();
    for (i, v) in vectors().iter().enumerate() {
        let (a, b) = update_ratings(v.a, v.b, v.outcome, &p);
        let got = [a.mu, a.sigma, b.mu, b.sigma];
        for (g, w) in got.iter().zip(v.want) {
            assert!((g - w).abs() < TOL, "vector {i}: got {got:?}, want {:?}", v.want);
        }
        assert!((match_quality(v.a, v.b, &p) - v.quality).abs() < TOL, "vector {i} quality");
        // The mirrored game gives the mirrored result.
        let flipped = match v.outcome {
            Outcome::AWins => Outcome::BWins,
            o => o,
        };
        let (b2, a2) = update_ratings(v.b, v.a, flipped, &p);
        assert!((a2.mu - a.mu).abs() < TOL && (b2.sigma - b.sigma).abs() < TOL);
    }
}

fn rating() -> impl Strategy<Value = Rating> {
    (0.0f64..50.0, 0.5f64..9.0).prop_map(|(mu, sigma)| r(mu, sigma))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn winner_gains_loser_loses(a in rating(), b in rating(), draw in any::<bool>()) {
        let p = TrueSkillParams::default();
        let outcome = if draw { Outcome::Draw } else { Outcome::AWins };
        let (a2, b2) = update_ratings(a, b, outcome, &p);
        for x in [a2.mu, a2.sigma, b2.mu, b2.sigma] {
            prop_assert!(x.is_finite());
        }
        let cap = |s: f64| (s * s + p.tau * p.tau).sqrt() + 1e-12;
        prop_assert!(a2.sigma > 0.0 && a2.sigma <= cap(a.sigma));
        prop_assert!(b2.sigma > 0.0 && b2.sigma <= cap(b.sigma));
        if draw {
            // A draw pulls the two means towards each other.
            prop_assert!((a2.mu - b2.mu).abs() <= (a.mu - b.mu).abs() + 1e-9);
        } else {
            prop_assert!(a2.mu >= a.mu && b2.mu <= b.mu);
        }
        let q = match_quality(a, b, &p);
        prop_assert!(q > 0.0 && q <= 1.0);
        prop_assert!((q - match_quality(b, a, &p)).abs() < 1e-15);
    }
}

fn pool(entries: &[(&str, f64, f64)]) -> Vec<(String, Rating)> {
    entries.iter().map(|(n, mu, s)| (n.to_string(), r(*mu, *s))).collect()
}

fn met(a: &str, b: &str) -> MatchRecord {
    MatchRecord {
        session: "s".into(),
        iteration: 1,
        criterion: ArenaCriterion::Coherence,
        winner: a.into(),
        loser: b.into(),
        tie: false,
        timestamp: 0,
    }
}

#[test]
fn next_pair_prefers_closest_match() {
    let p = TrueSkillParams::default();
    let pl = pool(&[("c", 30.0, 2.0), ("a", 10.0, 2.0), ("b", 29.0, 2.0)]);
    assert_eq!(next_pair(&pl, &[], &p).unwrap(), ("b".into(), "c".into()));
}

#[test]
fn next_pair_breaks_ties_by_meetings_then_name() {
    let p = TrueSkillParams::default();
    let pl = pool(&[("x", 25.0, 8.0), ("y", 25.0, 8.0), ("z", 25.0, 8.0)]);
    assert_eq!(next_pair(&pl, &[], &p).unwrap(), ("x".into(), "y".into()));
    let history = [met("x", "y"), met("z", "x")];
    assert_eq!(next_pair(&pl, &history, &p).unwrap(), ("y".into(), "z".into()));
    assert!(next_pair(&pl[..1], &[], &p).is_err());
}

#[test]
fn state_ratings_follow_judgments() {
    let p = TrueSkillParams::default();
    let mut state = ArenaState::new(7, p);
    let mut seq = 0;
    let mut submit = |state: &mut ArenaState, cmd| {
        if let Some(kind) = state.plan(cmd).unwrap() {
            seq += 1;
            state.apply(&rwgrade_core::arena::Event { seq, at: 0, kind }).unwrap();
        }
    };
    submit(
        &mut state,
        Command::CreateSession {
            expert_id: "e".into(),
            paper_id: "p".into(),
            generator_a: "alpha".into(),
            generator_b: "beta".into(),
            iterations: Some(1),
        },
    );
    let id = state.sessions.keys().next().unwrap().clone();
    for slot in [Slot::Model1, Slot::Model2] {
        submit(
            &mut state,
            Command::PostDraft {
                session: id.clone(),
                iteration: 1,
                slot,
                text: "draft".into(),
            },
        );
    }
    submit(
        &mut state,
        Command::PostJudgment {
            session: id.clone(),
            iteration: 1,
            criterion: ArenaCriterion::Coherence,
            choice: Side::Model1,
        },
    );
    let winner = &state.sessions[&id].models[0];
    let board = state.leaderboard(Some(ArenaCriterion::Coherence));
    assert_eq!(&board[0].generator, winner);
    assert!((board[0].mu - 29.395831692991514).abs() < TOL);
    assert_eq!(state.matches.len(), 1);
    assert!(!state.matches[0].tie);
    // Other criteria are untouched.
    let pos = state.leaderboard(Some(ArenaCriterion::Positioning));
    assert!(pos.iter().all(|e| e.mu == 25.0 && e.matches == 0));
}

fn records(mode: StubMode, seed: u64, k: usize) -> Vec<IterationRecord> {
    let corpus = common::corpus();
    let gen = StubGenerator::new("g", mode, seed);
    let judge = StubJudge::new("yes").task_default(TaskId::PositioningType, "1").build();
    let who = Participants {
        generator: &gen,
        feedback: &StubFeedback,
        judge: &judge,
    };
    let cfg = RunConfig {
        iterations: k,
        intervention_iteration: k.min(3),
        ..RunConfig::default()
    };
    run(&corpus[1], who, &cfg).unwrap().iterations
}

#[test]
fn framework_vote_compares_ratios() {
    let mut a = records(StubMode::CiteAll, 1, 2);
    let mut b = a.clone();
    a[1].report.coherence.coherence_ratio = 0.9;
    b[1].report.coherence.coherence_ratio = 0.6;
    let v = framework_vote(&a, &b, ArenaCriterion::Coherence).unwrap();
    assert_eq!((v.choice, v.abstained), (Choice::A, false));
    assert_eq!(framework_vote(&b, &a, ArenaCriterion::Coherence).unwrap().choice, Choice::B);

    b[1].report.positioning.ratio.ratio = a[1].report.positioning.ratio.ratio;
    assert_eq!(framework_vote(&a, &b, ArenaCriterion::Positioning).unwrap().choice, Choice::Tie);
    b[1].report.positioning.ratio.ratio = a[1].report.positioning.ratio.ratio + 0.25;
    assert_eq!(framework_vote(&a, &b, ArenaCriterion::Positioning).unwrap().choice, Choice::B);

    assert!(framework_vote(&a, &b[..1], ArenaCriterion::Coherence).is_err());
    assert!(framework_vote(&a[..1], &b[..1], ArenaCriterion::FeedbackFollowing).is_err());
}

#[test]
fn feedback_following_counts_improvements() {
    let a = records(StubMode::CiteAll, 1, 3);
    let mut b = a.clone();
    // b worsens on two tracked criteria, improves on none.
    b[2].report.coherence.coherence_ratio -= 0.5;
    b[2].report.citation.missing_ratio += 0.25;
    let v = framework_vote(&a, &b, ArenaCriterion::FeedbackFollowing).unwrap();
    assert_eq!(v.choice, Choice::A);
    let mut c = a.clone();
    c[0].report.complete = false;
    assert!(framework_vote(&a, &c, ArenaCriterion::FeedbackFollowing).unwrap().abstained);
}

#[test]
fn match_rate_is_share_of_agreements() {
    let choices = [Choice::A, Choice::B, Choice::Tie];
    let mut expert = Vec::new();
    let mut framework = Vec::new();
    for i in 0..30 {
        let c = choices[i % 3];
        expert.push(ExpertJudgment {
            criterion: ArenaCriterion::Positioning,
            choice: c,
        });
        framework.push(FrameworkVote {
            criterion: ArenaCriterion::Positioning,
            // Seven disagreements.
            choice: if i < 7 { choices[(i + 1) % 3] } else { c },
            abstained: false,
        });
    }
    let rate = match_rate(&expert, &framework).unwrap()[&ArenaCriterion::Positioning];
    assert!((rate - 23.0 / 30.0).abs() < 1e-12);
}

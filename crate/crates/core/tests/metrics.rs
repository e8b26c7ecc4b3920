mod common;

use rwgrade_core::judge::prompts::{coherence_prompt, positioning_direct_prompt};
use rwgrade_core::judge::{StubJudge, TaskId};
use rwgrade_core::metrics::{coherence, positioning, verify_citations, PositioningStyle};
use rwgrade_core::pipeline::stub::{StubFeedback, StubGenerator};
use rwgrade_core::pipeline::{run, Criterion, Participants, RunConfig};
use rwgrade_core::reporting::aggregate;
use rwgrade_core::textops::segment;

fn coh(set: &rwgrade_core::corpus::CitationSet, sentence: &str, idx: u32) -> rwgrade_core::judge::prompts::RenderedPrompt {
    coherence_prompt(&set.cited[&idx].context(), sentence, idx)
}

#[test]
fn coherence_ratio_over_pairs() {
    let corpus = common::corpus();
    let set = &corpus[0];
    let last = "Our work combines subgraph retrieval with iterative reformulation [3, 4].";
    let judge = StubJudge::new("yes")
        .script(&coh(set, last, 4), ["yes", "no", "no"])
        .script(&coh(set, "Iterative retrievers instead reformulate the query at each hop [4].", 4), ["no"])
        .build();
    let r = coherence(&segment(&set.gold_related_work), &set.cited, &judge);
    // Six (sentence, citation) pairs, two rejected.
    assert_eq!(r.pairs.len(), 6);
    assert!((r.coherence_ratio - 4.0 / 6.0).abs() < 1e-12);
    assert!(!r.passes);
    assert_eq!(r.incoherent_sentences().len(), 2);
    let rejected = r.pairs.iter().find(|p| p.sentence == last && p.citation_index == 4).unwrap();
    assert_eq!(rejected.entailed, Some(false));
    assert!(rejected.confident);
}

#[test]
fn failed_pairs_leave_the_denominator() {
    let corpus = common::corpus();
    let set = &corpus[0];
    let judge = StubJudge::new("yes")
        .fail(&coh(set, "Late interaction keeps token-level vectors to improve accuracy [2].", 2))
        .script(&coh(set, "Multi-hop questions motivated graph-based retrieval [3].", 3), ["no"])
        .build();
    let r = coherence(&segment(&set.gold_related_work), &set.cited, &judge);
    assert_eq!(r.failures(), 1);
    assert!(!r.complete());
    assert!((r.coherence_ratio - 4.0 / 5.0).abs() < 1e-12);
}

#[test]
fn uncited_and_unknown_citations() {
    let corpus = common::corpus();
    let set = &corpus[0];
    let draft = segment("No citations here. Unknown paper [9].");
    let r = coherence(&draft, &set.cited, &StubJudge::new("yes").build());
    assert!(r.pairs.is_empty());
    assert_eq!(r.skipped, vec![(1, 9)]);
    assert_eq!(r.coherence_ratio, 0.0);
    assert!(!r.passes);

    let v = verify_citations(&draft, &set.indices()).unwrap();
    assert_eq!(v.missing_ratio, 1.0);
    assert_eq!(v.hallucination_ratio, 1.0);
    assert!(!v.passes());
}

#[test]
fn positioning_ratio_against_expected_style() {
    let corpus = common::corpus();
    let set = &corpus[0];
    let doc = segment(&set.gold_related_work);
    let first = doc.paragraphs[0].text.clone();
    let judge = StubJudge::new("yes")
        .task_default(TaskId::PositioningType, "2")
        .script(&positioning_direct_prompt(&first), ["no"])
        .build();
    let r = positioning(&doc, PositioningStyle::PerParagraph, &judge).unwrap();
    assert!(r.exists);
    assert_eq!(r.detected_type, PositioningStyle::FinalParagraph);
    assert!(!r.type_match);
    assert_eq!(r.ratio.style, PositioningStyle::PerParagraph);
    assert_eq!(r.ratio.ratio, 0.5);

    let r = positioning(&doc, PositioningStyle::FinalParagraph, &judge).unwrap();
    assert!(r.type_match);
    assert_eq!(r.ratio.checks.len(), 1);
    assert_eq!(r.ratio.ratio, 1.0);

    let none = StubJudge::new("yes").task_default(TaskId::PositioningType, "3").build();
    let r = positioning(&doc, PositioningStyle::PerParagraph, &none).unwrap();
    assert!(!r.exists);
}

#[test]
fn aggregate_means_over_papers() {
    let corpus = common::corpus();
    let gen = StubGenerator::echo("echo", &corpus);
    let g = &corpus[0];
    let l = &corpus[2];
    let judge = StubJudge::new("yes")
        .task_default(TaskId::PositioningType, "1")
        .script(&coh(g, "Multi-hop questions motivated graph-based retrieval [3].", 3), ["no"])
        .script(&coh(g, "Iterative retrievers instead reformulate the query at each hop [4].", 4), ["no"])
        .script(&coh(l, "Self-training uses pseudo-labels from a teacher [2].", 2), ["no"])
        .build();
    let who = Participants {
        generator: &gen,
        feedback: &StubFeedback,
        judge: &judge,
    };
    let cfg = RunConfig {
        iterations: 2,
        intervention_iteration: 2,
        ..RunConfig::default()
    };
    let traces: Vec<_> = corpus.iter().map(|s| run(s, who, &cfg).unwrap()).collect();
    let table = aggregate(&traces).unwrap();
    let row = table.get("echo", Criterion::CoherenceRatio, 1).unwrap();
    let want = (4.0 / 6.0 + 1.0 + 4.0 / 5.0) / 3.0;
    assert!((row.mean - want).abs() < 1e-12, "{} vs {want}", row.mean);
    assert_eq!(row.std, None);
    let coh_pass = table.get("echo", Criterion::Coherence, 2).unwrap();
    assert!((coh_pass.mean - 1.0 / 3.0).abs() < 1e-12);
    assert_eq!(table.get("echo", Criterion::Emphasis, 1).unwrap().mean, 1.0);

    // Input order does not matter.
    let mut rev = traces.clone();
    rev.reverse();
    assert_eq!(aggregate(&rev).unwrap(), table);
    assert_eq!(table.standard_view().rows.len(), 8 * 2);
}

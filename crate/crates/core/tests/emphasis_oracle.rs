mod common;

use rwgrade_core::metrics::emphasis_profile;
use rwgrade_core::textops::segment;

#[test]
fn profile_matches_structural_oracle() {
    let mut rng = common::rng(20_240_601);
    for case_no in 0..200 {
        let case = common::oracle_case(&mut rng);
        let got = emphasis_profile(&segment(&case.text));
        assert_eq!(got.per_citation, case.expected, "case {case_no}:\n{}", case.text);
    }
}

#[test]
fn text_without_citations_has_empty_profile() {
    let p = emphasis_profile(&segment("One sentence. Another one.\n\nA second paragraph."));
    assert!(p.per_citation.is_empty());
    assert_eq!(p.total_tokens, 7);
}

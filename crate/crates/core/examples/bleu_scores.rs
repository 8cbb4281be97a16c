//! Sentence-level BLEU-2 on a few hand-checkable cases.
//!
//! `cargo run --example bleu_scores`

use vgan::eval::{bleu2, BleuReferences};

fn words(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

fn main() {
    let cases = [
        ("a b c", vec!["a b d", "b c"]),
        ("a a a", vec!["a b"]),
        ("a b", vec!["a b c d"]),
        ("the cat sat", vec!["the cat sat"]),
        ("x y", vec!["a b"]),
    ];
    for (cand, refs) in cases {
        let refs: Vec<Vec<&str>> = refs.into_iter().map(words).collect();
        let cand = words(cand);
        let table = BleuReferences::new(&refs);
        println!(
            "{:12} precisions {:?}  brevity {:.3}  BLEU-2 {:.4}",
            cand.join(" "),
            table.precisions(&cand),
            table.brevity_penalty(cand.len()),
            bleu2(&cand, &refs)
        );
    }
}

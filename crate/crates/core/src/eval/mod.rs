//! Sample-quality and likelihood metrics, and the end-to-end experiment driver.

mod bleu;
mod experiment;
mod nll;

pub use bleu::{avg_bleu2, bleu2, score_sentences, BleuReferences, BleuResult, BLEU_COUNTS};
pub use experiment::{oracle_vocab, run_experiment, Evaluator, ExperimentReport, OracleTask, Snapshot};
pub use nll::{nll_report, oracle_nll_of_samples, NllReport};

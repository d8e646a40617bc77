//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use lreq_core::config::{self, Corpus};
use lreq_core::Expr;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// The travel-agency corpus together with one of its programs.
pub fn travel(program: &str) -> (Corpus, Expr) {
    let c = config::load(&corpus_dir().join("besttravel/analysis.toml"), None).expect("corpus loads");
    let e = c.load_program(&corpus_dir().join("besttravel").join(program)).expect("program parses");
    (c, e)
}

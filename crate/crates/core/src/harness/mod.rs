//! Synthetic scenes, a ground-truth oracle network, micro-benchmarks and
//! backbone comparison tables.

mod bench;
mod compare;
mod oracle;
mod scene;

pub use bench::{bench, BenchEntry, BenchOp, BenchReport, BenchSuite};
pub use compare::{compare_archs, compare_row, CompareRow};
pub use oracle::{oracle_outputs, OracleGeometry, OracleModel, OracleOutputs, ATTENTION_SCORE, PEAK_SCORE};
pub use scene::{class_intensity, gen_scene, scene_corpus, RenderStyle, SceneObject, SceneSpec};

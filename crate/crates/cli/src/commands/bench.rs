use std::path::Path;

use anyhow::Result;
use hgdet::harness::{bench, BenchSuite};

use crate::io::{emit_json, read_json};

pub struct Overrides {
    pub ops: Option<Vec<String>>,
    pub sizes: Option<Vec<usize>>,
    pub repetitions: Option<usize>,
    pub channels: Option<usize>,
    pub seed: Option<u64>,
}

pub fn run(suite: Option<&Path>, o: Overrides, out: Option<&Path>) -> Result<()> {
    let mut s: BenchSuite = match suite {
        Some(p) => read_json(p)?,
        None => BenchSuite::default(),
    };
    if let Some(v) = o.ops {
        s.ops = v;
    }
    if let Some(v) = o.sizes {
        s.sizes = v;
    }
    if let Some(v) = o.repetitions {
        s.repetitions = v;
    }
    if let Some(v) = o.channels {
        s.channels = v;
    }
    if let Some(v) = o.seed {
        s.seed = v;
    }
    emit_json(&bench(&s)?, out)
}

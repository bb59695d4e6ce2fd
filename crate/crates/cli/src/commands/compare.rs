use std::path::Path;

use anyhow::{anyhow, Result};
use hgdet::arch::HourglassConfig;
use hgdet::harness::compare_archs;
use hgdet::tensor::parse_dims;

use crate::io::{emit_json, emit_text};

pub fn run(variants: &[String], classes: usize, input: &str, csv: bool, out: Option<&Path>) -> Result<()> {
    let dims = parse_dims(input)?;
    let graphs = variants
        .iter()
        .map(|v| {
            HourglassConfig::variant(v, classes)
                .map(|c| c.with_input(dims).build())
                .ok_or_else(|| anyhow!("unknown variant `{v}`"))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = compare_archs(&graphs)?;
    if !csv {
        return emit_json(&rows, out);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    emit_text(&String::from_utf8(w.into_inner()?)?, out)
}

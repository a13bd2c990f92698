//! Builds a concept file with the LLM pipeline.

use std::fmt::Write as _;
use std::time::Duration;

use albm::dss::{self, HttpTransport, LlmClient, LlmMode};
use albm::{AlbmError, Result};

use crate::config::RunConfig;

pub fn client(cfg: &RunConfig) -> Result<LlmClient> {
    let d = &cfg.dss;
    let mode: LlmMode = d.mode.parse()?;
    let client = match mode {
        LlmMode::Replay => LlmClient::replay(d.model.clone(), d.cache_dir.clone()),
        _ => LlmClient::with_transport(
            d.model.clone(),
            mode,
            d.cache_dir.clone(),
            Box::new(HttpTransport::new(d.http.clone())?),
        ),
    };
    Ok(client
        .retry_policy(d.retry)
        .parallelism(d.parallelism.max(1))
        .min_interval(Duration::from_millis(d.min_interval_ms)))
}

pub fn run(cfg: &RunConfig) -> Result<String> {
    let d = &cfg.dss;
    let mut problems = Vec::new();
    if d.classes.is_none() && d.concepts.is_none() {
        problems.push("pass --classes (class list) or --concepts (existing concept lists)".to_string());
    }
    for (name, path) in [("classes", &d.classes), ("concepts", &d.concepts)] {
        if let Some(p) = path {
            if !p.exists() {
                problems.push(format!("{name} file {} does not exist", p.display()));
            }
        }
    }
    if d.out.is_none() {
        problems.push("no output path: pass --out or set dss.out".into());
    }
    if let Err(AlbmError::Config(p)) = d.prompts.validate() {
        problems.extend(p);
    }
    if !problems.is_empty() {
        return Err(AlbmError::Config(problems));
    }

    let classes = d.classes.as_deref().map(dss::read_class_list).transpose()?;
    let client = client(cfg)?;
    let raw = match &d.concepts {
        Some(path) => dss::load_concept_file(path, classes.as_deref())?,
        None => dss::describe(classes.as_deref().unwrap_or_default(), &client, &d.prompts)?,
    };
    let out = dss::run(&raw, &client, &d.prompts, &d.pipeline)?;
    let path = d.out.as_ref().expect("checked above");
    out.table.save(path)?;

    let mut s = String::new();
    let names = out.table.attributes().names();
    writeln!(s, "{} classes, {} attributes: {}", out.table.num_classes(), names.len(), names.join(", ")).unwrap();
    writeln!(s, "summarized vocabulary: {}", out.summarized.join(", ")).unwrap();
    let merged: Vec<String> =
        out.merge_map.iter().filter(|(k, v)| k != v).map(|(k, v)| format!("{k} -> {v}")).collect();
    if !merged.is_empty() {
        writeln!(s, "merged: {}", merged.join(", ")).unwrap();
    }
    if !out.removed_nonvisual.is_empty() {
        writeln!(s, "removed as non-visual: {}", out.removed_nonvisual.join(", ")).unwrap();
    }
    if !out.removed_sparse.is_empty() {
        writeln!(s, "removed as sparse (r = {}%): {}", d.pipeline.r, out.removed_sparse.join(", ")).unwrap();
    }
    for w in &out.warnings {
        writeln!(s, "warning: {w}").unwrap();
    }
    writeln!(s, "wrote {}", path.display()).unwrap();
    Ok(s)
}

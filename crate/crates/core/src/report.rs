//! A methodology summary of a run: prompts, parameters, call counts and
//! analyst decisions, in Markdown.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::config::PipelineConfig;
use crate::error::Result;
use crate::prompts::Templates;
use crate::review::{ActionKind, ReviewDecision};
use crate::store::{CallOutcome, ManifestEvent, RunManifest};

pub fn methods_report(manifest: &RunManifest, templates: &Templates) -> Result<String> {
    let config = PipelineConfig::from_snapshot(&manifest.header.config)?;
    let mut out = String::new();
    let h = &manifest.header;
    let _ = writeln!(out, "# Run {}\n", h.run_id);
    let _ = writeln!(out, "Created {}.\n", h.created_at.to_rfc3339());

    out.push_str("## Parameters\n\n");
    let g = &config.gateway;
    let rows: Vec<(&str, String)> = vec![
        ("model", g.model_name.clone()),
        ("context limit (tokens)", g.context_limit.to_string()),
        ("tokenizer", g.tokenizer.to_string()),
        (
            "chunk size (tokens)",
            format!("{} to {}", config.chunking.chunk_min, config.chunking.chunk_max),
        ),
        ("coding temperature", "0".into()),
        ("code reduction", format!("{:?}, threshold {}", config.reduction_mode, config.reduction.threshold).to_lowercase()),
        ("themes per dimension", config.grouping.n_groups.to_string()),
        ("baseline grouping temperature", config.baseline_temperature.to_string()),
        ("variability runs", config.review.k.to_string()),
        ("variability temperature", config.review.temperature.to_string()),
        ("theme match threshold", config.review.match_threshold.to_string()),
        ("weak-theme threshold", config.review.keep_threshold.to_string()),
        ("persona temperature", config.persona.temperature.to_string()),
        ("persona theme pairing", config.persona.mode.to_string()),
        ("persona seed", config.seed.to_string()),
    ];
    out.push_str("| parameter | value |\n|---|---|\n");
    for (k, v) in rows {
        let _ = writeln!(out, "| {k} | {v} |");
    }

    out.push_str("\n## Model calls\n\n| purpose | calls | failed | retried |\n|---|---|---|---|\n");
    let mut counts: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    for call in manifest.model_calls() {
        let e = counts.entry(call.purpose.to_string()).or_default();
        e.0 += 1;
        if matches!(call.outcome, CallOutcome::Failed { .. }) {
            e.1 += 1;
        }
        if call.attempts > 1 {
            e.2 += 1;
        }
    }
    for (purpose, (n, failed, retried)) in &counts {
        let _ = writeln!(out, "| {purpose} | {n} | {failed} | {retried} |");
    }

    out.push_str("\n## Review decisions\n\n");
    let mut any = false;
    for entry in &manifest.entries {
        let ManifestEvent::Decision(rec) = &entry.event else { continue };
        any = true;
        let decision: ReviewDecision = serde_json::from_value(rec.decision.clone())
            .map_err(|e| crate::error::Error::schema("decision record", e))?;
        let count = |k: ActionKind| decision.actions.iter().filter(|a| a.action == k).count();
        let _ = writeln!(
            out,
            "- {} (by {}): {} kept, {} replaced, {} dropped.",
            rec.dimension,
            rec.decided_by,
            count(ActionKind::Keep),
            count(ActionKind::Replace),
            count(ActionKind::Drop)
        );
        for a in decision.actions.iter().filter(|a| a.action == ActionKind::Replace) {
            let _ = writeln!(
                out,
                "  - {} replaced by {}",
                a.baseline_theme_id.as_deref().unwrap_or("?"),
                a.replacement.as_deref().unwrap_or("?")
            );
        }
        if let Some(note) = Some(decision.analyst_note.as_str()).filter(|n| !n.is_empty()) {
            let _ = writeln!(out, "  - note: {note}");
        }
    }
    if !any {
        out.push_str("None recorded.\n");
    }

    out.push_str("\n## Persona theme selections\n\n");
    let mut sel_any = false;
    for entry in &manifest.entries {
        let ManifestEvent::Selection(rec) = &entry.event else { continue };
        sel_any = true;
        let _ = writeln!(out, "- by {}: `{}`", rec.decided_by, rec.selection);
    }
    if !sel_any {
        out.push_str("None recorded.\n");
    }

    out.push_str("\n## Prompts\n\n");
    let digests = h.config.get("template_digests").cloned().unwrap_or_default();
    let bodies = [
        ("code_challenges.txt", &templates.code_challenges),
        ("code_needs.txt", &templates.code_needs),
        ("group_themes.txt", &templates.group_themes),
        ("write_persona.txt", &templates.write_persona),
    ];
    for (name, body) in bodies {
        let digest = digests.get(name).and_then(|d| d.as_str()).unwrap_or("unknown");
        let current = crate::store::sha256_hex(body.as_bytes());
        let note = if current == digest { "" } else { " (differs from the template text below)" };
        let _ = writeln!(out, "### {name}\n\nsha256 `{digest}`{note}\n\n```text\n{}\n```\n", body.trim_end());
    }
    Ok(out)
}

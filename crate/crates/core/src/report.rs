//! Static HTML report: one section per topic with its exemplar, leading
//! member terms and top-ranked documents, plus the MaxMAP table when an
//! evaluation is available.

use std::collections::HashMap;
use std::fmt::Write;

use crate::evaluation::EvalReport;
use crate::scoring::ScoresRecord;
use crate::solver::ModelFile;

pub const REPORT_DOCS: usize = 30;
pub const REPORT_TERMS: usize = 15;

pub fn escape_html(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            _ => out.push(c),
        }
    }
    out
}

fn term_name(terms: &[String], id: usize) -> String {
    terms.get(id).cloned().unwrap_or_else(|| format!("#{id}"))
}

/// Renders the report. `terms` maps term ids to strings; topics follow the
/// order of `model.topics` (descending prior).
pub fn render_report(
    model: &ModelFile,
    terms: &[String],
    scores: &[ScoresRecord],
    eval: Option<&EvalReport>,
) -> String {
    let prior: HashMap<usize, f64> = model.q.iter().copied().collect();
    let by_topic: HashMap<usize, &ScoresRecord> = scores.iter().map(|s| (s.topic_id, s)).collect();
    let mut html = String::new();
    let h = &mut html;
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    h.push_str("<title>Topic report</title>\n<style>\n");
    h.push_str(
        "body{font-family:sans-serif;max-width:60em;margin:auto;padding:1em}\n\
         table{border-collapse:collapse}td,th{padding:2px 8px;text-align:left}\n\
         section{border-top:1px solid #ccc;margin-top:1.5em}\n\
         .num{text-align:right;font-family:monospace}\n",
    );
    h.push_str("</style>\n</head>\n<body>\n<h1>Topic report</h1>\n");
    let _ = writeln!(
        h,
        "<p>{} terms, {} topics, {} iterations{}.</p>",
        model.n,
        model.topics.len(),
        model.iterations,
        if model.converged { "" } else { " (not converged)" }
    );
    if let Some(ll) = model.loglik_trace.last() {
        let _ = writeln!(h, "<p>Final log-likelihood: <span class=\"num\">{ll:.10}</span></p>");
    }

    if let Some(ev) = eval {
        let _ = writeln!(
            h,
            "<h2 id=\"maxmap\">MaxMAP: {:.4}</h2>\n<p>Mean of the top {} of {} qualified labels.</p>",
            ev.maxmap, ev.n_used, ev.n_labels_qualified
        );
        h.push_str("<table>\n<tr><th>Label</th><th>Best topic</th><th>AP</th></tr>\n");
        for rec in &ev.labels {
            let _ = writeln!(
                h,
                "<tr><td>{}</td><td><a href=\"#topic-{}\">{}</a></td><td class=\"num\">{:.4}</td></tr>",
                escape_html(&rec.label),
                rec.best_topic,
                escape_html(&term_name(terms, rec.best_topic)),
                rec.ap
            );
        }
        h.push_str("</table>\n");
    }

    h.push_str("<h2>Topics</h2>\n<ol>\n");
    for t in &model.topics {
        let _ = writeln!(
            h,
            "<li><a href=\"#topic-{}\">{}</a></li>",
            t.exemplar_id,
            escape_html(&t.exemplar_term)
        );
    }
    h.push_str("</ol>\n");

    for t in &model.topics {
        let _ = writeln!(
            h,
            "<section id=\"topic-{}\">\n<h3>{}</h3>\n<p>Topic {} · prior <span class=\"num\">{:.6}</span> · {} member terms</p>",
            t.exemplar_id,
            escape_html(&t.exemplar_term),
            t.exemplar_id,
            prior.get(&t.exemplar_id).copied().unwrap_or(0.0),
            t.members.len()
        );
        h.push_str("<p><b>Topic terms:</b> ");
        let names: Vec<String> = t
            .members
            .iter()
            .take(REPORT_TERMS)
            .map(|&(i, r)| format!("{} ({:.3})", escape_html(&term_name(terms, i)), r))
            .collect();
        h.push_str(&names.join(", "));
        h.push_str("</p>\n");
        if let Some(rec) = by_topic.get(&t.exemplar_id) {
            h.push_str("<table>\n<tr><th>#</th><th>Document</th><th>Score</th></tr>\n");
            for (rank, (doc, score)) in rec.ranking.iter().take(REPORT_DOCS).enumerate() {
                let _ = writeln!(
                    h,
                    "<tr><td>{}</td><td>{}</td><td class=\"num\">{:.6}</td></tr>",
                    rank + 1,
                    escape_html(doc),
                    score
                );
            }
            h.push_str("</table>\n");
        }
        h.push_str("</section>\n");
    }
    h.push_str("</body>\n</html>\n");
    html
}

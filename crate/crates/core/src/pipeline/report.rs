//! Tab-separated tables and static SVG charts from run metrics.

use std::fmt::Write as _;
use std::path::Path;

use super::artifacts::{write_bytes, FileEntry};
use super::{MetricsSummary, PipelineError};
use crate::metrics::{BreakdownRow, Degeneracy};

/// One backend configuration's results.
#[derive(Debug, Clone)]
pub struct ReportRow {
    pub label: String,
    pub summary: MetricsSummary,
}

fn num(x: Option<f64>) -> String {
    x.map_or_else(|| "NA".to_owned(), |v| format!("{v:.4}"))
}

fn flag(d: Option<Degeneracy>) -> &'static str {
    match d {
        Some(Degeneracy::AllCorrect) => "all-correct",
        Some(Degeneracy::NoneCorrect) => "none-correct",
        None => "",
    }
}

fn tsv(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut out = header.join("\t");
    out.push('\n');
    for row in rows {
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out.into_bytes()
}

fn breakdown_rows(label: &str, rows: &[BreakdownRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                label.to_owned(),
                r.key.clone(),
                r.subset_size.to_string(),
                num(r.cc_subset),
                num(r.mean_s_b_subset),
                flag(r.degenerate).to_owned(),
            ]
        })
        .collect()
}

/// Writes every table and chart under `run_dir/dir`, or directly into
/// `run_dir` when `dir` is empty.
pub fn write_report(rows: &[ReportRow], run_dir: &Path, dir: &str) -> Result<Vec<FileEntry>, PipelineError> {
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let name = |f: &str| {
        if dir.is_empty() {
            f.to_owned()
        } else {
            format!("{dir}/{f}")
        }
    };

    files.push((
        name("consistency.tsv"),
        tsv(
            &[
                "backend",
                "rule",
                "normalization",
                "anchors",
                "excluded",
                "correct",
                "cc",
                "flag",
            ],
            rows.iter().map(|r| {
                let s = &r.summary;
                let c = s.consistency.as_ref();
                vec![
                    r.label.clone(),
                    serde_json::to_value(s.rule)
                        .unwrap()
                        .as_str()
                        .unwrap_or_default()
                        .to_owned(),
                    s.normalization.to_string(),
                    s.n_anchors.to_string(),
                    c.map_or(0, |c| c.excluded).to_string(),
                    c.map_or(0, |c| c.positives).to_string(),
                    num(c.map(|c| c.cc)),
                    flag(s.consistency_flag).to_owned(),
                ]
            }),
        ),
    ));
    files.push((
        name("performance.tsv"),
        tsv(
            &[
                "backend",
                "task_accuracy",
                "mean_s_b",
                "relation_mean_background",
                "ci95_low",
                "ci95_high",
            ],
            rows.iter().map(|r| {
                let s = &r.summary;
                let ci = s.relation_background.ci95;
                vec![
                    r.label.clone(),
                    format!("{:.4}", s.task_accuracy),
                    num(s.mean_s_b),
                    num(s.relation_background.mean),
                    num(ci.map(|c| c.0)),
                    num(ci.map(|c| c.1)),
                ]
            }),
        ),
    ));
    files.push((
        name("relation_background.tsv"),
        tsv(
            &["backend", "relation", "positives", "negatives", "balanced_accuracy"],
            rows.iter().flat_map(|r| {
                r.summary.relation_background.per_relation.iter().map(move |p| {
                    vec![
                        r.label.clone(),
                        p.relation.name().to_owned(),
                        p.tally.positive_total.to_string(),
                        p.tally.negative_total.to_string(),
                        num(p.balanced_acc),
                    ]
                })
            }),
        ),
    ));
    files.push((
        name("bias.tsv"),
        tsv(
            &[
                "backend",
                "scope",
                "positive_accuracy",
                "negative_accuracy",
                "positives",
                "negatives",
            ],
            rows.iter().map(|r| {
                let b = &r.summary.bias;
                vec![
                    r.label.clone(),
                    b.scope.clone(),
                    num(b.positive_acc_mean),
                    num(b.negative_acc_mean),
                    b.n_positive.to_string(),
                    b.n_negative.to_string(),
                ]
            }),
        ),
    ));
    let breakdown_header = ["backend", "key", "anchors", "cc", "mean_s_b", "flag"];
    files.push((
        name("breakdown_relation.tsv"),
        tsv(
            &breakdown_header,
            rows.iter()
                .flat_map(|r| breakdown_rows(&r.label, &r.summary.breakdown_relation)),
        ),
    ));
    files.push((
        name("breakdown_concept.tsv"),
        tsv(
            &breakdown_header,
            rows.iter()
                .flat_map(|r| breakdown_rows(&r.label, &r.summary.breakdown_concept)),
        ),
    ));

    let labels: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
    files.push((
        name("consistency.svg"),
        bar_chart(
            "Conceptual consistency",
            &labels,
            &[(
                "cc",
                rows.iter()
                    .map(|r| r.summary.consistency.as_ref().map(|c| c.cc))
                    .collect(),
            )],
        )
        .into_bytes(),
    ));
    files.push((
        name("performance.svg"),
        bar_chart(
            "Background and task performance",
            &labels,
            &[
                (
                    "background",
                    rows.iter().map(|r| r.summary.relation_background.mean).collect(),
                ),
                ("task", rows.iter().map(|r| Some(r.summary.task_accuracy)).collect()),
            ],
        )
        .into_bytes(),
    ));
    files.push((
        name("bias.svg"),
        bar_chart(
            "Accuracy on positive and negative facts",
            &labels,
            &[
                (
                    "positive",
                    rows.iter().map(|r| r.summary.bias.positive_acc_mean).collect(),
                ),
                (
                    "negative",
                    rows.iter().map(|r| r.summary.bias.negative_acc_mean).collect(),
                ),
            ],
        )
        .into_bytes(),
    ));
    if let Some(first) = rows.first() {
        for (file, title, data) in [
            (
                "breakdown_relation.svg",
                "Consistency by relation",
                &first.summary.breakdown_relation,
            ),
            (
                "breakdown_concept.svg",
                "Consistency by concept",
                &first.summary.breakdown_concept,
            ),
        ] {
            let keys: Vec<String> = data.iter().map(|r| r.key.clone()).collect();
            files.push((
                name(file),
                bar_chart(
                    &format!("{title} ({})", first.label),
                    &keys,
                    &[("cc", data.iter().map(|r| r.cc_subset).collect())],
                )
                .into_bytes(),
            ));
        }
    }

    files
        .into_iter()
        .map(|(path, bytes)| write_bytes(run_dir, &path, &bytes, u64::MAX))
        .collect()
}

const COLORS: [&str; 4] = ["#4c72b0", "#dd8452", "#55a868", "#c44e52"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Grouped bars on a fixed [0, 1] axis; missing values leave a gap.
pub fn bar_chart(title: &str, categories: &[String], series: &[(&str, Vec<Option<f64>>)]) -> String {
    let (left, top, plot_h, bottom) = (60.0, 40.0, 240.0, 120.0);
    let group_w = 24.0 * series.len().max(1) as f64 + 20.0;
    let plot_w = (group_w * categories.len().max(1) as f64).max(200.0);
    let width = left + plot_w + 140.0;
    let height = top + plot_h + bottom;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{left:.0}" y="20" font-size="14">{}</text>"#,
        escape(title)
    );
    for tick in 0..=4 {
        let v = tick as f64 / 4.0;
        let y = top + plot_h * (1.0 - v);
        let _ = writeln!(
            svg,
            r##"<line x1="{left:.0}" y1="{y:.1}" x2="{:.0}" y2="{y:.1}" stroke="#ddd"/><text x="{:.0}" y="{:.1}" text-anchor="end">{v:.2}</text>"##,
            left + plot_w,
            left - 6.0,
            y + 4.0
        );
    }
    for (ci, cat) in categories.iter().enumerate() {
        let gx = left + group_w * ci as f64 + 10.0;
        for (si, (_, values)) in series.iter().enumerate() {
            if let Some(v) = values.get(ci).copied().flatten() {
                let h = plot_h * v.clamp(0.0, 1.0);
                let _ = writeln!(
                    svg,
                    r#"<rect x="{:.1}" y="{:.1}" width="22" height="{h:.1}" fill="{}"><title>{}: {v:.4}</title></rect>"#,
                    gx + 24.0 * si as f64,
                    top + plot_h - h,
                    COLORS[si % COLORS.len()],
                    escape(cat)
                );
            }
        }
        let lx = gx + 12.0 * series.len() as f64;
        let ly = top + plot_h + 12.0;
        let _ = writeln!(
            svg,
            r#"<text x="{lx:.1}" y="{ly:.1}" text-anchor="end" transform="rotate(-45 {lx:.1} {ly:.1})">{}</text>"#,
            escape(cat)
        );
    }
    let _ = writeln!(
        svg,
        r##"<line x1="{left:.0}" y1="{top:.0}" x2="{left:.0}" y2="{:.0}" stroke="#333"/>"##,
        top + plot_h
    );
    for (si, (name, _)) in series.iter().enumerate() {
        let y = top + 16.0 * si as f64;
        let x = left + plot_w + 16.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{x:.0}" y="{y:.0}" width="10" height="10" fill="{}"/><text x="{:.0}" y="{:.0}">{}</text>"#,
            COLORS[si % COLORS.len()],
            x + 14.0,
            y + 9.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

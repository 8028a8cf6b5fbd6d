//! Relevance output records and their HTML / ANSI / JSON renderings.
//!
//! Cell colours follow a diverging blue-white-red scale on the display value:
//! 0.0 is `#0000FF`, 0.5 is `#FFFFFF`, 1.0 is `#FF0000`, linear per channel.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// One explained prefix, serialized as one JSON object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub case_id: String,
    pub prefix: Vec<String>,
    pub target_class: String,
    pub target_prob: f64,
    pub raw_relevance: Vec<f64>,
    pub display: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ground_truth: Option<String>,
}

pub fn display_color(d: f64) -> (u8, u8, u8) {
    let d = d.clamp(0.0, 1.0);
    let fade = |t: f64| (255.0 * (1.0 - t)).round() as u8;
    if d >= 0.5 {
        let t = (d - 0.5) / 0.5;
        (255, fade(t), fade(t))
    } else {
        let t = (0.5 - d) / 0.5;
        (fade(t), fade(t), 255)
    }
}

pub fn hex_color(d: f64) -> String {
    let (r, g, b) = display_color(d);
    format!("#{r:02X}{g:02X}{b:02X}")
}

fn escape_html(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One JSON object per line.
pub fn render_json(records: &[ExplanationRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

/// A table per case: one row per prefix length, one cell per input event,
/// then the predicted activity and the ground truth.
pub fn render_html(records: &[ExplanationRecord]) -> String {
    let mut out = String::from(
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>Activity relevance</title>\n\
         <style>table{border-collapse:collapse;margin:1em 0}td,th{border:1px solid #999;padding:4px 8px;\
         font-family:sans-serif;font-size:13px}</style>\n</head>\n<body>\n",
    );
    let width = records.iter().map(|r| r.prefix.len()).max().unwrap_or(0);
    let mut current: Option<&str> = None;
    for r in records {
        if current != Some(r.case_id.as_str()) {
            if current.is_some() {
                out.push_str("</table>\n");
            }
            current = Some(&r.case_id);
            let _ = writeln!(out, "<h3>{}</h3>\n<table>", escape_html(&r.case_id));
            out.push_str("<tr>");
            for t in 1..=width {
                let _ = write!(out, "<th>{t}</th>");
            }
            out.push_str("<th>prediction</th><th>ground truth</th></tr>\n");
        }
        out.push_str("<tr>");
        for ((label, &d), &raw) in r.prefix.iter().zip(&r.display).zip(&r.raw_relevance) {
            let _ = write!(
                out,
                "<td style=\"background:{}\" data-d=\"{d}\" data-r=\"{raw}\">{}</td>",
                hex_color(d),
                escape_html(label)
            );
        }
        for _ in r.prefix.len()..width {
            out.push_str("<td></td>");
        }
        let _ = writeln!(
            out,
            "<td data-p=\"{}\">{}</td><td>{}</td></tr>",
            r.target_prob,
            escape_html(&r.target_class),
            escape_html(r.ground_truth.as_deref().unwrap_or(""))
        );
    }
    if current.is_some() {
        out.push_str("</table>\n");
    }
    out.push_str("</body>\n</html>\n");
    out
}

/// 24-bit background colours for terminals.
pub fn render_ansi(records: &[ExplanationRecord]) -> String {
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for r in records {
        if current != Some(r.case_id.as_str()) {
            current = Some(&r.case_id);
            let _ = writeln!(out, "{}", r.case_id);
        }
        for (label, &d) in r.prefix.iter().zip(&r.display) {
            let (red, green, blue) = display_color(d);
            let _ = write!(
                out,
                "\x1b[48;2;{red};{green};{blue}m\x1b[30m {label} \x1b[0m"
            );
        }
        let _ = writeln!(
            out,
            "  -> {} ({:.3}){}",
            r.target_class,
            r.target_prob,
            r.ground_truth
                .as_ref()
                .map(|g| format!("  truth: {g}"))
                .unwrap_or_default()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_anchors() {
        assert_eq!(hex_color(0.5), "#FFFFFF");
        assert_eq!(hex_color(1.0), "#FF0000");
        assert_eq!(hex_color(0.0), "#0000FF");
        assert_eq!(display_color(0.75), (255, 128, 128));
        assert_eq!(display_color(0.25), (128, 128, 255));
    }

    fn record() -> ExplanationRecord {
        ExplanationRecord {
            case_id: "c<1>".into(),
            prefix: vec!["A".into(), "B".into()],
            target_class: "C".into(),
            target_prob: 0.9,
            raw_relevance: vec![2.0, -1.0],
            display: vec![1.0, 0.0],
            ground_truth: Some("C".into()),
        }
    }

    #[test]
    fn html_cells_carry_values() {
        let html = render_html(&[record()]);
        assert!(html.contains("<td style=\"background:#FF0000\" data-d=\"1\" data-r=\"2\">A</td>"));
        assert!(html.contains("<td style=\"background:#0000FF\" data-d=\"0\" data-r=\"-1\">B</td>"));
        assert!(html.contains("c&lt;1&gt;"));
    }

    #[test]
    fn json_lines_round_trip() {
        let text = render_json(&[record(), record()]);
        let parsed: Vec<ExplanationRecord> = text
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(parsed, vec![record(), record()]);
    }

    #[test]
    fn ansi_has_one_line_per_row_plus_header() {
        let text = render_ansi(&[record(), record()]);
        assert_eq!(text.lines().count(), 3);
    }
}

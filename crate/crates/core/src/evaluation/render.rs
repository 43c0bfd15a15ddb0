use std::fmt::Write as _;

use super::{weighted_f1, EvalReport};
use crate::error::{Error, Result};

pub const COLUMNS: [&str; 6] = [
    "SN precision",
    "SN recall",
    "SN f1-score",
    "SV precision",
    "SV recall",
    "SV f1-score",
];

/// Rendered comparison of named settings, in the order given.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub csv: String,
    pub text: String,
}

fn values(r: &EvalReport) -> [f64; 6] {
    [
        r.sn.precision,
        r.sn.recall,
        r.sn.f1,
        r.sv.precision,
        r.sv.recall,
        r.sv.f1,
    ]
}

/// Renders one row per setting with the six SN/SV columns at 4 decimals.
///
/// Both renderings start with a `#` line stating the evaluation level.
pub fn render_comparison(settings: &[(String, EvalReport)]) -> Comparison {
    let level = settings
        .first()
        .map(|(_, r)| r.level)
        .unwrap_or_default()
        .as_str();

    let mut csv = format!("# level: {level}\nsetting,{}\n", COLUMNS.join(","));
    for (name, r) in settings {
        let cells: Vec<String> = values(r).iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(csv, "{name},{}", cells.join(","));
    }

    let name_w = settings
        .iter()
        .map(|(n, _)| n.len())
        .max()
        .unwrap_or(0)
        .max("setting".len());
    let mut text = format!("# level: {level}\n{:<name_w$}", "setting");
    for c in COLUMNS {
        let _ = write!(text, "  {c:>12}");
    }
    text.push('\n');
    for (name, r) in settings {
        let _ = write!(text, "{name:<name_w$}");
        for v in values(r) {
            let _ = write!(text, "  {v:>12.4}");
        }
        text.push('\n');
    }
    Comparison { csv, text }
}

/// Reads back the (setting, six values) rows of a comparison CSV.
pub fn parse_comparison_csv(csv: &str) -> Result<Vec<(String, [f64; 6])>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in csv.lines().enumerate() {
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if !header_seen {
            if cells.len() != 7 || cells[1..] != COLUMNS {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "unexpected comparison header".into(),
                });
            }
            header_seen = true;
            continue;
        }
        if cells.len() != 7 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected 7 columns, found {}", cells.len()),
            });
        }
        let mut vals = [0.0; 6];
        for (v, c) in vals.iter_mut().zip(&cells[1..]) {
            *v = c.parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("not a number: {c:?}"),
            })?;
        }
        rows.push((cells[0].to_string(), vals));
    }
    Ok(rows)
}

/// Detailed per-tag report: one row per tag plus the weighted F1.
pub fn render_report_csv(report: &EvalReport) -> String {
    let mut out = format!(
        "# level: {}\ntag,precision,recall,f1,support,tp,fp,fn,precision_undefined\n",
        report.level.as_str()
    );
    for (name, m) in [("SN", &report.sn), ("SV", &report.sv)] {
        let _ = writeln!(
            out,
            "{name},{:.4},{:.4},{:.4},{},{},{},{},{}",
            m.precision, m.recall, m.f1, m.support, m.tp, m.fp, m.fn_, m.precision_undefined
        );
    }
    match weighted_f1(report) {
        Ok(w) => {
            let _ = writeln!(out, "weighted,,,{w:.4},{},,,,", report.sn.support + report.sv.support);
        }
        Err(_) => out.push_str("weighted,,,,0,,,,\n"),
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::TagMetrics;

    fn report(sn: (f64, f64, f64), sv: (f64, f64, f64)) -> EvalReport {
        let m = |(p, r, f): (f64, f64, f64)| TagMetrics {
            precision: p,
            recall: r,
            f1: f,
            ..Default::default()
        };
        EvalReport {
            sn: m(sn),
            sv: m(sv),
            ..Default::default()
        }
    }

    #[test]
    fn single_row_format() {
        let r = report((0.9582, 0.9808, 0.96938), (0.9818, 0.9848, 0.9833));
        let c = render_comparison(&[("BERT".to_string(), r)]);
        assert_eq!(
            c.csv,
            "# level: token\n\
             setting,SN precision,SN recall,SN f1-score,SV precision,SV recall,SV f1-score\n\
             BERT,0.9582,0.9808,0.9694,0.9818,0.9848,0.9833\n"
        );
        let lines: Vec<&str> = c.text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("BERT    "));
        assert!(lines[2].ends_with("0.9833"));
    }

    #[test]
    fn csv_round_trip_at_four_decimals() {
        let settings: Vec<(String, EvalReport)> = ["FT", "FT+SS", "FT+TL", "FT+TL+SS"]
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let x = 0.123456 * (i + 1) as f64;
                (n.to_string(), report((x, x / 2.0, x / 3.0), (1.0 - x, 0.5, 0.25)))
            })
            .collect();
        let parsed = parse_comparison_csv(&render_comparison(&settings).csv).unwrap();
        assert_eq!(parsed.len(), 4);
        for ((name, r), (pn, vals)) in settings.iter().zip(&parsed) {
            assert_eq!(name, pn);
            for (a, b) in values(r).iter().zip(vals) {
                assert!((a - b).abs() <= 5e-5 + 1e-12);
            }
        }
        assert_eq!(render_comparison(&settings), render_comparison(&settings));
    }

    #[test]
    fn report_csv_has_weighted_row() {
        let mut r = report((1.0, 1.0, 1.0), (0.5, 0.5, 0.5));
        r.sn.support = 1;
        r.sv.support = 1;
        let csv = render_report_csv(&r);
        assert!(csv.contains("weighted,,,0.7500,2"), "{csv}");
    }
}

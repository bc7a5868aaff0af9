use super::MetricsReport;

/// One line of the comparison table. Cells are kept as text so reference
/// figures print exactly as published; `None` renders as `-`.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub name: String,
    pub logloss: Option<String>,
    pub auc: Option<String>,
    pub f1: Option<String>,
}

impl TableRow {
    pub fn new(name: &str, logloss: Option<&str>, auc: Option<&str>, f1: Option<&str>) -> Self {
        Self {
            name: name.to_string(),
            logloss: logloss.map(String::from),
            auc: auc.map(String::from),
            f1: f1.map(String::from),
        }
    }

    /// A measured row with four decimals per figure.
    pub fn from_report(name: &str, r: &MetricsReport) -> Self {
        let f = |v: f64| format!("{v:.4}");
        Self {
            name: name.to_string(),
            logloss: Some(f(r.logloss)),
            auc: r.auc.map(f),
            f1: Some(f(r.f1)),
        }
    }
}

pub const HEADER: [&str; 4] = ["Model", "Log loss", "AUC", "F1 score"];

/// Published DFDC results used as static comparison lines.
pub fn reference_rows() -> Vec<TableRow> {
    vec![
        TableRow::new(
            "Proposed MTCNN-EfficientNetB5",
            Some("0.4278"),
            Some("0.9380"),
            Some("0.8682"),
        ),
        TableRow::new("EfficientNet-Vision Transformer", None, Some("0.951"), Some("0.88")),
        TableRow::new("Ensemble CNN", Some("0.464"), None, None),
    ]
}

/// Bordered plain-text table with a rule under the header and after every row.
pub fn comparison_table(rows: &[TableRow]) -> String {
    let cells: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            let c = |v: &Option<String>| v.clone().unwrap_or_else(|| "-".to_string());
            [r.name.clone(), c(&r.logloss), c(&r.auc), c(&r.f1)]
        })
        .collect();
    let mut widths = HEADER.map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let rule = {
        let mut s = String::from("+");
        for w in widths {
            s.push_str(&"-".repeat(w + 2));
            s.push('+');
        }
        s
    };
    let line = |row: [&str; 4]| {
        let mut s = String::from("|");
        for (c, w) in row.iter().zip(widths) {
            s.push_str(&format!(" {c:<w$} |"));
        }
        s
    };
    let mut out = vec![rule.clone(), line(HEADER), rule.clone()];
    for row in &cells {
        out.push(line([&row[0], &row[1], &row[2], &row[3]]));
        out.push(rule.clone());
    }
    out.join("\n") + "\n"
}

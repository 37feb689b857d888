//! Count metrics, per-image reports and exclusion ablations.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use crate::{Error, Result};

fn check_pairs(preds: &[f64], gts: &[f64]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::shape(preds.len(), gts.len()));
    }
    if preds.is_empty() {
        return Err(Error::Empty("count list"));
    }
    Ok(())
}

/// Mean absolute count error.
pub fn mae(preds: &[f64], gts: &[f64]) -> Result<f64> {
    check_pairs(preds, gts)?;
    let s: f64 = preds.iter().zip(gts).map(|(p, g)| libm::fabs(p - g)).sum();
    Ok(s / preds.len() as f64)
}

/// Root mean squared count error.
pub fn rmse(preds: &[f64], gts: &[f64]) -> Result<f64> {
    check_pairs(preds, gts)?;
    let s: f64 = preds.iter().zip(gts).map(|(p, g)| (p - g) * (p - g)).sum();
    Ok(libm::sqrt(s / preds.len() as f64))
}

/// One image's result. A failed row has no prediction and is left out of
/// every aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub id: String,
    pub gt: u64,
    pub pred: Option<f64>,
    pub failure: Option<String>,
}

impl EvalRow {
    pub fn new(id: impl Into<String>, gt: u64, pred: f64) -> Self {
        Self {
            id: id.into(),
            gt,
            pred: Some(pred),
            failure: None,
        }
    }

    pub fn failed(id: impl Into<String>, gt: u64, reason: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            gt,
            pred: None,
            failure: Some(reason.into()),
        }
    }

    pub fn abs_err(&self) -> Option<f64> {
        self.pred.map(|p| libm::fabs(p - self.gt as f64))
    }
}

/// MAE/RMSE over a row subset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub mae: f64,
    pub rmse: f64,
    /// Rows scored.
    pub n: usize,
}

/// Aggregates successful rows whose id is not in `excluded`.
pub fn aggregate(rows: &[EvalRow], excluded: &[String]) -> Result<Aggregate> {
    let skip: BTreeSet<&str> = excluded.iter().map(String::as_str).collect();
    let (preds, gts): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .filter(|r| !skip.contains(r.id.as_str()))
        .filter_map(|r| r.pred.map(|p| (p, r.gt as f64)))
        .unzip();
    Ok(Aggregate {
        mae: mae(&preds, &gts)?,
        rmse: rmse(&preds, &gts)?,
        n: preds.len(),
    })
}

/// Ids of the `k` successful rows with the largest absolute error; ties go
/// to the lexicographically smaller id.
pub fn top_k_by_error(rows: &[EvalRow], k: usize) -> Vec<String> {
    let mut scored: Vec<(&str, f64)> = rows.iter().filter_map(|r| r.abs_err().map(|e| (r.id.as_str(), e))).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    scored.into_iter().take(k).map(|(id, _)| id.to_string()).collect()
}

/// Which rows to drop for the reduced aggregate: explicit ids plus the
/// `top_k` worst remaining rows.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Exclusion {
    pub ids: Vec<String>,
    pub top_k: usize,
}

impl Exclusion {
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty() && self.top_k == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub split: String,
    /// Rows in id order.
    pub rows: Vec<EvalRow>,
    /// Aggregate over every successful row.
    pub all: Aggregate,
    /// Aggregate after exclusions; equals `all` when nothing is excluded.
    pub reduced: Aggregate,
    /// Excluded ids present in `rows`, in id order.
    pub excluded_ids: Vec<String>,
    /// Requested ids that matched no row.
    pub unknown_exclusions: Vec<String>,
}

impl EvalReport {
    pub fn build(split: impl Into<String>, mut rows: Vec<EvalRow>, exclusion: &Exclusion) -> Result<Self> {
        rows.sort_by(|a, b| a.id.cmp(&b.id));
        let known: BTreeSet<&str> = rows.iter().map(|r| r.id.as_str()).collect();
        let mut excluded: BTreeSet<String> = BTreeSet::new();
        let mut unknown = Vec::new();
        for id in &exclusion.ids {
            if known.contains(id.as_str()) {
                excluded.insert(id.clone());
            } else if !unknown.contains(id) {
                unknown.push(id.clone());
            }
        }
        if exclusion.top_k > 0 {
            let remaining: Vec<EvalRow> = rows.iter().filter(|r| !excluded.contains(&r.id)).cloned().collect();
            excluded.extend(top_k_by_error(&remaining, exclusion.top_k));
        }
        let excluded_ids: Vec<String> = excluded.into_iter().collect();
        let all = aggregate(&rows, &[])?;
        let reduced = aggregate(&rows, &excluded_ids)?;
        Ok(Self {
            split: split.into(),
            rows,
            all,
            reduced,
            excluded_ids,
            unknown_exclusions: unknown,
        })
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failure.is_some()).count()
    }
}

/// One labelled line of a comparison table.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub label: String,
    pub val: Option<Aggregate>,
    pub test: Option<Aggregate>,
}

impl TableRow {
    fn cells(&self) -> [Option<f64>; 4] {
        [
            self.val.map(|a| a.mae),
            self.val.map(|a| a.rmse),
            self.test.map(|a| a.mae),
            self.test.map(|a| a.rmse),
        ]
    }
}

/// Rows "Without exclusions" and "Excluding N images" from a validation
/// and/or test report.
pub fn exclusion_rows(val: Option<&EvalReport>, test: Option<&EvalReport>) -> Vec<TableRow> {
    let n = val
        .map(|r| r.excluded_ids.len())
        .into_iter()
        .chain(test.map(|r| r.excluded_ids.len()))
        .max()
        .unwrap_or(0);
    let noun = if n == 1 { "image" } else { "images" };
    alloc::vec![
        TableRow {
            label: "Without exclusions".into(),
            val: val.map(|r| r.all),
            test: test.map(|r| r.all),
        },
        TableRow {
            label: format!("Excluding {n} {noun}"),
            val: val.map(|r| r.reduced),
            test: test.map(|r| r.reduced),
        },
    ]
}

const HEADER: [&str; 4] = ["MAE", "RMSE", "MAE", "RMSE"];

/// Aligned text table: a label column, then validation and test MAE/RMSE
/// to two decimals. Missing values print as `-`.
pub fn render_table(rows: &[TableRow], first_column: &str) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
    let body: Vec<(String, [String; 4])> = rows.iter().map(|r| (r.label.clone(), r.cells().map(cell))).collect();
    let lw = body.iter().map(|b| b.0.chars().count()).chain([first_column.chars().count()]).max().unwrap_or(0);
    let cw = body.iter().flat_map(|b| b.1.iter().map(String::len)).chain([6]).max().unwrap_or(6);
    let group = 2 * cw + 3;
    let mut out = String::new();
    let rule = "-".repeat(lw + 3 + 2 * group + 3);
    let _ = writeln!(out, "{rule}");
    let _ = writeln!(out, "{:<lw$} | {:^group$} | {:^group$}", first_column, "Validation Set", "Test Set");
    let _ = writeln!(
        out,
        "{:<lw$} | {:>cw$}   {:>cw$} | {:>cw$}   {:>cw$}",
        "", HEADER[0], HEADER[1], HEADER[2], HEADER[3]
    );
    let _ = writeln!(out, "{rule}");
    for (label, c) in &body {
        let _ = writeln!(out, "{label:<lw$} | {:>cw$}   {:>cw$} | {:>cw$}   {:>cw$}", c[0], c[1], c[2], c[3]);
    }
    let _ = writeln!(out, "{rule}");
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Machine-readable sibling of [`render_table`] with full-precision values.
pub fn render_table_csv(rows: &[TableRow]) -> String {
    let mut out = String::from("label,val_mae,val_rmse,test_mae,test_rmse\n");
    for r in rows {
        out.push_str(&csv_field(&r.label));
        for v in r.cells() {
            out.push(',');
            if let Some(x) = v {
                let _ = write!(out, "{x}");
            }
        }
        out.push('\n');
    }
    out
}

/// A parsed line of [`render_table_csv`] output.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTableRow {
    pub label: String,
    /// `[val_mae, val_rmse, test_mae, test_rmse]`.
    pub values: [Option<f64>; 4],
}

fn split_csv_line(line: &str) -> Result<Vec<String>> {
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(ch) = chars.next() {
        match (ch, quoted) {
            ('"', true) if chars.peek() == Some(&'"') => {
                cur.push('"');
                chars.next();
            }
            ('"', true) => quoted = false,
            ('"', false) if cur.is_empty() => quoted = true,
            (',', false) => fields.push(core::mem::take(&mut cur)),
            (c, _) => cur.push(c),
        }
    }
    if quoted {
        return Err(Error::invalid(format!("unterminated quote in `{line}`")));
    }
    fields.push(cur);
    Ok(fields)
}

pub fn parse_table_csv(text: &str) -> Result<Vec<ParsedTableRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("label,val_mae,val_rmse,test_mae,test_rmse") => {}
        other => return Err(Error::invalid(format!("unexpected table header {other:?}"))),
    }
    let mut rows = Vec::new();
    for line in lines.filter(|l| !l.is_empty()) {
        let f = split_csv_line(line)?;
        if f.len() != 5 {
            return Err(Error::invalid(format!("expected 5 fields, got {} in `{line}`", f.len())));
        }
        let mut values = [None; 4];
        for (v, s) in values.iter_mut().zip(&f[1..]) {
            if !s.is_empty() {
                *v = Some(s.parse::<f64>().map_err(|e| Error::invalid(format!("bad number `{s}`: {e}")))?);
            }
        }
        rows.push(ParsedTableRow {
            label: f[0].clone(),
            values,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;

    #[test]
    fn hand_values() {
        assert_eq!(mae(&[3.0, 1.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[3.0, 1.0], &[1.0, 1.0]).unwrap(), libm::sqrt(2.0));
        assert_eq!(mae(&[2.0, 5.0], &[2.0, 5.0]).unwrap(), 0.0);
        assert!(mae(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn exclusion_of_worst_row() {
        let rows = alloc::vec![EvalRow::new("a", 10, 11.0), EvalRow::new("b", 10, 9.0), EvalRow::new("c", 0, 100.0)];
        let r = EvalReport::build(
            "val",
            rows,
            &Exclusion {
                ids: alloc::vec![],
                top_k: 1,
            },
        )
        .unwrap();
        assert_eq!(r.all.mae, 34.0);
        assert_eq!(r.all.rmse, libm::sqrt(10002.0 / 3.0));
        assert_eq!(r.reduced.mae, 1.0);
        assert_eq!(r.reduced.rmse, 1.0);
        assert_eq!(r.excluded_ids, alloc::vec!["c".to_string()]);
        assert_eq!(r.reduced.n, 2);
    }

    #[test]
    fn failed_rows_are_skipped_and_unknown_ids_reported() {
        let rows = alloc::vec![EvalRow::new("a", 3, 3.0), EvalRow::failed("b", 4, "boom")];
        let r = EvalReport::build(
            "test",
            rows,
            &Exclusion {
                ids: alloc::vec!["zz".into()],
                top_k: 0,
            },
        )
        .unwrap();
        assert_eq!(r.all.n, 1);
        assert_eq!(r.failures(), 1);
        assert_eq!(r.unknown_exclusions, alloc::vec!["zz".to_string()]);
    }

    #[test]
    fn csv_round_trip() {
        let mut rng = Rng::new(8);
        let rows: Vec<TableRow> = (0..5)
            .map(|i| TableRow {
                label: format!("run, \"{i}\""),
                val: Some(Aggregate {
                    mae: rng.uniform() * 100.0,
                    rmse: rng.uniform() * 1e3,
                    n: 3,
                }),
                test: (i % 2 == 0).then(|| Aggregate {
                    mae: rng.normal(),
                    rmse: 1.0 / 3.0,
                    n: 1,
                }),
            })
            .collect();
        let parsed = parse_table_csv(&render_table_csv(&rows)).unwrap();
        assert_eq!(parsed.len(), rows.len());
        for (p, r) in parsed.iter().zip(&rows) {
            assert_eq!(p.label, r.label);
            assert_eq!(p.values, r.cells());
        }
    }

    #[test]
    fn table_has_one_line_per_row() {
        let agg = Aggregate { mae: 19.11, rmse: 65.58, n: 1 };
        let rows = [TableRow {
            label: "Ours".into(),
            val: Some(agg),
            test: None,
        }];
        let t = render_table(&rows, "Method");
        assert!(t.contains("19.11") && t.contains("65.58"));
        assert_eq!(t.lines().filter(|l| l.starts_with("Ours")).count(), 1);
    }
}

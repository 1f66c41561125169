//! Report emission: every verb's result in CSV, JSON, or markdown.
//!
//! JSON output is an envelope `{"schema": <id>, "payload": ...}` whose
//! schema ids match the documents under `docs/schemas/`.  CSV and JSON
//! print floats in shortest round-trip form; markdown uses four decimals
//! and mirrors the published table layouts for eyeball diffing.

use std::fmt::Write as _;
use std::io::Write as _;

use serde::Serialize;

use maxlow::constants::ConstantsReport;
use maxlow::eigenbounds::BoundsTable;
use maxlow::Error;

use crate::validate::SuiteReport;
use crate::{CommonOpts, FormatArg};

/// One `kappa` verb row.
#[derive(Debug, Serialize)]
pub struct KappaRow {
    pub level: u32,
    pub h_max: f64,
    pub kappa: f64,
    /// Attained Rayleigh quotient (`kappa` is its certified square root).
    pub mu: f64,
    pub iterations: usize,
}

/// One `evp` verb row.
#[derive(Debug, Serialize)]
pub struct EvpRow {
    pub level: u32,
    pub h_max: f64,
    pub lambda: Vec<f64>,
}

fn write_out(o: &CommonOpts, text: &str) -> Result<(), Error> {
    match &o.out {
        Some(path) => std::fs::write(path, text).map_err(Error::from),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(Error::from)
        }
    }
}

fn json_envelope(schema: &str, payload: serde_json::Value) -> String {
    let doc = serde_json::json!({ "schema": schema, "payload": payload });
    let mut s = serde_json::to_string_pretty(&doc).expect("serializable value");
    s.push('\n');
    s
}

fn csv_text(header: &[String], rows: &[Vec<String>]) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io_err = |e: csv::Error| Error::Config(format!("csv serialization: {e}"));
    w.write_record(header).map_err(io_err)?;
    for row in rows {
        w.write_record(row).map_err(io_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv finalize: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Config(format!("csv not utf-8: {e}")))
}

/// Shortest round-trip float text (CSV cells).
fn f(v: f64) -> String {
    format!("{v}")
}

/// Four-decimal float text (markdown cells).
fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn md_table(header: &[String], rows: &[Vec<String>]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "| {} |", header.join(" | "));
    let _ = writeln!(s, "|{}|", header.iter().map(|_| " --- ").collect::<Vec<_>>().join("|"));
    for row in rows {
        let _ = writeln!(s, "| {} |", row.join(" | "));
    }
    s
}

/// Report fields in declaration order, with `c_ol` kept integral.
fn constants_fields(r: &ConstantsReport) -> Vec<(&'static str, f64)> {
    vec![
        ("h_max", r.h_max),
        ("tilde_c", r.tilde_c),
        ("tilde_c_ht", r.tilde_c_ht),
        ("c1", r.c1),
        ("c_qt", r.c_qt),
        ("c_s", r.c_s),
        ("c_m", r.c_m),
        ("c_m1", r.c_m1),
        ("c1_curl", r.c1_curl),
        ("c2_curl", r.c2_curl),
        ("c2_curl_alt", r.c2_curl_alt),
        ("c1_div", r.c1_div),
        ("c2_div", r.c2_div),
        ("c_ol", r.c_ol as f64),
        ("c_rd", r.c_rd),
    ]
}

pub fn emit_constants(
    o: &CommonOpts,
    source: &str,
    entries: &[(u32, ConstantsReport)],
) -> Result<(), Error> {
    let text = match o.format {
        FormatArg::Json => {
            let levels: Vec<serde_json::Value> = entries
                .iter()
                .map(|(lv, r)| serde_json::json!({ "level": lv, "report": r }))
                .collect();
            json_envelope(
                "maxlow.constants.v1",
                serde_json::json!({ "source": source, "levels": levels }),
            )
        }
        FormatArg::Csv => {
            let header = vec!["level".into(), "constant".into(), "value".into()];
            let mut rows = Vec::new();
            for (lv, r) in entries {
                for (name, v) in constants_fields(r) {
                    rows.push(vec![lv.to_string(), name.into(), f(v)]);
                }
            }
            csv_text(&header, &rows)?
        }
        FormatArg::Md => {
            let mut header = vec!["constant".to_string()];
            header.extend(entries.iter().map(|(lv, _)| format!("level {lv}")));
            let names: Vec<&str> = constants_fields(&entries[0].1)
                .iter()
                .map(|(n, _)| *n)
                .collect();
            let mut rows = Vec::new();
            for (i, name) in names.iter().enumerate() {
                let mut row = vec![name.to_string()];
                for (_, r) in entries {
                    let v = constants_fields(r)[i].1;
                    row.push(if *name == "c_ol" { format!("{}", v as i64) } else { f4(v) });
                }
                rows.push(row);
            }
            format!("## Constants — {source}\n\n{}", md_table(&header, &rows))
        }
    };
    write_out(o, &text)
}

pub fn emit_kappa(o: &CommonOpts, source: &str, rows: &[KappaRow]) -> Result<(), Error> {
    let text = match o.format {
        FormatArg::Json => json_envelope(
            "maxlow.kappa.v1",
            serde_json::json!({ "source": source, "rows": rows }),
        ),
        FormatArg::Csv => {
            let header: Vec<String> = ["level", "h_max", "kappa", "mu", "iterations"]
                .map(String::from)
                .to_vec();
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.level.to_string(),
                        f(r.h_max),
                        f(r.kappa),
                        f(r.mu),
                        r.iterations.to_string(),
                    ]
                })
                .collect();
            csv_text(&header, &body)?
        }
        FormatArg::Md => {
            let header: Vec<String> =
                ["h/√2", "κ_h", "iterations"].map(String::from).to_vec();
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        f4(r.h_max / std::f64::consts::SQRT_2),
                        f4(r.kappa),
                        r.iterations.to_string(),
                    ]
                })
                .collect();
            format!("## Hypercircle constant — {source}\n\n{}", md_table(&header, &body))
        }
    };
    write_out(o, &text)
}

pub fn emit_evp(
    o: &CommonOpts,
    source: &str,
    k: usize,
    references: &[f64],
    rows: &[EvpRow],
) -> Result<(), Error> {
    let text = match o.format {
        FormatArg::Json => json_envelope(
            "maxlow.evp.v1",
            serde_json::json!({
                "source": source,
                "k": k,
                "references": references,
                "rows": rows,
            }),
        ),
        FormatArg::Csv => {
            let mut header = vec!["level".to_string(), "h_max".to_string()];
            header.extend((1..=k).map(|i| format!("lambda_{i}")));
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut row = vec![r.level.to_string(), f(r.h_max)];
                    row.extend(r.lambda.iter().map(|&v| f(v)));
                    row
                })
                .collect();
            csv_text(&header, &body)?
        }
        FormatArg::Md => {
            let mut header = vec!["h/√2".to_string()];
            header.extend((1..=k).map(|i| format!("λ_h^({i})")));
            let body: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut row = vec![f4(r.h_max / std::f64::consts::SQRT_2)];
                    row.extend(r.lambda.iter().map(|&v| f4(v)));
                    row
                })
                .collect();
            format!("## Discrete eigenvalues — {source}\n\n{}", md_table(&header, &body))
        }
    };
    write_out(o, &text)
}

pub fn emit_bounds(o: &CommonOpts, table: &BoundsTable) -> Result<(), Error> {
    let k = table.rows.iter().map(|r| r.lambda_h.len()).max().unwrap_or(0);
    let any_failed = table.rows.iter().any(|r| r.status != "ok");
    let any_timings = table.rows.iter().any(|r| r.timings.is_some());
    let text = match o.format {
        FormatArg::Json => json_envelope("maxlow.bounds.v1", serde_json::to_value(table)
            .map_err(|e| Error::Config(format!("serialize bounds table: {e}")))?),
        FormatArg::Csv => {
            let mut header: Vec<String> =
                ["level", "h_max", "h_over_sqrt2", "kappa", "kappa_iterations", "m_hat"]
                    .map(String::from)
                    .to_vec();
            header.extend((1..=k).map(|i| format!("lambda_{i}")));
            header.extend((1..=k).map(|i| format!("lower_bound_{i}")));
            header.push("status".into());
            if any_timings {
                header.extend(["kappa_s", "evp_s", "total_s"].map(String::from));
            }
            let body: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![
                        r.level.to_string(),
                        f(r.h_max),
                        f(r.h_over_sqrt2),
                        f(r.kappa),
                        r.kappa_iterations.to_string(),
                        f(r.m_hat),
                    ];
                    for i in 0..k {
                        row.push(r.lambda_h.get(i).map(|&v| f(v)).unwrap_or_default());
                    }
                    for i in 0..k {
                        row.push(r.lower_bounds.get(i).map(|&v| f(v)).unwrap_or_default());
                    }
                    row.push(r.status.clone());
                    if any_timings {
                        match &r.timings {
                            Some(t) => {
                                row.extend([f(t.kappa_s), f(t.evp_s), f(t.total_s)]);
                            }
                            None => row.extend([String::new(), String::new(), String::new()]),
                        }
                    }
                    row
                })
                .collect();
            csv_text(&header, &body)?
        }
        FormatArg::Md => {
            let mut header = vec!["h/√2".to_string(), "κ_h".to_string(), "M̂_h".to_string()];
            header.extend((1..=k).map(|i| format!("λ_h^({i})")));
            header.extend((1..=k).map(|i| format!("lower bound^({i})")));
            if any_failed {
                header.push("status".into());
            }
            let body: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![f4(r.h_over_sqrt2), f4(r.kappa), f4(r.m_hat)];
                    for i in 0..k {
                        row.push(r.lambda_h.get(i).map(|&v| f4(v)).unwrap_or_default());
                    }
                    for i in 0..k {
                        row.push(r.lower_bounds.get(i).map(|&v| f4(v)).unwrap_or_default());
                    }
                    if any_failed {
                        row.push(r.status.clone());
                    }
                    row
                })
                .collect();
            format!(
                "## Lower bounds — {}\n\nĈ = {:.4}, C_1div = {:.4} ({}), constants from {}.\n\n{}",
                table.domain,
                table.c_hat,
                table.c1_div_used,
                match table.c1_div_used == table.constants.c1_div {
                    true => "formula",
                    false => "override",
                },
                table.constants_source,
                md_table(&header, &body)
            )
        }
    };
    write_out(o, &text)
}

pub fn emit_validate(o: &CommonOpts, source: &str, report: &SuiteReport) -> Result<(), Error> {
    let text = match o.format {
        FormatArg::Json => json_envelope(
            "maxlow.validate.v1",
            serde_json::json!({ "source": source, "report": report }),
        ),
        FormatArg::Csv => {
            let header: Vec<String> =
                ["property", "passed", "measured", "threshold", "detail"]
                    .map(String::from)
                    .to_vec();
            let body: Vec<Vec<String>> = report
                .properties
                .iter()
                .map(|p| {
                    vec![
                        p.name.clone(),
                        p.passed.to_string(),
                        f(p.measured),
                        f(p.threshold),
                        p.detail.clone(),
                    ]
                })
                .collect();
            csv_text(&header, &body)?
        }
        FormatArg::Md => {
            let header: Vec<String> =
                ["property", "measured", "threshold", "status"].map(String::from).to_vec();
            let body: Vec<Vec<String>> = report
                .properties
                .iter()
                .map(|p| {
                    vec![
                        p.name.clone(),
                        format!("{:.3e}", p.measured),
                        format!("{:.3e}", p.threshold),
                        if p.passed { "pass".into() } else { "FAIL".into() },
                    ]
                })
                .collect();
            format!(
                "## Self-check — {source}\n\noverall: {}\n\n{}",
                if report.passed { "pass" } else { "FAIL" },
                md_table(&header, &body)
            )
        }
    };
    write_out(o, &text)
}

//! File formats: NDJSON chains, CSV traceplots and distance tables, and a
//! static SVG traceplot.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::diagnostics::TraceRow;
use crate::distance::PairwiseDistanceMatrix;
use crate::error::{Error, Result};
use crate::state::{Chain, DrawState};

#[derive(Serialize)]
struct RecordOut<'a> {
    chain: usize,
    iter: usize,
    state: &'a DrawState,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordIn {
    chain: usize,
    iter: usize,
    state: DrawState,
}

/// One JSON object per draw: `{"chain": c, "iter": j, "state": {...}}`.
pub fn write_ndjson<W: Write>(mut w: W, chains: &[Chain]) -> Result<()> {
    for chain in chains {
        for (iter, state) in chain.draws.iter().enumerate() {
            let line = serde_json::to_string(&RecordOut {
                chain: chain.chain_id,
                iter,
                state,
            })
            .map_err(|e| Error::Io(e.to_string()))?;
            w.write_all(line.as_bytes())?;
            w.write_all(b"\n")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads NDJSON chains. Lines of different chains may interleave, but within
/// a chain iterations must run 0, 1, 2, ... in file order. Chains come back
/// sorted by id. Blank lines are skipped.
pub fn read_ndjson<R: BufRead>(r: R) -> Result<Vec<Chain>> {
    let mut chains: BTreeMap<usize, Vec<DrawState>> = BTreeMap::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordIn = serde_json::from_str(&line).map_err(|e| Error::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        let draws = chains.entry(rec.chain).or_default();
        if rec.iter != draws.len() {
            return Err(Error::Format {
                line: line_no,
                message: format!(
                    "chain {} expected iteration {}, found {}",
                    rec.chain,
                    draws.len(),
                    rec.iter
                ),
            });
        }
        draws.push(rec.state);
    }
    if chains.is_empty() {
        return Err(Error::EmptyInput("no draws in chain file".into()));
    }
    Ok(chains.into_iter().map(|(id, draws)| Chain::new(id, draws)).collect())
}

/// `chain,iter,value` with shortest round-trip float formatting.
pub fn write_trace_csv<W: Write>(mut w: W, rows: &[TraceRow]) -> Result<()> {
    let mut buf = String::with_capacity(24 * rows.len() + 16);
    buf.push_str("chain,iter,value\n");
    for r in rows {
        let _ = writeln!(buf, "{},{},{}", r.chain, r.iter, r.value);
    }
    w.write_all(buf.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv<R: BufRead>(r: R) -> Result<Vec<TraceRow>> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "chain,iter,value" => {}
        Some(Err(e)) => return Err(e.into()),
        _ => {
            return Err(Error::Format {
                line: 1,
                message: "expected header chain,iter,value".into(),
            })
        }
    }
    let mut rows = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Format {
            line: k + 2,
            message: m.to_string(),
        };
        let mut it = line.split(',');
        let (Some(c), Some(i), Some(v), None) = (it.next(), it.next(), it.next(), it.next()) else {
            return Err(bad("expected three fields"));
        };
        rows.push(TraceRow {
            chain: c.trim().parse().map_err(|_| bad("bad chain id"))?,
            iter: i.trim().parse().map_err(|_| bad("bad iteration"))?,
            value: v.trim().parse().map_err(|_| bad("bad value"))?,
        });
    }
    Ok(rows)
}

/// Reads an `i,j,distance` table over `n` pool states.
pub fn read_distance_table<R: BufRead>(r: R, n: usize) -> Result<PairwiseDistanceMatrix> {
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == "i,j,distance" => {}
        Some(Err(e)) => return Err(e.into()),
        _ => {
            return Err(Error::Format {
                line: 1,
                message: "expected header i,j,distance".into(),
            })
        }
    }
    let mut triples = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::Format {
            line: k + 2,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(bad("expected three fields"));
        }
        triples.push((
            f[0].parse().map_err(|_| bad("bad index i"))?,
            f[1].parse().map_err(|_| bad("bad index j"))?,
            f[2].parse().map_err(|_| bad("bad distance"))?,
        ));
    }
    PairwiseDistanceMatrix::from_triples(n, triples)
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() * step;
    (0..)
        .map(|i| first + i as f64 * step)
        .take_while(|t| *t <= hi + step * 1e-9)
        .collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.3}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Static traceplot: one polyline per chain on a fixed 960x540 canvas, with
/// axes, ticks and a legend. Output depends only on the rows and labels.
pub fn traceplot_svg(rows: &[TraceRow], title: &str, y_label: &str) -> String {
    let (w, h) = (960.0, 540.0);
    let (ml, mr, mt, mb) = (80.0, 130.0, 40.0, 60.0);
    let (pw, ph) = (w - ml - mr, h - mt - mb);

    let mut by_chain: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for r in rows {
        by_chain.entry(r.chain).or_default().push((r.iter, r.value));
    }
    let max_iter = rows.iter().map(|r| r.iter).max().unwrap_or(1).max(1) as f64;
    let (mut ylo, mut yhi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| {
        (a.min(r.value), b.max(r.value))
    });
    if !ylo.is_finite() {
        (ylo, yhi) = (0.0, 1.0);
    }
    if yhi - ylo < 1e-12 {
        ylo -= 0.5;
        yhi += 0.5;
    }
    let pad = 0.04 * (yhi - ylo);
    let (ylo, yhi) = (ylo - pad, yhi + pad);
    let sx = |i: f64| ml + pw * i / max_iter;
    let sy = |v: f64| mt + ph * (1.0 - (v - ylo) / (yhi - ylo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        ml + pw / 2.0,
        xml_escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for t in nice_ticks(0.0, max_iter, 8) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            mt + ph,
            mt + ph + 5.0,
            mt + ph + 19.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(ylo, yhi, 6) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{ml}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            ml - 5.0,
            ml - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">iteration</text>"#,
        ml + pw / 2.0,
        h - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.1}" text-anchor="middle" transform="rotate(-90 20 {:.1})">{}</text>"#,
        mt + ph / 2.0,
        mt + ph / 2.0,
        xml_escape(y_label)
    );
    for (k, (chain, pts)) in by_chain.iter().enumerate() {
        let colour = PALETTE[k % PALETTE.len()];
        let mut points = String::with_capacity(pts.len() * 16);
        for (i, v) in pts {
            let _ = write!(points, "{:.2},{:.2} ", sx(*i as f64), sy(*v));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1" stroke-opacity="0.85" points="{}"/>"#,
            points.trim_end()
        );
        let ly = mt + 10.0 + 18.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="3"/><text x="{:.1}" y="{:.1}">chain {chain}</text>"#,
            ml + pw + 15.0,
            ml + pw + 40.0,
            ml + pw + 46.0,
            ly + 4.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

//! CSV and Markdown rendering of calibration, scenario and coverage results.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coverage::{write_selections, CellCoverage, CoverageTable};
use crate::error::Result;
use crate::scenario::ScenarioResult;
use crate::tariff::CalibrationRow;

fn csv_string(build: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    build(&mut wtr)?;
    let bytes = wtr.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn money(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

pub fn calibration_csv(rows: &[CalibrationRow]) -> Result<String> {
    csv_string(|w| {
        w.write_record(["carrier", "target_usd", "achieved_usd", "base_fee_usd", "quoted_orders"])?;
        for r in rows {
            w.write_record([
                r.carrier.clone(),
                format!("{:.4}", r.target_usd),
                format!("{:.4}", r.achieved_usd),
                format!("{:.4}", r.base_fee_usd),
                r.quoted_orders.to_string(),
            ])?;
        }
        Ok(())
    })
}

/// Carrier rows by network columns with mean selection counts, then Dropped and Total rows.
pub fn scenario_csv(res: &ScenarioResult) -> Result<String> {
    csv_string(|w| {
        let mut header = vec!["carrier".to_string(), "avg_quote_usd".into(), "avg_selected_usd".into()];
        header.extend(res.networks.iter().cloned());
        header.push("deviation_pct".into());
        w.write_record(&header)?;
        for s in &res.summaries {
            let mut row = vec![s.carrier.clone(), money(s.avg_quote_usd), money(s.avg_selected_usd)];
            for n in &res.networks {
                row.push(res.cell(n, &s.carrier).map_or_else(String::new, |c| format!("{:.1}", c.mean)));
            }
            row.push(format!("{:.2}", s.deviation_pct));
            w.write_record(&row)?;
        }
        let mut row = vec!["dropped".to_string(), "-".into(), "-".into()];
        row.extend(res.networks.iter().map(|n| res.drops(n).map_or_else(String::new, |d| format!("{:.1}", d.mean))));
        row.push("-".into());
        w.write_record(&row)?;
        let mut row = vec!["total".to_string(), "-".into(), "-".into()];
        row.extend(res.networks.iter().map(|n| {
            let g = &res.generated[n];
            format!("{:.1}", g.iter().sum::<u64>() as f64 / g.len().max(1) as f64)
        }));
        row.push("-".into());
        w.write_record(&row)?;
        Ok(())
    })
}

/// Long-format per-replication counts: `replication,network,outcome,count`.
pub fn replications_csv(res: &ScenarioResult) -> Result<String> {
    csv_string(|w| {
        w.write_record(["replication", "network", "outcome", "count"])?;
        for r in 0..res.replications as usize {
            for n in &res.networks {
                for c in &res.carriers {
                    if let Some(cell) = res.cell(n, c) {
                        w.write_record([(r + 1).to_string(), n.clone(), c.clone(), cell.counts[r].to_string()])?;
                    }
                }
                if let Some(d) = res.drops(n) {
                    w.write_record([(r + 1).to_string(), n.clone(), "dropped".into(), d.counts[r].to_string()])?;
                }
                w.write_record([(r + 1).to_string(), n.clone(), "generated".into(), res.generated[n][r].to_string()])?;
            }
        }
        Ok(())
    })
}

pub fn deviation_csv(res: &ScenarioResult) -> Result<String> {
    csv_string(|w| {
        w.write_record(["replication", "network", "orders", "target_pct", "observed_pct", "rel_deviation_pct", "pass"])?;
        for (r, reports) in res.deviation_reports.iter().enumerate() {
            for d in reports {
                w.write_record([
                    (r + 1).to_string(),
                    d.network.clone(),
                    d.orders.to_string(),
                    format!("{:.2}", d.target_pct),
                    format!("{:.4}", d.observed_pct),
                    d.rel_deviation_pct.map_or_else(|| "undefined".into(), |v| format!("{v:.4}")),
                    d.pass.to_string(),
                ])?;
            }
        }
        Ok(())
    })
}

pub fn selections_csv(res: &ScenarioResult) -> Result<String> {
    let mut buf = Vec::new();
    write_selections(&mut buf, &res.selections)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

fn md_row(cells: &[String]) -> String {
    format!("| {} |\n", cells.join(" | "))
}

pub fn scenario_markdown(res: &ScenarioResult) -> String {
    let mut out = String::new();
    let title = if res.label.is_empty() {
        format!("Scenario {}", res.scenario_id)
    } else {
        format!("Scenario {}: {}", res.scenario_id, res.label)
    };
    let _ = writeln!(out, "## {title}\n");
    let _ = writeln!(
        out,
        "Master seed {}, {} replications. Counts are means over replications.\n",
        res.master_seed, res.replications
    );
    let mut header = vec!["Carriers".to_string(), "Average price per order".into()];
    header.extend(res.networks.iter().cloned());
    header.push("% of deviation".into());
    out.push_str(&md_row(&header));
    out.push_str(&md_row(&vec!["---".to_string(); header.len()]));
    for s in &res.summaries {
        let mut row = vec![s.carrier.clone(), s.avg_quote_usd.map_or("-".into(), |p| format!("{p:.2} USD"))];
        for n in &res.networks {
            row.push(res.cell(n, &s.carrier).map_or_else(String::new, |c| format!("{:.1}", c.mean)));
        }
        row.push(format!("{:.1}", s.deviation_pct));
        out.push_str(&md_row(&row));
    }
    let mut row = vec!["Dropped".to_string(), "-".into()];
    row.extend(res.networks.iter().map(|n| res.drops(n).map_or_else(String::new, |d| format!("{:.1}", d.mean))));
    row.push("-".into());
    out.push_str(&md_row(&row));
    let mut row = vec!["Total".to_string(), "-".into()];
    row.extend(res.networks.iter().map(|n| {
        let g = &res.generated[n];
        format!("{:.1}", g.iter().sum::<u64>() as f64 / g.len().max(1) as f64)
    }));
    row.push(String::new());
    out.push_str(&md_row(&row));

    if res.gate_failed {
        out.push_str("\n**Far-rural deviation gate failed** in at least one replication; see the deviation report.\n");
    }
    out
}

fn coverage_cell(c: &CellCoverage) -> String {
    match c {
        CellCoverage::Covered(p) => format!("{p:.2}"),
        CellCoverage::MissingReference => "missing_reference".into(),
        CellCoverage::Absent => "absent".into(),
    }
}

pub fn coverage_csv(t: &CoverageTable) -> Result<String> {
    csv_string(|w| {
        let mut header = vec!["carrier".to_string()];
        header.extend(t.networks.iter().cloned());
        w.write_record(&header)?;
        for (ci, c) in t.carriers.iter().enumerate() {
            let mut row = vec![c.clone()];
            row.extend(t.cells[ci].iter().map(coverage_cell));
            w.write_record(&row)?;
        }
        let mut row = vec!["average".to_string()];
        row.extend(t.averages.iter().map(|a| a.map_or_else(|| "absent".into(), |v| format!("{v:.2}"))));
        w.write_record(&row)?;
        Ok(())
    })
}

pub fn coverage_markdown(t: &CoverageTable) -> String {
    let mut out = String::new();
    let what = match t.zone_class {
        crate::network::ZoneClass::FarRural => "far rural",
        crate::network::ZoneClass::Domestic => "domestic",
    };
    let _ = writeln!(out, "## Coverage of reference orders, {what} zones\n");
    let mut header = vec!["Carriers".to_string()];
    header.extend(t.networks.iter().map(|n| format!("{n}, %")));
    out.push_str(&md_row(&header));
    out.push_str(&md_row(&vec!["---".to_string(); header.len()]));
    for (ci, c) in t.carriers.iter().enumerate() {
        let mut row = vec![c.clone()];
        row.extend(t.cells[ci].iter().map(coverage_cell));
        out.push_str(&md_row(&row));
    }
    let mut row = vec!["Average".to_string()];
    row.extend(t.averages.iter().map(|a| a.map_or_else(|| "absent".into(), |v| format!("{v:.2}"))));
    out.push_str(&md_row(&row));
    if !t.absent_networks.is_empty() {
        let _ = writeln!(out, "\nNot in reference: {}.", t.absent_networks.join(", "));
    }
    out
}

/// Record of one `simulate` invocation, written after every other output.
///
/// Holds no timings, so identical runs produce identical manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_id: String,
    pub tool_version: String,
    pub config_path: String,
    pub master_seed: u64,
    pub scenario_ids: Vec<String>,
    pub calibration_file: Option<String>,
    pub scenarios: Vec<ScenarioEntry>,
    pub failed_scenarios: Vec<FailedScenario>,
    pub deviation_gate_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub id: String,
    pub results_file: String,
    pub files: Vec<String>,
    pub dropped_total: u64,
    pub deviation_gate_failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedScenario {
    pub id: String,
    pub error: String,
}

impl RunManifest {
    /// Every file the run wrote, relative to the output directory.
    pub fn files(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.calibration_file.iter().map(String::as_str).collect();
        for s in &self.scenarios {
            out.extend(s.files.iter().map(String::as_str));
        }
        out
    }
}

/// FNV-1a over the given parts, as 16 hex digits.
pub fn fingerprint(parts: &[&[u8]]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in parts {
        for &b in p.iter().chain(std::iter::once(&0xff)) {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fingerprint_separates_parts() {
        assert_ne!(fingerprint(&[b"ab", b"c"]), fingerprint(&[b"a", b"bc"]));
        assert_eq!(fingerprint(&[b"x"]), fingerprint(&[b"x"]));
    }

    #[test]
    fn coverage_table_renders_markers() {
        let t = CoverageTable {
            zone_class: crate::network::ZoneClass::FarRural,
            networks: vec!["S1".into(), "R2".into()],
            carriers: vec!["fedex".into()],
            cells: vec![vec![CellCoverage::Covered(92.0), CellCoverage::Absent]],
            absent_networks: vec!["R2".into()],
            averages: vec![Some(92.0), None],
        };
        let csv = coverage_csv(&t).unwrap();
        assert_eq!(csv, "carrier,S1,R2\nfedex,92.00,absent\naverage,92.00,absent\n");
        let md = coverage_markdown(&t);
        assert!(md.contains("| fedex | 92.00 | absent |"));
        assert!(md.contains("Not in reference: R2."));
    }
}

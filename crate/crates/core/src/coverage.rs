//! Coverage of reference (completed) orders by simulated selections.
//!
//! For one zone class, each (carrier, network) cell compares simulated and
//! reference counts band by band:
//!
//! ```text
//! coverage = 100 * sum_b min(sim_b, ref_b) / sum_b ref_b
//! ```
//!
//! which is the per-band capped overlap weighted by reference counts.

use std::collections::{BTreeMap, BTreeSet};
use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::network::{CarrierId, NetworkId, ZoneClass};

/// Label of the weight band containing `weight_kg`, given upper band edges.
pub fn weight_band(weight_kg: f64, edges: &[f64]) -> String {
    if edges.is_empty() {
        return "all".to_string();
    }
    let mut lower = 0.0;
    for &e in edges {
        if weight_kg <= e {
            return format!("{lower}-{e}");
        }
        lower = e;
    }
    format!("{lower}+")
}

/// Simulated selections, in the same shape as reference rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCount {
    pub network: NetworkId,
    pub zone_class: ZoneClass,
    pub carrier: CarrierId,
    pub weight_band: String,
    pub count: f64,
}

/// Completed orders per (network, zone class, carrier, weight band).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceOrder {
    pub network: NetworkId,
    pub zone_class: ZoneClass,
    pub carrier: CarrierId,
    pub weight_band: String,
    pub count: u64,
}

impl From<&ReferenceOrder> for SelectionCount {
    fn from(r: &ReferenceOrder) -> Self {
        SelectionCount {
            network: r.network.clone(),
            zone_class: r.zone_class,
            carrier: r.carrier.clone(),
            weight_band: r.weight_band.clone(),
            count: r.count as f64,
        }
    }
}

fn csv_reader<R: io::Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

pub fn read_reference<R: io::Read>(r: R) -> Result<Vec<ReferenceOrder>> {
    let mut rows: Vec<ReferenceOrder> = Vec::new();
    let mut keys = BTreeSet::new();
    for row in csv_reader(r).deserialize() {
        let row: ReferenceOrder = row?;
        let key = (row.network.clone(), row.zone_class, row.carrier.clone(), row.weight_band.clone());
        if !keys.insert(key) {
            return Err(SimError::invalid(format!(
                "duplicate reference row for {} {} {} {}",
                row.network, row.zone_class, row.carrier, row.weight_band
            )));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_selections<R: io::Read>(r: R) -> Result<Vec<SelectionCount>> {
    let mut rows = Vec::new();
    for row in csv_reader(r).deserialize() {
        let row: SelectionCount = row?;
        if !(row.count.is_finite() && row.count >= 0.0) {
            return Err(SimError::invalid(format!("negative or non-finite count for {} {}", row.network, row.carrier)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_selections<W: io::Write>(w: W, rows: &[SelectionCount]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| SimError::io("<selections csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "pct", rename_all = "snake_case")]
pub enum CellCoverage {
    Covered(f64),
    /// Simulated selections exist but the reference has none for the cell.
    MissingReference,
    /// Neither side has the cell, or the network is absent from the reference.
    Absent,
}

impl CellCoverage {
    pub fn pct(&self) -> Option<f64> {
        match self {
            CellCoverage::Covered(p) => Some(*p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub zone_class: ZoneClass,
    pub networks: Vec<NetworkId>,
    pub carriers: Vec<CarrierId>,
    /// `cells[carrier][network]`, in `carriers` x `networks` order.
    pub cells: Vec<Vec<CellCoverage>>,
    /// Networks that appear in the simulation but not in the reference.
    pub absent_networks: Vec<NetworkId>,
    /// Arithmetic mean of covered cells per network.
    pub averages: Vec<Option<f64>>,
}

impl CoverageTable {
    pub fn get(&self, carrier: &str, network: &str) -> Option<&CellCoverage> {
        let c = self.carriers.iter().position(|x| x == carrier)?;
        let n = self.networks.iter().position(|x| x == network)?;
        Some(&self.cells[c][n])
    }

    pub fn average(&self, network: &str) -> Option<f64> {
        let n = self.networks.iter().position(|x| x == network)?;
        self.averages[n]
    }

    /// Cells reported as not covered because the reference lacks them.
    pub fn missing_reference(&self) -> Vec<(CarrierId, NetworkId)> {
        let mut out = Vec::new();
        for (ci, row) in self.cells.iter().enumerate() {
            for (ni, cell) in row.iter().enumerate() {
                if *cell == CellCoverage::MissingReference {
                    out.push((self.carriers[ci].clone(), self.networks[ni].clone()));
                }
            }
        }
        out
    }
}

fn push_unique(v: &mut Vec<String>, s: &str) {
    if !v.iter().any(|x| x == s) {
        v.push(s.to_string());
    }
}

/// Coverage table for one zone class.
pub fn coverage(
    simulated: &[SelectionCount],
    reference: &[ReferenceOrder],
    zone_class: ZoneClass,
) -> Result<CoverageTable> {
    let reference: Vec<&ReferenceOrder> = reference.iter().filter(|r| r.zone_class == zone_class).collect();
    if reference.is_empty() {
        return Err(SimError::EmptyReference(zone_class.to_string()));
    }
    let simulated: Vec<&SelectionCount> = simulated.iter().filter(|s| s.zone_class == zone_class).collect();

    let mut networks = Vec::new();
    let mut carriers = Vec::new();
    for r in &reference {
        push_unique(&mut networks, &r.network);
        push_unique(&mut carriers, &r.carrier);
    }
    let reference_networks = networks.clone();
    let mut absent_networks = Vec::new();
    for s in &simulated {
        if !reference_networks.contains(&s.network) {
            push_unique(&mut absent_networks, &s.network);
        }
        push_unique(&mut networks, &s.network);
        push_unique(&mut carriers, &s.carrier);
    }

    // (carrier, network) -> band -> (sim, ref)
    let mut bands: BTreeMap<(&str, &str), BTreeMap<&str, (f64, f64)>> = BTreeMap::new();
    for r in &reference {
        bands
            .entry((&r.carrier, &r.network))
            .or_default()
            .entry(&r.weight_band)
            .or_default()
            .1 += r.count as f64;
    }
    for s in &simulated {
        bands
            .entry((&s.carrier, &s.network))
            .or_default()
            .entry(&s.weight_band)
            .or_default()
            .0 += s.count;
    }

    let cells: Vec<Vec<CellCoverage>> = carriers
        .iter()
        .map(|c| {
            networks
                .iter()
                .map(|n| {
                    if !reference_networks.contains(n) {
                        return CellCoverage::Absent;
                    }
                    let Some(b) = bands.get(&(c.as_str(), n.as_str())) else {
                        return CellCoverage::Absent;
                    };
                    let ref_total: f64 = b.values().map(|v| v.1).sum();
                    let sim_total: f64 = b.values().map(|v| v.0).sum();
                    if ref_total == 0.0 {
                        return if sim_total > 0.0 {
                            CellCoverage::MissingReference
                        } else {
                            CellCoverage::Absent
                        };
                    }
                    let overlap: f64 = b.values().map(|(s, r)| s.min(*r)).sum();
                    CellCoverage::Covered(100.0 * overlap / ref_total)
                })
                .collect()
        })
        .collect();

    let averages = (0..networks.len())
        .map(|ni| {
            let vals: Vec<f64> = cells.iter().filter_map(|row| row[ni].pct()).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();

    Ok(CoverageTable {
        zone_class,
        networks,
        carriers,
        cells,
        absent_networks,
        averages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(network: &str, carrier: &str, band: &str, count: u64) -> ReferenceOrder {
        ReferenceOrder {
            network: network.into(),
            zone_class: ZoneClass::FarRural,
            carrier: carrier.into(),
            weight_band: band.into(),
            count,
        }
    }

    fn s(network: &str, carrier: &str, band: &str, count: f64) -> SelectionCount {
        SelectionCount {
            network: network.into(),
            zone_class: ZoneClass::FarRural,
            carrier: carrier.into(),
            weight_band: band.into(),
            count,
        }
    }

    #[test]
    fn bands_are_labelled() {
        assert_eq!(weight_band(12.0, &[]), "all");
        assert_eq!(weight_band(12.0, &[20.0, 40.0]), "0-20");
        assert_eq!(weight_band(20.0, &[20.0, 40.0]), "0-20");
        assert_eq!(weight_band(20.5, &[20.0, 40.0]), "20-40");
        assert_eq!(weight_band(55.0, &[20.0, 40.0]), "40+");
    }

    #[test]
    fn identity_is_full_coverage() {
        let reference = vec![r("S1", "fedex", "all", 10), r("S1", "vendor", "all", 3), r("R2", "fedex", "all", 7)];
        let sim: Vec<SelectionCount> = reference.iter().map(SelectionCount::from).collect();
        let t = coverage(&sim, &reference, ZoneClass::FarRural).unwrap();
        assert_eq!(t.get("fedex", "S1"), Some(&CellCoverage::Covered(100.0)));
        assert_eq!(t.average("S1"), Some(100.0));
        assert_eq!(t.average("R2"), Some(100.0));
    }

    #[test]
    fn zero_simulated_is_zero_coverage() {
        let t = coverage(&[], &[r("S1", "fedex", "all", 10)], ZoneClass::FarRural).unwrap();
        assert_eq!(t.get("fedex", "S1"), Some(&CellCoverage::Covered(0.0)));
    }

    #[test]
    fn column_average_is_arithmetic_mean() {
        let reference: Vec<_> = ["a", "b", "c", "d"].iter().map(|c| r("S1", c, "all", 100)).collect();
        let sim = vec![s("S1", "a", "all", 92.0), s("S1", "b", "all", 90.0), s("S1", "c", "all", 89.0), s("S1", "d", "all", 76.0)];
        let t = coverage(&sim, &reference, ZoneClass::FarRural).unwrap();
        assert!((t.average("S1").unwrap() - 86.75).abs() < 1e-12);
    }

    #[test]
    fn bands_weight_by_reference_counts() {
        let reference = vec![r("S1", "a", "lo", 30), r("S1", "a", "hi", 10)];
        let sim = vec![s("S1", "a", "lo", 15.0), s("S1", "a", "hi", 20.0)];
        let t = coverage(&sim, &reference, ZoneClass::FarRural).unwrap();
        // (15 + 10) / 40
        assert_eq!(t.get("a", "S1"), Some(&CellCoverage::Covered(62.5)));
    }

    #[test]
    fn missing_reference_is_flagged_not_fatal() {
        let reference = vec![r("S1", "a", "all", 10), r("S1", "b", "all", 0)];
        let sim = vec![s("S1", "a", "all", 10.0), s("S1", "b", "all", 4.0)];
        let t = coverage(&sim, &reference, ZoneClass::FarRural).unwrap();
        assert_eq!(t.get("b", "S1"), Some(&CellCoverage::MissingReference));
        assert_eq!(t.missing_reference(), vec![("b".to_string(), "S1".to_string())]);
        assert_eq!(t.average("S1"), Some(100.0));
    }

    #[test]
    fn absent_network_column() {
        let reference = vec![r("S1", "a", "all", 10)];
        let sim = vec![s("S1", "a", "all", 10.0), s("R2", "a", "all", 5.0)];
        let t = coverage(&sim, &reference, ZoneClass::FarRural).unwrap();
        assert_eq!(t.absent_networks, ["R2"]);
        assert_eq!(t.get("a", "R2"), Some(&CellCoverage::Absent));
        assert_eq!(t.average("R2"), None);
    }

    #[test]
    fn empty_reference_class_errors() {
        let err = coverage(&[], &[r("S1", "a", "all", 1)], ZoneClass::Domestic).unwrap_err();
        assert!(matches!(err, SimError::EmptyReference(_)));
    }

    #[test]
    fn duplicate_reference_keys_rejected() {
        let text = "network,zone_class,carrier,weight_band,count\nS1,far_rural,a,all,1\nS1,far_rural,a,all,2\n";
        assert!(read_reference(text.as_bytes()).is_err());
        let text = "network,zone_class,carrier,weight_band,count\nS1,far_rural,a,all,-1\n";
        assert!(read_reference(text.as_bytes()).is_err());
    }
}

//! Tabulation and export of study results as plot-ready CSV and JSON files.
//!
//! Money columns come in pairs: a fixed two-decimal column for reading and a
//! `_full` column with the shortest representation that parses back to the
//! exact `f64`. Every export also writes the whole bundle as `bundle.json`
//! and ends with `manifest.json` listing each file's SHA-256, so two exports
//! of the same bundle can be compared by hash.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::coalition::PlanningStudy;
use crate::stackelberg::{EquilibriumReport, FlatPoint, SensitivityParam, SensitivityPoint};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("the bundle has no {0} results")]
    MissingSection(Section),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv encoding failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json encoding failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// A group of output files that needs one kind of study result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Planning,
    Equilibrium,
    FlatSweep,
    InjectionSweep,
    VehicleCostSweep,
}

impl Section {
    pub const ALL: [Section; 5] = [
        Section::Planning,
        Section::Equilibrium,
        Section::FlatSweep,
        Section::InjectionSweep,
        Section::VehicleCostSweep,
    ];
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Section::Planning => "planning",
            Section::Equilibrium => "equilibrium",
            Section::FlatSweep => "flat-price sweep",
            Section::InjectionSweep => "injection-cap sweep",
            Section::VehicleCostSweep => "vehicle-cost sweep",
        })
    }
}

/// Everything one study produced, keyed to the scenario it came from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StudyBundle {
    pub scenario_name: String,
    /// SHA-256 of the canonical scenario file.
    pub scenario_fingerprint: String,
    /// Electricity tariff per period, for the processing figure.
    pub tariff: Vec<f64>,
    pub planning: Option<PlanningStudy>,
    pub equilibrium: Option<EquilibriumReport>,
    pub flat_sweep: Option<Vec<FlatPoint>>,
    #[serde(default)]
    pub sensitivity: Vec<SensitivityPoint>,
}

impl StudyBundle {
    fn sweep(&self, param: SensitivityParam) -> Vec<&SensitivityPoint> {
        self.sensitivity.iter().filter(|p| p.param == param).collect()
    }

    pub fn has(&self, section: Section) -> bool {
        match section {
            Section::Planning => self.planning.is_some(),
            Section::Equilibrium => self.equilibrium.is_some(),
            Section::FlatSweep => self.flat_sweep.as_ref().is_some_and(|v| !v.is_empty()),
            Section::InjectionSweep => !self.sweep(SensitivityParam::Qtrans).is_empty(),
            Section::VehicleCostSweep => !self.sweep(SensitivityParam::K3).is_empty(),
        }
    }

    pub fn available_sections(&self) -> Vec<Section> {
        Section::ALL.into_iter().filter(|s| self.has(*s)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the export directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub scenario_fingerprint: String,
    pub files: Vec<ManifestEntry>,
}

/// Two-decimal money, without a negative zero.
pub fn money(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

/// Shortest text that parses back to exactly `x`.
pub fn full(x: f64) -> String {
    format!("{x}")
}

fn join(values: impl IntoIterator<Item = String>) -> String {
    values.into_iter().collect::<Vec<_>>().join(";")
}

struct Writer {
    dir: PathBuf,
    files: Vec<ManifestEntry>,
}

impl Writer {
    fn put(&mut self, name: &str, bytes: Vec<u8>) -> Result<(), ReportError> {
        let path = self.dir.join(name);
        fs::write(&path, &bytes).map_err(|source| ReportError::Io { path, source })?;
        self.files.push(ManifestEntry {
            path: name.to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(&r)?;
        }
        let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
        self.put(name, bytes)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), ReportError> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.put(name, text.into_bytes())
    }
}

/// Writes the files of the requested sections into `dir` (created if
/// needed), then `manifest.json`. Fails before writing anything when a
/// requested section is absent from the bundle.
pub fn export_tables(bundle: &StudyBundle, dir: &Path, sections: &[Section]) -> Result<Manifest, ReportError> {
    if let Some(&s) = sections.iter().find(|s| !bundle.has(**s)) {
        return Err(ReportError::MissingSection(s));
    }
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut w = Writer {
        dir: dir.to_path_buf(),
        files: Vec::new(),
    };
    for s in Section::ALL.into_iter().filter(|s| sections.contains(s)) {
        match s {
            Section::Planning => write_planning(&mut w, bundle.planning.as_ref().expect("checked"))?,
            Section::Equilibrium => write_equilibrium(&mut w, bundle, bundle.equilibrium.as_ref().expect("checked"))?,
            Section::FlatSweep => write_flat(&mut w, bundle.flat_sweep.as_deref().expect("checked"))?,
            Section::InjectionSweep => write_injection_sweep(&mut w, &bundle.sweep(SensitivityParam::Qtrans))?,
            Section::VehicleCostSweep => write_vehicle_sweep(&mut w, &bundle.sweep(SensitivityParam::K3))?,
        }
    }
    w.json("bundle.json", bundle)?;
    let manifest = Manifest {
        scenario_fingerprint: bundle.scenario_fingerprint.clone(),
        files: w.files.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let path = dir.join("manifest.json");
    fs::write(&path, text).map_err(|source| ReportError::Io { path, source })?;
    Ok(manifest)
}

/// `table5.csv`: one `partition` row per partition (best hub), numbered in
/// enumeration order, then one `hub_detail` row per hub-annotated structure.
fn write_planning(w: &mut Writer, study: &PlanningStudy) -> Result<(), ReportError> {
    let header = [
        "number",
        "kind",
        "structure",
        "blocks",
        "block_values",
        "block_values_full",
        "total",
        "total_full",
        "stable",
        "cr_violations",
        "dominated_by",
    ];
    let row = |number: usize, kind: &str, idx: usize| -> Vec<String> {
        let v = &study.structures[idx];
        let verdict = &study.verdicts[idx];
        vec![
            number.to_string(),
            kind.to_string(),
            v.structure.label(),
            join(v.structure.blocks.iter().map(|b| b.to_string())),
            join(v.block_values.iter().map(|&x| money(x))),
            join(v.block_values.iter().map(|&x| full(x))),
            money(v.total),
            full(v.total),
            verdict.stable.to_string(),
            join(verdict.cr_violations.iter().cloned()),
            join(verdict.dominated_by.iter().map(|&d| study.structures[d].structure.label())),
        ]
    };
    let mut rows: Vec<Vec<String>> = study
        .best_per_partition
        .iter()
        .enumerate()
        .map(|(n, &idx)| row(n + 1, "partition", idx))
        .collect();
    rows.extend((0..study.structures.len()).map(|idx| row(idx + 1, "hub_detail", idx)));
    w.csv("table5.csv", &header, rows)?;

    let mut rows = Vec::new();
    for (v, imps) in study.structures.iter().zip(&study.imputations) {
        for (block, imp) in v.structure.blocks.iter().zip(imps) {
            for (&plant, &pay) in imp.players.iter().zip(&imp.payoffs) {
                let alone = study.characteristic.get(&[plant]).unwrap_or(f64::NAN);
                rows.push(vec![
                    v.structure.label(),
                    block.to_string(),
                    (plant + 1).to_string(),
                    money(pay),
                    full(pay),
                    money(alone),
                    full(alone),
                ]);
            }
        }
    }
    w.csv(
        "imputation.csv",
        &["structure", "block", "plant", "payoff", "payoff_full", "standalone", "standalone_full"],
        rows,
    )?;

    let rows = study
        .characteristic
        .entries()
        .map(|(k, v)| vec![k.to_string(), money(v), full(v)])
        .collect();
    w.csv("characteristic.csv", &["coalition", "value", "value_full"], rows)?;
    w.json("planning.json", study)
}

fn write_equilibrium(w: &mut Writer, bundle: &StudyBundle, eq: &EquilibriumReport) -> Result<(), ReportError> {
    let plants: Vec<usize> = eq.schedules.iter().map(|s| s.plan.plant + 1).collect();
    let prices = eq.best_prices.as_slice();

    let mut header = vec!["period".to_string(), "price".into(), "price_full".into()];
    header.extend(plants.iter().map(|i| format!("transaction_plant{i}")));
    header.push("injection".into());
    let rows = (0..prices.len())
        .map(|t| {
            let mut r = vec![(t + 1).to_string(), money(prices[t]), full(prices[t])];
            r.extend(eq.transaction_series.iter().map(|s| full(s[t])));
            r.push(full(eq.injection_series[t]));
            r
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    w.csv("fig5_price_transaction.csv", &header_ref, rows)?;

    let mut header = vec!["period".to_string(), "tariff".into()];
    header.extend(plants.iter().map(|i| format!("processed_plant{i}")));
    header.push("processed_total".into());
    let rows = (0..prices.len())
        .map(|t| {
            let mut r = vec![(t + 1).to_string(), full(bundle.tariff.get(t).copied().unwrap_or(f64::NAN))];
            r.extend(eq.processing_series.iter().map(|s| full(s[t])));
            r.push(full(eq.processing_series.iter().map(|s| s[t]).sum()));
            r
        })
        .collect();
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    w.csv("fig6_tariff_processing.csv", &header_ref, rows)?;

    let mut rows = vec![vec![
        "salt_cavern".to_string(),
        String::new(),
        money(eq.leader_profit),
        full(eq.leader_profit),
    ]];
    rows.extend(eq.follower_profits.iter().map(|u| {
        vec![
            u.label.clone(),
            join(u.plants.iter().map(|i| (i + 1).to_string())),
            money(u.profit),
            full(u.profit),
        ]
    }));
    w.csv("equilibrium_profits.csv", &["party", "plants", "profit", "profit_full"], rows)?;
    w.json("equilibrium.json", eq)
}

fn write_flat(w: &mut Writer, points: &[FlatPoint]) -> Result<(), ReportError> {
    let rows = points
        .iter()
        .map(|p| {
            vec![
                full(p.price),
                money(p.leader_profit),
                full(p.leader_profit),
                full(p.total_volume),
            ]
        })
        .collect();
    w.csv(
        "fig7_flat_price.csv",
        &["price", "leader_profit", "leader_profit_full", "total_volume"],
        rows,
    )
}

/// `table6.csv`: leader and routing-unit profits per injection cap.
fn write_injection_sweep(w: &mut Writer, points: &[&SensitivityPoint]) -> Result<(), ReportError> {
    let mut rows = Vec::new();
    for p in points {
        let leader = p.leader_profit.unwrap_or(f64::NAN);
        rows.push(vec![full(p.value), "salt_cavern".into(), money(leader), full(leader)]);
        for u in &p.follower_profits {
            rows.push(vec![full(p.value), u.label.clone(), money(u.profit), full(u.profit)]);
        }
    }
    w.csv("table6.csv", &["q_trans", "party", "profit", "profit_full"], rows)?;
    w.json("sensitivity_qtrans.json", &points)
}

/// `fig8_k3.csv`: every structure's blocks per vehicle operating cost.
fn write_vehicle_sweep(w: &mut Writer, points: &[&SensitivityPoint]) -> Result<(), ReportError> {
    let mut rows = Vec::new();
    for p in points {
        for s in &p.structures {
            let selected = p.selected_structure.as_deref() == Some(s.label.as_str());
            rows.push(vec![
                full(p.value),
                s.label.clone(),
                join(s.block_values.iter().map(|&x| money(x))),
                join(s.block_values.iter().map(|&x| full(x))),
                money(s.total),
                full(s.total),
                s.stable.to_string(),
                selected.to_string(),
            ]);
        }
    }
    w.csv(
        "fig8_k3.csv",
        &["k3", "structure", "block_values", "block_values_full", "total", "total_full", "stable", "selected"],
        rows,
    )?;
    w.json("sensitivity_k3.json", &points)
}

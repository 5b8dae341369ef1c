//! Market-instance data model: plants, processing equipment, vehicles, the
//! salt cavern and the electricity tariff, with validation and file I/O.
//!
//! Units throughout: money in $, mass in kg, energy in kWh, time in periods.
//! A [`Scenario`] can only be obtained through [`Scenario::new`] (or the loaders
//! built on it), so holding one means every invariant below has been checked.

use std::fmt;
use std::ops::Deref;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Horizon {
    /// Periods per planning day.
    pub periods: usize,
    /// Hours per period; converts kg/h equipment ratings to kg per period.
    pub period_hours: f64,
}

/// How the low-pressure tank in front of the processing unit is bounded.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TankRule {
    /// Tank holds at most one period of the chosen equipment's throughput.
    #[default]
    EquipmentCapacity,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantParams {
    /// 1-based plant index as used in reports.
    pub id: usize,
    /// By-product hydrogen produced in each period (kg).
    pub generation: Vec<f64>,
    #[serde(default)]
    pub tank_capacity_rule: TankRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquipmentCatalog {
    /// Throughput of each equipment type (kg/h); compressors first.
    pub capacities: Vec<f64>,
    /// Daily (already discounted) investment cost of each type ($/day).
    pub invest_daily: Vec<f64>,
    pub compressor_types: usize,
    pub liquefier_types: usize,
    /// Electricity per kg compressed (kWh/kg).
    pub energy_per_kg_compress: f64,
    /// Electricity per kg liquefied (kWh/kg).
    pub energy_per_kg_liquefy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportParams {
    /// Tube trailer payload (kg/trip).
    pub tube_capacity: f64,
    /// Tanker truck payload (kg/trip).
    pub tanker_capacity: f64,
    /// Daily investment per tube trailer ($/day).
    pub tube_invest_daily: f64,
    /// Daily investment per tanker truck ($/day).
    pub tanker_invest_daily: f64,
    /// Operating cost of one vehicle for one period on the road ($).
    pub op_cost_per_period: f64,
    /// Travel time in periods from plant i (row) to plant j or, in the last
    /// column, the salt cavern.
    pub travel_periods: Vec<Vec<u32>>,
    /// Fraction of buffered liquid hydrogen retained per loading period.
    pub loading_retention: f64,
    /// Fraction of liquid hydrogen retained per period in transit.
    pub transit_retention_base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavernParams {
    /// Fixed price end users pay the cavern ($/kg).
    pub retail_price: f64,
    pub price_floor: Vec<f64>,
    pub price_ceiling: Vec<f64>,
    /// Maximum mass the cavern can inject in one period (kg).
    pub max_injection: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tariff {
    /// Electricity price in each period ($/kWh).
    pub electricity_price: Vec<f64>,
}

/// Raw, unvalidated scenario contents; the serialized form of a [`Scenario`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioData {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub horizon: Horizon,
    pub plants: Vec<PlantParams>,
    pub catalog: EquipmentCatalog,
    pub transport: TransportParams,
    pub cavern: CavernParams,
    pub tariff: Tariff,
    pub rng_seed: u64,
}

/// Processing route implied by the equipment type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Compressor + tube trailers (CH2).
    Compressed,
    /// Liquefier + tanker trucks (LH2).
    Liquefied,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Compressed => "CH2",
            Mode::Liquefied => "LH2",
        })
    }
}

/// A validated market instance. Immutable; derefs to its [`ScenarioData`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    data: ScenarioData,
}

impl Deref for Scenario {
    type Target = ScenarioData;
    fn deref(&self) -> &ScenarioData {
        &self.data
    }
}

impl Serialize for Scenario {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.data.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Scenario {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let data = ScenarioData::deserialize(d)?;
        Scenario::new(data).map_err(serde::de::Error::custom)
    }
}

impl Scenario {
    pub fn new(data: ScenarioData) -> Result<Self, ScenarioError> {
        validate(&data)?;
        Ok(Scenario { data })
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let data: ScenarioData = serde_json::from_str(text)?;
        Scenario::new(data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Scenario::from_json(&text)
    }

    /// Canonical text form: pretty JSON in field order, trailing newline.
    pub fn to_canonical_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.data).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_canonical_json())?;
        Ok(())
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_canonical_json().as_bytes()))
    }

    /// Returns a re-validated copy with `edit` applied.
    pub fn modified(&self, edit: impl FnOnce(&mut ScenarioData)) -> Result<Self, ScenarioError> {
        let mut data = self.data.clone();
        edit(&mut data);
        Scenario::new(data)
    }

    pub fn data(&self) -> &ScenarioData {
        &self.data
    }

    pub fn periods(&self) -> usize {
        self.horizon.periods
    }

    pub fn num_plants(&self) -> usize {
        self.plants.len()
    }

    /// Column index of the salt cavern in `travel_periods`.
    pub fn cavern_index(&self) -> usize {
        self.plants.len()
    }

    pub fn num_equipment_types(&self) -> usize {
        self.catalog.capacities.len()
    }

    pub fn mode_of(&self, equipment: usize) -> Mode {
        if equipment < self.catalog.compressor_types {
            Mode::Compressed
        } else {
            Mode::Liquefied
        }
    }

    /// Equipment types that feed the given transport mode.
    pub fn equipment_of_mode(&self, mode: Mode) -> Vec<usize> {
        (0..self.num_equipment_types())
            .filter(|&n| self.mode_of(n) == mode)
            .collect()
    }

    /// Processing throughput of an equipment type in kg per period.
    pub fn capacity_per_period(&self, equipment: usize) -> f64 {
        self.catalog.capacities[equipment] * self.horizon.period_hours
    }

    pub fn vehicle_capacity(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Compressed => self.transport.tube_capacity,
            Mode::Liquefied => self.transport.tanker_capacity,
        }
    }

    pub fn vehicle_invest(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Compressed => self.transport.tube_invest_daily,
            Mode::Liquefied => self.transport.tanker_invest_daily,
        }
    }

    pub fn energy_per_kg(&self, mode: Mode) -> f64 {
        match mode {
            Mode::Compressed => self.catalog.energy_per_kg_compress,
            Mode::Liquefied => self.catalog.energy_per_kg_liquefy,
        }
    }

    /// Travel periods from plant `from` to `to` (`to == I` is the cavern).
    pub fn travel(&self, from: usize, to: usize) -> u32 {
        self.transport.travel_periods[from][to]
    }

    pub fn daily_generation(&self, plant: usize) -> f64 {
        self.plants[plant].generation.iter().sum()
    }

    /// Midpoint of the buying-price band in every period.
    pub fn midpoint_prices(&self) -> Vec<f64> {
        self.cavern
            .price_floor
            .iter()
            .zip(&self.cavern.price_ceiling)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }
}

fn check_len(field: &str, v: &[f64], t: usize) -> Result<(), ScenarioError> {
    if v.len() != t {
        return Err(invalid(field, format!("expected {t} entries, found {}", v.len())));
    }
    if let Some(k) = v.iter().position(|x| !x.is_finite()) {
        return Err(invalid(format!("{field}[{k}]"), "not a finite number"));
    }
    Ok(())
}

fn check_nonneg(field: &str, v: &[f64]) -> Result<(), ScenarioError> {
    if let Some(k) = v.iter().position(|&x| x < 0.0) {
        return Err(invalid(format!("{field}[{k}]"), "must be >= 0"));
    }
    Ok(())
}

fn check_positive(field: &str, x: f64) -> Result<(), ScenarioError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(invalid(field, format!("must be a positive number, found {x}")));
    }
    Ok(())
}

fn check_retention(field: &str, x: f64) -> Result<(), ScenarioError> {
    if !(x > 0.0 && x <= 1.0) {
        return Err(invalid(field, format!("retention fraction must lie in (0, 1], found {x}")));
    }
    Ok(())
}

fn validate(d: &ScenarioData) -> Result<(), ScenarioError> {
    if d.schema_version != SCHEMA_VERSION {
        return Err(invalid(
            "schema_version",
            format!("unsupported version {}, expected {SCHEMA_VERSION}", d.schema_version),
        ));
    }
    let t = d.horizon.periods;
    if t == 0 {
        return Err(invalid("horizon.periods", "must be at least 1"));
    }
    check_positive("horizon.period_hours", d.horizon.period_hours)?;

    if d.plants.is_empty() {
        return Err(invalid("plants", "at least one plant is required"));
    }
    for (k, p) in d.plants.iter().enumerate() {
        if p.id != k + 1 {
            return Err(invalid(
                format!("plants[{k}].id"),
                format!("plants must be numbered 1..I in order, found {}", p.id),
            ));
        }
        let field = format!("plants[{k}].generation");
        check_len(&field, &p.generation, t)?;
        check_nonneg(&field, &p.generation)?;
    }

    let c = &d.catalog;
    let types = c.compressor_types + c.liquefier_types;
    if types == 0 {
        return Err(invalid("catalog", "at least one equipment type is required"));
    }
    for (field, v) in [("catalog.capacities", &c.capacities), ("catalog.invest_daily", &c.invest_daily)] {
        check_len(field, v, types)?;
        if let Some(k) = v.iter().position(|&x| x <= 0.0) {
            return Err(invalid(format!("{field}[{k}]"), "must be > 0"));
        }
    }
    if !(c.energy_per_kg_compress.is_finite() && c.energy_per_kg_compress >= 0.0) {
        return Err(invalid("catalog.energy_per_kg_compress", "must be >= 0"));
    }
    if !(c.energy_per_kg_liquefy.is_finite() && c.energy_per_kg_liquefy > c.energy_per_kg_compress) {
        return Err(invalid(
            "catalog.energy_per_kg_liquefy",
            "liquefaction must use more energy per kg than compression",
        ));
    }

    let tr = &d.transport;
    check_positive("transport.tube_capacity", tr.tube_capacity)?;
    check_positive("transport.tanker_capacity", tr.tanker_capacity)?;
    if tr.tanker_capacity <= tr.tube_capacity {
        return Err(invalid(
            "transport.tanker_capacity",
            "a tanker truck must carry more than a tube trailer",
        ));
    }
    for (field, x) in [
        ("transport.tube_invest_daily", tr.tube_invest_daily),
        ("transport.tanker_invest_daily", tr.tanker_invest_daily),
        ("transport.op_cost_per_period", tr.op_cost_per_period),
    ] {
        if !(x.is_finite() && x >= 0.0) {
            return Err(invalid(field, format!("must be >= 0, found {x}")));
        }
    }
    check_retention("transport.loading_retention", tr.loading_retention)?;
    check_retention("transport.transit_retention_base", tr.transit_retention_base)?;
    let i = d.plants.len();
    if tr.travel_periods.len() != i {
        return Err(invalid(
            "transport.travel_periods",
            format!("expected {i} rows (one per plant), found {}", tr.travel_periods.len()),
        ));
    }
    for (r, row) in tr.travel_periods.iter().enumerate() {
        if row.len() != i + 1 {
            return Err(invalid(
                format!("transport.travel_periods[{r}]"),
                format!("expected {} columns (plants then cavern), found {}", i + 1, row.len()),
            ));
        }
        if row[r] != 0 {
            return Err(invalid(
                format!("transport.travel_periods[{r}][{r}]"),
                "a plant is zero periods from itself",
            ));
        }
    }

    let cv = &d.cavern;
    check_positive("cavern.retail_price", cv.retail_price)?;
    check_positive("cavern.max_injection", cv.max_injection)?;
    check_len("cavern.price_floor", &cv.price_floor, t)?;
    check_len("cavern.price_ceiling", &cv.price_ceiling, t)?;
    check_nonneg("cavern.price_floor", &cv.price_floor)?;
    for k in 0..t {
        if cv.price_floor[k] > cv.price_ceiling[k] {
            return Err(invalid(
                format!("cavern.price_floor[{k}]"),
                "floor exceeds ceiling",
            ));
        }
        if cv.price_ceiling[k] > cv.retail_price {
            return Err(invalid(
                format!("cavern.price_ceiling[{k}]"),
                "ceiling exceeds the retail price",
            ));
        }
    }

    check_len("tariff.electricity_price", &d.tariff.electricity_price, t)?;
    check_nonneg("tariff.electricity_price", &d.tariff.electricity_price)?;
    Ok(())
}

#[derive(Debug, Error, PartialEq)]
#[error("generation profile needs mean > 0 and variance >= 0 (got mean {mean}, variance {variance})")]
pub struct ProfileError {
    pub mean: f64,
    pub variance: f64,
}

/// Draws `periods` values from Normal(mean, variance), clamped at zero.
/// The same seed always yields the same vector.
pub fn generate_generation_profile(
    mean: f64,
    variance: f64,
    periods: usize,
    seed: u64,
) -> Result<Vec<f64>, ProfileError> {
    if !(mean.is_finite() && mean > 0.0 && variance.is_finite() && variance >= 0.0) {
        return Err(ProfileError { mean, variance });
    }
    let normal = Normal::new(mean, variance.sqrt()).map_err(|_| ProfileError { mean, variance })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..periods)
        .map(|_| normal.sample(&mut rng).max(0.0))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Scenario {
        Scenario::from_json(include_str!("../fixtures/tiny_case.json")).unwrap()
    }

    #[test]
    fn paper_case_loads_with_table_values() {
        let s = Scenario::from_json(include_str!("../fixtures/paper_case.json")).unwrap();
        assert_eq!(s.num_plants(), 3);
        assert_eq!(s.periods(), 12);
        assert_eq!(s.cavern.retail_price, 15.0);
        assert_eq!(s.cavern.max_injection, 9000.0);
        assert!(s.cavern.price_floor.iter().all(|&p| p == 5.0));
        assert!(s.cavern.price_ceiling.iter().all(|&p| p == 13.0));
        assert_eq!(s.catalog.capacities, vec![1200.0, 2000.0, 4000.0, 8000.0]);
        assert_eq!(s.transport.travel_periods, vec![vec![0, 0, 0, 4]; 3]);
    }

    #[test]
    fn short_tariff_names_the_field() {
        let err = tiny()
            .modified(|d| {
                d.tariff.electricity_price.pop();
            })
            .unwrap_err();
        match err {
            ScenarioError::Invalid { field, .. } => assert_eq!(field, "tariff.electricity_price"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn retention_above_one_is_rejected() {
        let err = tiny()
            .modified(|d| d.transport.loading_retention = 1.2)
            .unwrap_err();
        assert!(
            matches!(&err, ScenarioError::Invalid { field, .. } if field == "transport.loading_retention"),
            "{err}"
        );
    }

    #[test]
    fn price_band_above_retail_is_rejected() {
        let err = tiny()
            .modified(|d| d.cavern.price_ceiling[0] = d.cavern.retail_price + 1.0)
            .unwrap_err();
        assert!(matches!(err, ScenarioError::Invalid { .. }));
    }

    #[test]
    fn travel_matrix_shape_is_checked() {
        assert!(tiny().modified(|d| d.transport.travel_periods[0].pop().map(|_| ()).unwrap()).is_err());
        assert!(tiny().modified(|d| d.transport.travel_periods[1][1] = 2).is_err());
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        assert!(matches!(Scenario::from_json("{ nope"), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn unknown_schema_version_is_rejected() {
        let err = tiny().modified(|d| d.schema_version = 7).unwrap_err();
        assert!(matches!(&err, ScenarioError::Invalid { field, .. } if field == "schema_version"));
    }

    #[test]
    fn canonical_round_trip_is_byte_identical() {
        for text in [
            include_str!("../fixtures/tiny_case.json"),
            include_str!("../fixtures/paper_case.json"),
        ] {
            let s = Scenario::from_json(text).unwrap();
            assert_eq!(s.to_canonical_json(), text);
            let again = Scenario::from_json(&s.to_canonical_json()).unwrap();
            assert_eq!(again, s);
        }
    }

    #[test]
    fn zero_variance_profile_is_constant() {
        let v = generate_generation_profile(1000.0, 0.0, 12, 99).unwrap();
        assert_eq!(v, vec![1000.0; 12]);
    }

    #[test]
    fn profile_is_deterministic() {
        let a = generate_generation_profile(1000.0, 100.0, 12, 7).unwrap();
        let b = generate_generation_profile(1000.0, 100.0, 12, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_generation_profile(1000.0, 100.0, 12, 8).unwrap());
    }

    #[test]
    fn profile_sample_mean_within_three_standard_errors() {
        // sigma = 10, n = 10_000: standard error 0.1 kg.
        let v = generate_generation_profile(1000.0, 100.0, 10_000, 7).unwrap();
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 1000.0).abs() <= 0.3, "sample mean {mean}");
    }

    #[test]
    fn profile_rejects_bad_parameters() {
        assert!(generate_generation_profile(0.0, 1.0, 3, 1).is_err());
        assert!(generate_generation_profile(10.0, -1.0, 3, 1).is_err());
    }
}

//! Strongest-signal RSS maps over macro + small-cell deployments.
//!
//! Every grid point takes the maximum over sites of
//! `tx_power - pathloss(distance) + shadowing`, where the shadowing draw is a
//! pure function of `(seed, site id, absolute point position)`. Adding sites
//! therefore never lowers any point, and a point shared by two grids of
//! different resolution sees the same draw in both.
//!
//! Coordinates are metres in a local frame anchored at the south-east corner
//! of the study area: `x` grows westward, `y` northward. The optional
//! geographic anchor is carried as metadata only.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{self, Read, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rand_pcg::Pcg64Mcg;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MACRO_POWER_DBM: f64 = 46.0;
pub const SMALL_POWER_DBM: f64 = 24.0;
/// Strongest small-cell RSS, reached at the calibrated minimum distance.
pub const SMALL_CELL_PEAK_RSS_DBM: f64 = -42.0;

pub const SITE_CSV_HEADER: [&str; 6] = ["site_id", "x_m", "y_m", "tier", "power_dbm", "tag"];

/// A problem in one CSV cell (or the whole row when `column` is `row`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: u64,
    pub column: String,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "line {}, column {}: {}",
            self.line, self.column, self.message
        )
    }
}

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error("{}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"))]
    Malformed(Vec<RowError>),
    #[error("duplicate site id {0:?}")]
    DuplicateSite(String),
    #[error("resolution {resolution_m} m does not divide a {width_m} x {height_m} m area")]
    Resolution {
        resolution_m: f64,
        width_m: f64,
        height_m: f64,
    },
    #[error("grid geometry mismatch: {0}")]
    GeometryMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Macro,
    Small,
}

impl Tier {
    pub fn parse(s: &str) -> Option<Tier> {
        match s.trim().to_ascii_lowercase().as_str() {
            "macro" => Some(Tier::Macro),
            "small" => Some(Tier::Small),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Tier::Macro => "macro",
            Tier::Small => "small",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Site {
    pub id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub tier: Tier,
    pub tx_power_dbm: f64,
    pub tag: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Area {
    pub width_m: f64,
    pub height_m: f64,
}

impl Area {
    pub const SQUARE_KM: Area = Area {
        width_m: 1000.0,
        height_m: 1000.0,
    };

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (0.0..=self.width_m).contains(&x) && (0.0..=self.height_m).contains(&y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoAnchor {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub sites: Vec<Site>,
    pub area: Area,
    pub origin: Option<GeoAnchor>,
}

impl Deployment {
    pub fn new(area: Area) -> Self {
        Deployment {
            sites: Vec::new(),
            area,
            origin: None,
        }
    }

    pub fn push(&mut self, site: Site) -> Result<(), CoverageError> {
        if self.sites.iter().any(|s| s.id == site.id) {
            return Err(CoverageError::DuplicateSite(site.id));
        }
        self.sites.push(site);
        Ok(())
    }

    /// Same area and anchor, keeping only the sites `keep` accepts.
    pub fn filtered(&self, mut keep: impl FnMut(&Site) -> bool) -> Deployment {
        Deployment {
            sites: self.sites.iter().filter(|s| keep(s)).cloned().collect(),
            area: self.area,
            origin: self.origin,
        }
    }

    pub fn macro_only(&self) -> Deployment {
        self.filtered(|s| s.tier == Tier::Macro)
    }

    /// Macro sites plus small sites carrying `tag`.
    pub fn macro_plus_tagged(&self, tag: &str) -> Deployment {
        self.filtered(|s| s.tier == Tier::Macro || s.tag == tag)
    }

    pub fn count(&self, tier: Tier) -> usize {
        self.sites.iter().filter(|s| s.tier == tier).count()
    }

    /// Sites outside the area, as warnings.
    pub fn out_of_bounds(&self) -> Vec<String> {
        self.sites
            .iter()
            .filter(|s| !self.area.contains(s.x_m, s.y_m))
            .map(|s| {
                format!(
                    "site {:?} at ({}, {}) lies outside the {} x {} m area",
                    s.id, s.x_m, s.y_m, self.area.width_m, self.area.height_m
                )
            })
            .collect()
    }
}

/// `A + B * log10(d_km)` pathloss plus lognormal shadowing for one tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TierModel {
    pub intercept_db: f64,
    pub slope_db: f64,
    pub shadowing_sigma_db: f64,
}

impl TierModel {
    pub const MACRO_DEFAULT: TierModel = TierModel {
        intercept_db: 128.1,
        slope_db: 37.6,
        shadowing_sigma_db: 8.0,
    };

    pub const SMALL_DEFAULT: TierModel = TierModel {
        intercept_db: 140.7,
        slope_db: 36.7,
        shadowing_sigma_db: 10.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub macro_tier: TierModel,
    pub small_tier: TierModel,
    pub min_distance_m: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        let small_tier = TierModel::SMALL_DEFAULT;
        ChannelModel {
            macro_tier: TierModel::MACRO_DEFAULT,
            small_tier,
            min_distance_m: calibrated_min_distance(
                &small_tier,
                SMALL_POWER_DBM,
                SMALL_CELL_PEAK_RSS_DBM,
            ),
        }
    }
}

impl ChannelModel {
    pub fn tier(&self, tier: Tier) -> &TierModel {
        match tier {
            Tier::Macro => &self.macro_tier,
            Tier::Small => &self.small_tier,
        }
    }

    /// Same pathloss, shadowing switched off.
    pub fn without_shadowing(mut self) -> Self {
        self.macro_tier.shadowing_sigma_db = 0.0;
        self.small_tier.shadowing_sigma_db = 0.0;
        self
    }

    pub fn validate(&self) -> Result<(), CoverageError> {
        for (name, t) in [("macro", &self.macro_tier), ("small", &self.small_tier)] {
            if !t.slope_db.is_finite() || t.slope_db <= 0.0 || !t.intercept_db.is_finite() {
                return Err(CoverageError::InvalidParameter(format!(
                    "{name} tier needs a finite intercept and a positive slope"
                )));
            }
            if !t.shadowing_sigma_db.is_finite() || t.shadowing_sigma_db < 0.0 {
                return Err(CoverageError::InvalidParameter(format!(
                    "{name} tier shadowing sigma must be finite and >= 0"
                )));
            }
        }
        if !self.min_distance_m.is_finite() || self.min_distance_m <= 0.0 {
            return Err(CoverageError::InvalidParameter(
                "min_distance_m must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn pathloss_db(&self, tier: Tier, distance_m: f64) -> f64 {
        let t = self.tier(tier);
        let d = distance_m.max(self.min_distance_m);
        t.intercept_db + t.slope_db * (d / 1000.0).log10()
    }
}

/// Distance at which a transmitter of `tx_power_dbm` on `tier` is received at
/// exactly `target_rss_dbm` without shadowing.
pub fn calibrated_min_distance(tier: &TierModel, tx_power_dbm: f64, target_rss_dbm: f64) -> f64 {
    let target_loss = tx_power_dbm - target_rss_dbm;
    1000.0 * 10f64.powf((target_loss - tier.intercept_db) / tier.slope_db)
}

/// Free function form of [`ChannelModel::pathloss_db`].
pub fn pathloss_db(model: &ChannelModel, tier: Tier, distance_m: f64) -> f64 {
    model.pathloss_db(tier, distance_m)
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn combine(acc: u64, v: u64) -> u64 {
    mix(acc.wrapping_add(0x9e37_79b9_7f4a_7c15).wrapping_add(v))
}

/// Stable 64-bit key for a site id (FNV-1a).
pub fn site_key(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    })
}

/// Position quantised to millimetres, the resolution-independent point index.
pub fn point_key(x_m: f64, y_m: f64) -> (i64, i64) {
    ((x_m * 1000.0).round() as i64, (y_m * 1000.0).round() as i64)
}

/// Zero-mean shadowing draw in dB for one (site, point) pair.
pub fn shadowing_db(seed: u64, site: u64, point: (i64, i64), sigma_db: f64) -> f64 {
    if sigma_db == 0.0 {
        return 0.0;
    }
    let key = combine(
        combine(combine(mix(seed), site), point.0 as u64),
        point.1 as u64,
    );
    let z: f64 = Pcg64Mcg::seed_from_u64(key).sample(StandardNormal);
    z * sigma_db
}

/// RSS of one site at `(x, y)`, shadowing included.
pub fn site_rss_dbm(model: &ChannelModel, site: &Site, x_m: f64, y_m: f64, seed: u64) -> f64 {
    let d = (site.x_m - x_m).hypot(site.y_m - y_m);
    let sigma = model.tier(site.tier).shadowing_sigma_db;
    site.tx_power_dbm - model.pathloss_db(site.tier, d)
        + shadowing_db(seed, site_key(&site.id), point_key(x_m, y_m), sigma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RssGrid {
    pub resolution_m: f64,
    pub nx: usize,
    pub ny: usize,
    /// Row-major (`y` outer), `f64::NEG_INFINITY` where no site exists.
    pub values: Vec<f64>,
    /// Index into `site_ids` of the strongest site per point.
    pub serving_site: Vec<Option<u32>>,
    pub site_ids: Vec<String>,
}

impl RssGrid {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.nx + ix
    }

    pub fn position(&self, i: usize) -> (f64, f64) {
        let (ix, iy) = (i % self.nx, i / self.nx);
        (ix as f64 * self.resolution_m, iy as f64 * self.resolution_m)
    }

    pub fn value_at(&self, ix: usize, iy: usize) -> f64 {
        self.values[self.index(ix, iy)]
    }

    pub fn serving_id(&self, i: usize) -> Option<&str> {
        self.serving_site[i].map(|s| self.site_ids[s as usize].as_str())
    }

    /// Nearest grid point to `(x, y)`, clamped to the grid.
    pub fn nearest_index(&self, x_m: f64, y_m: f64) -> usize {
        let ix = (x_m / self.resolution_m)
            .round()
            .clamp(0.0, (self.nx - 1) as f64) as usize;
        let iy = (y_m / self.resolution_m)
            .round()
            .clamp(0.0, (self.ny - 1) as f64) as usize;
        self.index(ix, iy)
    }

    pub fn same_geometry(&self, other: &RssGrid) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.resolution_m == other.resolution_m
    }
}

fn grid_dims(area: Area, resolution_m: f64) -> Result<(usize, usize), CoverageError> {
    let bad = || CoverageError::Resolution {
        resolution_m,
        width_m: area.width_m,
        height_m: area.height_m,
    };
    if !resolution_m.is_finite() || resolution_m <= 0.0 {
        return Err(bad());
    }
    let steps = |len: f64| {
        let n = (len / resolution_m).round();
        if n >= 1.0 && (n * resolution_m - len).abs() <= 1e-9 * len.max(1.0) {
            Some(n as usize)
        } else {
            None
        }
    };
    match (steps(area.width_m), steps(area.height_m)) {
        (Some(nx), Some(ny)) => Ok((nx, ny)),
        _ => Err(bad()),
    }
}

/// Strongest-signal map of `deployment` sampled every `resolution_m` metres.
pub fn rss_map(
    deployment: &Deployment,
    model: &ChannelModel,
    resolution_m: f64,
    seed: u64,
) -> Result<RssGrid, CoverageError> {
    model.validate()?;
    let (nx, ny) = grid_dims(deployment.area, resolution_m)?;
    let prepared: Vec<(f64, f64, f64, &TierModel, Tier, u64)> = deployment
        .sites
        .iter()
        .map(|s| {
            (
                s.x_m,
                s.y_m,
                s.tx_power_dbm,
                model.tier(s.tier),
                s.tier,
                site_key(&s.id),
            )
        })
        .collect();

    let points: Vec<(f64, Option<u32>)> = (0..nx * ny)
        .into_par_iter()
        .map(|i| {
            let x = (i % nx) as f64 * resolution_m;
            let y = (i / nx) as f64 * resolution_m;
            let key = point_key(x, y);
            let mut best = (f64::NEG_INFINITY, None);
            for (k, &(sx, sy, power, tm, tier, skey)) in prepared.iter().enumerate() {
                let d = (sx - x).hypot(sy - y);
                let rss = power - model.pathloss_db(tier, d)
                    + shadowing_db(seed, skey, key, tm.shadowing_sigma_db);
                if rss > best.0 {
                    best = (rss, Some(k as u32));
                }
            }
            best
        })
        .collect();

    let (values, serving_site) = points.into_iter().unzip();
    Ok(RssGrid {
        resolution_m,
        nx,
        ny,
        values,
        serving_site,
        site_ids: deployment.sites.iter().map(|s| s.id.clone()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfPoint {
    pub rss_dbm: f64,
    pub cum_fraction: f64,
}

/// Empirical CDF over the grid points strictly below a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictedCdf {
    pub threshold_dbm: f64,
    pub points: Vec<CdfPoint>,
    pub count_below: usize,
    pub total_points: usize,
    /// Share of all grid points that fall below the threshold.
    pub fraction_below: f64,
}

impl RestrictedCdf {
    /// Cumulative fraction at `rss_dbm` (right-continuous step function).
    pub fn at(&self, rss_dbm: f64) -> f64 {
        match self.points.partition_point(|p| p.rss_dbm <= rss_dbm) {
            0 => 0.0,
            k => self.points[k - 1].cum_fraction,
        }
    }
}

/// Uncovered points (`-inf`) count as below any threshold.
pub fn restricted_cdf(grid: &RssGrid, threshold_dbm: f64) -> RestrictedCdf {
    let mut below: Vec<f64> = grid
        .values
        .iter()
        .copied()
        .filter(|v| *v < threshold_dbm)
        .collect();
    below.sort_by(f64::total_cmp);
    let n = below.len();
    let mut points: Vec<CdfPoint> = Vec::new();
    for (i, v) in below.iter().enumerate() {
        let cum_fraction = (i + 1) as f64 / n as f64;
        match points.last_mut() {
            Some(last) if last.rss_dbm == *v => last.cum_fraction = cum_fraction,
            _ => points.push(CdfPoint {
                rss_dbm: *v,
                cum_fraction,
            }),
        }
    }
    let total = grid.len();
    RestrictedCdf {
        threshold_dbm,
        points,
        count_below: n,
        total_points: total,
        fraction_below: if total == 0 {
            0.0
        } else {
            n as f64 / total as f64
        },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub min_db: f64,
    pub p50_db: f64,
    pub p90_db: f64,
    pub max_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioComparison {
    /// Mean of `augmented - baseline` over points covered in both grids.
    pub mean_gain_db: f64,
    pub improved_point_count: usize,
    pub total_points: usize,
    pub delta: DeltaSummary,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn compare_scenarios(
    baseline: &RssGrid,
    augmented: &RssGrid,
) -> Result<ScenarioComparison, CoverageError> {
    if !baseline.same_geometry(augmented) {
        return Err(CoverageError::GeometryMismatch(format!(
            "{}x{} @ {} m vs {}x{} @ {} m",
            baseline.nx,
            baseline.ny,
            baseline.resolution_m,
            augmented.nx,
            augmented.ny,
            augmented.resolution_m
        )));
    }
    let mut improved = 0;
    let mut deltas = Vec::with_capacity(baseline.len());
    for (b, a) in baseline.values.iter().zip(&augmented.values) {
        if a > b {
            improved += 1;
        }
        if b.is_finite() && a.is_finite() {
            deltas.push(a - b);
        }
    }
    let mean = if deltas.is_empty() {
        0.0
    } else {
        deltas.iter().sum::<f64>() / deltas.len() as f64
    };
    deltas.sort_by(f64::total_cmp);
    Ok(ScenarioComparison {
        mean_gain_db: mean,
        improved_point_count: improved,
        total_points: baseline.len(),
        delta: DeltaSummary {
            min_db: deltas.first().copied().unwrap_or(0.0),
            p50_db: quantile(&deltas, 0.5),
            p90_db: quantile(&deltas, 0.9),
            max_db: deltas.last().copied().unwrap_or(0.0),
        },
    })
}

pub const CHAIN_TAG: &str = "chain";
pub const INDEPENDENT_TAG: &str = "independent";
pub const MACRO_TAG: &str = "macro";

/// Uniformly placed macro and small sites. `round(chain_fraction *
/// small_count)` of the small sites are tagged `chain`, the rest
/// `independent`.
pub fn generate_synthetic_deployment(
    macro_count: usize,
    small_count: usize,
    chain_fraction: f64,
    area: Area,
    seed: u64,
) -> Result<Deployment, CoverageError> {
    if !(0.0..=1.0).contains(&chain_fraction) {
        return Err(CoverageError::InvalidParameter(format!(
            "chain_fraction {chain_fraction} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut deployment = Deployment::new(area);
    for i in 0..macro_count {
        deployment.sites.push(Site {
            id: format!("macro-{i:03}"),
            x_m: rng.random_range(0.0..area.width_m),
            y_m: rng.random_range(0.0..area.height_m),
            tier: Tier::Macro,
            tx_power_dbm: MACRO_POWER_DBM,
            tag: MACRO_TAG.into(),
        });
    }
    let chain_count = (chain_fraction * small_count as f64).round() as usize;
    let chain: BTreeSet<usize> = index::sample(&mut rng, small_count, chain_count)
        .into_iter()
        .collect();
    for i in 0..small_count {
        deployment.sites.push(Site {
            id: format!("small-{i:03}"),
            x_m: rng.random_range(0.0..area.width_m),
            y_m: rng.random_range(0.0..area.height_m),
            tier: Tier::Small,
            tx_power_dbm: SMALL_POWER_DBM,
            tag: if chain.contains(&i) {
                CHAIN_TAG
            } else {
                INDEPENDENT_TAG
            }
            .into(),
        });
    }
    Ok(deployment)
}

/// Parsed site list plus non-fatal findings.
#[derive(Debug, Clone)]
pub struct IngestedSites {
    pub deployment: Deployment,
    pub warnings: Vec<String>,
}

pub fn ingest_sites(path: impl AsRef<Path>, area: Area) -> Result<IngestedSites, CoverageError> {
    let file = std::fs::File::open(path)?;
    parse_sites(file, area)
}

/// Reads a site CSV (`site_id,x_m,y_m,tier,power_dbm,tag`). Lines starting
/// with `#` are ignored.
pub fn parse_sites<R: Read>(input: R, area: Area) -> Result<IngestedSites, CoverageError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let header = reader.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != SITE_CSV_HEADER {
        return Err(CoverageError::Malformed(vec![RowError {
            line: header.position().map_or(1, |p| p.line()),
            column: "header".into(),
            message: format!("expected `{}`", SITE_CSV_HEADER.join(",")),
        }]));
    }
    let mut deployment = Deployment::new(area);
    let mut errors = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let before = errors.len();
        let mut err = |column: &str, message: String| {
            errors.push(RowError {
                line,
                column: column.into(),
                message,
            })
        };
        if record.len() != SITE_CSV_HEADER.len() {
            err(
                "row",
                format!(
                    "expected {} fields, found {}",
                    SITE_CSV_HEADER.len(),
                    record.len()
                ),
            );
            continue;
        }
        let mut number = |idx: usize| -> f64 {
            let raw = &record[idx];
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    err(
                        SITE_CSV_HEADER[idx],
                        format!("not a finite number: {raw:?}"),
                    );
                    f64::NAN
                }
            }
        };
        let (x_m, y_m, tx_power_dbm) = (number(1), number(2), number(4));
        let id = record[0].to_owned();
        if id.is_empty() {
            err("site_id", "empty site id".into());
        } else if deployment.sites.iter().any(|s| s.id == id) {
            err("site_id", format!("duplicate site id {id:?}"));
        }
        let tier = Tier::parse(&record[3]);
        if tier.is_none() {
            err("tier", format!("unknown tier {:?}", &record[3]));
        }
        if errors.len() == before {
            deployment.sites.push(Site {
                id,
                x_m,
                y_m,
                tier: tier.expect("checked"),
                tx_power_dbm,
                tag: record[5].to_owned(),
            });
        }
    }
    if !errors.is_empty() {
        return Err(CoverageError::Malformed(errors));
    }
    let warnings = deployment.out_of_bounds();
    Ok(IngestedSites {
        deployment,
        warnings,
    })
}

pub fn write_sites_csv<W: Write>(deployment: &Deployment, out: W) -> Result<(), CoverageError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SITE_CSV_HEADER)?;
    for s in &deployment.sites {
        w.write_record([
            s.id.clone(),
            format!("{:.6}", s.x_m),
            format!("{:.6}", s.y_m),
            s.tier.to_string(),
            format!("{:.6}", s.tx_power_dbm),
            s.tag.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn fmt_dbm(v: f64) -> String {
    if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:.6}")
    }
}

/// `x,y,rss_dbm,serving_site`, row-major, six decimals.
pub fn write_grid_csv<W: Write>(grid: &RssGrid, mut out: W) -> io::Result<()> {
    writeln!(out, "x,y,rss_dbm,serving_site")?;
    for i in 0..grid.len() {
        let (x, y) = grid.position(i);
        writeln!(
            out,
            "{x:.6},{y:.6},{},{}",
            fmt_dbm(grid.values[i]),
            grid.serving_id(i).unwrap_or("")
        )?;
    }
    Ok(())
}

/// Inverse of [`write_grid_csv`].
pub fn read_grid_csv<R: Read>(input: R) -> Result<RssGrid, CoverageError> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let mut rows = Vec::new();
    let mut site_ids: Vec<String> = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<f64, CoverageError> {
            record
                .get(i)
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| {
                    CoverageError::Malformed(vec![RowError {
                        line,
                        column: name.into(),
                        message: "not a number".into(),
                    }])
                })
        };
        let (x, y, v) = (field(0, "x")?, field(1, "y")?, field(2, "rss_dbm")?);
        let serving = match record.get(3).unwrap_or("") {
            "" => None,
            id => Some(match site_ids.iter().position(|s| s == id) {
                Some(k) => k as u32,
                None => {
                    site_ids.push(id.to_owned());
                    (site_ids.len() - 1) as u32
                }
            }),
        };
        rows.push((x, y, v, serving));
    }
    let nx = rows.iter().take_while(|r| r.1 == rows[0].1).count();
    if nx == 0 || rows.len() % nx != 0 {
        return Err(CoverageError::GeometryMismatch(
            "grid file is not rectangular".into(),
        ));
    }
    let resolution_m = if nx > 1 {
        rows[1].0 - rows[0].0
    } else if rows.len() > nx {
        rows[nx].1 - rows[0].1
    } else {
        1.0
    };
    Ok(RssGrid {
        resolution_m,
        nx,
        ny: rows.len() / nx,
        values: rows.iter().map(|r| r.2).collect(),
        serving_site: rows.iter().map(|r| r.3).collect(),
        site_ids,
    })
}

/// `rss_dbm,cum_fraction`, six decimals.
pub fn write_cdf_csv<W: Write>(cdf: &RestrictedCdf, mut out: W) -> io::Result<()> {
    writeln!(out, "rss_dbm,cum_fraction")?;
    for p in &cdf.points {
        writeln!(out, "{},{:.6}", fmt_dbm(p.rss_dbm), p.cum_fraction)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site(id: &str, x: f64, y: f64, tier: Tier) -> Site {
        let (power, tag) = match tier {
            Tier::Macro => (MACRO_POWER_DBM, MACRO_TAG),
            Tier::Small => (SMALL_POWER_DBM, CHAIN_TAG),
        };
        Site {
            id: id.into(),
            x_m: x,
            y_m: y,
            tier,
            tx_power_dbm: power,
            tag: tag.into(),
        }
    }

    fn grid_of(values: &[f64]) -> RssGrid {
        RssGrid {
            resolution_m: 1.0,
            nx: values.len(),
            ny: 1,
            values: values.to_vec(),
            serving_site: vec![None; values.len()],
            site_ids: Vec::new(),
        }
    }

    #[test]
    fn macro_pathloss_at_100_m() {
        let m = ChannelModel::default();
        let pl = m.pathloss_db(Tier::Macro, 100.0);
        assert!((pl - 90.5).abs() < 1e-9, "{pl}");
        assert!((MACRO_POWER_DBM - pl - -44.5).abs() < 1e-9);
    }

    #[test]
    fn pathloss_clamps_below_min_distance() {
        let m = ChannelModel::default();
        let at_min = m.pathloss_db(Tier::Small, m.min_distance_m);
        assert_eq!(m.pathloss_db(Tier::Small, 0.0), at_min);
        assert_eq!(m.pathloss_db(Tier::Small, m.min_distance_m / 2.0), at_min);
    }

    #[test]
    fn small_cell_peak_is_calibrated() {
        let m = ChannelModel::default();
        // 24 - (140.7 + 36.7 log10(d / 1000)) = -42  =>  d = 1000 * 10^(-74.7 / 36.7)
        let by_hand = 1000.0 * 10f64.powf(-74.7 / 36.7);
        assert!((m.min_distance_m - by_hand).abs() < 1e-9);
        assert!((m.min_distance_m - 9.2165).abs() < 1e-3);
        let peak = SMALL_POWER_DBM - m.pathloss_db(Tier::Small, 0.0);
        assert!((peak - SMALL_CELL_PEAK_RSS_DBM).abs() < 1e-9);
    }

    #[test]
    fn single_site_matches_closed_form() {
        let mut d = Deployment::new(Area {
            width_m: 100.0,
            height_m: 100.0,
        });
        d.push(site("m", 50.0, 50.0, Tier::Macro)).unwrap();
        let m = ChannelModel::default();
        let g = rss_map(&d, &m, 5.0, 9).unwrap();
        let i = g.index(10, 10);
        let expected = MACRO_POWER_DBM - m.pathloss_db(Tier::Macro, m.min_distance_m)
            + shadowing_db(9, site_key("m"), point_key(50.0, 50.0), 8.0);
        assert_eq!(g.values[i], expected);
        assert_eq!(g.serving_id(i), Some("m"));
    }

    #[test]
    fn rss_falls_with_distance_without_shadowing() {
        let mut d = Deployment::new(Area {
            width_m: 200.0,
            height_m: 5.0,
        });
        d.push(site("s", 0.0, 0.0, Tier::Small)).unwrap();
        let g = rss_map(&d, &ChannelModel::default().without_shadowing(), 5.0, 1).unwrap();
        let row: Vec<f64> = (0..g.nx).map(|ix| g.value_at(ix, 0)).collect();
        assert!((row[0] - -42.0).abs() < 1e-9);
        assert!(row[2..].windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn empty_deployment_is_all_sentinel() {
        let d = Deployment::new(Area {
            width_m: 20.0,
            height_m: 20.0,
        });
        let g = rss_map(&d, &ChannelModel::default(), 5.0, 1).unwrap();
        assert_eq!(g.len(), 16);
        assert!(g.values.iter().all(|v| *v == f64::NEG_INFINITY));
        assert!(g.serving_site.iter().all(Option::is_none));
    }

    #[test]
    fn resolution_must_divide_area() {
        let d = Deployment::new(Area::SQUARE_KM);
        let m = ChannelModel::default();
        assert!(matches!(
            rss_map(&d, &m, 3.0, 1),
            Err(CoverageError::Resolution { .. })
        ));
        assert!(matches!(
            rss_map(&d, &m, 0.0, 1),
            Err(CoverageError::Resolution { .. })
        ));
        assert!(rss_map(&d, &m, 8.0, 1).is_ok());
    }

    #[test]
    fn shadowing_is_keyed_by_position_not_grid() {
        let mut d = Deployment::new(Area {
            width_m: 100.0,
            height_m: 100.0,
        });
        d.push(site("m", 30.0, 70.0, Tier::Macro)).unwrap();
        let m = ChannelModel::default();
        let coarse = rss_map(&d, &m, 10.0, 3).unwrap();
        let fine = rss_map(&d, &m, 5.0, 3).unwrap();
        for iy in 0..coarse.ny {
            for ix in 0..coarse.nx {
                assert_eq!(coarse.value_at(ix, iy), fine.value_at(2 * ix, 2 * iy));
            }
        }
        let other_seed = rss_map(&d, &m, 10.0, 4).unwrap();
        assert_ne!(coarse.values, other_seed.values);
    }

    #[test]
    fn superset_never_lowers_rss() {
        let d = generate_synthetic_deployment(3, 10, 0.5, Area::SQUARE_KM, 5).unwrap();
        let m = ChannelModel::default();
        let base = rss_map(&d.macro_only(), &m, 20.0, 5).unwrap();
        let all = rss_map(&d, &m, 20.0, 5).unwrap();
        assert!(base.values.iter().zip(&all.values).all(|(b, a)| a >= b));
    }

    #[test]
    fn cdf_of_two_points() {
        let cdf = restricted_cdf(&grid_of(&[-50.0, -40.0]), -42.0);
        assert_eq!(
            cdf.points,
            vec![CdfPoint {
                rss_dbm: -50.0,
                cum_fraction: 1.0
            }]
        );
        assert_eq!(cdf.fraction_below, 0.5);
        assert_eq!(cdf.count_below, 1);
    }

    #[test]
    fn cdf_edge_cases() {
        let none = restricted_cdf(&grid_of(&[-10.0, -42.0]), -42.0);
        assert!(none.points.is_empty());
        assert_eq!(none.fraction_below, 0.0);

        let all = restricted_cdf(&grid_of(&[-60.0, -50.0, -50.0, -45.0]), -42.0);
        assert_eq!(all.fraction_below, 1.0);
        let fr: Vec<f64> = all.points.iter().map(|p| p.cum_fraction).collect();
        assert_eq!(fr, [0.25, 0.75, 1.0]);
        assert_eq!(all.at(-55.0), 0.25);
        assert_eq!(all.at(-70.0), 0.0);
        assert_eq!(all.at(-50.0), 0.75);
    }

    #[test]
    fn comparison_of_identical_grids_is_zero() {
        let g = grid_of(&[-50.0, -40.0, -30.0]);
        let c = compare_scenarios(&g, &g).unwrap();
        assert_eq!((c.mean_gain_db, c.improved_point_count), (0.0, 0));
    }

    #[test]
    fn comparison_statistics() {
        let base = grid_of(&[-50.0, -40.0, -30.0, f64::NEG_INFINITY]);
        let aug = grid_of(&[-47.0, -40.0, -24.0, -80.0]);
        let c = compare_scenarios(&base, &aug).unwrap();
        assert_eq!(c.improved_point_count, 3);
        assert_eq!(c.mean_gain_db, 3.0);
        assert_eq!(
            (c.delta.min_db, c.delta.p50_db, c.delta.max_db),
            (0.0, 3.0, 6.0)
        );
        assert!(matches!(
            compare_scenarios(&base, &grid_of(&[1.0])),
            Err(CoverageError::GeometryMismatch(_))
        ));
    }

    #[test]
    fn synthetic_deployments() {
        let a = generate_synthetic_deployment(5, 40, 0.3, Area::SQUARE_KM, 11).unwrap();
        let b = generate_synthetic_deployment(5, 40, 0.3, Area::SQUARE_KM, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.count(Tier::Macro), 5);
        assert_eq!(a.sites.iter().filter(|s| s.tag == CHAIN_TAG).count(), 12);
        assert!(a.out_of_bounds().is_empty());

        let macro_only = generate_synthetic_deployment(3, 0, 0.3, Area::SQUARE_KM, 1).unwrap();
        assert_eq!(macro_only.count(Tier::Small), 0);
        let chain = generate_synthetic_deployment(0, 7, 1.0, Area::SQUARE_KM, 1).unwrap();
        assert!(chain.sites.iter().all(|s| s.tag == CHAIN_TAG));
        assert!(generate_synthetic_deployment(1, 1, 1.5, Area::SQUARE_KM, 1).is_err());
    }

    #[test]
    fn site_csv_round_trip() {
        let text = "site_id,x_m,y_m,tier,power_dbm,tag\n\
                    m1,10,20,macro,46,macro\n\
                    s1,30.5,40,small,24,chain\n\
                    s2,1200,40,small,24,independent\n";
        let got = parse_sites(text.as_bytes(), Area::SQUARE_KM).unwrap();
        assert_eq!(got.deployment.sites.len(), 3);
        assert_eq!(got.deployment.sites[1].x_m, 30.5);
        assert_eq!(got.deployment.sites[1].tier, Tier::Small);
        assert_eq!(got.warnings.len(), 1);
        assert!(got.warnings[0].contains("s2"));

        let mut out = Vec::new();
        write_sites_csv(&got.deployment, &mut out).unwrap();
        let again = parse_sites(out.as_slice(), Area::SQUARE_KM).unwrap();
        assert_eq!(again.deployment, got.deployment);
    }

    #[test]
    fn header_only_is_empty() {
        let got = parse_sites(
            "site_id,x_m,y_m,tier,power_dbm,tag\n".as_bytes(),
            Area::SQUARE_KM,
        )
        .unwrap();
        assert!(got.deployment.sites.is_empty());
    }

    #[test]
    fn every_bad_row_is_reported() {
        let text = "site_id,x_m,y_m,tier,power_dbm,tag\n\
                    a,1,2,macro,46,macro\n\
                    b,x,2,macro,46,macro\n\
                    a,1,2,femto,46,macro\n\
                    c,1,2\n";
        let Err(CoverageError::Malformed(rows)) = parse_sites(text.as_bytes(), Area::SQUARE_KM)
        else {
            panic!("expected row errors");
        };
        let lines: Vec<(u64, &str)> = rows.iter().map(|r| (r.line, r.column.as_str())).collect();
        assert!(lines.contains(&(3, "x_m")), "{rows:?}");
        assert!(lines.contains(&(4, "site_id")), "{rows:?}");
        assert!(lines.contains(&(4, "tier")), "{rows:?}");
        assert!(lines.iter().any(|(l, _)| *l == 5), "{rows:?}");
    }

    #[test]
    fn grid_csv_round_trip() {
        let mut d = Deployment::new(Area {
            width_m: 20.0,
            height_m: 10.0,
        });
        d.push(site("m", 5.0, 5.0, Tier::Macro)).unwrap();
        let g = rss_map(&d, &ChannelModel::default(), 5.0, 2).unwrap();
        let mut out = Vec::new();
        write_grid_csv(&g, &mut out).unwrap();
        let back = read_grid_csv(out.as_slice()).unwrap();
        assert!(back.same_geometry(&g));
        assert_eq!(back.site_ids, ["m"]);
        for (a, b) in back.values.iter().zip(&g.values) {
            assert!((a - b).abs() < 1e-6);
        }

        let empty = rss_map(&Deployment::new(d.area), &ChannelModel::default(), 5.0, 2).unwrap();
        let mut out = Vec::new();
        write_grid_csv(&empty, &mut out).unwrap();
        assert!(String::from_utf8_lossy(&out).contains("-inf"));
        assert_eq!(read_grid_csv(out.as_slice()).unwrap().values, empty.values);
    }
}

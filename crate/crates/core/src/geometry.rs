//! Strata, partitions, and the lower-corner volumes `|Ω ∩ (−∞, x]|` that
//! every expectation and sampling routine is built on.
//!
//! Two stratum shapes are supported: axis-aligned boxes and triangular
//! prisms. A prism is one half of a `2b × b × … × b` box cut along the
//! diagonal of its `(x1, x2)` face; the remaining axes are plain intervals.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for volume bookkeeping.
pub const VOLUME_TOL: f64 = 1e-12;

/// Probe points closer than this to a stratum boundary are not classified.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Axis-aligned domain box `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DomainBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let domain = Self { lower, upper };
        domain.check()?;
        Ok(domain)
    }

    /// The unit cube `[0, 1]^d`.
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub(crate) fn check(&self) -> Result<()> {
        if self.lower.is_empty() {
            return Err(Error::MalformedDomain("zero-dimensional domain".into()));
        }
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch {
                expected: self.lower.len(),
                found: self.upper.len(),
            });
        }
        for (k, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo.is_finite() && hi.is_finite() && hi > lo) {
                return Err(Error::MalformedDomain(format!(
                    "axis {k}: upper {hi} must exceed lower {lo}"
                )));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.side(k)).product()
    }

    /// `|K ∩ (−∞, x]|`.
    pub fn corner_volume(&self, x: &[f64]) -> f64 {
        (0..self.dim())
            .map(|k| overlap(self.lower[k], self.upper[k], x[k]))
            .product()
    }

    /// `|K ∩ (−∞, x]| / |K|`, the relative corner volume.
    pub fn relative_corner_volume(&self, x: &[f64]) -> f64 {
        (0..self.dim())
            .map(|k| overlap(self.lower[k], self.upper[k], x[k]) / self.side(k))
            .product()
    }

    /// Maps `[0, 1]^d` affinely onto the box.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .enumerate()
            .map(|(k, &u)| self.lower[k] + u * self.side(k))
            .collect()
    }

    /// Maps the box affinely onto `[0, 1]^d`.
    pub fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(k, &v)| (v - self.lower[k]) / self.side(k))
            .collect()
    }

    fn contains_interval(&self, axis: usize, lo: f64, hi: f64) -> bool {
        let tol = VOLUME_TOL * self.side(axis).max(1.0);
        lo >= self.lower[axis] - tol && hi <= self.upper[axis] + tol
    }
}

/// Length of `[lo, hi] ∩ (−∞, x]`.
#[inline]
pub(crate) fn overlap(lo: f64, hi: f64, x: f64) -> f64 {
    (x.min(hi) - lo).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStratum {
    lower: Vec<f64>,
    sides: Vec<f64>,
}

impl BoxStratum {
    pub fn new(lower: Vec<f64>, sides: Vec<f64>) -> Result<Self> {
        let stratum = Self { lower, sides };
        stratum.check()?;
        Ok(stratum)
    }

    fn check(&self) -> Result<()> {
        if self.lower.is_empty() || self.lower.len() != self.sides.len() {
            return Err(Error::MalformedStratum(format!(
                "box with {} lower coordinates and {} sides",
                self.lower.len(),
                self.sides.len()
            )));
        }
        if let Some(s) = self.sides.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::MalformedStratum(format!("non-positive box side {s}")));
        }
        if self.lower.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedStratum("non-finite box corner".into()));
        }
        Ok(())
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn sides(&self) -> &[f64] {
        &self.sides
    }

    pub fn upper(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.sides).map(|(l, s)| l + s).collect()
    }
}

/// Which half of the prism's bounding rectangle is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `conv{(a1,a2), (a1+2b,a2), (a1,a2+b)}`, touching the anchor corner.
    Lower,
    /// The complementary triangle, touching the far corner.
    Upper,
}

impl Orientation {
    pub fn flipped(self) -> Self {
        match self {
            Orientation::Lower => Orientation::Upper,
            Orientation::Upper => Orientation::Lower,
        }
    }
}

/// Triangular prism over `[a1, a1+2b] × [a2, a2+b] × Π_{k≥3} [a_k, a_k+b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrianglePrism {
    anchor: Vec<f64>,
    #[serde(rename = "b")]
    halfwidth: f64,
    orientation: Orientation,
}

impl TrianglePrism {
    pub fn new(anchor: Vec<f64>, halfwidth: f64, orientation: Orientation) -> Result<Self> {
        let prism = Self {
            anchor,
            halfwidth,
            orientation,
        };
        prism.check()?;
        Ok(prism)
    }

    fn check(&self) -> Result<()> {
        if self.anchor.len() < 2 {
            return Err(Error::MalformedStratum(
                "triangular prisms need at least two dimensions".into(),
            ));
        }
        if !(self.halfwidth.is_finite() && self.halfwidth > 0.0) {
            return Err(Error::MalformedStratum(format!(
                "non-positive prism halfwidth {}",
                self.halfwidth
            )));
        }
        if self.anchor.iter().any(|v| !v.is_finite()) {
            return Err(Error::MalformedStratum("non-finite prism anchor".into()));
        }
        Ok(())
    }

    pub fn anchor(&self) -> &[f64] {
        &self.anchor
    }

    pub fn halfwidth(&self) -> f64 {
        self.halfwidth
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// Side lengths of the bounding rectangle: `2b, b, b, …`.
    pub fn bounding_sides(&self) -> Vec<f64> {
        let b = self.halfwidth;
        let mut sides = vec![b; self.anchor.len()];
        sides[0] = 2.0 * b;
        sides
    }

    pub fn bounding_box(&self) -> BoxStratum {
        BoxStratum {
            lower: self.anchor.clone(),
            sides: self.bounding_sides(),
        }
    }

    /// Corner area fraction of the `(x1, x2)` cross-section, in units of `b²`,
    /// for normalized coordinates `u ∈ [0, 2]`, `v ∈ [0, 1]`.
    #[inline]
    pub(crate) fn section_fraction(orientation: Orientation, u: f64, v: f64) -> f64 {
        let cut = (u + 2.0 * v - 2.0).max(0.0);
        let upper = 0.25 * cut * cut;
        match orientation {
            Orientation::Upper => upper,
            Orientation::Lower => u * v - upper,
        }
    }

    fn normalized(&self, x: &[f64]) -> (f64, f64) {
        let b = self.halfwidth;
        let u = ((x[0] - self.anchor[0]) / b).clamp(0.0, 2.0);
        let v = ((x[1] - self.anchor[1]) / b).clamp(0.0, 1.0);
        (u, v)
    }

    /// Signed distance-like slack of the diagonal constraint; positive inside.
    fn diagonal_slack(&self, x: &[f64]) -> f64 {
        let lhs = (x[0] - self.anchor[0]) + 2.0 * (x[1] - self.anchor[1]);
        let slack = (2.0 * self.halfwidth - lhs) / 5f64.sqrt();
        match self.orientation {
            Orientation::Lower => slack,
            Orientation::Upper => -slack,
        }
    }
}

/// A single partition cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Stratum {
    Box(BoxStratum),
    Prism(TrianglePrism),
}

impl Stratum {
    pub fn check(&self) -> Result<()> {
        match self {
            Stratum::Box(b) => b.check(),
            Stratum::Prism(p) => p.check(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Stratum::Box(b) => b.lower.len(),
            Stratum::Prism(p) => p.anchor.len(),
        }
    }

    pub fn volume(&self) -> f64 {
        match self {
            Stratum::Box(b) => b.sides.iter().product(),
            Stratum::Prism(p) => p.halfwidth.powi(p.anchor.len() as i32),
        }
    }

    /// Lower corner and side lengths of the smallest enclosing box.
    pub fn bounds(&self) -> (&[f64], Vec<f64>) {
        match self {
            Stratum::Box(b) => (&b.lower, b.sides.clone()),
            Stratum::Prism(p) => (&p.anchor, p.bounding_sides()),
        }
    }

    /// `|Ω ∩ (−∞, x]|`.
    pub fn corner_volume(&self, x: &[f64]) -> f64 {
        match self {
            Stratum::Box(b) => b
                .lower
                .iter()
                .zip(&b.sides)
                .zip(x)
                .map(|((&lo, &s), &xk)| overlap(lo, lo + s, xk))
                .product(),
            Stratum::Prism(p) => {
                let b = p.halfwidth;
                let (u, v) = p.normalized(x);
                let tail: f64 = (2..p.anchor.len())
                    .map(|k| overlap(p.anchor[k], p.anchor[k] + b, x[k]))
                    .product();
                b * b * TrianglePrism::section_fraction(p.orientation, u, v) * tail
            }
        }
    }

    /// Probability that a uniform point of the stratum lies in `(−∞, x]`.
    pub fn q(&self, x: &[f64]) -> f64 {
        (self.corner_volume(x) / self.volume()).clamp(0.0, 1.0)
    }

    /// Minimum slack over the stratum's defining half-spaces. Positive in the
    /// interior, zero on the boundary, negative outside.
    pub fn slack(&self, x: &[f64]) -> f64 {
        let (lower, sides) = self.bounds();
        let mut slack = f64::INFINITY;
        for k in 0..lower.len() {
            slack = slack.min(x[k] - lower[k]).min(lower[k] + sides[k] - x[k]);
        }
        if let Stratum::Prism(p) = self {
            slack = slack.min(p.diagonal_slack(x));
        }
        slack
    }

    /// Closed containment with tolerance `tol`.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.slack(x) >= -tol
    }
}

/// `q_i(x) = |Ω_i ∩ (−∞, x]| / |Ω_i|`. For an equivolume partition of `K` into
/// `N` strata this equals `(N / |K|) |Ω_i ∩ (−∞, x]|`.
pub fn q(stratum: &Stratum, x: &[f64]) -> f64 {
    stratum.q(x)
}

/// A domain box together with an ordered list of strata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    domain: DomainBox,
    strata: Vec<Stratum>,
}

impl Partition {
    /// Checks shapes and dimensions only; use [`Partition::validate`] for the
    /// tiling checks.
    pub fn new(domain: DomainBox, strata: Vec<Stratum>) -> Result<Self> {
        let partition = Self { domain, strata };
        partition.check_shapes()?;
        Ok(partition)
    }

    pub(crate) fn check_shapes(&self) -> Result<()> {
        self.domain.check()?;
        if self.strata.is_empty() {
            return Err(Error::InvalidParameter("partition has no strata".into()));
        }
        let d = self.domain.dim();
        for stratum in &self.strata {
            stratum.check()?;
            if stratum.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    found: stratum.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn strata(&self) -> &[Stratum] {
        &self.strata
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn len(&self) -> usize {
        self.strata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strata.is_empty()
    }

    pub fn q(&self, index: usize, x: &[f64]) -> f64 {
        self.strata[index].q(x)
    }

    /// First stratum whose volume differs from `|K| / N` beyond tolerance.
    pub fn equivolume_violation(&self) -> Option<(usize, f64)> {
        let n = self.len() as f64;
        let k = self.domain.volume();
        self.strata
            .iter()
            .map(|s| s.volume() * n / k)
            .enumerate()
            .find(|(_, rel)| (rel - 1.0).abs() >= VOLUME_TOL)
    }

    /// FNV-1a digest of the domain and strata, used to tag point sets.
    pub fn identity_hash(&self) -> u64 {
        let mut hash = Fnv::default();
        for v in self.domain.lower.iter().chain(&self.domain.upper) {
            hash.write_f64(*v);
        }
        for stratum in &self.strata {
            match stratum {
                Stratum::Box(b) => {
                    hash.write_u64(0);
                    b.lower.iter().chain(&b.sides).for_each(|v| hash.write_f64(*v));
                }
                Stratum::Prism(p) => {
                    hash.write_u64(1 + p.orientation as u64);
                    p.anchor.iter().for_each(|v| hash.write_f64(*v));
                    hash.write_f64(p.halfwidth);
                }
            }
        }
        hash.0
    }

    /// Volume, equivolume, and probe-based coverage checks.
    pub fn validate(&self, probe_count: usize, seed: u64) -> ValidationReport {
        validate_partition(self, probe_count, seed)
    }

    /// Validates and converts any issue into an error.
    pub fn ensure_valid(&self, probe_count: usize, seed: u64) -> Result<()> {
        let report = self.validate(probe_count, seed);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidPartition(Box::new(report)))
        }
    }
}

struct Fnv(u64);

impl Default for Fnv {
    fn default() -> Self {
        Fnv(0xcbf2_9ce4_8422_2325)
    }
}

impl Fnv {
    fn write_u64(&mut self, v: u64) {
        for byte in v.to_le_bytes() {
            self.0 ^= byte as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }

    fn write_f64(&mut self, v: f64) {
        self.write_u64(v.to_bits());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValidationIssue {
    VolumeMismatch { expected: f64, actual: f64 },
    NotEquivolume { indices: Vec<usize> },
    OutsideDomain { indices: Vec<usize> },
    CoverageGap { probes: usize, first: Vec<f64> },
    Overlap { pairs: Vec<(usize, usize)> },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationIssue::VolumeMismatch { expected, actual } => {
                write!(f, "VolumeMismatch: strata sum to {actual}, domain has {expected}")
            }
            ValidationIssue::NotEquivolume { indices } => {
                write!(f, "NotEquivolume: strata {indices:?}")
            }
            ValidationIssue::OutsideDomain { indices } => {
                write!(f, "OutsideDomain: strata {indices:?}")
            }
            ValidationIssue::CoverageGap { probes, first } => {
                write!(f, "CoverageGap: {probes} probes uncovered, first at {first:?}")
            }
            ValidationIssue::Overlap { pairs } => write!(f, "Overlap: strata pairs {pairs:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub probes_checked: usize,
    pub probes_skipped: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_volume_mismatch(&self) -> bool {
        self.issues
            .iter()
            .any(|i| matches!(i, ValidationIssue::VolumeMismatch { .. }))
    }

    pub fn has_coverage_gap(&self) -> bool {
        self.issues
            .iter()
            .any(|i| matches!(i, ValidationIssue::CoverageGap { .. }))
    }

    pub fn has_overlap(&self) -> bool {
        self.issues
            .iter()
            .any(|i| matches!(i, ValidationIssue::Overlap { .. }))
    }

    pub fn is_not_equivolume(&self) -> bool {
        self.issues
            .iter()
            .any(|i| matches!(i, ValidationIssue::NotEquivolume { .. }))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_valid() {
            return write!(
                f,
                "valid ({} probes, {} skipped near boundaries)",
                self.probes_checked, self.probes_skipped
            );
        }
        let issues: Vec<String> = self.issues.iter().map(ToString::to_string).collect();
        write!(f, "{}", issues.join("; "))
    }
}

/// Checks that the strata sum to `|K|`, all have volume `|K| / N`, lie inside
/// `K`, and cover every pseudo-random probe point exactly once.
pub fn validate_partition(partition: &Partition, probe_count: usize, seed: u64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let domain = &partition.domain;
    let d = domain.dim();
    let k_volume = domain.volume();
    let n = partition.len() as f64;

    let total: f64 = partition.strata.iter().map(Stratum::volume).sum();
    if ((total - k_volume) / k_volume).abs() >= VOLUME_TOL {
        report.issues.push(ValidationIssue::VolumeMismatch {
            expected: k_volume,
            actual: total,
        });
    }

    let uneven: Vec<usize> = partition
        .strata
        .iter()
        .enumerate()
        .filter(|(_, s)| (s.volume() * n / k_volume - 1.0).abs() >= VOLUME_TOL)
        .map(|(i, _)| i)
        .collect();
    if !uneven.is_empty() {
        report.issues.push(ValidationIssue::NotEquivolume { indices: uneven });
    }

    let outside: Vec<usize> = partition
        .strata
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            let (lower, sides) = s.bounds();
            !(0..d).all(|k| domain.contains_interval(k, lower[k], lower[k] + sides[k]))
        })
        .map(|(i, _)| i)
        .collect();
    if !outside.is_empty() {
        report.issues.push(ValidationIssue::OutsideDomain { indices: outside });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gaps = 0usize;
    let mut first_gap = None;
    let mut overlaps = BTreeSet::new();
    let mut unit = vec![0.0; d];
    for _ in 0..probe_count {
        unit.iter_mut().for_each(|u| *u = rng.gen::<f64>());
        let probe = domain.from_unit(&unit);
        let mut near_boundary = false;
        let mut inside = Vec::new();
        for (i, stratum) in partition.strata.iter().enumerate() {
            let slack = stratum.slack(&probe);
            if slack.abs() < BOUNDARY_TOL {
                near_boundary = true;
                break;
            }
            if slack > 0.0 {
                inside.push(i);
            }
        }
        if near_boundary {
            report.probes_skipped += 1;
            continue;
        }
        report.probes_checked += 1;
        match inside.len() {
            0 => {
                gaps += 1;
                first_gap.get_or_insert_with(|| probe.clone());
            }
            1 => {}
            _ => {
                for (a, &i) in inside.iter().enumerate() {
                    for &j in &inside[a + 1..] {
                        overlaps.insert((i, j));
                    }
                }
            }
        }
    }
    if gaps > 0 {
        report.issues.push(ValidationIssue::CoverageGap {
            probes: gaps,
            first: first_gap.unwrap_or_default(),
        });
    }
    if !overlaps.is_empty() {
        report.issues.push(ValidationIssue::Overlap {
            pairs: overlaps.into_iter().collect(),
        });
    }
    report
}

//! Exact expected squared L2-discrepancy of stratified samples.
//!
//! For an equivolume partition `Ω` of a box `K` into `N` strata,
//!
//! ```text
//! E L2²(P_Ω) = 1 / (N² |K|) · Σ_i ∫_K q_i(x) (1 − q_i(x)) dx,
//! ```
//!
//! where `q_i(x)` is the chance that the point of stratum `i` falls in
//! `(−∞, x]`. Every supported stratum has a separable `q_i`: a product of
//! one-dimensional ramps, with the first two axes replaced by the triangle
//! cross-section for prisms. Each factor is a piecewise polynomial of low
//! degree, integrated exactly with fixed Gauss rules on its pieces.
//!
//! The module also carries the closed forms for the local improvement of
//! jittered sampling in the unit square: the per-position gain
//! `c0 m⁻⁶ + c1 z1 m⁻⁵ − c2 z2 m⁻⁵`, the region where it is positive, and
//! the total gain from modifying every second column.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DomainBox, Partition, Stratum, TrianglePrism, VOLUME_TOL};
use crate::partitions::{self, every_second_column, PairPosition, PairSplit, VariantName};
use crate::quadrature::{CompensatedSum, GaussLegendre};

/// Nodes per axis; exact for the degree-4 integrands of `q²`.
const RULE_POINTS: usize = 4;

/// Constants of the improvement law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImprovementConstants;

impl ImprovementConstants {
    /// Gain of a single corner pair, in units of `m⁻⁶`.
    pub const C0: f64 = 2.0 / 45.0;
    /// Gain per unit of horizontal offset `z1`, in units of `m⁻⁵`.
    pub const C1: f64 = 1.0 / 15.0;
    /// Loss per unit of vertical offset `z2`, in units of `m⁻⁵`.
    pub const C2: f64 = 1.0 / 5.0;
    /// `c0 + c1`, bounding every per-position gain by `c3 m⁻⁵`.
    pub const C3: f64 = Self::C0 + Self::C1;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Piecewise Gauss integration of the stratum probabilities.
    Exact,
    /// Closed-form expression.
    ClosedForm,
}

/// Expected squared L2-discrepancy with per-stratum diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpectedL2 {
    pub value: f64,
    pub method: Method,
    /// `∫_K q_i` per stratum.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub per_stratum_q: Vec<f64>,
    /// `∫_K q_i²` per stratum.
    #[serde(rename = "per_stratum_q2")]
    pub per_stratum_q2: Vec<f64>,
    #[serde(skip)]
    domain: Option<DomainBox>,
}

impl ExpectedL2 {
    fn closed_form(value: f64) -> Self {
        Self {
            value,
            method: Method::ClosedForm,
            per_stratum_q: Vec::new(),
            per_stratum_q2: Vec::new(),
            domain: None,
        }
    }

    /// The same quantity through the mean identity `Σ_i q_i = N |K ∩ (−∞,x]| / |K|`:
    ///
    /// ```text
    /// 1/(N |K|²) ∫_K |K ∩ (−∞, x]| dx − 1/(N² |K|) Σ_i ∫_K q_i²
    /// ```
    ///
    /// Only available for engine results.
    pub fn via_mean_identity(&self) -> Option<f64> {
        let domain = self.domain.as_ref()?;
        let n = self.per_stratum_q2.len() as f64;
        let k = domain.volume();
        let corner_integral: f64 = (0..domain.dim())
            .map(|axis| 0.5 * domain.side(axis).powi(2))
            .product();
        let q2: f64 = self.per_stratum_q2.iter().copied().collect::<CompensatedSum>().value();
        Some(corner_integral / (n * k * k) - q2 / (n * n * k))
    }
}

/// Integrals of a piecewise-linear ramp `clamp((t − lo) / s, 0, 1)` and its
/// square over `[lo, domain_hi]`.
fn ramp_moments(rule: &GaussLegendre, lo: f64, side: f64, domain_hi: f64) -> (f64, f64) {
    let hi = lo + side;
    let ramp = |t: f64| ((t - lo) / side).clamp(0.0, 1.0);
    let first = rule.integrate(lo, hi, ramp);
    let second = rule.integrate(lo, hi, |t| ramp(t).powi(2));
    let plateau = (domain_hi - hi).max(0.0);
    (first + plateau, second + plateau)
}

/// Integrals of the prism cross-section fraction and its square over the
/// `(x1, x2)` face of the domain.
fn section_moments(rule: &GaussLegendre, prism: &TrianglePrism, domain: &DomainBox) -> (f64, f64) {
    let a1 = prism.anchor()[0];
    let a2 = prism.anchor()[1];
    let b = prism.halfwidth();
    let orientation = prism.orientation();
    let fraction = |x1: f64, x2: f64| {
        let u = ((x1 - a1) / b).clamp(0.0, 2.0);
        let v = ((x2 - a2) / b).clamp(0.0, 1.0);
        TrianglePrism::section_fraction(orientation, u, v)
    };

    // The diagonal `u + 2v = 2` splits the bounding rectangle into two
    // triangles on which the fraction is polynomial.
    let below = [(a1, a2), (a1 + 2.0 * b, a2), (a1, a2 + b)];
    let above = [(a1 + 2.0 * b, a2), (a1 + 2.0 * b, a2 + b), (a1, a2 + b)];
    let mut first = 0.0;
    let mut second = 0.0;
    for triangle in [below, above] {
        first += rule.integrate_triangle(triangle, fraction);
        second += rule.integrate_triangle(triangle, |x1, x2| fraction(x1, x2).powi(2));
    }

    // Strips where one coordinate dominates the rectangle.
    let top = (domain.upper()[1] - (a2 + b)).max(0.0);
    let right = (domain.upper()[0] - (a1 + 2.0 * b)).max(0.0);
    let top_edge = |x1: f64| fraction(x1, a2 + b);
    let right_edge = |x2: f64| fraction(a1 + 2.0 * b, x2);
    first += top * rule.integrate(a1, a1 + 2.0 * b, top_edge);
    second += top * rule.integrate(a1, a1 + 2.0 * b, |x| top_edge(x).powi(2));
    first += right * rule.integrate(a2, a2 + b, right_edge);
    second += right * rule.integrate(a2, a2 + b, |x| right_edge(x).powi(2));
    first += top * right;
    second += top * right;

    (first, second)
}

/// `(∫_K q, ∫_K q²)` for one stratum.
fn stratum_moments(rule: &GaussLegendre, stratum: &Stratum, domain: &DomainBox) -> (f64, f64) {
    match stratum {
        Stratum::Box(cell) => {
            let mut first = 1.0;
            let mut second = 1.0;
            for (axis, (&lo, &side)) in cell.lower().iter().zip(cell.sides()).enumerate() {
                let (m1, m2) = ramp_moments(rule, lo, side, domain.upper()[axis]);
                first *= m1;
                second *= m2;
            }
            (first, second)
        }
        Stratum::Prism(prism) => {
            let (mut first, mut second) = section_moments(rule, prism, domain);
            let b = prism.halfwidth();
            for axis in 2..prism.anchor().len() {
                let (m1, m2) = ramp_moments(rule, prism.anchor()[axis], b, domain.upper()[axis]);
                first *= m1;
                second *= m2;
            }
            (first, second)
        }
    }
}

fn check_engine_input(partition: &Partition) -> Result<()> {
    partition.check_shapes()?;
    if let Some((index, relative)) = partition.equivolume_violation() {
        return Err(Error::NotEquivolume { index, relative });
    }
    let domain = partition.domain();
    for (index, stratum) in partition.strata().iter().enumerate() {
        let (lower, sides) = stratum.bounds();
        for axis in 0..domain.dim() {
            let tol = VOLUME_TOL * domain.side(axis).max(1.0);
            if lower[axis] < domain.lower()[axis] - tol
                || lower[axis] + sides[axis] > domain.upper()[axis] + tol
            {
                return Err(Error::MalformedStratum(format!(
                    "stratum {index} leaves the domain along axis {axis}"
                )));
            }
        }
    }
    Ok(())
}

/// Exact expected squared L2-discrepancy of the stratified sample drawn from
/// `partition`. The partition must be equivolume and its strata must lie in
/// the domain; coverage is not re-checked here.
pub fn expected_l2_sq(partition: &Partition) -> Result<ExpectedL2> {
    check_engine_input(partition)?;
    let rule = GaussLegendre::new(RULE_POINTS);
    let domain = partition.domain();
    let (per_stratum_q, per_stratum_q2): (Vec<f64>, Vec<f64>) = partition
        .strata()
        .iter()
        .map(|s| stratum_moments(&rule, s, domain))
        .unzip();

    let mut variance = CompensatedSum::new();
    for (m1, m2) in per_stratum_q.iter().zip(&per_stratum_q2) {
        variance.add(m1 - m2);
    }
    let n = partition.len() as f64;
    let value = variance.value() / (n * n * domain.volume());
    Ok(ExpectedL2 {
        value,
        method: Method::Exact,
        per_stratum_q,
        per_stratum_q2,
        domain: Some(domain.clone()),
    })
}

/// Engine difference between the two splits of the `2 × 1 × … × 1`
/// rectangle into two cubes and into two triangular prisms.
pub fn pair_gap(d: usize) -> Result<f64> {
    let squares = partitions::pair_rectangle(d, 1.0, PairSplit::Squares)?;
    let triangles = partitions::pair_rectangle(d, 1.0, PairSplit::Triangles)?;
    Ok(expected_l2_sq(&squares)?.value - expected_l2_sq(&triangles)?.value)
}

/// `3⁻ᵈ / 20`.
pub fn pair_gap_closed_form(d: usize) -> f64 {
    3f64.powi(-(d as i32)) / 20.0
}

/// Improvement of `jittered(m, d)` from triangulating the corner pair:
/// `(2/5) 3⁻ᵈ m⁻³ᵈ`.
pub fn corner_gain(m: usize, d: usize) -> f64 {
    0.4 * 3f64.powi(-(d as i32)) * (m as f64).powi(-3 * d as i32)
}

/// `m⁻²ᵈ [(m/2)ᵈ − (m/2 − 1/6)ᵈ]`, the jittered value in closed form.
pub fn jittered_closed_form(m: usize, d: usize) -> f64 {
    let mf = m as f64;
    let di = d as i32;
    ((0.5 * mf).powi(di) - (0.5 * mf - 1.0 / 6.0).powi(di)) / mf.powi(2 * di)
}

/// Closed-form value of a named two-dimensional variant: the jittered value
/// minus the per-position gains.
pub fn variant_closed_form(m: usize, name: VariantName) -> Result<ExpectedL2> {
    let mut value = CompensatedSum::new();
    value.add(jittered_closed_form(m, 2));
    for z in name.positions(m) {
        value.add(-delta_pair(m, z)?);
    }
    Ok(ExpectedL2::closed_form(value.value()))
}

/// Reduction of the expected squared L2-discrepancy of `jittered(m, 2)` when
/// the pair at `z` is triangulated. Negative values mean the modification
/// makes things worse.
pub fn delta_pair(m: usize, z: PairPosition) -> Result<f64> {
    z.check(m)?;
    let mf = m as f64;
    Ok(delta_at(mf, z.z1(m), z.z2(m)))
}

fn delta_at(m: f64, z1: f64, z2: f64) -> f64 {
    use ImprovementConstants as C;
    C::C0 * m.powi(-6) + (C::C1 * z1 - C::C2 * z2) * m.powi(-5)
}

/// Upper end of the improvement region at horizontal offset `z1`:
/// `c0 / (c2 m) + (c1 / c2) z1`.
pub fn region_boundary(m: usize, z1: f64) -> f64 {
    use ImprovementConstants as C;
    C::C0 / (C::C2 * m as f64) + C::C1 / C::C2 * z1
}

/// Strict membership of real coordinates in the improvement region.
pub fn in_region(m: usize, z1: f64, z2: f64) -> bool {
    z2 < region_boundary(m, z1)
}

/// Whether triangulating the pair at a grid position improves jittered
/// sampling. On the grid the condition `z2 < 2/(9m) + z1/3` reads
/// `9j < 2 + 3i` and is evaluated in integers. Inadmissible positions are
/// never in the region.
pub fn in_improvement_region(m: usize, z: PairPosition) -> bool {
    z.is_admissible(m) && 9 * z.j < 2 + 3 * z.i
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSite {
    pub position: PairPosition,
    pub z1: f64,
    pub z2: f64,
    pub in_region: bool,
    pub delta: f64,
}

/// Accumulated gain over every second column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub m: usize,
    /// All candidate sites (every second column, all rows).
    pub sites: Vec<GainSite>,
    /// Sum of `delta` over the sites in the improvement region.
    pub total: f64,
    /// `c3 m⁻³`.
    pub upper_bound: f64,
    /// `(c1 / 4) m⁻⁵ · #{sites with z1 ≥ 1/2, z2 ≤ c1 / (4 c2)}`.
    pub lower_bound: f64,
    /// Number of sites in the lower-bound rectangle.
    pub lower_bound_sites: usize,
}

impl GainReport {
    pub fn improving_sites(&self) -> impl Iterator<Item = &GainSite> {
        self.sites.iter().filter(|s| s.in_region)
    }
}

pub fn total_gain(m: usize) -> Result<GainReport> {
    use ImprovementConstants as C;
    if m < 2 {
        return Err(Error::InvalidParameter(format!("total gain needs m ≥ 2, got {m}")));
    }
    let mut sites = Vec::new();
    let mut total = CompensatedSum::new();
    let mut lower_bound_sites = 0;
    for i in every_second_column(m) {
        for j in 0..m {
            let position = PairPosition::new(i, j);
            let delta = delta_pair(m, position)?;
            let in_region = in_improvement_region(m, position);
            if in_region {
                total.add(delta);
            }
            // z1 ≥ 1/2 and z2 ≤ c1 / (4 c2) = 1/12
            if 2 * i >= m && 12 * j <= m {
                lower_bound_sites += 1;
            }
            sites.push(GainSite {
                position,
                z1: position.z1(m),
                z2: position.z2(m),
                in_region,
                delta,
            });
        }
    }
    let mf = m as f64;
    Ok(GainReport {
        m,
        sites,
        total: total.value(),
        upper_bound: C::C3 * mf.powi(-3),
        lower_bound: C::C1 / 4.0 * mf.powi(-5) * lower_bound_sites as f64,
        lower_bound_sites,
    })
}

/// `(2⁻ᵈ − 3⁻ᵈ) / N`, the expected squared L2-discrepancy of `N` independent
/// uniform points in `[0, 1]^d`.
pub fn iid_expected_l2_sq(n: usize, d: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one point".into()));
    }
    let di = d as i32;
    Ok((2f64.powi(-di) - 3f64.powi(-di)) / n as f64)
}

/// Expected squared L2-discrepancy of two independent points in `[0, 1]`
/// whose distribution functions average to the identity: `Y1` uniform on
/// `[0, a]` and `Y2` with distribution function `2x − F_{Y1}(x)`.
///
/// `a = 1/2` gives the two-cell stratification, `a = 1` two independent
/// uniform points.
pub fn pair_family_expected_l2_sq(a: f64) -> Result<f64> {
    if !(0.5..=1.0).contains(&a) {
        return Err(Error::InvalidParameter(format!(
            "pair family parameter {a} outside [1/2, 1]"
        )));
    }
    // ∫ F1 (1 − F1) with F1 = min(x/a, 1)
    let first = a / 6.0;
    // F2 = c x on [0, a] with c = 2 − 1/a, then 2x − 1 on [a, 1]
    let c = 2.0 - 1.0 / a;
    let g = |t: f64| t * t / 2.0 - t * t * t / 3.0;
    let second = c * a * a / 2.0 - c * c * a * a * a / 3.0 + 0.5 * (g(1.0) - g(2.0 * a - 1.0));
    Ok(0.25 * (first + second))
}

//! Flexibility offers: envelopes, lattice shift grids and random shift draws.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Network;
use crate::settings::{Distribution, FlexShape, SamplingParams, ValidatedSettings};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Load,
    Generator,
}

/// A setpoint change of one element, MW and MVAr.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Shift {
    pub p: f64,
    pub q: f64,
}

impl Shift {
    pub const ZERO: Shift = Shift { p: 0.0, q: 0.0 };

    pub fn new(p: f64, q: f64) -> Self {
        Shift { p, q }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FspOffer {
    pub kind: ElementKind,
    /// Index into `Network::loads` or `Network::sgens`.
    pub element: usize,
    pub shape: FlexShape,
    pub discrete: bool,
    pub p: f64,
    pub q: f64,
    pub s_max: f64,
    pub dp: f64,
    pub dq: f64,
    /// Absolute active power band `[lo, hi]` replacing the default `[0, s_max]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_range: Option<(f64, f64)>,
}

impl fmt::Display for FspOffer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ElementKind::Load => write!(f, "load {}", self.element),
            ElementKind::Generator => write!(f, "sgen {}", self.element),
        }
    }
}

impl FspOffer {
    pub fn validate(&self) -> Result<()> {
        if !(self.dp > 0.0 && self.dq > 0.0) {
            return Err(Error::Config(format!("{self}: dp and dq must be positive")));
        }
        if !(self.s_max > 0.0) {
            return Err(Error::Config(format!("{self}: sn_mva must be positive")));
        }
        if self.p.hypot(self.q) > self.s_max * (1.0 + 1e-12) + EPS {
            return Err(Error::Config(format!(
                "{self}: base point ({}, {}) lies outside its rating {} MVA",
                self.p, self.q, self.s_max
            )));
        }
        let (lo, hi) = self.p_band();
        if !(lo <= hi) || self.p < lo - EPS || self.p > hi + EPS {
            return Err(Error::Config(format!(
                "{self}: active power band [{lo}, {hi}] excludes the base point"
            )));
        }
        Ok(())
    }

    /// Output active power band.
    pub fn p_band(&self) -> (f64, f64) {
        self.p_range.unwrap_or((0.0, self.s_max))
    }

    /// Half-width of the reactive band at output active power `p_out`.
    pub fn q_half_width(&self, p_out: f64) -> f64 {
        match self.shape {
            FlexShape::Smax => (self.s_max * self.s_max - p_out * p_out).max(0.0).sqrt(),
            FlexShape::PQmax => self.s_max,
        }
    }

    /// Whether the shifted output lies in the envelope.
    pub fn admits(&self, s: Shift) -> bool {
        if self.discrete {
            return s == Shift::ZERO || s == self.full_reduction();
        }
        let (lo, hi) = self.p_band();
        let p = self.p + s.p;
        let q = self.q + s.q;
        p >= lo - EPS && p <= hi + EPS && q.abs() <= self.q_half_width(p.clamp(lo, hi)) + EPS
    }

    pub fn full_reduction(&self) -> Shift {
        Shift::new(-self.p, -self.q)
    }

    /// Width of the continuous shift range in P and the widest range in Q.
    pub fn ranges(&self) -> (f64, f64) {
        if self.discrete {
            return (self.p.abs(), self.q.abs());
        }
        let (lo, hi) = self.p_band();
        let widest = if lo <= 0.0 && hi >= 0.0 { 0.0 } else if lo > 0.0 { lo } else { hi };
        (hi - lo, 2.0 * self.q_half_width(widest))
    }

    /// Extreme points of the envelope, as shifts.
    pub fn vertices(&self) -> Vec<Shift> {
        if self.discrete {
            return vec![Shift::ZERO, self.full_reduction()];
        }
        let (lo, hi) = self.p_band();
        let mut out: Vec<Shift> = Vec::with_capacity(4);
        for p in [lo, hi] {
            let h = self.q_half_width(p);
            for q in [-h, h] {
                let s = Shift::new(p - self.p, q - self.q);
                if !out.iter().any(|o| (o.p - s.p).abs() < 1e-12 && (o.q - s.q).abs() < 1e-12) {
                    out.push(s);
                }
            }
        }
        out
    }
}

/// Lattice of admissible shifts of one offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftGrid {
    pub p_axis: Vec<f64>,
    pub q_axis: Vec<f64>,
    /// P-major, `mask[i * q_axis.len() + j]` for `(p_axis[i], q_axis[j])`.
    pub mask: Vec<bool>,
}

impl ShiftGrid {
    pub fn admits(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.q_axis.len() + j]
    }

    /// Admissible shifts in P-major order.
    pub fn points(&self) -> Vec<Shift> {
        let nq = self.q_axis.len();
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(k, _)| Shift::new(self.p_axis[k / nq], self.q_axis[k % nq]))
            .collect()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn lattice_index(x: f64, step: f64, up: bool) -> i64 {
    if up {
        (x / step - EPS).ceil() as i64
    } else {
        (x / step + EPS).floor() as i64
    }
}

/// Discretize an offer on its dp/dq lattice.
pub fn build_shift_grid(offer: &FspOffer) -> Result<ShiftGrid> {
    offer.validate()?;
    if offer.discrete {
        let red = offer.full_reduction();
        let mut p_axis = vec![red.p.min(0.0), red.p.max(0.0)];
        let mut q_axis = vec![red.q.min(0.0), red.q.max(0.0)];
        p_axis.dedup();
        q_axis.dedup();
        let mut mask = vec![false; p_axis.len() * q_axis.len()];
        for s in [Shift::ZERO, red] {
            let i = p_axis.iter().position(|&x| x == s.p).unwrap();
            let j = q_axis.iter().position(|&x| x == s.q).unwrap();
            mask[i * q_axis.len() + j] = true;
        }
        return Ok(ShiftGrid { p_axis, q_axis, mask });
    }
    let (lo, hi) = offer.p_band();
    let (dp, dq) = (offer.dp, offer.dq);
    let k0 = lattice_index(lo - offer.p, dp, true);
    let k1 = lattice_index(hi - offer.p, dp, false);
    let mut rows = Vec::new();
    for k in k0..=k1 {
        let h = offer.q_half_width(offer.p + k as f64 * dp);
        let m0 = lattice_index(-h - offer.q, dq, true);
        let m1 = lattice_index(h - offer.q, dq, false);
        rows.push((k, m0, m1));
    }
    let m_min = rows.iter().filter(|r| r.1 <= r.2).map(|r| r.1).min();
    let m_max = rows.iter().filter(|r| r.1 <= r.2).map(|r| r.2).max();
    let (Some(m_min), Some(m_max)) = (m_min, m_max) else {
        return Err(Error::Config(format!("{offer}: no admissible shift on the dp/dq lattice")));
    };
    let p_axis: Vec<f64> = (k0..=k1).map(|k| k as f64 * dp).collect();
    let q_axis: Vec<f64> = (m_min..=m_max).map(|m| m as f64 * dq).collect();
    let nq = q_axis.len();
    let mut mask = vec![false; p_axis.len() * nq];
    for (i, &(_, m0, m1)) in rows.iter().enumerate() {
        for m in m0..=m1 {
            mask[i * nq + (m - m_min) as usize] = true;
        }
    }
    Ok(ShiftGrid { p_axis, q_axis, mask })
}

/// Split offer indices into those resolved by the lattice and those narrower than one cell.
pub fn classify_small(offers: &[FspOffer]) -> (Vec<usize>, Vec<usize>) {
    offers.iter().enumerate().map(|(i, o)| (i, is_small(o))).fold(
        (Vec::new(), Vec::new()),
        |(mut regular, mut small), (i, s)| {
            if s {
                small.push(i);
            } else {
                regular.push(i);
            }
            (regular, small)
        },
    )
}

pub fn is_small(offer: &FspOffer) -> bool {
    if offer.discrete {
        return false;
    }
    let (rp, rq) = offer.ranges();
    rp < offer.dp - EPS || rq < offer.dq - EPS
}

fn kumaraswamy_inv(u: f64, a: f64, b: f64) -> f64 {
    (1.0 - (1.0 - u).powf(1.0 / b)).powf(1.0 / a)
}

fn draw_unit(rng: &mut ChaCha8Rng, dist: Distribution, params: &SamplingParams) -> f64 {
    let u: f64 = rng.gen();
    match dist {
        Distribution::Kumaraswamy => kumaraswamy_inv(u, params.kumaraswamy_a, params.kumaraswamy_b),
        Distribution::Uniform | Distribution::Hard => u,
    }
}

fn draw_shift(offer: &FspOffer, rng: &mut ChaCha8Rng, dist: Distribution, params: &SamplingParams) -> Shift {
    if dist == Distribution::Hard && rng.gen_bool(params.hard_vertex_probability) {
        let v = offer.vertices();
        return v[rng.gen_range(0..v.len())];
    }
    if offer.discrete {
        return if rng.gen_bool(0.5) { Shift::ZERO } else { offer.full_reduction() };
    }
    let (lo, hi) = offer.p_band();
    let p = lo + (hi - lo) * draw_unit(rng, dist, params);
    let h = offer.q_half_width(p);
    let q = -h + 2.0 * h * draw_unit(rng, dist, params);
    Shift::new(p - offer.p, q - offer.q)
}

/// Draw `n` joint shift vectors, one shift per offer, reproducibly from `seed`.
pub fn sample_shifts(
    offers: &[FspOffer],
    n: usize,
    dist: Distribution,
    params: &SamplingParams,
    seed: u64,
) -> Vec<Vec<Shift>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| offers.iter().map(|o| draw_shift(o, &mut rng, dist, params)).collect())
        .collect()
}

/// Offers for the configured load and generator indices, loads first.
pub fn offers_from_settings(net: &Network, s: &ValidatedSettings) -> Result<Vec<FspOffer>> {
    let mut out = Vec::with_capacity(s.fsp_count());
    for &i in &s.fsp_load_indices {
        let l = &net.loads[i];
        out.push(FspOffer {
            kind: ElementKind::Load,
            element: i,
            shape: s.flex_shape,
            discrete: false,
            p: l.p(),
            q: l.q(),
            s_max: l.sn_mva,
            dp: s.dp,
            dq: s.dq,
            p_range: None,
        });
    }
    for &i in &s.fsp_dg_indices {
        let g = &net.sgens[i];
        out.push(FspOffer {
            kind: ElementKind::Generator,
            element: i,
            shape: s.flex_shape,
            discrete: s.non_linear_fsps.contains(&i),
            p: g.p(),
            q: g.q(),
            s_max: g.sn_mva,
            dp: s.dp,
            dq: s.dq,
            p_range: None,
        });
    }
    for o in &out {
        o.validate()?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn dg(p: f64, q: f64, s: f64, dp: f64, dq: f64) -> FspOffer {
        FspOffer {
            kind: ElementKind::Generator,
            element: 0,
            shape: FlexShape::Smax,
            discrete: false,
            p,
            q,
            s_max: s,
            dp,
            dq,
            p_range: None,
        }
    }

    fn has(grid: &ShiftGrid, p: f64, q: f64) -> bool {
        grid.points().iter().any(|s| (s.p - p).abs() < 1e-12 && (s.q - q).abs() < 1e-12)
    }

    #[test]
    fn smax_rejects_outside_circle() {
        let g = build_shift_grid(&dg(1.0, 0.0, 1.0, 0.5, 0.5)).unwrap();
        assert_eq!(g.p_axis, vec![-1.0, -0.5, 0.0]);
        assert!(has(&g, 0.0, 0.0));
        assert!(!has(&g, 0.0, 0.5));
        assert!(has(&g, -0.5, 0.5));
    }

    #[test]
    fn pqmax_admits_rectangle() {
        let mut o = dg(1.0, 0.0, 1.0, 0.5, 0.5);
        o.shape = FlexShape::PQmax;
        let g = build_shift_grid(&o).unwrap();
        assert!(has(&g, 0.0, 0.5));
        assert_eq!(g.count(), 3 * 5);
    }

    #[test]
    fn discrete_has_two_points() {
        let mut o = dg(2.0, 0.4, 2.5, 0.05, 0.1);
        o.discrete = true;
        let g = build_shift_grid(&o).unwrap();
        assert_eq!(g.points(), vec![Shift::new(-2.0, -0.4), Shift::ZERO]);
    }

    #[test]
    fn lattice_counts_match_closed_form() {
        let load = FspOffer { kind: ElementKind::Load, ..dg(0.15, 0.1, 0.2, 0.15, 0.3) };
        assert_eq!(build_shift_grid(&load).unwrap().count(), 3);
        assert_eq!(build_shift_grid(&dg(0.15, 0.05, 0.35, 0.15, 0.3)).unwrap().count(), 6);
        assert_eq!(build_shift_grid(&dg(0.4, 0.1, 0.646, 0.01, 0.02)).unwrap().count(), 3317);
        assert_eq!(build_shift_grid(&dg(0.025, 0.005, 0.04, 0.01, 0.02)).unwrap().count(), 13);
    }

    #[test]
    fn rating_below_base_point_rejected() {
        assert!(matches!(build_shift_grid(&dg(1.0, 1.0, 1.0, 0.1, 0.1)), Err(Error::Config(_))));
    }

    #[test]
    fn band_excluding_base_rejected() {
        let mut o = dg(0.5, 0.0, 1.0, 0.1, 0.1);
        o.p_range = Some((0.6, 1.0));
        assert!(build_shift_grid(&o).is_err());
    }

    #[test]
    fn band_override_allows_increase_only() {
        let mut o = dg(0.5, 0.0, 1.0, 0.25, 0.25);
        o.p_range = Some((0.5, 1.0));
        let g = build_shift_grid(&o).unwrap();
        assert_eq!(g.p_axis, vec![0.0, 0.25, 0.5]);
    }

    #[test]
    fn small_classification() {
        let tiny = dg(0.02, 0.0, 0.04, 0.05, 0.1);
        let big = dg(0.5, 0.0, 1.0, 0.05, 0.1);
        let (regular, small) = classify_small(&[tiny.clone(), big]);
        assert_eq!(regular, vec![1]);
        assert_eq!(small, vec![0]);
        assert_eq!(classify_small(&[]), (vec![], vec![]));
        let mut d = tiny;
        d.discrete = true;
        assert!(!is_small(&d));
    }

    #[test]
    fn degenerate_offer_samples_zero() {
        let mut o = dg(0.0, 0.0, 1.0, 0.1, 0.1);
        o.p_range = Some((0.0, 0.0));
        o.shape = FlexShape::Smax;
        o.s_max = 1e-300;
        for dist in Distribution::ALL {
            let s = sample_shifts(&[o.clone()], 1, *dist, &SamplingParams::default(), 3);
            assert_eq!(s[0][0], Shift::ZERO);
        }
    }

    #[test]
    fn seeded_sampling_repeats() {
        let offers = [dg(0.5, 0.1, 1.0, 0.1, 0.1), dg(0.2, 0.0, 0.3, 0.1, 0.1)];
        let p = SamplingParams::default();
        let a = sample_shifts(&offers, 50, Distribution::Uniform, &p, 7);
        let b = sample_shifts(&offers, 50, Distribution::Uniform, &p, 7);
        let c = sample_shifts(&offers, 50, Distribution::Uniform, &p, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 50);
        assert!(a.iter().all(|v| v.len() == 2));
    }

    #[test]
    fn hard_concentrates_on_vertices() {
        let o = dg(0.5, 0.1, 1.0, 0.1, 0.1);
        let v = o.vertices();
        let draws = sample_shifts(&[o], 10_000, Distribution::Hard, &SamplingParams::default(), 11);
        let on_vertex = draws.iter().filter(|d| v.contains(&d[0])).count();
        assert!(on_vertex as f64 / 10_000.0 >= 0.7, "{on_vertex}");
    }

    #[test]
    fn kumaraswamy_pushes_mass_to_extremes() {
        let o = dg(0.5, 0.0, 1.0, 0.1, 0.1);
        let p = SamplingParams::default();
        let edge = |dist| {
            sample_shifts(&[o.clone()], 4000, dist, &p, 5)
                .iter()
                .filter(|d| {
                    let x = o.p + d[0].p;
                    !(0.1..=0.9).contains(&x)
                })
                .count()
        };
        assert!(edge(Distribution::Kumaraswamy) > edge(Distribution::Uniform) * 3 / 2);
    }

    #[test]
    fn offers_follow_settings_order() {
        let net = crate::network::fixture("mv-oberrhein-like").unwrap();
        let s = crate::settings::validate_settings(
            &crate::settings::Settings {
                fsp_load_indices: vec![1, 2],
                fsp_dg_indices: vec![1],
                non_linear_fsps: vec![1],
                ..Default::default()
            },
            Some(&net),
        )
        .unwrap();
        let offers = offers_from_settings(&net, &s).unwrap();
        assert_eq!(offers.len(), 3);
        assert_eq!(offers[0].to_string(), "load 1");
        assert!(offers[2].discrete);
        assert_eq!(offers[2].kind, ElementKind::Generator);
    }

    fn arb_offer() -> impl Strategy<Value = FspOffer> {
        (0.05f64..2.0, 0.0f64..1.0, -1.0f64..1.0, 0.02f64..0.5, 0.02f64..0.5, any::<bool>()).prop_map(
            |(s, pf, qf, dp, dq, square)| {
                let p = s * pf * 0.9;
                let h = (s * s - p * p).sqrt();
                let mut o = dg(p, h * qf * 0.9, s, dp, dq);
                if square {
                    o.shape = FlexShape::PQmax;
                }
                o
            },
        )
    }

    proptest! {
        #[test]
        fn samples_stay_in_envelope(o in arb_offer(), seed in 0u64..1000, d in 0usize..3) {
            let dist = Distribution::ALL[d];
            for v in sample_shifts(&[o.clone()], 64, dist, &SamplingParams::default(), seed) {
                prop_assert!(o.admits(v[0]), "{:?}", v[0]);
            }
        }

        #[test]
        fn grid_points_admissible_and_contain_zero(o in arb_offer()) {
            let g = build_shift_grid(&o).unwrap();
            prop_assert!(g.points().contains(&Shift::ZERO));
            for s in g.points() {
                prop_assert!(o.admits(s));
            }
            for w in g.p_axis.windows(2) {
                prop_assert!((w[1] - w[0] - o.dp).abs() < 1e-9);
            }
        }

        #[test]
        fn smax_grid_inside_pqmax_grid(o in arb_offer()) {
            let mut circle = o.clone();
            circle.shape = FlexShape::Smax;
            let mut square = o;
            square.shape = FlexShape::PQmax;
            let sq = build_shift_grid(&square).unwrap().points();
            for s in build_shift_grid(&circle).unwrap().points() {
                prop_assert!(sq.iter().any(|t| (t.p - s.p).abs() < 1e-9 && (t.q - s.q).abs() < 1e-9));
            }
        }
    }
}

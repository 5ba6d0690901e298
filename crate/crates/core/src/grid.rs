//! Density of feasible combinations over the PCC (P, Q) plane.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Uniform axis of cell centers `start + k * step`, `k < len`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis<T> {
    pub start: T,
    pub step: T,
    pub len: usize,
}

impl<T: Scalar> Axis<T> {
    pub fn new(start: T, step: T, len: usize) -> Self {
        Axis { start, step, len }
    }

    /// Axis through `anchor` covering cell offsets `lo..=hi`.
    pub fn around(anchor: T, step: T, lo: i64, hi: i64) -> Self {
        Axis {
            start: anchor + step * T::of(lo as f64),
            step,
            len: (hi - lo + 1).max(0) as usize,
        }
    }

    pub fn center(&self, k: usize) -> T {
        self.start + self.step * T::of(k as f64)
    }

    pub fn centers(&self) -> Vec<T> {
        (0..self.len).map(|k| self.center(k)).collect()
    }

    pub fn end(&self) -> T {
        self.center(self.len.saturating_sub(1))
    }

    /// Bin holding `x`; bins are half-open `[center - step/2, center + step/2)`
    /// except that the upper edge of the last bin is included.
    pub fn bin(&self, x: T) -> Option<usize> {
        let t = (x - self.start) / self.step + T::of(0.5);
        if !(t >= T::zero()) {
            return None;
        }
        let k = t.floor().to_usize()?;
        if k < self.len {
            Some(k)
        } else if k == self.len && t == T::of(self.len as f64) {
            Some(self.len - 1)
        } else {
            None
        }
    }

    /// Same spacing and alignment within a relative tolerance of the step.
    pub fn matches(&self, other: &Axis<T>) -> bool {
        let tol = self.step.abs() * T::of(1e-9);
        self.len == other.len
            && (self.step - other.step).abs() <= tol
            && (self.start - other.start).abs() <= tol
    }

    /// Integer cell offset of `other`'s origin in this axis, if both are on one lattice.
    pub fn offset_of(&self, other: &Axis<T>) -> Option<i64> {
        let tol = T::of(1e-6);
        if (self.step - other.step).abs() > self.step.abs() * tol {
            return None;
        }
        let d = (other.start - self.start) / self.step;
        let r = d.round();
        ((d - r).abs() <= tol).then(|| r.to_i64()).flatten()
    }
}

/// Cell values over a P axis (MW) and a Q axis (MVAr), P-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaGrid<T> {
    pub p: Axis<T>,
    pub q: Axis<T>,
    values: Vec<T>,
}

impl<T: Scalar> FaGrid<T> {
    pub fn zeros(p: Axis<T>, q: Axis<T>) -> Self {
        FaGrid { values: vec![T::zero(); p.len * q.len], p, q }
    }

    pub fn from_values(p: Axis<T>, q: Axis<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != p.len * q.len {
            return Err(Error::Contract(format!(
                "{} values for a {}x{} grid",
                values.len(),
                p.len,
                q.len
            )));
        }
        if values.iter().any(|v| !(*v >= T::zero())) {
            return Err(Error::Contract("grid values must be finite and non-negative".into()));
        }
        Ok(FaGrid { p, q, values })
    }

    /// Count points into cells anchored at `anchor`, with axes sized to hold every point.
    ///
    /// Every point in `all` widens the axes; only points in `counted` add to a cell.
    pub fn histogram(anchor: (T, T), step: (T, T), all: &[(T, T)], counted: &[(T, T)]) -> Self {
        let off = |x: T, a: T, s: T| ((x - a) / s).round().to_i64().unwrap_or(0);
        let (mut p0, mut p1, mut q0, mut q1) = (0i64, 0i64, 0i64, 0i64);
        for &(p, q) in all.iter().chain(counted) {
            p0 = p0.min(off(p, anchor.0, step.0));
            p1 = p1.max(off(p, anchor.0, step.0));
            q0 = q0.min(off(q, anchor.1, step.1));
            q1 = q1.max(off(q, anchor.1, step.1));
        }
        let mut g = FaGrid::zeros(
            Axis::around(anchor.0, step.0, p0 - 1, p1 + 1),
            Axis::around(anchor.1, step.1, q0 - 1, q1 + 1),
        );
        for &(p, q) in counted {
            if let (Some(i), Some(j)) = (g.p.bin(p), g.q.bin(q)) {
                *g.get_mut(i, j) += T::one();
            }
        }
        g
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.p.len, self.q.len)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.q.len + j]
    }

    pub fn get_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.values[i * self.q.len + j]
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    pub fn total(&self) -> T {
        self.values.iter().copied().sum()
    }

    /// Nonzero cells as `(i, j)`.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let nq = self.q.len;
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > T::zero())
            .map(|(k, _)| (k / nq, k % nq))
            .collect()
    }

    pub fn same_axes(&self, other: &FaGrid<T>) -> bool {
        self.p.matches(&other.p) && self.q.matches(&other.q)
    }

    pub fn cast<U: Scalar>(&self) -> FaGrid<U> {
        let ax = |a: &Axis<T>| Axis::new(U::of(a.start.as_f64()), U::of(a.step.as_f64()), a.len);
        FaGrid {
            p: ax(&self.p),
            q: ax(&self.q),
            values: self.values.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// Cell-wise minimum of grids sharing one frame.
pub fn min_combine<T: Scalar>(grids: &[FaGrid<T>]) -> Result<FaGrid<T>> {
    let (first, rest) = grids
        .split_first()
        .ok_or_else(|| Error::Contract("min_combine needs at least one grid".into()))?;
    let mut out = first.clone();
    for g in rest {
        if !g.same_axes(first) {
            return Err(Error::Contract("min_combine: axis mismatch".into()));
        }
        for (a, b) in out.values.iter_mut().zip(&g.values) {
            *a = a.min(*b);
        }
    }
    Ok(out)
}

/// Divide by the largest cell.
pub fn normalize<T: Scalar>(grid: &FaGrid<T>) -> Result<FaGrid<T>> {
    let m = grid.max();
    if !(m > T::zero()) {
        return Err(Error::EmptyFlexibilityArea);
    }
    let mut out = grid.clone();
    for v in &mut out.values {
        *v = if *v == m { T::one() } else { *v / m };
    }
    Ok(out)
}

/// Refine both axes `factor` times over the same span by bilinear interpolation.
pub fn bilinear_upsample<T: Scalar>(grid: &FaGrid<T>, factor: usize) -> Result<FaGrid<T>> {
    if factor < 2 {
        return Err(Error::Contract(format!("upsampling factor {factor} below 2")));
    }
    let (np, nq) = grid.shape();
    if np < 2 || nq < 2 {
        return Err(Error::Contract("upsampling needs at least 2 points per axis".into()));
    }
    let f = T::of(factor as f64);
    let fine = |a: &Axis<T>| Axis::new(a.start, a.step / f, (a.len - 1) * factor + 1);
    let (fp, fq) = (fine(&grid.p), fine(&grid.q));
    let mut out = FaGrid::zeros(fp, fq);
    let split = |k: usize, n: usize| {
        let i = (k / factor).min(n - 2);
        (i, T::of((k - i * factor) as f64) / f)
    };
    for a in 0..fp.len {
        let (i, s) = split(a, np);
        for b in 0..fq.len {
            let (j, t) = split(b, nq);
            let v = if a % factor == 0 && b % factor == 0 {
                grid.get(a / factor, b / factor)
            } else {
                let one = T::one();
                let c = [grid.get(i, j), grid.get(i + 1, j), grid.get(i, j + 1), grid.get(i + 1, j + 1)];
                let lo = c.iter().copied().fold(T::infinity(), T::min);
                let hi = c.iter().copied().fold(T::zero(), T::max);
                (c[0] * (one - s) * (one - t) + c[1] * s * (one - t) + c[2] * (one - s) * t + c[3] * s * t)
                    .max(lo)
                    .min(hi)
            };
            *out.get_mut(a, b) = v;
        }
    }
    Ok(out)
}

/// Fraction of the union of both supports whose cells have a counterpart
/// in the other support within `tol` cells (Chebyshev distance).
pub fn support_agreement<T: Scalar>(a: &FaGrid<T>, b: &FaGrid<T>, tol: i64) -> Result<f64> {
    let (Some(dp), Some(dq)) = (a.p.offset_of(&b.p), a.q.offset_of(&b.q)) else {
        return Err(Error::Contract("support_agreement: grids are on different lattices".into()));
    };
    use std::collections::HashSet;
    let sa: HashSet<(i64, i64)> = a.support().into_iter().map(|(i, j)| (i as i64, j as i64)).collect();
    let sb: HashSet<(i64, i64)> = b
        .support()
        .into_iter()
        .map(|(i, j)| (i as i64 + dp, j as i64 + dq))
        .collect();
    let near = |set: &HashSet<(i64, i64)>, (i, j): (i64, i64)| {
        (-tol..=tol).any(|di| (-tol..=tol).any(|dj| set.contains(&(i + di, j + dj))))
    };
    let union: HashSet<_> = sa.union(&sb).copied().collect();
    if union.is_empty() {
        return Ok(1.0);
    }
    let agreed = union
        .iter()
        .filter(|&&c| (!sa.contains(&c) || near(&sb, c)) && (!sb.contains(&c) || near(&sa, c)))
        .count();
    Ok(agreed as f64 / union.len() as f64)
}

pub const CSV_HEADER: [&str; 3] = ["p_mw", "q_mvar", "dfc"];

/// Long-format CSV, one `p_mw,q_mvar,dfc` row per cell, P-major.
pub fn write_csv<T: Scalar>(grid: &FaGrid<T>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    w.write_record(CSV_HEADER)?;
    for i in 0..grid.p.len {
        let p = grid.p.center(i).to_string();
        for j in 0..grid.q.len {
            w.write_record([p.as_str(), &grid.q.center(j).to_string(), &grid.get(i, j).to_string()])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

fn parse<T: Scalar>(s: &str, path: &Path) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("{}: not a number: {s:?}", path.display())))
}

/// Recover the axis whose centers are exactly `centers`.
fn axis_from_centers<T: Scalar>(centers: &[T]) -> Axis<T> {
    let n = centers.len();
    if n == 1 {
        return Axis::new(centers[0], T::one(), 1);
    }
    let exact = |step: T| (0..n).all(|k| Axis::new(centers[0], step, n).center(k) == centers[k]);
    let spread = (centers[n - 1] - centers[0]) / T::of((n - 1) as f64);
    let mut candidates = vec![spread, centers[1] - centers[0]];
    // steps are usually short decimals such as 0.05
    for digits in 0..17 {
        if let Ok(s) = format!("{:.*e}", digits, spread.as_f64()).parse::<f64>() {
            candidates.push(T::of(s));
        }
    }
    let step = candidates
        .into_iter()
        .find(|&s| exact(s))
        .or_else(|| bracket_step(centers, spread).filter(|&s| exact(s)))
        .unwrap_or(spread);
    Axis::new(centers[0], step, n)
}

/// Smallest step reproducing every center; centers are monotone in the step,
/// so the largest per-center lower bound is exact whenever any step is.
fn bracket_step<T: Scalar>(centers: &[T], spread: T) -> Option<T> {
    let start = centers[0];
    let center = |step: T, k: usize| start + step * T::of(k as f64);
    let lowest = |k: usize, c: T| {
        let (mut lo, mut hi) = (spread * T::of(0.5), spread * T::of(1.5));
        if !(center(lo, k) < c && center(hi, k) >= c) {
            return None;
        }
        loop {
            let mid = lo + (hi - lo) / T::of(2.0);
            if mid == lo || mid == hi {
                return Some(hi);
            }
            if center(mid, k) >= c {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    };
    let mut step = T::neg_infinity();
    for (k, &c) in centers.iter().enumerate().skip(1) {
        step = step.max(lowest(k, c)?);
    }
    Some(step)
}

pub fn read_csv<T: Scalar>(path: &Path) -> Result<FaGrid<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_io(path, e))?;
    if r.headers()?.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse(format!(
            "{}: expected header {}",
            path.display(),
            CSV_HEADER.join(",")
        )));
    }
    let mut rows: Vec<(T, T, T)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Parse(format!("{}: rows need 3 fields", path.display())));
        }
        rows.push((parse(&rec[0], path)?, parse(&rec[1], path)?, parse(&rec[2], path)?));
    }
    if rows.is_empty() {
        return Err(Error::Parse(format!("{}: no cells", path.display())));
    }
    let nq = rows.iter().take_while(|r| r.0 == rows[0].0).count();
    if rows.len() % nq != 0 {
        return Err(Error::Parse(format!("{}: rows do not form a grid", path.display())));
    }
    let ps: Vec<T> = rows.iter().step_by(nq).map(|r| r.0).collect();
    let qs: Vec<T> = rows[..nq].iter().map(|r| r.1).collect();
    for (k, r) in rows.iter().enumerate() {
        if r.0 != ps[k / nq] || r.1 != qs[k % nq] {
            return Err(Error::Parse(format!("{}: rows are not P-major", path.display())));
        }
    }
    FaGrid::from_values(
        axis_from_centers(&ps),
        axis_from_centers(&qs),
        rows.into_iter().map(|r| r.2).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(values: &[&[f64]]) -> FaGrid<f64> {
        let p = Axis::new(0.0, 1.0, values.len());
        let q = Axis::new(0.0, 1.0, values[0].len());
        FaGrid::from_values(p, q, values.concat()).unwrap()
    }

    #[test]
    fn min_of_one_is_identity() {
        let g = grid(&[&[1.0, 2.0], &[3.0, 0.0]]);
        assert_eq!(min_combine(&[g.clone()]).unwrap(), g);
    }

    #[test]
    fn min_takes_smaller_and_keeps_zero() {
        let a = grid(&[&[5.0, 5.0], &[5.0, 0.0]]);
        let b = grid(&[&[3.0, 3.0], &[3.0, 3.0]]);
        assert_eq!(min_combine(&[a, b]).unwrap().values(), &[3.0, 3.0, 3.0, 0.0]);
    }

    #[test]
    fn min_rejects_mismatch() {
        let a = grid(&[&[1.0, 1.0]]);
        let b = grid(&[&[1.0], &[1.0]]);
        assert!(matches!(min_combine(&[a, b]), Err(Error::Contract(_))));
    }

    #[test]
    fn normalize_by_max() {
        let g = normalize(&grid(&[&[8.0, 4.0], &[0.0, 2.0]])).unwrap();
        assert_eq!(g.values(), &[1.0, 0.5, 0.0, 0.25]);
        assert_eq!(normalize(&g).unwrap(), g);
        assert!(matches!(normalize(&grid(&[&[0.0]])), Err(Error::EmptyFlexibilityArea)));
    }

    #[test]
    fn upsample_center_value() {
        let g = bilinear_upsample(&grid(&[&[0.0, 0.0], &[0.0, 1.0]]), 2).unwrap();
        assert_eq!(g.shape(), (3, 3));
        assert_eq!(g.get(1, 1), 0.25);
        assert_eq!(g.get(2, 2), 1.0);
        assert_eq!(g.p.end(), 1.0);
        assert!(bilinear_upsample(&g, 1).is_err());
    }

    #[test]
    fn upsample_constant() {
        let g = bilinear_upsample(&grid(&[&[2.0, 2.0, 2.0], &[2.0, 2.0, 2.0]]), 3).unwrap();
        assert!(g.values().iter().all(|&v| (v - 2.0).abs() < 1e-15));
    }

    #[test]
    fn binning_half_open() {
        let a = Axis::new(0.0, 1.0, 3);
        assert_eq!(a.bin(-0.5), Some(0));
        assert_eq!(a.bin(0.49), Some(0));
        assert_eq!(a.bin(0.5), Some(1));
        assert_eq!(a.bin(2.5), Some(2));
        assert_eq!(a.bin(2.51), None);
        assert_eq!(a.bin(-0.51), None);
    }

    #[test]
    fn histogram_counts() {
        let pts = [(0.0, 0.0), (0.1, 0.0), (0.1, 0.0), (-0.2, 0.3)];
        let g = FaGrid::histogram((0.0, 0.0), (0.1, 0.1), &pts, &pts[..3]);
        assert_eq!(g.total(), 3.0);
        assert_eq!(g.p.bin(0.1).map(|i| g.get(i, g.q.bin(0.0).unwrap())), Some(2.0));
        assert!(g.p.bin(-0.3).is_some());
        assert!(g.q.bin(0.4).is_some());
    }

    #[test]
    fn agreement_with_tolerance() {
        let a = grid(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]);
        let b = grid(&[&[0.0, 1.0, 0.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 1.0]]);
        assert_eq!(support_agreement(&a, &b, 0).unwrap(), 0.0);
        assert!((support_agreement(&a, &b, 1).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(support_agreement(&a, &a, 0).unwrap(), 1.0);
    }

    #[test]
    fn csv_two_by_two() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        let g = FaGrid::from_values(Axis::new(-0.3, 0.05, 2), Axis::new(0.1, 0.1, 2), vec![0.0, 1.0, 0.5, 1.0 / 3.0])
            .unwrap();
        write_csv(&g, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        assert_eq!(text.lines().next(), Some("p_mw,q_mvar,dfc"));
        let back: FaGrid<f64> = read_csv(&path).unwrap();
        assert_eq!(back.values(), g.values());
        assert_eq!(back.p.centers(), g.p.centers());
        assert_eq!(back.q.centers(), g.q.centers());
    }

    #[test]
    fn csv_reader_rejects_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.csv");
        std::fs::write(&path, "p,q,v\n0,0,1\n").unwrap();
        assert!(matches!(read_csv::<f64>(&path), Err(Error::Parse(_))));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let g = grid(&[&[1.0]]);
        let err = write_csv(&g, Path::new("/nonexistent-dir/x.csv")).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn f32_grid_works() {
        let g: FaGrid<f32> = grid(&[&[4.0, 2.0], &[1.0, 0.0]]).cast();
        assert_eq!(normalize(&g).unwrap().values(), &[1.0f32, 0.5, 0.25, 0.0]);
    }

    fn arb_grid() -> impl Strategy<Value = FaGrid<f64>> {
        (2usize..6, 2usize..6, -5.0f64..5.0, 0.01f64..1.0).prop_flat_map(|(np, nq, s, d)| {
            proptest::collection::vec(prop_oneof![Just(0.0), 0.0f64..10.0], np * nq).prop_map(move |v| {
                FaGrid::from_values(Axis::new(s, d, np), Axis::new(-s, d * 2.0, nq), v).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn csv_round_trip(g in arb_grid()) {
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("g.csv");
            write_csv(&g, &path).unwrap();
            let back: FaGrid<f64> = read_csv(&path).unwrap();
            prop_assert_eq!(back.values(), g.values());
            prop_assert_eq!(back.p.centers(), g.p.centers());
            prop_assert_eq!(back.q.centers(), g.q.centers());
        }

        #[test]
        fn upsample_keeps_extremes(g in arb_grid(), f in 2usize..5) {
            let u = bilinear_upsample(&g, f).unwrap();
            let min = |x: &FaGrid<f64>| x.values().iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert_eq!(u.max(), g.max());
            prop_assert_eq!(min(&u), min(&g));
            for i in 0..g.p.len {
                for j in 0..g.q.len {
                    prop_assert_eq!(u.get(i * f, j * f), g.get(i, j));
                }
            }
        }

        #[test]
        fn min_is_a_meet(a in arb_grid()) {
            let mut b = a.clone();
            for (k, v) in b.values.iter_mut().enumerate() {
                *v = (*v * 0.7 + k as f64) % 9.0;
            }
            let ab = min_combine(&[a.clone(), b.clone()]).unwrap();
            prop_assert_eq!(&ab, &min_combine(&[b.clone(), a.clone()]).unwrap());
            prop_assert_eq!(&min_combine(&[a.clone(), a.clone()]).unwrap(), &a);
            prop_assert_eq!(&min_combine(&[ab.clone(), a.clone()]).unwrap(), &ab);
        }

        #[test]
        fn normalize_keeps_argmax(g in arb_grid()) {
            prop_assume!(g.max() > 0.0);
            let n = normalize(&g).unwrap();
            let m = g.max();
            for (x, y) in g.values().iter().zip(n.values()) {
                prop_assert_eq!(*x == m, *y == 1.0);
            }
            prop_assert_eq!(&normalize(&n).unwrap(), &n);
        }
    }
}

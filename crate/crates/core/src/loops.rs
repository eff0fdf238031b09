//! Hysteresis-loop geometry on the I/V plane.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Sub-curves nested deeper than this are kept whole.
const MAX_SPLIT_DEPTH: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneCurve<T: Real> {
    pub points: Vec<(T, T)>,
}

impl<T: Real> PlaneCurve<T> {
    pub fn new(points: Vec<(T, T)>) -> Self {
        Self { points }
    }

    pub fn from_xy(x: &[T], y: &[T]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Dimension(format!(
                "curve coordinates differ in length: {} vs {}",
                x.len(),
                y.len()
            )));
        }
        Ok(Self::new(x.iter().copied().zip(y.iter().copied()).collect()))
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn reversed(&self) -> Self {
        Self::new(self.points.iter().rev().copied().collect())
    }

    pub fn scaled(&self, sx: T, sy: T) -> Self {
        Self::new(self.points.iter().map(|&(x, y)| (x * sx, y * sy)).collect())
    }

    pub fn area(&self) -> T {
        polyline_area(self)
    }

    pub fn perimeter(&self) -> T {
        polyline_perimeter(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopMetrics<T: Real> {
    pub area: T,
    pub perimeter: T,
    pub form_factor: T,
    pub period_index: usize,
}

/// Absolute shoelace area of the closed polygon.
pub fn polyline_area<T: Real>(c: &PlaneCurve<T>) -> T {
    let p = &c.points;
    let n = p.len();
    if n < 3 {
        return T::zero();
    }
    // Shift to the first point to reduce cancellation.
    let (ox, oy) = p[0];
    let mut twice = T::zero();
    for k in 0..n {
        let (x0, y0) = p[k];
        let (x1, y1) = p[(k + 1) % n];
        twice += (x0 - ox) * (y1 - oy) - (x1 - ox) * (y0 - oy);
    }
    (twice / T::lit(2.0)).abs()
}

/// Closed-polygon perimeter, including the segment from last to first point.
pub fn polyline_perimeter<T: Real>(c: &PlaneCurve<T>) -> T {
    let p = &c.points;
    let n = p.len();
    if n < 2 {
        return T::zero();
    }
    (0..n)
        .map(|k| {
            let (x0, y0) = p[k];
            let (x1, y1) = p[(k + 1) % n];
            (x1 - x0).hypot(y1 - y0)
        })
        .fold(T::zero(), |a, b| a + b)
}

/// Intersection point of segments p0→p1 and q0→q1 using half-open
/// parameter ranges `[0, 1)`, so a shared vertex is counted once.
fn segment_intersection<T: Real>(p0: (T, T), p1: (T, T), q0: (T, T), q1: (T, T)) -> Option<(T, T)> {
    let r = (p1.0 - p0.0, p1.1 - p0.1);
    let s = (q1.0 - q0.0, q1.1 - q0.1);
    let denom = r.0 * s.1 - r.1 * s.0;
    if denom == T::zero() {
        return None;
    }
    let d = (q0.0 - p0.0, q0.1 - p0.1);
    let t = (d.0 * s.1 - d.1 * s.0) / denom;
    let u = (d.0 * r.1 - d.1 * r.0) / denom;
    let one = T::one();
    if t >= T::zero() && t < one && u >= T::zero() && u < one {
        Some((p0.0 + t * r.0, p0.1 + t * r.1))
    } else {
        None
    }
}

fn adjacent(i: usize, j: usize, n: usize) -> bool {
    j == i + 1 || (i == 0 && j == n - 1)
}

fn segment<T: Copy>(p: &[(T, T)], k: usize) -> ((T, T), (T, T)) {
    (p[k], p[(k + 1) % p.len()])
}

fn point_less<T: Real>(a: (T, T), b: (T, T)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

/// Self-crossing of the closed polyline with the smallest (x, y) crossing
/// point, as `(i, j, point)` with `i < j` the crossing segment indices.
/// Segment k joins point k to point k+1 (cyclically); adjacent segments are
/// skipped. Choosing by position rather than index makes the split
/// independent of traversal direction and starting point.
fn first_intersection<T: Real>(p: &[(T, T)]) -> Option<(usize, usize, (T, T))> {
    let n = p.len();
    if n < 4 {
        return None;
    }
    let bbox: Vec<(T, T, T, T)> = (0..n)
        .map(|k| {
            let (a, b) = segment(p, k);
            (a.0.min(b.0), a.0.max(b.0), a.1.min(b.1), a.1.max(b.1))
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| bbox[a].0.partial_cmp(&bbox[b].0).unwrap_or(std::cmp::Ordering::Equal));

    let mut best: Option<(usize, usize, (T, T))> = None;
    for (rank, &a) in order.iter().enumerate() {
        let (ax0, ax1, ay0, ay1) = bbox[a];
        if let Some((_, _, x)) = best {
            // Every later crossing lies right of this segment's left edge.
            if ax0 > x.0 {
                break;
            }
        }
        for &b in &order[rank + 1..] {
            let (bx0, _, by0, by1) = bbox[b];
            if bx0 > ax1 {
                break;
            }
            if by0 > ay1 || by1 < ay0 {
                continue;
            }
            let (i, j) = if a < b { (a, b) } else { (b, a) };
            if adjacent(i, j, n) {
                continue;
            }
            let (p0, p1) = segment(p, i);
            let (q0, q1) = segment(p, j);
            if let Some(x) = segment_intersection(p0, p1, q0, q1) {
                if best.is_none_or(|(_, _, bx)| point_less(x, bx)) {
                    best = Some((i, j, x));
                }
            }
        }
    }
    best
}

/// Reference O(n²) scan; must agree with [`first_intersection`].
#[cfg(test)]
fn first_intersection_naive<T: Real>(p: &[(T, T)]) -> Option<(usize, usize, (T, T))> {
    let n = p.len();
    if n < 4 {
        return None;
    }
    let mut best: Option<(usize, usize, (T, T))> = None;
    for i in 0..n {
        for j in (i + 2)..n {
            if adjacent(i, j, n) {
                continue;
            }
            let (p0, p1) = segment(p, i);
            let (q0, q1) = segment(p, j);
            if let Some(x) = segment_intersection(p0, p1, q0, q1) {
                if best.is_none_or(|(_, _, bx)| point_less(x, bx)) {
                    best = Some((i, j, x));
                }
            }
        }
    }
    best
}

/// Splits a closed curve at its self-intersections into simple lobes.
pub fn segment_lobes<T: Real>(c: &PlaneCurve<T>) -> Vec<PlaneCurve<T>> {
    let mut out = Vec::new();
    split_into(c.points.clone(), 0, &mut out);
    out
}

fn split_into<T: Real>(points: Vec<(T, T)>, depth: usize, out: &mut Vec<PlaneCurve<T>>) {
    if depth >= MAX_SPLIT_DEPTH {
        out.push(PlaneCurve::new(points));
        return;
    }
    match first_intersection(&points) {
        None => out.push(PlaneCurve::new(points)),
        Some((i, j, x)) => {
            let mut lobe = Vec::with_capacity(j - i + 1);
            lobe.push(x);
            lobe.extend_from_slice(&points[i + 1..=j]);
            let mut rest = Vec::with_capacity(points.len() - (j - i) + 1);
            rest.extend_from_slice(&points[..=i]);
            rest.push(x);
            rest.extend_from_slice(&points[j + 1..]);
            split_into(lobe, depth + 1, out);
            split_into(rest, depth + 1, out);
        }
    }
}

/// Area, perimeter and `F = 4πA/P²` summed over the lobes of one loop.
pub fn form_factor<T: Real>(c: &PlaneCurve<T>) -> LoopMetrics<T> {
    let lobes = segment_lobes(c);
    let area = lobes.iter().map(polyline_area).fold(T::zero(), |a, b| a + b);
    let perimeter = lobes.iter().map(polyline_perimeter).fold(T::zero(), |a, b| a + b);
    let form_factor = if perimeter > T::zero() {
        T::lit(4.0) * T::PI() * area / (perimeter * perimeter)
    } else {
        T::zero()
    };
    LoopMetrics {
        area,
        perimeter,
        form_factor,
        period_index: 0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodSeries<T: Real> {
    pub metrics: Vec<LoopMetrics<T>>,
    pub mean_form_factor: T,
}

impl<T: Real> PeriodSeries<T> {
    pub fn form_factors(&self) -> Vec<T> {
        self.metrics.iter().map(|m| m.form_factor).collect()
    }

    /// CSV with header `period,area,perimeter,form_factor`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "period,area,perimeter,form_factor")?;
        for m in &self.metrics {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e}",
                m.period_index, m.area, m.perimeter, m.form_factor
            )?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
            .map_err(|e| Error::io(path, e))
    }
}

fn max_abs<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Per-period loop metrics of an I/V series sampled `steps_per_period`
/// steps per period with shared endpoints. Each axis is first divided by
/// its max |value| over the whole series.
pub fn per_period_metrics<T: Real>(v: &[T], i: &[T], steps_per_period: usize) -> Result<PeriodSeries<T>> {
    if v.len() != i.len() {
        return Err(Error::Dimension("voltage and current lengths differ".into()));
    }
    if steps_per_period == 0 || v.is_empty() || !(v.len() - 1).is_multiple_of(steps_per_period) {
        return Err(Error::config(format!(
            "series of {} samples is not a whole number of {}-step periods",
            v.len(),
            steps_per_period
        )));
    }
    let periods = (v.len() - 1) / steps_per_period;
    if periods == 0 {
        return Err(Error::config("series shorter than one period"));
    }
    let sv = max_abs(v);
    let si = max_abs(i);
    let sv = if sv > T::zero() { sv } else { T::one() };
    let si = if si > T::zero() { si } else { T::one() };

    let metrics: Vec<LoopMetrics<T>> = (0..periods)
        .map(|k| {
            let range = k * steps_per_period..=(k + 1) * steps_per_period;
            let curve = PlaneCurve::new(
                v[range.clone()]
                    .iter()
                    .zip(&i[range])
                    .map(|(&x, &y)| (x / sv, y / si))
                    .collect(),
            );
            LoopMetrics {
                period_index: k,
                ..form_factor(&curve)
            }
        })
        .collect();
    let mean_form_factor = metrics.iter().map(|m| m.form_factor).fold(T::zero(), |a, b| a + b)
        / T::from_usize(periods).expect("period count fits the scalar");
    Ok(PeriodSeries {
        metrics,
        mean_form_factor,
    })
}

/// Loop metrics of memristor `l` in each simulated period.
pub fn per_period_series(traj: &Trajectory, l: usize) -> Result<PeriodSeries<f64>> {
    let s = traj
        .series
        .get(l)
        .ok_or_else(|| Error::config(format!("trajectory has no memristor {}", l + 1)))?;
    if traj.len() != traj.periods * traj.steps_per_period + 1 {
        return Err(Error::config("trajectory does not span a whole number of periods"));
    }
    per_period_metrics(&s.v_cap, &s.i_qp, traj.steps_per_period)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn circle(n: usize, cx: f64, r: f64, phase: f64, dir: f64) -> Vec<(f64, f64)> {
        (0..n)
            .map(|k| {
                let a = phase + dir * 2.0 * PI * k as f64 / n as f64;
                (cx + r * a.cos(), r * a.sin())
            })
            .collect()
    }

    fn square() -> PlaneCurve<f64> {
        PlaneCurve::new(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)])
    }

    /// Two unit circles touching at the origin, traced as one path.
    fn figure_eight(n: usize) -> PlaneCurve<f64> {
        let mut pts = circle(n, 1.0, 1.0, PI, -1.0);
        pts.extend(circle(n, -1.0, 1.0, 0.0, 1.0));
        PlaneCurve::new(pts)
    }

    /// Sampled pinched loop: (sin t, sin t cos t) style lemniscate.
    fn lemniscate(n: usize) -> PlaneCurve<f64> {
        PlaneCurve::new(
            (0..=n)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / n as f64 + 0.1;
                    (t.sin(), t.sin() * t.cos())
                })
                .collect(),
        )
    }

    #[test]
    fn area_and_perimeter_examples() {
        assert_eq!(polyline_area(&square()), 1.0);
        assert_eq!(polyline_perimeter(&square()), 4.0);
        let c = PlaneCurve::new(circle(1000, 0.0, 1.0, 0.0, 1.0));
        assert!((polyline_area(&c) - PI).abs() < 1e-4);
        assert!((polyline_perimeter(&c) - 2.0 * PI).abs() < 1e-4);
        let line = PlaneCurve::new(vec![(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(polyline_area(&line), 0.0);
        let dot = PlaneCurve::new(vec![(1.0, 1.0); 5]);
        assert_eq!(polyline_perimeter(&dot), 0.0);
        assert_eq!(polyline_area(&PlaneCurve::new(vec![(0.0, 0.0), (1.0, 1.0)])), 0.0);
    }

    #[test]
    fn figure_eight_has_two_lobes() {
        let lobes = segment_lobes(&figure_eight(1000));
        let areas: Vec<f64> = lobes.iter().map(polyline_area).filter(|a| *a > 1e-9).collect();
        assert_eq!(areas.len(), 2);
        for a in areas {
            assert!((a - PI).abs() < 1e-3, "{a}");
        }
        let m = form_factor(&figure_eight(1000));
        assert!((m.form_factor - 0.5).abs() < 1e-3);
    }

    #[test]
    fn convex_and_degenerate_curves_stay_whole() {
        let ellipse = PlaneCurve::new(circle(200, 0.0, 1.0, 0.0, 1.0)).scaled(3.0, 1.0);
        assert_eq!(segment_lobes(&ellipse).len(), 1);
        let seg = PlaneCurve::new(vec![(0.0, 0.0), (0.5, 0.0), (1.0, 0.0)]);
        let lobes = segment_lobes(&seg);
        assert_eq!(lobes.len(), 1);
        assert_eq!(polyline_area(&lobes[0]), 0.0);
    }

    #[test]
    fn form_factor_examples() {
        let c = PlaneCurve::new(circle(1000, 0.0, 1.0, 0.0, 1.0));
        assert!((form_factor(&c).form_factor - 1.0).abs() < 1e-3);
        assert!((form_factor(&square()).form_factor - PI / 4.0).abs() < 1e-12);
        let empty = PlaneCurve::<f64>::new(vec![]);
        assert_eq!(form_factor(&empty).form_factor, 0.0);
    }

    #[test]
    fn sampled_pinched_loop_splits_at_crossing() {
        let c = lemniscate(2000);
        assert_eq!(segment_lobes(&c).len(), 2);
        let f = form_factor(&c).form_factor;
        assert!(f > 0.0 && f <= 0.5 + 1e-6);
    }

    #[test]
    fn per_period_rejects_partial_periods() {
        let v = vec![0.0; 250];
        assert!(per_period_metrics(&v, &v, 100).is_err());
        assert!(per_period_metrics(&v[..201], &v[..200], 100).is_err());
        let ok = per_period_metrics(&v[..201], &v[..201], 100).unwrap();
        assert_eq!(ok.metrics.len(), 2);
        assert_eq!(ok.mean_form_factor, 0.0);
    }

    #[test]
    fn per_period_of_zero_current_is_zero() {
        let v: Vec<f64> = (0..=300).map(|k| (k as f64 * 0.05).sin()).collect();
        let i = vec![0.0; v.len()];
        let s = per_period_metrics(&v, &i, 100).unwrap();
        assert!(s.form_factors().iter().all(|f| *f == 0.0));
    }

    #[test]
    fn csv_export() {
        let c = lemniscate(100);
        let (v, i): (Vec<f64>, Vec<f64>) = c.points.iter().copied().unzip();
        let s = per_period_metrics(&v, &i, 100).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("period,area,perimeter,form_factor\n0,"));
    }

    #[test]
    fn works_in_single_precision() {
        let c = PlaneCurve::<f32>::new(vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]);
        assert!((form_factor(&c).form_factor - std::f32::consts::FRAC_PI_4).abs() < 1e-6);
    }

    fn random_curve() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 3..40)
    }

    proptest! {
        #[test]
        fn sweep_matches_naive_scan(pts in random_curve()) {
            prop_assert_eq!(first_intersection(&pts).map(|r| r.2), first_intersection_naive(&pts).map(|r| r.2));
        }

        #[test]
        fn form_factor_in_unit_interval(pts in random_curve()) {
            let f = form_factor(&PlaneCurve::new(pts)).form_factor;
            prop_assert!((-1e-9..=1.0 + 1e-9).contains(&f));
        }

        #[test]
        fn scale_invariance(s in 0.01f64..100.0) {
            let c = lemniscate(400);
            let base = per_period_metrics(
                &c.points.iter().map(|p| p.0).collect::<Vec<_>>(),
                &c.points.iter().map(|p| p.1).collect::<Vec<_>>(),
                400,
            ).unwrap();
            let scaled = per_period_metrics(
                &c.points.iter().map(|p| s * p.0).collect::<Vec<_>>(),
                &c.points.iter().map(|p| s * p.1).collect::<Vec<_>>(),
                400,
            ).unwrap();
            prop_assert!((base.mean_form_factor - scaled.mean_form_factor).abs() <= 1e-12);
        }

        #[test]
        fn reversal_invariance(pts in random_curve()) {
            let c = PlaneCurve::new(pts);
            let a = form_factor(&c);
            let b = form_factor(&c.reversed());
            prop_assert!((polyline_area(&c) - polyline_area(&c.reversed())).abs() < 1e-12);
            prop_assert!((polyline_perimeter(&c) - polyline_perimeter(&c.reversed())).abs() < 1e-12);
            prop_assert!((a.perimeter - b.perimeter).abs() < 1e-9);
            prop_assert!((a.area - b.area).abs() < 1e-9);
            prop_assert!((a.form_factor - b.form_factor).abs() < 1e-9);
        }

        #[test]
        fn symmetric_two_lobe_bound(r in 0.1f64..5.0, n in 50usize..400) {
            let c = figure_eight(n).scaled(r, r);
            prop_assert!(form_factor(&c).form_factor <= 0.5 + 1e-6);
        }
    }
}

//! Planar interpolating curve through ground-truth positions and the
//! closest-point query used by the path loss.

use crate::error::{Error, Result};
use crate::model::GroundTruthTrack;

/// Dense samples per segment used to seed closest-point searches.
pub const DEFAULT_SAMPLES_PER_SEGMENT: usize = 50;

const GOLDEN_TOL: f64 = 1e-9;
const DUPLICATE_EPS: f64 = 1e-12;

/// Result of a closest-point query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub point: [f64; 2],
    /// Arc-length-like parameter (cumulative chord length) of `point`.
    pub param: f64,
    pub distance: f64,
}

/// Natural cubic spline in each coordinate, parameterized by cumulative chord
/// length. Fewer than four distinct points give a polyline.
#[derive(Debug, Clone)]
pub struct SplinePath {
    knots: Vec<f64>,
    points: Vec<[f64; 2]>,
    /// Second derivatives at the knots; `None` for a polyline.
    curvature: Option<Vec<[f64; 2]>>,
    samples_per_segment: usize,
    samples: Vec<[f64; 2]>,
    boxes: Vec<[f64; 4]>,
}

pub fn fit_spline(track: &GroundTruthTrack) -> Result<SplinePath> {
    SplinePath::fit(&track.points())
}

impl SplinePath {
    pub fn fit(points: &[[f64; 2]]) -> Result<Self> {
        Self::fit_with_density(points, DEFAULT_SAMPLES_PER_SEGMENT)
    }

    pub fn fit_with_density(points: &[[f64; 2]], samples_per_segment: usize) -> Result<Self> {
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(points.len());
        for p in points {
            if !(p[0].is_finite() && p[1].is_finite()) {
                return Err(Error::InvalidTrack("non-finite spline point".into()));
            }
            match pts.last() {
                Some(q) if dist(p, q) <= DUPLICATE_EPS => {}
                _ => pts.push(*p),
            }
        }
        if pts.len() < 2 {
            return Err(Error::TrackTooShort(pts.len()));
        }
        let mut knots = Vec::with_capacity(pts.len());
        knots.push(0.0);
        for w in pts.windows(2) {
            let last = knots[knots.len() - 1];
            knots.push(last + dist(&w[0], &w[1]));
        }
        let curvature = (pts.len() >= 4).then(|| natural_second_derivatives(&knots, &pts));
        let mut path = Self {
            knots,
            points: pts,
            curvature,
            samples_per_segment: samples_per_segment.max(1),
            samples: Vec::new(),
            boxes: Vec::new(),
        };
        path.build_samples();
        Ok(path)
    }

    fn build_samples(&mut self) {
        let per = self.samples_per_segment;
        let segs = self.segments();
        let mut samples = Vec::with_capacity(segs * (per + 1));
        let mut boxes = Vec::with_capacity(segs);
        for i in 0..segs {
            let (a, b) = (self.knots[i], self.knots[i + 1]);
            let mut bb = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
            for k in 0..=per {
                let s = a + (b - a) * k as f64 / per as f64;
                let p = self.eval_in(i, s);
                bb = [bb[0].min(p[0]), bb[1].min(p[1]), bb[2].max(p[0]), bb[3].max(p[1])];
                samples.push(p);
            }
            boxes.push(bb);
        }
        self.samples = samples;
        self.boxes = boxes;
    }

    pub fn segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn length_param(&self) -> f64 {
        self.knots[self.knots.len() - 1]
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn is_linear(&self) -> bool {
        self.curvature.is_none()
    }

    fn segment_of(&self, s: f64) -> usize {
        let idx = self.knots.partition_point(|&k| k <= s);
        idx.saturating_sub(1).min(self.segments() - 1)
    }

    /// Point at parameter `s`, clamped to `[0, length_param]`.
    pub fn eval(&self, s: f64) -> [f64; 2] {
        let s = s.clamp(0.0, self.length_param());
        self.eval_in(self.segment_of(s), s)
    }

    fn eval_in(&self, i: usize, s: f64) -> [f64; 2] {
        let (s0, s1) = (self.knots[i], self.knots[i + 1]);
        let h = s1 - s0;
        let (p0, p1) = (self.points[i], self.points[i + 1]);
        let (a, b) = (s1 - s, s - s0);
        match &self.curvature {
            None => std::array::from_fn(|d| (p0[d] * a + p1[d] * b) / h),
            Some(m) => {
                let (m0, m1) = (m[i], m[i + 1]);
                std::array::from_fn(|d| {
                    m0[d] * a * a * a / (6.0 * h)
                        + m1[d] * b * b * b / (6.0 * h)
                        + (p0[d] / h - m0[d] * h / 6.0) * a
                        + (p1[d] / h - m1[d] * h / 6.0) * b
                })
            }
        }
    }

    /// Closest point on the curve: nearest dense sample, then golden-section
    /// refinement in the parameter around it.
    pub fn closest_point(&self, q: [f64; 2]) -> Projection {
        let per = self.samples_per_segment;
        let mut best_d2 = f64::INFINITY;
        let mut best = (0usize, 0usize);

        let lower = |i: usize| -> f64 {
            let b = &self.boxes[i];
            let dx = (b[0] - q[0]).max(0.0).max(q[0] - b[2]);
            let dy = (b[1] - q[1]).max(0.0).max(q[1] - b[3]);
            dx * dx + dy * dy
        };
        let scan = |i: usize, best_d2: &mut f64, best: &mut (usize, usize)| {
            for k in 0..=per {
                let p = &self.samples[i * (per + 1) + k];
                let d2 = dist2(p, &q);
                if d2 < *best_d2 {
                    *best_d2 = d2;
                    *best = (i, k);
                }
            }
        };

        let first = (0..self.segments())
            .min_by(|&a, &b| lower(a).total_cmp(&lower(b)))
            .unwrap_or(0);
        scan(first, &mut best_d2, &mut best);
        for i in 0..self.segments() {
            if i != first && lower(i) < best_d2 {
                scan(i, &mut best_d2, &mut best);
            }
        }

        let (i, k) = best;
        let (a, b) = (self.knots[i], self.knots[i + 1]);
        let step = (b - a) / per as f64;
        let s_best = a + step * k as f64;
        let sample_point = self.samples[i * (per + 1) + k];

        // Bracket between the neighbouring samples, which may lie in the
        // adjacent segments.
        let seg_step = |j: usize| (self.knots[j + 1] - self.knots[j]) / per as f64;
        let lo = if k == 0 && i > 0 {
            s_best - seg_step(i - 1)
        } else {
            s_best - step
        }
        .max(0.0);
        let hi = if k == per && i + 1 < self.segments() {
            s_best + seg_step(i + 1)
        } else {
            s_best + step
        }
        .min(self.length_param());
        let s_ref = golden_section(|s| self.eval(s), q, lo, hi, GOLDEN_TOL);
        let s_ref = self.newton_polish(q, s_ref, lo, hi);
        let p_ref = self.eval(s_ref);
        let d2_ref = dist2(&p_ref, &q);

        let (param, point, d2) = if d2_ref <= best_d2 {
            (s_ref, p_ref, d2_ref)
        } else {
            (s_best, sample_point, best_d2)
        };
        Projection {
            point,
            param,
            distance: d2.sqrt(),
        }
    }

    /// First and second derivative with respect to the parameter.
    fn derivatives(&self, s: f64) -> ([f64; 2], [f64; 2]) {
        let i = self.segment_of(s);
        let (s0, s1) = (self.knots[i], self.knots[i + 1]);
        let h = s1 - s0;
        let (p0, p1) = (self.points[i], self.points[i + 1]);
        match &self.curvature {
            None => (std::array::from_fn(|d| (p1[d] - p0[d]) / h), [0.0; 2]),
            Some(m) => {
                let (a, b) = (s1 - s, s - s0);
                let (m0, m1) = (m[i], m[i + 1]);
                (
                    std::array::from_fn(|d| {
                        -m0[d] * a * a / (2.0 * h) + m1[d] * b * b / (2.0 * h) + (p1[d] - p0[d]) / h
                            - (m1[d] - m0[d]) * h / 6.0
                    }),
                    std::array::from_fn(|d| (m0[d] * a + m1[d] * b) / h),
                )
            }
        }
    }

    /// Newton steps on `(c(s) − q)·c'(s) = 0`, kept only while they stay in
    /// the bracket and do not increase the distance. Golden section alone
    /// leaves the foot direction off by `Δs/d`.
    fn newton_polish(&self, q: [f64; 2], mut s: f64, lo: f64, hi: f64) -> f64 {
        for _ in 0..4 {
            let p = self.eval(s);
            let (d1, d2) = self.derivatives(s);
            let r = [p[0] - q[0], p[1] - q[1]];
            let phi = r[0] * d1[0] + r[1] * d1[1];
            let dphi = d1[0] * d1[0] + d1[1] * d1[1] + r[0] * d2[0] + r[1] * d2[1];
            if !(dphi > 0.0) {
                break;
            }
            let next = s - phi / dphi;
            if !(lo..=hi).contains(&next) || dist2(&self.eval(next), &q) > dist2(&p, &q) {
                break;
            }
            if next == s {
                break;
            }
            s = next;
        }
        s
    }

    /// Dense polyline for plotting.
    pub fn polyline(&self, per_segment: usize) -> Vec<[f64; 2]> {
        let per = per_segment.max(1);
        let mut out = Vec::with_capacity(self.segments() * per + 1);
        for i in 0..self.segments() {
            let (a, b) = (self.knots[i], self.knots[i + 1]);
            for k in 0..per {
                out.push(self.eval_in(i, a + (b - a) * k as f64 / per as f64));
            }
        }
        out.push(self.points[self.points.len() - 1]);
        out
    }
}

/// Solve the natural-spline tridiagonal system for each coordinate.
fn natural_second_derivatives(knots: &[f64], pts: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let n = pts.len();
    let mut m = vec![[0.0; 2]; n];
    let interior = n - 2;
    let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
    for d in 0..2 {
        // Thomas algorithm on rows 1..n-1.
        let mut diag = vec![0.0; interior];
        let mut upper = vec![0.0; interior];
        let mut rhs = vec![0.0; interior];
        for r in 0..interior {
            let i = r + 1;
            diag[r] = 2.0 * (h[i - 1] + h[i]);
            upper[r] = h[i];
            rhs[r] = 6.0 * ((pts[i + 1][d] - pts[i][d]) / h[i] - (pts[i][d] - pts[i - 1][d]) / h[i - 1]);
        }
        for r in 1..interior {
            let lower = h[r];
            let w = lower / diag[r - 1];
            diag[r] -= w * upper[r - 1];
            rhs[r] -= w * rhs[r - 1];
        }
        for r in (0..interior).rev() {
            let next = if r + 1 < interior { m[r + 2][d] } else { 0.0 };
            m[r + 1][d] = (rhs[r] - upper[r] * next) / diag[r];
        }
    }
    m
}

/// Golden-section search for the parameter minimizing `|curve(s) − q|²`.
/// Candidates are compared through `(a − b)·(a + b − 2q)`, which keeps its
/// sign far below the resolution of the squared distances themselves.
fn golden_section(curve: impl Fn(f64) -> [f64; 2], q: [f64; 2], mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let closer = |u: &[f64; 2], v: &[f64; 2]| {
        (u[0] - v[0]) * (u[0] + v[0] - 2.0 * q[0]) + (u[1] - v[1]) * (u[1] + v[1] - 2.0 * q[1]) < 0.0
    };
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut pc, mut pd) = (curve(c), curve(d));
    while (b - a).abs() > tol {
        if closer(&pc, &pd) {
            b = d;
            d = c;
            pd = pc;
            c = b - inv_phi * (b - a);
            pc = curve(c);
        } else {
            a = c;
            c = d;
            pc = pd;
            d = a + inv_phi * (b - a);
            pd = curve(d);
        }
    }
    0.5 * (a + b)
}

fn dist2(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let (dx, dy) = (a[0] - b[0], a[1] - b[1]);
    dx * dx + dy * dy
}

fn dist(a: &[f64; 2], b: &[f64; 2]) -> f64 {
    dist2(a, b).sqrt()
}

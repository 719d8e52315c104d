//! Race tracks: a natural cubic spline through waypoints, with borders at
//! half the track width on each side.
//!
//! The curve parameter `s` is the cumulative chord length between waypoints,
//! so it is close to arc length and `s = Δ v_ref t` is the reference point
//! reached at speed `v_ref` after `t` steps. Outside `[0, length]` the
//! parameter is clamped.

use std::path::Path;

use crate::autodiff::{Scalar, SMOOTH_MAX_SHARPNESS};
use crate::error::{Error, Result};

const SIMPLE: &str = include_str!("../../tracks/simple.txt");
const COMPLEX: &str = include_str!("../../tracks/complex.txt");

/// Natural cubic spline of one coordinate: on segment `i`,
/// `c(s) = a_i + b_i d + c_i d² + e_i d³` with `d = s - knots[i]`.
#[derive(Debug, Clone, PartialEq)]
struct Spline1 {
    coeffs: Vec<[f64; 4]>,
}

impl Spline1 {
    fn fit(knots: &[f64], values: &[f64]) -> Self {
        let n = knots.len();
        let h: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        // second derivatives, natural boundary conditions
        let mut m = vec![0.0; n];
        if n > 2 {
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0
                    * ((values[i + 2] - values[i + 1]) / h[i + 1] - (values[i + 1] - values[i]) / h[i]);
            }
            // Thomas algorithm, off-diagonals h[i + 1]
            for i in 1..k {
                let w = h[i] / diag[i - 1];
                diag[i] -= w * h[i];
                rhs[i] -= w * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
            }
        }
        let coeffs = (0..n - 1)
            .map(|i| {
                let a = values[i];
                let b = (values[i + 1] - values[i]) / h[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
                let c = m[i] / 2.0;
                let e = (m[i + 1] - m[i]) / (6.0 * h[i]);
                [a, b, c, e]
            })
            .collect();
        Self { coeffs }
    }

    fn eval<S: Scalar>(&self, seg: usize, d: S) -> (S, S) {
        let [a, b, c, e] = self.coeffs[seg];
        let value = ((d * e + c) * d + b) * d + a;
        let slope = (d * (3.0 * e) + 2.0 * c) * d + b;
        (value, slope)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub waypoints: Vec<(f64, f64)>,
    pub width: f64,
    knots: Vec<f64>,
    xs: Spline1,
    ys: Spline1,
}

/// Centerline point with unit tangent `(cos θ, sin θ)` at a parameter value.
#[derive(Debug, Clone, Copy)]
pub struct Frame<S> {
    pub x: S,
    pub y: S,
    pub cos: S,
    pub sin: S,
}

/// Geometry at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    /// Normal of the inner border, pointing into the track.
    pub normal_in: (f64, f64),
    /// Normal of the outer border, pointing out of the track.
    pub normal_out: (f64, f64),
    pub inner: (f64, f64),
    pub outer: (f64, f64),
}

impl Track {
    pub fn build(waypoints: Vec<(f64, f64)>, width: f64) -> Result<Self> {
        if waypoints.len() < 2 {
            return Err(Error::Track("at least two waypoints are required".into()));
        }
        if !(width > 0.0) || !width.is_finite() {
            return Err(Error::Track(format!("width must be positive, got {width}")));
        }
        if waypoints.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Track("waypoints must be finite".into()));
        }
        let mut knots = vec![0.0];
        for (i, w) in waypoints.windows(2).enumerate() {
            let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            if d == 0.0 {
                return Err(Error::Track(format!(
                    "waypoints {i} and {} coincide",
                    i + 1
                )));
            }
            knots.push(knots[i] + d);
        }
        let xs: Vec<f64> = waypoints.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = waypoints.iter().map(|p| p.1).collect();
        Ok(Self {
            xs: Spline1::fit(&knots, &xs),
            ys: Spline1::fit(&knots, &ys),
            knots,
            waypoints,
            width,
        })
    }

    /// Parses `width=<w>` followed by one `x,y` pair per line. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| Error::Track("empty track file".into()))?;
        let width = header
            .strip_prefix("width=")
            .ok_or_else(|| Error::Track(format!("expected `width=<float>`, got `{header}`")))?
            .trim()
            .parse::<f64>()
            .map_err(|e| Error::Track(format!("bad width: {e}")))?;
        if width.is_nan() {
            return Err(Error::Track("width is NaN".into()));
        }
        let mut points = Vec::new();
        for (n, line) in lines.enumerate() {
            let (x, y) = line
                .split_once(',')
                .ok_or_else(|| Error::Track(format!("waypoint line {}: expected `x,y`", n + 1)))?;
            let parse = |v: &str| {
                let f = v
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Track(format!("waypoint line {}: {e}", n + 1)))?;
                if f.is_nan() {
                    return Err(Error::Track(format!("waypoint line {}: NaN", n + 1)));
                }
                Ok(f)
            };
            points.push((parse(x)?, parse(y)?));
        }
        Self::build(points, width)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Bundled fixtures: `simple` and `complex`.
    pub fn bundled(name: &str) -> Result<Self> {
        match name {
            "simple" => Self::parse(SIMPLE),
            "complex" => Self::parse(COMPLEX),
            other => Err(Error::Config {
                field: "track".into(),
                msg: format!("unknown track `{other}` (expected simple or complex)"),
            }),
        }
    }

    /// Total parameter range.
    pub fn length(&self) -> f64 {
        *self.knots.last().expect("at least two knots")
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn segment(&self, s: f64) -> usize {
        match self.knots.partition_point(|k| *k <= s) {
            0 => 0,
            i => (i - 1).min(self.knots.len() - 2),
        }
    }

    /// Centerline frame at `s`, differentiable in `s` inside the domain.
    pub fn frame<S: Scalar>(&self, s: S) -> Result<Frame<S>> {
        let sv = s.value();
        let s = if sv < 0.0 {
            S::cst(0.0)
        } else if sv > self.length() {
            S::cst(self.length())
        } else {
            s
        };
        let seg = self.segment(s.value());
        let d = s - self.knots[seg];
        let (x, dx) = self.xs.eval(seg, d);
        let (y, dy) = self.ys.eval(seg, d);
        let norm = (dx * dx + dy * dy).sqrt()?;
        Ok(Frame {
            x,
            y,
            cos: dx / norm,
            sin: dy / norm,
        })
    }

    pub fn eval(&self, s: f64) -> Result<TrackPoint> {
        let f = self.frame(s)?;
        let half = self.width / 2.0;
        // left of the direction of travel
        let n = (-f.sin, f.cos);
        Ok(TrackPoint {
            x: f.x,
            y: f.y,
            theta: f.sin.atan2(f.cos),
            normal_in: n,
            normal_out: n,
            inner: (f.x - half * n.0, f.y - half * n.1),
            outer: (f.x + half * n.0, f.y + half * n.1),
        })
    }

    /// Contouring and lagging errors `(e_c, e_l)` of position `(x, y)` relative to `s`.
    pub fn contouring_errors<S: Scalar>(&self, x: S, y: S, s: S) -> Result<(S, S)> {
        let f = self.frame(s)?;
        let dx = x - f.x;
        let dy = y - f.y;
        Ok((f.sin * dx - f.cos * dy, -(f.cos * dx) - f.sin * dy))
    }

    /// Smoothed squared hinge on the signed distances past each border,
    /// widened by `car_width`.
    pub fn border_cost<S: Scalar>(&self, x: S, y: S, s: S, car_width: f64) -> Result<S> {
        let f = self.frame(s)?;
        let half = self.width / 2.0;
        let (nx, ny) = (-f.sin, f.cos);
        // offset from the centerline along the left normal
        let lateral = (x - f.x) * nx + (y - f.y) * ny;
        let d_in = -(lateral + half);
        let d_out = lateral - half;
        let hinge = |d: S| (d + car_width).smooth_max(SMOOTH_MAX_SHARPNESS).square();
        Ok(hinge(d_in) + hinge(d_out))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis() -> Track {
        Track::build(vec![(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)], 1.0).unwrap()
    }

    #[test]
    fn two_points_make_a_line() {
        let t = Track::build(vec![(0.0, 0.0), (3.0, 4.0)], 1.0).unwrap();
        let p = t.eval(2.5).unwrap();
        assert!((p.x - 1.5).abs() < 1e-14 && (p.y - 2.0).abs() < 1e-14);
    }

    #[test]
    fn knots_are_interpolated() {
        let pts = vec![(0.0, 0.0), (1.0, 0.5), (2.0, -0.3), (2.5, 1.0), (4.0, 1.2)];
        let t = Track::build(pts.clone(), 0.4).unwrap();
        for (k, p) in t.knots().iter().zip(&pts) {
            let e = t.eval(*k).unwrap();
            assert!((e.x - p.0).abs() < 1e-12 && (e.y - p.1).abs() < 1e-12);
        }
    }

    #[test]
    fn axis_aligned_geometry() {
        let t = axis();
        let p = t.eval(1.3).unwrap();
        assert!(p.theta.abs() < 1e-14);
        assert_eq!(p.normal_in, (-0.0, 1.0));
        let (ec, el) = t.contouring_errors(1.3, 0.1, 1.3).unwrap();
        assert!((ec + 0.1).abs() < 1e-14 && el.abs() < 1e-14);
        let (ec, el) = t.contouring_errors(1.5, 0.0, 1.3).unwrap();
        assert!(ec.abs() < 1e-14 && (el + 0.2).abs() < 1e-14);
    }

    #[test]
    fn border_examples() {
        let t = axis();
        assert!(t.border_cost(1.0, 0.0, 1.0, 0.0).unwrap() <= 1e-6);
        let beyond = t.border_cost(1.0, 0.6, 1.0, 0.0).unwrap();
        assert!((beyond - 0.01).abs() <= 1e-4);
        let on = t.border_cost(1.0, 0.5, 1.0, 0.0).unwrap();
        assert!(on > 0.0 && on <= (SMOOTH_MAX_SHARPNESS * 2f64.ln()).powi(2) + 1e-15);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert!(Track::parse("width=1\n0,0\n0,0\n").is_err());
        assert!(Track::parse("width=1\n0,0\nNaN,1\n").is_err());
        assert!(Track::parse("0,0\n1,1\n").is_err());
        assert!(Track::parse("width=0.5\n0,0\n1,1\n").is_ok());
    }

    #[test]
    fn bundled_tracks_load() {
        for name in ["simple", "complex"] {
            let t = Track::bundled(name).unwrap();
            assert!(t.length() > 6.0);
        }
    }
}

//! Soccer-field geometry and the landmark set observable by the robot.
//!
//! The field is an axis-aligned rectangle centered on the kick-off point.
//! Landmarks are point features extracted from the line layout: L-corners,
//! T-junctions, points sampled along interior lines, and points sampled
//! along the outer boundary. Lines and the boundary are represented as
//! sampled points so that every observation is a point measurement.

use std::io::Write;

use nalgebra::Point2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positions closer than this are considered the same landmark.
const COINCIDENT_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldDimensions {
    /// Field length along x (goal to goal), meters.
    pub length: f64,
    /// Field width along y (touch line to touch line), meters.
    pub width: f64,
    pub goal_area_length: f64,
    pub goal_area_width: f64,
    pub center_circle_radius: f64,
    /// Spacing of the sampled line/boundary landmarks, meters.
    pub line_sample_spacing: f64,
}

impl Default for FieldDimensions {
    /// Kid-size humanoid proportions: 9 m x 6 m with a 1 m x 5 m goal area.
    fn default() -> Self {
        Self {
            length: 9.0,
            width: 6.0,
            goal_area_length: 1.0,
            goal_area_width: 5.0,
            center_circle_radius: 0.75,
            line_sample_spacing: 0.5,
        }
    }
}

impl FieldDimensions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("field.length", self.length),
            ("field.width", self.width),
            ("field.goal_area_length", self.goal_area_length),
            ("field.goal_area_width", self.goal_area_width),
            ("field.center_circle_radius", self.center_circle_radius),
            ("field.line_sample_spacing", self.line_sample_spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        if self.goal_area_length >= self.length {
            return Err(Error::Config(format!(
                "field.goal_area_length ({}) must be smaller than field.length ({})",
                self.goal_area_length, self.length
            )));
        }
        if self.goal_area_width >= self.width {
            return Err(Error::Config(format!(
                "field.goal_area_width ({}) must be smaller than field.width ({})",
                self.goal_area_width, self.width
            )));
        }
        if 2.0 * self.center_circle_radius >= self.width {
            return Err(Error::Config(format!(
                "field.center_circle_radius ({}) must fit inside the field width ({})",
                self.center_circle_radius, self.width
            )));
        }
        Ok(())
    }

    pub fn half_length(&self) -> f64 {
        self.length / 2.0
    }

    pub fn half_width(&self) -> f64 {
        self.width / 2.0
    }

    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x.abs() <= self.half_length() + COINCIDENT_EPS
            && p.y.abs() <= self.half_width() + COINCIDENT_EPS
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LandmarkType {
    LCorner,
    TJunction,
    LinePoint,
    BoundaryPoint,
}

impl LandmarkType {
    pub const ALL: [LandmarkType; 4] = [
        LandmarkType::LCorner,
        LandmarkType::TJunction,
        LandmarkType::LinePoint,
        LandmarkType::BoundaryPoint,
    ];

    pub fn index(self) -> usize {
        match self {
            LandmarkType::LCorner => 0,
            LandmarkType::TJunction => 1,
            LandmarkType::LinePoint => 2,
            LandmarkType::BoundaryPoint => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LandmarkType::LCorner => "l_corner",
            LandmarkType::TJunction => "t_junction",
            LandmarkType::LinePoint => "line_point",
            LandmarkType::BoundaryPoint => "boundary_point",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark {
    pub id: u32,
    pub kind: LandmarkType,
    pub position: Point2<f64>,
}

/// A painted line segment, used by the renderer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSegment {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
}

impl LineSegment {
    pub fn new(ax: f64, ay: f64, bx: f64, by: f64) -> Self {
        Self {
            a: Point2::new(ax, ay),
            b: Point2::new(bx, by),
        }
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn point_at(&self, t: f64) -> Point2<f64> {
        self.a + (self.b - self.a) * t
    }
}

/// Immutable field description: dimensions, painted lines and the landmark
/// set. Construction is a pure function of the inputs, so two models built
/// from the same dimensions are identical.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel {
    pub dims: FieldDimensions,
    pub ball_radius: f64,
    pub landmarks: Vec<Landmark>,
    /// Straight painted lines (boundary, halfway, goal areas).
    pub segments: Vec<LineSegment>,
    /// Center circle, painted separately from the straight segments.
    pub circle_radius: f64,
}

pub fn build_field(dims: FieldDimensions, ball_radius: f64) -> Result<FieldModel> {
    dims.validate()?;
    if !(ball_radius > 0.0) || !ball_radius.is_finite() {
        return Err(Error::Config(format!(
            "field.ball_radius must be strictly positive, got {ball_radius}"
        )));
    }

    let hl = dims.half_length();
    let hw = dims.half_width();
    let gal = dims.goal_area_length;
    let gaw_half = dims.goal_area_width / 2.0;
    let r = dims.center_circle_radius;
    let spacing = dims.line_sample_spacing;

    let boundary = [
        LineSegment::new(-hl, -hw, hl, -hw),
        LineSegment::new(-hl, hw, hl, hw),
        LineSegment::new(-hl, -hw, -hl, hw),
        LineSegment::new(hl, -hw, hl, hw),
    ];
    let mut interior = vec![LineSegment::new(0.0, -hw, 0.0, hw)];
    for side in [-1.0, 1.0] {
        let goal_x = side * hl;
        let front_x = side * (hl - gal);
        interior.push(LineSegment::new(front_x, -gaw_half, front_x, gaw_half));
        interior.push(LineSegment::new(front_x, -gaw_half, goal_x, -gaw_half));
        interior.push(LineSegment::new(front_x, gaw_half, goal_x, gaw_half));
    }

    let mut corners: Vec<Point2<f64>> = vec![
        Point2::new(-hl, -hw),
        Point2::new(-hl, hw),
        Point2::new(hl, -hw),
        Point2::new(hl, hw),
    ];
    for side in [-1.0, 1.0] {
        let front_x = side * (hl - gal);
        corners.push(Point2::new(front_x, -gaw_half));
        corners.push(Point2::new(front_x, gaw_half));
    }
    // Crossings of the center circle and the halfway line have no T/L shape
    // of their own; they are filed under the corner category.
    corners.push(Point2::new(0.0, -r));
    corners.push(Point2::new(0.0, r));

    let junctions: Vec<Point2<f64>> = vec![
        Point2::new(0.0, -hw),
        Point2::new(0.0, hw),
        Point2::new(hl, -gaw_half),
        Point2::new(hl, gaw_half),
        Point2::new(-hl, -gaw_half),
        Point2::new(-hl, gaw_half),
    ];

    let blocked: Vec<Point2<f64>> = corners.iter().chain(junctions.iter()).copied().collect();
    let is_blocked =
        |p: &Point2<f64>| blocked.iter().any(|b| (p - b).norm() < COINCIDENT_EPS);

    let mut line_points = Vec::new();
    for seg in &interior {
        sample_interior(seg, spacing, &mut |p| {
            if !is_blocked(&p) {
                line_points.push(p);
            }
        });
    }
    // Circle samples: the count is rounded to a multiple of four so the
    // sampled set is symmetric under both field reflections.
    let n_circle = (4.0 * (2.0 * std::f64::consts::PI * r / (4.0 * spacing)).round()).max(4.0);
    let n_circle = n_circle as usize;
    for j in 0..n_circle {
        let a = 2.0 * std::f64::consts::PI * j as f64 / n_circle as f64;
        let p = Point2::new(r * a.cos(), r * a.sin());
        if !is_blocked(&p) {
            line_points.push(p);
        }
    }

    let mut boundary_points = Vec::new();
    for seg in &boundary {
        sample_interior(seg, spacing, &mut |p| {
            if !is_blocked(&p) {
                boundary_points.push(p);
            }
        });
    }

    let mut landmarks: Vec<Landmark> = Vec::new();
    let mut push_all = |kind: LandmarkType, pts: &[Point2<f64>]| {
        landmarks.extend(pts.iter().map(|&position| Landmark {
            id: 0,
            kind,
            position,
        }));
    };
    push_all(LandmarkType::LCorner, &corners);
    push_all(LandmarkType::TJunction, &junctions);
    push_all(LandmarkType::LinePoint, &line_points);
    push_all(LandmarkType::BoundaryPoint, &boundary_points);

    landmarks.sort_by(|a, b| {
        a.kind
            .index()
            .cmp(&b.kind.index())
            .then(a.position.x.total_cmp(&b.position.x))
            .then(a.position.y.total_cmp(&b.position.y))
    });
    for (id, lm) in landmarks.iter_mut().enumerate() {
        lm.id = id as u32;
    }

    let mut segments = boundary.to_vec();
    segments.extend(interior);

    Ok(FieldModel {
        dims,
        ball_radius,
        landmarks,
        segments,
        circle_radius: r,
    })
}

fn sample_interior(seg: &LineSegment, spacing: f64, emit: &mut impl FnMut(Point2<f64>)) {
    let len = seg.length();
    let mut k = 1usize;
    while (k as f64) * spacing < len - COINCIDENT_EPS {
        emit(seg.point_at((k as f64) * spacing / len));
        k += 1;
    }
}

impl FieldModel {
    pub fn landmarks_of_type(&self, kind: LandmarkType) -> Vec<&Landmark> {
        self.landmarks.iter().filter(|l| l.kind == kind).collect()
    }

    pub fn counts_by_type(&self) -> [usize; 4] {
        let mut counts = [0usize; 4];
        for lm in &self.landmarks {
            counts[lm.kind.index()] += 1;
        }
        counts
    }

    /// Debug export of the landmark list as `id,kind,x,y` CSV.
    pub fn export_landmarks_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "id,kind,x,y")?;
        for lm in &self.landmarks {
            writeln!(
                w,
                "{},{},{},{}",
                lm.id,
                lm.kind.name(),
                lm.position.x,
                lm.position.y
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle;

    fn standard() -> FieldModel {
        build_field(FieldDimensions::default(), 0.065).unwrap()
    }

    #[test]
    fn zero_length_is_a_configuration_error() {
        let dims = FieldDimensions {
            length: 0.0,
            ..FieldDimensions::default()
        };
        let err = build_field(dims, 0.065).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("field.length")));
    }

    #[test]
    fn golden_landmark_census_for_standard_field() {
        // Frozen from the closed-form census in `oracle::landmark_census`:
        // 10 L-corners, 6 T-junctions, 39 line points, 50 boundary points.
        let field = standard();
        let counts = field.counts_by_type();
        assert_eq!(counts, [10, 6, 39, 50]);
        assert_eq!(counts, oracle::landmark_census(&field.dims));
        assert_eq!(field.landmarks.len(), 105);
    }

    #[test]
    fn census_matches_oracle_for_other_dims() {
        for (l, w, gal, gaw, r, s) in [
            (6.0, 4.0, 1.0, 3.0, 0.6, 0.5),
            (9.0, 6.0, 1.0, 5.0, 0.75, 0.25),
            (10.4, 7.4, 1.2, 5.0, 0.75, 0.7),
        ] {
            let dims = FieldDimensions {
                length: l,
                width: w,
                goal_area_length: gal,
                goal_area_width: gaw,
                center_circle_radius: r,
                line_sample_spacing: s,
            };
            let field = build_field(dims, 0.065).unwrap();
            assert_eq!(
                field.counts_by_type(),
                oracle::landmark_census(&dims),
                "census mismatch for dims {dims:?}"
            );
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = standard();
        let b = standard();
        assert_eq!(a, b);
    }

    #[test]
    fn l_corners_include_the_four_outer_corners() {
        let field = standard();
        let corners = field.landmarks_of_type(LandmarkType::LCorner);
        for (x, y) in [(-4.5, -3.0), (-4.5, 3.0), (4.5, -3.0), (4.5, 3.0)] {
            assert!(
                corners
                    .iter()
                    .any(|l| (l.position.x - x).abs() < 1e-12 && (l.position.y - y).abs() < 1e-12),
                "missing corner ({x},{y})"
            );
        }
    }

    #[test]
    fn kinds_partition_the_landmark_list() {
        let field = standard();
        let union: usize = LandmarkType::ALL
            .iter()
            .map(|&k| field.landmarks_of_type(k).len())
            .sum();
        assert_eq!(union, field.landmarks.len());
        // Filtering preserves order and covers every id exactly once.
        let mut ids: Vec<u32> = LandmarkType::ALL
            .iter()
            .flat_map(|&k| field.landmarks_of_type(k).into_iter().map(|l| l.id))
            .collect();
        ids.sort_unstable();
        assert!(ids.iter().enumerate().all(|(i, &id)| id == i as u32));
    }

    #[test]
    fn landmarks_are_mirror_symmetric_across_the_halfway_line() {
        let field = standard();
        for lm in &field.landmarks {
            let mirrored = Point2::new(-lm.position.x, lm.position.y);
            let found = field.landmarks.iter().any(|other| {
                other.kind == lm.kind && (other.position - mirrored).norm() < 1e-9
            });
            assert!(found, "no mirror partner for {lm:?}");
        }
    }

    #[test]
    fn landmarks_lie_within_the_boundary() {
        let field = standard();
        assert!(field.landmarks.iter().all(|l| field.dims.contains(&l.position)));
    }

    #[test]
    fn csv_export_has_one_row_per_landmark() {
        let field = standard();
        let mut buf = Vec::new();
        field.export_landmarks_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), field.landmarks.len() + 1);
        assert!(text.starts_with("id,kind,x,y\n"));
    }
}

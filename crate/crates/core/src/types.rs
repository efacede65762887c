//! Shared domain types: points, clouds, boxes, categories.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use crate::error::{Error, Result};

/// A single LiDAR return in the sensor frame (meters, reflectance in [0, 1]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub reflectance: f64,
}

impl Point {
    pub fn new(x: f64, y: f64, z: f64, reflectance: f64) -> Self {
        Point { x, y, z, reflectance }
    }

    #[inline]
    pub fn pos(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn dist_sq(&self, other: &Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        dx * dx + dy * dy + dz * dz
    }
}

#[inline]
pub fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

#[inline]
pub fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// An ordered frame of points. Point order is preserved exactly as read;
/// every downstream stage is deterministic in it.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point>,
    pub frame_id: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point>, frame_id: impl Into<String>) -> Self {
        PointCloud { points, frame_id: frame_id.into() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Object categories the detector can emit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Category {
    Car,
    Pedestrian,
    Cyclist,
}

impl Category {
    pub fn name(self) -> &'static str {
        match self {
            Category::Car => "Car",
            Category::Pedestrian => "Pedestrian",
            Category::Cyclist => "Cyclist",
        }
    }

    /// Median box dimensions used to normalize regression targets.
    pub fn medians(self) -> BoxMedians {
        match self {
            Category::Car => BoxMedians { length: 3.88, height: 1.5, width: 1.63 },
            Category::Pedestrian => BoxMedians { length: 0.89, height: 1.76, width: 0.64 },
            Category::Cyclist => BoxMedians { length: 1.77, height: 1.74, width: 0.60 },
        }
    }
}

/// Label-file categories; `DontCare` marks regions excluded from training
/// and evaluation credit/penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelCategory {
    Car,
    Pedestrian,
    Cyclist,
    DontCare,
}

impl LabelCategory {
    pub fn as_category(self) -> Option<Category> {
        match self {
            LabelCategory::Car => Some(Category::Car),
            LabelCategory::Pedestrian => Some(Category::Pedestrian),
            LabelCategory::Cyclist => Some(Category::Cyclist),
            LabelCategory::DontCare => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    pub fn name(self) -> &'static str {
        match self {
            Difficulty::Easy => "Easy",
            Difficulty::Moderate => "Moderate",
            Difficulty::Hard => "Hard",
        }
    }
}

/// Median (length, height, width) of a category's boxes, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxMedians {
    pub length: f64,
    pub height: f64,
    pub width: f64,
}

/// Yaw bin for view classes: front spans [pi/4, 3pi/4), side spans [-pi/4, pi/4).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewBin {
    Front,
    Side,
}

impl ViewBin {
    pub fn center(self) -> f64 {
        match self {
            ViewBin::Front => FRAC_PI_2,
            ViewBin::Side => 0.0,
        }
    }
}

/// Fold a yaw into [-pi/4, 3pi/4) by adding multiples of pi. Boxes are
/// pi-periodic, so this loses nothing.
pub fn fold_yaw(yaw: f64) -> f64 {
    let mut y = yaw % PI;
    if y < -FRAC_PI_4 {
        y += PI;
    } else if y >= 3.0 * FRAC_PI_4 {
        y -= PI;
    }
    y
}

/// Which yaw bin a (folded) yaw falls into.
pub fn view_bin_of(yaw: f64) -> ViewBin {
    if fold_yaw(yaw) >= FRAC_PI_4 {
        ViewBin::Front
    } else {
        ViewBin::Side
    }
}

/// A labeled ground-truth box in the LiDAR frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthBox {
    pub category: LabelCategory,
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub difficulty: Option<Difficulty>,
}

impl GroundTruthBox {
    /// True when `pos` lies inside the yaw-rotated box (closed faces).
    pub fn contains(&self, pos: [f64; 3]) -> bool {
        if (pos[2] - self.cz).abs() > self.h * 0.5 {
            return false;
        }
        let dx = pos[0] - self.cx;
        let dy = pos[1] - self.cy;
        let (s, c) = self.yaw.sin_cos();
        // rotate into the box frame: local x along heading
        let lx = c * dx + s * dy;
        let ly = -s * dx + c * dy;
        lx.abs() <= self.l * 0.5 && ly.abs() <= self.w * 0.5
    }
}

/// A detected 7-DoF box with confidence score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box7DoF {
    pub category: Category,
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
    pub score: f64,
}

/// Which set of foreground categories a run detects. The class list always
/// ends with DontCare and Background.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CategorySet {
    Car,
    PedCyc,
}

impl CategorySet {
    pub fn categories(self) -> &'static [Category] {
        match self {
            CategorySet::Car => &[Category::Car],
            CategorySet::PedCyc => &[Category::Pedestrian, Category::Cyclist],
        }
    }

    /// Total class count M: two view classes per category + DontCare + Background.
    pub fn num_classes(self) -> usize {
        self.categories().len() * 2 + 2
    }

    pub fn background_class(self) -> usize {
        self.num_classes() - 1
    }

    pub fn dontcare_class(self) -> usize {
        self.num_classes() - 2
    }

    /// Class index for a foreground (category, view) pair.
    pub fn class_of(self, category: Category, view: ViewBin) -> Result<usize> {
        let idx = self
            .categories()
            .iter()
            .position(|&c| c == category)
            .ok_or(Error::NonForegroundCategory(usize::MAX))?;
        Ok(idx * 2 + if view == ViewBin::Front { 0 } else { 1 })
    }

    /// Inverse of `class_of`; `None` for DontCare/Background.
    pub fn foreground_of_class(self, class: usize) -> Option<(Category, ViewBin)> {
        let cats = self.categories();
        if class >= cats.len() * 2 {
            return None;
        }
        let view = if class % 2 == 0 { ViewBin::Front } else { ViewBin::Side };
        Some((cats[class / 2], view))
    }

    pub fn class_name(self, class: usize) -> String {
        match self.foreground_of_class(class) {
            Some((cat, ViewBin::Front)) => format!("{}Front", cat.name()),
            Some((cat, ViewBin::Side)) => format!("{}Side", cat.name()),
            None if class == self.dontcare_class() => "DontCare".to_string(),
            _ => "Background".to_string(),
        }
    }
}

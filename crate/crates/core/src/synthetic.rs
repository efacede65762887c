//! Synthetic LiDAR-like scenes: boxes carrying Gaussian-jittered surface
//! points plus uniform clutter. Used for overfit training runs, invariance
//! harnesses, and benchmark inputs.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::types::{Category, Difficulty, GroundTruthBox, LabelCategory, Point, PointCloud};

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub categories: Vec<Category>,
    pub objects_per_scene: usize,
    pub surface_points_per_object: usize,
    pub clutter_points: usize,
    /// Scene extent: objects are placed with x in [x_min, x_max], y in
    /// [-y_half, y_half]. Kept away from the sensor origin so origin-ray
    /// directions are always well-defined.
    pub x_min: f64,
    pub x_max: f64,
    pub y_half: f64,
    pub noise_sigma: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            categories: vec![Category::Pedestrian, Category::Cyclist],
            objects_per_scene: 3,
            surface_points_per_object: 60,
            clutter_points: 120,
            x_min: 6.0,
            x_max: 22.0,
            y_half: 8.0,
            noise_sigma: 0.02,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// One point on the box surface (faces weighted by area) with Gaussian jitter.
fn surface_point(gt: &GroundTruthBox, sigma: f64, rng: &mut ChaCha8Rng) -> Point {
    let (l, w, h) = (gt.l, gt.w, gt.h);
    let areas = [w * h, w * h, l * h, l * h, l * w, l * w];
    let total: f64 = areas.iter().sum();
    let mut pick = rng.gen_range(0.0..total);
    let mut face = 0;
    for (k, a) in areas.iter().enumerate() {
        if pick < *a {
            face = k;
            break;
        }
        pick -= a;
    }
    let u = rng.gen_range(-0.5..0.5);
    let v = rng.gen_range(-0.5..0.5);
    let local = match face {
        0 => [l * 0.5, u * w, v * h],
        1 => [-l * 0.5, u * w, v * h],
        2 => [u * l, w * 0.5, v * h],
        3 => [u * l, -w * 0.5, v * h],
        4 => [u * l, v * w, h * 0.5],
        _ => [u * l, v * w, -h * 0.5],
    };
    let (s, c) = gt.yaw.sin_cos();
    Point::new(
        gt.cx + c * local[0] - s * local[1] + sigma * gaussian(rng),
        gt.cy + s * local[0] + c * local[1] + sigma * gaussian(rng),
        gt.cz + local[2] + sigma * gaussian(rng),
        rng.gen_range(0.0..1.0),
    )
}

/// Generate one scene: non-overlapping category boxes with surface points,
/// plus uniform clutter in the scene slab. Labels are all difficulty Easy.
pub fn generate_scene(spec: &SceneSpec, rng: &mut ChaCha8Rng, frame_id: &str) -> (PointCloud, Vec<GroundTruthBox>) {
    let mut boxes: Vec<GroundTruthBox> = Vec::new();
    let mut guard = 0;
    while boxes.len() < spec.objects_per_scene && guard < 1000 {
        guard += 1;
        let cat = spec.categories[rng.gen_range(0..spec.categories.len())];
        let m = cat.medians();
        let jitter = |rng: &mut ChaCha8Rng| rng.gen_range(0.9..1.15);
        let cand = GroundTruthBox {
            category: match cat {
                Category::Car => LabelCategory::Car,
                Category::Pedestrian => LabelCategory::Pedestrian,
                Category::Cyclist => LabelCategory::Cyclist,
            },
            cx: rng.gen_range(spec.x_min..spec.x_max),
            cy: rng.gen_range(-spec.y_half..spec.y_half),
            cz: rng.gen_range(-0.2..0.2),
            l: m.length * jitter(rng),
            w: m.width * jitter(rng),
            h: m.height * jitter(rng),
            yaw: rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            difficulty: Some(Difficulty::Easy),
        };
        // keep objects clearly separated
        let too_close = boxes.iter().any(|b| {
            let d = ((b.cx - cand.cx).powi(2) + (b.cy - cand.cy).powi(2)).sqrt();
            d < (b.l.max(b.w) + cand.l.max(cand.w)) * 0.5 + 1.0
        });
        if !too_close {
            boxes.push(cand);
        }
    }

    let mut points = Vec::new();
    for b in &boxes {
        for _ in 0..spec.surface_points_per_object {
            points.push(surface_point(b, spec.noise_sigma, rng));
        }
    }
    for _ in 0..spec.clutter_points {
        let p = Point::new(
            rng.gen_range(spec.x_min - 2.0..spec.x_max + 2.0),
            rng.gen_range(-spec.y_half - 2.0..spec.y_half + 2.0),
            rng.gen_range(-1.0..1.2),
            rng.gen_range(0.0..1.0),
        );
        // clutter must not fall inside an object box
        if boxes.iter().any(|b| b.contains(p.pos())) {
            continue;
        }
        points.push(p);
    }

    (PointCloud::new(points, frame_id), boxes)
}

/// Uniform random cloud in a cube of the given side, offset away from the
/// origin (benchmark scaling input).
pub fn uniform_cloud(n: usize, side: f64, rng: &mut ChaCha8Rng, frame_id: &str) -> PointCloud {
    let points = (0..n)
        .map(|_| {
            Point::new(
                5.0 + rng.gen_range(0.0..side),
                rng.gen_range(-side * 0.5..side * 0.5),
                rng.gen_range(0.0..side),
                rng.gen_range(0.0..1.0),
            )
        })
        .collect();
    PointCloud::new(points, frame_id)
}

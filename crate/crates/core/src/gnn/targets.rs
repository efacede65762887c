//! Per-vertex training targets from ground-truth boxes.

use crate::detection::encode_box_target;
use crate::error::Result;
use crate::types::{CategorySet, GroundTruthBox, Point};

/// Per-vertex class labels and (foreground-only) box regression targets.
/// Vertices inside DontCare regions are excluded from both loss terms.
#[derive(Debug, Clone)]
pub struct FrameTargets {
    pub class: Vec<usize>,
    pub loc: Vec<Option<[f64; 7]>>,
    pub excluded: Vec<bool>,
}

impl FrameTargets {
    pub fn num_foreground(&self) -> usize {
        self.loc.iter().filter(|l| l.is_some()).count()
    }
}

/// Assign targets: a vertex inside a ground-truth box of the active category
/// set is foreground for that box's view class (first containing box in label
/// order wins); otherwise a vertex inside a DontCare box is excluded;
/// everything else is background.
pub fn assign_targets(
    vertices: &[Point],
    gts: &[GroundTruthBox],
    set: CategorySet,
) -> Result<FrameTargets> {
    let mut class = Vec::with_capacity(vertices.len());
    let mut loc = Vec::with_capacity(vertices.len());
    let mut excluded = Vec::with_capacity(vertices.len());
    let background = set.background_class();

    for v in vertices {
        let mut assigned = false;
        for gt in gts {
            let Some(cat) = gt.category.as_category() else {
                continue;
            };
            if !set.categories().contains(&cat) || !gt.contains(v.pos()) {
                continue;
            }
            let view = crate::types::view_bin_of(gt.yaw);
            class.push(set.class_of(cat, view)?);
            loc.push(Some(encode_box_target(gt, v)?));
            excluded.push(false);
            assigned = true;
            break;
        }
        if assigned {
            continue;
        }
        let in_dontcare = gts
            .iter()
            .any(|g| g.category.as_category().is_none() && g.contains(v.pos()));
        if in_dontcare {
            class.push(set.dontcare_class());
            loc.push(None);
            excluded.push(true);
        } else {
            class.push(background);
            loc.push(None);
            excluded.push(false);
        }
    }
    Ok(FrameTargets { class, loc, excluded })
}

use serde::{Deserialize, Serialize};

use super::distance::{crop, dice_grid, expand, hd95_grid};
use super::MetricConfig;
use crate::morphology::{dilate_grid, label_grid};
use crate::volume::Geometry;

/// Lesion-wise scores of one region, with the lesion bookkeeping behind them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LesionScores {
    pub lw_dice: f64,
    pub lw_hd95: f64,
    pub gt_lesions: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

fn component_boxes(dims: [usize; 3], ids: &[u32], count: usize) -> Vec<([usize; 3], [usize; 3])> {
    let mut boxes = vec![([usize::MAX; 3], [0usize; 3]); count + 1];
    let [nx, ny, _] = dims;
    for (i, &id) in ids.iter().enumerate() {
        if id == 0 {
            continue;
        }
        let c = [i % nx, (i / nx) % ny, i / (nx * ny)];
        let b = &mut boxes[id as usize];
        for a in 0..3 {
            b.0[a] = b.0[a].min(c[a]);
            b.1[a] = b.1[a].max(c[a]);
        }
    }
    boxes
}

fn union_box(a: ([usize; 3], [usize; 3]), b: ([usize; 3], [usize; 3])) -> ([usize; 3], [usize; 3]) {
    ([0, 1, 2].map(|k| a.0[k].min(b.0[k])), [0, 1, 2].map(|k| a.1[k].max(b.1[k])))
}

/// Lesion-wise Dice and HD95.
///
/// Ground-truth lesions are the connected components of `gt`. A predicted
/// component matches a lesion when it touches the lesion dilated by
/// `dilation_radius`; the dilation serves matching only. Each matched lesion
/// is scored against the union of its matched components. Unmatched
/// predicted components are false positives and unmatched lesions false
/// negatives; both add `penalty_mm` to the HD95 sum, and the denominators are
/// `lesions + false positives`.
pub(crate) fn lesionwise_grid(geometry: &Geometry, pred: &[bool], gt: &[bool], cfg: &MetricConfig) -> LesionScores {
    let dims = geometry.dims;
    let gt_map = label_grid(geometry, gt, cfg.connectivity);
    let pred_map = label_grid(geometry, pred, cfg.connectivity);
    let n_gt = gt_map.count();
    let n_pred = pred_map.count();
    if n_gt == 0 && n_pred == 0 {
        return LesionScores {
            lw_dice: 1.0,
            lw_hd95: 0.0,
            gt_lesions: 0,
            false_positives: 0,
            false_negatives: 0,
        };
    }
    let gt_ids = gt_map.ids();
    let pred_ids = pred_map.ids();
    let gt_boxes = component_boxes(dims, gt_ids, n_gt);
    let pred_boxes = component_boxes(dims, pred_ids, n_pred);

    let mut matched = vec![false; n_pred + 1];
    let mut dice_sum = 0.0;
    let mut hd_sum = 0.0;
    let mut false_negatives = 0;
    for lesion in 1..=n_gt as u32 {
        let (lo, hi) = expand(gt_boxes[lesion as usize].0, gt_boxes[lesion as usize].1, cfg.dilation_radius, dims);
        let (cd, local_ids) = crop(dims, gt_ids, lo, hi);
        let local: Vec<bool> = local_ids.iter().map(|&v| v == lesion).collect();
        let dilated = dilate_grid(cd, &local, cfg.dilation_radius, cfg.connectivity);
        let (_, local_pred) = crop(dims, pred_ids, lo, hi);
        let mut hits: Vec<u32> = local_pred
            .iter()
            .zip(&dilated)
            .filter(|(&p, &d)| d && p != 0)
            .map(|(&p, _)| p)
            .collect();
        hits.sort_unstable();
        hits.dedup();
        if hits.is_empty() {
            false_negatives += 1;
            continue;
        }
        let mut bx = gt_boxes[lesion as usize];
        for &p in &hits {
            matched[p as usize] = true;
            bx = union_box(bx, pred_boxes[p as usize]);
        }
        let (lo, hi) = expand(bx.0, bx.1, 1, dims);
        let (cd, g) = crop(dims, gt_ids, lo, hi);
        let (_, p) = crop(dims, pred_ids, lo, hi);
        let g: Vec<bool> = g.iter().map(|&v| v == lesion).collect();
        let p: Vec<bool> = p.iter().map(|&v| v != 0 && hits.binary_search(&v).is_ok()).collect();
        dice_sum += dice_grid(&g, &p);
        hd_sum += hd95_grid(cd, geometry.spacing, &g, &p, cfg.penalty_mm);
    }
    let false_positives = (1..=n_pred).filter(|&p| !matched[p]).count();
    let denom = (n_gt + false_positives) as f64;
    LesionScores {
        lw_dice: dice_sum / denom,
        lw_hd95: (hd_sum + cfg.penalty_mm * (false_positives + false_negatives) as f64) / denom,
        gt_lesions: n_gt,
        false_positives,
        false_negatives,
    }
}

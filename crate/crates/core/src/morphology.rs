//! Binary-mask connected components, dilation and component filtering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Geometry, LabelVolume, Mask};

/// Voxel adjacency: faces (6), faces+edges (18) or faces+edges+corners (26).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    Eighteen,
    #[default]
    TwentySix,
}

impl Connectivity {
    pub const ALL: [Connectivity; 3] = [Connectivity::Six, Connectivity::Eighteen, Connectivity::TwentySix];

    /// Neighbour offsets (excluding the center).
    pub fn offsets(self) -> Vec<[i32; 3]> {
        let max_nonzero = match self {
            Connectivity::Six => 1,
            Connectivity::Eighteen => 2,
            Connectivity::TwentySix => 3,
        };
        let mut out = Vec::with_capacity(26);
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1i32 {
                    let nz = (dx != 0) as usize + (dy != 0) as usize + (dz != 0) as usize;
                    if nz >= 1 && nz <= max_nonzero {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }

    /// Offsets that precede the center in linear (raster) order.
    fn backward_offsets(self) -> Vec<[i32; 3]> {
        self.offsets()
            .into_iter()
            .filter(|&[dx, dy, dz]| dz < 0 || (dz == 0 && (dy < 0 || (dy == 0 && dx < 0))))
            .collect()
    }
}

impl TryFrom<u8> for Connectivity {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            6 => Ok(Connectivity::Six),
            18 => Ok(Connectivity::Eighteen),
            26 => Ok(Connectivity::TwentySix),
            other => Err(format!("connectivity must be 6, 18 or 26, got {other}")),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::Eighteen => 18,
            Connectivity::TwentySix => 26,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentSize {
    pub voxels: usize,
    pub volume_mm3: f64,
}

/// Connected-component labeling of a binary grid.
///
/// Ids are contiguous `1..=K`, assigned in order of each component's first
/// voxel in linear index order; 0 is background.
#[derive(Debug, Clone)]
pub struct ComponentMap {
    geometry: Geometry,
    ids: Vec<u32>,
    sizes: Vec<ComponentSize>,
    connectivity: Connectivity,
}

impl ComponentMap {
    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn connectivity(&self) -> Connectivity {
        self.connectivity
    }

    pub fn count(&self) -> usize {
        self.sizes.len()
    }

    /// Size of component `id` (1-based).
    pub fn size(&self, id: u32) -> ComponentSize {
        self.sizes[id as usize - 1]
    }

    pub fn sizes(&self) -> &[ComponentSize] {
        &self.sizes
    }

    pub fn mask_of(&self, id: u32) -> Mask {
        let data = self.ids.iter().map(|&v| v == id).collect();
        Mask::new(self.geometry.clone(), data).expect("component map has consistent length")
    }
}

struct UnionFind {
    parent: Vec<u32>,
}

impl UnionFind {
    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let p = self.parent[x as usize];
            self.parent[x as usize] = self.parent[p as usize];
            x = p;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            // keep the smaller provisional label as root
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi as usize] = lo;
        }
    }
}

pub fn connected_components(mask: &Mask, connectivity: Connectivity) -> ComponentMap {
    label_grid(mask.geometry(), mask.data(), connectivity)
}

/// Two-pass union-find labeling over a raw boolean grid.
pub(crate) fn label_grid(geometry: &Geometry, fg: &[bool], connectivity: Connectivity) -> ComponentMap {
    let [nx, ny, nz] = geometry.dims;
    let back = connectivity.backward_offsets();
    let mut provisional = vec![0u32; fg.len()];
    let mut uf = UnionFind { parent: vec![0] };

    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = x + nx * (y + ny * z);
                if !fg[i] {
                    continue;
                }
                let mut current = 0u32;
                for &[dx, dy, dz] in &back {
                    let (xx, yy, zz) = (x as i64 + dx as i64, y as i64 + dy as i64, z as i64 + dz as i64);
                    if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 {
                        continue;
                    }
                    let j = xx as usize + nx * (yy as usize + ny * zz as usize);
                    let l = provisional[j];
                    if l == 0 {
                        continue;
                    }
                    if current == 0 {
                        current = l;
                    } else if current != l {
                        uf.union(current, l);
                    }
                }
                if current == 0 {
                    current = uf.parent.len() as u32;
                    uf.parent.push(current);
                }
                provisional[i] = current;
            }
        }
    }

    // final ids in order of first appearance in linear order
    let mut final_of_root = vec![0u32; uf.parent.len()];
    let mut sizes: Vec<ComponentSize> = Vec::new();
    let vv = geometry.voxel_volume();
    for l in provisional.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = uf.find(*l) as usize;
        if final_of_root[root] == 0 {
            sizes.push(ComponentSize {
                voxels: 0,
                volume_mm3: 0.0,
            });
            final_of_root[root] = sizes.len() as u32;
        }
        let id = final_of_root[root];
        sizes[id as usize - 1].voxels += 1;
        *l = id;
    }
    for s in sizes.iter_mut() {
        s.volume_mm3 = s.voxels as f64 * vv;
    }
    ComponentMap {
        geometry: geometry.clone(),
        ids: provisional,
        sizes,
        connectivity,
    }
}

/// Keep only the largest component (ties go to the smallest id).
pub fn largest_component(mask: &Mask, connectivity: Connectivity) -> Result<Mask> {
    let cc = connected_components(mask, connectivity);
    if cc.count() == 0 {
        return Err(Error::EmptyMask);
    }
    let mut best = 1u32;
    for id in 2..=cc.count() as u32 {
        if cc.size(id).voxels > cc.size(best).voxels {
            best = id;
        }
    }
    Ok(cc.mask_of(best))
}

/// `radius` iterations of dilation with the connectivity's structuring element.
pub fn binary_dilate(mask: &Mask, radius: usize, connectivity: Connectivity) -> Mask {
    let g = mask.geometry();
    let data = dilate_grid(g.dims, mask.data(), radius, connectivity);
    Mask::new(g.clone(), data).expect("dilation preserves length")
}

pub(crate) fn dilate_grid(dims: [usize; 3], fg: &[bool], radius: usize, connectivity: Connectivity) -> Vec<bool> {
    let mut cur = fg.to_vec();
    if radius == 0 {
        return cur;
    }
    let [nx, ny, nz] = dims;
    if connectivity == Connectivity::TwentySix {
        // the 3x3x3 cube is separable: dilate along each axis in turn
        for _ in 0..radius {
            for axis in 0..3 {
                cur = dilate_axis(dims, &cur, axis);
            }
        }
        return cur;
    }
    let offs = connectivity.offsets();
    for _ in 0..radius {
        let mut next = cur.clone();
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let i = x + nx * (y + ny * z);
                    if !cur[i] {
                        continue;
                    }
                    for &[dx, dy, dz] in &offs {
                        let (xx, yy, zz) = (x as i64 + dx as i64, y as i64 + dy as i64, z as i64 + dz as i64);
                        if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64 {
                            continue;
                        }
                        next[xx as usize + nx * (yy as usize + ny * zz as usize)] = true;
                    }
                }
            }
        }
        cur = next;
    }
    cur
}

fn dilate_axis(dims: [usize; 3], src: &[bool], axis: usize) -> Vec<bool> {
    let [nx, ny, _] = dims;
    let stride = match axis {
        0 => 1,
        1 => nx,
        _ => nx * ny,
    };
    let n = dims[axis];
    let mut out = src.to_vec();
    for (i, &v) in src.iter().enumerate() {
        if !v {
            continue;
        }
        let pos = match axis {
            0 => i % nx,
            1 => (i / nx) % ny,
            _ => i / (nx * ny),
        };
        if pos > 0 {
            out[i - stride] = true;
        }
        if pos + 1 < n {
            out[i + stride] = true;
        }
    }
    out
}

/// Erase every component of `label` whose volume is below `min_volume_mm3`.
pub fn remove_components_below(
    labels: &LabelVolume,
    label: u8,
    min_volume_mm3: f64,
    connectivity: Connectivity,
) -> Result<LabelVolume> {
    if label == 0 || !labels.alphabet().contains(label) {
        return Err(Error::invalid(format!("label {label} is not in the alphabet")));
    }
    let mut data = labels.data().to_vec();
    remove_small_in_place(labels.geometry(), &mut data, label, min_volume_mm3, connectivity);
    Ok(LabelVolume::from_parts_unchecked(
        labels.geometry().clone(),
        data,
        labels.alphabet().clone(),
    ))
}

pub(crate) fn remove_small_in_place(
    geometry: &Geometry,
    data: &mut [u8],
    label: u8,
    min_volume_mm3: f64,
    connectivity: Connectivity,
) -> bool {
    if min_volume_mm3 <= 0.0 {
        return false;
    }
    let fg: Vec<bool> = data.iter().map(|&v| v == label).collect();
    let cc = label_grid(geometry, &fg, connectivity);
    let drop: Vec<bool> = cc.sizes().iter().map(|s| s.volume_mm3 < min_volume_mm3).collect();
    if !drop.iter().any(|&d| d) {
        return false;
    }
    for (v, &id) in data.iter_mut().zip(cc.ids()) {
        if id != 0 && drop[id as usize - 1] {
            *v = 0;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Alphabet;

    fn grid(dims: [usize; 3]) -> Geometry {
        Geometry::new(dims, [1.0; 3]).unwrap()
    }

    fn mask_with(dims: [usize; 3], on: &[[usize; 3]]) -> Mask {
        let g = grid(dims);
        let mut m = Mask::empty(g.clone());
        for &[x, y, z] in on {
            m.data_mut()[g.index(x, y, z)] = true;
        }
        m
    }

    #[test]
    fn neighbourhood_sizes() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::Eighteen.offsets().len(), 18);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
        for c in Connectivity::ALL {
            assert_eq!(c.backward_offsets().len(), c.offsets().len() / 2);
        }
    }

    #[test]
    fn single_voxel() {
        let cc = connected_components(&mask_with([3, 3, 3], &[[1, 1, 1]]), Connectivity::TwentySix);
        assert_eq!(cc.count(), 1);
        assert_eq!(cc.size(1).voxels, 1);
        assert_eq!(cc.size(1).volume_mm3, 1.0);
    }

    #[test]
    fn corner_diagonal_depends_on_connectivity() {
        let m = mask_with([2, 2, 2], &[[0, 0, 0], [1, 1, 1]]);
        assert_eq!(connected_components(&m, Connectivity::TwentySix).count(), 1);
        assert_eq!(connected_components(&m, Connectivity::Eighteen).count(), 2);
        assert_eq!(connected_components(&m, Connectivity::Six).count(), 2);
        let edge = mask_with([2, 2, 1], &[[0, 0, 0], [1, 1, 0]]);
        assert_eq!(connected_components(&edge, Connectivity::Eighteen).count(), 1);
        assert_eq!(connected_components(&edge, Connectivity::Six).count(), 2);
    }

    #[test]
    fn ids_follow_first_voxel_order() {
        // U shape: the two arms get provisional labels before the bridge merges them
        let m = mask_with(
            [5, 3, 1],
            &[[0, 0, 0], [4, 0, 0], [0, 1, 0], [4, 1, 0], [0, 2, 0], [1, 2, 0], [2, 2, 0], [3, 2, 0], [4, 2, 0], [2, 0, 0]],
        );
        let cc = connected_components(&m, Connectivity::Six);
        assert_eq!(cc.count(), 2);
        assert_eq!(cc.ids()[0], 1);
        assert_eq!(cc.ids()[2], 2);
        assert_eq!(cc.ids()[4], 1);
        assert_eq!(cc.size(1).voxels, 9);
    }

    #[test]
    fn largest_component_rules() {
        let m = mask_with([10, 1, 1], &[[0, 0, 0], [1, 0, 0], [4, 0, 0], [5, 0, 0], [6, 0, 0], [7, 0, 0], [8, 0, 0]]);
        let l = largest_component(&m, Connectivity::TwentySix).unwrap();
        assert_eq!(l.count(), 5);
        assert!(l.get(4) && !l.get(0));

        let tie = mask_with([10, 1, 1], &[[0, 0, 0], [1, 0, 0], [5, 0, 0], [6, 0, 0]]);
        let l = largest_component(&tie, Connectivity::TwentySix).unwrap();
        assert!(l.get(0) && l.get(1) && !l.get(5));

        let single = mask_with([4, 4, 4], &[[1, 1, 1], [1, 2, 1]]);
        assert_eq!(largest_component(&single, Connectivity::TwentySix).unwrap(), single);

        let empty = Mask::empty(grid([2, 2, 2]));
        assert!(matches!(largest_component(&empty, Connectivity::Six), Err(Error::EmptyMask)));
    }

    #[test]
    fn dilation_of_center_voxel() {
        let m = mask_with([5, 5, 5], &[[2, 2, 2]]);
        assert_eq!(binary_dilate(&m, 0, Connectivity::TwentySix), m);
        assert_eq!(binary_dilate(&m, 1, Connectivity::TwentySix).count(), 27);
        assert_eq!(binary_dilate(&m, 1, Connectivity::Eighteen).count(), 19);
        assert_eq!(binary_dilate(&m, 1, Connectivity::Six).count(), 7);
        assert_eq!(binary_dilate(&m, 2, Connectivity::Six).count(), 25);
        assert_eq!(binary_dilate(&m, 2, Connectivity::TwentySix).count(), 125);
    }

    #[test]
    fn remove_components_below_threshold() {
        let g = grid([20, 10, 1]);
        let abc = Alphabet::from_pairs(&[(1, "ET"), (2, "ED")]).unwrap();
        let mut data = vec![0u8; g.len()];
        // 3-voxel ET island, 50-voxel ET block, one ED voxel
        for x in 0..3 {
            data[g.index(x, 0, 0)] = 1;
        }
        for x in 10..20 {
            for y in 5..10 {
                data[g.index(x, y, 0)] = 1;
            }
        }
        data[g.index(5, 5, 0)] = 2;
        let lv = LabelVolume::new(g, data, abc).unwrap();

        let same = remove_components_below(&lv, 1, 0.0, Connectivity::TwentySix).unwrap();
        assert_eq!(same, lv);

        let out = remove_components_below(&lv, 1, 10.0, Connectivity::TwentySix).unwrap();
        assert_eq!(out.count(1), 50);
        assert_eq!(out.count(2), 1);

        let gone = remove_components_below(&lv, 1, 1e6, Connectivity::TwentySix).unwrap();
        assert_eq!(gone.count(1), 0);
        assert_eq!(gone.count(2), 1);

        assert!(remove_components_below(&lv, 7, 1.0, Connectivity::TwentySix).is_err());
    }

    #[test]
    fn connectivity_serde_as_number() {
        let c: Connectivity = serde_json::from_str("18").unwrap();
        assert_eq!(c, Connectivity::Eighteen);
        assert_eq!(serde_json::to_string(&Connectivity::Six).unwrap(), "6");
        assert!(serde_json::from_str::<Connectivity>("8").is_err());
    }
}

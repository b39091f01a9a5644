//! Connected-component analysis of binary masks and the kidney-count criterion.

use alloc::vec;
use alloc::vec::Vec;

use crate::volume::{voxel_volume_ml, Dims3, Grid, Mask, Spacing};

/// Voxel-count threshold for a component to count as a kidney, at normalized spacing.
pub const DEFAULT_TH_VN: usize = 10_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Connectivity {
    /// Face neighbours only.
    Six,
    /// Face, edge and corner neighbours.
    #[default]
    TwentySix,
}

impl Connectivity {
    pub fn from_count(n: u32) -> Option<Self> {
        match n {
            6 => Some(Connectivity::Six),
            26 => Some(Connectivity::TwentySix),
            _ => None,
        }
    }

    pub fn count(self) -> u32 {
        match self {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }

    /// Neighbour offsets that precede a voxel in depth → row → col scan order.
    fn backward_offsets(self) -> &'static [(isize, isize, isize)] {
        const SIX: [(isize, isize, isize); 3] = [(-1, 0, 0), (0, -1, 0), (0, 0, -1)];
        const TWENTY_SIX: [(isize, isize, isize); 13] = [
            (-1, -1, -1),
            (-1, -1, 0),
            (-1, -1, 1),
            (-1, 0, -1),
            (-1, 0, 0),
            (-1, 0, 1),
            (-1, 1, -1),
            (-1, 1, 0),
            (-1, 1, 1),
            (0, -1, -1),
            (0, -1, 0),
            (0, -1, 1),
            (0, 0, -1),
        ];
        match self {
            Connectivity::Six => &SIX,
            Connectivity::TwentySix => &TWENTY_SIX,
        }
    }
}

/// Component id per voxel: 0 is background, components are numbered 1..=count.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelMap {
    grid: Grid<u32>,
    count: usize,
}

impl LabelMap {
    pub fn dims(&self) -> Dims3 {
        self.grid.dims()
    }

    pub fn spacing(&self) -> Spacing {
        self.grid.spacing()
    }

    pub fn labels(&self) -> &[u32] {
        self.grid.data()
    }

    /// Number of components.
    pub fn count(&self) -> usize {
        self.count
    }

    /// Mask of the voxels carrying any of `ids`.
    pub fn select(&self, ids: &[u32]) -> Mask {
        let mut keep = vec![false; self.count + 1];
        for &id in ids {
            if let Some(k) = keep.get_mut(id as usize) {
                *k = id != 0;
            }
        }
        let data = self
            .labels()
            .iter()
            .map(|&l| u8::from(keep[l as usize]))
            .collect();
        Grid::from_parts(self.dims(), self.spacing(), data)
    }
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Two-pass union-find labeling. Ids follow the scan order of each component's
/// first voxel.
pub fn label_components(mask: &Mask, connectivity: Connectivity) -> LabelMap {
    let dims = mask.dims();
    let data = mask.data();
    let offsets = connectivity.backward_offsets();
    let mut provisional = vec![u32::MAX; dims.len()];
    let mut sets = DisjointSet { parent: Vec::new() };

    for d in 0..dims.depth {
        for r in 0..dims.rows {
            for c in 0..dims.cols {
                let idx = dims.index(d, r, c);
                if data[idx] == 0 {
                    continue;
                }
                let mut label = u32::MAX;
                for &(od, or, oc) in offsets {
                    let (nd, nr, nc) = (d as isize + od, r as isize + or, c as isize + oc);
                    if nd < 0
                        || nr < 0
                        || nc < 0
                        || nr >= dims.rows as isize
                        || nc >= dims.cols as isize
                    {
                        continue;
                    }
                    let n = provisional[dims.index(nd as usize, nr as usize, nc as usize)];
                    if n == u32::MAX {
                        continue;
                    }
                    label = if label == u32::MAX {
                        n
                    } else {
                        sets.union(label, n)
                    };
                }
                provisional[idx] = if label == u32::MAX {
                    sets.make()
                } else {
                    label
                };
            }
        }
    }

    let mut final_id = vec![0u32; sets.parent.len()];
    let mut count = 0u32;
    let labels = provisional
        .iter()
        .map(|&p| {
            if p == u32::MAX {
                return 0;
            }
            let root = sets.find(p) as usize;
            if final_id[root] == 0 {
                count += 1;
                final_id[root] = count;
            }
            final_id[root]
        })
        .collect();

    LabelMap {
        grid: Grid::from_parts(dims, mask.spacing(), labels),
        count: count as usize,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentStats {
    pub id: u32,
    pub voxel_count: usize,
    pub volume_ml: f64,
    /// Mean voxel position as (depth, row, col).
    pub centroid: [f64; 3],
}

/// Per-component statistics, largest first; equal counts keep ascending id order.
pub fn component_stats(lm: &LabelMap) -> Vec<ComponentStats> {
    let dims = lm.dims();
    let mut counts = vec![0usize; lm.count + 1];
    let mut sums = vec![[0f64; 3]; lm.count + 1];
    let labels = lm.labels();
    for d in 0..dims.depth {
        for r in 0..dims.rows {
            for c in 0..dims.cols {
                let id = labels[dims.index(d, r, c)] as usize;
                if id != 0 {
                    counts[id] += 1;
                    let s = &mut sums[id];
                    s[0] += d as f64;
                    s[1] += r as f64;
                    s[2] += c as f64;
                }
            }
        }
    }
    let mut stats: Vec<ComponentStats> = (1..=lm.count)
        .map(|id| {
            let n = counts[id] as f64;
            ComponentStats {
                id: id as u32,
                voxel_count: counts[id],
                volume_ml: voxel_volume_ml(lm.spacing(), counts[id]),
                centroid: [sums[id][0] / n, sums[id][1] / n, sums[id][2] / n],
            }
        })
        .collect();
    // Stable sort keeps ascending id among ties.
    stats.sort_by_key(|s| core::cmp::Reverse(s.voxel_count));
    stats
}

/// Mean position of all foreground voxels, `None` for an empty mask.
pub fn foreground_centroid(mask: &Mask) -> Option<[f64; 3]> {
    let dims = mask.dims();
    let mut sum = [0f64; 3];
    let mut n = 0usize;
    for d in 0..dims.depth {
        for r in 0..dims.rows {
            for c in 0..dims.cols {
                if mask.get(d, r, c) == 1 {
                    sum[0] += d as f64;
                    sum[1] += r as f64;
                    sum[2] += c as f64;
                    n += 1;
                }
            }
        }
    }
    (n > 0).then(|| sum.map(|s| s / n as f64))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Normality {
    Normal,
    Abnormal,
}

impl core::fmt::Display for Normality {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            Normality::Normal => "normal",
            Normality::Abnormal => "abnormal",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AbnormalityVerdict {
    /// Components with at least `th_vn` voxels.
    pub n_kidney: usize,
    pub verdict: Normality,
    /// Ids of the qualifying components, in the order of the input statistics.
    pub kidney_ids: Vec<u32>,
}

/// Counts kidneys as components with `voxel_count >= th_vn`; exactly two is normal.
pub fn classify(stats: &[ComponentStats], th_vn: usize) -> AbnormalityVerdict {
    let kidney_ids: Vec<u32> = stats
        .iter()
        .filter(|s| s.voxel_count >= th_vn)
        .map(|s| s.id)
        .collect();
    let n_kidney = kidney_ids.len();
    AbnormalityVerdict {
        n_kidney,
        verdict: if n_kidney == 2 {
            Normality::Normal
        } else {
            Normality::Abnormal
        },
        kidney_ids,
    }
}

/// Keeps only components with at least `th_vn` voxels.
pub fn remove_small(lm: &LabelMap, th_vn: usize) -> Mask {
    let mut counts = vec![0usize; lm.count + 1];
    for &l in lm.labels() {
        counts[l as usize] += 1;
    }
    let data = lm
        .labels()
        .iter()
        .map(|&l| u8::from(l != 0 && counts[l as usize] >= th_vn))
        .collect();
    Grid::from_parts(lm.dims(), lm.spacing(), data)
}

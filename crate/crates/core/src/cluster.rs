use crate::error::{Error, Result};
use crate::point::PointCloud;
use crate::raster::RasterGrid;

pub const DEFAULT_TOLERANCE: f64 = 2.0;
pub const DEFAULT_MIN_POINTS: usize = 100;

/// The points of one building.
#[derive(Debug, Clone)]
pub struct BuildingCluster {
    pub id: usize,
    pub cloud: PointCloud,
    /// `[min_x, min_y, max_x, max_y]`
    pub bbox: [f64; 4],
    /// Index of each cluster point in the cloud it was extracted from.
    pub source_indices: Vec<usize>,
}

impl BuildingCluster {
    /// A cluster read back from its own file: the source indices are the
    /// point order itself.
    pub fn from_cloud(id: usize, cloud: PointCloud) -> Result<Self> {
        let bbox = cloud
            .bounds_2d()
            .ok_or_else(|| Error::InvalidArgument(format!("cluster {id} is empty")))?;
        let n = cloud.len();
        Ok(Self {
            id,
            cloud,
            bbox,
            source_indices: (0..n).collect(),
        })
    }
}

/// Indices of points whose (x, y) falls in a mask cell set to 1. Points off
/// the mask extent count as unmasked.
pub fn mask_indices(cloud: &PointCloud, mask: &RasterGrid) -> Vec<usize> {
    cloud
        .points()
        .iter()
        .enumerate()
        .filter(|(_, p)| {
            mask.cell_of(p.x, p.y)
                .is_some_and(|(c, r)| mask.is_set(mask.idx(c, r)))
        })
        .map(|(i, _)| i)
        .collect()
}

pub fn apply_mask(cloud: &PointCloud, mask: &RasterGrid) -> PointCloud {
    cloud.select(&mask_indices(cloud, mask))
}

struct DisjointSet {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Connected components of the graph linking points closer than
/// `tolerance`. Components below `min_points` are dropped; the rest are
/// ordered by descending size, then by their lowest point index.
pub fn euclidean_cluster(
    cloud: &PointCloud,
    tolerance: f64,
    min_points: usize,
) -> Result<Vec<BuildingCluster>> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance {tolerance} must be positive")));
    }
    let n = cloud.len();
    let mut sets = DisjointSet::new(n);
    let index = cloud.index();
    for i in 0..n {
        for j in index.within(index.position(i), tolerance) {
            if j > i {
                sets.union(i, j);
            }
        }
    }
    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..n {
        let root = sets.find(i);
        groups.entry(root).or_default().push(i);
    }
    let mut comps: Vec<Vec<usize>> = groups
        .into_values()
        .filter(|g| g.len() >= min_points.max(1))
        .collect();
    comps.sort_by(|a, b| b.len().cmp(&a.len()).then(a[0].cmp(&b[0])));
    Ok(comps
        .into_iter()
        .enumerate()
        .map(|(id, members)| {
            let sub = cloud.select(&members);
            let bbox = sub.bounds_2d().unwrap();
            BuildingCluster {
                id,
                cloud: sub,
                bbox,
                source_indices: members,
            }
        })
        .collect())
}

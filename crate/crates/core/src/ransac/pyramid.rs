use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::point::PointCloud;
use crate::stats::lower_median_position;

/// Coarse-to-fine point pyramid. Level 0 is the input cloud.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<PointCloud>,
    /// `parent_of[k][i]`: index at level k+1 of the representative of level-k point i.
    pub parent_of: Vec<Vec<usize>>,
    /// `representatives[k][j]`: index at level k of level-(k+1) point j.
    pub representatives: Vec<Vec<usize>>,
    /// `to_level0[k][j]`: level-0 index of level-k point j.
    pub to_level0: Vec<Vec<usize>>,
    /// `grid_sizes[k]`: cell side used to pool level k into level k+1.
    pub grid_sizes: Vec<f64>,
}

impl Pyramid {
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn top(&self) -> usize {
        self.levels.len() - 1
    }
}

/// Pools each level on a square (x, y) grid of side `base_grid * 2^k`,
/// keeping the point of lower-median height in every cell.
pub fn build_pyramid(cloud: &PointCloud, base_grid: f64, max_levels: usize) -> Result<Pyramid> {
    if !(base_grid > 0.0) {
        return Err(Error::InvalidArgument(format!("base grid {base_grid} must be positive")));
    }
    if max_levels == 0 {
        return Err(Error::InvalidArgument("max_levels must be at least 1".into()));
    }
    let mut pyr = Pyramid {
        levels: vec![cloud.clone()],
        parent_of: Vec::new(),
        representatives: Vec::new(),
        to_level0: vec![(0..cloud.len()).collect()],
        grid_sizes: Vec::new(),
    };
    for k in 0..max_levels - 1 {
        let g = base_grid * 2f64.powi(k as i32);
        let level = &pyr.levels[k];
        let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for (i, p) in level.points().iter().enumerate() {
            let key = ((p.x / g).floor() as i64, (p.y / g).floor() as i64);
            cells.entry(key).or_default().push(i);
        }
        let mut reps: Vec<(usize, Vec<usize>)> = cells
            .into_values()
            .map(|members| {
                let z: Vec<f64> = members.iter().map(|&i| level.point(i).z).collect();
                (members[lower_median_position(&z)], members)
            })
            .collect();
        reps.sort_by_key(|(r, _)| *r);
        let mut parent = vec![0; level.len()];
        for (j, (_, members)) in reps.iter().enumerate() {
            for &i in members {
                parent[i] = j;
            }
        }
        let rep_idx: Vec<usize> = reps.into_iter().map(|(r, _)| r).collect();
        let next = level.select(&rep_idx);
        let to0 = rep_idx.iter().map(|&i| pyr.to_level0[k][i]).collect();
        pyr.levels.push(next);
        pyr.parent_of.push(parent);
        pyr.representatives.push(rep_idx);
        pyr.to_level0.push(to0);
        pyr.grid_sizes.push(g);
    }
    Ok(pyr)
}

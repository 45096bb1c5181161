use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{ArrangeError, Arrangement, Result};
use crate::machine::MachineId;
use crate::spacetime::Vec3;

/// Singular values below this fraction of the largest count as zero.
const RANK_THRESHOLD: f64 = 1e-8;
/// Finite-difference step as a fraction of the shortest separation.
const STEP_FRACTION: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrozenReport {
    pub frozen: bool,
    pub rank: usize,
    pub channels: usize,
    pub singular_values: Vec<f64>,
    /// Machine shared by most of the coupled echo counts.
    pub witness: Option<MachineId>,
    /// Channels whose echo counts cannot move independently.
    pub coupled: Vec<(MachineId, MachineId)>,
}

/// Unit vectors spanning the rigid motions of the whole configuration.
fn rigid_motions(pos: &[Vec3]) -> DMatrix<f64> {
    let n = pos.len();
    let centroid = pos.iter().sum::<Vec3>() / n as f64;
    let mut basis = DMatrix::zeros(3 * n, 6);
    for k in 0..3 {
        let e = Vec3::ith(k, 1.0);
        for (i, p) in pos.iter().enumerate() {
            let rot = e.cross(&(p - centroid));
            for d in 0..3 {
                basis[(3 * i + d, k)] = e[d];
                basis[(3 * i + d, 3 + k)] = rot[d];
            }
        }
    }
    basis.qr().q()
}

/// Decides whether some echo count of the declared channels cannot change
/// slightly without changing another.
///
/// The Jacobian of all declared echo counts with respect to all machine
/// positions is taken with the rigid motions of the whole configuration
/// projected out. The arrangement is frozen when its rank falls short of the
/// number of channels: then a left null vector ties the witnessed echo counts
/// together. A rank below what the geometry should provide is reported as
/// degenerate instead of being classified.
pub fn is_frozen(arr: &Arrangement) -> Result<FrozenReport> {
    let pos = arr.positions()?;
    let period = arr.coordinate_period()?;
    let metric = &arr.metric;
    let edges: Vec<(usize, usize)> = arr
        .channels
        .iter()
        .map(|c| Ok((arr.index_of(&c.a)?, arr.index_of(&c.b)?)))
        .collect::<Result<_>>()?;
    let rows = edges.len();
    if rows == 0 {
        return Err(ArrangeError::Domain("no declared channels".into()));
    }
    let cols = 3 * pos.len();
    let shortest = edges
        .iter()
        .map(|&(i, j)| (pos[i] - pos[j]).norm())
        .fold(f64::INFINITY, f64::min);
    let h = STEP_FRACTION * shortest;

    let counts = |p: &[Vec3]| -> Result<DVector<f64>> {
        let mut v = DVector::zeros(rows);
        for (k, &(i, j)) in edges.iter().enumerate() {
            v[k] = 2.0 * metric.coordinate_light_delay(&p[i], &p[j])? / period;
        }
        Ok(v)
    };
    let mut jac = DMatrix::zeros(rows, cols);
    for col in 0..cols {
        let (i, d) = (col / 3, col % 3);
        let mut plus = pos.clone();
        let mut minus = pos.clone();
        plus[i][d] += h;
        minus[i][d] -= h;
        jac.set_column(col, &((counts(&plus)? - counts(&minus)?) / (2.0 * h)));
    }
    let q = rigid_motions(&pos);
    let projected = &jac - (&jac * &q) * q.transpose();

    let svd = projected.svd(true, false);
    let sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > RANK_THRESHOLD * smax).count();
    let expected = rows.min(cols.saturating_sub(6));
    if rank < expected {
        return Err(ArrangeError::Degenerate { rank, expected });
    }
    let frozen = rank < rows;

    let mut coupled = Vec::new();
    let mut witness = None;
    if frozen {
        let u = svd.u.as_ref().expect("left singular vectors requested");
        // left null vector: a singular direction past the rank, or the
        // complement of U when the matrix is wide
        let null = if u.ncols() > rank {
            let (idx, _) = sv
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .expect("non-empty");
            u.column(idx).into_owned()
        } else {
            let full = DMatrix::identity(rows, rows) - u * u.transpose();
            let (idx, _) = full
                .column_iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                .expect("non-empty");
            full.column(idx).normalize()
        };
        let big = null.amax();
        let mut tally: BTreeMap<&MachineId, usize> = BTreeMap::new();
        for (k, c) in arr.channels.iter().enumerate() {
            if null[k].abs() > 1e-6 * big {
                coupled.push((c.a.clone(), c.b.clone()));
                *tally.entry(&c.a).or_default() += 1;
                *tally.entry(&c.b).or_default() += 1;
            }
        }
        witness = tally
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(a.0)))
            .map(|(id, _)| id.clone());
    }
    Ok(FrozenReport {
        frozen,
        rank,
        channels: rows,
        singular_values: sv,
        witness,
        coupled,
    })
}

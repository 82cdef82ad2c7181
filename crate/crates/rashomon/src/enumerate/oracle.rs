//! Exhaustive global oracle over all set partitions of a small universe.

use crate::error::{Error, Result};
use crate::hasse::{check_global_over, Partition, Profile};
use crate::loss::{q_value, within_threshold, Dataset, LossConfig};

/// Largest universe the global oracle accepts (Bell(10) = 115975).
pub const GLOBAL_ORACLE_MAX_CELLS: usize = 10;

/// Every set partition of `cells`, via restricted growth strings.
pub fn set_partitions(cells: &[usize]) -> Vec<Partition> {
    let n = cells.len();
    if n == 0 {
        return Vec::new();
    }
    let mut out = Vec::new();
    let mut a = vec![0usize; n];
    loop {
        let blocks = a.iter().max().unwrap() + 1;
        let mut sets = vec![Vec::new(); blocks];
        for (i, &b) in a.iter().enumerate() {
            sets[b].push(cells[i]);
        }
        out.push(Partition::from_sets(sets));
        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return out;
            }
            let prefix_max = a[..i].iter().copied().max().unwrap();
            if a[i] <= prefix_max {
                a[i] += 1;
                for x in a.iter_mut().skip(i + 1) {
                    *x = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// All globally permissible partitions over `profiles` with `Q ≤ theta` and
/// at most `h_max` pools, with their Q, sorted by partition.
pub fn brute_force_global(
    d: &Dataset,
    cfg: &LossConfig,
    theta: f64,
    h_max: usize,
    profiles: &[Profile],
) -> Result<Vec<(Partition, f64)>> {
    let space = d.space();
    let mut cells = Vec::new();
    for &rho in profiles {
        cells.extend(space.profile_cells(rho));
    }
    cells.sort_unstable();
    if cells.len() > GLOBAL_ORACLE_MAX_CELLS {
        return Err(Error::TooLarge(format!(
            "{} combinations exceed the global oracle limit of {GLOBAL_ORACLE_MAX_CELLS}",
            cells.len()
        )));
    }
    let mut out = Vec::new();
    for p in set_partitions(&cells) {
        if p.len() > h_max || check_global_over(space, &p, profiles)?.is_some() {
            continue;
        }
        let q = q_value(&p, d, cfg)?;
        if within_threshold(q, theta) {
            out.push((p, q));
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

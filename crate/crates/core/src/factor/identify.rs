//! Post-hoc identification of draws from the unrestricted loading sampler.
//!
//! Per draw: columns are put in a canonical order (largest absolute loading
//! first), each column in turn claims the row with its largest absolute
//! loading among rows not yet claimed, columns are then ordered by the row
//! they claimed, and signs are flipped so every claimed loading is positive.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;

use crate::draws::DrawMatrix;
use crate::error::{Error, Result};

/// How one draw was mapped: output column `j` is input column `perm[j]`
/// multiplied by `signs[j]`; `pivots[j]` is the row it claimed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Identification {
    pub perm: Vec<usize>,
    pub signs: Vec<i8>,
    pub pivots: Vec<usize>,
}

fn abs_max(beta: &DMatrix<f64>, k: usize) -> f64 {
    beta.column(k).iter().fold(0.0, |m: f64, v| m.max(v.abs()))
}

/// Greedy pivot rows for columns taken in the given order.
pub fn greedy_pivots(beta: &DMatrix<f64>, order: &[usize]) -> Vec<usize> {
    let mut used = vec![false; beta.nrows()];
    order
        .iter()
        .map(|&k| {
            let mut best = None;
            for i in 0..beta.nrows() {
                if used[i] {
                    continue;
                }
                let v = beta[(i, k)].abs();
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            let (i, _) = best.expect("S >= K leaves a free row");
            used[i] = true;
            i
        })
        .collect()
}

pub fn identify(beta: &DMatrix<f64>) -> Identification {
    let k_len = beta.ncols();
    let mut order: Vec<usize> = (0..k_len).collect();
    order.sort_by(|&a, &b| abs_max(beta, b).total_cmp(&abs_max(beta, a)));
    let pivots = greedy_pivots(beta, &order);
    let mut cols: Vec<(usize, usize)> = pivots.iter().copied().zip(order).collect();
    cols.sort();
    let perm: Vec<usize> = cols.iter().map(|c| c.1).collect();
    let pivots: Vec<usize> = cols.iter().map(|c| c.0).collect();
    let signs = cols
        .iter()
        .map(|&(i, k)| if beta[(i, k)] < 0.0 { -1 } else { 1 })
        .collect();
    Identification {
        perm,
        signs,
        pivots,
    }
}

pub fn apply(beta: &DMatrix<f64>, id: &Identification) -> DMatrix<f64> {
    DMatrix::from_fn(beta.nrows(), beta.ncols(), |i, j| {
        id.signs[j] as f64 * beta[(i, id.perm[j])]
    })
}

/// Column indices of `beta[s,k]` for every `(s, k)`, row-major.
fn beta_columns(draws: &DrawMatrix, s_len: usize, k_len: usize) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(s_len * k_len);
    for s in 0..s_len {
        for k in 0..k_len {
            let name = format!("beta[{},{}]", s + 1, k + 1);
            let c = draws
                .column_index(&name)
                .ok_or_else(|| Error::Precondition(format!("draws have no column `{name}`")))?;
            out.push(c);
        }
    }
    Ok(out)
}

/// Identifies every row of a factor-model draw matrix in place. Per-factor
/// columns (names ending in `_f[k]`, and factor states `lambda[k][t]` /
/// `f[k][t]`) follow their column; factor draws also take the sign.
pub fn postprocess_identification(
    draws: &mut DrawMatrix,
    s_len: usize,
    k_len: usize,
) -> Result<Vec<Identification>> {
    let bcols = beta_columns(draws, s_len, k_len)?;
    let names: Vec<String> = draws.all_names().into_iter().map(str::to_string).collect();
    // Factor-indexed columns grouped by everything but the factor index;
    // each group maps factor -> column. Factor draws also take the sign.
    let mut groups: BTreeMap<String, (bool, HashMap<usize, usize>)> = BTreeMap::new();
    for (c, n) in names.iter().enumerate() {
        if let Some((stem, k, rest)) = factor_index(n) {
            if k < k_len {
                groups
                    .entry(format!("{stem}|{rest}"))
                    .or_insert((stem == "f", HashMap::new()))
                    .1
                    .insert(k, c);
            }
        }
    }
    let width = draws.width();
    let mut ids = Vec::with_capacity(draws.n_rows());
    for r in 0..draws.n_rows() {
        let row = draws.values[r * width..(r + 1) * width].to_vec();
        let beta = DMatrix::from_fn(s_len, k_len, |s, k| row[bcols[s * k_len + k]]);
        let id = identify(&beta);
        let out = apply(&beta, &id);
        let dst = &mut draws.values[r * width..(r + 1) * width];
        for s in 0..s_len {
            for k in 0..k_len {
                dst[bcols[s * k_len + k]] = out[(s, k)];
            }
        }
        for (signed, by_k) in groups.values() {
            for j in 0..k_len {
                if let (Some(&to), Some(&from)) = (by_k.get(&j), by_k.get(&id.perm[j])) {
                    dst[to] = if *signed {
                        id.signs[j] as f64 * row[from]
                    } else {
                        row[from]
                    };
                }
            }
        }
        ids.push(id);
    }
    Ok(ids)
}

/// Splits `tau2_f[3]` into ("tau2_f", 2, "") and `lambda[2][10]` into ("lambda", 1, "[10]").
fn factor_index(name: &str) -> Option<(&str, usize, &str)> {
    let open = name.find('[')?;
    let stem = &name[..open];
    if !(stem.ends_with("_f") || stem == "lambda" || stem == "f") {
        return None;
    }
    let close = open + name[open..].find(']')?;
    let k: usize = name[open + 1..close].parse().ok()?;
    Some((stem, k.checked_sub(1)?, &name[close + 1..]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    #[test]
    fn ordered_lower_triangular_is_a_fixed_point() {
        let b = DMatrix::from_row_slice(4, 2, &[1.2, 0.0, 0.3, 0.9, -0.4, 0.2, 0.5, -0.1]);
        let id = identify(&b);
        assert_eq!(id.perm, vec![0, 1]);
        assert_eq!(id.signs, vec![1, 1]);
        assert_eq!(apply(&b, &id), b);
    }

    /// Lexicographic search over distinct row choices: maximize |beta_{i1,1}|
    /// first, then |beta_{i2,2}|, columns taken in the given order.
    fn brute_force(beta: &DMatrix<f64>, order: &[usize]) -> (usize, usize) {
        let mut best = (0, 1);
        let key = |i1: usize, i2: usize| (beta[(i1, order[0])].abs(), beta[(i2, order[1])].abs());
        for i1 in 0..beta.nrows() {
            for i2 in 0..beta.nrows() {
                if i1 == i2 {
                    continue;
                }
                let (a, b) = key(i1, i2);
                let (ba, bb) = key(best.0, best.1);
                if a > ba || (a == ba && b > bb) {
                    best = (i1, i2);
                }
            }
        }
        best
    }

    #[test]
    fn greedy_matches_exhaustive_search() {
        let mut s = Stream::new(1);
        for _ in 0..2000 {
            let b = DMatrix::from_fn(3, 2, |_, _| s.next_normal());
            for order in [[0, 1], [1, 0]] {
                let g = greedy_pivots(&b, &order);
                assert_eq!((g[0], g[1]), brute_force(&b, &order));
            }
        }
    }

    proptest! {
        #[test]
        fn column_permutation_and_sign_invariant(vals in prop::collection::vec(-3.0f64..3.0, 15), flip in prop::collection::vec(any::<bool>(), 3), rot in 0usize..3) {
            let b = DMatrix::from_row_slice(5, 3, &vals);
            let perm = [rot % 3, (rot + 1) % 3, (rot + 2) % 3];
            let pb = DMatrix::from_fn(5, 3, |i, j| if flip[j] { -b[(i, perm[j])] } else { b[(i, perm[j])] });
            let a = apply(&b, &identify(&b));
            let c = apply(&pb, &identify(&pb));
            prop_assert_eq!(a.clone(), c);
            let id = identify(&b);
            for (j, &p) in id.pivots.iter().enumerate() {
                prop_assert!(a[(p, j)] >= 0.0);
            }
            prop_assert!(id.pivots.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn draw_matrix_columns_follow_their_factor() {
        let params = [
            "tau2_f[1]",
            "tau2_f[2]",
            "beta[1,1]",
            "beta[1,2]",
            "beta[2,1]",
            "beta[2,2]",
            "beta[3,1]",
            "beta[3,2]",
            "phi_eps[1]",
        ];
        let states = ["f[1][1]", "f[2][1]"];
        let mut d = DrawMatrix::new(
            params.iter().map(|s| s.to_string()).collect(),
            states.iter().map(|s| s.to_string()).collect(),
        );
        // Column 2 dominates and is negative: it should move first with its sign flipped.
        d.push(
            1,
            &[0.1, 0.2, 0.1, -2.0, 0.5, 0.3, 0.2, 0.1, 0.9],
            &[1.5, -0.7],
        );
        postprocess_identification(&mut d, 3, 2).unwrap();
        assert_eq!(
            d.row(0),
            &[0.2, 0.1, 2.0, 0.1, -0.3, 0.5, -0.1, 0.2, 0.9, 0.7, 1.5]
        );
    }
}

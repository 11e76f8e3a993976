//! Separable transforms of fully symmetric tensors stored on sorted tuples.
//!
//! Applying the same 1D map on every axis of a symmetric tensor proceeds one
//! axis at a time. After `m` axes the partial result is symmetric separately
//! in the `m` transformed indices and in the `d - m` untouched ones, so each
//! stage is stored on pairs of sorted tuples. The work per stage is the size
//! of the stage tensor times the input alphabet, instead of the dense
//! `out^m * in^(d-m)` product.

use rayon::prelude::*;

use crate::orbit::{advance, TupleSpace};

/// A dense `out_len x in_len` real matrix applied along one axis.
#[derive(Debug, Clone)]
pub struct AxisMap {
    pub out_len: usize,
    pub in_len: usize,
    data: Vec<f64>,
}

impl AxisMap {
    pub fn from_fn(out_len: usize, in_len: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(out_len * in_len);
        for o in 0..out_len {
            for i in 0..in_len {
                data.push(f(o, i));
            }
        }
        Self {
            out_len,
            in_len,
            data,
        }
    }

    #[inline]
    pub fn row(&self, o: usize) -> &[f64] {
        &self.data[o * self.in_len..(o + 1) * self.in_len]
    }
}

/// Applies `map` along every axis of a symmetric `dim`-tensor.
///
/// `input` is laid out as `[tuple rank][channel]` over sorted `dim`-tuples of
/// the input alphabet; the result uses the same layout over the output
/// alphabet. Every output entry is a fixed-order sum, so the result does not
/// depend on the number of worker threads.
pub fn apply_symmetric(input: &[f64], channels: usize, dim: usize, map: &AxisMap) -> Vec<f64> {
    let in_space = TupleSpace::new(map.in_len, dim);
    assert_eq!(input.len(), in_space.count() * channels, "input size mismatch");
    if dim == 0 {
        return input.to_vec();
    }
    let mut current = input.to_vec();
    for m in 0..dim {
        current = stage(&current, channels, dim, m, map);
    }
    current
}

fn stage(prev: &[f64], ch: usize, dim: usize, m: usize, map: &AxisMap) -> Vec<f64> {
    let in_space = TupleSpace::new(map.in_len, dim - m);
    let ns_space = TupleSpace::new(map.in_len, dim - m - 1);
    let xs_space = TupleSpace::new(map.out_len, m);
    let out_space = TupleSpace::new(map.out_len, m + 1);
    let cnt_prev = xs_space.count();
    let cnt_next = out_space.count();
    let binom = out_space.binomials();
    let in_len = map.in_len;

    let mut out = vec![0.0; ns_space.count() * cnt_next * ch];
    out.par_chunks_mut(cnt_next * ch)
        .enumerate()
        .for_each(|(ns_rank, chunk)| {
            let ns = ns_space.unrank(ns_rank);
            let rows: Vec<usize> = (0..in_len).map(|n| in_space.rank_insert(&ns, n)).collect();
            let mut gathered = vec![0.0; in_len * ch];
            let mut xs = vec![0usize; m];
            let mut q = 0usize;
            loop {
                // gathered is channel-major so each output is a contiguous dot product
                for (n, &r) in rows.iter().enumerate() {
                    let src = (r * cnt_prev + q) * ch;
                    for c in 0..ch {
                        gathered[c * in_len + n] = prev[src + c];
                    }
                }
                let start = xs.last().copied().unwrap_or(0);
                for x in start..map.out_len {
                    let o = q + binom.get(x + m, m + 1);
                    let row = map.row(x);
                    for (c, dst) in chunk[o * ch..(o + 1) * ch].iter_mut().enumerate() {
                        *dst = dot(row, &gathered[c * in_len..(c + 1) * in_len]);
                    }
                }
                q += 1;
                if q >= cnt_prev || !advance(&mut xs, map.out_len) {
                    break;
                }
            }
        });
    out
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent partial sums let the compiler vectorize
    let mut acc = [0.0; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        for l in 0..4 {
            acc[l] += a[4 * i + l] * b[4 * i + l];
        }
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::permutation_count;

    /// Dense reference: expand the symmetric tensor, apply the map on all
    /// axes by brute force, and read back the sorted entries.
    fn dense_reference(input: &[f64], dim: usize, map: &AxisMap) -> Vec<f64> {
        let in_space = TupleSpace::new(map.in_len, dim);
        let out_space = TupleSpace::new(map.out_len, dim);
        out_space
            .iter()
            .map(|o| {
                let mut total = 0.0;
                let mut idx = vec![0usize; dim];
                loop {
                    let mut sorted = idx.clone();
                    sorted.sort_unstable();
                    let mut w = input[in_space.rank(&sorted)];
                    for j in 0..dim {
                        w *= map.row(o[j])[idx[j]];
                    }
                    total += w;
                    let mut j = 0;
                    loop {
                        if j == dim {
                            return total;
                        }
                        idx[j] += 1;
                        if idx[j] < map.in_len {
                            break;
                        }
                        idx[j] = 0;
                        j += 1;
                    }
                }
            })
            .collect()
    }

    #[test]
    fn matches_dense_reference() {
        for dim in 1..=4 {
            let map = AxisMap::from_fn(5, 4, |o, i| ((o * 7 + i * 3) as f64).sin() + 0.1 * i as f64);
            let space = TupleSpace::new(4, dim);
            let input: Vec<f64> = space
                .iter()
                .enumerate()
                .map(|(r, t)| (r as f64 * 0.37).cos() + permutation_count(&t))
                .collect();
            let fast = apply_symmetric(&input, 1, dim, &map);
            let slow = dense_reference(&input, dim, &map);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-11 * (1.0 + b.abs()), "dim {dim}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn channels_are_independent() {
        let dim = 3;
        let map = AxisMap::from_fn(6, 3, |o, i| (o as f64 + 1.0) / (i as f64 + 2.0));
        let space = TupleSpace::new(3, dim);
        let a: Vec<f64> = (0..space.count()).map(|r| r as f64).collect();
        let b: Vec<f64> = (0..space.count()).map(|r| 1.0 / (r as f64 + 1.0)).collect();
        let mut both = Vec::new();
        for (x, y) in a.iter().zip(&b) {
            both.push(*x);
            both.push(*y);
        }
        let joint = apply_symmetric(&both, 2, dim, &map);
        let ja = apply_symmetric(&a, 1, dim, &map);
        let jb = apply_symmetric(&b, 1, dim, &map);
        for i in 0..ja.len() {
            assert!((joint[2 * i] - ja[i]).abs() < 1e-12 * (1.0 + ja[i].abs()));
            assert!((joint[2 * i + 1] - jb[i]).abs() < 1e-12 * (1.0 + jb[i].abs()));
        }
    }
}

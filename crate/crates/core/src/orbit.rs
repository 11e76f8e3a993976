//! Combinatorics of sorted index tuples.
//!
//! A function on Z^d (or on a torus grid) that is invariant under coordinate
//! reflections and permutations is determined by its values on sorted
//! absolute-value tuples `0 <= a_0 <= ... <= a_{L-1} < n`. These tuples are
//! ranked in colexicographic order: `rank(a) = sum_j C(a_j + j, j + 1)`.

/// Binomial table `C(n, k)` for `n < rows`, `k <= max_k`.
#[derive(Debug, Clone)]
pub struct Binomials {
    max_k: usize,
    table: Vec<usize>,
    rows: usize,
}

impl Binomials {
    pub fn new(rows: usize, max_k: usize) -> Self {
        let width = max_k + 1;
        let mut table = vec![0usize; rows * width];
        for n in 0..rows {
            table[n * width] = 1;
            for k in 1..=max_k.min(n) {
                let above = table[(n - 1) * width + k];
                let diag = table[(n - 1) * width + k - 1];
                table[n * width + k] = above.saturating_add(diag);
            }
        }
        Self { max_k, table, rows }
    }

    #[inline]
    pub fn get(&self, n: usize, k: usize) -> usize {
        if k > n {
            return 0;
        }
        debug_assert!(n < self.rows && k <= self.max_k, "binomial C({n},{k}) out of table");
        self.table[n * (self.max_k + 1) + k]
    }
}

/// Sorted tuples of a fixed length over the alphabet `0..alphabet`.
#[derive(Debug, Clone)]
pub struct TupleSpace {
    pub alphabet: usize,
    pub len: usize,
    binom: Binomials,
}

impl TupleSpace {
    pub fn new(alphabet: usize, len: usize) -> Self {
        Self {
            alphabet,
            len,
            binom: Binomials::new(alphabet + len + 2, len + 1),
        }
    }

    /// Number of sorted tuples, `C(alphabet + len - 1, len)`.
    pub fn count(&self) -> usize {
        if self.len == 0 {
            return 1;
        }
        if self.alphabet == 0 {
            return 0;
        }
        self.binom.get(self.alphabet + self.len - 1, self.len)
    }

    #[inline]
    pub fn rank(&self, sorted: &[usize]) -> usize {
        sorted
            .iter()
            .enumerate()
            .map(|(j, &a)| self.binom.get(a + j, j + 1))
            .sum()
    }

    /// Rank of the sorted tuple obtained by inserting `value` into the
    /// sorted tuple `base` (which has length `len - 1`).
    #[inline]
    pub fn rank_insert(&self, base: &[usize], value: usize) -> usize {
        let mut r = 0;
        let mut placed = false;
        let mut j = 0;
        for &a in base {
            if !placed && value <= a {
                r += self.binom.get(value + j, j + 1);
                j += 1;
                placed = true;
            }
            r += self.binom.get(a + j, j + 1);
            j += 1;
        }
        if !placed {
            r += self.binom.get(value + j, j + 1);
        }
        r
    }

    /// Sorted tuple with the given rank.
    pub fn unrank(&self, mut rank: usize) -> Vec<usize> {
        let mut out = vec![0usize; self.len];
        for j in (0..self.len).rev() {
            // largest b with C(b, j+1) <= rank; b >= j
            let mut lo = j;
            let mut hi = self.alphabet + j;
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if self.binom.get(mid, j + 1) <= rank {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            rank -= self.binom.get(lo, j + 1);
            out[j] = lo - j;
        }
        out
    }

    /// Iterator over all sorted tuples in rank order.
    pub fn iter(&self) -> TupleIter {
        TupleIter {
            current: vec![0; self.len],
            alphabet: self.alphabet,
            done: self.count() == 0,
        }
    }

    /// Iterator over sorted tuples starting at `rank`.
    pub fn iter_from(&self, rank: usize) -> TupleIter {
        TupleIter {
            current: self.unrank(rank.min(self.count().saturating_sub(1))),
            alphabet: self.alphabet,
            done: rank >= self.count(),
        }
    }

    pub fn binomials(&self) -> &Binomials {
        &self.binom
    }
}

/// Colexicographic successor iteration over sorted tuples.
#[derive(Debug, Clone)]
pub struct TupleIter {
    current: Vec<usize>,
    alphabet: usize,
    done: bool,
}

impl Iterator for TupleIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.current.clone();
        if !advance(&mut self.current, self.alphabet) {
            self.done = true;
        }
        Some(out)
    }
}

/// Advances a sorted tuple to its colex successor in place; false at the end.
pub fn advance(t: &mut [usize], alphabet: usize) -> bool {
    let len = t.len();
    if len == 0 {
        return false;
    }
    for j in 0..len {
        let can_bump = if j + 1 < len { t[j] < t[j + 1] } else { t[j] + 1 < alphabet };
        if can_bump {
            t[j] += 1;
            for e in t.iter_mut().take(j) {
                *e = 0;
            }
            return true;
        }
    }
    false
}

/// Number of distinct orderings of a sorted tuple, `len! / prod(m_i!)`.
pub fn permutation_count(sorted: &[usize]) -> f64 {
    let mut total = 1.0;
    let mut run = 0usize;
    let mut k = 0usize;
    for (i, &a) in sorted.iter().enumerate() {
        k += 1;
        if i > 0 && a == sorted[i - 1] {
            run += 1;
        } else {
            run = 1;
        }
        total *= k as f64 / run as f64;
    }
    total
}

/// Size of the hyperoctahedral orbit of a lattice point with sorted
/// absolute coordinates `sorted`.
pub fn lattice_orbit_size(sorted: &[usize]) -> f64 {
    let nonzero = sorted.iter().filter(|&&a| a != 0).count();
    permutation_count(sorted) * f64::powi(2.0, nonzero as i32)
}

/// Sorted absolute values of integer coordinates.
#[inline]
pub fn sorted_abs(x: &[i64]) -> Vec<usize> {
    let mut v: Vec<usize> = x.iter().map(|c| c.unsigned_abs() as usize).collect();
    v.sort_unstable();
    v
}

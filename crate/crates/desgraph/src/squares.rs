//! Combinatorial constructions backing the named orderings and menu recipes:
//! Williams squares, cyclic Latin squares, MOLS over finite fields, Youden
//! rectangles via difference sets, and a BIBD hill-climbing search.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Base Williams sequence 0, 1, t-1, 2, t-2, ... of length t.
fn williams_base(t: usize) -> Vec<usize> {
    (0..t)
        .map(|k| {
            if k == 0 {
                0
            } else if k % 2 == 1 {
                (k + 1) / 2
            } else {
                t - k / 2
            }
        })
        .collect()
}

/// A t×t Williams Latin square with 1-based treatment indices. Rows are
/// periods, columns are subjects. For even t every ordered pair of distinct
/// treatments appears exactly once in vertically adjacent cells.
pub fn williams_square(t: usize) -> Vec<Vec<usize>> {
    let b = williams_base(t);
    (0..t)
        .map(|p| (0..t).map(|s| (b[p] + s) % t + 1).collect())
        .collect()
}

/// The full Williams design used for tiling: t rows (periods) by t columns
/// for even t, or 2t columns for odd t (the square plus its column-reversed
/// mirror, which together restore carryover balance). 0-based indices.
pub(crate) fn williams_design(t: usize) -> Vec<Vec<usize>> {
    let b = williams_base(t);
    let cols = if t % 2 == 0 { t } else { 2 * t };
    (0..t)
        .map(|p| {
            (0..cols)
                .map(|s| {
                    if s < t {
                        (b[p] + s) % t
                    } else {
                        (b[t - 1 - p] + s - t) % t
                    }
                })
                .collect()
        })
        .collect()
}

/// Cyclic t×t Latin square, 0-based.
pub(crate) fn latin_square(t: usize) -> Vec<Vec<usize>> {
    (0..t).map(|r| (0..t).map(|c| (r + c) % t).collect()).collect()
}

// ---------------------------------------------------------------------------
// Finite fields for MOLS

/// Addition in GF(q) for supported q.
fn gf_add(q: usize, a: usize, b: usize) -> usize {
    match q {
        4 | 8 => a ^ b,
        9 => {
            let (a0, a1, b0, b1) = (a % 3, a / 3, b % 3, b / 3);
            (a0 + b0) % 3 + 3 * ((a1 + b1) % 3)
        }
        _ => (a + b) % q,
    }
}

/// Multiplication in GF(q). GF(4) uses x^2 = x + 1, GF(8) uses x^3 = x + 1,
/// GF(9) is GF(3)[x] with x^2 = 2.
fn gf_mul(q: usize, a: usize, b: usize) -> usize {
    match q {
        4 | 8 => {
            let (poly, deg) = if q == 4 { (0b111, 2) } else { (0b1011, 3) };
            let mut prod = 0usize;
            for i in 0..deg {
                if a & (1 << i) != 0 {
                    prod ^= b << i;
                }
            }
            for i in (deg..2 * deg).rev() {
                if prod & (1 << i) != 0 {
                    prod ^= poly << (i - deg);
                }
            }
            prod
        }
        9 => {
            let (a0, a1, b0, b1) = (a % 3, a / 3, b % 3, b / 3);
            let c0 = (a0 * b0 + 2 * a1 * b1) % 3;
            let c1 = (a0 * b1 + a1 * b0) % 3;
            c0 + 3 * c1
        }
        _ => (a * b) % q,
    }
}

/// `k` mutually orthogonal t×t Latin squares, L_a[r][c] = a·r + c in GF(t).
/// Supported orders are the prime powers {3, 4, 5, 7, 8, 9}.
pub fn mols(t: usize, k: usize) -> Result<Vec<Vec<Vec<usize>>>> {
    if !matches!(t, 3 | 4 | 5 | 7 | 8 | 9) {
        return Err(Error::InvalidParams(format!(
            "no orthogonal Latin squares of order {t} are available"
        )));
    }
    if k > t - 1 {
        return Err(Error::InvalidParams(format!(
            "order {t} admits at most {} orthogonal squares",
            t - 1
        )));
    }
    Ok((1..=k)
        .map(|a| {
            (0..t)
                .map(|r| (0..t).map(|c| gf_add(t, gf_mul(t, a, r), c)).collect())
                .collect()
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Youden rectangles

/// An nc×t Youden rectangle, 0-based: every row is a permutation of 0..t,
/// columns have distinct entries, and the columns form a symmetric BIBD
/// (every treatment pair co-occurs in exactly λ = nc(nc-1)/(t-1) columns).
/// Built from a perfect difference set in Z_t, found by exhaustive search.
pub(crate) fn youden_rows(t: usize, nc: usize) -> Result<Vec<Vec<usize>>> {
    if nc < 2 || nc >= t {
        return Err(Error::InvalidParams(format!(
            "youden requires 2 <= nc < t, got nc={nc}, t={t}"
        )));
    }
    if (nc * (nc - 1)) % (t - 1) != 0 {
        return Err(Error::InvalidParams(format!(
            "no {nc}x{t} youden rectangle: {nc}*{} not divisible by {}",
            nc - 1,
            t - 1
        )));
    }
    let lambda = nc * (nc - 1) / (t - 1);
    let d = find_difference_set(t, nc, lambda).ok_or_else(|| {
        Error::InvalidParams(format!("no perfect difference set of size {nc} in Z_{t}"))
    })?;
    Ok(d.iter()
        .map(|&di| (0..t).map(|j| (di + j) % t).collect())
        .collect())
}

/// First nc-subset of Z_t (containing 0) whose nonzero differences cover each
/// residue exactly λ times.
fn find_difference_set(t: usize, nc: usize, lambda: usize) -> Option<Vec<usize>> {
    fn rec(
        t: usize,
        nc: usize,
        lambda: usize,
        start: usize,
        cur: &mut Vec<usize>,
        diffs: &mut Vec<usize>,
    ) -> Option<Vec<usize>> {
        if cur.len() == nc {
            return diffs[1..].iter().all(|&c| c == lambda).then(|| cur.clone());
        }
        for x in start..t {
            let ok = cur.iter().all(|&y| {
                diffs[(x + t - y) % t] < lambda && diffs[(y + t - x) % t] < lambda
            });
            if !ok {
                continue;
            }
            for &y in cur.iter() {
                diffs[(x + t - y) % t] += 1;
                diffs[(y + t - x) % t] += 1;
            }
            cur.push(x);
            if let Some(d) = rec(t, nc, lambda, x + 1, cur, diffs) {
                return Some(d);
            }
            cur.pop();
            for &y in cur.iter() {
                diffs[(x + t - y) % t] -= 1;
                diffs[(y + t - x) % t] -= 1;
            }
        }
        None
    }
    let mut cur = vec![0usize];
    let mut diffs = vec![0usize; t];
    rec(t, nc, lambda, 1, &mut cur, &mut diffs)
}

// ---------------------------------------------------------------------------
// BIBD search

/// A balanced incomplete block design: b = rt/k blocks of size k over t
/// treatments, each replicated r times, every pair co-occurring in exactly
/// λ = r(k-1)/(t-1) blocks. Randomized hill-climbing over element swaps that
/// preserve replication; errors if the necessary conditions fail or no design
/// is found within the iteration budget.
pub(crate) fn bibd(t: usize, k: usize, r: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    if t < 2 || k < 2 || k > t || r < 1 {
        return Err(Error::InvalidParams(format!(
            "bibd requires 2 <= k <= t and r >= 1, got t={t}, k={k}, r={r}"
        )));
    }
    if (r * (k - 1)) % (t - 1) != 0 || (r * t) % k != 0 {
        return Err(Error::InvalidParams(format!(
            "bibd(t={t}, k={k}, r={r}) violates the necessary divisibility conditions"
        )));
    }
    let b = r * t / k;
    let lambda = r * (k - 1) / (t - 1);

    let pair = |x: usize, y: usize| if x < y { x * t + y } else { y * t + x };

    for _ in 0..400 {
        let Some(mut blocks) = initial_blocks(t, k, r, b, rng) else {
            continue;
        };
        let mut counts = vec![0isize; t * t];
        for bl in &blocks {
            for i in 0..k {
                for j in i + 1..k {
                    counts[pair(bl[i], bl[j])] += 1;
                }
            }
        }
        let mut obj: isize = (0..t)
            .flat_map(|x| (x + 1..t).map(move |y| (x, y)))
            .map(|(x, y)| {
                let d = counts[pair(x, y)] - lambda as isize;
                d * d
            })
            .sum();
        let mut iter = 0usize;
        while obj > 0 && iter < 60_000 {
            iter += 1;
            let a = rng.random_range(0..b);
            let c = rng.random_range(0..b);
            if a == c {
                continue;
            }
            let i = rng.random_range(0..k);
            let j = rng.random_range(0..k);
            let (x, y) = (blocks[a][i], blocks[c][j]);
            if x == y || blocks[a].contains(&y) || blocks[c].contains(&x) {
                continue;
            }
            // apply the swap of x (block a) with y (block c) to the pair
            // counts, tracking the objective change; undo if it's uphill
            let delta = swap_apply(&mut counts, t, lambda, x, y, &blocks[a], &blocks[c], 1);
            if delta <= 0 && (delta < 0 || rng.random_bool(0.3)) {
                obj += delta;
                blocks[a][i] = y;
                blocks[c][j] = x;
            } else {
                swap_apply(&mut counts, t, lambda, x, y, &blocks[a], &blocks[c], -1);
            }
        }
        if obj == 0 {
            for bl in &mut blocks {
                bl.sort_unstable();
            }
            return Ok(blocks);
        }
    }
    Err(Error::InvalidParams(format!(
        "no bibd(t={t}, k={k}, r={r}) found within the search budget"
    )))
}

/// Replaces x in block_a by y (and y in block_c by x) inside the pair-count
/// table, scaled by `by` (+1 apply, -1 undo); returns the objective delta.
#[allow(clippy::too_many_arguments)]
fn swap_apply(
    counts: &mut [isize],
    t: usize,
    lambda: usize,
    x: usize,
    y: usize,
    block_a: &[usize],
    block_c: &[usize],
    by: isize,
) -> isize {
    let pair = |a: usize, b: usize| if a < b { a * t + b } else { b * t + a };
    let mut delta = 0isize;
    let mut adjust = |counts: &mut [isize], p: usize, d: isize| {
        let before = counts[p] - lambda as isize;
        counts[p] += d;
        let after = counts[p] - lambda as isize;
        delta += after * after - before * before;
    };
    for &z in block_a {
        if z != x {
            adjust(counts, pair(x, z), -by);
            adjust(counts, pair(y, z), by);
        }
    }
    for &z in block_c {
        if z != y {
            adjust(counts, pair(y, z), -by);
            adjust(counts, pair(x, z), by);
        }
    }
    delta
}

/// Random b blocks of k distinct treatments with exact replication r, or None
/// when the greedy fill dead-ends.
fn initial_blocks(
    t: usize,
    k: usize,
    r: usize,
    b: usize,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Vec<usize>>> {
    let mut remaining: Vec<usize> = vec![r; t];
    let mut blocks = Vec::with_capacity(b);
    for _ in 0..b {
        // take the k treatments with most remaining replicates, random ties
        let mut order: Vec<usize> = (0..t).collect();
        order.shuffle(rng);
        order.sort_by_key(|&x| std::cmp::Reverse(remaining[x]));
        let block: Vec<usize> = order.into_iter().take(k).collect();
        if block.iter().any(|&x| remaining[x] == 0) {
            return None;
        }
        for &x in &block {
            remaining[x] -= 1;
        }
        blocks.push(block);
    }
    Some(blocks)
}

//! Critical percolation on a fixed tree: exact sweeps and Monte Carlo.
//!
//! Exact quantities come from bottom-up dynamic programs over the per-level
//! child-count rows. Writing `s(v)` for the probability that `v` connects to
//! the target level within its subtree,
//!
//! ```text
//!   s(v) = 1 - prod over children w of (1 - pc * s(w)),
//! ```
//!
//! with `s = 1` on the target level itself. Factorial moments
//! `E[binom(|Y_n|, k)]` use the same sweep with a length-`(k+1)` state per
//! vertex, combined across children by truncated polynomial products.
//!
//! Both sweeps accept an arbitrary boundary state at the last materialized
//! level. With the exact boundary (`1`, or `[1, 1, 0, ...]`) they are exact
//! on a fully generated tree. With annealed tail values at a cut depth `D`
//! they evaluate deep targets `n` far beyond any materializable level: each
//! cut vertex's unknown subtree value is replaced by its distribution-level
//! mean, and the root aggregates `mu^D` of these with weights `~pc^D`, so
//! the replacement error averages out at rate `mu^{-D/2}` (measured in the
//! tests). On deterministic trees the substitution is exact at any cut.

use crate::deep::DeepPrefix;
use crate::error::{Error, Result};
use crate::offspring::binom_f64;
use crate::rng::{stream, SplitMix64};
use crate::tree::{GwTree, RootedTree};
use rayon::prelude::*;
use std::collections::HashMap;

/// Brute-force enumeration walks all `2^edges` configurations.
pub const MAX_BRUTE_EDGES: usize = 24;

pub const DEFAULT_MAX_ATTEMPTS: u64 = 1_000_000_000;

/// Replicates processed per parallel batch during rejection sampling.
const CHUNK: u64 = 4096;

/// Exact survival probabilities `q[j] = P_T[|Y_j| > 0]` for `j <= n`.
#[derive(Clone, Debug)]
pub struct SurvivalCurve {
    pub q: Vec<f64>,
}

impl SurvivalCurve {
    pub fn max_depth(&self) -> usize {
        self.q.len() - 1
    }
}

/// Exact table `E_T[binom(|Y_j|, i)]` for `j <= n`, `i <= k_max`.
#[derive(Clone, Debug)]
pub struct MomentTable {
    pub k_max: usize,
    rows: Vec<Vec<f64>>,
}

impl MomentTable {
    pub fn max_depth(&self) -> usize {
        self.rows.len() - 1
    }

    pub fn entry(&self, j: usize, i: usize) -> f64 {
        self.rows[j][i]
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.rows[j]
    }

    /// `E_T[|Y_j|^2]`, from the first two factorial moments.
    pub fn second_moment(&self, j: usize) -> f64 {
        self.entry(j, 1) + 2.0 * self.entry(j, 2)
    }
}

/// One bottom-up survival sweep. `rows[d]` holds the child counts of the
/// depth-`d` vertices; `boundary` is the survival value assigned to every
/// vertex at the cut level `rows.len()`.
pub fn survival_with_boundary(rows: &[Vec<u32>], pc: f64, boundary: f64) -> f64 {
    let cut: usize = match rows.last() {
        Some(row) => row.iter().map(|&c| c as usize).sum(),
        None => return boundary,
    };
    let mut vals = vec![boundary; cut];
    for row in rows.iter().rev() {
        let mut next = Vec::with_capacity(row.len());
        let mut child = 0usize;
        for &cc in row {
            let mut miss = 1.0;
            for _ in 0..cc {
                miss *= 1.0 - pc * vals[child];
                child += 1;
            }
            next.push(1.0 - miss);
        }
        vals = next;
    }
    vals[0]
}

/// One bottom-up factorial-moment sweep; `boundary` is the per-vertex state
/// `[f(0), f(1), ..., f(k)]` at the cut level (exact target level:
/// `[1, 1, 0, ..., 0]`). Returns the root state.
pub fn moments_with_boundary(rows: &[Vec<u32>], pc: f64, boundary: &[f64]) -> Vec<f64> {
    let k = boundary.len() - 1;
    let cut: usize = match rows.last() {
        Some(row) => row.iter().map(|&c| c as usize).sum(),
        None => return boundary.to_vec(),
    };
    let width = k + 1;
    let mut vals = Vec::with_capacity(cut * width);
    for _ in 0..cut {
        vals.extend_from_slice(boundary);
    }
    let mut acc = vec![0.0; width];
    let mut out = vec![0.0; width];
    for row in rows.iter().rev() {
        let mut next = Vec::with_capacity(row.len() * width);
        let mut child = 0usize;
        for &cc in row {
            acc.fill(0.0);
            acc[0] = 1.0;
            for _ in 0..cc {
                let f = &vals[child * width..(child + 1) * width];
                out.fill(0.0);
                // acc *= 1 + pc*f(1) x + ... + pc*f(k) x^k, truncated at k.
                for i in 0..width {
                    let a = acc[i];
                    if a == 0.0 {
                        continue;
                    }
                    out[i] += a;
                    for j in 1..width - i {
                        out[i + j] += a * pc * f[j];
                    }
                }
                std::mem::swap(&mut acc, &mut out);
                child += 1;
            }
            next.extend_from_slice(&acc);
        }
        vals = next;
    }
    vals[..width].to_vec()
}

/// Exact survival curve on a materialized tree.
pub fn survival_exact(tree: &GwTree, n: usize) -> Result<SurvivalCurve> {
    let rows = tree.child_count_rows(n)?;
    let pc = tree.spec().pc();
    let q = (0..=n)
        .map(|j| survival_with_boundary(&rows[..j], pc, 1.0))
        .collect();
    Ok(SurvivalCurve { q })
}

/// Exact survival on the deterministic `d`-ary tree, where every vertex at a
/// level shares one value and the sweep collapses to a scalar recursion.
pub fn survival_regular(d: u32, pc: f64, n: usize) -> Vec<f64> {
    let mut q = Vec::with_capacity(n + 1);
    q.push(1.0);
    for _ in 1..=n {
        let prev = *q.last().unwrap();
        let mut miss = 1.0;
        for _ in 0..d {
            miss *= 1.0 - pc * prev;
        }
        q.push(1.0 - miss);
    }
    q
}

/// Exact factorial moments `E_T[binom(|Y_j|, i)]` for all `j <= n`,
/// `i <= k_max`.
pub fn factorial_moments_exact(tree: &GwTree, n: usize, k_max: usize) -> Result<MomentTable> {
    if k_max > 6 {
        eprintln!(
            "warning: factorial moments of order {k_max} > 6 can overflow double range at depth"
        );
    }
    let rows = tree.child_count_rows(n)?;
    let pc = tree.spec().pc();
    let mut boundary = vec![0.0; k_max + 1];
    boundary[0] = 1.0;
    if k_max >= 1 {
        boundary[1] = 1.0;
    }
    let table = (0..=n)
        .map(|j| moments_with_boundary(&rows[..j], pc, &boundary))
        .collect();
    Ok(MomentTable {
        k_max,
        rows: table,
    })
}

/// Survival at target `n` from a materialized prefix. Targets inside the
/// prefix get the exact sweep; beyond the cut depth `D`, cut vertices take
/// the annealed boundary `tail_q[n - D]`.
pub fn survival_deep(prefix: &DeepPrefix, pc: f64, tail_q: &[f64], n: usize) -> Result<f64> {
    let d = prefix.depth();
    if n <= d {
        return Ok(survival_with_boundary(&prefix.rows[..n], pc, 1.0));
    }
    if tail_q.len() <= n - d {
        return Err(Error::InvalidInput(format!(
            "deep survival at target {n} needs a tail curve to {}",
            n - d
        )));
    }
    Ok(survival_with_boundary(&prefix.rows, pc, tail_q[n - d]))
}

/// Factorial moments at target `n` from a materialized prefix; `tail_b[m]`
/// are the annealed moments `[1, b_1(m), ..., b_k(m)]` used as the cut
/// state when `n` exceeds the prefix depth.
pub fn moments_deep(
    prefix: &DeepPrefix,
    pc: f64,
    tail_b: &[Vec<f64>],
    n: usize,
) -> Result<Vec<f64>> {
    let d = prefix.depth();
    let width = tail_b
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::InvalidInput("empty tail moment table".into()))?;
    if n <= d {
        let mut exact = vec![0.0; width];
        exact[0] = 1.0;
        if width > 1 {
            exact[1] = 1.0;
        }
        return Ok(moments_with_boundary(&prefix.rows[..n], pc, &exact));
    }
    if tail_b.len() <= n - d {
        return Err(Error::InvalidInput(format!(
            "deep moments at target {n} need tail moments to {}",
            n - d
        )));
    }
    Ok(moments_with_boundary(&prefix.rows, pc, &tail_b[n - d]))
}

/// Exhaustive reference: enumerates all `2^edges` configurations of the
/// first `n` levels and accumulates survival and factorial moments by total
/// probability. Independent of the sweep implementations; this is the
/// module's oracle.
pub fn brute_force_reference(tree: &GwTree, n: usize, k_max: usize) -> Result<(f64, Vec<f64>)> {
    tree.ensure_depth(n)?;
    let vertices = tree.level(n).end;
    let edges = vertices - 1;
    if edges > MAX_BRUTE_EDGES {
        return Err(Error::TooManyEdges {
            got: edges,
            max: MAX_BRUTE_EDGES,
        });
    }
    let pc = tree.spec().pc();
    let level_n = tree.level(n);
    let mut open = vec![false; vertices];
    open[0] = true;
    let mut q = 0.0;
    let mut moments = vec![0.0; k_max + 1];
    for mask in 0u64..(1u64 << edges) {
        for v in 1..vertices {
            let bit = (mask >> (v - 1)) & 1 == 1;
            open[v] = bit && open[tree.parent(v).unwrap()];
        }
        let y = level_n.clone().filter(|&v| open[v]).count() as u64;
        let on = mask.count_ones() as i32;
        let weight = pc.powi(on) * (1.0 - pc).powi(edges as i32 - on);
        if y > 0 {
            q += weight;
        }
        for (i, slot) in moments.iter_mut().enumerate() {
            *slot += weight * binom_f64(y, i);
        }
    }
    Ok((q, moments))
}

/// The surviving depth-`n` set of one percolation configuration.
#[derive(Clone, Debug)]
pub struct PercolationOutcome<I> {
    pub n: usize,
    pub y_n: Vec<I>,
}

impl<I> PercolationOutcome<I> {
    pub fn size(&self) -> usize {
        self.y_n.len()
    }
}

/// One critical percolation run: each edge above depth `n` opens
/// independently with probability `pc`, drawn in breadth-first order from
/// `rng`. Only the open cluster is traversed, so implicit trees materialize
/// just the vertices the cluster touches.
pub fn percolate_once<T: RootedTree>(
    tree: &T,
    n: usize,
    rng: &mut SplitMix64,
) -> PercolationOutcome<T::Id> {
    let pc = tree.pc();
    let mut frontier = vec![tree.root_id()];
    for _ in 0..n {
        if frontier.is_empty() {
            break;
        }
        let mut next = Vec::new();
        for &v in &frontier {
            let cc = tree.child_count_of(v);
            for slot in 0..cc {
                if rng.next_f64() < pc {
                    next.push(tree.child_of(v, slot));
                }
            }
        }
        frontier = next;
    }
    PercolationOutcome { n, y_n: frontier }
}

/// Monte Carlo survival frequencies for every depth `j <= n`, over
/// `replicates` independent runs (replicate `r` reads
/// `stream(seed, "perc", r)`).
pub fn survival_mc<T: RootedTree>(tree: &T, n: usize, replicates: u64, seed: u64) -> Vec<f64> {
    let depth_counts: Vec<u64> = (0..replicates)
        .into_par_iter()
        .fold(
            || vec![0u64; n + 1],
            |mut acc, r| {
                let mut rng = stream(seed, "perc", r);
                let pc = tree.pc();
                let mut frontier = vec![tree.root_id()];
                acc[0] += 1;
                for j in 1..=n {
                    let mut next = Vec::new();
                    for &v in &frontier {
                        let cc = tree.child_count_of(v);
                        for slot in 0..cc {
                            if rng.next_f64() < pc {
                                next.push(tree.child_of(v, slot));
                            }
                        }
                    }
                    if next.is_empty() {
                        break;
                    }
                    acc[j] += 1;
                    frontier = next;
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; n + 1],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    depth_counts
        .iter()
        .map(|&c| c as f64 / replicates as f64)
        .collect()
}

/// Sizes `|Y_n|` conditioned on `|Y_n| > 0`, by rejection.
#[derive(Clone, Debug)]
pub struct ConditionedSample {
    pub n: usize,
    pub sizes: Vec<u64>,
    pub attempts: u64,
    pub acceptance_rate: f64,
}

impl ConditionedSample {
    /// The normalized values `|Y_n| / n`.
    pub fn normalized(&self) -> Vec<f64> {
        self.sizes
            .iter()
            .map(|&s| s as f64 / self.n as f64)
            .collect()
    }
}

/// Rejection-samples percolation until `num_accepted` runs reach depth `n`.
/// Deterministic given `seed`, independent of thread count: replicates are
/// consumed in index order.
pub fn conditioned_sizes<T: RootedTree>(
    tree: &T,
    n: usize,
    num_accepted: usize,
    seed: u64,
    max_attempts: u64,
) -> Result<ConditionedSample> {
    let mut sizes = Vec::with_capacity(num_accepted);
    let mut attempts = 0u64;
    let mut start = 0u64;
    'outer: while sizes.len() < num_accepted {
        if start >= max_attempts {
            return Err(Error::AttemptCap {
                cap: max_attempts,
                got: sizes.len() as u64,
                want: num_accepted as u64,
            });
        }
        let hi = (start + CHUNK).min(max_attempts);
        let batch: Vec<u64> = (start..hi)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, "perc", r);
                percolate_once(tree, n, &mut rng).size() as u64
            })
            .collect();
        for (i, &s) in batch.iter().enumerate() {
            if s > 0 {
                sizes.push(s);
                if sizes.len() == num_accepted {
                    attempts = start + i as u64 + 1;
                    break 'outer;
                }
            }
        }
        attempts = hi;
        start = hi;
    }
    let acceptance_rate = sizes.len() as f64 / attempts as f64;
    Ok(ConditionedSample {
        n,
        sizes,
        attempts,
        acceptance_rate,
    })
}

/// The two-sided bracket on `n * q_n`: second-moment lower bound and the
/// `2 w_bar / (1 - pc)` effective-resistance upper bound. Both sides are
/// theorems, so a violation is reported as an error, not a measurement.
#[derive(Clone, Copy, Debug)]
pub struct Sandwich {
    pub n: usize,
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

pub fn sandwich_from_parts(
    n: usize,
    e1: f64,
    e2_binom: f64,
    q_n: f64,
    w_bar: f64,
    pc: f64,
) -> Result<Sandwich> {
    let second = e1 + 2.0 * e2_binom;
    let lower = if second > 0.0 {
        n as f64 * e1 * e1 / second
    } else {
        0.0
    };
    let value = n as f64 * q_n;
    let upper = 2.0 * w_bar / (1.0 - pc);
    if !(lower <= value && value <= upper) {
        return Err(Error::SandwichViolated {
            lower,
            value,
            upper,
        });
    }
    Ok(Sandwich {
        n,
        lower,
        value,
        upper,
    })
}

/// Exact bracket on a materialized tree. The `w_bar` in the upper bound is
/// the running maximum over the generated prefix — a lower bound on the
/// all-depths supremum, which only tightens the check.
pub fn sandwich_check(tree: &GwTree, n: usize) -> Result<Sandwich> {
    let rows = tree.child_count_rows(n)?;
    let pc = tree.spec().pc();
    let q_n = survival_with_boundary(&rows, pc, 1.0);
    let m = moments_with_boundary(&rows, pc, &[1.0, 1.0, 0.0]);
    sandwich_from_parts(n, m[1], m[2], q_n, tree.w_bar(), pc)
}

/// Deep-target bracket from a prefix plus annealed tail curves.
pub fn sandwich_deep(
    prefix: &DeepPrefix,
    pc: f64,
    tail_q: &[f64],
    tail_b: &[Vec<f64>],
    n: usize,
) -> Result<Sandwich> {
    let q_n = survival_deep(prefix, pc, tail_q, n)?;
    let m = moments_deep(prefix, pc, tail_b, n)?;
    sandwich_from_parts(n, m[1], m[2], q_n, prefix.w_bar, pc)
}

/// Conditioned structure diagnostics: how concentrated the surviving cluster
/// is through depth `m = max(1, ceil(log n / (4 log mu)))`.
#[derive(Clone, Debug)]
pub struct SpreadReport {
    pub n: usize,
    pub m: usize,
    pub accepted: u64,
    pub attempts: u64,
    /// Fraction of surviving runs whose depth-`n` set descends from two or
    /// more distinct depth-`m` vertices.
    pub p_multi: f64,
    /// Largest per-vertex conditional survival frequency at depth `n`.
    pub p_max: f64,
    pub mean_size: f64,
    /// Sum over depth-`n` vertices of their occurrence counts; equals the
    /// total of all accepted sizes by construction (linearity audit).
    pub occupancy_total: u64,
    pub size_total: u64,
    /// Set when fewer than 100 samples were accepted.
    pub low_confidence: bool,
}

pub fn spread_m(n: usize, mu: f64) -> usize {
    std::cmp::max(1, ((n as f64).ln() / (4.0 * mu.ln())).ceil() as usize)
}

/// Exact `max over depth-n vertices v of P_T[v in Y_n | survival]`.
///
/// `{v in Y_n}` is contained in the survival event and the root path to any
/// depth-`n` vertex opens with probability `pc^n`, so the conditional
/// probability is `pc^n / q_n` — identical for every vertex, hence equal to
/// the maximum. At depths past ~40 this is far below what occupancy counts
/// over any feasible number of conditioned replicates can resolve, so the
/// exact form is the usable route (the Monte Carlo estimate in
/// [`SpreadReport`] saturates at `1/accepted`).
pub fn point_probability_exact(pc: f64, n: usize, q_n: f64) -> f64 {
    pc.powi(n as i32) / q_n
}

/// Estimates the spread quantities by conditioned Monte Carlo. Stops after
/// `target_accepted` accepted runs or `max_attempts` attempts, whichever
/// comes first; errors only if nothing was accepted.
pub fn spread_diagnostics<T: RootedTree>(
    tree: &T,
    n: usize,
    target_accepted: usize,
    seed: u64,
    max_attempts: u64,
) -> Result<SpreadReport> {
    let m = spread_m(n, tree.mu());
    let mut accepted = 0u64;
    let mut multi = 0u64;
    let mut size_total = 0u64;
    let mut counts: HashMap<T::Id, u64> = HashMap::new();
    let mut attempts = 0u64;
    let mut start = 0u64;
    'outer: while accepted < target_accepted as u64 && start < max_attempts {
        let hi = (start + CHUNK).min(max_attempts);
        let batch: Vec<Option<(Vec<T::Id>, usize)>> = (start..hi)
            .into_par_iter()
            .map(|r| {
                let mut rng = stream(seed, "spread", r);
                percolate_tracking_ancestors(tree, n, m, &mut rng)
            })
            .collect();
        for (i, item) in batch.into_iter().enumerate() {
            if let Some((y, distinct)) = item {
                accepted += 1;
                if distinct >= 2 {
                    multi += 1;
                }
                size_total += y.len() as u64;
                for v in y {
                    *counts.entry(v).or_insert(0) += 1;
                }
                if accepted == target_accepted as u64 {
                    attempts = start + i as u64 + 1;
                    break 'outer;
                }
            }
        }
        attempts = hi;
        start = hi;
    }
    if accepted == 0 {
        return Err(Error::AttemptCap {
            cap: max_attempts,
            got: 0,
            want: target_accepted as u64,
        });
    }
    let occupancy_total: u64 = counts.values().sum();
    let max_count = counts.values().copied().max().unwrap_or(0);
    Ok(SpreadReport {
        n,
        m,
        accepted,
        attempts,
        p_multi: multi as f64 / accepted as f64,
        p_max: max_count as f64 / accepted as f64,
        mean_size: size_total as f64 / accepted as f64,
        occupancy_total,
        size_total,
        low_confidence: accepted < 100,
    })
}

/// Percolates to depth `n`; on survival returns the depth-`n` ids together
/// with the number of distinct depth-`m` ancestors they descend from.
fn percolate_tracking_ancestors<T: RootedTree>(
    tree: &T,
    n: usize,
    m: usize,
    rng: &mut SplitMix64,
) -> Option<(Vec<T::Id>, usize)> {
    let pc = tree.pc();
    // Each frontier entry carries the index (within the depth-m frontier)
    // of its depth-m ancestor; usize::MAX above the cut.
    let mut frontier = vec![(tree.root_id(), usize::MAX)];
    for depth in 0..n {
        if frontier.is_empty() {
            return None;
        }
        let mut next = Vec::new();
        for &(v, anc) in &frontier {
            let cc = tree.child_count_of(v);
            for slot in 0..cc {
                if rng.next_f64() < pc {
                    let child = tree.child_of(v, slot);
                    let tag = if depth + 1 == m { next.len() } else { anc };
                    next.push((child, tag));
                }
            }
        }
        frontier = next;
    }
    if frontier.is_empty() {
        return None;
    }
    let mut ancestors: Vec<usize> = frontier.iter().map(|&(_, a)| a).collect();
    ancestors.sort_unstable();
    ancestors.dedup();
    let y = frontier.into_iter().map(|(v, _)| v).collect();
    Some((y, ancestors.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annealed::annealed_survival_exact;
    use crate::deep::DeepTree;
    use crate::offspring::OffspringSpec;

    fn spec(s: &str) -> OffspringSpec {
        s.parse().unwrap()
    }

    fn det2(depth: usize) -> GwTree {
        GwTree::generate(spec("det:2"), 1, depth).unwrap()
    }

    #[test]
    fn det2_survival_hand_values() {
        let t = det2(2);
        let curve = survival_exact(&t, 2).unwrap();
        assert!((curve.q[0] - 1.0).abs() < 1e-15);
        assert!((curve.q[1] - 0.75).abs() < 1e-15);
        assert!((curve.q[2] - 39.0 / 64.0).abs() < 1e-15);
    }

    #[test]
    fn survival_regular_matches_arena_det_trees() {
        for d in [2u32, 3] {
            let sp = spec(&format!("det:{d}"));
            let t = GwTree::generate(sp.clone(), 0, 10).unwrap();
            let arena = survival_exact(&t, 10).unwrap();
            let regular = survival_regular(d, sp.pc(), 10);
            for j in 0..=10 {
                assert!((arena.q[j] - regular[j]).abs() < 1e-14, "d={d} j={j}");
            }
        }
    }

    #[test]
    fn survival_monotone_on_random_trees() {
        for seed in 0..10 {
            let t = GwTree::generate(spec("unif:1:3"), seed, 8).unwrap();
            let curve = survival_exact(&t, 8).unwrap();
            for j in 1..curve.q.len() {
                assert!(curve.q[j] <= curve.q[j - 1] + 1e-15);
                assert!(curve.q[j] > 0.0);
            }
        }
    }

    #[test]
    fn dp_matches_brute_force_enumeration() {
        let mut checked = 0;
        for seed in 0..40u64 {
            let t = GwTree::generate(spec("unif:1:3"), seed, 3).unwrap();
            if t.level(3).end - 1 > 20 {
                continue;
            }
            let (q_brute, m_brute) = brute_force_reference(&t, 3, 3).unwrap();
            let q_dp = survival_exact(&t, 3).unwrap().q[3];
            let table = factorial_moments_exact(&t, 3, 3).unwrap();
            assert!((q_dp - q_brute).abs() < 1e-12, "seed {seed}");
            for i in 0..=3 {
                assert!(
                    (table.entry(3, i) - m_brute[i]).abs() < 1e-12,
                    "seed {seed} order {i}"
                );
            }
            checked += 1;
        }
        assert!(checked >= 10, "only {checked} trees small enough");
    }

    #[test]
    fn det2_moment_hand_values() {
        let t = det2(2);
        let table = factorial_moments_exact(&t, 2, 2).unwrap();
        // Enumeration of the four depth-1 configurations.
        assert!((table.entry(1, 2) - 0.25).abs() < 1e-15);
        // All 2^6 configurations of the depth-2 binary tree.
        let (_, brute) = brute_force_reference(&t, 2, 2).unwrap();
        assert!((brute[2] - 0.5).abs() < 1e-15);
        assert!((table.entry(2, 2) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn first_moment_equals_w() {
        for seed in [3u64, 14, 15] {
            let t = GwTree::generate(spec("unif:1:3"), seed, 6).unwrap();
            let table = factorial_moments_exact(&t, 6, 2).unwrap();
            for j in 0..=6 {
                assert!((table.entry(j, 1) - t.w(j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn moment_table_boundary_row() {
        let t = det2(1);
        let table = factorial_moments_exact(&t, 1, 3).unwrap();
        assert_eq!(table.entry(0, 0), 1.0);
        assert_eq!(table.entry(0, 1), 1.0);
        assert_eq!(table.entry(0, 2), 0.0);
        assert_eq!(table.entry(0, 3), 0.0);
    }

    #[test]
    fn percolate_replay_is_identical() {
        let t = GwTree::generate(spec("unif:1:3"), 5, 6).unwrap();
        let a = percolate_once(&t, 6, &mut stream(9, "perc", 0));
        let b = percolate_once(&t, 6, &mut stream(9, "perc", 0));
        assert_eq!(a.y_n, b.y_n);
    }

    #[test]
    fn det2_depth1_outcome_distribution() {
        let t = det2(1);
        let reps = 100_000u64;
        let mut hist = [0u64; 3];
        for r in 0..reps {
            let out = percolate_once(&t, 1, &mut stream(4, "perc", r));
            hist[out.size()] += 1;
        }
        // Enumeration target (1/4, 1/2, 1/4); allow 4 standard errors.
        for (count, p) in hist.iter().zip([0.25, 0.5, 0.25]) {
            let freq = *count as f64 / reps as f64;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((freq - p).abs() < 4.0 * se, "freq {freq} target {p}");
        }
    }

    #[test]
    fn mc_survival_tracks_exact_curve() {
        let reps = 100_000u64;
        for seed in 0..10u64 {
            let t = GwTree::generate(spec("unif:1:3"), seed, 8).unwrap();
            let exact = survival_exact(&t, 8).unwrap();
            let mc = survival_mc(&t, 8, reps, seed ^ 0xABCD);
            for j in 0..=8 {
                let se = (exact.q[j] * (1.0 - exact.q[j]) / reps as f64)
                    .sqrt()
                    .max(1e-9);
                assert!(
                    (mc[j] - exact.q[j]).abs() < 4.0 * se,
                    "seed {seed} depth {j}: {} vs {}",
                    mc[j],
                    exact.q[j]
                );
            }
        }
    }

    #[test]
    fn det2_depth2_survival_frequency() {
        let t = det2(2);
        let mc = survival_mc(&t, 2, 1_000_000, 77);
        let q: f64 = 39.0 / 64.0;
        let se = (q * (1.0 - q) / 1e6).sqrt();
        assert!((mc[2] - q).abs() < 3.0 * se, "{} vs {q}", mc[2]);
    }

    #[test]
    fn conditioned_det2_depth1() {
        let t = det2(1);
        let sample = conditioned_sizes(&t, 1, 30_000, 8, DEFAULT_MAX_ATTEMPTS).unwrap();
        let ones = sample.sizes.iter().filter(|&&s| s == 1).count() as f64;
        let frac = ones / sample.sizes.len() as f64;
        let se = (2.0 / 3.0 * (1.0 / 3.0) / sample.sizes.len() as f64).sqrt();
        assert!((frac - 2.0 / 3.0).abs() < 4.0 * se, "frac {frac}");
        // Acceptance must agree with the exact q_1 = 3/4.
        let se_acc = (0.75 * 0.25 / sample.attempts as f64).sqrt();
        assert!((sample.acceptance_rate - 0.75).abs() < 4.0 * se_acc);
    }

    #[test]
    fn sandwich_det2_hand_values() {
        let t = det2(4);
        let s1 = sandwich_check(&t, 1).unwrap();
        assert!((s1.lower - 2.0 / 3.0).abs() < 1e-12);
        assert!((s1.value - 0.75).abs() < 1e-12);
        assert!((s1.upper - 4.0).abs() < 1e-12);
        let s2 = sandwich_check(&t, 2).unwrap();
        assert!((s2.value - 2.0 * 39.0 / 64.0).abs() < 1e-12);
        assert!(s2.upper >= s2.value);
        let s0 = sandwich_check(&t, 0).unwrap();
        assert_eq!(s0.value, 0.0);
        assert!(s0.lower <= s0.value);
    }

    #[test]
    fn sandwich_holds_on_random_trees() {
        for seed in 0..20u64 {
            let t = GwTree::generate(spec("unif:1:3"), seed, 9).unwrap();
            for n in 0..=9 {
                sandwich_check(&t, n).unwrap();
            }
        }
    }

    #[test]
    fn deep_survival_exact_when_cut_at_target() {
        // With the cut at the target depth the boundary is q_tail[0] = 1 and
        // the deep sweep must reproduce the exact arena value.
        let sp = spec("unif:1:3");
        let dt = DeepTree::new(sp.clone(), 33);
        let prefix = dt.prefix(u64::MAX, 10);
        let tail = annealed_survival_exact(&sp, 0);
        let deep = survival_deep(&prefix, sp.pc(), &tail, 10).unwrap();
        let exact = survival_with_boundary(&prefix.rows, sp.pc(), 1.0);
        assert!((deep - exact).abs() < 1e-15);
    }

    #[test]
    fn deep_survival_tail_error_shrinks_with_cut_depth() {
        // Cut at D < n and compare the annealed-tail value to the exact
        // sweep over the same materialized rows. The substitution error
        // averages over mu^D cut vertices and decays like mu^{-D/2}.
        let sp = spec("unif:1:3");
        let n = 16;
        let tail = annealed_survival_exact(&sp, n);
        let cuts = [8usize, 10, 12, 14];
        let mut mean_err = Vec::new();
        for &cut in &cuts {
            let mut total = 0.0;
            let mut worst: f64 = 0.0;
            let seeds = 40u64;
            for seed in 0..seeds {
                let t = GwTree::generate(sp.clone(), seed, n).unwrap();
                let rows = t.child_count_rows(n).unwrap();
                let exact = survival_with_boundary(&rows, sp.pc(), 1.0);
                let hybrid = survival_with_boundary(&rows[..cut], sp.pc(), tail[n - cut]);
                let rel = ((hybrid - exact) / exact).abs();
                total += rel;
                worst = worst.max(rel);
            }
            mean_err.push(total / seeds as f64);
            if cut == 12 {
                assert!(worst < 0.05, "cut {cut} worst {worst}");
            }
        }
        assert!(mean_err[0] < 0.05, "cut 8 mean {}", mean_err[0]);
        assert!(mean_err[2] < 0.01, "cut 12 mean {}", mean_err[2]);
        for w in mean_err.windows(2) {
            assert!(w[1] < w[0], "tail error should shrink: {mean_err:?}");
        }
    }

    #[test]
    fn deep_survival_det2_equals_annealed_at_any_cut() {
        let sp = spec("det:2");
        let dt = DeepTree::new(sp.clone(), 7);
        let n = 512;
        let tail = annealed_survival_exact(&sp, n);
        for cut in [1usize, 4, 8] {
            let prefix = dt.prefix(u64::MAX, cut);
            let deep = survival_deep(&prefix, sp.pc(), &tail, n).unwrap();
            assert!(
                (deep - tail[n]).abs() < 1e-12,
                "cut {cut}: {deep} vs {}",
                tail[n]
            );
        }
    }

    #[test]
    fn spread_det2_depth1_multi_is_one_third() {
        let t = det2(1);
        let rep = spread_diagnostics(&t, 1, 30_000, 21, DEFAULT_MAX_ATTEMPTS).unwrap();
        assert_eq!(rep.m, 1);
        let se = (rep.p_multi * (1.0 - rep.p_multi) / rep.accepted as f64).sqrt();
        assert!(
            (rep.p_multi - 1.0 / 3.0).abs() < 4.0 * se,
            "p_multi {}",
            rep.p_multi
        );
        assert_eq!(rep.occupancy_total, rep.size_total);
    }

    #[test]
    fn spread_pmax_matches_exact_identity_at_depth_one() {
        // At depth 1 the occupancy estimator resolves the per-vertex
        // conditional probability; it must agree with pc^n / q_n = 2/3.
        let t = det2(1);
        let rep = spread_diagnostics(&t, 1, 30_000, 6, DEFAULT_MAX_ATTEMPTS).unwrap();
        let exact = point_probability_exact(0.5, 1, 0.75);
        assert!((exact - 2.0 / 3.0).abs() < 1e-15);
        let se = (exact * (1.0 - exact) / rep.accepted as f64).sqrt();
        assert!(
            (rep.p_max - exact).abs() < 4.0 * se,
            "MC {} vs exact {exact}",
            rep.p_max
        );
    }

    #[test]
    fn spread_low_confidence_flag() {
        let t = det2(6);
        // Tiny attempt cap: almost nothing accepted.
        let rep = spread_diagnostics(&t, 6, 10_000, 3, 64).unwrap();
        assert!(rep.accepted < 100);
        assert!(rep.low_confidence);
    }

    #[test]
    fn attempt_cap_error_names_counts() {
        let t = det2(8);
        let err = conditioned_sizes(&t, 8, 100_000, 1, 32).unwrap_err();
        assert!(matches!(err, Error::AttemptCap { cap: 32, .. }));
    }
}

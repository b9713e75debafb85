//! The incipient infinite cluster on a fixed tree.
//!
//! Conditioning critical percolation on reaching depth `M` and letting
//! `M -> infinity` yields a measure on infinite root clusters: a single
//! infinite spine chosen step by step with probabilities proportional to
//! `pc * W(child)`, with ordinary critical percolation off the spine. The
//! depth-`n` marginal of a cluster shape `t` is
//!
//! ```text
//!   (sum over depth-n vertices v of t of W(v) / W(root)) * P_T[cluster = t],
//! ```
//!
//! and consistency across depths follows from the recurrence
//! `W(v) = pc * sum over children w of W(w)`.
//!
//! True `W` values are almost-sure limits no finite computation reaches, so
//! the sampler and the exact marginal both run on lookahead estimates. On
//! materialized trees every estimate is anchored at one fixed level
//! `n + lookahead` — `W(v) ~ Z_{L - depth(v)}(v) / mu^{L - depth(v)}` — which
//! makes the recurrence hold identically and the enumerated marginals sum to
//! one exactly. Implicit deep trees use per-vertex relative lookahead with
//! explicit renormalization instead; only weight ratios enter the spine law.

use crate::deep::DeepTree;
use crate::error::{Error, Result};
use crate::rng::{stream, NodeKey, SplitMix64};
use crate::tree::{GwTree, RootedTree};
use rayon::prelude::*;
use std::collections::HashSet;

/// Shape enumeration cap, in edges.
pub const MAX_SHAPE_EDGES: usize = 24;

/// One sampled cluster: the forced spine plus the off-spine percolation
/// cluster of the root, truncated at depth `n`.
#[derive(Clone, Debug)]
pub struct IicSample<I> {
    pub n: usize,
    /// Spine vertex per depth `0..=n`.
    pub spine: Vec<I>,
    /// Every cluster vertex at depth `<= n`, sorted.
    pub cluster: Vec<I>,
    /// Number of cluster vertices at depth `n`; at least 1 (the spine).
    pub c_n: u64,
}

/// Weights `W(v)` anchored at `level`: vertices at `level` get 1, and
/// `w(u) = pc * sum over children` propagates to the root. Returned indexed
/// by arena id for every vertex of depth `<= level`.
pub fn level_anchored_weights(tree: &GwTree, level: usize) -> Result<Vec<f64>> {
    tree.ensure_depth(level)?;
    let mut w = vec![0.0; tree.level(level).end];
    for id in tree.level(level) {
        w[id] = 1.0;
    }
    let pc = tree.spec().pc();
    for d in (0..level).rev() {
        for id in tree.level(d) {
            let mut total = 0.0;
            for c in tree.children(id) {
                total += w[c];
            }
            w[id] = pc * total;
        }
    }
    Ok(w)
}

/// Spine-decomposition sampler on a materialized tree. Weights are anchored
/// at level `n + lookahead`, computed once at construction.
pub struct IicSampler<'a> {
    tree: &'a GwTree,
    n: usize,
    weights: Vec<f64>,
}

impl<'a> IicSampler<'a> {
    pub fn new(tree: &'a GwTree, n: usize, lookahead: usize) -> Result<Self> {
        let weights = level_anchored_weights(tree, n + lookahead)?;
        Ok(Self { tree, n, weights })
    }

    /// Normalized spine transition probabilities out of `u`.
    pub fn transition_probs(&self, u: usize) -> Result<Vec<f64>> {
        let kids = self.tree.children(u);
        let total: f64 = kids.clone().map(|c| self.weights[c]).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput(format!(
                "zero total child weight at vertex {u}"
            )));
        }
        Ok(kids.map(|c| self.weights[c] / total).collect())
    }

    pub fn sample(&self, rng: &mut SplitMix64) -> Result<IicSample<usize>> {
        let mut spine = Vec::with_capacity(self.n + 1);
        let mut u = 0usize;
        spine.push(u);
        for _ in 0..self.n {
            let kids = self.tree.children(u);
            let total: f64 = kids.clone().map(|c| self.weights[c]).sum();
            if !(total > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "zero total child weight at vertex {u}"
                )));
            }
            let x = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut chosen = kids.end - 1;
            for c in kids {
                acc += self.weights[c];
                if x < acc {
                    chosen = c;
                    break;
                }
            }
            spine.push(chosen);
            u = chosen;
        }
        let (cluster, c_n) = percolate_with_spine(self.tree, self.n, &spine, rng);
        Ok(IicSample {
            n: self.n,
            spine,
            cluster,
            c_n,
        })
    }
}

/// Cluster of the root when the spine edges are forced open and every other
/// edge above depth `n` opens with probability `pc`.
fn percolate_with_spine<T: RootedTree>(
    tree: &T,
    n: usize,
    spine: &[T::Id],
    rng: &mut SplitMix64,
) -> (Vec<T::Id>, u64) {
    let pc = tree.pc();
    let mut cluster = vec![tree.root_id()];
    let mut frontier = vec![tree.root_id()];
    let mut c_n = 1u64;
    for d in 0..n {
        let mut next = Vec::new();
        for &v in &frontier {
            let cc = tree.child_count_of(v);
            for slot in 0..cc {
                let child = tree.child_of(v, slot);
                let forced = child == spine[d + 1];
                // The coin is drawn for every off-spine edge, in traversal
                // order, so the outcome is a pure function of the stream.
                if forced || rng.next_f64() < pc {
                    next.push(child);
                }
            }
        }
        if d + 1 == n {
            c_n = next.len() as u64;
        }
        cluster.extend_from_slice(&next);
        frontier = next;
    }
    cluster.sort_unstable();
    (cluster, c_n)
}

/// Spine transition probabilities out of `v` on an implicit tree, from
/// relative lookahead-`m` weight estimates, renormalized to sum to one.
pub fn spine_transition_probs_deep(
    dt: &DeepTree,
    v: NodeKey,
    lookahead: usize,
) -> Result<Vec<f64>> {
    let cc = dt.child_count_at(v);
    let weights = deep_child_weights(dt, v, cc, lookahead)?;
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidInput("zero total child weight".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

fn deep_child_weights(
    dt: &DeepTree,
    v: NodeKey,
    cc: u32,
    lookahead: usize,
) -> Result<Vec<f64>> {
    if dt.spec().is_deterministic() {
        // Every subtree weight estimate coincides; skip the counting.
        return Ok(vec![1.0; cc as usize]);
    }
    (0..cc)
        .map(|slot| dt.w_estimate(v.child(slot), lookahead))
        .collect()
}

/// One spine-decomposition sample on an implicit tree.
pub fn sample_iic_deep(
    dt: &DeepTree,
    n: usize,
    lookahead: usize,
    rng: &mut SplitMix64,
) -> Result<IicSample<NodeKey>> {
    let mut spine = Vec::with_capacity(n + 1);
    let mut u = dt.root_id();
    spine.push(u);
    for _ in 0..n {
        let cc = dt.child_count_at(u);
        let weights = deep_child_weights(dt, u, cc, lookahead)?;
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("zero total child weight".into()));
        }
        let x = rng.next_f64() * total;
        let mut acc = 0.0;
        let mut chosen = cc - 1;
        for (slot, w) in weights.iter().enumerate() {
            acc += w;
            if x < acc {
                chosen = slot as u32;
                break;
            }
        }
        u = u.child(chosen);
        spine.push(u);
    }
    let (cluster, c_n) = percolate_with_spine(dt, n, &spine, rng);
    Ok(IicSample {
        n,
        spine,
        cluster,
        c_n,
    })
}

/// Exact depth-`n` marginal weight of a cluster shape on a small tree.
///
/// `shape` lists arena ids. Ids outside the arena or below depth `n` are an
/// error; a structurally valid set that is not a root-containing subtree
/// reaching depth `n` has weight zero. Weights are anchored at
/// `n + lookahead`, and the root weight is rebuilt through the recurrence,
/// so the marginals over all shapes sum to one exactly.
pub fn iic_marginal_exact(
    tree: &GwTree,
    shape: &[usize],
    n: usize,
    lookahead: usize,
) -> Result<f64> {
    tree.ensure_depth(n + lookahead)?;
    let limit = tree.level(n).end;
    let mut members = HashSet::with_capacity(shape.len());
    for &v in shape {
        if v >= limit {
            return Err(Error::BadShape(format!(
                "vertex {v} outside the first {n} levels"
            )));
        }
        if !members.insert(v) {
            return Err(Error::BadShape(format!("duplicate vertex {v}")));
        }
    }
    if !members.contains(&0) {
        return Ok(0.0);
    }
    for &v in shape {
        if v != 0 && !members.contains(&tree.parent(v).unwrap()) {
            return Ok(0.0);
        }
    }
    let weights = level_anchored_weights(tree, n + lookahead)?;
    let level_n = tree.level(n);
    let tip_weight: f64 = shape
        .iter()
        .filter(|&&v| level_n.contains(&v))
        .map(|&v| weights[v])
        .sum();
    if tip_weight == 0.0 {
        return Ok(0.0);
    }
    let edges = shape.len() - 1;
    let below_cut: u64 = shape
        .iter()
        .filter(|&&v| !level_n.contains(&v))
        .map(|&v| u64::from(tree.child_count(v)))
        .sum();
    let boundary = below_cut - edges as u64;
    let pc = tree.spec().pc();
    Ok(tip_weight / weights[0]
        * pc.powi(edges as i32)
        * (1.0 - pc).powi(boundary as i32))
}

/// All root subtrees truncated at depth `n` that reach depth `n` (the
/// positive-weight shapes), each as a sorted id list.
pub fn enumerate_iic_shapes(tree: &GwTree, n: usize) -> Result<Vec<Vec<usize>>> {
    tree.ensure_depth(n)?;
    let edges = tree.level(n).end - 1;
    if edges > MAX_SHAPE_EDGES {
        return Err(Error::TooManyEdges {
            got: edges,
            max: MAX_SHAPE_EDGES,
        });
    }
    let mut out = Vec::new();
    let mut current = vec![0usize];
    recurse_shapes(tree, n, 0, &mut current, &mut out);
    Ok(out)
}

fn recurse_shapes(
    tree: &GwTree,
    n: usize,
    idx: usize,
    current: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if idx == current.len() {
        let level_n = tree.level(n);
        if current.iter().any(|v| level_n.contains(v)) {
            let mut shape = current.clone();
            shape.sort_unstable();
            out.push(shape);
        }
        return;
    }
    let v = current[idx];
    if tree.level(n).contains(&v) {
        recurse_shapes(tree, n, idx + 1, current, out);
        return;
    }
    let kids: Vec<usize> = tree.children(v).collect();
    let before = current.len();
    for mask in 0u32..(1u32 << kids.len()) {
        for (slot, &kid) in kids.iter().enumerate() {
            if mask >> slot & 1 == 1 {
                current.push(kid);
            }
        }
        recurse_shapes(tree, n, idx + 1, current, out);
        current.truncate(before);
    }
}

/// `C_n / n` over independent samples on one fixed materialized tree;
/// replicate `r` reads `stream(seed, "iic", r)`.
pub fn iic_sizes_arena(
    tree: &GwTree,
    n: usize,
    lookahead: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let sampler = IicSampler::new(tree, n, lookahead)?;
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, "iic", r);
            sampler.sample(&mut rng).map(|s| s.c_n as f64 / n as f64)
        })
        .collect()
}

/// `C_n / n` over independent samples on one fixed implicit tree.
pub fn iic_sizes_deep(
    dt: &DeepTree,
    n: usize,
    lookahead: usize,
    replicates: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, "iic", r);
            sample_iic_deep(dt, n, lookahead, &mut rng).map(|s| s.c_n as f64 / n as f64)
        })
        .collect()
}

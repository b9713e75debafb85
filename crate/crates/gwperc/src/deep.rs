//! Implicitly represented Galton-Watson trees for deep quenched runs.
//!
//! Level sizes grow like `mu^n`, so no arena can hold a supercritical tree
//! to depth 256 or 512. A [`DeepTree`] instead fixes the tree as a pure
//! function of its master seed: every vertex carries a 128-bit [`NodeKey`]
//! derived from its root path, and its child count is drawn from a stream
//! seeded by that key. Any traversal — percolation clusters, spine walks,
//! subtree frontier counts — materializes exactly the vertices it touches,
//! and revisiting a vertex always reproduces the same draw. Percolation
//! randomness is seeded separately per replicate, so replicates vary while
//! the tree stays fixed: the quenched regime.
//!
//! A [`DeepPrefix`] materializes the child-count rows of the first levels
//! under a node budget; the exact survival and moment sweeps run on it with
//! distribution-level boundary values standing in for the unmaterialized
//! tail (see the percolation module).

use crate::error::{Error, Result};
use crate::offspring::OffspringSpec;
use crate::rng::{NodeKey, SplitMix64};
use crate::tree::RootedTree;

/// Frontier counting keeps one key per frontier vertex; this caps the
/// lookahead so a single estimate cannot exhaust memory.
const MAX_LOOKAHEAD: usize = 26;

#[derive(Clone, Debug)]
pub struct DeepTree {
    spec: OffspringSpec,
    master_seed: u64,
    root: NodeKey,
    pc: f64,
}

impl DeepTree {
    pub fn new(spec: OffspringSpec, master_seed: u64) -> Self {
        let pc = spec.pc();
        DeepTree {
            spec,
            master_seed,
            root: NodeKey::root(master_seed, "deeptree"),
            pc,
        }
    }

    pub fn spec(&self) -> &OffspringSpec {
        &self.spec
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Child count of the vertex with key `k`; a fixed function of
    /// `(master_seed, path)`, independent of traversal order.
    #[inline]
    pub fn child_count_at(&self, k: NodeKey) -> u32 {
        self.spec.sample(&mut SplitMix64::new(k.seed()))
    }

    /// `Z_m(v)`: descendants of `v` exactly `m` levels down.
    pub fn descendants_at(&self, v: NodeKey, m: usize) -> Result<u64> {
        if m > MAX_LOOKAHEAD {
            return Err(Error::InvalidInput(format!(
                "lookahead {m} exceeds supported maximum {MAX_LOOKAHEAD}"
            )));
        }
        let mut frontier = vec![v];
        for _ in 0..m {
            let mut next =
                Vec::with_capacity((frontier.len() as f64 * self.spec.mean()) as usize + 1);
            for &u in &frontier {
                let c = self.child_count_at(u);
                for slot in 0..c {
                    next.push(u.child(slot));
                }
            }
            frontier = next;
        }
        Ok(frontier.len() as u64)
    }

    /// `W_m(v) = Z_m(v) / mu^m`, the lookahead-`m` weight estimate.
    pub fn w_estimate(&self, v: NodeKey, m: usize) -> Result<f64> {
        Ok(self.descendants_at(v, m)? as f64 / self.spec.mean().powi(m as i32))
    }

    /// Materializes child-count rows from the root downward, stopping before
    /// the level that would push the vertex total past `node_budget` (or at
    /// `max_depth`). The result always has depth at least 1.
    pub fn prefix(&self, node_budget: u64, max_depth: usize) -> DeepPrefix {
        let mu = self.spec.mean();
        let mut rows: Vec<Vec<u32>> = Vec::new();
        let mut z = vec![1u64];
        let mut w = vec![1.0f64];
        let mut w_bar = 1.0f64;
        let mut frontier = vec![self.root];
        let mut total = 1u64;
        let mut mu_pow = 1.0;
        while rows.len() < max_depth {
            let counts: Vec<u32> = frontier.iter().map(|&k| self.child_count_at(k)).collect();
            let children: u64 = counts.iter().map(|&c| u64::from(c)).sum();
            if !rows.is_empty() && total + children > node_budget {
                break;
            }
            let mut next = Vec::with_capacity(children as usize);
            for (&k, &c) in frontier.iter().zip(&counts) {
                for slot in 0..c {
                    next.push(k.child(slot));
                }
            }
            rows.push(counts);
            total += children;
            mu_pow *= mu;
            let wn = children as f64 / mu_pow;
            z.push(children);
            w.push(wn);
            if wn > w_bar {
                w_bar = wn;
            }
            frontier = next;
        }
        DeepPrefix { rows, z, w, w_bar }
    }
}

impl RootedTree for DeepTree {
    type Id = NodeKey;

    fn root_id(&self) -> NodeKey {
        self.root
    }

    fn child_count_of(&self, v: NodeKey) -> u32 {
        self.child_count_at(v)
    }

    fn child_of(&self, v: NodeKey, slot: u32) -> NodeKey {
        v.child(slot)
    }

    fn pc(&self) -> f64 {
        self.pc
    }

    fn mu(&self) -> f64 {
        self.spec.mean()
    }
}

/// Materialized child-count rows of the first levels of a [`DeepTree`].
#[derive(Clone, Debug)]
pub struct DeepPrefix {
    /// `rows[d]` — child counts of the depth-`d` vertices, breadth-first.
    pub rows: Vec<Vec<u32>>,
    /// Level sizes `z[d]` for `d <= depth()`.
    pub z: Vec<u64>,
    /// `w[d] = z[d] / mu^d`.
    pub w: Vec<f64>,
    /// Running maximum of `w` over the prefix.
    pub w_bar: f64,
}

impl DeepPrefix {
    /// Number of fully materialized levels (the cut depth).
    pub fn depth(&self) -> usize {
        self.rows.len()
    }

    /// Weight estimate for the whole tree: the deepest materialized `W_d`.
    pub fn w_estimate(&self) -> f64 {
        *self.w.last().unwrap()
    }
}

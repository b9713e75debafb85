//! Seeded generation and storage of Galton-Watson trees.
//!
//! A [`GwTree`] is an arena of vertices laid out in breadth-first order,
//! one contiguous block per level. The child count of the vertex with
//! breadth-first rank `i` is drawn from `stream(master_seed, "tree", i)`,
//! so deepening a tree never reshuffles earlier draws: the same
//! `(spec, master_seed)` always denotes the same infinite tree, of which the
//! arena holds a prefix. The per-level tables `z[n]` and `w[n] = z[n]/mu^n`
//! are maintained during generation, along with the running maximum of `w`.

use crate::error::{Error, Result};
use crate::offspring::OffspringSpec;
use crate::rng::stream;
use std::io::{BufRead, Write};
use std::path::Path;

/// Vertices a tree may hold before generation fails; level sizes grow like
/// `w * mu^n`, so this bounds the reachable depth for a given law.
pub const DEFAULT_NODE_BUDGET: u64 = 1 << 25;

const NO_PARENT: u32 = u32::MAX;
const NOT_GENERATED: u32 = u32::MAX;

#[derive(Clone, Copy, Debug)]
struct NodeRec {
    parent: u32,
    first_child: u32,
    child_count: u32,
}

/// A vertex handle: arena id plus its depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VertexRef {
    pub id: usize,
    pub depth: usize,
}

#[derive(Clone, Debug)]
pub struct GwTree {
    spec: OffspringSpec,
    master_seed: u64,
    nodes: Vec<NodeRec>,
    /// `level_start[d]..level_start[d+1]` are the ids at depth `d`;
    /// the last entry equals `nodes.len()`.
    level_start: Vec<usize>,
    z: Vec<u64>,
    w: Vec<f64>,
    w_bar: f64,
    mu_pow: f64,
    node_budget: u64,
}

impl GwTree {
    /// Generates breadth-first to exactly `depth` levels below the root.
    pub fn generate(spec: OffspringSpec, master_seed: u64, depth: usize) -> Result<Self> {
        Self::generate_with_budget(spec, master_seed, depth, DEFAULT_NODE_BUDGET)
    }

    pub fn generate_with_budget(
        spec: OffspringSpec,
        master_seed: u64,
        depth: usize,
        node_budget: u64,
    ) -> Result<Self> {
        let mut tree = Self::root_only(spec, master_seed, node_budget);
        for _ in 0..depth {
            tree.append_generated_level()?;
        }
        Ok(tree)
    }

    fn root_only(spec: OffspringSpec, master_seed: u64, node_budget: u64) -> Self {
        GwTree {
            spec,
            master_seed,
            nodes: vec![NodeRec {
                parent: NO_PARENT,
                first_child: NOT_GENERATED,
                child_count: NOT_GENERATED,
            }],
            level_start: vec![0, 1],
            z: vec![1],
            w: vec![1.0],
            w_bar: 1.0,
            mu_pow: 1.0,
            node_budget,
        }
    }

    /// Extends the tree in place; the existing arena prefix is unchanged.
    pub fn deepen(&mut self, new_depth: usize) -> Result<()> {
        if new_depth <= self.generated_depth() {
            return Err(Error::DeepenNotBeyond {
                target: new_depth,
                have: self.generated_depth(),
            });
        }
        while self.generated_depth() < new_depth {
            self.append_generated_level()?;
        }
        Ok(())
    }

    fn append_generated_level(&mut self) -> Result<()> {
        let d = self.generated_depth();
        let (lo, hi) = (self.level_start[d], self.level_start[d + 1]);
        let counts: Vec<u32> = (lo..hi)
            .map(|id| self.spec.sample(&mut stream(self.master_seed, "tree", id as u64)))
            .collect();
        self.append_level(&counts)
    }

    /// Appends one level given the child counts of the current last level.
    fn append_level(&mut self, counts: &[u32]) -> Result<()> {
        let d = self.generated_depth();
        let lo = self.level_start[d];
        debug_assert_eq!(counts.len(), self.level_start[d + 1] - lo);
        let children: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        let needed = self.nodes.len() as u64 + children;
        if needed > self.node_budget {
            return Err(Error::NodeBudget {
                depth: d + 1,
                needed,
                budget: self.node_budget,
            });
        }
        self.nodes.reserve(children as usize);
        for (i, &c) in counts.iter().enumerate() {
            let parent = (lo + i) as u32;
            let first = self.nodes.len() as u32;
            for _ in 0..c {
                self.nodes.push(NodeRec {
                    parent,
                    first_child: NOT_GENERATED,
                    child_count: NOT_GENERATED,
                });
            }
            let rec = &mut self.nodes[parent as usize];
            rec.first_child = first;
            rec.child_count = c;
        }
        self.level_start.push(self.nodes.len());
        self.z.push(children);
        self.mu_pow *= self.spec.mean();
        let w = children as f64 / self.mu_pow;
        self.w.push(w);
        if w > self.w_bar {
            self.w_bar = w;
        }
        Ok(())
    }

    pub fn spec(&self) -> &OffspringSpec {
        &self.spec
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn generated_depth(&self) -> usize {
        self.level_start.len() - 2
    }

    pub fn vertex_count(&self) -> usize {
        self.nodes.len()
    }

    /// `Z_n`, the number of vertices at depth `n`.
    pub fn z(&self, n: usize) -> u64 {
        self.z[n]
    }

    pub fn z_table(&self) -> &[u64] {
        &self.z
    }

    /// `W_n = Z_n / mu^n`.
    pub fn w(&self, n: usize) -> f64 {
        self.w[n]
    }

    pub fn w_table(&self) -> &[f64] {
        &self.w
    }

    /// Running maximum of `W_k` over the generated prefix. A lower bound for
    /// the all-depths supremum, which a finite run cannot observe.
    pub fn w_bar(&self) -> f64 {
        self.w_bar
    }

    /// Ids at depth `d`.
    pub fn level(&self, d: usize) -> std::ops::Range<usize> {
        self.level_start[d]..self.level_start[d + 1]
    }

    pub fn vertex(&self, id: usize) -> Result<VertexRef> {
        if id >= self.nodes.len() {
            return Err(Error::BadVertex {
                id,
                len: self.nodes.len(),
            });
        }
        let depth = self.level_start.partition_point(|&s| s <= id) - 1;
        Ok(VertexRef { id, depth })
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        let p = self.nodes[id].parent;
        (p != NO_PARENT).then_some(p as usize)
    }

    /// Child ids of `id`; empty if the vertex sits on the last generated
    /// level (its children have not been drawn yet).
    pub fn children(&self, id: usize) -> std::ops::Range<usize> {
        let rec = &self.nodes[id];
        if rec.first_child == NOT_GENERATED {
            return 0..0;
        }
        let first = rec.first_child as usize;
        first..first + rec.child_count as usize
    }

    pub fn child_count(&self, id: usize) -> u32 {
        let c = self.nodes[id].child_count;
        debug_assert_ne!(c, NOT_GENERATED, "children of {id} not generated");
        c
    }

    pub fn ensure_depth(&self, need: usize) -> Result<()> {
        if self.generated_depth() < need {
            return Err(Error::InsufficientDepth {
                need,
                have: self.generated_depth(),
            });
        }
        Ok(())
    }

    /// `W_m(v) = Z_m(v) / mu^m`, the lookahead-`m` estimate of the
    /// descendant martingale limit `W(v)`.
    ///
    /// Subtrees occupy contiguous id ranges per level in breadth-first
    /// layout, so the count needs only the two range endpoints per step.
    pub fn w_estimate(&self, v: VertexRef, m: usize) -> Result<f64> {
        self.ensure_depth(v.depth + m)?;
        Ok(self.descendants_at(v, m) as f64 / self.spec.mean().powi(m as i32))
    }

    /// `Z_m(v)`: number of descendants of `v` exactly `m` levels below it.
    pub fn descendants_at(&self, v: VertexRef, m: usize) -> u64 {
        let (mut lo, mut hi) = (v.id, v.id + 1);
        for _ in 0..m {
            let first = self.nodes[lo].first_child as usize;
            let last = &self.nodes[hi - 1];
            lo = first;
            hi = last.first_child as usize + last.child_count as usize;
        }
        (hi - lo) as u64
    }

    /// Child-count rows for levels `0..n`, the input shape the exact
    /// percolation sweeps consume.
    pub fn child_count_rows(&self, n: usize) -> Result<Vec<Vec<u32>>> {
        self.ensure_depth(n)?;
        Ok((0..n)
            .map(|d| self.level(d).map(|id| self.child_count(id)).collect())
            .collect())
    }

    /// Writes the tree in its ASCII interchange format:
    /// a header `gwtree v1 <spec> <seed> <depth>`, one line of
    /// space-separated child counts per level, and a trailing
    /// `sum <total vertex count>` checksum line.
    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(
            out,
            "gwtree v1 {} {} {}",
            self.spec.name(),
            self.master_seed,
            self.generated_depth()
        )?;
        for d in 0..self.generated_depth() {
            let row: Vec<String> = self
                .level(d)
                .map(|id| self.child_count(id).to_string())
                .collect();
            writeln!(out, "{}", row.join(" "))?;
        }
        writeln!(out, "sum {}", self.nodes.len())?;
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut file)
    }

    pub fn read_from<R: BufRead>(input: &mut R) -> Result<Self> {
        let mut header = String::new();
        input.read_line(&mut header)?;
        let tok: Vec<&str> = header.split_whitespace().collect();
        if tok.len() != 5 || tok[0] != "gwtree" {
            return Err(Error::TreeFile(format!("bad header {header:?}")));
        }
        if tok[1] != "v1" {
            return Err(Error::TreeFile(format!("unsupported version {:?}", tok[1])));
        }
        let spec: OffspringSpec = tok[2].parse()?;
        let seed: u64 = tok[3]
            .parse()
            .map_err(|_| Error::TreeFile(format!("bad seed {:?}", tok[3])))?;
        let depth: usize = tok[4]
            .parse()
            .map_err(|_| Error::TreeFile(format!("bad depth {:?}", tok[4])))?;

        let mut tree = Self::root_only(spec, seed, DEFAULT_NODE_BUDGET);
        let mut line = String::new();
        for d in 0..depth {
            line.clear();
            if input.read_line(&mut line)? == 0 {
                return Err(Error::TreeFile(format!("truncated at level {d}")));
            }
            let counts: std::result::Result<Vec<u32>, _> =
                line.split_whitespace().map(|t| t.parse()).collect();
            let counts =
                counts.map_err(|_| Error::TreeFile(format!("bad count at level {d}")))?;
            let expect = tree.level(d).len();
            if counts.len() != expect {
                return Err(Error::TreeFile(format!(
                    "level {d} has {} counts, expected {expect}",
                    counts.len()
                )));
            }
            tree.append_level(&counts)?;
        }
        line.clear();
        if input.read_line(&mut line)? == 0 {
            return Err(Error::TreeFile("missing checksum line".into()));
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        if tok.len() != 2 || tok[0] != "sum" {
            return Err(Error::TreeFile(format!("bad checksum line {line:?}")));
        }
        let total: usize = tok[1]
            .parse()
            .map_err(|_| Error::TreeFile(format!("bad checksum {:?}", tok[1])))?;
        if total != tree.nodes.len() {
            return Err(Error::TreeFile(format!(
                "checksum {total} does not match {} vertices",
                tree.nodes.len()
            )));
        }
        Ok(tree)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut file)
    }
}

/// Minimal tree interface shared by the materialized arena and the
/// implicit deep representation; percolation and spine sampling are
/// generic over it.
pub trait RootedTree: Sync {
    type Id: Copy + Eq + Ord + std::hash::Hash + std::fmt::Debug + Send + Sync;

    fn root_id(&self) -> Self::Id;
    fn child_count_of(&self, v: Self::Id) -> u32;
    fn child_of(&self, v: Self::Id, slot: u32) -> Self::Id;
    fn pc(&self) -> f64;
    fn mu(&self) -> f64;
}

impl RootedTree for GwTree {
    type Id = usize;

    fn root_id(&self) -> usize {
        0
    }

    fn child_count_of(&self, v: usize) -> u32 {
        self.child_count(v)
    }

    fn child_of(&self, v: usize, slot: u32) -> usize {
        self.nodes[v].first_child as usize + slot as usize
    }

    fn pc(&self) -> f64 {
        self.spec.pc()
    }

    fn mu(&self) -> f64 {
        self.spec.mean()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn spec(s: &str) -> OffspringSpec {
        s.parse().unwrap()
    }

    #[test]
    fn det2_levels_are_powers_of_two() {
        let t = GwTree::generate(spec("det:2"), 5, 3).unwrap();
        assert_eq!(t.z_table(), &[1, 2, 4, 8]);
        assert!((t.w(3) - 1.0).abs() < 1e-15);
        assert_eq!(t.vertex_count(), 15);
    }

    #[test]
    fn unif13_seed42_matches_reference_walk() {
        // Independent oracle: re-walk the per-rank streams with a plain
        // queue-based generator and count the fifth level.
        let sp = spec("unif:1:3");
        let mut level = vec![0u64..1u64];
        let mut next_id = 1u64;
        let mut z5 = 0u64;
        for d in 0..5 {
            let mut next = Vec::new();
            for range in &level {
                for id in range.clone() {
                    let c = sp.sample(&mut stream(42, "tree", id)) as u64;
                    next.push(next_id..next_id + c);
                    next_id += c;
                }
            }
            if d == 4 {
                z5 = next.iter().map(|r| r.end - r.start).sum();
            }
            level = next;
        }
        let t = GwTree::generate(sp.clone(), 42, 5).unwrap();
        assert_eq!(t.z(5), z5);
        assert!((t.w(5) - z5 as f64 / 32.0).abs() < 1e-12);
    }

    #[test]
    fn deepen_equals_direct_generation() {
        let sp = spec("unif:1:3");
        let direct = GwTree::generate(sp.clone(), 7, 6).unwrap();
        let mut grown = GwTree::generate(sp, 7, 4).unwrap();
        grown.deepen(6).unwrap();
        assert_eq!(direct.z_table(), grown.z_table());
        assert_eq!(direct.vertex_count(), grown.vertex_count());
        for id in 0..direct.vertex_count() {
            assert_eq!(direct.parent(id), grown.parent(id));
            assert_eq!(direct.children(id), grown.children(id));
        }
    }

    #[test]
    fn det3_deepen_reaches_81() {
        let mut t = GwTree::generate(spec("det:3"), 1, 2).unwrap();
        t.deepen(4).unwrap();
        assert_eq!(t.z(4), 81);
    }

    #[test]
    fn deepen_to_same_depth_fails() {
        let mut t = GwTree::generate(spec("det:2"), 1, 3).unwrap();
        assert!(matches!(
            t.deepen(3),
            Err(Error::DeepenNotBeyond { .. })
        ));
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let a = GwTree::generate(spec("unif:1:3"), 123, 8).unwrap();
        let b = GwTree::generate(spec("unif:1:3"), 123, 8).unwrap();
        assert_eq!(a.z_table(), b.z_table());
        for id in 0..a.vertex_count() {
            assert_eq!(a.children(id), b.children(id));
        }
    }

    #[test]
    fn node_budget_failure_names_depth() {
        let err = GwTree::generate_with_budget(spec("det:3"), 0, 10, 100).unwrap_err();
        match err {
            // Cumulative sizes 1, 4, 13, 40, 121: level 4 breaks the budget.
            Error::NodeBudget { depth, .. } => assert_eq!(depth, 4),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn level_index_partitions_arena() {
        let t = GwTree::generate(spec("unif:1:3"), 9, 6).unwrap();
        let mut seen = 0usize;
        for d in 0..=t.generated_depth() {
            let range = t.level(d);
            assert_eq!(range.start, seen);
            seen = range.end;
            for id in range {
                assert_eq!(t.vertex(id).unwrap().depth, d);
            }
        }
        assert_eq!(seen, t.vertex_count());
    }

    #[test]
    fn z_recursion_audit() {
        let t = GwTree::generate(spec("unif:1:3"), 31, 7).unwrap();
        for d in 0..t.generated_depth() {
            let sum: u64 = t.level(d).map(|id| u64::from(t.child_count(id))).sum();
            assert_eq!(sum, t.z(d + 1));
        }
    }

    #[test]
    fn w_estimate_det2_is_one() {
        let t = GwTree::generate(spec("det:2"), 4, 8).unwrap();
        for id in t.level(3) {
            let v = t.vertex(id).unwrap();
            assert!((t.w_estimate(v, 5).unwrap() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn w_estimate_at_root_matches_w_table() {
        let t = GwTree::generate(spec("unif:1:3"), 17, 9).unwrap();
        let root = t.vertex(0).unwrap();
        for m in 0..=9 {
            assert!((t.w_estimate(root, m).unwrap() - t.w(m)).abs() < 1e-12);
        }
    }

    #[test]
    fn w_estimate_needs_depth() {
        let t = GwTree::generate(spec("det:2"), 4, 3).unwrap();
        let v = t.vertex(1).unwrap();
        assert!(matches!(
            t.w_estimate(v, 5),
            Err(Error::InsufficientDepth { .. })
        ));
    }

    #[test]
    fn serialize_round_trip_is_identity() {
        let t = GwTree::generate(spec("unif:1:3"), 42, 5).unwrap();
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = GwTree::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.z_table(), t.z_table());
        assert_eq!(back.master_seed(), t.master_seed());
        for id in 0..t.vertex_count() {
            assert_eq!(back.children(id), t.children(id));
        }
        let mut again = Vec::new();
        back.write_to(&mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn deserialized_tree_deepens_identically() {
        let full = GwTree::generate(spec("unif:1:3"), 77, 7).unwrap();
        let shallow = GwTree::generate(spec("unif:1:3"), 77, 4).unwrap();
        let mut buf = Vec::new();
        shallow.write_to(&mut buf).unwrap();
        let mut loaded = GwTree::read_from(&mut buf.as_slice()).unwrap();
        loaded.deepen(7).unwrap();
        assert_eq!(loaded.z_table(), full.z_table());
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut buf = Vec::new();
        GwTree::generate(spec("det:2"), 1, 2)
            .unwrap()
            .write_to(&mut buf)
            .unwrap();
        buf[0] = b'x';
        assert!(matches!(
            GwTree::read_from(&mut buf.as_slice()),
            Err(Error::TreeFile(_))
        ));
    }

    #[test]
    fn truncated_file_is_rejected() {
        let mut buf = Vec::new();
        GwTree::generate(spec("det:2"), 1, 3)
            .unwrap()
            .write_to(&mut buf)
            .unwrap();
        let cut = buf.len() / 2;
        assert!(GwTree::read_from(&mut &buf[..cut]).is_err());
    }

    #[test]
    fn checksum_mismatch_is_rejected() {
        let mut buf = Vec::new();
        GwTree::generate(spec("det:2"), 1, 2)
            .unwrap()
            .write_to(&mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap().replace("sum 7", "sum 8");
        assert!(GwTree::read_from(&mut text.as_bytes()).is_err());
    }

    #[test]
    fn w8_has_unit_mean_across_seeds() {
        let sp = spec("unif:1:3");
        let n = 10_000u64;
        let mut total = 0.0;
        let mut total_sq = 0.0;
        for seed in 0..n {
            let t = GwTree::generate(sp.clone(), seed, 8).unwrap();
            total += t.w(8);
            total_sq += t.w(8) * t.w(8);
        }
        let mean = total / n as f64;
        let var = total_sq / n as f64 - mean * mean;
        let se = (var / n as f64).sqrt();
        assert!(
            (mean - 1.0).abs() < 3.0 * se,
            "mean {mean}, standard error {se}"
        );
    }
}

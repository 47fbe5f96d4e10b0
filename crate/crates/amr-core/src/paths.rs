//! Metapath discovery between same-type endpoints.
//!
//! [`biwalk`] expands boolean frontiers from both endpoints of a candidate
//! pair — ⌈(L−1)/2⌉ hops from one side, ⌊(L−1)/2⌋ from the other — and
//! assembles complete paths where the frontiers meet, enumerating concrete
//! node sequences breadth-first over the supporting adjacency structure.
//! [`brute_force_paths`] is the exhaustive oracle for desk-scale graphs.
//!
//! Paths are node-simple, 3..=L nodes long, and kept per unordered endpoint
//! pair: the `p` shortest, ties broken by lexicographic (type-name, node-id)
//! order, so runs are reproducible.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rayon::prelude::*;

use crate::error::{AmrError, Result};
use crate::graph::{HeteroGraph, NodeRef};

/// One concrete metapath: an alternating (node-type, node-id) sequence whose
/// first and last nodes share the endpoint type.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct MetaPath {
    pub nodes: Vec<NodeRef>,
}

impl MetaPath {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn reversed(&self) -> MetaPath {
        let mut nodes = self.nodes.clone();
        nodes.reverse();
        MetaPath { nodes }
    }

    /// Sequence of node type indices — the path's type signature.
    pub fn type_signature(&self) -> Vec<u16> {
        self.nodes.iter().map(|n| n.ty).collect()
    }

    /// Check every structural invariant against the graph.
    pub fn validate(&self, g: &HeteroGraph, endpoint_ty: u16, l_max: usize) -> Result<()> {
        let n = self.nodes.len();
        if n < 3 || n > l_max {
            return Err(AmrError::Contract(format!(
                "path length {n} outside 3..={l_max}"
            )));
        }
        let (first, last) = (self.nodes[0], self.nodes[n - 1]);
        if first.ty != endpoint_ty || last.ty != endpoint_ty {
            return Err(AmrError::Contract("path endpoints not of endpoint type".into()));
        }
        let distinct: BTreeSet<NodeRef> = self.nodes.iter().copied().collect();
        if distinct.len() != n {
            return Err(AmrError::Contract("path repeats a node".into()));
        }
        for w in self.nodes.windows(2) {
            if !g.has_edge(w[0], w[1]) {
                return Err(AmrError::Contract(format!(
                    "consecutive nodes {:?} -> {:?} not connected",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }
}

/// Discovered paths per unordered endpoint pair. Paths are stored in the
/// canonical direction `min(a,b) -> max(a,b)`; queries in the other order see
/// reversed sequences.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathSet {
    pub endpoint_ty: u16,
    map: BTreeMap<(NodeRef, NodeRef), Vec<MetaPath>>,
}

impl PathSet {
    pub fn new(endpoint_ty: u16) -> Self {
        Self {
            endpoint_ty,
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, paths: Vec<MetaPath>) {
        for p in paths {
            let a = p.nodes[0];
            let b = *p.nodes.last().unwrap();
            let (key, path) = if a <= b {
                ((a, b), p)
            } else {
                ((b, a), p.reversed())
            };
            self.map.entry(key).or_default().push(path);
        }
    }

    /// Number of endpoint pairs with at least one path.
    pub fn num_pairs(&self) -> usize {
        self.map.len()
    }

    pub fn total_paths(&self) -> usize {
        self.map.values().map(|v| v.len()).sum()
    }

    /// Canonical (a < b) pair keys in order.
    pub fn pairs(&self) -> impl Iterator<Item = (NodeRef, NodeRef)> + '_ {
        self.map.keys().copied()
    }

    pub fn paths_canonical(&self, a: NodeRef, b: NodeRef) -> &[MetaPath] {
        static EMPTY: Vec<MetaPath> = Vec::new();
        self.map.get(&(a, b)).map(|v| v.as_slice()).unwrap_or(&EMPTY)
    }

    /// Paths oriented from `a` to `b`, whichever order is asked for.
    pub fn paths(&self, a: NodeRef, b: NodeRef) -> Vec<MetaPath> {
        if a <= b {
            self.paths_canonical(a, b).to_vec()
        } else {
            self.paths_canonical(b, a)
                .iter()
                .map(|p| p.reversed())
                .collect()
        }
    }

    /// Sort each pair's paths by (length, lexicographic (type-name, id)) and
    /// keep the first `p`. Type indices order identically to type names
    /// because the registry is sorted.
    fn sort_and_truncate(&mut self, p: Option<usize>) {
        for paths in self.map.values_mut() {
            paths.sort_by(|x, y| {
                x.len()
                    .cmp(&y.len())
                    .then_with(|| x.nodes.cmp(&y.nodes))
            });
            paths.dedup();
            if let Some(p) = p {
                paths.truncate(p);
            }
        }
        self.map.retain(|_, v| !v.is_empty());
    }

    /// Line-oriented text serialization: one path per line as
    /// `a<TAB>b<TAB>space-separated typed nodes`.
    pub fn to_text(&self, g: &HeteroGraph) -> String {
        let fmt_node = |n: &NodeRef| format!("{}:{}", g.type_name(n.ty), n.id);
        let mut out = format!("# endpoint_type={}\n", g.type_name(self.endpoint_ty));
        for ((a, b), paths) in &self.map {
            for p in paths {
                let seq: Vec<String> = p.nodes.iter().map(fmt_node).collect();
                out.push_str(&format!(
                    "{}\t{}\t{}\n",
                    fmt_node(a),
                    fmt_node(b),
                    seq.join(" ")
                ));
            }
        }
        out
    }

    pub fn from_text(text: &str, g: &HeteroGraph) -> Result<PathSet> {
        let parse_node = |s: &str, ln: usize| -> Result<NodeRef> {
            let (ty, id) = s.split_once(':').ok_or_else(|| AmrError::Parse {
                file: "<pathset>".into(),
                line: ln,
                detail: format!("bad node '{s}'"),
            })?;
            let ty = g.type_index(ty).ok_or_else(|| AmrError::Parse {
                file: "<pathset>".into(),
                line: ln,
                detail: format!("unknown type '{ty}'"),
            })?;
            let id: u32 = id.parse().map_err(|_| AmrError::Parse {
                file: "<pathset>".into(),
                line: ln,
                detail: format!("bad id '{id}'"),
            })?;
            Ok(NodeRef::new(ty, id))
        };

        let mut endpoint_ty = None;
        let mut set = PathSet::new(0);
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.trim_end();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(name) = rest.trim().strip_prefix("endpoint_type=") {
                    endpoint_ty = g.type_index(name.trim());
                }
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(AmrError::Parse {
                    file: "<pathset>".into(),
                    line: ln,
                    detail: "expected 3 tab-separated fields".into(),
                });
            }
            let a = parse_node(cols[0], ln)?;
            let b = parse_node(cols[1], ln)?;
            let nodes: Result<Vec<NodeRef>> = cols[2]
                .split_whitespace()
                .map(|s| parse_node(s, ln))
                .collect();
            let path = MetaPath { nodes: nodes? };
            set.map.entry((a, b)).or_default().push(path);
        }
        set.endpoint_ty = endpoint_ty
            .ok_or_else(|| AmrError::Schema("pathset text lacks endpoint_type header".into()))?;
        Ok(set)
    }
}

/// Pre-truncation discovery statistics.
#[derive(Clone, Copy, Debug, Default)]
pub struct WalkStats {
    pub pairs: usize,
    pub paths_kept: usize,
    /// Endpoints participating in at least one pair.
    pub pair_bearing_endpoints: usize,
    /// Mean kept paths per pair-bearing endpoint.
    pub mean_paths_per_endpoint: f64,
}

fn walk_stats(set: &PathSet) -> WalkStats {
    let mut endpoints = BTreeSet::new();
    let mut per_endpoint: HashMap<NodeRef, usize> = HashMap::new();
    for ((a, b), paths) in &set.map {
        endpoints.insert(*a);
        endpoints.insert(*b);
        *per_endpoint.entry(*a).or_default() += paths.len();
        *per_endpoint.entry(*b).or_default() += paths.len();
    }
    let total: usize = per_endpoint.values().sum();
    WalkStats {
        pairs: set.num_pairs(),
        paths_kept: set.total_paths(),
        pair_bearing_endpoints: endpoints.len(),
        mean_paths_per_endpoint: if endpoints.is_empty() {
            0.0
        } else {
            total as f64 / endpoints.len() as f64
        },
    }
}

/// Simple partial paths from one endpoint, grouped by hop count.
/// `levels[t]` holds every node-simple walk of exactly `t` hops.
fn bfs_partials(g: &HeteroGraph, start: NodeRef, max_hops: usize) -> Vec<Vec<Vec<NodeRef>>> {
    let mut levels: Vec<Vec<Vec<NodeRef>>> = vec![vec![vec![start]]];
    for t in 0..max_hops {
        let mut next = Vec::new();
        for partial in &levels[t] {
            let tip = *partial.last().unwrap();
            for nb in g.neighbors(tip) {
                if partial.contains(&nb) {
                    continue;
                }
                let mut ext = partial.clone();
                ext.push(nb);
                next.push(ext);
            }
        }
        levels.push(next);
    }
    levels
}

/// Bi-directional walk: discover metapaths between every unordered pair of
/// `endpoint_ty` nodes. `p = None` keeps all paths.
pub fn biwalk(
    g: &HeteroGraph,
    endpoint_ty: u16,
    l_max: usize,
    p: Option<usize>,
) -> Result<(PathSet, WalkStats)> {
    if l_max < 3 {
        return Err(AmrError::Contract(format!("L_max {l_max} < 3")));
    }
    if endpoint_ty as usize >= g.num_types() {
        return Err(AmrError::Schema(format!(
            "endpoint type index {endpoint_ty} not in graph"
        )));
    }
    let n = g.node_count(endpoint_ty);
    let mut set = PathSet::new(endpoint_ty);
    if n == 0 {
        return Ok((set, WalkStats::default()));
    }

    let fwd_hops = l_max / 2; // ceil((l_max - 1) / 2)
    let bwd_hops = (l_max - 1) / 2; // floor((l_max - 1) / 2)

    // frontier expansion from every endpoint, in parallel, merged in id order
    let partials: Vec<Vec<Vec<Vec<NodeRef>>>> = (0..n)
        .into_par_iter()
        .map(|id| bfs_partials(g, NodeRef::new(endpoint_ty, id), fwd_hops))
        .collect();

    // meeting index: node -> + (endpoint id, hops) entries that reach it
    let mut meet: HashMap<NodeRef, Vec<(u32, usize, usize)>> = HashMap::new();
    for (id, levels) in partials.iter().enumerate() {
        for (hops, level) in levels.iter().enumerate() {
            for (pi, partial) in level.iter().enumerate() {
                meet.entry(*partial.last().unwrap())
                    .or_default()
                    .push((id as u32, hops, pi));
            }
        }
    }

    // join forward and backward partials at each meeting node; the forward
    // side is the smaller endpoint and takes the ceil share of hops
    let mut assembled: BTreeMap<(NodeRef, NodeRef), Vec<MetaPath>> = BTreeMap::new();
    for reachers in meet.values() {
        for &(a, ta, pa) in reachers {
            if ta == 0 || ta > fwd_hops {
                continue;
            }
            for &(b, tb, pb) in reachers {
                if a >= b || tb == 0 || tb > bwd_hops {
                    continue;
                }
                // hop split must be the canonical ceil/floor partition
                if !(ta == tb || ta == tb + 1) {
                    continue;
                }
                let total_nodes = ta + tb + 1;
                if !(3..=l_max).contains(&total_nodes) {
                    continue;
                }
                let fwd = &partials[a as usize][ta][pa];
                let bwd = &partials[b as usize][tb][pb];
                // node-disjoint except at the meeting node: both partials are
                // simple, so m only ever sits at their tips
                if fwd[..ta].iter().any(|x| bwd.contains(x)) {
                    continue;
                }
                let mut nodes = fwd.clone();
                nodes.extend(bwd[..tb].iter().rev());
                let key = (NodeRef::new(endpoint_ty, a), NodeRef::new(endpoint_ty, b));
                assembled.entry(key).or_default().push(MetaPath { nodes });
            }
        }
    }

    for (_, paths) in assembled {
        set.insert(paths);
    }
    set.sort_and_truncate(p);
    let stats = walk_stats(&set);
    Ok((set, stats))
}

/// Exhaustive depth-first enumeration of all valid paths — a desk-scale
/// oracle, refusing graphs beyond `BRUTE_FORCE_NODE_LIMIT` nodes.
pub const BRUTE_FORCE_NODE_LIMIT: usize = 15;

pub fn brute_force_paths(g: &HeteroGraph, endpoint_ty: u16, l_max: usize) -> Result<PathSet> {
    if l_max < 3 {
        return Err(AmrError::Contract(format!("L_max {l_max} < 3")));
    }
    let total = g.total_nodes();
    if total > BRUTE_FORCE_NODE_LIMIT {
        return Err(AmrError::NodeBudget {
            nodes: total,
            limit: BRUTE_FORCE_NODE_LIMIT,
        });
    }
    let mut set = PathSet::new(endpoint_ty);
    let n = g.node_count(endpoint_ty);
    let mut found = Vec::new();
    for id in 0..n {
        let start = NodeRef::new(endpoint_ty, id);
        let mut stack = vec![start];
        dfs_collect(g, endpoint_ty, l_max, &mut stack, &mut found);
    }
    // every path is found twice (once from each endpoint); keep canonical
    let canonical: BTreeSet<Vec<NodeRef>> = found
        .into_iter()
        .map(|p: MetaPath| {
            let a = p.nodes[0];
            let b = *p.nodes.last().unwrap();
            if a <= b {
                p.nodes
            } else {
                p.reversed().nodes
            }
        })
        .collect();
    set.insert(
        canonical
            .into_iter()
            .map(|nodes| MetaPath { nodes })
            .collect(),
    );
    set.sort_and_truncate(None);
    Ok(set)
}

fn dfs_collect(
    g: &HeteroGraph,
    endpoint_ty: u16,
    l_max: usize,
    stack: &mut Vec<NodeRef>,
    found: &mut Vec<MetaPath>,
) {
    let tip = *stack.last().unwrap();
    for nb in g.neighbors(tip) {
        if stack.contains(&nb) {
            continue;
        }
        stack.push(nb);
        if nb.ty == endpoint_ty && stack.len() >= 3 {
            found.push(MetaPath {
                nodes: stack.clone(),
            });
        }
        if stack.len() < l_max {
            dfs_collect(g, endpoint_ty, l_max, stack, found);
        }
        stack.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn graph(entities: &[(&str, u32)], edges: &[(&str, u32, &str, u32)]) -> HeteroGraph {
        let ents: Vec<(String, u32)> = entities
            .iter()
            .map(|(n, c)| (n.to_string(), *c))
            .collect();
        let mut g = HeteroGraph::new(&ents).unwrap();
        for (ta, a, tb, b) in edges {
            let ia = g.type_index(ta).unwrap();
            let ib = g.type_index(tb).unwrap();
            g.add_edge(ia, *a, ib, *b).unwrap();
        }
        g
    }

    #[test]
    fn triangle_yields_one_path_per_learner_pair() {
        // two learners both watch the same video
        let g = graph(
            &[("learner", 2), ("video", 1)],
            &[("learner", 0, "video", 0), ("learner", 1, "video", 0)],
        );
        let lt = g.type_index("learner").unwrap();
        let (set, _) = biwalk(&g, lt, 5, None).unwrap();
        assert_eq!(set.num_pairs(), 1);
        let a = NodeRef::new(lt, 0);
        let b = NodeRef::new(lt, 1);
        let paths = set.paths(a, b);
        assert_eq!(paths.len(), 1);
        assert_eq!(paths[0].len(), 3);
        let oracle = brute_force_paths(&g, lt, 5).unwrap();
        assert_eq!(set, oracle);
    }

    #[test]
    fn no_inter_type_edges_means_empty_pathset() {
        let g = graph(&[("learner", 3), ("video", 2)], &[]);
        let lt = g.type_index("learner").unwrap();
        let (set, stats) = biwalk(&g, lt, 5, Some(10)).unwrap();
        assert_eq!(set.num_pairs(), 0);
        assert_eq!(stats.paths_kept, 0);
    }

    #[test]
    fn zero_node_endpoint_type_is_empty() {
        let g = graph(&[("learner", 0), ("video", 2)], &[]);
        let lt = g.type_index("learner").unwrap();
        let (set, _) = biwalk(&g, lt, 5, Some(10)).unwrap();
        assert_eq!(set.num_pairs(), 0);
    }

    #[test]
    fn path_graph_learner_kc_learner_kc() {
        // L0 - K0 - L1 - K1: one learner-learner path and one KC-KC path,
        // the latter traversing the middle learner
        let g = graph(
            &[("learner", 2), ("KC", 2)],
            &[
                ("learner", 0, "KC", 0),
                ("KC", 0, "learner", 1),
                ("learner", 1, "KC", 1),
            ],
        );
        let lt = g.type_index("learner").unwrap();
        let kt = g.type_index("KC").unwrap();

        let (ll, _) = biwalk(&g, lt, 5, None).unwrap();
        assert_eq!(ll.total_paths(), 1);
        assert_eq!(ll.paths(NodeRef::new(lt, 0), NodeRef::new(lt, 1))[0].len(), 3);

        let (kk, _) = biwalk(&g, kt, 5, None).unwrap();
        assert_eq!(kk.total_paths(), 1);
        let kk_path = &kk.paths(NodeRef::new(kt, 0), NodeRef::new(kt, 1))[0];
        assert_eq!(kk_path.len(), 3);
        assert_eq!(kk_path.nodes[1], NodeRef::new(lt, 1));

        assert_eq!(ll, brute_force_paths(&g, lt, 5).unwrap());
        assert_eq!(kk, brute_force_paths(&g, kt, 5).unwrap());
    }

    #[test]
    fn brute_force_refuses_large_graphs() {
        let g = graph(&[("learner", 10), ("video", 10)], &[]);
        let lt = g.type_index("learner").unwrap();
        match brute_force_paths(&g, lt, 5) {
            Err(AmrError::NodeBudget { nodes: 20, .. }) => {}
            other => panic!("expected node budget refusal, got {other:?}"),
        }
    }

    pub(crate) fn random_graph(rng: &mut ChaCha8Rng, max_nodes: usize) -> HeteroGraph {
        let n_types = 3;
        let names = ["KC", "learner", "video"];
        loop {
            let mut counts = [0u32; 3];
            for c in counts.iter_mut() {
                *c = rng.random_range(0..=(max_nodes / n_types) as u32 + 1);
            }
            if counts.iter().sum::<u32>() as usize > max_nodes {
                continue;
            }
            let ents: Vec<(String, u32)> = names
                .iter()
                .zip(counts)
                .map(|(n, c)| (n.to_string(), c))
                .collect();
            let mut g = HeteroGraph::new(&ents).unwrap();
            let density = rng.random_range(0.1..0.5);
            for ta in 0..n_types as u16 {
                for tb in ta..n_types as u16 {
                    for a in 0..counts[ta as usize] {
                        for b in 0..counts[tb as usize] {
                            if ta == tb && a >= b {
                                continue;
                            }
                            if rng.random_range(0.0..1.0) < density {
                                g.add_edge(ta, a, tb, b).unwrap();
                            }
                        }
                    }
                }
            }
            return g;
        }
    }

    #[test]
    fn biwalk_matches_brute_force_on_random_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for round in 0..40 {
            let g = random_graph(&mut rng, 12);
            let l_max = rng.random_range(3..=5);
            for ty in 0..g.num_types() as u16 {
                let (walk, _) = biwalk(&g, ty, l_max, None).unwrap();
                let oracle = brute_force_paths(&g, ty, l_max).unwrap();
                assert_eq!(walk, oracle, "round {round} type {ty} l_max {l_max}");
            }
        }
    }

    #[test]
    fn every_returned_path_validates() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let g = random_graph(&mut rng, 12);
            let (set, _) = biwalk(&g, 0, 5, Some(4)).unwrap();
            for (a, b) in set.pairs() {
                for p in set.paths_canonical(a, b) {
                    p.validate(&g, 0, 5).unwrap();
                }
            }
        }
    }

    #[test]
    fn pathset_is_symmetric_under_endpoint_swap() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = random_graph(&mut rng, 12);
        let (set, _) = biwalk(&g, 0, 5, Some(5)).unwrap();
        for (a, b) in set.pairs() {
            let fwd = set.paths(a, b);
            let bwd = set.paths(b, a);
            assert_eq!(fwd.len(), bwd.len());
            for (f, r) in fwd.iter().zip(&bwd) {
                assert_eq!(f.reversed(), *r);
            }
        }
    }

    #[test]
    fn increasing_p_never_drops_paths() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..10 {
            let g = random_graph(&mut rng, 12);
            let (small, _) = biwalk(&g, 0, 5, Some(2)).unwrap();
            let (large, _) = biwalk(&g, 0, 5, Some(6)).unwrap();
            for (a, b) in small.pairs() {
                let s = small.paths_canonical(a, b);
                let l = large.paths_canonical(a, b);
                assert!(s.len() <= l.len());
                assert_eq!(s, &l[..s.len()], "prefix property violated");
            }
        }
    }

    #[test]
    fn pathset_text_roundtrip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let g = random_graph(&mut rng, 12);
        let (set, _) = biwalk(&g, 0, 5, Some(10)).unwrap();
        let text = set.to_text(&g);
        let back = PathSet::from_text(&text, &g).unwrap();
        assert_eq!(set, back);
        assert_eq!(text, back.to_text(&g));
    }
}

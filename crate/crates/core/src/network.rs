//! Follower graphs and their degree and triangle statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Read};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Cohort, Role};

/// Accounts with at least this many followers are treated as popular.
pub const DEFAULT_MAX_FOLLOWERS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("node subset is empty")]
    EmptySubset,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("edge input: {0}")]
    Edges(String),
    #[error("node metadata line {line}: {message}")]
    Nodes { line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeMeta {
    pub id: String,
    #[serde(default)]
    pub role: Role,
    #[serde(default)]
    pub cohort: Cohort,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildReport {
    pub records: u64,
    pub self_loops: u64,
    pub duplicates: u64,
}

/// Immutable directed graph with sorted adjacency in both directions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DirectedGraph {
    ids: Vec<String>,
    index: HashMap<String, u32>,
    meta: Vec<(Role, Cohort)>,
    out: Vec<Vec<u32>>,
    inn: Vec<Vec<u32>>,
    n_edges: u64,
}

/// Builds a graph from `(follower, followed)` records plus declared nodes.
pub fn build_graph<S: AsRef<str>>(records: &[(S, S)], metadata: &[NodeMeta]) -> (DirectedGraph, BuildReport) {
    let mut report = BuildReport {
        records: records.len() as u64,
        ..Default::default()
    };
    let mut names: BTreeSet<&str> = metadata.iter().map(|m| m.id.as_str()).collect();
    for (a, b) in records {
        names.insert(a.as_ref());
        names.insert(b.as_ref());
    }
    let ids: Vec<String> = names.into_iter().map(str::to_string).collect();
    let index: HashMap<String, u32> = ids.iter().enumerate().map(|(i, s)| (s.clone(), i as u32)).collect();
    let mut meta = vec![(Role::Unknown, Cohort::Unlabeled); ids.len()];
    for m in metadata {
        meta[index[&m.id] as usize] = (m.role, m.cohort);
    }

    let mut edges: Vec<(u32, u32)> = Vec::with_capacity(records.len());
    for (a, b) in records {
        let (a, b) = (index[a.as_ref()], index[b.as_ref()]);
        if a == b {
            report.self_loops += 1;
        } else {
            edges.push((a, b));
        }
    }
    edges.sort_unstable();
    let before = edges.len();
    edges.dedup();
    report.duplicates = (before - edges.len()) as u64;

    let n = ids.len();
    let mut out = vec![Vec::new(); n];
    let mut inn = vec![Vec::new(); n];
    for &(a, b) in &edges {
        out[a as usize].push(b);
        inn[b as usize].push(a);
    }
    // edges were sorted by (a, b), so out lists are sorted and in lists too
    let graph = DirectedGraph {
        ids,
        index,
        meta,
        out,
        inn,
        n_edges: edges.len() as u64,
    };
    (graph, report)
}

impl DirectedGraph {
    pub fn n_nodes(&self) -> usize {
        self.ids.len()
    }

    pub fn n_edges(&self) -> u64 {
        self.n_edges
    }

    /// Node ids in ascending order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn in_degree(&self, id: &str) -> Option<u64> {
        self.index.get(id).map(|&i| self.inn[i as usize].len() as u64)
    }

    pub fn out_degree(&self, id: &str) -> Option<u64> {
        self.index.get(id).map(|&i| self.out[i as usize].len() as u64)
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        match (self.index.get(from), self.index.get(to)) {
            (Some(&a), Some(&b)) => self.out[a as usize].binary_search(&b).is_ok(),
            _ => false,
        }
    }

    pub fn role(&self, id: &str) -> Role {
        self.index.get(id).map(|&i| self.meta[i as usize].0).unwrap_or_default()
    }

    pub fn cohort(&self, id: &str) -> Cohort {
        self.index.get(id).map(|&i| self.meta[i as usize].1).unwrap_or_default()
    }

    /// Ids whose metadata matches `pred`, ascending.
    pub fn select(&self, pred: impl Fn(Role, Cohort) -> bool) -> Vec<String> {
        self.ids
            .iter()
            .zip(&self.meta)
            .filter(|(_, (r, c))| pred(*r, *c))
            .map(|(id, _)| id.clone())
            .collect()
    }

    /// Edges as `(follower, followed)` pairs in sorted order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(move |(a, outs)| outs.iter().map(move |&b| (self.ids[a].as_str(), self.ids[b as usize].as_str())))
    }

    /// The subgraph of every edge touching one of `seeds`, keeping node metadata.
    pub fn ego_network(&self, seeds: &[String]) -> DirectedGraph {
        let seed_set: BTreeSet<&str> = seeds.iter().map(String::as_str).collect();
        let records: Vec<(&str, &str)> = self
            .edges()
            .filter(|(a, b)| seed_set.contains(a) || seed_set.contains(b))
            .collect();
        let meta: Vec<NodeMeta> = seeds
            .iter()
            .filter_map(|s| self.index.get(s))
            .map(|&i| NodeMeta {
                id: self.ids[i as usize].clone(),
                role: self.meta[i as usize].0,
                cohort: self.meta[i as usize].1,
            })
            .collect();
        let (mut g, _) = build_graph(&records, &meta);
        for (i, id) in g.ids.iter().enumerate() {
            if let Some(&j) = self.index.get(id) {
                g.meta[i] = self.meta[j as usize];
            }
        }
        g
    }

    fn indices(&self, subset: &[String]) -> Vec<u32> {
        let mut idx: Vec<u32> = subset.iter().filter_map(|s| self.index.get(s).copied()).collect();
        idx.sort_unstable();
        idx.dedup();
        idx
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub avg_in: f64,
    pub avg_out: f64,
    /// `avg_in + avg_out`.
    pub avg_total_degree: f64,
    /// Absent when `avg_out` is zero.
    pub in_out_ratio: Option<f64>,
    pub n_nodes: u64,
    /// Edges with both endpoints in the subset.
    pub n_edges: u64,
}

impl GroupStats {
    /// Ratio rounded to two decimals for tables.
    pub fn ratio_display(&self) -> String {
        format!("{:.2}", self.in_out_ratio.unwrap_or(0.0))
    }
}

/// The in/out ratio as it appears in a two-decimal table.
pub fn ratio_display(avg_in: f64, avg_out: f64) -> String {
    if avg_out == 0.0 {
        "0.00".into()
    } else {
        format!("{:.2}", avg_in / avg_out)
    }
}

/// Degree averages over `subset`, with degrees taken from the whole graph.
/// Ids absent from the graph are ignored.
pub fn group_stats(graph: &DirectedGraph, subset: &[String]) -> Result<GroupStats, NetworkError> {
    let idx = graph.indices(subset);
    if idx.is_empty() {
        return Err(NetworkError::EmptySubset);
    }
    let members: BTreeSet<u32> = idx.iter().copied().collect();
    let (mut sum_in, mut sum_out, mut inner) = (0u64, 0u64, 0u64);
    for &i in &idx {
        sum_in += graph.inn[i as usize].len() as u64;
        sum_out += graph.out[i as usize].len() as u64;
        inner += graph.out[i as usize].iter().filter(|j| members.contains(j)).count() as u64;
    }
    let n = idx.len() as f64;
    let (avg_in, avg_out) = (sum_in as f64 / n, sum_out as f64 / n);
    Ok(GroupStats {
        avg_in,
        avg_out,
        avg_total_degree: avg_in + avg_out,
        in_out_ratio: (sum_out > 0).then(|| sum_in as f64 / sum_out as f64),
        n_nodes: idx.len() as u64,
        n_edges: inner,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriangleCounts {
    pub total: u64,
    /// Cycles through each node, keyed by id; nodes on no cycle are omitted.
    pub per_node: BTreeMap<String, u64>,
}

/// Counts directed 3-cycles `a→b→c→a`.
///
/// Each cycle is found once, from its smallest node `u`: for every
/// `u→v` and `v→w` with `v, w > u`, the cycle closes when `w→u`. The closing
/// step is a merge of `out(v)` with `in(u)`.
pub fn triangle_count(graph: &DirectedGraph) -> TriangleCounts {
    let n = graph.n_nodes();
    let (total, per) = (0..n)
        .into_par_iter()
        .fold(
            || (0u64, vec![0u64; n]),
            |(mut total, mut per), u| {
                let uu = u as u32;
                let into_u = &graph.inn[u];
                let from = into_u.partition_point(|&w| w <= uu);
                for &v in graph.out[u].iter().filter(|&&v| v > uu) {
                    let out_v = &graph.out[v as usize];
                    let start = out_v.partition_point(|&w| w <= uu);
                    for w in sorted_intersection(&out_v[start..], &into_u[from..]) {
                        total += 1;
                        per[u] += 1;
                        per[v as usize] += 1;
                        per[w as usize] += 1;
                    }
                }
                (total, per)
            },
        )
        .reduce(
            || (0, vec![0; n]),
            |(t1, mut p1), (t2, p2)| {
                for (a, b) in p1.iter_mut().zip(p2) {
                    *a += b;
                }
                (t1 + t2, p1)
            },
        );
    TriangleCounts {
        total,
        per_node: per
            .into_iter()
            .enumerate()
            .filter(|(_, c)| *c > 0)
            .map(|(i, c)| (graph.ids[i].clone(), c))
            .collect(),
    }
}

fn sorted_intersection<'a>(a: &'a [u32], b: &'a [u32]) -> impl Iterator<Item = u32> + 'a {
    let (mut i, mut j) = (0, 0);
    std::iter::from_fn(move || {
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    let x = a[i];
                    i += 1;
                    j += 1;
                    return Some(x);
                }
            }
        }
        None
    })
}

/// Triangles of the undirected graph whose edges are the mutual follows.
pub fn mutual_triangle_count(graph: &DirectedGraph) -> u64 {
    let n = graph.n_nodes();
    let mutual: Vec<Vec<u32>> = (0..n)
        .map(|u| sorted_intersection(&graph.out[u], &graph.inn[u]).collect())
        .collect();
    (0..n)
        .into_par_iter()
        .map(|u| {
            let uu = u as u32;
            let nu = &mutual[u];
            let higher = &nu[nu.partition_point(|&v| v <= uu)..];
            higher
                .iter()
                .map(|&v| {
                    let nv = &mutual[v as usize];
                    let above_v = &nv[nv.partition_point(|&w| w <= v)..];
                    sorted_intersection(above_v, higher).count() as u64
                })
                .sum::<u64>()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAccount {
    pub id: String,
    pub in_degree: u64,
    pub role: Role,
}

impl RankedAccount {
    /// `name(role)`, or the bare name for accounts without a role.
    pub fn render(&self) -> String {
        match self.role.label() {
            Some(l) => format!("{}({l})", self.id),
            None => self.id.clone(),
        }
    }
}

/// The `k` members of `subset` with the most followers, ties by id.
pub fn top_k_in_degree(graph: &DirectedGraph, subset: &[String], k: usize) -> Result<Vec<RankedAccount>, NetworkError> {
    if k == 0 {
        return Err(NetworkError::ZeroK);
    }
    let mut ranked: Vec<RankedAccount> = graph
        .indices(subset)
        .into_iter()
        .map(|i| RankedAccount {
            id: graph.ids[i as usize].clone(),
            in_degree: graph.inn[i as usize].len() as u64,
            role: graph.meta[i as usize].0,
        })
        .collect();
    ranked.sort_by(|a, b| b.in_degree.cmp(&a.in_degree).then_with(|| a.id.cmp(&b.id)));
    ranked.truncate(k);
    Ok(ranked)
}

/// The node on the most 3-cycles, ties by id; `None` for a triangle-free graph.
pub fn hub_by_triangles(graph: &DirectedGraph) -> Option<(String, u64)> {
    hub_from_counts(&triangle_count(graph))
}

pub fn hub_from_counts(counts: &TriangleCounts) -> Option<(String, u64)> {
    counts
        .per_node
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
        .map(|(id, c)| (id.clone(), *c))
}

/// Members of `subset` with strictly fewer than `max_followers` followers.
pub fn regular_filter(graph: &DirectedGraph, subset: &[String], max_followers: u64) -> Vec<String> {
    graph
        .indices(subset)
        .into_iter()
        .filter(|&i| (graph.inn[i as usize].len() as u64) < max_followers)
        .map(|i| graph.ids[i as usize].clone())
        .collect()
}

/// Reads `follower_id,followed_id` rows; a header row with those names is optional.
pub fn read_edges_csv<R: Read>(reader: R) -> Result<Vec<(String, String)>, NetworkError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| NetworkError::Edges(e.to_string()))?;
        if rec.len() != 2 {
            return Err(NetworkError::Edges(format!("row {} has {} fields", i + 1, rec.len())));
        }
        if i == 0 && &rec[0] == "follower_id" && &rec[1] == "followed_id" {
            continue;
        }
        if rec[0].is_empty() || rec[1].is_empty() {
            return Err(NetworkError::Edges(format!("row {} has an empty id", i + 1)));
        }
        out.push((rec[0].to_string(), rec[1].to_string()));
    }
    Ok(out)
}

pub fn write_edges_csv<W: std::io::Write>(w: W, edges: &[(String, String)]) -> std::io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["follower_id", "followed_id"])?;
    for (a, b) in edges {
        wtr.write_record([a, b])?;
    }
    wtr.flush()
}

pub fn read_nodes_jsonl<R: BufRead>(reader: R) -> Result<Vec<NodeMeta>, NetworkError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let err = |message: String| NetworkError::Nodes { line: idx + 1, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSize {
    pub nodes: u64,
    pub edges: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub stats: Option<GroupStats>,
    pub ratio_display: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortNetwork {
    pub size: GraphSize,
    pub triangles: u64,
    pub mutual_triangles: u64,
    pub hub: Option<String>,
    pub hub_triangles: u64,
    pub top_in_degree: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkReport {
    pub drug: CohortNetwork,
    pub nondrug: CohortNetwork,
    pub groups: Vec<GroupRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub top_k: usize,
    pub max_followers: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            top_k: 10,
            max_followers: DEFAULT_MAX_FOLLOWERS,
        }
    }
}

fn cohort_network(g: &DirectedGraph, members: &[String], top_k: usize) -> CohortNetwork {
    let tri = triangle_count(g);
    let hub = hub_from_counts(&tri);
    CohortNetwork {
        size: GraphSize {
            nodes: g.n_nodes() as u64,
            edges: g.n_edges(),
        },
        triangles: tri.total,
        mutual_triangles: mutual_triangle_count(g),
        hub_triangles: hub.as_ref().map_or(0, |h| h.1),
        hub: hub.map(|h| h.0),
        top_in_degree: top_k_in_degree(g, members, top_k.max(1))
            .unwrap_or_default()
            .iter()
            .map(RankedAccount::render)
            .collect(),
    }
}

fn row(group: &str, g: &DirectedGraph, subset: &[String]) -> GroupRow {
    let stats = group_stats(g, subset).ok();
    GroupRow {
        group: group.to_string(),
        ratio_display: stats.as_ref().map(GroupStats::ratio_display),
        stats,
    }
}

/// Splits the follow graph into the two cohort networks and tabulates them.
///
/// A cohort's network holds every edge touching one of its accounts. Group
/// rows cover all cohort accounts, the regular (not popular) ones, and
/// dealer-labeled accounts; empty groups have no stats.
pub fn network_report(graph: &DirectedGraph, config: NetworkConfig) -> NetworkReport {
    let drug_ids = graph.select(|_, c| c == Cohort::Drug);
    let nondrug_ids = graph.select(|_, c| c == Cohort::Nondrug);
    let dealers = graph.select(|r, _| r == Role::Dealer);
    let drug_net = graph.ego_network(&drug_ids);
    let nondrug_net = graph.ego_network(&nondrug_ids);
    let drug_users: Vec<String> = drug_ids.iter().filter(|id| graph.role(id) != Role::Dealer).cloned().collect();
    let groups = vec![
        row("drug users", &drug_net, &drug_users),
        row("non-drug users", &nondrug_net, &nondrug_ids),
        row(
            "regular non-drug accounts",
            &nondrug_net,
            &regular_filter(&nondrug_net, &nondrug_ids, config.max_followers),
        ),
        row(
            "regular drug accounts",
            &drug_net,
            &regular_filter(&drug_net, &drug_users, config.max_followers),
        ),
        row("drug dealers", graph, &dealers),
    ];
    let everyone = |g: &DirectedGraph| g.ids().to_vec();
    NetworkReport {
        drug: cohort_network(&drug_net, &everyone(&drug_net), config.top_k),
        nondrug: cohort_network(&nondrug_net, &everyone(&nondrug_net), config.top_k),
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(edges: &[(&str, &str)]) -> DirectedGraph {
        build_graph(edges, &[]).0
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn build_dedups_and_drops_loops() {
        let (graph, r) = build_graph(&[("a", "b"), ("a", "b"), ("b", "a"), ("c", "c")], &[]);
        assert_eq!(graph.n_edges(), 2);
        assert_eq!(graph.n_nodes(), 3);
        assert_eq!(r, BuildReport { records: 4, self_loops: 1, duplicates: 1 });
        assert!(graph.has_edge("a", "b") && graph.has_edge("b", "a"));
    }

    #[test]
    fn metadata_only_nodes_are_isolated() {
        let meta: Vec<NodeMeta> = ["x", "y", "z"]
            .iter()
            .map(|id| NodeMeta { id: id.to_string(), role: Role::User, cohort: Cohort::Drug })
            .collect();
        let (graph, _) = build_graph::<&str>(&[], &meta);
        assert_eq!(graph.n_nodes(), 3);
        assert_eq!(graph.n_edges(), 0);
        assert_eq!(graph.in_degree("y"), Some(0));
    }

    #[test]
    fn fewer_edges_than_nodes_is_fine() {
        let edges: Vec<(String, String)> = (0..10).map(|i| ("hub".to_string(), format!("n{i}"))).collect();
        let (graph, _) = build_graph(&edges, &[]);
        assert!(graph.n_edges() < graph.n_nodes() as u64 + 1);
    }

    #[test]
    fn table_ratios() {
        for (i, o, want) in [
            (539.88, 799.48, "0.68"),
            (554.17, 476.10, "1.16"),
            (467.33, 483.07, "0.97"),
            (495.15, 502.94, "0.98"),
            (529.36, 463.31, "1.14"),
        ] {
            assert_eq!(ratio_display(i, o), want);
        }
    }

    #[test]
    fn single_out_edge_stats() {
        let graph = g(&[("a", "b")]);
        let s = group_stats(&graph, &ids(&["a"])).unwrap();
        assert_eq!((s.avg_in, s.avg_out), (0.0, 1.0));
        assert_eq!(s.in_out_ratio, Some(0.0));
        assert_eq!(s.ratio_display(), "0.00");
        let s = group_stats(&graph, &ids(&["b"])).unwrap();
        assert_eq!(s.in_out_ratio, None);
        assert_eq!(group_stats(&graph, &[]), Err(NetworkError::EmptySubset));
    }

    #[test]
    fn whole_graph_in_equals_out() {
        let graph = g(&[("a", "b"), ("b", "c"), ("c", "a"), ("a", "c"), ("d", "a")]);
        let s = group_stats(&graph, graph.ids()).unwrap();
        assert_eq!(s.avg_in, s.avg_out);
        assert_eq!(s.avg_in, 5.0 / 4.0);
        assert_eq!(s.n_edges, 5);
    }

    #[test]
    fn triangle_examples() {
        assert_eq!(triangle_count(&g(&[("a", "b"), ("b", "c"), ("c", "a")])).total, 1);
        let sym = g(&[("a", "b"), ("b", "a"), ("b", "c"), ("c", "b"), ("a", "c"), ("c", "a")]);
        let t = triangle_count(&sym);
        assert_eq!(t.total, 2);
        assert_eq!(t.per_node["a"], 2);
        assert_eq!(mutual_triangle_count(&sym), 1);
        assert_eq!(triangle_count(&g(&[("a", "b"), ("b", "c"), ("a", "c")])).total, 0);
    }

    #[test]
    fn hub_examples() {
        let cyc = triangle_count(&g(&[("b", "c"), ("c", "a"), ("a", "b")]));
        assert_eq!(hub_from_counts(&cyc), Some(("a".to_string(), 1)));
        let mut edges = Vec::new();
        for clique in [&["p", "q", "r", "s"][..], &["a", "b", "c"][..]] {
            for x in clique {
                for y in clique {
                    if x != y {
                        edges.push((*x, *y));
                    }
                }
            }
        }
        let hub = hub_by_triangles(&g(&edges)).unwrap();
        assert!(["p", "q", "r", "s"].contains(&hub.0.as_str()));
        // each node of a symmetric 4-clique sits on 3 triples x 2 orientations
        assert_eq!(hub, ("p".to_string(), 6));
        assert_eq!(hub_by_triangles(&g(&[("a", "b")])), None);
    }

    #[test]
    fn top_k_star() {
        let graph = g(&[("s1", "c"), ("s2", "c"), ("s3", "c"), ("s4", "c"), ("s5", "c"), ("c", "s1")]);
        let top = top_k_in_degree(&graph, graph.ids(), 3).unwrap();
        assert_eq!(top[0].id, "c");
        assert_eq!(top[1].id, "s1");
        assert_eq!(top[2].id, "s2");
        assert_eq!(top_k_in_degree(&graph, graph.ids(), 0), Err(NetworkError::ZeroK));
    }

    #[test]
    fn render_with_role() {
        let a = RankedAccount { id: "shop".into(), in_degree: 3, role: Role::Dealer };
        assert_eq!(a.render(), "shop(dealer)");
        let b = RankedAccount { role: Role::Page, ..a.clone() };
        assert_eq!(b.render(), "shop(public page)");
        let c = RankedAccount { role: Role::Unknown, ..a };
        assert_eq!(c.render(), "shop");
    }

    #[test]
    fn regular_filter_is_strict() {
        let mut edges: Vec<(String, String)> = (0..999).map(|i| (format!("f{i}"), "keep".to_string())).collect();
        edges.extend((0..1000).map(|i| (format!("f{i}"), "drop".to_string())));
        let (graph, _) = build_graph(&edges, &[]);
        assert_eq!(regular_filter(&graph, &ids(&["keep", "drop"]), DEFAULT_MAX_FOLLOWERS), ids(&["keep"]));
        assert!(regular_filter(&graph, &[], DEFAULT_MAX_FOLLOWERS).is_empty());
    }

    #[test]
    fn csv_round_trip() {
        let with_header = "follower_id,followed_id\na,b\nb,c\n";
        let edges = read_edges_csv(with_header.as_bytes()).unwrap();
        assert_eq!(edges, vec![("a".into(), "b".into()), ("b".into(), "c".into())]);
        assert_eq!(read_edges_csv("a,b\nb,c\n".as_bytes()).unwrap(), edges);
        let mut buf = Vec::new();
        write_edges_csv(&mut buf, &edges).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), with_header);
        assert!(read_edges_csv("a,b,c\n".as_bytes()).is_err());
    }

    #[test]
    fn nodes_jsonl() {
        let data = "{\"id\":\"a\",\"role\":\"dealer\",\"cohort\":\"drug\"}\n{\"id\":\"b\"}\n";
        let nodes = read_nodes_jsonl(data.as_bytes()).unwrap();
        assert_eq!(nodes[0].role, Role::Dealer);
        assert_eq!(nodes[1].cohort, Cohort::Unlabeled);
    }

    #[test]
    fn report_splits_cohorts() {
        let meta = vec![
            NodeMeta { id: "d1".into(), role: Role::User, cohort: Cohort::Drug },
            NodeMeta { id: "d2".into(), role: Role::Dealer, cohort: Cohort::Drug },
            NodeMeta { id: "n1".into(), role: Role::User, cohort: Cohort::Nondrug },
        ];
        let (graph, _) = build_graph(&[("d1", "d2"), ("d2", "p"), ("p", "d1"), ("n1", "q"), ("q", "r")], &meta);
        let r = network_report(&graph, NetworkConfig::default());
        assert_eq!(r.drug.size, GraphSize { nodes: 3, edges: 3 });
        assert_eq!(r.drug.triangles, 1);
        assert_eq!(r.nondrug.size, GraphSize { nodes: 2, edges: 1 });
        assert_eq!(r.groups.len(), 5);
        assert_eq!(r.groups[0].stats.as_ref().unwrap().n_nodes, 1);
        assert_eq!(r.groups[4].stats.as_ref().unwrap().avg_out, 1.0);
    }
}

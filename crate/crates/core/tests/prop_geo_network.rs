use std::collections::BTreeSet;

use hashscope_core::corpus::{Geo, Post};
use hashscope_core::geospatial::{cluster_hotspots, dedup, haversine, plan_cover, BoundingBox, ClusterConfig, GeoPoint};
use hashscope_core::network::{build_graph, group_stats, hub_by_triangles, top_k_in_degree, triangle_count, NodeMeta};
use proptest::prelude::*;

fn geo() -> impl Strategy<Value = Geo> {
    (-89.0f64..89.0, -179.0f64..179.0).prop_map(|(a, b)| Geo::new(a, b))
}

fn digraph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..30).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..n * 4)))
}

fn named(edges: &[(usize, usize)]) -> Vec<(String, String)> {
    edges.iter().map(|&(a, b)| (format!("n{a:02}"), format!("n{b:02}"))).collect()
}

/// Directed 3-cycles by scanning every ordered triple with a < b, a < c.
fn cycle_oracle(n: usize, edges: &[(usize, usize)]) -> u64 {
    let mut adj = vec![vec![false; n]; n];
    for &(a, b) in edges {
        if a != b {
            adj[a][b] = true;
        }
    }
    let mut count = 0;
    for a in 0..n {
        for b in a + 1..n {
            for c in a + 1..n {
                if b != c && adj[a][b] && adj[b][c] && adj[c][a] {
                    count += 1;
                }
            }
        }
    }
    count
}

fn shuffled<T: Clone>(v: &[T], seed: u64) -> Vec<T> {
    let mut out = v.to_vec();
    let mut s = seed;
    for i in (1..out.len()).rev() {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        out.swap(i, (s >> 33) as usize % (i + 1));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn haversine_is_a_distance(a in geo(), b in geo()) {
        let d = haversine(a, b);
        prop_assert!(d >= 0.0);
        prop_assert_eq!(d, haversine(b, a));
        prop_assert_eq!(haversine(a, a), 0.0);
        if a != b {
            prop_assert!(d > 0.0);
        }
    }

    #[test]
    fn dedup_is_idempotent(groups in prop::collection::vec(prop::collection::vec(0u8..30, 0..10), 0..6)) {
        let mk = |i: u8| Post {
            media_id: format!("m{i:02}"),
            user_id: "u".into(),
            username: "u".into(),
            created_at: i as i64,
            hashtags: vec![],
            caption: String::new(),
            geo: None,
            media_ref: None,
        };
        let results: Vec<Vec<Post>> = groups.iter().map(|g| g.iter().map(|&i| mk(i)).collect()).collect();
        let input: BTreeSet<String> = results.iter().flatten().map(|p| p.media_id.clone()).collect();
        let (once, report) = dedup(results.clone());
        let ids: Vec<&String> = once.iter().map(|p| &p.media_id).collect();
        let unique: BTreeSet<&String> = ids.iter().copied().collect();
        prop_assert_eq!(unique.len(), ids.len());
        prop_assert!(unique.iter().all(|id| input.contains(*id)));
        prop_assert_eq!(report.kept as usize, input.len());
        let (twice, _) = dedup(vec![once.clone()]);
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn clustering_ignores_input_order(pts in prop::collection::vec((0.0f64..0.01, 0.0f64..0.01), 0..80), seed in any::<u64>(), min_points in 2usize..6) {
        let points: Vec<GeoPoint> = pts.iter().enumerate().map(|(i, &(a, b))| GeoPoint::new(format!("p{i:03}"), 34.0 + a, -118.0 + b)).collect();
        let cfg = ClusterConfig { eps_m: 150.0, min_points };
        let a = cluster_hotspots(&points, cfg).unwrap();
        let b = cluster_hotspots(&shuffled(&points, seed), cfg).unwrap();
        prop_assert_eq!(&a, &b);
        for c in &a {
            prop_assert!(c.members.len() >= min_points);
        }
    }

    #[test]
    fn directed_triangles_match_oracle((n, edges) in digraph(), seed in any::<u64>()) {
        let (g, _) = build_graph(&named(&edges), &[] as &[NodeMeta]);
        let counts = triangle_count(&g);
        prop_assert_eq!(counts.total, cycle_oracle(n, &edges));
        // each cycle touches three nodes
        prop_assert_eq!(counts.per_node.values().sum::<u64>(), 3 * counts.total);
        // relabeling nodes does not change the count
        let perm = shuffled(&(0..n).collect::<Vec<_>>(), seed);
        let relabeled: Vec<(usize, usize)> = edges.iter().map(|&(a, b)| (perm[a], perm[b])).collect();
        let (g2, _) = build_graph(&named(&relabeled), &[] as &[NodeMeta]);
        prop_assert_eq!(triangle_count(&g2).total, counts.total);
    }

    #[test]
    fn degree_sums_and_full_graph_balance((_n, edges) in digraph(), seed in any::<u64>()) {
        let list = named(&edges);
        let (g, report) = build_graph(&list, &[] as &[NodeMeta]);
        let ids: Vec<String> = g.ids().to_vec();
        let ins: u64 = ids.iter().map(|i| g.in_degree(i).unwrap()).sum();
        let outs: u64 = ids.iter().map(|i| g.out_degree(i).unwrap()).sum();
        prop_assert_eq!(ins, g.n_edges());
        prop_assert_eq!(outs, g.n_edges());
        prop_assert_eq!(report.records, list.len() as u64);
        prop_assert_eq!(report.records, g.n_edges() + report.self_loops + report.duplicates);
        if !ids.is_empty() {
            let s = group_stats(&g, &ids).unwrap();
            prop_assert_eq!(s.avg_in, s.avg_out);
        }
        // input order does not change rankings
        let (g2, _) = build_graph(&shuffled(&list, seed), &[] as &[NodeMeta]);
        if !ids.is_empty() {
            prop_assert_eq!(top_k_in_degree(&g, &ids, 5).unwrap(), top_k_in_degree(&g2, &ids, 5).unwrap());
        }
        prop_assert_eq!(hub_by_triangles(&g), hub_by_triangles(&g2));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cover_plans_leave_no_gaps(lat in -70.0f64..70.0, lon in -170.0f64..170.0, w in 0.0f64..0.3, h in 0.0f64..0.3, radius in 200.0f64..5000.0, seed in any::<u64>()) {
        let region = BoundingBox::new(lat, lon, lat + h, lon + w);
        let plan = plan_cover(region, radius, (0, 3600)).unwrap();
        prop_assert!(!plan.circles.is_empty());
        prop_assert_eq!(plan.uncovered_samples(2_000, seed), 0);
    }
}

mod common;

use nalgebra::Vector3;
use rand::Rng;
use wiclosure::candidates::{brute_force_candidate_set, GateParams};
use wiclosure::lie::max_eigenvalue_sym3;
use wiclosure::overlap::{
    buffer_distance, find_overlap_clusters, kmeans_objective, partition, sigma_upper_bound, SearchParams,
};
use wiclosure::pcm::{max_clique, pairwise_consistent, Gamma};
use wiclosure::pipeline::{run, RunOptions, Stage};
use wiclosure::pose_graph::{hypotheses, solve_mle, RouteTables, SolverParams};
use wiclosure::sim::{synthesize, ScenarioConfig};

use common::*;

fn cloud(r: &mut rand_chacha::ChaCha8Rng, n: usize, center: Vector3<f64>, spread: f64) -> Vec<Vector3<f64>> {
    (0..n)
        .map(|_| center + Vector3::new(r.random_range(-spread..spread), r.random_range(-spread..spread), 0.0))
        .collect()
}

#[test]
fn small_graphs_match_enumeration() {
    let mut r = rng(11);
    for _ in 0..200 {
        let n = r.random_range(1..=12);
        let density = r.random_range(0.1..1.0);
        let g = random_graph(&mut r, n, density);
        assert_eq!(max_clique(&g), exhaustive_clique(&g));
    }
}

#[test]
fn noise_free_direct_paths_close_exactly() {
    let mut c = ScenarioConfig::hardware_analog(4);
    c.noise_free = true;
    let d = synthesize(&c).unwrap();
    let (mut ta, mut tb) = d.trajectories().unwrap();
    solve_mle(&mut ta, &SolverParams::default()).unwrap();
    solve_mle(&mut tb, &SolverParams::default()).unwrap();
    let hs = hypotheses(&d.measurements, &ta, &tb, &c.link_prior).unwrap();
    let direct: Vec<_> = hs
        .iter()
        .filter(|h| d.measurements[h.measurement as usize].truth_direct_index == Some(h.mode))
        .collect();
    assert_eq!(direct.len(), 3);
    for i in 0..direct.len() {
        for j in i + 1..direct.len() {
            let res = pairwise_consistent(direct[i], direct[j], &ta, &tb, &Gamma::default()).unwrap();
            assert!(res.d_pcm < 1e-6, "d_pcm {}", res.d_pcm);
            assert!(res.consistent);
        }
    }
}

#[test]
fn kmeans_beats_random_partitions() {
    let mut r = rng(12);
    let mut points = cloud(&mut r, 60, Vector3::zeros(), 5.0);
    points.extend(cloud(&mut r, 60, Vector3::new(40.0, 0.0, 0.0), 5.0));
    let members: Vec<usize> = (0..points.len()).collect();
    let groups = partition(&points, &members, 2);
    let best = kmeans_objective(&points, &groups);
    for _ in 0..500 {
        let mut random = vec![Vec::new(), Vec::new()];
        for &i in &members {
            random[r.random_range(0..2)].push(i);
        }
        assert!(best <= kmeans_objective(&points, &random) + 1e-9);
    }
    let mut sorted: Vec<usize> = groups.concat();
    sorted.sort_unstable();
    assert_eq!(sorted, members);
}

#[test]
fn clusters_keep_every_pair_within_buffer() {
    let mut r = rng(13);
    for trial in 0..20 {
        let alpha = cloud(&mut r, 300, Vector3::zeros(), 60.0);
        let beta = cloud(&mut r, 300, Vector3::new(30.0, 20.0, 0.0), 60.0);
        let params = SearchParams {
            sigma_ub: r.random_range(0.5..5.0),
            sensor_range: 5.0,
            min_cluster: 8,
            ..SearchParams::default()
        };
        let buffer = buffer_distance(&params);
        let clusters = find_overlap_clusters(&alpha, &beta, &params);
        let mut covered = std::collections::BTreeSet::new();
        for c in &clusters {
            for &p in &c.alpha {
                for &k in &c.beta {
                    assert!(covered.insert((p, k)), "pair ({p}, {k}) in two leaves, trial {trial}");
                }
            }
        }
        for (p, a) in alpha.iter().enumerate() {
            for (k, b) in beta.iter().enumerate() {
                if (a - b).norm() <= buffer {
                    assert!(covered.contains(&(p, k)), "pair ({p}, {k}) lost, trial {trial}");
                }
            }
        }
        assert!(covered.len() < alpha.len() * beta.len());
    }
}

#[test]
fn wider_buffer_keeps_more_pairs() {
    let mut r = rng(14);
    let alpha = cloud(&mut r, 200, Vector3::zeros(), 80.0);
    let beta = cloud(&mut r, 200, Vector3::new(50.0, 0.0, 0.0), 80.0);
    let count = |sigma_ub: f64| {
        let params = SearchParams { sigma_ub, ..SearchParams::default() };
        let within = |d: f64| d <= buffer_distance(&params);
        let kept: usize = find_overlap_clusters(&alpha, &beta, &params).iter().map(|c| c.pair_count()).sum();
        let needed = alpha
            .iter()
            .flat_map(|a| beta.iter().map(move |b| (a - b).norm()))
            .filter(|&d| within(d))
            .count();
        assert!(kept >= needed);
        needed
    };
    let mut last = 0;
    for s in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let n = count(s);
        assert!(n >= last);
        last = n;
    }
}

#[test]
fn gated_set_grows_with_threshold() {
    let c = ScenarioConfig::crossing(21, 250, 250);
    let a = run(&c, &RunOptions::default()).unwrap();
    let s = a.solved.as_ref().unwrap();
    let tables = RouteTables::new(&s.alpha, &s.beta, a.shared.as_ref().unwrap()).unwrap();
    let realization = &a.pcm.as_ref().unwrap().realization;
    let mut last: Vec<(usize, usize)> = Vec::new();
    for d in [1.0, 2.0, 2.8, 4.0] {
        let params = GateParams { d_threshold: d, sensor_range: c.sensor_range };
        let set = brute_force_candidate_set(&tables, realization, &params).unwrap().index_pairs();
        assert!(last.iter().all(|p| set.binary_search(p).is_ok()));
        last = set;
    }
    assert!(!last.is_empty());
}

#[test]
fn gated_set_depends_on_realization() {
    let c = ScenarioConfig::crossing(22, 300, 300);
    let a = run(&c, &RunOptions::default()).unwrap();
    let s = a.solved.as_ref().unwrap();
    let shared = a.shared.as_ref().unwrap();
    assert!(shared.links.len() >= 2);
    let full = a.candidates.as_ref().unwrap().index_pairs();
    let mut one = shared.clone();
    one.links.truncate(1);
    one.anchor = one.links[0].clone();
    let tables = RouteTables::new(&s.alpha, &s.beta, &one).unwrap();
    let realization = [(one.links[0].measurement, one.links[0].mode)].into_iter().collect();
    let params = GateParams { d_threshold: c.pipeline.d_threshold, sensor_range: c.sensor_range };
    let single = brute_force_candidate_set(&tables, &realization, &params).unwrap().index_pairs();
    assert_ne!(single, full);
}

#[test]
fn sigma_bound_covers_all_pairs() {
    let c = ScenarioConfig::crossing(23, 220, 260);
    let a = run(&c, &RunOptions { stages: vec![Stage::Simulate, Stage::Solve, Stage::Pcm, Stage::Prune], ..Default::default() }).unwrap();
    let s = a.solved.as_ref().unwrap();
    let tables = RouteTables::new(&s.alpha, &s.beta, a.shared.as_ref().unwrap()).unwrap();
    let bound = sigma_upper_bound(&s.alpha, &s.beta, &tables).unwrap();
    assert!(bound.sigma_ub.powi(2) >= bound.alpha + bound.beta - 1e-12);
    for p in (0..tables.alpha_len()).step_by(3) {
        for k in 0..tables.beta_len() {
            let lam = max_eigenvalue_sym3(&tables.relative(p, k).covariance.translational());
            assert!(lam <= bound.sigma_ub.powi(2) + 1e-9);
        }
    }
}

#[test]
fn sigma_bound_requires_solved_trajectories() {
    let c = ScenarioConfig::crossing(24, 200, 200);
    let d = synthesize(&c).unwrap();
    let (ta, tb) = d.trajectories().unwrap();
    let a = run(&c, &RunOptions { stages: vec![Stage::Simulate, Stage::Solve, Stage::Pcm, Stage::Prune], ..Default::default() }).unwrap();
    let tables = RouteTables::new(&ta, &tb, a.shared.as_ref().unwrap()).unwrap();
    assert!(sigma_upper_bound(&ta, &tb, &tables).is_err());
}

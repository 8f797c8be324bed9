use poseflow::config::PipelineConfig;
use poseflow::cot::{make_cot_label, FeasibilityBranch};
use poseflow::graph::{adjacency_matrix, build_graph, GraphOptions, NodeKind};
use poseflow::io::{episode_from_jsonl, episode_to_jsonl};
use poseflow::sim::{
    episode_scene, episode_trajectory, frame_time, frustum_scene, gen_episode, random_camera, render_frame, scenarios,
};
use poseflow::stream_sync::{align_streams, default_max_gap, SampleStream};
use poseflow::frame::JointConfig;
use poseflow::{SeededRng, Timestamp};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn rendered_objects_are_recovered(seed in any::<u64>(), n in 1usize..=8) {
        let cfg = PipelineConfig::default();
        let mut rng = SeededRng::new(seed);
        let (k, t) = random_camera(&mut rng);
        let scene = frustum_scene(n, &k, &t, &cfg.sim, &mut rng);
        let (frame, report) = render_frame(&scene, &JointConfig(vec![0.0; 14]), Timestamp(0.0), &k, &t, &cfg.sim).unwrap();
        prop_assert!(report.omitted.is_empty());
        let (g, _) = build_graph(&frame, &k, &t, &cfg.chains, &GraphOptions::paper_literal()).unwrap();
        prop_assert_eq!(g.count(NodeKind::Object), n);
        for node in g.nodes.iter().filter(|v| v.kind == NodeKind::Object) {
            let truth = scene.objects.iter().find(|o| o.label == node.label).unwrap().position;
            prop_assert!(node.position.distance(truth) < 1e-6);
        }
    }
}

#[test]
fn training_set_scale() {
    let cfg = PipelineConfig::default();
    let root = SeededRng::new(600);
    let mut count = 0;
    for s in scenarios() {
        for v in 0..s.available_variants.len() {
            for i in 0..100u64 {
                let ep = gen_episode(&cfg, &s, v, 1, &root.derive(count + i)).unwrap();
                assert_eq!(ep.frames.len(), 1);
            }
            count += 100;
        }
    }
    assert_eq!(count, 600);
}

#[test]
fn variant_selects_branch() {
    let cfg = PipelineConfig::default();
    let want = [FeasibilityBranch::AllPresent, FeasibilityBranch::SomeMissing, FeasibilityBranch::NonePresent];
    for s in scenarios() {
        for (v, branch) in want.iter().enumerate() {
            let ep = gen_episode(&cfg, &s, v, 2, &SeededRng::new(v as u64)).unwrap();
            assert_eq!(make_cot_label(&ep.scene, &s, &ep, 0, 30).unwrap().branch, *branch, "{} variant {v}", s.name);
        }
    }
}

/// A 150 Hz joint stream sampled from the same scripted trajectory aligns
/// onto the 30 Hz frames with zero gap and bit-identical joint vectors.
#[test]
fn control_stream_aligns_onto_frames() {
    let cfg = PipelineConfig::default();
    let s = &scenarios()[0];
    let n = 45;
    let ep = gen_episode(&cfg, s, 0, n, &SeededRng::new(8)).unwrap();
    let traj = episode_trajectory(&cfg, s, &episode_scene(&cfg, s, 0, 8).unwrap(), n);
    let ratio = (cfg.sim.control_rate_hz / cfg.sim.camera_rate_hz).round() as usize;
    let control: Vec<(Timestamp, Vec<f64>)> = (0..=ratio * (n - 1))
        .map(|i| {
            let t = i as f64 / cfg.sim.control_rate_hz;
            (Timestamp(t), traj.at(t).0)
        })
        .collect();
    let head: Vec<(Timestamp, Vec<f64>)> = (0..n).map(|i| (frame_time(&cfg, i), vec![i as f64])).collect();
    let others = [SampleStream::new("control", cfg.sim.control_rate_hz, control)];
    let synced =
        align_streams(&SampleStream::new("head", cfg.sim.camera_rate_hz, head), &others, default_max_gap(&others)).unwrap();
    assert_eq!(synced.len(), n);
    for (i, f) in synced.iter().enumerate() {
        assert_eq!(f.gap("control"), Some(0.0));
        assert_eq!(f.matched["control"].payload, ep.frames[i].q.0);
    }
}

#[test]
fn episode_files_are_reproducible() {
    let cfg = PipelineConfig::default();
    for s in scenarios() {
        let a = gen_episode(&cfg, &s, 1, 6, &SeededRng::new(77)).unwrap();
        let b = gen_episode(&cfg, &s, 1, 6, &SeededRng::new(77)).unwrap();
        let (ta, tb) = (episode_to_jsonl(&a, &cfg.intrinsics, &cfg.extrinsics), episode_to_jsonl(&b, &cfg.intrinsics, &cfg.extrinsics));
        assert_eq!(ta, tb);
        let (_, back) = episode_from_jsonl(&ta, &cfg).unwrap();
        for (f, g) in back.frames.iter().zip(&a.frames) {
            let (x, _) = build_graph(f, &cfg.intrinsics, &cfg.extrinsics, &cfg.chains, &cfg.graph).unwrap();
            let (y, _) = build_graph(g, &cfg.intrinsics, &cfg.extrinsics, &cfg.chains, &cfg.graph).unwrap();
            assert_eq!(x.to_json(), y.to_json());
            let adj = adjacency_matrix(&x, false);
            assert_eq!(adj, adj.transpose());
        }
    }
}

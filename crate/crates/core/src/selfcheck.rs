//! Embedded oracle suite run by the `selfcheck` command.

use serde::Serialize;

use crate::config::{CotConfig, FlowConfig, PipelineConfig};
use crate::cot::{ce_loss, future_indices, grad_check as cot_grad_check, total_loss, CotHead, TokenVocab};
use crate::flow::{grad_check as flow_grad_check, integrate_from, interpolate, target_field, ActionChunk, FlowExpert, FlowSample, NoiseDraw};
use crate::geometry::Point3;
use crate::graph::{build_graph, GraphOptions, NodeKind};
use crate::linalg::{Dense, Matrix};
use crate::projection::{backproject, project, Pixel};
use crate::rng::SeededRng;
use crate::sim::{frustum_scene, random_camera, render_frame};
use crate::frame::{JointConfig, Timestamp};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn projection_round_trip(rng: &mut SeededRng) -> CheckResult {
    let (k, _) = random_camera(rng);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let p = Pixel::new(rng.uniform_range(0.0, k.width as f64), rng.uniform_range(0.0, k.height as f64));
        let d = rng.uniform_range(0.1, 10.0);
        match backproject(p, d, &k).and_then(|x| project(x, &k)) {
            Ok((q, z)) => worst = worst.max((q.u - p.u).abs()).max((q.v - p.v).abs()).max((z - d).abs()),
            Err(e) => return check("projection_round_trip", false, e.to_string()),
        }
    }
    check("projection_round_trip", worst < 1e-9, format!("max error {worst:e}"))
}

fn render_recover(rng: &mut SeededRng) -> CheckResult {
    let cfg = PipelineConfig::default();
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let (k, t) = random_camera(rng);
        let n = 1 + rng.index(8);
        let scene = frustum_scene(n, &k, &t, &cfg.sim, rng);
        let q = JointConfig(vec![0.0; cfg.joint_dof]);
        let res = render_frame(&scene, &q, Timestamp(0.0), &k, &t, &cfg.sim)
            .and_then(|(f, _)| build_graph(&f, &k, &t, &cfg.chains, &GraphOptions::paper_literal()));
        let g = match res {
            Ok((g, _)) => g,
            Err(e) => return check("render_recover", false, e.to_string()),
        };
        if g.count(NodeKind::Object) != scene.objects.len() {
            return check("render_recover", false, "object lost in rendering".into());
        }
        for node in g.nodes.iter().filter(|n| n.kind == NodeKind::Object) {
            let truth = scene.objects.iter().find(|o| o.label == node.label).map(|o| o.position);
            worst = worst.max(truth.map_or(f64::INFINITY, |p| node.position.distance(p)));
        }
    }
    check("render_recover", worst < 1e-6, format!("max error {worst:e} m"))
}

fn flow_identities() -> CheckResult {
    let a = ActionChunk::new(1, 3, vec![0.5, -1.25, 2.0]).expect("shape");
    let eps = ActionChunk::new(1, 3, vec![-0.3, 0.9, 0.1]).expect("shape");
    let ends = interpolate(&a, &eps, 1.0).ok() == Some(a.clone()) && interpolate(&a, &eps, 0.0).ok() == Some(eps.clone());
    let cfg = FlowConfig { hidden: 4, ..FlowConfig::default() };
    let mut e = FlowExpert::<f64>::init(1, 3, 0, &cfg, &mut SeededRng::new(0));
    e.l3 = Dense::zeros(4, 3);
    e.l3.b = target_field(&a, &eps).expect("shape").as_slice().to_vec();
    let loss = e
        .loss_with(&[FlowSample { action: a.clone(), context: vec![] }], &[NoiseDraw { tau: 0.4, eps: eps.clone() }])
        .unwrap_or(f64::INFINITY);
    let euler = [1, 5, 10]
        .iter()
        .map(|&s| integrate_from(&e, &[], s, eps.clone()).map_or(f64::INFINITY, |x| x.l2_distance(&a)))
        .fold(0.0, f64::max);
    check(
        "flow_identities",
        ends && loss < 1e-20 && euler <= 1e-12,
        format!("endpoints exact: {ends}, planted loss {loss:e}, euler error {euler:e}"),
    )
}

fn flow_gradients(rng: &mut SeededRng) -> CheckResult {
    let cfg = FlowConfig { hidden: 12, ..FlowConfig::default() };
    let e = FlowExpert::<f64>::init(3, 2, 4, &cfg, rng);
    let batch: Vec<FlowSample<f64>> = (0..4)
        .map(|_| FlowSample {
            action: ActionChunk::new(3, 2, (0..6).map(|_| rng.standard_normal()).collect()).expect("shape"),
            context: (0..4).map(|_| rng.standard_normal()).collect(),
        })
        .collect();
    let res = e.draw_noise(batch.len(), rng).and_then(|d| flow_grad_check(&e, &batch, &d, 1e-5, 100, rng));
    match res {
        Ok(err) => check("flow_gradients", err < 1e-4, format!("max relative error {err:e}")),
        Err(err) => check("flow_gradients", false, err.to_string()),
    }
}

fn cot_gradients(rng: &mut SeededRng) -> CheckResult {
    let vocab = TokenVocab::standard();
    let cfg = CotConfig { hidden: 12, window: 3, max_len: 64, ..CotConfig::default() };
    let head = CotHead::<f64>::init(5, &vocab, &cfg, rng);
    let ctx: Vec<f64> = (0..5).map(|_| rng.standard_normal()).collect();
    let res = vocab
        .tokenize("scene: egg, pepper.\nfeedback: missing: fish. suggest: add fish.\nplan: grasp pepper.")
        .and_then(|t| cot_grad_check(&head, &ctx, &t, 1e-5, 100, rng));
    match res {
        Ok(err) => check("cot_gradients", err < 1e-4, format!("max relative error {err:e}")),
        Err(err) => check("cot_gradients", false, err.to_string()),
    }
}

fn loss_identities() -> CheckResult {
    let uniform = ce_loss(&Matrix::<f64>::zeros(3, 4), &[0, 1, 2]).map_or(f64::INFINITY, |l| (l - 3.0 * 4f64.ln()).abs());
    let cases = total_loss(7.0, 1.5, 1, 0.3, 4.0) == 1.5
        && total_loss(4.0, 1.0, 0, 1.0, 1.0) == 5.0
        && total_loss(4.0, 1.0, 0, 0.5, 2.0) == 4.0;
    let frames = future_indices(0, 30) == (30, 30) && future_indices(30, 30) == (60, 60) && future_indices(45, 30) == (60, 75);
    check(
        "loss_identities",
        uniform < 1e-9 && cases && frames,
        format!("uniform ce error {uniform:e}, combined loss cases {cases}, frame arithmetic {frames}"),
    )
}

fn rigid_inverse(rng: &mut SeededRng) -> CheckResult {
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (_, t) = random_camera(rng);
        let p = Point3::new(rng.uniform_range(-5.0, 5.0), rng.uniform_range(-5.0, 5.0), rng.uniform_range(-5.0, 5.0));
        worst = worst.max(t.inverse().apply(t.apply(p)).distance(p));
    }
    check("rigid_inverse", worst < 1e-12, format!("max error {worst:e}"))
}

fn rng_repeatable(seed: u64) -> CheckResult {
    let (mut a, mut b) = (SeededRng::new(seed), SeededRng::new(seed));
    let same = (0..10_000).all(|_| a.next_u64() == b.next_u64());
    check("rng_repeatable", same, "10000 draws".into())
}

/// Runs every oracle with fixed seeds.
pub fn run_selfcheck() -> Vec<CheckResult> {
    let rng = SeededRng::new(0x5E1F);
    vec![
        projection_round_trip(&mut rng.derive(1)),
        rigid_inverse(&mut rng.derive(2)),
        render_recover(&mut rng.derive(3)),
        flow_identities(),
        flow_gradients(&mut rng.derive(4)),
        cot_gradients(&mut rng.derive(5)),
        loss_identities(),
        rng_repeatable(rng.seed()),
    ]
}

//! Rule-based reasoning labels computed from simulator ground truth.

use serde::{Deserialize, Serialize};

use super::vocab::number_token;
use crate::error::{Error, Result};
use crate::sim::{Episode, InstructionScenario, Scene};

/// `t′ = ⌊t/Δt⌋·Δt + Δt` and `t″ = t + Δt`.
pub fn future_indices(t: usize, interval: usize) -> (usize, usize) {
    let dt = interval.max(1);
    ((t / dt) * dt + dt, t + dt)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityBranch {
    AllPresent,
    SomeMissing,
    NonePresent,
}

/// Which branch the requirement set selects against the present labels.
pub fn feasibility(scenario: &InstructionScenario, present: &[&str]) -> (FeasibilityBranch, Vec<String>, Vec<String>) {
    let (have, missing): (Vec<String>, Vec<String>) =
        scenario.required.iter().cloned().partition(|r| present.contains(&r.as_str()));
    let branch = if missing.is_empty() {
        FeasibilityBranch::AllPresent
    } else if have.is_empty() {
        FeasibilityBranch::NonePresent
    } else {
        FeasibilityBranch::SomeMissing
    };
    (branch, have, missing)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotSections {
    pub scene_description: String,
    pub feasibility_feedback: String,
    pub subtask_plan: String,
    pub future_objects: String,
    pub future_robot_state: String,
}

impl CotSections {
    pub fn as_array(&self) -> [&str; 5] {
        [
            &self.scene_description,
            &self.feasibility_feedback,
            &self.subtask_plan,
            &self.future_objects,
            &self.future_robot_state,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CotLabel {
    pub sections: CotSections,
    pub t: usize,
    /// Frame whose object positions are described, after clamping.
    pub t_objects: usize,
    /// Frame whose joint state is described, after clamping.
    pub t_state: usize,
    /// Set when either future frame ran past the episode end.
    pub clamped: bool,
    pub branch: FeasibilityBranch,
}

impl CotLabel {
    pub fn text(&self) -> String {
        self.sections.as_array().join("\n")
    }
}

fn list(items: &[String]) -> String {
    items.join(", ")
}

pub fn make_cot_label(
    scene: &Scene,
    scenario: &InstructionScenario,
    episode: &Episode,
    t: usize,
    interval: usize,
) -> Result<CotLabel> {
    let n = episode.frames.len();
    if n == 0 {
        return Err(Error::EmptyEpisode);
    }
    if t >= n {
        return Err(Error::FrameOutOfRange { index: t, len: n });
    }
    let (tp, tpp) = future_indices(t, interval);
    let (t_objects, t_state) = (tp.min(n - 1), tpp.min(n - 1));
    let clamped = tp != t_objects || tpp != t_state;

    let present: Vec<String> =
        scenario.universe.iter().filter(|l| scene.contains(l)).cloned().collect();
    let present_refs: Vec<&str> = present.iter().map(String::as_str).collect();
    let (branch, have, missing) = feasibility(scenario, &present_refs);

    let scene_description =
        if present.is_empty() { "scene: nothing.".to_string() } else { format!("scene: {}.", list(&present)) };
    let feasibility_feedback = match branch {
        FeasibilityBranch::AllPresent => format!("feedback: all {} available.", scenario.item_noun),
        _ => format!("feedback: missing: {}. suggest: add {}.", list(&missing), list(&missing)),
    };
    let subtask_plan = if have.is_empty() {
        "plan: none.".to_string()
    } else {
        let steps: Vec<String> = have.iter().map(|l| format!("grasp {l}")).collect();
        format!("plan: {}.", steps.join("; "))
    };

    // objects are static in the simulator, so positions at t′ are the scene's
    let described: Vec<String> = present
        .iter()
        .filter_map(|l| scene.objects.iter().find(|o| &o.label == l))
        .map(|o| {
            let p = o.position;
            format!("{} ({}, {}, {})", o.label, number_token(p.x), number_token(p.y), number_token(p.z))
        })
        .collect();
    let future_objects = if described.is_empty() {
        format!("objects at frame {t_objects}: none.")
    } else {
        format!("objects at frame {t_objects}: {}.", described.join("; "))
    };
    let q: Vec<String> = episode.frames[t_state].q.as_slice().iter().map(|&a| number_token(a)).collect();
    let future_robot_state = format!("state at frame {t_state}: {}.", q.join(" "));

    Ok(CotLabel {
        sections: CotSections { scene_description, feasibility_feedback, subtask_plan, future_objects, future_robot_state },
        t,
        t_objects,
        t_state,
        clamped,
        branch,
    })
}

//! File formats: episode JSONL, weight files, reasoning datasets and loss
//! CSVs. Key order is fixed by struct field order so output is byte-stable.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::cot::{CotHead, TokenVocab};
use crate::error::{Error, Result};
use crate::flow::FlowExpert;
use crate::frame::{BoundingBox, FrameRecord, JointConfig, Timestamp};
use crate::geometry::{CameraIntrinsics, RigidTransform};
use crate::gnn::GnnWeights;
use crate::projection::{DepthGrid, DepthPatch};
use crate::sim::{episode_scene, scenario_by_name, Episode, RenderReport};

/// JSON has no NaN; invalid depth travels as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|x| if x.is_nan() { None } else { Some(*x) }).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub scenario: String,
    pub variant: usize,
    #[serde(rename = "K")]
    pub intrinsics: CameraIntrinsics<f64>,
    #[serde(rename = "T")]
    pub extrinsics: RigidTransform<f64>,
    pub resolution: [usize; 2],
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetectionLine {
    label: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PatchLine {
    x0: usize,
    y0: usize,
    x1: usize,
    y1: usize,
    #[serde(with = "nan_as_null")]
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DepthLine {
    w: usize,
    h: usize,
    boxes: Vec<PatchLine>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FrameLine {
    t: f64,
    q: Vec<f64>,
    detections: Vec<DetectionLine>,
    depth: DepthLine,
    far: f64,
}

impl FrameLine {
    fn from_frame(f: &FrameRecord<f64>) -> Self {
        let boxes = f
            .depth
            .patches()
            .iter()
            .map(|p| PatchLine { x0: p.x0, y0: p.y0, x1: p.x1, y1: p.y1, values: p.values.clone() })
            .collect();
        Self {
            t: f.t.0,
            q: f.q.0.clone(),
            detections: f
                .detections
                .iter()
                .map(|b| DetectionLine { label: b.label.clone(), bbox: [b.x_min, b.y_min, b.x_max, b.y_max] })
                .collect(),
            depth: DepthLine { w: f.depth.width(), h: f.depth.height(), boxes },
            far: f.depth.background(),
        }
    }

    fn into_frame(self) -> Result<FrameRecord<f64>> {
        let patches = self
            .depth
            .boxes
            .into_iter()
            .map(|p| DepthPatch { x0: p.x0, y0: p.y0, x1: p.x1, y1: p.y1, values: p.values })
            .collect();
        Ok(FrameRecord {
            t: Timestamp(self.t),
            detections: self
                .detections
                .into_iter()
                .map(|d| BoundingBox::new(d.label, d.bbox[0], d.bbox[1], d.bbox[2], d.bbox[3]))
                .collect(),
            depth: DepthGrid::from_patches(self.depth.w, self.depth.h, self.far, patches)?,
            q: JointConfig(self.q),
        })
    }
}

fn json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("plain data serializes")
}

fn parse<T: DeserializeOwned>(what: &str, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse { what: what.into(), detail: e.to_string() })
}

/// Serializes an episode with the camera model it was rendered with.
pub fn episode_to_jsonl(ep: &Episode, intrinsics: &CameraIntrinsics<f64>, extrinsics: &RigidTransform<f64>) -> String {
    let header = EpisodeHeader {
        scenario: ep.scenario.name.clone(),
        variant: ep.variant,
        intrinsics: *intrinsics,
        extrinsics: *extrinsics,
        resolution: [intrinsics.width, intrinsics.height],
        seed: ep.seed,
    };
    let mut out = json(&header);
    out.push('\n');
    for f in &ep.frames {
        out.push_str(&json(&FrameLine::from_frame(f)));
        out.push('\n');
    }
    out
}

/// Parses an episode file. The scene is not stored; it is regenerated from
/// the header seed with `cfg`'s simulator settings.
pub fn episode_from_jsonl(text: &str, cfg: &PipelineConfig) -> Result<(EpisodeHeader, Episode)> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: EpisodeHeader = parse("episode header", lines.next().ok_or(Error::EmptyEpisode)?)?;
    header.intrinsics.check()?;
    header.extrinsics.check(cfg.tolerances.rotation)?;
    let scenario = scenario_by_name(&header.scenario)?;
    let mut frames = Vec::new();
    for (i, l) in lines.enumerate() {
        let line: FrameLine = parse(&format!("episode frame {i}"), l)?;
        frames.push(line.into_frame()?);
    }
    if frames.is_empty() {
        return Err(Error::EmptyEpisode);
    }
    let scene = episode_scene(cfg, &scenario, header.variant, header.seed)?;
    let trajectory = frames.iter().map(|f| f.q.clone()).collect();
    let reports = vec![RenderReport::default(); frames.len()];
    let ep = Episode { scenario, variant: header.variant, seed: header.seed, scene, trajectory, frames, reports };
    Ok((header, ep))
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn read_episode(path: &Path, cfg: &PipelineConfig) -> Result<(EpisodeHeader, Episode)> {
    episode_from_jsonl(&read_text(path)?, cfg)
}

/// Episode files in `dir`, sorted by name.
pub fn episode_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let rd = fs::read_dir(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<_> = rd
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl") && p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("episode")))
        .collect();
    files.sort();
    Ok(files)
}

/// Reasoning head together with the vocabulary its ids refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotArtifact {
    pub vocab: TokenVocab,
    pub head: CotHead<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightsFile {
    Gnn(GnnWeights<f64>),
    Expert(FlowExpert<f64>),
    Cot(CotArtifact),
}

impl WeightsFile {
    pub fn kind(&self) -> &'static str {
        match self {
            WeightsFile::Gnn(_) => "gnn",
            WeightsFile::Expert(_) => "expert",
            WeightsFile::Cot(_) => "cot",
        }
    }

    pub fn to_json(&self) -> String {
        json(self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path).map_err(|e| Error::ArtifactLoad(e.to_string()))?;
        let w: WeightsFile = serde_json::from_str(&text).map_err(|e| Error::ArtifactLoad(format!("{}: {e}", path.display())))?;
        let checked = match &w {
            WeightsFile::Gnn(g) => g.check(),
            WeightsFile::Expert(e) => e.check(),
            WeightsFile::Cot(c) => c.head.check().and_then(|_| {
                if c.vocab.len() == c.head.vocab_size {
                    Ok(())
                } else {
                    Err(Error::ShapeMismatch(format!("vocabulary of {} for a head over {}", c.vocab.len(), c.head.vocab_size)))
                }
            }),
        };
        checked.map_err(|e| Error::ArtifactLoad(format!("{}: {e}", path.display())))?;
        Ok(w)
    }

    pub fn load_gnn(path: &Path) -> Result<GnnWeights<f64>> {
        match Self::load(path)? {
            WeightsFile::Gnn(g) => Ok(g),
            other => Err(Error::ArtifactLoad(format!("{}: expected gnn weights, found {}", path.display(), other.kind()))),
        }
    }

    pub fn load_expert(path: &Path) -> Result<FlowExpert<f64>> {
        match Self::load(path)? {
            WeightsFile::Expert(e) => Ok(e),
            other => Err(Error::ArtifactLoad(format!("{}: expected expert weights, found {}", path.display(), other.kind()))),
        }
    }

    pub fn load_cot(path: &Path) -> Result<CotArtifact> {
        match Self::load(path)? {
            WeightsFile::Cot(c) => Ok(c),
            other => Err(Error::ArtifactLoad(format!("{}: expected cot weights, found {}", path.display(), other.kind()))),
        }
    }
}

/// One line of a reasoning dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotRecord {
    pub context: Vec<f64>,
    pub tokens: Vec<usize>,
    pub text: String,
}

pub fn cot_dataset_to_jsonl(records: &[CotRecord]) -> String {
    records.iter().map(|r| json(r) + "\n").collect()
}

pub fn cot_dataset_from_jsonl(text: &str) -> Result<Vec<CotRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| parse(&format!("dataset line {i}"), l))
        .collect()
}

/// CSV with a header row; floats use the shortest round-trip form.
pub fn csv<R: AsRef<[f64]>>(header: &[&str], rows: impl IntoIterator<Item = (usize, R)>) -> String {
    let mut s = header.join(",");
    s.push('\n');
    for (k, r) in rows {
        s.push_str(&k.to_string());
        for v in r.as_ref() {
            s.push(',');
            s.push_str(&v.to_string());
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::sim::{food_preparation, gen_episode};

    #[test]
    fn episode_round_trip() {
        let cfg = PipelineConfig::default();
        let ep = gen_episode(&cfg, &food_preparation(), 1, 4, &SeededRng::new(21)).unwrap();
        let text = episode_to_jsonl(&ep, &cfg.intrinsics, &cfg.extrinsics);
        let (h, back) = episode_from_jsonl(&text, &cfg).unwrap();
        assert_eq!(h.resolution, [640, 480]);
        assert_eq!(back.frames, ep.frames);
        assert_eq!(back.scene, ep.scene);
        assert_eq!(back.trajectory, ep.trajectory);
        assert_eq!(episode_to_jsonl(&back, &h.intrinsics, &h.extrinsics), text);
        let first = text.lines().nth(1).unwrap();
        assert!(first.starts_with(r#"{"t":0.0,"q":["#));
        assert!(text.lines().next().unwrap().starts_with(r#"{"scenario":"food","variant":1,"K":"#));
    }

    #[test]
    fn nan_depth_survives() {
        let cfg = PipelineConfig::default();
        let mut ep = gen_episode(&cfg, &food_preparation(), 0, 1, &SeededRng::new(2)).unwrap();
        ep.frames[0].depth.set(3, 4, f64::NAN);
        let text = episode_to_jsonl(&ep, &cfg.intrinsics, &cfg.extrinsics);
        assert!(text.contains("null"));
        let (_, back) = episode_from_jsonl(&text, &cfg).unwrap();
        assert!(back.frames[0].depth.get(3, 4).is_nan());
    }

    #[test]
    fn malformed_inputs() {
        let cfg = PipelineConfig::default();
        assert_eq!(episode_from_jsonl("", &cfg), Err(Error::EmptyEpisode));
        assert!(matches!(episode_from_jsonl("{", &cfg), Err(Error::Parse { .. })));
    }

    #[test]
    fn csv_layout() {
        assert_eq!(csv(&["step", "loss"], [(0, [1.5]), (1, [0.25])]), "step,loss\n0,1.5\n1,0.25\n");
    }
}

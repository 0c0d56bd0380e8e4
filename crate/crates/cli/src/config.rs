//! Key-value run configuration: defaults, config file parsing and
//! command-line overrides. Unknown keys are rejected.

use std::collections::BTreeMap;

use mcmot::camera::AffineTransform;
use mcmot::evalsim::{CameraModel, DetectorModel, EmbeddingModel, ScenarioSpec};
use mcmot::globallink::LinkConfig;
use mcmot::motion::{MotionModel, UpdateMode};
use mcmot::online::{ClassMap, FilterKind, FilterSpec, OnlineConfig, VoteMode};
use mcmot::postprocess::PostConfig;
use mcmot::{Error, Result};

/// Post-processing stage order and toggles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PostStage {
    Denoise,
    Interpolate,
    Rescore,
}

#[derive(Debug, Clone)]
pub struct PostStages {
    pub order: Vec<PostStage>,
    pub denoise: bool,
    pub interpolate: bool,
    pub rescore: bool,
}

impl Default for PostStages {
    fn default() -> Self {
        PostStages {
            order: vec![PostStage::Denoise, PostStage::Interpolate, PostStage::Rescore],
            denoise: true,
            interpolate: true,
            rescore: true,
        }
    }
}

/// Scenario parameters for the sim subcommand; expanded to a
/// [`ScenarioSpec`] via [`RunConfig::scenario`].
#[derive(Debug, Clone)]
pub struct SimParams {
    pub objects: usize,
    pub classes: Vec<u32>,
    pub frames: i64,
    pub detector: DetectorModel,
    pub drift_tx: f64,
    pub drift_ty: f64,
    pub occlusion_min: i64,
    pub occlusion_max: i64,
    pub embedding_dim: usize,
    pub embedding_within_std: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            objects: 10,
            classes: vec![1, 4],
            frames: 300,
            detector: DetectorModel::default(),
            drift_tx: 1.0,
            drift_ty: 0.0,
            occlusion_min: 0,
            occlusion_max: 0,
            embedding_dim: 16,
            embedding_within_std: 0.1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub online: OnlineConfig,
    pub link: LinkConfig,
    pub post: PostConfig,
    pub post_stages: PostStages,
    pub sim: SimParams,
    pub eval_thresholds: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            online: OnlineConfig::default(),
            link: LinkConfig::default(),
            post: PostConfig::default(),
            post_stages: PostStages::default(),
            sim: SimParams::default(),
            eval_thresholds: mcmot::evalsim::DEFAULT_THRESHOLDS.to_vec(),
        }
    }
}

impl RunConfig {
    /// Loads defaults, applies a config file (if any), then the `--set`
    /// overrides in order.
    pub fn load(path: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::input(format!("cannot read config {path}: {e}")))?;
            for (i, raw) in text.lines().enumerate() {
                let line = raw.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                    path: path.to_string(),
                    line: i + 1,
                    message: "expected 'key = value'".into(),
                })?;
                cfg.apply(key.trim(), value.trim()).map_err(|e| Error::Parse {
                    path: path.to_string(),
                    line: i + 1,
                    message: e.to_string(),
                })?;
            }
        }
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| Error::input(format!("--set expects key=value, got '{item}'")))?;
            cfg.apply(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    /// Builds the simulation scenario from the sim parameters.
    pub fn scenario(&self) -> Result<ScenarioSpec> {
        let drift = if self.sim.drift_tx == 0.0 && self.sim.drift_ty == 0.0 {
            AffineTransform::identity()
        } else {
            AffineTransform::translation(self.sim.drift_tx, self.sim.drift_ty)
        };
        let occlusion = if self.sim.occlusion_max > 0 {
            Some((self.sim.occlusion_min.max(1), self.sim.occlusion_max))
        } else {
            None
        };
        let mut spec = ScenarioSpec::layout(
            self.sim.objects,
            &self.sim.classes,
            self.sim.frames,
            self.sim.detector.clone(),
            drift,
            self.seed,
            occlusion,
        )?;
        spec.embedding = EmbeddingModel {
            dim: self.sim.embedding_dim,
            identity_means: Vec::new(),
            within_std: self.sim.embedding_within_std,
        };
        spec.camera = CameraModel { drift };
        Ok(spec)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "seed" => self.seed = parse(key, value)?,
            "online.n_init" => self.online.n_init = parse(key, value)?,
            "online.max_age" => self.online.max_age = parse(key, value)?,
            "online.min_len" => self.online.min_len = parse(key, value)?,
            "online.gate_threshold" => self.online.gate_threshold = parse(key, value)?,
            "online.appearance_threshold" => {
                self.online.appearance_threshold = parse(key, value)?
            }
            "online.iou_fallback_threshold" => {
                self.online.iou_fallback_threshold = parse(key, value)?
            }
            "online.vote_mode" => self.online.vote_mode = parse_vote_mode(value)?,
            "online.vote_floor" => self.online.vote_floor = parse(key, value)?,
            "online.class_map" => self.online.class_map = parse_class_map(value)?,
            "online.default_filter" => self.online.default_filter = parse_filter(value)?,
            "online.ukf_motion" => self.online.ukf_motion = parse_motion(value)?,
            "online.ukf_alpha" => self.online.ukf_params.alpha = parse(key, value)?,
            "online.ukf_beta" => self.online.ukf_params.beta = parse(key, value)?,
            "online.ukf_kappa" => self.online.ukf_params.kappa = parse(key, value)?,
            "online.bank_capacity" => self.online.bank_capacity = parse(key, value)?,
            "online.bank_momentum" => self.online.bank_momentum = parse(key, value)?,
            "noise.position_std_factor" => {
                self.online.noise.position_std_factor = parse(key, value)?
            }
            "noise.velocity_std_factor" => {
                self.online.noise.velocity_std_factor = parse(key, value)?
            }
            "link.th_appearance" => self.link.th_appearance = parse(key, value)?,
            "link.th_time" => self.link.th_time = parse(key, value)?,
            "link.th_space" => self.link.th_space = parse(key, value)?,
            "link.lambda_appearance" => self.link.lambda_appearance = parse(key, value)?,
            "link.lambda_time" => self.link.lambda_time = parse(key, value)?,
            "link.lambda_space" => self.link.lambda_space = parse(key, value)?,
            "link.clip_len" => self.link.clip_len = parse(key, value)?,
            "post.max_gap" => self.post.max_gap = parse(key, value)?,
            "post.tau" => self.post.tau = parse(key, value)?,
            "post.nms_overlap_floor" => self.post.nms_overlap_floor = parse(key, value)?,
            "post.score_drop_floor" => self.post.score_drop_floor = parse(key, value)?,
            "post.denoise" => self.post_stages.denoise = parse_bool(key, value)?,
            "post.interpolate" => self.post_stages.interpolate = parse_bool(key, value)?,
            "post.rescore" => self.post_stages.rescore = parse_bool(key, value)?,
            "post.order" => self.post_stages.order = parse_post_order(value)?,
            "sim.objects" => self.sim.objects = parse(key, value)?,
            "sim.classes" => self.sim.classes = parse_list(key, value)?,
            "sim.frames" => self.sim.frames = parse(key, value)?,
            "sim.miss_prob" => self.sim.detector.miss_prob = parse(key, value)?,
            "sim.duplicate_prob" => self.sim.detector.duplicate_prob = parse(key, value)?,
            "sim.localization_std" => {
                self.sim.detector.localization_std_frac = parse(key, value)?
            }
            "sim.confidence_kappa" => self.sim.detector.confidence_kappa = parse(key, value)?,
            "sim.confidence_noise_std" => {
                self.sim.detector.confidence_noise_std = parse(key, value)?
            }
            "sim.drift_tx" => self.sim.drift_tx = parse(key, value)?,
            "sim.drift_ty" => self.sim.drift_ty = parse(key, value)?,
            "sim.occlusion_min" => self.sim.occlusion_min = parse(key, value)?,
            "sim.occlusion_max" => self.sim.occlusion_max = parse(key, value)?,
            "sim.embedding_dim" => self.sim.embedding_dim = parse(key, value)?,
            "sim.embedding_within_std" => {
                self.sim.embedding_within_std = parse(key, value)?
            }
            "eval.thresholds" => self.eval_thresholds = parse_list(key, value)?,
            other if other.starts_with("online.filter.") => {
                let rough: u32 = other["online.filter.".len()..]
                    .parse()
                    .map_err(|_| Error::input(format!("bad rough class in key '{other}'")))?;
                self.online
                    .filter_overrides
                    .insert(rough, parse_filter(value)?);
            }
            other => return Err(Error::input(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::input(format!("invalid value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "on" => Ok(true),
        "false" | "0" | "off" => Ok(false),
        _ => Err(Error::input(format!("invalid boolean '{value}' for {key}"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect()
}

fn parse_vote_mode(value: &str) -> Result<VoteMode> {
    match value {
        "soft" => Ok(VoteMode::Soft),
        "hard" => Ok(VoteMode::Hard),
        _ => Err(Error::input(format!("vote mode must be soft or hard, got '{value}'"))),
    }
}

/// `fine:rough` pairs, e.g. `1:0,4:1,5:1,6:1,9:1`.
fn parse_class_map(value: &str) -> Result<ClassMap> {
    let mut map = BTreeMap::new();
    for pair in value.split(',').map(str::trim).filter(|v| !v.is_empty()) {
        let (fine, rough) = pair
            .split_once(':')
            .ok_or_else(|| Error::input(format!("class map entry '{pair}' needs fine:rough")))?;
        map.insert(
            parse::<u32>("class map", fine.trim())?,
            parse::<u32>("class map", rough.trim())?,
        );
    }
    if map.is_empty() {
        return Err(Error::input("class map is empty"));
    }
    Ok(ClassMap::new(map))
}

/// `kf,nsa` | `kf,vanilla` | `ukf,nsa` | `ukf,vanilla`.
fn parse_filter(value: &str) -> Result<FilterSpec> {
    let (kind, mode) = value
        .split_once(',')
        .ok_or_else(|| Error::input(format!("filter spec '{value}' needs kind,mode")))?;
    let kind = match kind.trim() {
        "kf" => FilterKind::Kalman,
        "ukf" => FilterKind::Unscented,
        other => return Err(Error::input(format!("unknown filter kind '{other}'"))),
    };
    let noise_mode = match mode.trim() {
        "nsa" => UpdateMode::Nsa,
        "vanilla" => UpdateMode::Vanilla,
        other => return Err(Error::input(format!("unknown noise mode '{other}'"))),
    };
    Ok(FilterSpec { kind, noise_mode })
}

/// `cv` or `ctrv:<omega>`.
fn parse_motion(value: &str) -> Result<MotionModel> {
    if value == "cv" {
        return Ok(MotionModel::ConstantVelocity);
    }
    if let Some(omega) = value.strip_prefix("ctrv:") {
        return Ok(MotionModel::ConstantTurnRate {
            omega: parse("ukf_motion omega", omega)?,
        });
    }
    Err(Error::input(format!(
        "motion model must be cv or ctrv:<omega>, got '{value}'"
    )))
}

fn parse_post_order(value: &str) -> Result<Vec<PostStage>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| match v {
            "denoise" => Ok(PostStage::Denoise),
            "interpolate" => Ok(PostStage::Interpolate),
            "rescore" => Ok(PostStage::Rescore),
            other => Err(Error::input(format!("unknown post stage '{other}'"))),
        })
        .collect()
}

//! Flat `key = value` pipeline configuration.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use svkit::aam::AamConfig;
use svkit::backend::{BackendConfig, BackendKind, PldaConfig};
use svkit::calibration::LogregConfig;
use svkit::metrics::DcfParams;
use svkit::nnet::ArchKind;
use svkit::scorenorm::SnormConfig;
use svkit::FeatureConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Fbank,
    Plp,
}

impl FromStr for FeatureKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fbank" => Ok(FeatureKind::Fbank),
            "plp" => Ok(FeatureKind::Plp),
            _ => Err(format!("unknown feature kind {s:?} (expected fbank or plp)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub features: FeatureKind,
    pub feature: FeatureConfig,
    pub stmn: bool,
    pub vad: bool,
    pub arch: ArchKind,
    pub weights: Option<PathBuf>,
    pub backend: BackendKind,
    pub plda_speaker_rank: usize,
    pub plda_channel_rank: usize,
    pub plda_iterations: usize,
    pub lda_eps: f64,
    pub snorm: bool,
    pub snorm_x: usize,
    pub aam_scale: f64,
    pub aam_margin: f64,
    pub fusion_weights: Vec<f64>,
    pub calibration_prior: f64,
    pub dcf_ptarget: f64,
    pub dcf_cmiss: f64,
    pub dcf_cfa: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            features: FeatureKind::Fbank,
            feature: FeatureConfig::default(),
            stmn: true,
            vad: true,
            arch: ArchKind::TdnnStandard,
            weights: None,
            backend: BackendKind::Plda,
            plda_speaker_rank: 312,
            plda_channel_rank: 312,
            plda_iterations: 10,
            lda_eps: 1e-6,
            snorm: true,
            snorm_x: 300,
            aam_scale: 30.0,
            aam_margin: 0.2,
            fusion_weights: vec![0.4, 0.4, 0.1, 0.1],
            calibration_prior: 0.5,
            dcf_ptarget: 0.05,
            dcf_cmiss: 1.0,
            dcf_cfa: 1.0,
            seed: 0,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, String> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(format!("invalid boolean {v:?} for {key}")),
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Later keys override earlier ones; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut c = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
            c.set(k.trim(), v.trim()).map_err(|e| format!("line {}: {e}", n + 1))?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "features" => self.features = v.parse()?,
            "frame_length" => self.feature.frame_length = parse(key, v)?,
            "frame_shift" => self.feature.frame_shift = parse(key, v)?,
            "low_freq" => self.feature.low_freq = parse(key, v)?,
            "high_freq" => self.feature.high_freq = parse(key, v)?,
            "num_filters" => self.feature.num_filters = parse(key, v)?,
            "num_plp_coeffs" => self.feature.num_plp_coeffs = parse(key, v)?,
            "stmn" => self.stmn = parse_bool(key, v)?,
            "stmn_window" => self.feature.stmn_window = parse(key, v)?,
            "vad" => self.vad = parse_bool(key, v)?,
            "vad_k" => self.feature.vad_k = parse(key, v)?,
            "vad_context" => self.feature.vad_context = parse(key, v)?,
            "arch" => self.arch = v.parse().map_err(|e: svkit::Error| e.to_string())?,
            "weights" => self.weights = Some(PathBuf::from(v)),
            "backend" => self.backend = v.parse().map_err(|e: svkit::Error| e.to_string())?,
            "plda_speaker_rank" => self.plda_speaker_rank = parse(key, v)?,
            "plda_channel_rank" => self.plda_channel_rank = parse(key, v)?,
            "plda_iterations" => self.plda_iterations = parse(key, v)?,
            "lda_eps" => self.lda_eps = parse(key, v)?,
            "snorm" => self.snorm = parse_bool(key, v)?,
            "snorm_x" => self.snorm_x = parse(key, v)?,
            "aam_scale" => self.aam_scale = parse(key, v)?,
            "aam_margin" => self.aam_margin = parse(key, v)?,
            "fusion_weights" => self.fusion_weights = parse_list(key, v)?,
            "calibration_prior" => self.calibration_prior = parse(key, v)?,
            "dcf_ptarget" => self.dcf_ptarget = parse(key, v)?,
            "dcf_cmiss" => self.dcf_cmiss = parse(key, v)?,
            "dcf_cfa" => self.dcf_cfa = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), String> {
        self.feature.validate().map_err(|e| e.to_string())?;
        self.snorm_config().validate().map_err(|e| e.to_string())?;
        self.dcf().validate().map_err(|e| e.to_string())?;
        self.aam().validate().map_err(|e| e.to_string())?;
        if self.fusion_weights.is_empty() {
            return Err("fusion_weights must not be empty".into());
        }
        if self.plda_iterations == 0 {
            return Err("plda_iterations must be at least 1".into());
        }
        if !(self.calibration_prior > 0.0 && self.calibration_prior < 1.0) {
            return Err("calibration_prior must be in (0, 1)".into());
        }
        Ok(())
    }

    /// Backend settings with subspace ranks capped at the embedding dimension.
    pub fn backend_config(&self, dim: usize) -> BackendConfig {
        BackendConfig {
            kind: self.backend,
            plda: PldaConfig {
                speaker_rank: self.plda_speaker_rank.min(dim),
                channel_rank: self.plda_channel_rank.min(dim),
                iterations: self.plda_iterations,
                seed: self.seed,
            },
            lda_eps: self.lda_eps,
        }
    }

    pub fn snorm_config(&self) -> SnormConfig {
        SnormConfig {
            top_x: self.snorm_x,
            ..Default::default()
        }
    }

    pub fn dcf(&self) -> DcfParams {
        DcfParams {
            p_target: self.dcf_ptarget,
            c_miss: self.dcf_cmiss,
            c_fa: self.dcf_cfa,
        }
    }

    pub fn aam(&self) -> AamConfig {
        AamConfig {
            scale: self.aam_scale,
            margin: self.aam_margin,
        }
    }

    pub fn logreg(&self) -> LogregConfig {
        LogregConfig {
            prior: self.calibration_prior,
            ..Default::default()
        }
    }
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|p| parse(key, p.trim())).collect()
}

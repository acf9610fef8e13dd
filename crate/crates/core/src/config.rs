//! The full hyperparameter record, its JSON form and dotted command-line overrides.
//!
//! Defaults are the desk-scale configuration; `configs/paper_scale.json` in the
//! repository holds the full-size network and schedule.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::encoder::EncoderConfig;
use crate::error::{CerfError, Result};
use crate::scene_io::SyntheticScene;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CerfConfig {
    /// Encoder grammar string, `W{width}U{updown}K{kernel}D{depth}`.
    pub encoder: String,
    pub sampling: SamplingConfig,
    pub heads: HeadsConfig,
    pub epipolar: EpipolarConfig,
    pub loss: LossWeights,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub output_dir: Option<String>,
    pub seed: u64,
}

impl Default for CerfConfig {
    fn default() -> Self {
        CerfConfig {
            encoder: "W64U4K3D8".into(),
            sampling: SamplingConfig::default(),
            heads: HeadsConfig::default(),
            epipolar: EpipolarConfig::default(),
            loss: LossWeights::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            output_dir: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub coarse_samples: usize,
    pub fine_samples: usize,
    /// Overrides the dataset's near bound.
    pub near: Option<f64>,
    pub far: Option<f64>,
    pub jitter: bool,
    /// Fine pass evaluates the sorted union of coarse and resampled distances.
    pub fine_union: bool,
    pub pos_freqs: usize,
    pub dir_freqs: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            coarse_samples: 32,
            fine_samples: 32,
            near: None,
            far: None,
            jitter: true,
            fine_union: false,
            pos_freqs: 10,
            dir_freqs: 4,
        }
    }
}

impl SamplingConfig {
    pub fn fine_pass_samples(&self) -> usize {
        if self.fine_union {
            self.coarse_samples + self.fine_samples
        } else {
            self.fine_samples
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadsConfig {
    pub gru_hidden: usize,
    pub geometry_hidden: Vec<usize>,
    /// Defaults to half the encoder width.
    pub radiance_hidden: Option<usize>,
    /// Scan back-to-front; ablation experiments only.
    pub reverse_scan: bool,
}

impl Default for HeadsConfig {
    fn default() -> Self {
        HeadsConfig {
            gru_hidden: 64,
            geometry_hidden: vec![64, 64],
            radiance_hidden: None,
            reverse_scan: false,
        }
    }
}

/// Raw coefficient of the epipolar slot: a constant, or a multiple of `1/N` where `N`
/// is the number of samples in the pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EpipolarCoeff {
    Fixed(f64),
    PerSample(f64),
}

impl EpipolarCoeff {
    pub fn resolve(&self, samples: usize) -> f64 {
        match *self {
            EpipolarCoeff::Fixed(v) => v,
            EpipolarCoeff::PerSample(k) => k / samples as f64,
        }
    }
}

impl fmt::Display for EpipolarCoeff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EpipolarCoeff::Fixed(v) => write!(f, "{v}"),
            EpipolarCoeff::PerSample(k) => write!(f, "{k}/N"),
        }
    }
}

impl Serialize for EpipolarCoeff {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EpipolarCoeff::Fixed(v) => s.serialize_f64(*v),
            EpipolarCoeff::PerSample(_) => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for EpipolarCoeff {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        match &v {
            Value::Number(n) => Ok(EpipolarCoeff::Fixed(n.as_f64().unwrap_or(f64::NAN))),
            Value::String(s) => s.parse().map_err(serde::de::Error::custom),
            _ => Err(serde::de::Error::custom("expected a number or \"k/N\"")),
        }
    }
}

impl std::str::FromStr for EpipolarCoeff {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if let Some(num) = s.strip_suffix("/N") {
            return num
                .trim()
                .parse::<f64>()
                .map(EpipolarCoeff::PerSample)
                .map_err(|_| format!("bad numerator in `{s}`"));
        }
        s.parse::<f64>()
            .map(EpipolarCoeff::Fixed)
            .map_err(|_| format!("expected a number or \"k/N\", got `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpipolarConfig {
    pub theta_alpha: f64,
    pub learnable_theta_alpha: bool,
    pub s_e: EpipolarCoeff,
    pub c_e: [f64; 3],
    pub t_e: f64,
}

impl Default for EpipolarConfig {
    fn default() -> Self {
        EpipolarConfig {
            theta_alpha: 10.0,
            learnable_theta_alpha: false,
            s_e: EpipolarCoeff::PerSample(1.0),
            c_e: [1.0; 3],
            t_e: 120.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_coarse: f64,
    pub lambda_fine: f64,
    pub lambda_w: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_coarse: 0.1,
            lambda_fine: 1.0,
            lambda_w: 0.01,
        }
    }
}

/// Ablation switches; each one removes a single component of the model.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablation {
    /// Kernel-1 layers only, no down/up path in the ray encoder.
    pub no_rho_f: bool,
    /// Per-sample linear geometry head instead of the recurrence.
    pub no_rho_g: bool,
    /// `s / (Σs + s_e)` instead of the tempered softmax.
    pub no_alpha: bool,
    /// No epipolar slot.
    pub no_beta: bool,
    /// No empty-space regularization.
    pub no_l_e: bool,
}

pub const ABLATION_VARIANTS: [&str; 6] = ["full", "no_rho_f", "no_rho_g", "no_alpha", "no_beta", "no_l_e"];

impl Ablation {
    pub fn from_variant(name: &str) -> Result<Ablation> {
        let mut a = Ablation::default();
        match name {
            "full" => {}
            "no_rho_f" | "no_rho_F" => a.no_rho_f = true,
            "no_rho_g" | "no_rho_G" => a.no_rho_g = true,
            "no_alpha" => a.no_alpha = true,
            "no_beta" => a.no_beta = true,
            "no_l_e" | "no_L_e" => a.no_l_e = true,
            "no_rho_f_g" | "no_rho_F_G" => {
                a.no_rho_f = true;
                a.no_rho_g = true;
            }
            other => {
                return Err(CerfError::config(
                    "variant",
                    format!("unknown ablation `{other}`, expected one of {ABLATION_VARIANTS:?}"),
                ))
            }
        }
        Ok(a)
    }

    /// Table-style name, e.g. `w/o alpha`.
    pub fn label(&self) -> String {
        let mut parts = Vec::new();
        if self.no_rho_f {
            parts.push("rho_F");
        }
        if self.no_rho_g {
            parts.push("rho_G");
        }
        if self.no_alpha {
            parts.push("alpha");
        }
        if self.no_beta {
            parts.push("beta");
        }
        if self.no_l_e {
            parts.push("L_e");
        }
        if parts.is_empty() {
            "full".into()
        } else {
            format!("w/o {}", parts.join(" & "))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_start: f64,
    pub lr_end: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_rays: usize,
    pub iterations: usize,
    pub log_every: usize,
    /// Validation PSNR cadence in steps; 0 disables it.
    pub eval_every: usize,
    pub share_coarse_fine: bool,
    pub ablation: Ablation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_start: 2e-3,
            lr_end: 2e-5,
            beta1: 0.8,
            beta2: 0.888,
            adam_eps: 1e-8,
            batch_rays: 1024,
            iterations: 5000,
            log_every: 100,
            eval_every: 0,
            share_coarse_fine: true,
            ablation: Ablation::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub scene: SyntheticScene,
    pub train_views: usize,
    pub val_views: usize,
    pub test_views: usize,
    pub height: usize,
    pub width: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            scene: SyntheticScene::default(),
            train_views: 20,
            val_views: 5,
            test_views: 5,
            height: 96,
            width: 96,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding `transforms_<split>.json`; takes precedence over `synthetic`.
    pub dataset: Option<String>,
    pub synthetic: Option<SyntheticSpec>,
    pub background: [f64; 3],
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dataset: None,
            synthetic: None,
            background: [1.0; 3],
        }
    }
}

impl CerfConfig {
    pub fn from_json(text: &str) -> Result<CerfConfig> {
        let cfg: CerfConfig = serde_json::from_str(text).map_err(|e| CerfError::Parse {
            path: "<config>".into(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<CerfConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CerfError::io(path, e))?;
        CerfConfig::from_json(&text).map_err(|e| match e {
            CerfError::Parse { message, .. } => CerfError::Parse {
                path: path.into(),
                message,
            },
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn encoder_config(&self) -> Result<EncoderConfig> {
        EncoderConfig::parse(&self.encoder).map_err(|e| match e {
            CerfError::Config { message, .. } => CerfError::config("encoder", message),
            other => other,
        })
    }

    /// Applies one `section.key=value` override. The value is read as JSON when it
    /// parses as JSON and as a bare string otherwise.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let assignment = assignment.trim_start_matches("--");
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| CerfError::config(assignment, "override must look like `section.key=value`"))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let mut node = &mut tree;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| CerfError::config(key, "path descends into a non-object"))?;
            if !obj.contains_key(*part) {
                return Err(CerfError::config(key, "no such key"));
            }
            if i + 1 == parts.len() {
                obj.insert(part.to_string(), value.clone());
                break;
            }
            node = obj.get_mut(*part).expect("checked");
            if node.is_null() {
                *node = Value::Object(Default::default());
            }
        }
        let updated: CerfConfig =
            serde_json::from_value(tree).map_err(|e| CerfError::config(key, e.to_string()))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let enc = self.encoder_config()?;
        let s = &self.sampling;
        let block = enc.length_divisor();
        for (key, n) in [
            ("sampling.coarse_samples", s.coarse_samples),
            ("sampling.fine_samples", s.fine_samples),
            ("sampling.fine_union", s.fine_pass_samples()),
        ] {
            if n < 2 {
                return Err(CerfError::config(key, "need at least 2 samples per ray"));
            }
            if n % block != 0 {
                return Err(CerfError::config(
                    key,
                    format!("{n} samples not divisible by {block} required by encoder {}", self.encoder),
                ));
            }
        }
        if let (Some(n), Some(f)) = (s.near, s.far) {
            if !(n > 0.0 && n < f) {
                return Err(CerfError::config("sampling.near", "need 0 < near < far"));
            }
        }
        if let Some(n) = s.near {
            if n <= 0.0 {
                return Err(CerfError::config("sampling.near", "must be positive"));
            }
        }
        let h = &self.heads;
        if h.gru_hidden == 0 {
            return Err(CerfError::config("heads.gru_hidden", "must be positive"));
        }
        if h.geometry_hidden.is_empty() || h.geometry_hidden.contains(&0) {
            return Err(CerfError::config("heads.geometry_hidden", "need one or more positive widths"));
        }
        if h.radiance_hidden == Some(0) {
            return Err(CerfError::config("heads.radiance_hidden", "must be positive"));
        }
        let e = &self.epipolar;
        if !(e.theta_alpha > 0.0 && e.theta_alpha.is_finite()) {
            return Err(CerfError::config("epipolar.theta_alpha", "must be positive"));
        }
        if !(e.s_e.resolve(s.coarse_samples) > 0.0) {
            return Err(CerfError::config("epipolar.s_e", "must be positive"));
        }
        if e.c_e.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(CerfError::config("epipolar.c_e", "components must lie in [0, 1]"));
        }
        if !(e.t_e > 0.0) {
            return Err(CerfError::config("epipolar.t_e", "must be positive"));
        }
        if let Some(f) = s.far {
            if e.t_e <= f {
                return Err(CerfError::config("epipolar.t_e", "must exceed the far bound"));
            }
        }
        let l = &self.loss;
        for (key, v) in [
            ("loss.lambda_coarse", l.lambda_coarse),
            ("loss.lambda_fine", l.lambda_fine),
            ("loss.lambda_w", l.lambda_w),
        ] {
            if !(v >= 0.0) {
                return Err(CerfError::config(key, "must be non-negative"));
            }
        }
        let t = &self.train;
        if !(t.lr_end > 0.0 && t.lr_start >= t.lr_end) {
            return Err(CerfError::config("train.lr_start", "need lr_start >= lr_end > 0"));
        }
        for (key, b) in [("train.beta1", t.beta1), ("train.beta2", t.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(CerfError::config(key, "must lie in [0, 1)"));
            }
        }
        if !(t.adam_eps > 0.0) {
            return Err(CerfError::config("train.adam_eps", "must be positive"));
        }
        if t.batch_rays == 0 {
            return Err(CerfError::config("train.batch_rays", "must be at least 1"));
        }
        if self.data.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(CerfError::config("data.background", "components must lie in [0, 1]"));
        }
        if let Some(syn) = &self.data.synthetic {
            if syn.train_views == 0 || syn.height == 0 || syn.width == 0 {
                return Err(CerfError::config("data.synthetic", "need at least one non-empty train view"));
            }
            syn.scene.validate()?;
        }
        Ok(())
    }

    /// Effective loss weights after ablations.
    pub fn effective_loss(&self) -> LossWeights {
        let mut l = self.loss;
        if self.train.ablation.no_l_e {
            l.lambda_w = 0.0;
        }
        l
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_reference_hyperparameters() {
        let c = CerfConfig::default();
        c.validate().unwrap();
        assert_eq!(c.epipolar.theta_alpha, 10.0);
        assert_eq!(c.epipolar.s_e.resolve(32), 1.0 / 32.0);
        assert_eq!(c.epipolar.t_e, 120.0);
        assert_eq!((c.loss.lambda_coarse, c.loss.lambda_fine, c.loss.lambda_w), (0.1, 1.0, 0.01));
        assert_eq!((c.train.lr_start, c.train.lr_end), (2e-3, 2e-5));
        assert_eq!((c.train.beta1, c.train.beta2), (0.8, 0.888));
    }

    #[test]
    fn json_round_trip() {
        let mut c = CerfConfig::default();
        c.epipolar.s_e = EpipolarCoeff::PerSample(2.0);
        c.data.synthetic = Some(SyntheticSpec::default());
        let back = CerfConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
        let again = CerfConfig::from_json(&back.to_json()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn single_override_changes_only_that_key() {
        let base = CerfConfig::default();
        let mut c = base.clone();
        c.apply_override("--train.iterations=17").unwrap();
        assert_eq!(c.train.iterations, 17);
        c.train.iterations = base.train.iterations;
        assert_eq!(c, base);

        let mut c = base.clone();
        c.apply_override("encoder=W32U2K3D8").unwrap();
        assert_eq!(c.encoder, "W32U2K3D8");
        let mut c = base.clone();
        c.apply_override("epipolar.s_e=2/N").unwrap();
        assert_eq!(c.epipolar.s_e, EpipolarCoeff::PerSample(2.0));
    }

    #[test]
    fn invalid_values_name_their_key() {
        let mut c = CerfConfig::default();
        let err = c.apply_override("epipolar.theta_alpha=-1").unwrap_err();
        assert!(err.to_string().contains("epipolar.theta_alpha"), "{err}");
        let err = c.apply_override("train.nope=1").unwrap_err();
        assert!(err.to_string().contains("train.nope"), "{err}");
        let err = c.apply_override("sampling.coarse_samples=30").unwrap_err();
        assert!(err.to_string().contains("sampling.coarse_samples"), "{err}");
        let err = c.apply_override("encoder=W64U3K3D8").unwrap_err();
        assert!(err.to_string().contains("encoder"), "{err}");
    }

    #[test]
    fn ablation_labels() {
        assert_eq!(Ablation::from_variant("no_alpha").unwrap().label(), "w/o alpha");
        assert_eq!(Ablation::from_variant("full").unwrap().label(), "full");
        assert!(Ablation::from_variant("no_gamma").is_err());
    }
}

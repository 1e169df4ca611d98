//! Flat `section.key = value` experiment configs.
//!
//! One key per line, `#` comments, no nesting. The format is deliberately
//! parser-free so configs diff cleanly and can be embedded verbatim in run
//! manifests; `render` produces the canonical text whose reparse yields the
//! same config.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use dpgd_core::analysis::{EvalConfig, ScaleParams, TiePolicy};
use dpgd_core::defaults;
use dpgd_core::privacy::MechanismParams;
use dpgd_core::rng::derive_seed;
use dpgd_core::{Algo, Mode, TrainConfig};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub eval: EvalSection,
    pub privacy: PrivacySection,
    pub analysis: AnalysisSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSection {
    pub n: usize,
    pub d: usize,
    pub mu_norm: f64,
    pub sigma_p: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub m: usize,
    pub kappa: f64,
    pub q: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSection {
    pub algo: String,
    pub mode: String,
    pub eta: f64,
    pub steps: u64,
    pub sigma0: f64,
    pub sigma_b: f64,
    pub seed: u64,
    pub eval_every: u64,
    pub checkpoint_every: Option<u64>,
    pub track_decomposition: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSection {
    pub n_test: usize,
    pub seed: u64,
    pub tie_policy: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PrivacySection {
    pub delta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnalysisSection {
    pub target_loss: f64,
    pub c_values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputSection {
    pub dir: String,
    pub emit_svg: bool,
}

fn config_err(line: Option<usize>, message: impl Into<String>) -> CliError {
    let message = message.into();
    CliError::Config(match line {
        Some(l) => format!("line {l}: {message}"),
        None => message,
    })
}

struct RawConfig {
    // key -> (value, line number)
    entries: BTreeMap<String, (String, usize)>,
}

impl RawConfig {
    fn parse(text: &str) -> Result<RawConfig, CliError> {
        let mut entries = BTreeMap::new();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(Some(line_no), "expected `section.key = value`"))?;
            let key = key.trim().to_string();
            if !key.contains('.') {
                return Err(config_err(Some(line_no), format!("key `{key}` has no section prefix")));
            }
            if entries.insert(key.clone(), (value.trim().to_string(), line_no)).is_some() {
                return Err(config_err(Some(line_no), format!("duplicate key `{key}`")));
            }
        }
        Ok(RawConfig { entries })
    }

    fn take<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some((value, line)) => value.parse::<T>().map(Some).map_err(|_| {
                config_err(Some(line), format!("cannot parse `{value}` for key `{key}`"))
            }),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T, CliError> {
        self.take(key)?.ok_or_else(|| config_err(None, format!("missing required key `{key}`")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<ExperimentConfig, CliError> {
        let mut raw = RawConfig::parse(text)?;

        let train_seed: u64 = raw.take("train.seed")?.unwrap_or(42);
        let data = DataSection {
            n: raw.require("data.n")?,
            d: raw.require("data.d")?,
            mu_norm: raw.take("data.mu_norm")?.unwrap_or(1.0),
            sigma_p: raw.require("data.sigma_p")?,
            seed: raw.take("data.seed")?.unwrap_or_else(|| derive_seed(train_seed, 0xda7a, 0)),
        };
        let model = ModelSection {
            m: raw.require("model.m")?,
            kappa: raw.take("model.kappa")?.unwrap_or(defaults::KAPPA),
            q: raw.take("model.q")?.unwrap_or(defaults::Q),
        };
        let checkpoint_every = match raw.take::<String>("train.checkpoint_every")? {
            None => None,
            Some(v) if v == "never" => None,
            Some(v) => Some(v.parse::<u64>().map_err(|_| {
                config_err(None, format!("train.checkpoint_every must be a step count or `never`, got `{v}`"))
            })?),
        };
        let train = TrainSection {
            algo: raw.take("train.algo")?.unwrap_or_else(|| "gd".to_string()),
            mode: raw.take("train.mode")?.unwrap_or_else(|| "direct".to_string()),
            eta: raw.require("train.eta")?,
            steps: raw.require("train.steps")?,
            sigma0: raw.take("train.sigma0")?.unwrap_or(defaults::SIGMA0),
            sigma_b: raw.take("train.sigma_b")?.unwrap_or(0.0),
            seed: train_seed,
            eval_every: raw.take("train.eval_every")?.unwrap_or(defaults::EVAL_EVERY),
            checkpoint_every,
            track_decomposition: raw.take("train.track_decomposition")?.unwrap_or(true),
        };
        let eval = EvalSection {
            n_test: raw.take("eval.n_test")?.unwrap_or(defaults::N_TEST),
            seed: raw.take("eval.seed")?.unwrap_or_else(|| derive_seed(train_seed, 0xeva1, 0)),
            tie_policy: raw.take("eval.tie_policy")?.unwrap_or_else(|| "error".to_string()),
        };
        let privacy = PrivacySection { delta: raw.take("privacy.delta")?.unwrap_or(defaults::DELTA) };
        let c_values = match raw.take::<String>("analysis.c_values")? {
            None => vec![1.0],
            Some(list) => {
                let mut out = Vec::new();
                for piece in list.split(',') {
                    out.push(piece.trim().parse::<f64>().map_err(|_| {
                        config_err(None, format!("analysis.c_values: cannot parse `{piece}`"))
                    })?);
                }
                out
            }
        };
        let analysis = AnalysisSection {
            target_loss: raw.take("analysis.target_loss")?.unwrap_or(0.1),
            c_values,
        };
        let output = OutputSection {
            dir: raw.take("output.dir")?.unwrap_or_else(|| "runs/out".to_string()),
            emit_svg: raw.take("output.emit_svg")?.unwrap_or(true),
        };

        if let Some((key, (_, line))) = raw.entries.iter().next() {
            return Err(config_err(Some(*line), format!("unknown key `{key}`")));
        }

        let cfg = ExperimentConfig { data, model, train, eval, privacy, analysis, output };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.algo()?;
        self.mode()?;
        self.tie_policy()?;
        if self.data.n == 0 {
            return Err(config_err(None, "data.n must be >= 1"));
        }
        if self.data.d == 0 {
            return Err(config_err(None, "data.d must be >= 1"));
        }
        if !(self.data.sigma_p > 0.0) {
            return Err(config_err(None, "data.sigma_p must be positive"));
        }
        if !(self.data.mu_norm > 0.0) {
            return Err(config_err(None, "data.mu_norm must be positive"));
        }
        if self.train.algo == "dpgd" && self.train.sigma_b <= 0.0 {
            return Err(config_err(None, "train.algo = dpgd requires train.sigma_b > 0"));
        }
        self.train_config().map_err(|e| config_err(None, e.to_string()))?;
        if self.eval.n_test == 0 {
            return Err(config_err(None, "eval.n_test must be >= 1"));
        }
        if !(self.privacy.delta > 0.0 && self.privacy.delta < 1.0) {
            return Err(config_err(None, "privacy.delta must lie in (0,1)"));
        }
        Ok(())
    }

    pub fn algo(&self) -> Result<Algo, CliError> {
        match self.train.algo.as_str() {
            "gd" => Ok(Algo::Gd),
            "dpgd" => Ok(Algo::Dpgd),
            other => Err(config_err(None, format!("train.algo must be gd|dpgd, got `{other}`"))),
        }
    }

    pub fn mode(&self) -> Result<Mode, CliError> {
        match self.train.mode.as_str() {
            "direct" => Ok(Mode::Direct),
            "kernel" => Ok(Mode::Kernel),
            other => Err(config_err(None, format!("train.mode must be direct|kernel, got `{other}`"))),
        }
    }

    pub fn tie_policy(&self) -> Result<TiePolicy, CliError> {
        match self.eval.tie_policy.as_str() {
            "error" => Ok(TiePolicy::Error),
            "half" => Ok(TiePolicy::Half),
            other => Err(config_err(None, format!("eval.tie_policy must be error|half, got `{other}`"))),
        }
    }

    pub fn train_config(&self) -> dpgd_core::Result<TrainConfig> {
        let cfg = TrainConfig {
            m: self.model.m,
            eta: self.train.eta,
            steps: self.train.steps,
            sigma0: self.train.sigma0,
            sigma_b: self.train.sigma_b,
            algo: if self.train.algo == "dpgd" { Algo::Dpgd } else { Algo::Gd },
            mode: if self.train.mode == "kernel" { Mode::Kernel } else { Mode::Direct },
            seed: self.train.seed,
            eval_every: self.train.eval_every,
            checkpoint_every: self.train.checkpoint_every,
            track_decomposition: self.train.track_decomposition,
            log_noise_projections: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            n_test: self.eval.n_test,
            seed: self.eval.seed,
            tie_policy: match self.eval.tie_policy.as_str() {
                "half" => TiePolicy::Half,
                _ => TiePolicy::Error,
            },
        }
    }

    pub fn mechanism_params(&self) -> MechanismParams {
        MechanismParams {
            n: self.data.n,
            m: self.model.m,
            steps: self.train.steps,
            mu_norm: self.data.mu_norm,
            sigma_p: self.data.sigma_p,
            d: self.data.d,
            sigma_b: self.train.sigma_b,
            delta: self.privacy.delta,
        }
    }

    pub fn scale_params(&self) -> ScaleParams {
        ScaleParams {
            n: self.data.n,
            m: self.model.m,
            d: self.data.d,
            mu_norm: self.data.mu_norm,
            sigma_p: self.data.sigma_p,
            kappa: self.model.kappa,
            q: self.model.q,
            sigma0: self.train.sigma0,
            eta: self.train.eta,
            sigma_b: self.train.sigma_b,
            delta: self.privacy.delta,
            target_loss: self.analysis.target_loss,
        }
    }

    /// Canonical flat text; `parse(render())` reproduces the config.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let mut push = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        push("data.n", self.data.n.to_string());
        push("data.d", self.data.d.to_string());
        push("data.mu_norm", self.data.mu_norm.to_string());
        push("data.sigma_p", self.data.sigma_p.to_string());
        push("data.seed", self.data.seed.to_string());
        push("model.m", self.model.m.to_string());
        push("model.kappa", self.model.kappa.to_string());
        push("model.q", self.model.q.to_string());
        push("train.algo", self.train.algo.clone());
        push("train.mode", self.train.mode.clone());
        push("train.eta", self.train.eta.to_string());
        push("train.steps", self.train.steps.to_string());
        push("train.sigma0", self.train.sigma0.to_string());
        push("train.sigma_b", self.train.sigma_b.to_string());
        push("train.seed", self.train.seed.to_string());
        push("train.eval_every", self.train.eval_every.to_string());
        push(
            "train.checkpoint_every",
            self.train.checkpoint_every.map(|v| v.to_string()).unwrap_or_else(|| "never".into()),
        );
        push("train.track_decomposition", self.train.track_decomposition.to_string());
        push("eval.n_test", self.eval.n_test.to_string());
        push("eval.seed", self.eval.seed.to_string());
        push("eval.tie_policy", self.eval.tie_policy.clone());
        push("privacy.delta", self.privacy.delta.to_string());
        push("analysis.target_loss", self.analysis.target_loss.to_string());
        push(
            "analysis.c_values",
            self.analysis.c_values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        );
        push("output.dir", self.output.dir.clone());
        push("output.emit_svg", self.output.emit_svg.to_string());
        s
    }
}

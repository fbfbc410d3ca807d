//! Flat `key = value` run configuration. Lines starting with `#` are
//! comments; later assignments override earlier ones, and command-line
//! overrides are applied last.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::EntityMode;
use crate::error::{CdmError, Result};
use crate::models::{ModelConfig, ModelKind, NcdmInit};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dataset_dir: PathBuf,
    /// Relative to `dataset_dir` unless absolute.
    pub logs_file: PathBuf,
    pub q_file: PathBuf,
    /// External id of Q-matrix row 0.
    pub q_base: i64,
    pub min_logs: usize,
    pub first_attempt_only: bool,
    pub test_ratio: f64,
    pub val_ratio: f64,
    pub out_dir: PathBuf,
    /// Model trained by `train` and `export`.
    pub model: ModelKind,
    /// Models compared by the experiment commands.
    pub models: Vec<ModelKind>,
    pub train: TrainConfig,
    pub rq1_seeds: usize,
    pub rq1_modes: Vec<EntityMode>,
    /// Keep only the first this-many learners before augmentation (0 keeps all).
    pub rq1_max_learners: usize,
    pub hist_bin_width: f64,
    pub rq2_seeds: usize,
    pub rq3_seeds: usize,
    pub rq3_majority: bool,
    pub threshold: f64,
    pub from_checkpoint: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("data"),
            logs_file: PathBuf::from("logs.csv"),
            q_file: PathBuf::from("q.csv"),
            q_base: 0,
            min_logs: 1,
            first_attempt_only: false,
            test_ratio: 0.2,
            val_ratio: 0.1,
            out_dir: PathBuf::from("out"),
            model: ModelKind::IdCdm,
            models: vec![ModelKind::IdCdm, ModelKind::Ncdm],
            train: TrainConfig::default(),
            rq1_seeds: 5,
            rq1_modes: vec![EntityMode::Learner, EntityMode::Question],
            rq1_max_learners: 0,
            hist_bin_width: 0.05,
            rq2_seeds: 1,
            rq3_seeds: 1,
            rq3_majority: true,
            threshold: 0.5,
            from_checkpoint: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CdmError::Config(format!("{key}: cannot parse `{value}`: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(CdmError::Config(format!(
            "{key}: expected true or false, got `{value}`"
        ))),
    }
}

fn parse_list<T>(key: &str, value: &str, item: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(CdmError::Config(format!("{key}: empty list")));
    }
    Ok(items)
}

fn parse_mode(value: &str) -> Result<EntityMode> {
    match value.to_ascii_lowercase().as_str() {
        "learner" => Ok(EntityMode::Learner),
        "question" => Ok(EntityMode::Question),
        other => Err(CdmError::Config(format!("unknown mode `{other}`"))),
    }
}

fn parse_init(value: &str) -> Result<NcdmInit> {
    let v = value.to_ascii_lowercase();
    if v == "xavier" {
        return Ok(NcdmInit::Xavier);
    }
    match v.strip_prefix("constant") {
        Some("") => Ok(NcdmInit::Constant(0.0)),
        Some(rest) => Ok(NcdmInit::Constant(parse(
            "ncdm_init",
            rest.trim_start_matches([':', '=']),
        )?)),
        None => Err(CdmError::Config(format!(
            "ncdm_init: expected xavier or constant[:value], got `{value}`"
        ))),
    }
}

fn init_name(init: NcdmInit) -> String {
    match init {
        NcdmInit::Xavier => "xavier".into(),
        NcdmInit::Constant(c) => format!("constant:{c}"),
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let m: &mut ModelConfig = &mut self.train.model_config;
        match key.trim() {
            "dataset_dir" => self.dataset_dir = value.into(),
            "logs_file" => self.logs_file = value.into(),
            "q_file" => self.q_file = value.into(),
            "q_base" => self.q_base = parse(key, value)?,
            "min_logs" => self.min_logs = parse(key, value)?,
            "first_attempt_only" => self.first_attempt_only = parse_bool(key, value)?,
            "test_ratio" => self.test_ratio = parse(key, value)?,
            "val_ratio" => self.val_ratio = parse(key, value)?,
            "out_dir" => self.out_dir = value.into(),
            "model" => self.model = value.parse()?,
            "models" => self.models = parse_list(key, value, str::parse)?,
            "seed" => self.train.seed = parse(key, value)?,
            "lr" => self.train.lr = parse(key, value)?,
            "beta1" => self.train.beta1 = parse(key, value)?,
            "beta2" => self.train.beta2 = parse(key, value)?,
            "eps" => self.train.eps = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "max_epochs" => self.train.max_epochs = parse(key, value)?,
            "patience" => self.train.patience = parse(key, value)?,
            "learner_hidden" => m.learner_hidden = parse(key, value)?,
            "question_hidden1" => m.question_hidden1 = parse(key, value)?,
            "question_hidden2" => m.question_hidden2 = parse(key, value)?,
            "agg_dim" => m.agg_dim = parse(key, value)?,
            "pred_hidden1" => m.pred_hidden1 = parse(key, value)?,
            "pred_hidden2" => m.pred_hidden2 = parse(key, value)?,
            "ncdm_hidden1" => m.ncdm_hidden1 = parse(key, value)?,
            "ncdm_hidden2" => m.ncdm_hidden2 = parse(key, value)?,
            "mirt_dim" => m.mirt_dim = parse(key, value)?,
            "monotonicity" => m.monotonicity = parse_bool(key, value)?,
            "encoder" => m.encoder = parse_bool(key, value)?,
            "constrain_predictive" => m.constrain_predictive = parse_bool(key, value)?,
            "ncdm_init" => m.ncdm_init = parse_init(value)?,
            "rq1_seeds" => self.rq1_seeds = parse(key, value)?,
            "rq1_modes" => self.rq1_modes = parse_list(key, value, parse_mode)?,
            "rq1_max_learners" => self.rq1_max_learners = parse(key, value)?,
            "hist_bin_width" => self.hist_bin_width = parse(key, value)?,
            "rq2_seeds" => self.rq2_seeds = parse(key, value)?,
            "rq3_seeds" => self.rq3_seeds = parse(key, value)?,
            "rq3_majority" => self.rq3_majority = parse_bool(key, value)?,
            "threshold" => self.threshold = parse(key, value)?,
            "from_checkpoint" => {
                self.from_checkpoint = (!value.is_empty()).then(|| PathBuf::from(value));
            }
            other => return Err(CdmError::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies every assignment in `text`; `origin` names the source in errors.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CdmError::Config(format!("{origin}:{}: expected `key = value`", n + 1)));
            };
            self.set(key, value)
                .map_err(|e| CdmError::Config(format!("{origin}:{}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CdmError::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    /// Every key with its current value, in a form `apply_text` accepts.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let m = &t.model_config;
        let path = |p: &Path| p.display().to_string();
        vec![
            ("dataset_dir", path(&self.dataset_dir)),
            ("logs_file", path(&self.logs_file)),
            ("q_file", path(&self.q_file)),
            ("q_base", self.q_base.to_string()),
            ("min_logs", self.min_logs.to_string()),
            ("first_attempt_only", self.first_attempt_only.to_string()),
            ("test_ratio", self.test_ratio.to_string()),
            ("val_ratio", self.val_ratio.to_string()),
            ("out_dir", path(&self.out_dir)),
            ("model", self.model.to_string()),
            ("models", join(&self.models)),
            ("seed", t.seed.to_string()),
            ("lr", t.lr.to_string()),
            ("beta1", t.beta1.to_string()),
            ("beta2", t.beta2.to_string()),
            ("eps", t.eps.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("learner_hidden", m.learner_hidden.to_string()),
            ("question_hidden1", m.question_hidden1.to_string()),
            ("question_hidden2", m.question_hidden2.to_string()),
            ("agg_dim", m.agg_dim.to_string()),
            ("pred_hidden1", m.pred_hidden1.to_string()),
            ("pred_hidden2", m.pred_hidden2.to_string()),
            ("ncdm_hidden1", m.ncdm_hidden1.to_string()),
            ("ncdm_hidden2", m.ncdm_hidden2.to_string()),
            ("mirt_dim", m.mirt_dim.to_string()),
            ("monotonicity", m.monotonicity.to_string()),
            ("encoder", m.encoder.to_string()),
            ("constrain_predictive", m.constrain_predictive.to_string()),
            ("ncdm_init", init_name(m.ncdm_init)),
            ("rq1_seeds", self.rq1_seeds.to_string()),
            ("rq1_modes", join(&self.rq1_modes)),
            ("rq1_max_learners", self.rq1_max_learners.to_string()),
            ("hist_bin_width", self.hist_bin_width.to_string()),
            ("rq2_seeds", self.rq2_seeds.to_string()),
            ("rq3_seeds", self.rq3_seeds.to_string()),
            ("rq3_majority", self.rq3_majority.to_string()),
            ("threshold", self.threshold.to_string()),
            (
                "from_checkpoint",
                self.from_checkpoint.as_deref().map(path).unwrap_or_default(),
            ),
        ]
    }

    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn logs_path(&self) -> PathBuf {
        self.dataset_dir.join(&self.logs_file)
    }

    pub fn q_path(&self) -> PathBuf {
        self.dataset_dir.join(&self.q_file)
    }

    /// Training settings for one model kind with a given seed.
    pub fn train_config(&self, kind: ModelKind, seed: u64) -> TrainConfig {
        let mut t = self.train.clone();
        t.model = kind;
        t.seed = seed;
        kind.apply_to(&mut t.model_config);
        t
    }

    pub fn seed(&self) -> u64 {
        self.train.seed
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.apply_text(
            "# comment\nmodel = ncdm-const\nmodels = idcdm, irt\nrq1_modes = question\nncdm_init = constant:-1.5\nlr=0.01\n\nfrom_checkpoint = m.ckpt\n",
            "test",
        )
        .unwrap();
        assert_eq!(cfg.model, ModelKind::NcdmConst);
        assert_eq!(cfg.models, vec![ModelKind::IdCdm, ModelKind::Irt]);
        assert_eq!(cfg.rq1_modes, vec![EntityMode::Question]);
        assert_eq!(cfg.train.model_config.ncdm_init, NcdmInit::Constant(-1.5));
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.from_checkpoint, Some(PathBuf::from("m.ckpt")));
        let mut back = RunConfig::default();
        back.apply_text(&cfg.to_text(), "round trip").unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn every_listed_key_is_settable() {
        let cfg = RunConfig::default();
        let mut other = RunConfig::default();
        for (k, v) in cfg.pairs() {
            other.set(k, &v).unwrap_or_else(|e| panic!("{k}: {e}"));
        }
        assert_eq!(other, cfg);
    }

    #[test]
    fn errors_name_the_line() {
        let mut cfg = RunConfig::default();
        let err = cfg.apply_text("seed = 1\nbatch_size = many\n", "run.cfg").unwrap_err();
        assert!(err.to_string().contains("run.cfg:2"), "{err}");
        assert!(cfg.apply_text("nonsense", "x").is_err());
        assert!(cfg.set("colour", "blue").is_err());
        assert!(cfg.set("monotonicity", "maybe").is_err());
        assert!(cfg.set("model", "gpt").is_err());
        assert!(cfg.set("models", " , ").is_err());
    }

    #[test]
    fn train_config_applies_ablations() {
        let cfg = RunConfig::default();
        let t = cfg.train_config(ModelKind::IdCdmNoMono, 7);
        assert_eq!(t.seed, 7);
        assert!(!t.model_config.monotonicity);
        assert!(cfg.train_config(ModelKind::IdCdm, 7).model_config.monotonicity);
    }
}

use approx::assert_abs_diff_eq;
use tempfile::tempdir;

use super::*;
use crate::dataset::synthetic::{generate, SyntheticConfig};
use crate::dataset::{split_dataset, ResponseDataset};

fn small_data(seed: u64) -> ResponseDataset {
    generate(&SyntheticConfig {
        learners: 40,
        questions: 8,
        concepts: 3,
        concepts_per_question: 1.5,
        seed,
        ..SyntheticConfig::math1_like(seed)
    })
    .unwrap()
}

fn small_cfg(kind: ModelKind, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::for_kind(kind);
    cfg.model_config.learner_hidden = 8;
    cfg.model_config.question_hidden1 = 8;
    cfg.model_config.question_hidden2 = 6;
    cfg.model_config.agg_dim = 4;
    cfg.model_config.pred_hidden1 = 6;
    cfg.model_config.pred_hidden2 = 4;
    cfg.model_config.ncdm_hidden1 = 6;
    cfg.model_config.ncdm_hidden2 = 4;
    cfg.model_config.mirt_dim = 3;
    cfg.batch_size = 32;
    cfg.max_epochs = 8;
    cfg.patience = 2;
    cfg.seed = seed;
    cfg
}

fn set_scalar(model: &mut Model, name: &str, r: usize, value: f64) {
    let id = model.params().find(name).unwrap();
    model.params_mut().get_mut(id).value.set(r, 0, value);
}

#[test]
fn single_correct_response_is_learned() {
    let q = QMatrix::new(vec![vec![1]]).unwrap();
    let split = DataSplit {
        fit: vec![ResponseLog::new(0, 0, 1)],
        validation: vec![],
        test: vec![],
    };
    let mut cfg = small_cfg(ModelKind::IdCdm, 3);
    cfg.max_epochs = 200;
    cfg.patience = 200;
    let dims = Dims {
        learners: 1,
        questions: 1,
        concepts: 1,
    };
    let mut model = cfg.build_model(dims).unwrap();
    let report = train(&mut model, &split, &q, &cfg).unwrap();
    assert_eq!(report.monitor, Monitor::Fit);
    let ctx = FitContext::new(dims, &split.fit, &q).unwrap();
    let y = model.predict(&ctx, 0, 0).unwrap();
    assert!(y > 0.9, "y = {y}");
}

#[test]
fn training_is_reproducible() {
    let ds = small_data(1);
    let split = split_dataset(&ds.logs, 0.2, 0.1, 4).unwrap();
    for kind in [ModelKind::IdCdm, ModelKind::Ncdm, ModelKind::Dina] {
        let cfg = small_cfg(kind, 5);
        let mut a = cfg.build_model(Dims::of(&ds)).unwrap();
        let mut b = cfg.build_model(Dims::of(&ds)).unwrap();
        let ra = train(&mut a, &split, &ds.q_matrix, &cfg).unwrap();
        let rb = train(&mut b, &split, &ds.q_matrix, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(ra.to_json().unwrap(), rb.to_json().unwrap());
        assert_eq!(a.params().snapshot(), b.params().snapshot());
    }
}

#[test]
fn best_parameters_are_restored() {
    let ds = small_data(2);
    let split = split_dataset(&ds.logs, 0.2, 0.2, 1).unwrap();
    let mut cfg = small_cfg(ModelKind::IdCdm, 2);
    cfg.max_epochs = 12;
    let mut model = cfg.build_model(Dims::of(&ds)).unwrap();
    let report = train(&mut model, &split, &ds.q_matrix, &cfg).unwrap();
    assert_eq!(report.monitor, Monitor::Validation);
    assert!(report.best_epoch >= 1 && report.best_epoch <= report.epochs.len());
    let min = report
        .epochs
        .iter()
        .filter_map(|e| e.val_loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(report.best_loss, min);
    let ctx = FitContext::new(model.dims(), &split.fit, &ds.q_matrix).unwrap();
    assert_eq!(evaluate_loss(&model, &ctx, &split.validation).unwrap(), min);
    assert!(model.params().constrained_min() >= 0.0);
}

#[test]
fn early_stopping_respects_patience() {
    let ds = small_data(3);
    let split = split_dataset(&ds.logs, 0.2, 0.2, 1).unwrap();
    let mut cfg = small_cfg(ModelKind::Irt, 2);
    cfg.max_epochs = 400;
    cfg.patience = 1;
    cfg.lr = 0.2;
    let mut model = cfg.build_model(Dims::of(&ds)).unwrap();
    let report = train(&mut model, &split, &ds.q_matrix, &cfg).unwrap();
    if report.stopped_early {
        assert_eq!(report.epochs.len(), report.best_epoch + cfg.patience);
    } else {
        assert_eq!(report.epochs.len(), cfg.max_epochs);
    }
}

#[test]
fn evaluate_loss_reference_values() {
    let ds = small_data(4);
    let ctx = FitContext::new(Dims::of(&ds), &ds.logs, &ds.q_matrix).unwrap();
    let mut model = small_cfg(ModelKind::Irt, 1).build_model(Dims::of(&ds)).unwrap();
    for name in ["theta", "log_a", "b"] {
        let id = model.params().find(name).unwrap();
        let shape = model.params().value(id).shape();
        model.params_mut().get_mut(id).value = crate::diffcore::Matrix::zeros(shape.0, shape.1);
    }
    // a = exp(0) = 1 and theta = b = 0, so y = 0.5 everywhere
    assert_abs_diff_eq!(
        evaluate_loss(&model, &ctx, &ds.logs).unwrap(),
        2f64.ln(),
        epsilon = 1e-12
    );

    // y = sigmoid(40) saturates to the clamp
    set_scalar(&mut model, "theta", 0, 40.0);
    let perfect = [ResponseLog::new(0, 0, 1)];
    let loss = evaluate_loss(&model, &ctx, &perfect).unwrap();
    assert_abs_diff_eq!(loss, -(1.0 - 1e-7f64).ln(), epsilon = 1e-15);

    // two logs: y1 = sigmoid(1), r1 = 1 and y2 = sigmoid(-2), r2 = 0
    set_scalar(&mut model, "theta", 0, 1.0);
    set_scalar(&mut model, "theta", 1, -2.0);
    let logs = [ResponseLog::new(0, 1, 1), ResponseLog::new(1, 2, 0)];
    let y1 = 1.0 / (1.0 + (-1.0f64).exp());
    let y2 = 1.0 / (1.0 + 2.0f64.exp());
    let expected = (-(y1.ln()) - (1.0 - y2).ln()) / 2.0;
    assert_abs_diff_eq!(evaluate_loss(&model, &ctx, &logs).unwrap(), expected, epsilon = 1e-12);

    assert!(matches!(evaluate_loss(&model, &ctx, &[]), Err(CdmError::Empty(_))));
}

#[test]
fn non_finite_loss_aborts_with_location() {
    let ds = small_data(5);
    let split = split_dataset(&ds.logs, 0.2, 0.0, 1).unwrap();
    let cfg = small_cfg(ModelKind::Irt, 1);
    let mut model = cfg.build_model(Dims::of(&ds)).unwrap();
    let id = model.params().find("theta").unwrap();
    model.params_mut().get_mut(id).value.data_mut().fill(f64::NAN);
    match train(&mut model, &split, &ds.q_matrix, &cfg) {
        Err(CdmError::NonFinite { detail, .. }) => assert!(detail.contains("epoch 1, batch 0"), "{detail}"),
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn invalid_configs_are_rejected() {
    let ds = small_data(5);
    let split = split_dataset(&ds.logs, 0.2, 0.0, 1).unwrap();
    let mut cfg = small_cfg(ModelKind::Irt, 1);
    let mut model = cfg.build_model(Dims::of(&ds)).unwrap();
    cfg.batch_size = 0;
    assert!(matches!(
        train(&mut model, &split, &ds.q_matrix, &cfg),
        Err(CdmError::Config(_))
    ));
    let cfg = small_cfg(ModelKind::Irt, 1);
    let empty = DataSplit {
        fit: vec![],
        validation: vec![],
        test: vec![],
    };
    assert!(train(&mut model, &empty, &ds.q_matrix, &cfg).is_err());
}

#[test]
fn report_files() {
    let ds = small_data(6);
    let split = split_dataset(&ds.logs, 0.2, 0.0, 1).unwrap();
    let cfg = small_cfg(ModelKind::Mirt, 1);
    let mut model = cfg.build_model(Dims::of(&ds)).unwrap();
    let report = train(&mut model, &split, &ds.q_matrix, &cfg).unwrap();
    let dir = tempdir().unwrap();
    report.write_json(&dir.path().join("report.json")).unwrap();
    report.write_epochs_csv(&dir.path().join("epochs.csv")).unwrap();
    report.write_timing_csv(&dir.path().join("timing.csv")).unwrap();
    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let back: TrainReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    assert!(!json.contains("seconds"));
    let csv = std::fs::read_to_string(dir.path().join("epochs.csv")).unwrap();
    assert_eq!(csv.lines().count(), report.epochs.len() + 1);
    assert!(csv.lines().nth(1).unwrap().ends_with(",,"));
}

#[test]
fn checkpoint_round_trip_is_bit_identical() {
    let ds = small_data(7);
    let split = split_dataset(&ds.logs, 0.2, 0.1, 2).unwrap();
    let dir = tempdir().unwrap();
    for kind in ModelKind::ALL {
        let mut cfg = small_cfg(kind, 9);
        cfg.max_epochs = 2;
        let mut model = cfg.build_model(Dims::of(&ds)).unwrap();
        train(&mut model, &split, &ds.q_matrix, &cfg).unwrap();
        let path = dir.path().join(format!("{kind}.ckpt"));
        save_checkpoint(&model, &path).unwrap();
        let back = load_checkpoint_as(&path, kind).unwrap();
        assert_eq!(back.params(), model.params());
        let ctx = FitContext::new(model.dims(), &split.fit, &ds.q_matrix).unwrap();
        let pairs: Vec<ResponseLog> = (0..100)
            .map(|t| ResponseLog::new((t * 7) % 40, (t * 3) % 8, 0))
            .collect();
        assert_eq!(
            back.predict_logs(&ctx, &pairs).unwrap(),
            model.predict_logs(&ctx, &pairs).unwrap()
        );
    }
}

#[test]
fn damaged_checkpoints_are_rejected() {
    let ds = small_data(8);
    let dir = tempdir().unwrap();
    let model = small_cfg(ModelKind::Ncdm, 1).build_model(Dims::of(&ds)).unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let cut = dir.path().join("cut.ckpt");
    for len in [0, 5, 14, 100, bytes.len() - 1] {
        std::fs::write(&cut, &bytes[..len]).unwrap();
        assert!(
            matches!(load_checkpoint(&cut), Err(CdmError::CorruptCheckpoint(_))),
            "len {len}"
        );
    }
    let mut longer = bytes.clone();
    longer.push(0);
    std::fs::write(&cut, &longer).unwrap();
    assert!(matches!(load_checkpoint(&cut), Err(CdmError::CorruptCheckpoint(_))));

    let mut future = bytes.clone();
    future[8..12].copy_from_slice(&99u32.to_le_bytes());
    std::fs::write(&cut, &future).unwrap();
    assert!(matches!(
        load_checkpoint(&cut),
        Err(CdmError::CheckpointVersion { found: 99, .. })
    ));

    assert!(matches!(
        load_checkpoint_as(&path, ModelKind::IdCdm),
        Err(CdmError::KindMismatch { .. })
    ));
    assert!(matches!(
        load_checkpoint(&dir.path().join("missing.ckpt")),
        Err(CdmError::NotFound(_))
    ));
}

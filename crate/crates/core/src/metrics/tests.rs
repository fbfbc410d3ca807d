use approx::assert_abs_diff_eq;
use proptest::prelude::*;

use super::*;

fn q(rows: Vec<Vec<u8>>) -> QMatrix {
    QMatrix::new(rows).unwrap()
}

fn traits(rows: &[&[f64]]) -> Matrix {
    Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

/// Direct evaluation of the DOC definition over every ordered learner pair.
fn doc_oracle(theta: &Matrix, scores: &[Vec<Option<u8>>], q: &QMatrix) -> Vec<Option<f64>> {
    let n = theta.rows();
    (0..q.questions())
        .map(|l| {
            let (mut num, mut den) = (0u64, 0u64);
            for i in 0..n {
                for j in 0..n {
                    let (Some(ri), Some(rj)) = (scores[i][l], scores[j][l]) else {
                        continue;
                    };
                    if ri <= rj {
                        continue;
                    }
                    for k in 0..q.concepts() {
                        if q.row(l)[k] == 0 {
                            continue;
                        }
                        if theta.get(i, k) > theta.get(j, k) {
                            num += 1;
                        }
                        if theta.get(i, k) != theta.get(j, k) {
                            den += 1;
                        }
                    }
                }
            }
            (den > 0).then(|| num as f64 / den as f64)
        })
        .collect()
}

fn logs_of(scores: &[Vec<Option<u8>>]) -> Vec<ResponseLog> {
    let mut logs = Vec::new();
    for (i, row) in scores.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            if let Some(s) = s {
                logs.push(ResponseLog::new(i, j, *s));
            }
        }
    }
    logs
}

#[test]
fn manhattan_examples() {
    assert_eq!(manhattan(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
    assert_eq!(manhattan(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
    assert_abs_diff_eq!(manhattan(&[0.2, 0.7], &[0.5, 0.1]).unwrap(), 0.9, epsilon = 1e-15);
    assert!(matches!(
        manhattan(&[0.0], &[0.0, 1.0]),
        Err(CdmError::Dimension { .. })
    ));
}

#[test]
fn ids_examples() {
    let t = traits(&[&[0.1, 0.2], &[0.1, 0.2], &[0.5, 0.5], &[0.5, 0.5], &[0.9, 0.0]]);
    assert_eq!(ids(&t, &[vec![0, 1], vec![2, 3], vec![4]]).unwrap(), 1.0);
    let t = traits(&[&[0.0, 0.0], &[1.0, 0.0]]);
    assert_eq!(ids(&t, &[vec![0, 1]]).unwrap(), 0.25);
    assert!(matches!(ids(&t, &[vec![0], vec![1]]), Err(CdmError::NoIdenticalPairs)));
    assert!(ids(&t, &[vec![0, 2]]).is_err());
}

#[test]
fn ids_weights_groups_by_pair_count() {
    // one group of three at distance 0 (6 ordered pairs), one pair at distance 1 (2 ordered pairs)
    let t = traits(&[&[0.5], &[0.5], &[0.5], &[0.0], &[1.0]]);
    let got = ids(&t, &[vec![0, 1, 2], vec![3, 4]]).unwrap();
    assert_abs_diff_eq!(got, (6.0 * 1.0 + 2.0 * 0.25) / 8.0, epsilon = 1e-15);
}

#[test]
fn doc_examples() {
    let qm = q(vec![vec![1]]);
    let logs = [ResponseLog::new(0, 0, 1), ResponseLog::new(1, 0, 0)];
    assert_eq!(doc(&traits(&[&[0.8], &[0.3]]), &logs, &qm).unwrap().mean, 1.0);
    assert_eq!(doc(&traits(&[&[0.2], &[0.6]]), &logs, &qm).unwrap().mean, 0.0);

    let qm = q(vec![vec![1, 1]]);
    let t = traits(&[&[0.8, 0.1], &[0.3, 0.6]]);
    let res = doc(&t, &logs, &qm).unwrap();
    assert_eq!(res.mean, 0.5);
    let scores = vec![vec![Some(1)], vec![Some(0)]];
    assert_eq!(res.per_question, doc_oracle(&t, &scores, &qm));
}

#[test]
fn doc_skips_undefined_questions() {
    let qm = q(vec![vec![1], vec![1]]);
    // question 1 has only correct answers
    let logs = [
        ResponseLog::new(0, 0, 1),
        ResponseLog::new(1, 0, 0),
        ResponseLog::new(0, 1, 1),
        ResponseLog::new(1, 1, 1),
    ];
    let res = doc(&traits(&[&[0.8], &[0.3]]), &logs, &qm).unwrap();
    assert_eq!(res.per_question, vec![Some(1.0), None]);
    assert_eq!(res.mean, 1.0);
    // tied traits are not comparable
    assert!(matches!(
        doc(&traits(&[&[0.4], &[0.4]]), &logs, &qm),
        Err(CdmError::NoDefinedDoc)
    ));
}

#[test]
fn doc_rejects_bad_shapes() {
    let qm = q(vec![vec![1, 0]]);
    let logs = [ResponseLog::new(0, 0, 1)];
    assert!(doc(&traits(&[&[0.5]]), &logs, &qm).is_err());
    assert!(doc(&traits(&[&[0.5, 0.5]]), &[ResponseLog::new(3, 0, 1)], &qm).is_err());
}

#[test]
fn reo_examples() {
    assert_eq!(reo(0.8, 0.8).unwrap(), 0.0);
    assert_eq!(reo(0.8, 0.6).unwrap(), 0.25);
    assert!(reo(0.6, 0.8).unwrap() < 0.0);
    assert_abs_diff_eq!(reo(0.6, 0.8).unwrap(), -1.0 / 3.0, epsilon = 1e-15);
    assert!(matches!(reo(0.0, 0.5), Err(CdmError::ZeroTrainDoc)));
    // long decimals go through plain floating point
    let (a, b) = (0.7123456789012345, 0.6512345678901234);
    assert_eq!(reo(a, b).unwrap(), 1.0 - b / a);
}

#[test]
fn classification_examples() {
    let m = classification_metrics(&[0.9, 0.2], &[1, 0], 0.5).unwrap();
    assert_eq!(m.acc, 1.0);
    assert_abs_diff_eq!(m.rmse, 0.025f64.sqrt(), epsilon = 1e-15);
    assert_eq!(m.f1, 1.0);
    assert_eq!(classification_metrics(&[0.5], &[1], 0.5).unwrap().acc, 1.0);
    let m = classification_metrics(&[0.0, 0.0], &[1, 1], 0.5).unwrap();
    assert_eq!(m.f1, 0.0);
    assert_eq!(m.acc, 0.0);
    assert_eq!(classification_metrics(&[0.1, 0.2], &[0, 0], 0.5).unwrap().f1, 0.0);
    // tp 1, fp 1, fn 1 gives precision = recall = 0.5
    assert_eq!(
        classification_metrics(&[0.9, 0.8, 0.1], &[1, 0, 1], 0.5).unwrap().f1,
        0.5
    );
    assert!(matches!(classification_metrics(&[], &[], 0.5), Err(CdmError::Empty(_))));
    assert!(classification_metrics(&[0.1], &[], 0.5).is_err());
}

#[test]
fn histogram_examples() {
    let bins = histogram(&[0.0, 0.0, 0.0], 0.1).unwrap();
    assert_eq!(bins.len(), 1);
    assert_eq!((bins[0].lo, bins[0].count, bins[0].cumulative), (0.0, 3, 1.0));

    let bins = histogram(&[0.0, 1.0, 1.0], 0.5).unwrap();
    assert_eq!(bins.len(), 2);
    assert_eq!((bins[0].lo, bins[0].hi, bins[0].count), (0.0, 0.5, 1));
    assert_eq!((bins[1].lo, bins[1].hi, bins[1].count), (1.0, 1.5, 2));
    assert_eq!(bins[1].cumulative, 1.0);
    assert_abs_diff_eq!(bins[0].cumulative, 1.0 / 3.0, epsilon = 1e-15);

    assert!(matches!(histogram(&[], 0.5), Err(CdmError::NoIdenticalPairs)));
    assert!(histogram(&[1.0], 0.0).is_err());
}

#[test]
fn histogram_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let t = traits(&[&[0.0], &[1.0], &[0.2], &[0.2]]);
    let bins = distance_histogram(&t, &[vec![0, 1], vec![2, 3]], 0.5).unwrap();
    let path = dir.path().join("h.csv");
    write_histogram_csv(&bins, &path).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert_eq!(text, "bin_lo,bin_hi,count,cumulative\n0,0.5,1,0.5\n1,1.5,1,1\n");
}

#[test]
fn report_serialises_missing_values_as_null() {
    let r = MetricsReport {
        ids_learner: Some(1.0),
        ..MetricsReport::default()
    };
    let json = serde_json::to_string(&r).unwrap();
    assert!(json.contains("\"ids_learner\":1.0"));
    assert!(json.contains("\"reo\":null"));
}

fn arb_doc_instance() -> impl Strategy<Value = (Matrix, Vec<Vec<Option<u8>>>, QMatrix)> {
    (2usize..=10, 1usize..=5, 1usize..=4).prop_flat_map(|(n, m, k)| {
        let theta = prop::collection::vec(0u8..6, n * k)
            .prop_map(move |v| Matrix::from_vec(n, k, v.into_iter().map(|x| f64::from(x) / 5.0).collect()).unwrap());
        let scores = prop::collection::vec(prop::collection::vec(prop::option::of(0u8..=1), m), n);
        let qrows = prop::collection::vec(prop::collection::vec(0u8..=1, k), m).prop_map(|mut rows| {
            for r in &mut rows {
                if r.iter().all(|&x| x == 0) {
                    r[0] = 1;
                }
            }
            QMatrix::new(rows).unwrap()
        });
        (theta, scores, qrows)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn doc_matches_pairwise_definition((theta, scores, qm) in arb_doc_instance()) {
        let logs = logs_of(&scores);
        let oracle = doc_oracle(&theta, &scores, &qm);
        match doc(&theta, &logs, &qm) {
            Ok(res) => prop_assert_eq!(res.per_question, oracle),
            Err(CdmError::NoDefinedDoc) => prop_assert!(oracle.iter().all(Option::is_none)),
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn doc_ignores_monotone_rescaling_of_a_concept((theta, scores, qm) in arb_doc_instance(), col in 0usize..4) {
        let col = col % theta.cols();
        let logs = logs_of(&scores);
        let mut bent = theta.clone();
        for i in 0..bent.rows() {
            let v = bent.get(i, col);
            bent.set(i, col, (3.0 * v).exp() - 7.0);
        }
        let a = doc(&theta, &logs, &qm).ok();
        let b = doc(&bent, &logs, &qm).ok();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn ids_is_one_exactly_when_groups_collapse(
        rows in prop::collection::vec(prop::collection::vec(0u8..4, 3), 2..12),
        split in 1usize..6,
    ) {
        let t = Matrix::from_rows(&rows.iter().map(|r| r.iter().map(|&x| f64::from(x) * 0.25).collect()).collect::<Vec<_>>()).unwrap();
        let n = t.rows();
        let cut = split.min(n - 1);
        let groups = vec![(0..cut).collect::<Vec<_>>(), (cut..n).collect()];
        let Ok(score) = ids(&t, &groups) else { return Ok(()); };
        let collapsed = within_group_distances(&t, &groups).unwrap().iter().all(|&d| d == 0.0);
        prop_assert_eq!(score == 1.0, collapsed);
        prop_assert!(score > 0.0 && score <= 1.0);
    }

    #[test]
    fn moving_a_group_member_away_lowers_ids(base in prop::collection::vec(0.0f64..1.0, 3), shift in 0.001f64..2.0) {
        let far: Vec<f64> = base.iter().map(|x| x + 0.3).collect();
        let farther: Vec<f64> = base.iter().enumerate().map(|(k, x)| if k == 0 { x + 0.3 + shift } else { x + 0.3 }).collect();
        let groups = [vec![0, 1]];
        let a = ids(&Matrix::from_rows(&[base.clone(), far]).unwrap(), &groups).unwrap();
        let b = ids(&Matrix::from_rows(&[base, farther]).unwrap(), &groups).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn reo_of_equal_docs_is_zero(d in 1e-9f64..1.0) {
        prop_assert_eq!(reo(d, d).unwrap(), 0.0);
    }
}

"""Inverse ensemble: submodel construction, pair weighting, union aggregation."""

import json

import numpy as np
import pytest

from corrml.dataset import CorrosionSample, Dataset, generate_inverse_synthetic
from corrml.errors import ValidationError
from corrml.inverse import (
    INVERSE_TARGETS,
    SUBMODEL_SETS,
    clamp_at_pct,
    evaluate_inverse,
    fit_inverse,
    inverse_features,
    inverse_from_dict,
    inverse_prediction_rows,
    inverse_report_rows,
    inverse_to_dict,
    pair_weights,
    predict_inverse,
    queries_from_dataset,
    submodel_predict,
)
from corrml.trees import predict_multi_output

QUICK = {"rf": {"n_estimators": 8, "max_depth": 10}, "gbm": {"n_rounds": 15}}


def _strip_extensions(dataset: Dataset) -> Dataset:
    samples = [CorrosionSample(id=s.id, composition=s.composition,
                               environment=s.environment, rate=s.rate)
               for s in dataset.samples]
    return Dataset(samples=samples, environment_names=dataset.environment_names)


def test_pair_weight_rule():
    assert pair_weights(0.8, 0.2) == (0.8, 0.2)
    assert pair_weights(0.5, 0.5) == (0.5, 0.5)
    assert pair_weights(-0.3, -0.9) == (0.5, 0.5)
    assert pair_weights(0.6, -0.5) == (1.0, 0.0)
    wf, wg = pair_weights(0.9, 0.3)
    assert wf == pytest.approx(0.75) and wg == pytest.approx(0.25)


def test_clamp_bounds():
    np.testing.assert_array_equal(clamp_at_pct(np.array([-0.3, 50.0, 150.0])),
                                  [0.0, 50.0, 100.0])


def test_feature_and_target_layout():
    data = generate_inverse_synthetic(40, seed=0)
    ids, X, Y = inverse_features(data, "base")
    assert X.shape == (40, 5) and Y.shape == (40, 6)
    ids_d, X_d, _ = inverse_features(data, "base+dur")
    assert X_d.shape[1] == 6 and len(ids_d) == round(0.85 * 40)
    ids_dt, X_dt, _ = inverse_features(data, "base+dur+temp")
    assert X_dt.shape[1] == 7
    assert len(ids_dt) <= len(ids_d) <= len(ids)
    with pytest.raises(ValidationError):
        inverse_features(data, "base+temp")


def test_fit_builds_three_submodels_with_subset_counts():
    data = generate_inverse_synthetic(80, seed=1)
    ens = fit_inverse(data, seed=0, configs=QUICK)
    assert ens.available_sets() == list(SUBMODEL_SETS)
    base = ens.submodels["base"]
    assert base.n_rows == 80
    assert ens.submodels["base+dur"].n_rows == round(0.85 * 80)
    assert ens.submodels["base+dur+temp"].n_rows < ens.submodels["base+dur"].n_rows
    for sub in ens.submodels.values():
        wf, wg = sub.weights
        assert wf >= 0 and wg >= 0
        assert wf + wg == pytest.approx(1.0)


def test_missing_durations_flag_submodels_absent():
    data = _strip_extensions(generate_inverse_synthetic(60, seed=2))
    ens = fit_inverse(data, seed=0, configs=QUICK)
    assert ens.available_sets() == ["base"]
    assert ens.submodels["base+dur"] is None
    assert ens.submodels["base+dur+temp"] is None
    preds = predict_inverse(ens, queries_from_dataset(data)[:5])
    assert all(p.contributing == ["base"] for p in preds)


def test_base_only_query_served_verbatim_by_base_submodel():
    data = generate_inverse_synthetic(70, seed=3)
    ens = fit_inverse(data, seed=1, configs=QUICK)
    q = {"id": "q0", "rate": 5.0, "environment": 3, "Al": 45.0, "Si": 2.0, "Mg": 4.0}
    pred = predict_inverse(ens, [q])[0]
    assert pred.contributing == ["base"]
    X = np.array([[5.0, 3.0, 45.0, 2.0, 4.0]])
    direct = submodel_predict(ens.submodels["base"], X)[0]
    for j, el in enumerate(INVERSE_TARGETS):
        assert pred.values[el] == pytest.approx(direct[j], rel=1e-12)


def test_pair_prediction_is_convex_combination():
    data = generate_inverse_synthetic(70, seed=4)
    ens = fit_inverse(data, seed=2, configs=QUICK)
    sub = ens.submodels["base"]
    _, X, _ = inverse_features(data, "base")
    f = predict_multi_output(sub.forest, X)
    g = predict_multi_output(sub.gbm, X)
    pair = submodel_predict(sub, X)
    lo = clamp_at_pct(np.minimum(f, g))
    hi = clamp_at_pct(np.maximum(f, g))
    assert np.all(pair >= lo - 1e-9) and np.all(pair <= hi + 1e-9)


def test_union_within_submodel_envelope_and_equal_outputs_pass_through():
    data = generate_inverse_synthetic(90, seed=5)
    ens = fit_inverse(data, seed=3, configs=QUICK)
    q = queries_from_dataset(data)
    full = [x for x in q if x["duration"] is not None and x["temperature"] is not None][:8]
    preds = predict_inverse(ens, full)
    for x, p in zip(full, preds):
        assert p.contributing == list(SUBMODEL_SETS)
        per_set = []
        for fs in SUBMODEL_SETS:
            from corrml.inverse import _query_vector
            per_set.append(submodel_predict(ens.submodels[fs],
                                            np.array([_query_vector(x, fs)]))[0])
        per_set = np.stack(per_set)
        for j, el in enumerate(INVERSE_TARGETS):
            assert per_set[:, j].min() - 1e-9 <= p.values[el] <= per_set[:, j].max() + 1e-9


def test_removing_unused_submodel_preserves_predictions():
    data = generate_inverse_synthetic(80, seed=6)
    ens = fit_inverse(data, seed=4, configs=QUICK)
    q = {"rate": 2.0, "environment": 1, "Al": 40.0, "Si": 1.0, "Mg": 2.0,
         "duration": 30.0}  # no temperature: base+dur+temp cannot serve
    before = predict_inverse(ens, [q])[0]
    ens.submodels["base+dur+temp"] = None
    after = predict_inverse(ens, [q])[0]
    assert before.values == after.values
    assert before.contributing == after.contributing == ["base", "base+dur"]


def test_fit_deterministic_in_seed():
    data = generate_inverse_synthetic(60, seed=7)
    a = fit_inverse(data, seed=5, configs=QUICK)
    b = fit_inverse(data, seed=5, configs=QUICK)
    assert inverse_to_dict(a) == inverse_to_dict(b)
    qs = queries_from_dataset(data)[:10]
    pa, pb = predict_inverse(a, qs), predict_inverse(b, qs)
    assert [p.values for p in pa] == [p.values for p in pb]


def test_evaluation_schema_and_recoverability():
    train = generate_inverse_synthetic(220, seed=8)
    test = generate_inverse_synthetic(80, seed=9)
    ens = fit_inverse(train, seed=6,
                      configs={"rf": {"n_estimators": 25}, "gbm": {"n_rounds": 60}})
    report = evaluate_inverse(ens, test)
    assert tuple(report.union) == INVERSE_TARGETS
    for el, m in report.union.items():
        assert m.r2 > 0.9, (el, m.r2)
    assert set(report.per_submodel) == set(SUBMODEL_SETS)
    assert report.counts["base"] == 80


def test_report_and_prediction_rows():
    data = generate_inverse_synthetic(50, seed=10)
    ens = fit_inverse(data, seed=7, configs=QUICK)
    report = evaluate_inverse(ens, data)
    rows = inverse_report_rows(report)
    assert rows[0] == ["element", "r2", "rmse", "submodel_set"]
    union_rows = [r for r in rows[1:] if r[3] == "union"]
    assert [r[0] for r in union_rows] == list(INVERSE_TARGETS)
    assert len(rows) == 1 + 6 + 6 * 3

    preds = predict_inverse(ens, queries_from_dataset(data)[:4])
    prows = inverse_prediction_rows(preds)
    assert prows[0] == ["query_id", "element", "predicted_at_pct", "contributing_submodels"]
    assert len(prows) == 1 + 4 * 6


def test_serialization_roundtrip():
    data = generate_inverse_synthetic(60, seed=11)
    ens = fit_inverse(data, seed=8, configs=QUICK)
    rebuilt = inverse_from_dict(json.loads(json.dumps(inverse_to_dict(ens), sort_keys=True)))
    qs = queries_from_dataset(data)[:12]
    pa, pb = predict_inverse(ens, qs), predict_inverse(rebuilt, qs)
    assert [p.values for p in pa] == [p.values for p in pb]
    with pytest.raises(ValidationError):
        inverse_from_dict({"kind": "forward"})


def test_validation_errors():
    data = generate_inverse_synthetic(60, seed=12)
    ens = fit_inverse(data, seed=9, configs=QUICK)
    with pytest.raises(ValidationError):
        predict_inverse(ens, [{"rate": 1.0, "environment": 0, "Al": 40.0, "Si": 1.0}])
    with pytest.raises(ValidationError):
        fit_inverse(generate_inverse_synthetic(5, seed=13), configs=QUICK)

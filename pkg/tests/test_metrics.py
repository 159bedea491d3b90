import numpy as np
import pytest

from quantevo import EvalReport, Model, Tensor, dense, evaluate, make_dataset, make_evaluator, metric_value
from quantevo.errors import ConfigError


def test_top1_hand_case():
    outputs = np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4], [0.3, 0.7]])
    labels = np.array([0, 1, 1, 1])
    assert metric_value("top1", outputs, labels) == 0.75


def test_agreement_is_top1_against_teacher_labels():
    outputs = np.array([[1.0, 0.0], [0.0, 1.0]])
    labels = np.array([0, 0])
    assert metric_value("agreement", outputs, labels) == metric_value("top1", outputs, labels) == 0.5


def test_f1_hand_case():
    # threshold 0.5: preds = [1, 1, 0, 0]; labels = [1, 0, 1, 0]
    # TP=1, FP=1, FN=1 -> F1 = 2/(2+1+1) = 0.5
    outputs = np.array([[0.9], [0.6], [0.2], [0.1]])
    labels = np.array([1, 0, 1, 0])
    assert metric_value("f1", outputs, labels, threshold=0.5) == 0.5


def test_f1_degenerate_case_is_zero():
    outputs = np.array([[0.1], [0.2]])
    labels = np.array([0, 0])
    assert metric_value("f1", outputs, labels) == 0.0


def test_f1_threshold_moves_decision():
    outputs = np.array([[0.6], [0.4]])
    labels = np.array([1, 1])
    assert metric_value("f1", outputs, labels, threshold=0.5) == pytest.approx(2 / 3)
    assert metric_value("f1", outputs, labels, threshold=0.3) == 1.0


def test_unknown_metric_rejected():
    with pytest.raises(ConfigError):
        metric_value("map", np.ones((1, 2)), np.zeros(1))


def test_eval_report_validates_fields():
    with pytest.raises(ConfigError):
        EvalReport("top1", 1.5, 10, "x", 0, 0.0)
    with pytest.raises(ConfigError):
        EvalReport("top1", 0.5, 0, "x", 0, 0.0)


def _toy_model_and_data(n=40, seed=3):
    rng = np.random.Generator(np.random.PCG64(seed))
    w = rng.standard_normal((3, 2))
    model = Model((dense("fc", w),), (3,))
    inputs = Tensor(rng.standard_normal((n, 3)))
    labels = np.argmax((inputs.data @ w), axis=1)
    return model, make_dataset(inputs, labels)


def test_evaluate_produces_full_report():
    model, data = _toy_model_and_data()
    report = evaluate(model, data, "top1", seed=5)
    assert report.value == 1.0
    assert report.n_samples == 40
    assert report.dataset_id == data.id
    assert report.seed == 5
    assert report.wall_time_s >= 0.0


def test_subset_evaluator_is_frozen_per_seed():
    model, data = _toy_model_and_data(n=100)
    a = make_evaluator(data, "top1", subset_size=20, seed=1)
    b = make_evaluator(data, "top1", subset_size=20, seed=1)
    assert a(model) == b(model)


def test_subset_report_counts_subsampled():
    model, data = _toy_model_and_data(n=100)
    report = evaluate(model, data, "top1", subset_size=30, seed=2)
    assert report.n_samples == 30


def test_subset_larger_than_dataset_uses_everything():
    model, data = _toy_model_and_data(n=10)
    report = evaluate(model, data, "top1", subset_size=50, seed=2)
    assert report.n_samples == 10


def test_subset_size_must_be_positive():
    model, data = _toy_model_and_data(n=10)
    with pytest.raises(ConfigError):
        make_evaluator(data, "top1", subset_size=0, seed=2)(model)


def test_evaluator_is_pure():
    model, data = _toy_model_and_data()
    fn = make_evaluator(data, "top1")
    assert fn(model) == fn(model)

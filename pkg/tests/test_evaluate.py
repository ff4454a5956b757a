"""Metric correctness against brute-force oracles.

The oracles are deliberately dumb pure-Python loops over samples and
classes; the implementations under test are vectorized numpy. 1000 random
small instances (<= 8 samples, <= 6 classes) are enough to exhaust the
qualitative cases: empty classes, perfect classes, all-zero rows, ties.
"""

import numpy as np
import pytest

from geotag.data_model import ModalityCombo, Sample, builtin_vocabulary, Dataset
from geotag.errors import (EmptyDataset, EmptyPredictionRow, GeotagError,
                           IdMismatch)
from geotag.evaluate import (PredictionSet, dataset_stats,
                             enforce_min_one_tag, f1_from_decisions, f1_scores,
                             parse_submission, predict, subset_accuracy,
                             subset_accuracy_from_decisions, write_metric_report,
                             write_submission)
from geotag.heads import LinearHead
from geotag.ingest import synth_dataset


def _oracle_subset_accuracy(decisions, truth):
    hits = 0
    for row_d, row_t in zip(decisions, truth):
        if list(row_d) == list(row_t):
            hits += 1
    return hits / len(decisions)


def _oracle_f1(decisions, truth):
    n_classes = len(decisions[0])
    f1s = []
    for c in range(n_classes):
        tp = fp = fn = 0
        for row_d, row_t in zip(decisions, truth):
            if row_d[c] == 1 and row_t[c] == 1:
                tp += 1
            elif row_d[c] == 1 and row_t[c] == 0:
                fp += 1
            elif row_d[c] == 0 and row_t[c] == 1:
                fn += 1
        f1s.append(2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0)
    return f1s


def _pred(probs, decisions=None):
    probs = np.asarray(probs, dtype=np.float64)
    if decisions is None:
        decisions = (probs > 0.5).astype(np.uint8)
    return PredictionSet(ids=np.arange(len(probs), dtype=np.uint64),
                         probabilities=probs,
                         decisions=np.asarray(decisions, dtype=np.uint8))


class TestPredict:
    def _head_and_samples(self, w_scale=0.0, bias=0.0):
        head = LinearHead(W=np.full((49, 2), w_scale, np.float32),
                          b=np.full(49, bias, np.float32))
        samples = [Sample(id=i, loc=[0.25, 0.75]) for i in range(3)]
        return head, samples

    def test_zero_logit_maps_to_no_tag(self):
        head, samples = self._head_and_samples()
        pred = predict(head, samples, ModalityCombo.LOCATION)
        assert np.all(pred.probabilities == 0.5)
        assert np.all(pred.decisions == 0)  # strict threshold

    def test_all_negative_logits_allow_empty_rows(self):
        head, samples = self._head_and_samples(bias=-10.0)
        pred = predict(head, samples, ModalityCombo.LOCATION)
        assert np.all(pred.decisions == 0)

    def test_monotone_in_logit(self):
        head, samples = self._head_and_samples(bias=0.2)
        base = predict(head, samples, ModalityCombo.LOCATION)
        head.b[7] = 3.0
        raised = predict(head, samples, ModalityCombo.LOCATION)
        assert np.all(raised.decisions[:, 7] >= base.decisions[:, 7])


class TestEnforceMinOneTag:
    def test_empty_row_gets_argmax(self):
        probs = np.full((1, 10), 0.1)
        probs[0, 7] = 0.4
        out = enforce_min_one_tag(_pred(probs))
        assert out.decisions[0].tolist() == [0] * 7 + [1] + [0] * 2

    def test_nonempty_rows_untouched(self):
        probs = np.array([[0.9, 0.8, 0.1, 0.9]])
        out = enforce_min_one_tag(_pred(probs))
        assert out.decisions[0].tolist() == [1, 1, 0, 1]

    def test_tie_breaks_to_lowest_index(self):
        probs = np.full((1, 6), 0.2)
        probs[0, 2] = 0.45
        probs[0, 5] = 0.45
        out = enforce_min_one_tag(_pred(probs))
        assert out.decisions[0].tolist() == [0, 0, 1, 0, 0, 0]

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        probs = rng.random((20, 8)) * 0.4  # everything below threshold
        once = enforce_min_one_tag(_pred(probs))
        twice = enforce_min_one_tag(once)
        assert np.array_equal(once.decisions, twice.decisions)
        assert np.all(once.decisions.sum(axis=1) >= 1)


class TestMetricOracles:
    def test_identical_vectors_score_one(self):
        truth = np.array([[1, 0, 1], [0, 1, 0]], dtype=np.uint8)
        assert subset_accuracy_from_decisions(truth.copy(), truth) == 1.0
        f1, support = f1_from_decisions(truth.copy(), truth)
        assert np.all(f1[support > 0] == 1.0)

    def test_one_bit_off_scores_zero_for_that_sample(self):
        truth = np.zeros((1, 49), dtype=np.uint8)
        truth[0, :10] = 1
        decisions = truth.copy()
        decisions[0, 48] = 1  # 48/49 correct
        assert subset_accuracy_from_decisions(decisions, truth) == 0.0

    def test_zero_support_zero_prediction_class_is_zero(self):
        truth = np.array([[1, 0], [1, 0]], dtype=np.uint8)
        f1, support = f1_from_decisions(truth.copy(), truth)
        assert support[1] == 0
        assert f1[1] == 0.0

    def test_against_brute_force_on_1000_random_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(1000):
            n = int(rng.integers(1, 9))
            c = int(rng.integers(1, 7))
            decisions = (rng.random((n, c)) < 0.5).astype(np.uint8)
            truth = (rng.random((n, c)) < 0.5).astype(np.uint8)
            assert subset_accuracy_from_decisions(decisions, truth) == \
                pytest.approx(_oracle_subset_accuracy(decisions, truth), abs=1e-12)
            f1, _ = f1_from_decisions(decisions, truth)
            assert np.allclose(f1, _oracle_f1(decisions, truth), atol=1e-12)

    def test_subset_accuracy_never_exceeds_per_label_accuracy(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            decisions = (rng.random((6, 5)) < 0.5).astype(np.uint8)
            truth = (rng.random((6, 5)) < 0.5).astype(np.uint8)
            subset = subset_accuracy_from_decisions(decisions, truth)
            per_label = float(np.mean(decisions == truth))
            assert subset <= per_label + 1e-12


class TestMetricApi:
    def _pred_and_truth(self):
        rng = np.random.default_rng(5)
        decisions = (rng.random((4, 49)) < 0.3).astype(np.uint8)
        probs = rng.random((4, 49))
        pred = PredictionSet(ids=np.array([3, 1, 4, 2], dtype=np.uint64),
                             probabilities=probs, decisions=decisions)
        truth = {i: (rng.random(49) < 0.3).astype(np.uint8) for i in (1, 2, 3, 4)}
        return pred, truth

    def test_macro_is_mean_of_per_class(self):
        pred, truth = self._pred_and_truth()
        report = f1_scores(pred, truth)
        assert report.macro_f1 == pytest.approx(float(report.per_class_f1.mean()), abs=1e-15)
        assert len(report.per_class_f1) == 49

    def test_id_mismatch(self):
        pred, truth = self._pred_and_truth()
        del truth[4]
        with pytest.raises(IdMismatch):
            subset_accuracy(pred, truth)
        truth[5] = np.zeros(49, dtype=np.uint8)
        with pytest.raises(IdMismatch):
            f1_scores(pred, truth)

    def test_truth_from_dataset(self):
        ds, _ = synth_dataset(6, n_labels=5, seed=8)
        decisions = np.stack([s.labels for s in ds])
        pred = PredictionSet(ids=np.array(ds.ids(), dtype=np.uint64),
                             probabilities=decisions.astype(np.float64),
                             decisions=decisions)
        assert subset_accuracy(pred, ds) == 1.0
        report = f1_scores(pred, ds)
        assert report.subset_accuracy == 1.0


class TestSubmission:
    def test_format(self, tmp_path):
        probs = np.zeros((1, 49))
        decisions = np.zeros((1, 49), dtype=np.uint8)
        decisions[0, [0, 17]] = 1
        pred = PredictionSet(ids=np.array([42], dtype=np.uint64),
                             probabilities=probs, decisions=decisions)
        path = tmp_path / "submission.csv"
        write_submission(pred, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "image_id,tags"
        assert lines[1] == "42,0 17"

    def test_empty_row_rejected(self, tmp_path):
        pred = _pred(np.full((2, 5), 0.1))
        with pytest.raises(EmptyPredictionRow):
            write_submission(pred, tmp_path / "bad.csv")

    def test_rows_sorted_by_id_and_roundtrip(self, tmp_path):
        rng = np.random.default_rng(1)
        probs = rng.random((5, 49))
        pred = enforce_min_one_tag(
            PredictionSet(ids=np.array([9, 3, 7, 1, 5], dtype=np.uint64),
                          probabilities=probs,
                          decisions=(probs > 0.5).astype(np.uint8)))
        path = tmp_path / "submission.csv"
        write_submission(pred, path)
        parsed = parse_submission(path)
        assert list(parsed.keys()) == [1, 3, 5, 7, 9]
        for i, sample_id in enumerate(pred.ids):
            expected = np.flatnonzero(pred.decisions[i]).tolist()
            assert parsed[int(sample_id)] == expected

    def test_metric_report_file(self, tmp_path):
        ds, _ = synth_dataset(5, n_labels=4, seed=2)
        decisions = np.stack([s.labels for s in ds])
        pred = PredictionSet(ids=np.array(ds.ids(), dtype=np.uint64),
                             probabilities=decisions.astype(np.float64),
                             decisions=decisions)
        report = f1_scores(pred, ds)
        path = tmp_path / "report.csv"
        write_metric_report(report, builtin_vocabulary(), path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "index,name,f1,support"
        assert len(lines) == 1 + 49 + 2
        assert lines[-2] == f"# subset_accuracy={report.subset_accuracy:.9g}"


class TestDatasetStats:
    def test_uniform_two_tag_dataset(self):
        bits = np.zeros(49, dtype=np.uint8)
        bits[[3, 14]] = 1
        samples = tuple(Sample(id=i, title="ten chars!", labels=bits.copy())
                        for i in range(4))
        ds = Dataset(samples, builtin_vocabulary())
        text = dataset_stats(ds)
        assert "2,4" in text  # histogram: every sample has exactly 2 tags
        assert "mean_len=10.00" in text
        assert "min=10" in text and "max=10" in text

    def test_counts_match_generator(self):
        ds, _ = synth_dataset(100, n_labels=7, seed=4)
        labels = np.stack([s.labels for s in ds])
        text = dataset_stats(ds)
        for i in range(49):
            assert f'{i},"{builtin_vocabulary().name_of(i)}",{int(labels[:, i].sum())}' in text

    def test_empty_dataset_rejected(self):
        with pytest.raises(EmptyDataset):
            dataset_stats(Dataset((), builtin_vocabulary()))
        with pytest.raises(GeotagError):
            dataset_stats(Dataset((Sample(id=1),), builtin_vocabulary()))

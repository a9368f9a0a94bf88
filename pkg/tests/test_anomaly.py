"""Two-stage detection: screening, state prediction, and localization."""

import numpy as np
import pytest

from oracles import brute_nb_posterior, random_transition_network
from sensorprep.anomaly import (
    nb_predict_state,
    report_from_dict,
    report_to_dict,
    tq_screen,
    tqbayes_detect,
    write_report_csv,
)
from sensorprep.bayesnet import Cpt, Dag, TransitionNetwork, estimate_cpt, learn_transition
from sensorprep.ingest import SensorDataset, discretize, fit_discretization, synth_generate
from sensorprep.spectra import PcaModel, fit_pca_model


def single_parent_tn(counts, prior=None):
    """Two-node network where node 1 has transition parent node 0."""
    counts = np.asarray(counts)
    k = counts.shape[1]
    table = estimate_cpt(counts)
    parent_counts = np.full((1, k), 10)
    cpts = (
        Cpt(0, (), estimate_cpt(parent_counts), parent_counts),
        Cpt(1, (0,), table, counts),
    )
    priors = np.full((2, k), 1.0 / k) if prior is None else np.array([np.full(k, 1.0 / k), prior])
    return TransitionNetwork(Dag(2, ((), (0,))), cpts, priors)


class TestTqScreen:
    def test_training_mean_row_not_flagged(self):
        data = synth_generate(1, 200, 5, "correlated-drift")
        model = fit_pca_model(data, 0.85, 0.05)
        q, t2, flagged = tq_screen(data.values.mean(axis=0), model)
        assert q == 0.0 and t2 == 0.0 and not flagged

    def test_clean_false_flag_rate(self):
        # 1000 clean rows from the training process stay under the test
        # level plus a three-sigma binomial margin.
        data = synth_generate(2, 1400, 10, "correlated-drift")
        train = SensorDataset(data.values[:400], data.node_ids)
        model = fit_pca_model(train, 0.85, 0.05)
        flags = sum(tq_screen(row, model)[2] for row in data.values[400:])
        bound = 0.05 + 3 * np.sqrt(0.05 * 0.95 / 1000)
        assert flags / 1000 < bound

    def test_ten_percent_injection_all_flagged(self):
        data = synth_generate(3, 600, 15, "correlated-drift")
        train = SensorDataset(data.values[:400], data.node_ids)
        model = fit_pca_model(train, 0.85, 0.05)
        means = train.values.mean(axis=0)
        for row in data.values[400:450]:
            assert tq_screen(row + means * 0.10, model)[2]

    def test_dimension_mismatch(self):
        data = synth_generate(1, 100, 4, "correlated-drift")
        model = fit_pca_model(data)
        with pytest.raises(ValueError, match="shape"):
            tq_screen(np.zeros(3), model)


class TestNbPredictState:
    def test_identity_cpt_copies_parent_state(self):
        tn = single_parent_tn(np.array([[20, 0], [0, 20]]))
        # node 1's parent is node 0, which was in state 2 at t-1
        predicted, posterior = nb_predict_state(1, np.array([2, 1]), tn)
        assert predicted == 2
        np.testing.assert_allclose(posterior, [0.0, 1.0])

    def test_uniform_everything_ties_to_state_one(self):
        tn = single_parent_tn(np.array([[10, 10], [10, 10]]))
        predicted, posterior = nb_predict_state(1, np.array([2, 1]), tn)
        assert predicted == 1
        np.testing.assert_allclose(posterior, [0.5, 0.5])

    def test_two_parent_hand_computation(self):
        # Factors [0.9, 0.1] and [0.8, 0.2] with prior [0.5, 0.5] give
        # unnormalized scores 0.36 and 0.01.
        counts = np.array([[8, 1], [1, 0], [0, 1], [5, 5]])
        k = 2
        cpts = (
            Cpt(0, (), np.array([[0.5, 0.5]]), np.array([[5, 5]])),
            Cpt(1, (), np.array([[0.5, 0.5]]), np.array([[5, 5]])),
            Cpt(2, (0, 1), estimate_cpt(counts), counts),
        )
        tn = TransitionNetwork(Dag(3, ((), (), (0, 1))), cpts, np.full((3, k), 0.5))
        predicted, posterior = nb_predict_state(2, np.array([1, 1, 1]), tn)
        assert predicted == 1
        np.testing.assert_allclose(posterior, [36 / 37, 1 / 37], atol=1e-12)

    def test_parentless_falls_back_to_prior(self):
        tn = single_parent_tn(np.array([[1, 1], [1, 1]]), prior=np.array([0.5, 0.5]))
        predicted, posterior = nb_predict_state(0, np.array([2, 2]), tn)
        assert predicted == 1
        np.testing.assert_allclose(posterior, [0.5, 0.5])

    def test_matches_bruteforce_on_random_networks(self):
        rng = np.random.default_rng(20)
        for _ in range(60):
            tn = random_transition_network(rng)
            k = tn.cpts[0].state_count
            prev = rng.integers(1, k + 1, size=tn.dag.n)
            for node in range(tn.dag.n):
                _, posterior = nb_predict_state(node, prev, tn)
                np.testing.assert_allclose(posterior, brute_nb_posterior(node, prev, tn), atol=1e-12)
                assert posterior.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.fixture(scope="module")
def fitted():
    data = synth_generate(1, 600, 6, "copy-child", copies={1: 0})
    train = SensorDataset(data.values[:400], data.node_ids)
    test = SensorDataset(data.values[400:], data.node_ids)
    model = fit_pca_model(train, 0.85, 0.05)
    scheme = fit_discretization(train, 3)
    tn = learn_transition(discretize(train, scheme), 3)
    return train, test, model, scheme, tn


class TestTqBayesDetect:
    def test_no_flags_no_verdicts(self, fitted):
        train, test, model, scheme, tn = fitted
        quiet = SensorDataset(np.tile(train.values.mean(axis=0), (5, 1)), test.node_ids)
        report = tqbayes_detect(quiet, model, tn, scheme, train.values[-1])
        assert report.flagged_rows() == []
        assert report.verdicts == ()

    def test_single_corrupted_node_localized(self, fitted):
        train, test, model, scheme, tn = fitted
        child = 1
        sd = train.values[:, child].std(ddof=1)
        clean_states = discretize(test, scheme).states
        row = next(
            r for r in range(2, test.m)
            if clean_states[r, child] == 1 and clean_states[r - 1, 0] == 1 and clean_states[r - 1, child] == 1
        )
        vals = test.values.copy()
        vals[row, child] += 3.0 * sd
        report = tqbayes_detect(SensorDataset(vals, test.node_ids), model, tn, scheme, train.values[-1])
        assert row in report.flagged_rows()
        marked = {v.node for v in report.verdicts if v.row == row and v.abnormal}
        assert child in marked
        # Only nodes whose observed state moved can be accused.
        corrupted_states = discretize(SensorDataset(vals, test.node_ids), scheme).states
        moved = {j for j in range(test.n) if corrupted_states[row, j] != clean_states[row, j]}
        assert marked <= moved | {0, 1}

    def test_stage_two_only_on_flagged_rows(self, fitted):
        train, test, model, scheme, tn = fitted
        report = tqbayes_detect(test, model, tn, scheme, train.values[-1])
        flagged = set(report.flagged_rows())
        assert {v.row for v in report.verdicts} <= flagged

    def test_uninferable_nodes_never_abnormal(self, fitted):
        train, test, model, scheme, tn = fitted
        report = tqbayes_detect(test, model, tn, scheme, train.values[-1])
        for v in report.verdicts:
            if v.uninferable:
                assert not v.abnormal
            if v.abnormal:
                assert v.predicted != v.observed

    def test_sub_bin_errors_invisible_to_stage_two(self):
        # Shifts below half a bin width cannot move any state, so stage two
        # stays silent even when every row is force-flagged.
        data = synth_generate(4, 200, 3, "lagged-copy", copies={1: 0})
        train = SensorDataset(data.values[:120], data.node_ids)
        test = SensorDataset(data.values[120:], data.node_ids)
        scheme = fit_discretization(train, 3)
        tn = learn_transition(discretize(train, scheme), 3)
        model = fit_pca_model(train, 0.85, 0.05)
        flag_all = PcaModel(
            model.standardization, model.eigenvalues, model.eigenvectors, model.k, -1.0, -1.0, model.alpha
        )
        widths = np.array([(e[1] - e[0]) for e in scheme.edges])
        shift = 0.3 * widths.min()
        clean = discretize(test, scheme).states
        shifted = SensorDataset(test.values + shift, test.node_ids)
        # Precondition for the property: no state actually moved.
        np.testing.assert_array_equal(discretize(shifted, scheme).states, clean)
        report = tqbayes_detect(shifted, flag_all, tn, scheme, train.values[-1])
        assert len(report.flagged_rows()) == test.m
        assert all(not v.abnormal for v in report.verdicts)

    def test_deterministic_reports(self, fitted):
        train, test, model, scheme, tn = fitted
        a = tqbayes_detect(test, model, tn, scheme, train.values[-1])
        b = tqbayes_detect(test, model, tn, scheme, train.values[-1])
        assert report_to_dict(a) == report_to_dict(b)

    def test_report_roundtrip_and_csv(self, fitted, tmp_path):
        train, test, model, scheme, tn = fitted
        report = tqbayes_detect(test, model, tn, scheme, train.values[-1])
        back = report_from_dict(report_to_dict(report))
        assert back == report
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        header = path.read_text().splitlines()[0]
        assert header == "row,q,t2,flagged,node,observed,predicted,abnormal"

    def test_schema_mismatch_rejected(self, fitted):
        train, test, model, scheme, tn = fitted
        narrow = SensorDataset(test.values[:, :5], test.node_ids[:5])
        with pytest.raises(ValueError, match="disagree"):
            tqbayes_detect(narrow, model, tn, scheme, train.values[-1])

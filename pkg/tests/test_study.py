from dataclasses import replace

import numpy as np
import pytest

from pblsgmm.errors import EstimationFailure, InvalidInputError
from pblsgmm.estimation.fit import CONVERGED, NUMERICAL_FAILURE, FitConfig
from pblsgmm.simulation.design import generate_dataset
from pblsgmm.simulation.study import (
    MAX_ATTEMPT_FACTOR,
    compare_joint_vs_univariate,
    oracle_fitter,
    project,
    run_study,
    truth_vector,
)

FAST = FitConfig(compute_se=False, max_restarts=3)


def failing_fitter(dataset, K, config, outcomes):
    raise EstimationFailure("always")


def coin_fitter(dataset, K, config, outcomes):
    """Fails on roughly half of the datasets, deterministically per dataset."""
    if dataset.individuals[0].values[0, 0] > 100.0:
        raise EstimationFailure("unlucky draw")
    return oracle_fitter(dataset, K, config, outcomes)


@pytest.fixture(scope="module")
def small(condition):
    return replace(condition, n=120)


def test_oracle_study_is_exact(small):
    rep = run_study(small, 4, FAST, fitter=oracle_fitter)
    assert rep.n_converged == 4 and not rep.partial
    finite = np.isfinite(rep.relative_bias)
    np.testing.assert_allclose(rep.relative_bias[finite], 0.0, atol=1e-12)
    np.testing.assert_allclose(rep.bias, 0.0, atol=1e-12)
    np.testing.assert_allclose(rep.relative_rmse[finite], 0.0, atol=1e-12)
    np.testing.assert_array_equal(rep.coverage, 1.0)
    # zero-truth parameters (the balanced gating intercept) have no relative metrics
    zero = rep.truth == 0
    assert zero.any() and np.all(np.isnan(rep.relative_bias[zero]))
    assert 0.5 < rep.mean_accuracy <= 1.0
    assert rep.convergence_rate == 1.0


def test_truth_vector_matches_condition(condition):
    names, vals = truth_vector(condition)
    lookup = dict(zip(names, vals))
    np.testing.assert_allclose([lookup[f"c{k}.{o}.knot"] for k in (1, 2) for o in "yz"], condition.knots().ravel())
    assert lookup["c1.y.mean_intercept"] == 98.0 and lookup["c2.y.mean_intercept"] == 102.0
    assert lookup["c2.beta0"] == 0.0


def test_partial_abort(small):
    rep = run_study(small, 2, FAST, fitter=failing_fitter)
    assert rep.partial
    assert rep.n_converged == 0
    assert rep.n_attempts == MAX_ATTEMPT_FACTOR * 2
    assert all(r.status == NUMERICAL_FAILURE for r in rep.records)
    assert np.all(np.isnan(rep.relative_bias))


def test_replaces_failures_in_index_order(small):
    rep = run_study(small, 3, FAST, fitter=coin_fitter)
    assert rep.n_converged == 3 and not rep.partial
    attempts = [r.attempt for r in rep.records]
    assert attempts == list(range(len(attempts)))
    assert rep.records[-1].converged
    assert rep.replication_table()["attempt"].tolist() == [r.attempt for r in rep.records if r.converged]


def test_worker_count_does_not_change_results(small):
    a = run_study(small, 3, FAST, fitter=coin_fitter, workers=1, master_seed=9)
    b = run_study(small, 3, FAST, fitter=coin_fitter, workers=2, master_seed=9)
    assert [r.attempt for r in a.records] == [r.attempt for r in b.records]
    pd_a, pd_b = a.replication_table(), b.replication_table()
    assert pd_a.equals(pd_b)
    np.testing.assert_array_equal(a.relative_bias, b.relative_bias)


def test_projection_relabels(condition):
    ds = generate_dataset(replace(condition, n=60), 3)
    z = project(ds, ("z",))
    assert z.truth.outcomes == ("z",)
    assert all(ind.values.shape[1] == 1 for ind in z.individuals)
    knots = [c.knots[0] for c in z.truth.classes]
    assert knots == sorted(knots)
    np.testing.assert_array_equal(project(ds, ("y", "z")).classes, ds.classes)


def test_invalid_S(small):
    with pytest.raises(InvalidInputError):
        run_study(small, 0)
    with pytest.raises(InvalidInputError):
        compare_joint_vs_univariate(small, 0)


def test_compare_oracle_consistent_with_univariate_study(small):
    cmp = compare_joint_vs_univariate(small, 2, FAST, fitter=oracle_fitter, master_seed=4)
    uni = run_study(small, 2, FAST, fitter=oracle_fitter, master_seed=4, outcomes=("y",))
    t = cmp.table()
    assert list(t.columns) == ["attempt", "joint", "y", "z"]
    np.testing.assert_allclose(t["y"].to_numpy(), [r.accuracy for r in uni.records])
    summary = cmp.summary()
    assert summary["n_paired"] == 2 and not summary["partial"]
    assert summary["difference"]["joint_minus_y"] == pytest.approx(
        summary["mean_accuracy"]["joint"] - summary["mean_accuracy"]["y"])


def test_compare_single_real_replication(condition):
    cmp = compare_joint_vs_univariate(replace(condition, n=300), 1, FAST, master_seed=2)
    rec = cmp.records[-1]
    assert all(v == CONVERGED for v in rec.status.values())
    acc = cmp.mean_accuracy()
    assert all(0.5 <= acc[k] <= 1.0 for k in ("joint", "y", "z"))


def test_real_study_single_replication(condition):
    rep = run_study(replace(condition, n=300), 1, FitConfig(max_restarts=3), master_seed=1)
    assert rep.n_converged == 1
    rec = rep.records[-1]
    assert np.all(np.isfinite(rec.se))
    assert np.all(rec.ci_low <= rec.estimates) and np.all(rec.estimates <= rec.ci_high)

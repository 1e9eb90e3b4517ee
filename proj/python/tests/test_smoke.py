import math

import numpy as np
import pytest

import cvxboost as cb


def lattice(n=120, d=2, seed=0, classification=False):
    rng = np.random.default_rng(seed)
    x = np.floor(rng.random((n, d)) * 8) / 8
    t = np.sin(2 * np.pi * x).sum(axis=1) + 0.3 * rng.standard_normal(n)
    y = np.where(t > 0, 1.0, -1.0) if classification else t
    return x, y


def test_loss_constants():
    sq = cb.Loss("squared")
    assert sq.alpha == 2.0
    assert sq.lipschitz == 2.0
    assert sq.psi(0.0, 1.0) == 1.0
    assert cb.Loss("logit:gamma=0.1").gamma == pytest.approx(0.1)
    with pytest.raises(cb.ConfigError):
        cb.Loss("nonsense")


def test_fit_algorithm1_certifies_and_predicts():
    x, y = lattice()
    res = cb.fit(x, y, algo=1, loss="squared", weak="stump", iters=300)
    trace = res.trace
    assert len(trace) > 1
    assert all(b <= a + 1e-9 * (1 + abs(a)) for a, b in zip(trace.risk, trace.risk[1:]))
    assert all(b <= a for a, b in zip(trace.step, trace.step[1:]))
    report = cb.verify_trace(trace, cb.Loss("squared"))
    assert report["pass"] is True
    assert res.model.predict(x) == res.fitted


def test_model_json_round_trip_is_exact():
    x, y = lattice(seed=3)
    res = cb.fit(x, y, algo=2, loss="squared:gamma=0.1", weak="depth:2", iters=200, nu=0.1)
    back = cb.Model.from_json(res.model.to_json())
    assert back.predict(x) == res.fitted
    assert back.n_terms == res.model.n_terms
    assert set(back.weights) == {0.1}


def test_fixed_step_bound_is_enforced():
    x, y = lattice()
    with pytest.raises(cb.ConfigError, match="requires nu < 0.25"):
        cb.fit(x, y, algo=2, nu=0.5)


def test_classification_and_trace_csv():
    x, y = lattice(seed=5, classification=True)
    res = cb.fit(x, y, algo=1, loss="logit:gamma=0.1", weak="depth:3", iters=200, classification=True)
    labels = res.model.classify(x)
    assert set(labels) <= {-1, 1}
    accuracy = np.mean(np.array(labels) == y)
    assert accuracy > 0.8
    again = cb.Trace.from_csv(res.trace.to_csv())
    assert again.to_csv() == res.trace.to_csv()


def test_assumptions_and_lab_helpers():
    report = cb.check_assumptions(cb.Loss("sigmoid:beta=1,gamma=0.5"))
    checks = {c["name"]: c["pass"] for c in report["checks"]}
    assert checks["A2"] is False
    assert cb.check_assumptions(cb.Loss("squared"))["pass"] is True
    assert cb.bayes_reference("sine:sigma=0.3", cb.Loss("squared")) == pytest.approx(0.09)
    assert math.isclose(cb.bayes_reference("logit_const:eta=0.5", cb.Loss("logit")), 1.0, rel_tol=1e-12)
    sched = cb.check_schedule({"n": [16, 256, 65536], "k_rule": "loglog"})
    assert sched["pass"] is True
    assert all(c["pass"] for c in sched["conditions"] if c["evaluated"])
    csv = cb.run_consistency(
        {"n": [64, 512, 4096], "k_rule": "logfrac:3", "replications": 2, "test_size": 1000, "seed": 4}
    )
    assert csv.startswith("# schema=cvxboost.gap/1")

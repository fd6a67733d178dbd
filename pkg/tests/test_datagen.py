import json

import numpy as np
import pytest
from scipy import stats

from dpmnig.datagen import MixtureSpec, generate, load_spec, sim1_spec, sim2_spec
from dpmnig.distributions import ComponentParams, mnig_mean_cov


def test_sizes():
    s1, s2 = sim1_spec(), sim2_spec()
    assert (s1.size, s1.dim, len(s1.params)) == (650, 2, 4)
    assert (s2.size, s2.dim, len(s2.params)) == (500, 4, 3)
    x, t = generate(s1, 0)
    assert x.shape == (650, 2)
    np.testing.assert_array_equal(np.bincount(t), [200, 180, 150, 120])
    x, t = generate(s2, 0)
    assert x.shape == (500, 4)
    np.testing.assert_array_equal(np.bincount(t), [100, 200, 200])


@pytest.mark.parametrize("spec", [sim1_spec, sim2_spec])
def test_covariances_spd(spec):
    for p in spec().params:
        assert np.all(np.linalg.eigvalsh(p.sigma) > 0)


def test_deterministic():
    a = generate(sim1_spec(), 7)
    b = generate(sim1_spec(), 7)
    c = generate(sim1_spec(), 8)
    np.testing.assert_array_equal(a[0], b[0])
    assert not np.array_equal(a[0], c[0])


def test_component_mean_matches_moments():
    # third design component: E[X] = mu + beta / gamma
    p = sim1_spec().params[2]
    spec = MixtureSpec(((p, 40000),))
    x, _ = generate(spec, 1)
    mean, cov = mnig_mean_cov(p)
    np.testing.assert_allclose(mean, [-12 + 0.2 / 0.6, 2 - 0.25 / 0.6])
    se = np.sqrt(np.diag(cov) / x.shape[0])
    assert np.all(np.abs(x.mean(axis=0) - mean) < 4 * se)


def test_skewness_follows_beta():
    p = ComponentParams([0.0, 0.0], [0.5, -0.5], 1.0, np.eye(2))
    x, _ = generate(MixtureSpec(((p, 20000),)), 2)
    sk = stats.skew(x, axis=0)
    assert sk[0] > 0.1 and sk[1] < -0.1


def test_load_spec_round_trip(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"components": [
        {"gamma": 1.0, "mu": [0, 1], "beta": [0.1, 0], "sigma": [[1, 0], [0, 2]], "n": 5},
        {"gamma": 2.0, "mu": [3, 1], "beta": [0, 0], "sigma": [[1, 0], [0, 1]], "n": 7},
    ]}))
    spec = load_spec(path)
    assert spec.size == 12 and spec.dim == 2
    assert spec.params[1].gamma == 2.0


@pytest.mark.parametrize("payload, message", [
    ("not json", "JSON"),
    (json.dumps([1, 2]), "components"),
    (json.dumps({"components": [{"gamma": 1, "mu": [0], "beta": [0], "n": 3}]}), "component 0"),
    (json.dumps({"components": [{"gamma": -1, "mu": [0], "beta": [0], "sigma": [[1]], "n": 3}]}),
     "component 0"),
])
def test_load_spec_errors(tmp_path, payload, message):
    path = tmp_path / "bad.json"
    path.write_text(payload)
    with pytest.raises(ValueError, match=message):
        load_spec(path)


def test_spec_validation():
    p1 = ComponentParams([0.0], [0.0], 1.0, [[1.0]])
    p2 = ComponentParams([0.0, 0.0], [0.0, 0.0], 1.0, np.eye(2))
    with pytest.raises(ValueError):
        MixtureSpec(())
    with pytest.raises(ValueError):
        MixtureSpec(((p1, 3), (p2, 3)))
    with pytest.raises(ValueError):
        MixtureSpec(((p1, 0),))

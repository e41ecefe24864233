import numpy as np
import pytest
from scipy import stats

from drmreg.simulation import (
    COLUMNS,
    GroupSpec,
    Scenario,
    generate,
    benchmark_scenarios,
    parse_scenario,
    run_study,
    sample_mvcauchy,
    sample_mvn,
    sample_triangle,
    tgct_analog_scenario,
)

BIG = 100_000
TRI = ([0.0, 0.0], [6.0, 0.0], [-3.0, 4.0])


def test_mvn_moments():
    x = sample_mvn([0.0, 0.0], np.eye(2), BIG, np.random.default_rng(1))
    se = 1 / np.sqrt(BIG)
    assert np.abs(x.mean(axis=0)).max() < 3 * se
    # sd of a sample variance is about sqrt(2/n); of a covariance about sqrt(1/n)
    assert np.abs(np.cov(x, rowvar=False) - np.eye(2)).max() < 3 * np.sqrt(2) * se


def test_mvn_run1_covariance():
    sigma = np.array([[4.0, 2.0], [2.0, 3.0]])
    x = sample_mvn([0.0, 0.0], sigma, BIG, np.random.default_rng(2))
    assert np.cov(x, rowvar=False) == pytest.approx(sigma, abs=0.1)


def test_mvn_edge_cases():
    rng = np.random.default_rng(0)
    assert sample_mvn([0.0, 0.0], np.eye(2), 0, rng).shape == (0, 2)
    with pytest.raises(ValueError):
        sample_mvn([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]], 5, rng)
    with pytest.raises(ValueError):
        sample_mvn([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]], 5, rng)
    with pytest.raises(ValueError):
        sample_mvn([0.0, 0.0, 0.0], np.eye(2), 5, rng)


def test_mvcauchy_median_and_symmetry():
    mu = np.array([1.0, 1.0])
    x = sample_mvcauchy(mu, [[5.0, 5.0], [5.0, 10.0]], BIG, np.random.default_rng(3))
    assert np.median(x, axis=0) == pytest.approx(mu, abs=0.05)
    above = np.mean(x[:, 0] > mu[0])
    assert abs(above - 0.5) < 3 * 0.5 / np.sqrt(BIG)
    with pytest.raises(ValueError):
        sample_mvcauchy(mu, [[1.0, 2.0], [2.0, 1.0]], 3, np.random.default_rng(0))


def test_standard_cauchy_quartiles():
    x = sample_mvcauchy([0.0, 0.0], np.eye(2), BIG, np.random.default_rng(4))
    inside = np.mean(np.abs(x[:, 0]) <= 1)
    assert abs(inside - 0.5) < 3 * 0.5 / np.sqrt(BIG)
    assert stats.kstest(x[:5000, 1], "cauchy").pvalue > 0.001


def test_triangle_support_and_centroid():
    x = sample_triangle(*TRI, BIG, np.random.default_rng(5))
    # edges: y >= 0, 4x + 9y <= 24 (through (6,0) and (-3,4)), 4x + 3y >= 0 (through origin and (-3,4))
    assert np.all(x[:, 1] >= 0)
    assert np.all(4 * x[:, 0] + 9 * x[:, 1] <= 24 + 1e-9)
    assert np.all(4 * x[:, 0] + 3 * x[:, 1] >= -1e-9)
    assert x.mean(axis=0) == pytest.approx([1.0, 4 / 3], abs=0.02)


def test_triangle_half_split_is_area_proportional():
    x = sample_triangle(*TRI, BIG, np.random.default_rng(6))
    # the line y = 2 cuts the triangle; the part above is similar with ratio 1/2
    above = np.mean(x[:, 1] > 2)
    assert abs(above - 0.25) < 3 * np.sqrt(0.25 * 0.75 / BIG)


def test_triangle_collinear():
    with pytest.raises(ValueError):
        sample_triangle([0, 0], [1, 1], [2, 2], 5, np.random.default_rng(0))


SCENARIO_TEXT = """
[scenario]
name = demo
seed = 11
replications = 3
reference = ctrl
bandwidth = 0.25
alpha = 0.05
k = 1
nw = no

[group case]
family = mvcauchy
n = 30
mu = 0 0
v = 1 0; 0 1

[group ctrl]
family = triangle_uniform
n = 25
vertices = 0 0; 6 0; -3 4
"""


def test_parse_scenario():
    sc = parse_scenario(SCENARIO_TEXT)
    assert sc.name == "demo" and sc.seed == 11 and sc.replications == 3
    assert sc.bandwidth == 0.25 and sc.alpha == 0.05 and sc.k == 1.0 and sc.nw is False
    assert [g.label for g in sc.groups] == ["case", "ctrl"]
    assert sc.groups[0].params["v"] == [[1.0, 0.0], [0.0, 1.0]]
    assert sc.groups[1].params["vertices"][2] == [-3.0, 4.0]


@pytest.mark.parametrize("bad", [
    "[group a]\nfamily = mvn\nn = 3\nmu = 0\nsigma = 1\n",
    SCENARIO_TEXT.replace("triangle_uniform", "uniform"),
    SCENARIO_TEXT.replace("n = 25", "n = 0"),
    SCENARIO_TEXT.replace("reference = ctrl", "reference = other"),
    SCENARIO_TEXT.replace("vertices = 0 0; 6 0; -3 4", "vertices = 0 0; 6 0"),
    SCENARIO_TEXT.replace("mu = 0 0", "mu = 0 0 0"),
    "[scenario\n",
])
def test_parse_scenario_rejects(bad):
    with pytest.raises((ValueError, KeyError)):
        parse_scenario(bad)


def test_generate_streams_are_keyed():
    sc = benchmark_scenarios(seed=3)["run2"]
    a, b = generate(sc, 0), generate(sc, 0)
    assert all(np.array_equal(x, y) for x, y in zip(a.groups, b.groups))
    c = generate(sc, 1)
    assert not np.array_equal(a.groups[0], c.groups[0])
    # changing one group's size leaves the other group's draws alone
    bigger = Scenario(sc.name, (sc.groups[0], GroupSpec("ctrl", "mvn", 300, sc.groups[1].params)),
                      "ctrl", seed=3)
    assert np.array_equal(generate(bigger, 0).groups[0], a.groups[0])


def test_run_study_is_deterministic_and_parallel_safe():
    sc = parse_scenario(SCENARIO_TEXT)
    first = run_study(sc).to_csv()
    assert first == run_study(sc).to_csv()
    assert first == run_study(sc, workers=2).to_csv()
    header = first.splitlines()[0].split(",")
    assert header == COLUMNS
    # 3 replications x 2 groups, then mean and median rows per group
    assert len(first.splitlines()) == 1 + 6 + 4


def test_run1_and_run4_patterns():
    sc = benchmark_scenarios(replications=20, seed=7, nw=False)
    run1, run4 = run_study(sc["run1"]), run_study(sc["run4"])
    for group in ("case", "ctrl"):
        assert run1.summary_value("median", "r2_alpha_k", group) >= 0.99
        assert run4.summary_value("median", "r2_alpha_k", group) <= 0.3
    assert run1.failures == 0


def test_failed_replications_are_recorded():
    # two observations cannot identify three parameters
    groups = (GroupSpec("a", "mvn", 1, {"mu": [0.0, 0.0], "sigma": np.eye(2).tolist()}),
              GroupSpec("b", "mvn", 1, {"mu": [0.0, 0.0], "sigma": np.eye(2).tolist()}))
    res = run_study(Scenario("tiny", groups, "b", replications=2, seed=1))
    assert res.failures == 2
    assert all(r["error"].startswith("DimensionError") for r in res.rows)
    assert np.isnan(res.summary_value("mean", "r2_3", "a"))


def test_tgct_analog_shape():
    sc = tgct_analog_scenario(seed=1)
    data = generate(sc, 0)
    assert data.dimension == 3
    assert list(data.sizes) == [763, 928]
    assert np.mean(data.groups[1], axis=0) == pytest.approx([38, 178, 82], abs=2)

"""Samplers and a reproducible Monte Carlo study runner.

Every replication draws each group from its own Philox stream keyed by
``(seed, replication, group position)``, so results do not depend on how
replications are spread across worker processes.

Scenario files are INI text::

    [scenario]
    name = run2
    seed = 1
    replications = 50
    reference = ctrl
    bandwidth = 0.3
    alpha = 0.10
    k = 2

    [group case]
    family = mvn
    n = 200
    mu = 0 0
    sigma = 3 1; 1 2

    [group ctrl]
    family = mvn
    n = 200
    mu = 1 1
    sigma = 3 1; 1 2

Families are ``mvn`` (``mu``, ``sigma``), ``mvcauchy`` (``mu``, ``v``) and
``triangle_uniform`` (``vertices = x1 y1; x2 y2; x3 y3``).  Matrices are
written row by row, rows separated by ``;``.
"""
from __future__ import annotations

import configparser
import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import DRMError, SampleSet
from .diagnostics import gof_report
from .estimation import ConvergenceWarning, fit
from .regression import DEFAULT_BANDWIDTH

__all__ = [
    "sample_mvn",
    "sample_mvcauchy",
    "sample_triangle",
    "GroupSpec",
    "Scenario",
    "StudyResult",
    "parse_scenario",
    "load_scenario",
    "benchmark_scenarios",
    "TGCT_ANALOG_COLUMNS",
    "tgct_analog_scenario",
    "generate",
    "run_study",
]

FAMILIES = ("mvn", "mvcauchy", "triangle_uniform")


def _cholesky(matrix, name):
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    if matrix.shape[0] != matrix.shape[1] or not np.allclose(matrix, matrix.T):
        raise ValueError(f"{name} must be a symmetric square matrix")
    try:
        return np.linalg.cholesky(matrix)
    except np.linalg.LinAlgError:
        raise ValueError(f"{name} is not positive definite") from None


def _location(mu, chol, name):
    mu = np.atleast_1d(np.asarray(mu, dtype=float))
    if mu.shape != (chol.shape[0],):
        raise ValueError(f"mu has {mu.size} entries but {name} is {chol.shape[0]} x {chol.shape[0]}")
    return mu


def sample_mvn(mu, sigma, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws from ``N(mu, sigma)`` via the Cholesky factor of ``sigma``."""
    chol = _cholesky(sigma, "sigma")
    mu = _location(mu, chol, "sigma")
    z = rng.standard_normal((n, mu.size))
    return mu + z @ chol.T


def sample_mvcauchy(mu, v, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` draws from the multivariate Cauchy (t with one degree of freedom).

    Each draw is ``mu + C z / |u|`` with ``C C' = v``, ``z`` standard normal
    and ``u`` an independent standard normal scalar.
    """
    chol = _cholesky(v, "v")
    mu = _location(mu, chol, "v")
    z = rng.standard_normal((n, mu.size))
    u = np.abs(rng.standard_normal(n))
    return mu + (z @ chol.T) / u[:, None]


def sample_triangle(v1, v2, v3, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` points uniform on the triangle with the given vertices."""
    v1, v2, v3 = (np.asarray(v, dtype=float) for v in (v1, v2, v3))
    area2 = (v2[0] - v1[0]) * (v3[1] - v1[1]) - (v3[0] - v1[0]) * (v2[1] - v1[1])
    if abs(area2) < 1e-12:
        raise ValueError("triangle vertices are collinear")
    r1 = rng.random(n)
    r2 = rng.random(n)
    s = np.sqrt(r1)
    return ((1 - s)[:, None] * v1 + (s * (1 - r2))[:, None] * v2
            + (s * r2)[:, None] * v3)


@dataclass(frozen=True)
class GroupSpec:
    label: str
    family: str
    n: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.n <= 0:
            raise ValueError("group size must be positive")

    @property
    def dimension(self) -> int:
        if self.family == "triangle_uniform":
            return 2
        return len(np.atleast_1d(self.params["mu"]))

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        p = self.params
        if self.family == "mvn":
            return sample_mvn(p["mu"], p["sigma"], self.n, rng)
        if self.family == "mvcauchy":
            return sample_mvcauchy(p["mu"], p["v"], self.n, rng)
        return sample_triangle(*p["vertices"], self.n, rng)


@dataclass(frozen=True)
class Scenario:
    name: str
    groups: tuple
    reference: str
    replications: int = 1
    seed: int = 0
    bandwidth: float = DEFAULT_BANDWIDTH
    alpha: float = 0.10
    k: float = 2.0
    candidate_set: str = "combined"
    nw: bool = True

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        labels = [g.label for g in self.groups]
        if len(labels) < 2 or len(set(labels)) != len(labels):
            raise ValueError("need at least two uniquely labelled groups")
        if self.reference not in labels:
            raise ValueError(f"reference {self.reference!r} is not a group")
        dims = {g.dimension for g in self.groups}
        if len(dims) != 1:
            raise ValueError(f"groups disagree on dimension: {sorted(dims)}")


def _vector(text):
    return [float(v) for v in text.replace(",", " ").split()]


def _matrix(text):
    return [_vector(row) for row in text.split(";") if row.strip()]


def parse_scenario(text: str) -> Scenario:
    """Build a :class:`Scenario` from INI text (format in the module docstring)."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValueError(f"malformed scenario file: {exc}") from None
    if "scenario" not in cp:
        raise ValueError("scenario file needs a [scenario] section")
    head = cp["scenario"]
    groups = []
    for section in cp.sections():
        if not section.startswith("group "):
            continue
        s = cp[section]
        family = s.get("family", "").strip()
        params = {}
        if family == "mvn":
            params = {"mu": _vector(s["mu"]), "sigma": _matrix(s["sigma"])}
        elif family == "mvcauchy":
            params = {"mu": _vector(s["mu"]), "v": _matrix(s["v"])}
        elif family == "triangle_uniform":
            params = {"vertices": _matrix(s["vertices"])}
            if len(params["vertices"]) != 3 or any(len(v) != 2 for v in params["vertices"]):
                raise ValueError(f"[{section}]: vertices needs three 'x y' rows")
        groups.append(GroupSpec(section[len("group "):].strip(), family, s.getint("n"), params))
    return Scenario(
        name=head.get("name", "scenario"),
        groups=tuple(groups),
        reference=head.get("reference", groups[-1].label if groups else ""),
        replications=head.getint("replications", 1),
        seed=head.getint("seed", 0),
        bandwidth=head.getfloat("bandwidth", DEFAULT_BANDWIDTH),
        alpha=head.getfloat("alpha", 0.10),
        k=head.getfloat("k", 2.0),
        candidate_set=head.get("candidate_set", "combined"),
        nw=head.getboolean("nw", True),
    )


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def benchmark_scenarios(replications: int = 1, seed: int = 0, **kwargs) -> dict:
    """The four bivariate designs: two model-correct normal runs, two that are not."""
    S1 = [[4.0, 2.0], [2.0, 3.0]]
    S2 = [[3.0, 1.0], [1.0, 2.0]]
    eye = [[1.0, 0.0], [0.0, 1.0]]
    V = [[5.0, 5.0], [5.0, 10.0]]
    tri = [[0.0, 0.0], [6.0, 0.0], [-3.0, 4.0]]
    designs = {
        "run1": (GroupSpec("case", "mvn", 40, {"mu": [0, 0], "sigma": S1}),
                 GroupSpec("ctrl", "mvn", 30, {"mu": [0, 0], "sigma": S1})),
        "run2": (GroupSpec("case", "mvn", 200, {"mu": [0, 0], "sigma": S2}),
                 GroupSpec("ctrl", "mvn", 200, {"mu": [1, 1], "sigma": S2})),
        "run3": (GroupSpec("case", "mvcauchy", 200, {"mu": [0, 0], "v": eye}),
                 GroupSpec("ctrl", "mvcauchy", 200, {"mu": [1, 1], "v": V})),
        "run4": (GroupSpec("case", "mvcauchy", 200, {"mu": [0, 0], "v": eye}),
                 GroupSpec("ctrl", "triangle_uniform", 200, {"vertices": tri})),
    }
    return {name: Scenario(name, groups, "ctrl", replications, seed, **kwargs)
            for name, groups in designs.items()}


TGCT_ANALOG_COLUMNS = ("age", "height", "weight")


def tgct_analog_scenario(replications: int = 1, seed: int = 0, **kwargs) -> Scenario:
    """Synthetic three-variable case/control design with body-measurement scales.

    Coordinates are (age in years, height in cm, weight in kg); both groups are
    Gaussian with a shared covariance, so the density ratio model holds.  Sizes
    follow a cancer case-control study (763 cases, 928 controls).  The numbers
    are invented, not estimated from any data set.
    """
    sd = np.array([9.0, 7.0, 14.0])
    corr = np.array([[1.0, -0.05, 0.35], [-0.05, 1.0, 0.45], [0.35, 0.45, 1.0]])
    sigma = (corr * np.outer(sd, sd)).tolist()
    groups = (GroupSpec("case", "mvn", 763, {"mu": [33.0, 180.0, 80.0], "sigma": sigma}),
              GroupSpec("ctrl", "mvn", 928, {"mu": [38.0, 178.0, 82.0], "sigma": sigma}))
    return Scenario("tgct_analog", groups, "ctrl", replications, seed, **kwargs)


def generate(scenario: Scenario, replication: int) -> SampleSet:
    """Draw one replication's data; each group has its own keyed stream."""
    groups = []
    for pos, spec in enumerate(scenario.groups):
        seq = np.random.SeedSequence([scenario.seed, replication, pos])
        groups.append(spec.draw(np.random.Generator(np.random.Philox(seq))))
    return SampleSet(groups, [g.label for g in scenario.groups], scenario.reference)


COLUMNS = [
    "kind", "replication", "group", "converged", "iterations", "n_i",
    "r2_1", "r2_2", "r2_3", "r2_alpha_k", "x_count", "max_abs_gap",
    "mse_drm", "mae_drm", "mse_ols", "mae_ols", "mse_nw", "mae_nw", "error",
]
METRICS = COLUMNS[5:-1]


def _replicate(scenario: Scenario, replication: int) -> list:
    data = generate(scenario, replication)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            model = fit(data)
        report = gof_report(model, h=scenario.bandwidth, alpha=scenario.alpha,
                            k=scenario.k, candidate_set=scenario.candidate_set,
                            nw=scenario.nw)
    except (DRMError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return [dict(kind="replication", replication=replication, group=label,
                     error=f"{type(exc).__name__}: {exc}".replace("\n", " "))
                for label in data.ordered_labels]
    rows = []
    for g in report.groups:
        row = dict(kind="replication", replication=replication, group=g.label,
                   converged=int(model.converged), iterations=model.iterations,
                   n_i=g.n_i, r2_1=g.r2_1, r2_2=g.r2_2, r2_3=g.r2_3,
                   r2_alpha_k=g.r2_alpha_k, x_count=g.x_count,
                   max_abs_gap=g.max_abs_gap, error="")
        for method, (mse, mae) in g.errors.items():
            row[f"mse_{method}"] = mse
            row[f"mae_{method}"] = mae
        rows.append(row)
    return rows


def _replicate_star(args):
    return _replicate(*args)


@dataclass
class StudyResult:
    scenario: Scenario
    rows: list
    summary: list

    @property
    def failures(self) -> int:
        return len({r["replication"] for r in self.rows if r.get("error")})

    def column(self, metric: str, group: str) -> np.ndarray:
        return np.array([_num(r.get(metric)) for r in self.rows
                         if r["group"] == group and not r.get("error")])

    def summary_value(self, stat: str, metric: str, group: str) -> float:
        for r in self.summary:
            if r["kind"] == stat and r["group"] == group:
                return _num(r.get(metric))
        raise KeyError((stat, group))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows + self.summary:
            writer.writerow({c: _fmt(row.get(c)) for c in COLUMNS})
        return buf.getvalue()


def _num(v):
    return math.nan if v is None or v == "" else float(v)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ""
    return str(v)


def _summarise(rows, labels):
    out = []
    for stat, fn in (("mean", np.mean), ("median", np.median)):
        for label in labels:
            good = [r for r in rows if r["group"] == label and not r.get("error")]
            entry = dict(kind=stat, replication="", group=label, error="")
            for metric in METRICS:
                vals = [r[metric] for r in good if r.get(metric) is not None]
                entry[metric] = float(fn(vals)) if vals else None
            out.append(entry)
    return out


def run_study(scenario: Scenario, workers: int = 1) -> StudyResult:
    """Run every replication and aggregate per-group means and medians.

    Failed fits are recorded in the ``error`` column and skipped in the
    summaries; they never abort the study.  ``workers > 1`` spreads
    replications over processes without changing the output.
    """
    jobs = [(scenario, r) for r in range(scenario.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_replicate_star, jobs))
    else:
        chunks = [_replicate(*job) for job in jobs]
    rows = [row for chunk in chunks for row in chunk]
    labels = [g.label for g in scenario.groups]
    return StudyResult(scenario, rows, _summarise(rows, labels))

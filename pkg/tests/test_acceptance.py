"""The twelve acceptance criteria, each at its stated tolerance.

Every test records a one-line PASS/FAIL verdict (printed inline and again in
the pytest terminal summary) before asserting.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest

from acceptance_log import record
from oracles import crps_trapezoid, pinball_total, pinball_vertex_optimum, space_time_correlation
from pvtraj import copula
from pvtraj.experiment import ExperimentConfig, evaluate, prepare, score_cell
from pvtraj.marginals import DEFAULT_LEVELS, PredictiveCdf, crps, fit_quantile
from pvtraj.scoring import VsConfig, brier_score, energy_score, variogram_score

STRONG = {"synth": {"n_days": 400, "rho_time": 0.97, "rho_space": 0.95}, "synth_seed": 1}


def _random_cdf(rng):
    return PredictiveCdf.from_quantiles(DEFAULT_LEVELS, np.sort(rng.beta(2, 2, 99)))


@pytest.fixture(scope="module")
def strong_prep():
    methods = ["mvn_recursive", "independent", "gaussian_copula_empirical",
               "independent_gaussian_5", "independent_gaussian_10"]
    cfg = ExperimentConfig(data=STRONG, runs=30, S_list=[200], methods=methods)
    return prepare(cfg)


def test_criterion_01_formula_exactness():
    es = energy_score([0, 0], [[1, 0], [0, 1]])
    vs = variogram_score([0, 1], [[1, 1]], VsConfig(np.ones((2, 2)), 0.5))
    bs = brier_score([0.2, 0.8], [0, 1])
    errs = (abs(es - (1 - np.sqrt(2) / 4)), abs(vs - 2.0), abs(bs - 0.04))
    ok = errs[0] <= 1e-12 and errs[1] <= 1e-12 and errs[2] <= 1e-15
    record(1, ok, f"ES err {errs[0]:.1e}, VS err {errs[1]:.1e}, BS err {errs[2]:.1e}")
    assert ok


def test_criterion_02_crps_oracle():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        cdf = _random_cdf(rng)
        obs = rng.uniform(0, 1)
        xs, ps = cdf.anchors
        worst = max(worst, abs(crps(cdf, obs) - crps_trapezoid(xs, ps, obs)))
    uniform = PredictiveCdf.from_quantiles(DEFAULT_LEVELS, DEFAULT_LEVELS)
    err_u = abs(crps(uniform, 0.0) - 1 / 3)
    ok = worst <= 1e-6 and err_u <= 1e-9
    record(2, ok, f"max |CRPS - trapezoid| {worst:.2e}; uniform case err {err_u:.1e}")
    assert ok


def test_criterion_03_pinball_optimality():
    rng = np.random.default_rng(3)
    worst = 0.0
    for features in (0, 2):
        for _ in range(50):
            n = int(rng.integers(features + 3, 13))
            X = rng.normal(size=(n, features))
            y = X @ rng.normal(size=features) + rng.standard_t(3, n)
            a = float(rng.uniform(0.02, 0.98))
            c = fit_quantile(X, y, a)
            got = pinball_total(y, c[0] + X @ c[1:], a)
            oracle = pinball_vertex_optimum(np.c_[np.ones(n), X], y, a)
            worst = max(worst, got - oracle)
    ok = worst <= 1e-6
    record(3, ok, f"max loss excess over vertex oracle {worst:.2e} (100 instances)")
    assert ok


def test_criterion_04_copula_roundtrip():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        cdf = _random_cdf(rng)
        p = rng.uniform(cdf.quantiles[0], cdf.quantiles[-1], 100)
        u = copula.to_uniform(cdf, p)
        back = cdf.inverse(copula.probit_inverse(copula.probit(u)))
        worst = max(worst, float(np.max(np.abs(back - p))))
    ok = worst <= 1e-6
    record(4, ok, f"max round-trip error {worst:.2e} on 10^4 interior points")
    assert ok


def test_criterion_05_recursive_consistency():
    # strongly correlated target of the 3-zone, 15-node layout
    R = space_time_correlation(3, 15, 0.95, 0.97)
    L = np.linalg.cholesky(R + 1e-12 * np.eye(45))

    def distance(seed):
        rng = np.random.default_rng(seed)
        state = copula.CorrelationState.identity(45, 0.98)
        for x in rng.standard_normal((500, 45)) @ L.T:
            state = copula.update_recursive(state, x)
        return np.linalg.norm(state.correlation() - R)

    d0 = distance(0)
    dists = np.array([distance(s) for s in range(20)])
    bound = 0.05 * 45
    ok = d0 < bound and dists.mean() < bound
    record(5, ok, f"Frobenius {d0:.3f} (seed 0), mean {dists.mean():.3f} over 20 streams, "
                  f"{(dists < bound).mean():.0%} of streams inside bound {bound}")
    assert ok


def test_criterion_06_psd_repair():
    rng = np.random.default_rng(6)
    min_eig, diag_err, idem = np.inf, 0.0, 0.0
    for _ in range(100):
        A = rng.uniform(-1, 1, (45, 45))
        A = 0.5 * (A + A.T)
        np.fill_diagonal(A, 1.0)
        assert np.linalg.eigvalsh(A).min() < 0
        out = copula.nearest_psd(A)
        min_eig = min(min_eig, np.linalg.eigvalsh(out).min())
        diag_err = max(diag_err, np.max(np.abs(np.diag(out) - 1)))
        idem = max(idem, np.max(np.abs(copula.nearest_psd(out) - out)))
    ok = min_eig >= -1e-8 and diag_err <= 1e-12 and idem <= 1e-10
    record(6, ok, f"min eigenvalue {min_eig:.1e}, diag err {diag_err:.1e}, idempotence {idem:.1e}")
    assert ok


def test_criterion_07_sampler_fidelity():
    rng = np.random.default_rng(7)
    worst = 0.0
    for D in (5, 15, 30, 45):
        A = rng.normal(size=(D, D))
        R = copula.rescale_to_correlation(A @ A.T)
        x = copula.sample(copula.build_sampler(R, seed=D), 50_000)
        worst = max(worst, np.max(np.abs(np.corrcoef(x, rowvar=False) - R)))
    ok = worst <= 0.02
    record(7, ok, f"max entrywise correlation error {worst:.4f} at 50 000 samples")
    assert ok


def test_criterion_08_pit_calibration(strong_prep):
    assert len(strong_prep.eval_frames) == 200
    _, pit = score_cell(strong_prep, 0, "mvn_recursive", 3000)
    dev = pit.max_deviation()
    ok = dev < 0.015
    record(8, ok, f"max PIT bin deviation {100 * dev:.3f} points (S=3000, T=200, 20 bins)")
    assert ok


def test_criterion_09_qualitative_ordering(strong_prep):
    t0 = time.time()
    rep = evaluate(strong_prep)
    elapsed = time.time() - t0
    cell = lambda m, s: rep.cell(m, 200, s)
    vs_gap = (cell("independent", "VS1") - cell("mvn_recursive", "VS1")) / cell("independent", "VS1")
    es_gap = (cell("independent", "ES") - cell("mvn_recursive", "ES")) / cell("independent", "ES")
    a = vs_gap >= 0.05
    b = es_gap < vs_gap
    c = all(cell("independent", "ES") < cell(g, "ES")
            for g in ("independent_gaussian_5", "independent_gaussian_10"))
    agree = [abs(cell("gaussian_copula_empirical", s) - cell("mvn_recursive", s))
             / cell("mvn_recursive", s) for s in ("ES", "VS1", "VS2")]
    d = max(agree) <= 0.05
    ok = a and b and c and d
    record(9, ok, f"(a) VS1 gap {vs_gap:.1%} (b) ES gap {es_gap:.1%} (c) {c} "
                  f"(d) max rel diff {max(agree):.2%}; {elapsed:.0f}s")
    assert ok


def test_criterion_10_s_sweep():
    cfg = ExperimentConfig(data=STRONG, mode="temporal", runs=30,
                           S_list=[20, 100, 200, 400, 3000], methods=["mvn_recursive"])
    prep = prepare(cfg)
    rep = evaluate(prep)
    m = "mvn_recursive"
    lines, ok = [], True
    for name in ("VS1", "VS2"):
        means = [rep.cell(m, S, name) for S in cfg.S_list]
        se = [rep.run_values(m, S, name).std(ddof=1) / np.sqrt(cfg.runs) for S in cfg.S_list]
        # later S may not be worse than the previous beyond two standard errors
        mono = all(means[i + 1] <= means[i] + 2 * np.hypot(se[i], se[i + 1])
                   for i in range(len(means) - 1))
        ok &= mono
        lines.append(f"{name} monotone {mono}")
    es = np.array([rep.cell(m, S, "ES") for S in cfg.S_list])
    spread = (es.max() - es.min()) / es.mean()
    ok &= spread < 0.02
    lines.append(f"ES spread {spread:.2%} (ES by S: {', '.join(f'{v:.4f}' for v in es)})")
    record(10, ok, "; ".join(lines))
    assert ok


def test_criterion_11_reproducibility(tmp_path):
    cfg = {"data": {"synth": {"n_days": 60}, "synth_seed": 5}, "runs": 2,
           "S_list": [20, 100], "seed": 11}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    outs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        subprocess.run([sys.executable, "-m", "pvtraj", "run", "--config", str(path),
                        "--out", str(out)], check=True, capture_output=True)
        outs.append(out)
    same = all((outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()
               for f in ("scores.json", "scores.csv", "pit.csv"))
    record(11, same, "scores.json, scores.csv and pit.csv byte-identical across two runs")
    assert same


def test_criterion_12_crps_daily_shape(strong_prep):
    crps_by_hour = strong_prep.crps
    mean_power = strong_prep.eval_power.mean(axis=0)
    ok, parts = True, []
    for j, z in enumerate(strong_prep.zones):
        lit = np.flatnonzero(mean_power[j] > 0.01)
        row = crps_by_hour[j]
        good = row[lit[0]] < row.max() and row[lit[-1]] < row.max()
        ok &= good
        parts.append(f"zone {z}: first {row[lit[0]]:.4f} last {row[lit[-1]]:.4f} "
                     f"max {row.max():.4f}")
    record(12, ok, "; ".join(parts))
    assert ok

"""End-to-end experiment: marginals, time grid, copula, trajectories, scores.

``prepare`` does everything that does not depend on the random seed (fitting,
grid maps, ranks, the day-by-day correlation sequence). ``evaluate`` then runs
each (run, method, S) combination over the evaluation days and averages.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import copula, scoring, trajectories as traj
from .data_ingest import (
    PowerDataset,
    SiteMeta,
    SynthConfig,
    load_gefcom,
    split_half,
    synthesize,
)
from .errors import ConfigError, NumericalError, PvTrajError
from .marginals import (
    DEFAULT_LEVELS,
    MarginalModels,
    central_intervals,
    crps_table,
    fit_clear_sky,
    fit_marginals,
    as_stack,
    reliability_diagram,
)
from .time_grid import QUANTILE_BLEND, build_map, grid_cdfs, to_grid

logger = logging.getLogger(__name__)

SPACETIME = "spacetime"
TEMPORAL = "temporal"


@dataclass
class ExperimentConfig:
    data: dict = field(default_factory=lambda: {"synth": {}, "synth_seed": 0})
    zones: list | None = None
    mode: str = SPACETIME
    grid_size: int = 15
    forgetting: float = copula.DEFAULT_FORGETTING
    freeze_recursive: bool = False
    S_list: list = field(default_factory=lambda: [20, 100, 200, 400, 3000])
    methods: list = field(default_factory=lambda: list(traj.DEFAULT_METHODS))
    vs_modes: list = field(default_factory=lambda: [scoring.UNIFORM, scoring.CORRELATION])
    gamma: float = 0.5
    events: list = field(default_factory=lambda: [asdict(e) for e in scoring.DEFAULT_EVENTS])
    seed: int = 0
    runs: int = 30
    split_ratio: float = 0.5
    daytime_threshold: float = 0.01
    grid_cdf_rule: str = QUANTILE_BLEND
    pit_bins: int = 20
    max_eval_days: int | None = None
    plot_days: int = 3
    output_dir: str = "out"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.S_list:
            raise ConfigError("S_list must not be empty")
        if any(int(s) < 1 for s in self.S_list):
            raise ConfigError("every S must be >= 1")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.mode not in (SPACETIME, TEMPORAL):
            raise ConfigError(f"mode must be {SPACETIME!r} or {TEMPORAL!r}")
        for m in self.methods:
            try:
                traj.parse_method(m)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        for v in self.vs_modes:
            if v not in scoring.VS_MODES:
                raise ConfigError(f"unknown VS mode {v!r}")
        if len(set(self.methods)) != len(self.methods):
            raise ConfigError("duplicate method names")
        if self.grid_size < 2:
            raise ConfigError("grid_size must be >= 2")
        if not 0 <= self.forgetting < 1:
            raise ConfigError("forgetting factor must lie in [0, 1)")
        self.event_specs()

    def event_specs(self):
        try:
            return [scoring.EventSpec(**e) for e in self.events]
        except TypeError as exc:
            raise ConfigError(f"bad event spec: {exc}") from None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        cfg = cls.from_dict(d)
        base = Path(path).parent
        src = cfg.data.get("path")
        if src and not Path(src).is_absolute():
            cfg.data = {**cfg.data, "path": str(base / src)}
        return cfg

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        # where results are written does not change them
        d = {k: v for k, v in self.to_dict().items() if k != "output_dir"}
        text = json.dumps(d, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def load_dataset(cfg: ExperimentConfig) -> PowerDataset:
    data = cfg.data
    if "path" in data:
        sites = data.get("sites")
        if not sites:
            raise ConfigError("data.sites is required with data.path")
        meta = [SiteMeta(**s) for s in sites]
        ds = load_gefcom(data["path"], meta)
    elif "synth" in data:
        ds = synthesize(SynthConfig.from_dict(data["synth"]), int(data.get("synth_seed", 0)))
    else:
        raise ConfigError("data must give either 'path' or 'synth'")
    zones = cfg.zones or list(ds.zones)
    missing = [z for z in zones if z not in ds.zones]
    if missing:
        raise ConfigError(f"zones {missing} not present in data")
    if cfg.mode == TEMPORAL:
        zones = zones[:1]
    return ds.select_zones(zones)


@dataclass
class DayFrame:
    """Seed-independent inputs of one day, all zones stacked zone-major."""

    day_index: int
    maps: tuple
    node_cdfs: list
    grid_obs: np.ndarray
    ranks: np.ndarray
    obs_hourly: np.ndarray
    usable: bool = True
    R_recursive: np.ndarray | None = None
    R_empirical: np.ndarray | None = None
    history_end: int = 0
    outcomes: dict = field(default_factory=dict)
    node_stack: object = None

    @property
    def cdfs(self):
        return self.node_stack if self.node_stack is not None else self.node_cdfs


@dataclass
class Prepared:
    config: ExperimentConfig
    dataset: PowerDataset
    models: MarginalModels
    proxies: list
    train_frames: list
    eval_frames: list
    history: np.ndarray
    vs_configs: list
    crps: np.ndarray
    reliability: tuple
    eval_cdfs: np.ndarray
    eval_power: np.ndarray
    final_state: copula.CorrelationState
    hours: np.ndarray

    @property
    def zones(self):
        return self.dataset.zones

    @property
    def dim(self):
        return self.config.grid_size * len(self.zones)


def _frame(i, day_index, power, cdfs, cfg, hours, zones):
    Z = power.shape[0]
    maps, node_cdfs, grid_obs = [], [], []
    for j in range(Z):
        m = build_map(power[j], cfg.grid_size, hours, cfg.daytime_threshold,
                      int(day_index), int(zones[j]))
        maps.append(m)
        if not m.usable:
            return DayFrame(int(day_index), tuple(maps), [], np.zeros(0), np.zeros(0),
                            power, usable=False)
        node_cdfs.extend(grid_cdfs(cdfs[i, j], m, cfg.grid_cdf_rule))
        grid_obs.append(to_grid(power[j], m))
    grid_obs = np.concatenate(grid_obs)
    u = np.array([copula.to_uniform(c, p) for c, p in zip(node_cdfs, grid_obs)])
    return DayFrame(int(day_index), tuple(maps), node_cdfs, grid_obs,
                    copula.probit(u), power, node_stack=as_stack(node_cdfs))


def prepare(cfg: ExperimentConfig, dataset: PowerDataset | None = None) -> Prepared:
    ds = load_dataset(cfg) if dataset is None else dataset
    split = split_half(ds, cfg.split_ratio)
    train, ev = split.train, split.eval
    if cfg.max_eval_days is not None:
        ev = ev.select_days(np.arange(min(cfg.max_eval_days, ev.n_days)))
    hours = ds.lead_times
    logger.info("fitting marginals on %d days", train.n_days)
    models = fit_marginals(train, DEFAULT_LEVELS)
    proxies = [fit_clear_sky(hours, train.power[:, j], z) for j, z in enumerate(ds.zones)]
    cdf_train = models.predict_cdfs(train)
    cdf_eval = models.predict_cdfs(ev)

    train_frames = [_frame(i, t, train.power[i], cdf_train, cfg, hours, ds.zones)
                    for i, t in enumerate(train.days)]
    eval_frames = [_frame(i, t, ev.power[i], cdf_eval, cfg, hours, ds.zones)
                   for i, t in enumerate(ev.days)]

    D = cfg.grid_size * len(ds.zones)
    state = copula.CorrelationState.identity(D, cfg.forgetting)
    second = np.zeros((D, D))
    history = []
    for f in train_frames:
        if f.usable:
            state = copula.update_recursive(state, f.ranks)
            second += np.outer(f.ranks, f.ranks)
            history.append(f.grid_obs)

    specs = cfg.event_specs()
    for f in eval_frames:
        if not f.usable:
            continue
        n = len(history)
        f.R_recursive = state.correlation()
        f.R_empirical = (copula.nearest_psd(copula.rescale_to_correlation(second / n))
                         if n >= 2 else np.eye(D))
        f.history_end = n
        f.outcomes = {e: scoring.event_indicator(f.obs_hourly, proxies, spec, hours)
                      for e, spec in enumerate(specs)}
        if not cfg.freeze_recursive:
            state = copula.update_recursive(state, f.ranks)
        second += np.outer(f.ranks, f.ranks)
        history.append(f.grid_obs)

    Dh = len(ds.zones) * len(hours)
    hist_hourly = train.power.reshape(train.n_days, Dh)
    with np.errstate(invalid="ignore", divide="ignore"):
        hist_corr = np.nan_to_num(np.corrcoef(hist_hourly, rowvar=False))
    positions = np.array([(h, j) for j in range(len(ds.zones)) for h in hours], dtype=float)
    vs_configs = [scoring.VsConfig(
        scoring.build_vs_weights(mode, dim=Dh, correlation=hist_corr, positions=positions),
        cfg.gamma, mode) for mode in cfg.vs_modes]

    usable = [f for f in eval_frames if f.usable]
    skipped = len(eval_frames) - len(usable)
    if skipped:
        logger.warning("skipping %d evaluation day(s) without a usable time grid", skipped)
    keep = [i for i, f in enumerate(eval_frames) if f.usable]
    return Prepared(
        config=cfg, dataset=ds, models=models, proxies=proxies,
        train_frames=train_frames, eval_frames=usable,
        history=np.array(history), vs_configs=vs_configs,
        crps=crps_table(cdf_eval, ev.power),
        reliability=reliability_diagram(cdf_eval.ravel(), ev.power.ravel()),
        eval_cdfs=cdf_eval[keep], eval_power=ev.power[keep],
        final_state=state, hours=hours)


def _stream(master, run, method, S, day):
    return np.random.SeedSequence(
        [int(master), int(run), zlib.crc32(method.encode()), int(S), int(day)])


def generate_for(prep: Prepared, frame: DayFrame, method: str, S: int, seed):
    """Trajectory set of ``method`` for one evaluation day on the grid."""
    family, beta = traj.parse_method(method)
    common = dict(day_index=frame.day_index, grid_maps=frame.maps)
    if family == traj.MVN:
        return traj.generate_mvn(frame.cdfs, frame.R_recursive, S, seed, **common)
    if family == traj.EMPIRICAL:
        return traj.generate_mvn(frame.cdfs, frame.R_empirical, S, seed,
                                 method=traj.EMPIRICAL, **common)
    if family == traj.INDEPENDENT:
        return traj.generate_independent(frame.cdfs, S, seed, **common)
    if family == traj.NAIVE:
        return traj.generate_naive(prep.history[:frame.history_end], S, seed, **common)
    points = traj.point_forecast(frame.cdfs)
    tset = traj.generate_independent_gaussian(points, beta, S, seed, **common)
    tset.method = method
    return tset


def metric_names(prep: Prepared) -> list:
    names = ["ES"] + [v.name for v in prep.vs_configs]
    n_events = len(prep.config.events)
    names += [f"BS{e + 1}" for e in range(n_events)]
    if len(prep.zones) > 1:
        names += [f"BS{e + 1}_z{z}" for e in range(n_events) for z in prep.zones]
    names.append("PIT_maxdev")
    return names


def score_cell(prep: Prepared, run: int, method: str, S: int):
    """Day-averaged scores of one (run, method, S) cell, plus its PIT histogram."""
    cfg = prep.config
    specs = cfg.event_specs()
    es, vs = [], [[] for _ in prep.vs_configs]
    probs = {e: [] for e in range(len(specs))}
    outcomes = {e: [] for e in range(len(specs))}
    pit = scoring.PitHistogram.empty(cfg.pit_bins)
    for frame in prep.eval_frames:
        seq = _stream(cfg.seed, run, method, S, frame.day_index)
        gen_seed, pit_seed = seq.spawn(2)
        try:
            tset = generate_for(prep, frame, method, S, gen_seed)
        except PvTrajError as exc:
            raise type(exc)(f"day {frame.day_index}, method {method}: {exc}") from exc
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"day {frame.day_index}, method {method}: {exc}") from exc
        hourly = traj.to_hourly(tset)
        flat = hourly.reshape(S, -1)
        obs = frame.obs_hourly.reshape(-1)
        es.append(scoring.energy_score(obs, flat))
        for v, score in zip(vs, scoring.variogram_scores(obs, flat, prep.vs_configs)):
            v.append(score)
        for e, spec in enumerate(specs):
            probs[e].append(scoring.event_probability(hourly, prep.proxies, spec, prep.hours))
            outcomes[e].append(frame.outcomes[e])
        pit.add(tset.paths, frame.cdfs, np.random.default_rng(pit_seed))

    out = {"ES": float(np.mean(es))}
    for v, vcfg in zip(vs, prep.vs_configs):
        out[vcfg.name] = float(np.mean(v))
    for e in range(len(specs)):
        p, o = np.array(probs[e]), np.array(outcomes[e])
        per_zone = [scoring.brier_score(p[:, j], o[:, j]) for j in range(p.shape[1])]
        out[f"BS{e + 1}"] = float(np.mean(per_zone))
        if len(prep.zones) > 1:
            for j, z in enumerate(prep.zones):
                out[f"BS{e + 1}_z{z}"] = per_zone[j]
    out["PIT_maxdev"] = pit.max_deviation()
    return out, pit


@dataclass
class ScoreReport:
    """Run-averaged scores keyed by (method, S, metric)."""

    rows: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)
    pit: dict = field(default_factory=dict)
    runs: dict = field(default_factory=dict)

    def cell(self, method, S, metric) -> float:
        for r in self.rows:
            if r["method"] == method and r["S"] == S and r["metric"] == metric:
                return r["value"]
        raise KeyError((method, S, metric))

    def run_values(self, method, S, metric) -> np.ndarray:
        return np.array(self.runs[f"{method}|{S}|{metric}"])

    def to_json(self, path=None) -> str:
        doc = {"provenance": self.provenance, "scores": self.rows}
        text = json.dumps(doc, indent=1, sort_keys=True)
        if path is not None:
            Path(path).write_text(text)
        return text

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "S", "metric", "value", "rounded", "run_std", "run_count"])
            for r in self.rows:
                w.writerow([r["method"], r["S"], r["metric"], repr(r["value"]),
                            f"{r['rounded']:.3f}", repr(r["run_std"]), r["run_count"]])


def evaluate(prep: Prepared, methods=None, S_list=None, runs=None,
             report: ScoreReport | None = None) -> ScoreReport:
    cfg = prep.config
    methods = list(cfg.methods if methods is None else methods)
    S_list = [int(s) for s in (cfg.S_list if S_list is None else S_list)]
    runs = cfg.runs if runs is None else runs
    report = ScoreReport() if report is None else report
    report.provenance = {
        "config_hash": cfg.digest(), "master_seed": cfg.seed, "runs": runs,
        "mode": cfg.mode, "zones": list(prep.zones), "grid_size": cfg.grid_size,
        "eval_days": len(prep.eval_frames), "dimension": prep.dim,
        "seed_stream": "SeedSequence([seed, run, crc32(method), S, day])",
    }
    names = metric_names(prep)
    for method in methods:
        for S in S_list:
            per_run = {n: [] for n in names}
            pit_sum = np.zeros(cfg.pit_bins)
            for run in range(runs):
                scores, pit = score_cell(prep, run, method, S)
                for n in names:
                    per_run[n].append(scores[n])
                pit_sum += pit.fractions
            for n in names:
                vals = np.array(per_run[n])
                report.rows.append({
                    "method": method, "S": S, "metric": n, "value": float(vals.mean()),
                    "rounded": scoring.round_score(vals.mean()),
                    "run_std": float(vals.std(ddof=1)) if runs > 1 else 0.0,
                    "run_count": runs})
                report.runs[f"{method}|{S}|{n}"] = vals.tolist()
            report.pit[f"{method}|{S}"] = (pit_sum / runs).tolist()
            logger.info("%s S=%d ES=%.4f", method, S, np.mean(per_run["ES"]))
    return report


def run_experiment(cfg: ExperimentConfig, prep: Prepared | None = None,
                   out_dir=None) -> ScoreReport:
    prep = prepare(cfg) if prep is None else prep
    report = ScoreReport()
    try:
        return evaluate(prep, report=report)
    except Exception:
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            report.to_json(Path(out_dir) / "partial_report.json")
        raise


def emit_plot_data(report: ScoreReport, prep: Prepared, out_dir) -> list:
    """Write the delimited-text data behind the usual figures; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    cfg = prep.config

    if report.rows:
        report.to_csv(out / "scores.csv")
        report.to_json(out / "scores.json")
        written += [out / "scores.csv", out / "scores.json"]
        with (out / "pit.csv").open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["method", "S", "bin_lo", "bin_hi", "fraction"])
            edges = np.linspace(0, 1, cfg.pit_bins + 1)
            for key, fr in sorted(report.pit.items()):
                method, S = key.split("|")
                for b, f in enumerate(fr):
                    w.writerow([method, S, repr(edges[b]), repr(edges[b + 1]), repr(f)])
        written.append(out / "pit.csv")

    with (out / "crps_by_hour.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["zone", "lead_time", "crps"])
        for j, z in enumerate(prep.zones):
            for k, h in enumerate(prep.hours):
                w.writerow([z, int(h), repr(float(prep.crps[j, k]))])
    written.append(out / "crps_by_hour.csv")

    levels, coverage = prep.reliability
    with (out / "reliability.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["level", "coverage"])
        for a, c in zip(levels, coverage):
            w.writerow([repr(float(a)), repr(float(c))])
    written.append(out / "reliability.csv")

    with (out / "fan_chart.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["day", "zone", "lead_time", "nominal", "lower", "upper", "observed"])
        for i in range(min(cfg.plot_days, len(prep.eval_frames))):
            f = prep.eval_frames[i]
            for j, z in enumerate(prep.zones):
                for k, h in enumerate(prep.hours):
                    nominal, lo, hi = central_intervals(prep.eval_cdfs[i, j, k])
                    for a, l, u in zip(nominal, lo, hi):
                        w.writerow([f.day_index, z, int(h), f"{a:.2f}", repr(float(l)),
                                    repr(float(u)), repr(float(prep.eval_power[i, j, k]))])
    written.append(out / "fan_chart.csv")

    copula.write_matrix(prep.final_state.correlation(), out / "correlation.csv")
    written.append(out / "correlation.csv")

    if prep.eval_frames and report.rows:
        frame = prep.eval_frames[0]
        tset = generate_for(prep, frame, traj.MVN, 20, _stream(cfg.seed, 0, traj.MVN, 20,
                                                                 frame.day_index))
        traj.write_trajectories(tset, out / "trajectories_sample.csv")
        written += [out / "trajectories_sample.csv", out / "trajectories_sample.json"]
    return written

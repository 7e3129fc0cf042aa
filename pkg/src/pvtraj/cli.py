"""Command-line entry point: ``pvtraj synth|fit|run|score``.

Exit codes: 0 success, 1 configuration error, 2 data or I/O error,
3 numerical failure, 4 nothing to do (for example an empty method list).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, scoring
from .copula import write_matrix
from .data_ingest import SynthConfig, split_half, synthesize, write_gefcom
from .errors import ConfigError, DataError, NumericalError, PvTrajError
from .experiment import (
    SPACETIME,
    TEMPORAL,
    ExperimentConfig,
    emit_plot_data,
    load_dataset,
    prepare,
    run_experiment,
)
from .marginals import ClearSkyProxy, crps_table, fit_clear_sky, fit_marginals, reliability_diagram
from .trajectories import read_trajectories

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3
EXIT_NOTHING = 4

logger = logging.getLogger("pvtraj")


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "mode", None):
        cfg.mode = args.mode
    if args.out:
        cfg.output_dir = args.out
    cfg.validate()
    return cfg


def _write_rows(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_synth(args) -> int:
    cfg = SynthConfig.from_json(args.config) if args.config else SynthConfig()
    ds = synthesize(cfg, args.seed or 0)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_gefcom(ds, out / "data.csv")
    sites = [{"zone_id": m.zone_id, "nominal_power": m.nominal_power, "label": m.label}
             for m in ds.meta]
    (out / "sites.json").write_text(json.dumps(sites, indent=1))
    (out / "synth_config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    write_matrix(cfg.latent_correlation(), out / "latent_correlation.csv")
    print(f"wrote {ds.n_days} days x {len(ds.zones)} zones to {out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    ds = load_dataset(cfg)
    split = split_half(ds, cfg.split_ratio)
    models = fit_marginals(split.train)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    models.to_json(out / "marginals.json")
    proxies = [fit_clear_sky(ds.lead_times, split.train.power[:, j], z)
               for j, z in enumerate(ds.zones)]
    (out / "clear_sky.json").write_text(json.dumps([p.to_dict() for p in proxies], indent=1))
    if split.eval.n_days:
        cdfs = models.predict_cdfs(split.eval)
        table = crps_table(cdfs, split.eval.power)
        _write_rows(out / "crps_by_hour.csv", ["zone", "lead_time", "crps"],
                    [[z, int(h), repr(float(table[j, k]))]
                     for j, z in enumerate(ds.zones) for k, h in enumerate(ds.lead_times)])
        levels, cov = reliability_diagram(cdfs.ravel(), split.eval.power.ravel())
        _write_rows(out / "reliability.csv", ["level", "coverage"],
                    [[repr(float(a)), repr(float(c))] for a, c in zip(levels, cov)])
    print(f"fitted {len(models.models)} marginal models; outputs in {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    if not cfg.methods:
        logger.warning("no methods requested; nothing to do")
        return EXIT_NOTHING
    out = Path(cfg.output_dir)
    prep = prepare(cfg)
    report = run_experiment(cfg, prep, out)
    paths = emit_plot_data(report, prep, out)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=1, sort_keys=True))
    print(f"scored {len(prep.eval_frames)} days; wrote {len(paths) + 1} files to {out}")
    return EXIT_OK


def _read_obs(path, zones, hours):
    rows = np.genfromtxt(path, delimiter=",", names=True, ndmin=1)
    missing = {"zone", "hour", "value"} - set(rows.dtype.names or ())
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    obs = np.full((len(zones), len(hours)), np.nan)
    for z, h, v in zip(rows["zone"].astype(int), rows["hour"].astype(int), rows["value"]):
        if z in zones and h in hours:
            obs[list(zones).index(z), list(hours).index(h)] = v
    if np.isnan(obs).any():
        raise DataError(f"{path}: observations do not cover every trajectory zone and hour")
    return obs


def cmd_score(args) -> int:
    zones, hours, paths = read_trajectories(args.trajectories)
    obs = _read_obs(args.obs, zones, hours)
    S = paths.shape[0]
    flat, obs_flat = paths.reshape(S, -1), obs.reshape(-1)
    D = obs_flat.size
    positions = np.array([(h, j) for j in range(len(zones)) for h in hours], dtype=float)
    result = {"S": S, "dimension": D, "ES": scoring.energy_score(obs_flat, flat)}
    for mode in (scoring.UNIFORM, scoring.INVERSE_DISTANCE):
        vcfg = scoring.VsConfig(scoring.build_vs_weights(mode, dim=D, positions=positions),
                                args.gamma, mode)
        result[vcfg.name] = scoring.variogram_score(obs_flat, flat, vcfg)
    if args.proxy:
        proxies = [ClearSkyProxy.from_dict(d) for d in json.loads(Path(args.proxy).read_text())]
        by_zone = {p.zone_id: p for p in proxies}
        try:
            proxies = [by_zone[z] for z in zones]
        except KeyError as exc:
            raise DataError(f"no clear-sky proxy for zone {exc}") from None
        for e, spec in enumerate(scoring.DEFAULT_EVENTS):
            p = scoring.event_probability(paths, proxies, spec, hours)
            o = scoring.event_indicator(obs, proxies, spec, hours)
            result[f"BS{e + 1}"] = scoring.brier_score(p, o)
    text = json.dumps(result, indent=1, sort_keys=True)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "score.json").write_text(text)
    print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pvtraj", description="PV power trajectories with a Gaussian copula.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic dataset")
    p.add_argument("--config", help="synthetic generator JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    for name, func, text in (("fit", cmd_fit, "fit marginal quantile models"),
                             ("run", cmd_run, "run the full experiment")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", help="experiment JSON")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--mode", choices=(SPACETIME, TEMPORAL))
        p.set_defaults(func=func)

    p = sub.add_parser("score", help="score one trajectory file against observations")
    p.add_argument("--trajectories", required=True, help="CSV with s,zone,hour,value")
    p.add_argument("--obs", required=True, help="CSV with zone,hour,value")
    p.add_argument("--gamma", type=float, default=0.5, help="variogram order")
    p.add_argument("--proxy", help="clear_sky.json from 'fit' (enables Brier scores)")
    p.add_argument("--out", help="directory for score.json")
    p.set_defaults(func=cmd_score)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, PvTrajError, np.linalg.LinAlgError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())

"""Loading, normalizing, splitting and synthesizing PV power datasets.

Power is held densely as a ``(day, zone, lead_time)`` cube. Lead-times are
clock hours of forecasts issued at midnight, fixed to 6..19.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import warnings
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    ConfigError,
    EmptyDatasetError,
    ParseError,
    SchemaError,
    ValidationError,
)

logger = logging.getLogger(__name__)

LEAD_TIMES = np.arange(6, 20)
N_PREDICTORS = 12

_TIMESTAMP_COLS = {"timestamp", "time", "datetime"}
_ZONE_COLS = {"zone", "zone_id", "zoneid"}
_POWER_COLS = {"power"}

SYNTH_PREDICTORS = (
    "tcc", "tsr", "ssrd", "strd", "tcc2", "ssrd_tcc",
    "t2m", "sp", "r", "tp", "u10", "v10",
)


@dataclass(frozen=True)
class SiteMeta:
    zone_id: int
    nominal_power: float
    latitude: float = 0.0
    longitude: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.zone_id < 1:
            raise ValidationError(f"zone_id must be >= 1, got {self.zone_id}")
        if not self.nominal_power > 0:
            raise ValidationError(
                f"nominal_power must be > 0 for zone {self.zone_id}")


@dataclass(frozen=True)
class PowerRecord:
    day_index: int
    lead_time: int
    zone_id: int
    power: float
    predictors: tuple


def normalize(power, nominal_power):
    return np.asarray(power, dtype=float) / nominal_power


def denormalize(power, nominal_power):
    return np.asarray(power, dtype=float) * nominal_power


def _check_meta(meta: Sequence[SiteMeta]):
    ids = [m.zone_id for m in meta]
    if len(set(ids)) != len(ids):
        raise ValidationError(f"duplicate zone_id in site metadata: {ids}")


@dataclass
class PowerDataset:
    """A collection of :class:`PowerRecord` stored as dense arrays.

    ``power`` has shape ``(T, Z, K)`` and ``predictors`` ``(T, Z, K, 12)``.
    Iterating yields records sorted by ``(day, zone, lead_time)``.
    ``latent`` carries the generator's Gaussian draws for synthetic data.
    """

    days: np.ndarray
    zones: tuple
    lead_times: np.ndarray
    power: np.ndarray
    predictors: np.ndarray
    predictor_names: tuple
    meta: tuple = ()
    dates: tuple = ()
    latent: np.ndarray | None = None

    @property
    def n_days(self) -> int:
        return len(self.days)

    def __len__(self):
        return int(self.power.size)

    def __iter__(self) -> Iterator[PowerRecord]:
        for i, t in enumerate(self.days):
            for j, z in enumerate(self.zones):
                for k, h in enumerate(self.lead_times):
                    yield PowerRecord(
                        int(t), int(h), int(z), float(self.power[i, j, k]),
                        tuple(float(v) for v in self.predictors[i, j, k]))

    def select_days(self, idx) -> "PowerDataset":
        idx = np.asarray(idx)
        return PowerDataset(
            days=self.days[idx],
            zones=self.zones,
            lead_times=self.lead_times,
            power=self.power[idx],
            predictors=self.predictors[idx],
            predictor_names=self.predictor_names,
            meta=self.meta,
            dates=tuple(np.asarray(self.dates, dtype=object)[idx]) if self.dates else (),
            latent=None if self.latent is None else self.latent[idx],
        )

    def select_zones(self, zone_ids) -> "PowerDataset":
        cols = [self.zones.index(z) for z in zone_ids]
        return PowerDataset(
            days=self.days,
            zones=tuple(self.zones[c] for c in cols),
            lead_times=self.lead_times,
            power=self.power[:, cols],
            predictors=self.predictors[:, cols],
            predictor_names=self.predictor_names,
            meta=tuple(m for m in self.meta if m.zone_id in zone_ids),
            dates=self.dates,
            latent=None if self.latent is None else self.latent[:, cols],
        )

    def nominal(self, zone_id) -> float:
        for m in self.meta:
            if m.zone_id == zone_id:
                return m.nominal_power
        raise KeyError(zone_id)

    @classmethod
    def from_records(cls, records: Iterable[PowerRecord], predictor_names=None,
                     meta=(), lead_times=LEAD_TIMES) -> "PowerDataset":
        records = list(records)
        if not records:
            raise EmptyDatasetError("no records")
        days = np.array(sorted({r.day_index for r in records}))
        zones = tuple(sorted({r.zone_id for r in records}))
        lead_times = np.asarray(lead_times)
        n_pred = len(records[0].predictors)
        power = np.full((len(days), len(zones), len(lead_times)), np.nan)
        preds = np.full(power.shape + (n_pred,), np.nan)
        day_pos = {int(t): i for i, t in enumerate(days)}
        zone_pos = {z: j for j, z in enumerate(zones)}
        hour_pos = {int(h): k for k, h in enumerate(lead_times)}
        for r in records:
            if r.lead_time not in hour_pos:
                continue
            i, j, k = day_pos[r.day_index], zone_pos[r.zone_id], hour_pos[r.lead_time]
            power[i, j, k] = r.power
            preds[i, j, k] = r.predictors
        if predictor_names is None:
            predictor_names = tuple(f"x{i + 1}" for i in range(n_pred))
        return cls(days, zones, lead_times, power, preds, tuple(predictor_names),
                   tuple(meta))


@dataclass
class DatasetSplit:
    train: PowerDataset
    eval: PowerDataset
    split_ratio: float = 0.5


def _parse_timestamp(text: str) -> datetime:
    text = text.strip()
    try:
        return datetime.fromisoformat(text)
    except ValueError:
        pass
    # native GEFCom 2014 layout, e.g. "20120401 06:00"
    return datetime.strptime(text, "%Y%m%d %H:%M")


def _column_roles(header):
    lowered = [h.strip().lower() for h in header]

    def find(names, role):
        hits = [i for i, h in enumerate(lowered) if h in names]
        if not hits:
            raise SchemaError(f"missing {role} column in header {header}")
        return hits[0]

    ts, zone, power = (find(_TIMESTAMP_COLS, "timestamp"),
                       find(_ZONE_COLS, "zone"), find(_POWER_COLS, "power"))
    pred = [i for i in range(len(header)) if i not in (ts, zone, power)]
    if len(pred) != N_PREDICTORS:
        raise SchemaError(
            f"expected {N_PREDICTORS} predictor columns, found {len(pred)}")
    return ts, zone, power, pred


def load_gefcom(path, meta: Sequence[SiteMeta]) -> PowerDataset:
    """Read a GEFCom-style CSV and return a normalized :class:`PowerDataset`.

    Rows outside lead-times 6..19 are dropped. A day with any missing power
    value (empty cell or absent row) is excluded entirely.
    """
    _check_meta(meta)
    nominal = {m.zone_id: m.nominal_power for m in meta}
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)

    rows = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDatasetError(f"{path} is empty") from None
        ts_col, zone_col, power_col, pred_cols = _column_roles(header)
        names = tuple(header[i].strip() for i in pred_cols)
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)}", line)
            try:
                stamp = _parse_timestamp(row[ts_col])
                zone = int(row[zone_col])
                raw = row[power_col].strip()
                power = float(raw) if raw and raw.lower() != "nan" else math.nan
                preds = tuple(float(row[i]) for i in pred_cols)
            except ValueError as exc:
                raise ParseError(str(exc), line) from None
            if stamp.hour not in LEAD_TIMES:
                continue
            if zone not in nominal:
                raise ValidationError(f"line {line}: zone {zone} has no site metadata")
            if power > nominal[zone]:
                raise ValidationError(
                    f"line {line}: power {power} exceeds nominal "
                    f"{nominal[zone]} of zone {zone}")
            if power < 0:
                raise ValidationError(f"line {line}: negative power {power}")
            key = (stamp.date(), zone, stamp.hour)
            if key in rows:
                raise ValidationError(f"line {line}: duplicate row for {key}")
            rows[key] = (power / nominal[zone], preds)

    if not rows:
        raise EmptyDatasetError(f"{path} holds no rows at lead-times 6-19")

    dates = sorted({k[0] for k in rows})
    zones = tuple(sorted({k[1] for k in rows}))
    T, Z, K = len(dates), len(zones), len(LEAD_TIMES)
    power = np.full((T, Z, K), np.nan)
    preds = np.full((T, Z, K, N_PREDICTORS), np.nan)
    dpos = {d: i for i, d in enumerate(dates)}
    zpos = {z: j for j, z in enumerate(zones)}
    for (d, z, h), (p, x) in rows.items():
        power[dpos[d], zpos[z], h - LEAD_TIMES[0]] = p
        preds[dpos[d], zpos[z], h - LEAD_TIMES[0]] = x

    first = dates[0]
    day_index = np.array([(d - first).days + 1 for d in dates])
    ok = ~np.isnan(power).any(axis=(1, 2)) & ~np.isnan(preds).any(axis=(1, 2, 3))
    if not ok.all():
        warnings.warn(f"excluding {int((~ok).sum())} day(s) with missing values")
    ds = PowerDataset(
        days=day_index, zones=zones, lead_times=LEAD_TIMES.copy(), power=power,
        predictors=preds, predictor_names=names,
        meta=tuple(m for m in meta if m.zone_id in zones),
        dates=tuple(d.isoformat() for d in dates))
    return ds.select_days(np.flatnonzero(ok))


def write_gefcom(dataset: PowerDataset, path) -> None:
    """Write ``dataset`` in the layout :func:`load_gefcom` reads (power in W)."""
    start = date(2012, 4, 1)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "zone_id", "power", *dataset.predictor_names])
        for i, t in enumerate(dataset.days):
            d = (date.fromisoformat(dataset.dates[i]) if dataset.dates
                 else start + timedelta(days=int(t) - 1))
            for j, z in enumerate(dataset.zones):
                nom = dataset.nominal(z)
                for k, h in enumerate(dataset.lead_times):
                    stamp = datetime(d.year, d.month, d.day, int(h)).isoformat()
                    w.writerow([stamp, z, repr(float(dataset.power[i, j, k] * nom)),
                                *(repr(float(v)) for v in dataset.predictors[i, j, k])])


def split_half(dataset: PowerDataset, ratio: float = 0.5) -> DatasetSplit:
    """Chronological split: the first ``ceil(ratio * days)`` days train."""
    if not 0 < ratio < 1:
        raise ConfigError(f"split ratio must lie in (0, 1), got {ratio}")
    if dataset.n_days == 0:
        raise EmptyDatasetError("cannot split an empty dataset")
    order = np.argsort(dataset.days, kind="stable")
    n_train = math.ceil(ratio * dataset.n_days)
    if n_train == dataset.n_days:
        warnings.warn("evaluation set is empty after split")
    return DatasetSplit(dataset.select_days(order[:n_train]),
                        dataset.select_days(order[n_train:]), ratio)


@dataclass
class SynthConfig:
    """Parameters of the synthetic PV generator.

    The latent Gaussian field over (zone, lead-time) has correlation
    ``kron(R_space, R_time)`` with ``R_time[i, j] = rho_time ** |i - j|`` and
    constant ``rho_space`` between zones, unless ``correlation`` gives the full
    ``(Z*K, Z*K)`` matrix explicitly (zone-major ordering).
    """

    n_zones: int = 3
    n_days: int = 400
    nominal_power: tuple = (1560.0, 4940.0, 4000.0)
    peak: tuple = (0.85, 0.8, 0.9)
    rho_time: float = 0.97
    rho_space: float = 0.95
    correlation: list | None = None
    noise: float = 0.8
    sunrise: float = 7.0
    sunset: float = 18.0
    season_shift: float = 1.0
    start_date: str = "2012-04-01"
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown synth config keys: {sorted(unknown)}")
        cfg = cls(**data)
        cfg.nominal_power = tuple(cfg.nominal_power)
        cfg.peak = tuple(cfg.peak)
        return cfg

    @classmethod
    def from_json(cls, path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def latent_correlation(self) -> np.ndarray:
        K = len(LEAD_TIMES)
        if self.correlation is not None:
            R = np.asarray(self.correlation, dtype=float)
            D = self.n_zones * K
            if R.shape != (D, D):
                raise ValidationError(f"correlation must be {D}x{D}, got {R.shape}")
        else:
            lag = np.abs(np.subtract.outer(np.arange(K), np.arange(K)))
            r_time = self.rho_time ** lag
            r_space = np.full((self.n_zones, self.n_zones), self.rho_space)
            np.fill_diagonal(r_space, 1.0)
            R = np.kron(r_space, r_time)
        if not np.allclose(R, R.T, atol=1e-12):
            raise ValidationError("requested correlation is not symmetric")
        if np.linalg.eigvalsh(R).min() < -1e-10:
            raise ValidationError("requested correlation is not positive semi-definite")
        return R


def daily_shape(hours, sunrise, sunset):
    """Smooth bell over ``(sunrise, sunset)``, zero outside."""
    hours = np.asarray(hours, dtype=float)
    phase = (hours - sunrise) / (sunset - sunrise)
    inside = (phase > 0) & (phase < 1)
    return np.where(inside, np.sin(np.pi * np.clip(phase, 0, 1)) ** 1.2, 0.0)


def _expit(x):
    return 1.0 / (1.0 + np.exp(-x))


def synthesize(config: SynthConfig, seed: int) -> PowerDataset:
    """Generate a normalized dataset with known latent Gaussian dependence.

    Clearness is a logistic function of a forecast cloud cover plus latent
    noise, so given the predictors each power value is a monotone transform of
    its latent Gaussian and the power copula equals the latent one.
    """
    R = config.latent_correlation()
    Z, K, T = config.n_zones, len(LEAD_TIMES), config.n_days
    if len(config.nominal_power) < Z or len(config.peak) < Z:
        raise ConfigError("nominal_power and peak need one entry per zone")
    rng = np.random.default_rng(seed)

    evals, evecs = np.linalg.eigh(R)
    factor = evecs * np.sqrt(np.clip(evals, 0, None))
    latent = (rng.standard_normal((T, R.shape[0])) @ factor.T).reshape(T, Z, K)

    t = np.arange(T)
    start = date.fromisoformat(config.start_date)
    doy = np.array([(start + timedelta(days=int(i))).timetuple().tm_yday for i in t])
    # southern hemisphere: longest days around the turn of the year
    season = np.cos(2 * np.pi * (doy - 1) / 365.25)
    rise = config.sunrise - config.season_shift * season
    sset = config.sunset + config.season_shift * season

    w = np.zeros(T)
    eps = rng.standard_normal(T)
    for i in range(T):
        w[i] = (0.6 * w[i - 1] if i else 0.0) + 0.8 * eps[i]
    zone_eps = rng.standard_normal((T, Z, 1))
    hour_eps = rng.standard_normal((T, Z, K))
    cloud = _expit(1.2 * w[:, None, None] + 0.4 * zone_eps + 0.3 * hour_eps - 0.3)

    shape = np.stack([daily_shape(LEAD_TIMES, r, s) for r, s in zip(rise, sset)])
    shape = shape[:, None, :] * (0.85 + 0.15 * season)[:, None, None]
    peak = np.asarray(config.peak[:Z])[None, :, None]
    clear = peak * shape
    clearness = _expit(2.5 - 4.0 * cloud + config.noise * latent)
    power = np.clip(clear * clearness, 0.0, 1.0)

    noise = rng.standard_normal((6, T, Z, K))
    preds = [
        cloud,
        shape,
        clear * (1 - 0.75 * cloud),
        clear * cloud,
        cloud ** 2,
        clear * cloud ** 2,
        15 + 8 * season[:, None, None] + 2 * noise[0],
        1013 + 5 * noise[1],
        0.4 + 0.4 * cloud + 0.05 * noise[2],
        np.clip(cloud - 0.6, 0, None) + 0.01 * np.abs(noise[3]),
        3 * noise[4],
        3 * noise[5],
    ]
    preds = np.stack([np.broadcast_to(c, (T, Z, K)) for c in preds], axis=-1)

    meta = tuple(SiteMeta(z + 1, float(config.nominal_power[z]), label=f"zone {z + 1}")
                 for z in range(Z))
    dates = tuple((start + timedelta(days=int(i))).isoformat() for i in t)
    return PowerDataset(days=t + 1, zones=tuple(range(1, Z + 1)),
                        lead_times=LEAD_TIMES.copy(), power=power, predictors=preds,
                        predictor_names=SYNTH_PREDICTORS, meta=meta, dates=dates,
                        latent=latent)

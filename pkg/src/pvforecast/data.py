"""Station ingestion and dataset preparation for day-shaped forecasting.

Raw inputs are one CSV of 15-minute records per station plus one fleet
metadata CSV; a key-value column-map file names which CSV columns play
which roles, so differently-labeled exports can be ingested without code
changes. Records are regrouped into complete 96-slot days, each day
becoming one sample:

* ``X`` (96 x D_w): cyclic time-of-day encoding prepended to the local
  weather measurements of each slot,
* ``m`` (D_m): cyclic day-of-year encoding prepended to the numeric
  station metadata,
* ``y`` (96): station power divided by panel count, so stations of
  different sizes share one target scale. ``y`` is never z-scored.

Splitting is stratified by station (9:1 train/test, then k validation
folds inside train), and z-score scaling is fit on the training split
only, with the cyclic columns excluded. Prepared datasets round-trip
through a single-file container with float32 arrays.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime

import numpy as np

from pvforecast.container import read_container, write_container

__all__ = [
    "DataError",
    "DatasetSplit",
    "PreparedDataset",
    "PreparedSample",
    "StationMetadata",
    "StationTable",
    "WEATHER_FIELDS",
    "ZScoreScaler",
    "apply_scaler",
    "encode_cyclic",
    "fit_scaler",
    "load_dataset",
    "make_folds",
    "prepare_dataset",
    "read_column_map",
    "read_metadata_csv",
    "read_station_csv",
    "reshape_station",
    "save_dataset",
    "stratified_split",
]

log = logging.getLogger(__name__)

SLOTS_PER_DAY = 96
SLOT_MINUTES = 15
TIME_PERIOD = 96
DAY_PERIOD = 365
DATASET_SCHEMA_VERSION = 1

# Local measured weather, in CSV role order. Units: W/m^2 for the two
# irradiance channels, Celsius, hPa, degrees, m/s.
WEATHER_FIELDS = (
    "lmd_global_irradiance",
    "lmd_diffuse_irradiance",
    "lmd_temperature",
    "lmd_pressure",
    "lmd_wind_direction",
    "lmd_wind_speed",
)

METADATA_ROLES = (
    "meta_station_id",
    "meta_capacity",
    "meta_panel_size",
    "meta_panel_count",
    "meta_panel_angle",
    "meta_longitude",
    "meta_latitude",
)

STATION_ROLES = ("date_time", "power") + WEATHER_FIELDS

TIMESTAMP_FORMAT = "%Y-%m-%d %H:%M"


class DataError(ValueError):
    """Malformed, inconsistent, or insufficient input data."""


def encode_cyclic(index: int, period: int) -> tuple[float, float]:
    """Map a position on a cycle of length `period` to the unit circle.

    Returns (cos, sin) of 2*pi*index/period. `index` must lie in
    [0, period).
    """
    if period < 1:
        raise DataError(f"cyclic period must be >= 1, got {period}")
    if not 0 <= index < period:
        raise DataError(f"cyclic index {index} outside [0, {period})")
    angle = 2.0 * math.pi * index / period
    return math.cos(angle), math.sin(angle)


@dataclass
class StationMetadata:
    """Numeric description of one station's installation."""

    station_id: str
    capacity_kw: float
    panel_size: float
    panel_count: int
    panel_angle: float
    longitude: float
    latitude: float

    def __post_init__(self):
        if self.panel_count < 1:
            raise DataError(
                f"station {self.station_id}: panel_count must be >= 1, got {self.panel_count}"
            )
        if not -90.0 <= self.latitude <= 90.0:
            raise DataError(f"station {self.station_id}: latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise DataError(f"station {self.station_id}: longitude {self.longitude} out of range")


@dataclass
class StationTable:
    """Time-ordered 15-minute records for one station.

    `weather` holds the ``WEATHER_FIELDS`` columns row-aligned with
    `timestamps`; `power` is station output in MW. `forecast` can carry
    extra numeric-forecast columns that ride along in CSV files but are
    never fed to the model. Timestamps must be strictly increasing and
    aligned to the 15-minute grid.
    """

    station_id: str
    timestamps: list[datetime]
    weather: np.ndarray
    power: np.ndarray
    forecast: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.timestamps)
        self.weather = np.asarray(self.weather, dtype=np.float64)
        self.power = np.asarray(self.power, dtype=np.float64)
        if self.weather.shape != (n, len(WEATHER_FIELDS)) or self.power.shape != (n,):
            raise DataError(
                f"station {self.station_id}: weather {self.weather.shape} / power "
                f"{self.power.shape} do not match {n} timestamps"
            )
        previous = None
        for ts in self.timestamps:
            if ts.minute % SLOT_MINUTES or ts.second or ts.microsecond:
                raise DataError(
                    f"station {self.station_id}: timestamp {ts} off the 15-minute grid"
                )
            if _is_leap_year(ts.year):
                raise DataError(
                    f"station {self.station_id}: leap year {ts.year} unsupported "
                    "(day-of-year period is fixed at 365)"
                )
            if previous is not None and ts <= previous:
                raise DataError(
                    f"station {self.station_id}: timestamps not strictly increasing at {ts}"
                )
            previous = ts
        if not (np.all(np.isfinite(self.weather)) and np.all(np.isfinite(self.power))):
            raise DataError(f"station {self.station_id}: non-finite measurement values")


@dataclass
class PreparedSample:
    """One station-day ready for the model."""

    station_id: str
    day_of_year: int
    X: np.ndarray  # (96, D_w), time_cos/time_sin prepended to weather
    m: np.ndarray  # (D_m,), day_cos/day_sin prepended to numeric metadata
    y: np.ndarray  # (96,), per-panel power


@dataclass
class ZScoreScaler:
    """Per-feature standardization fit on training data only.

    Holds one block for the weather columns of ``X`` and one for the
    metadata vector ``m``. Excluded (cyclic) columns pass through with
    mean 0 / std 1; features that are constant on the training split get
    their std clamped to 1 so they pass through centered.
    """

    weather_mean: np.ndarray
    weather_std: np.ndarray
    weather_excluded: np.ndarray
    metadata_mean: np.ndarray
    metadata_std: np.ndarray
    metadata_excluded: np.ndarray

    def transform_weather(self, X: np.ndarray) -> np.ndarray:
        self._check_width(X.shape[-1], len(self.weather_mean), "weather")
        return (X - self.weather_mean) / self.weather_std

    def inverse_weather(self, X: np.ndarray) -> np.ndarray:
        self._check_width(X.shape[-1], len(self.weather_mean), "weather")
        return X * self.weather_std + self.weather_mean

    def transform_metadata(self, m: np.ndarray) -> np.ndarray:
        self._check_width(m.shape[-1], len(self.metadata_mean), "metadata")
        return (m - self.metadata_mean) / self.metadata_std

    def inverse_metadata(self, m: np.ndarray) -> np.ndarray:
        self._check_width(m.shape[-1], len(self.metadata_mean), "metadata")
        return m * self.metadata_std + self.metadata_mean

    @staticmethod
    def _check_width(got: int, expected: int, block: str) -> None:
        if got != expected:
            raise DataError(f"scaler: {block} width {got} does not match fitted width {expected}")


@dataclass
class DatasetSplit:
    """Stratified train/test partition plus validation folds inside train.

    `folds` holds (train_indices, val_indices) pairs indexing into
    `train`; the validation sets are disjoint and cover every training
    sample exactly once.
    """

    train: list[PreparedSample]
    test: list[PreparedSample]
    folds: list[tuple[list[int], list[int]]] = field(default_factory=list)


@dataclass
class PreparedDataset:
    """Everything a training run needs, as written to a dataset file."""

    split: DatasetSplit
    scaler: ZScoreScaler
    stations: list[str]
    d_weather: int
    d_metadata: int
    seed: int


def _is_leap_year(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


# -- ingestion --------------------------------------------------------


def read_column_map(path: str) -> dict[str, str]:
    """Parse the key-value column-map file (``role = csv_column`` lines).

    Blank lines and ``#`` comments are ignored. Every known role must be
    present and no unknown keys are accepted.
    """
    known = set(STATION_ROLES) | set(METADATA_ROLES)
    mapping: dict[str, str] = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            for lineno, raw in enumerate(handle, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{lineno}: expected 'role = column', got {raw.strip()!r}")
                key, _, value = line.partition("=")
                key, value = key.strip(), value.strip()
                if key not in known:
                    raise DataError(f"{path}:{lineno}: unknown role {key!r}")
                if not value:
                    raise DataError(f"{path}:{lineno}: empty column name for role {key!r}")
                if key in mapping:
                    raise DataError(f"{path}:{lineno}: duplicate role {key!r}")
                mapping[key] = value
    except OSError as exc:
        raise DataError(f"cannot read column map {path}: {exc}") from None
    missing = sorted(known - set(mapping))
    if missing:
        raise DataError(f"{path}: missing roles: {', '.join(missing)}")
    return mapping


def read_station_csv(path: str, column_map: dict[str, str], station_id: str) -> StationTable:
    """Load one station's record CSV into a validated StationTable."""
    rows = _read_csv_rows(path)
    header_needed = [column_map[role] for role in STATION_ROLES]
    timestamps = []
    weather = np.empty((len(rows), len(WEATHER_FIELDS)))
    power = np.empty(len(rows))
    for i, row in enumerate(rows):
        _check_columns(row, header_needed, path)
        stamp_text = row[column_map["date_time"]]
        try:
            timestamps.append(datetime.strptime(stamp_text, TIMESTAMP_FORMAT))
        except ValueError:
            raise DataError(
                f"{path}: row {i + 2}: timestamp {stamp_text!r} not in format "
                f"{TIMESTAMP_FORMAT!r}"
            ) from None
        power[i] = _parse_float(row, column_map["power"], path, i)
        for j, role in enumerate(WEATHER_FIELDS):
            weather[i, j] = _parse_float(row, column_map[role], path, i)
    return StationTable(station_id=station_id, timestamps=timestamps, weather=weather, power=power)


def read_metadata_csv(path: str, column_map: dict[str, str]) -> dict[str, StationMetadata]:
    """Load the fleet metadata CSV keyed by station id.

    Extra columns (textual descriptions and the like) are ignored; only
    mapped roles are read.
    """
    rows = _read_csv_rows(path)
    needed = [column_map[role] for role in METADATA_ROLES]
    result: dict[str, StationMetadata] = {}
    for i, row in enumerate(rows):
        _check_columns(row, needed, path)
        station_id = row[column_map["meta_station_id"]].strip()
        if not station_id:
            raise DataError(f"{path}: row {i + 2}: empty station id")
        if station_id in result:
            raise DataError(f"{path}: duplicate metadata for station {station_id!r}")
        count_raw = _parse_float(row, column_map["meta_panel_count"], path, i)
        if count_raw != int(count_raw):
            raise DataError(f"{path}: row {i + 2}: panel count {count_raw} is not an integer")
        result[station_id] = StationMetadata(
            station_id=station_id,
            capacity_kw=_parse_float(row, column_map["meta_capacity"], path, i),
            panel_size=_parse_float(row, column_map["meta_panel_size"], path, i),
            panel_count=int(count_raw),
            panel_angle=_parse_float(row, column_map["meta_panel_angle"], path, i),
            longitude=_parse_float(row, column_map["meta_longitude"], path, i),
            latitude=_parse_float(row, column_map["meta_latitude"], path, i),
        )
    if not result:
        raise DataError(f"{path}: no metadata rows")
    return result


def _read_csv_rows(path: str) -> list[dict]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            return list(csv.DictReader(handle))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None


def _check_columns(row: dict, needed: list[str], path: str) -> None:
    missing = [c for c in needed if c not in row]
    if missing:
        raise DataError(f"{path}: missing columns: {', '.join(missing)}")


def _parse_float(row: dict, column: str, path: str, index: int) -> float:
    text = row[column]
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise DataError(f"{path}: row {index + 2}: column {column!r} value {text!r} is not numeric") from None
    if not math.isfinite(value):
        raise DataError(f"{path}: row {index + 2}: column {column!r} is non-finite")
    return value


# -- day reshaping and preparation ------------------------------------


def reshape_station(table: StationTable) -> tuple[list[tuple[int, np.ndarray, np.ndarray]], int]:
    """Group records into complete 96-slot days.

    Returns (days, dropped) where each day is (day_of_year, weather
    (96, D), power (96,)) in chronological order and `dropped` counts
    calendar days discarded for missing slots. Partial days are logged,
    never silently absorbed.
    """
    by_day: dict = {}
    for i, ts in enumerate(table.timestamps):
        by_day.setdefault(ts.date(), []).append(i)
    days = []
    dropped = 0
    for date in sorted(by_day):
        indices = by_day[date]
        if len(indices) != SLOTS_PER_DAY:
            dropped += 1
            continue
        slots = [
            table.timestamps[i].hour * 4 + table.timestamps[i].minute // SLOT_MINUTES
            for i in indices
        ]
        if slots != list(range(SLOTS_PER_DAY)):
            dropped += 1
            continue
        idx = np.asarray(indices)
        days.append((date.timetuple().tm_yday, table.weather[idx], table.power[idx]))
    if dropped:
        log.info("station %s: dropped %d incomplete day(s)", table.station_id, dropped)
    return days, dropped


def prepare_dataset(
    tables: list[StationTable],
    metadata: dict[str, StationMetadata],
) -> list[PreparedSample]:
    """Turn station tables into model-ready samples.

    Each complete day yields one sample; stations without metadata are a
    hard error. Weather rows get the time-of-day circle prepended, the
    metadata vector gets the day-of-year circle prepended, and power is
    divided by the station's panel count.
    """
    samples = []
    slot_angles = np.array([encode_cyclic(slot, TIME_PERIOD) for slot in range(SLOTS_PER_DAY)])
    for table in tables:
        meta = metadata.get(table.station_id)
        if meta is None:
            raise DataError(f"no metadata for station {table.station_id!r}")
        days, _ = reshape_station(table)
        for day_of_year, weather, power in days:
            day_cos, day_sin = encode_cyclic(day_of_year - 1, DAY_PERIOD)
            X = np.concatenate([slot_angles, weather], axis=1)
            m = np.array(
                [
                    day_cos,
                    day_sin,
                    meta.panel_size,
                    float(meta.panel_count),
                    meta.panel_angle,
                    meta.latitude,
                    meta.longitude,
                ]
            )
            samples.append(
                PreparedSample(
                    station_id=table.station_id,
                    day_of_year=day_of_year,
                    X=X,
                    m=m,
                    y=power / meta.panel_count,
                )
            )
    return samples


# -- splitting --------------------------------------------------------


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def _by_station(samples: list[PreparedSample]) -> dict[str, list[int]]:
    grouped: dict[str, list[int]] = {}
    for i, sample in enumerate(samples):
        grouped.setdefault(sample.station_id, []).append(i)
    return grouped


def stratified_split(
    samples: list[PreparedSample], seed: int, test_fraction: float = 0.1
) -> tuple[list[PreparedSample], list[PreparedSample]]:
    """Split station-by-station so train and test share the fleet mix.

    Each station contributes ~`test_fraction` of its days to test (at
    least one, never all); stations with fewer than two days cannot be
    split and raise ``DataError``.
    """
    if not samples:
        raise DataError("cannot split an empty sample list")
    grouped = _by_station(samples)
    rng = np.random.default_rng([seed, 101])
    test_ids: set[int] = set()
    for station_id in sorted(grouped):
        indices = grouped[station_id]
        if len(indices) < 2:
            raise DataError(
                f"station {station_id}: needs at least 2 days to split, has {len(indices)}"
            )
        want = _round_half_up(len(indices) * test_fraction)
        n_test = min(max(1, want), len(indices) - 1)
        perm = rng.permutation(len(indices))
        test_ids.update(indices[j] for j in perm[:n_test])
    train = [s for i, s in enumerate(samples) if i not in test_ids]
    test = [s for i, s in enumerate(samples) if i in test_ids]
    return train, test


def make_folds(
    train: list[PreparedSample], k: int = 5, seed: int = 0
) -> list[tuple[list[int], list[int]]]:
    """Deal each station's training days round-robin into k validation folds.

    Returns (train_indices, val_indices) pairs indexing into `train`.
    Every station must have at least k training days so each fold sees
    the whole fleet.
    """
    if k < 2:
        raise DataError(f"fold count must be >= 2, got {k}")
    grouped = _by_station(train)
    rng = np.random.default_rng([seed, 202])
    buckets: list[list[int]] = [[] for _ in range(k)]
    for station_id in sorted(grouped):
        indices = grouped[station_id]
        if len(indices) < k:
            raise DataError(
                f"station {station_id}: needs at least {k} training days for {k} folds, "
                f"has {len(indices)}"
            )
        perm = rng.permutation(len(indices))
        for position, j in enumerate(perm):
            buckets[position % k].append(indices[j])
    folds = []
    for i in range(k):
        val = sorted(buckets[i])
        val_set = set(val)
        fold_train = [j for j in range(len(train)) if j not in val_set]
        folds.append((fold_train, val))
    return folds


# -- scaling ----------------------------------------------------------

_CYCLIC_PREFIX = 2  # cos/sin columns at the front of both X and m


def fit_scaler(train: list[PreparedSample]) -> ZScoreScaler:
    """Fit per-feature standardization on the training split only.

    Weather statistics pool all 96 rows of every training day; metadata
    statistics pool one vector per training day. The two cyclic columns
    of each block are excluded, and constant features get std clamped to
    1 so they pass through centered.
    """
    if not train:
        raise DataError("cannot fit a scaler on an empty training split")
    X_all = np.concatenate([s.X for s in train], axis=0)
    m_all = np.stack([s.m for s in train], axis=0)
    w_mean, w_std, w_excl = _block_stats(X_all)
    m_mean, m_std, m_excl = _block_stats(m_all)
    return ZScoreScaler(
        weather_mean=w_mean,
        weather_std=w_std,
        weather_excluded=w_excl,
        metadata_mean=m_mean,
        metadata_std=m_std,
        metadata_excluded=m_excl,
    )


def _block_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = values.mean(axis=0)
    std = values.std(axis=0)  # population std
    std = np.where(std < 1e-12, 1.0, std)
    excluded = np.zeros(values.shape[1], dtype=bool)
    excluded[:_CYCLIC_PREFIX] = True
    mean[excluded] = 0.0
    std[excluded] = 1.0
    return mean, std, excluded


def apply_scaler(samples: list[PreparedSample], scaler: ZScoreScaler) -> list[PreparedSample]:
    """Return new samples with X and m standardized; y is left alone."""
    return [
        replace(
            s,
            X=scaler.transform_weather(s.X),
            m=scaler.transform_metadata(s.m),
            y=s.y.copy(),
        )
        for s in samples
    ]


# -- dataset file -----------------------------------------------------


def save_dataset(path: str, dataset: PreparedDataset) -> None:
    """Write a prepared dataset to its single-file container (float32 arrays)."""
    manifest = {
        "format": "pv-dataset",
        "schema_version": DATASET_SCHEMA_VERSION,
        "seed": dataset.seed,
        "stations": list(dataset.stations),
        "d_weather": dataset.d_weather,
        "d_metadata": dataset.d_metadata,
        "scaler": _scaler_to_json(dataset.scaler),
        "train": [
            {"station_id": s.station_id, "day_of_year": s.day_of_year}
            for s in dataset.split.train
        ],
        "test": [
            {"station_id": s.station_id, "day_of_year": s.day_of_year}
            for s in dataset.split.test
        ],
        "folds": [[list(tr), list(va)] for tr, va in dataset.split.folds],
    }
    arrays: dict[str, np.ndarray] = {}
    for group, samples in (("train", dataset.split.train), ("test", dataset.split.test)):
        for i, sample in enumerate(samples):
            prefix = f"{group}/{i:05d}"
            arrays[f"{prefix}/X"] = sample.X.astype("<f4")
            arrays[f"{prefix}/m"] = sample.m.astype("<f4")
            arrays[f"{prefix}/y"] = sample.y.astype("<f4")
    write_container(path, manifest, arrays)


def load_dataset(path: str) -> PreparedDataset:
    """Read a prepared dataset back; arrays come out float64."""
    manifest, arrays = read_container(path)
    if manifest.get("format") != "pv-dataset":
        raise DataError(f"{path}: not a prepared dataset file")
    version = manifest.get("schema_version")
    if version != DATASET_SCHEMA_VERSION:
        raise DataError(
            f"{path}: schema version {version} unsupported (expected {DATASET_SCHEMA_VERSION})"
        )
    scaler = _scaler_from_json(manifest.get("scaler"), path)

    def rebuild(group: str) -> list[PreparedSample]:
        records = manifest.get(group)
        if records is None:
            raise DataError(f"{path}: manifest lacks the {group!r} sample list")
        samples = []
        for i, record in enumerate(records):
            prefix = f"{group}/{i:05d}"
            try:
                X = arrays[f"{prefix}/X"].astype(np.float64)
                m = arrays[f"{prefix}/m"].astype(np.float64)
                y = arrays[f"{prefix}/y"].astype(np.float64)
            except KeyError as exc:
                raise DataError(f"{path}: missing array {exc.args[0]!r}") from None
            samples.append(
                PreparedSample(
                    station_id=record["station_id"],
                    day_of_year=int(record["day_of_year"]),
                    X=X,
                    m=m,
                    y=y,
                )
            )
        return samples

    train = rebuild("train")
    test = rebuild("test")
    folds = [(list(map(int, tr)), list(map(int, va))) for tr, va in manifest.get("folds", [])]
    for fold_train, fold_val in folds:
        bad = [j for j in fold_train + fold_val if not 0 <= j < len(train)]
        if bad:
            raise DataError(f"{path}: fold index {bad[0]} out of range")
    split = DatasetSplit(train=train, test=test, folds=folds)
    return PreparedDataset(
        split=split,
        scaler=scaler,
        stations=[str(s) for s in manifest.get("stations", [])],
        d_weather=int(manifest["d_weather"]),
        d_metadata=int(manifest["d_metadata"]),
        seed=int(manifest["seed"]),
    )


def _scaler_to_json(scaler: ZScoreScaler) -> dict:
    return {
        "weather_mean": scaler.weather_mean.tolist(),
        "weather_std": scaler.weather_std.tolist(),
        "weather_excluded": scaler.weather_excluded.astype(int).tolist(),
        "metadata_mean": scaler.metadata_mean.tolist(),
        "metadata_std": scaler.metadata_std.tolist(),
        "metadata_excluded": scaler.metadata_excluded.astype(int).tolist(),
    }


def _scaler_from_json(payload, path: str) -> ZScoreScaler:
    if not isinstance(payload, dict):
        raise DataError(f"{path}: manifest lacks scaler parameters")
    try:
        return ZScoreScaler(
            weather_mean=np.asarray(payload["weather_mean"], dtype=np.float64),
            weather_std=np.asarray(payload["weather_std"], dtype=np.float64),
            weather_excluded=np.asarray(payload["weather_excluded"], dtype=bool),
            metadata_mean=np.asarray(payload["metadata_mean"], dtype=np.float64),
            metadata_std=np.asarray(payload["metadata_std"], dtype=np.float64),
            metadata_excluded=np.asarray(payload["metadata_excluded"], dtype=bool),
        )
    except KeyError as exc:
        raise DataError(f"{path}: scaler parameters missing {exc.args[0]!r}") from None

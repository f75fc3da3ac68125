"""Seeded synthetic PV fleet generator.

Generates per-station 15-minute record tables in the same schema as the
ingestion layer (local measured weather, coarse forecast columns, power)
plus a fleet metadata sheet. Identical seeds give bitwise-identical
output.

Power is a deterministic function of the *measured* irradiance stream
and the station metadata, with optional seeded noise on top:

* a clear-sky bell (sunrise 06:00, sunset 18:00, smoothly seasonal) is
  attenuated by a per-day smooth cloud field whose depth is the
  station's ``cloudiness``;
* a panel-heat state (exponential moving average of the day's
  irradiance so far; panels cool back to ambient overnight) mildly
  derates the panels and, much more sharply, drags down the inverter's
  thermal output limit, so midday power is set by the whole morning's
  irradiance and not by the latest reading alone;
* per-panel output scales with panel size, panel count, and the
  panel-angle/latitude match, which is what makes the station metadata
  informative to a forecaster.

With ``noise_scale=0`` the night slots are exactly zero and each day's
power curve is an exact function of that day's measured weather and the
station parameters. Magnitudes are tuned so per-panel power is order
one, which keeps the default optimizer settings well conditioned; units
follow the ingestion schema (W/m^2, Celsius, hPa, m/s, degrees, MW)
even where the implied station sizes are generous.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from datetime import date, datetime, time, timedelta

import numpy as np

from pvforecast.data import (
    DataError,
    SLOTS_PER_DAY,
    StationMetadata,
    StationTable,
    WEATHER_FIELDS,
)

__all__ = [
    "SynthStationSpec",
    "generate_fleet",
    "generate_station",
    "write_fleet",
]

BASE_YEAR = 2018  # not a leap year
SUNRISE_SLOT = 24  # 06:00
SUNSET_SLOT = 72  # 18:00
HEAT_ALPHA = 0.025  # EMA weight of the panel-heat state per 15-minute step
HEAT_DERATE = 0.35  # fraction of panel output lost at full heat
CAP_BASE = 0.52  # inverter limit at cold start, as a fraction of nameplate scale
CAP_SLOPE = 1.2  # how hard the limit sags as the heat state builds
CAP_FLOOR = 0.05  # the limit never drops below this fraction

NWP_FIELDS = (
    "nwp_global_irradiance",
    "nwp_direct_irradiance",
    "nwp_temperature",
    "nwp_humidity",
    "nwp_wind_speed",
    "nwp_wind_direction",
    "nwp_pressure",
)

CSV_FIELDS = ("date_time",) + NWP_FIELDS + WEATHER_FIELDS + ("power",)


@dataclass
class SynthStationSpec:
    """Parameters of one synthetic station."""

    station_id: str
    panel_count: int
    panel_size: float
    panel_angle: float
    latitude: float
    longitude: float
    cloudiness: float
    noise_scale: float
    days: int
    seed: int
    start_day: int = 91  # day of year of the first generated day

    def __post_init__(self):
        if self.panel_count < 1:
            raise DataError(f"{self.station_id}: panel_count must be >= 1")
        if not 0.0 <= self.cloudiness <= 1.0:
            raise DataError(f"{self.station_id}: cloudiness must lie in [0, 1]")
        if self.noise_scale < 0.0:
            raise DataError(f"{self.station_id}: noise_scale must be >= 0")
        if self.days < 1:
            raise DataError(f"{self.station_id}: days must be >= 1")
        if not 1 <= self.start_day or self.start_day + self.days - 1 > 365:
            raise DataError(
                f"{self.station_id}: day range [{self.start_day}, "
                f"{self.start_day + self.days - 1}] must stay within one 365-day year"
            )


def _clear_sky_bell() -> np.ndarray:
    slots = np.arange(SLOTS_PER_DAY)
    phase = (slots - SUNRISE_SLOT) / (SUNSET_SLOT - SUNRISE_SLOT)
    bell = np.where((phase > 0.0) & (phase < 1.0), np.sin(np.pi * np.clip(phase, 0, 1)), 0.0)
    return bell ** 1.3


def _season_factor(day_of_year: int, latitude: float) -> float:
    swing = 0.3 * latitude / 45.0
    return 1.0 - swing * math.cos(2.0 * math.pi * (day_of_year - 172) / 365.0)


def _smooth_field(rng: np.random.Generator, scale: float = 3.0) -> np.ndarray:
    """Smooth random series over the day, squashed into [0, 1]."""
    slots = np.arange(SLOTS_PER_DAY)
    total = np.zeros(SLOTS_PER_DAY)
    for k in range(1, 4):
        amp = rng.uniform(0.0, scale / k)
        phase = rng.uniform(0.0, 2.0 * math.pi)
        total += amp * np.sin(2.0 * math.pi * k * slots / SLOTS_PER_DAY + phase)
    return 0.5 * (1.0 + np.tanh(total))


def _per_panel_scale(spec: SynthStationSpec) -> float:
    size_f = spec.panel_size / 1.8
    deviation = math.radians(spec.panel_angle - spec.latitude)
    angle_f = 0.65 + 0.35 * math.cos(2.5 * deviation)
    count_f = 1.1 - 0.4 * spec.panel_count / 500.0
    return 0.95 * size_f * angle_f * count_f


def generate_station(spec: SynthStationSpec) -> tuple[StationTable, StationMetadata]:
    """Generate one station's record table and metadata row."""
    rng = np.random.default_rng(spec.seed)
    bell = _clear_sky_bell()
    ns = spec.noise_scale
    p_scale = _per_panel_scale(spec)

    timestamps: list[datetime] = []
    weather_rows = []
    power_values = []
    for offset in range(spec.days):
        day_of_year = spec.start_day + offset
        day_date = date(BASE_YEAR, 1, 1) + timedelta(days=day_of_year - 1)
        season = _season_factor(day_of_year, spec.latitude)
        attenuation = 1.0 - spec.cloudiness * _smooth_field(rng)
        breeze = _smooth_field(rng)
        veer = _smooth_field(rng)
        noise = rng.standard_normal((SLOTS_PER_DAY, 8))

        irr_clear = 950.0 * season * bell
        daylight = (bell > 0.0).astype(np.float64)  # nights stay exactly dark
        ghi = np.maximum(0.0, irr_clear * attenuation + ns * 40.0 * noise[:, 0] * daylight)
        diffuse = np.maximum(
            0.0,
            irr_clear * (0.15 + 0.45 * (1.0 - attenuation))
            + ns * 20.0 * noise[:, 1] * daylight,
        )
        temperature = (
            -2.0 + 18.0 * season + 9.0 * bell * attenuation + ns * 1.5 * noise[:, 2]
        )
        pressure = (
            1013.0
            + 3.0 * math.sin(2.0 * math.pi * (day_of_year - 15) / 365.0)
            - 1.2 * bell * attenuation
            + ns * 1.0 * noise[:, 3]
        )
        wind_speed = np.abs(2.5 + 2.0 * (breeze - 0.5) * 2.0 + ns * 0.4 * noise[:, 4])
        wind_dir = np.mod(190.0 + 320.0 * (veer - 0.5), 360.0)

        per_panel = np.empty(SLOTS_PER_DAY)
        heat = 0.0  # panels start each day at ambient temperature
        for slot in range(SLOTS_PER_DAY):
            heat = (1.0 - HEAT_ALPHA) * heat + HEAT_ALPHA * ghi[slot] / 1000.0
            raw = p_scale * (ghi[slot] / 1000.0) * (1.0 - HEAT_DERATE * heat)
            cap = p_scale * max(CAP_FLOOR, CAP_BASE - CAP_SLOPE * heat)
            per_panel[slot] = min(raw, cap)
        per_panel = np.maximum(0.0, per_panel + ns * p_scale * 0.3 * noise[:, 5] * daylight)

        day_mean_att = float(attenuation.mean())
        nwp_ghi = irr_clear * day_mean_att
        nwp_rows = np.column_stack(
            [
                nwp_ghi,
                0.75 * nwp_ghi,
                -2.0 + 18.0 * season + 9.0 * bell * day_mean_att,
                np.full(SLOTS_PER_DAY, 45.0 + 40.0 * spec.cloudiness * day_mean_att),
                np.full(SLOTS_PER_DAY, float(wind_speed.mean())),
                np.full(SLOTS_PER_DAY, float(wind_dir.mean())),
                np.full(SLOTS_PER_DAY, 1013.0),
            ]
        )

        for slot in range(SLOTS_PER_DAY):
            timestamps.append(
                datetime.combine(day_date, time(hour=slot // 4, minute=15 * (slot % 4)))
            )
        weather_rows.append(
            (
                np.column_stack(
                    [ghi, diffuse, temperature, pressure, wind_dir, wind_speed]
                ),
                nwp_rows,
            )
        )
        power_values.append(per_panel * spec.panel_count)

    table = StationTable(
        station_id=spec.station_id,
        timestamps=timestamps,
        weather=np.concatenate([w for w, _ in weather_rows], axis=0),
        power=np.concatenate(power_values),
        forecast=np.concatenate([n for _, n in weather_rows], axis=0),
    )
    metadata = StationMetadata(
        station_id=spec.station_id,
        capacity_kw=round(p_scale * spec.panel_count * 1000.0, 1),
        panel_size=spec.panel_size,
        panel_count=spec.panel_count,
        panel_angle=spec.panel_angle,
        longitude=spec.longitude,
        latitude=spec.latitude,
    )
    return table, metadata


def generate_fleet(
    n_stations: int = 10,
    days: int = 25,
    seed: int = 0,
    noise_scale: float = 0.02,
) -> tuple[list[StationTable], dict[str, StationMetadata]]:
    """Generate a fleet of distinct stations from one master seed."""
    if n_stations < 1:
        raise DataError(f"n_stations must be >= 1, got {n_stations}")
    master = np.random.default_rng([seed, 303])
    tables = []
    metadata: dict[str, StationMetadata] = {}
    for i in range(n_stations):
        spec = SynthStationSpec(
            station_id=f"st{i:02d}",
            panel_count=int(master.integers(100, 501)),
            panel_size=float(master.uniform(1.2, 2.6)),
            panel_angle=float(master.uniform(12.0, 42.0)),
            latitude=float(master.uniform(29.0, 41.0)),
            longitude=float(master.uniform(98.0, 116.0)),
            cloudiness=float(master.uniform(0.5, 0.85)),
            noise_scale=noise_scale,
            days=days,
            seed=int(master.integers(0, 2**31)),
        )
        table, meta = generate_station(spec)
        tables.append(table)
        metadata[meta.station_id] = meta
    return tables, metadata


# -- CSV output -------------------------------------------------------

COLUMN_MAP_TEXT = """# column-map: role = CSV column name
date_time = date_time
lmd_global_irradiance = lmd_global_irradiance
lmd_diffuse_irradiance = lmd_diffuse_irradiance
lmd_temperature = lmd_temperature
lmd_pressure = lmd_pressure
lmd_wind_direction = lmd_wind_direction
lmd_wind_speed = lmd_wind_speed
power = power
meta_station_id = station_id
meta_capacity = capacity_kw
meta_panel_size = panel_size_m2
meta_panel_count = panel_count
meta_panel_angle = panel_angle_deg
meta_longitude = longitude_deg
meta_latitude = latitude_deg
"""

_PANEL_MATERIALS = ("mono-Si", "poly-Si", "CdTe", "CIGS")


def write_fleet(
    out_dir: str,
    tables: list[StationTable],
    metadata: dict[str, StationMetadata],
) -> dict[str, str]:
    """Write station CSVs, the metadata sheet, and the column map.

    Returns the paths written: ``stations_dir``, ``metadata``,
    ``columns``. Output is byte-deterministic for identical inputs.
    """
    stations_dir = os.path.join(out_dir, "stations")
    os.makedirs(stations_dir, exist_ok=True)
    for table in tables:
        nwp = table.forecast
        if nwp is None:
            nwp = np.zeros((len(table.timestamps), len(NWP_FIELDS)))
        path = os.path.join(stations_dir, f"{table.station_id}.csv")
        with open(path, "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(CSV_FIELDS)
            for i, ts in enumerate(table.timestamps):
                row = [ts.strftime("%Y-%m-%d %H:%M")]
                row += [f"{v:.6f}" for v in nwp[i]]
                row += [f"{v:.6f}" for v in table.weather[i]]
                row.append(f"{table.power[i]:.6f}")
                writer.writerow(row)

    metadata_path = os.path.join(out_dir, "metadata.csv")
    with open(metadata_path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            [
                "station_id",
                "capacity_kw",
                "panel_size_m2",
                "panel_count",
                "panel_angle_deg",
                "longitude_deg",
                "latitude_deg",
                "panel_material",
            ]
        )
        for i, station_id in enumerate(sorted(metadata)):
            meta = metadata[station_id]
            writer.writerow(
                [
                    meta.station_id,
                    f"{meta.capacity_kw:.1f}",
                    f"{meta.panel_size:.6f}",
                    str(meta.panel_count),
                    f"{meta.panel_angle:.6f}",
                    f"{meta.longitude:.6f}",
                    f"{meta.latitude:.6f}",
                    _PANEL_MATERIALS[i % len(_PANEL_MATERIALS)],
                ]
            )

    columns_path = os.path.join(out_dir, "columns.cfg")
    with open(columns_path, "w", encoding="utf-8") as handle:
        handle.write(COLUMN_MAP_TEXT)
    return {"stations_dir": stations_dir, "metadata": metadata_path, "columns": columns_path}

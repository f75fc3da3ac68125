"""Tests for the synthetic fleet generator."""

import numpy as np
import pytest

from pvforecast import synth
from pvforecast.data import (
    DataError,
    WEATHER_FIELDS,
    prepare_dataset,
    read_column_map,
    read_metadata_csv,
    read_station_csv,
)

GHI_COL = WEATHER_FIELDS.index("lmd_global_irradiance")


def small_spec(**overrides):
    base = dict(
        station_id="st_test",
        panel_count=200,
        panel_size=1.9,
        panel_angle=30.0,
        latitude=35.0,
        longitude=105.0,
        cloudiness=0.3,
        noise_scale=0.02,
        days=4,
        seed=11,
    )
    base.update(overrides)
    return synth.SynthStationSpec(**base)


class TestStationGeneration:
    def test_shapes_and_grid(self):
        table, meta = synth.generate_station(small_spec())
        n = 4 * 96
        assert len(table.timestamps) == n
        assert table.weather.shape == (n, len(WEATHER_FIELDS))
        assert table.power.shape == (n,)
        assert table.forecast.shape == (n, len(synth.NWP_FIELDS))
        assert meta.station_id == "st_test"
        assert meta.panel_count == 200
        # strict 15-minute grid, already enforced by the table type
        deltas = {
            int((b - a).total_seconds())
            for a, b in zip(table.timestamps, table.timestamps[1:])
        }
        assert deltas == {900}

    def test_night_slots_dark_and_idle(self):
        table, _ = synth.generate_station(small_spec())
        ghi = table.weather[:, GHI_COL].reshape(4, 96)
        power = table.power.reshape(4, 96)
        for day in range(4):
            assert np.all(ghi[day, : synth.SUNRISE_SLOT] == 0.0)
            assert np.all(ghi[day, synth.SUNSET_SLOT :] == 0.0)
            assert np.all(power[day, : synth.SUNRISE_SLOT] == 0.0)
            assert np.all(power[day, synth.SUNSET_SLOT :] == 0.0)
        assert np.all(table.power >= 0.0)

    def test_determinism_same_seed(self):
        t1, m1 = synth.generate_station(small_spec())
        t2, m2 = synth.generate_station(small_spec())
        assert np.array_equal(t1.weather, t2.weather)
        assert np.array_equal(t1.power, t2.power)
        assert np.array_equal(t1.forecast, t2.forecast)
        assert m1 == m2

    def test_different_seed_differs(self):
        t1, _ = synth.generate_station(small_spec())
        t2, _ = synth.generate_station(small_spec(seed=12))
        assert not np.array_equal(t1.power, t2.power)

    def test_power_reproducible_from_measured_irradiance(self):
        # with the noise channel off, power is an exact function of the
        # measured irradiance column and the station parameters
        spec = small_spec(noise_scale=0.0, days=3)
        table, meta = synth.generate_station(spec)
        scale = synth._per_panel_scale(spec)
        ghi = table.weather[:, GHI_COL].reshape(3, 96)
        power = table.power.reshape(3, 96)
        for day in range(3):
            heat = 0.0  # panels cool back to ambient overnight
            for slot in range(96):
                heat = (1.0 - synth.HEAT_ALPHA) * heat + synth.HEAT_ALPHA * ghi[day, slot] / 1000.0
                raw = scale * (ghi[day, slot] / 1000.0) * (1.0 - synth.HEAT_DERATE * heat)
                cap = scale * max(synth.CAP_FLOOR, synth.CAP_BASE - synth.CAP_SLOPE * heat)
                expected = max(0.0, min(raw, cap)) * meta.panel_count
                assert power[day, slot] == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_heat_derate_shapes_afternoon(self):
        # the panel-heat state makes the afternoon half of a clear day
        # weaker than the morning half at mirrored irradiance, so power
        # depends on history and not on the current slot alone
        table, _ = synth.generate_station(small_spec(noise_scale=0.0, cloudiness=0.0, days=1))
        power = table.power
        noon = (synth.SUNRISE_SLOT + synth.SUNSET_SLOT) // 2
        for offset in (4, 8, 12, 16):
            assert power[noon - offset] > power[noon + offset]

    def test_spec_validation(self):
        with pytest.raises(DataError):
            small_spec(cloudiness=1.5)
        with pytest.raises(DataError):
            small_spec(days=0)
        with pytest.raises(DataError):
            small_spec(start_day=364, days=5)  # would wrap past day 365


class TestFleet:
    def test_fleet_determinism(self):
        tables1, meta1 = synth.generate_fleet(n_stations=3, days=3, seed=5)
        tables2, meta2 = synth.generate_fleet(n_stations=3, days=3, seed=5)
        for a, b in zip(tables1, tables2):
            assert a.station_id == b.station_id
            assert np.array_equal(a.power, b.power)
            assert np.array_equal(a.weather, b.weather)
        assert meta1 == meta2

    def test_fleet_stations_distinct(self):
        tables, metadata = synth.generate_fleet(n_stations=4, days=2, seed=5)
        assert [t.station_id for t in tables] == ["st00", "st01", "st02", "st03"]
        assert set(metadata) == {"st00", "st01", "st02", "st03"}
        powers = [t.power for t in tables]
        for i in range(len(powers)):
            for j in range(i + 1, len(powers)):
                assert not np.array_equal(powers[i], powers[j])

    def test_fleet_metadata_ranges(self):
        _, metadata = synth.generate_fleet(n_stations=6, days=2, seed=9)
        for meta in metadata.values():
            assert 100 <= meta.panel_count <= 500
            assert 29.0 <= meta.latitude <= 41.0
            assert 98.0 <= meta.longitude <= 116.0
            assert meta.capacity_kw > 0.0

    def test_per_station_output_scale_spreads(self):
        # stations must differ in per-panel efficiency wide enough that
        # hiding the metadata from a model visibly costs accuracy
        _, metadata = synth.generate_fleet(n_stations=10, days=2, seed=0)
        scales = [m.capacity_kw / (m.panel_count * 1000.0) for m in metadata.values()]
        assert max(scales) / min(scales) > 1.5


class TestFleetFiles:
    @pytest.fixture()
    def written(self, tmp_path):
        tables, metadata = synth.generate_fleet(n_stations=3, days=3, seed=21)
        paths = synth.write_fleet(str(tmp_path), tables, metadata)
        return tables, metadata, paths

    def test_roundtrip_through_csv(self, written):
        tables, metadata, paths = written
        column_map = read_column_map(paths["columns"])
        loaded_meta = read_metadata_csv(paths["metadata"], column_map)
        assert set(loaded_meta) == set(metadata)
        for sid, meta in metadata.items():
            assert loaded_meta[sid].panel_count == meta.panel_count
            assert loaded_meta[sid].latitude == pytest.approx(meta.latitude, abs=1e-6)
        for table in tables:
            loaded = read_station_csv(
                f"{paths['stations_dir']}/{table.station_id}.csv", column_map, table.station_id
            )
            assert loaded.timestamps == table.timestamps
            # CSV carries 6 decimal places
            np.testing.assert_allclose(loaded.weather, table.weather, atol=1e-6)
            np.testing.assert_allclose(loaded.power, table.power, atol=1e-6)

    def test_prepared_samples_from_files(self, written):
        tables, metadata, paths = written
        column_map = read_column_map(paths["columns"])
        loaded_meta = read_metadata_csv(paths["metadata"], column_map)
        loaded_tables = [
            read_station_csv(
                f"{paths['stations_dir']}/{t.station_id}.csv", column_map, t.station_id
            )
            for t in tables
        ]
        samples = prepare_dataset(loaded_tables, loaded_meta)
        assert len(samples) == 3 * 3
        for sample in samples:
            assert sample.X.shape == (96, 8)
            assert sample.m.shape == (7,)
            assert sample.y.shape == (96,)

    def test_written_bytes_deterministic(self, tmp_path):
        tables, metadata = synth.generate_fleet(n_stations=2, days=2, seed=33)
        paths1 = synth.write_fleet(str(tmp_path / "a"), tables, metadata)
        paths2 = synth.write_fleet(str(tmp_path / "b"), tables, metadata)
        for key in ("metadata", "columns"):
            with open(paths1[key], "rb") as f1, open(paths2[key], "rb") as f2:
                assert f1.read() == f2.read()
        name = f"{tables[0].station_id}.csv"
        with open(f"{paths1['stations_dir']}/{name}", "rb") as f1:
            with open(f"{paths2['stations_dir']}/{name}", "rb") as f2:
                assert f1.read() == f2.read()

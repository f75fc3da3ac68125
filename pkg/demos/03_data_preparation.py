"""
From station CSVs to model-ready samples
========================================

One prepared sample is one station-day: a (96, 8) input matrix X with
cyclic time-of-day encodings in the first two columns and six z-scored
weather measurements after them, a 7-float metadata vector m, and the
per-panel power target y. This script runs the whole preparation path
on generated CSVs and shows each invariant along the way.
"""

import tempfile

import numpy as np

from pvforecast import data as D
from pvforecast import synth

# Lay a small fleet out on disk exactly as a real export would look.
tmp = tempfile.TemporaryDirectory()
tables, metadata = synth.generate_fleet(n_stations=3, days=8, seed=2)
paths = synth.write_fleet(tmp.name, tables, metadata)

# The column map names which CSV header plays which role, so oddly
# named exports only need a different map, not different code.
column_map = D.read_column_map(paths["columns"])
print("power column is called:", column_map["power"])

station = D.read_station_csv(
    paths["stations_dir"] + "/st00.csv", column_map, "st00"
)
fleet_meta = D.read_metadata_csv(paths["metadata"], column_map)
print("station st00:", len(station.timestamps), "rows")

# Cyclic encoding puts midnight and 23:45 next to each other on the
# unit circle instead of 96 slots apart.
for slot in (0, 24, 48, 72, 95):
    cos, sin = D.encode_cyclic(slot, D.TIME_PERIOD)
    print("slot %2d -> cos %+.3f sin %+.3f" % (slot, cos, sin))

# prepare_dataset reshapes to complete station-days, attaches the
# metadata vector, and divides power by the panel count.
samples = D.prepare_dataset(tables, metadata)
sample = samples[0]
print("samples:", len(samples))
print("X shape:", sample.X.shape, "m shape:", sample.m.shape,
      "y shape:", sample.y.shape)
print("m = (day_cos, day_sin, size, count, angle, lat, lon):")
print("   ", np.round(sample.m, 3))

# The split is stratified per station so every station contributes to
# both sides; folds partition the training days for cross-validation.
train, test = D.stratified_split(samples, seed=2)
folds = D.make_folds(train, k=5, seed=2)
print("train/test:", len(train), "/", len(test))
print("fold sizes:", [len(val) for _, val in folds])

# The scaler is fit on training days only. Cyclic columns are already
# in [-1, 1] and stay untouched; so does the target.
scaler = D.fit_scaler(train)
scaled_train = D.apply_scaler(train, scaler)
scaled = scaled_train[0]
raw = train[0]
print("weather column means after scaling:",
      np.round(np.concatenate([s.X for s in scaled_train])[:, 2:].mean(axis=0), 6))
print("cyclic columns untouched:",
      bool(np.array_equal(raw.X[:, :2], scaled.X[:, :2])))
print("target untouched:", bool(np.array_equal(raw.y, scaled.y)))

# Everything persists into one deterministic dataset file.
dataset = D.PreparedDataset(
    split=D.DatasetSplit(
        train=scaled_train, test=D.apply_scaler(test, scaler), folds=folds
    ),
    scaler=scaler,
    stations=sorted(metadata),
    d_weather=8,
    d_metadata=7,
    seed=2,
)
out = tmp.name + "/prepared.pvz"
D.save_dataset(out, dataset)
loaded = D.load_dataset(out)
print("round trip stations:", loaded.stations)
tmp.cleanup()

"""
Training a forecaster and scoring it
====================================

A deliberately small run: a narrow model on a three-station fleet for a
handful of epochs. The point is the shape of the workflow, not the
score; the acceptance tests train the full-size model and hold it to
quantitative bars.
"""

import numpy as np

from pvforecast import data as D
from pvforecast import metrics as ME
from pvforecast import model as M
from pvforecast import synth
from pvforecast import training as T

# Build a prepared dataset in memory (see demo 03 for the long form).
tables, metadata = synth.generate_fleet(n_stations=3, days=10, seed=5)
samples = D.prepare_dataset(tables, metadata)
train, test = D.stratified_split(samples, seed=5)
scaler = D.fit_scaler(train)
dataset = D.PreparedDataset(
    split=D.DatasetSplit(
        train=D.apply_scaler(train, scaler),
        test=D.apply_scaler(test, scaler),
        folds=D.make_folds(train, k=5, seed=5),
    ),
    scaler=scaler,
    stations=sorted(metadata),
    d_weather=8,
    d_metadata=7,
    seed=5,
)

# A narrow model keeps this demo in seconds. All the structure of the
# full-size forecaster is still there.
config = M.ModelConfig(model_dim=16, heads=2, head_dim=8, ffn_hidden=32, blocks=1)
train_config = T.TrainConfig(epochs=25, batch_size=8, seed=5)

# train_final: fit on the training days, score the held-out days, and
# score the persistence baseline (yesterday's curve as the forecast).
result = T.train_final(dataset, config, train_config)

print("loss curve (every 5th epoch):")
for record in result.records[::5]:
    print("  epoch %2d  train %.5f  val %.5f"
          % (record.epoch, record.train_mse, record.val_mse))

report = result.test_metrics
print("test MSE %.5f  PE %.2f%%  KLD %.4f  CCC %.4f"
      % (report.mse, report.pe, report.kld, report.ccc))
print("persistence PE %.2f%% over %d of %d test days"
      % (result.baseline.pe, result.baseline.covered, result.baseline.total))

# The elastic net penalty is part of the training loss; the reported
# train MSE above is the data term only, so the two are comparable.
penalty = T.elastic_net_penalty(result.params, T.ElasticNetConfig())
print("elastic net penalty at the end: %.5f" % penalty.item())

# Forecast one test day by hand and compare a few daylight slots.
sample = dataset.split.test[0]
forecast = M.forward(M.detach_params(result.params), sample.X, sample.m).data
for slot in (30, 48, 66):
    print("slot %2d: true %.3f  predicted %.3f"
          % (slot, sample.y[slot], forecast[slot]))

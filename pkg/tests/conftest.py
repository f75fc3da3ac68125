"""Shared helpers for the test suite."""

import numpy as np

from pvforecast import autodiff as ad
from pvforecast import model as M
from pvforecast.autodiff import Tensor


def flatten_params(params: M.ModelParams) -> np.ndarray:
    """Concatenate every trainable tensor into one flat vector."""
    return np.concatenate([t.data.ravel() for _, t in params.named_tensors()])


def flat_model_loss(config: M.ModelConfig, X: np.ndarray, m: np.ndarray, target: np.ndarray):
    """Express the training loss as a function of one flat parameter vector.

    Routing every weight through a single leaf lets the finite-difference
    checker probe the full model end to end, attention and norms included.
    """
    schema = M._tensor_schema(config)

    def loss(flat: Tensor) -> Tensor:
        values = {}
        offset = 0
        for name, shape, _ in schema:
            size = int(np.prod(shape))
            values[name] = flat[offset : offset + size].reshape(shape)
            offset += size
        params = M._params_from_values(config, values)
        out = M.forward_batch(params, Tensor(X), Tensor(m))
        return ad.mse(out, Tensor(target))

    return loss


def spread_coords(total: int, count: int) -> list[int]:
    """Evenly spaced flat indices covering [0, total)."""
    if count >= total:
        return list(range(total))
    step = total / count
    return sorted({int(i * step) for i in range(count)})


def tiny_dataset(n_stations=3, days=7, seed=0, noise_scale=0.05):
    """Small but fully realistic prepared dataset for protocol tests."""
    from pvforecast import data as D
    from pvforecast import synth

    tables, metadata = synth.generate_fleet(n_stations, days, seed, noise_scale)
    samples = D.prepare_dataset(tables, metadata)
    train, test = D.stratified_split(samples, seed=seed)
    folds = D.make_folds(train, k=5, seed=seed)
    scaler = D.fit_scaler(train)
    split = D.DatasetSplit(
        train=D.apply_scaler(train, scaler),
        test=D.apply_scaler(test, scaler),
        folds=folds,
    )
    return D.PreparedDataset(
        split=split,
        scaler=scaler,
        stations=sorted(metadata),
        d_weather=8,
        d_metadata=7,
        seed=seed,
    )


def tiny_model_config(blocks=1, **overrides):
    """Full-length but narrow model, fast enough for protocol tests."""
    base = dict(
        seq_len=96,
        model_dim=8,
        heads=2,
        head_dim=4,
        blocks=blocks,
        ffn_hidden=16,
        d_weather=8,
        d_metadata=7,
    )
    base.update(overrides)
    return M.ModelConfig(**base)

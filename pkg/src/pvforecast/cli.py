"""Command-line interface for the forecasting pipeline.

Subcommands cover the whole workflow: generate a synthetic fleet
(synth), turn raw CSVs into a single dataset file (prepare), run the
fold protocol (cv), train and score a final model (train, evaluate),
rebuild the structural comparison table (ablate), forecast from raw
CSVs with a saved checkpoint (predict), and render figures from run
artifacts (plot).

Settings resolve in three layers: built-in defaults, then an optional
``key = value`` config file, then explicit flags. Unknown config keys
are rejected rather than ignored.

Exit codes: 0 success, 1 configuration problem, 2 data problem,
3 numeric failure during optimization, 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict, dataclass, fields

import numpy as np

from pvforecast import __version__
from pvforecast import data as D
from pvforecast import metrics as MET
from pvforecast import model as M
from pvforecast import synth as S
from pvforecast import training as T
from pvforecast.autodiff import GraphError, NumericError, ShapeError
from pvforecast.container import ContainerError

log = logging.getLogger(__name__)

ABLATION_CHOICES = {
    "no_normalization": {"disable_norm": True},
    "no_metadata": {"disable_metadata": True},
    "no_skip_connections": {"disable_skip": True},
    "no_attention": {"disable_attention": True},
}


class ConfigError(Exception):
    """Bad flags, bad config file, or an unusable combination of both."""


@dataclass
class RunSettings:
    """Every tunable the CLI exposes, with pipeline defaults."""

    seed: int = 0
    epochs: int = 300
    cv_epochs: int = 200
    batch_size: int = 32
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1.0e-8
    weight_decay: float = 0.01
    l1: float = 1.0e-4
    l2: float = 1.0e-4
    regularization: bool = True
    blocks: int = 2
    model_dim: int = 64
    heads: int = 4
    head_dim: int = 16
    ffn_hidden: int = 256
    readout_mode: str = "shifted"
    test_fraction: float = 0.1
    folds: int = 5


def read_settings_file(path: str) -> dict:
    """Parse a ``key = value`` settings file into typed values."""
    types = {f.name: f.type for f in fields(RunSettings)}
    casts = {"int": int, "float": float, "str": str, "bool": None}
    result = {}
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in types:
            raise ConfigError(f"{path}:{lineno}: unknown setting {key!r}")
        if key in result:
            raise ConfigError(f"{path}:{lineno}: duplicate setting {key!r}")
        kind = types[key]
        try:
            if kind == "bool":
                lowered = value.lower()
                if lowered not in ("true", "false"):
                    raise ValueError(value)
                result[key] = lowered == "true"
            else:
                result[key] = casts[kind](value)
        except (ValueError, KeyError):
            raise ConfigError(
                f"{path}:{lineno}: setting {key!r} needs a {kind} value, got {value!r}"
            ) from None
    return result


def resolve_settings(args: argparse.Namespace) -> RunSettings:
    """Defaults, then the config file, then explicit flags."""
    values = asdict(RunSettings())
    config_path = getattr(args, "config", None)
    if config_path:
        values.update(read_settings_file(config_path))
    overrides = {
        "seed": getattr(args, "seed", None),
        "epochs": getattr(args, "epochs", None),
        "batch_size": getattr(args, "batch_size", None),
        "blocks": getattr(args, "blocks", None),
        "readout_mode": getattr(args, "readout_mode", None),
        "test_fraction": getattr(args, "test_fraction", None),
        "folds": getattr(args, "folds", None),
    }
    for key, value in overrides.items():
        if value is not None:
            values[key] = value
    if getattr(args, "no_regularization", False):
        values["regularization"] = False
    settings = RunSettings(**values)
    if settings.epochs < 0 or settings.cv_epochs < 0:
        raise ConfigError("epoch counts must be >= 0")
    if not 0.0 < settings.test_fraction < 1.0:
        raise ConfigError(f"test_fraction must lie in (0, 1), got {settings.test_fraction}")
    if settings.folds < 2:
        raise ConfigError(f"folds must be >= 2, got {settings.folds}")
    return settings


def model_config_from(settings: RunSettings, ablation: str | None = None) -> M.ModelConfig:
    flags = dict(ABLATION_CHOICES.get(ablation, {})) if ablation else {}
    try:
        return M.ModelConfig(
            blocks=settings.blocks,
            model_dim=settings.model_dim,
            heads=settings.heads,
            head_dim=settings.head_dim,
            ffn_hidden=settings.ffn_hidden,
            readout_mode=settings.readout_mode,
            ablation=flags,
        )
    except D.DataError as exc:
        raise ConfigError(str(exc)) from None


def train_config_from(settings: RunSettings, epochs: int | None = None) -> T.TrainConfig:
    elastic = T.ElasticNetConfig(l1=settings.l1, l2=settings.l2) if settings.regularization else None
    return T.TrainConfig(
        epochs=settings.epochs if epochs is None else epochs,
        batch_size=settings.batch_size,
        seed=settings.seed,
        optimizer=T.OptimizerConfig(
            lr=settings.lr,
            beta1=settings.beta1,
            beta2=settings.beta2,
            eps=settings.eps,
            weight_decay=settings.weight_decay,
        ),
        elastic=elastic,
    )


# -- artifact writing -------------------------------------------------


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    descriptor, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(descriptor, "w", encoding="utf-8", newline="") as handle:
            handle.write(text)
        os.replace(tmp_path, path)
    except BaseException:
        if os.path.exists(tmp_path):
            os.unlink(tmp_path)
        raise


def _format_float(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def write_loss_csv(path: str, records: list[T.TrainRecord]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["epoch", "train_mse", "val_mse"])
    for record in records:
        writer.writerow(
            [record.epoch, _format_float(record.train_mse), _format_float(record.val_mse)]
        )
    _atomic_write_text(path, buffer.getvalue())


def write_cv_csv(path: str, report: T.CvReport) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["fold", "reg_train_mse", "reg_val_mse", "unreg_train_mse", "unreg_val_mse"]
    )
    columns = [[], [], [], []]
    for row in report.rows:
        values = [row.reg_train_mse, row.reg_val_mse, row.unreg_train_mse, row.unreg_val_mse]
        for column, value in zip(columns, values):
            column.append(value)
        writer.writerow([row.fold] + [_format_float(v) for v in values])
    writer.writerow(["mean"] + [_format_float(float(np.mean(c))) for c in columns])
    _atomic_write_text(path, buffer.getvalue())


def write_ablation_csv(path: str, rows: list[T.AblationRow]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(
        ["name", "blocks", "parameters", "train_mse", "val_mse", "test_mse", "val_pe"]
    )
    for row in rows:
        writer.writerow(
            [
                row.name,
                row.blocks,
                row.parameters,
                _format_float(row.train_mse),
                _format_float(row.val_mse),
                _format_float(row.test_mse),
                _format_float(row.val_pe),
            ]
        )
    _atomic_write_text(path, buffer.getvalue())


def write_config_snapshot(run_dir: str, command: str, settings: RunSettings, extras: dict) -> None:
    payload = {
        "command": command,
        "package_version": __version__,
        "settings": asdict(settings),
        **extras,
    }
    _atomic_write_text(
        os.path.join(run_dir, "config.json"),
        json.dumps(payload, indent=2, sort_keys=True) + "\n",
    )


# -- subcommands ------------------------------------------------------


def cmd_synth(args: argparse.Namespace) -> int:
    tables, metadata = S.generate_fleet(
        n_stations=args.stations, days=args.days, seed=args.seed, noise_scale=args.noise
    )
    paths = S.write_fleet(args.out, tables, metadata)
    total_days = sum(len(t.timestamps) for t in tables) // D.SLOTS_PER_DAY
    print(f"wrote {len(tables)} stations, {total_days} station-days under {args.out}")
    print(f"metadata: {paths['metadata']}")
    print(f"column map: {paths['columns']}")
    return 0


def _load_raw_fleet(stations_dir: str, metadata_path: str, columns_path: str):
    column_map = D.read_column_map(columns_path)
    metadata = D.read_metadata_csv(metadata_path, column_map)
    try:
        names = sorted(n for n in os.listdir(stations_dir) if n.endswith(".csv"))
    except OSError as exc:
        raise D.DataError(f"cannot list stations directory {stations_dir}: {exc}") from None
    if not names:
        raise D.DataError(f"no station CSV files under {stations_dir}")
    tables = [
        D.read_station_csv(os.path.join(stations_dir, name), column_map, name[:-4])
        for name in names
    ]
    return tables, metadata


def _identity_scaler(d_weather: int, d_metadata: int) -> D.ZScoreScaler:
    return D.ZScoreScaler(
        weather_mean=np.zeros(d_weather),
        weather_std=np.ones(d_weather),
        weather_excluded=np.ones(d_weather, dtype=bool),
        metadata_mean=np.zeros(d_metadata),
        metadata_std=np.ones(d_metadata),
        metadata_excluded=np.ones(d_metadata, dtype=bool),
    )


def cmd_prepare(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    tables, metadata = _load_raw_fleet(args.stations, args.metadata, args.columns)
    samples = D.prepare_dataset(tables, metadata)
    train, test = D.stratified_split(samples, seed=settings.seed, test_fraction=settings.test_fraction)
    folds = D.make_folds(train, k=settings.folds, seed=settings.seed)
    d_weather = samples[0].X.shape[1]
    d_metadata = samples[0].m.shape[0]
    if args.no_input_scaling:
        scaler = _identity_scaler(d_weather, d_metadata)
    else:
        scaler = D.fit_scaler(train)
    split = D.DatasetSplit(
        train=D.apply_scaler(train, scaler),
        test=D.apply_scaler(test, scaler),
        folds=folds,
    )
    dataset = D.PreparedDataset(
        split=split,
        scaler=scaler,
        stations=sorted({s.station_id for s in samples}),
        d_weather=d_weather,
        d_metadata=d_metadata,
        seed=settings.seed,
    )
    D.save_dataset(args.out, dataset)
    print(
        f"prepared {len(train)} training and {len(test)} test station-days "
        f"from {len(dataset.stations)} stations -> {args.out}"
    )
    return 0


def _check_dataset_widths(dataset: D.PreparedDataset, config: M.ModelConfig) -> None:
    if dataset.d_weather != config.d_weather or dataset.d_metadata != config.d_metadata:
        raise D.DataError(
            f"dataset features ({dataset.d_weather}, {dataset.d_metadata}) do not match "
            f"the model ({config.d_weather}, {config.d_metadata})"
        )


def cmd_train(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    dataset = D.load_dataset(args.data)
    model_config = model_config_from(settings, ablation=args.ablation)
    _check_dataset_widths(dataset, model_config)
    train_config = train_config_from(settings)
    result = T.train_final(dataset, model_config, train_config)

    os.makedirs(args.out, exist_ok=True)
    write_config_snapshot(
        args.out,
        "train",
        settings,
        {"data": args.data, "ablation": args.ablation, "model": asdict(model_config)},
    )
    write_loss_csv(os.path.join(args.out, "loss.csv"), result.records)
    M.save_checkpoint(os.path.join(args.out, "model.pvz"), result.params, dataset.scaler)
    report = result.test_metrics
    improvement = 100.0 * (1.0 - report.pe / result.baseline.pe) if result.baseline.pe else 0.0
    payload = {
        "model": report.as_dict(),
        "persistence": {
            "pe": result.baseline.pe,
            "mse": result.baseline.mse,
            "covered_days": result.baseline.covered,
            "test_days": result.baseline.total,
        },
        "pe_improvement_over_persistence_percent": improvement,
    }
    _atomic_write_text(
        os.path.join(args.out, "metrics.json"),
        json.dumps(payload, indent=2, sort_keys=True) + "\n",
    )
    print(
        f"trained {settings.epochs} epochs on {len(dataset.split.train)} days; "
        f"test mse {report.mse:.6f}, pe {report.pe:.2f}%, ccc {report.ccc:.4f}"
    )
    print(
        f"persistence pe {result.baseline.pe:.2f}% -> improvement {improvement:.1f}%"
    )
    print(f"artifacts in {args.out}: config.json, loss.csv, model.pvz, metrics.json")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    dataset = D.load_dataset(args.data)
    checkpoint = M.load_checkpoint(args.model)
    tX, tm, ty = T.to_arrays(dataset.split.test)
    if checkpoint.kind == "oracle":
        predictions = ty.copy()
    else:
        _check_dataset_widths(dataset, checkpoint.params.config)
        predictions = T.predict_all(checkpoint.params, tX, tm)
    report = MET.evaluate(ty, predictions)
    text = report.to_json()
    if args.out:
        _atomic_write_text(args.out, text)
        print(f"wrote {args.out}")
    print(
        f"test mse {report.mse:.6f}, pe {report.pe:.2f}%, "
        f"kld {report.kld:.4f}, ccc {report.ccc:.4f} over {report.n_days} days"
    )
    return 0


def cmd_cv(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    dataset = D.load_dataset(args.data)
    model_config = model_config_from(settings)
    _check_dataset_widths(dataset, model_config)
    epochs = args.epochs if args.epochs is not None else settings.cv_epochs
    train_config = train_config_from(settings, epochs=epochs)
    if train_config.elastic is None:
        raise ConfigError("cv compares against the elastic net; do not disable regularization")
    report = T.cross_validate(dataset, model_config, train_config)
    os.makedirs(args.out, exist_ok=True)
    write_config_snapshot(
        args.out, "cv", settings, {"data": args.data, "epochs": epochs}
    )
    write_cv_csv(os.path.join(args.out, "cv.csv"), report)
    print(f"{len(report.rows)} folds, {epochs} epochs each")
    print(
        f"mean generalization gap: {report.mean_gap(True):.6f} regularized, "
        f"{report.mean_gap(False):.6f} unregularized"
    )
    print(f"artifacts in {args.out}: config.json, cv.csv")
    return 0


def cmd_ablate(args: argparse.Namespace) -> int:
    settings = resolve_settings(args)
    dataset = D.load_dataset(args.data)
    model_config = model_config_from(settings)
    _check_dataset_widths(dataset, model_config)
    train_config = train_config_from(settings, epochs=args.epochs)
    rows = T.ablate(dataset, model_config, train_config)
    os.makedirs(args.out, exist_ok=True)
    write_config_snapshot(args.out, "ablate", settings, {"data": args.data})
    write_ablation_csv(os.path.join(args.out, "ablation.csv"), rows)
    width = max(len(r.name) for r in rows)
    for row in rows:
        print(
            f"{row.name:<{width}}  blocks {row.blocks}  params {row.parameters:>7}  "
            f"val mse {row.val_mse:.6f}  test mse {row.test_mse:.6f}  "
            f"val pe {row.val_pe:.2f}%"
        )
    print(f"artifacts in {args.out}: config.json, ablation.csv")
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    checkpoint = M.load_checkpoint(args.model)
    tables, metadata = _load_raw_fleet(args.stations, args.metadata, args.columns)
    if args.station:
        tables = [t for t in tables if t.station_id == args.station]
        if not tables:
            raise D.DataError(f"station {args.station!r} not found")
    samples = D.prepare_dataset(tables, metadata)
    if checkpoint.kind == "oracle":
        predictions = np.stack([s.y for s in samples])
    else:
        if checkpoint.scaler is None:
            raise D.DataError("checkpoint carries no scaler; cannot prepare raw inputs")
        scaled = D.apply_scaler(samples, checkpoint.scaler)
        X, m, _ = T.to_arrays(scaled)
        predictions = T.predict_all(checkpoint.params, X, m)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["station_id", "day_of_year", "slot", "power_true", "power_pred"])
    for sample, forecast in zip(samples, predictions):
        for slot in range(D.SLOTS_PER_DAY):
            writer.writerow(
                [
                    sample.station_id,
                    sample.day_of_year,
                    slot,
                    repr(float(sample.y[slot])),
                    repr(float(forecast[slot])),
                ]
            )
    if args.out:
        _atomic_write_text(args.out, buffer.getvalue())
        print(f"wrote {len(samples) * D.SLOTS_PER_DAY} forecast rows to {args.out}")
    else:
        sys.stdout.write(buffer.getvalue())
    return 0


def _read_csv_table(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


def cmd_plot(args: argparse.Namespace) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    run_dir = os.path.abspath(args.run)
    out_dir = os.path.abspath(args.out)
    if out_dir == run_dir or out_dir.startswith(run_dir + os.sep):
        raise ConfigError("plot output must live outside the run directory")
    os.makedirs(out_dir, exist_ok=True)
    if args.deterministic:
        plt.rcParams["svg.hashsalt"] = "pvforecast"
    save_kwargs = {"metadata": {"Date": None}} if args.deterministic else {}

    written = []

    loss_path = os.path.join(run_dir, "loss.csv")
    if os.path.exists(loss_path):
        rows = _read_csv_table(loss_path)
        epochs = [int(r["epoch"]) for r in rows]
        train = [float(r["train_mse"]) for r in rows]
        figure, axis = plt.subplots(figsize=(7, 4))
        axis.plot(epochs, train, label="train")
        if any(r["val_mse"] for r in rows):
            axis.plot(
                epochs,
                [float(r["val_mse"]) for r in rows if r["val_mse"]],
                label="held-out",
            )
        axis.set_xlabel("epoch")
        axis.set_ylabel("mse")
        axis.set_yscale("log")
        axis.legend()
        axis.set_title("training loss")
        figure.tight_layout()
        target = os.path.join(out_dir, "loss.svg")
        figure.savefig(target, **save_kwargs)
        plt.close(figure)
        written.append(target)

    ablation_path = os.path.join(run_dir, "ablation.csv")
    if os.path.exists(ablation_path):
        rows = _read_csv_table(ablation_path)
        names = [r["name"] for r in rows]
        values = [float(r["val_mse"]) for r in rows]
        figure, axis = plt.subplots(figsize=(8, 4.5))
        axis.bar(range(len(names)), values)
        axis.set_xticks(range(len(names)))
        axis.set_xticklabels(names, rotation=30, ha="right")
        axis.set_ylabel("held-out mse")
        axis.set_title("structural comparison")
        figure.tight_layout()
        target = os.path.join(out_dir, "ablation.svg")
        figure.savefig(target, **save_kwargs)
        plt.close(figure)
        written.append(target)

    cv_path = os.path.join(run_dir, "cv.csv")
    if os.path.exists(cv_path):
        rows = [r for r in _read_csv_table(cv_path) if r["fold"] != "mean"]
        folds = [r["fold"] for r in rows]
        reg_gap = [float(r["reg_val_mse"]) - float(r["reg_train_mse"]) for r in rows]
        unreg_gap = [float(r["unreg_val_mse"]) - float(r["unreg_train_mse"]) for r in rows]
        positions = np.arange(len(folds))
        figure, axis = plt.subplots(figsize=(7, 4))
        axis.bar(positions - 0.2, reg_gap, width=0.4, label="elastic net")
        axis.bar(positions + 0.2, unreg_gap, width=0.4, label="no penalty")
        axis.set_xticks(positions)
        axis.set_xticklabels([f"fold {f}" for f in folds])
        axis.set_ylabel("validation - training mse")
        axis.set_title("generalization gap per fold")
        axis.legend()
        figure.tight_layout()
        target = os.path.join(out_dir, "cv.svg")
        figure.savefig(target, **save_kwargs)
        plt.close(figure)
        written.append(target)

    if not written:
        raise D.DataError(f"no plottable artifacts (loss.csv, ablation.csv, cv.csv) in {run_dir}")
    for path in written:
        print(f"wrote {path}")
    return 0


# -- argument parsing -------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route usage problems to exit code 1
        raise ConfigError(message)


def _add_settings_flags(parser: argparse.ArgumentParser, with_training=True):
    parser.add_argument("--config", help="key = value settings file")
    parser.add_argument("--seed", type=int, help="master pipeline seed")
    if with_training:
        parser.add_argument("--epochs", type=int, help="training epochs")
        parser.add_argument("--batch-size", type=int, dest="batch_size")
        parser.add_argument("--blocks", type=int, help="encoder block count")
        parser.add_argument(
            "--readout-mode",
            choices=("shifted", "algorithmic"),
            dest="readout_mode",
            help="which encoder positions feed the forecast head",
        )
        parser.add_argument(
            "--no-regularization",
            action="store_true",
            dest="no_regularization",
            help="drop the elastic-net penalty",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pvforecast", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    p = commands.add_parser("synth", help="generate a synthetic station fleet")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--stations", type=int, default=10)
    p.add_argument("--days", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.02, help="measurement noise scale")
    p.set_defaults(func=cmd_synth)

    p = commands.add_parser("prepare", help="build a dataset file from raw CSVs")
    p.add_argument("--stations", required=True, help="directory of station CSVs")
    p.add_argument("--metadata", required=True, help="fleet metadata CSV")
    p.add_argument("--columns", required=True, help="column-map file")
    p.add_argument("--out", required=True, help="dataset file to write")
    p.add_argument("--test-fraction", type=float, dest="test_fraction")
    p.add_argument("--folds", type=int)
    p.add_argument(
        "--no-input-scaling",
        action="store_true",
        dest="no_input_scaling",
        help="skip input standardization (store raw feature values)",
    )
    _add_settings_flags(p, with_training=False)
    p.set_defaults(func=cmd_prepare)

    p = commands.add_parser("train", help="train a model and score the test days")
    p.add_argument("--data", required=True, help="prepared dataset file")
    p.add_argument("--out", required=True, help="run directory")
    p.add_argument(
        "--ablation",
        choices=sorted(ABLATION_CHOICES),
        help="train one structural variant instead of the full model",
    )
    _add_settings_flags(p)
    p.set_defaults(func=cmd_train)

    p = commands.add_parser("evaluate", help="score a checkpoint on a dataset's test days")
    p.add_argument("--data", required=True, help="prepared dataset file")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--out", help="metrics JSON path (default: print only)")
    p.set_defaults(func=cmd_evaluate)

    p = commands.add_parser("cv", help="fold protocol with and without the elastic net")
    p.add_argument("--data", required=True, help="prepared dataset file")
    p.add_argument("--out", required=True, help="run directory")
    _add_settings_flags(p)
    p.set_defaults(func=cmd_cv)

    p = commands.add_parser("ablate", help="retrain the structural comparison table")
    p.add_argument("--data", required=True, help="prepared dataset file")
    p.add_argument("--out", required=True, help="run directory")
    _add_settings_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = commands.add_parser("predict", help="forecast raw station days with a checkpoint")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--stations", required=True, help="directory of station CSVs")
    p.add_argument("--metadata", required=True, help="fleet metadata CSV")
    p.add_argument("--columns", required=True, help="column-map file")
    p.add_argument("--station", help="restrict to one station id")
    p.add_argument("--out", help="forecast CSV path (default: stdout)")
    p.set_defaults(func=cmd_predict)

    p = commands.add_parser("plot", help="render figures from run artifacts")
    p.add_argument("--run", required=True, help="run directory to read")
    p.add_argument("--out", required=True, help="figure directory (outside the run)")
    p.add_argument(
        "--deterministic",
        action="store_true",
        help="byte-reproducible SVG output",
    )
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (D.DataError, ContainerError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ShapeError, GraphError) as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())

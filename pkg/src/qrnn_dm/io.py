"""File formats: run configs, series/prediction CSVs and JSON artefacts.

CSV files start with ``#`` provenance comment lines; JSON files carry a
``provenance`` object. Floats are written with 17 significant digits.
"""
from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ansatz import CASE_CONFIGS, AnsatzConfig
from .datasets import MultivariateSeries, SeriesSpec, WindowedDataset, generate, make_windows
from .exceptions import SpecError
from .training import DEFAULT_G_TOL, QRNNModel, TrainConfig

FLOAT_FMT = "{:.17g}"


@dataclass
class RunConfig:
    series: SeriesSpec
    ansatz: AnsatzConfig
    train: TrainConfig
    data_seed: int = 0
    output_dir: str = "runs"
    workers: int | None = None
    extra: dict = field(default_factory=dict)  # command-specific settings (grad-check etc.)

    @property
    def case(self) -> str:
        return self.series.case

    def to_dict(self) -> dict:
        return {"case": self.case, "series": {"params": self.series.params,
                                              "n_points": self.series.n_points,
                                              "substeps": self.series.substeps},
                "ansatz": self.ansatz.to_dict(), "train": self.train.to_dict(),
                "data_seed": self.data_seed, "output_dir": self.output_dir,
                "workers": self.workers, "extra": self.extra}

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise SpecError("config must be a JSON object")
        case = d.get("case")
        if case is None:
            raise SpecError("config has no 'case' entry")
        if case not in CASE_CONFIGS:
            raise SpecError(f"unknown case {case!r}")
        s = d.get("series", {}) or {}
        series = SeriesSpec(case, dict(s.get("params", {})), int(s.get("n_points", 1000)),
                            int(s.get("substeps", 10)))
        base = CASE_CONFIGS[case].to_dict()
        base.update(d.get("ansatz", {}) or {})
        ansatz = AnsatzConfig.from_dict(base)
        train = {"g_tol": DEFAULT_G_TOL[case]}
        train.update(d.get("train", {}) or {})
        try:
            tc = TrainConfig.from_dict(train)
        except (TypeError, ValueError) as exc:
            raise SpecError(f"bad train section: {exc}") from exc
        return cls(series, ansatz, tc, int(d.get("data_seed", 0)), str(d.get("output_dir", "runs")),
                   d.get("workers"), dict(d.get("extra", {}) or {}))

    def digest(self) -> str:
        # output location and worker count do not change any result
        d = {k: v for k, v in self.to_dict().items() if k not in ("output_dir", "workers")}
        d["train"] = {k: v for k, v in d["train"].items() if k != "workers"}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def provenance(self) -> dict:
        return {"config_sha256": self.digest(), "data_seed": self.data_seed,
                "init_seed": self.train.seed, "case": self.case}


def load_config(path) -> RunConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: not valid JSON ({exc})") from exc
    return RunConfig.from_dict(data)


def save_config(config: RunConfig, path) -> None:
    write_json(path, config.to_dict())


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT.format(float(v))
    return str(v)


def write_csv(path, header: list[str], rows, provenance: dict | None = None) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        for k, v in sorted((provenance or {}).items()):
            fh.write(f"# {k}={v}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def read_csv(path) -> tuple[list[str], list[list[str]], dict]:
    meta, lines = {}, []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k] = v
            else:
                lines.append(line)
    rows = list(csv.reader(lines))
    return rows[0], rows[1:], meta


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, obj, provenance: dict | None = None) -> None:
    data = _jsonable(obj)
    if provenance is not None:
        data = dict(data, provenance=provenance)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


# --- artefacts ----------------------------------------------------------------

def write_series(series: MultivariateSeries, path, provenance=None) -> None:
    n_v = series.inputs.shape[1]
    header = ["time"] + [f"x{i}" for i in range(n_v)] + ["target"]
    rows = ([t, *x, y] for t, x, y in zip(series.time, series.inputs, series.target))
    write_csv(path, header, rows, provenance)


def read_series(path, spec: SeriesSpec) -> MultivariateSeries:
    header, rows, _ = read_csv(path)
    arr = np.array(rows, dtype=float)
    return MultivariateSeries(arr[:, 0], arr[:, 1:-1], arr[:, -1], spec)


def split_sidecar(dataset: WindowedDataset) -> dict:
    return {"spec": dataset.series.spec.to_dict(), "seed": dataset.seed,
            "window": dataset.window, "horizon": dataset.horizon,
            "n_windows": len(dataset.starts), "window_starts": dataset.starts,
            "splits": dataset.split_indices(), "full_test_starts": dataset.full_test_starts,
            "counts": {k: int(np.sum(dataset.labels == k)) for k in ("train", "val", "test")}}


def build_dataset(config: RunConfig) -> WindowedDataset:
    return make_windows(generate(config.series), config.data_seed)


def write_model(model: QRNNModel, path, provenance=None) -> None:
    write_json(path, model.to_dict(), provenance)


def read_model(path) -> QRNNModel:
    return QRNNModel.from_dict(read_json(path))


def prediction_rows(model: QRNNModel, dataset: WindowedDataset):
    """Rows (set, window, index, time, target, prediction) for every split."""
    for split in ("train", "val", "test", "full_test"):
        X, Y = dataset.arrays(split)
        if not len(X):
            continue
        pred = model.predict(X, dataset.horizon)
        pos = dataset.horizon_positions(split)
        for w in range(len(X)):
            for h in range(dataset.horizon):
                k = int(pos[w, h])
                yield [split, w, k, dataset.series.time[k], Y[w, h], pred[w, h]]


PREDICTION_HEADER = ["set", "window", "index", "time", "target", "prediction"]

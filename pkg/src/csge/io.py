"""CSV datasets, external member predictions and model documents."""

from __future__ import annotations

import csv
import json
from importlib import resources
from pathlib import Path

import numpy as np

from .core import (
    Dataset,
    EtaVector,
    MissingCell,
    ParseError,
    PredictionCube,
    Scorer,
    ShapeMismatch,
    validate_dataset,
)
from .ensemble import CsgeModel
from .estimators import FittedEstimator
from .softgate import SoftGateConfig
from .weighting import GlobalScores, LocalMemory, Projection, TimeScores

MODEL_FORMAT = "csge/1"


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1) from None
        header = [h.strip() for h in header]
        seen = set()
        for h in header:
            if h in seen:
                raise ParseError(f"duplicate column {h!r}", line=1)
            seen.add(h)
        rows = []
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    f"expected {len(header)} fields, got {len(row)}", line=reader.line_num
                )
            rows.append((reader.line_num, row))
    return header, rows


def _number(text, line, column):
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"column {column!r}: {text!r} is not numeric", line=line) from None


def load_csv(
    path,
    target: str,
    lead_time: str | None = None,
    sample_id: str = "sample_id",
    n_classes: int | None = None,
    classification: bool = False,
) -> Dataset:
    """Read a dataset with a header row.

    Every column except the target (and, for lead-time data, the lead-time
    and sample-id columns) is a feature. Lead-time files are long format:
    one row per (sample, lead time), features repeated per sample.
    """
    header, rows = _read_rows(path)
    special = [target] + ([lead_time, sample_id] if lead_time else [])
    for col in special:
        if col not in header:
            raise ParseError(f"missing column {col!r}", line=1)
    feat_cols = [i for i, h in enumerate(header) if h not in special]
    if not feat_cols:
        raise ParseError("no feature columns", line=1)
    names = tuple(header[i] for i in feat_cols)
    ti = header.index(target)
    feats, targets = [], []
    for line, row in rows:
        feats.append([_number(row[i], line, header[i]) for i in feat_cols])
        targets.append(_number(row[ti], line, target))
    if not rows:
        raise ParseError("no data rows", line=2)
    X = np.array(feats)
    y = np.array(targets)

    lead_times = None
    if lead_time:
        li, si = header.index(lead_time), header.index(sample_id)
        groups: dict = {}
        for k, (line, row) in enumerate(rows):
            t = _number(row[li], line, lead_time)
            if t != int(t) or t < 0:
                raise ParseError(f"lead time {row[li]!r} is not a nonnegative integer", line=line)
            groups.setdefault(row[si].strip(), []).append((int(t), k, line))
        T = 1 + max(t for g in groups.values() for t, _, _ in g)
        Xs, Ys = [], []
        for sid, members in groups.items():
            ts = sorted(m[0] for m in members)
            if ts != list(range(T)):
                raise ShapeMismatch(f"sample {sid!r} has lead times {ts}, expected 0..{T - 1}")
            by_t = {t: k for t, k, _ in members}
            first = X[by_t[0]]
            for t, k, line in members:
                if not np.array_equal(X[k], first):
                    raise ParseError(f"sample {sid!r} changes its features across lead times", line)
            Xs.append(first)
            Ys.append([y[by_t[t]] for t in range(T)])
        X, y = np.array(Xs), np.array(Ys)
        lead_times = np.arange(T)

    if classification or n_classes is not None:
        if np.any(y != np.round(y)) or np.any(y < 0):
            raise ParseError("class labels must be nonnegative integers")
        y = y.astype(int)
        n_classes = int(n_classes if n_classes is not None else y.max() + 1)
    return validate_dataset(Dataset(X, y, lead_times, names, n_classes))


def load_features_csv(path, feature_names, sample_id: str | None = None):
    """Feature matrix (columns in ``feature_names`` order) and row ids.

    Extra columns are ignored. Without ``sample_id`` the ids are 0..M-1; with
    it, repeated ids (long-format files) are collapsed to their first row.
    """
    header, rows = _read_rows(path)
    missing = [f for f in feature_names if f not in header]
    if missing:
        raise ParseError(f"missing feature columns {missing}", line=1)
    idx = [header.index(f) for f in feature_names]
    if sample_id and sample_id in header:
        si = header.index(sample_id)
        seen, X, ids = set(), [], []
        for line, row in rows:
            sid = row[si].strip()
            if sid in seen:
                continue
            seen.add(sid)
            ids.append(sid)
            X.append([_number(row[i], line, header[i]) for i in idx])
    else:
        ids = [str(i) for i in range(len(rows))]
        X = [[_number(row[i], line, header[i]) for i in idx] for line, row in rows]
    X = np.array(X, dtype=float).reshape(len(ids), len(feature_names))
    validate_dataset(Dataset(X, np.zeros(len(ids)), feature_names=tuple(feature_names)))
    return X, ids


def write_csv(data: Dataset, path, target: str = "target", lead_time: str = "lead_time",
              sample_id: str = "sample_id") -> None:
    """Write ``data`` so that :func:`load_csv` reads it back bit for bit."""
    fmt = (lambda v: str(int(v))) if data.is_classification else (lambda v: repr(float(v)))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if data.lead_times is None:
            w.writerow([*data.feature_names, target])
            for x, y in zip(data.features, data.targets):
                w.writerow([*(repr(float(v)) for v in x), fmt(y)])
        else:
            w.writerow([sample_id, lead_time, *data.feature_names, target])
            for n, (x, ys) in enumerate(zip(data.features, data.targets)):
                for t, y in enumerate(ys):
                    w.writerow([n, t, *(repr(float(v)) for v in x), fmt(y)])


def load_diabetes() -> Dataset:
    """The bundled diabetes regression table (442 rows, 10 features)."""
    with resources.as_file(resources.files("csge") / "data" / "diabetes.csv") as p:
        return load_csv(p, target="target")


# -- external member predictions ---------------------------------------------------

_PRED_COLUMNS = ("sample_id", "member_id", "lead_time", "prediction")


def import_external_predictions(path) -> PredictionCube:
    """Dense cube from a long table of member predictions.

    Required columns: sample_id (integers 0..N-1), member_id, lead_time,
    prediction. An optional ``class`` column makes the predictions class
    probabilities, one row per class. Members keep their first-appearance
    order. Every (sample, member, lead time[, class]) cell must appear once.
    """
    header, rows = _read_rows(path)
    for col in _PRED_COLUMNS:
        if col not in header:
            raise ParseError(f"missing column {col!r}", line=1)
    has_class = "class" in header
    si, mi, li, pi = (header.index(c) for c in _PRED_COLUMNS)
    ci = header.index("class") if has_class else None
    cells = {}
    members: list = []
    for line, row in rows:
        n = _number(row[si], line, "sample_id")
        t = _number(row[li], line, "lead_time")
        if n != int(n) or n < 0 or t != int(t) or t < 0:
            raise ParseError("sample_id and lead_time must be nonnegative integers", line)
        c = 0
        if has_class:
            c = _number(row[ci], line, "class")
            if c != int(c) or c < 0:
                raise ParseError("class must be a nonnegative integer", line)
        mid = row[mi].strip()
        if mid not in members:
            members.append(mid)
        key = (int(n), members.index(mid), int(t), int(c))
        if key in cells:
            raise ParseError(f"duplicate cell sample={key[0]} member={mid!r} lead_time={key[2]}", line)
        cells[key] = _number(row[pi], line, "prediction")
    if not cells:
        raise ParseError("no prediction rows", line=2)
    N = 1 + max(k[0] for k in cells)
    J = len(members)
    T = 1 + max(k[2] for k in cells)
    C = 1 + max(k[3] for k in cells)
    values = np.full((N, J, T, C), np.nan)
    for (n, j, t, c), v in cells.items():
        values[n, j, t, c] = v
    missing = np.argwhere(np.isnan(values))
    if len(missing):
        n, j, t, c = missing[0]
        where = f"sample_id={n}, member_id={members[j]!r}, lead_time={t}"
        if has_class:
            where += f", class={c}"
        raise MissingCell(f"missing prediction for ({where}); {len(missing)} cells absent")
    if not has_class:
        values = values[..., 0]
    return PredictionCube(values, tuple(members))


def write_external_predictions(cube: PredictionCube, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if cube.is_probabilistic:
            w.writerow([*_PRED_COLUMNS, "class"])
            for n, j, t, c in np.ndindex(cube.values.shape):
                w.writerow([n, cube.member_ids[j], t, repr(float(cube.values[n, j, t, c])), c])
        else:
            w.writerow(_PRED_COLUMNS)
            for n, j, t in np.ndindex(cube.values.shape):
                w.writerow([n, cube.member_ids[j], t, repr(float(cube.values[n, j, t]))])


# -- model documents ---------------------------------------------------------------


def _arr(a) -> list:
    return np.asarray(a, dtype=float).tolist()


def model_to_dict(model: CsgeModel) -> dict:
    if model.scorer.kind == "user_supplied":
        raise ValueError("models with a user-supplied scorer cannot be serialised")
    mem = model.local_memory
    return {
        "format": MODEL_FORMAT,
        "member_ids": list(model.member_ids),
        "members": None if model.members is None else [m.to_dict() for m in model.members],
        "eta": {
            "eta_global": model.eta.eta_global,
            "eta_local": model.eta.eta_local,
            "eta_time": model.eta.eta_time,
        },
        "scorer": model.scorer.kind,
        "softgate": {"epsilon": model.gate.epsilon, "eta_max": model.gate.eta_max},
        "n_features": model.n_features,
        "n_classes": model.n_classes,
        "global_scores": _arr(model.global_scores.R),
        "time_scores": {"R_t": _arr(model.time_scores.R_t), "r_t": _arr(model.time_scores.r_t)},
        "local_memory": {
            "pca_basis": _arr(mem.projection.basis),
            "feature_means": _arr(mem.projection.means),
            "feature_scales": _arr(mem.projection.scales),
            "eigenvalues": _arr(mem.projection.eigenvalues),
            "projected_training": _arr(mem.projected_training),
            "training_errors": _arr(mem.training_errors),
            "k_neighbors": mem.k_neighbors,
        },
        "config": model.config,
    }


def model_from_dict(d: dict) -> CsgeModel:
    if d.get("format") != MODEL_FORMAT:
        raise ParseError(f"unsupported model format {d.get('format')!r}; expected {MODEL_FORMAT}")
    gate = SoftGateConfig(**d["softgate"])
    lm = d["local_memory"]
    n_features = int(d["n_features"])

    def matrix(v, cols):
        return np.asarray(v, dtype=float).reshape(-1, cols)

    basis = np.asarray(lm["pca_basis"], dtype=float)
    projection = Projection(
        basis,
        np.asarray(lm["feature_means"], dtype=float),
        np.asarray(lm["feature_scales"], dtype=float),
        np.asarray(lm["eigenvalues"], dtype=float),
    )
    J = len(d["member_ids"])
    memory = LocalMemory(
        projection,
        matrix(lm["projected_training"], basis.shape[1]),
        matrix(lm["training_errors"], J),
        int(lm["k_neighbors"]),
    )
    members = d["members"]
    if members is not None:
        members = tuple(FittedEstimator.from_dict(m) for m in members)
    return CsgeModel(
        members=members,
        member_ids=tuple(d["member_ids"]),
        eta=EtaVector(**d["eta"], eta_max=gate.eta_max),
        global_scores=GlobalScores(np.asarray(d["global_scores"], dtype=float)),
        local_memory=memory,
        time_scores=TimeScores(
            matrix(d["time_scores"]["R_t"], J), matrix(d["time_scores"]["r_t"], J)
        ),
        scorer=Scorer(d["scorer"]),
        gate=gate,
        n_features=n_features,
        n_classes=d["n_classes"],
        config=d.get("config", {}),
    )


def save_model(model: CsgeModel, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model), allow_nan=False, indent=1))


def load_model(path) -> CsgeModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file is not valid JSON: {exc.msg}", line=exc.lineno) from None
    return model_from_dict(doc)

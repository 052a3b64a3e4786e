"""On-disk formats: per-view CSV with a manifest, mask files, experiment configs.

A dataset directory holds one CSV per view (first column the sample id, then
one column per feature), a ``labels.csv`` with ``id,label`` rows, and an INI
manifest::

    [dataset]
    id_column = id
    label_column = label
    labels = labels.csv
    informative = informative.txt   ; optional ground truth mask file

    [views]
    view1 = view1.csv
    view2 = view2.csv

Mask files list one view per line, ``view: feature, feature, ...``; a view
with nothing selected is written as ``view:``.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .data import MultiViewDataset
from .search import NicheConfig
from .variation import VariationConfig


class DataFormatError(ValueError):
    """Malformed or inconsistent input files."""


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the field."""


# --------------------------------------------------------------------------
# Multi-view CSV


def _fmt_float(x: float) -> str:
    return repr(float(x))


def write_multiview_csv(dataset: MultiViewDataset, out_dir, informative: bool = True) -> Path:
    """Export a dataset in the manifest layout; returns the manifest path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ids = dataset.sample_ids
    class_names = dataset.class_names or [str(c) for c in range(dataset.n_classes)]
    for name, X, feats in zip(dataset.view_names, dataset.views, dataset.feature_names):
        with open(out / f"{name}.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["id", *feats])
            for sid, row in zip(ids, X):
                w.writerow([sid, *map(_fmt_float, row)])
    with open(out / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label"])
        for sid, lab in zip(ids, dataset.labels):
            w.writerow([sid, class_names[lab]])
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp["dataset"] = {"id_column": "id", "label_column": "label", "labels": "labels.csv"}
    if informative and dataset.informative_masks is not None:
        write_mask_file(out / "informative.txt", dataset, dataset.informative_mask)
        cp["dataset"]["informative"] = "informative.txt"
    cp["views"] = {name: f"{name}.csv" for name in dataset.view_names}
    manifest = out / "manifest.ini"
    with open(manifest, "w", encoding="utf-8") as fh:
        cp.write(fh)
    return manifest


def _read_table(path: Path, id_column: str):
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot open {path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: file is empty") from None
        if id_column not in header:
            raise DataFormatError(f"{path}:1: id column {id_column!r} not in header")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(f"{path}:{line_no}: expected {len(header)} cells, found {len(row)}")
            rows.append((line_no, row))
    return header, rows


def load_multiview_csv(manifest_path) -> MultiViewDataset:
    """Read a dataset described by an INI manifest.

    Rows are aligned on the id column; the label file defines the sample
    order. Labels are mapped to ``0..C-1`` in sorted order (numerically when
    all labels are numbers).

    Raises:
        DataFormatError: Missing files or ids, ragged rows, non-numeric cells
            or empty labels, with file and line in the message.
    """
    manifest_path = Path(manifest_path)
    cp = configparser.ConfigParser()
    cp.optionxform = str
    try:
        with open(manifest_path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except OSError as exc:
        raise DataFormatError(f"cannot open manifest {manifest_path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise DataFormatError(f"{manifest_path}: {exc}") from None
    if "dataset" not in cp or "views" not in cp:
        raise DataFormatError(f"{manifest_path}: needs [dataset] and [views] sections")
    meta = cp["dataset"]
    id_col = meta.get("id_column", "id")
    label_col = meta.get("label_column", "label")
    base = manifest_path.parent
    if "labels" not in meta:
        raise DataFormatError(f"{manifest_path}: [dataset] lacks a 'labels' entry")
    label_path = base / meta["labels"]
    header, rows = _read_table(label_path, id_col)
    if label_col not in header:
        raise DataFormatError(f"{label_path}:1: label column {label_col!r} not in header")
    id_at, lab_at = header.index(id_col), header.index(label_col)
    ids, raw_labels, seen = [], [], set()
    for line_no, row in rows:
        sid, lab = row[id_at].strip(), row[lab_at].strip()
        if not lab:
            raise DataFormatError(f"{label_path}:{line_no}: empty label for id {sid!r}")
        if sid in seen:
            raise DataFormatError(f"{label_path}:{line_no}: duplicate id {sid!r}")
        seen.add(sid)
        ids.append(sid)
        raw_labels.append(lab)
    if not ids:
        raise DataFormatError(f"{label_path}: no labelled samples")
    try:
        classes = sorted(set(raw_labels), key=float)
    except ValueError:
        classes = sorted(set(raw_labels))
    code = {c: i for i, c in enumerate(classes)}
    labels = np.array([code[lab] for lab in raw_labels])

    views, names, feats = [], [], []
    for name, rel in cp["views"].items():
        path = base / rel
        header, rows = _read_table(path, id_col)
        id_at = header.index(id_col)
        cols = [j for j in range(len(header)) if j != id_at]
        by_id = {}
        for line_no, row in rows:
            sid = row[id_at].strip()
            if sid in by_id:
                raise DataFormatError(f"{path}:{line_no}: duplicate id {sid!r}")
            try:
                by_id[sid] = [float(row[j]) for j in cols]
            except ValueError:
                bad = next(j for j in cols if not _is_float(row[j]))
                raise DataFormatError(
                    f"{path}:{line_no}: non-numeric value {row[bad]!r} in column {header[bad]!r}"
                ) from None
        missing = [sid for sid in ids if sid not in by_id]
        if missing:
            raise DataFormatError(f"{path}: id {missing[0]!r} has a label but no row in view {name!r}")
        extra = sorted(set(by_id) - seen)
        if extra:
            raise DataFormatError(f"{path}: id {extra[0]!r} has no label")
        X = np.array([by_id[sid] for sid in ids], dtype=float).reshape(len(ids), len(cols))
        if not np.all(np.isfinite(X)):
            raise DataFormatError(f"{path}: non-finite values")
        views.append(X)
        names.append(name)
        feats.append([header[j] for j in cols])
    if not views:
        raise DataFormatError(f"{manifest_path}: [views] lists no files")
    ds = MultiViewDataset(
        views=views,
        labels=labels,
        n_classes=len(classes),
        view_names=names,
        feature_names=feats,
        sample_ids=ids,
        class_names=classes,
    )
    if "informative" in meta:
        mask = read_mask_file(base / meta["informative"], ds)
        ds.informative_masks = ds.split_mask(mask)
    return ds


def _is_float(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


# --------------------------------------------------------------------------
# Mask files


def write_mask_file(path, dataset: MultiViewDataset, mask) -> None:
    """Write ``view: feat, feat`` lines for a global mask."""
    lines = []
    for name, feats, m in zip(dataset.view_names, dataset.feature_names, dataset.split_mask(mask)):
        chosen = [feats[j] for j in np.flatnonzero(m)]
        lines.append(f"{name}: {', '.join(chosen)}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_mask_file(path, dataset: MultiViewDataset) -> np.ndarray:
    """Parse a mask file against a dataset's view and feature names.

    Views absent from the file select nothing.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataFormatError(f"cannot open mask file {path}: {exc.strerror}") from None
    masks = {name: np.zeros(k, dtype=bool) for name, k in zip(dataset.view_names, dataset.view_dims)}
    index = {name: {f: j for j, f in enumerate(feats)} for name, feats in zip(dataset.view_names, dataset.feature_names)}
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if ":" not in line:
            raise DataFormatError(f"{path}:{line_no}: expected 'view: feature, ...'")
        view, _, rest = line.partition(":")
        view = view.strip()
        if view not in masks:
            raise DataFormatError(f"{path}:{line_no}: unknown view {view!r}")
        for feat in filter(None, (f.strip() for f in rest.split(","))):
            if feat not in index[view]:
                raise DataFormatError(f"{path}:{line_no}: view {view!r} has no feature {feat!r}")
            masks[view][index[view][feat]] = True
    return np.concatenate([masks[name] for name in dataset.view_names])


# --------------------------------------------------------------------------
# Experiment configuration


@dataclass
class ExperimentConfig:
    """Everything needed to reproduce one run.

    Exactly one data source is set: ``task`` (synthetic) or ``manifest``.
    """

    search: NicheConfig
    preset: str = "desk"
    task: Optional[str] = None
    data_seed: int = 0
    view_dim: int = 500
    manifest: Optional[str] = None
    test_manifest: Optional[str] = None
    out_dir: str = "mmfs_out"
    source_path: Optional[str] = None
    extra: dict = field(default_factory=dict)

    @property
    def seed(self) -> int:
        return self.search.seed

    def as_dict(self) -> dict:
        search = asdict(self.search)
        return {
            "preset": self.preset,
            "task": self.task,
            "data_seed": self.data_seed,
            "view_dim": self.view_dim,
            "manifest": self.manifest,
            "test_manifest": self.test_manifest,
            "search": search,
        }

    def digest(self) -> str:
        """SHA-256 of the canonical configuration (output paths excluded)."""
        blob = json.dumps(self.as_dict(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


_INT_FIELDS = {"n_niches", "ivfs_pop", "ivfs_gen", "bvfs_pop", "bvfs_gen", "migration_interval", "n_folds", "threads"}
_FLOAT_FIELDS = {"migration_fraction", "similarity_threshold", "repair_prob", "init_density"}
_VARIATION_KEYS = {f.name for f in fields(VariationConfig)}


def _parse_value(section: str, key: str, raw: str, kind):
    try:
        if raw.strip().lower() in ("", "none", "auto"):
            return None
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot read {raw!r} as {kind.__name__}") from None


def load_experiment_config(
    path=None,
    preset: Optional[str] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> ExperimentConfig:
    """Read an INI experiment config; command-line values override the file.

    Sections: ``[data]`` (task, data_seed, view_dim, manifest,
    test_manifest), ``[search]`` (preset, seed and any :class:`NicheConfig`
    field), ``[ivfs_variation]`` / ``[bvfs_variation]`` (operator
    probabilities) and ``[output]`` (dir).
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    base = Path(".")
    if path is not None:
        path = Path(path)
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        base = path.parent
    known = {"data", "search", "ivfs_variation", "bvfs_variation", "output"}
    unknown = [s for s in cp.sections() if s not in known]
    if unknown:
        raise ConfigError(f"unknown section [{unknown[0]}]")

    data = cp["data"] if cp.has_section("data") else {}
    task = data.get("task") or None
    manifest = data.get("manifest") or None
    if (task is None) == (manifest is None):
        raise ConfigError("[data] needs exactly one of 'task' (synthetic) or 'manifest'")
    if task is not None and task not in ("binary", "four_class"):
        raise ConfigError(f"[data] task: expected 'binary' or 'four_class', got {task!r}")
    for key in data:
        if key not in ("task", "manifest", "test_manifest", "data_seed", "view_dim"):
            raise ConfigError(f"[data] unknown key {key!r}")
    data_seed = _parse_value("data", "data_seed", data.get("data_seed", "0"), int)
    view_dim = _parse_value("data", "view_dim", data.get("view_dim", "500"), int)
    test_manifest = data.get("test_manifest") or None

    def resolve(p):
        if p is None:
            return None
        return str(p if os.path.isabs(p) else (base / p))

    search_sec = dict(cp["search"]) if cp.has_section("search") else {}
    preset = preset or search_sec.pop("preset", "desk")
    search_sec.pop("preset", None)
    if preset not in ("paper", "desk"):
        raise ConfigError(f"[search] preset: expected 'paper' or 'desk', got {preset!r}")
    file_seed = _parse_value("search", "seed", search_sec.pop("seed", "0"), int)
    overrides = {}
    for key, raw in search_sec.items():
        if key in _INT_FIELDS:
            overrides[key] = _parse_value("search", key, raw, int)
        elif key in _FLOAT_FIELDS:
            overrides[key] = _parse_value("search", key, raw, float)
        else:
            raise ConfigError(f"[search] unknown key {key!r}")
    for sec in ("ivfs_variation", "bvfs_variation"):
        if not cp.has_section(sec):
            continue
        values = {}
        for key, raw in cp[sec].items():
            if key not in _VARIATION_KEYS:
                raise ConfigError(f"[{sec}] unknown key {key!r}")
            values[key] = _parse_value(sec, key, raw, float)
            if values[key] is None and key != "per_gene_flip_prob":
                raise ConfigError(f"[{sec}] {key}: a number is required")
        default = VariationConfig(0.2, 0.1) if sec == "ivfs_variation" else VariationConfig(0.5, 0.1)
        try:
            overrides[sec] = replace(default, **values)
        except ValueError as exc:
            raise ConfigError(f"[{sec}] {exc}") from None
    if threads is not None:
        overrides["threads"] = threads
    try:
        search = NicheConfig.preset(preset, seed if seed is not None else file_seed, **overrides)
    except ValueError as exc:
        raise ConfigError(f"[search] {exc}") from None
    out = out_dir or (cp["output"].get("dir") if cp.has_section("output") else None) or "mmfs_out"
    return ExperimentConfig(
        search=search,
        preset=preset,
        task=task,
        data_seed=data_seed,
        view_dim=view_dim,
        manifest=resolve(manifest),
        test_manifest=resolve(test_manifest),
        out_dir=str(out),
        source_path=None if path is None else str(path),
    )


def write_experiment_config(cfg: ExperimentConfig, path) -> None:
    """Write a config that :func:`load_experiment_config` reads back."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    data = {"data_seed": str(cfg.data_seed), "view_dim": str(cfg.view_dim)}
    if cfg.task:
        data["task"] = cfg.task
    if cfg.manifest:
        data["manifest"] = cfg.manifest
    if cfg.test_manifest:
        data["test_manifest"] = cfg.test_manifest
    cp["data"] = data
    s = cfg.search
    search = {"preset": cfg.preset, "seed": str(s.seed)}
    for name in sorted(_INT_FIELDS | _FLOAT_FIELDS):
        value = getattr(s, name)
        search[name] = "none" if value is None else str(value)
    cp["search"] = search
    for sec in ("ivfs_variation", "bvfs_variation"):
        v = getattr(s, sec)
        cp[sec] = {k: "none" if getattr(v, k) is None else str(getattr(v, k)) for k in sorted(_VARIATION_KEYS)}
    cp["output"] = {"dir": cfg.out_dir}
    with open(path, "w", encoding="utf-8") as fh:
        cp.write(fh)


def write_json(path, payload) -> None:
    def default(o):
        if isinstance(o, np.generic):
            return o.item()
        if isinstance(o, np.ndarray):
            return o.tolist()
        return str(o)

    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=default) + "\n", encoding="utf-8")


def table_rows(accuracies: Sequence[float], labels: Optional[Sequence[str]] = None) -> str:
    """Per-experiment accuracy rows plus a ``Mean`` row (mean ± population std)."""
    acc = np.asarray(accuracies, dtype=float)
    labels = labels or [f"Experiment {i + 1}" for i in range(acc.size)]
    lines = ["experiment,accuracy"]
    lines += [f"{lab},{a:.2f}" for lab, a in zip(labels, acc)]
    if acc.size:
        lines.append(f"Mean,{acc.mean():.2f} ± {acc.std():.3f}")
    return "\n".join(lines) + "\n"

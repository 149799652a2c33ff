"""Synthetic identity data and the plain-text feature file format.

Feature files are UTF-8 text: a ``dim=<D>`` header, then one sample per
line as ``label,v_1,...,v_D``. Floats are written with ``repr`` so a
save/load cycle is exact.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import BadSpec, DimInconsistent, ParseError


@dataclass(frozen=True)
class SyntheticSpec:
    num_ids: int = 100
    samples_per_id: int = 10
    input_dim: int = 64
    cluster_spread: float = 0.3
    seed: int = 0
    query_per_id: int = 2
    gallery_per_id: int = 2

    def validate(self):
        if self.num_ids < 2:
            raise BadSpec("need at least 2 identities")
        if self.samples_per_id < 2:
            raise BadSpec("need at least 2 samples per identity")
        if self.input_dim < 1 or self.cluster_spread < 0:
            raise BadSpec("input_dim must be >= 1 and cluster_spread >= 0")
        if self.query_per_id < 1 or self.gallery_per_id < 1:
            raise BadSpec("need at least one query and one gallery sample per identity")
        if self.query_per_id + self.gallery_per_id > self.samples_per_id:
            raise BadSpec("query + gallery samples exceed samples_per_id")


@dataclass
class FeatureSet:
    x: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
        if self.x.shape[0] != self.labels.shape[0]:
            raise DimInconsistent(f"{self.x.shape[0]} rows but {self.labels.shape[0]} labels")

    @property
    def dim(self):
        return self.x.shape[1]

    def __len__(self):
        return self.x.shape[0]


@dataclass
class Dataset:
    train: FeatureSet
    query: FeatureSet
    gallery: FeatureSet
    num_ids: int

    @property
    def input_dim(self):
        return self.train.dim


def generate_synthetic(spec):
    """Identity centroids uniform on the sphere of radius sqrt(input_dim)
    (unit per-coordinate scale) plus isotropic Gaussian within-id noise.
    Each identity's samples are shuffled and split into query, gallery and
    train, in that order."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    d = spec.input_dim
    centroids = rng.standard_normal((spec.num_ids, d))
    centroids *= math.sqrt(d) / np.linalg.norm(centroids, axis=1, keepdims=True)
    parts = {"train": ([], []), "query": ([], []), "gallery": ([], [])}
    for ident in range(spec.num_ids):
        samples = centroids[ident] + spec.cluster_spread * rng.standard_normal((spec.samples_per_id, d))
        samples = samples[rng.permutation(spec.samples_per_id)]
        nq, ng = spec.query_per_id, spec.gallery_per_id
        for name, chunk in (("query", samples[:nq]), ("gallery", samples[nq:nq + ng]),
                            ("train", samples[nq + ng:])):
            parts[name][0].append(chunk)
            parts[name][1].append(np.full(len(chunk), ident))
    sets = {k: FeatureSet(np.concatenate(v[0]).reshape(-1, d), np.concatenate(v[1])) for k, v in parts.items()}
    return Dataset(sets["train"], sets["query"], sets["gallery"], spec.num_ids)


def save_features(path, features):
    lines = [f"dim={features.dim}"]
    for label, row in zip(features.labels.tolist(), features.x.tolist()):
        lines.append(",".join([str(label)] + [repr(v) for v in row]))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_features(path):
    with open(path, encoding="utf-8") as f:
        header = f.readline().strip()
        if not header.startswith("dim="):
            raise ParseError(f"expected 'dim=<D>' header, got {header!r}", line=1)
        try:
            dim = int(header[4:])
        except ValueError:
            raise ParseError(f"bad dimension in header {header!r}", line=1) from None
        labels, rows = [], []
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if len(fields) != dim + 1:
                raise DimInconsistent(f"line {lineno}: expected {dim} values, got {len(fields) - 1}")
            try:
                labels.append(int(fields[0]))
                rows.append([float(v) for v in fields[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
    x = np.array(rows, dtype=np.float64).reshape(-1, dim)
    return FeatureSet(x, np.array(labels, dtype=np.int64))


def save_dataset(directory, dataset):
    os.makedirs(directory, exist_ok=True)
    for name in ("train", "query", "gallery"):
        save_features(os.path.join(directory, f"{name}.txt"), getattr(dataset, name))


def load_dataset(directory):
    sets = {name: load_features(os.path.join(directory, f"{name}.txt")) for name in ("train", "query", "gallery")}
    dims = {s.dim for s in sets.values()}
    if len(dims) != 1:
        raise DimInconsistent(f"split files disagree on dimension: {sorted(dims)}")
    labels = np.concatenate([s.labels for s in sets.values()])
    return Dataset(sets["train"], sets["query"], sets["gallery"], int(labels.max()) + 1)

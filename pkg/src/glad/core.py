"""Shared domain types, seeded randomness and normalization helpers."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

STD_FLOOR = 1e-8


class DegenerateNodeError(ValueError):
    """A node has too few observed points to compute statistics."""


class SplitError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Panel:
    """Node x time matrix of observations.

    ``values`` and ``mask`` (True = observed) have shape ``(n_nodes, T)``.
    ``labels`` is optional and marks anomalous positions.
    """

    node_ids: tuple
    timestamps: np.ndarray
    values: np.ndarray
    mask: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        node_ids = tuple(str(n) for n in self.node_ids)
        object.__setattr__(self, "node_ids", node_ids)
        values = np.array(self.values, dtype=float, ndmin=2)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != mask.shape:
            raise ValueError(f"mask shape {mask.shape} != values shape {values.shape}")
        if values.shape[0] != len(node_ids):
            raise ValueError(f"{len(node_ids)} node ids for {values.shape[0]} rows")
        if len(set(node_ids)) != len(node_ids):
            raise ValueError("node ids must be unique")
        if ts.shape != (values.shape[1],):
            raise ValueError(f"{ts.shape[0]} timestamps for {values.shape[1]} columns")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=bool)
            if labels.shape != values.shape:
                raise ValueError(f"labels shape {labels.shape} != values shape {values.shape}")
            if np.any(labels & ~mask):
                raise ValueError("anomaly labels on unobserved positions")
            labels.setflags(write=False)
        for arr in (values, ts, mask):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "labels", labels)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    def label_matrix(self) -> np.ndarray:
        if self.labels is None:
            return np.zeros(self.values.shape, dtype=bool)
        return self.labels

    def with_values(self, values, labels=None, mask=None) -> "Panel":
        return replace(
            self,
            values=values,
            labels=self.labels if labels is None else labels,
            mask=self.mask if mask is None else mask,
        )

    def filled_values(self) -> np.ndarray:
        """Values with gaps filled by last observation carried forward.

        Leading gaps take the first observed value; fully unobserved nodes become 0.
        """
        out = np.array(self.values, dtype=float)
        for i in range(self.n_nodes):
            obs = np.flatnonzero(self.mask[i])
            if obs.size == 0:
                out[i] = 0.0
                continue
            idx = np.maximum.accumulate(np.where(self.mask[i], np.arange(self.T), -1))
            idx[idx < 0] = obs[0]
            out[i] = out[i, idx]
        return out

    def subset(self, nodes: Sequence[int]) -> "Panel":
        nodes = list(nodes)
        return Panel(
            node_ids=tuple(self.node_ids[i] for i in nodes),
            timestamps=self.timestamps,
            values=self.values[nodes],
            mask=self.mask[nodes],
            labels=None if self.labels is None else self.labels[nodes],
        )


class SeededRng:
    """PCG64 stream keyed by a 64-bit seed.

    numpy's PCG64 bit generator gives identical streams on every platform.
    Parallel workers should call :meth:`child` rather than share an instance.
    """

    algorithm = "PCG64"

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.generator = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, index: int) -> "SeededRng":
        return SeededRng(derive_seed(self.seed, index))

    def __getattr__(self, name):
        return getattr(self.generator, name)


def derive_seed(seed: int, *keys) -> int:
    """Stable 64-bit hash of a parent seed and arbitrary keys."""
    h = hashlib.sha256(repr((int(seed),) + tuple(keys)).encode()).digest()
    return int.from_bytes(h[:8], "little")


@dataclass(frozen=True, eq=False)
class NormalizationParams:
    mean: np.ndarray
    std: np.ndarray
    eps: float = field(default=STD_FLOOR)

    def normalize(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean[:, None]) / self.std[:, None]

    def denormalize(self, values: np.ndarray) -> np.ndarray:
        return values * self.std[:, None] + self.mean[:, None]


def normalize_panel(panel: Panel, train_end: int) -> tuple[Panel, NormalizationParams]:
    """Z-score each node with population moments of its observed training values."""
    n = panel.n_nodes
    mean = np.empty(n)
    std = np.empty(n)
    for i in range(n):
        obs = panel.values[i, :train_end][panel.mask[i, :train_end]]
        if obs.size < 2:
            raise DegenerateNodeError(
                f"node {panel.node_ids[i]!r} has {obs.size} observed training points (need >= 2)"
            )
        mean[i] = obs.mean()
        std[i] = obs.std()
    std = np.where(std > 0, std, STD_FLOOR)
    params = NormalizationParams(mean=mean, std=std)
    return panel.with_values(params.normalize(panel.values)), params


def split_panel(panel, train_frac: float, val_frac: float) -> tuple[range, range, range]:
    """Contiguous train/val/test ranges covering ``[0, T)``.

    ``panel`` may be a :class:`Panel` or the series length itself.
    """
    T = panel.T if isinstance(panel, Panel) else int(panel)
    if train_frac <= 0 or val_frac <= 0 or train_frac + val_frac >= 1:
        raise SplitError(f"invalid fractions train={train_frac} val={val_frac}")
    a = int(round(T * train_frac))
    b = int(round(T * (train_frac + val_frac)))
    ranges = (range(0, a), range(a, b), range(b, T))
    for name, r in zip(("train", "val", "test"), ranges):
        if len(r) == 0:
            raise SplitError(f"{name} range is empty for T={T}, fractions {train_frac}/{val_frac}")
    return ranges


@dataclass(frozen=True, eq=False)
class ForecastSet:
    """One-step-ahead forecasts for every node over ``[start, stop)``.

    ``half_widths`` (optional, same shape as ``values``) are prediction
    interval half-widths in the same units as the forecasts.
    """

    start: int
    values: np.ndarray
    half_widths: Optional[np.ndarray] = None

    @property
    def stop(self) -> int:
        return self.start + self.values.shape[1]

    @property
    def range(self) -> range:
        return range(self.start, self.stop)

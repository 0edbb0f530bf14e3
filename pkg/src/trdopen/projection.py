"""Orthogonal mean-projections of TRD cubes and plane standardization."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

PLANES = ("f_rd", "f_td", "f_tr")
STD_FLOOR = 1e-8


@dataclass(frozen=True)
class ProjectionTriple:
    f_rd: np.ndarray  # (M, N): collapsed over time
    f_td: np.ndarray  # (T, N): collapsed over range
    f_tr: np.ndarray  # (T, M): collapsed over Doppler

    def planes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return (self.f_rd, self.f_td, self.f_tr)


def orthogonal_project(cube) -> ProjectionTriple:
    """Average a ``(T, M, N)`` cube along each axis in turn."""
    cube = np.asarray(cube, dtype=np.float64)
    if cube.ndim != 3:
        raise ValueError(f"expected a 3D cube, got shape {cube.shape}")
    return ProjectionTriple(cube.mean(axis=0), cube.mean(axis=1), cube.mean(axis=2))


@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("NormStats.std must be positive")


def fit_norm_stats(triples: Iterable[ProjectionTriple]) -> tuple[NormStats, NormStats, NormStats]:
    """Population mean/std per plane over every value of every training triple."""
    triples = list(triples)
    if not triples:
        raise ValueError("cannot fit normalization on an empty collection")
    return tuple(plane_stats([t.planes()[i] for t in triples]) for i in range(3))


def plane_stats(planes: Sequence[np.ndarray]) -> NormStats:
    """Mean/std over all values of a stack of same-kind planes."""
    if len(planes) == 0:
        raise ValueError("cannot fit normalization on an empty collection")
    values = np.concatenate([np.ravel(p) for p in planes])
    return NormStats(float(values.mean()), max(float(values.std()), STD_FLOOR))


def normalize(triple: ProjectionTriple, stats: Sequence[NormStats]) -> ProjectionTriple:
    return ProjectionTriple(*[(p - s.mean) / s.std for p, s in zip(triple.planes(), stats)])


def denormalize(triple: ProjectionTriple, stats: Sequence[NormStats]) -> ProjectionTriple:
    return ProjectionTriple(*[p * s.std + s.mean for p, s in zip(triple.planes(), stats)])

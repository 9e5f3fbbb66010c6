"""PCA fitting, projection, and the PCA1 model file format.

Fitting goes through the d x d covariance matrix (two streaming passes:
mean, then centered second moments) instead of an SVD of the sample, so
a 500K x 768 fitting sample never has to be resident.  Eigenvectors come
from a symmetric eigendecomposition of the covariance; each component's
sign is fixed so its largest-magnitude entry is positive, which makes
fits reproducible across runs and platforms.

PCA1 file layout (little-endian): magic "PCA1", version u16, in_dims
u32, out_dims u32, then mean[in_dims], components[out_dims x in_dims]
row-major, explained_variance[out_dims], all float32.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from .embeddings import as_matrix
from .errors import (
    BadMagic,
    DegenerateSample,
    DimsMismatch,
    NonFiniteInput,
    TruncatedFile,
    VersionMismatch,
)

MAGIC = b"PCA1"
VERSION = 1
_HEADER_STRUCT = struct.Struct("<4sHII")

DEFAULT_IN_DIMS = 768
DEFAULT_OUT_DIMS = 32
DEFAULT_FIT_SAMPLE = 500_000


@dataclass
class PcaModel:
    """Mean vector, orthonormal component rows, per-component variance."""

    in_dims: int
    out_dims: int
    mean: np.ndarray                # float32[in_dims]
    components: np.ndarray          # float32[out_dims, in_dims], rows = principal axes
    explained_variance: np.ndarray  # float32[out_dims], non-increasing


def _finish_fit(mean64: np.ndarray, cov: np.ndarray, out_dims: int) -> PcaModel:
    in_dims = mean64.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:out_dims]
    evals = np.clip(evals[order], 0.0, None)
    comps = evecs[:, order].T.copy()
    # canonical sign: largest-magnitude entry of each axis is positive
    flip = comps[np.arange(out_dims), np.abs(comps).argmax(axis=1)] < 0
    comps[flip] *= -1.0
    return PcaModel(
        in_dims=in_dims,
        out_dims=out_dims,
        mean=mean64.astype(np.float32),
        components=comps.astype(np.float32),
        explained_variance=evals.astype(np.float32),
    )


def fit_pca_stream(make_chunks: Callable[[], Iterable[np.ndarray]], out_dims: int) -> PcaModel:
    """Fit from a re-iterable chunk stream (two passes, float64 accumulation)."""
    rows = 0
    total = None
    in_dims = None
    for chunk in make_chunks():
        arr = as_matrix(chunk)
        if in_dims is None:
            in_dims = arr.shape[1]
            total = np.zeros(in_dims, dtype=np.float64)
        elif arr.shape[1] != in_dims:
            raise DimsMismatch("chunk width changed mid-stream")
        total += arr.sum(axis=0, dtype=np.float64)
        rows += arr.shape[0]
    if in_dims is None or rows == 0:
        raise DegenerateSample("empty fitting sample")
    if out_dims < 1 or out_dims > in_dims:
        raise ValueError(f"out_dims must be in [1, {in_dims}], got {out_dims}")
    if rows < out_dims:
        raise DegenerateSample(f"{rows} sample rows < {out_dims} components")
    mean = total / rows

    scatter = np.zeros((in_dims, in_dims), dtype=np.float64)
    for chunk in make_chunks():
        centered = as_matrix(chunk).astype(np.float64) - mean
        scatter += centered.T @ centered
    cov = scatter / (rows - 1) if rows > 1 else scatter
    return _finish_fit(mean, cov, out_dims)


def fit_pca(sample, out_dims: int) -> PcaModel:
    """Fit a PCA model on an in-memory sample matrix.

    Sample covariance uses the n-1 divisor.  Raises DegenerateSample
    when rows < out_dims and NonFiniteInput on NaN/Inf.
    """
    arr = as_matrix(sample)
    return fit_pca_stream(lambda: [arr], out_dims)


def transform(matrix, model: PcaModel) -> np.ndarray:
    """Project rows: x -> components @ (x - mean)."""
    arr = as_matrix(matrix)
    if arr.shape[1] != model.in_dims:
        raise DimsMismatch(
            f"matrix has {arr.shape[1]} dims, model expects {model.in_dims}"
        )
    return (arr - model.mean) @ model.components.T


def save_pca(model: PcaModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER_STRUCT.pack(MAGIC, VERSION, model.in_dims, model.out_dims))
        fh.write(model.mean.astype("<f4").tobytes())
        fh.write(np.ascontiguousarray(model.components, dtype="<f4").tobytes())
        fh.write(model.explained_variance.astype("<f4").tobytes())


def load_pca(path) -> PcaModel:
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER_STRUCT.size)
        if len(raw) < _HEADER_STRUCT.size:
            raise BadMagic(f"{path}: file too short for a PCA1 header")
        magic, version, in_dims, out_dims = _HEADER_STRUCT.unpack(raw)
        if magic != MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise VersionMismatch(f"{path}: unsupported PCA1 version {version}")
        expected = (in_dims + out_dims * in_dims + out_dims) * 4
        payload = fh.read()
        if len(payload) != expected:
            raise TruncatedFile(path, _HEADER_STRUCT.size + expected,
                                _HEADER_STRUCT.size + len(payload))
    flat = np.frombuffer(payload, dtype="<f4")
    mean = flat[:in_dims].copy()
    comps = flat[in_dims:in_dims + out_dims * in_dims].reshape(out_dims, in_dims).copy()
    ev = flat[in_dims + out_dims * in_dims:].copy()
    return PcaModel(in_dims, out_dims, mean, comps, ev)

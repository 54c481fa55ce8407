"""Measurement-matrix ensembles, a small linear-operator abstraction, and the
SVD-based whitening / Gaussianizing transforms.

Normalization convention: row-orthonormal ensembles (sub-sampled DCT,
Hadamard, whitened operators) satisfy ``Phi Phi^T = I``; i.i.d. ensembles
have entry variance ``1/n`` so that ``Phi Phi^T ~ I`` as well.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import fft

MAX_DENSE = 8192
CONDITION_LIMIT = 1e12
ACTIVATIONS = {
    "relu": lambda a: np.maximum(a, 0.0),
    "sign": np.sign,
    "tanh": np.tanh,
}


class DegenerateSpectrumError(ValueError):
    """Raised when a singular value is too small to invert."""


@dataclass(frozen=True)
class SvdBundle:
    """Thin SVD ``Phi = U diag(s) Vt`` with ``s`` nonincreasing.

    ``U`` is ``m x m``; ``Vt`` holds the ``min(m, n)`` right singular vectors
    as rows.
    """

    U: np.ndarray
    s: np.ndarray
    Vt: np.ndarray


@dataclass(eq=False)
class MeasurementOperator:
    """An ``m x n`` linear map with forward and adjoint application.

    ``dense`` is optional; operators backed by a fast transform materialize
    it lazily through :attr:`dense_view`.  ``row_orthonormal`` marks operators
    with ``Phi Phi^T = I``, for which the SVD is known without computation.
    """

    m: int
    n: int
    matvec: Callable[[np.ndarray], np.ndarray]
    rmatvec: Callable[[np.ndarray], np.ndarray]
    tag: str
    seed: int | None = None
    dense: np.ndarray | None = None
    row_orthonormal: bool = False
    _svd: SvdBundle | None = field(default=None, repr=False)

    @classmethod
    def from_dense(cls, A, tag, seed=None, row_orthonormal=False, svd=None):
        A = np.ascontiguousarray(A, dtype=float)
        A.setflags(write=False)
        return cls(A.shape[0], A.shape[1], A.__matmul__, A.T.__matmul__, tag,
                   seed=seed, dense=A, row_orthonormal=row_orthonormal, _svd=svd)

    @property
    def alpha(self) -> float:
        return self.m / self.n

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected a vector of length {self.n}, got shape {x.shape}")
        return self.matvec(x)

    def apply_adjoint(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape != (self.m,):
            raise ValueError(f"expected a vector of length {self.m}, got shape {y.shape}")
        return self.rmatvec(y)

    @property
    def dense_view(self) -> np.ndarray:
        if self.dense is None:
            if self.n > MAX_DENSE:
                raise ValueError(f"refusing to materialize a {self.m}x{self.n} operator")
            cols = [self.matvec(e) for e in np.eye(self.n)]
            dense = np.ascontiguousarray(np.column_stack(cols))
            dense.setflags(write=False)
            self.dense = dense
        return self.dense

    def svd(self) -> SvdBundle:
        """Thin SVD, computed once and cached."""
        if self._svd is None:
            if self.row_orthonormal:
                self._svd = SvdBundle(np.eye(self.m), np.ones(self.m), self.dense_view)
            else:
                # full U only matters (and is only square) when m > n
                U, s, Vt = np.linalg.svd(self.dense_view, full_matrices=self.m > self.n)
                self._svd = SvdBundle(U, s, Vt)
        return self._svd

    @property
    def singular_values(self) -> np.ndarray:
        if self.row_orthonormal:
            return np.ones(min(self.m, self.n))
        return self.svd().s

    def frobenius_sq(self) -> float:
        if self.row_orthonormal:
            return float(self.m)
        if self._svd is not None:
            return float(np.sum(self._svd.s ** 2))
        return float(np.sum(self.dense_view ** 2))


def _check_sizes(m, n):
    if int(m) != m or int(n) != n or m < 1 or n < 1:
        raise ValueError(f"matrix sizes must be positive integers, got {m}x{n}")
    if m * n > 2 ** 31:
        raise ValueError(f"{m}x{n} operator is too large")


def _check_power_of_two(n):
    if n < 1 or n & (n - 1):
        raise ValueError(f"n must be a power of two, got {n}")


def _sample_rows(rng, m, n):
    if m > n:
        raise ValueError(f"cannot sub-sample {m} rows from an order-{n} matrix")
    return np.sort(rng.choice(n, size=m, replace=False))


def haar_orthogonal(n, rng) -> np.ndarray:
    """Haar-distributed ``n x n`` orthogonal matrix (QR with sign fix)."""
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


def build_gaussian(m, n, seed) -> MeasurementOperator:
    _check_sizes(m, n)
    rng = np.random.default_rng(seed)
    return MeasurementOperator.from_dense(rng.standard_normal((m, n)) / np.sqrt(n), "gaussian", seed)


def dct_matrix(n) -> np.ndarray:
    """Orthonormal ``Y[j, k] = sqrt(2/n) eps_k cos(pi (2j + 1) k / (2n))``."""
    j = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    Y = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * j + 1) * k / (2 * n))
    Y[:, 0] /= np.sqrt(2.0)
    return Y


def build_subsampled_dct(m, n, seed) -> MeasurementOperator:
    """``m`` random rows of the orthonormal DCT matrix, applied in O(n log n).

    ``Y x`` is the orthonormal inverse DCT-II of ``x`` and ``Y^T y`` its
    forward transform.
    """
    _check_sizes(m, n)
    rng = np.random.default_rng(seed)
    rows = _sample_rows(rng, m, n)

    def matvec(x):
        return fft.idct(x, type=2, norm="ortho")[rows]

    def rmatvec(y):
        full = np.zeros(n)
        full[rows] = y
        return fft.dct(full, type=2, norm="ortho")

    return MeasurementOperator(m, n, matvec, rmatvec, "dct", seed=seed, row_orthonormal=True)


def fwht(x) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform in Sylvester (natural) order."""
    x = np.array(x, dtype=float)
    n = x.shape[0]
    _check_power_of_two(n)
    h = 1
    while h < n:
        x = x.reshape(-1, 2, h)
        x = np.stack((x[:, 0] + x[:, 1], x[:, 0] - x[:, 1]), axis=1)
        h *= 2
    return x.reshape(n)


def sylvester_hadamard(n) -> np.ndarray:
    _check_power_of_two(n)
    H = np.ones((1, 1))
    while H.shape[0] < n:
        H = np.block([[H, H], [H, -H]])
    return H


def build_hadamard(m, n, seed) -> MeasurementOperator:
    """``m`` random rows of ``H_n / sqrt(n)`` applied by the fast transform."""
    _check_sizes(m, n)
    _check_power_of_two(n)
    rng = np.random.default_rng(seed)
    rows = _sample_rows(rng, m, n)
    scale = 1.0 / np.sqrt(n)

    def matvec(x):
        return fwht(x)[rows] * scale

    def rmatvec(y):
        full = np.zeros(n)
        full[rows] = y
        return fwht(full) * scale

    return MeasurementOperator(m, n, matvec, rmatvec, "hadamard", seed=seed, row_orthonormal=True)


def build_random_features(m, n, activation, seed, standardize=False) -> MeasurementOperator:
    """Random features ``Phi = f(W X)``.

    ``W`` (``m x n``) has N(0, 1/n) entries and ``X`` (``n x n``) standard
    normal entries, so the pre-activations are approximately N(0, 1).
    """
    _check_sizes(m, n)
    try:
        f = ACTIVATIONS[activation]
    except KeyError:
        raise ValueError(f"unknown activation {activation!r}; choose from {sorted(ACTIVATIONS)}") from None
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((m, n)) / np.sqrt(n)
    X = rng.standard_normal((n, n))
    Phi = f(W @ X)
    if standardize:
        Phi = Phi - Phi.mean(axis=0)
        Phi = Phi / np.mean(np.linalg.norm(Phi, axis=0))
    return MeasurementOperator.from_dense(Phi, f"rfm-{activation}", seed)


def haar_wavelet_matrix(n) -> np.ndarray:
    """``W_2 = [[1, 1], [1, -1]]``, ``W_2k = [W_k kron [1, -1]; I_k kron [1, 1]]``."""
    _check_power_of_two(n)
    if n < 2:
        raise ValueError("Haar wavelet matrices start at order 2")
    W = np.array([[1.0, 1.0], [1.0, -1.0]])
    while W.shape[0] < n:
        k = W.shape[0]
        W = np.vstack((np.kron(W, [1.0, -1.0]), np.kron(np.eye(k), [1.0, 1.0])))
    return W


def build_haar_wavelet(m, n, seed, normalize_rows=False) -> MeasurementOperator:
    _check_sizes(m, n)
    _check_power_of_two(n)
    rng = np.random.default_rng(seed)
    rows = _sample_rows(rng, m, n)
    Phi = haar_wavelet_matrix(n)[rows]
    if normalize_rows:
        Phi = Phi / np.linalg.norm(Phi, axis=1, keepdims=True)
    else:
        Phi = Phi / np.sqrt(n)
    return MeasurementOperator.from_dense(Phi, "haar-wavelet", seed, row_orthonormal=normalize_rows)


def gaussian_singular_values(m, n, rng) -> np.ndarray:
    """Singular values of a fresh ``m x n`` N(0, 1/n) matrix (Marcenko-Pastur)."""
    return np.linalg.svd(rng.standard_normal((m, n)) / np.sqrt(n), compute_uv=False)


def build_rot_invariant(m, n, spectrum, seed) -> MeasurementOperator:
    """``Phi = U Sigma V`` with Haar ``U``, ``V`` and prescribed singular values.

    ``spectrum`` is an array of ``min(m, n)`` singular values, ``"gaussian"``
    (singular values of a fresh Gaussian matrix), ``"flat"`` (all ones), or a
    callable ``(rng, count) -> values``.
    """
    _check_sizes(m, n)
    rng = np.random.default_rng(seed)
    r = min(m, n)
    if isinstance(spectrum, str):
        if spectrum == "gaussian":
            s = gaussian_singular_values(m, n, rng)
        elif spectrum == "flat":
            s = np.ones(r)
        else:
            raise ValueError(f"unknown spectrum {spectrum!r}")
    elif callable(spectrum):
        s = np.asarray(spectrum(rng, r), dtype=float)
    else:
        s = np.asarray(spectrum, dtype=float)
    if s.shape != (r,):
        raise ValueError(f"need {r} singular values, got shape {s.shape}")
    if np.any(s < 0) or not np.all(np.isfinite(s)):
        raise ValueError("singular values must be finite and nonnegative")
    s = np.sort(s)[::-1]
    U = haar_orthogonal(m, rng)
    V = haar_orthogonal(n, rng)
    Phi = (U[:, :r] * s) @ V[:r]
    op = MeasurementOperator.from_dense(Phi, "rot-invariant", seed, svd=SvdBundle(U, s, V[:r]))
    return op


@dataclass(frozen=True)
class WhitenedProblem:
    operator: MeasurementOperator
    observations: np.ndarray


def whiten(op: MeasurementOperator, y) -> WhitenedProblem:
    """Map ``y = Phi x`` to ``Sigma^inv U^T y = V~ x`` (or ``V x`` when m > n)."""
    y = np.asarray(y, dtype=float)
    if y.shape != (op.m,):
        raise ValueError(f"observations must have length {op.m}")
    svd = op.svd()
    s = svd.s
    if s.size == 0 or s[-1] <= 0 or s[0] / s[-1] > CONDITION_LIMIT:
        raise DegenerateSpectrumError(
            f"degenerate spectrum: singular values span [{s[-1]:.3g}, {s[0]:.3g}]")
    r = s.size
    y_t = (svd.U.T @ y)[:r] / s
    operator = MeasurementOperator.from_dense(svd.Vt, f"whitened({op.tag})", op.seed, row_orthonormal=True)
    return WhitenedProblem(operator, y_t)


def gaussianize(wp: WhitenedProblem, seed) -> WhitenedProblem:
    """Multiply a whitened problem by ``U0 Sigma0 O`` drawn from a fresh
    Gaussian matrix, giving ``Phi' = U0 Sigma0 O V~`` and ``y' = U0 Sigma0 O y~``.

    ``O`` is an independent Haar rotation.  The whitened basis ``V~`` is only
    defined up to a rotation of its rows, and for a sub-sampled transform
    taken as is its rows are ordered by frequency; pairing them with the
    sorted ``Sigma0`` directly would weight low frequencies systematically.
    """
    op = wp.operator
    if not op.row_orthonormal or op.m > op.n:
        raise ValueError("gaussianize expects a row-orthonormal operator with m <= n")
    rng = np.random.default_rng(seed)
    s0 = gaussian_singular_values(op.m, op.n, rng)
    U0 = haar_orthogonal(op.m, rng)
    O = haar_orthogonal(op.m, rng)
    Vt = O @ op.dense_view
    Phi = (U0 * s0) @ Vt
    y = U0 @ (s0 * (O @ wp.observations))
    new = MeasurementOperator.from_dense(Phi, f"gaussianized({op.tag})", seed, svd=SvdBundle(U0, s0, Vt))
    return WhitenedProblem(new, y)


def stieltjes(eigenvalues, r, n=None) -> float:
    """Empirical Stieltjes transform ``mean(1 / (lambda - r))``.

    ``eigenvalues`` are those of ``Phi^T Phi``; when fewer than ``n`` are
    given the spectrum is padded with zeros.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if n is None:
        n = lam.size
    if lam.size > n:
        raise ValueError("more eigenvalues than the dimension n")
    zeros = n - lam.size
    lowest = min(lam.min(initial=np.inf), 0.0 if zeros else np.inf)
    if not r < lowest or abs(lowest - r) < 1e-14:
        raise ValueError(f"Stieltjes argument {r} is not below the spectrum (min {lowest})")
    return float((np.sum(1.0 / (lam - r)) + zeros / (0.0 - r)) / n)


HEADER = struct.Struct("<4sIII")
MAGIC = b"ULAB"


def export_matrix(op: MeasurementOperator, path) -> Path:
    """Write the dense matrix as little-endian float64 with a 16-byte header
    and a JSON sidecar (``<path>.json``)."""
    path = Path(path)
    A = np.asarray(op.dense_view, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, op.m, op.n, 0))
        fh.write(np.ascontiguousarray(A).tobytes())
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps({"ensemble_tag": op.tag, "seed": op.seed, "m": op.m, "n": op.n},
                                  indent=2, sort_keys=True))
    return path


def import_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, m, n, _ = HEADER.unpack(fh.read(HEADER.size))
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != m * n:
        raise ValueError(f"{path}: expected {m * n} values, found {data.size}")
    return data.reshape(m, n).astype(float)


def build_ensemble(name, m, n, seed, **options) -> MeasurementOperator:
    """Dispatch on an ensemble name such as ``"dct"`` or ``"rfm-tanh"``."""
    if name == "gaussian":
        return build_gaussian(m, n, seed)
    if name == "dct":
        return build_subsampled_dct(m, n, seed)
    if name == "hadamard":
        return build_hadamard(m, n, seed)
    if name.startswith("rfm-"):
        return build_random_features(m, n, name[4:], seed, standardize=options.get("standardize", False))
    if name == "haar-wavelet":
        return build_haar_wavelet(m, n, seed, normalize_rows=options.get("normalize_rows", False))
    if name == "rot-invariant":
        return build_rot_invariant(m, n, options.get("spectrum", "gaussian"), seed)
    raise ValueError(f"unknown ensemble {name!r}")


ENSEMBLES = ("gaussian", "dct", "hadamard", "rfm-relu", "rfm-sign", "rfm-tanh",
             "haar-wavelet", "rot-invariant")

"""Uniform linear array signal model and spatial smoothing.

Angles are electrical phase increments in radians: the steering vector of an
m-sensor array is a_m(theta) = (1/sqrt(m)) [1, e^{i theta}, ...,
e^{i (m-1) theta}]^T, so a full beamwidth is 2 pi / m.  No wavelength or
element-spacing layer exists here.

Spatial smoothing turns the M x N snapshot matrix into the block-Hankel
matrix of size (M - L + 1) x (N L) whose column block n stacks the L
length-(M - L + 1) sliding subarray views of snapshot n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "SIGNAL_POLICIES",
    "ArrayScenario",
    "SmoothedMatrix",
    "SnapshotMatrix",
    "block_hankel",
    "draw_signal_matrix",
    "hankelize",
    "signal_covariance",
    "signal_covariance_hadamard",
    "smoothed_signal_part",
    "smoothed_steering",
    "smoothed_steering_set",
    "steering_derivative",
    "steering_matrix",
    "steering_vector",
    "synthesize_snapshots",
]

SIGNAL_POLICIES = ("fixed-matrix", "random-gaussian-normalized", "identity-covariance")


@dataclass(frozen=True)
class ArrayScenario:
    """One synthetic-experiment configuration.

    Fields
    ------
    m, n, l : sensors, snapshots, smoothing factor (l = 1 means unsmoothed).
    doas : tuple of source angles in [-pi, pi), pairwise distinct.
    snr_db : 10 log10(1 / sigma2) with sigma2 the per-entry noise power.
    signal_policy : one of SIGNAL_POLICIES.
    seed : master seed for snapshot synthesis.
    """

    m: int
    n: int
    l: int
    doas: tuple
    snr_db: float
    signal_policy: str = "random-gaussian-normalized"
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "doas", tuple(float(t) for t in self.doas))
        if self.m < 1:
            raise ValueError(f"m must be a positive integer, got {self.m}")
        if self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if not 1 <= self.l < self.m:
            raise ValueError(f"smoothing factor must satisfy 1 <= l < m, got l={self.l}, m={self.m}")
        if self.signal_policy not in SIGNAL_POLICIES:
            raise ValueError(f"unknown signal policy {self.signal_policy!r}")
        k = len(self.doas)
        if k >= self.subarray_size:
            raise ValueError(
                f"need k < m - l + 1 for a noise subspace, got k={k}, m-l+1={self.subarray_size}"
            )
        if len(set(self.doas)) != k:
            raise ValueError("doas must be pairwise distinct")
        for t in self.doas:
            if not -math.pi <= t < math.pi:
                raise ValueError(f"doa {t} outside [-pi, pi)")
        if self.signal_policy == "identity-covariance" and k > self.n:
            raise ValueError(
                f"identity-covariance needs k <= n for rank k, got k={k}, n={self.n}"
            )
        if not math.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")
        if self.seed < 0:
            raise ValueError(f"seed must be a nonnegative integer, got {self.seed}")

    @property
    def k(self) -> int:
        return len(self.doas)

    @property
    def sigma2(self) -> float:
        return 10.0 ** (-self.snr_db / 10.0)

    @property
    def subarray_size(self) -> int:
        return self.m - self.l + 1

    @property
    def virtual_snapshots(self) -> int:
        return self.n * self.l

    @property
    def c_n(self) -> float:
        return self.subarray_size / self.virtual_snapshots

    @property
    def beamwidth(self) -> float:
        return 2.0 * math.pi / self.m


@dataclass(frozen=True)
class SnapshotMatrix:
    """Synthesized observations Y = A S + V with the two parts retained."""

    entries: np.ndarray
    signal_part: np.ndarray
    noise_part: np.ndarray


@dataclass(frozen=True)
class SmoothedMatrix:
    """Block-Hankel matrix of a snapshot matrix, with its defining sizes."""

    entries: np.ndarray
    m: int
    n: int
    l: int

    def __post_init__(self) -> None:
        expected = (self.m - self.l + 1, self.n * self.l)
        if self.entries.shape != expected:
            raise ValueError(f"smoothed entries have shape {self.entries.shape}, expected {expected}")

    @property
    def subarray_size(self) -> int:
        return self.m - self.l + 1

    @property
    def virtual_snapshots(self) -> int:
        return self.n * self.l

    @property
    def c_n(self) -> float:
        return self.subarray_size / self.virtual_snapshots


def steering_vector(m: int, theta: float) -> np.ndarray:
    """Unit-norm steering vector of an m-sensor ULA at electrical angle theta."""
    if m < 1:
        raise ValueError(f"steering dimension must be positive, got {m}")
    return np.exp(1j * np.arange(m) * theta) / math.sqrt(m)


def steering_matrix(m: int, doas) -> np.ndarray:
    """m x K matrix whose columns are steering vectors at the given angles."""
    doas = np.atleast_1d(np.asarray(doas, dtype=float))
    if m < 1:
        raise ValueError(f"steering dimension must be positive, got {m}")
    return np.exp(1j * np.outer(np.arange(m), doas)) / math.sqrt(m)


def steering_derivative(m: int, theta: float) -> np.ndarray:
    """Derivative of steering_vector(m, theta) with respect to theta."""
    if m < 1:
        raise ValueError(f"steering dimension must be positive, got {m}")
    j = np.arange(m)
    return 1j * j * np.exp(1j * j * theta) / math.sqrt(m)


def draw_signal_matrix(k: int, n: int, policy: str, rng: np.random.Generator) -> np.ndarray:
    """Draw a K x N source matrix under one of the random signal policies."""
    if policy == "random-gaussian-normalized":
        s = (rng.standard_normal((k, n)) + 1j * rng.standard_normal((k, n))) / math.sqrt(2.0)
        if k:
            power = np.sum(np.abs(s) ** 2, axis=1) / n
            s = s / np.sqrt(power)[:, None]
        return s
    if policy == "identity-covariance":
        if k > n:
            raise ValueError(f"identity-covariance needs k <= n, got k={k}, n={n}")
        s = (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))) / math.sqrt(2.0)
        q, r = np.linalg.qr(s)
        # fix the QR phase ambiguity so the draw is a deterministic function
        # of the generator state
        d = np.diagonal(r)
        phase = np.where(np.abs(d) > 0, d / np.abs(np.where(np.abs(d) > 0, d, 1.0)), 1.0)
        q = q * phase[None, :]
        return math.sqrt(n) * q.conj().T
    raise ValueError(f"policy {policy!r} does not draw signals")


def synthesize_snapshots(
    scenario: ArrayScenario, signal: Optional[np.ndarray] = None
) -> SnapshotMatrix:
    """Generate Y = A S + V for the scenario.

    The signal matrix is drawn first, then the noise, from a single stream
    seeded by scenario.seed, so equal scenarios give bitwise-equal output.
    Under the fixed-matrix policy the caller supplies ``signal`` (K x N,
    rank K) and the stream is spent on noise only.
    """
    rng = np.random.default_rng(np.random.SeedSequence(scenario.seed))
    k, n, m = scenario.k, scenario.n, scenario.m
    if scenario.signal_policy == "fixed-matrix":
        if signal is None:
            raise ValueError("fixed-matrix policy requires a signal matrix")
        s = np.asarray(signal, dtype=complex)
        if s.shape != (k, n):
            raise ValueError(f"signal has shape {s.shape}, expected {(k, n)}")
        if not np.all(np.isfinite(s.view(float))):
            raise ValueError("signal matrix contains non-finite entries")
        if k and np.linalg.matrix_rank(s) != k:
            raise ValueError("signal matrix must have full row rank k")
    else:
        if signal is not None:
            raise ValueError(f"policy {scenario.signal_policy!r} draws its own signal")
        s = draw_signal_matrix(k, n, scenario.signal_policy, rng)
    a = steering_matrix(m, scenario.doas) if k else np.zeros((m, 0), dtype=complex)
    signal_part = a @ s
    sigma = math.sqrt(scenario.sigma2)
    noise_part = sigma * (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / math.sqrt(2.0)
    return SnapshotMatrix(
        entries=signal_part + noise_part,
        signal_part=signal_part,
        noise_part=noise_part,
    )


def block_hankel(y: np.ndarray, l: int) -> np.ndarray:
    """Block-Hankel (spatially smoothed) rearrangement of y.

    For y of shape (m, n) the result W has shape (m - l + 1, n * l) with
    W[i, t + j*l] = y[i + t, j]; a 1-d input of length m is treated as a
    single snapshot and yields shape (m - l + 1, l).  l = 1 returns a copy
    of y itself.
    """
    y = np.asarray(y)
    if y.ndim == 1:
        y = y[:, None]
    if y.ndim != 2:
        raise ValueError(f"expected a vector or matrix, got ndim={y.ndim}")
    m = y.shape[0]
    if not 1 <= l < m:
        raise ValueError(f"smoothing factor must satisfy 1 <= l < m, got l={l}, m={m}")
    windows = sliding_window_view(y, l, axis=0)  # (m-l+1, n, l), [i, j, t] = y[i+t, j]
    out = np.ascontiguousarray(windows).reshape(m - l + 1, y.shape[1] * l)
    if np.shares_memory(out, y):
        # l = 1 keeps the window view contiguous, so no copy happened above;
        # materialize one so the result never aliases (or write-locks) the input
        out = out.copy()
    return out


def hankelize(snapshots: SnapshotMatrix, l: int) -> SmoothedMatrix:
    """Spatially smooth a snapshot matrix."""
    m, n = snapshots.entries.shape
    return SmoothedMatrix(entries=block_hankel(snapshots.entries, l), m=m, n=n, l=l)


def _check_smoothing(m: int, l: int) -> None:
    if not 1 <= l < m:
        raise ValueError(f"smoothing factor must satisfy 1 <= l < m, got l={l}, m={m}")


def smoothed_steering(theta: float, m: int, l: int) -> np.ndarray:
    """Rank-one smoothed steering block.

    Equals sqrt(l (m - l + 1) / m) * outer(a_{m-l+1}(theta), a_l(theta))
    (no conjugation), which is exactly block_hankel(a_m(theta), l).
    """
    _check_smoothing(m, l)
    scale = math.sqrt(l * (m - l + 1) / m)
    return scale * np.outer(steering_vector(m - l + 1, theta), steering_vector(l, theta))


def smoothed_steering_set(doas, m: int, l: int) -> np.ndarray:
    """Concatenated smoothed steering blocks, shape (m - l + 1, K l)."""
    _check_smoothing(m, l)
    doas = tuple(doas)
    if not doas:
        return np.zeros((m - l + 1, 0), dtype=complex)
    return np.hstack([smoothed_steering(t, m, l) for t in doas])


def smoothed_signal_part(scenario: ArrayScenario, signal: np.ndarray) -> np.ndarray:
    """Deterministic part B of the normalized smoothed matrix.

    B = A^(L) (S kron I_L) / sqrt(N L); hankelize(A_M S) equals
    B * sqrt(N L) exactly.
    """
    s = np.asarray(signal, dtype=complex)
    if s.shape != (scenario.k, scenario.n):
        raise ValueError(f"signal has shape {s.shape}, expected {(scenario.k, scenario.n)}")
    a_set = smoothed_steering_set(scenario.doas, scenario.m, scenario.l)
    if scenario.k == 0:
        return np.zeros((scenario.subarray_size, scenario.virtual_snapshots), dtype=complex)
    mixing = np.kron(s, np.eye(scenario.l))
    return a_set @ mixing / math.sqrt(scenario.virtual_snapshots)


def signal_covariance(scenario: ArrayScenario, signal: np.ndarray) -> np.ndarray:
    """(1/L) A^(L) (S S*/N kron I_L) A^(L)*, via the Kronecker construction."""
    b = smoothed_signal_part(scenario, signal)
    return b @ b.conj().T


def signal_covariance_hadamard(scenario: ArrayScenario, signal: np.ndarray) -> np.ndarray:
    """Same matrix through the Hadamard identity.

    ((M-L+1)/M) * A_{M-L+1} (S S*/N o A_L^T conj(A_L)) A_{M-L+1}^*, where o
    is the elementwise product.  Used as a cross-check of the Kronecker
    construction.
    """
    s = np.asarray(signal, dtype=complex)
    m, l, n = scenario.m, scenario.l, scenario.n
    u = scenario.subarray_size
    if scenario.k == 0:
        return np.zeros((u, u), dtype=complex)
    p = s @ s.conj().T / n
    a_l = steering_matrix(l, scenario.doas)
    a_u = steering_matrix(u, scenario.doas)
    c = a_l.T @ a_l.conj()
    return (u / m) * (a_u @ (p * c) @ a_u.conj().T)

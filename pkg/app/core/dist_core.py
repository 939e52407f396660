"""Exact arithmetic on bounded-support categorical random variables.

A ``CategoricalDist`` is a probability vector over equispaced atoms
``v_min + i * delta``. Every operation returns a new distribution; the
probability array of an instance is read-only, so instances can be shared
between threads freely.

The module also exposes array-level kernels (``shift_probs``,
``project_shift_probs``, ``kl_divergence_probs``, ``wasserstein_probs``)
that operate on the last axis of a stacked probability array; the tabular
value iteration runs on those directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Dict, Iterable, Optional, Sequence

import numpy as np

from app.core.errors import DistributionError

# Inputs must already be normalized to within this tolerance.
NORMALIZATION_TOL = 1e-6
# Tail comparisons in VaR absorb float noise of this size (e.g. alpha = 1/3).
_TAIL_TOL = 1e-12
_GRID_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CategoricalDist:
    """Probability mass over the atoms ``v_min + i * delta``, i = 0..N-1."""

    v_min: float
    delta: float
    probs: np.ndarray

    @property
    def n_atoms(self) -> int:
        return int(self.probs.shape[0])

    @property
    def atoms(self) -> np.ndarray:
        return self.v_min + self.delta * np.arange(self.n_atoms, dtype=np.float64)

    @property
    def v_max(self) -> float:
        return self.v_min + self.delta * (self.n_atoms - 1)

    def same_support(self, other: "CategoricalDist") -> bool:
        return (
            self.n_atoms == other.n_atoms
            and math.isclose(self.v_min, other.v_min, abs_tol=_GRID_TOL)
            and math.isclose(self.delta, other.delta, rel_tol=_GRID_TOL)
        )

    def to_record(self) -> Dict[str, Any]:
        return {
            "v_min": float(self.v_min),
            "delta": float(self.delta),
            "probs": [float(p) for p in self.probs],
        }

    def __repr__(self) -> str:
        return (
            f"CategoricalDist(v_min={self.v_min:g}, delta={self.delta:g}, "
            f"n_atoms={self.n_atoms}, mean={expectation(self):.6g})"
        )


def _build(v_min: float, delta: float, probs: np.ndarray) -> CategoricalDist:
    """Wrap an internally produced probability array, renormalizing drift."""
    arr = np.array(probs, dtype=np.float64, copy=True)
    np.clip(arr, 0.0, None, out=arr)
    total = arr.sum()
    if total <= 0.0:
        raise DistributionError("distribution has no probability mass")
    arr /= total
    arr.setflags(write=False)
    return CategoricalDist(float(v_min), float(delta), arr)


def make_dist(v_min: float, delta: float, probs: Sequence[float]) -> CategoricalDist:
    """Validate and construct a distribution.

    Raises:
        DistributionError: non-positive delta, empty or negative probs,
            all-zero mass, or total mass farther than 1e-6 from one.
    """
    if not (math.isfinite(delta) and delta > 0):
        raise DistributionError(f"atom spacing must be positive, got {delta!r}")
    if not math.isfinite(v_min):
        raise DistributionError(f"v_min must be finite, got {v_min!r}")
    arr = np.asarray(probs, dtype=np.float64).ravel()
    if arr.size == 0:
        raise DistributionError("probability vector is empty")
    if not np.all(np.isfinite(arr)):
        raise DistributionError("probability vector contains non-finite entries")
    if np.any(arr < 0):
        raise DistributionError("probability vector contains a negative entry")
    total = float(arr.sum())
    if total == 0.0:
        raise DistributionError("probability vector has all-zero mass")
    if abs(total - 1.0) > NORMALIZATION_TOL:
        raise DistributionError(
            f"probability mass {total:.6g} exceeds normalization tolerance"
        )
    return _build(v_min, delta, arr)


def dist_from_record(record: Dict[str, Any]) -> CategoricalDist:
    try:
        return make_dist(float(record["v_min"]), float(record["delta"]), record["probs"])
    except (KeyError, TypeError) as exc:
        raise DistributionError(f"malformed distribution record: {exc}") from exc


def point_mass(
    value: float,
    delta: float = 1.0,
    n_atoms: Optional[int] = None,
    v_min: float = 0.0,
) -> CategoricalDist:
    """Point mass at ``value`` (rounded onto the grid, clamped to the top atom)."""
    index = int(round((value - v_min) / delta))
    if index < 0:
        raise DistributionError(f"value {value} lies below v_min {v_min}")
    size = index + 1 if n_atoms is None else int(n_atoms)
    if size < 1:
        raise DistributionError("n_atoms must be positive")
    probs = np.zeros(size)
    probs[min(index, size - 1)] = 1.0
    return _build(v_min, delta, probs)


def uniform_over(
    values: Iterable[float],
    delta: float = 1.0,
    n_atoms: Optional[int] = None,
    v_min: float = 0.0,
) -> CategoricalDist:
    """Equal mass on each listed value (duplicates accumulate)."""
    indices = [int(round((v - v_min) / delta)) for v in values]
    if not indices:
        raise DistributionError("uniform distribution needs at least one value")
    if min(indices) < 0:
        raise DistributionError("uniform values must not lie below v_min")
    size = max(indices) + 1 if n_atoms is None else int(n_atoms)
    probs = np.zeros(size)
    for index in indices:
        probs[min(index, size - 1)] += 1.0 / len(indices)
    return _build(v_min, delta, probs)


# ---------------------------------------------------------------------------
# Array kernels (last axis)
# ---------------------------------------------------------------------------

def shift_probs(probs: np.ndarray, i: int) -> np.ndarray:
    """Accumulated right shift by ``i`` atoms; overflow pools in the top atom."""
    if i < 0:
        raise DistributionError(f"shift must be non-negative, got {i}")
    p = np.asarray(probs, dtype=np.float64)
    n = p.shape[-1]
    k = min(int(i), n - 1)
    if k == 0:
        return p.copy()
    out = np.zeros_like(p)
    out[..., k:n - 1] = p[..., :n - 1 - k]
    # accumulate from the top atom down so that shifts compose bit for bit
    out[..., n - 1] = np.cumsum(p[..., ::-1], axis=-1)[..., k]
    return out


def project_shift_probs(probs: np.ndarray, amount: float) -> np.ndarray:
    """Shift by a non-integer number of atoms.

    The mass landing between atoms ``j + floor(amount)`` and the next one is
    split linearly between them, so the expectation moves by exactly
    ``amount`` atoms unless the top atom clamps.
    """
    if amount < 0:
        raise DistributionError(f"shift must be non-negative, got {amount}")
    lo = math.floor(amount)
    frac = amount - lo
    if frac < 1e-12:
        return shift_probs(probs, lo)
    return (1.0 - frac) * shift_probs(probs, lo) + frac * shift_probs(probs, lo + 1)


def kl_divergence_probs(p: np.ndarray, q: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Row-wise KL(p || q) on the last axis with ``q`` floored at ``floor``."""
    p = np.asarray(p, dtype=np.float64)
    q = np.maximum(np.asarray(q, dtype=np.float64), floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0) / q), 0.0)
    return terms.sum(axis=-1)


def wasserstein_probs(p: np.ndarray, q: np.ndarray, delta: float = 1.0) -> np.ndarray:
    """Row-wise 1-Wasserstein distance on the last axis (finite even when supports differ)."""
    gap = np.cumsum(np.asarray(p, dtype=np.float64) - np.asarray(q, dtype=np.float64), axis=-1)
    return delta * np.abs(gap[..., :-1]).sum(axis=-1)


# ---------------------------------------------------------------------------
# Distribution operations
# ---------------------------------------------------------------------------

def shift_clamped(d: CategoricalDist, i: int) -> CategoricalDist:
    """Accumulated right shift ``f(d, i)`` on a fixed support."""
    if int(i) != i:
        raise DistributionError(f"shift must be an integer number of atoms, got {i}")
    # total mass is unchanged, so no renormalization
    probs = shift_probs(d.probs, int(i))
    probs.setflags(write=False)
    return CategoricalDist(d.v_min, d.delta, probs)


def _check_delta(d1: CategoricalDist, d2: CategoricalDist) -> None:
    if not math.isclose(d1.delta, d2.delta, rel_tol=_GRID_TOL):
        raise DistributionError(
            f"atom spacing mismatch: {d1.delta:g} vs {d2.delta:g}"
        )


def convolve(
    d1: CategoricalDist,
    d2: CategoricalDist,
    n_out: Optional[int] = None,
) -> CategoricalDist:
    """Distribution of the sum of independent draws from ``d1`` and ``d2``.

    With ``n_out`` unset the support grows to N1 + N2 - 1 atoms (exact mode).
    Otherwise the result keeps ``n_out`` atoms starting at ``v_min1 + v_min2``
    and mass above the top atom accumulates there, as in ``shift_clamped``.
    """
    _check_delta(d1, d2)
    out = np.convolve(d1.probs, d2.probs)
    v_min = d1.v_min + d2.v_min
    if n_out is None:
        return _build(v_min, d1.delta, out)

    n_out = int(n_out)
    if n_out < 1:
        raise DistributionError("clamped convolution needs n_out >= 1")
    offset = (d1.v_min - d2.v_min) / d1.delta
    if abs(offset - round(offset)) > _GRID_TOL:
        raise DistributionError("clamped convolution needs grid-aligned v_min values")
    if out.shape[0] > n_out:
        tail = out[n_out - 1:].sum()
        out = out[:n_out].copy()
        out[-1] = tail
    elif out.shape[0] < n_out:
        out = np.concatenate([out, np.zeros(n_out - out.shape[0])])
    return _build(v_min, d1.delta, out)


def convolve_power(d: CategoricalDist, k: int, n_out: Optional[int] = None) -> CategoricalDist:
    """k-fold convolution of ``d`` with itself (k = 0 gives a point mass at 0)."""
    if k < 0:
        raise DistributionError("convolution power must be non-negative")
    result = point_mass(0.0, d.delta, n_atoms=n_out or 1, v_min=0.0)
    base = d
    while k:
        if k & 1:
            result = convolve(result, base, n_out)
        k >>= 1
        if k:
            base = convolve(base, base, n_out)
    return result


def expectation(d: CategoricalDist) -> float:
    return float(np.dot(d.probs, d.atoms))


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha <= 1.0):
        raise DistributionError(f"alpha must lie in (0, 1], got {alpha!r}")


def _var_index(d: CategoricalDist, alpha: float) -> int:
    _check_alpha(alpha)
    p = d.probs
    # tail[j] = Pr(X > atom_j)
    tail = np.append(np.cumsum(p[::-1])[::-1][1:], 0.0)
    candidates = (p > 0) & (tail <= alpha + _TAIL_TOL)
    return int(np.argmax(candidates))


def var_alpha(d: CategoricalDist, alpha: float) -> float:
    """inf{k : Pr(X > k) <= alpha}, taken over atoms that carry mass."""
    return float(d.atoms[_var_index(d, alpha)])


def cvar_alpha(d: CategoricalDist, alpha: float) -> float:
    """E[X | X >= VaR_alpha(X)]; equals the expectation when alpha = 1."""
    index = _var_index(d, alpha)
    first_support = int(np.argmax(d.probs > 0))
    if index == first_support:
        return expectation(d)
    tail = d.probs[index:]
    return float(np.dot(tail, d.atoms[index:]) / tail.sum())


def kl_divergence(p: CategoricalDist, q: CategoricalDist) -> float:
    """KL(p || q); ``math.inf`` when q has no mass where p does."""
    if not p.same_support(q):
        raise DistributionError("KL divergence needs identical supports")
    mask = p.probs > 0
    if np.any(q.probs[mask] == 0):
        return math.inf
    return float(np.sum(p.probs[mask] * np.log(p.probs[mask] / q.probs[mask])))


def empirical_cvar(samples: Sequence[float], alpha: float) -> float:
    """Mean of the worst ceil(alpha * n) samples."""
    _check_alpha(alpha)
    arr = np.sort(np.asarray(samples, dtype=np.float64))[::-1]
    if arr.size == 0:
        raise DistributionError("empirical CVaR of an empty sample")
    count = max(1, math.ceil(alpha * arr.size - 1e-12))
    return float(arr[:count].mean())

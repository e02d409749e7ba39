"""Scalar observables along lattice trajectories.

Four observables of a lattice state, each of the form -log(gap) so that large
values mean the state is close to a distinguished set:

* localization: gap = l1 distance to a fixed target configuration
* global sync:  gap = max pairwise spread, max(x) - min(x)
* local sync:   gap = max nearest-neighbor spread (chain or ring)
* pair sync:    gap = min nearest-neighbor spread (closest adjacent pair)
* block sync:   gap = max within-block spread over disjoint index blocks

All gaps use plain interval distances.  A gap of 0 yields +inf, a legal value
treated downstream as an exceedance of every finite threshold.  Evaluators
accept a single state (n,) or a stacked array (..., n).
"""
from __future__ import annotations

import csv

import numpy as np

from .errors import DegenerateSeriesError, DomainError, InvalidBlocksError


def _neg_log(gap: np.ndarray):
    with np.errstate(divide="ignore"):
        out = -np.log(gap)
    return out if out.ndim else float(out)


def eval_localization(state: np.ndarray, target: np.ndarray):
    """-log sum_i |x_i - z_i|; +inf iff the state equals the target."""
    state = np.asarray(state, dtype=float)
    target = np.asarray(target, dtype=float)
    if target.shape != state.shape[-1:]:
        raise DomainError("target must have the same number of components")
    return _neg_log(np.sum(np.abs(state - target), axis=-1))


def eval_global_sync(state: np.ndarray):
    """-log max_{i!=j} |x_i - x_j| = -log (max - min); +inf on the diagonal."""
    state = np.asarray(state, dtype=float)
    if state.shape[-1] < 2:
        raise DomainError("need at least 2 components")
    return _neg_log(np.max(state, axis=-1) - np.min(state, axis=-1))


def eval_local_sync(state: np.ndarray, boundary: str = "chain"):
    """-log of the max nearest-neighbor gap.

    ``chain`` uses pairs (i, i+1) only; ``ring`` adds the wrap-around pair.
    """
    state = np.asarray(state, dtype=float)
    if state.shape[-1] < 2:
        raise DomainError("need at least 2 components")
    if boundary not in ("chain", "ring"):
        raise DomainError("boundary must be 'chain' or 'ring'")
    gaps = np.max(np.abs(np.diff(state, axis=-1)), axis=-1)
    if boundary == "ring" and state.shape[-1] > 2:
        wrap = np.abs(state[..., -1] - state[..., 0])
        gaps = np.maximum(gaps, wrap)
    return _neg_log(gaps)


def eval_pair_sync(state: np.ndarray, boundary: str = "chain"):
    """-log of the MINIMUM nearest-neighbor gap: close-pair synchronization.

    High values mean *some* adjacent pair has synchronized, regardless of the
    rest of the lattice.  Since only one pair is near the boundary of the
    exceedance set at a time, its extremal index is essentially that of the
    two-site lattice, independent of n.
    """
    state = np.asarray(state, dtype=float)
    if state.shape[-1] < 2:
        raise DomainError("need at least 2 components")
    if boundary not in ("chain", "ring"):
        raise DomainError("boundary must be 'chain' or 'ring'")
    gaps = np.min(np.abs(np.diff(state, axis=-1)), axis=-1)
    if boundary == "ring" and state.shape[-1] > 2:
        wrap = np.abs(state[..., -1] - state[..., 0])
        gaps = np.minimum(gaps, wrap)
    return _neg_log(gaps)


def _check_blocks(blocks, n: int) -> list[np.ndarray]:
    seen: set[int] = set()
    cleaned = []
    for block in blocks:
        idx = np.asarray(block, dtype=int)
        if idx.size < 2:
            raise InvalidBlocksError("every block needs at least 2 indices")
        if np.any(idx < 0) or np.any(idx >= n):
            raise InvalidBlocksError("block index out of range")
        if seen & set(idx.tolist()):
            raise InvalidBlocksError("blocks must be disjoint")
        seen |= set(idx.tolist())
        cleaned.append(idx)
    if not cleaned:
        raise InvalidBlocksError("need at least one block")
    return cleaned


def eval_block_sync(state: np.ndarray, blocks):
    """-log of the max within-block spread; indices outside blocks ignored.

    ``blocks`` is a list of 0-based index collections.
    """
    state = np.asarray(state, dtype=float)
    cleaned = _check_blocks(blocks, state.shape[-1])
    gap = np.zeros(state.shape[:-1])
    for idx in cleaned:
        sub = state[..., idx]
        gap = np.maximum(gap, np.max(sub, axis=-1) - np.min(sub, axis=-1))
    return _neg_log(gap)


def evaluate_series(trajectory: np.ndarray, kind: str, **kwargs) -> np.ndarray:
    """Apply an observable along a trajectory (length, ..., n)."""
    if kind == "localization":
        return eval_localization(trajectory, kwargs["target"])
    if kind == "global_sync":
        return eval_global_sync(trajectory)
    if kind == "local_sync":
        return eval_local_sync(trajectory, kwargs.get("boundary", "chain"))
    if kind == "pair_sync":
        return eval_pair_sync(trajectory, kwargs.get("boundary", "chain"))
    if kind == "block_sync":
        return eval_block_sync(trajectory, kwargs["blocks"])
    raise DomainError(f"unknown observable kind: {kind}")


def running_maximum(series) -> np.ndarray:
    """Partial maxima M_k = max(X_0..X_k); nondecreasing, idempotent."""
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise DegenerateSeriesError("empty series")
    return np.maximum.accumulate(series, axis=0)


def threshold_from_quantile(series, q: float) -> float:
    """Empirical q-quantile of the finite values (linear interpolation).

    +inf entries are excluded here but always count as exceedances when the
    threshold is applied downstream.
    """
    if not 0.0 < q <= 1.0:
        raise DomainError("quantile must lie in (0, 1]")
    series = np.asarray(series, dtype=float)
    finite = series[np.isfinite(series)]
    if finite.size == 0:
        raise DegenerateSeriesError("all values infinite; no finite quantile")
    return float(np.quantile(finite, q, method="linear"))


def exceedance_indicator(series, threshold: float) -> np.ndarray:
    """Boolean series of exceedances; +inf exceeds any finite threshold."""
    return np.asarray(series, dtype=float) > threshold


def sync_accuracy_from_threshold(u: float) -> float:
    """The strip accuracy nu = e^{-u} matching observable threshold u."""
    return float(np.exp(-u))


def export_series_csv(series, path) -> None:
    """Write `step,value` rows, spelling infinities as `inf`."""
    series = np.asarray(series, dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "value"])
        for k, v in enumerate(series):
            writer.writerow([k, "inf" if np.isinf(v) else f"{v:.17g}"])

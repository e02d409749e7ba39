"""Globally coupled lattices of piecewise-expanding circle maps.

The lattice update mixes the image of a local interval map T across all n
sites with strength gamma:

    new_x[i] = (1 - gamma) * T(x[i]) + (gamma / n) * sum_j T(x[j])

Each output component is a convex combination of the T(x[j]), so states stay
in [0, 1).  An optional additive-noise step perturbs every site independently
with eps * uniform(-0.5, 0.5), reduced mod 1.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import BoundaryError, DomainError


@dataclass(frozen=True)
class LocalMap:
    """Piecewise-affine expanding map of [0, 1), evaluated as a circle map.

    ``boundaries`` partition [0, 1) into branches [b_i, b_{i+1}); on branch i
    the map is x -> (slopes[i] * x + intercepts[i]) mod 1.  A point exactly on
    a boundary belongs to the branch starting there (right-closed convention;
    this pins the derivative at discontinuities).
    """

    boundaries: tuple[float, ...]
    slopes: tuple[float, ...]
    intercepts: tuple[float, ...]
    expansion_bound: float  # lambda: |T'| >= 1/lambda > 1 on every branch

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        if b[0] != 0.0 or b[-1] != 1.0 or np.any(np.diff(b) <= 0):
            raise DomainError("boundaries must increase strictly from 0 to 1")
        if len(self.slopes) != len(b) - 1 or len(self.intercepts) != len(b) - 1:
            raise DomainError("need one (slope, intercept) pair per branch")
        lam = self.expansion_bound
        if not 0.0 < lam < 1.0:
            raise DomainError("expansion bound must lie in (0, 1)")
        if min(abs(s) for s in self.slopes) < 1.0 / lam - 1e-12:
            raise DomainError("|T'| >= 1/lambda violated on some branch")

    @classmethod
    def affine_mod1(cls, slope: int) -> "LocalMap":
        """The full-branch map x -> slope * x mod 1 (slope >= 2)."""
        if slope < 2:
            raise DomainError("slope must be an integer >= 2")
        bounds = tuple(i / slope for i in range(slope)) + (1.0,)
        return cls(
            boundaries=bounds,
            slopes=(float(slope),) * slope,
            intercepts=tuple(-float(i) for i in range(slope)),
            expansion_bound=1.0 / slope,
        )

    def _branch_index(self, x: np.ndarray) -> np.ndarray:
        return np.searchsorted(np.asarray(self.boundaries)[1:-1], x, side="right")

    def __call__(self, x):
        """Evaluate T on a scalar or array with components in [0, 1)."""
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0.0) or np.any(arr >= 1.0):
            raise DomainError("local map argument must lie in [0, 1)")
        idx = self._branch_index(arr)
        s = np.asarray(self.slopes)[idx]
        c = np.asarray(self.intercepts)[idx]
        y = np.mod(s * arr + c, 1.0)
        # mod can return 1.0 for values a hair below an integer
        y = np.where(y >= 1.0, 0.0, y)
        return y if arr.ndim else float(y)

    def derivative(self, x):
        """T'(x) with the right-closed branch convention."""
        arr = np.asarray(x, dtype=float)
        if np.any(arr < 0.0) or np.any(arr >= 1.0):
            raise DomainError("local map argument must lie in [0, 1)")
        d = np.asarray(self.slopes)[self._branch_index(arr)]
        return d if arr.ndim else float(d)

    def on_interior_boundary(self, x) -> np.ndarray:
        """True where x coincides exactly with an interior branch boundary."""
        arr = np.atleast_1d(np.asarray(x, dtype=float))
        interior = np.asarray(self.boundaries)[1:-1]
        return np.isin(arr, interior)


@dataclass(frozen=True)
class MapSpec:
    """A coupled lattice: local map T, size n >= 2, coupling gamma in [0, 1)."""

    local_map: LocalMap
    n: int
    gamma: float

    def __post_init__(self):
        if self.n < 2:
            raise DomainError("lattice size n must be >= 2")
        if not 0.0 <= self.gamma < 1.0:
            raise DomainError("coupling gamma must lie in [0, 1)")

    @property
    def ei_hypothesis_ok(self) -> bool:
        """gamma < 1 - lambda, required by the closed-form EI results."""
        return self.gamma < 1.0 - self.local_map.expansion_bound


@dataclass(frozen=True)
class NoiseSpec:
    """Additive per-site noise eps * uniform(-0.5, 0.5), reduced mod 1."""

    epsilon: float = 0.0

    def __post_init__(self):
        if self.epsilon < 0.0:
            raise DomainError("noise intensity must be >= 0")


@dataclass(frozen=True)
class TrajectoryConfig:
    """Parameters of a single reproducible trajectory."""

    map_spec: MapSpec
    length: int
    noise: NoiseSpec = NoiseSpec(0.0)
    burn_in: int = 0
    seed: int = 0
    initial_state: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.length <= 0:
            raise DomainError("trajectory length must be positive")
        if self.burn_in < 0:
            raise DomainError("burn-in must be >= 0")
        if self.initial_state is not None:
            init = np.asarray(self.initial_state, dtype=float)
            if init.shape != (self.map_spec.n,):
                raise DomainError("initial state must have n components")
            if np.any(init < 0.0) or np.any(init >= 1.0):
                raise DomainError("initial state components must lie in [0, 1)")


def validate_state(state: np.ndarray, n: int) -> np.ndarray:
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != n:
        raise DomainError(f"state must have {n} components")
    if np.any(state < 0.0) or np.any(state >= 1.0):
        raise DomainError("state components must lie in [0, 1)")
    return state


def apply_local(local_map: LocalMap, x: float) -> float:
    """T(x) for a single point."""
    return local_map(x)


def step(state: np.ndarray, spec: MapSpec) -> np.ndarray:
    """One deterministic lattice update.  Works on (..., n) arrays."""
    state = validate_state(state, spec.n)
    y = spec.local_map(state)
    out = (1.0 - spec.gamma) * y + (spec.gamma / spec.n) * np.sum(
        y, axis=-1, keepdims=True
    )
    # convex combination; guard the rare round-up to 1.0
    return np.where(out >= 1.0, out - 1.0, out)


def step_noisy(
    state: np.ndarray,
    spec: MapSpec,
    noise: NoiseSpec,
    rng: np.random.Generator,
) -> np.ndarray:
    """Deterministic step followed by additive noise, mod 1.

    eps = 0 reproduces `step` exactly and consumes no random numbers.
    """
    det = step(state, spec)
    if noise.epsilon == 0.0:
        return det
    omega = rng.uniform(-0.5, 0.5, size=det.shape)
    out = np.mod(det + noise.epsilon * omega, 1.0)
    return np.where(out >= 1.0, 0.0, out)


def jacobian_det(state: np.ndarray, spec: MapSpec) -> float:
    """|det D T_hat| = (1-gamma)^(n-1) * prod_k |T'(x_k)| for one step."""
    state = validate_state(state, spec.n)
    if np.any(spec.local_map.on_interior_boundary(state)):
        raise BoundaryError("component sits exactly on a branch discontinuity")
    slopes = np.abs(spec.local_map.derivative(state))
    return (1.0 - spec.gamma) ** (spec.n - 1) * float(np.prod(slopes))


def coupling_matrix(n: int, gamma: float) -> np.ndarray:
    """The symmetric mixing matrix: diag 1-gamma+gamma/n, off-diag gamma/n."""
    if n < 2:
        raise DomainError("n must be >= 2")
    if not 0.0 <= gamma < 1.0:
        raise DomainError("gamma must lie in [0, 1)")
    c = np.full((n, n), gamma / n)
    np.fill_diagonal(c, 1.0 - gamma + gamma / n)
    return c


def coupling_det(n: int, gamma: float) -> float:
    """det of the coupling matrix, in closed form: (1-gamma)^(n-1)."""
    if n < 2:
        raise DomainError("n must be >= 2")
    if not 0.0 <= gamma < 1.0:
        raise DomainError("gamma must lie in [0, 1)")
    return (1.0 - gamma) ** (n - 1)


def _rng_for(seed: int, *indices: int) -> np.random.Generator:
    """Deterministic stream derived from (master seed, indices...)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, indices)]))


def simulate(config: TrajectoryConfig) -> np.ndarray:
    """Generate a trajectory of shape (length, n).

    Row 0 is the state reached after ``burn_in`` steps from the initial
    state; subsequent rows are successive updates.  With a fixed seed the
    output is bit-identical across runs, and a burn_in=k run equals the tail
    of a burn_in=0 run of length m+k.
    """
    spec = config.map_spec
    rng = _rng_for(config.seed)
    if config.initial_state is not None:
        state = np.asarray(config.initial_state, dtype=float).copy()
    else:
        state = rng.uniform(0.0, 1.0, size=spec.n)
    out = np.empty((config.length, spec.n))
    for _ in range(config.burn_in):
        state = step_noisy(state, spec, config.noise, rng)
    out[0] = state
    for k in range(1, config.length):
        state = step_noisy(state, spec, config.noise, rng)
        out[k] = state
    return out


def simulate_ensemble(
    spec: MapSpec,
    realizations: int,
    length: int,
    seed: int,
    noise: NoiseSpec = NoiseSpec(0.0),
    burn_in: int = 1000,
) -> np.ndarray:
    """Vectorized bundle of trajectories, shape (length, realizations, n).

    All realizations advance in lock-step from one seeded stream, so the
    result is deterministic given (seed, realizations, length, burn_in) but
    individual rows are not reproducible in isolation; use `simulate` with a
    derived seed when per-realization streams matter.
    """
    rng = _rng_for(seed)
    states = rng.uniform(0.0, 1.0, size=(realizations, spec.n))
    for _ in range(burn_in):
        states = step_noisy(states, spec, noise, rng)
    out = np.empty((length, realizations, spec.n))
    out[0] = states
    for k in range(1, length):
        states = step_noisy(states, spec, noise, rng)
        out[k] = states
    return out


def export_trajectory_csv(trajectory: np.ndarray, path) -> None:
    """Write `step,x_1,...,x_n` rows at full double precision."""
    trajectory = np.asarray(trajectory)
    n = trajectory.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step"] + [f"x_{i + 1}" for i in range(n)])
        for k, row in enumerate(trajectory):
            writer.writerow([k] + [f"{v:.17g}" for v in row])

"""Mean-field SDE model abstraction and the built-in benchmark models.

A model bundles a drift ``b(t, x, mu)``, diffusion columns
``sigma_r(t, x, mu)``, a growth exponent ``rho`` (the drift-increment bound
is polynomial of degree ``2*rho + 1``) and a sampler for the initial law.
Coefficient callables are vectorized over particles: ``x`` has shape
``(N, d)`` and the return value must match.  The measure argument is a
read-only moment view of the current empirical measure; all built-in models
consume only raw moments, but the full particle block stays reachable for
user models that need general measure functionals.

Coefficients must be deterministic, pure functions of their arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NonFiniteCoefficient


class MeasureView:
    """Read-only snapshot of one ensemble's empirical measure.

    Valid for a single time step; the stepper rebuilds it after every state
    update.  Moments are accumulated with single full-array numpy reductions,
    giving one fixed summation order per ensemble shape.
    """

    __slots__ = ("_states", "_mean", "_w2sq", "_moments")

    def __init__(self, states):
        states = np.ascontiguousarray(states, dtype=np.float64)
        if states.ndim != 2:
            raise ValueError("states must have shape (N, d)")
        view = states.view()
        view.flags.writeable = False
        self._states = view
        self._mean = None
        self._w2sq = None
        self._moments = {}

    @property
    def n_particles(self) -> int:
        return self._states.shape[0]

    @property
    def d(self) -> int:
        return self._states.shape[1]

    @property
    def particles(self) -> np.ndarray:
        """Read-only (N, d) view of the particle states."""
        return self._states

    @property
    def mean(self) -> np.ndarray:
        """First raw moment, shape (d,)."""
        if self._mean is None:
            mean = self._states.mean(axis=0)
            mean.flags.writeable = False
            self._mean = mean
        return self._mean

    def raw_moment(self, k: int, coordinate: int | None = None):
        """Per-coordinate k-th raw moment; (d,) vector when no coordinate given."""
        if k < 1:
            raise ValueError("moment order must be a positive integer")
        if k not in self._moments:
            mom = np.mean(self._states**k, axis=0)
            mom.flags.writeable = False
            self._moments[k] = mom
        mom = self._moments[k]
        return mom if coordinate is None else float(mom[coordinate])

    @property
    def w2sq_to_dirac0(self) -> float:
        """Squared 2-Wasserstein distance to the Dirac at the origin,
        (1/N) * sum_i |x_i|^2."""
        if self._w2sq is None:
            self._w2sq = float(np.mean(np.sum(self._states**2, axis=1)))
        return self._w2sq


def dirac(point, d: int = 1) -> MeasureView:
    """Single-particle measure concentrated at `point` (moments c^k)."""
    arr = np.full((1, d), float(point)) if np.isscalar(point) else np.atleast_2d(
        np.asarray(point, dtype=np.float64)
    )
    return MeasureView(arr)


@dataclass(frozen=True)
class ModelSpec:
    """Immutable description of one mean-field SDE.

    drift(t, x, mu) and diffusion_col(t, x, mu, r) take x of shape (N, d)
    and return (N, d); r is 1-based and at most m.  initial_sampler(stream)
    returns the (N, d) initial states from the deterministic draw source.
    """

    name: str
    d: int
    m: int
    drift: Callable
    diffusion_col: Callable
    rho: float
    initial_sampler: Callable
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.d < 1 or self.m < 1:
            raise ValueError("state and Brownian dimensions must be positive")
        if self.rho < 0:
            raise ValueError("growth exponent rho must be nonnegative")


def _as_batch(x, d):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != d:
            raise ValueError(f"state vector has length {x.shape[0]}, expected {d}")
        return x[None, :], True
    if x.ndim == 2 and x.shape[1] == d:
        return x, False
    raise ValueError(f"states must have shape (d,) or (N, {d})")


def eval_drift(model: ModelSpec, t, x, mu: MeasureView):
    """Evaluate b(t, x, mu); raises NonFiniteCoefficient on bad input/output."""
    batch, squeeze = _as_batch(x, model.d)
    if not np.all(np.isfinite(batch)):
        raise NonFiniteCoefficient("non-finite state passed to drift", t=t, x=batch)
    with np.errstate(all="ignore"):
        out = np.asarray(model.drift(t, batch, mu), dtype=np.float64)
    if out.shape != batch.shape:
        raise ValueError(f"drift returned shape {out.shape}, expected {batch.shape}")
    if not np.all(np.isfinite(out)):
        bad = np.where(~np.isfinite(out).all(axis=1))[0]
        raise NonFiniteCoefficient(
            f"drift of model '{model.name}' is non-finite at t={t}",
            t=t,
            x=batch[bad],
            value=out[bad],
        )
    return out[0] if squeeze else out


def eval_diffusion_col(model: ModelSpec, t, x, mu: MeasureView, r: int):
    """Evaluate sigma_r(t, x, mu) for 1 <= r <= m; same error contract as eval_drift."""
    if not 1 <= r <= model.m:
        raise ValueError(f"diffusion column {r} outside 1..{model.m}")
    batch, squeeze = _as_batch(x, model.d)
    if not np.all(np.isfinite(batch)):
        raise NonFiniteCoefficient("non-finite state passed to diffusion", t=t, x=batch)
    with np.errstate(all="ignore"):
        out = np.asarray(model.diffusion_col(t, batch, mu, r), dtype=np.float64)
    if out.shape != batch.shape:
        raise ValueError(f"diffusion returned shape {out.shape}, expected {batch.shape}")
    if not np.all(np.isfinite(out)):
        bad = np.where(~np.isfinite(out).all(axis=1))[0]
        raise NonFiniteCoefficient(
            f"diffusion column {r} of model '{model.name}' is non-finite at t={t}",
            t=t,
            x=batch[bad],
            value=out[bad],
        )
    return out[0] if squeeze else out


# ---------------------------------------------------------------------------
# built-in benchmark models (all scalar: d = m = 1)
# ---------------------------------------------------------------------------


def cubic_interaction_model() -> ModelSpec:
    """dX = (X - X^3 + c E[X]) dt + gamma (1 - X^2) dW with gamma = 0.5, c = 1.

    Deterministic start at 0; drift-increment growth degree 3 (rho = 1).
    """
    c, gamma = 1.0, 0.5

    def drift(t, x, mu):
        return x - x**3 + c * mu.mean

    def diffusion(t, x, mu, r):
        return gamma * (1.0 - x**2)

    def init(stream):
        return np.zeros(stream.shape)

    return ModelSpec(
        name="cubic",
        d=1,
        m=1,
        drift=drift,
        diffusion_col=diffusion,
        rho=1.0,
        initial_sampler=init,
        params={"c": c, "gamma": gamma},
    )


def quintic_interaction_model() -> ModelSpec:
    """dX = (1 - X^5 + X^3 + c E[X]) dt + (gamma X^2 + 1) dW with c = 1, gamma = 0.01.

    Deterministic start at 0; drift-increment growth degree 5 (rho = 2).
    """
    c, gamma = 1.0, 0.01

    def drift(t, x, mu):
        return 1.0 - x**5 + x**3 + c * mu.mean

    def diffusion(t, x, mu, r):
        return gamma * x**2 + 1.0

    def init(stream):
        return np.zeros(stream.shape)

    return ModelSpec(
        name="quintic",
        d=1,
        m=1,
        drift=drift,
        diffusion_col=diffusion,
        rho=2.0,
        initial_sampler=init,
        params={"c": c, "gamma": gamma},
    )


def double_well_model(mu0: float = 0.0, sigma0sq: float = 1.0) -> ModelSpec:
    """Double-well mean-field model with linear multiplicative noise.

    dX = (-(5/4) X^3 + 3 X^2 E[X] - 3 X E[X^2] + E[X^3]) dt + X dW,
    X_0 ~ Normal(mu0, sigma0sq).  The two standard settings are (0, 1) and
    (3, 9).
    """
    if sigma0sq < 0:
        raise ValueError("initial variance sigma0sq must be nonnegative")
    mu0 = float(mu0)
    sigma0 = float(np.sqrt(sigma0sq))

    def drift(t, x, mu):
        m1 = mu.raw_moment(1)
        m2 = mu.raw_moment(2)
        m3 = mu.raw_moment(3)
        return -1.25 * x**3 + 3.0 * x**2 * m1 - 3.0 * x * m2 + m3

    def diffusion(t, x, mu, r):
        return x.copy()

    def init(stream):
        return mu0 + sigma0 * stream.normals()

    return ModelSpec(
        name="doublewell",
        d=1,
        m=1,
        drift=drift,
        diffusion_col=diffusion,
        rho=1.0,
        initial_sampler=init,
        params={"mu0": mu0, "sigma0sq": float(sigma0sq)},
    )


BUILTIN_MODELS = {
    "cubic": cubic_interaction_model,
    "quintic": quintic_interaction_model,
    "doublewell": double_well_model,
}


def make_model(name: str, **params) -> ModelSpec:
    """Construct a registered model by its config-file name."""
    try:
        factory = BUILTIN_MODELS[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_MODELS))
        raise ValueError(f"unknown model '{name}' (available: {known})") from None
    return factory(**params)


def register_model(name: str, factory: Callable, overwrite: bool = False):
    """Register a user model factory under a config-file name.

    The factory takes keyword parameters and returns a ModelSpec.  Built-in
    names cannot be replaced unless overwrite is set.
    """
    if name in BUILTIN_MODELS and not overwrite:
        raise ValueError(f"model name '{name}' is already registered")
    BUILTIN_MODELS[name] = factory

"""Named benchmark systems and predictor configurations."""

from __future__ import annotations

import numpy as np

from .errors import ConfigError
from .lqr import LTVSystem, dare_fixed_point
from .predictors import (AffineGaussian, Baseline, BinaryPerfect, MultiStep1D,
                         ShiftedAffineGaussian)

#: prediction map whose per-entry accuracy matches the identity map while
#: its cross terms move the achievable cost improvement
THETA_MIXED = np.array([[1.0, 0.99], [0.0, 0.141]])

DOUBLE_INTEGRATOR_A = np.array([[1.0, 0.1], [0.0, 1.0]])
DOUBLE_INTEGRATOR_B = np.array([[0.0], [0.1]])


def double_integrator(T: int, x0=(0.0, 0.0)) -> LTVSystem:
    """2-D discretized double integrator (dt = 0.1), unit state cost, unit
    control cost, terminal weight at the fixed point of the backward
    recursion so the solution is stationary."""
    Q = np.eye(2)
    R = np.array([[1.0]])
    P = dare_fixed_point(DOUBLE_INTEGRATOR_A, DOUBLE_INTEGRATOR_B, Q, R)
    return LTVSystem(T=T, A=DOUBLE_INTEGRATOR_A, B=DOUBLE_INTEGRATOR_B,
                     Q=Q, R=R, P_T=P, x0=np.asarray(x0, dtype=float))


def scalar_unit(T: int, x0: float = 0.0) -> LTVSystem:
    """Scalar system with unit coefficients; the stationary terminal weight
    is the golden ratio (1 + sqrt(5)) / 2."""
    one = np.array([[1.0]])
    P = dare_fixed_point(one, one, one, one)
    return LTVSystem(T=T, A=one, B=one, Q=one, R=one, P_T=P,
                     x0=np.array([x0]))


def binary_example(T: int, x0: float = 0.0) -> LTVSystem:
    """Pure disturbance-cancellation system x_{t+1} = u_t + w_t with
    costless control (R = 0) and unit state costs; control is free so a
    perfectly informed policy zeroes every future state."""
    return LTVSystem(T=T, A=np.array([[0.0]]), B=np.array([[1.0]]),
                     Q=np.array([[1.0]]), R=np.array([[0.0]]),
                     P_T=np.array([[1.0]]), x0=np.array([x0]),
                     allow_semidefinite_r=True)


SYSTEM_PRESETS = {
    "double-integrator": {
        "factory": double_integrator,
        "description": "2-D double integrator, dt=0.1, Q=I, R=1, stationary terminal weight",
    },
    "scalar-unit": {
        "factory": scalar_unit,
        "description": "scalar A=B=Q=R=1 system at its fixed-point terminal weight",
    },
    "binary-example": {
        "factory": binary_example,
        "description": "x_{t+1}=u_t+w_t with R=0, unit state costs, +/-1 disturbances",
    },
}


def make_system(spec, T: int) -> LTVSystem:
    """Resolve a named preset or an inline system document."""
    if isinstance(spec, str):
        entry = SYSTEM_PRESETS.get(spec)
        if entry is None:
            raise ConfigError(
                f"system: unknown preset {spec!r}; known: {sorted(SYSTEM_PRESETS)}")
        return entry["factory"](T)
    if isinstance(spec, dict):
        doc = dict(spec)
        doc.setdefault("T", T)
        try:
            return LTVSystem.from_dict(doc)
        except Exception as exc:
            raise ConfigError(f"system: {exc}") from exc
    raise ConfigError(f"system: expected preset name or document, got {type(spec).__name__}")


def _resolve_theta(theta, n: int) -> np.ndarray:
    if isinstance(theta, str):
        if theta == "identity":
            return np.eye(n)
        if theta == "mixed":
            if n != 2:
                raise ConfigError("predictor.theta: 'mixed' needs n = 2")
            return THETA_MIXED
        raise ConfigError(f"predictor.theta: unknown name {theta!r}")
    return np.atleast_2d(np.asarray(theta, dtype=float))


def make_predictor(spec, T: int, n: int):
    """Build a predictor model from a config document."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError("predictor: expected a document with a 'kind' field")
    kind = spec["kind"]
    if kind == "baseline":
        return Baseline(T=T, n=n)
    if kind == "affine-gaussian":
        theta = _resolve_theta(spec.get("theta", "identity"), n)
        return AffineGaussian(T=T, rho=float(spec.get("rho", 0.5)), theta=theta)
    if kind == "shifted-affine-gaussian":
        theta = _resolve_theta(spec.get("theta", "identity"), n)
        inner = AffineGaussian(T=T, rho=float(spec.get("rho", 0.5)), theta=theta)
        return ShiftedAffineGaussian(inner=inner)
    if kind == "multistep-1d":
        variances = tuple(spec.get("variances", (1.0, 1.0, 1.0)))
        return MultiStep1D(T=T, variances=variances, variant=int(spec.get("variant", 1)))
    if kind == "binary-perfect":
        return BinaryPerfect(T=T, n=n)
    raise ConfigError(f"predictor.kind: unknown kind {kind!r}")


PREDICTOR_KINDS = {
    "baseline": "uninformative predictor, V_t empty",
    "affine-gaussian": "V_t = rho theta W_t + noise (params rho, theta)",
    "shifted-affine-gaussian": "the affine prediction delivered one step early",
    "multistep-1d": "scalar disturbance split into 3 components (variant 1|2)",
    "binary-perfect": "exact revelation of +/-1 disturbances",
}


def list_presets() -> dict:
    """Catalog of named systems and predictor kinds."""
    return {
        "systems": {name: entry["description"] for name, entry in SYSTEM_PRESETS.items()},
        "predictors": dict(PREDICTOR_KINDS),
    }

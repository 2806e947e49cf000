"""Nonlinear least squares and the two calibrations built on it.

:func:`solve` is a damped Gauss-Newton (Levenberg-Marquardt) iteration with
central-difference Jacobians. Each iteration first tries the undamped
Gauss-Newton step and falls back to Marquardt damping only when the cost
does not drop; the damping grows by 10 on rejection and shrinks by 10 on
acceptance. Bounded parameters are fitted in logit (probabilities) or
softplus (positive scales) coordinates and reported in natural units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .burst import BurstParams, expected_statistics
from .model import EfficiencyModel, cavity_enhancement, saturating_efficiency
from .qubit import R1, R2, Z_BASIS


class FitError(ValueError):
    """Ill-posed fit: underdetermined system or non-finite model output."""


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, result: "FitResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class Tolerances:
    gtol: float = 1e-10
    xtol: float = 1e-12
    max_iter: int = 500
    initial_damping: float = 1e-3
    damping_factor: float = 10.0
    max_damping: float = 1e16


@dataclass
class FitResult:
    params: dict[str, float]
    residual_norm: float
    iterations: int
    converged: bool
    jacobian_condition: float
    gradient_norm: float = 0.0
    initial_residual_norm: float = 0.0
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    message: str = ""
    trace: list[dict] = field(default_factory=list)

    def to_dict(self, verbose: bool = False) -> dict:
        out = {
            "params": dict(self.params),
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "jacobian_condition": self.jacobian_condition,
            "gradient_norm": self.gradient_norm,
            "initial_residual_norm": self.initial_residual_norm,
            "residuals": [float(r) for r in self.residuals],
            "message": self.message,
        }
        if verbose:
            out["trace"] = self.trace
        return out


@dataclass(frozen=True)
class DataPoint:
    x: float
    y: float
    sigma: float | None = None

    def __post_init__(self):
        if not self.x >= 0:
            raise ValueError(f"x must be >= 0, got {self.x}")
        if not 0.0 <= self.y <= 1.0:
            raise ValueError(f"y must lie in [0, 1], got {self.y}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")


# -- parameter transforms ---------------------------------------------------

def _logit(p):
    return math.log(p / (1.0 - p))


def _expit(z):
    return 1.0 / (1.0 + math.exp(-z)) if z >= 0 else math.exp(z) / (1.0 + math.exp(z))


def _softplus(z):
    return z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))


def _softplus_inv(y):
    return y + math.log(-math.expm1(-y))


TRANSFORMS = {
    "identity": (lambda v: v, lambda z: z),
    "logit": (_logit, _expit),
    "softplus": (_softplus_inv, _softplus),
}


def _to_internal(values, transforms):
    return np.array([TRANSFORMS[t][0](float(v)) for v, t in zip(values, transforms)])


def _to_natural(z, transforms):
    return np.array([TRANSFORMS[t][1](float(v)) for v, t in zip(z, transforms)])


# -- solver -----------------------------------------------------------------

def _jacobian(fun, z, r0):
    jac = np.empty((len(r0), len(z)))
    for i in range(len(z)):
        h = max(1e-6, 1e-6 * abs(z[i]))
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        jac[:, i] = (fun(zp) - fun(zm)) / (2 * h)
    return jac


def solve(residual_fn: Callable[[np.ndarray], np.ndarray], init: Sequence[float],
          names: Sequence[str] | None = None, transforms: Sequence[str] | None = None,
          tol: Tolerances = Tolerances(), verbose: bool = False) -> FitResult:
    """Minimize ``|residual_fn(x)|^2`` starting from ``init``.

    ``residual_fn`` takes parameters in natural units. Deterministic for a
    given input.
    """
    init = np.asarray(init, dtype=float)
    n_par = len(init)
    names = list(names) if names is not None else [f"x{i}" for i in range(n_par)]
    transforms = list(transforms) if transforms is not None else ["identity"] * n_par
    if not np.all(np.isfinite(init)):
        raise FitError(f"initial guess is not finite: {init}")

    def fun(z):
        return np.asarray(residual_fn(_to_natural(z, transforms)), dtype=float)

    z = _to_internal(init, transforms)
    r = fun(z)
    if not np.all(np.isfinite(r)):
        raise FitError(f"model output is not finite at the initial guess {dict(zip(names, init))}")
    if len(r) < n_par:
        raise FitError(f"underdetermined: {len(r)} residuals for {n_par} parameters")

    cost = float(r @ r)
    initial_norm = math.sqrt(cost)
    damping = tol.initial_damping
    trace: list[dict] = []
    converged = False
    message = "maximum iterations reached"
    iterations = 0
    grad_norm = float("nan")
    jac = np.zeros((len(r), n_par))

    while True:
        jac = _jacobian(fun, z, r) if n_par else jac
        if not np.all(np.isfinite(jac)):
            raise FitError(f"non-finite Jacobian at {dict(zip(names, _to_natural(z, transforms)))}")
        grad = jac.T @ r
        grad_norm = float(np.linalg.norm(grad))
        if verbose:
            trace.append({"iteration": iterations, "params": dict(zip(names, _to_natural(z, transforms).tolist())),
                          "residual_norm": math.sqrt(cost), "gradient_norm": grad_norm, "damping": damping})
        if grad_norm < tol.gtol:
            converged, message = True, "gradient norm below tolerance"
            break
        if iterations >= tol.max_iter:
            break

        normal = jac.T @ jac
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        accepted = False
        lam = 0.0
        while True:
            z_new = z + step
            r_new = fun(z_new)
            cost_new = float(r_new @ r_new) if np.all(np.isfinite(r_new)) else math.inf
            if cost_new < cost:
                accepted = True
                if lam > 0:
                    damping = max(damping / tol.damping_factor, 1e-12)
                break
            lam = damping if lam == 0 else lam * tol.damping_factor
            damping = lam
            if lam > tol.max_damping:
                break
            diag = np.diag(normal)
            diag = np.maximum(diag, 1e-12 * diag.max()) if diag.max() > 0 else np.ones(n_par)
            aug = np.vstack([jac, np.diag(np.sqrt(lam * diag))])
            step, *_ = np.linalg.lstsq(aug, np.concatenate([-r, np.zeros(n_par)]), rcond=None)
        if not accepted:
            message = "no step reduces the residual"
            converged = grad_norm < math.sqrt(tol.gtol)
            break
        iterations += 1
        z, r, cost = z_new, r_new, cost_new
        if np.linalg.norm(step) < tol.xtol:
            converged, message = True, "step norm below tolerance"
            break

    cond = float(np.linalg.cond(jac)) if n_par and jac.size else 0.0
    return FitResult(
        params=dict(zip(names, _to_natural(z, transforms).tolist())),
        residual_norm=math.sqrt(cost),
        iterations=iterations,
        converged=converged,
        jacobian_condition=cond,
        gradient_norm=grad_norm,
        initial_residual_norm=initial_norm,
        residuals=r,
        message=message,
        trace=trace,
    )


def least_squares(model: Callable[[float, np.ndarray], float], points: Sequence[DataPoint],
                  init: Sequence[float], names: Sequence[str] | None = None,
                  transforms: Sequence[str] | None = None, tol: Tolerances = Tolerances(),
                  verbose: bool = False) -> FitResult:
    """Fit ``model(x, params)`` to ``points``, weighting by ``1/sigma`` when given."""
    if len(points) < len(init):
        raise FitError(f"underdetermined: {len(points)} points for {len(init)} parameters")
    if any(p.sigma is not None for p in points) and any(p.sigma is None for p in points):
        raise FitError("either all points carry sigma or none do")
    # canonical point order keeps the floating-point path independent of input order
    order = sorted(range(len(points)), key=lambda i: (points[i].x, points[i].y, points[i].sigma or 0.0))
    xs = np.array([points[i].x for i in order])
    ys = np.array([points[i].y for i in order])
    if points[0].sigma is not None:
        weights = 1.0 / np.array([points[i].sigma for i in order])
    else:
        weights = np.ones(len(points))
    # solve with weights scaled to max 1 so a uniform sigma rescaling leaves
    # the iteration bit-identical; report residuals in the caller's units
    scale = float(weights.max())
    weights = weights / scale

    def residuals(params):
        pred = np.array([model(x, params) for x in xs])
        if not np.all(np.isfinite(pred)):
            raise FitError(f"non-finite model output at params {list(params)}")
        return (pred - ys) * weights

    result = solve(residuals, init, names=names, transforms=transforms, tol=tol, verbose=verbose)
    result.residual_norm *= scale
    result.initial_residual_norm *= scale
    result.gradient_norm *= scale
    residuals_out = np.empty(len(points))
    residuals_out[order] = result.residuals * scale
    result.residuals = residuals_out
    return result


# -- efficiency vs OD -------------------------------------------------------

def od_model(enhancement: float, chain: float = 1.0, p_fixed: float | None = None):
    def model(od, params):
        k = params[0]
        p = p_fixed if p_fixed is not None else params[1]
        return chain * p * (k * od * enhancement) / (k * od * enhancement + 1.0)
    return model


def fit_od_curve(points: Sequence[DataPoint], mode: str = "freespace", finesse: float | None = None,
                 p: float | None = None, chain: float = 1.0, init: Sequence[float] | None = None,
                 tol: Tolerances = Tolerances(), verbose: bool = False) -> FitResult:
    """Fit ``chain * p * C / (C + 1)`` with ``C = k * od`` (times ``2F/pi`` in a cavity).

    Passing ``p`` fixes the ceiling and fits ``k`` alone. ``chain`` converts
    the fitted intrinsic efficiency to the measured one (1 fits the data
    directly). The result's params always contain ``k``, ``p`` and
    ``enhancement``.
    """
    if mode == "freespace":
        enhancement = 1.0
    elif mode == "cavity":
        if finesse is None:
            raise ValueError("cavity mode needs a finesse")
        enhancement = cavity_enhancement(finesse)
    else:
        raise ValueError(f"mode must be 'freespace' or 'cavity', got {mode!r}")
    if not 0 < chain <= 1:
        raise ValueError(f"chain efficiency must lie in (0, 1], got {chain}")

    if p is None:
        names, transforms = ["k", "p"], ["softplus", "logit"]
        start = list(init) if init is not None else [_default_k(points, enhancement, chain * 0.9), 0.9]
    else:
        names, transforms = ["k"], ["softplus"]
        start = list(init) if init is not None else [_default_k(points, enhancement, chain * p)]
    result = least_squares(od_model(enhancement, chain, p), points, start, names, transforms, tol, verbose)
    if p is not None:
        result.params["p"] = p
    result.params["enhancement"] = enhancement
    result.params["chain"] = chain
    return result


def _default_k(points, enhancement, ceiling):
    # invert the model at the largest-OD point for the given ceiling
    best = max(points, key=lambda pt: pt.x)
    if best.x <= 0 or ceiling <= 0:
        return 0.1
    eff = min(max(best.y / ceiling, 1e-3), 0.9)
    return max(eff / (1 - eff) / (best.x * enhancement), 1e-4)


@dataclass(frozen=True)
class CavityPrediction:
    """Cavity curve predicted from a free-space fit with a shared ``k``."""

    model: EfficiencyModel
    chain: float = 1.0

    def predict(self, od):
        if np.ndim(od):
            return np.array([self.predict(float(o)) for o in od])
        return self.chain * saturating_efficiency(od, self.model)

    def pointwise_gap(self, points: Sequence[DataPoint]) -> np.ndarray:
        return np.array([1.0 - pt.y / self.predict(pt.x) for pt in points])

    def gap(self, points: Sequence[DataPoint]) -> float:
        """Mean relative shortfall ``1 - measured / predicted``."""
        return float(np.mean(self.pointwise_gap(points)))


def predict_cavity_from_freespace(freespace_fit: FitResult, finesse: float | None = None,
                                  enhancement: float | None = None) -> CavityPrediction:
    if not freespace_fit.converged:
        raise ValueError("free-space fit did not converge")
    if enhancement is None:
        enhancement = cavity_enhancement(finesse)
    fp = freespace_fit.params
    model = EfficiencyModel(k=fp["k"], p=fp["p"], enhancement=enhancement)
    return CavityPrediction(model, chain=fp.get("chain", 1.0))


# -- burst calibration ------------------------------------------------------

OBSERVABLES = ("mean_r1", "mean_r2", "p0_r2", "p_geq1_r1")
CALIBRATABLE = ("p_click", "s_surv", "p_dark", "eta_prep")


def burst_observables(params: BurstParams) -> dict[str, float]:
    """Headline observables of |r1> and |r2> measured in the Z basis."""
    r1 = expected_statistics(R1, Z_BASIS, params)
    r2 = expected_statistics(R2, Z_BASIS, params)
    return {
        "mean_r1": r1.mean_photons,
        "mean_r2": r2.mean_photons,
        "p0_r2": r2.prob_zero,
        "p_geq1_r1": r1.prob_geq1,
    }


def calibrate_burst(targets: Mapping[str, float], free: Sequence[str], fixed: BurstParams,
                    tol: Tolerances = Tolerances(), verbose: bool = False) -> tuple[BurstParams, FitResult]:
    """Fit the ``free`` burst parameters to ``targets`` through the analytic model.

    Starts from the values in ``fixed``. Raises :class:`ConvergenceError`
    with a per-target residual breakdown when the solver does not converge.
    """
    unknown = set(targets) - set(OBSERVABLES)
    if unknown:
        raise ValueError(f"unsupported targets {sorted(unknown)}; choose from {OBSERVABLES}")
    bad = set(free) - set(CALIBRATABLE)
    if bad:
        raise ValueError(f"cannot calibrate {sorted(bad)}; choose from {CALIBRATABLE}")
    if len(free) > len(targets):
        raise FitError(f"underdetermined: {len(free)} free parameters for {len(targets)} targets")
    labels = list(targets)
    goal = np.array([targets[k] for k in labels])
    free = list(free)

    def build(values):
        return fixed.with_(**{name: float(v) for name, v in zip(free, values)})

    def residuals(values):
        obs = burst_observables(build(values))
        return np.array([obs[k] for k in labels]) - goal

    if not free:
        r = residuals([])
        result = FitResult({}, float(np.linalg.norm(r)), 0, True, 0.0, 0.0, float(np.linalg.norm(r)), r,
                           "no free parameters")
        return fixed, result

    eps = 1e-9
    start = [min(max(getattr(fixed, name), eps), 1 - eps) for name in free]
    result = solve(residuals, start, names=free, transforms=["logit"] * len(free), tol=tol, verbose=verbose)
    if not result.converged:
        breakdown = ", ".join(f"{k}: {v:+.3e}" for k, v in zip(labels, result.residuals))
        raise ConvergenceError(f"calibration did not converge ({result.message}); residuals {breakdown}", result)
    return build([result.params[n] for n in free]), result


def residual_table(targets: Mapping[str, float], params: BurstParams) -> list[dict]:
    obs = burst_observables(params)
    return [{"observable": k, "target": v, "model": obs[k], "residual": obs[k] - v} for k, v in targets.items()]

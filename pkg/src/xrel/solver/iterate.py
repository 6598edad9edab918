"""Polarization fixed point P = K Psi P + K S with lambda continuation, and the E-form solve."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConvergenceError
from .grid import Grid
from .operators import K_field, apply_K, apply_gamma, apply_psi, cellwise

CONTRAST_GUARD = 16.0


class ContrastWarning(UserWarning):
    """Coefficient contrast exceeds the guard."""


class CoefficientField:
    """Symmetric coercive per-cell tensor L(x) with cached bounds.

    Parameters
    ----------
    grid : Grid
    data : ndarray, shape (*sizes, q, q)
    """

    def __init__(self, grid: Grid, data: np.ndarray):
        data = np.ascontiguousarray(data, dtype=float)
        q = grid.spec.q
        if data.shape != grid.sizes + (q, q):
            raise ValueError(f"coefficient shape {data.shape} does not match grid")
        if not np.all(np.isfinite(data)):
            raise ValueError("coefficient field has non-finite entries")
        asym = np.abs(data - np.swapaxes(data, -1, -2)).max()
        if asym > 1e-12 * max(1.0, np.abs(data).max()):
            raise ValueError(f"coefficient field is not symmetric (max asymmetry {asym:.2e})")
        ev = np.linalg.eigvalsh(data)
        self.grid = grid
        self.data = data
        self.alpha0 = float(ev[..., 0].min())
        self.beta0 = float(ev[..., -1].max())
        if self.alpha0 <= 0:
            raise ValueError("coefficient field is not coercive")
        self._K = {}

    @property
    def contrast(self) -> float:
        return self.beta0 / self.alpha0

    def K(self, L0, M) -> np.ndarray:
        key = (np.asarray(L0, dtype=float).tobytes(), np.asarray(M, dtype=float).tobytes())
        if key not in self._K:
            self._K[key] = K_field(self.data, L0, M)
        return self._K[key]

    @classmethod
    def homogeneous(cls, grid: Grid, L1) -> "CoefficientField":
        return cls(grid, np.broadcast_to(np.asarray(L1, dtype=float), grid.sizes + np.shape(L1)))


@dataclass(frozen=True)
class SolveOptions:
    tol: float = 1e-9
    max_iters: int = 500
    lambda_schedule: tuple = (0.25, 0.5, 0.75, 1.0)
    damping: float = 1.0
    fallback_damping: float = 0.5
    stage_tol: Optional[float] = None

    def __post_init__(self):
        sched = tuple(float(x) for x in self.lambda_schedule)
        object.__setattr__(self, "lambda_schedule", sched)
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if not sched or any(not 0 < x <= 1 for x in sched):
            raise ValueError("schedule entries must lie in (0, 1]")
        if not 0 < self.damping <= 1 or not 0 < self.fallback_damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


@dataclass
class SolveDiagnostics:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    stages: list = field(default_factory=list)
    final_residual: float = 0.0
    damping_used: list = field(default_factory=list)

    def to_dict(self):
        return {
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "stages": self.stages,
            "residual_history": self.residual_history,
        }


def _norm(F) -> float:
    return math.sqrt(float(np.vdot(F, F).real))


def _coeff(Lfield, grid=None) -> CoefficientField:
    if isinstance(Lfield, CoefficientField):
        return Lfield
    if grid is None:
        raise ValueError("pass a CoefficientField or a grid")
    return CoefficientField(grid, Lfield)


def _check_contrast(Lf: CoefficientField):
    if Lf.contrast > CONTRAST_GUARD:
        warnings.warn(f"contrast {Lf.contrast:.2f} exceeds guard {CONTRAST_GUARD}", ContrastWarning, stacklevel=3)


def iterate_polarization(S: np.ndarray, Lfield, L0, M, opts: SolveOptions = SolveOptions(), P0=None):
    """Solve P = lam K Psi P + lam K S on each lambda of the schedule.

    Each stage warm-starts from the previous one. The residual is
    ``||P - lam K Psi P - lam K S|| / ||lam K S||``; damping drops to the
    fallback value when the residual grows.

    Returns
    -------
    P : ndarray
        Polarization field at the last schedule entry.
    diag : SolveDiagnostics
    """
    Lf = _coeff(Lfield)
    grid = Lf.grid
    _check_contrast(Lf)
    K = Lf.K(L0, M)
    KS = apply_K(S, K)
    diag = SolveDiagnostics()
    P = np.zeros_like(KS) if P0 is None else np.array(P0, dtype=float)
    if _norm(KS) == 0.0:
        diag.stages = [{"lambda": lam, "iterations": 0, "residual": 0.0} for lam in opts.lambda_schedule]
        return np.zeros_like(KS), diag
    sched = opts.lambda_schedule
    for si, lam in enumerate(sched):
        last = si == len(sched) - 1
        tol = opts.tol if last or opts.stage_tol is None else max(opts.tol, opts.stage_tol)
        target = lam * KS
        nt = _norm(target)
        omega, prev = opts.damping, math.inf
        best, best_r = P, math.inf
        hist = []
        for it in range(opts.max_iters + 1):
            G = lam * apply_K(apply_psi(P, grid, L0, M), K) + target
            r = _norm(P - G) / nt
            hist.append(r)
            if r < best_r:
                best, best_r = P, r
            if r <= tol:
                break
            if it == opts.max_iters:
                diag.residual_history.extend(hist)
                raise ConvergenceError(
                    f"polarization iteration stalled at lambda={lam} with residual {best_r:.3e}",
                    best=best, residual=best_r, history=hist)
            if r > prev and omega > opts.fallback_damping:
                omega = opts.fallback_damping
            P = G if omega == 1.0 else (1 - omega) * P + omega * G
            prev = r
        diag.iterations += it
        diag.residual_history.extend(hist)
        diag.stages.append({"lambda": lam, "iterations": it, "residual": r})
        diag.damping_used.append(omega)
    diag.final_residual = r
    return P, diag


def polarization_partial_sums(S: np.ndarray, Lfield, L0, M, lam: float, order: int) -> list:
    """Partial sums P^0 = lam K S, P^{j+1} = lam K Psi P^j + lam K S for j < order."""
    Lf = _coeff(Lfield)
    K = Lf.K(L0, M)
    target = lam * apply_K(S, K)
    sums = [target]
    P = target
    for _ in range(order):
        P = lam * apply_K(apply_psi(P, Lf.grid, L0, M), K) + target
        sums.append(P)
    return sums


def e_form_damping(Lf: CoefficientField, L0) -> float:
    """2 / (a + b) with [a, b] the spectral range of L0^{-1/2} L(x) L0^{-1/2}, capped at 1."""
    w, V = np.linalg.eigh(L0)
    isq = (V / np.sqrt(w)) @ V.T
    ev = np.linalg.eigvalsh(isq @ Lf.data @ isq)
    return min(1.0, 2.0 / (float(ev[..., 0].min()) + float(ev[..., -1].max())))


def solve_E_form(H: np.ndarray, Lfield, L0, opts: SolveOptions = SolveOptions(), M=None):
    """Solve E = Gamma H - Gamma (L - L0) E and return (E, J, diag) with J = L E - H.

    With ``M`` given, the zero mode uses Gamma(0) = M, matching the closure of
    ``iterate_polarization``; the fluctuating part of E is then a gradient and
    its mean is -M times the mean polarization. The update is damped by
    ``e_form_damping`` so that it contracts for any coercive L; the undamped
    scheme diverges once L - L0 is large.
    """
    Lf = _coeff(Lfield)
    grid = Lf.grid
    dL = Lf.data - L0
    GH = apply_gamma(H, grid, L0, zero_mode=M)
    nGH = _norm(GH)
    diag = SolveDiagnostics()
    E = np.zeros_like(GH)
    if nGH == 0.0:
        return E, np.zeros_like(E), diag
    omega = e_form_damping(Lf, L0)
    r = math.inf
    for it in range(opts.max_iters + 1):
        G = GH - apply_gamma(apply_K(E, dL), grid, L0, zero_mode=M)
        r = _norm(G - E) / nGH
        diag.residual_history.append(r)
        if r <= opts.tol:
            break
        if it == opts.max_iters:
            raise ConvergenceError(f"E-form iteration stalled with residual {r:.3e}", best=E, residual=r,
                                   history=diag.residual_history)
        E = E + omega * (G - E)
    diag.iterations = it
    diag.final_residual = r
    diag.damping_used = [omega]
    J = apply_K(E, Lf.data) - H
    return E, J, diag

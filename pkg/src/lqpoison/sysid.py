"""Two-step system identification from batch data.

Step 1 fits the exact discrete-time model x_{k+1} = F x_k + G u_k by least
squares over the stacked regressors z_k = [x_k; u_k]. Step 2 converts to
continuous time through the alternating series

    accum = I - L/2 + L^2/3 - L^3/4 + ...,   L = F - I,

whose limit is log(I + L) L^-1, so A = accum L / dt equals log(F)/dt and
B = accum G / dt inverts the zero-order-hold integral. The series converges
exactly when spectral_radius(L) < 1, which is what the sampling-interval
gate on the plant guarantees.

Cost-weight estimation (``estimate_qr``) regresses the recorded costs on
the symmetric quadratic monomials of x and u; off-diagonal features carry
weight 2 so the fitted coefficients are exactly the entries of symmetric
Q and R, with no symmetry null-space in the normal equations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import linalg
from .data import BatchDataset
from .errors import (
    ConvergenceError,
    EstimationError,
    IdentifiabilityError,
)


@dataclass(frozen=True)
class DiscreteModel:
    """Fitted (F, G) with the mean squared one-step prediction error."""

    F: np.ndarray
    G: np.ndarray
    residual: float


@dataclass(frozen=True)
class SysIdEstimate:
    """Continuous-time estimate, optionally with fitted cost weights."""

    Ahat: np.ndarray
    Bhat: np.ndarray
    Qhat: np.ndarray | None = None
    Rhat: np.ndarray | None = None
    series_terms: int = 0


def _deficient_directions(Z: np.ndarray, rank: int, labels: list[str]) -> str:
    """Human-readable description of the null-space directions of Z."""
    _, _, Vt = np.linalg.svd(Z, full_matrices=True)
    descs = []
    for v in Vt[rank:]:
        terms = [
            f"{v[i]:+.2f}*{labels[i]}" for i in range(len(v)) if abs(v[i]) > 0.3
        ]
        descs.append(" ".join(terms) if terms else "(diffuse)")
    return "; ".join(descs)


def estimate_fg(d: BatchDataset) -> DiscreteModel:
    """Least-squares fit of the one-step model x_{k+1} = F x_k + G u_k."""
    n, m = d.n, d.m
    if d.N < n + m + 1:
        raise IdentifiabilityError(
            f"need at least {n + m + 1} samples to identify, got {d.N}"
        )
    Z = np.hstack([d.xs[:-1], d.us[:-1]])
    X = d.xs[1:]
    labels = [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
    svals = np.linalg.svd(Z, compute_uv=False)
    cutoff = max(Z.shape) * np.finfo(float).eps * (svals[0] if len(svals) else 0.0)
    rank = int(np.sum(svals > cutoff))
    if rank < n + m:
        raise IdentifiabilityError(
            f"regressor matrix is rank deficient ({rank} < {n + m}); "
            f"unexcited directions: {_deficient_directions(Z, rank, labels)}"
        )
    Theta = linalg.lstsq(Z, X)
    F = Theta[:n].T
    G = Theta[n:].T
    resid = float(np.linalg.norm(Z @ Theta - X, "fro") ** 2 / (d.N - 1))
    return DiscreteModel(F=F, G=G, residual=resid)


def _log_series(L: np.ndarray, eps: float, max_iter: int) -> tuple[np.ndarray, int]:
    """Truncated alternating series for log(I + L) L^-1; returns (accum, terms)."""
    n = L.shape[0]
    accum = np.eye(n)
    term = np.eye(n)
    terms = 0
    for i in range(max_iter):
        term = -((i + 1) / (i + 2)) * (L @ term)
        accum = accum + term
        terms = i + 1
        if np.linalg.norm(term, "fro") <= eps:
            break
    return accum, terms


def log_indirect(
    F, G, dt: float, eps: float = 0.01, max_iter: int = 500
) -> tuple[np.ndarray, np.ndarray]:
    """Continuous (A, B) from a discrete (F, G) via the matrix-log series.

    The default ``eps`` favors speed over the last few digits; callers that
    need round-trip accuracy (the learner pipeline, tests) pass something
    like 1e-10 or 1e-12.
    """
    F = linalg.as_matrix(F, "F")
    G = linalg.as_matrix(G, "G")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    L = F - np.eye(F.shape[0])
    rho = linalg.spectral_radius(L)
    if rho >= 1.0:
        raise ConvergenceError(
            f"log series diverges: spectral_radius(F - I) = {rho:.4g} >= 1; "
            "collect data with a smaller sampling interval",
            residual=rho,
        )
    accum, _ = _log_series(L, eps, max_iter)
    return accum @ L / dt, accum @ G / dt


def _quad_features(xs: np.ndarray, us: np.ndarray) -> tuple[np.ndarray, list[str]]:
    n, m = xs.shape[1], us.shape[1]
    cols, labels = [], []
    for i in range(n):
        cols.append(xs[:, i] ** 2)
        labels.append(f"x{i}^2")
    for i in range(n):
        for j in range(i + 1, n):
            cols.append(2.0 * xs[:, i] * xs[:, j])
            labels.append(f"x{i}*x{j}")
    for i in range(m):
        cols.append(us[:, i] ** 2)
        labels.append(f"u{i}^2")
    for i in range(m):
        for j in range(i + 1, m):
            cols.append(2.0 * us[:, i] * us[:, j])
            labels.append(f"u{i}*u{j}")
    return np.column_stack(cols), labels


def estimate_qr(d: BatchDataset) -> tuple[np.ndarray, np.ndarray]:
    """Fit symmetric (Q, R) to the recorded costs by least squares.

    Q is projected onto the PSD cone after the fit; R is required to come
    out positive definite, otherwise the fit is rejected.
    """
    n, m = d.n, d.m
    n_params = n * (n + 1) // 2 + m * (m + 1) // 2
    Phi, labels = _quad_features(d.xs, d.us)
    if d.N < n_params:
        raise IdentifiabilityError(
            f"need at least {n_params} samples to fit cost weights, got {d.N}"
        )
    svals = np.linalg.svd(Phi, compute_uv=False)
    cutoff = max(Phi.shape) * np.finfo(float).eps * (svals[0] if len(svals) else 0.0)
    rank = int(np.sum(svals > cutoff))
    if rank < n_params:
        raise IdentifiabilityError(
            f"quadratic features are rank deficient ({rank} < {n_params}); "
            f"dependent combinations: {_deficient_directions(Phi, rank, labels)}"
        )
    theta = linalg.lstsq(Phi, d.cs)
    Q = np.zeros((n, n))
    R = np.zeros((m, m))
    idx = 0
    for i in range(n):
        Q[i, i] = theta[idx]
        idx += 1
    for i in range(n):
        for j in range(i + 1, n):
            Q[i, j] = Q[j, i] = theta[idx]
            idx += 1
    for i in range(m):
        R[i, i] = theta[idx]
        idx += 1
    for i in range(m):
        for j in range(i + 1, m):
            R[i, j] = R[j, i] = theta[idx]
            idx += 1
    Q = linalg.psd_project(Q)
    R = 0.5 * (R + R.T)
    w, _ = linalg.sym_eig(R)
    if w[0] <= 0:
        raise EstimationError(
            f"fitted control weight is not positive definite (min eig {w[0]:.3e})"
        )
    return Q, R


def identify(
    d: BatchDataset, eps: float = 1e-10, max_iter: int = 500, with_qr: bool = False
) -> SysIdEstimate:
    """Full identification chain: (F, G) fit, log conversion, optional (Q, R)."""
    model = estimate_fg(d)
    L = model.F - np.eye(d.n)
    rho = linalg.spectral_radius(L)
    if rho >= 1.0:
        raise ConvergenceError(
            f"log series diverges: spectral_radius(F - I) = {rho:.4g} >= 1",
            residual=rho,
        )
    accum, terms = _log_series(L, eps, max_iter)
    Ahat = accum @ L / d.dt
    Bhat = accum @ model.G / d.dt
    Qhat = Rhat = None
    if with_qr:
        Qhat, Rhat = estimate_qr(d)
    return SysIdEstimate(
        Ahat=Ahat, Bhat=Bhat, Qhat=Qhat, Rhat=Rhat, series_terms=terms
    )


def model_write(est: SysIdEstimate, dt: float, path: str) -> None:
    n, m = est.Ahat.shape[0], est.Bhat.shape[1]
    doc = {
        "n": n,
        "m": m,
        "dt": dt,
        "Ahat": est.Ahat.tolist(),
        "Bhat": est.Bhat.tolist(),
        "Qhat": None if est.Qhat is None else est.Qhat.tolist(),
        "Rhat": None if est.Rhat is None else est.Rhat.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def model_read(path: str) -> tuple[SysIdEstimate, float]:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    est = SysIdEstimate(
        Ahat=np.array(doc["Ahat"], dtype=float),
        Bhat=np.array(doc["Bhat"], dtype=float),
        Qhat=None if doc.get("Qhat") is None else np.array(doc["Qhat"], dtype=float),
        Rhat=None if doc.get("Rhat") is None else np.array(doc["Rhat"], dtype=float),
    )
    return est, float(doc["dt"])

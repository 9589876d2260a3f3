"""End-to-end scenario orchestration.

A scenario run produces the full story: collect clean data, emulate the
learner on it (identification + Riccati solve with the true cost weights),
synthesize the attack, re-run the learner on the poisoned data, and compare
closed-loop behaviour of both learned gains on the true plant. Results are
collected in a ``ScenarioReport`` and written as JSON plus plot-ready CSVs.

The report JSON is byte-deterministic for a fixed config and seed; wall
clock timings go to a separate ``timings.json`` sidecar so reruns produce
identical reports.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import linalg
from .data import BatchDataset, ExcitationPolicy, simulate_zoh
from .lq import LQSystem, RiccatiSolution, care_solve
from .poison import (
    AdmmConfig,
    AttackResult,
    AttackSpec,
    admm_solve,
    attack_cost,
    generate_poisoned,
    induced_gain,
)
from .sysid import SysIdEstimate, estimate_qr, identify

DIVERGENCE_NORM = 1e9
LEARNER_SERIES_EPS = 1e-10  # tight log-series tolerance for the learner emulation


@dataclass(frozen=True)
class Scenario:
    system: LQSystem
    excitation: ExcitationPolicy
    N: int
    Ktarget: np.ndarray
    admm: AdmmConfig = AdmmConfig()
    horizon: int = 1000

    def __post_init__(self):
        if self.N < self.system.n + self.system.m + 1:
            raise ValueError(
                f"N={self.N} too small for identification "
                f"(need {self.system.n + self.system.m + 1})"
            )
        object.__setattr__(
            self, "Ktarget", linalg.as_matrix(self.Ktarget, "Ktarget")
        )


@dataclass(frozen=True)
class ClosedLoopResult:
    """Trajectory of the true plant under a fixed gain, with Riemann cost."""

    states: np.ndarray  # (steps+1, n), truncated early when diverged
    cost: float
    diverged: bool


@dataclass
class ScenarioReport:
    name: str
    Kstar: np.ndarray | None = None
    Khat_clean: np.ndarray | None = None
    Atilde: np.ndarray | None = None
    Khat_poisoned: np.ndarray | None = None
    Ktarget: np.ndarray | None = None
    gain_error_to_target: float | None = None
    attack_cost: float | None = None
    attack_cost_series: np.ndarray | None = None
    converged: bool = False
    admm_residuals: list[float] = field(default_factory=list)
    clean_trajectory: np.ndarray | None = None
    poisoned_trajectory: np.ndarray | None = None
    clean_cost: float | None = None
    poisoned_cost: float | None = None
    dataset: BatchDataset | None = None
    poisoned_dataset: BatchDataset | None = None
    timings: dict[str, float] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)


def run_learner(
    d: BatchDataset, Q, R, eps: float = LEARNER_SERIES_EPS, max_iter: int = 500
) -> tuple[SysIdEstimate, RiccatiSolution]:
    """Emulate the victim: identify (A, B) from data, then solve for the gain.

    The learner is assumed to know the true cost weights, so only the
    dynamics come from data.
    """
    est = identify(d, eps=eps, max_iter=max_iter)
    sol = care_solve(est.Ahat, est.Bhat, Q, R)
    return est, sol


def run_attack(
    d: BatchDataset, Ktarget, cfg: AdmmConfig | None = None
) -> AttackResult:
    """Full attacker chain on a clean dataset.

    Identifies the dynamics and the cost weights from the data, solves for
    the planted Atilde, and rewrites the state column. A run that stalls
    above the primal tolerance still returns (converged=False) so callers
    can inspect the near-miss.
    """
    cfg = cfg or AdmmConfig()
    est = identify(d, eps=LEARNER_SERIES_EPS)
    Qhat, Rhat = estimate_qr(d)
    spec = AttackSpec(
        Ahat=est.Ahat, Bhat=est.Bhat, Qhat=Qhat, Rhat=Rhat, Ktarget=Ktarget
    )
    state = admm_solve(spec, cfg)
    poisoned = generate_poisoned(state.Atilde, est.Bhat, d)
    total, _ = attack_cost(d, poisoned)
    gain_err = float(
        np.linalg.norm(induced_gain(spec, state.P) - spec.Ktarget, "fro")
    )
    return AttackResult(
        Atilde=state.Atilde,
        P=state.P,
        gain_error=gain_err,
        poisoned=poisoned,
        attack_cost=total,
        converged=state.converged,
        residuals=state.residuals,
    )


def evaluate_closed_loop(sys: LQSystem, K, horizon: int) -> ClosedLoopResult:
    """Simulate the true plant under u = K x with ZOH at the plant's dt.

    An unstable loop is truncated once the state norm passes
    ``DIVERGENCE_NORM`` and flagged, not raised: diverging is a legitimate
    outcome the caller wants to see.
    """
    K = linalg.as_matrix(K, "K")
    F, G = linalg.zoh_pair(sys.A, sys.B, sys.dt)
    states = [sys.x0.copy()]
    cost = 0.0
    x = sys.x0.copy()
    diverged = False
    for _ in range(horizon):
        u = K @ x
        cost += float(x @ sys.Q @ x + u @ sys.R @ u) * sys.dt
        x = F @ x + G @ u
        states.append(x.copy())
        if np.linalg.norm(x) > DIVERGENCE_NORM:
            diverged = True
            break
    return ClosedLoopResult(states=np.array(states), cost=cost, diverged=diverged)


def settling_step(states: np.ndarray, frac: float = 0.05) -> int | None:
    """First step index after which ||x|| stays below frac * ||x0||, if any."""
    norms = np.linalg.norm(states, axis=1)
    thr = frac * norms[0]
    below = norms < thr
    for k in range(len(norms)):
        if below[k:].all():
            return k
    return None


def run_scenario(s: Scenario, name: str = "scenario") -> ScenarioReport:
    """Run all stages; a stage failure is recorded and truncates the run."""
    report = ScenarioReport(name=name, Ktarget=s.Ktarget)
    sys = s.system

    def stage(label, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as e:  # recorded; later stages are skipped
            report.errors[label] = f"{type(e).__name__}: {e}"
            return None
        finally:
            report.timings[label] = time.perf_counter() - t0
        return out

    sol_true = stage("optimal_gain", lambda: care_solve(sys.A, sys.B, sys.Q, sys.R))
    if sol_true is not None:
        report.Kstar = sol_true.K

    d = stage("simulate", lambda: simulate_zoh(sys, s.excitation, s.N))
    if d is None:
        return report
    report.dataset = d

    clean = stage("learn_clean", lambda: run_learner(d, sys.Q, sys.R))
    if clean is None:
        return report
    report.Khat_clean = clean[1].K

    attack = stage("attack", lambda: run_attack(d, s.Ktarget, s.admm))
    if attack is None:
        return report
    report.Atilde = attack.Atilde
    report.converged = attack.converged
    report.admm_residuals = list(attack.residuals)
    report.attack_cost = attack.attack_cost
    _, report.attack_cost_series = attack_cost(d, attack.poisoned)
    report.poisoned_dataset = attack.poisoned

    poisoned = stage(
        "learn_poisoned", lambda: run_learner(attack.poisoned, sys.Q, sys.R)
    )
    if poisoned is None:
        return report
    report.Khat_poisoned = poisoned[1].K
    report.gain_error_to_target = float(
        np.linalg.norm(report.Khat_poisoned - s.Ktarget, "fro")
    )

    evals = stage(
        "evaluate",
        lambda: (
            evaluate_closed_loop(sys, report.Khat_clean, s.horizon),
            evaluate_closed_loop(sys, report.Khat_poisoned, s.horizon),
        ),
    )
    if evals is not None:
        report.clean_trajectory = evals[0].states
        report.clean_cost = evals[0].cost
        report.poisoned_trajectory = evals[1].states
        report.poisoned_cost = evals[1].cost
    return report


def _mat(M) -> list | None:
    return None if M is None else np.asarray(M).tolist()


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _trajectory_csv(states: np.ndarray, dt: float) -> str:
    n = states.shape[1]
    lines = [",".join(["step", "t"] + [f"x{i}" for i in range(n)])]
    for k, row in enumerate(states):
        lines.append(",".join([str(k), repr(k * dt)] + [repr(float(v)) for v in row]))
    return "\n".join(lines) + "\n"


def report_write(report: ScenarioReport, outdir: str, dt: float) -> None:
    """Write report.json, timings.json, and the plot-ready CSV series."""
    os.makedirs(outdir, exist_ok=True)
    doc = {
        "scenario": report.name,
        "Kstar": _mat(report.Kstar),
        "Khat_clean": _mat(report.Khat_clean),
        "Atilde": _mat(report.Atilde),
        "Khat_poisoned": _mat(report.Khat_poisoned),
        "Ktarget": _mat(report.Ktarget),
        "gain_error_to_target": report.gain_error_to_target,
        "attack_cost": report.attack_cost,
        "converged": report.converged,
        "admm_residuals": report.admm_residuals,
    }
    if report.errors:
        doc["errors"] = dict(report.errors)
    _write_atomic(
        os.path.join(outdir, "report.json"),
        json.dumps(doc, indent=2, sort_keys=True) + "\n",
    )
    _write_atomic(
        os.path.join(outdir, "timings.json"),
        json.dumps({"timings_s": report.timings}, indent=2, sort_keys=True) + "\n",
    )
    if report.clean_trajectory is not None:
        _write_atomic(
            os.path.join(outdir, "clean_trajectory.csv"),
            _trajectory_csv(report.clean_trajectory, dt),
        )
    if report.poisoned_trajectory is not None:
        _write_atomic(
            os.path.join(outdir, "poisoned_trajectory.csv"),
            _trajectory_csv(report.poisoned_trajectory, dt),
        )
    if report.attack_cost_series is not None:
        lines = ["step,cumulative_cost"]
        for k, v in enumerate(report.attack_cost_series):
            lines.append(f"{k},{float(v)!r}")
        _write_atomic(
            os.path.join(outdir, "attack_cost.csv"), "\n".join(lines) + "\n"
        )

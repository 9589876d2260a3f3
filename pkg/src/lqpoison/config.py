"""Scenario configuration files and the bundled case studies.

A scenario config is a JSON document with explicit matrices (arrays of row
arrays), a single seed that drives all randomness, and the solver knobs:

    {
      "name": "case1",
      "system": {"A": [[...]], "B": [[...]], "Q": [[...]], "R": [[...]],
                 "x0": [...], "dt": 0.01},
      "excitation": {"kind": "iid-uniform", "amplitude": 1.0},
      "N": 500,
      "seed": 42,
      "Ktarget": [[...]],
      "admm": {"mu": 10.0, "n_iter": 500, "primal_tol": 1e-6,
               "inner_tol": 1e-8},
      "horizon": 1000
    }

Two configs ship with the package: ``case1`` (a 4-state plant with two
inputs and an unstable open loop) and ``case2`` (a quarter-car active
suspension driven by the actuator force). The suspension matrices can also
be rebuilt from the physical constants, which the reproduction harness uses
to cross-check the bundled target gain.
"""

from __future__ import annotations

import json
from importlib import resources

import numpy as np

from .data import ExcitationPolicy
from .errors import ConfigError, LearnabilityError
from .lq import LQSystem
from .pipeline import Scenario
from .poison import AdmmConfig

BUNDLED_CASES = ("case1", "case2")

# Reference gains the bundled case studies are expected to reproduce
# (2-decimal reference values; see tests/test_acceptance.py for tolerances).
CASE1_KSTAR_REF = np.array(
    [[-2.87, -0.38, -0.34, -1.24], [4.32, 1.14, 3.63, 4.71]]
)
CASE2_KSTAR_REF = np.array([[-0.31, -2.57, 30.6, 2.22]])

# Quarter-car suspension constants shared by case2 and its cross-check.
SUSPENSION_BODY_MASS = 300.0  # kg
SUSPENSION_WHEEL_MASS = 60.0  # kg
SUSPENSION_DAMPER = 1000.0  # N/(m/s)
SUSPENSION_SPRING = 16000.0  # N/m
SUSPENSION_TIRE_STIFFNESS = 190000.0  # N/m
CASE2_ATTACK_SPRING = 2000.0  # N/m, the softened spring the attacker plants


def suspension_matrices(
    spring: float = SUSPENSION_SPRING,
    body_mass: float = SUSPENSION_BODY_MASS,
    wheel_mass: float = SUSPENSION_WHEEL_MASS,
    damper: float = SUSPENSION_DAMPER,
    tire_stiffness: float = SUSPENSION_TIRE_STIFFNESS,
) -> tuple[np.ndarray, np.ndarray]:
    """State-space (A, B) of the quarter-car model in kN actuator units.

    State order: body travel, body velocity, wheel travel, wheel velocity.
    """
    mb, mw, bs, ks, kt = body_mass, wheel_mass, damper, spring, tire_stiffness
    A = np.array(
        [
            [0.0, 1.0, 0.0, 0.0],
            [-ks / mb, -bs / mb, ks / mb, bs / mb],
            [0.0, 0.0, 0.0, 1.0],
            [ks / mw, bs / mw, (-ks - kt) / mw, -bs / mw],
        ]
    )
    B = np.array([[0.0], [1e3 / mb], [0.0], [-1e3 / mw]])
    return A, B


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ConfigError("missing required field", field=f"{where}{key}")
    return doc[key]


def scenario_from_dict(doc: dict) -> tuple[Scenario, str]:
    """Build a Scenario from a parsed config document; returns (scenario, name)."""
    name = doc.get("name", "scenario")
    sys_doc = _require(doc, "system", "")
    seed = int(doc.get("seed", 0))
    try:
        system = LQSystem(
            A=np.array(_require(sys_doc, "A", "system."), dtype=float),
            B=np.array(_require(sys_doc, "B", "system."), dtype=float),
            Q=np.array(_require(sys_doc, "Q", "system."), dtype=float),
            R=np.array(_require(sys_doc, "R", "system."), dtype=float),
            x0=np.array(_require(sys_doc, "x0", "system."), dtype=float),
            dt=float(_require(sys_doc, "dt", "system.")),
        )
    except LearnabilityError:
        raise
    except (TypeError, ValueError) as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(str(e), field="system") from e

    exc_doc = doc.get("excitation", {})
    try:
        excitation = ExcitationPolicy(
            kind=exc_doc.get("kind", "iid-uniform"),
            amplitude=float(exc_doc.get("amplitude", 1.0)),
            gain=None
            if exc_doc.get("gain") is None
            else np.array(exc_doc["gain"], dtype=float),
            seed=seed,
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), field="excitation") from e

    admm_doc = doc.get("admm", {})
    try:
        admm = AdmmConfig(
            mu=float(admm_doc.get("mu", 10.0)),
            n_iter=int(admm_doc.get("n_iter", 500)),
            primal_tol=float(admm_doc.get("primal_tol", 1e-6)),
            inner_tol=float(admm_doc.get("inner_tol", 1e-8)),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e), field="admm") from e

    try:
        scenario = Scenario(
            system=system,
            excitation=excitation,
            N=int(_require(doc, "N", "")),
            Ktarget=np.array(_require(doc, "Ktarget", ""), dtype=float),
            admm=admm,
            horizon=int(doc.get("horizon", 1000)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e
    return scenario, name


def scenario_to_dict(s: Scenario, name: str) -> dict:
    doc = {
        "name": name,
        "system": {
            "A": s.system.A.tolist(),
            "B": s.system.B.tolist(),
            "Q": s.system.Q.tolist(),
            "R": s.system.R.tolist(),
            "x0": s.system.x0.tolist(),
            "dt": s.system.dt,
        },
        "excitation": {
            "kind": s.excitation.kind,
            "amplitude": s.excitation.amplitude,
        },
        "N": s.N,
        "seed": s.excitation.seed,
        "Ktarget": s.Ktarget.tolist(),
        "admm": {
            "mu": s.admm.mu,
            "n_iter": s.admm.n_iter,
            "primal_tol": s.admm.primal_tol,
            "inner_tol": s.admm.inner_tol,
        },
        "horizon": s.horizon,
    }
    if s.excitation.gain is not None:
        doc["excitation"]["gain"] = np.asarray(s.excitation.gain).tolist()
    return doc


def load_scenario(path: str) -> tuple[Scenario, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return scenario_from_dict(doc)


def load_bundled(case: str) -> tuple[Scenario, str]:
    if case not in BUNDLED_CASES:
        raise ConfigError(
            f"unknown case {case!r}; bundled cases: {', '.join(BUNDLED_CASES)}"
        )
    text = (
        resources.files("lqpoison").joinpath(f"scenarios/{case}.json").read_text()
    )
    return scenario_from_dict(json.loads(text))

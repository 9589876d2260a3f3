"""Batch datasets sampled from an LQ plant under zero-order hold.

A dataset is the ordered collection {(x_k, u_k, c_k)} with x_k the state at
time k*dt, u_k the input held constant on [k*dt, (k+1)*dt), and c_k the
instantaneous quadratic cost. Generation uses the exact ZOH discretization
x_{k+1} = F x_k + G u_k, so the data is exactly consistent with the model
class the identification stage fits (no integrator error, no noise).

Datasets serialize to CSV with a JSON metadata sidecar. Floats are written
as shortest round-trip decimals so read(write(d)) == d bit for bit.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np

from . import linalg
from .errors import DatasetFormatError
from .lq import LQSystem

EXCITATION_KINDS = ("iid-uniform", "prbs", "gain-plus-dither")


class SamplePoint(NamedTuple):
    k: int
    x: np.ndarray
    u: np.ndarray
    c: float


@dataclass(frozen=True)
class ExcitationPolicy:
    """How inputs are chosen while collecting the batch.

    ``iid-uniform`` draws each input uniformly from [-amplitude, amplitude],
    ``prbs`` draws random +/-amplitude levels, and ``gain-plus-dither``
    applies u = gain @ x plus a uniform dither (closed-loop collection).
    All randomness comes from a PCG64 generator seeded with ``seed``, which
    makes datasets reproducible across runs and platforms.
    """

    kind: str = "iid-uniform"
    amplitude: float = 1.0
    gain: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in EXCITATION_KINDS:
            raise ValueError(f"unknown excitation kind {self.kind!r}")
        if self.amplitude <= 0:
            raise ValueError(f"amplitude must be positive, got {self.amplitude}")
        if self.kind == "gain-plus-dither" and self.gain is None:
            raise ValueError("gain-plus-dither requires a gain matrix")


@dataclass(frozen=True)
class BatchDataset:
    """N samples of (state, held input, instantaneous cost) at spacing dt."""

    xs: np.ndarray  # (N, n)
    us: np.ndarray  # (N, m)
    cs: np.ndarray  # (N,)
    dt: float
    seed: int | None = None

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        us = np.asarray(self.us, dtype=float)
        cs = np.asarray(self.cs, dtype=float).reshape(-1)
        if xs.ndim != 2 or us.ndim != 2:
            raise ValueError("xs and us must be 2-D arrays")
        if not (len(xs) == len(us) == len(cs)):
            raise ValueError("xs, us, cs must have the same length")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "us", us)
        object.__setattr__(self, "cs", cs)

    @property
    def N(self) -> int:
        return self.xs.shape[0]

    @property
    def n(self) -> int:
        return self.xs.shape[1]

    @property
    def m(self) -> int:
        return self.us.shape[1]

    def __len__(self) -> int:
        return self.N

    def __getitem__(self, k: int) -> SamplePoint:
        return SamplePoint(k=k, x=self.xs[k], u=self.us[k], c=float(self.cs[k]))

    def __iter__(self) -> Iterator[SamplePoint]:
        for k in range(self.N):
            yield self[k]


def simulate_zoh(sys: LQSystem, policy: ExcitationPolicy, N: int) -> BatchDataset:
    """Collect N samples from the plant under the excitation policy.

    States propagate exactly by (F, G) = zoh_pair(A, B, dt); costs are the
    exact quadratic x^T Q x + u^T R u at each sample instant. Deterministic
    given the policy seed.
    """
    if N < 2:
        raise ValueError(f"need at least 2 samples, got N={N}")
    F, G = linalg.zoh_pair(sys.A, sys.B, sys.dt)
    rng = np.random.Generator(np.random.PCG64(policy.seed))
    n, m = sys.n, sys.m
    gain = None if policy.gain is None else np.asarray(policy.gain, dtype=float)
    xs = np.empty((N, n))
    us = np.empty((N, m))
    cs = np.empty(N)
    x = sys.x0.copy()
    for k in range(N):
        if policy.kind == "iid-uniform":
            u = rng.uniform(-policy.amplitude, policy.amplitude, size=m)
        elif policy.kind == "prbs":
            u = policy.amplitude * (2.0 * rng.integers(0, 2, size=m) - 1.0)
        else:  # gain-plus-dither
            u = gain @ x + rng.uniform(-policy.amplitude, policy.amplitude, size=m)
        xs[k] = x
        us[k] = u
        cs[k] = x @ sys.Q @ x + u @ sys.R @ u
        x = F @ x + G @ u
    return BatchDataset(xs=xs, us=us, cs=cs, dt=sys.dt, seed=policy.seed)


def _meta_path(path: str) -> str:
    base, _ = os.path.splitext(path)
    return base + ".meta.json"


def dataset_write(d: BatchDataset, path: str) -> None:
    """Write CSV (header k,t,x*,u*,c) plus the .meta.json sidecar."""
    cols = (
        ["k", "t"]
        + [f"x{i}" for i in range(d.n)]
        + [f"u{i}" for i in range(d.m)]
        + ["c"]
    )
    lines = [",".join(cols)]
    for k in range(d.N):
        vals = [str(k), repr(k * d.dt)]
        vals += [repr(float(v)) for v in d.xs[k]]
        vals += [repr(float(v)) for v in d.us[k]]
        vals.append(repr(float(d.cs[k])))
        lines.append(",".join(vals))
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
    meta = {"dt": d.dt, "n": d.n, "m": d.m, "seed": d.seed}
    with open(_meta_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def dataset_read(path: str) -> BatchDataset:
    """Read a dataset written by ``dataset_write``."""
    meta_file = _meta_path(path)
    if not os.path.exists(meta_file):
        raise DatasetFormatError(f"missing metadata sidecar {meta_file}")
    with open(meta_file, encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"bad metadata JSON: {e}") from e
    try:
        dt, n, m = float(meta["dt"]), int(meta["n"]), int(meta["m"])
        seed = meta.get("seed")
    except (KeyError, TypeError, ValueError) as e:
        raise DatasetFormatError(f"metadata missing/invalid field: {e}") from e

    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DatasetFormatError("empty dataset file", line=1)
    expected_header = (
        ["k", "t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)] + ["c"]
    )
    header = lines[0].split(",")
    if header != expected_header:
        raise DatasetFormatError(
            f"header mismatch: expected {','.join(expected_header)!r}", line=1
        )
    ncols = len(expected_header)
    xs, us, cs = [], [], []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != ncols:
            raise DatasetFormatError(
                f"expected {ncols} columns, got {len(parts)}", line=lineno
            )
        try:
            k = int(parts[0])
            row = [float(p) for p in parts[1:]]
        except ValueError as e:
            raise DatasetFormatError(f"bad number: {e}", line=lineno) from e
        if k != len(xs):
            raise DatasetFormatError(
                f"sample index {k} out of order (expected {len(xs)})", line=lineno
            )
        xs.append(row[1 : 1 + n])
        us.append(row[1 + n : 1 + n + m])
        cs.append(row[-1])
    if not xs:
        raise DatasetFormatError("dataset has no sample rows", line=2)
    return BatchDataset(
        xs=np.array(xs), us=np.array(us), cs=np.array(cs), dt=dt, seed=seed
    )

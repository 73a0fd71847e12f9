"""Observability table and parameterization-singularity sweep.

Both produce flat rows that the CLI writes as CSV; column orders are fixed by
``TABLE_COLUMNS`` and ``SWEEP_COLUMNS``.
"""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation

from .baseline_param import (
    CpPlane,
    PlueckerEdge,
    PlueckerState,
    build_pluecker_matrix,
    cp_point_jacobian,
    pluecker_translation_directions,
    sp_point_jacobian,
)
from .errors import InvalidArgument
from .kinematics import ImuState
from .observability import (
    GAP_MIN,
    NULL_REL_TOL,
    annihilation_residual,
    build_basis_matrix,
    claimed_null_basis,
    null_containment,
    null_exclusion,
    numeric_nullspace,
    predicted_unobs_dim,
    span_dimension,
)
from .simulation import Scenario
from .sp_geometry import plane_from_geometric

TABLE_SCHEMA_VERSION = 1
SWEEP_SCHEMA_VERSION = 1
TABLE_COLUMNS = (
    "scenario", "rS", "rE", "D1", "D2", "D3", "predicted", "numeric", "gap_ratio",
    "annihilation_residual", "complete", "match", "corrections",
)
SWEEP_COLUMNS = (
    "param", "feature", "quantity", "value", "jacobian_norm", "nullity", "predicted_nullity",
    "translation_exclusion",
)
SWEEP_OA = (1.0, 1e-2, 1e-4, 1e-6)
SWEEP_TAU = (1.0, 0.0)
SWEEP_PARAMS = ("sp", "cp", "pluecker")
ANNIHILATION_TOL = 1e-9
CONTAINMENT_TOL = 1e-8


def random_imu_state(rng, min_trace: float = 0.5) -> ImuState:
    """Uniform attitude kept away from the 180 degree CGR singularity, other blocks in [-1, 1]."""
    while True:
        C = Rotation.random(random_state=int(rng.integers(2**31))).as_matrix()
        if 1.0 + np.trace(C) >= min_trace:
            break
    return ImuState(C, *(rng.uniform(-1.0, 1.0, 3) for _ in range(4)))


@dataclass
class TableRow:
    scenario: str
    rS: int
    rE: int
    D1: bool
    D2: bool
    D3: bool
    predicted: int
    numeric: int
    gap_ratio: float
    annihilation_residual: float
    complete: bool
    match: bool
    corrections: str

    @property
    def passed(self) -> bool:
        return (self.match and self.complete and self.gap_ratio >= GAP_MIN
                and self.annihilation_residual <= ANNIHILATION_TOL)

    def as_csv(self) -> dict:
        out = asdict(self)
        out["gap_ratio"] = f"{self.gap_ratio:.6e}"
        out["annihilation_residual"] = f"{self.annihilation_residual:.6e}"
        for key in ("D1", "D2", "D3", "complete", "match"):
            out[key] = str(out[key]).lower()
        return out


def table_row(scenario: Scenario, states: int = 5, seed: int = 0) -> TableRow:
    """Check the predicted unobservable dimension at ``states`` random IMU states."""
    if states < 1:
        raise InvalidArgument("need at least one evaluation state")
    flags = scenario.realized_flags()
    predicted = predicted_unobs_dim(flags)
    rng = np.random.default_rng(seed)
    nullities, gaps, residuals, complete = [], [], [], True
    corrections: tuple = ()
    for _ in range(states):
        x = scenario.full_state(random_imu_state(rng))
        M = build_basis_matrix(x, scenario.g)
        res = numeric_nullspace(M, NULL_REL_TOL)
        claimed = claimed_null_basis(x, flags, scenario.g)
        corrections = claimed.corrections
        nullities.append(res.nullity)
        gaps.append(res.gap_ratio)
        residuals.append(annihilation_residual(M, claimed))
        inside = null_containment(res.basis, claimed.columns).min() >= 1.0 - CONTAINMENT_TOL
        complete &= bool(inside and span_dimension(claimed.columns) == res.nullity)
    off = [n for n in nullities if n != predicted]
    numeric = off[0] if off else predicted
    return TableRow(
        scenario=scenario.name, rS=flags.rS, rE=flags.rE, D1=flags.D1, D2=flags.D2, D3=flags.D3,
        predicted=predicted, numeric=numeric, gap_ratio=float(min(gaps)),
        annihilation_residual=float(max(residuals)), complete=complete, match=not off,
        corrections=";".join(corrections),
    )


def obsv_table(scenarios, states: int = 5, seed: int = 0) -> list[TableRow]:
    rows = [table_row(s, states, seed) for s in scenarios]
    return sorted(rows, key=lambda r: r.scenario)


# ------------------------------------------------------------------ sweep

_SWEEP_NORMAL = np.array([0.0, 0.0, -1.0])
_SWEEP_POINT = np.array([1.0, 0.0, 0.0])   # unit, off the normal axis
# edge k: direction l_k, moment direction d_k; the d_k span R^3
_SWEEP_EDGES = (
    (np.array([0.0, 0.0, 1.0]), np.array([1.0, 0.0, 0.0])),
    (np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])),
    (np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0])),
)


def _sweep_row(**kw) -> dict:
    row = dict.fromkeys(SWEEP_COLUMNS, "")
    row.update({k: (f"{v:.6e}" if isinstance(v, float) else v) for k, v in kw.items()})
    return row


def sweep_scenario(tau: float) -> Scenario:
    """Three edges with moments ``tau d_k``; at ``tau = 0`` all pass through the origin."""
    return Scenario(name=f"edges-3-tau-{tau:g}", edges=tuple((l, tau * d) for l, d in _SWEEP_EDGES))


def singularity_sweep(param: str, seed: int = 0) -> list[dict]:
    """Plane rows report the point-residual Jacobian norm; edge rows report nullity."""
    if param not in SWEEP_PARAMS:
        raise InvalidArgument(f"unknown parameterization {param!r}; expected one of {SWEEP_PARAMS}")
    rows = []
    if param in ("sp", "cp"):
        for oa in SWEEP_OA:
            if param == "cp":
                J = cp_point_jacobian(CpPlane(-oa * _SWEEP_NORMAL), _SWEEP_POINT)
            else:
                J = sp_point_jacobian(plane_from_geometric(_SWEEP_NORMAL, oa), _SWEEP_POINT)
            rows.append(_sweep_row(param=param, feature="plane", quantity="OA", value=oa,
                                   jacobian_norm=float(np.linalg.norm(J))))
    if param in ("sp", "pluecker"):
        imu = random_imu_state(np.random.default_rng(seed))
        for tau in SWEEP_TAU:
            s = sweep_scenario(tau)
            if param == "sp":
                x = s.full_state(imu)
                nullity = numeric_nullspace(build_basis_matrix(x, s.g)).nullity
                rows.append(_sweep_row(param=param, feature="edge", quantity="tau", value=tau,
                                       nullity=nullity,
                                       predicted_nullity=predicted_unobs_dim(s.realized_flags())))
                continue
            x = PlueckerState(imu, [PlueckerEdge(l, tau, d) for l, d in _SWEEP_EDGES])
            res = numeric_nullspace(build_pluecker_matrix(x, s.g))
            excl = null_exclusion(res.basis, pluecker_translation_directions(x)).min()
            m = len(x.edges)
            rows.append(_sweep_row(param=param, feature="edge", quantity="tau", value=tau,
                                   nullity=res.nullity,
                                   predicted_nullity=m + 1 if tau == 0.0 else 4,
                                   translation_exclusion=float(excl)))
    return rows


def write_csv(rows, columns, dest) -> None:
    """Write rows to a path or an open text stream."""
    if hasattr(dest, "write"):
        writer = csv.DictWriter(dest, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_csv() if isinstance(row, TableRow) else row)
        return
    path = Path(dest)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        write_csv(rows, columns, fh)

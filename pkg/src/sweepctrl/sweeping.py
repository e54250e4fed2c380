"""Catch-up discretization of the controlled sweeping dynamics.

One explicit step is x_{k+1} = proj(x_k + h * g(x_k, u_k); K(x_k)) where
K(x_k) is the scenario's constraint set: the fixed polyhedron for the
pedestrian model (whose separation constraints are already linear) and the
per-step linearized noncollision set for the planar robot model.  States
are piecewise linear between mesh nodes, controls piecewise constant.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .models import CONTACT_TOL, PedestrianScenario, RobotScenario, Scenario
from .polyhedra import Polyhedron, decompose_on_rows, project_raw, project_with_working_set

MESH_EXP_MAX = 24  # step underflow guard


@dataclass(frozen=True)
class Mesh:
    """Dyadic mesh on [0, T] with 2^m equal intervals."""

    T: float
    m: int

    def __post_init__(self):
        if not (1 <= self.m <= MESH_EXP_MAX):
            raise ValueError(f"mesh exponent must be in [1, {MESH_EXP_MAX}]")
        if self.T <= 0:
            raise ValueError("horizon must be positive")

    @property
    def intervals(self) -> int:
        return 1 << self.m

    @property
    def h(self) -> float:
        return self.T / self.intervals

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.intervals + 1)


@dataclass(frozen=True)
class ControlSignal:
    """One control value per mesh interval."""

    mesh: Mesh
    values: np.ndarray  # (2^m, d)

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[0] != self.mesh.intervals:
            raise ValueError(
                f"control needs {self.mesh.intervals} interval values, got {values.shape[0]}"
            )
        object.__setattr__(self, "values", values)

    @staticmethod
    def constant(mesh: Mesh, u) -> "ControlSignal":
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return ControlSignal(mesh, np.tile(u, (mesh.intervals, 1)))


@dataclass(frozen=True)
class Trajectory:
    """Piecewise-linear state path through the mesh nodes."""

    mesh: Mesh
    nodes: np.ndarray  # (2^m + 1, state_dim)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.shape[0] != self.mesh.intervals + 1:
            raise ValueError("node count must be 2^m + 1")
        object.__setattr__(self, "nodes", nodes)

    @property
    def times(self) -> np.ndarray:
        return self.mesh.nodes

    @property
    def terminal(self) -> np.ndarray:
        return self.nodes[-1]

    def velocities(self) -> np.ndarray:
        """(2^m, dim) interval velocities (x_{k+1} - x_k)/h."""
        return np.diff(self.nodes, axis=0) / self.mesh.h


@dataclass(frozen=True)
class EtaProfile:
    """Per-interval normal-cone coefficients recovered from a trajectory.

    `values[k, j]` multiplies row j of the sweeping set on interval k;
    `terminal` is the value carried at t = T (taken from the last
    interval); `residuals[k]` is the part of g - x' not explained by the
    active rows on interval k.
    """

    times: np.ndarray  # (K+1,) interval breakpoints
    values: np.ndarray  # (K, s)
    terminal: np.ndarray  # (s,)
    residuals: np.ndarray  # (K,)

    def __post_init__(self):
        if np.any(self.values < 0) or np.any(self.terminal < 0):
            raise ValueError("coefficients must be nonnegative")

    def max_residual(self) -> float:
        return float(np.max(self.residuals)) if self.residuals.size else 0.0


def _quick_project(A: np.ndarray, c: np.ndarray, y: np.ndarray, start: np.ndarray) -> np.ndarray:
    """One-shot projection guess: treat the violated rows as the active set.

    Solves the equality KKT system on the violated rows and accepts the
    result when its multipliers are nonnegative and it is feasible; this
    covers essentially every catch-up step, with the full active-set
    method as fallback.
    """
    viol = A @ y - c
    V = np.flatnonzero(viol > 1e-12)
    if V.size == 0:
        return y
    AV = A[V]
    G = AV @ AV.T
    try:
        lam = np.linalg.solve(G, viol[V])
    except np.linalg.LinAlgError:
        lam = None
    if lam is not None and np.all(lam >= 0.0):
        xhat = y - AV.T @ lam
        if np.max(A @ xhat - c) <= 1e-10 * max(1.0, float(np.max(np.abs(c)))):
            return xhat
    out, _ = project_raw(A, c, y, start)
    return out


def catchup_step(P: Polyhedron, g_val: np.ndarray, x: np.ndarray, h: float) -> np.ndarray:
    """One explicit catch-up step: project x + h*g onto P (x must lie in P)."""
    if h <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(x, dtype=float)
    g_val = np.asarray(g_val, dtype=float)
    out, _ = project_with_working_set(P, x + h * g_val, feasible_start=x)
    return out


def simulate(scn: Scenario, u: ControlSignal) -> Trajectory:
    """Run the catch-up scheme from scn.x0 under the piecewise-constant control."""
    mesh = u.mesh
    if abs(mesh.T - scn.horizon) > 1e-12 * max(1.0, scn.horizon):
        raise ValueError(f"control mesh horizon {mesh.T} != scenario horizon {scn.horizon}")
    for k, uk in enumerate(u.values):
        msg = scn.control_set.violation_message(uk)
        if msg is not None:
            raise ValueError(f"control value on interval {k} outside the admissible set: {msg}")
    if isinstance(scn, PedestrianScenario):
        return _simulate_pedestrian(scn, u)
    return _simulate_robot(scn, u)


def _simulate_pedestrian(scn: PedestrianScenario, u: ControlSignal) -> Trajectory:
    mesh = u.mesh
    h = mesh.h
    C = scn.sweeping_set()
    A, c = C.normals, C.offsets
    drives = u.values * scn.speeds  # (K, n)
    nodes = np.empty((mesh.intervals + 1, scn.n))
    x = scn.x0.copy()
    nodes[0] = x
    for k in range(mesh.intervals):
        y = x + h * drives[k]
        x = _quick_project(A, c, y, x)
        nodes[k + 1] = x
    return Trajectory(mesh=mesh, nodes=nodes)


def _simulate_robot(scn: RobotScenario, u: ControlSignal) -> Trajectory:
    mesh = u.mesh
    h = mesh.h
    times = mesh.nodes
    n = scn.n
    twoR = 2.0 * scn.R
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    su = u.values * scn.speeds  # (K, n) pushed speeds
    nodes = np.empty((mesh.intervals + 1, 2 * n))
    x = scn.x0.copy()
    nodes[0] = x
    contact_time: float | None = 0.0 if scn.contact_rows(x, CONTACT_TOL).size else None
    g = np.empty(2 * n)
    for k in range(mesh.intervals):
        th = scn.theta(times[k], contact_time)
        g[0::2] = su[k] * np.cos(th)
        g[1::2] = su[k] * np.sin(th)
        y = x + h * g
        # Linearized noncollision values at x along the step; project only
        # when the free step would exit the local constraint set.
        X = x.reshape(n, 2)
        D = (y - x).reshape(n, 2)
        rows = []
        offs = []
        violated = False
        for i, j in pairs:
            d = X[i] - X[j]
            dist = float(np.hypot(d[0], d[1]))
            if dist == 0.0:
                raise ValueError(f"coincident centers {i + 1}, {j + 1}: gradient undefined")
            nhat = d / dist
            grad_step = float(nhat @ (D[i] - D[j]))
            if dist - twoR + grad_step < -1e-14:
                violated = True
            grad = np.zeros(2 * n)
            grad[2 * i : 2 * i + 2] = nhat
            grad[2 * j : 2 * j + 2] = -nhat
            rows.append(-grad)
            offs.append(dist - twoR - float(grad @ x))
        if violated:
            x = _quick_project(np.array(rows), np.array(offs), y, x)
        else:
            x = y
        nodes[k + 1] = x
        if contact_time is None and scn.contact_rows(x, CONTACT_TOL).size:
            contact_time = times[k + 1]
    return Trajectory(mesh=mesh, nodes=nodes)


def cost(traj: Trajectory) -> float:
    """Terminal cost 0.5 * ||x(T)||^2."""
    xT = traj.terminal
    return 0.5 * float(xT @ xT)


def contact_times(traj: Trajectory, P: Polyhedron, tol: float) -> list[tuple[float, int]]:
    """First activation time per constraint row, sorted by time.

    A row first active at node k is attributed to the interval that
    produced that node, so the reported time is the left node t_{k-1}
    (t_0 for rows active from the start).
    """
    out = []
    times = traj.times
    slacks = P.offsets[None, :] - traj.nodes @ P.normals.T  # (K+1, s)
    for j in range(P.nrows):
        hits = np.flatnonzero(np.abs(slacks[:, j]) <= tol)
        if hits.size:
            k = int(hits[0])
            out.append((float(times[max(k - 1, 0)]), j))
    out.sort()
    return out


def recover_eta(scn: Scenario, traj: Trajectory, u: ControlSignal) -> EtaProfile:
    """Fit g(x, u) - x' on the active sweeping-set rows, interval by interval.

    Activity on an interval is read off the post-projection right node
    (the node the step produced); coefficients are a nonnegative
    least-squares fit on the corresponding rows of the sweeping set, and
    the residual reports whatever those rows cannot explain.
    """
    C = scn.sweeping_set()
    if traj.mesh.intervals != u.mesh.intervals or abs(traj.mesh.T - u.mesh.T) > 1e-12:
        raise ValueError("trajectory and control live on different meshes")
    times = traj.times
    vel = traj.velocities()
    K = traj.mesh.intervals
    values = np.zeros((K, C.nrows))
    residuals = np.zeros(K)
    contact_time: float | None = None
    for k in range(K):
        x_left = traj.nodes[k]
        if contact_time is None and scn.contact_rows(x_left, CONTACT_TOL).size:
            contact_time = times[k]
        g = scn.g(x_left, u.values[k], times[k], contact_time)
        rows = scn.contact_rows(traj.nodes[k + 1], CONTACT_TOL)
        dec = decompose_on_rows(C, rows, g - vel[k])
        for j, val in dec.coefficients.items():
            values[k, j] = val
        residuals[k] = dec.residual
    return EtaProfile(times=times, values=values, terminal=values[-1].copy(), residuals=residuals)


# ---------------------------------------------------------------------------
# Trajectory CSV (deterministic, 12 significant digits)
# ---------------------------------------------------------------------------


def _fmt(v: float) -> str:
    return f"{v:.12g}"


def trajectory_csv(
    times: np.ndarray,
    states: np.ndarray,
    controls: np.ndarray | None = None,
    etas: np.ndarray | None = None,
    eta_terminal: np.ndarray | None = None,
) -> str:
    """Rows of t, x1.., u1.., eta1..; controls and etas come from the interval
    to the right of each node, with the final row repeating the terminal values."""
    times = np.asarray(times, dtype=float)
    states = np.atleast_2d(np.asarray(states, dtype=float))
    rows = times.shape[0]
    cols = ["t"] + [f"x{i + 1}" for i in range(states.shape[1])]
    if controls is not None:
        controls = np.atleast_2d(np.asarray(controls, dtype=float))
        cols += [f"u{i + 1}" for i in range(controls.shape[1])]
    if etas is not None:
        etas = np.atleast_2d(np.asarray(etas, dtype=float))
        cols += [f"eta{i + 1}" for i in range(etas.shape[1])]
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for k in range(rows):
        cells = [_fmt(times[k])] + [_fmt(v) for v in states[k]]
        if controls is not None:
            cells += [_fmt(v) for v in controls[min(k, controls.shape[0] - 1)]]
        if etas is not None:
            if k < etas.shape[0]:
                row = etas[k]
            else:
                row = eta_terminal if eta_terminal is not None else etas[-1]
            cells += [_fmt(v) for v in row]
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def read_trajectory_csv(text: str) -> dict[str, np.ndarray]:
    """Inverse of trajectory_csv; returns times/states/controls/etas arrays."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    data = np.array([[float(tok) for tok in ln.split(",")] for ln in lines[1:]])
    groups: dict[str, list[int]] = {"t": [], "x": [], "u": [], "eta": []}
    for idx, name in enumerate(header):
        if name == "t":
            groups["t"].append(idx)
        elif name.startswith("eta"):
            groups["eta"].append(idx)
        elif name.startswith("x"):
            groups["x"].append(idx)
        elif name.startswith("u"):
            groups["u"].append(idx)
    out = {"times": data[:, groups["t"][0]], "states": data[:, groups["x"]]}
    if groups["u"]:
        out["controls"] = data[:, groups["u"]]
    if groups["eta"]:
        out["etas"] = data[:, groups["eta"]]
    return out

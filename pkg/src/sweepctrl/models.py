"""The two concrete scenario families: planar robots with obstacles, pedestrian doorway flow.

Both models share the controlled dynamics x' in -N(x; C) + g(x, u) over a
convex polyhedron C built from pairwise separation constraints with offsets
-2R.  The robot model lives in R^{2n} (two coordinates per agent) and uses
the component-sum norm |a|+|b| as the separation device that makes C, the
admissible-configuration set, and the linearized constraint sets coincide
under the ordering hypotheses; the actual collision geometry of the disks
(admissible velocities, per-step constraint linearization) is Euclidean.
The pedestrian model lives in R^n where the two notions agree exactly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .polyhedra import Polyhedron

CONTROL_TOL = 1e-9
CONTACT_TOL = 1e-7


class ScenarioFormatError(ValueError):
    """Scenario file problem; the message names the offending key."""


# ---------------------------------------------------------------------------
# Control sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ControlSet:
    """Compact convex control set: a coordinate box or a linked segment.

    A linked segment ties all coordinates to one scalar parameter r through
    u = link * r with r in [rlo, rhi] (e.g. u1 = 2*u2 with a bound quoted on
    u1).  Vertices are enumerable: 2^d for a box, 2 for a segment.
    """

    kind: str  # "box" | "segment"
    lo: np.ndarray | None = None  # box bounds
    hi: np.ndarray | None = None
    link: np.ndarray | None = None  # segment direction coefficients
    rlo: float = 0.0
    rhi: float = 0.0

    @staticmethod
    def box(lo, hi) -> "ControlSet":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be two equal-length vectors")
        if np.any(hi < lo):
            raise ValueError("box upper bound below lower bound")
        return ControlSet(kind="box", lo=lo, hi=hi)

    @staticmethod
    def segment(link, bounds, bound_on: int = 0) -> "ControlSet":
        """Segment u = link * r where `bounds` constrains component `bound_on`."""
        link = np.asarray(link, dtype=float)
        blo, bhi = float(bounds[0]), float(bounds[1])
        k = link[bound_on]
        if k == 0.0:
            raise ValueError("bound_on component has zero link coefficient")
        rlo, rhi = sorted((blo / k, bhi / k))
        return ControlSet(kind="segment", link=link, rlo=rlo, rhi=rhi)

    @property
    def dim(self) -> int:
        return len(self.lo) if self.kind == "box" else len(self.link)

    def contains(self, u, tol: float = CONTROL_TOL) -> bool:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,):
            return False
        if self.kind == "box":
            return bool(np.all(u >= self.lo - tol) and np.all(u <= self.hi + tol))
        r = self.parameter_of(u)
        return bool(
            self.rlo - tol <= r <= self.rhi + tol
            and np.max(np.abs(u - r * self.link)) <= tol * max(1.0, abs(r))
        )

    def violation_message(self, u) -> str | None:
        """Human-readable description of the first violated bound, or None."""
        u = np.asarray(u, dtype=float)
        if self.kind == "box":
            for i in range(self.dim):
                if u[i] < self.lo[i] - CONTROL_TOL or u[i] > self.hi[i] + CONTROL_TOL:
                    return f"u{i + 1} = {u[i]:g} outside [{self.lo[i]:g}, {self.hi[i]:g}]"
            return None
        r = self.parameter_of(u)
        if np.max(np.abs(u - r * self.link)) > CONTROL_TOL * max(1.0, abs(r)):
            return f"u = {u.tolist()} is not proportional to the link {self.link.tolist()}"
        if not (self.rlo - CONTROL_TOL <= r <= self.rhi + CONTROL_TOL):
            return f"link parameter {r:g} outside [{self.rlo:g}, {self.rhi:g}]"
        return None

    def parameter_of(self, u) -> float:
        """Least-squares segment parameter of u (exact when u is on the segment)."""
        u = np.asarray(u, dtype=float)
        return float(self.link @ u / (self.link @ self.link))

    def at_parameter(self, r: float) -> np.ndarray:
        return float(r) * self.link

    def vertices(self) -> np.ndarray:
        if self.kind == "segment":
            return np.vstack([self.rlo * self.link, self.rhi * self.link])
        cols = [(lo, hi) for lo, hi in zip(self.lo, self.hi)]
        return np.array(list(itertools.product(*cols)), dtype=float)

    def center(self) -> np.ndarray:
        if self.kind == "segment":
            return 0.5 * (self.rlo + self.rhi) * self.link
        return 0.5 * (self.lo + self.hi)

    def clamp(self, u) -> np.ndarray:
        """Euclidean projection onto the set (componentwise clip / segment clip)."""
        u = np.asarray(u, dtype=float)
        if self.kind == "box":
            return np.clip(u, self.lo, self.hi)
        r = min(max(self.parameter_of(u), self.rlo), self.rhi)
        return r * self.link

    def maximize_linear(self, psi) -> tuple[float, np.ndarray]:
        """Max of <psi, u> over the set; attained at a vertex (endpoint for segments)."""
        psi = np.asarray(psi, dtype=float)
        if self.kind == "box":
            u = np.where(psi >= 0.0, self.hi, self.lo)
            return float(psi @ u), u
        v = self.vertices()
        vals = v @ psi
        best = int(np.argmax(vals))
        return float(vals[best]), v[best]


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RobotScenario:
    """n planar robots of safety radius R steered toward the origin.

    The per-agent drive is s_i * u^i along the fixed heading angle theta_i;
    an optional second heading takes over at `switch_at` (a time, or the
    string "contact" meaning the first collision of any pair).
    """

    n: int
    R: float
    T: float
    x0: np.ndarray  # (2n,)
    speeds: np.ndarray  # (n,)
    angles: np.ndarray  # (n,) radians
    control_set: ControlSet
    angles_post: np.ndarray | None = None
    switch_at: float | str | None = None

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "speeds", np.asarray(self.speeds, dtype=float))
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float))
        if self.angles_post is not None:
            object.__setattr__(self, "angles_post", np.asarray(self.angles_post, dtype=float))
        if self.n < 2:
            raise ValueError("robot model needs n >= 2 agents")
        if self.R < 0 or self.T <= 0:
            raise ValueError("need R >= 0 and T > 0")
        if self.x0.shape != (2 * self.n,):
            raise ValueError(f"x0 must have length {2 * self.n}")
        if self.speeds.shape != (self.n,) or np.any(self.speeds < 0):
            raise ValueError("speeds must be n nonnegative reals")
        if self.angles.shape != (self.n,):
            raise ValueError("angles must have length n")
        if self.control_set.dim != self.n:
            raise ValueError("control set dimension must equal n")
        # Ordering hypothesis: both coordinates strictly increase with the index.
        for j in range(self.n - 1):
            if not (self.x0[2 * j + 2] > self.x0[2 * j] and self.x0[2 * j + 3] > self.x0[2 * j + 1]):
                raise ValueError(f"initial ordering violated between agents {j + 1} and {j + 2}")
        slack = self.sweeping_set().slack(self.x0)
        if np.min(slack) < -CONTROL_TOL:
            raise ValueError("x0 violates the separation constraints (not projected)")

    @property
    def state_dim(self) -> int:
        return 2 * self.n

    @property
    def horizon(self) -> float:
        return self.T

    def sweeping_set(self) -> Polyhedron:
        return robot_sweeping_set(self.n, self.R)

    def theta(self, t: float, contact_time: float | None = None) -> np.ndarray:
        """Heading angles effective at time t, given the first contact time if known."""
        if self.angles_post is None:
            return self.angles
        if self.switch_at == "contact":
            switch = contact_time
        else:
            switch = self.switch_at
        if switch is None or t < switch:
            return self.angles
        return self.angles_post

    def g(self, x, u, t: float = 0.0, contact_time: float | None = None) -> np.ndarray:
        return robot_g(self, x, u, t, contact_time)

    def pair_gap_euclid(self, x, i: int, j: int) -> float:
        """Euclidean disk separation ||x^i - x^j|| - 2R (the collision geometry)."""
        x = np.asarray(x, dtype=float)
        d = x[2 * i : 2 * i + 2] - x[2 * j : 2 * j + 2]
        return float(np.hypot(d[0], d[1]) - 2.0 * self.R)

    def contact_rows(self, x, tol: float = CONTACT_TOL) -> np.ndarray:
        """Adjacent-pair indices j with the disks j, j+1 in Euclidean contact."""
        return np.array(
            [j for j in range(self.n - 1) if abs(self.pair_gap_euclid(x, j, j + 1)) <= tol],
            dtype=int,
        )

    def local_constraint_set(self, x) -> Polyhedron:
        """Linearized noncollision set K(x): one row per pair i < j.

        Row for the pair: D_ij(x) + <grad D_ij(x), y - x> >= 0 with the
        Euclidean disk distance, written as <a, y> <= c.
        """
        x = np.asarray(x, dtype=float)
        rows, offs = [], []
        for i in range(self.n):
            for j in range(i + 1, self.n):
                d = x[2 * i : 2 * i + 2] - x[2 * j : 2 * j + 2]
                dist = float(np.hypot(d[0], d[1]))
                if dist == 0.0:
                    raise ValueError(f"coincident centers {i + 1}, {j + 1}: gradient undefined")
                nhat = d / dist
                grad = np.zeros(2 * self.n)
                grad[2 * i : 2 * i + 2] = nhat
                grad[2 * j : 2 * j + 2] = -nhat
                gap = dist - 2.0 * self.R
                rows.append(-grad)
                offs.append(gap - grad @ x)
        return Polyhedron(np.array(rows), np.array(offs))


@dataclass(frozen=True)
class PedestrianScenario:
    """n pedestrians on a line moving right toward a doorway at the origin."""

    n: int
    R: float
    T: float
    x0: np.ndarray  # (n,)
    speeds: np.ndarray  # (n,)
    control_set: ControlSet

    def __post_init__(self):
        object.__setattr__(self, "x0", np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "speeds", np.asarray(self.speeds, dtype=float))
        if self.n < 2:
            raise ValueError("pedestrian model needs n >= 2 participants")
        if self.R < 0 or self.T <= 0:
            raise ValueError("need R >= 0 and T > 0")
        if self.x0.shape != (self.n,):
            raise ValueError(f"x0 must have length {self.n}")
        if self.speeds.shape != (self.n,) or np.any(self.speeds < 0):
            raise ValueError("speeds must be n nonnegative reals")
        if self.control_set.dim != self.n:
            raise ValueError("control set dimension must equal n")
        gaps = np.diff(self.x0)
        if np.min(gaps - 2.0 * self.R) < -CONTROL_TOL:
            j = int(np.argmin(gaps))
            raise ValueError(f"x0 gap {j + 1}->{j + 2} below 2R (not projected)")

    @property
    def state_dim(self) -> int:
        return self.n

    @property
    def horizon(self) -> float:
        return self.T

    def sweeping_set(self) -> Polyhedron:
        return pedestrian_sweeping_set(self.n, self.R)

    def g(self, x, u, t: float = 0.0, contact_time: float | None = None) -> np.ndarray:
        return pedestrian_g(self, u)

    def contact_rows(self, x, tol: float = CONTACT_TOL) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        gaps = np.diff(x) - 2.0 * self.R
        return np.flatnonzero(np.abs(gaps) <= tol)

    def local_constraint_set(self, x) -> Polyhedron:
        # The separation constraints are already linear: K(x) == C for every x.
        return self.sweeping_set()


Scenario = RobotScenario | PedestrianScenario


# ---------------------------------------------------------------------------
# Sweeping sets and perturbation maps
# ---------------------------------------------------------------------------


def robot_sweeping_set(n: int, R: float) -> Polyhedron:
    """Rows e_{j,1}+e_{j,2}-e_{j+1,1}-e_{j+1,2} with offsets -2R, j = 1..n-1."""
    if n < 2:
        raise ValueError("need n >= 2")
    rows = np.zeros((n - 1, 2 * n))
    for j in range(n - 1):
        rows[j, 2 * j : 2 * j + 2] = 1.0
        rows[j, 2 * j + 2 : 2 * j + 4] = -1.0
    return Polyhedron(rows, np.full(n - 1, -2.0 * R))


def pedestrian_sweeping_set(n: int, R: float) -> Polyhedron:
    """Rows e_j - e_{j+1} with offsets -2R, j = 1..n-1."""
    if n < 2:
        raise ValueError("need n >= 2")
    rows = np.zeros((n - 1, n))
    for j in range(n - 1):
        rows[j, j] = 1.0
        rows[j, j + 1] = -1.0
    return Polyhedron(rows, np.full(n - 1, -2.0 * R))


def robot_g(
    scn: RobotScenario, x, u, t: float = 0.0, contact_time: float | None = None
) -> np.ndarray:
    """Drive velocity (s_1 u^1 cos th_1, s_1 u^1 sin th_1, ...); independent of x."""
    u = np.asarray(u, dtype=float)
    msg = scn.control_set.violation_message(u)
    if msg is not None:
        raise ValueError(f"control outside the admissible set: {msg}")
    th = scn.theta(t, contact_time)
    out = np.empty(2 * scn.n)
    out[0::2] = scn.speeds * u * np.cos(th)
    out[1::2] = scn.speeds * u * np.sin(th)
    return out


def pedestrian_g(scn: PedestrianScenario, u) -> np.ndarray:
    """Drive velocity (s_1 u^1, ..., s_n u^n)."""
    u = np.asarray(u, dtype=float)
    msg = scn.control_set.violation_message(u)
    if msg is not None:
        raise ValueError(f"control outside the admissible set: {msg}")
    return scn.speeds * u


def distance_gap(scn: Scenario, x, i: int, j: int) -> float:
    """Separation margin D_ij(x); nonnegative iff no overlap.

    Robot variant uses the component-sum norm |a| + |b| (the device under
    which the sweeping set equals the admissible-configuration set);
    pedestrian variant is the order gap x^j - x^i - 2R for i < j.
    """
    x = np.asarray(x, dtype=float)
    if isinstance(scn, RobotScenario):
        if not (0 <= i < scn.n and 0 <= j < scn.n and i != j):
            raise ValueError("invalid agent pair")
        a = x[2 * i : 2 * i + 2] - x[2 * j : 2 * j + 2]
        return float(abs(a[0]) + abs(a[1]) - 2.0 * scn.R)
    if not (0 <= i < j < scn.n):
        raise ValueError("pedestrian gap needs 0 <= i < j < n")
    return float(x[j] - x[i] - 2.0 * scn.R)


def admissible_velocities_contains(
    scn: RobotScenario, x, v, h: float, tol: float = CONTROL_TOL
) -> bool:
    """First-order noncollision test: D_ij(x) + h <grad D_ij(x), v> >= -tol for all i < j.

    Euclidean disk distances; coincident centers make the gradient
    undefined and raise.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    for i in range(scn.n):
        for j in range(i + 1, scn.n):
            d = x[2 * i : 2 * i + 2] - x[2 * j : 2 * j + 2]
            dist = float(np.hypot(d[0], d[1]))
            if dist == 0.0:
                raise ValueError(f"coincident centers {i + 1}, {j + 1}: gradient undefined")
            nhat = d / dist
            rate = nhat @ (v[2 * i : 2 * i + 2] - v[2 * j : 2 * j + 2])
            if dist - 2.0 * scn.R + h * rate < -tol:
                return False
    return True


@dataclass(frozen=True)
class SetAgreementReport:
    samples: int
    disagreements: int
    flagged_out_of_region: int


def verify_set_representation(
    scn: RobotScenario, samples: int, seed: int, x_ref: np.ndarray | None = None
) -> SetAgreementReport:
    """Sample ordered configurations and compare membership in the three set descriptions.

    The three sets: the fixed polyhedron C, the admissible-configuration
    set (all-pairs sum-norm separation), and the linearization K(x_ref) of
    the sum-norm separation constraints at an ordered reference point.
    Under the ordering hypotheses they coincide, so the expected
    disagreement count is zero.  Sampled points that violate the ordering
    hypothesis are flagged and excluded rather than tested.
    """
    rng = np.random.default_rng(seed)
    C = scn.sweeping_set()
    x_ref = scn.x0 if x_ref is None else np.asarray(x_ref, dtype=float)

    # K(x_ref) rows: sum-norm D_ij is affine on the ordered region, so the
    # linearization at an ordered x_ref is the all-pairs sum constraint.
    def in_K(x):
        for i in range(scn.n):
            for j in range(i + 1, scn.n):
                s = (x[2 * j] - x[2 * i]) + (x[2 * j + 1] - x[2 * i + 1])
                if s < 2.0 * scn.R:
                    return False
        return True

    def in_Q0(x):
        for i in range(scn.n):
            for j in range(i + 1, scn.n):
                if distance_gap(scn, x, i, j) < 0.0:
                    return False
        return True

    disagreements = 0
    flagged = 0
    scale = max(1.0, float(np.max(np.abs(scn.x0))))
    for _ in range(samples):
        x = np.empty(2 * scn.n)
        x[0:2] = rng.uniform(-scale, scale, size=2)
        for j in range(1, scn.n):
            # Increments straddle the contact threshold so both inside and
            # outside points occur; slightly negative ones violate ordering.
            incr = rng.uniform(-0.5 * scn.R, 3.0 * scn.R, size=2)
            x[2 * j : 2 * j + 2] = x[2 * j - 2 : 2 * j] + incr
        ordered = all(
            x[2 * j + 2] > x[2 * j] and x[2 * j + 3] > x[2 * j + 1] for j in range(scn.n - 1)
        )
        if not ordered:
            flagged += 1
            continue
        members = {
            bool(np.all(C.slack(x) >= 0.0)),
            in_Q0(x),
            in_K(x),
        }
        if len(members) != 1:
            disagreements += 1
    return SetAgreementReport(samples=samples, disagreements=disagreements, flagged_out_of_region=flagged)


# ---------------------------------------------------------------------------
# Scenario files: plain `key = value` text
# ---------------------------------------------------------------------------


def _parse_floats(key: str, raw: str) -> list[float]:
    try:
        return [float(tok) for tok in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ScenarioFormatError(f"key '{key}': expected numbers, got '{raw}'") from exc


def _take(entries: dict, key: str):
    if key not in entries:
        raise ScenarioFormatError(f"missing required key '{key}'")
    return entries.pop(key)


def parse_scenario_text(text: str) -> Scenario:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ScenarioFormatError(f"line {lineno}: expected 'key = value', got '{stripped}'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in entries:
            raise ScenarioFormatError(f"duplicate key '{key}'")
        entries[key] = value.strip()

    model = _take(entries, "model").lower()
    if model not in ("robot", "pedestrian"):
        raise ScenarioFormatError(f"key 'model': expected robot|pedestrian, got '{model}'")
    try:
        n = int(_take(entries, "n"))
    except ValueError as exc:
        raise ScenarioFormatError("key 'n': expected an integer") from exc
    R = _parse_floats("R", _take(entries, "R"))[0]
    T = _parse_floats("T", _take(entries, "T"))[0]
    x0 = _parse_floats("x0", _take(entries, "x0"))
    speeds = _parse_floats("speeds", _take(entries, "speeds"))

    kind = _take(entries, "control.kind").lower()
    if kind == "box":
        lo = _parse_floats("control.lo", _take(entries, "control.lo"))
        hi = _parse_floats("control.hi", _take(entries, "control.hi"))
        control = ControlSet.box(lo, hi)
    elif kind == "segment":
        link = _parse_floats("control.link", _take(entries, "control.link"))
        bounds = _parse_floats("control.bounds", _take(entries, "control.bounds"))
        if len(bounds) != 2:
            raise ScenarioFormatError("key 'control.bounds': expected two numbers")
        bound_on = int(entries.pop("control.bound_on", "1")) - 1
        if not 0 <= bound_on < len(link):
            raise ScenarioFormatError("key 'control.bound_on': component out of range")
        control = ControlSet.segment(link, bounds, bound_on)
    else:
        raise ScenarioFormatError(f"key 'control.kind': expected box|segment, got '{kind}'")

    try:
        if model == "pedestrian":
            for key in ("angles_deg", "angles_deg_post", "switch_at"):
                if key in entries:
                    raise ScenarioFormatError(f"key '{key}' is robot-only")
            scn: Scenario = PedestrianScenario(
                n=n, R=R, T=T, x0=np.array(x0), speeds=np.array(speeds), control_set=control
            )
        else:
            angles = np.deg2rad(_parse_floats("angles_deg", _take(entries, "angles_deg")))
            angles_post = None
            switch_at: float | str | None = None
            if "angles_deg_post" in entries:
                angles_post = np.deg2rad(_parse_floats("angles_deg_post", entries.pop("angles_deg_post")))
                raw = entries.pop("switch_at", "contact")
                switch_at = "contact" if raw.strip().lower() == "contact" else float(raw)
            scn = RobotScenario(
                n=n,
                R=R,
                T=T,
                x0=np.array(x0),
                speeds=np.array(speeds),
                angles=np.array(angles),
                control_set=control,
                angles_post=angles_post,
                switch_at=switch_at,
            )
    except ValueError as exc:
        raise ScenarioFormatError(str(exc)) from exc

    if entries:
        raise ScenarioFormatError(f"unknown key '{sorted(entries)[0]}'")
    return scn


def load_scenario(path) -> Scenario:
    return parse_scenario_text(Path(path).read_text())


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario file shipped with the package (e.g. 'robot2.scn')."""
    p = Path(__file__).parent / "data" / name
    if not p.exists():
        raise FileNotFoundError(f"no bundled scenario named '{name}'")
    return p


def bundled_scenario(name: str) -> Scenario:
    return load_scenario(bundled_scenario_path(name))

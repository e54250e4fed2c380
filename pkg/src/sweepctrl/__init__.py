"""Controlled sweeping processes over convex polyhedra.

Simulation of the catch-up discretization, closed-form solutions of the
two bundled control models (planar robots with obstacles, pedestrian
doorway flow), a direct discrete solver, and residual verification of the
necessary optimality conditions through dual certificates.

Everything in the library is a pure function over immutable value objects;
independent simulations, solves, and checks are safe to run concurrently.
"""

from .models import (
    ControlSet,
    PedestrianScenario,
    RobotScenario,
    ScenarioFormatError,
    admissible_velocities_contains,
    bundled_scenario,
    bundled_scenario_path,
    distance_gap,
    load_scenario,
    parse_scenario_text,
    pedestrian_g,
    pedestrian_sweeping_set,
    robot_g,
    robot_sweeping_set,
    verify_set_representation,
)
from .optimality import (
    DualCertificate,
    PiecewisePath,
    ResidualReport,
    StepFunction,
    load_certificate,
    save_certificate,
    verify_certificate,
)
from .optimizer import (
    DiscreteSolution,
    ReducedSolution,
    UnsupportedScenarioError,
    solve_discrete,
    solve_reduced,
)
from .polyhedra import (
    ConeDecomposition,
    Polyhedron,
    ProjectionError,
    active_set,
    check_licq,
    contains,
    decompose_normal,
    project,
)
from .sweeping import (
    ControlSignal,
    EtaProfile,
    Mesh,
    Trajectory,
    catchup_step,
    contact_times,
    cost,
    recover_eta,
    simulate,
    trajectory_csv,
)

__version__ = "0.1.0"

__all__ = [
    "ControlSet",
    "ControlSignal",
    "ConeDecomposition",
    "DiscreteSolution",
    "DualCertificate",
    "EtaProfile",
    "Mesh",
    "PedestrianScenario",
    "PiecewisePath",
    "Polyhedron",
    "ProjectionError",
    "ReducedSolution",
    "ResidualReport",
    "RobotScenario",
    "ScenarioFormatError",
    "StepFunction",
    "Trajectory",
    "UnsupportedScenarioError",
    "active_set",
    "admissible_velocities_contains",
    "bundled_scenario",
    "bundled_scenario_path",
    "catchup_step",
    "check_licq",
    "contact_times",
    "contains",
    "cost",
    "decompose_normal",
    "distance_gap",
    "load_certificate",
    "load_scenario",
    "parse_scenario_text",
    "pedestrian_g",
    "pedestrian_sweeping_set",
    "project",
    "recover_eta",
    "robot_g",
    "robot_sweeping_set",
    "save_certificate",
    "simulate",
    "solve_discrete",
    "solve_reduced",
    "trajectory_csv",
    "verify_certificate",
    "verify_set_representation",
]

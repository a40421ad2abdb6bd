"""Scenario files: schema, loading, validation, and trace serialization.

A scenario is a JSON document with schema version "1" and top-level keys
``process``, ``observation``, ``initial_belief``, ``goal``,
``obstacles``, and ``defaults`` (plus optional ``name``, ``description``
and ``initial_path``).  Vectors are JSON arrays; numbers are base-10
decimals.

    process        {"type": "linear", "A": [[..]], "B": [[..]],
                    "noise_std": [..]}  — or {"type": "unicycle",
                    "dt": .., "noise_std": [..]}
    observation    {"type": "light_dark"} | {"type": "range",
                    "landmarks": [[..]], "noise_std": ..} |
                    {"type": "bearing", "landmarks": [[..]],
                    "noise_std": ..}
    initial_belief {"weights": [..], "means": [[..]],
                    "variances": [..]}   (isotropic components; or
                    "covariances": [[[..]]] for full matrices)
    goal           {"state": [..], "radius": .., "threshold": ..}
    obstacles      {"penalty": .., "ellipsoids": [{"center": [..],
                    "alpha": [..]}], "rectangles": [{"min": [..],
                    "max": [..], "spacing": .., "margin": ..}]}
    defaults       {"horizon": .., "num_particles": ..,
                    "control_weight": ..,  (scalar or full matrix)
                    "control_limit": .. | null, "beta": 0|1,
                    "replan_period": .., "max_steps": ..}
    initial_path   [[..], ..]  — optional waypoint polyline used to seed
                    the first plan (useful in cluttered worlds)

Built-in scenarios ship as package data: ``light_dark`` (planar double
integrator whose observation noise shrinks to the right), ``two_walls``
(three range landmarks behind a walled corridor), ``house`` (multi-room
floor plan, long route), and ``house_short`` (same floor plan, short
route).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .belief import GaussianMixture, GoalSpec
from .dynamics import (
    BearingObservation,
    LightDarkObservation,
    LinearProcess,
    RangeObservation,
    UnicycleProcess,
)
from .errors import ConfigurationError
from .obstacles import ObstacleSet, Ellipsoid, cover_walls, coverage_margin

SCHEMA_VERSION = "1"
BUILTIN_NAMES = ("light_dark", "two_walls", "house", "house_short")


@dataclass(frozen=True)
class PlanningDefaults:
    """Per-scenario planning and execution defaults."""

    horizon: int
    num_particles: int
    control_weight: np.ndarray
    control_limit: float
    beta: int
    replan_period: int
    max_steps: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("defaults.horizon must be at least 1")
        if self.num_particles < 1:
            raise ConfigurationError("defaults.num_particles must be at least 1")
        if self.replan_period < 1:
            raise ConfigurationError("defaults.replan_period must be at least 1")
        if self.max_steps < 0:
            raise ConfigurationError("defaults.max_steps must be nonnegative")
        if self.beta not in (0, 1):
            raise ConfigurationError("defaults.beta must be 0 or 1")
        if self.control_limit is not None and not self.control_limit > 0:
            raise ConfigurationError("defaults.control_limit must be positive")


@dataclass(frozen=True)
class Scenario:
    """A fully validated world description."""

    name: str
    process: object
    observation: object
    initial_belief: GaussianMixture
    goal: GoalSpec
    obstacles: ObstacleSet
    defaults: PlanningDefaults
    initial_path: np.ndarray = None
    description: str = ""

    @property
    def n_x(self):
        return self.process.n_x

    @property
    def n_u(self):
        return self.process.n_u


def _field(data, key, where, expected=None):
    if key not in data:
        raise ConfigurationError(f"scenario field '{where}.{key}' is missing")
    value = data[key]
    if expected is not None and not isinstance(value, expected):
        raise ConfigurationError(
            f"scenario field '{where}.{key}' has the wrong type"
        )
    return value


def _matrix(data, key, where):
    try:
        arr = np.asarray(_field(data, key, where), dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(
            f"scenario field '{where}.{key}' is not numeric"
        ) from exc
    return arr


def _build_process(data):
    kind = _field(data, "type", "process", str)
    noise = data.get("noise_std", 0.0)
    if kind == "linear":
        return LinearProcess(
            _matrix(data, "A", "process"),
            _matrix(data, "B", "process"),
            G=np.asarray(data["G"], dtype=np.float64) if "G" in data else None,
            noise_std=np.asarray(noise, dtype=np.float64),
        )
    if kind == "unicycle":
        return UnicycleProcess(
            dt=float(data.get("dt", 0.1)),
            noise_std=np.asarray(noise, dtype=np.float64),
        )
    raise ConfigurationError(f"scenario field 'process.type' unknown: {kind!r}")


def _build_observation(data, n_x):
    kind = _field(data, "type", "observation", str)
    if kind == "light_dark":
        if n_x != 2:
            raise ConfigurationError(
                "observation.type light_dark requires a planar state"
            )
        return LightDarkObservation(x1_floor=float(data.get("x1_floor", -0.45)))
    if kind == "range":
        return RangeObservation(
            _matrix(data, "landmarks", "observation"),
            noise_std=float(data.get("noise_std", 0.1)),
            n_x=n_x,
        )
    if kind == "bearing":
        if n_x != 3:
            raise ConfigurationError(
                "observation.type bearing requires a (x, y, heading) state"
            )
        return BearingObservation(
            _matrix(data, "landmarks", "observation"),
            noise_std=float(data.get("noise_std", 0.05)),
        )
    raise ConfigurationError(f"scenario field 'observation.type' unknown: {kind!r}")


def _build_mixture(data):
    weights = _matrix(data, "weights", "initial_belief")
    means = np.atleast_2d(_matrix(data, "means", "initial_belief"))
    if "covariances" in data:
        covs = _matrix(data, "covariances", "initial_belief")
        return GaussianMixture(weights, means, covs)
    variances = _matrix(data, "variances", "initial_belief")
    if variances.shape != (means.shape[0],):
        raise ConfigurationError(
            "scenario field 'initial_belief.variances' needs one entry per component"
        )
    return GaussianMixture.from_spherical(weights, means, variances)


def _build_obstacles(data, n_x):
    penalty = float(_field(data, "penalty", "obstacles"))
    terms = []
    for i, spec in enumerate(data.get("ellipsoids", [])):
        center = _matrix(spec, "center", f"obstacles.ellipsoids[{i}]")
        alpha = _matrix(spec, "alpha", f"obstacles.ellipsoids[{i}]")
        terms.append(Ellipsoid(center, alpha))
    for i, spec in enumerate(data.get("rectangles", [])):
        where = f"obstacles.rectangles[{i}]"
        lo = _matrix(spec, "min", where)
        hi = _matrix(spec, "max", where)
        spacing = float(_field(spec, "spacing", where))
        margin = float(_field(spec, "margin", where))
        covered = cover_walls((lo, hi), spacing, margin, penalty)
        terms.extend(covered.ellipsoids)
    field = ObstacleSet(tuple(terms), penalty)
    for e in field.ellipsoids:
        if e.center.size != n_x:
            raise ConfigurationError(
                "scenario obstacles must live in the state space"
            )
    return field


def _build_defaults(data):
    weight = np.asarray(_field(data, "control_weight", "defaults"), dtype=np.float64)
    limit = data.get("control_limit", None)
    return PlanningDefaults(
        horizon=int(_field(data, "horizon", "defaults")),
        num_particles=int(_field(data, "num_particles", "defaults")),
        control_weight=weight,
        control_limit=None if limit is None else float(limit),
        beta=int(data.get("beta", 0)),
        replan_period=int(data.get("replan_period", 1)),
        max_steps=int(data.get("max_steps", 100)),
    )


def control_weight_matrix(scenario):
    """Scenario control weight as a full (n_u, n_u) matrix."""
    weight = scenario.defaults.control_weight
    if weight.ndim == 0:
        return float(weight) * np.eye(scenario.n_u)
    if weight.shape == (scenario.n_u,):
        return np.diag(weight)
    if weight.shape == (scenario.n_u, scenario.n_u):
        return np.array(weight)
    raise ConfigurationError(
        "defaults.control_weight must be a scalar, diagonal, or full matrix"
    )


def scenario_from_dict(data, name=""):
    """Build and validate a Scenario from parsed JSON data."""
    if not isinstance(data, dict):
        raise ConfigurationError("scenario document must be a JSON object")
    version = _field(data, "schema_version", "scenario", str)
    if version != SCHEMA_VERSION:
        raise ConfigurationError(
            f"scenario schema_version {version!r} unsupported (expected '1')"
        )
    process = _build_process(_field(data, "process", "scenario", dict))
    observation = _build_observation(
        _field(data, "observation", "scenario", dict), process.n_x
    )
    mixture = _build_mixture(_field(data, "initial_belief", "scenario", dict))
    if mixture.dim != process.n_x:
        raise ConfigurationError(
            "initial_belief dimension does not match the process state"
        )
    goal_data = _field(data, "goal", "scenario", dict)
    goal = GoalSpec(
        state=_matrix(goal_data, "state", "goal"),
        radius=float(_field(goal_data, "radius", "goal")),
        threshold=float(_field(goal_data, "threshold", "goal")),
    )
    if goal.state.size != process.n_x:
        raise ConfigurationError("goal.state dimension does not match the process")
    obstacles = _build_obstacles(
        _field(data, "obstacles", "scenario", dict), process.n_x
    )
    defaults = _build_defaults(_field(data, "defaults", "scenario", dict))
    path = None
    if data.get("initial_path") is not None:
        path = np.atleast_2d(np.asarray(data["initial_path"], dtype=np.float64))
        if path.shape[0] < 2 or path.shape[1] != process.n_x:
            raise ConfigurationError(
                "initial_path must list at least two states of dimension n_x"
            )
    scenario = Scenario(
        name=str(data.get("name", name)),
        process=process,
        observation=observation,
        initial_belief=mixture,
        goal=goal,
        obstacles=obstacles,
        defaults=defaults,
        initial_path=path,
        description=str(data.get("description", "")),
    )
    control_weight_matrix(scenario)
    return scenario


def load_scenario(path_or_name):
    """Load a scenario from a JSON file path or a built-in name."""
    text = None
    name = str(path_or_name)
    if name in BUILTIN_NAMES:
        text = (
            resources.files("beliefrhc.data").joinpath(f"{name}.json").read_text()
        )
    else:
        try:
            with open(path_or_name, "r", encoding="utf-8") as handle:
                text = handle.read()
        except OSError as exc:
            raise ConfigurationError(f"cannot read scenario file: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"scenario JSON parse error at line {exc.lineno}: {exc.msg}"
        ) from exc
    return scenario_from_dict(data, name=name)


def scenario_to_dict(scenario):
    """Canonical JSON-ready dictionary for a Scenario (round-trip safe)."""
    process = scenario.process
    if isinstance(process, LinearProcess):
        process_data = {
            "type": "linear",
            "A": process.A.tolist(),
            "B": process.B.tolist(),
            "G": process.G.tolist(),
            "noise_std": process.noise_std.tolist(),
        }
    elif isinstance(process, UnicycleProcess):
        process_data = {
            "type": "unicycle",
            "dt": process.dt,
            "noise_std": process.noise_std.tolist(),
        }
    else:
        raise ConfigurationError("cannot serialize a custom process model")
    obs = scenario.observation
    if isinstance(obs, LightDarkObservation):
        obs_data = {"type": "light_dark", "x1_floor": obs.x1_floor}
    elif isinstance(obs, RangeObservation):
        obs_data = {
            "type": "range",
            "landmarks": obs.landmarks.tolist(),
            "noise_std": obs.noise_std,
        }
    elif isinstance(obs, BearingObservation):
        obs_data = {
            "type": "bearing",
            "landmarks": obs.landmarks.tolist(),
            "noise_std": obs.noise_std,
        }
    else:
        raise ConfigurationError("cannot serialize a custom observation model")
    mixture = scenario.initial_belief
    data = {
        "schema_version": SCHEMA_VERSION,
        "name": scenario.name,
        "description": scenario.description,
        "process": process_data,
        "observation": obs_data,
        "initial_belief": {
            "weights": mixture.weights.tolist(),
            "means": mixture.means.tolist(),
            "covariances": mixture.covs.tolist(),
        },
        "goal": {
            "state": scenario.goal.state.tolist(),
            "radius": scenario.goal.radius,
            "threshold": scenario.goal.threshold,
        },
        "obstacles": {
            "penalty": scenario.obstacles.magnitude,
            "ellipsoids": [
                {"center": e.center.tolist(), "alpha": e.alpha.tolist()}
                for e in scenario.obstacles.ellipsoids
            ],
            "rectangles": [],
        },
        "defaults": {
            "horizon": scenario.defaults.horizon,
            "num_particles": scenario.defaults.num_particles,
            "control_weight": np.asarray(scenario.defaults.control_weight).tolist(),
            "control_limit": scenario.defaults.control_limit,
            "beta": scenario.defaults.beta,
            "replan_period": scenario.defaults.replan_period,
            "max_steps": scenario.defaults.max_steps,
        },
    }
    if scenario.initial_path is not None:
        data["initial_path"] = scenario.initial_path.tolist()
    return data


def validate_scenario(scenario):
    """Sanity findings for a loaded scenario (report-only).

    Returns a list of human-readable strings; an empty list means no
    findings.  Checks include: goal or initial means blocked by an
    obstacle, landmarks inside obstacles, and light-dark domains whose
    straight start-to-goal paths cross the weighting pole.
    """
    findings = []
    goal_state = scenario.goal.state
    obstacles = scenario.obstacles
    if obstacles.num_terms:
        if coverage_margin(obstacles, goal_state) >= 0:
            findings.append("goal state is covered by an obstacle")
        for i, mean in enumerate(scenario.initial_belief.means):
            if coverage_margin(obstacles, mean) >= 0:
                findings.append(
                    f"initial belief component {i} mean is covered by an obstacle"
                )
        landmarks = getattr(scenario.observation, "landmarks", None)
        if landmarks is not None and obstacles.stacked()[0].shape[1] == 2:
            for i, landmark in enumerate(np.atleast_2d(landmarks)):
                if coverage_margin(obstacles, landmark) >= 0:
                    findings.append(f"landmark {i} is covered by an obstacle")
    if isinstance(scenario.observation, LightDarkObservation):
        pole = -0.5
        if goal_state[0] <= pole:
            findings.append(
                "goal first coordinate is at or below the weighting pole -0.5"
            )
        for i, mean in enumerate(scenario.initial_belief.means):
            low = min(float(mean[0]), float(goal_state[0]))
            if low <= pole:
                findings.append(
                    f"straight path from initial component {i} to the goal "
                    "crosses the weighting pole at -0.5"
                )
    if scenario.initial_path is not None:
        if not np.allclose(scenario.initial_path[-1], goal_state, atol=1e-9):
            findings.append("initial_path does not end at the goal state")
    return findings


TRACE_FLOAT_FORMAT = "%.17g"


def trace_header(n_x, n_u, n_z):
    """Column names of the per-step trace CSV."""
    cols = ["step"]
    cols += [f"x_true_{i}" for i in range(n_x)]
    cols += [f"u_{i}" for i in range(n_u)]
    cols += [f"z_{i}" for i in range(n_z)]
    cols += [f"x_map_{i}" for i in range(n_x)]
    cols.append("goal_probability")
    return cols


def write_trace(trace, path):
    """Write an execution trace as CSV (17 significant digits per float)."""
    fmt = TRACE_FLOAT_FORMAT
    lines = []
    header_written = False
    for record in trace.records:
        if not header_written:
            lines.append(
                ",".join(
                    trace_header(
                        record.true_state.size,
                        record.control.size,
                        record.observation.size,
                    )
                )
            )
            header_written = True
        values = [str(record.step)]
        for vec in (record.true_state, record.control, record.observation,
                    record.map_estimate):
            values.extend(fmt % v for v in vec)
        values.append(fmt % record.goal_probability)
        lines.append(",".join(values))
    if not header_written:
        lines.append("step")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(lines) + "\n")

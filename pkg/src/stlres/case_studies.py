"""Benchmark problems: single-track lane keeping and two-robot package delivery."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from .linear_system import ControlConstraintSet, CrossRow, LinearSystem
from .pareto import IndicatorCoupling, ResilientControlProblem
from .resilience import SrsSpec
from .stl import Always, And, Atom, Eventually, Interval, Or


class ConfigError(ValueError):
    pass


def seconds_to_steps(seconds: float, dt: float, what: str) -> int:
    steps = round(seconds / dt)
    if abs(steps * dt - seconds) > 1e-9 * max(1.0, abs(seconds)):
        raise ConfigError(f"{what}={seconds} s is not a whole number of {dt} s steps")
    return int(steps)


# --------------------------------------------------------------------------
# Lane keeping
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LaneKeepingConfig:
    l_F: float = 1.4          # m
    l_R: float = 2.55         # m
    C_aF: float = 2200.0      # N/rad
    C_aR: float = 2200.0      # N/rad
    I_z: float = 5757.0       # kg m^2
    m: float = 2200.0         # kg
    v: float = 10.0           # m/s
    dt: float = 0.1           # s
    horizon: int = 60
    x0: tuple = (5.0, 6.0, 0.0, 2.0)  # [y, y_v, omega, omega_v]
    y_l: float = -1.0         # m
    y_u: float = 1.0          # m
    h: int = 2                # steps
    alpha: float = 1.8        # s
    beta: float = 2.5         # s
    steer_bound: float = 0.72  # rad
    rate_bound: float = 0.72  # rad per step
    reference: tuple = ()     # lane-centre offset r_t per step, m; empty for a straight lane

    def __post_init__(self):
        for name in ("l_F", "l_R", "C_aF", "C_aR", "I_z", "m", "v", "dt"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.y_l >= self.y_u:
            raise ConfigError("y_l must be below y_u")
        if len(self.x0) != 4:
            raise ConfigError("x0 must be [y, y_v, omega, omega_v]")
        seconds_to_steps(self.alpha, self.dt, "alpha")
        seconds_to_steps(self.beta, self.dt, "beta")

    @property
    def alpha_steps(self) -> int:
        return seconds_to_steps(self.alpha, self.dt, "alpha")

    @property
    def beta_steps(self) -> int:
        return seconds_to_steps(self.beta, self.dt, "beta")

    def coefficients(self) -> dict:
        mv, Iv = self.m * self.v, self.I_z * self.v
        return {
            "a_c1": -(2 * self.C_aF + 2 * self.C_aR) / mv,
            "a_c2": -(2 * self.l_F * self.C_aF - 2 * self.l_R * self.C_aR) / mv - self.v,
            "a_c3": -(2 * self.l_F * self.C_aF - 2 * self.l_R * self.C_aR) / Iv,
            "a_c4": -(2 * self.l_F ** 2 * self.C_aF + 2 * self.l_R ** 2 * self.C_aR) / Iv,
            "b_2": 2 * self.C_aF / self.m,
            "b_4": 2 * self.l_F * self.C_aF / self.I_z,
        }

    def continuous(self):
        c = self.coefficients()
        A = np.array([[0, 1, 0, 0],
                      [0, c["a_c1"], 0, c["a_c2"]],
                      [0, 0, 0, 1],
                      [0, c["a_c3"], 0, c["a_c4"]]], float)
        B = np.array([[0], [c["b_2"]], [0], [c["b_4"]]], float)
        return A, B


LANE_STATES = ("y", "y_v", "omega", "omega_v")


def build_lane_keeping(cfg: LaneKeepingConfig = LaneKeepingConfig(), *, x0=None,
                       start_step: int = 0) -> ResilientControlProblem:
    """Euler-discretised single-track model with ``G[0,h](y_l <= y_e <= y_u)``.

    With a reference sequence the state gains a fifth component ``r`` (lane
    offset) driven by a second, pinned control ``dr_t = r_{t+1} - r_t``, so
    ``y_e = y - r`` stays linear.  ``start_step`` shifts the reference window
    for receding-horizon use.
    """
    A, B = cfg.continuous()
    F = np.eye(4) + A * cfg.dt
    G = B * cfg.dt
    H = cfg.horizon
    x0 = np.asarray(cfg.x0 if x0 is None else x0, float)
    lo, hi = [-cfg.steer_bound], [cfg.steer_bound]
    rate = [cfg.rate_bound]
    names = LANE_STATES
    cross = ()
    if cfg.reference:
        ref = np.asarray(cfg.reference, float)
        window = np.array([ref[min(start_step + t, len(ref) - 1)] for t in range(H + 1)])
        F = np.block([[F, np.zeros((4, 1))], [np.zeros((1, 4)), np.ones((1, 1))]])
        G = np.block([[G, np.zeros((4, 1))], [np.zeros((1, 1)), np.ones((1, 1))]])
        steps = np.diff(window)
        span = float(np.max(np.abs(steps))) if steps.size else 0.0
        lo, hi, rate = lo + [-span], hi + [span], rate + [np.inf]
        cross = tuple(CrossRow((((t, 1), 1.0),), steps[t], steps[t], f"ref_{t}") for t in range(H))
        if x0.shape[0] == 4:
            x0 = np.append(x0, window[0])
        names = LANE_STATES + ("r",)
    n = F.shape[0]
    y = np.zeros(n)
    y[0] = 1.0
    if n == 5:
        y[4] = -1.0
    inside = And((Atom(tuple(y), cfg.y_l), Atom(tuple(-y), -cfg.y_u)))
    phi = Always(Interval(0, cfg.h), inside)
    controls = ControlConstraintSet.box(lo, hi, rate_limit=rate, cross_rows=cross)
    return ResilientControlProblem(LinearSystem(F, G), x0, controls, H,
                                   SrsSpec(phi, cfg.alpha_steps, cfg.beta_steps),
                                   step_seconds=cfg.dt, state_names=names)


# --------------------------------------------------------------------------
# Package delivery
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PackageDeliveryConfig:
    robots: int = 2
    t_s: float = 0.1
    d_u: float = 0.005
    e_ch: tuple = (7.0, 2.0)
    e_con: float = -1.0
    E_l: float = 10.0
    horizon: int = 60
    alpha: int = 25           # steps
    beta: int = 20            # steps
    x0: tuple = ((1.1, 0.0, 0.5, 0.0, 5.0, -1.0), (7.0, 0.0, 2.0, 0.0, 13.0, -1.0))
    R1: tuple = (0.0, 4.0, 7.0, 11.0)   # [x_lo, x_hi, y_lo, y_hi]
    R2: tuple = (6.0, 10.0, 7.0, 11.0)
    C1: tuple = (0.0, 1.0, 0.0, 1.0)
    C2: tuple = (9.0, 10.0, 0.0, 1.0)
    u_bound: float = 1.0

    def __post_init__(self):
        if self.robots < 1:
            raise ConfigError("need at least one robot")
        if len(self.e_ch) != self.robots or len(self.x0) != self.robots:
            raise ConfigError("e_ch and x0 need one entry per robot")
        if any(len(x) != 6 for x in self.x0):
            raise ConfigError("robot state is [l_x, v_x, l_y, v_y, e, v_e]")
        if any(e <= 0 for e in self.e_ch):
            raise ConfigError("charging rates must be positive")
        for name in ("R1", "R2", "C1", "C2"):
            b = getattr(self, name)
            if len(b) != 4 or not (b[0] < b[1] and b[2] < b[3]):
                raise ConfigError(f"region {name} must be a non-degenerate [x_lo, x_hi, y_lo, y_hi] box")


ROBOT_STATES = ("l_x", "v_x", "l_y", "v_y", "e", "v_e")
ROBOT_CONTROLS = ("u_1", "u_2", "u_3", "e_con")


def package_delivery_matrices(cfg: PackageDeliveryConfig):
    """``F_N = I_N (x) F_robot`` and block-diagonal ``G_N`` (controls ``[u1, u2, u3, e_con]`` per robot)."""
    ts, du = cfg.t_s, cfg.d_u
    A = np.array([[1.0, ts], [0.0, 1.0]])
    b = np.array([[du], [ts]])
    F1 = np.zeros((6, 6))
    F1[:4, :4] = np.kron(np.eye(2), A)
    F1[4, 4], F1[4, 5] = 1.0, ts
    F = np.kron(np.eye(cfg.robots), F1)
    G = np.zeros((6 * cfg.robots, 4 * cfg.robots))
    for i, ech in enumerate(cfg.e_ch):
        Bi = np.zeros((6, 4))
        Bi[:4, :2] = np.kron(np.eye(2), b)
        Bi[4, 2] = du
        Bi[5, 2], Bi[5, 3] = ech, 1.0
        G[6 * i:6 * i + 6, 4 * i:4 * i + 4] = Bi
    return F, G


def in_region(cfg: PackageDeliveryConfig, robot: int, box) -> And:
    """Four-row box membership of robot ``robot`` (0-based)."""
    n = 6 * cfg.robots

    def atom(k, sign, c):
        a = np.zeros(n)
        a[6 * robot + k] = sign
        return Atom(tuple(a), sign * c)

    x_lo, x_hi, y_lo, y_hi = box
    return And((atom(0, 1.0, x_lo), atom(0, -1.0, x_hi), atom(2, 1.0, y_lo), atom(2, -1.0, y_hi)))


def delivery_formula(cfg: PackageDeliveryConfig):
    H = cfg.horizon
    n = 6 * cfg.robots

    def someone_in(box):
        parts = [in_region(cfg, i, box) for i in range(cfg.robots)]
        return parts[0] if len(parts) == 1 else Or(tuple(parts))

    def deadlines(box):
        s = someone_in(box)
        return [Eventually(Interval(0, H // 2), s), Eventually(Interval(H // 2, H), s)]

    battery = []
    for i in range(cfg.robots):
        a = np.zeros(n)
        a[6 * i + 4] = 1.0
        battery.append(Atom(tuple(a), cfg.E_l))
    return And(tuple(deadlines(cfg.R1) + deadlines(cfg.R2) + battery))


def build_package_delivery(cfg: PackageDeliveryConfig = PackageDeliveryConfig(), *,
                           x0=None) -> ResilientControlProblem:
    F, G = package_delivery_matrices(cfg)
    N = cfg.robots
    lo, hi, binary = [], [], []
    for _ in range(N):
        lo += [-cfg.u_bound, -cfg.u_bound, 0.0, cfg.e_con]
        hi += [cfg.u_bound, cfg.u_bound, 1.0, cfg.e_con]
        binary += [False, False, True, False]
    controls = ControlConstraintSet.box(lo, hi, binary=binary)
    couplings = tuple(
        IndicatorCoupling(4 * i + 2, Or((in_region(cfg, i, cfg.C1), in_region(cfg, i, cfg.C2))),
                          f"charging_{i}")
        for i in range(N))
    x0 = np.concatenate([np.asarray(x, float) for x in cfg.x0]) if x0 is None else np.asarray(x0, float)
    names = tuple(f"{s}{i + 1}" for i in range(N) for s in ROBOT_STATES)
    return ResilientControlProblem(LinearSystem(F, G), x0, controls, cfg.horizon,
                                   SrsSpec(delivery_formula(cfg), cfg.alpha, cfg.beta),
                                   step_seconds=cfg.t_s, state_names=names, couplings=couplings)


# --------------------------------------------------------------------------
# Config files
# --------------------------------------------------------------------------

CASES = {"lane-keeping": LaneKeepingConfig, "package-delivery": PackageDeliveryConfig}
BUILDERS = {"lane-keeping": build_lane_keeping, "package-delivery": build_package_delivery}


def _tuplify(v):
    if isinstance(v, list):
        return tuple(_tuplify(x) for x in v)
    return v


def make_config(case: str, overrides: dict | None = None):
    """Config for ``case`` with ``overrides`` applied; unknown keys are errors."""
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}; choose from {', '.join(CASES)}")
    cls = CASES[case]
    known = {f.name for f in fields(cls)}
    overrides = dict(overrides or {})
    bad = set(overrides) - known
    if bad:
        raise ConfigError(f"unknown {case} setting(s): {', '.join(sorted(bad))}")
    try:
        return cls(**{k: _tuplify(v) for k, v in overrides.items()})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_to_json(cfg) -> str:
    case = next(k for k, c in CASES.items() if isinstance(cfg, c))
    return json.dumps({"case": case, "settings": asdict(cfg)}, indent=2)

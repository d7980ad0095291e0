"""Closed-loop zero-order-hold simulation of magnetically driven pendulums.

Each controller tick: measure angles (with optional latency, tilt bias, and
noise), estimate velocities by backward differences, evaluate the per-channel
LQRI laws, allocate coil currents for the commanded task, clamp to the
current limit, and integrate the plant across the tick with the first-order
current-driver lag as the only inter-tick input variation.

The plant is driven physically: the applied currents produce a field and
gradient at each (fixed) agent position, the dipole wrench and its lever-arm
torque are projected onto the two gimbal axes, and the resulting generalized
forces feed the planar actuator/pendulum dynamics of each channel.  The two
channels couple through the shared dipole orientation.

The inner integration loop runs on plain Python floats over per-tick
precomputed field/gradient grids (the lag-filtered currents do not depend on
the plant state), which keeps multi-second scenarios well under real time.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import alloc
from .alloc import FieldCommand, RankDeficiencyError, WrenchTask
from .control import (
    ControllerConfig,
    IntegralSchedule,
    LqriController,
    VelocityEstimator,
    closed_loop_spectral_radius,
    dare_residual,
    lqr_gain,
)
from .dynamics import (
    PendulumParams,
    _coupled_accelerations,
    finite_difference_linearization,
    linearize,
    linearize_actuator,
)
from .magmodel import (
    ActuationModel,
    DipoleAgent,
    SingularPositionError,
    actuation_matrix,
    get_model,
)

#: Fixed plant substep for the RK4 integrator [s].
PLANT_DT = 1.0e-4

SETPOINT_KINDS = ("constant", "circle")
DISTURBANCE_KINDS = ("impulse", "torque_bias", "measurement_tilt")
CHANNELS = ("alpha", "beta")

SINGLE_STRATEGIES_BY_PARADIGM = {
    "field": ("field_alignment",),
    "torque": (
        "torque_one_step",
        "torque_two_step",
        "torque_twostep_JM",
        "torque_twostep_MA",
    ),
}
MULTI_STRATEGIES_BY_PARADIGM = {
    "field": ("multi_field",),
    "torque": ("multi_torque",),
}


@dataclass(frozen=True)
class EmnsConfig:
    """Electromagnetic-navigation-system interface characteristics.

    Attributes:
        control_rate: Controller frequency [Hz].
        current_limit: Per-coil saturation bound [A].
        current_bandwidth: First-order current-driver -3 dB bandwidth [Hz];
            0 means ideal (instant) drivers.
        loop_latency: Measurement delay [s], rounded to whole ticks.
    """

    control_rate: float
    current_limit: float
    current_bandwidth: float = 0.0
    loop_latency: float = 0.0

    def __post_init__(self) -> None:
        if self.control_rate <= 0:
            raise ValueError("control_rate must be positive")
        if self.current_limit <= 0:
            raise ValueError("current_limit must be positive")
        if self.current_bandwidth < 0:
            raise ValueError("current_bandwidth must be non-negative")
        if self.loop_latency < 0:
            raise ValueError("loop_latency must be non-negative")


EMNS_PRESETS = {
    "octomag": EmnsConfig(
        control_rate=200.0, current_limit=16.0, current_bandwidth=26.4
    ),
    "navion": EmnsConfig(
        control_rate=125.0, current_limit=25.0, current_bandwidth=24.5
    ),
}


@dataclass(frozen=True)
class SetpointSpec:
    """Tilt-angle setpoint trajectory for one agent.

    "constant" holds (alpha, beta); "circle" traces
    alpha = radius cos(2 pi f t + phase), beta = radius sin(2 pi f t + phase).
    """

    kind: str = "constant"
    alpha: float = 0.0
    beta: float = 0.0
    radius: float = 0.0
    frequency: float = 0.0
    phase: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in SETPOINT_KINDS:
            raise ValueError(f"setpoint kind must be one of {SETPOINT_KINDS}")

    def value(self, t: float) -> tuple[float, float]:
        if self.kind == "constant":
            return self.alpha, self.beta
        arg = 2.0 * math.pi * self.frequency * t + self.phase
        return self.radius * math.cos(arg), self.radius * math.sin(arg)


@dataclass(frozen=True)
class DisturbanceEvent:
    """A scheduled disturbance; times snap to the controller tick grid.

    kinds:
        impulse: adds `magnitude` [rad/s] to the channel's actuator rate at
            the first tick boundary at/after `time`.
        torque_bias: adds `magnitude` [N·m] to the channel's generalized
            force from `time` (for `duration` seconds; None = to the end).
        measurement_tilt: offsets the channel's measured angles by
            `magnitude` [rad] from `time` onward.
    """

    kind: str
    time: float
    magnitude: float
    agent: int = 0
    channel: str = "alpha"
    duration: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in DISTURBANCE_KINDS:
            raise ValueError(f"disturbance kind must be one of {DISTURBANCE_KINDS}")
        if self.channel not in CHANNELS:
            raise ValueError(f"channel must be one of {CHANNELS}")
        if self.time < 0:
            raise ValueError("event time must be non-negative")
        if self.duration is not None and self.duration <= 0:
            raise ValueError("event duration must be positive when given")


@dataclass(frozen=True)
class AgentSetup:
    """One pivoted pendulum unit in a scenario.

    initial: state (alpha, beta, phi, theta, alpha_dot, beta_dot, phi_dot,
    theta_dot) [rad, rad/s]; the pendulum entries are ignored when
    pendulum_attached is False.
    """

    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    initial: tuple[float, ...] = (0.0,) * 8
    polarity: int = 1
    pendulum_attached: bool = True
    release_time: float = 0.0
    setpoint: SetpointSpec = field(default_factory=SetpointSpec)
    controller_alpha: ControllerConfig | None = None
    controller_beta: ControllerConfig | None = None
    integral_windows_alpha: tuple[tuple[float, float], ...] = ()
    integral_windows_beta: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        initial = tuple(float(v) for v in self.initial)
        if len(initial) != 8:
            raise ValueError("initial state must have 8 entries")
        object.__setattr__(self, "initial", initial)
        if self.polarity not in (-1, 1):
            raise ValueError("polarity must be +1 or -1")
        if self.release_time < 0:
            raise ValueError("release_time must be non-negative")


@dataclass(frozen=True)
class Scenario:
    """Complete description of one closed-loop simulation."""

    name: str
    model: ActuationModel
    paradigm: str
    strategy: str
    emns: EmnsConfig
    duration: float
    agents: tuple[AgentSetup, ...]
    plant: PendulumParams = field(default_factory=PendulumParams)
    disturbances: tuple[DisturbanceEvent, ...] = ()
    field_magnitude: float = 0.0
    include_force: bool = True
    measurement_noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if not 1 <= len(self.agents) <= 2:
            raise ValueError("scenarios support 1 or 2 agents")
        table = (
            SINGLE_STRATEGIES_BY_PARADIGM
            if len(self.agents) == 1
            else MULTI_STRATEGIES_BY_PARADIGM
        )
        if self.paradigm not in table:
            raise ValueError(f"paradigm must be one of {tuple(table)}")
        if self.strategy not in table[self.paradigm]:
            raise ValueError(
                f"strategy '{self.strategy}' invalid for paradigm "
                f"'{self.paradigm}' with {len(self.agents)} agent(s); "
                f"expected one of {table[self.paradigm]}"
            )
        if self.paradigm == "field" and self.field_magnitude <= 0:
            raise ValueError("field paradigm requires field_magnitude > 0")
        if self.measurement_noise_std < 0:
            raise ValueError("measurement_noise_std must be non-negative")
        for idx, agent in enumerate(self.agents):
            pos = np.asarray(agent.position, dtype=float)
            if np.linalg.norm(pos) > 0.5:
                raise ValueError(f"agent {idx} position {agent.position} is "
                                 "outside the model validity region")
            try:
                actuation_matrix(self.model, pos)
            except SingularPositionError as exc:
                raise ValueError(f"agent {idx}: {exc}") from exc
        for ev in self.disturbances:
            if ev.agent >= len(self.agents):
                raise ValueError(f"disturbance references agent {ev.agent}")
            if ev.time >= self.duration:
                raise ValueError("disturbance time must fall inside duration")


@dataclass
class SimTrace:
    """Uniform-rate closed-loop trace.

    All per-agent arrays have shape (ticks, n_agents); currents have shape
    (ticks, n_coils).  `outputs_*` hold the per-channel controller outputs:
    torques [N·m] in the torque paradigm, commanded field angles [rad] in the
    field paradigm.  `currents` are the applied (lagged, saturated) coil
    currents at the tick instant; `currents_cmd` the post-clamp commands
    issued at that tick.
    """

    t: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    phi: np.ndarray
    theta: np.ndarray
    alpha_sp: np.ndarray
    beta_sp: np.ndarray
    outputs_alpha: np.ndarray
    outputs_beta: np.ndarray
    currents: np.ndarray
    currents_cmd: np.ndarray
    fields: np.ndarray  # (ticks, n_agents, 3)
    residuals: np.ndarray
    synthesis: list
    summary: dict
    failure: dict | None = None

    @property
    def n_agents(self) -> int:
        return self.alpha.shape[1]

    def to_csv(self, path: str | Path) -> None:
        """Write the fixed-schema trace CSV (one row per tick per agent)."""
        n_coils = self.currents.shape[1]
        header = (
            ["t", "agent", "alpha", "beta", "phi", "theta", "alpha_sp", "beta_sp",
             "tau_x", "tau_y"]
            + [f"i_{k + 1}" for k in range(n_coils)]
            + ["b_x", "b_y", "b_z"]
        )
        fmt = lambda x: format(float(x), ".17g")  # noqa: E731 - local formatter
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            for k in range(self.t.shape[0]):
                for a in range(self.n_agents):
                    row = [
                        fmt(self.t[k]),
                        str(a),
                        fmt(self.alpha[k, a]),
                        fmt(self.beta[k, a]),
                        fmt(self.phi[k, a]),
                        fmt(self.theta[k, a]),
                        fmt(self.alpha_sp[k, a]),
                        fmt(self.beta_sp[k, a]),
                        fmt(self.outputs_beta[k, a]),  # tau_x = beta channel
                        fmt(self.outputs_alpha[k, a]),  # tau_y = alpha channel
                    ]
                    row += [fmt(v) for v in self.currents[k]]
                    row += [fmt(v) for v in self.fields[k, a]]
                    writer.writerow(row)


def _default_controller(attached: bool, sample_time: float) -> ControllerConfig:
    q = (20.0, 40.0, 1.0, 1.0) if attached else (20.0, 1.0)
    return ControllerConfig(q_diag=q, sample_time=sample_time)


def _controller_for(
    setup: AgentSetup, channel: str, attached: bool, sample_time: float
) -> ControllerConfig:
    cfg = setup.controller_alpha if channel == "alpha" else setup.controller_beta
    if cfg is None and channel == "beta":
        cfg = setup.controller_alpha  # beta falls back to the alpha config
    if cfg is None:
        cfg = _default_controller(attached, sample_time)
    if abs(cfg.sample_time - sample_time) > 1e-12:
        cfg = replace(cfg, sample_time=sample_time)
    if len(cfg.q_diag) != (4 if attached else 2):
        raise ValueError(
            f"controller q_diag length {len(cfg.q_diag)} does not match the "
            f"{'4-state coupled' if attached else '2-state actuator'} plant"
        )
    return cfg


def _rk4_tick(
    y: tuple,
    deriv,
    substeps: int,
    dt: float,
    b_grid: list,
    g_grid: list,
    bias_a: float,
    bias_b: float,
) -> tuple:
    """Integrate one controller tick (pure Python floats)."""
    half = 0.5 * dt
    sixth = dt / 6.0
    for j in range(substeps):
        base = 2 * j
        k1 = deriv(y, base, b_grid, g_grid, bias_a, bias_b)
        y2 = tuple(v + half * k for v, k in zip(y, k1))
        k2 = deriv(y2, base + 1, b_grid, g_grid, bias_a, bias_b)
        y3 = tuple(v + half * k for v, k in zip(y, k2))
        k3 = deriv(y3, base + 1, b_grid, g_grid, bias_a, bias_b)
        y4 = tuple(v + dt * k for v, k in zip(y, k3))
        k4 = deriv(y4, base + 2, b_grid, g_grid, bias_a, bias_b)
        y = tuple(
            v + sixth * (a + 2.0 * (b + c) + d)
            for v, a, b, c, d in zip(y, k1, k2, k3, k4)
        )
    return y


def _make_deriv(params: PendulumParams, attached: bool, mag_pol: float):
    """Plant derivative for one agent's joint (alpha+beta channel) state."""
    lever = params.magnet_offset
    eta_g = params.eta * params.gravity
    damping = params.damping
    inertia = params.inertia
    sin = math.sin
    cos = math.cos

    def deriv(y, idx, b_grid, g_grid, bias_a, bias_b):
        if attached:
            a, ph, ad, phd, bb, th, bd, thd = y
        else:
            a, ad, bb, bd = y
        sa = sin(a)
        ca = cos(a)
        sb = sin(bb)
        cb = cos(bb)
        ax = sa * cb
        ay = -sb
        az = ca * cb
        mx = mag_pol * ax
        my = mag_pol * ay
        mz = mag_pol * az
        bx, by, bz = b_grid[idx]
        g1, g2, g3, g4, g5 = g_grid[idx]
        fx = g1 * mx + g2 * my + g3 * mz
        fy = g2 * mx + g4 * my + g5 * mz
        fz = g3 * mx + g5 * my - (g1 + g4) * mz
        tx = my * bz - mz * by + lever * (ay * fz - az * fy)
        ty = mz * bx - mx * bz + lever * (az * fx - ax * fz)
        tz = mx * by - my * bx + lever * (ax * fy - ay * fx)
        qa = ty + bias_a
        qb = tx * ca - tz * sa + bias_b
        if attached:
            add, phdd = _coupled_accelerations(params, a, ph, ad, phd, qa)
            bdd, thdd = _coupled_accelerations(params, bb, th, bd, thd, qb)
            return (ad, phd, add, phdd, bd, thd, bdd, thdd)
        add = (eta_g * sa + qa - damping * ad) / inertia
        bdd = (eta_g * sb + qb - damping * bd) / inertia
        return (ad, add, bd, bdd)

    return deriv


def _initial_joint_state(setup: AgentSetup) -> tuple:
    a0, b0, ph0, th0, ad0, bd0, phd0, thd0 = setup.initial
    if setup.pendulum_attached:
        return (a0, ph0, ad0, phd0, b0, th0, bd0, thd0)
    return (a0, ad0, b0, bd0)


def _joint_angles(y: tuple, attached: bool) -> tuple[float, float, float, float]:
    """(alpha, beta, phi, theta) from the packed joint state."""
    if attached:
        return y[0], y[4], y[1], y[5]
    return y[0], y[2], 0.0, 0.0


class _ChannelController:
    """A channel's LQRI plus its velocity estimators."""

    def __init__(
        self,
        gain: np.ndarray,
        cfg: ControllerConfig,
        windows: tuple[tuple[float, float], ...],
        attached: bool,
    ) -> None:
        self.lqri = LqriController(gain, cfg, IntegralSchedule(windows))
        self.attached = attached
        self.vel_actuator = VelocityEstimator(cfg.sample_time, cfg.velocity_filter_cutoff)
        self.vel_pendulum = VelocityEstimator(cfg.sample_time, cfg.velocity_filter_cutoff)

    def step(self, actuator_angle: float, pendulum_angle: float, sp: float) -> float:
        rate_a = self.vel_actuator.push(actuator_angle)
        if self.attached:
            rate_p = self.vel_pendulum.push(pendulum_angle)
            x = np.array([actuator_angle, pendulum_angle, rate_a, rate_p])
        else:
            x = np.array([actuator_angle, rate_a])
        return self.lqri.step(x, sp)


def run_scenario(scenario: Scenario) -> SimTrace:
    """Simulate a scenario tick by tick; see the module docstring.

    Returns a SimTrace.  Controller synthesis failures raise SynthesisError
    (the scenario precondition); an allocation rank failure mid-run is
    recorded in `trace.failure` with its timestamp and the trace is truncated
    at the failing tick.
    """
    model = scenario.model
    emns = scenario.emns
    params = scenario.plant
    n_agents = len(scenario.agents)
    n_coils = model.n_coils
    h = 1.0 / emns.control_rate
    ticks = int(round(scenario.duration * emns.control_rate))
    substeps = max(1, int(round(h / PLANT_DT)))
    dt = h / substeps
    latency_ticks = int(round(emns.loop_latency * emns.control_rate))
    rng = np.random.default_rng(scenario.seed)

    # --- synthesis ---------------------------------------------------------
    synthesis = []
    controllers: list[dict[str, _ChannelController]] = []
    for a_idx, setup in enumerate(scenario.agents):
        attached = setup.pendulum_attached
        if attached:
            sys = linearize(
                params, scenario.paradigm, b_mag=scenario.field_magnitude,
                sample_time=h,
            )
            a_fd, b_fd = finite_difference_linearization(
                params, scenario.paradigm, b_mag=scenario.field_magnitude
            )
            fd_match = float(
                max(np.max(np.abs(sys.a - a_fd)), np.max(np.abs(sys.b - b_fd)))
            )
        else:
            sys = linearize_actuator(
                params, scenario.paradigm, b_mag=scenario.field_magnitude,
                sample_time=h,
            )
            fd_match = 0.0
        per_channel: dict[str, _ChannelController] = {}
        for channel in CHANNELS:
            cfg = _controller_for(setup, channel, attached, h)
            gain = lqr_gain(sys, cfg)
            residual = dare_residual(
                _dare_p(sys, cfg), sys.a_d, sys.b_d,
                np.diag(cfg.q_diag), np.array([[cfg.r_weight]]),
            )
            windows = (
                setup.integral_windows_alpha
                if channel == "alpha"
                else setup.integral_windows_beta
            )
            per_channel[channel] = _ChannelController(gain, cfg, windows, attached)
            synthesis.append(
                {
                    "agent": a_idx,
                    "channel": channel,
                    "gain": [float(v) for v in gain[0]],
                    "dare_residual": float(residual),
                    "spectral_radius": float(closed_loop_spectral_radius(sys, gain)),
                    "fd_linearization_match": fd_match,
                }
            )
        controllers.append(per_channel)

    # --- precomputation ----------------------------------------------------
    a_mats = [
        actuation_matrix(model, np.asarray(s.position, dtype=float))
        for s in scenario.agents
    ]
    a_field_rows = [m[:3] for m in a_mats]
    a_grad_rows = [m[3:] for m in a_mats]
    derivs = [
        _make_deriv(
            params,
            s.pendulum_attached,
            params.dipole_magnitude * s.polarity,
        )
        for s in scenario.agents
    ]
    grid_times = np.arange(2 * substeps + 1) * (0.5 * dt)
    omega = 2.0 * math.pi * emns.current_bandwidth
    if emns.current_bandwidth > 0.0:
        decay_grid = np.exp(-omega * grid_times)
        decay_end = float(np.exp(-omega * h))
    else:
        decay_grid = np.zeros_like(grid_times)
        decay_end = 0.0
    limit = emns.current_limit

    # --- event handling ----------------------------------------------------
    impulses = [ev for ev in scenario.disturbances if ev.kind == "impulse"]
    impulse_done = [False] * len(impulses)

    def bias_for(agent_idx: int, channel: str, t: float) -> float:
        total = 0.0
        for ev in scenario.disturbances:
            if ev.kind != "torque_bias" or ev.agent != agent_idx:
                continue
            if ev.channel != channel:
                continue
            if t + 1e-12 < ev.time:
                continue
            if ev.duration is not None and t >= ev.time + ev.duration:
                continue
            total += ev.magnitude
        return total

    def tilt_for(agent_idx: int, channel: str, t: float) -> float:
        total = 0.0
        for ev in scenario.disturbances:
            if ev.kind != "measurement_tilt" or ev.agent != agent_idx:
                continue
            if ev.channel != channel or t + 1e-12 < ev.time:
                continue
            total += ev.magnitude
        return total

    # --- state -------------------------------------------------------------
    states = [_initial_joint_state(s) for s in scenario.agents]
    i_applied = np.zeros(n_coils)
    meas_buffers = [deque() for _ in scenario.agents]

    tr_t = np.zeros(ticks)
    tr = {
        name: np.zeros((ticks, n_agents))
        for name in (
            "alpha", "beta", "phi", "theta", "alpha_sp", "beta_sp",
            "out_alpha", "out_beta",
        )
    }
    tr_currents = np.zeros((ticks, n_coils))
    tr_cmd = np.zeros((ticks, n_coils))
    tr_fields = np.zeros((ticks, n_agents, 3))
    tr_residuals = np.zeros(ticks)
    failure = None
    completed = ticks

    for k in range(ticks):
        t = k * h
        tr_t[k] = t

        # Impulse events due at this tick boundary.
        for e_idx, ev in enumerate(impulses):
            if impulse_done[e_idx] or t + 1e-12 < ev.time:
                continue
            impulse_done[e_idx] = True
            y = list(states[ev.agent])
            attached = scenario.agents[ev.agent].pendulum_attached
            if ev.channel == "alpha":
                y[2 if attached else 1] += ev.magnitude
            else:
                y[6 if attached else 3] += ev.magnitude
            states[ev.agent] = tuple(y)

        # Record plant state and applied currents at the tick instant.
        for a_idx, setup in enumerate(scenario.agents):
            al, be, ph, th = _joint_angles(states[a_idx], setup.pendulum_attached)
            tr["alpha"][k, a_idx] = al
            tr["beta"][k, a_idx] = be
            tr["phi"][k, a_idx] = ph
            tr["theta"][k, a_idx] = th
            tr_fields[k, a_idx] = a_field_rows[a_idx] @ i_applied
        tr_currents[k] = i_applied

        # Measure (tilt bias + optional noise), with integer-tick latency.
        noisy = scenario.measurement_noise_std > 0.0
        meas_agents = []
        for a_idx, setup in enumerate(scenario.agents):
            al, be, ph, th = _joint_angles(states[a_idx], setup.pendulum_attached)
            tilt_a = tilt_for(a_idx, "alpha", t)
            tilt_b = tilt_for(a_idx, "beta", t)
            meas = [al + tilt_a, be + tilt_b, ph + tilt_a, th + tilt_b]
            if noisy:
                meas = [
                    v + float(rng.normal(0.0, scenario.measurement_noise_std))
                    for v in meas
                ]
            buf = meas_buffers[a_idx]
            buf.append(meas)
            if len(buf) > latency_ticks + 1:
                buf.popleft()
            meas_agents.append(buf[0])

        # Controller outputs per agent/channel.
        setpoints = [s.setpoint.value(t) for s in scenario.agents]
        outputs = []
        for a_idx, setup in enumerate(scenario.agents):
            m_al, m_be, m_ph, m_th = meas_agents[a_idx]
            sp_a, sp_b = setpoints[a_idx]
            out_a = controllers[a_idx]["alpha"].step(m_al, m_ph, sp_a)
            out_b = controllers[a_idx]["beta"].step(m_be, m_th, sp_b)
            outputs.append((out_a, out_b))
            tr["alpha_sp"][k, a_idx] = sp_a
            tr["beta_sp"][k, a_idx] = sp_b
            tr["out_alpha"][k, a_idx] = out_a
            tr["out_beta"][k, a_idx] = out_b

        # Allocation (on measured orientations).
        try:
            result = _allocate(scenario, meas_agents, outputs)
        except RankDeficiencyError as exc:
            failure = {"time": float(t), "tick": k, "error": str(exc)}
            completed = k + 1
            break
        tr_residuals[k] = result.residual_norm
        i_cmd = np.clip(result.currents, -limit, limit)
        tr_cmd[k] = i_cmd

        # Current grids across the tick under the first-order driver lag.
        diff = i_applied - i_cmd
        i_grid = i_cmd[:, None] + diff[:, None] * decay_grid[None, :]
        i_applied = np.clip(i_cmd + diff * decay_end, -limit, limit)

        # Integrate each agent's plant across the tick.
        for a_idx, setup in enumerate(scenario.agents):
            if t + h <= setup.release_time + 1e-12:
                continue  # still held at its initial pose
            b_grid = (a_field_rows[a_idx] @ i_grid).T.tolist()
            g_grid = (a_grad_rows[a_idx] @ i_grid).T.tolist()
            states[a_idx] = _rk4_tick(
                states[a_idx],
                derivs[a_idx],
                substeps,
                dt,
                b_grid,
                g_grid,
                bias_for(a_idx, "alpha", t),
                bias_for(a_idx, "beta", t),
            )

    sl = slice(0, completed)
    trace = SimTrace(
        t=tr_t[sl],
        alpha=tr["alpha"][sl],
        beta=tr["beta"][sl],
        phi=tr["phi"][sl],
        theta=tr["theta"][sl],
        alpha_sp=tr["alpha_sp"][sl],
        beta_sp=tr["beta_sp"][sl],
        outputs_alpha=tr["out_alpha"][sl],
        outputs_beta=tr["out_beta"][sl],
        currents=tr_currents[sl],
        currents_cmd=tr_cmd[sl],
        fields=tr_fields[sl],
        residuals=tr_residuals[sl],
        synthesis=synthesis,
        summary={},
        failure=failure,
    )
    trace.summary = _summarize(scenario, trace)
    return trace


def _dare_p(sys, cfg: ControllerConfig) -> np.ndarray:
    from .control import dare_solve

    return dare_solve(
        sys.a_d, sys.b_d, np.diag(cfg.q_diag), np.array([[cfg.r_weight]])
    )


def _allocate(scenario: Scenario, meas_agents: list, outputs: list):
    """Dispatch one tick's task to the configured allocation strategy."""
    model = scenario.model
    params = scenario.plant
    if scenario.paradigm == "field":
        # A polarity -1 magnet aligns antiparallel to the field, so its
        # commanded field direction is inverted: -b(u, v) = b(pi + u, -v).
        commands = [
            FieldCommand(
                u_alpha=out_a if setup.polarity == 1 else math.pi + out_a,
                u_beta=out_b if setup.polarity == 1 else -out_b,
                magnitude=scenario.field_magnitude,
            )
            for setup, (out_a, out_b) in zip(scenario.agents, outputs)
        ]
        if scenario.strategy == "field_alignment":
            return alloc.allocate_field_alignment(
                model,
                np.asarray(scenario.agents[0].position, dtype=float),
                commands[0],
                zero_gradient=model.n_coils >= 8,
            )
        positions = [np.asarray(s.position, dtype=float) for s in scenario.agents]
        return alloc.allocate_multi_field(model, positions, commands)

    dipoles = [
        DipoleAgent(
            p=tuple(setup.position),
            alpha=meas[0],
            beta=meas[1],
            dipole_magnitude=params.dipole_magnitude,
            polarity=setup.polarity,
        )
        for setup, meas in zip(scenario.agents, meas_agents)
    ]
    tasks = [
        WrenchTask.planar(out_b, out_a)  # tau_x = beta out, tau_y = alpha out
        for (out_a, out_b) in outputs
    ]
    if scenario.strategy == "multi_torque":
        return alloc.allocate_multi_torque(model, dipoles, params, tasks)
    single = {
        "torque_one_step": lambda: alloc.allocate_torque_one_step(
            model, dipoles[0], params, tasks[0], include_force=scenario.include_force
        ),
        "torque_two_step": lambda: alloc.allocate_torque_two_step(
            model, dipoles[0], tasks[0]
        ),
        "torque_twostep_JM": lambda: alloc.allocate_torque_twostep_jm(
            model, dipoles[0], params, tasks[0]
        ),
        "torque_twostep_MA": lambda: alloc.allocate_torque_twostep_ma(
            model, dipoles[0], params, tasks[0]
        ),
    }
    return single[scenario.strategy]()


def _summarize(scenario: Scenario, trace: SimTrace) -> dict:
    """Settling, tracking, and current metrics plus synthesis diagnostics."""
    ticks = trace.t.shape[0]
    n_agents = trace.n_agents
    steady_from = int(0.75 * ticks)
    last_quarter = slice(int(0.75 * ticks), None)

    err_a = trace.alpha - trace.alpha_sp
    err_b = trace.beta - trace.beta_sp
    err_mag = np.hypot(err_a, err_b)

    settle_threshold = math.radians(0.5)
    settling = []
    for a_idx in range(n_agents):
        angles = np.stack(
            [
                np.abs(trace.alpha[:, a_idx]),
                np.abs(trace.phi[:, a_idx]),
            ]
        )
        within = np.all(angles < settle_threshold, axis=0)
        settled_at = None
        for k in range(ticks):
            if within[k:].all():
                settled_at = float(trace.t[k])
                break
        settling.append(settled_at)

    rms_tracking = [
        float(np.sqrt(np.mean(err_mag[steady_from:, a_idx] ** 2)))
        for a_idx in range(n_agents)
    ]

    summary = {
        "scenario": scenario.name,
        "paradigm": scenario.paradigm,
        "strategy": scenario.strategy,
        "duration": float(scenario.duration),
        "ticks": int(ticks),
        "n_agents": n_agents,
        "seed": int(scenario.seed),
        "metrics": {
            "settling_time": settling,
            "rms_tracking_last_quarter": rms_tracking,
            "max_current": float(np.max(np.abs(trace.currents))) if ticks else 0.0,
            "steady_max_current": float(
                np.max(np.abs(trace.currents[last_quarter]))
            )
            if ticks
            else 0.0,
            "max_allocation_residual": float(np.max(trace.residuals)) if ticks else 0.0,
            "max_abs_alpha": float(np.max(np.abs(trace.alpha))) if ticks else 0.0,
        },
        "synthesis": trace.synthesis,
        "failure": trace.failure,
    }
    return summary


def run_multi_agent(scenario: Scenario) -> SimTrace:
    """Two-agent entry point (stacked allocation per tick)."""
    if len(scenario.agents) != 2:
        raise ValueError("run_multi_agent requires exactly 2 agents")
    return run_scenario(scenario)


# ---------------------------------------------------------------------------
# Scenario parsing
# ---------------------------------------------------------------------------


def _parse_controller(data: dict, sample_time: float) -> ControllerConfig:
    allowed = {
        "q_diag", "r_weight", "k_i", "integral_enabled", "integral_warm_start",
        "anti_windup_limit", "velocity_filter_cutoff",
    }
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown controller keys: {sorted(unknown)}")
    kwargs = dict(data)
    if "q_diag" in kwargs:
        kwargs["q_diag"] = tuple(float(v) for v in kwargs["q_diag"])
    return ControllerConfig(sample_time=sample_time, **kwargs)


def _parse_setpoint(data: dict) -> SetpointSpec:
    allowed = {"type", "alpha", "beta", "radius", "frequency", "phase"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown setpoint keys: {sorted(unknown)}")
    kind = data.get("type", "constant")
    kwargs = {k: float(v) for k, v in data.items() if k != "type"}
    return SetpointSpec(kind=kind, **kwargs)


def _parse_agent(data: dict, emns: EmnsConfig) -> AgentSetup:
    allowed = {
        "position", "initial", "polarity", "pendulum_attached", "release_time",
        "setpoint", "controller", "controller_beta", "integral_windows",
        "integral_windows_beta",
    }
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown agent keys: {sorted(unknown)}")
    h = 1.0 / emns.control_rate
    initial = data.get("initial", {})
    if isinstance(initial, dict):
        bad = set(initial) - {
            "alpha", "beta", "phi", "theta",
            "alpha_dot", "beta_dot", "phi_dot", "theta_dot",
        }
        if bad:
            raise ValueError(f"unknown initial-state keys: {sorted(bad)}")
        initial_tuple = tuple(
            float(initial.get(name, 0.0))
            for name in (
                "alpha", "beta", "phi", "theta",
                "alpha_dot", "beta_dot", "phi_dot", "theta_dot",
            )
        )
    else:
        initial_tuple = tuple(float(v) for v in initial)
    windows_a = tuple(
        (float(a), float(b)) for a, b in data.get("integral_windows", [])
    )
    windows_b = tuple(
        (float(a), float(b))
        for a, b in data.get("integral_windows_beta", data.get("integral_windows", []))
    )
    return AgentSetup(
        position=tuple(float(v) for v in data.get("position", (0.0, 0.0, 0.0))),
        initial=initial_tuple,
        polarity=int(data.get("polarity", 1)),
        pendulum_attached=bool(data.get("pendulum_attached", True)),
        release_time=float(data.get("release_time", 0.0)),
        setpoint=_parse_setpoint(data.get("setpoint", {})),
        controller_alpha=(
            _parse_controller(data["controller"], h) if "controller" in data else None
        ),
        controller_beta=(
            _parse_controller(data["controller_beta"], h)
            if "controller_beta" in data
            else None
        ),
        integral_windows_alpha=windows_a,
        integral_windows_beta=windows_b,
    )


def _parse_emns(data) -> EmnsConfig:
    if isinstance(data, str):
        if data not in EMNS_PRESETS:
            raise ValueError(
                f"unknown interface preset '{data}'; expected one of "
                f"{sorted(EMNS_PRESETS)}"
            )
        return EMNS_PRESETS[data]
    allowed = {"control_rate", "current_limit", "current_bandwidth", "loop_latency"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown interface keys: {sorted(unknown)}")
    return EmnsConfig(**{k: float(v) for k, v in data.items()})


def _parse_disturbance(data: dict) -> DisturbanceEvent:
    allowed = {"type", "time", "magnitude", "agent", "channel", "duration"}
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown disturbance keys: {sorted(unknown)}")
    return DisturbanceEvent(
        kind=data["type"],
        time=float(data["time"]),
        magnitude=float(data["magnitude"]),
        agent=int(data.get("agent", 0)),
        channel=data.get("channel", "alpha"),
        duration=float(data["duration"]) if data.get("duration") is not None else None,
    )


def scenario_from_dict(data: dict) -> Scenario:
    """Build and validate a Scenario from a plain (JSON-loaded) dict."""
    allowed = {
        "name", "model", "paradigm", "strategy", "emns", "duration", "seed",
        "agents", "plant", "disturbances", "field_magnitude", "include_force",
        "measurement_noise_std", "kind",
    }
    unknown = set(data) - allowed
    if unknown:
        raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
    for required in ("model", "paradigm", "strategy", "duration", "agents"):
        if required not in data:
            raise ValueError(f"scenario is missing required key '{required}'")
    model = data["model"]
    if isinstance(model, str):
        try:
            model = get_model(model)
        except KeyError as exc:
            raise ValueError(str(exc)) from exc
    else:
        model = ActuationModel.from_dict(model)
    emns = _parse_emns(data.get("emns", "octomag"))
    plant_kwargs = data.get("plant", {})
    try:
        plant = PendulumParams(**{k: float(v) for k, v in plant_kwargs.items()})
    except TypeError as exc:
        raise ValueError(f"invalid plant parameters: {exc}") from exc
    agents = tuple(_parse_agent(a, emns) for a in data["agents"])
    disturbances = tuple(_parse_disturbance(d) for d in data.get("disturbances", []))
    return Scenario(
        name=str(data.get("name", "scenario")),
        model=model,
        paradigm=data["paradigm"],
        strategy=data["strategy"],
        emns=emns,
        duration=float(data["duration"]),
        agents=agents,
        plant=plant,
        disturbances=disturbances,
        field_magnitude=float(data.get("field_magnitude", 0.0)),
        include_force=bool(data.get("include_force", True)),
        measurement_noise_std=float(data.get("measurement_noise_std", 0.0)),
        seed=int(data.get("seed", 0)),
    )
